"""Traffic flow state classification from phone motion and speed logs."""

__version__ = "0.1.0"

from .records import (  # noqa: F401
    AlignedRecord,
    Dataset,
    DatasetMeta,
    LabelSample,
    SensorSample,
    SpeedSample,
    TrafficState,
    align_streams,
    class_distribution,
    parse_aligned_csv,
    parse_label_csv,
    parse_motion_csv,
    parse_speed_csv,
    write_aligned_csv,
)
from .features import (  # noqa: F401
    DEFAULT_TABLE,
    Channel,
    FeatureKind,
    FeatureVector,
    Stage1Config,
    Stage2Config,
    ThresholdRow,
    ThresholdTable,
    featurize,
    speed_only_projection,
    stat_feature,
)
from .synth import GenConfig, StateRegime, default_presets, generate  # noqa: F401
from .dbn import Dbn, DbnConfig, Rbm, fine_tune, forward, predict, pretrain  # noqa: F401
from .baselines import GnbModel, LdaModel, gnb_predict, gnb_train, lda_predict, lda_train  # noqa: F401
from .evaluation import EvalReport, SplitPlan, error_curve, evaluate, sensitivity_sweep, split  # noqa: F401
from .modelio import load_model, save_model  # noqa: F401
from .reports import write_report  # noqa: F401
