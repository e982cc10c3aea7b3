"""Command-line front end.

Subcommands: generate, featurize, train, evaluate, sweep.  Settings come
from flags, an optional JSON config file, and built-in defaults, in that
precedence order; the merged settings land in a manifest next to every
output so runs are reproducible from their artifacts alone.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dbn import DbnConfig
from .errors import ArityMismatch, FlowstateError, InvalidConfig
from .evaluation import SplitPlan, error_curve, evaluate, sensitivity_sweep
from .features import (
    DEFAULT_TABLE,
    Stage1Config,
    Stage2Config,
    ThresholdTable,
    featurize,
    parse_features_csv,
    speed_only_projection,
    as_xy,
    write_features_csv,
)
from .modelio import save_model
from .records import class_distribution, parse_aligned_csv, write_aligned_csv
from .reports import write_manifest, write_report
from .synth import config_as_dict, default_presets, generate, preset


class UsageError(Exception):
    """Bad flags or config file; maps to exit code 2."""


_CONFIG_SECTIONS = {
    "generate": {"preset", "seed", "duration", "sample_rate"},
    "features": {"n1", "m1", "n2", "m2"},
    "dbn": {"layer_sizes", "unsup_epochs", "unsup_lr", "sup_iters", "sup_lr",
            "batch_size", "finetune_batch_size", "seed", "n_classes"},
    "split": {"seed", "n_repeats", "train_fraction"},
}
_CONFIG_KEYS = set(_CONFIG_SECTIONS) | {"thresholds", "output_dir"}


def load_run_config(path: str | None) -> dict:
    """Load and strictly validate a JSON run config."""
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must contain a JSON object")
    for key in cfg:
        if key not in _CONFIG_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        if key in _CONFIG_SECTIONS:
            if not isinstance(cfg[key], dict):
                raise UsageError(f"config section {key!r} must be an object")
            for sub in cfg[key]:
                if sub not in _CONFIG_SECTIONS[key]:
                    raise UsageError(f"unknown config key {key}.{sub}")
    thresholds = cfg.get("thresholds")
    if thresholds is not None and not Path(thresholds).exists():
        raise UsageError(f"thresholds file not found: {thresholds}")
    return cfg


def _setting(flag_value, cfg: dict, section: str, key: str, default):
    if flag_value is not None:
        return flag_value
    return cfg.get(section, {}).get(key, default)


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out_dir(args, cfg) -> Path:
    out = Path(args.out if args.out is not None else cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_input(path_str: str) -> Path:
    p = Path(path_str)
    if not p.exists():
        raise UsageError(f"input file not found: {path_str}")
    return p


def _load_table(args, cfg) -> ThresholdTable:
    path = args.thresholds if getattr(args, "thresholds", None) is not None else cfg.get("thresholds")
    if path is None:
        return DEFAULT_TABLE
    return ThresholdTable.from_json(_require_input(path).read_text())


def _manifest(out: Path, command: str, settings: dict, inputs: dict[str, Path],
              outputs: list[Path], name: str = "manifest.json") -> Path:
    payload = {
        "tool": "flowstate",
        "version": __version__,
        "command": command,
        "settings": settings,
        "inputs": {str(p): _file_hash(p) for p in inputs.values()},
        "outputs": [p.name for p in outputs],
    }
    return write_manifest(out / name, payload)


def _dbn_config(args, cfg) -> tuple[DbnConfig, bool]:
    """Merged model config plus whether layer sizes were given explicitly."""
    layers = _setting(getattr(args, "layers", None), cfg, "dbn", "layer_sizes", None)
    explicit = layers is not None
    if layers is None:
        layers = [23, 300, 300, 300]
    if isinstance(layers, str):
        layers = [int(tok) for tok in layers.split(",")]
    return DbnConfig(
        layer_sizes=tuple(layers),
        unsup_epochs=_setting(getattr(args, "unsup_epochs", None), cfg, "dbn", "unsup_epochs", 30),
        unsup_lr=_setting(getattr(args, "unsup_lr", None), cfg, "dbn", "unsup_lr", 2.0),
        sup_iters=_setting(getattr(args, "sup_iters", None), cfg, "dbn", "sup_iters", 200),
        sup_lr=_setting(getattr(args, "sup_lr", None), cfg, "dbn", "sup_lr", 0.1),
        batch_size=_setting(getattr(args, "batch_size", None), cfg, "dbn", "batch_size", 100),
        finetune_batch_size=_setting(getattr(args, "finetune_batch_size", None), cfg, "dbn",
                                     "finetune_batch_size", None),
        seed=_setting(getattr(args, "seed", None), cfg, "dbn", "seed", 0),
    ), explicit


def _split_plan(args, cfg) -> SplitPlan:
    return SplitPlan(
        seed=_setting(getattr(args, "seed", None), cfg, "split", "seed", 0),
        n_repeats=_setting(getattr(args, "repeats", None), cfg, "split", "n_repeats", 10),
        train_fraction=_setting(getattr(args, "train_fraction", None), cfg, "split", "train_fraction", 0.7),
    )


def cmd_generate(args) -> int:
    cfg = load_run_config(args.config)
    name = _setting(args.preset, cfg, "generate", "preset", "paperlike")
    presets = default_presets()
    if name not in presets:
        raise UsageError(f"unknown preset {name!r}; available: {', '.join(sorted(presets))}")
    gen_cfg = preset(
        name,
        seed=_setting(args.seed, cfg, "generate", "seed", None),
        duration=_setting(args.duration, cfg, "generate", "duration", None),
    )
    sample_rate = _setting(args.sample_rate, cfg, "generate", "sample_rate", None)
    if sample_rate is not None:
        gen_cfg = replace(gen_cfg, sample_rate=sample_rate)
    gen_cfg.validate()
    out = _out_dir(args, cfg)
    ds = generate(gen_cfg)
    aligned = out / "aligned.csv"
    aligned.write_text(write_aligned_csv(ds))
    mix = {s.token: frac for s, frac in class_distribution(ds).items()}
    manifest = write_manifest(out / "gen_manifest.json", {
        "tool": "flowstate",
        "version": __version__,
        "command": "generate",
        "preset": name,
        "config": config_as_dict(gen_cfg),
        "samples": len(ds),
        "class_mix": mix,
        "outputs": [aligned.name],
    })
    print(f"wrote {aligned} ({len(ds)} samples)")
    print("class mix: " + ", ".join(f"{k}={v:.4f}" for k, v in mix.items()))
    return 0


def cmd_featurize(args) -> int:
    cfg = load_run_config(args.config)
    src = _require_input(args.aligned)
    table = _load_table(args, cfg)
    s1 = Stage1Config(
        n1=_setting(args.n1, cfg, "features", "n1", 200),
        m1=_setting(args.m1, cfg, "features", "m1", 50),
    )
    s2 = Stage2Config(
        n2=_setting(args.n2, cfg, "features", "n2", 20),
        m2=_setting(args.m2, cfg, "features", "m2", 5),
        table=table,
    )
    ds = parse_aligned_csv(src.read_text())
    vectors = featurize(ds, s1, s2)
    if args.speed_only:
        vectors = [speed_only_projection(v, table) for v in vectors]
    out = _out_dir(args, cfg)
    features_path = out / "features.csv"
    features_path.write_text(write_features_csv(vectors))
    thresholds_path = out / "thresholds.json"
    thresholds_path.write_text(table.to_json())
    settings = {"n1": s1.n1, "m1": s1.m1, "n2": s2.n2, "m2": s2.m2,
                "speed_only": bool(args.speed_only)}
    outputs = [features_path, thresholds_path]
    outputs.append(_manifest(out, "featurize", settings, {"aligned": src}, outputs))
    print(f"wrote {features_path} ({len(vectors)} vectors, {len(vectors[0].values)} features)")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    src = _require_input(args.features)
    vectors = parse_features_csv(src.read_text())
    x, y = as_xy(vectors)
    kind = args.model
    if kind == "dbn":
        from . import dbn as dbn_mod

        dcfg, layers_explicit = _dbn_config(args, cfg)
        if dcfg.layer_sizes[0] != x.shape[1]:
            if layers_explicit:
                raise ArityMismatch(
                    f"features have arity {x.shape[1]} but the input layer is {dcfg.layer_sizes[0]}"
                )
            dcfg = replace(dcfg, layer_sizes=(x.shape[1],) + dcfg.layer_sizes[1:])
        model = dbn_mod.train(dcfg, x, y)
        y_hat = dbn_mod.predict_batch(model, x)
        metrics = {
            "train_accuracy": float(np.mean(y_hat == y)),
            "train_cross_entropy": dbn_mod.mean_cross_entropy(model, x, y),
        }
        settings = {"model": kind, "dbn": {k: (list(v) if isinstance(v, tuple) else v)
                                           for k, v in vars(dcfg).items()}}
    elif kind in ("gnb", "lda"):
        from . import baselines

        if kind == "gnb":
            model = baselines.gnb_train(x, y)
            y_hat = baselines.gnb_predict_batch(model, x)
        else:
            model = baselines.lda_train(x, y)
            y_hat = baselines.lda_predict_batch(model, x)
        metrics = {"train_accuracy": float(np.mean(y_hat == y))}
        settings = {"model": kind}
    else:
        raise UsageError(f"unknown model {kind!r}; expected dbn, gnb, or lda")
    out = _out_dir(args, cfg)
    model_path = save_model(model, out / "model.json", extra=settings)
    settings["metrics"] = metrics
    outputs = [model_path]
    outputs.append(_manifest(out, "train", settings, {"features": src}, outputs))
    print(f"wrote {model_path} (train accuracy {metrics['train_accuracy']:.4f})")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config)
    src = _require_input(args.features)
    vectors = parse_features_csv(src.read_text())
    table = _load_table(args, cfg)
    plan = _split_plan(args, cfg)
    dcfg, _ = _dbn_config(args, cfg)
    report = evaluate(args.model, vectors, plan, dcfg, table)
    out = _out_dir(args, cfg)
    outputs = write_report(report, out / "report.csv", fmt=args.format)
    if args.iter_curve:
        iters = [int(tok) for tok in args.iter_curve.split(",")]
        curve = error_curve(vectors, plan, iters, dcfg)
        outputs += write_report(curve, out / "curve.csv", fmt=args.format)
    settings = {"model": args.model, "plan": report.config["plan"], "dbn": report.config["dbn"],
                "iter_curve": args.iter_curve}
    outputs.append(_manifest(out, "evaluate", settings, {"features": src}, outputs))
    print(f"{args.model}: mean accuracy {report.mean_accuracy:.4f} over {plan.n_repeats} repeats")
    return 0


def _grid(arg: str | None, default: list[int]) -> list[int]:
    if arg is None:
        return default
    try:
        return [int(tok) for tok in arg.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"grid must be comma-separated integers, got {arg!r}") from None


def cmd_sweep(args) -> int:
    cfg = load_run_config(args.config)
    src = _require_input(args.aligned)
    ds = parse_aligned_csv(src.read_text())
    table = _load_table(args, cfg)
    plan = _split_plan(args, cfg)
    dcfg, _ = _dbn_config(args, cfg)
    grid = sensitivity_sweep(
        ds,
        _grid(args.n1_grid, [50, 100, 200, 400]),
        _grid(args.m1_grid, [10, 25, 50, 100]),
        _grid(args.n2_grid, [20]),
        _grid(args.m2_grid, [5]),
        plan,
        dcfg,
        table,
    )
    out = _out_dir(args, cfg)
    outputs = write_report(grid, out / "sweep.csv", fmt=args.format)
    settings = {"axes": grid.config["axes"], "plan": grid.config["plan"], "dbn": grid.config["dbn"]}
    outputs.append(_manifest(out, "sweep", settings, {"aligned": src}, outputs))
    n_failed = sum(1 for c in grid.cells if c.failed)
    print(f"sweep: {len(grid.cells)} cells, {n_failed} failed, "
          f"accuracy spread {grid.accuracy_spread():.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowstate",
        description="Traffic flow state classification pipeline",
    )
    parser.add_argument("--version", action="version", version=f"flowstate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config; flags override its values")
        p.add_argument("-o", "--out", help="output directory (default: out)")

    p = sub.add_parser("generate", help="generate a synthetic aligned dataset")
    common(p)
    p.add_argument("--preset", help="generator preset name (paperlike, nonlinear)")
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--sample-rate", type=float, dest="sample_rate", help="motion samples per second")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("featurize", help="compute threshold-count features from aligned.csv")
    common(p)
    p.add_argument("aligned", help="aligned.csv input")
    p.add_argument("--n1", type=int, help="stage-1 window length in samples")
    p.add_argument("--m1", type=int, help="stage-1 step in samples")
    p.add_argument("--n2", type=int, help="stage-2 window length in stage-1 rows")
    p.add_argument("--m2", type=int, help="stage-2 step in stage-1 rows")
    p.add_argument("--thresholds", help="threshold table JSON (default: shipped table)")
    p.add_argument("--speed-only", action="store_true", help="keep only speed-channel features")
    p.set_defaults(func=cmd_featurize)

    def dbn_flags(p):
        p.add_argument("--layers", help="comma-separated layer sizes, input first")
        p.add_argument("--unsup-epochs", type=int, dest="unsup_epochs")
        p.add_argument("--unsup-lr", type=float, dest="unsup_lr")
        p.add_argument("--sup-iters", type=int, dest="sup_iters")
        p.add_argument("--sup-lr", type=float, dest="sup_lr")
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--finetune-batch-size", type=int, dest="finetune_batch_size",
                       help="fine-tuning batch override (larger than the training set = full batch)")
        p.add_argument("--seed", type=int, help="training and split seed")

    p = sub.add_parser("train", help="train one model on a features file")
    common(p)
    p.add_argument("features", help="features.csv input")
    p.add_argument("--model", default="dbn", choices=["dbn", "gnb", "lda"])
    dbn_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="repeated-split evaluation of one model")
    common(p)
    p.add_argument("features", help="features.csv input")
    p.add_argument("--model", default="dbn",
                   choices=["dbn", "gnb", "lda", "dbn_speed_only"])
    p.add_argument("--repeats", type=int, help="number of random splits")
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--thresholds", help="threshold table JSON (for speed-only projection)")
    p.add_argument("--iter-curve", dest="iter_curve",
                   help="comma-separated iteration counts; also emit curve.csv")
    p.add_argument("--format", default="csv", choices=["csv", "txt"])
    dbn_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="windowing-parameter sensitivity sweep")
    common(p)
    p.add_argument("aligned", help="aligned.csv input")
    p.add_argument("--n1-grid", dest="n1_grid", help="comma-separated n1 values")
    p.add_argument("--m1-grid", dest="m1_grid", help="comma-separated m1 values")
    p.add_argument("--n2-grid", dest="n2_grid", help="comma-separated n2 values")
    p.add_argument("--m2-grid", dest="m2_grid", help="comma-separated m2 values")
    p.add_argument("--repeats", type=int, help="number of random splits")
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--thresholds", help="threshold table JSON")
    p.add_argument("--format", default="csv", choices=["csv", "txt"])
    dbn_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FlowstateError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
