"""Independent brute-force reference implementations used as test oracles.

Everything here is written straight from the contracts with plain loops,
deliberately sharing no code with the package.  Reductions use the same
numpy primitives (pairwise sums over contiguous buffers) so agreement
can be asserted exactly, not within a tolerance.
"""

import numpy as np

from flowstate.features import FeatureKind
from flowstate.records import Dataset, TrafficState


def oracle_stat(kind: FeatureKind, window) -> float:
    w = np.array(window, dtype=np.float64)  # fresh contiguous copy
    n = w.size
    if kind is FeatureKind.RANGE:
        return float(np.max(w) - np.min(w))
    mean = float(np.add.reduce(w) / n)
    if kind is FeatureKind.MEAN:
        return mean
    if kind is FeatureKind.QUARTILE:
        s = np.sort(w)

        def q(p):
            h = p * (n - 1)
            lo = int(np.floor(h))
            if lo + 1 >= n:
                return s[lo]
            return s[lo] + (h - lo) * (s[lo + 1] - s[lo])

        return float(q(0.75) - q(0.25))
    # central moments about the mean of the first-sample-shifted window,
    # matching the contract that constant data is exactly degenerate
    shifted = w - w[0]
    dev = shifted - np.add.reduce(shifted) / n
    if kind is FeatureKind.MEAN_ABS_DEV:
        return float(np.add.reduce(np.abs(dev)) / n)
    m2 = np.add.reduce(dev * dev) / n
    if kind is FeatureKind.VARIANCE:
        return float(m2)
    if kind is FeatureKind.STD_DEV:
        return float(np.sqrt(m2))
    if kind is FeatureKind.COEFF_VAR:
        return float(np.sqrt(m2) / abs(mean))
    if kind is FeatureKind.SKEWNESS:
        m3 = np.add.reduce(dev * dev * dev) / n
        return float(m3 / (m2 * np.sqrt(m2)))
    if kind is FeatureKind.KURTOSIS:
        m4 = np.add.reduce(dev * dev * dev * dev) / n
        return float(m4 / (m2 * m2))
    raise AssertionError(kind)


def oracle_featurize(ds: Dataset, n1, m1, n2, m2, table):
    """Single-pass naive recomputation of the whole feature pipeline.

    Returns a list of (values array, label, span) tuples.
    """
    n = len(ds)
    starts = list(range(0, n - n1 + 1, m1))
    stage1 = []
    for s in starts:
        row = {}
        for trow in table.rows:
            key = (trow.kind, trow.channel)
            if key not in row:
                row[key] = oracle_stat(trow.kind, ds.channel(trow.channel.value)[s : s + n1])
        stage1.append(row)
    out = []
    for k in range(0, len(stage1) - n2 + 1, m2):
        values = []
        for trow in table.rows:
            count = 0
            for r in range(k, k + n2):
                if stage1[r][(trow.kind, trow.channel)] > trow.threshold:
                    count += 1
            values.append(count / n2)
        lo = starts[k]
        hi = starts[k + n2 - 1] + n1
        tally = [0, 0, 0]
        for i in range(lo, hi):
            tally[int(ds.state[i])] += 1
        best = max(tally)
        label = TrafficState(max(s for s in range(3) if tally[s] == best))
        out.append((np.array(values), label, (lo, hi)))
    return out


def random_dataset(rng: np.random.Generator, n: int, segment_s: float = 2.0) -> Dataset:
    """Labeled random stream with piecewise-constant states and held speed."""
    t = np.arange(n) * 0.02
    sec = np.floor(t / segment_s).astype(int)
    n_seg = sec[-1] + 1
    seg_states = rng.integers(0, 3, n_seg)
    seg_speed = rng.uniform(0, 25, n_seg)
    scale = rng.uniform(0.02, 0.8)
    chans = [scale * rng.standard_normal(n) for _ in range(6)]
    chans[2] = chans[2] - 1.0
    return Dataset.from_arrays(
        t, chans[0], chans[1], chans[2], chans[3], chans[4], chans[5],
        seg_speed[sec], seg_states[sec],
    )
