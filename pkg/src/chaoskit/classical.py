"""Classical chaos estimators working purely from an observed time series.

* ``rosenstein`` -- nearest-neighbor divergence-rate slope after time-delay
  embedding, in nats per iteration.
* ``zero_one`` -- the correlation form of the 0-1 test with the oscillatory
  correction term; outputs K in [-1, 1] and a chaotic/stable label.

Both are deterministic given (series, params, seed) and serve as baselines
against the trained regressors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import DegenerateSeries, InsufficientLength, InvalidInput
from .lyapunov import LLEResult


@dataclass(frozen=True)
class EmbeddingParams:
    m: int = 3
    lag: int = 1

    def __post_init__(self):
        if self.m < 1 or self.lag < 1:
            raise ValueError("embedding needs m >= 1 and lag >= 1")


@dataclass(frozen=True)
class RosensteinParams:
    embedding: EmbeddingParams = field(default_factory=EmbeddingParams)
    mean_period: Optional[int] = None  # None: estimate from mean crossings
    fit_range: Optional[Tuple[int, int]] = None  # None: detect linear region
    max_follow: int = 20

    def __post_init__(self):
        if self.fit_range is not None:
            k_min, k_max = self.fit_range
            if not (0 < k_min < k_max <= self.max_follow):
                raise ValueError("need 0 < k_min < k_max <= max_follow")


@dataclass(frozen=True)
class ZeroOneParams:
    n_c: int = 100
    c_range: Tuple[float, float] = (math.pi / 5, 4 * math.pi / 5)
    subsample_stride: Optional[int] = None

    def __post_init__(self):
        lo, hi = self.c_range
        if self.n_c < 1:
            raise ValueError("n_c must be >= 1")
        if not (0.0 < lo < hi < math.pi):
            raise ValueError("c_range must lie inside (0, pi)")


@dataclass
class ZeroOneResult:
    K: float
    chaotic: bool
    k_values: np.ndarray  # per-frequency correlations


def _series_values(series) -> np.ndarray:
    values = getattr(series, "values", series)
    return np.asarray(values, dtype=np.float64)


def delay_embed(series, p: EmbeddingParams) -> np.ndarray:
    """Embed a scalar series: point i = (x_i, x_{i+lag}, ..., x_{i+(m-1)lag}).

    Returns an (n - (m-1)*lag, m) array.
    """
    x = _series_values(series)
    n = x.size
    span = (p.m - 1) * p.lag
    if n < span + 1:
        raise InsufficientLength(
            f"need at least {span + 1} samples for m={p.m}, lag={p.lag}, got {n}")
    count = n - span
    idx = np.arange(count)[:, None] + np.arange(p.m)[None, :] * p.lag
    return x[idx]


def estimate_mean_period(x: np.ndarray) -> int:
    """Series length over half the mean-crossing count, floored at 10."""
    signs = np.sign(x - x.mean())
    signs = signs[signs != 0]
    crossings = int(np.sum(signs[1:] != signs[:-1])) if signs.size > 1 else 0
    crossings = max(crossings, 1)
    return max(10, int(round(2.0 * x.size / crossings)))


def _nearest_excluded(points: np.ndarray, exclusion: int, block: int = 256) -> np.ndarray:
    """Index of each point's nearest neighbor at temporal distance > exclusion."""
    n = points.shape[0]
    nearest = np.full(n, -1, dtype=np.int64)
    sq = np.sum(points ** 2, axis=1)
    for start in range(0, n, block):
        stop = min(start + block, n)
        # squared Euclidean distances of the block rows against all points
        d2 = sq[start:stop, None] + sq[None, :] \
            - 2.0 * points[start:stop] @ points.T
        rows = np.arange(start, stop)
        for i, row in enumerate(rows):
            lo = max(0, row - exclusion)
            hi = min(n, row + exclusion + 1)
            d2[i, lo:hi] = np.inf
        nearest[start:stop] = np.argmin(d2, axis=1)
    return nearest


def _linear_region_end(ks: np.ndarray, y: np.ndarray, good: np.ndarray) -> int:
    """Last step before the divergence curve saturates.

    Separations stop growing once they reach attractor size; fitting past
    that knee flattens the slope, so the default cuts the fit where the
    curve comes within 5% of its final span.
    """
    yg = y[good]
    kg = ks[good]
    y0, y_end = yg[0], yg[-1]
    span = y_end - y0
    if span > 0:
        target = y_end - 0.05 * span
        knee = kg[np.argmax(yg >= target)]
    else:
        target = y_end - 0.05 * span  # decreasing curve: same 5% rule
        knee = kg[np.argmax(yg <= target)]
    return int(max(knee, kg[0] + 3))


def rosenstein(series, p: Optional[RosensteinParams] = None) -> LLEResult:
    """Largest-exponent estimate from mean log divergence of nearest neighbors.

    For each embedded point the nearest neighbor outside a temporal
    exclusion window is tracked for ``max_follow`` steps; the exponent is
    the slope of the mean log separation over ``fit_range``, or over an
    automatically detected pre-saturation region when ``fit_range`` is
    None (the default).
    """
    p = p or RosensteinParams()
    x = _series_values(series)
    if x.std() == 0.0:
        raise DegenerateSeries("constant series has no neighbor geometry")
    mean_period = p.mean_period if p.mean_period is not None else estimate_mean_period(x)
    points = delay_embed(x, p.embedding)
    n_pts = points.shape[0]
    n_ref = n_pts - p.max_follow
    if n_ref < 2 * mean_period + 2 or x.size < 2 * mean_period + p.max_follow:
        raise InsufficientLength(
            f"series of {x.size} too short for mean_period={mean_period}, "
            f"max_follow={p.max_follow}")

    refs = points[:n_ref]
    nearest = _nearest_excluded(refs, mean_period)
    # a usable pair must be genuinely close (a neighbor at attractor scale
    # carries no divergence information) yet above the float-noise floor
    # (sub-precision separations on an exactly periodic orbit are not
    # geometry, only rounding wobble)
    scale = float(x.std())
    floor = 1e-10 * scale
    d0 = np.linalg.norm(refs - refs[nearest], axis=1)
    usable = (d0 > floor) & (d0 <= 0.25 * scale)
    if not usable.any():
        raise DegenerateSeries("no close neighbor pairs above the precision floor")
    i_idx = np.flatnonzero(usable)
    j_idx = nearest[usable]

    ks = np.arange(1, p.max_follow + 1)
    y = np.full(ks.size, np.nan)
    for pos, k in enumerate(ks):
        d = np.linalg.norm(points[i_idx + k] - points[j_idx + k], axis=1)
        d = d[d > floor]
        if d.size:
            y[pos] = np.mean(np.log(d))
    good = np.isfinite(y)
    if good.sum() < 2:
        raise DegenerateSeries("all tracked separations collapsed to zero")

    if p.fit_range is not None:
        k_min, k_max = p.fit_range
        sel = good & (ks >= k_min) & (ks <= k_max)
    else:
        sel = good & (ks <= _linear_region_end(ks, y, good))
    if sel.sum() < 2:
        raise DegenerateSeries("fewer than two usable divergence samples in fit range")
    slope = np.polyfit(ks[sel], y[sel], 1)[0]
    return LLEResult(lam=float(slope), method="rosenstein", n_iter=int(x.size),
                     converged=bool(good.all()))


def zero_one(series, p: Optional[ZeroOneParams] = None, seed: int = 0) -> ZeroOneResult:
    """Gottwald-Melbourne 0-1 test, correlation variant.

    Translation variables p_n, q_n are accumulated for ``n_c`` random
    frequencies; K is the median correlation between n and the corrected
    mean-square displacement D(n).  K near 1 flags chaos (label threshold
    0.5), K near 0 regular dynamics.
    """
    p = p or ZeroOneParams()
    x = _series_values(series)
    if p.subsample_stride:
        x = x[::p.subsample_stride]
    n = x.size
    if n < 100:
        raise InsufficientLength(f"zero-one test needs >= 100 samples, got {n}")
    ncut = n // 10
    rng = np.random.default_rng(seed)
    cs = rng.uniform(p.c_range[0], p.c_range[1], size=p.n_c)
    j = np.arange(n)
    xbar_sq = x.mean() ** 2
    nn = np.arange(1, ncut + 1)
    k_values = np.empty(p.n_c)
    for ci, c in enumerate(cs):
        pc = np.cumsum(x * np.cos(j * c))
        qc = np.cumsum(x * np.sin(j * c))
        M = np.empty(ncut)
        for pos, d in enumerate(nn):
            M[pos] = np.mean((pc[d:] - pc[:-d]) ** 2 + (qc[d:] - qc[:-d]) ** 2)
        D = M - xbar_sq * (1.0 - np.cos(nn * c)) / (1.0 - np.cos(c))
        sd = D.std()
        if sd == 0.0 or not np.isfinite(sd):
            k_values[ci] = 0.0
        else:
            k_values[ci] = np.corrcoef(nn, D)[0, 1]
    k_values = np.nan_to_num(k_values, nan=0.0)
    K = float(np.median(k_values))
    return ZeroOneResult(K=K, chaotic=K > 0.5, k_values=k_values)
