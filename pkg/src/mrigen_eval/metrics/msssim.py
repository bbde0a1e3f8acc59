"""Multi-scale structural similarity for 3D volumes.

Local statistics use a separable Gaussian window evaluated only where the
window fits entirely inside the volume ("valid" positions). Scales are
built by 2x2x2 mean pooling; a trailing odd slice is dropped before
pooling. On coarse scales where an axis is shorter than the window, the
window along that axis shrinks to the largest odd length that fits.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.ndimage import correlate1d

from ..exceptions import InputError, NumericalError

STANDARD_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MIN_AXIS = 3


@dataclass(frozen=True)
class MsSsimSpec:
    scales: int = 5
    weights: tuple = field(default=None)
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 2.0

    def __post_init__(self):
        if self.scales < 1:
            raise InputError(f"scales must be >= 1, got {self.scales}")
        weights = self.weights
        if weights is None:
            base = np.array(STANDARD_WEIGHTS[: self.scales]) if self.scales <= 5 else np.ones(self.scales)
            weights = tuple(float(w) for w in base / base.sum()) if self.scales != 5 else STANDARD_WEIGHTS
        weights = tuple(float(w) for w in weights)
        if len(weights) != self.scales:
            raise InputError(f"{len(weights)} weights given for {self.scales} scales")
        # the published 5-scale weights sum to 1.0001
        if any(w <= 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-3:
            raise InputError(f"weights must be positive and sum to 1, got {weights}")
        if self.window < 1 or self.window % 2 == 0:
            raise InputError(f"window must be a positive odd integer, got {self.window}")
        for name in ("sigma", "k1", "k2", "dynamic_range"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        object.__setattr__(self, "weights", weights)

    @property
    def c1(self):
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self):
        return (self.k2 * self.dynamic_range) ** 2


def gaussian_window(size, sigma):
    r = (size - 1) / 2.0
    x = np.arange(size) - r
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def effective_window(axis_len, window):
    return window if axis_len >= window else (axis_len if axis_len % 2 else axis_len - 1)


def pyramid_shapes(shape, scales):
    shapes = [tuple(shape)]
    for _ in range(scales - 1):
        shapes.append(tuple(s // 2 for s in shapes[-1]))
    return shapes


def check_pyramid(shape, spec):
    coarsest = pyramid_shapes(shape, spec.scales)[-1]
    if min(coarsest) < MIN_AXIS:
        raise InputError(
            f"volume {tuple(shape)} is too small for {spec.scales} scales "
            f"(coarsest level {coarsest}, need every axis >= {MIN_AXIS})"
        )


def gaussian_filter_valid(data, windows):
    """Separable correlation with per-axis 1D windows, cropped to valid positions."""
    out = data
    for axis, w in enumerate(windows):
        out = correlate1d(out, w, axis=axis, mode="constant")
    crop = tuple(slice((w.size - 1) // 2, n - (w.size - 1) // 2) for n, w in zip(out.shape, windows))
    return out[crop]


def _scale_terms(a, b, spec, with_luminance):
    windows = [gaussian_window(effective_window(n, spec.window), spec.sigma) for n in a.shape]
    mu_a = gaussian_filter_valid(a, windows)
    mu_b = gaussian_filter_valid(b, windows)
    var_a = gaussian_filter_valid(a * a, windows) - mu_a * mu_a
    var_b = gaussian_filter_valid(b * b, windows) - mu_b * mu_b
    cov = gaussian_filter_valid(a * b, windows) - mu_a * mu_b
    cs = (2.0 * cov + spec.c2) / (var_a + var_b + spec.c2)
    if not with_luminance:
        return cs
    lum = (2.0 * mu_a * mu_b + spec.c1) / (mu_a * mu_a + mu_b * mu_b + spec.c1)
    return lum * cs


def _downsample(x):
    nx, ny, nz = (s // 2 for s in x.shape)
    x = x[: 2 * nx, : 2 * ny, : 2 * nz]
    return x.reshape(nx, 2, ny, 2, nz, 2).mean(axis=(1, 3, 5))


def ssim_map(a, b, spec=MsSsimSpec(scales=1)):
    """Single-scale SSIM map over valid window positions."""
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    return _scale_terms(a, b, spec, with_luminance=True)


def ms_ssim(a, b, spec=MsSsimSpec()):
    """MS-SSIM between two volumes of identical shape.

    Contrast-structure means enter at every scale; the luminance term only
    at the coarsest. Terms are combined as a weight-powered product.

    Raises:
        InputError: shape mismatch or a volume too small for the pyramid.
        NumericalError: a per-scale term is negative.
    """
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 3:
        raise InputError(f"expected 3D volumes, got {a.ndim}D")
    check_pyramid(a.shape, spec)
    result = 1.0
    for level, weight in enumerate(spec.weights):
        last = level == spec.scales - 1
        term = float(_scale_terms(a, b, spec, with_luminance=last).mean())
        if term < 0:
            raise NumericalError(f"negative similarity term {term:.6g} at scale {level + 1}")
        result *= term**weight
        if not last:
            a, b = _downsample(a), _downsample(b)
    return result


def sample_pairs(n, num_pairs, seed):
    """Distinct unordered index pairs drawn uniformly without replacement."""
    total = comb(n, 2)
    if n < 2:
        raise InputError("need at least 2 volumes to form pairs")
    if not 1 <= num_pairs <= total:
        raise InputError(f"num_pairs must be in [1, {total}] for {n} volumes, got {num_pairs}")
    rows, cols = np.triu_indices(n, k=1)
    chosen = np.random.default_rng(seed).choice(total, size=num_pairs, replace=False)
    return [(int(rows[t]), int(cols[t])) for t in chosen]


def pairwise_ms_ssim(volumes, num_pairs=1000, seed=0, spec=MsSsimSpec(), n_jobs=1):
    """Mean and standard deviation of MS-SSIM over sampled within-set pairs.

    Pass ``num_pairs = comb(n, 2)`` for the exhaustive score. Results do
    not depend on ``n_jobs``: scores are collected in pair order.
    """
    pairs = sample_pairs(len(volumes), num_pairs, seed)

    def score(pair):
        i, j = pair
        return ms_ssim(volumes[i], volumes[j], spec)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            scores = np.array(list(pool.map(score, pairs)))
    else:
        scores = np.array([score(p) for p in pairs])
    std = float(scores.std(ddof=1)) if scores.size > 1 else 0.0
    return float(scores.mean()), std
