"""Unbiased kernel maximum mean discrepancy."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..exceptions import InputError
from ..validation import check_paired_dims, check_same_shape, check_samples

KERNELS = ("gaussian", "linear", "polynomial")
MEDIAN = "median-heuristic"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice.

    gaussian: ``exp(-|x-y|^2 / (2 h^2))`` with bandwidth ``h`` (a number or
    ``"median-heuristic"``); linear: ``x.y``; polynomial: ``(x.y + coef)^degree``.
    """

    kind: str = "gaussian"
    bandwidth: object = MEDIAN
    degree: float = 3.0
    coef: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise InputError(f"unknown kernel {self.kind!r}; expected one of {KERNELS}")
        if self.kind == "gaussian" and self.bandwidth != MEDIAN:
            bw = float(self.bandwidth)
            if not (np.isfinite(bw) and bw > 0):
                raise InputError(f"bandwidth must be positive, got {self.bandwidth}")
            object.__setattr__(self, "bandwidth", bw)
        if self.kind == "polynomial" and self.degree < 1:
            raise InputError(f"degree must be >= 1, got {self.degree}")

    @classmethod
    def parse(cls, text):
        """Build from a compact string: ``linear``, ``gaussian``, ``gaussian:2.5``, ``polynomial:3:1``."""
        parts = text.strip().split(":")
        kind = parts[0]
        if kind == "gaussian":
            return cls(kind, float(parts[1]) if len(parts) > 1 else MEDIAN)
        if kind == "polynomial":
            degree = float(parts[1]) if len(parts) > 1 else 3.0
            coef = float(parts[2]) if len(parts) > 2 else 1.0
            return cls(kind, degree=degree, coef=coef)
        return cls(kind)

    def __str__(self):
        if self.kind == "gaussian":
            return f"gaussian:{self.bandwidth}"
        if self.kind == "polynomial":
            return f"polynomial:{self.degree:g}:{self.coef:g}"
        return self.kind


def median_heuristic(X, Y):
    """Median pairwise Euclidean distance over the pooled set, zero distances excluded."""
    d = pdist(np.vstack([X, Y]))
    d = d[d > 0]
    if d.size == 0:
        raise InputError("median heuristic is undefined: all pooled points are identical")
    return float(np.median(d))


def resolve_bandwidth(k, X, Y):
    if k.kind != "gaussian":
        return None
    return median_heuristic(X, Y) if k.bandwidth == MEDIAN else float(k.bandwidth)


def gram(A, B, k, bandwidth=None):
    if k.kind == "linear":
        return A @ B.T
    if k.kind == "polynomial":
        return (A @ B.T + k.coef) ** k.degree
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * bandwidth**2))


def _offdiag_mean(K):
    m = K.shape[0]
    return (K.sum() - np.trace(K)) / (m * (m - 1))


def mmd2_unbiased(x, y, k=KernelSpec()):
    """Unbiased U-statistic estimate of squared MMD between two samples.

    The within-sample sums exclude the diagonal, so the estimate may be
    slightly negative when the distributions coincide.
    """
    X = check_samples(getattr(x, "vectors", x), "x")
    Y = check_samples(getattr(y, "vectors", y), "y")
    check_paired_dims(X, Y)
    bw = resolve_bandwidth(k, X, Y)
    kxx = _offdiag_mean(gram(X, X, k, bw))
    kyy = _offdiag_mean(gram(Y, Y, k, bw))
    kxy = gram(X, Y, k, bw).mean()
    return float(kxx + kyy - 2.0 * kxy)


def _linear_streaming(xs, ys):
    """Linear-kernel MMD using sum identities; one volume in memory at a time.

    ``sum_{i != j} x_i.x_j = |sum x_i|^2 - sum |x_i|^2``.
    """
    shapes = set()

    def moments(vols):
        total, sq, n = None, 0.0, 0
        for v in vols:
            shapes.add(tuple(v.shape))
            if len(shapes) > 1:
                raise InputError(f"volumes have mismatched shapes: {sorted(shapes)}")
            flat = np.asarray(v.data, dtype=np.float64).ravel()
            total = flat.copy() if total is None else total + flat
            sq += flat @ flat
            n += 1
        return total, sq, n

    sx, qx, m = moments(xs)
    sy, qy, n = moments(ys)
    kxx = (sx @ sx - qx) / (m * (m - 1))
    kyy = (sy @ sy - qy) / (n * (n - 1))
    kxy = (sx @ sy) / (m * n)
    return float(kxx + kyy - 2.0 * kxy)


def image_space_mmd(xs, ys, k=KernelSpec("linear")):
    """MMD on raw voxels: every volume is flattened into one feature vector.

    ``xs``/``ys`` may be any re-iterable sequences of volumes (e.g. lazily
    loaded). The linear kernel streams; other kernels hold all vectors.
    """
    if len(xs) < 2 or len(ys) < 2:
        raise InputError("image-space MMD needs at least 2 volumes per set")
    if k.kind == "linear":
        return _linear_streaming(xs, ys)
    check_same_shape([*xs, *ys])
    X = np.stack([np.asarray(v.data, dtype=np.float64).ravel() for v in xs])
    Y = np.stack([np.asarray(v.data, dtype=np.float64).ravel() for v in ys])
    return mmd2_unbiased(X, Y, k)
