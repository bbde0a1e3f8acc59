"""Gaussian summaries of embedding sets and the Frechet distance between them."""

from dataclasses import dataclass

import numpy as np

from ..exceptions import InputError
from ..validation import check_samples

EIG_CLIP = 1e-8


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = mean.size
        if cov.shape != (d, d):
            raise InputError(f"covariance shape {cov.shape} does not match mean dimension {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InputError("Gaussian summary has non-finite entries")
        scale = max(np.abs(cov).max(), 1.0)
        if np.abs(cov - cov.T).max() > 1e-9 * scale:
            raise InputError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2)

    @property
    def dim(self):
        return self.mean.size


def fit_gaussian(e):
    """Column means and unbiased (N-1) covariance, symmetrized."""
    X = check_samples(getattr(e, "vectors", e), "embeddings")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    return GaussianSummary(mean, (cov + cov.T) / 2)


def _psd_sqrt(mat):
    w, V = np.linalg.eigh(mat)
    w = np.where(w < EIG_CLIP * max(w.max(), 0.0), 0.0, w)
    return (V * np.sqrt(w)) @ V.T


def trace_sqrt_product(cov_a, cov_b):
    """Tr((A B)^{1/2}) for PSD A, B via the symmetric form A^{1/2} B A^{1/2}."""
    root_a = _psd_sqrt(cov_a)
    middle = root_a @ cov_b @ root_a
    w = np.linalg.eigvalsh((middle + middle.T) / 2)
    w = np.where(w < EIG_CLIP * max(w.max(), 0.0), 0.0, w)
    return float(np.sqrt(w).sum())


def frechet_distance(a, b):
    """Squared 2-Wasserstein distance between two Gaussian summaries.

    ``||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})``, clamped at 0.
    """
    if a.dim != b.dim:
        raise InputError(f"dimension mismatch: {a.dim} != {b.dim}")
    diff = a.mean - b.mean
    value = diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_sqrt_product(a.cov, b.cov)
    return max(float(value), 0.0)


def fid(x, y):
    """Frechet distance between two embedding sets."""
    return frechet_distance(fit_gaussian(x), fit_gaussian(y))
