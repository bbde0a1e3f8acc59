"""Distribution metrics: MS-SSIM, Frechet distance and kernel MMD."""

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .embeddings import (
    EmbeddingSet,
    embed_volumes,
    format_embeddings_binary,
    format_embeddings_csv,
    load_embeddings,
    parse_embeddings_binary,
    parse_embeddings_csv,
    toy_embedder,
)
from .fid import GaussianSummary, fid, fit_gaussian, frechet_distance
from .mmd import KernelSpec, image_space_mmd, median_heuristic, mmd2_unbiased
from .msssim import MsSsimSpec, ms_ssim, pairwise_ms_ssim, sample_pairs, ssim_map


class DistributionScorer(BaseEstimator):
    """Score embedding sets against a fitted reference set.

    ``fit`` stores the reference embeddings and their Gaussian summary;
    ``frechet`` and ``mmd`` compare a new set to that reference.
    """

    def __init__(self, kernel="gaussian"):
        self.kernel = kernel

    def fit(self, X, y=None):
        self.reference_ = EmbeddingSet(getattr(X, "vectors", X))
        self.gaussian_ = fit_gaussian(self.reference_)
        self.n_features_in_ = self.reference_.dim
        return self

    def frechet(self, X):
        check_is_fitted(self, "gaussian_")
        return frechet_distance(fit_gaussian(X), self.gaussian_)

    def mmd(self, X):
        check_is_fitted(self, "reference_")
        kernel = self.kernel if isinstance(self.kernel, KernelSpec) else KernelSpec.parse(self.kernel)
        return mmd2_unbiased(X, self.reference_, kernel)


__all__ = [
    "DistributionScorer",
    "EmbeddingSet",
    "GaussianSummary",
    "KernelSpec",
    "MsSsimSpec",
    "embed_volumes",
    "fid",
    "fit_gaussian",
    "format_embeddings_binary",
    "format_embeddings_csv",
    "frechet_distance",
    "image_space_mmd",
    "load_embeddings",
    "median_heuristic",
    "mmd2_unbiased",
    "ms_ssim",
    "pairwise_ms_ssim",
    "parse_embeddings_binary",
    "parse_embeddings_csv",
    "sample_pairs",
    "ssim_map",
    "toy_embedder",
]
