"""Synthetic ellipsoid phantoms with analytically known region volumes."""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.stats import norm

from .exceptions import InputError
from .validation import check_triple
from .volume_io import LabelMap, RegionEntry, RegionTable, Volume

PERTURBATIONS = ("blur", "background-artifact", "regional-scale")


@dataclass(frozen=True)
class Ellipsoid:
    merge_key: str
    center: tuple
    semi_axes: tuple
    code: int
    intensity: float = 0.0

    @property
    def analytic_volume(self):
        a, b, c = self.semi_axes
        return 4.0 / 3.0 * math.pi * a * b * c

    def bounds(self):
        return [(c - r, c + r) for c, r in zip(self.center, self.semi_axes)]


@dataclass(frozen=True)
class PhantomSpec:
    """Grid geometry plus a list of disjoint axis-aligned ellipsoids (mm).

    World coordinates of voxel ``(i, j, k)`` are ``(i*sx, j*sy, k*sz)``.
    """

    shape: tuple = (32, 32, 32)
    spacing: tuple = (1.0, 1.0, 1.0)
    regions: tuple = ()
    noise_sigma: float = 0.0
    background: float = -1.0
    seed: int = 0

    def __post_init__(self):
        shape = check_triple(self.shape, "shape", integer=True)
        spacing = check_triple(self.spacing, "spacing")
        regions = tuple(self.regions)
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise InputError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        codes = [r.code for r in regions]
        if len(codes) != len(set(codes)) or any(c <= 0 for c in codes):
            raise InputError("ellipsoid codes must be unique and positive")
        extent = [(n - 1) * s for n, s in zip(shape, spacing)]
        for r in regions:
            check_triple(r.semi_axes, f"{r.merge_key} semi_axes")
            for (lo, hi), top in zip(r.bounds(), extent):
                if lo < 0 or hi > top:
                    raise InputError(f"ellipsoid {r.merge_key} extends outside the volume")
        # bounding-box separation is sufficient for disjointness
        for i, a in enumerate(regions):
            for b in regions[i + 1 :]:
                if all(alo < bhi and blo < ahi for (alo, ahi), (blo, bhi) in zip(a.bounds(), b.bounds())):
                    raise InputError(f"ellipsoids {a.merge_key} and {b.merge_key} may overlap")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "regions", regions)

    def region_table(self):
        return RegionTable(RegionEntry(r.code, r.merge_key, "subcortical", r.merge_key) for r in self.regions)


def _world_grid(shape, spacing):
    return np.meshgrid(*(np.arange(n) * s for n, s in zip(shape, spacing)), indexing="ij", sparse=True)


def ellipsoid_mask(shape, spacing, center, semi_axes):
    x, y, z = _world_grid(shape, spacing)
    (cx, cy, cz), (a, b, c) = center, semi_axes
    return ((x - cx) / a) ** 2 + ((y - cy) / b) ** 2 + ((z - cz) / c) ** 2 <= 1.0


def generate_phantom(spec):
    """Render ``spec`` into an intensity volume, a label map and analytic volumes.

    Each voxel takes the label of the first ellipsoid containing its center.
    Noisy intensities are clipped to [-1, 1].
    """
    labels = np.zeros(spec.shape, dtype=np.int32)
    intensity = np.full(spec.shape, spec.background, dtype=np.float64)
    for r in spec.regions:
        mask = ellipsoid_mask(spec.shape, spec.spacing, r.center, r.semi_axes) & (labels == 0)
        labels[mask] = r.code
        intensity[mask] = r.intensity
    if spec.noise_sigma > 0:
        intensity += np.random.default_rng(spec.seed).normal(0.0, spec.noise_sigma, spec.shape)
        np.clip(intensity, -1.0, 1.0, out=intensity)
    affine = np.diag([*spec.spacing, 1.0])
    volume = Volume(intensity.astype(np.float32), spec.spacing, affine, "phantom")
    label_map = LabelMap(labels, spec.spacing, affine, spec.region_table(), "phantom labels")
    truth = {r.merge_key: r.analytic_volume for r in spec.regions}
    return volume, label_map, truth


def perturb_phantom(v, kind, magnitude, seed=0, mask=None):
    """Apply a controlled corruption to a Volume (or, for regional-scale, a LabelMap).

    blur: Gaussian smoothing with sigma = ``magnitude`` voxels.
    background-artifact: seeded Gaussian speckle of SD ``magnitude`` added
        where ``mask`` is False (default mask: voxels above the volume minimum).
    regional-scale: the region given by ``mask`` is dilated radially about
        its centroid by ``1 + magnitude`` using nearest-neighbour sampling.
    """
    if kind not in PERTURBATIONS:
        raise InputError(f"unknown perturbation {kind!r}; expected one of {PERTURBATIONS}")
    if not magnitude >= 0:
        raise InputError(f"magnitude must be >= 0, got {magnitude}")
    if magnitude == 0:
        return v
    data = np.asarray(v.data)
    if kind == "blur":
        if isinstance(v, LabelMap):
            raise InputError("blur is undefined for label maps")
        return v.with_data(ndimage.gaussian_filter(data.astype(np.float64), magnitude, mode="nearest"))
    if kind == "background-artifact":
        if isinstance(v, LabelMap):
            raise InputError("background artifacts are undefined for label maps")
        foreground = data > data.min() if mask is None else np.asarray(mask, dtype=bool)
        noise = np.random.default_rng(seed).normal(0.0, magnitude, data.shape)
        return v.with_data(np.where(foreground, data, data + noise))
    if mask is None:
        raise InputError("regional-scale needs a region mask")
    return v.with_data(_dilate_region(data, np.asarray(mask, dtype=bool), 1.0 + magnitude))


def _dilate_region(data, mask, factor):
    if not mask.any():
        raise InputError("region mask is empty")
    center = np.array(ndimage.center_of_mass(mask))
    grid = np.indices(data.shape, dtype=np.float64)
    source = center[:, None, None, None] + (grid - center[:, None, None, None]) / factor
    src = np.rint(source).astype(np.int64)
    inside = np.all((src >= 0) & (src < np.array(data.shape)[:, None, None, None]), axis=0)
    src = np.where(inside, src, 0)
    hit = inside & mask[src[0], src[1], src[2]]
    out = np.array(data, copy=True)
    out[hit] = data[src[0], src[1], src[2]][hit]
    return out


@dataclass(frozen=True)
class FamilySpec:
    """A population of phantoms whose ellipsoid sizes vary per subject.

    Subject ``s`` scales every semi-axis of region ``r`` by
    ``global_s * local_{s,r}``, where both factors are normal with mean 1.
    With ``stratified=True`` the factors are placed at the normal quantiles
    ``(k + 0.5) / n`` and independently permuted per region (Latin
    hypercube sampling), which keeps finite families close to their
    distribution.
    """

    base: PhantomSpec
    n: int = 50
    global_sd: float = 0.03
    local_sd: float = 0.04
    scale_region: dict = field(default_factory=dict)
    stratified: bool = True
    seed: int = 0


def _factors(n, sd, rng, stratified):
    if stratified:
        z = norm.ppf((np.arange(n) + 0.5) / n)
        return 1.0 + sd * rng.permutation(z)
    return 1.0 + sd * rng.standard_normal(n)


def phantom_family(fam):
    """Yield ``(subject_id, Volume, LabelMap, truth)`` for each family member."""
    rng = np.random.default_rng(fam.seed)
    regions = fam.base.regions
    global_f = _factors(fam.n, fam.global_sd, rng, fam.stratified)
    local_f = np.column_stack([_factors(fam.n, fam.local_sd, rng, fam.stratified) for _ in regions])
    for s in range(fam.n):
        scaled = []
        for j, r in enumerate(regions):
            f = global_f[s] * local_f[s, j] * fam.scale_region.get(r.merge_key, 1.0)
            scaled.append(replace(r, semi_axes=tuple(a * f for a in r.semi_axes)))
        spec = replace(fam.base, regions=tuple(scaled), seed=fam.base.seed + s)
        yield (f"sub-{s:04d}", *generate_phantom(spec))


def demo_spec(shape=(48, 48, 48), noise_sigma=0.0, seed=0):
    """Four well-separated ellipsoids used by the CLI and the tests.

    The layout is defined on a 48-voxel cube and scaled to ``shape``.
    """
    shape = check_triple(shape, "shape", integer=True)
    f = [(n - 1) / 47.0 for n in shape]
    layout = (
        ("alpha", (12.0, 12.0, 24.0), (7.0, 6.0, 8.0), 0.6),
        ("beta", (34.0, 12.0, 24.0), (7.0, 7.0, 6.0), 0.2),
        ("gamma", (12.0, 34.0, 24.0), (6.0, 7.0, 7.0), -0.2),
        ("delta", (34.0, 34.0, 24.0), (7.0, 6.0, 6.0), -0.6),
    )
    regions = tuple(
        Ellipsoid(key, tuple(c * k for c, k in zip(center, f)), tuple(a * k for a, k in zip(axes, f)), code, value)
        for code, (key, center, axes, value) in enumerate(layout, start=1)
    )
    return PhantomSpec(shape, (1.0, 1.0, 1.0), regions, noise_sigma, -1.0, seed)
