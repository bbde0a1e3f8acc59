"""Regional volumes, ICV residualization and Cohen's d effect sizes."""

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InputError
from .validation import check_samples

logger = logging.getLogger(__name__)

FLAG_THRESHOLD = 0.8


@dataclass(frozen=True)
class RegionVolumes:
    subject_id: str
    volumes_mm3: dict
    icv_mm3: float
    unknown_codes: tuple = ()
    unknown_mm3: float = 0.0

    def __post_init__(self):
        if not self.icv_mm3 > 0:
            raise InputError(f"{self.subject_id}: ICV must be positive")
        if any(v < 0 for v in self.volumes_mm3.values()):
            raise InputError(f"{self.subject_id}: negative region volume")


@dataclass(frozen=True)
class ResidualizedVolumes:
    subject_id: str
    residuals: dict
    fit_tag: str = ""


def region_volumes(m, subject_id=""):
    """Per-ROI volumes (mm^3) and ICV from a label map with an attached table.

    ICV is the volume of every nonzero voxel whose code is not excluded from
    ICV by the table; codes missing from the table still count towards ICV
    and are reported in ``unknown_codes``.
    """
    table = m.table
    if table is None or len(table) == 0:
        raise InputError(f"{subject_id or 'label map'}: no region table attached")
    voxel_mm3 = float(np.prod(m.spacing))
    codes, counts = np.unique(m.data, return_counts=True)
    per_code = {int(c): int(n) for c, n in zip(codes, counts) if c != 0}
    if not per_code:
        raise InputError(f"{subject_id or 'label map'}: no labelled voxels")
    excluded = set(table.icv_excluded_codes())
    volumes = dict.fromkeys(table.merge_keys, 0.0)
    unknown, unknown_count, icv_count = [], 0, 0
    for code, n in per_code.items():
        entry = table.lookup(code)
        if entry is None:
            unknown.append(code)
            unknown_count += n
        else:
            volumes[entry.merge_key] += n * voxel_mm3
        if code not in excluded:
            icv_count += n
    if unknown:
        logger.warning("%s: codes %s not in region table (counted in ICV)", subject_id or "label map", unknown)
    return RegionVolumes(subject_id, volumes, icv_count * voxel_mm3, tuple(unknown), unknown_count * voxel_mm3)


def _design(records, keys):
    icv = np.array([r.icv_mm3 for r in records], dtype=np.float64)
    vols = np.array([[r.volumes_mm3[k] for k in keys] for r in records], dtype=np.float64)
    return np.column_stack([icv, vols])


class IcvResidualizer(TransformerMixin, BaseEstimator):
    """Remove the linear effect of intracranial volume from regional volumes.

    ``X`` has ICV in column ``icv_column`` and one region per remaining
    column. ``fit`` estimates ``volume = intercept + slope * ICV`` per region
    by ordinary least squares; ``transform`` returns the residuals (one
    column per region, ICV column dropped).
    """

    def __init__(self, icv_column=0):
        self.icv_column = icv_column

    def _split(self, X):
        X = check_samples(X, "X", min_samples=1)
        icv = X[:, self.icv_column]
        regions = np.delete(X, self.icv_column, axis=1)
        return icv, regions

    def fit(self, X, y=None):
        icv, regions = self._split(X)
        if icv.size < 3:
            raise InputError(f"ICV regression needs at least 3 subjects, got {icv.size}")
        icv_c = icv - icv.mean()
        sxx = icv_c @ icv_c
        if sxx <= 1e-12 * max(icv @ icv, 1.0):
            raise InputError("ICV values are (numerically) identical; slope is undefined")
        self.slope_ = (icv_c @ (regions - regions.mean(axis=0))) / sxx
        self.intercept_ = regions.mean(axis=0) - self.slope_ * icv.mean()
        self.n_samples_ = icv.size
        self.n_features_in_ = regions.shape[1] + 1
        return self

    def transform(self, X):
        check_is_fitted(self, "slope_")
        icv, regions = self._split(X)
        if regions.shape[1] != self.slope_.size:
            raise InputError(f"expected {self.slope_.size} regions, got {regions.shape[1]}")
        return regions - (self.intercept_ + np.outer(icv, self.slope_))


@dataclass(frozen=True)
class IcvFit:
    """Per-region OLS coefficients of regional volume on ICV."""

    keys: tuple
    intercept: dict
    slope: dict
    n: int
    fitted_on: str = "real"

    def __post_init__(self):
        if self.n < 3:
            raise InputError(f"IcvFit needs n >= 3, got {self.n}")
        for k in self.keys:
            if not (math.isfinite(self.intercept[k]) and math.isfinite(self.slope[k])):
                raise InputError(f"non-finite coefficients for region {k}")


def fit_icv(reference, keys=None, fitted_on="real"):
    """OLS of each region's volume on ICV over ``reference`` subjects."""
    reference = list(reference)
    if len(reference) < 3:
        raise InputError(f"ICV regression needs at least 3 subjects, got {len(reference)}")
    keys = tuple(keys) if keys is not None else tuple(reference[0].volumes_mm3)
    model = IcvResidualizer().fit(_design(reference, keys))
    return IcvFit(
        keys,
        dict(zip(keys, map(float, model.intercept_))),
        dict(zip(keys, map(float, model.slope_))),
        len(reference),
        fitted_on,
    )


def residualize(v, fit):
    missing = [k for k in v.volumes_mm3 if k not in fit.slope]
    if missing:
        raise InputError(f"{v.subject_id}: regions {missing} are not in the ICV fit")
    residuals = {
        k: vol - (fit.intercept[k] + fit.slope[k] * v.icv_mm3) for k, vol in v.volumes_mm3.items()
    }
    return ResidualizedVolumes(v.subject_id, residuals, fit.fitted_on)


def cohens_d(x, y):
    """Standardized mean difference ``(mean(x) - mean(y)) / s_pooled``.

    Uses n-1 sample variances. With zero pooled SD, returns 0 for equal
    means and a signed infinity otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or y.size < 2:
        raise InputError("Cohen's d needs at least 2 values per sample")
    diff = x.mean() - y.mean()
    pooled = ((x.size - 1) * x.var(ddof=1) + (y.size - 1) * y.var(ddof=1)) / (x.size + y.size - 2)
    if pooled == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return float(diff / math.sqrt(pooled))


@dataclass(frozen=True)
class EffectSize:
    d: float
    n_real: int
    n_synth: int
    flagged: bool


@dataclass(frozen=True)
class EffectSizeTable:
    """Per-region Cohen's d of synthetic versus real residualized volumes."""

    rows: dict
    flag_threshold: float = FLAG_THRESHOLD

    def __post_init__(self):
        for key, row in self.rows.items():
            if row.flagged != (abs(row.d) > self.flag_threshold):
                raise InputError(f"flag for {key} inconsistent with threshold")

    @property
    def keys(self):
        return tuple(self.rows)

    def d(self, key):
        return self.rows[key].d

    @property
    def flagged_keys(self):
        return tuple(k for k, r in self.rows.items() if r.flagged)

    @classmethod
    def from_d(cls, d_values, flag_threshold=FLAG_THRESHOLD, n_real=0, n_synth=0):
        rows = {
            k: EffectSize(float(d), n_real, n_synth, abs(float(d)) > flag_threshold)
            for k, d in d_values.items()
        }
        return cls(rows, flag_threshold)


def plausibility_table(real, synth, flag_threshold=FLAG_THRESHOLD):
    """Cohen's d per region, synthetic minus real, with large effects flagged."""
    real, synth = list(real), list(synth)
    if not real or not synth:
        raise InputError("plausibility needs non-empty real and synthetic sets")
    keys = [k for k in real[0].residuals if all(k in r.residuals for r in (*real, *synth))]
    if not keys:
        raise InputError("real and synthetic sets share no region keys")
    d_values = {
        k: cohens_d([s.residuals[k] for s in synth], [r.residuals[k] for r in real]) for k in keys
    }
    return EffectSizeTable.from_d(d_values, flag_threshold, len(real), len(synth))


@dataclass(frozen=True)
class BestRegionCounts:
    strict: dict
    tied: dict
    n_regions: int

    def share(self, model, tied=False):
        counts = self.tied if tied else self.strict
        return counts[model] / self.n_regions


def best_region_counts(tables):
    """Count, per model, the regions where its |d| is smallest.

    ``tables`` maps model name to :class:`EffectSizeTable` (or to a plain
    ``{region: d}`` dict). ``strict`` counts only unique minima; ``tied``
    credits every model sharing the minimum.
    """
    d = {}
    for model, t in tables.items():
        d[model] = {k: r.d for k, r in t.rows.items()} if isinstance(t, EffectSizeTable) else dict(t)
    models = list(d)
    if not models:
        raise InputError("no models to compare")
    keys = [k for k in d[models[0]] if all(k in d[m] for m in models)]
    strict = dict.fromkeys(models, 0)
    tied = dict.fromkeys(models, 0)
    for k in keys:
        best = min(abs(d[m][k]) for m in models)
        winners = [m for m in models if abs(d[m][k]) == best]
        for m in winners:
            tied[m] += 1
        if len(winners) == 1:
            strict[winners[0]] += 1
    return BestRegionCounts(strict, tied, len(keys))


def format_volumes_csv(records, keys=None):
    records = list(records)
    keys = tuple(keys) if keys is not None else tuple(records[0].volumes_mm3) if records else ()
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["subject_id", "icv_mm3", *keys])
    for r in records:
        writer.writerow([r.subject_id, repr(float(r.icv_mm3)), *(repr(float(r.volumes_mm3[k])) for k in keys)])
    return out.getvalue()


def parse_volumes_csv(text):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("empty region-volume CSV") from None
    if header[:2] != ["subject_id", "icv_mm3"]:
        raise InputError("region-volume CSV header must start with subject_id,icv_mm3")
    keys = header[2:]
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"region-volume CSV line {lineno}: expected {len(header)} fields")
        try:
            values = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise InputError(f"region-volume CSV line {lineno}: {exc}") from None
        records.append(RegionVolumes(row[0], dict(zip(keys, values[1:])), values[0]))
    return records
