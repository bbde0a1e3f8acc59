"""Segmentation quality-control gating.

An MRI fails when any of its region QC scores is strictly below the
threshold. A model is assessable only when the share of passing MRIs is at
least ``min_model_pass_rate``.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import CalibrationError, InputError
from .validation import check_fraction

# Region names follow the segmenter's documented QC outputs; configurable.
DEFAULT_QC_REGIONS = (
    "general_white_matter",
    "general_grey_matter",
    "general_csf",
    "cerebellum",
    "brainstem",
    "thalamus",
    "putamen_pallidum",
    "hippocampus_amygdala",
)

ASSESSABLE = "assessable"
TOO_UNRELIABLE = "too-unreliable"
_EPS = 1e-12


@dataclass(frozen=True)
class QCRecord:
    subject_id: str
    scores: dict

    def validate(self, region_names):
        missing = [r for r in region_names if r not in self.scores]
        if missing:
            raise InputError(f"{self.subject_id}: missing QC regions {missing}")
        for name in region_names:
            s = self.scores[name]
            if not 0.0 <= s <= 1.0:
                raise InputError(f"{self.subject_id}: QC score {name}={s} outside [0, 1]")
        return self


@dataclass(frozen=True)
class GateConfig:
    threshold: float = 0.65
    target_real_fail_fraction: float = 0.05
    min_model_pass_rate: float = None
    region_names: tuple = DEFAULT_QC_REGIONS

    def __post_init__(self):
        check_fraction(self.threshold, "threshold")
        check_fraction(self.target_real_fail_fraction, "target_real_fail_fraction")
        if self.min_model_pass_rate is None:
            object.__setattr__(self, "min_model_pass_rate", 1.0 - self.target_real_fail_fraction)
        check_fraction(self.min_model_pass_rate, "min_model_pass_rate", open_interval=False)
        names = tuple(self.region_names)
        if len(names) != len(set(names)) or not names:
            raise InputError("QC region names must be unique and non-empty")
        object.__setattr__(self, "region_names", names)


@dataclass(frozen=True)
class ModelGateResult:
    total: int
    failed_mris: int
    failed_roi_events: int
    pass_rate: float
    verdict: str
    per_region_fail_counts: dict = field(default_factory=dict)
    threshold: float = None
    min_model_pass_rate: float = None

    @property
    def assessable(self):
        return self.verdict == ASSESSABLE

    def to_dict(self):
        return {
            "total": self.total,
            "failed_mris": self.failed_mris,
            "failed_roi_events": self.failed_roi_events,
            "pass_rate": self.pass_rate,
            "verdict": self.verdict,
            "per_region_fail_counts": dict(self.per_region_fail_counts),
            "threshold": self.threshold,
            "min_model_pass_rate": self.min_model_pass_rate,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _score_matrix(records, region_names):
    records = list(records)
    for r in records:
        r.validate(region_names)
    return np.array([[r.scores[n] for n in region_names] for r in records], dtype=np.float64).reshape(
        len(records), len(region_names)
    )


def gate_mri(r, cfg=GateConfig()):
    """Return ``(passed, failing_regions)`` for one record."""
    r.validate(cfg.region_names)
    failing = [n for n in cfg.region_names if r.scores[n] < cfg.threshold]
    return not failing, failing


def fail_count(scores, threshold):
    """Number of rows with any score strictly below ``threshold``."""
    return int((scores < threshold).any(axis=1).sum())


def threshold_grid(grid_step):
    """Grid ``{step, 2 step, ...}`` strictly below 1, rounded to kill float drift."""
    if not grid_step > 0:
        raise InputError(f"grid_step must be positive, got {grid_step}")
    k = np.arange(1, int(np.floor((1.0 - _EPS) / grid_step)) + 1)
    grid = np.round(k * grid_step, 12)
    return grid[grid < 1.0]


def _calibrate_scores(scores, target_fail, grid_step):
    n = scores.shape[0]
    if n == 0:
        raise InputError("cannot calibrate on an empty record set")
    target_fail = check_fraction(target_fail, "target_fail")
    allowed = target_fail * n + _EPS * n
    best = None
    mins = scores.min(axis=1)
    for t in threshold_grid(grid_step):
        if int((mins < t).sum()) <= allowed:
            best = float(t)
        else:
            break
    if best is None:
        raise CalibrationError(
            f"even the smallest threshold {grid_step} fails more than {target_fail:.2%} of the real records"
        )
    return best


def calibrate_threshold(real, target_fail=0.05, grid_step=0.01, region_names=DEFAULT_QC_REGIONS):
    """Largest grid threshold at which at most ``target_fail`` of real records fail.

    The fail count is monotone in the threshold, so the scan stops at the
    first violation.
    """
    return _calibrate_scores(_score_matrix(real, region_names), target_fail, grid_step)


def _gate_scores(scores, region_names, threshold, min_pass_rate):
    below = scores < threshold
    failed = int(below.any(axis=1).sum())
    total = scores.shape[0]
    if total == 0:
        raise InputError("cannot gate an empty record set")
    passed = total - failed
    pass_rate = passed / total
    assessable = passed >= min_pass_rate * total - _EPS * total
    return ModelGateResult(
        total=total,
        failed_mris=failed,
        failed_roi_events=int(below.sum()),
        pass_rate=pass_rate,
        verdict=ASSESSABLE if assessable else TOO_UNRELIABLE,
        per_region_fail_counts={n: int(c) for n, c in zip(region_names, below.sum(axis=0))},
        threshold=float(threshold),
        min_model_pass_rate=float(min_pass_rate),
    )


def gate_model(records, cfg=GateConfig()):
    return _gate_scores(
        _score_matrix(records, cfg.region_names), cfg.region_names, cfg.threshold, cfg.min_model_pass_rate
    )


def qc_distribution(records, region_names=DEFAULT_QC_REGIONS, threshold=None):
    """Per-region min, quartiles (linear interpolation), max and fraction below threshold."""
    scores = _score_matrix(records, region_names)
    if scores.shape[0] == 0:
        raise InputError("no QC records")
    out = {}
    for j, name in enumerate(region_names):
        col = scores[:, j]
        q1, med, q3 = np.quantile(col, [0.25, 0.5, 0.75], method="linear")
        summary = {"min": float(col.min()), "q1": float(q1), "median": float(med), "q3": float(q3),
                   "max": float(col.max())}
        if threshold is not None:
            summary["fraction_below"] = float((col < threshold).mean())
        out[name] = summary
    return out


class QCGate(BaseEstimator):
    """QC gate as an estimator over an ``(n_mris, n_regions)`` score matrix.

    ``fit`` calibrates ``threshold_`` on real scores unless a fixed
    ``threshold`` is given; ``predict`` returns a boolean pass mask;
    ``gate`` aggregates a model's MRIs into a :class:`ModelGateResult`.
    """

    def __init__(self, threshold=None, target_fail=0.05, grid_step=0.01, min_pass_rate=None,
                 region_names=DEFAULT_QC_REGIONS):
        self.threshold = threshold
        self.target_fail = target_fail
        self.grid_step = grid_step
        self.min_pass_rate = min_pass_rate
        self.region_names = region_names

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.region_names):
            raise InputError(f"expected a score matrix with {len(self.region_names)} columns, got {X.shape}")
        if np.any((X < 0) | (X > 1)) or not np.all(np.isfinite(X)):
            raise InputError("QC scores must lie in [0, 1]")
        return X

    def fit(self, X, y=None):
        X = self._check(X)
        if self.threshold is None:
            self.threshold_ = _calibrate_scores(X, self.target_fail, self.grid_step)
        else:
            self.threshold_ = check_fraction(self.threshold, "threshold")
        self.real_fail_fraction_ = fail_count(X, self.threshold_) / X.shape[0]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "threshold_")
        return ~(self._check(X) < self.threshold_).any(axis=1)

    def gate(self, X):
        check_is_fitted(self, "threshold_")
        min_rate = 1.0 - self.target_fail if self.min_pass_rate is None else self.min_pass_rate
        return _gate_scores(self._check(X), self.region_names, self.threshold_, min_rate)


def parse_qc_csv(text, region_names=DEFAULT_QC_REGIONS):
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or reader.fieldnames[0] != "subject_id":
        raise InputError("QC CSV header must start with subject_id")
    missing = [n for n in region_names if n not in reader.fieldnames]
    if missing:
        raise InputError(f"QC CSV lacks columns {missing}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        try:
            scores = {n: float(row[n]) for n in region_names}
        except (TypeError, ValueError) as exc:
            raise InputError(f"QC CSV line {lineno}: {exc}") from None
        records.append(QCRecord(row["subject_id"], scores).validate(region_names))
    return records


def format_qc_csv(records, region_names=DEFAULT_QC_REGIONS):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["subject_id", *region_names])
    for r in records:
        writer.writerow([r.subject_id, *(repr(float(r.scores[n])) for n in region_names)])
    return out.getvalue()
