"""Evaluation reports and their JSON, CSV and Markdown renderings."""

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

from .anatomy import EffectSize, EffectSizeTable, best_region_counts
from .exceptions import InputError
from .qc import ModelGateResult

FORMATS = ("json", "csv", "markdown")
LOWER_IS_BETTER = ("fid@", "mmd@", "image_mmd")


@dataclass(frozen=True)
class EvaluationReport:
    """Everything measured for one generative model.

    Effect sizes are never attached to a model that failed the QC gate, and
    are required for a gated, assessable model whenever the anatomy stage
    ran (``provenance["stages"]``, all stages when absent). Constructing a
    report that violates this raises.
    """

    model_name: str
    classic: dict = field(default_factory=dict)
    gate: ModelGateResult = None
    effect_sizes: EffectSizeTable = None
    reference_gate: ModelGateResult = None
    qc_distribution: dict = None
    skipped: dict = field(default_factory=dict)
    warnings: tuple = ()
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        assessable = self.gate is not None and self.gate.assessable
        if self.effect_sizes is not None and not assessable:
            raise InputError(f"{self.model_name}: effect sizes are only reported for assessable models")
        anatomy_ran = "anatomy" in self.provenance.get("stages", ("anatomy",))
        if assessable and anatomy_ran and self.effect_sizes is None:
            raise InputError(f"{self.model_name}: assessable model is missing its effect-size table")
        if not self.provenance:
            raise InputError("report provenance must not be empty")

    def to_dict(self):
        effect = None
        if self.effect_sizes is not None:
            effect = {
                "flag_threshold": self.effect_sizes.flag_threshold,
                "regions": {
                    k: {"d": r.d, "n_real": r.n_real, "n_synth": r.n_synth, "flagged": r.flagged}
                    for k, r in self.effect_sizes.rows.items()
                },
            }
        return {
            "model_name": self.model_name,
            "classic": dict(self.classic),
            "gate": None if self.gate is None else self.gate.to_dict(),
            "reference_gate": None if self.reference_gate is None else self.reference_gate.to_dict(),
            "effect_sizes": effect,
            "qc_distribution": self.qc_distribution,
            "skipped": dict(self.skipped),
            "warnings": list(self.warnings),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        effect = d.get("effect_sizes")
        table = None
        if effect is not None:
            rows = {k: EffectSize(**v) for k, v in effect["regions"].items()}
            table = EffectSizeTable(rows, effect["flag_threshold"])
        gate = d.get("gate")
        ref = d.get("reference_gate")
        return cls(
            model_name=d["model_name"],
            classic=d.get("classic", {}),
            gate=None if gate is None else ModelGateResult.from_dict(gate),
            effect_sizes=table,
            reference_gate=None if ref is None else ModelGateResult.from_dict(ref),
            qc_distribution=d.get("qc_distribution"),
            skipped=d.get("skipped", {}),
            warnings=tuple(d.get("warnings", ())),
            provenance=d.get("provenance", {}),
        )


def to_json(report):
    return (json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")


def from_json(raw):
    try:
        return EvaluationReport.from_dict(json.loads(raw))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"not a valid report: {exc}") from None


def _csv(rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerows(rows)
    return out.getvalue()


def csv_tables(reports):
    """One CSV document per table, keyed by file name."""
    reports = list(reports)
    tables = {}
    rows = [["model", "metric", "value"]]
    for r in reports:
        rows += [[r.model_name, k, repr(v)] for k, v in sorted(r.classic.items())]
    tables["classic_metrics.csv"] = rows
    rows = [["model", "total", "failed_roi_events", "failed_mris", "pass_rate", "verdict", "threshold"]]
    seen_ref = False
    for r in reports:
        if r.reference_gate is not None and not seen_ref:
            g = r.reference_gate
            rows.append(["real", g.total, g.failed_roi_events, g.failed_mris, repr(g.pass_rate), g.verdict,
                         repr(g.threshold)])
            seen_ref = True
        if r.gate is not None:
            g = r.gate
            rows.append([r.model_name, g.total, g.failed_roi_events, g.failed_mris, repr(g.pass_rate), g.verdict,
                         repr(g.threshold)])
    tables["qc_gate.csv"] = rows
    rows = [["model", "region", "d", "n_real", "n_synth", "flagged"]]
    for r in reports:
        if r.effect_sizes is not None:
            rows += [[r.model_name, k, repr(e.d), e.n_real, e.n_synth, int(e.flagged)]
                     for k, e in r.effect_sizes.rows.items()]
    tables["effect_sizes.csv"] = rows
    rows = [["model", "region", "min", "q1", "median", "q3", "max", "fraction_below"]]
    for r in reports:
        for region, s in (r.qc_distribution or {}).items():
            rows.append([r.model_name, region, *(repr(s[k]) for k in ("min", "q1", "median", "q3", "max")),
                         repr(s.get("fraction_below", ""))])
    tables["qc_distribution.csv"] = rows
    return {name: _csv(rows).encode("utf-8") for name, rows in tables.items()}


def _fmt(value, decimals):
    if value is None:
        return "n/a"
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{decimals}f}"


def _pct(rate):
    return f"{rate * 100:.2f}%"


def _bold_best(values, key):
    """Index set of the best entries by ``key`` (ties all bold)."""
    scored = [(key(v), i) for i, v in enumerate(values) if v is not None]
    if not scored:
        return set()
    best = min(s for s, _ in scored)
    return {i for s, i in scored if s == best}


def _table(header, rows):
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines)


def render_markdown(reports):
    reports = list(reports)
    parts = ["# Generative model evaluation", ""]

    metric_names = sorted({k for r in reports for k in r.classic if k != "ms_ssim_real_mean"})
    if metric_names:
        columns = {m: [r.classic.get(m) for r in reports] for m in metric_names}
        bold = {}
        for m, vals in columns.items():
            if m.startswith(LOWER_IS_BETTER):
                bold[m] = _bold_best(vals, lambda v: v)
        if "ms_ssim_gap_to_real" in columns and "ms_ssim_mean" in columns:
            bold["ms_ssim_mean"] = _bold_best(columns["ms_ssim_gap_to_real"], lambda v: v)
        rows = []
        for i, r in enumerate(reports):
            cells = [r.model_name]
            for m in metric_names:
                text = _fmt(columns[m][i], 3)
                cells.append(f"**{text}**" if i in bold.get(m, ()) else text)
            rows.append(cells)
        real = next((r.classic["ms_ssim_real_mean"] for r in reports if "ms_ssim_real_mean" in r.classic), None)
        parts += ["## Common metrics", "", "Lower is better except MS-SSIM, where the score closest to the "
                  "real-set value is best. Best per column in bold.", ""]
        if real is not None:
            parts += [f"Real-set MS-SSIM: {_fmt(real, 3)}", ""]
        parts += [_table(["model", *metric_names], rows), ""]

    gated = [r for r in reports if r.gate is not None]
    if gated:
        ref = next((r.reference_gate for r in gated if r.reference_gate is not None), None)
        cols = ([("real", ref)] if ref is not None else []) + [(r.model_name, r.gate) for r in gated]
        rows = [
            ["Total failed ROI", *(str(g.failed_roi_events) for _, g in cols)],
            ["Total failed MRIs", *(str(g.failed_mris) for _, g in cols)],
            ["MRIs passing rate", *(_pct(g.pass_rate) for _, g in cols)],
            ["Verdict", *(g.verdict for _, g in cols)],
        ]
        threshold = gated[0].gate.threshold
        parts += ["## QC gate", "", f"An MRI fails when any QC score is below {_fmt(threshold, 2)}.", "",
                  _table(["", *(name for name, _ in cols)], rows), ""]

        for r in gated:
            if not r.qc_distribution:
                continue
            rows = [[region, *(_fmt(s[k], 3) for k in ("min", "q1", "median", "q3", "max")),
                     _pct(s["fraction_below"]) if "fraction_below" in s else "n/a"]
                    for region, s in r.qc_distribution.items()]
            parts += [f"### QC score distribution: {r.model_name}", "",
                      _table(["region", "min", "q1", "median", "q3", "max", "below threshold"], rows), ""]

    assessed = [r for r in reports if r.effect_sizes is not None]
    if assessed:
        keys = list(assessed[0].effect_sizes.keys)
        threshold = assessed[0].effect_sizes.flag_threshold
        rows = []
        for k in keys:
            vals = [r.effect_sizes.rows[k].d if k in r.effect_sizes.rows else None for r in assessed]
            best = _bold_best(vals, abs) if len(assessed) > 1 else set()
            cells = [k]
            for i, (r, v) in enumerate(zip(assessed, vals)):
                text = _fmt(v, 2)
                if v is not None and r.effect_sizes.rows[k].flagged:
                    text += " (!)"
                cells.append(f"**{text}**" if i in best else text)
            rows.append(cells)
        parts += ["## Anatomical plausibility (Cohen's d, synthetic minus real)", "",
                  f"(!) marks |d| > {threshold:g}. Smallest |d| per region in bold.", "",
                  _table(["region", *(r.model_name for r in assessed)], rows), ""]
        if len(assessed) > 1:
            counts = best_region_counts({r.model_name: r.effect_sizes for r in assessed})
            rows = [[m, str(counts.strict[m]), _pct(counts.share(m)), str(counts.tied[m])] for m in counts.strict]
            parts += ["### Best-region counts", "",
                      _table(["model", "best regions", "share", "best incl. ties"], rows), ""]

    excluded = [r.model_name for r in gated if not r.gate.assessable]
    if excluded:
        parts += ["Too unreliable for anatomical assessment: " + ", ".join(excluded), ""]
    return ("\n".join(parts).rstrip() + "\n").encode("utf-8")


def emit(report, fmt="json"):
    """Serialize one report (or a list of reports) to bytes.

    ``csv`` concatenates the per-table documents, each preceded by a
    ``# <file name>`` line; use :func:`write_report` for one file per table.
    """
    reports = report if isinstance(report, (list, tuple)) else [report]
    if fmt == "json":
        if len(reports) == 1:
            return to_json(reports[0])
        payload = [r.to_dict() for r in reports]
        return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")
    if fmt == "csv":
        return b"".join(f"# {name}\n".encode() + body for name, body in csv_tables(reports).items())
    if fmt == "markdown":
        return render_markdown(reports)
    raise InputError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def write_report(reports, out_dir, fmt="json"):
    """Write reports to ``out_dir``; returns the written paths."""
    reports = list(reports)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, data):
        path = os.path.join(out_dir, name)
        with open(path, "wb") as fh:
            fh.write(data)
        written.append(path)

    if fmt == "json":
        for r in reports:
            put(f"{_safe(r.model_name)}.json", to_json(r))
    elif fmt == "csv":
        for name, body in csv_tables(reports).items():
            put(name, body)
    elif fmt == "markdown":
        put("report.md", render_markdown(reports))
    else:
        raise InputError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    return written


def _safe(name):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name) or "model"
