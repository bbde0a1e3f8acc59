"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance
criteria" section of the terminal summary.
"""

import csv
import json
import math
import os
import time
from fractions import Fraction

import numpy as np
from conftest import record_criterion
from test_metrics import mmd_oracle, ssim_loop_oracle

from mrigen_eval.anatomy import (
    EffectSizeTable,
    RegionVolumes,
    best_region_counts,
    fit_icv,
    plausibility_table,
    region_volumes,
    residualize,
)
from mrigen_eval.cli import main as cli_main
from mrigen_eval.exceptions import InputError, NiftiFormatError
from mrigen_eval.metrics import (
    GaussianSummary,
    KernelSpec,
    MsSsimSpec,
    fid,
    frechet_distance,
    mmd2_unbiased,
    ms_ssim,
    pairwise_ms_ssim,
)
from mrigen_eval.phantom import (
    Ellipsoid,
    FamilySpec,
    PhantomSpec,
    demo_spec,
    generate_phantom,
    perturb_phantom,
    phantom_family,
)
from mrigen_eval.qc import (
    DEFAULT_QC_REGIONS,
    GateConfig,
    QCRecord,
    calibrate_threshold,
    fail_count,
    gate_model,
)
from mrigen_eval.report import EvaluationReport
from mrigen_eval.volume_io import LabelMap, Volume, parse_nifti, write_nifti

DATA = os.path.join(os.path.dirname(__file__), "data")


def _qc_set(n_failed_mris, n_failed_roi, total=400, seed=0):
    """Records where ``n_failed_mris`` MRIs carry ``n_failed_roi`` sub-threshold scores in total."""
    rng = np.random.default_rng(seed)
    extra = n_failed_roi - n_failed_mris
    records = []
    for i in range(total):
        scores = dict(zip(DEFAULT_QC_REGIONS, rng.uniform(0.7, 1.0, len(DEFAULT_QC_REGIONS))))
        if i < n_failed_mris:
            k = 2 if i < extra else 1
            for name in rng.choice(DEFAULT_QC_REGIONS, size=k, replace=False):
                scores[str(name)] = float(rng.uniform(0.1, 0.64))
        records.append(QCRecord(f"s{i}", scores))
    return records


# ------------------------------------------------------------------------ 1

TABLE2 = {
    # model: (failed ROI events, failed MRIs, expected pass rate text, expected verdict)
    "real": (19, 19, "95.25%", "assessable"),
    "VAE-GAN": (399, 397, "0.75%", "too-unreliable"),
    "alpha-WGAN": (67, 67, "83.25%", "too-unreliable"),
    "HA-GAN": (0, 0, "100.00%", "assessable"),
    "MONAI-LDM": (95, 56, "86.00%", "too-unreliable"),
    "MedSyn": (6, 6, "99.00%", "assessable"),
    "cDPM": (11, 11, "97.25%", "assessable"),
}


def test_criterion_01_gate_arithmetic():
    start = time.perf_counter()
    cfg = GateConfig(0.65, 0.05, 0.95)
    problems = []
    for model, (roi, mris, rate_text, verdict) in TABLE2.items():
        res = gate_model(_qc_set(mris, roi), cfg)
        exact = Fraction(400 - mris, 400)
        got_text = f"{res.pass_rate * 100:.2f}%"
        if Fraction(res.pass_rate).limit_denominator(400) != exact:
            problems.append(f"{model}: rate not exact")
        if (res.failed_mris, res.failed_roi_events) != (mris, roi):
            problems.append(f"{model}: counts {res.failed_mris}/{res.failed_roi_events}")
        if got_text != rate_text:
            problems.append(f"{model}: {mris} failed of 400 gives {got_text}, expected {rate_text}")
        if res.verdict != verdict:
            problems.append(f"{model}: verdict {res.verdict}")
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 1.0
    record_criterion(1, ok, f"gate arithmetic over 7 sets in {elapsed:.3f}s; " + ("; ".join(problems) or "all match"))
    assert ok, problems


# ------------------------------------------------------------------------ 2


def test_criterion_02_threshold_calibration():
    rng = np.random.default_rng(2)
    mins = np.concatenate([rng.uniform(0.60, 0.65, 19), rng.uniform(0.65, 0.66, 12), rng.uniform(0.66, 1.0, 369)])
    records = []
    for i, m in enumerate(mins):
        scores = dict(zip(DEFAULT_QC_REGIONS, rng.uniform(max(m, 0.66), 1.0, len(DEFAULT_QC_REGIONS))))
        scores[DEFAULT_QC_REGIONS[i % 8]] = float(m)
        records.append(QCRecord(f"r{i}", scores))
    t = calibrate_threshold(records, 0.05, 0.01)
    scores = np.array([[r.scores[n] for n in DEFAULT_QC_REGIONS] for r in records])
    realized = fail_count(scores, t) / 400
    next_fail = fail_count(scores, round(t + 0.01, 12)) / 400
    ok = t == 0.65 and realized == 0.0475 and next_fail > 0.05
    record_criterion(2, ok, f"threshold {t}, realized fail {realized:.2%}, fail at t+0.01 {next_fail:.2%}")
    assert ok


# ------------------------------------------------------------------------ 3


def _effect_matrix():
    with open(os.path.join(DATA, "cohens_d_three_models.csv"), encoding="utf-8") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    models = rows[0][1:]
    return {m: {r[0]: float(r[j + 1]) for r in rows[1:]} for j, m in enumerate(models)}


def test_criterion_03_effect_table_counting():
    start = time.perf_counter()
    matrix = _effect_matrix()
    tables = {m: EffectSizeTable.from_d(d, 0.8) for m, d in matrix.items()}
    counts = best_region_counts(tables)
    flagged = len(tables["HA-GAN"].flagged_keys)
    elapsed = time.perf_counter() - start
    expected = {"cDPM": 38, "MedSyn": 9, "HA-GAN": 2}
    ok = counts.strict == {m: expected[m] for m in counts.strict} and flagged == 14 and elapsed < 1.0
    detail = (f"{counts.n_regions} regions; best counts cDPM {counts.strict['cDPM']}, MedSyn {counts.strict['MedSyn']}, "
              f"HA-GAN {counts.strict['HA-GAN']} (expected 38/9/2); HA-GAN flagged at |d|>0.8: {flagged} "
              f"(expected 14); {elapsed:.3f}s")
    record_criterion(3, ok, detail)
    assert ok, detail


# ------------------------------------------------------------------------ 4


def test_criterion_04_mmd_oracle_and_unbiasedness():
    rng = np.random.default_rng(4)
    worst = 0.0
    kernels = [KernelSpec("gaussian"), KernelSpec("linear"), KernelSpec("polynomial", degree=2, coef=1.0)]
    for i in range(200):
        m, n, d = rng.integers(2, 17), rng.integers(2, 17), rng.integers(1, 9)
        X, Y = rng.normal(size=(m, d)), rng.normal(0.3, 1.2, size=(n, d))
        k = kernels[i % 3]
        got = mmd2_unbiased(X, Y, k)
        worst = max(worst, abs(got - mmd_oracle(X.tolist(), Y.tolist(), k)))
    pool = rng.normal(size=(400, 3))
    reps = []
    for _ in range(500):
        idx = rng.permutation(400)
        reps.append(mmd2_unbiased(pool[idx[:20]], pool[idx[20:40]], KernelSpec("gaussian", 1.0)))
    reps = np.array(reps)
    se = reps.std(ddof=1) / math.sqrt(reps.size)
    ok = worst <= 1e-10 and abs(reps.mean()) < 3 * se
    record_criterion(4, ok, f"max |mmd - oracle| {worst:.2e} over 200 cases; null mean {reps.mean():.2e}, "
                            f"3 SE {3 * se:.2e}")
    assert ok


# ------------------------------------------------------------------------ 5


def test_criterion_05_fid_closed_forms():
    rng = np.random.default_rng(5)
    uni = 0.0
    for _ in range(100):
        ma, mb = rng.normal(0, 3, 2)
        sa, sb = rng.uniform(0.1, 4, 2)
        got = frechet_distance(GaussianSummary([ma], [[sa**2]]), GaussianSummary([mb], [[sb**2]]))
        uni = max(uni, abs(got - ((ma - mb) ** 2 + (sa - sb) ** 2)))
    ident = sym = 0.0
    for d in range(1, 17):
        X = rng.normal(size=(3 * d + 5, d))
        Y = rng.normal(0.5, 1.5, size=(2 * d + 4, d))
        ident = max(ident, fid(X, X))
        sym = max(sym, abs(fid(X, Y) - fid(Y, X)))
    ok = uni <= 1e-9 and ident <= 1e-8 and sym <= 1e-8
    record_criterion(5, ok, f"univariate err {uni:.1e}, identity {ident:.1e}, symmetry {sym:.1e} (D<=16)")
    assert ok


# ------------------------------------------------------------------------ 6


def test_criterion_06_ms_ssim():
    vol, _, _ = generate_phantom(demo_spec((64, 64, 64), noise_sigma=0.05))
    self_sim = ms_ssim(vol, vol)

    rng = np.random.default_rng(6)
    a = rng.uniform(-1, 1, (16, 16, 16))
    b = np.clip(a + rng.normal(0, 0.3, a.shape), -1, 1)
    oracle_err = abs(ms_ssim(a, b, MsSsimSpec(scales=1)) - ssim_loop_oracle(a, b))

    noise = rng.normal(size=vol.shape)
    mono = [ms_ssim(vol, np.clip(vol.data + s * noise, -1, 1)) for s in (0.05, 0.15, 0.4)]
    monotone = mono[0] > mono[1] > mono[2]

    fam = [v for _, v, _, _ in phantom_family(FamilySpec(demo_spec((32, 32, 32), 0.05), n=6))]
    spec = MsSsimSpec(scales=3)
    threads_equal = pairwise_ms_ssim(fam, 15, 0, spec, 1) == pairwise_ms_ssim(fam, 15, 0, spec, 4)

    big = rng.uniform(-1, 1, (144, 192, 144)).astype(np.float32)
    big_b = np.clip(big + rng.normal(0, 0.1, big.shape), -1, 1)
    start = time.perf_counter()
    ms_ssim(big, big_b)
    elapsed = time.perf_counter() - start

    ok = self_sim == 1.0 and oracle_err <= 1e-6 and monotone and threads_equal and elapsed < 5.0
    record_criterion(6, ok, f"self {self_sim!r}, oracle err {oracle_err:.1e}, noise scores "
                            f"{[round(x, 4) for x in mono]}, threads equal {threads_equal}, "
                            f"full-size {elapsed:.2f}s")
    assert ok


# ------------------------------------------------------------------------ 7


def test_criterion_07_phantom_anatomy():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        axes = tuple(rng.uniform(4, 10, 3))
        spec = PhantomSpec((32, 32, 32), (1, 1, 1), (Ellipsoid("x", (15.5, 15.5, 15.5), axes, 1),))
        _, labels, truth = generate_phantom(spec)
        worst = max(worst, abs(region_volumes(labels).volumes_mm3["x"] / truth["x"] - 1))

    spec = PhantomSpec((48, 48, 48), (1, 1, 1), (Ellipsoid("x", (24, 24, 24), (9, 8, 7), 1),))
    _, labels, _ = generate_phantom(spec)
    before = int((labels.data == 1).sum())
    grown = perturb_phantom(labels, "regional-scale", 0.1, mask=labels.data == 1)
    change = (grown.data == 1).sum() / before - 1

    def fam(seed):
        return [region_volumes(lab, sid) for sid, _, lab, _ in phantom_family(FamilySpec(demo_spec(), n=50, seed=seed))]

    a, b = fam(11), fam(12)
    fit = fit_icv(a)
    table = plausibility_table([residualize(r, fit) for r in a], [residualize(r, fit) for r in b])
    max_d = max(abs(table.d(k)) for k in table.keys)
    ok = worst <= 0.05 and abs(change - 0.331) <= 0.05 and max_d < 0.2
    record_criterion(7, ok, f"max volume error {worst:.2%}, regional-scale change {change:.1%}, "
                            f"split-family max |d| {max_d:.3f}")
    assert ok


# ------------------------------------------------------------------------ 8


def test_criterion_08_ols_residualization():
    rng = np.random.default_rng(8)
    icv = rng.uniform(1.1e6, 1.9e6, 80)
    recs = [RegionVolumes(f"s{i}", {"a": 0.02 * c + rng.normal(0, 900), "b": 3000 - 1e-4 * c + rng.normal(0, 50),
                                    "c": 500 + rng.normal(0, 20)}, c) for i, c in enumerate(icv)]
    fit = fit_icv(recs)
    X = np.column_stack([np.ones(icv.size), icv])
    coef_err = mean_err = corr = 0.0
    for k in ("a", "b", "c"):
        y = np.array([r.volumes_mm3[k] for r in recs])
        beta = np.linalg.solve(X.T @ X, X.T @ y)
        coef_err = max(coef_err, abs(fit.intercept[k] - beta[0]) / max(abs(beta[0]), 1.0),
                       abs(fit.slope[k] - beta[1]) / max(abs(beta[1]), 1e-12))
        res = np.array([residualize(r, fit).residuals[k] for r in recs])
        mean_err = max(mean_err, abs(res.mean()) / y.std())
        corr = max(corr, abs(np.corrcoef(res, icv)[0, 1]))
    ok = coef_err <= 1e-9 and mean_err <= 1e-9 and corr < 1e-9
    record_criterion(8, ok, f"coef rel err {coef_err:.1e}, |mean residual|/sd {mean_err:.1e}, |corr| {corr:.1e}")
    assert ok


# ------------------------------------------------------------------------ 9


def test_criterion_09_determinism_and_structure(phantom_sets, tmp_path):
    real, synth, config = phantom_sets
    outs = []
    for run in ("a", "b"):
        code = cli_main(["evaluate", "--config", config, "--real", str(real), "--synth", str(synth),
                         "--out", str(tmp_path / run)])
        assert code == 0
        outs.append((tmp_path / run / "synth.json").read_bytes())
    identical = outs[0] == outs[1]

    rng = np.random.default_rng(9)
    violations = 0
    for i in range(100):
        total = int(rng.integers(5, 60))
        failed = int(rng.integers(0, total + 1))
        recs = [QCRecord(f"s{j}", {"q": 0.1 if j < failed else 0.9}) for j in range(total)]
        gate = gate_model(recs, GateConfig(0.65, region_names=("q",)))
        attach = bool(rng.integers(0, 2))
        table = EffectSizeTable.from_d({"r": float(rng.normal())}) if attach else None
        try:
            report = EvaluationReport(f"m{i}", gate=gate, effect_sizes=table, provenance={"run": i})
        except InputError:
            continue
        payload = json.loads(json.dumps(report.to_dict()))
        if payload["gate"]["verdict"] == "too-unreliable" and payload["effect_sizes"] is not None:
            violations += 1
    ok = identical and violations == 0
    record_criterion(9, ok, f"byte-identical json {identical}; invariant violations {violations}/100")
    assert ok


# ------------------------------------------------------------------------ 10


def test_criterion_10_nifti_round_trip():
    rng = np.random.default_rng(10)
    mismatches = 0
    for i in range(50):
        shape = tuple(int(x) for x in rng.integers(1, 12, 3))
        spacing = tuple(float(x) for x in rng.uniform(0.3, 3.0, 3))
        affine = np.eye(4)
        affine[:3, :3] = rng.normal(size=(3, 3))
        affine[:3, 3] = rng.normal(0, 50, 3)
        if i % 2:
            obj = LabelMap(rng.integers(0, 3000, shape), spacing, affine, description=f"labels {i}")
        else:
            obj = Volume(rng.normal(size=shape), spacing, affine, f"vol {i}")
        back = parse_nifti(write_nifti(obj, compress=bool(i % 3)))
        same = (
            type(back) is type(obj)
            and np.array_equal(back.data, obj.data)
            and back.data.dtype == obj.data.dtype
            and np.allclose(back.spacing, spacing, rtol=1e-6)
            and np.allclose(back.affine, affine, rtol=1e-6, atol=1e-5)
            and back.description == obj.description
        )
        mismatches += not same

    good = write_nifti(Volume(np.zeros((3, 3, 3))))

    def patched(offset, value):
        raw = bytearray(good)
        raw[offset : offset + len(value)] = value
        return bytes(raw)

    corpus = {
        "bad magic": patched(344, b"nii\x00"),
        "truncated header": good[:100],
        "truncated data": good[:-5],
        "unsupported datatype": patched(70, (128).to_bytes(2, "little")),
    }
    handled = 0
    for name, raw in corpus.items():
        try:
            parse_nifti(raw)
        except NiftiFormatError as exc:
            handled += name.split()[-1] in str(exc) or "truncated" in str(exc)
    ok = mismatches == 0 and handled == len(corpus)
    record_criterion(10, ok, f"round-trip mismatches {mismatches}/50; malformed inputs with specified errors "
                             f"{handled}/{len(corpus)}")
    assert ok


if __name__ == "__main__":  # pragma: no cover
    import pytest

    raise SystemExit(pytest.main([__file__, "-q"]))
