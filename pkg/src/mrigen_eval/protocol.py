"""End-to-end evaluation over directories of files."""

import glob
import hashlib
import logging
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb

from . import __version__
from .anatomy import (
    fit_icv,
    parse_volumes_csv,
    plausibility_table,
    region_volumes,
    residualize,
)
from .config import Config
from .exceptions import InputError
from .metrics import (
    EmbeddingSet,
    KernelSpec,
    MsSsimSpec,
    fid,
    image_space_mmd,
    load_embeddings,
    mmd2_unbiased,
)
from .metrics.msssim import pairwise_ms_ssim
from .qc import (
    GateConfig,
    calibrate_threshold,
    gate_model,
    gate_mri,
    parse_qc_csv,
    qc_distribution,
)
from .report import EvaluationReport
from .volume_io import (
    default_region_table,
    read_label_map,
    read_volume,
    validate_geometry,
)
from .volume_io.regions import RegionTable

logger = logging.getLogger(__name__)

STAGES = ("classic", "gate", "anatomy")


def subject_id(path, suffix=""):
    name = os.path.basename(path)
    for ext in (".nii.gz", ".nii"):
        if name.endswith(ext):
            name = name[: -len(ext)]
            break
    if suffix and name.endswith(suffix):
        name = name[: -len(suffix)]
    return name


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class VolumeFiles(Sequence):
    """Lazily loaded volumes; each access reads the file again."""

    def __init__(self, paths):
        self.paths = list(paths)

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return VolumeFiles(self.paths[i])
        return read_volume(self.paths[i])


@dataclass
class DatasetScan:
    """Files found in one data directory and the result of geometry checks."""

    root: str
    images: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    nonconforming: dict = field(default_factory=dict)

    @property
    def conforming_ids(self):
        return [s for s in self.images if s not in self.nonconforming]

    def manifest(self):
        files = sorted([*self.images.values(), *self.labels.values()])
        return [[os.path.relpath(p, self.root), sha256_file(p)] for p in files]


def scan_directory(root, cfg, n_jobs=1):
    if not os.path.isdir(root):
        raise InputError(f"not a directory: {root}")
    scan = DatasetScan(root)
    for p in sorted(glob.glob(os.path.join(root, cfg.data.image_glob))):
        scan.images[subject_id(p)] = p
    for p in sorted(glob.glob(os.path.join(root, cfg.data.label_glob))):
        scan.labels[subject_id(p, cfg.data.label_suffix)] = p
    geo = cfg.geometry

    def check(item):
        sid, path = item
        try:
            report = validate_geometry(read_volume(path), geo.shape, geo.spacing, geo.tol)
        except InputError as exc:
            return sid, str(exc)
        return sid, None if report.conforms else report.describe()

    items = list(scan.images.items())
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(check, items))
    else:
        results = [check(item) for item in items]
    for sid, problem in results:
        if problem is not None:
            scan.nonconforming[sid] = problem
    return scan


def _load_embeddings(scan, cfg, tag, ids):
    path = os.path.join(scan.root, cfg.data.embeddings[tag])
    if not os.path.exists(path):
        raise InputError(f"missing embedding file for {tag}: {path}")
    emb = load_embeddings(path, tag)
    if emb.ids is None:
        order = list(scan.images)
        if len(order) != len(emb):
            raise InputError(f"{path}: {len(emb)} rows without ids for {len(order)} images")
        emb = EmbeddingSet(emb.vectors, tag, tuple(order))
    return emb.subset(ids) if ids else emb


def _qc_records(scan, cfg, ids):
    path = os.path.join(scan.root, cfg.data.qc_csv)
    if not os.path.exists(path):
        raise InputError(f"missing QC file: {path}")
    with open(path, encoding="utf-8") as fh:
        records = parse_qc_csv(fh.read(), cfg.qc.regions)
    if ids:
        wanted = set(ids)
        records = [r for r in records if r.subject_id in wanted]
    if not records:
        raise InputError(f"{path}: no QC records for the evaluated subjects")
    return records


def _region_table(cfg):
    return RegionTable.from_file(cfg.data.region_table) if cfg.data.region_table else default_region_table()


def _volumes(scan, cfg, ids):
    if cfg.data.volumes_csv:
        path = os.path.join(scan.root, cfg.data.volumes_csv)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                by_id = {r.subject_id: r for r in parse_volumes_csv(fh.read())}
            missing = [s for s in ids if s not in by_id]
            if missing:
                raise InputError(f"{path}: no volumes for subjects {missing[:5]}")
            return [by_id[s] for s in ids]
    table = _region_table(cfg)
    missing = [s for s in ids if s not in scan.labels]
    if missing:
        raise InputError(f"{scan.root}: no label map for subjects {missing[:5]}")
    return [region_volumes(read_label_map(scan.labels[s], table), s) for s in ids]


def _ms_ssim_spec(cfg):
    m = cfg.metrics
    return MsSsimSpec(scales=m.scales, window=m.window, sigma=m.sigma)


def _pairwise(paths, cfg, n_jobs, warnings):
    n = len(paths)
    if n < 2:
        warnings.append("MS-SSIM skipped: fewer than 2 volumes")
        return None
    pairs = min(cfg.metrics.num_pairs, comb(n, 2))
    return pairwise_ms_ssim(VolumeFiles(paths), pairs, cfg.metrics.seed, _ms_ssim_spec(cfg), n_jobs)


class ReferenceSet:
    """Real-set quantities shared by every model evaluated against it."""

    def __init__(self, real_dir, cfg, n_jobs=1, stages=STAGES):
        self.cfg = cfg
        self.n_jobs = n_jobs
        self.scan = scan_directory(real_dir, cfg, n_jobs)
        if not self.scan.images:
            raise InputError(f"no images found in {real_dir} matching {cfg.data.image_glob}")
        if self.scan.nonconforming:
            first = next(iter(self.scan.nonconforming.items()))
            raise InputError(
                f"{len(self.scan.nonconforming)} real volume(s) fail geometry checks, e.g. {first[0]}: {first[1]}"
            )
        self.ids = self.scan.conforming_ids
        self.paths = [self.scan.images[s] for s in self.ids]
        self._ms_ssim = None
        self.threshold = None
        self.gate = None
        self.records = None
        if "gate" in stages or "anatomy" in stages:
            self._calibrate()

    def _calibrate(self):
        q = self.cfg.qc
        self.records = _qc_records(self.scan, self.cfg, self.ids)
        if q.threshold is None:
            self.threshold = calibrate_threshold(self.records, q.target_fail, q.grid_step, q.regions)
        else:
            self.threshold = q.threshold
        self.gate_config = GateConfig(self.threshold, q.target_fail, q.min_pass_rate, q.regions)
        self.gate = gate_model(self.records, self.gate_config)

    def ms_ssim(self, warnings):
        if self._ms_ssim is None:
            self._ms_ssim = _pairwise(self.paths, self.cfg, self.n_jobs, warnings)
        return self._ms_ssim

    def passing_ids(self):
        return [r.subject_id for r in self.records if gate_mri(r, self.gate_config)[0]]


def _classic_metrics(ref, scan, ids, cfg, n_jobs, warnings):
    out = {}
    m = cfg.metrics
    if m.fid and cfg.data.embeddings:
        kernel = KernelSpec.parse(m.mmd_kernel)
        for tag in cfg.data.embeddings:
            real = _load_embeddings(ref.scan, cfg, tag, ref.ids)
            synth = _load_embeddings(scan, cfg, tag, ids)
            out[f"fid@{tag}"] = fid(synth, real)
            out[f"mmd@{tag}"] = mmd2_unbiased(synth, real, kernel)
    paths = [scan.images[s] for s in ids]
    if m.image_mmd:
        if len(paths) >= 2:
            out["image_mmd"] = image_space_mmd(
                VolumeFiles(paths), VolumeFiles(ref.paths), KernelSpec.parse(m.image_mmd_kernel)
            )
        else:
            warnings.append("image MMD skipped: fewer than 2 conforming synthetic volumes")
    if m.ms_ssim:
        synth_score = _pairwise(paths, cfg, n_jobs, warnings)
        real_score = ref.ms_ssim(warnings)
        if synth_score is not None:
            out["ms_ssim_mean"], out["ms_ssim_stddev"] = synth_score
        if real_score is not None:
            out["ms_ssim_real_mean"] = real_score[0]
        if synth_score is not None and real_score is not None:
            out["ms_ssim_gap_to_real"] = abs(synth_score[0] - real_score[0])
    return out


def evaluate_model(ref, synth_dir, model_name=None, stages=STAGES):
    """Run the protocol for one synthetic directory against a prepared reference."""
    cfg, n_jobs = ref.cfg, ref.n_jobs
    stages = tuple(stages)
    model_name = model_name or os.path.basename(os.path.normpath(synth_dir))
    warnings = []
    scan = scan_directory(synth_dir, cfg, n_jobs)
    if not scan.images:
        raise InputError(f"no images found in {synth_dir} matching {cfg.data.image_glob}")
    for sid, problem in scan.nonconforming.items():
        msg = f"skipped nonconforming synthetic volume {sid}: {problem}"
        logger.warning(msg)
        warnings.append(msg)
    ids = scan.conforming_ids

    classic = _classic_metrics(ref, scan, ids, cfg, n_jobs, warnings) if "classic" in stages else {}

    gate = distribution = effect = None
    if "gate" in stages or "anatomy" in stages:
        records = _qc_records(scan, cfg, ids)
        gate = gate_model(records, ref.gate_config)
        distribution = qc_distribution(records, cfg.qc.regions, ref.threshold)
        if not gate.assessable:
            warnings.append("model is too unreliable for anatomical assessment; no effect sizes reported")
        elif "anatomy" in stages:
            effect = _plausibility(ref, scan, records, cfg)

    provenance = {
        "toolkit_version": __version__,
        "config_sha256": cfg.sha256(),
        "seeds": {"ms_ssim_pairs": cfg.metrics.seed},
        "stages": list(stages),
        "qc_threshold": ref.threshold,
        "manifests": {"real": ref.scan.manifest(), "synthetic": scan.manifest()},
    }
    return EvaluationReport(
        model_name=model_name,
        classic=classic,
        gate=gate,
        effect_sizes=effect,
        reference_gate=ref.gate,
        qc_distribution=distribution,
        skipped={"nonconforming_synthetic": len(scan.nonconforming), "nonconforming_real": 0},
        warnings=tuple(warnings),
        provenance=provenance,
    )


def _plausibility(ref, scan, records, cfg):
    synth_ids = [r.subject_id for r in records if gate_mri(r, ref.gate_config)[0]]
    real_ids = ref.passing_ids()
    real_vols = _volumes(ref.scan, cfg, real_ids)
    synth_vols = _volumes(scan, cfg, synth_ids)
    if cfg.anatomy.fit_on == "pooled":
        fit = fit_icv([*real_vols, *synth_vols], fitted_on="pooled")
    else:
        fit = fit_icv(real_vols, fitted_on="real")
    real_res = [residualize(v, fit) for v in real_vols]
    synth_res = [residualize(v, fit) for v in synth_vols]
    return plausibility_table(real_res, synth_res, cfg.anatomy.flag_threshold)


def run_protocol(real_dir, synth_dir, config=None, model_name=None, n_jobs=1, stages=STAGES):
    """Evaluate one synthetic directory against a real reference directory.

    Order: geometry validation (real files must all conform; nonconforming
    synthetic files are skipped and counted), classic metrics, QC threshold
    calibration, model gating, and only for assessable models the
    anatomical plausibility table.
    """
    cfg = config if isinstance(config, Config) else Config.from_file(config) if config else Config()
    ref = ReferenceSet(real_dir, cfg, n_jobs, stages)
    return evaluate_model(ref, synth_dir, model_name, stages)
