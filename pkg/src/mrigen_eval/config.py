"""Single-file INI configuration for the evaluation protocol."""

import configparser
import hashlib
from dataclasses import asdict, dataclass, field, fields

from .exceptions import InputError
from .qc import DEFAULT_QC_REGIONS


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _ints(text):
    return tuple(int(x) for x in text.split(","))


def _names(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _mapping(text):
    """``tag=path, tag2=path2`` -> ordered dict."""
    out = {}
    for item in _names(text):
        if "=" not in item:
            raise InputError(f"expected tag=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "yes", "true", "on"):
        return True
    if lowered in ("0", "no", "false", "off"):
        return False
    raise InputError(f"expected a boolean, got {text!r}")


def _optional_float(text):
    return None if text.strip() in ("", "none", "calibrate") else float(text)


@dataclass(frozen=True)
class DataConfig:
    image_glob: str = "images/*.nii*"
    label_glob: str = "labels/*.nii*"
    label_suffix: str = ""
    qc_csv: str = "qc.csv"
    volumes_csv: str = ""
    embeddings: dict = field(default_factory=dict)
    region_table: str = ""


@dataclass(frozen=True)
class GeometryConfig:
    shape: tuple = (144, 192, 144)
    spacing: tuple = (1.0, 1.0, 1.0)
    tol: float = 1e-3


@dataclass(frozen=True)
class MetricsConfig:
    fid: bool = True
    mmd_kernel: str = "gaussian"
    image_mmd: bool = True
    image_mmd_kernel: str = "linear"
    ms_ssim: bool = True
    num_pairs: int = 1000
    seed: int = 0
    scales: int = 5
    window: int = 11
    sigma: float = 1.5


@dataclass(frozen=True)
class QCConfig:
    threshold: float = None
    target_fail: float = 0.05
    grid_step: float = 0.01
    min_pass_rate: float = None
    regions: tuple = DEFAULT_QC_REGIONS


@dataclass(frozen=True)
class AnatomyConfig:
    flag_threshold: float = 0.8
    fit_on: str = "real"

    def __post_init__(self):
        if self.fit_on not in ("real", "pooled"):
            raise InputError(f"anatomy.fit_on must be 'real' or 'pooled', got {self.fit_on!r}")


_PARSERS = {
    ("geometry", "shape"): _ints,
    ("geometry", "spacing"): _floats,
    ("data", "embeddings"): _mapping,
    ("qc", "regions"): _names,
    ("qc", "threshold"): _optional_float,
    ("qc", "min_pass_rate"): _optional_float,
}


@dataclass(frozen=True)
class Config:
    data: DataConfig = field(default_factory=DataConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    qc: QCConfig = field(default_factory=QCConfig)
    anatomy: AnatomyConfig = field(default_factory=AnatomyConfig)

    @classmethod
    def from_text(cls, text):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise InputError(f"invalid config: {exc}") from None
        sections = {}
        for f in fields(cls):
            section_cls = f.default_factory
            kwargs = {}
            if parser.has_section(f.name):
                known = {sf.name: sf for sf in fields(section_cls)}
                for key, raw in parser.items(f.name):
                    if key not in known:
                        raise InputError(f"unknown config key [{f.name}] {key}")
                    kwargs[key] = _convert(f.name, key, raw, known[key])
            sections[f.name] = section_cls(**kwargs)
        unknown = set(parser.sections()) - {f.name for f in fields(cls)}
        if unknown:
            raise InputError(f"unknown config sections {sorted(unknown)}")
        return cls(**sections)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None

    def canonical_text(self):
        """Resolved configuration, defaults included, in a stable text form."""
        lines = []
        for name, section in asdict(self).items():
            lines.append(f"[{name}]")
            for key, value in section.items():
                if isinstance(value, dict):
                    value = ", ".join(f"{k}={v}" for k, v in value.items())
                elif isinstance(value, tuple):
                    value = ",".join(str(v) for v in value)
                lines.append(f"{key} = {'' if value is None else value}")
            lines.append("")
        return "\n".join(lines)

    def sha256(self):
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()


def _convert(section, key, raw, spec_field):
    parser = _PARSERS.get((section, key))
    if parser is not None:
        return parser(raw)
    default = spec_field.default
    try:
        if isinstance(default, bool):
            return _bool(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise InputError(f"[{section}] {key}: cannot parse {raw!r}") from None
    return raw.strip()
