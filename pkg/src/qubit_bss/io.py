"""Configuration and file formats.

Dataset format (version 1)
--------------------------
``<name>.csv`` with header ``t,p1,p2,p3`` and one row per sample; floats are
written with ``repr`` (shortest string that round-trips to the same double).
A sidecar ``<name>.meta.json`` stores the format version, the float format,
and the generation metadata (``v_true``, ``seed``, ``n``, prior config and
digest) when known.

Config format
-------------
One JSON object with the optional sections ``priors``, ``search`` and
``tolerances`` plus the generation keys ``v_true``, ``n``, ``seed``,
``noise_scale`` and ``noise_seed``.  Unknown keys are rejected.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .estimator import SearchOptions
from .likelihood import SampleSet
from .priors import PriorConfig
from .validation import AUDIT_MIN_COS, CRITICAL_EXCLUSION, FD_STEP, REL_FLOOR

FORMAT_VERSION = 1
FLOAT_FORMAT = "repr-shortest-roundtrip"
DATASET_HEADER = ("t", "p1", "p2", "p3")
AUDIT_HEADER = ("v", "variant", "analytic", "fd", "abs_err", "rel_err", "skipped", "error")
SCAN_HEADER = ("v", "logl", "dlogl_dv", "excluded", "error")


class DatasetIOError(OSError):
    """Unreadable, empty or malformed dataset file."""


@dataclass(frozen=True)
class Tolerances:
    fd_step: float = FD_STEP
    audit_min_cos: float = AUDIT_MIN_COS
    rel_floor: float = REL_FLOOR
    critical_exclusion: float = CRITICAL_EXCLUSION

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and val >= 0):
                raise ConfigError(f"tolerance {name} must be a non-negative number, got {val!r}")
        if self.fd_step <= 0:
            raise ConfigError("fd_step must be positive")


@dataclass(frozen=True)
class Config:
    priors: PriorConfig = field(default_factory=PriorConfig)
    search: SearchOptions = field(default_factory=SearchOptions)
    tolerances: Tolerances = field(default_factory=Tolerances)
    v_true: float = 0.6
    n: int = 500
    seed: int = 0
    noise_scale: float = 0.0
    noise_seed: int = 1


_TOP_KEYS = {"priors", "search", "tolerances", "v_true", "n", "seed", "noise_scale", "noise_seed"}


def _section(data, name, cls):
    body = data.get(name, {})
    if not isinstance(body, dict):
        raise ConfigError(f"section {name!r} must be a JSON object")
    if hasattr(cls, "from_dict"):
        return cls.from_dict(body)
    unknown = set(body) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    return cls(**body)


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = Config(
            priors=_section(data, "priors", PriorConfig),
            search=_section(data, "search", SearchOptions),
            tolerances=_section(data, "tolerances", Tolerances),
            **{k: data[k] for k in ("v_true", "n", "seed", "noise_scale", "noise_seed") if k in data},
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if not isinstance(cfg.n, int) or isinstance(cfg.n, bool) or cfg.n < 1:
        raise ConfigError(f"n must be a positive integer, got {cfg.n!r}")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise ConfigError(f"seed must be an integer, got {cfg.seed!r}")
    if not (isinstance(cfg.v_true, (int, float)) and 0.0 < cfg.v_true < 1.0):
        raise ConfigError(f"v_true must lie in (0, 1), got {cfg.v_true!r}")
    if not (isinstance(cfg.noise_scale, (int, float)) and cfg.noise_scale >= 0):
        raise ConfigError(f"noise_scale must be non-negative, got {cfg.noise_scale!r}")
    return cfg


def load_config(path):
    """Read and validate a JSON config; ``None`` gives the defaults."""
    if path is None:
        return Config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def _fmt(x):
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_dataset(data, path, priors=None):
    """Write the CSV and its metadata sidecar; output is byte-deterministic."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DATASET_HEADER)
        for t, row in enumerate(data.observations):
            writer.writerow([t, *(repr(float(p)) for p in row)])
    meta = {"format_version": FORMAT_VERSION, "float_format": FLOAT_FORMAT, **data.meta}
    if priors is not None:
        meta["priors"] = priors.to_dict()
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def read_dataset(path):
    """Read a dataset CSV (and its sidecar, if present) into a SampleSet.

    Raises:
        DatasetIOError: the file is missing, empty, or malformed.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DatasetIOError(f"cannot read dataset {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != DATASET_HEADER:
        raise DatasetIOError(f"dataset {path} must start with header {','.join(DATASET_HEADER)}")
    body = rows[1:]
    if not body:
        raise DatasetIOError(f"dataset {path} has no rows")
    try:
        obs = np.array([[float(c) for c in r[1:]] for r in body], dtype=float)
    except ValueError as exc:
        raise DatasetIOError(f"dataset {path} has a non-numeric value: {exc}") from exc
    if obs.ndim != 2 or obs.shape[1] != 3:
        raise DatasetIOError(f"dataset {path} rows must have 4 fields")
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        version = meta.pop("format_version", FORMAT_VERSION)
        meta.pop("float_format", None)
        meta.pop("priors", None)
        if version != FORMAT_VERSION:
            raise DatasetIOError(f"unsupported dataset format version {version}")
    try:
        return SampleSet(obs, meta=meta)
    except DomainError as exc:
        raise DatasetIOError(f"dataset {path} holds invalid observations: {exc}") from exc


def parse_grid(text):
    """Parse ``"lo:hi:step"`` into an inclusive, rounded list of couplings."""
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"grid must look like lo:hi:step, got {text!r}") from exc
    if step <= 0 or hi < lo:
        raise ConfigError(f"grid needs step > 0 and hi >= lo, got {text!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(count)]


def write_rows(fh, header, rows):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) if x is not None else "" for x in row])


def audit_rows(reports):
    return [(r.v, r.variant, r.analytic, r.fd, r.abs_err, r.rel_err, r.skipped, r.error) for r in reports]


def scan_rows(points):
    return [(p.v, p.logl, p.grad, p.excluded, p.error) for p in points]
