"""Run configuration, artifact files and the run manifest."""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .domain import BoxDomain, MacroState
from .errors import ConfigError
from .potentials import _ALIASES, PairPotential, from_config


@dataclass
class RunConfig:
    kind: str = "ideal"
    sigma: float = 1.0
    epsilon: float = 1.0
    cutoff: Optional[float] = None
    side: float = 1.0
    sides: Optional[tuple] = None
    l_min: int = 1
    l_max: int = 4
    R0: float = 0.0
    rho_exp: float = 0.0
    grad_tol: float = 1e-10
    tail_eps: float = 1e-12
    iter_cap: int = 200
    n_cap: int = 256
    samples: int = 4000
    trials: int = 8
    batches: int = 8
    beta_ref: float = -1.0
    seed: int = 0
    n_max: int = 32
    feasible_tol: float = 1e-6
    resolution: int = 200
    out: str = "gcdual-out"

    def __post_init__(self):
        for name in ("grad_tol", "tail_eps", "feasible_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("iter_cap", "n_cap", "samples", "trials", "batches", "n_max", "resolution"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not self.beta_ref < 0:
            raise ConfigError("beta_ref must be negative")
        if self.batches < 2:
            raise ConfigError("batches must be at least 2 to estimate errors")

    def potential(self) -> PairPotential:
        kind = self.kind.strip().lower()
        kind = _ALIASES.get(kind, kind)
        cfg = {"kind": kind}
        if kind != "ideal":
            cfg["sigma"] = self.sigma
        if kind in ("square_well", "lennard_jones"):
            cfg["epsilon"] = self.epsilon
            if self.cutoff is not None:
                cfg["cutoff"] = self.cutoff
        return from_config(cfg)

    def box(self) -> BoxDomain:
        return BoxDomain(tuple(self.sides) if self.sides else (self.side,) * 3)

    def model_opts(self) -> dict:
        return {"samples": self.samples, "trials": self.trials, "batches": self.batches,
                "beta_ref": self.beta_ref, "seed": self.seed, "tail_eps": self.tail_eps,
                "n_cap": self.n_cap}

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sides"] is not None:
            d["sides"] = list(d["sides"])
        return d


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    t = str(_FIELD_TYPES[key])
    try:
        if key == "sides":
            vals = tuple(float(v) for v in raw.replace(",", " ").split())
            if len(vals) != 3:
                raise ValueError
            return vals
        if "int" in t:
            return int(raw)
        if "float" in t:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"cannot parse config value {key} = {raw!r}") from None


def read_config_file(path) -> dict:
    """key = value lines (``#`` comments); an optional [section] header is ignored."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            k = key.strip().replace("-", "_")
            if k == "potential":
                k = "kind"
            if k not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            out[k] = _coerce(k, raw)
    return out


def build_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    unknown = set(merged) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# artifacts


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


class ArtifactWriter:
    """Writes one artifact set per run and keeps ``manifest.json`` as an index."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def json(self, name: str, obj) -> Path:
        path = self.dir / name
        path.write_text(dumps(obj) + "\n")
        self.files.append(path)
        return path

    def csv(self, name: str, header, rows) -> Path:
        path = self.dir / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.files.append(path)
        return path

    def register(self, path) -> None:
        self.files.append(Path(path))

    def manifest(self, subcommand: str, config: RunConfig, status: int) -> Path:
        path = self.dir / "manifest.json"
        index = json.loads(path.read_text()) if path.exists() else {"runs": {}}
        index["runs"][subcommand] = {
            "config": config.to_dict(),
            "exit_status": status,
            "files": {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in self.files},
        }
        path.write_text(dumps(index) + "\n")
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_points_csv(path) -> list:
    """Rows of rho,ux,uy,uz,E (header optional) as MacroStates."""
    points = []
    with Path(path).open() as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row[:5]]
            except ValueError:
                continue  # header
            if len(vals) != 5:
                raise ConfigError(f"expected 5 columns rho,ux,uy,uz,E in {path}")
            points.append(MacroState(vals[0], vals[1:4], vals[4]))
    if not points:
        raise ConfigError(f"no points found in {path}")
    return points
