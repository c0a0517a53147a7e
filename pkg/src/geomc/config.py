"""Run configuration: ``key = value`` text files and their validation.

One key per line, ``#`` starts a comment. Angles accept a ``pi`` suffix
(``phi = 0.25pi``) or the ``pi/N`` form. Matrix-valued keys (``mass``,
``cov``) take ``identity``, ``diag:v1,v2,...`` or ``file:path`` (whitespace
or comma separated rows).
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import ConfigError
from .hamiltonians import HamiltonianSystem
from .samplers import SAMPLER_KINDS
from .targets import TargetModel, make_target

TARGETS = ("gaussian", "banana", "logreg")
SAMPLERS = SAMPLER_KINDS
REQUIRED_FOR_SAMPLING = ("target", "sampler", "n_samples")


@dataclass
class SamplerRunConfig:
    """Everything needed to reproduce a run.

    ``line_of`` maps each key to the line it was set on (``None`` for
    defaults and command-line overrides) so later errors can point at it.
    """

    target: str = "gaussian"
    sampler: str = "hmc"
    n_samples: int = 1000
    seed: Optional[int] = None
    dim: Optional[int] = None
    tau: float = 0.1
    L: int = 10
    phi: float = math.pi / 2
    a: float = 1.0
    mass: str = "identity"
    warmup: int = 1000
    n_chains: int = 1
    output: str = "geomc_out"
    step_sigma: Optional[float] = None
    epsilon: Optional[float] = None
    mean: Optional[tuple] = None
    cov: str = "identity"
    b: float = 0.1
    sigma1_sq: float = 100.0
    data: Optional[str] = None
    alpha: float = 1.0
    fp_tol: float = 1e-10
    fp_max_iter: int = 100
    taus: tuple = (0.2, 0.1, 0.05)
    total_time: float = 2.0
    n_phases: int = 20
    max_divergences: Optional[int] = None
    base_dir: str = field(default=".", repr=False)
    line_of: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name in ("base_dir", "line_of"):
                continue
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def error(self, key, message) -> ConfigError:
        return ConfigError(message, key=key, line=self.line_of.get(key))


def parse_real(text: str) -> float:
    """Parse a real number, allowing ``pi``, ``<x>pi`` and ``pi/<x>``."""
    t = text.strip().lower().replace(" ", "")
    if t.endswith("pi"):
        coef = t[:-2]
        if coef in ("", "+"):
            return math.pi
        if coef == "-":
            return -math.pi
        return float(coef.rstrip("*")) * math.pi
    if t.startswith("pi/"):
        return math.pi / float(t[3:])
    return float(t)


def _parse_int(text):
    value = parse_real(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _parse_list(text):
    return tuple(parse_real(v) for v in text.replace(";", ",").split(",") if v.strip())


def _parse_str(text):
    return text.strip()


def _parse_optional_int(text):
    return None if text.strip().lower() in ("", "none") else _parse_int(text)


# key -> (parser, validator or None, message)
_SCHEMA = {
    "target": (_parse_str, lambda v: v in TARGETS, f"must be one of {', '.join(TARGETS)}"),
    "sampler": (_parse_str, lambda v: v in SAMPLERS, f"must be one of {', '.join(SAMPLERS)}"),
    "n_samples": (_parse_int, lambda v: v >= 0, "must be >= 0"),
    "seed": (_parse_optional_int, lambda v: v is None or v >= 0, "must be a non-negative integer"),
    "dim": (_parse_int, lambda v: v >= 1, "must be >= 1"),
    "tau": (parse_real, lambda v: v > 0 and math.isfinite(v), "must be > 0"),
    "L": (_parse_int, lambda v: v >= 1, "must be >= 1"),
    "phi": (parse_real, math.isfinite, "must be finite"),
    "a": (parse_real, math.isfinite, "must be finite"),
    "mass": (_parse_str, None, ""),
    "warmup": (_parse_int, lambda v: v >= 0, "must be >= 0"),
    "n_chains": (_parse_int, lambda v: v >= 1, "must be >= 1"),
    "output": (_parse_str, lambda v: v != "", "must not be empty"),
    "step_sigma": (parse_real, lambda v: v >= 0 and math.isfinite(v), "must be >= 0"),
    "epsilon": (parse_real, lambda v: v >= 0 and math.isfinite(v), "must be >= 0"),
    "mean": (_parse_list, lambda v: len(v) > 0 and all(map(math.isfinite, v)), "must be a list of finite numbers"),
    "cov": (_parse_str, None, ""),
    "b": (parse_real, math.isfinite, "must be finite"),
    "sigma1_sq": (parse_real, lambda v: v > 0 and math.isfinite(v), "must be > 0"),
    "data": (_parse_str, None, ""),
    "alpha": (parse_real, lambda v: v > 0 and math.isfinite(v), "must be > 0"),
    "fp_tol": (parse_real, lambda v: v > 0, "must be > 0"),
    "fp_max_iter": (_parse_int, lambda v: v >= 1, "must be >= 1"),
    "taus": (_parse_list, lambda v: len(v) > 0 and all(t > 0 for t in v), "must be a list of positive step sizes"),
    "total_time": (parse_real, lambda v: v > 0 and math.isfinite(v), "must be > 0"),
    "n_phases": (_parse_int, lambda v: v >= 1, "must be >= 1"),
    "max_divergences": (_parse_optional_int, lambda v: v is None or v >= 0, "must be >= 0"),
}

CONFIG_KEYS = tuple(_SCHEMA)


def _set(cfg, key, raw, line):
    if key not in _SCHEMA:
        raise ConfigError(f"unknown key '{key}'", key=key, line=line)
    parser, ok, message = _SCHEMA[key]
    try:
        value = parser(raw)
    except ValueError:
        raise ConfigError(f"cannot parse value {raw.strip()!r}", key=key, line=line) from None
    if ok is not None and not ok(value):
        raise ConfigError(f"value {raw.strip()!r} out of range: {message}", key=key, line=line)
    setattr(cfg, key, value)
    cfg.line_of[key] = line


def parse_config(text: str, overrides: Optional[dict] = None, required=REQUIRED_FOR_SAMPLING, base_dir: str = ".") -> SamplerRunConfig:
    """Parse and validate a configuration.

    Args:
        text: File contents.
        overrides: ``key -> raw string`` applied after the file (later wins).
        required: Keys that must be set by the file or the overrides.
        base_dir: Directory that relative ``file:``/``data`` paths resolve against.

    Raises:
        ConfigError: naming the offending key and, when known, its line.
    """
    cfg = SamplerRunConfig(base_dir=base_dir)
    seen = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", key=key, line=lineno)
        seen[key] = lineno
        _set(cfg, key, value, lineno)
    for key, value in (overrides or {}).items():
        _set(cfg, key, str(value), None)
        seen[key] = None
    for key in required:
        if key not in seen:
            raise ConfigError("missing required key", key=key)
    return cfg


def load_config(path: str, overrides=None, required=REQUIRED_FOR_SAMPLING) -> SamplerRunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, overrides, required, base_dir=os.path.dirname(os.path.abspath(path)))


def _resolve(cfg, path):
    return path if os.path.isabs(path) else os.path.join(cfg.base_dir, path)


def load_matrix(path) -> np.ndarray:
    """Read a dense matrix with comma or whitespace separated entries."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read().replace(",", " ")
    return np.loadtxt(io.StringIO(text), ndmin=2)


def parse_matrix_spec(cfg: SamplerRunConfig, key: str, dim: int) -> np.ndarray:
    """Turn a ``mass``/``cov`` spec into a ``dim x dim`` matrix."""
    spec = getattr(cfg, key).strip()
    if spec == "identity":
        return np.eye(dim)
    try:
        if spec.startswith("file:"):
            matrix = load_matrix(_resolve(cfg, spec[5:].strip()))
        else:
            values = _parse_list(spec[5:] if spec.startswith("diag:") else spec)
            if len(values) == 1 and dim > 1:
                values = values * dim
            matrix = np.diag(values)
    except (OSError, ValueError) as exc:
        raise cfg.error(key, f"cannot read matrix spec {spec!r}: {exc}") from None
    if matrix.shape != (dim, dim):
        raise cfg.error(key, f"matrix must be {dim}x{dim}, got {matrix.shape[0]}x{matrix.shape[1]}")
    return matrix


def build_target(cfg: SamplerRunConfig) -> TargetModel:
    """Construct the configured target.

    Raises:
        ConfigError: for inconsistent target parameters.
    """
    try:
        if cfg.target == "gaussian":
            dim = cfg.dim
            if cfg.mean is not None:
                if dim is not None and dim != len(cfg.mean):
                    raise cfg.error("mean", f"has {len(cfg.mean)} entries but dim = {dim}")
                dim = len(cfg.mean)
            dim = 2 if dim is None else dim
            mean = np.zeros(dim) if cfg.mean is None else np.array(cfg.mean)
            return make_target("gaussian", mean=mean, cov=parse_matrix_spec(cfg, "cov", dim))
        if cfg.target == "banana":
            if cfg.dim not in (None, 2):
                raise cfg.error("dim", "banana target is 2-dimensional")
            return make_target("banana", b=cfg.b, sigma1_sq=cfg.sigma1_sq)
        data = None
        if cfg.data is not None:
            path = _resolve(cfg, cfg.data)
            try:
                data = np.loadtxt(path, delimiter=",", ndmin=2)
            except (OSError, ValueError) as exc:
                raise cfg.error("data", f"cannot read data file: {exc}") from None
        target = make_target("logreg", data=data, alpha=cfg.alpha)
        if cfg.dim is not None and cfg.dim != target.dim:
            raise cfg.error("dim", f"dataset has {target.dim} features but dim = {cfg.dim}")
        return target
    except ConfigError:
        raise
    except ValueError as exc:
        key = {"gaussian": "cov", "logreg": "data"}.get(cfg.target, "target")
        raise cfg.error(key, str(exc)) from None


def build_system(cfg: SamplerRunConfig, target: TargetModel) -> HamiltonianSystem:
    """Riemannian system for ``rmhmc``, Euclidean with the configured mass otherwise."""
    if cfg.sampler == "rmhmc":
        return HamiltonianSystem.riemannian(target)
    mass = parse_matrix_spec(cfg, "mass", target.dim)
    try:
        return HamiltonianSystem.euclidean(target, mass)
    except (ValueError, ArithmeticError) as exc:
        raise cfg.error("mass", str(exc)) from None


def initial_position(cfg: SamplerRunConfig, target: TargetModel) -> np.ndarray:
    """Chain start: the Gaussian mean, the banana ridge point ``(0, b sigma1_sq)``, else the origin."""
    if target.name == "gaussian":
        return np.array(target.kernel.mean, dtype=float)
    if target.name == "banana":
        return np.array([0.0, cfg.b * cfg.sigma1_sq])
    return np.zeros(target.dim)
