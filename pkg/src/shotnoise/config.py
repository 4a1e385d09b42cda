"""Experiment configuration: TOML sections mapped onto schemes, noise and integrator settings."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .noise import Gaussian, Laplace, NoiseError, NoiseModel, PointMass, TwoLevelCoefficients
from .propagate import IntegrationConfig
from .schemes import phase_changing_scheme, rap_scheme, stirap_scheme

OBSERVABLES = ("fidelity", "purity", "populations", "coherences", "controls")
APPROXIMATIONS = ("weak", "naive", "second_order", "limit")

SCHEME_PARAMS = {
    "phase": {"omega": 0.4, "T": 20.0},
    "rap": {"delta0": 1.0, "T": 20.0, "h1": "same_as_h0", "c": 1.0},
    "stirap": {"T": 200.0, "tau": 0.1, "h1": "same_as_h0"},
}
DISTRIBUTIONS = {"gaussian": ("sigma", "mu"), "laplace": ("A",), "point_mass": ("value",)}
NOISE_KEYS = {"J", "D", "nu", "distribution", "sigma", "mu", "A", "value"}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class SweepAxis:
    parameter: str
    values: np.ndarray


@dataclass
class ExperimentConfig:
    scheme: dict
    noise: dict
    integration: IntegrationConfig
    observables: tuple = ("fidelity",)
    approximations: tuple = ()
    strong_from: float = 0.0
    sweep: list = field(default_factory=list)
    seed: int = 0
    raw: dict = field(default_factory=dict)

    @property
    def scheme_id(self):
        return self.scheme["id"]


def _number(value, path, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and value <= 0:
        raise ConfigError(path, "must be positive")
    if nonneg and value < 0:
        raise ConfigError(path, "must be non-negative")
    return value


def _check_keys(section, allowed, path):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown field")


def _scheme_section(raw):
    if not isinstance(raw, dict):
        raise ConfigError("scheme", "missing section")
    sid = raw.get("id")
    if sid not in SCHEME_PARAMS:
        raise ConfigError("scheme.id", f"expected one of {sorted(SCHEME_PARAMS)}, got {sid!r}")
    params = dict(SCHEME_PARAMS[sid])
    _check_keys(raw, set(params) | {"id"}, "scheme")
    for key, value in raw.items():
        if key == "id":
            continue
        if key == "h1":
            if not isinstance(value, str):
                raise ConfigError("scheme.h1", "expected a variant name")
            params[key] = value
        else:
            params[key] = _number(value, f"scheme.{key}")
    if params["T"] <= 0:
        raise ConfigError("scheme.T", "must be positive")
    if sid == "stirap" and not 0.0 < params["tau"] < 0.5:
        raise ConfigError("scheme.tau", "must lie in (0, 1/2)")
    if sid == "phase" and params["omega"] < 0:
        raise ConfigError("scheme.omega", "must be non-negative")
    if sid == "rap" and params["delta0"] < 0:
        raise ConfigError("scheme.delta0", "must be non-negative")
    params["id"] = sid
    return params


def _noise_section(raw, scheme_id):
    if not isinstance(raw, dict):
        raise ConfigError("noise", "missing section")
    _check_keys(raw, NOISE_KEYS, "noise")
    two_level = "J" in raw or "D" in raw
    poisson = "nu" in raw or "distribution" in raw
    if two_level == poisson:
        raise ConfigError("noise", "give exactly one of (J, D) or (nu, distribution)")
    out = {}
    if two_level:
        if scheme_id == "stirap":
            raise ConfigError("noise", "(J, D) coefficients only describe two-level systems")
        out["J"] = _number(raw.get("J", 0.0), "noise.J")
        out["D"] = _number(raw.get("D", 0.0), "noise.D", nonneg=True)
        return out
    out["nu"] = _number(raw.get("nu", 0.0), "noise.nu", nonneg=True)
    dist = raw.get("distribution", "gaussian")
    if dist not in DISTRIBUTIONS:
        raise ConfigError("noise.distribution", f"expected one of {sorted(DISTRIBUTIONS)}, got {dist!r}")
    out["distribution"] = dist
    allowed = DISTRIBUTIONS[dist]
    for key in ("sigma", "mu", "A", "value"):
        if key in raw and key not in allowed:
            raise ConfigError(f"noise.{key}", f"not a parameter of the {dist} distribution")
    if dist == "gaussian":
        out["sigma"] = _number(raw.get("sigma", 1.0), "noise.sigma", positive=True)
        out["mu"] = _number(raw.get("mu", 0.0), "noise.mu")
    elif dist == "laplace":
        out["A"] = _number(raw.get("A", 1.0), "noise.A", positive=True)
    else:
        out["value"] = _number(raw.get("value", 1.0), "noise.value")
    return out


def _integration_section(raw):
    raw = raw or {}
    names = {f.name for f in fields(IntegrationConfig)}
    _check_keys(raw, names, "integration")
    kwargs = {}
    for key, value in raw.items():
        if key == "method":
            if not isinstance(value, str):
                raise ConfigError("integration.method", "expected a string")
            kwargs[key] = value
        elif key == "n_out":
            if not isinstance(value, int) or value < 2:
                raise ConfigError("integration.n_out", "expected an integer >= 2")
            kwargs[key] = value
        else:
            kwargs[key] = _number(value, f"integration.{key}", positive=True)
    try:
        return IntegrationConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError("integration", str(exc)) from None


def _axis_values(raw, path):
    if "values" in raw:
        vals = raw["values"]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"{path}.values", "expected a non-empty list")
        return np.array([_number(v, f"{path}.values") for v in vals])
    if "log_start" in raw:
        num = raw.get("num")
        if not isinstance(num, int) or num < 1:
            raise ConfigError(f"{path}.num", "expected a positive integer")
        return np.logspace(_number(raw["log_start"], f"{path}.log_start"),
                           _number(raw.get("log_stop"), f"{path}.log_stop"), num)
    if "start" in raw:
        num = raw.get("num")
        if not isinstance(num, int) or num < 1:
            raise ConfigError(f"{path}.num", "expected a positive integer")
        return np.linspace(_number(raw["start"], f"{path}.start"), _number(raw.get("stop"), f"{path}.stop"), num)
    raise ConfigError(path, "give values, (log_start, log_stop, num) or (start, stop, num)")


def _sweep_section(raw, scheme, noise):
    if raw is None:
        return []
    axes = raw.get("axes") if isinstance(raw, dict) else None
    if not isinstance(axes, list) or not 1 <= len(axes) <= 2:
        raise ConfigError("sweep.axes", "expected a list of one or two axes")
    out = []
    for i, ax in enumerate(axes):
        path = f"sweep.axes[{i}]"
        if not isinstance(ax, dict):
            raise ConfigError(path, "expected a table")
        _check_keys(ax, {"parameter", "values", "log_start", "log_stop", "start", "stop", "num"}, path)
        name = ax.get("parameter")
        if not isinstance(name, str) or "." not in name:
            raise ConfigError(f"{path}.parameter", "expected 'scheme.<field>' or 'noise.<field>'")
        section, key = name.split(".", 1)
        target = {"scheme": scheme, "noise": noise}.get(section)
        if target is None or key not in target or key in ("id", "h1", "distribution"):
            raise ConfigError(f"{path}.parameter", f"{name!r} is not a numeric field of this configuration")
        out.append(SweepAxis(name, _axis_values(ax, path)))
    return out


def _outputs_section(raw):
    raw = raw or {}
    _check_keys(raw, {"observables", "approximations", "strong_from"}, "outputs")
    obs = tuple(raw.get("observables", ["fidelity"]))
    for o in obs:
        if o not in OBSERVABLES:
            raise ConfigError("outputs.observables", f"unknown observable {o!r}")
    approx = tuple(raw.get("approximations", []))
    for a in approx:
        if a not in APPROXIMATIONS:
            raise ConfigError("outputs.approximations", f"unknown approximation {a!r}")
    strong_from = _number(raw.get("strong_from", 0.0), "outputs.strong_from", nonneg=True)
    return obs, approx, strong_from


def parse_config(raw):
    """Validate a configuration mapping (as loaded from TOML) into an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a table")
    _check_keys(raw, {"scheme", "noise", "integration", "outputs", "sweep", "seed"}, "<root>")
    scheme = _scheme_section(raw.get("scheme"))
    noise = _noise_section(raw.get("noise"), scheme["id"])
    integration = _integration_section(raw.get("integration"))
    obs, approx, strong_from = _outputs_section(raw.get("outputs"))
    sweep = _sweep_section(raw.get("sweep"), scheme, noise)
    if approx and not sweep:
        raise ConfigError("outputs.approximations", "approximations are reported against a sweep axis")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "expected a non-negative integer")
    cfg = ExperimentConfig(scheme, noise, integration, obs, approx, strong_from, sweep, seed, copy.deepcopy(raw))
    # construct once so parameter errors surface as validation failures
    try:
        build_scheme(scheme)
    except ValueError as exc:
        raise ConfigError("scheme.h1", str(exc)) from None
    try:
        build_noise(noise)
    except NoiseError as exc:
        raise ConfigError("noise", str(exc)) from None
    _check_sweep_points(cfg)
    return cfg


def _check_sweep_points(cfg):
    strong = {"second_order", "limit"} & set(cfg.approximations)
    base = [("scheme", None, cfg.scheme, cfg.noise)]
    for i, axis in enumerate(cfg.sweep):
        section, key = axis.parameter.split(".", 1)
        for v in axis.values:
            scheme = with_value(cfg.scheme, key, v) if section == "scheme" else cfg.scheme
            noise = with_value(cfg.noise, key, v) if section == "noise" else cfg.noise
            base.append((section, f"sweep.axes[{i}].values", scheme, noise))
    for section, path, scheme, noise in base:
        try:
            _scheme_section({k: v for k, v in scheme.items()})
            model = build_noise(_noise_section({k: v for k, v in noise.items()}, scheme["id"]))
        except ConfigError as exc:
            raise ConfigError(path or exc.path, str(exc)) from None
        except NoiseError as exc:
            raise ConfigError(path or "noise", str(exc)) from None
        if strong and not model.symmetric:
            raise ConfigError("outputs.approximations", "strong-noise approximations need a symmetric distribution")
    if "controls" in cfg.observables and cfg.sweep:
        raise ConfigError("outputs.observables", "controls are a time series and cannot be swept")
    return cfg


def load_config(path):
    """Read a TOML config, or the config embedded in a result CSV's metadata."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("<file>", f"{path} does not exist")
    if path.suffix == ".csv":
        for line in path.read_text().splitlines():
            if line.startswith("# config: "):
                return parse_config(json.loads(line[len("# config: "):]))
        raise ConfigError("<file>", "CSV file has no '# config:' metadata line")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"TOML syntax error: {exc}") from None
    return parse_config(raw)


def build_scheme(params):
    p = dict(params)
    sid = p.pop("id")
    if sid == "phase":
        return phase_changing_scheme(p["omega"], p["T"])
    if sid == "rap":
        return rap_scheme(p["delta0"], p["T"], p["h1"], p["c"])
    return stirap_scheme(p["T"], p["tau"], p["h1"])


def build_noise(params):
    if "D" in params:
        return TwoLevelCoefficients(params["J"], params["D"])
    dist = params["distribution"]
    if dist == "gaussian":
        d = Gaussian(params["sigma"], params["mu"])
    elif dist == "laplace":
        d = Laplace(params["A"])
    else:
        d = PointMass(params["value"])
    return NoiseModel(params["nu"], d)


def with_value(params, key, value):
    out = dict(params)
    out[key] = float(value)
    return out


__all__ = [
    "ConfigError", "ExperimentConfig", "SweepAxis", "parse_config", "load_config",
    "build_scheme", "build_noise", "with_value", "OBSERVABLES", "APPROXIMATIONS",
]
