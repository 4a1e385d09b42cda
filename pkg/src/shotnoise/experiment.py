"""Run configured experiments and write result tables as CSV."""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .approx import (
    fidelity,
    graded_grid,
    naive_strong_noise,
    noise_frame,
    noise_sensitivity,
    purity,
    strong_noise_limit,
    strong_noise_second_order,
    weak_noise_fidelity,
)
from .config import ExperimentConfig, build_noise, build_scheme, with_value
from .noise import NoiseModel
from .propagate import MasterRHS, integrate_master
from .schemes import StirapH0
from .trajectories import average_ensemble, compare_to_master, worker_count


class NumericalFailure(RuntimeError):
    """A run that finished but broke a conservation check, or an integrator error."""


@dataclass
class ResultTable:
    name: str
    header: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


def _fmt(v):
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_csv(table, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for key in sorted(table.metadata):
            value = table.metadata[key]
            text = json.dumps(value, sort_keys=True) if isinstance(value, (dict, list)) else str(value)
            fh.write(f"# {key}: {text}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            lines.append(line)
    rows = list(csv.reader(lines))
    return ResultTable(Path(path).stem, rows[0], [[float(v) for v in r] for r in rows[1:]], meta)


# ---------------------------------------------------------------- observables

def _populations(rho):
    return list(np.real(np.diagonal(rho)))


def _coherences(rho):
    d = rho.shape[0]
    out = []
    for i, j in itertools.combinations(range(d), 2):
        out += [rho[i, j].real, rho[i, j].imag]
    return out


def _observable_header(name, dim):
    if name == "fidelity":
        return ["F"]
    if name == "purity":
        return ["purity"]
    if name == "populations":
        return [f"p{i}" for i in range(dim)]
    if name == "coherences":
        return [f"{part}_rho{i}{j}" for i, j in itertools.combinations(range(dim), 2) for part in ("re", "im")]
    raise ValueError(name)


def _observable_values(name, rho, target):
    if name == "fidelity":
        return [fidelity(rho, target)]
    if name == "purity":
        return [purity(rho)]
    if name == "populations":
        return _populations(rho)
    return _coherences(rho)


def _controls(scheme, times):
    if isinstance(scheme.h0, StirapH0):
        o12, o23 = scheme.h0.rabi(times)
        return ["t", "Omega12", "Omega23"], np.column_stack([times, o12, o23])
    om_r, om_i, delta = (np.broadcast_to(f, times.shape) for f in scheme.h0.fields(times))
    return ["t", "Omega_R", "Omega_I", "Delta"], np.column_stack([times, om_r, om_i, delta])


def _check_record(rec, where):
    if rec.failed:
        raise NumericalFailure(
            f"{where}: {rec.message}; max trace error {rec.trace_error.max():.3e}, "
            f"max hermiticity error {rec.hermiticity_error.max():.3e}, "
            f"min eigenvalue {rec.min_eigenvalue.min():.3e}"
        )
    return rec


# ---------------------------------------------------------------- point evaluation

_FRAMES = {}


def _frame_for(scheme_params, scheme, rate):
    key = (json.dumps(scheme_params, sort_keys=True), float(rate))
    if key not in _FRAMES:
        grid = graded_grid(scheme.horizon, 4001, rate)
        _FRAMES[key] = noise_frame(scheme.h0, scheme.h1, scheme.horizon, grid)
    return _FRAMES[key]


def evaluate_point(cfg, scheme_params, noise_params, rate_hint=0.0):
    """Final-time observables and requested approximations for one parameter point."""
    scheme = build_scheme(scheme_params)
    noise = build_noise(noise_params)
    rho0 = np.outer(scheme.initial_state, scheme.initial_state.conj())
    target = scheme.target(scheme.horizon)
    where = f"scheme={scheme_params}, noise={noise_params}"
    rec = _check_record(integrate_master(scheme.h0, scheme.h1, noise, rho0, scheme.horizon, cfg.integration), where)
    out = {obs: _observable_values(obs, rec.final, target) for obs in cfg.observables}
    for name in cfg.approximations:
        out[f"fidelity_{name}"] = [_approximation(name, cfg, scheme, scheme_params, noise, rho0, target, rate_hint)]
    return out


def _approximation(name, cfg, scheme, scheme_params, noise, rho0, target, rate_hint):
    if name == "weak":
        try:
            s = noise_sensitivity(scheme.h0, scheme.h1, noise, rho0, target, scheme.horizon, cfg.integration)
        except ValueError:
            return math.nan
        return weak_noise_fidelity(s.F0, s.slope, 1.0)
    if name == "naive":
        rec = _check_record(naive_strong_noise(scheme.h1, noise, rho0, scheme.horizon, cfg.integration), "naive")
        return fidelity(rec.final, target)
    if name == "limit":
        return strong_noise_limit(scheme.h1, noise, rho0, scheme.horizon, target).fidelity
    rate = max(rate_hint, MasterRHS(scheme.h0, scheme.h1, noise).max_rate(scheme.horizon))
    frame = _frame_for(scheme_params, scheme, rate)
    return strong_noise_second_order(scheme.h0, scheme.h1, noise, rho0, scheme.horizon, target, frame=frame).fidelity


def _point_job(args):
    cfg, scheme_params, noise_params, rate_hint = args
    return evaluate_point(cfg, scheme_params, noise_params, rate_hint)


def _apply(cfg, point):
    scheme, noise = dict(cfg.scheme), dict(cfg.noise)
    for axis, value in zip(cfg.sweep, point):
        section, key = axis.parameter.split(".", 1)
        if section == "scheme":
            scheme = with_value(scheme, key, value)
        else:
            noise = with_value(noise, key, value)
    return scheme, noise


def _metadata(cfg, observable):
    return {
        "shotnoise_version": __version__,
        "seed": cfg.seed,
        "observable": observable,
        "config": cfg.raw,
        "resolved": {
            "scheme": cfg.scheme,
            "noise": cfg.noise,
            "integration": {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                            for k, v in vars(cfg.integration).items()},
            "sweep": {a.parameter: [float(v) for v in a.values] for a in cfg.sweep},
        },
    }


def run_experiment(cfg: ExperimentConfig, workers=None):
    """Evaluate a configuration; returns one :class:`ResultTable` per observable (and overlay)."""
    if not cfg.sweep:
        return _run_time_series(cfg)
    workers = workers or worker_count()
    points = list(itertools.product(*[a.values for a in cfg.sweep]))
    rate_hint = _sweep_rate(cfg, points)
    jobs = []
    for point in points:
        scheme_params, noise_params = _apply(cfg, point)
        jobs.append((cfg, scheme_params, noise_params, rate_hint))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_point_job, jobs))
    else:
        results = [_point_job(j) for j in jobs]
    axes = [a.parameter for a in cfg.sweep]
    dim = build_scheme(cfg.scheme).dim
    tables = []
    names = list(cfg.observables) + [f"fidelity_{a}" for a in cfg.approximations]
    for name in names:
        header = axes + (_observable_header(name, dim) if name in cfg.observables else ["F"])
        rows = []
        for point, res in zip(points, results):
            if name == "fidelity_second_order" and point[0] < cfg.strong_from:
                continue
            rows.append([float(p) for p in point] + [float(v) for v in res[name]])
        tables.append(ResultTable(name, header, rows, _metadata(cfg, name)))
    return tables


def _sweep_rate(cfg, points):
    """Largest noise rate over a noise-only sweep, so one strong-noise grid serves every point."""
    if "second_order" not in cfg.approximations or any(a.parameter.startswith("scheme.") for a in cfg.sweep):
        return 0.0
    scheme = build_scheme(cfg.scheme)
    rates = [MasterRHS(scheme.h0, scheme.h1, build_noise(_apply(cfg, p)[1])).max_rate(scheme.horizon) for p in points]
    return float(max(rates))


def _run_time_series(cfg):
    scheme = build_scheme(cfg.scheme)
    noise = build_noise(cfg.noise)
    rho0 = np.outer(scheme.initial_state, scheme.initial_state.conj())
    times = np.linspace(0.0, scheme.horizon, cfg.integration.n_out)
    tables = []
    states = None
    if any(o != "controls" for o in cfg.observables):
        rec = integrate_master(scheme.h0, scheme.h1, noise, rho0, scheme.horizon, cfg.integration, times)
        states = _check_record(rec, f"scheme={cfg.scheme}, noise={cfg.noise}").states
    for name in cfg.observables:
        if name == "controls":
            header, data = _controls(scheme, times)
            rows = data.tolist()
        else:
            header = ["t"] + _observable_header(name, scheme.dim)
            rows = [[t] + _observable_values(name, r, scheme.target(t)) for t, r in zip(times, states)]
        tables.append(ResultTable(name, header, rows, _metadata(cfg, name)))
    return tables


def write_tables(tables, out_dir, prefix=""):
    return [write_csv(t, Path(out_dir) / f"{prefix}{t.name}.csv") for t in tables]


# ---------------------------------------------------------------- Monte-Carlo validation

def validate_experiment(cfg: ExperimentConfig, n_traj, seed, workers=None):
    """Trajectory average against the master equation for the configured point."""
    scheme = build_scheme(cfg.scheme)
    noise = build_noise(cfg.noise)
    if not isinstance(noise, NoiseModel):
        raise TypeError("validation needs a Poisson noise model (nu and a distribution)")
    rho0 = np.outer(scheme.initial_state, scheme.initial_state.conj())
    rec = _check_record(integrate_master(scheme.h0, scheme.h1, noise, rho0, scheme.horizon, cfg.integration), "master")
    ens = average_ensemble(scheme.h0, scheme.h1, noise, scheme.initial_state, scheme.horizon, n_traj, seed,
                           cfg.integration, workers=workers)
    report = compare_to_master(ens, rec)
    dist = np.linalg.norm(ens.mean_state - rec.states, axis=(1, 2))
    rows = np.column_stack([ens.times, dist, ens.std_error, report.deviation]).tolist()
    meta = _metadata(cfg, "validation")
    meta.update({"seed": seed, "n_traj": n_traj, "passed": report.passed,
                 "fraction_within": report.fraction_within, "max_deviation": report.max_deviation})
    table = ResultTable("validation", ["t", "distance", "std_error", "deviation"], rows, meta)
    return report, table
