"""Monte-Carlo unravelling: unitary evolution interrupted by Poisson-timed kicks.

A single realization evolves with H0 between strikes and is hit by
A_xi = exp(-i xi H1(t_i)) at each strike time t_i.  Averaging many
realizations reproduces the master-equation solution, which is what
:func:`compare_to_master` checks.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import numpy as np

from .noise import NoiseModel, sample_strikes, trajectory_rng, Strikes
from .propagate import IntegrationConfig, PropagatorPath, integrate_unitary, output_times
from .qcore import as_density_matrix, as_time_dependent, unitary_kick

WORKERS_ENV = "SHOTNOISE_WORKERS"
SIGMA_LIMIT = 3.0
PASS_FRACTION = 0.99
SE_FLOOR = 1e-12
ZERO_VARIANCE_TOL = 1e-7  # master-equation integration error at default tolerances is ~1e-9


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray  # density matrices


@dataclass
class TrajectoryEnsemble:
    n_traj: int
    seed: int
    times: np.ndarray
    mean_state: np.ndarray
    std_error: np.ndarray
    elementwise_error: np.ndarray


@dataclass
class ComparisonReport:
    deviation: np.ndarray
    max_deviation: float
    fraction_within: float
    elementwise_fraction: float
    passed: bool

    def summary(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}: {100 * self.fraction_within:.1f}% of output times within "
                f"{SIGMA_LIMIT:g} standard errors (max deviation {self.max_deviation:.3g} SE)")


def _state_factor(state, dim):
    """Matrix X with rho0 = X X^dagger (a column for kets, weighted eigenvectors otherwise)."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        if state.shape[0] != dim:
            raise ValueError("initial state dimension does not match the Hamiltonian")
        return (state / np.linalg.norm(state))[:, None]
    rho = as_density_matrix(state)
    if rho.shape[0] != dim:
        raise ValueError("initial state dimension does not match the Hamiltonian")
    w, v = np.linalg.eigh(rho)
    keep = w > 1e-14
    return v[:, keep] * np.sqrt(w[keep])


def _check_strikes(strikes, horizon):
    times = np.asarray(strikes.times if isinstance(strikes, Strikes) else [s[0] for s in strikes], float)
    xis = np.asarray(strikes.strengths if isinstance(strikes, Strikes) else [s[1] for s in strikes], float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] <= 0.0 or times[-1] >= horizon):
        raise ValueError("strike times must be sorted and inside (0, horizon)")
    return times, xis


def run_trajectory(h0, h1, strikes, state, horizon, cfg=None, times=None):
    """Evolve one noise realization, integrating H0 piecewise between strikes."""
    cfg = cfg or IntegrationConfig()
    h0 = as_time_dependent(h0)
    h1 = as_time_dependent(h1)
    t_strike, xis = _check_strikes(strikes, horizon)
    grid = output_times(horizon, cfg, times)
    x = _state_factor(state, h0.dim)
    out = np.empty((grid.size, h0.dim, h0.dim), dtype=complex)
    out[0] = x @ x.conj().T
    now, k = 0.0, 0
    for j in range(1, grid.size):
        while k < t_strike.size and t_strike[k] <= grid[j]:
            x = integrate_unitary(h0, np.eye(h0.dim), now, t_strike[k], cfg).propagator @ x
            x = unitary_kick(h1(t_strike[k]), xis[k]) @ x
            now, k = t_strike[k], k + 1
        x = integrate_unitary(h0, np.eye(h0.dim), now, grid[j], cfg).propagator @ x
        now = grid[j]
        out[j] = x @ x.conj().T
    return TrajectoryRecord(grid, out)


def _kick_batch(h1, times, xis):
    """exp(-i xi H1(t)) for arrays of strike times and strengths."""
    e, v = np.linalg.eigh(h1.stack(times))
    phase = np.exp(-1j * xis[:, None] * e)
    return (v * phase[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))


def _interaction_states(path, h1, model, x0, horizon, seed, indices, grid):
    """Interaction-picture factors U0(t)^dagger X(t) at the output times, one block per trajectory."""
    strikes = [sample_strikes(model, horizon, trajectory_rng(seed, i)) for i in indices]
    n = len(indices)
    counts = np.array([s.times.size for s in strikes])
    kmax = int(counts.max()) if n else 0
    d, r = x0.shape
    # after-kick states, indexed by the number of kicks applied so far
    states = np.empty((n, kmax + 1, d, r), dtype=complex)
    states[:, 0] = x0
    current = np.broadcast_to(x0, (n, d, r)).copy()
    if kmax:
        all_t = np.concatenate([s.times for s in strikes])
        all_xi = np.concatenate([s.strengths for s in strikes])
        u = path(all_t)
        kicks = np.conj(np.swapaxes(u, 1, 2)) @ _kick_batch(h1, all_t, all_xi) @ u
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        for k in range(kmax):
            live = np.nonzero(counts > k)[0]
            current[live] = kicks[start[live] + k] @ current[live]
            states[:, k + 1] = current
    applied = np.stack([np.searchsorted(s.times, grid, side="right") for s in strikes]) if n else None
    return states[np.arange(n)[:, None], applied] if n else np.zeros((0, grid.size, d, r), complex)


def _worker(args):
    h0, h1, model, x0, horizon, seed, indices, grid, cfg = args
    path = PropagatorPath(h0, horizon, cfg)
    return _interaction_states(path, h1, model, x0, horizon, seed, indices, grid)


def worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def average_ensemble(h0, h1, model, state, horizon, n_traj, seed, cfg=None, times=None, workers=None):
    """Sample mean and standard error of ``n_traj`` realizations.

    Trajectory i draws from its own stream (seed, i), so results do not depend
    on the number of workers or the order in which chunks finish.
    """
    if n_traj < 2:
        raise ValueError("need at least two trajectories")
    if not isinstance(model, NoiseModel):
        raise TypeError("trajectory sampling needs a NoiseModel with a strike distribution")
    cfg = cfg or IntegrationConfig()
    h0 = as_time_dependent(h0)
    h1 = as_time_dependent(h1)
    grid = output_times(horizon, cfg, times)
    x0 = _state_factor(state, h0.dim)
    workers = workers or worker_count()
    chunks = np.array_split(np.arange(n_traj), min(workers, n_traj))
    jobs = [(h0, h1, model, x0, horizon, seed, c, grid, cfg) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_worker, jobs))
    else:
        parts = [_worker(j) for j in jobs]
    xi = np.concatenate(parts)  # (n_traj, n_t, d, r)
    rho = xi @ np.conj(np.swapaxes(xi, 2, 3))
    mean = rho.mean(axis=0)
    var = np.var(rho.real, axis=0, ddof=1) + np.var(rho.imag, axis=0, ddof=1)
    u = PropagatorPath(h0, horizon, cfg)(grid)
    mean = u @ mean @ np.conj(np.swapaxes(u, 1, 2))
    # the Frobenius norm of the elementwise variance is invariant under the frame change
    std_error = np.sqrt(var.sum(axis=(1, 2)) / n_traj)
    elementwise = _elementwise_error(u, rho, n_traj)
    return TrajectoryEnsemble(n_traj, int(seed), grid, mean, std_error, elementwise)


def _elementwise_error(u, rho, n):
    lab = u[None] @ rho @ np.conj(np.swapaxes(u, 1, 2))[None]
    return np.sqrt((np.var(lab.real, axis=0, ddof=1) + np.var(lab.imag, axis=0, ddof=1)) / n)


def compare_to_master(ensemble, record, sigma=SIGMA_LIMIT, fraction=PASS_FRACTION):
    """Normalized deviation of the ensemble mean from a master-equation solution."""
    if ensemble.times.shape != record.times.shape or not np.allclose(ensemble.times, record.times, rtol=0, atol=1e-12):
        raise ValueError("ensemble and master solution are on different time grids")
    diff = ensemble.mean_state - record.states
    dist = np.linalg.norm(diff, axis=(1, 2))
    # errors at rounding level count as zero variance
    se = np.where(ensemble.std_error > SE_FLOOR, ensemble.std_error, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.where(se > 0, dist / np.where(se > 0, se, 1.0), np.where(dist < ZERO_VARIANCE_TOL, 0.0, np.inf))
    within = float(np.mean(dev <= sigma))
    ew = ensemble.elementwise_error
    ok = np.abs(diff) <= sigma * ew + ZERO_VARIANCE_TOL
    return ComparisonReport(dev, float(np.max(dev)), within, float(np.mean(ok)), within >= fraction)
