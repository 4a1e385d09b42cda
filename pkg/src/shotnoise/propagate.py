"""Time integration of the master equation and of the noiseless problem."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .liouvillian import adjoint_action, apply_L1, eigenbasis_rhs, frame_generator
from .noise import NoiseModel, TwoLevelCoefficients
from .qcore import (
    ConstantOperator,
    as_density_matrix,
    as_time_dependent,
    frame_connection,
    track_eigenframe,
)


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegrationConfig:
    """Integrator settings.

    ``method`` is a :func:`scipy.integrate.solve_ivp` method name or ``"auto"``,
    which uses DOP853 unless the noise makes the problem stiff, then Radau.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = np.inf
    initial_step: Optional[float] = None
    n_out: int = 201
    method: str = "auto"
    trace_tol: float = 1e-8
    hermiticity_tol: float = 1e-10
    positivity_tol: float = 1e-7
    stiff_steps: float = 1e3

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.max_step > 0):
            raise ValueError("tolerances and max_step must be positive")
        if self.n_out < 2:
            raise ValueError("need at least two output times")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class PropagationRecord:
    times: np.ndarray
    states: np.ndarray
    trace_error: np.ndarray
    hermiticity_error: np.ndarray
    min_eigenvalue: np.ndarray
    method: str = ""
    nfev: int = 0
    failed: bool = False
    breach_time: Optional[float] = None
    message: str = ""

    @property
    def final(self):
        return self.states[-1]


def output_times(horizon, cfg, times=None):
    if times is not None:
        times = np.asarray(times, dtype=float)
        if times[0] != 0.0 or abs(times[-1] - horizon) > 1e-12 * max(1.0, horizon):
            raise ValueError("output grid must span [0, horizon]")
        return times
    return np.linspace(0.0, horizon, cfg.n_out)


def monitor(times, states, cfg):
    """Check conservation laws at each recorded time; symmetrize tiny asymmetries."""
    states = np.array(states)
    trace_err = np.abs(np.trace(states, axis1=1, axis2=2) - 1.0)
    asym = np.max(np.abs(states - np.conj(np.swapaxes(states, 1, 2))), axis=(1, 2))
    small = asym < cfg.hermiticity_tol
    states[small] = 0.5 * (states[small] + np.conj(np.swapaxes(states[small], 1, 2)))
    min_eig = np.linalg.eigvalsh(0.5 * (states + np.conj(np.swapaxes(states, 1, 2))))[:, 0]
    bad = (trace_err > cfg.trace_tol) | ~small | (min_eig < -cfg.positivity_tol)
    failed = bool(np.any(bad))
    breach = float(times[np.argmax(bad)]) if failed else None
    return states, trace_err, asym, min_eig, failed, breach


class MasterRHS:
    """d rho/dt = -i[H0, rho] + L1(rho) evaluated at arbitrary t."""

    def __init__(self, h0, h1, noise, kappa=1.0):
        self.h0 = as_time_dependent(h0)
        self.h1 = as_time_dependent(h1)
        self.noise = noise
        self.kappa = kappa
        self.dim = self.h0.dim
        self.nfev = 0
        self._static = None
        if isinstance(self.h1, ConstantOperator) and isinstance(noise, NoiseModel):
            e, v = np.linalg.eigh(self.h1.matrix)
            self._static = (e, v, kappa * noise.betas(e))

    def _h1(self, t, h0):
        return h0 if self.h1 is self.h0 else self.h1(t)

    def rho_dot(self, t, rho):
        self.nfev += 1
        h0 = self.h0(t)
        out = -1j * (h0 @ rho - rho @ h0)
        if self.noise is None or self.kappa == 0.0:
            return out
        if isinstance(self.noise, TwoLevelCoefficients):
            h1 = self._h1(t, h0)
            c = h1 @ rho - rho @ h1
            return out - 1j * self.kappa * self.noise.J * c - self.kappa * self.noise.D * (h1 @ c - c @ h1)
        if self._static is not None:
            e, v, betas = self._static
        else:
            e, v = np.linalg.eigh(self._h1(t, h0))
            betas = self.kappa * self.noise.betas(e)
        return out + apply_L1(rho, e, v, betas)

    def __call__(self, t, y):
        d = self.dim
        return self.rho_dot(t, y.reshape(d, d)).ravel()

    def jacobian(self, t, y=None):
        h0 = self.h0(t)
        mat = -1j * adjoint_action(h0)
        if self.noise is None or self.kappa == 0.0:
            return mat
        h1 = self._h1(t, h0)
        if isinstance(self.noise, TwoLevelCoefficients):
            ad = adjoint_action(h1)
            return mat - self.kappa * (1j * self.noise.J * ad + self.noise.D * ad @ ad)
        e, v = np.linalg.eigh(h1)
        s = np.kron(v, v.conj())
        return mat + (s * (self.kappa * self.noise.betas(e)).ravel()[None, :]) @ s.conj().T

    def max_rate(self, horizon, samples=65):
        """Largest |L1 eigenvalue| over a sample of times."""
        if self.noise is None or self.kappa == 0.0:
            return 0.0
        rates = []
        for t in np.linspace(0.0, horizon, samples):
            e = np.linalg.eigvalsh(self._h1(t, self.h0(t)))
            rates.append(np.max(np.abs(self.kappa * self.noise.betas(e))))
        return float(max(rates))


def choose_method(rhs, horizon, cfg):
    if cfg.method != "auto":
        return cfg.method
    # explicit RK stability needs roughly rate * step <= 3
    return "Radau" if rhs.max_rate(horizon) * horizon / 3.0 > cfg.stiff_steps else "DOP853"


class _RealSplit:
    """Complex linear ODE as a real one on [Re y, Im y] (Radau and LSODA are real-only)."""

    def __init__(self, rhs):
        self.rhs = rhs
        self.n = rhs.dim**2

    def __call__(self, t, x):
        y = self.rhs(t, x[: self.n] + 1j * x[self.n:])
        return np.concatenate([y.real, y.imag])

    def jacobian(self, t, x):
        j = self.rhs.jacobian(t)
        return np.block([[j.real, -j.imag], [j.imag, j.real]])


def _solve(rhs, y0, horizon, times, cfg, method):
    kwargs = dict(rtol=cfg.rel_tol, atol=cfg.abs_tol, t_eval=times, max_step=cfg.max_step)
    if cfg.initial_step is not None:
        kwargs["first_step"] = cfg.initial_step
    if method in ("Radau", "BDF", "LSODA"):
        split = _RealSplit(rhs)
        kwargs["jac"] = split.jacobian
        sol = solve_ivp(split, (0.0, horizon), np.concatenate([y0.real, y0.imag]), method=method, **kwargs)
        if sol.status == 0:
            sol.y = sol.y[: split.n] + 1j * sol.y[split.n:]
    else:
        sol = solve_ivp(rhs, (0.0, horizon), y0, method=method, **kwargs)
    if sol.status != 0:
        raise IntegrationError(f"integration failed: {sol.message}")
    return sol


def integrate_master(h0, h1, noise, rho0, horizon, cfg=None, times=None, kappa=1.0):
    """Integrate d rho/dt = L0(rho) + kappa L1(rho) from rho0 over [0, horizon].

    ``noise`` is a :class:`NoiseModel` (general L1 from the characteristic
    function), a :class:`TwoLevelCoefficients` (J, D form) or ``None``.
    No renormalization is applied; conservation breaches mark the record failed.
    """
    cfg = cfg or IntegrationConfig()
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rho0 = as_density_matrix(rho0)
    rhs = MasterRHS(h0, h1, noise, kappa)
    if rho0.shape[0] != rhs.dim:
        raise ValueError("initial state dimension does not match the Hamiltonian")
    times = output_times(horizon, cfg, times)
    method = choose_method(rhs, horizon, cfg)
    sol = _solve(rhs, rho0.ravel(), horizon, times, cfg, method)
    d = rhs.dim
    states = sol.y.T.reshape(-1, d, d)
    states, tr, herm, mineig, failed, breach = monitor(times, states, cfg)
    msg = "" if not failed else f"conservation breach at t={breach:.6g}"
    return PropagationRecord(times, states, tr, herm, mineig, method, rhs.nfev, failed, breach, msg)


def integrate_two_level(h0, h1, coeffs, rho0, horizon, cfg=None, times=None):
    """Two-level master equation -i[H0 + J H1, rho] - D [H1, [H1, rho]]."""
    if as_time_dependent(h0).dim != 2:
        raise ValueError("integrate_two_level needs a two-level system")
    if not isinstance(coeffs, TwoLevelCoefficients):
        raise TypeError("coefficients must be TwoLevelCoefficients")
    return integrate_master(h0, h1, coeffs, rho0, horizon, cfg, times)


@dataclass
class UnitaryResult:
    state: np.ndarray
    propagator: np.ndarray


def _unitary_rhs(h0):
    d = h0.dim

    def rhs(t, y):
        return (-1j * (h0(t) @ y.reshape(d, d))).ravel()

    return rhs


def unitary_tolerances(cfg):
    return min(cfg.rel_tol, 1e-11), min(cfg.abs_tol, 1e-12)


def integrate_unitary(h0, state, t_from, t_to, cfg=None):
    """Evolve a ket or density matrix with H0 from ``t_from`` to ``t_to`` (either direction).

    Returns the evolved state and the propagator U0(t_to, t_from).
    """
    cfg = cfg or IntegrationConfig()
    h0 = as_time_dependent(h0)
    d = h0.dim
    state = np.asarray(state, dtype=complex)
    if state.shape not in ((d,), (d, d)):
        raise ValueError(f"state shape {state.shape} does not match dimension {d}")
    if t_to == t_from:
        u = np.eye(d, dtype=complex)
    else:
        rtol, atol = unitary_tolerances(cfg)
        sol = solve_ivp(_unitary_rhs(h0), (t_from, t_to), np.eye(d, dtype=complex).ravel(),
                        method="DOP853", rtol=rtol, atol=atol, max_step=cfg.max_step)
        if sol.status != 0:
            raise IntegrationError(f"unitary integration failed: {sol.message}")
        u = sol.y[:, -1].reshape(d, d)
    out = u @ state if state.ndim == 1 else u @ state @ u.conj().T
    return UnitaryResult(out, u)


def project_unitary(u):
    """Closest unitary (polar factor) to each matrix in a stack."""
    w, _, vh = np.linalg.svd(u)
    return w @ vh


class PropagatorPath:
    """U0(t, 0) on [0, horizon] from one dense-output solve of the Schrodinger equation."""

    def __init__(self, h0, horizon, cfg=None):
        cfg = cfg or IntegrationConfig()
        self.h0 = as_time_dependent(h0)
        self.dim = self.h0.dim
        self.horizon = horizon
        d = self.dim
        rtol, atol = unitary_tolerances(cfg)
        sol = solve_ivp(_unitary_rhs(self.h0), (0.0, horizon), np.eye(d, dtype=complex).ravel(),
                        method="DOP853", rtol=rtol, atol=atol, dense_output=True, max_step=cfg.max_step)
        if sol.status != 0:
            raise IntegrationError(f"unitary integration failed: {sol.message}")
        self._sol = sol.sol

    def __call__(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if times.size == 0:
            return np.zeros((0, self.dim, self.dim), dtype=complex)
        u = self._sol(times).T.reshape(-1, self.dim, self.dim)
        return project_unitary(u)


@dataclass
class CoefficientRecord:
    """Coefficients d_nm(t) of rho in the instantaneous L1 eigenbasis."""

    times: np.ndarray
    coefficients: np.ndarray
    vectors: np.ndarray
    energies: np.ndarray

    @property
    def states(self):
        v = self.vectors
        return v @ self.coefficients @ np.conj(np.swapaxes(v, 1, 2))


def integrate_coefficients(h0, h1, noise, rho0, horizon, cfg=None, n_steps=None):
    """Integrate the master equation in the instantaneous eigenbasis of L1.

    Fixed-step RK4 on a uniform grid; within each step all frames are aligned to
    the frame at the start of the step, and dV/dt comes from central
    differences of that phase-fixed frame.  Raises :class:`CrossingError`
    when the H1 eigenframe cannot be continued.
    """
    cfg = cfg or IntegrationConfig()
    h0 = as_time_dependent(h0)
    h1 = as_time_dependent(h1)
    rho0 = as_density_matrix(rho0)
    rhs = MasterRHS(h0, h1, noise)
    if n_steps is None:
        rate = rhs.max_rate(horizon)
        step = min(0.01, 1.0 / max(rate, 1e-12), cfg.max_step)
        n_steps = int(math.ceil(horizon / step))
    times = np.linspace(0.0, horizon, n_steps + 1)
    frame0 = track_eigenframe(h1, times[:2])
    v_ref = frame0.vectors[0]

    def stage(t, ref):
        e, v, w = frame_connection(h1, t, ref)
        gen = frame_generator(h0(t), v, w)
        return e, v, eigenbasis_rhs(noise.betas(e), gen)

    e0, v0, f0 = stage(0.0, v_ref)
    d = v0.conj().T @ rho0 @ v0
    coeffs = [d]
    vecs = [v0]
    energies = [e0]
    h = times[1] - times[0]
    for k in range(n_steps):
        t = times[k]
        _, _, fm = stage(t + 0.5 * h, v0)
        e1, v1, f1 = stage(t + h, v0)
        k1 = f0(d)
        k2 = fm(d + 0.5 * h * k1)
        k3 = fm(d + 0.5 * h * k2)
        k4 = f1(d + h * k3)
        d = d + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        # v1 is aligned to v0, so it is already the next step's reference
        e0, v0, f0 = e1, v1, f1
        coeffs.append(d)
        vecs.append(v0)
        energies.append(e0)
    return CoefficientRecord(times, np.array(coeffs), np.array(vecs), np.array(energies))
