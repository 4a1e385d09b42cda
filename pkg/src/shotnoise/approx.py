"""Analytic regimes: noiseless adiabatic following, weak-noise slope, strong-noise limit.

Strong-noise results work in the instantaneous eigenbasis of H1, where the
L1 eigenvectors are B_nm = |phi_n><phi_m| with eigenvalues beta_nm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .liouvillian import coupling_tensor, frame_generator
from .noise import NoiseError
from .propagate import IntegrationConfig, MasterRHS, PropagatorPath, integrate_master
from .qcore import (
    CrossingError,
    as_density_matrix,
    as_time_dependent,
    frame_connection,
    track_eigenframe,
    zero_operator,
)

F0_MIN = 1e-6
NORM_TOL = 1e-8
NEGATIVE_CLIP = 1e-10
REAL_PART_TOL = 1e-12


@dataclass
class FidelityCurve:
    times: np.ndarray
    values: np.ndarray


def fidelity(rho, target):
    """F = sqrt(<psi|rho|psi>) for a unit-norm target ket."""
    psi = np.asarray(target, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > NORM_TOL:
        raise ValueError("target state must be normalized")
    rho = np.asarray(rho, dtype=complex)
    val = np.real(psi.conj() @ rho @ psi)
    if val < 0.0:
        if val < -NEGATIVE_CLIP:
            raise ValueError(f"negative overlap {val:.3e}; state is not positive")
        val = 0.0
    return math.sqrt(val)


def fidelity_curve(times, states, target_path):
    """F(t) along a trajectory of states against a target ket path."""
    vals = np.array([fidelity(r, target_path(t)) for t, r in zip(times, states)])
    return FidelityCurve(np.asarray(times), vals)


def purity(rho):
    rho = np.asarray(rho, dtype=complex)
    return float(np.real(np.trace(rho @ rho)))


# ---------------------------------------------------------------- noiseless

@dataclass
class AdiabaticState:
    psi: np.ndarray
    rho: np.ndarray
    phases: np.ndarray


def adiabatic_state(h0, amplitudes, horizon, n_grid=4001):
    """Adiabatically followed state at ``horizon``.

    Amplitudes refer to the phase-fixed eigenbasis of H0(0) in ascending energy.
    Each component picks up its dynamical phase; the tracked frame is
    parallel-transported, so no geometric term remains.
    """
    h0 = as_time_dependent(h0)
    a = np.asarray(amplitudes, dtype=complex)
    if a.shape != (h0.dim,):
        raise ValueError("need one amplitude per eigenstate")
    if abs(np.linalg.norm(a) - 1.0) > NORM_TOL:
        raise ValueError("amplitudes must be normalized")
    times = np.linspace(0.0, horizon, n_grid)
    frame = track_eigenframe(h0, times)
    if np.any(frame.degenerate[1:-1]):
        raise CrossingError("H0 spectrum is degenerate inside the interval", float(times[np.argmax(frame.degenerate)]))
    dyn = integrate.simpson(frame.energies, x=times, axis=0)
    phases = np.exp(-1j * dyn)
    psi = frame.vectors[-1] @ (a * phases)
    return AdiabaticState(psi, np.outer(psi, psi.conj()), phases)


# ---------------------------------------------------------------- weak noise

@dataclass
class Sensitivity:
    F0: float
    slope: float


def noise_sensitivity(h0, h1, noise, rho0, target, horizon, cfg=None):
    """Slope dF/dkappa at kappa = 0 for d rho/dt = (L0 + kappa L1) rho.

    rho0(t) is evolved forward with H0 and the target backward from ``horizon``;
    the overlap integral is done by adaptive quadrature on the dense solution.
    """
    cfg = cfg or IntegrationConfig()
    h0 = as_time_dependent(h0)
    h1 = as_time_dependent(h1)
    rho0 = as_density_matrix(rho0)
    psi = np.asarray(target, dtype=complex)
    path = PropagatorPath(h0, horizon, cfg)
    uT = path(horizon)[0]
    rho_T = uT @ rho0 @ uT.conj().T
    F0 = fidelity(rho_T, psi)
    if F0 <= F0_MIN:
        raise ValueError(f"F(0) = {F0:.3e} is too small for the weak-noise expansion")
    back = uT.conj().T @ np.outer(psi, psi.conj()) @ uT  # U0(0,T) rho_ad U0(0,T)^dagger
    l1 = MasterRHS(zero_operator(h0.dim), h1, noise)

    def integrand(t):
        u = path(t)[0]
        r0 = u @ rho0 @ u.conj().T
        rt = u @ back @ u.conj().T
        return float(np.real(np.vdot(rt, l1.rho_dot(t, r0))))

    breaks = np.linspace(0.0, horizon, 41)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-12, epsrel=1e-10, limit=200)
        total += val
    return Sensitivity(F0, total / (2.0 * F0))


def weak_noise_fidelity(F0, Fprime0, kappa):
    """First-order expansion F(kappa) = F(0) + kappa F'(0)."""
    return F0 + kappa * Fprime0


def finite_difference_slope(h0, h1, noise, rho0, target, horizon, cfg=None, step=1e-3):
    """Centered difference (F(+k) - F(-k)) / 2k from full integrations."""
    cfg = cfg or IntegrationConfig()
    vals = []
    for k in (step, -step):
        rec = integrate_master(h0, h1, noise, rho0, horizon, cfg, kappa=k)
        vals.append(fidelity(rec.final, target))
    return (vals[0] - vals[1]) / (2.0 * step)


# ---------------------------------------------------------------- strong noise

def _require_symmetric(noise):
    if not noise.symmetric:
        raise NoiseError("the strong-noise limit is only defined for symmetric strike distributions")


@dataclass
class StrongNoiseLimit:
    rho: np.ndarray
    fidelity: Optional[float]
    purity: float
    weights: np.ndarray
    degenerate_start: bool


def strong_noise_limit(h1, noise, rho0, horizon, target=None, n_grid=2001):
    """rho_inf(T) = sum_n c_nn(0) |phi_n(T)><phi_n(T)| in the tracked H1 frame."""
    _require_symmetric(noise)
    rho0 = as_density_matrix(rho0)
    frame = track_eigenframe(h1, np.linspace(0.0, horizon, n_grid))
    v0, vT = frame.vectors[0], frame.vectors[-1]
    weights = np.real(np.einsum("in,ij,jn->n", v0.conj(), rho0, v0))
    rho = (vT * weights) @ vT.conj().T
    F = fidelity(rho, target) if target is not None else None
    return StrongNoiseLimit(rho, F, float(np.sum(weights**2)), weights, bool(frame.degenerate[0]))


def naive_strong_noise(h1, noise, rho0, horizon, cfg=None, times=None):
    """Solution of d rho/dt = L1(rho): the master equation with H0 dropped."""
    h1 = as_time_dependent(h1)
    return integrate_master(zero_operator(h1.dim), h1, noise, rho0, horizon, cfg, times)


@dataclass
class NoiseFrame:
    """H1 eigenframe on a grid with the coherent generator G = -i V^dagger H0 V - V^dagger dV/dt."""

    times: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    generator: np.ndarray
    degenerate_start: bool

    @property
    def dim(self):
        return self.energies.shape[1]


def graded_grid(horizon, n_uniform=4001, rate=0.0, n_graded=200):
    """Uniform grid with extra geometric points near t = 0 to resolve fast initial decay."""
    base = np.linspace(0.0, horizon, n_uniform)
    if rate * (base[1] - base[0]) <= 1.0:
        return base
    fine = np.geomspace(0.01 / rate, base[1], n_graded)
    return np.union1d(base, fine)


def noise_frame(h0, h1, horizon, times=None, eps=1e-5):
    h0 = as_time_dependent(h0)
    h1 = as_time_dependent(h1)
    times = np.linspace(0.0, horizon, 4001) if times is None else np.asarray(times, float)
    tracked = track_eigenframe(h1, times)
    n, d = tracked.energies.shape
    gen = np.empty((n, d, d), dtype=complex)
    vecs = np.empty_like(tracked.vectors)
    for j, t in enumerate(times):
        _, v, w = frame_connection(h1, t, tracked.vectors[j], eps)
        vecs[j] = v
        gen[j] = frame_generator(h0(t), v, w)
    return NoiseFrame(times, tracked.energies, vecs, gen, bool(tracked.degenerate[0]))


@dataclass
class StrongNoiseAccumulators:
    """Lambda~_nm(t) = int_0^t (beta_nm + M_nmnm) and the coupling generator on the grid.

    M_nmlk = delta_km G_nl - delta_nl G_km, so only G is stored.
    """

    times: np.ndarray
    Lambda: np.ndarray
    rates: np.ndarray
    generator: np.ndarray
    c0: np.ndarray

    def coupling(self, j):
        return coupling_tensor(self.generator[j])


def _phi12(z):
    """phi1 = (e^z - 1)/z and phi2 = (e^z - 1 - z)/z^2, with series near zero."""
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    ez = np.exp(z)
    p1 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24, (ez - 1) / zs)
    p2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120, (ez - 1 - zs) / zs**2)
    return ez, p1, p2


def _off_diagonal_action(G, x):
    """(M with its (n,m),(n,m) entries removed) applied to x."""
    diag = np.diagonal(G, axis1=-2, axis2=-1)
    self_rate = diag[..., :, None] - diag[..., None, :]
    return G @ x - x @ G - self_rate * x


@dataclass
class SecondOrderResult:
    rho: np.ndarray
    fidelity: Optional[float]
    coefficients: np.ndarray
    terms: tuple
    accumulators: StrongNoiseAccumulators


def strong_noise_second_order(h0, h1, noise, rho0, horizon, target=None, frame=None, n_grid=4001, order=2):
    """Zeroth, first and second terms of the iterated integral equation for d_nm(T).

    ``order`` keeps that many nested terms (2 by default); higher orders are
    useful only as a convergence check of the expansion.

    Each nested integral is the solution of y' = lambda y + M' x, y(0) = 0, with
    x the previous term; it is advanced with an exponential integrator whose
    forcing is linearly interpolated between grid points.
    """
    _require_symmetric(noise)
    rho0 = as_density_matrix(rho0)
    if frame is None:
        rate = _max_rate(noise, h1, horizon)
        frame = noise_frame(h0, h1, horizon, graded_grid(horizon, n_grid, rate))
    t = frame.times
    h = np.diff(t)
    G = frame.generator
    diag = np.diagonal(G, axis1=1, axis2=2)
    lam = noise.betas(frame.energies) + diag[:, :, None] - diag[:, None, :]
    lam_mid = 0.5 * (lam[1:] + lam[:-1])
    L = lam_mid * h[:, None, None]
    if np.any(L.real > REAL_PART_TOL):
        raise NoiseError("accumulated exponent has a positive real part")
    Lambda = np.concatenate([np.zeros((1,) + L.shape[1:], complex), np.cumsum(L, axis=0)])
    c0 = frame.vectors[0].conj().T @ rho0 @ frame.vectors[0]
    ez, p1, p2 = _phi12(L)
    w0 = (p1 - p2) * h[:, None, None]
    w1 = p2 * h[:, None, None]

    x0 = c0[None] * np.exp(Lambda)

    def nested(src):
        f = _off_diagonal_action(G, src)
        out = np.zeros_like(src)
        for j in range(len(h)):
            out[j + 1] = ez[j] * out[j] + w0[j] * f[j] + w1[j] * f[j + 1]
        return out

    terms = [x0]
    for _ in range(order):
        terms.append(nested(terms[-1]))
    d = sum(term[-1] for term in terms)
    vT = frame.vectors[-1]
    rho = vT @ d @ vT.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    F = None
    if target is not None:
        # the truncated series need not be positive; a negative overlap reads as F = 0
        psi = np.asarray(target, dtype=complex)
        F = math.sqrt(max(np.real(psi.conj() @ rho @ psi), 0.0))
    acc = StrongNoiseAccumulators(t, Lambda, lam, G, c0)
    return SecondOrderResult(rho, F, d, tuple(term[-1] for term in terms), acc)


def _max_rate(noise, h1, horizon, samples=65):
    h1 = as_time_dependent(h1)
    rates = [np.max(np.abs(noise.betas(np.linalg.eigvalsh(h1(t))))) for t in np.linspace(0, horizon, samples)]
    return float(max(rates))
