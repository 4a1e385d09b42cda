"""Control protocols and noise Hamiltonians (Omega0 = 1, hbar = 1).

Two-level operators use the template
    H = 1/2 [[-Delta, Omega_R - i Omega_I], [Omega_R + i Omega_I, Delta]].
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .qcore import ConstantOperator, TimeDependentOperator


class TwoLevelOperator(TimeDependentOperator):
    dim = 2

    def fields(self, t):
        """(Omega_R, Omega_I, Delta) at time(s) t."""
        raise NotImplementedError

    def stack(self, times):
        t = np.atleast_1d(np.asarray(times, dtype=float))
        om_r, om_i, delta = (np.broadcast_to(f, t.shape) for f in self.fields(t))
        out = np.empty((t.shape[0], 2, 2), dtype=complex)
        out[:, 0, 0] = -0.5 * delta
        out[:, 1, 1] = 0.5 * delta
        out[:, 0, 1] = 0.5 * (om_r - 1j * om_i)
        out[:, 1, 0] = 0.5 * (om_r + 1j * om_i)
        return out

    def __call__(self, t):
        om_r, om_i, delta = self.fields(float(t))
        return 0.5 * np.array([[-delta, om_r - 1j * om_i], [om_r + 1j * om_i, delta]], dtype=complex)


@dataclass(frozen=True, eq=False)
class PhaseChangingH0(TwoLevelOperator):
    omega: float
    omega0: float = 1.0

    def fields(self, t):
        return (2 * self.omega0 * np.cos(self.omega * t), 2 * self.omega0 * np.sin(self.omega * t),
                -self.omega0 + 0 * np.asarray(t))


@dataclass(frozen=True, eq=False)
class RapH0(TwoLevelOperator):
    delta0: float
    T: float
    omega0: float = 1.0

    def fields(self, t):
        x = np.pi * np.asarray(t) / self.T
        return self.omega0 * np.sin(x), 0.0 * x, -self.delta0 * np.cos(x)


@dataclass(frozen=True, eq=False)
class TimingFrequencyH1(TwoLevelOperator):
    """RAP noise Hamiltonian when detuning and timing noise are proportional."""

    delta0: float
    T: float
    c: float
    detuning_error: float = 1.0
    omega0: float = 1.0

    def fields(self, t):
        x = np.pi * np.asarray(t) / self.T
        return (self.omega0 * np.sin(x), 0.0 * x,
                -self.delta0 * np.cos(x) + self.c * self.detuning_error)


def stirap_pulse(t, center, T):
    return np.exp(-(((np.asarray(t) - center) / T) ** 2) / 0.02)


@dataclass(frozen=True, eq=False)
class StirapH0(TimeDependentOperator):
    """Counter-intuitive pulse pair: Omega_23 peaks at T(1/2 - tau), Omega_12 at T(1/2 + tau)."""

    T: float
    tau: float = 0.1
    omega0: float = 1.0
    dim = 3

    def rabi(self, t):
        o12 = self.omega0 * stirap_pulse(t, self.T * (0.5 + self.tau), self.T)
        o23 = self.omega0 * stirap_pulse(t, self.T * (0.5 - self.tau), self.T)
        return o12, o23

    def stack(self, times):
        t = np.atleast_1d(np.asarray(times, dtype=float))
        o12, o23 = self.rabi(t)
        out = np.zeros((t.shape[0], 3, 3), dtype=complex)
        out[:, 0, 1] = out[:, 1, 0] = 0.5 * o12
        out[:, 1, 2] = out[:, 2, 1] = 0.5 * o23
        return out

    def __call__(self, t):
        o12, o23 = self.rabi(float(t))
        return 0.5 * np.array([[0, o12, 0], [o12, 0, o23], [0, o23, 0]], dtype=complex)

    def dark_state(self, t):
        o12, o23 = self.rabi(float(t))
        v = np.array([o23, 0.0, -o12], dtype=complex)
        return v / np.linalg.norm(v)

    def mixing_angle(self, t):
        o12, o23 = self.rabi(t)
        return np.arctan2(o12, o23)


@dataclass(frozen=True, eq=False)
class StirapPhaseH1(TimeDependentOperator):
    """Phase fluctuations of the 2-3 coupling: i Omega_23 / 2 in the (2, 3) entry."""

    pulses: StirapH0
    dim = 3

    def stack(self, times):
        t = np.atleast_1d(np.asarray(times, dtype=float))
        _, o23 = self.pulses.rabi(t)
        out = np.zeros((t.shape[0], 3, 3), dtype=complex)
        out[:, 1, 2] = 0.5j * o23
        out[:, 2, 1] = -0.5j * o23
        return out

    def __call__(self, t):
        _, o23 = self.pulses.rabi(float(t))
        return np.array([[0, 0, 0], [0, 0, 0.5j * o23], [0, -0.5j * o23, 0]], dtype=complex)


def upper_eigenstate(op, t):
    _, vecs = np.linalg.eigh(op(t))
    return vecs[:, -1]


@dataclass(frozen=True, eq=False)
class Scheme:
    """A protocol: Hamiltonians, initial ket and the target ket path."""

    name: str
    h0: TimeDependentOperator
    h1: TimeDependentOperator
    horizon: float
    target: Callable[[float], np.ndarray]

    @property
    def initial_state(self):
        return self.target(0.0)

    @property
    def dim(self):
        return self.h0.dim


@dataclass(frozen=True, eq=False)
class _UpperEigenstate:
    op: TimeDependentOperator

    def __call__(self, t):
        return upper_eigenstate(self.op, t)


@dataclass(frozen=True, eq=False)
class _DarkState:
    op: StirapH0

    def __call__(self, t):
        return self.op.dark_state(t)


def phase_changing_scheme(omega=0.4, T=20.0, omega0=1.0):
    """Rotating-phase drive; H1 = H0 and the target is the upper eigenstate."""
    h0 = PhaseChangingH0(omega, omega0)
    return Scheme("phase", h0, h0, T, _UpperEigenstate(h0))


def rap_noise_h1(variant, h0, c=1.0, omega0=1.0):
    if variant == "same_as_h0":
        return h0
    if variant == "frequency_error":
        return ConstantOperator(0.5 * np.diag([-omega0, omega0]))
    if variant == "timing_frequency":
        return TimingFrequencyH1(h0.delta0, h0.T, c, omega0, h0.omega0)
    raise ValueError(f"unknown RAP noise variant {variant!r}")


def rap_scheme(delta0=1.0, T=20.0, h1="same_as_h0", c=1.0, omega0=1.0):
    """Rapid adiabatic passage from the upper eigenstate at t=0 to the upper eigenstate at T."""
    if not T > 0:
        raise ValueError("T must be positive")
    h0 = RapH0(delta0, T, omega0)
    return Scheme("rap", h0, rap_noise_h1(h1, h0, c, omega0), T, _UpperEigenstate(h0))


def stirap_noise_h1(variant, h0):
    if variant == "same_as_h0":
        return h0
    if variant == "phase_fluctuation":
        return StirapPhaseH1(h0)
    raise ValueError(f"unknown STIRAP noise variant {variant!r}")


def stirap_scheme(T=200.0, tau=0.1, h1="same_as_h0", omega0=1.0):
    """STIRAP transfer 1 -> 3 along the dark state."""
    if not 0.0 < tau < 0.5:
        raise ValueError("tau must lie in (0, 1/2)")
    if not T > 0:
        raise ValueError("T must be positive")
    h0 = StirapH0(T, tau, omega0)
    return Scheme("stirap", h0, stirap_noise_h1(h1, h0), T, _DarkState(h0))
