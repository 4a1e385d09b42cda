"""Strike-strength distributions and the Poisson white-noise model.

A noise realization is z(t) = sum_i xi_i delta(t - t_i): strike times form a
Poisson process of rate ``nu`` and strengths xi_i (units of time) are i.i.d.
with density P(xi).  Everything the master equation needs is a function of
the characteristic function C(x) = <exp(i xi x)>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Optional

import numpy as np
from scipy import integrate

SERIES_RTOL = 1e-12
SERIES_MAX_TERMS = 60
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12


class NoiseError(ValueError):
    pass


class StrikeDistribution:
    """Base class for the probability law of strike strengths."""

    symmetric = False

    def characteristic_function(self, x):
        raise NotImplementedError

    def cf_minus_one(self, x):
        """C(x) - 1; subclasses override it to avoid cancellation at small x."""
        return self.characteristic_function(x) - 1.0

    def moment(self, s):
        raise NotImplementedError

    def pdf(self, xi):
        raise NoiseError(f"{type(self).__name__} has no density")

    def sample(self, rng, size):
        raise NoiseError(f"{type(self).__name__} cannot be sampled")

    @property
    def center(self):
        return 0.0

    @property
    def scale(self):
        return 1.0

    def expectation(self, func):
        """<f(xi)> by adaptive quadrature over the real line."""
        c, w = self.center, self.scale

        def integrand(u):
            x = c + w * u
            return self.pdf(x) * func(x) * w

        total, err = 0.0, 0.0
        for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
            val, e = integrate.quad(integrand, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400)
            total += val
            err += e
        if not np.isfinite(total) or err > 1e-8 * max(1.0, abs(total)):
            raise NoiseError(f"quadrature did not converge (estimated error {err:.3e})")
        return total


@dataclass(frozen=True)
class Laplace(StrikeDistribution):
    """P(xi) = exp(-|xi|/A) / (2A)."""

    A: float
    symmetric = True

    def __post_init__(self):
        if not self.A > 0:
            raise NoiseError("Laplace scale must be positive")

    def characteristic_function(self, x):
        x = np.asarray(x, dtype=float)
        return (1.0 / (1.0 + (self.A * x) ** 2)).astype(complex)

    def cf_minus_one(self, x):
        a2 = (self.A * np.asarray(x, dtype=float)) ** 2
        return (-a2 / (1.0 + a2)).astype(complex)

    def moment(self, s):
        _check_order(s)
        return 0.0 if s % 2 else float(math.factorial(s) * self.A**s)

    def pdf(self, xi):
        return np.exp(-np.abs(xi) / self.A) / (2.0 * self.A)

    def sample(self, rng, size):
        return rng.laplace(0.0, self.A, size)

    @property
    def scale(self):
        return self.A


@dataclass(frozen=True)
class Gaussian(StrikeDistribution):
    """Normal strike strengths with mean ``mu`` and width ``sigma``."""

    sigma: float
    mu: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise NoiseError("Gaussian width must be positive")

    @property
    def symmetric(self):
        return self.mu == 0.0

    def characteristic_function(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(1j * self.mu * x - 0.5 * (self.sigma * x) ** 2)

    def cf_minus_one(self, x):
        x = np.asarray(x, dtype=float)
        return np.expm1(1j * self.mu * x - 0.5 * (self.sigma * x) ** 2)

    def moment(self, s):
        _check_order(s)
        # E[(mu + sigma Z)^s], E[Z^k] = (k-1)!! for even k
        total = 0.0
        for k in range(0, s + 1, 2):
            total += math.comb(s, k) * self.mu ** (s - k) * self.sigma**k * _double_factorial(k - 1)
        return float(total)

    def pdf(self, xi):
        z = (np.asarray(xi) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * self.sigma)

    def sample(self, rng, size):
        return rng.normal(self.mu, self.sigma, size)

    @property
    def center(self):
        return self.mu

    @property
    def scale(self):
        return self.sigma


@dataclass(frozen=True)
class PointMass(StrikeDistribution):
    """Every strike has the same strength ``value``."""

    value: float

    @property
    def symmetric(self):
        return self.value == 0.0

    def characteristic_function(self, x):
        return np.exp(1j * self.value * np.asarray(x, dtype=float))

    def cf_minus_one(self, x):
        return np.expm1(1j * self.value * np.asarray(x, dtype=float))

    def moment(self, s):
        _check_order(s)
        return float(self.value**s)

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def expectation(self, func):
        return func(self.value)

    @property
    def center(self):
        return self.value


@dataclass(frozen=True)
class Custom(StrikeDistribution):
    """A distribution given by a moment table and optional closed forms.

    Without ``cf`` the characteristic function is summed from the moments.
    """

    moments: Mapping[int, float]
    cf: Optional[Callable] = None
    density: Optional[Callable] = None
    sampler: Optional[Callable] = None
    is_symmetric: bool = False
    width: float = 1.0

    @property
    def symmetric(self):
        return self.is_symmetric

    def characteristic_function(self, x):
        if self.cf is not None:
            return np.asarray(self.cf(x), dtype=complex)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([self._cf_series(v) for v in xs])
        return out if np.ndim(x) else out[0]

    def _cf_series(self, x):
        terms = (((1j * x) ** s / math.factorial(s)) * self.moment(s) for s in range(1, 10**6))
        return 1.0 + sum_series(terms, what=f"characteristic function at x={x}")

    def moment(self, s):
        _check_order(s)
        if s not in self.moments:
            raise NoiseError(f"moment of order {s} is not available")
        value = float(self.moments[s])
        if not np.isfinite(value):
            raise NoiseError(f"moment of order {s} diverges")
        return value

    def pdf(self, xi):
        if self.density is None:
            raise NoiseError("custom distribution has no density")
        return self.density(xi)

    def sample(self, rng, size):
        if self.sampler is None:
            raise NoiseError("custom distribution has no sampler")
        return np.asarray(self.sampler(rng, size), dtype=float)

    @property
    def center(self):
        return self.moments.get(1, 0.0)

    @property
    def scale(self):
        return self.width


def _check_order(s):
    if int(s) != s or s < 1:
        raise NoiseError(f"moment order must be a positive integer, got {s}")


def _double_factorial(n):
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def sum_series(terms, what="series", rtol=SERIES_RTOL, max_terms=SERIES_MAX_TERMS):
    """Sum terms until one contributes less than ``rtol`` relative to the partial sum.

    Exact zeros (vanishing odd moments) do not count as convergence.
    """
    total = 0.0
    for n, term in enumerate(terms, start=1):
        total = total + term
        size = np.max(np.abs(term))
        if size == 0.0:
            if n >= max_terms:
                return total
            continue
        if size <= rtol * max(np.max(np.abs(total)), 1e-300):
            return total
        if n >= max_terms:
            break
    raise NoiseError(f"{what} did not converge within {max_terms} terms")


def characteristic_function(dist, x):
    return dist.characteristic_function(x)


def moment(dist, s):
    return dist.moment(s)


@dataclass(frozen=True)
class NoiseModel:
    """Poisson white noise: strike rate ``nu`` and strength distribution."""

    nu: float
    distribution: StrikeDistribution = field(default_factory=lambda: Gaussian(1.0))

    def __post_init__(self):
        if self.nu < 0 or not np.isfinite(self.nu):
            raise NoiseError("strike frequency must be finite and non-negative")

    @property
    def symmetric(self):
        return self.distribution.symmetric

    def scaled(self, factor):
        return NoiseModel(self.nu * factor, self.distribution)

    def betas(self, energies):
        """Matrix beta[n, m] = nu [C(E_m - E_n) - 1] of L1 eigenvalues."""
        e = np.asarray(energies, dtype=float)
        gaps = e[..., None, :] - e[..., :, None]
        return self.nu * self.distribution.cf_minus_one(gaps)


@dataclass(frozen=True)
class TwoLevelCoefficients:
    """Noise bias J (dimensionless) and noise strength D (time).

    As a noise description it generates
    -i J [H1, rho] - D [H1, [H1, rho]], which is also the Gaussian white-noise form.
    """

    J: float
    D: float

    def __post_init__(self):
        if self.D < 0:
            raise NoiseError("noise strength D must be non-negative")

    @property
    def symmetric(self):
        return self.J == 0.0

    def scaled(self, factor):
        return TwoLevelCoefficients(self.J * factor, self.D * factor)

    def betas(self, energies):
        e = np.asarray(energies, dtype=float)
        gaps = e[..., :, None] - e[..., None, :]
        return -1j * self.J * gaps - self.D * gaps**2


def beta_eigenvalue(model, gap):
    """L1 eigenvalue for the energy difference gap = E_n - E_m."""
    if isinstance(model, TwoLevelCoefficients):
        g = np.asarray(gap, float)
        return -1j * model.J * g - model.D * g**2
    return model.nu * model.distribution.cf_minus_one(-np.asarray(gap, float))


def beta_series(model, gap):
    """L1 eigenvalue from the moment series nu sum_s (-i gap)^s <xi^s> / s!."""
    d = model.distribution
    terms = ((-1j * gap) ** s / math.factorial(s) * d.moment(s) for s in range(1, 10**6))
    return model.nu * sum_series(terms, what=f"beta series at gap {gap}")


def two_level_JD(model, chi, method="cf"):
    """Noise bias J and strength D of the two-level master equation.

    ``method`` selects the route: ``"cf"`` (characteristic function),
    ``"quadrature"`` (the sine integrals over P(xi)) or ``"series"`` (moment sums).
    """
    if chi < 0:
        raise NoiseError("chi must be non-negative")
    nu, dist = model.nu, model.distribution
    if chi == 0.0:
        return TwoLevelCoefficients(nu * dist.moment(1), 0.5 * nu * dist.moment(2))
    r = math.sqrt(chi)
    if method == "cf":
        c = complex(np.asarray(dist.cf_minus_one(2.0 * r)))
        J = nu * c.imag / (2.0 * r)
        D = -nu * c.real / (4.0 * chi)
    elif method == "quadrature":
        # prefactors inside the integrals keep the integrands O(xi) and O(xi^2) as chi -> 0
        J = nu * dist.expectation(lambda x: np.sin(2.0 * x * r) / (2.0 * r))
        D = 0.5 * nu * dist.expectation(lambda x: np.sin(x * r) ** 2 / chi)
    elif method == "series":
        J = nu * sum_series(
            ((-4.0 * chi) ** l / math.factorial(2 * l + 1) * dist.moment(2 * l + 1) for l in range(10**6)),
            what="J series",
        )
        D = nu * sum_series(
            ((-4.0 * chi) ** (k - 1) / math.factorial(2 * k) * dist.moment(2 * k) for k in range(1, 10**6)),
            what="D series",
        )
    else:
        raise ValueError(f"unknown method {method!r}")
    return TwoLevelCoefficients(float(J), float(D))


def gaussian_limit_map(model):
    """(J~, D~) = (nu <xi>, nu <xi^2> / 2)."""
    d = model.distribution
    return model.nu * d.moment(1), 0.5 * model.nu * d.moment(2)


class Strikes(NamedTuple):
    times: np.ndarray
    strengths: np.ndarray


def sample_strikes(model, horizon, rng):
    """One realization of strike times (sorted, uniform on (0, T)) and strengths."""
    if not horizon > 0:
        raise NoiseError("horizon must be positive")
    count = rng.poisson(model.nu * horizon) if model.nu > 0 else 0
    times = np.sort(rng.uniform(0.0, horizon, count))
    strengths = model.distribution.sample(rng, count) if count else np.zeros(0)
    return Strikes(times, np.asarray(strengths, dtype=float))


def trajectory_rng(seed, index):
    """Independent generator for trajectory ``index`` of run ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))
