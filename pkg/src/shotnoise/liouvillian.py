"""Superoperators of the Poisson-noise master equation.

d rho/dt = L0(rho) + L1(rho) with L0 = -i[H0, .] and
L1(rho) = nu <A_xi rho A_xi^dagger - rho>, A_xi = exp(-i xi H1).

L1 is built three ways: from its spectrum (production path), from the
nested-commutator moment series, and by quadrature over the strike density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .noise import NoiseError, NoiseModel, PointMass, SERIES_MAX_TERMS, SERIES_RTOL, TwoLevelCoefficients
from .qcore import as_hermitian


@dataclass(frozen=True)
class SuperoperatorBuild:
    dim: int
    matrix: np.ndarray
    kind: str

    def apply(self, rho):
        rho = np.asarray(rho, dtype=complex)
        return (self.matrix @ rho.ravel()).reshape(rho.shape)

    def __add__(self, other):
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return SuperoperatorBuild(self.dim, self.matrix + other.matrix, "total")


@dataclass(frozen=True)
class NoiseEigenbasis:
    """Eigenvectors |B_nm>> = |phi_n><phi_m| of L1 and their eigenvalues beta_nm."""

    energies: np.ndarray
    vectors: np.ndarray
    betas: np.ndarray

    @property
    def dim(self):
        return self.energies.shape[0]

    @property
    def projectors(self):
        # column n*d + m is vec(|phi_n><phi_m|)
        return np.kron(self.vectors, self.vectors.conj())

    def element(self, n, m):
        return np.outer(self.vectors[:, n], self.vectors[:, m].conj())


def left(a):
    return np.kron(a, np.eye(a.shape[0]))


def right(b):
    return np.kron(np.eye(b.shape[0]), b.T)


def adjoint_action(h):
    """Superoperator of X -> [h, X]."""
    return left(h) - right(h)


def build_L0(h0):
    h0 = as_hermitian(h0)
    return SuperoperatorBuild(h0.shape[0], -1j * adjoint_action(h0), "L0")


def noise_eigenbasis(h1, noise):
    h1 = as_hermitian(h1)
    energies, vectors = np.linalg.eigh(h1)
    return NoiseEigenbasis(energies, vectors, noise.betas(energies))


def apply_L1(rho, energies, vectors, betas):
    """L1(rho) = V (beta * (V^dagger rho V)) V^dagger."""
    inner = vectors.conj().T @ rho @ vectors
    return vectors @ (betas * inner) @ vectors.conj().T


def build_L1_spectral(h1, noise):
    """L1 = sum_nm beta_nm |B_nm>><<B_nm| (the B set is orthonormal)."""
    basis = noise_eigenbasis(h1, noise)
    s = basis.projectors
    matrix = (s * basis.betas.ravel()[None, :]) @ s.conj().T
    return SuperoperatorBuild(basis.dim, matrix, "L1"), basis


def build_L1_series(h1, model, max_terms=SERIES_MAX_TERMS, rtol=SERIES_RTOL):
    """nu sum_s (-i)^s <xi^s> / s! [H1, .]_s, truncated once a term is below ``rtol`` of the sum."""
    h1 = as_hermitian(h1)
    ad = adjoint_action(h1)
    dist = model.distribution
    power = np.eye(ad.shape[0], dtype=complex)
    total = np.zeros_like(power)
    for s in range(1, max_terms + 1):
        power = power @ ad
        term = ((-1j) ** s / math.factorial(s) * dist.moment(s)) * power
        total = total + term
        size = np.linalg.norm(term, 2)
        if 0.0 < size <= rtol * np.linalg.norm(total, 2):
            break
        if np.linalg.norm(power, 2) == 0.0:
            break
    else:
        raise NoiseError(f"L1 moment series did not converge within {max_terms} terms")
    return SuperoperatorBuild(h1.shape[0], model.nu * total, "L1")


def kick_superoperator(h1, xi):
    """vec(A rho A^dagger) = kron(A, conj(A)) vec(rho) with A = exp(-i xi H1)."""
    a = linalg.expm(-1j * xi * h1)
    return np.kron(a, a.conj())


def build_L1_quadrature(h1, model, epsabs=1e-12, epsrel=1e-11):
    """nu int dxi P(xi) (A_xi . A_xi^dagger - .) by adaptive quadrature."""
    h1 = as_hermitian(h1)
    d = h1.shape[0]
    ident = np.eye(d * d, dtype=complex)
    dist = model.distribution
    if isinstance(dist, PointMass):
        matrix = kick_superoperator(h1, dist.value) - ident
        return SuperoperatorBuild(d, model.nu * matrix, "L1")
    c, w = dist.center, dist.scale

    def integrand(u):
        x = c + w * u
        k = (kick_superoperator(h1, x) - ident) * (dist.pdf(x) * w)
        return np.concatenate([k.real.ravel(), k.imag.ravel()])

    total = np.zeros(2 * d**4)
    for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
        val, err = integrate.quad_vec(integrand, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=2000)
        if not np.all(np.isfinite(val)) or err > 1e3 * max(epsabs, epsrel * np.max(np.abs(val))):
            raise NoiseError(f"L1 quadrature failed (error estimate {err:.3e})")
        total += val
    matrix = (total[: d**4] + 1j * total[d**4 :]).reshape(d * d, d * d)
    return SuperoperatorBuild(d, model.nu * matrix, "L1")


def build_gaussian_generator(h0, h1, Jt, Dt):
    """-i [H0 + J~ H1, .] - D~ [H1, [H1, .]]."""
    if Dt < 0:
        raise ValueError("D~ must be non-negative")
    h0 = as_hermitian(h0)
    h1 = as_hermitian(h1)
    ad1 = adjoint_action(h1)
    matrix = -1j * adjoint_action(h0 + Jt * h1) - Dt * (ad1 @ ad1)
    return SuperoperatorBuild(h0.shape[0], matrix, "gaussian")


def build_two_level_generator(h0, h1, coeffs):
    h0 = as_hermitian(h0)
    if h0.shape[0] != 2:
        raise ValueError("the two-level generator needs a 2x2 Hamiltonian")
    build = build_gaussian_generator(h0, h1, coeffs.J, coeffs.D)
    return SuperoperatorBuild(2, build.matrix, "two_level")


def total_generator(h0, h1, noise):
    """L0 + L1 for either noise description."""
    if isinstance(noise, TwoLevelCoefficients):
        return build_gaussian_generator(h0, h1, noise.J, noise.D)
    return build_L0(h0) + build_L1_spectral(h1, noise)[0]


def frame_generator(h0, vectors, connection):
    """G = -i V^dagger H0 V - V^dagger dV/dt, the coherent part in the noise frame."""
    return -1j * (vectors.conj().T @ h0 @ vectors) - connection


def eigenbasis_rhs(betas, generator):
    """Right-hand side of the coefficient equation in the L1 eigenbasis.

    With rho = sum_nm d_nm |phi_n><phi_m| the master equation reads
    dd/dt = beta * d + [G, d].
    """

    def rhs(d):
        return betas * d + generator @ d - d @ generator

    return rhs


def coupling_tensor(generator):
    """M[n, m, l, k] = <<B_nm| L0 |B_lk>> - <<B_nm| dB_lk/dt>>."""
    d = generator.shape[0]
    eye = np.eye(d)
    return np.einsum("km,nl->nmlk", eye, generator) - np.einsum("nl,km->nmlk", eye, generator)


def as_noise(noise):
    if isinstance(noise, (NoiseModel, TwoLevelCoefficients)):
        return noise
    raise TypeError(f"unsupported noise description {type(noise).__name__}")
