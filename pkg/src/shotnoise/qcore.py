"""Dense linear algebra on small Hilbert spaces.

Density matrices are vectorized row-major (``rho.ravel()``), so that
``vec(A @ rho @ B) == kron(A, B.T) @ vec(rho)``.  Units: hbar = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

HERMITIAN_TOL = 1e-12
DENSITY_TOL = 1e-10
DEGENERACY_TOL = 1e-10
AMBIGUITY_TOL = 0.1


class CrossingError(ValueError):
    """Eigenvector continuation is ambiguous at some time (level crossing)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


def commutator(a, b):
    return a @ b - b @ a


def dagger(m):
    return np.conjugate(np.swapaxes(m, -1, -2))


def as_hermitian(op, tol=HERMITIAN_TOL):
    """Return ``op`` as a complex square array, rejecting non-Hermitian input."""
    m = np.asarray(op, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] < 2:
        raise ValueError("Hilbert space dimension must be at least 2")
    scale = max(1.0, float(np.max(np.abs(m))))
    err = float(np.max(np.abs(m - m.conj().T)))
    if err > tol * scale:
        raise ValueError(f"operator is not Hermitian (max asymmetry {err:.3e})")
    return m


def as_density_matrix(rho, tol=DENSITY_TOL):
    """Validate a density matrix (Hermitian, unit trace, positive semidefinite)."""
    m = np.asarray(rho, dtype=complex)
    if m.ndim == 1:
        m = np.outer(m, m.conj())
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(m) - 1.0) > tol:
        raise ValueError(f"density matrix trace is {np.trace(m).real:.12g}, expected 1")
    if np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] < -tol:
        raise ValueError("density matrix has a negative eigenvalue")
    return m


def pure_state(psi):
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"state vector has norm {norm:.12g}")
    return np.outer(psi, psi.conj())


def vectorize(rho):
    m = np.asarray(rho, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"cannot vectorize array of shape {m.shape}")
    return m.ravel().copy()


def devectorize(vec, dim=None):
    v = np.asarray(vec, dtype=complex)
    n = int(round(np.sqrt(v.shape[-1])))
    if n * n != v.shape[-1] or (dim is not None and dim != n):
        raise ValueError(f"vector of length {v.shape[-1]} is not a {dim}x{dim} operator")
    return v.reshape(v.shape[:-1] + (n, n))


def hs_inner(a, b):
    """Hilbert-Schmidt inner product <<a|b>> = tr(a^dagger b) of vectorized operators."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a.ravel(), b.ravel()))


def _fix_phase(vecs):
    # largest-magnitude component of every column made real-positive
    idx = np.argmax(np.abs(vecs) - 1e-12 * np.arange(vecs.shape[0])[:, None], axis=0)
    comp = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(comp) / comp)[None, :]


def eigendecompose(op):
    """Eigenvalues (ascending) and unit eigenvectors (columns) of a Hermitian matrix.

    Each eigenvector's largest-magnitude component is made real-positive so that
    identical input gives identical output.
    """
    m = as_hermitian(op)
    energies, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    return energies, _fix_phase(vecs)


def unitary_kick(h1, xi):
    """The kick propagator exp(-i xi H1)."""
    energies, vecs = np.linalg.eigh(as_hermitian(h1))
    return (vecs * np.exp(-1j * xi * energies)) @ vecs.conj().T


def nested_commutator(h1, rho, s):
    """[H1, rho]_s: the s-fold nested commutator, with [H1, rho]_0 = rho."""
    if s < 0:
        raise ValueError("nesting depth must be non-negative")
    out = np.asarray(rho, dtype=complex)
    h1 = np.asarray(h1, dtype=complex)
    for _ in range(s):
        out = commutator(h1, out)
    return out


def two_level_chi(h1):
    """chi = (E_+^{(1)})^2 for a two-level noise Hamiltonian (trace part dropped)."""
    energies = np.linalg.eigvalsh(as_hermitian(h1))
    if energies.shape[0] != 2:
        raise ValueError("chi is only defined for two-level operators")
    return float(((energies[1] - energies[0]) / 2.0) ** 2)


class TimeDependentOperator:
    """A Hermitian-matrix valued function of time.

    Subclasses may override :meth:`stack` with a vectorized evaluation.
    """

    def __init__(self, func: Callable[[float], np.ndarray], dim: int):
        self._func = func
        self.dim = int(dim)

    def __call__(self, t):
        return np.asarray(self._func(float(t)), dtype=complex)

    def stack(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((times.shape[0], self.dim, self.dim), dtype=complex)
        for k, t in enumerate(times):
            out[k] = self(t)
        return out

    def derivative(self, t, eps=1e-6):
        return (self(t + eps) - self(t - eps)) / (2.0 * eps)


class ConstantOperator(TimeDependentOperator):
    def __init__(self, matrix):
        self.matrix = np.array(as_hermitian(matrix), dtype=complex)
        self.dim = self.matrix.shape[0]

    def __call__(self, t):
        return self.matrix.copy()

    def stack(self, times):
        n = np.atleast_1d(times).shape[0]
        return np.broadcast_to(self.matrix, (n, self.dim, self.dim)).copy()

    def derivative(self, t, eps=1e-6):
        return np.zeros_like(self.matrix)


def zero_operator(dim):
    return ConstantOperator(np.zeros((dim, dim), dtype=complex))


def as_time_dependent(op):
    if isinstance(op, TimeDependentOperator):
        return op
    if callable(op):
        probe = np.asarray(op(0.0))
        return TimeDependentOperator(op, probe.shape[0])
    return ConstantOperator(op)


@dataclass
class EigenFrame:
    """Continuously labelled, phase-fixed eigenframe of an operator on a time grid.

    ``vectors[k][:, n]`` is eigenvector ``n`` at ``times[k]`` with eigenvalue
    ``energies[k, n]``.  ``degenerate[k]`` marks grid points where some gap fell
    below the degeneracy tolerance and the basis was inherited from a neighbour.
    """

    times: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    degenerate: np.ndarray

    @property
    def dim(self):
        return self.vectors.shape[-1]

    def transport_residual(self):
        """max over labels and steps of |<phi_n(t_k)|phi_n(t_{k+1})> - 1|."""
        ov = np.einsum("kin,kin->kn", self.vectors[:-1].conj(), self.vectors[1:])
        return float(np.max(np.abs(ov - 1.0))) if ov.size else 0.0


def _clusters(energies, tol=DEGENERACY_TOL):
    groups, start = [], 0
    for j in range(1, energies.shape[0] + 1):
        if j == energies.shape[0] or energies[j] - energies[j - 1] >= tol:
            groups.append(list(range(start, j)))
            start = j
    return groups


def align_frame(prev, energies, vecs, time=None):
    """Relabel and rephase ``vecs`` to continue the frame ``prev``.

    Degenerate clusters are re-spanned by the projections of the matching
    previous vectors (Gram-Schmidt against the previous frame).  Raises
    :class:`CrossingError` when the maximal-overlap continuation is ambiguous.
    """
    d = prev.shape[0]
    vecs = vecs.copy()
    degenerate = False
    for group in _clusters(energies):
        if len(group) < 2:
            continue
        degenerate = True
        sub = vecs[:, group]
        weight = np.sum(np.abs(sub.conj().T @ prev) ** 2, axis=0)
        chosen = np.sort(np.argsort(-weight, kind="stable")[: len(group)])
        proj = sub @ (sub.conj().T @ prev[:, chosen])
        q, r = np.linalg.qr(proj)
        q = q * np.sign(np.real(np.diag(r)))[None, :]
        vecs[:, group] = q
    overlap = np.abs(prev.conj().T @ vecs)
    perm = np.argmax(overlap, axis=1)
    ordered = np.sort(overlap, axis=1)
    if d > 1 and np.any(ordered[:, -1] - ordered[:, -2] < AMBIGUITY_TOL):
        raise CrossingError("ambiguous eigenvector continuation (level crossing)", time)
    if len(set(perm.tolist())) != d:
        raise CrossingError("eigenvector continuation is not one-to-one", time)
    vecs = vecs[:, perm]
    energies = energies[perm]
    phase = np.einsum("in,in->n", prev.conj(), vecs)
    vecs = vecs * (np.abs(phase) / phase)[None, :]
    return energies, vecs, degenerate


def track_eigenframe(op, times, reference=None):
    """Follow the eigenvectors of a time-dependent Hermitian operator along ``times``.

    Labels follow maximal overlap with the previous grid point and phases are
    fixed so successive overlaps are real-positive (discrete parallel transport).
    The initial labelling is ascending in energy at the first non-degenerate grid
    point, with the largest component of each vector made real-positive; a
    degenerate start inherits the basis of its first non-degenerate neighbour.
    """
    op = as_time_dependent(op)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("time grid must be a non-empty 1-d array")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    mats = op.stack(times)
    mats = 0.5 * (mats + dagger(mats))
    energies, vecs = np.linalg.eigh(mats)
    n = times.size
    gaps = np.diff(energies, axis=1)
    nondeg = np.all(gaps >= DEGENERACY_TOL, axis=1) if op.dim > 1 else np.ones(n, bool)
    k0 = int(np.argmax(nondeg)) if np.any(nondeg) else 0
    out_e = np.empty_like(energies)
    out_v = np.empty_like(vecs)
    degenerate = ~nondeg
    if reference is not None:
        out_e[k0], out_v[k0], _ = align_frame(np.asarray(reference, complex), energies[k0], vecs[k0], times[k0])
    else:
        out_e[k0], out_v[k0] = energies[k0], _fix_phase(vecs[k0])
    for k in range(k0 + 1, n):
        out_e[k], out_v[k], _ = align_frame(out_v[k - 1], energies[k], vecs[k], times[k])
    for k in range(k0 - 1, -1, -1):
        out_e[k], out_v[k], _ = align_frame(out_v[k + 1], energies[k], vecs[k], times[k])
    return EigenFrame(times, out_e, out_v, degenerate)


def frame_at(op, t, reference):
    """Eigenframe of ``op(t)`` aligned to the reference frame (same labels, real-positive overlaps)."""
    m = np.asarray(op(t), dtype=complex)
    energies, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    e, v, _ = align_frame(reference, energies, vecs, t)
    return e, v


def frame_connection(op, t, reference, eps=1e-5):
    """Energies, vectors and connection W = V^dagger dV/dt at ``t``.

    The derivative is a central difference of frames aligned to ``reference``.
    """
    e, v = frame_at(op, t, reference)
    _, vp = frame_at(op, t + eps, v)
    _, vm = frame_at(op, t - eps, v)
    w = v.conj().T @ (vp - vm) / (2.0 * eps)
    return e, v, w
