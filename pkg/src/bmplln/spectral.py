"""Perron-Frobenius eigendata of the mean semigroup and the uniform-convergence gap."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import NonSimpleLeading, Reducible, SemigroupOverflow

# eigenvalues closer than this (times 1 + |lambda|) count as one
SIMPLICITY_TOL = 1e-8
MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class SpectralData:
    """Leading eigentriple ``(lam, phi, phi_tilde)`` of a mean generator.

    ``phi_tilde`` is a probability vector and ``phi_tilde @ phi == 1``.
    ``spectral_gap`` is ``inf`` for a one-state model.
    """

    lam: float
    phi: np.ndarray
    phi_tilde: np.ndarray
    spectral_gap: float
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def supercritical(self) -> bool:
        return self.lam > 0

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "phi": self.phi.tolist(),
            "phi_tilde": self.phi_tilde.tolist(),
            "spectral_gap": None if math.isinf(self.spectral_gap) else self.spectral_gap,
            "supercritical": self.supercritical,
        }


def is_irreducible(A: np.ndarray) -> bool:
    """Strong connectivity of the off-diagonal nonzero pattern."""
    n = A.shape[0]
    adj = (A != 0) & ~np.eye(n, dtype=bool)

    def reach(mat):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            x = stack.pop()
            for y in np.flatnonzero(mat[x] & ~seen):
                seen[y] = True
                stack.append(y)
        return seen.all()

    return reach(adj) and reach(adj.T)


def _leading_vector(M: np.ndarray, lam: float) -> np.ndarray:
    w, V = np.linalg.eig(M)
    i = int(np.argmin(np.abs(w - lam)))
    v = np.real(V[:, i])
    v = v / v[np.argmax(np.abs(v))]
    return v


def compute_eigendata(A) -> SpectralData:
    """Leading eigenvalue and normalized left/right eigenvectors of ``A``.

    Raises :class:`Reducible` when some state cannot reach another and
    :class:`NonSimpleLeading` when the eigenvalue of largest real part is
    complex or repeated.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        one = np.ones(1)
        return SpectralData(float(A[0, 0]), one, one.copy(), math.inf, A.diagonal().copy())
    if not is_irreducible(A):
        raise Reducible("mean generator is reducible; some state is unreachable")

    w = np.linalg.eigvals(A)
    order = np.argsort(-w.real)
    w = w[order]
    lead = w[0]
    lam = float(lead.real)
    tol = SIMPLICITY_TOL * (1.0 + abs(lam))
    if abs(lead.imag) > tol:
        raise NonSimpleLeading(f"leading eigenvalue {lead} is complex")
    if np.min(np.abs(w[1:] - lead)) <= tol:
        raise NonSimpleLeading(f"leading eigenvalue {lam} is not simple")

    phi = _leading_vector(A, lam)
    phi_tilde = _leading_vector(A.T, lam)
    if np.any(phi <= 0) or np.any(phi_tilde <= 0):
        raise NonSimpleLeading("leading eigenvectors are not strictly positive")
    # probability first, then phi so that phi_tilde @ phi == 1
    phi_tilde = phi_tilde / phi_tilde.sum()
    phi = phi / (phi_tilde @ phi)
    gap = lam - float(w[1].real)
    return SpectralData(lam, phi, phi_tilde, gap, w)


def spectral_abscissa(A) -> float:
    A = np.asarray(A, dtype=float)
    return float(np.max(np.linalg.eigvals(A).real))


def semigroup_matrix(A, t: float) -> np.ndarray:
    """``exp(tA)`` by scaling and squaring, with an overflow guard."""
    if t < 0:
        raise ValueError("t must be >= 0")
    A = np.asarray(A, dtype=float)
    if t == 0:
        return np.eye(A.shape[0])
    growth = spectral_abscissa(A) * t
    if growth > MAX_EXPONENT:
        raise SemigroupOverflow(
            f"lambda*t = {growth:.1f} exceeds {MAX_EXPONENT}; rescale before applying"
        )
    return expm(t * A)


def semigroup_apply(A, t: float, f) -> np.ndarray:
    """``psi_t[f] = exp(tA) f``; returns ``f`` unchanged at ``t == 0``."""
    f = np.asarray(f, dtype=float)
    if t == 0:
        return f.copy()
    return semigroup_matrix(A, t) @ f


def h1_gap(A, sd: SpectralData, t: float) -> float:
    """``max_x sum_y |exp(-lam t) P_t(x, y) / phi(x) - phi_tilde(y)|``.

    On a finite state space this is exactly the sup over ``|f| <= 1``.
    """
    P = semigroup_matrix(A, t)
    R = math.exp(-sd.lam * t) * P / sd.phi[:, None] - sd.phi_tilde[None, :]
    return float(np.abs(R).sum(axis=1).max())


def h1_gap_curve(A, sd: SpectralData, times) -> list[tuple[float, float]]:
    return [(float(t), h1_gap(A, sd, t)) for t in times]


def integrated_semigroup_apply(A, t: float, f) -> np.ndarray:
    """``int_0^t exp(sA) f ds`` via the block exponential ``exp(t [[A, I], [0, 0]])``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if t == 0:
        return np.zeros(n)
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = A
    block[:n, n:] = np.eye(n)
    return semigroup_matrix(block, t)[:n, n:] @ np.asarray(f, dtype=float)
