"""Small dense linear-algebra kernel used by every distribution formula."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ComplexDominantEigenvalue, DimensionMismatch, NonFinite, NotConverged

IMAG_TOL = 1e-9
POSITIVITY_TOL = 1e-10


def mat_exp(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a degree-13 Padé
    approximant (Higham 2005, as implemented by ``scipy.linalg.expm``)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"mat_exp needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFinite("matrix exponential of a non-finite matrix")
    return linalg.expm(A)


def kron(A, B) -> np.ndarray:
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def kron_sum(A, B) -> np.ndarray:
    """``A (+) B = A (x) I_n + I_m (x) B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] != A.shape[1] or B.shape[0] != B.shape[1]:
        raise DimensionMismatch("Kronecker sum needs square operands")
    m, n = A.shape[0], B.shape[0]
    return np.kron(A, np.eye(n)) + np.kron(np.eye(m), B)


def block_upper(A11, A12, A22) -> np.ndarray:
    """Assemble ``[[A11, A12], [0, A22]]``."""
    A11, A12, A22 = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (A11, A12, A22))
    m, n = A11.shape[0], A22.shape[0]
    if A11.shape != (m, m) or A22.shape != (n, n) or A12.shape != (m, n):
        raise DimensionMismatch(
            f"blocks {A11.shape}, {A12.shape}, {A22.shape} are not conformable"
        )
    out = np.zeros((m + n, m + n))
    out[:m, :m] = A11
    out[:m, m:] = A12
    out[m:, m:] = A22
    return out


def van_loan_integral(A11, A12, A22, t: float) -> np.ndarray:
    """``int_0^t expm(A11 s) A12 expm(A22 (t-s)) ds``.

    Read off the upper-right block of the exponential of the
    block-triangular matrix ``[[A11, A12], [0, A22]] * t``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    big = block_upper(A11, A12, A22)
    m = np.atleast_2d(A11).shape[0]
    return mat_exp(big * t)[:m, m:]


@dataclass(frozen=True)
class SpectralInfo:
    """Decay rate and normalized Perron eigenvectors of a generator-like matrix.

    ``T u = -theta u``, ``v T = -theta v``, ``v @ u = 1``, ``u, v > 0``.
    """

    theta: float
    u: np.ndarray
    v: np.ndarray


def _orient(x: np.ndarray) -> np.ndarray:
    x = np.real(x).astype(float)
    x = x / np.max(np.abs(x))
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    if np.any(x < -POSITIVITY_TOL):
        raise NotConverged("Perron eigenvector has components of both signs")
    return np.clip(x, 0.0, None)


def dominant_decay(T) -> SpectralInfo:
    """Right-most eigenvalue ``-theta`` of ``T`` with its positive eigenvectors.

    ``T`` must have non-negative off-diagonal entries and be irreducible so
    that Perron-Frobenius theory applies to ``T + zeta I``.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape[0] != T.shape[1]:
        raise DimensionMismatch("dominant_decay needs a square matrix")
    if not np.all(np.isfinite(T)):
        raise NonFinite("non-finite matrix")
    scale = max(np.linalg.norm(T, np.inf), 1e-300)
    w, vl, vr = linalg.eig(T, left=True, right=True)
    idx = int(np.argmax(w.real))
    lead = w[idx]
    if abs(lead.imag) > IMAG_TOL * scale:
        raise ComplexDominantEigenvalue(f"right-most eigenvalue {lead} is not real")
    others = np.delete(w, idx)
    if others.size and np.any(np.abs(others - lead.real) <= IMAG_TOL * scale):
        raise NotConverged(f"right-most eigenvalue {lead.real} is not simple")
    theta = -float(lead.real)
    u = _orient(vr[:, idx])
    v = _orient(vl[:, idx])
    v = v / (v @ u)
    resid = np.max(np.abs(T @ u + theta * u))
    if resid > 1e-10 * scale:
        raise NotConverged(f"eigenvector residual {resid:.3g} too large")
    u.setflags(write=False)
    v.setflags(write=False)
    return SpectralInfo(theta, u, v)


def bilinear_exp(x: np.ndarray, A: np.ndarray, y: np.ndarray, grid) -> np.ndarray:
    """``x @ expm(A t) @ y`` for every ``t`` in ``grid``."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return np.array([x @ (mat_exp(A * t) @ y) for t in grid])
