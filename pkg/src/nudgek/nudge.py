"""Nudge-K analytics: swap probabilities, mean response time and the exact
per-type waiting/response-time distributions with their tail prefactors.

Type-2 jobs are handled through the swap-count chain ``M`` (a type-2 job
that sees workload ``s`` is passed with probability ``e_1 expm(M s) e_{K+1}``).
Type-1 jobs are handled through the FCFS queue-length law: a type-1 arrival
passes ``min(K, i)`` jobs, where ``i`` is the number of type-2 jobs waiting at
the back of the FCFS queue.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from . import fcfs
from .errors import NotConverged, SingularMatrix
from .fcfs import CcdfCurve, as_grid, default_grid, fcfs_parts, spectral
from .numerics import bilinear_exp, block_upper, kron_sum, mat_exp
from .phasetype import SystemConfig

MAX_CURVE_K = 500
MASS_TOL = 1e-10


def _grid(cfg, grid):
    return default_grid(cfg) if grid is None else as_grid(grid)


def _check_curve_k(cfg: SystemConfig):
    if not cfg.k_is_inf and cfg.k > MAX_CURVE_K:
        raise ValueError(
            f"K={cfg.k} exceeds {MAX_CURVE_K}; distribution curves grow as O(K^3). "
            "Tail constants and ATIR have no such limit."
        )


def _no_pass_prob(cfg: SystemConfig) -> float:
    """``(1-p)^K`` with the ``K = inf`` limit."""
    if cfg.k_is_inf:
        return 1.0 if cfg.p == 0 else 0.0
    return (1.0 - cfg.p) ** cfg.k


# -- type-2 jobs ---------------------------------------------------------------


def swap_matrix(cfg: SystemConfig) -> np.ndarray | None:
    """Transient part ``M`` of the swap-count chain; ``None`` for ``K = 0``.

    Finite ``K``: states ``1..K`` count type-2 arrivals seen so far, state
    ``K+1`` means a type-1 arrival has passed the tagged job. ``K = inf``
    collapses to ``[[-lam p, lam p], [0, 0]]``.
    """
    lam, p = cfg.lam, cfg.p
    if cfg.k_is_inf:
        return np.array([[-lam * p, lam * p], [0.0, 0.0]])
    K = cfg.k
    if K == 0:
        return None
    M = np.zeros((K + 1, K + 1))
    for i in range(K):
        M[i, i] = -lam
        M[i, K] = lam * p
        if i < K - 1:
            M[i, i + 1] = lam * (1.0 - p)
    return M


def swap_prob_given_workload(cfg: SystemConfig, s):
    """Probability that a type-2 job that finds workload ``s`` gets passed."""
    ss = np.atleast_1d(np.asarray(s, dtype=float))
    M = swap_matrix(cfg)
    if M is None:
        out = np.zeros_like(ss)
    elif cfg.k_is_inf:
        out = -np.expm1(-cfg.lam * cfg.p * ss)
    else:
        out = np.array([mat_exp(M * x)[0, -1] for x in ss])
    out = np.clip(out, 0.0, 1.0 - _no_pass_prob(cfg))
    return float(out[0]) if np.ndim(s) == 0 else out


def _kron_parts(cfg: SystemConfig, M: np.ndarray):
    fp = fcfs_parts(cfg)
    m = M.shape[0]
    e_first = np.zeros(m)
    e_first[0] = 1.0
    e_last = np.zeros(m)
    e_last[-1] = 1.0
    TM = kron_sum(fp.T, M)
    x = np.kron(fp.beta, e_first)
    y = np.kron(np.ones(len(fp.alpha)), e_last)
    return TM, x, y


def p_swap_kron(cfg: SystemConfig) -> float:
    """``-lam (beta (x) e_1)(T (+) M)^{-1}(1 (x) e_{K+1})``, for any ``K``
    including the 2x2 ``K = inf`` chain."""
    M = swap_matrix(cfg)
    if M is None or cfg.p == 1:
        return 0.0
    TM, x, y = _kron_parts(cfg, M)
    return float(cfg.lam * x @ linalg.solve(-TM, y))


def p_swap(cfg: SystemConfig) -> float:
    """Fraction of type-2 jobs that are passed by a type-1 job."""
    if cfg.p == 1 or (not cfg.k_is_inf and cfg.k == 0):
        return 0.0
    if cfg.k_is_inf:
        fp = fcfs_parts(cfg)
        n = len(fp.alpha)
        inner = linalg.solve(cfg.lam * cfg.p * np.eye(n) - fp.T, np.ones(n))
        return float(cfg.lam * (1.0 - fp.beta @ inner))
    return p_swap_kron(cfg)


def mean_response(cfg: SystemConfig) -> float:
    """``E[R_Nudge-K] = E[R] + (1-p) p_swap (E[X1] - E[X2])``."""
    e_r = fcfs.means(cfg).E_R
    return e_r + (1.0 - cfg.p) * p_swap(cfg) * (cfg.mean1 - cfg.mean2)


def w2_ccdf(cfg: SystemConfig, grid=None) -> CcdfCurve:
    """Type-2 waiting time: the workload found on arrival, plus one type-1
    job size if the job is passed later on."""
    _check_curve_k(cfg)
    g = _grid(cfg, grid)
    z = fcfs.workload_ccdf(cfg, g).values
    M = swap_matrix(cfg)
    if M is None or cfg.p == 0:
        return CcdfCurve(g, z, "W2")
    TM, x, y = _kron_parts(cfg, M)
    a1 = np.asarray(cfg.ph1.alpha)
    n1 = len(a1)
    T2 = block_upper(TM, np.outer(y, a1), cfg.ph1.S)
    extra = bilinear_exp(np.concatenate([x, np.zeros(n1)]), T2,
                         np.concatenate([np.zeros(len(x)), np.ones(n1)]), g)
    return CcdfCurve(g, np.clip(z + cfg.lam * extra, 0.0, 1.0), "W2")


def r2_ccdf(cfg: SystemConfig, grid=None) -> CcdfCurve:
    """Type-2 response time ``W2 + X2``."""
    _check_curve_k(cfg)
    g = _grid(cfg, grid)
    base = fcfs.type_response_ccdf(cfg, 2, g).values
    M = swap_matrix(cfg)
    if M is None or cfg.p == 0:
        return CcdfCurve(g, base, "R2")
    TM, x, y = _kron_parts(cfg, M)
    ph1, ph2 = cfg.ph1, cfg.ph2
    a1, a2 = np.asarray(ph1.alpha), np.asarray(ph2.alpha)
    m, n1, n2 = len(x), len(a1), len(a2)
    U1 = np.zeros((m + n1 + n2, m + n1 + n2))
    U1[:m, :m] = TM
    U1[:m, m:m + n1] = np.outer(y, a1)
    U1[:m, m + n1:] = -np.outer(y, a2)
    U1[m:m + n1, m:m + n1] = ph1.S
    U1[m:m + n1, m + n1:] = np.outer(ph1.exit_vector, a2)
    U1[m + n1:, m + n1:] = ph2.S
    left = np.concatenate([x, np.zeros(n1 + n2)])
    right = np.concatenate([np.zeros(m), np.ones(n1 + n2)])
    extra = bilinear_exp(left, U1, right, g)
    return CcdfCurve(g, np.clip(base + cfg.lam * extra, 0.0, 1.0), "R2")


# -- type-1 jobs ---------------------------------------------------------------


@lru_cache(maxsize=128)
def fcfs_qlen_geometric(cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """``(pi_1, R)`` with ``P[Q = q, phase i] = (pi_1 R^{q-1})_i`` for ``q >= 1``,
    ``R = -lam (S - lam I + lam 1 alpha)^{-1}``, ``pi_1 = (1-lam) alpha R``."""
    fp = fcfs_parts(cfg)
    n = len(fp.alpha)
    A = fp.T - cfg.lam * np.eye(n)
    try:
        R = -cfg.lam * linalg.inv(A)
    except linalg.LinAlgError as exc:
        raise SingularMatrix("S - lam I + lam 1 alpha is singular") from exc
    rho = np.max(np.abs(linalg.eigvals(R)))
    if not rho < 1:
        raise NotConverged(f"spectral radius of R is {rho}")
    pi1 = (1.0 - cfg.lam) * fp.alpha @ R
    total = (1.0 - cfg.lam) + pi1 @ linalg.solve(np.eye(n) - R, np.ones(n))
    if abs(total - 1.0) > MASS_TOL:
        raise NotConverged(f"queue-length law has mass {total!r}")
    return pi1, R


@dataclass(frozen=True)
class ReducedQueueLaw:
    """Queue content (jobs ahead, server phase) seen by a type-1 arrival
    once the type-2 jobs it passes are removed.

    ``pi0_1`` and ``pi1_1 R^{q-1}`` (q >= 1): jobs ahead of it are full jobs.
    ``pi0_2 R^q`` (q >= 0): additionally one type-1 job sits directly ahead.
    ``R_inv`` is ``(lam I - T) / lam``.
    """

    pi0_1: np.ndarray
    pi1_1: np.ndarray
    pi0_2: np.ndarray
    pi0_2_over_p: np.ndarray
    R_matrix: np.ndarray
    R_inv: np.ndarray
    pi1: np.ndarray

    def mass(self) -> float:
        n = len(self.pi1)
        geo = linalg.solve(np.eye(n) - self.R_matrix, np.ones(n))
        return float(self.pi0_1.sum() + (self.pi1_1 + self.pi0_2) @ geo)


@lru_cache(maxsize=128)
def reduced_qlen(cfg: SystemConfig) -> ReducedQueueLaw:
    pi1, R = fcfs_qlen_geometric(cfg)
    fp = fcfs_parts(cfg)
    n = len(pi1)
    I = np.eye(n)
    q = 1.0 - cfg.p
    if cfg.k_is_inf:
        head = linalg.solve((I - q * R).T, pi1)  # pi1 (I - qR)^{-1}
        pi0_1 = head
        pi1_1 = np.zeros(n)
        pi0_2_over_p = head @ R
    else:
        K = cfg.k
        RK = np.linalg.matrix_power(R, K)
        geo_inv = I - q * R
        pi0_1 = linalg.solve(geo_inv.T, pi1 @ (I - q ** (K + 1) * RK @ R))
        pi1_1 = q**K * (pi1 @ RK @ R)
        pi0_2_over_p = linalg.solve(geo_inv.T, pi1 @ R @ (I - q**K * RK))
    R_inv = (cfg.lam * I - fp.T) / cfg.lam
    law = ReducedQueueLaw(
        pi0_1=pi0_1,
        pi1_1=pi1_1,
        pi0_2=cfg.p * pi0_2_over_p,
        pi0_2_over_p=pi0_2_over_p,
        R_matrix=R,
        R_inv=R_inv,
        pi1=pi1,
    )
    mass = law.mass()
    if abs(mass - cfg.lam) > MASS_TOL:
        raise NotConverged(f"reduced queue laws carry mass {mass!r}, expected {cfg.lam!r}")
    return law


def _w1_terms(cfg: SystemConfig):
    """Pieces of ``P[W1 > t] = nu1 e^{Gt} xi + c0 e^{St} 1 - d e^{St} e_1``,
    with ``G = S^T (x) I + (s* alpha)^T (x) R`` and ``e_1`` the indicator of
    the type-1 phases (``d`` already carries the ``1/p`` factor)."""
    fp = fcfs_parts(cfg)
    law = reduced_qlen(cfg)
    n = len(fp.alpha)
    I = np.eye(n)
    R, R_inv = law.R_matrix, law.R_inv
    exit_vec = -fp.S.sum(axis=1)
    G = np.kron(fp.S.T, I) + np.kron(np.outer(exit_vec, fp.alpha).T, R)
    xi = I.reshape(-1, order="F")
    ones = np.ones(n)
    type1 = np.concatenate([np.ones(cfg.n1), np.zeros(cfg.n2)])
    main = linalg.solve((I - R).T, law.pi1_1 + law.pi0_2) + law.pi1_1 @ R_inv
    d = law.pi0_2_over_p @ R_inv
    nu1 = np.kron(ones, main) + np.kron(type1, d)
    c0 = law.pi0_1 - law.pi1_1 @ R_inv
    return G, xi, nu1, c0, d, type1


def w1_ccdf(cfg: SystemConfig, grid=None) -> CcdfCurve:
    """Type-1 waiting time from the reduced FCFS queue-length laws."""
    g = _grid(cfg, grid)
    if cfg.p == 0:
        return CcdfCurve(g, fcfs.workload_ccdf(cfg, g).values, "W1")
    fp = fcfs_parts(cfg)
    G, xi, nu1, c0, d, type1 = _w1_terms(cfg)
    values = (
        bilinear_exp(nu1, G, xi, g)
        + bilinear_exp(c0, fp.S, np.ones(len(c0)), g)
        - bilinear_exp(d, fp.S, type1, g)
    )
    return CcdfCurve(g, np.clip(values, 0.0, 1.0), "W1")


def r1_ccdf(cfg: SystemConfig, grid=None) -> CcdfCurve:
    """Type-1 response time ``W1 + X1``: the atom ``P[W1 = 0] = 1 - lam`` and
    the density of ``W1`` convolved with ``X1``."""
    g = _grid(cfg, grid)
    if cfg.p == 0:
        return CcdfCurve(g, fcfs.type_response_ccdf(cfg, 1, g).values, "R1")
    fp = fcfs_parts(cfg)
    G, xi, nu1, c0, d, type1 = _w1_terms(cfg)
    a1, S1 = np.asarray(cfg.ph1.alpha), np.asarray(cfg.ph1.S)
    n1 = len(a1)
    cat = np.concatenate
    w1 = (
        bilinear_exp(nu1, G, xi, g)
        + bilinear_exp(c0, fp.S, np.ones(len(c0)), g)
        - bilinear_exp(d, fp.S, type1, g)
    )
    idle = bilinear_exp(a1, S1, np.ones(n1), g)
    A1 = block_upper(G, np.outer(G @ xi, a1), S1)
    A_full = block_upper(fp.S, np.outer(fp.S @ np.ones(len(c0)), a1), S1)
    A_type1 = block_upper(fp.S, np.outer(fp.S @ type1, a1), S1)
    z1 = np.zeros(n1)
    o1 = np.ones(n1)
    values = (
        w1
        + (1.0 - cfg.lam) * idle
        - bilinear_exp(cat([nu1, z1]), A1, cat([np.zeros(len(nu1)), o1]), g)
        - bilinear_exp(cat([c0, z1]), A_full, cat([np.zeros(len(c0)), o1]), g)
        + bilinear_exp(cat([d, z1]), A_type1, cat([np.zeros(len(d)), o1]), g)
    )
    return CcdfCurve(g, np.clip(values, 0.0, 1.0), "R1")


# -- tails and the mixed response time -----------------------------------------


@dataclass(frozen=True)
class TailConstants:
    """``c = lim e^{theta_Z t} P[. > t]`` for every law; all share ``theta``."""

    theta: float
    c_z: float
    c_fcfs: float
    c_w1: float
    c_r1: float
    c_w2: float
    c_r2: float

    def atir(self, p: float) -> float:
        """``1 - (p c_R1 + (1-p) c_R2) / c_FCFS``."""
        mixed = (p * self.c_r1 if p > 0 else 0.0) + ((1.0 - p) * self.c_r2 if p < 1 else 0.0)
        return 1.0 - mixed / self.c_fcfs


def tail_constants(cfg: SystemConfig) -> TailConstants:
    sp = spectral(cfg)
    c_z, lt, lt1, lt2 = sp.c_z, sp.lt, sp.lt1, sp.lt2
    p = cfg.p
    stay = _no_pass_prob(cfg)  # (1-p)^K
    if cfg.k_is_inf:
        stay_over = 0.0  # (1-p)^K / S~^K -> 0 since S~ > 1
    else:
        stay_over = ((1.0 - p) / lt) ** cfg.k

    c_w2 = stay * c_z + ((1.0 - stay) * c_z * lt1 if stay < 1 else 0.0)
    passed = p * (lt1 / lt) * (1.0 - stay_over) / (1.0 - (1.0 - p) / lt) if p > 0 else 0.0
    c_w1 = c_z * (stay_over + passed)
    c_r1 = c_w1 * lt1 if p > 0 else math.nan
    c_r2 = c_w2 * lt2 if p < 1 else math.nan
    return TailConstants(
        theta=sp.theta,
        c_z=c_z,
        c_fcfs=c_z * lt,
        c_w1=c_w1,
        c_r1=c_r1,
        c_w2=c_w2,
        c_r2=c_r2,
    )


def nudge_response_ccdf(cfg: SystemConfig, grid=None) -> CcdfCurve:
    """``P[R_Nudge > t] = p P[R1 > t] + (1-p) P[R2 > t]``."""
    g = _grid(cfg, grid)
    values = np.zeros_like(g)
    if cfg.p > 0:
        values = values + cfg.p * r1_ccdf(cfg, g).values
    if cfg.p < 1:
        values = values + (1.0 - cfg.p) * r2_ccdf(cfg, g).values
    return CcdfCurve(g, values, "R_Nudge")


@dataclass(frozen=True)
class TirCurve:
    fcfs_ccdf: CcdfCurve
    nudge_ccdf: CcdfCurve
    tir: np.ndarray


def tir_curve(cfg: SystemConfig, grid=None) -> TirCurve:
    """Tail improvement ratio ``1 - P[R_Nudge > t] / P[R_FCFS > t]``."""
    g = _grid(cfg, grid)
    base, _ = fcfs.response_ccdf(cfg, g)
    nudge = nudge_response_ccdf(cfg, g)
    with np.errstate(divide="ignore", invalid="ignore"):
        tir = np.where(base.values > 0, 1.0 - nudge.values / base.values, 0.0)
    return TirCurve(base, nudge, tir)
