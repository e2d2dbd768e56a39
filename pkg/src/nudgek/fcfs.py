"""Workload law and the FCFS baseline: ccdfs, decay rate and tail prefactors.

With ``alpha, S`` the job-size mixture, ``T = S + lam 1 alpha`` generates the
workload: ``P[Z > t] = lam beta expm(T t) (-T)^{-1} 1`` with
``beta = (1 - lam) alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .errors import NotConverged, SingularResolvent
from .numerics import SpectralInfo, bilinear_exp, block_upper, dominant_decay
from .phasetype import SystemConfig, ph_laplace, ph_moment

DUAL_FORM_TOL = 1e-10
STILDE_TOL = 1e-10


@dataclass(frozen=True)
class CcdfCurve:
    """``P[X > t]`` sampled on an ascending grid."""

    grid: np.ndarray
    values: np.ndarray
    label: str

    def __post_init__(self):
        if self.grid.shape != self.values.shape:
            raise ValueError("grid and values must have the same shape")

    def __len__(self) -> int:
        return len(self.grid)


class FcfsParts(NamedTuple):
    alpha: np.ndarray
    S: np.ndarray
    T: np.ndarray
    beta: np.ndarray
    inv_S_1: np.ndarray  # (-S)^{-1} 1
    inv_T_1: np.ndarray  # (-T)^{-1} 1


@lru_cache(maxsize=128)
def fcfs_parts(cfg: SystemConfig) -> FcfsParts:
    ph = cfg.mix
    alpha, S = np.asarray(ph.alpha), np.asarray(ph.S)
    n = len(alpha)
    T = S + cfg.lam * np.outer(np.ones(n), alpha)
    ones = np.ones(n)
    return FcfsParts(
        alpha=alpha,
        S=S,
        T=T,
        beta=(1.0 - cfg.lam) * alpha,
        inv_S_1=linalg.solve(-S, ones),
        inv_T_1=linalg.solve(-T, ones),
    )


def as_grid(grid) -> np.ndarray:
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(g < 0) or np.any(np.diff(g) < 0):
        raise ValueError("grid must be ascending and non-negative")
    return g


def default_grid(cfg: SystemConfig, points: int = 200) -> np.ndarray:
    """``t = 0`` followed by ``points`` geometric points on
    ``[0.01, max(20, 12/theta_Z)]``."""
    theta = spectral(cfg).theta
    t_max = max(20.0, 12.0 / theta)
    return np.concatenate([[0.0], np.geomspace(0.01, t_max, points)])


def workload_forms(cfg: SystemConfig, grid) -> tuple[np.ndarray, np.ndarray]:
    """Both expressions of the workload ccdf:
    ``lam alpha e^{Tt} (-S)^{-1} 1`` and ``lam beta e^{Tt} (-T)^{-1} 1``."""
    g = as_grid(grid)
    fp = fcfs_parts(cfg)
    first = cfg.lam * bilinear_exp(fp.alpha, fp.T, fp.inv_S_1, g)
    second = cfg.lam * bilinear_exp(fp.beta, fp.T, fp.inv_T_1, g)
    return first, second


def workload_ccdf(cfg: SystemConfig, grid=None) -> CcdfCurve:
    g = default_grid(cfg) if grid is None else as_grid(grid)
    first, second = workload_forms(cfg, g)
    gap = np.max(np.abs(first - second))
    if gap > DUAL_FORM_TOL:
        raise NotConverged(f"workload forms disagree by {gap:.3g}")
    return CcdfCurve(g, np.clip(second, 0.0, 1.0), "Z")


@dataclass(frozen=True)
class WorkloadSpectrum:
    """Decay rate ``theta`` and prefactor ``c_z`` of the workload, plus the
    job-size transforms at ``-theta`` that every tail constant is built from.

    ``lt``, ``lt1``, ``lt2`` are ``S~(-theta)``, ``S~_1(-theta)``,
    ``S~_2(-theta)``; a transform of an absent job type may be ``nan``.
    """

    theta: float
    c_z: float
    info: SpectralInfo
    lt: float
    lt1: float
    lt2: float


def _active_block(cfg: SystemConfig) -> np.ndarray:
    """Indices of mixture phases that belong to a type with positive weight."""
    idx = []
    if cfg.p > 0:
        idx.extend(range(cfg.n1))
    if cfg.p < 1:
        idx.extend(range(cfg.n1, cfg.n1 + cfg.n2))
    return np.asarray(idx, dtype=int)


def _safe_laplace(ph, s) -> float:
    try:
        return ph_laplace(ph, s)
    except SingularResolvent:
        return math.nan


@lru_cache(maxsize=128)
def spectral(cfg: SystemConfig) -> WorkloadSpectrum:
    """Decay rate ``theta_Z`` and ``c_Z = lam (beta u)(v (-T)^{-1} 1)``.

    Phases of an absent type (p = 0 or 1) are dropped first so that the
    restricted ``T`` is irreducible.
    """
    fp = fcfs_parts(cfg)
    keep = _active_block(cfg)
    T = fp.T[np.ix_(keep, keep)]
    beta = fp.beta[keep]
    inv_T_1 = linalg.solve(-T, np.ones(len(keep)))
    info = dominant_decay(T)
    theta = info.theta
    c_z = cfg.lam * (beta @ info.u) * (info.v @ inv_T_1)

    lt1 = _safe_laplace(cfg.ph1, -theta) if cfg.p > 0 else math.nan
    lt2 = _safe_laplace(cfg.ph2, -theta) if cfg.p < 1 else math.nan
    lt = cfg.p * (lt1 if cfg.p > 0 else 0.0) + (1 - cfg.p) * (lt2 if cfg.p < 1 else 0.0)
    # the Laplace transform of the inter-arrival time at theta pins S~(-theta)
    expected = (cfg.lam + theta) / cfg.lam
    if not abs(lt - expected) <= STILDE_TOL * max(1.0, expected):
        raise NotConverged(f"S~(-theta) = {lt!r} but (lam+theta)/lam = {expected!r}")
    return WorkloadSpectrum(theta, float(c_z), info, lt, lt1, lt2)


def response_ccdf(cfg: SystemConfig, grid=None) -> tuple[CcdfCurve, float]:
    """FCFS response-time ccdf and its prefactor ``c_FCFS = c_Z S~(-theta_Z)``.

    ``P[R > t] = (1-lam) alpha e^{St} 1 + lam (beta, 0) e^{Ut} [(-T)^{-1}1; 1]``
    with ``U = [[T, 1 alpha], [0, S]]``.
    """
    g = default_grid(cfg) if grid is None else as_grid(grid)
    fp = fcfs_parts(cfg)
    values = _conv_with_size(cfg, fp, fp.alpha, g)
    sp = spectral(cfg)
    return CcdfCurve(g, np.clip(values, 0.0, 1.0), "R"), sp.c_z * sp.lt


def _conv_with_size(cfg, fp: FcfsParts, size_alpha, g, size_S=None) -> np.ndarray:
    """``P[Z + X > t]`` for ``X ~ (size_alpha, size_S)`` independent of ``Z``."""
    size_S = fp.S if size_S is None else size_S
    n, m = len(fp.alpha), len(size_alpha)
    U = block_upper(fp.T, np.outer(np.ones(n), size_alpha), size_S)
    x = np.concatenate([fp.beta, np.zeros(m)])
    y = np.concatenate([fp.inv_T_1, np.ones(m)])
    idle = bilinear_exp(size_alpha, size_S, np.ones(m), g)
    return (1.0 - cfg.lam) * idle + cfg.lam * bilinear_exp(x, U, y, g)


def type_response_ccdf(cfg: SystemConfig, job_type: int, grid=None) -> CcdfCurve:
    """FCFS response time of a type-``job_type`` job, ``Z + X_i``."""
    g = default_grid(cfg) if grid is None else as_grid(grid)
    ph = {1: cfg.ph1, 2: cfg.ph2}[job_type]
    values = _conv_with_size(cfg, fcfs_parts(cfg), np.asarray(ph.alpha), g, np.asarray(ph.S))
    return CcdfCurve(g, np.clip(values, 0.0, 1.0), f"R_fcfs{job_type}")


class FcfsMeans(NamedTuple):
    E_R: float
    E_R_moment: float
    E_Z: float


def means(cfg: SystemConfig) -> FcfsMeans:
    """Mean FCFS response time (matrix and Pollaczek-Khinchine forms) and
    mean workload ``E[Z] = lam E[X^2] / (2 (1 - lam))``."""
    fp = fcfs_parts(cfg)
    x = linalg.solve(fp.T, linalg.solve(fp.T, np.ones(len(fp.alpha))))
    e_r = 1.0 + cfg.lam * fp.beta @ x
    m2 = ph_moment(cfg.mix, 2)
    e_z = cfg.lam * m2 / (2.0 * (1.0 - cfg.lam))
    e_r_moment = 1.0 + e_z
    if abs(e_r - e_r_moment) > 1e-10 * max(1.0, e_r):
        raise NotConverged(f"E[R] forms disagree: {e_r!r} vs {e_r_moment!r}")
    return FcfsMeans(float(e_r), float(e_r_moment), float(e_z))
