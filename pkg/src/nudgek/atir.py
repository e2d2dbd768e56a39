"""Asymptotic tail improvement ratio of Nudge-K over FCFS and the optimal K.

Everything here is a closed form in three numbers: the transforms
``S~(-theta_Z)``, ``S~_1(-theta_Z)``, ``S~_2(-theta_Z)`` of the job sizes at
minus the workload decay rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .errors import MeanOrderViolation
from .fcfs import means, spectral
from .phasetype import SystemConfig, parse_k, ph_moment

FLOOR_GUARD = 1e-12


class Weights(NamedTuple):
    w1: float
    w: float
    lt: float
    lt1: float
    lt2: float


def weights(cfg: SystemConfig) -> Weights:
    """``w1 = p S~_1/S~`` and ``w = (1-p)/S~``, all at ``-theta_Z``."""
    sp = spectral(cfg)
    w1 = cfg.p * sp.lt1 / sp.lt if cfg.p > 0 else 0.0
    return Weights(w1, (1.0 - cfg.p) / sp.lt, sp.lt, sp.lt1, sp.lt2)


def _degenerate(cfg: SystemConfig) -> bool:
    return cfg.p <= 0 or cfg.p >= 1


def atir(cfg: SystemConfig, k=None) -> float:
    """``w1 (S~_2 - 1) w (1 - w^K)/(1 - w) - (1 - w1)(S~_1 - 1)(1 - (1-p)^K)``."""
    k = cfg.k if k is None else parse_k(k)
    if _degenerate(cfg) or k == 0:
        return 0.0
    w1, w, _, lt1, lt2 = weights(cfg)
    if math.isinf(k):
        wk, qk = 0.0, 0.0
    else:
        wk, qk = w**k, (1.0 - cfg.p) ** k
    return w1 * (lt2 - 1.0) * w * (1.0 - wk) / (1.0 - w) - (1.0 - w1) * (lt1 - 1.0) * (1.0 - qk)


def delta_atir(cfg: SystemConfig, k: int) -> float:
    """``ATIR(K+1) - ATIR(K)`` in closed form."""
    k = parse_k(k)
    if math.isinf(k):
        raise ValueError("delta_atir needs a finite K")
    if _degenerate(cfg):
        return 0.0
    w1, w, _, lt1, lt2 = weights(cfg)
    p = cfg.p
    return w1 * (lt2 - 1.0) * w ** (k + 1) - p * (1.0 - w1) * (lt1 - 1.0) * (1.0 - p) ** k


def _guarded_floor(x: float) -> int:
    # an (almost) integer x means ATIR(x-1) == ATIR(x); take the smaller K
    nearest = round(x)
    if abs(x - nearest) <= FLOOR_GUARD * max(1.0, abs(x)):
        return int(nearest) - 1
    return math.floor(x)


def k_opt_real(cfg: SystemConfig) -> float:
    """``log(S~_1 (S~_2 - 1) / (S~_2 (S~_1 - 1))) / log S~`` before flooring."""
    _, _, lt, lt1, lt2 = weights(cfg)
    return math.log(lt1 * (lt2 - 1.0) / (lt2 * (lt1 - 1.0))) / math.log(lt)


def k_opt(cfg: SystemConfig) -> int:
    """Integer K maximizing ATIR(K); 0 when no swapping helps."""
    if _degenerate(cfg):
        return 0
    return max(0, _guarded_floor(k_opt_real(cfg)))


def _expo_rate(ph) -> Optional[float]:
    return float(-ph.S[0, 0]) if ph.n == 1 else None


def k_opt_expo(cfg: SystemConfig) -> Optional[int]:
    """``floor(log(mu1/mu2) / log S~(-theta_Z))`` when both types are
    exponential, else ``None``."""
    mu1, mu2 = _expo_rate(cfg.ph1), _expo_rate(cfg.ph2)
    if mu1 is None or mu2 is None or _degenerate(cfg):
        return None
    lt = spectral(cfg).lt
    return max(0, _guarded_floor(math.log(mu1 / mu2) / math.log(lt)))


class Positivity(NamedTuple):
    for_k: bool
    for_k1: bool
    for_all_k: bool


def size_ratio_statistic(cfg: SystemConfig) -> float:
    """``(1 - 1/S~_2) / (1 - 1/S~_1)`` at ``-theta_Z``."""
    _, _, _, lt1, lt2 = weights(cfg)
    return (1.0 - 1.0 / lt2) / (1.0 - 1.0 / lt1)


def positivity_conditions(cfg: SystemConfig, k=None) -> Positivity:
    """Threshold tests for ATIR(K) > 0, ATIR(1) > 0 and ATIR(K) > 0 for all K."""
    k = cfg.k if k is None else parse_k(k)
    if _degenerate(cfg):
        return Positivity(False, False, False)
    sp = spectral(cfg)
    lam, p, theta = cfg.lam, cfg.p, sp.theta
    ratio = size_ratio_statistic(cfg)
    all_k = 1.0 + theta / (lam * p)
    if k == 0:
        for_k = False
    elif math.isinf(k):
        for_k = ratio > all_k
    else:
        shrink = lam * (1.0 - p) / (lam + theta)
        for_k = ratio > all_k * (1.0 - (1.0 - p) ** k) / (1.0 - shrink**k)
    return Positivity(for_k, ratio > 1.0 + theta / lam, ratio > all_k)


class HeavyTraffic(NamedTuple):
    k_approx: int
    k_approx_workload: int
    kingman_theta: float
    k_kingman: int


def heavy_traffic_k(cfg: SystemConfig) -> HeavyTraffic:
    """Heavy-traffic approximations of K_opt.

    ``k_approx`` is ``floor(log(E[X2]/E[X1]) E[X^2] / (2 (1 - lam)))``;
    ``k_approx_workload`` uses ``E[Z]`` in place of ``E[X^2]/(2(1-lam))``;
    ``k_kingman`` is ``floor(log(E[X2]/E[X1]) / log(1 + theta_HT))`` with
    Kingman's heavy-traffic decay rate ``theta_HT``.
    """
    ratio = cfg.mean2 / cfg.mean1
    if ratio < 1.0 - 1e-12:
        raise MeanOrderViolation(
            f"E[X2]/E[X1] = {ratio:.6g} < 1: heavy traffic gives no tail improvement"
        )
    lam = cfg.lam
    log_ratio = max(math.log(ratio), 0.0)
    m2 = ph_moment(cfg.mix, 2)
    k_approx = math.floor(log_ratio * m2 / (2.0 * (1.0 - lam)))
    k_ez = math.floor(log_ratio * means(cfg).E_Z)
    theta_ht = 2.0 * (1.0 / lam - 1.0) / (1.0 / lam**2 + m2 - 1.0)
    k_kingman = math.floor(log_ratio / math.log1p(theta_ht))
    return HeavyTraffic(k_approx, k_ez, theta_ht, k_kingman)


@dataclass
class AtirReport:
    w1: float
    w: float
    atir_by_k: dict = field(default_factory=dict)
    k_opt: int = 0
    conditions: Optional[Positivity] = None
    heavy_traffic_k: Optional[int] = None


def atir_report(cfg: SystemConfig, ks=(0, 1, 2, 3, 5, 10, math.inf)) -> AtirReport:
    w1, w, *_ = weights(cfg)
    ko = k_opt(cfg)
    keys = sorted(set(ks) | {ko}, key=float)
    try:
        ht = heavy_traffic_k(cfg).k_approx
    except MeanOrderViolation:
        ht = None
    return AtirReport(
        w1=w1,
        w=w,
        atir_by_k={k: atir(cfg, k) for k in keys},
        k_opt=ko,
        conditions=positivity_conditions(cfg),
        heavy_traffic_k=ht,
    )
