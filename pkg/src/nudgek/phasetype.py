"""Phase-type job-size laws and the two-type system configuration.

A phase-type (PH) distribution is the absorption time of a finite CTMC with
initial row vector ``alpha`` and sub-generator ``S``; its ccdf is
``alpha @ expm(S t) @ 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Union

import numpy as np
from scipy import linalg

from .errors import (
    DimensionMismatch,
    InvalidScv,
    InvalidShape,
    NonStochasticAlpha,
    NotSubGenerator,
    SingularResolvent,
    UnstableSystem,
)

SIGN_TOL = 1e-12
SUM_TOL = 1e-10
MEAN_TOL = 1e-12

KValue = Union[int, float]  # non-negative int or math.inf


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PhaseType:
    """Validated PH representation ``(alpha, S)``; build it with :func:`ph_make`."""

    alpha: np.ndarray
    S: np.ndarray

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @cached_property
    def exit_vector(self) -> np.ndarray:
        """``s* = (-S) 1``, the absorption rate out of every phase."""
        return _frozen(-self.S.sum(axis=1))

    @cached_property
    def decay_rate(self) -> float:
        """``-lim log P[X > t] / t``: minus the right-most eigenvalue of S."""
        return float(-np.max(linalg.eigvals(self.S).real))

    @cached_property
    def mean(self) -> float:
        return ph_moment(self, 1)

    @cached_property
    def scv(self) -> float:
        m1 = ph_moment(self, 1)
        return ph_moment(self, 2) / m1**2 - 1.0

    def scaled_to_mean(self, mean: float) -> "PhaseType":
        """Time-rescale so the mean becomes ``mean``; shape and SCV are kept."""
        if not mean > 0:
            raise ValueError(f"mean must be positive, got {mean}")
        return PhaseType(self.alpha, _frozen(self.S * (self.mean / mean)))

    def __repr__(self) -> str:
        return f"PhaseType(n={self.n}, mean={self.mean:.6g}, scv={self.scv:.6g})"


def ph_make(alpha, S) -> PhaseType:
    """Validate and wrap a PH representation.

    Raises
    ------
    DimensionMismatch
        ``alpha`` is not a vector or ``S`` is not a conformable square matrix.
    NonStochasticAlpha
        ``alpha`` has negative entries or does not sum to one.
    NotSubGenerator
        Wrong sign pattern, positive row sums, or singular ``S``.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if alpha.ndim != 1:
        raise DimensionMismatch(f"alpha must be a vector, got shape {alpha.shape}")
    n = alpha.shape[0]
    if S.shape != (n, n):
        raise DimensionMismatch(f"S has shape {S.shape}, expected {(n, n)}")
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(S))):
        raise NotSubGenerator("non-finite entries")
    if np.any(alpha < -SIGN_TOL) or abs(alpha.sum() - 1.0) > SUM_TOL:
        raise NonStochasticAlpha(f"alpha={alpha} is not a probability vector")
    off = S - np.diag(np.diag(S))
    if np.any(off < -SIGN_TOL):
        raise NotSubGenerator("negative off-diagonal rate")
    if np.any(np.diag(S) >= 0):
        raise NotSubGenerator("diagonal entries must be negative")
    if np.any(S.sum(axis=1) > SIGN_TOL):
        raise NotSubGenerator("row sums must be non-positive")
    if np.max(linalg.eigvals(S).real) >= -SIGN_TOL:
        raise NotSubGenerator("S is singular (some phase never exits)")
    return PhaseType(_frozen(np.clip(alpha, 0.0, None)), _frozen(np.where(off < 0, 0.0, S)))


# -- standard families ---------------------------------------------------------


def expo(mean: float = 1.0) -> PhaseType:
    if not mean > 0:
        raise ValueError("mean must be positive")
    return ph_make([1.0], [[-1.0 / mean]])


def erlang(phases: int, mean: float = 1.0) -> PhaseType:
    if int(phases) != phases or phases < 1:
        raise ValueError(f"phases must be a positive integer, got {phases}")
    if not mean > 0:
        raise ValueError("mean must be positive")
    k = int(phases)
    rate = k / mean
    S = -rate * np.eye(k) + rate * np.eye(k, k=1)
    alpha = np.zeros(k)
    alpha[0] = 1.0
    return ph_make(alpha, S)


def h2_balanced(mean: float, scv: float) -> PhaseType:
    """Two-phase hyperexponential with balanced means (``p1/mu1 == p2/mu2``)."""
    if not scv > 1:
        raise InvalidScv(f"a two-phase hyperexponential needs scv > 1, got {scv}")
    if not mean > 0:
        raise ValueError("mean must be positive")
    p1 = 0.5 * (1.0 + math.sqrt((scv - 1.0) / (scv + 1.0)))
    p2 = 1.0 - p1
    mu1, mu2 = 2.0 * p1 / mean, 2.0 * p2 / mean
    return ph_make([p1, p2], np.diag([-mu1, -mu2]))


def h2_shape(mean: float, scv: float, f: float) -> PhaseType:
    """Two-phase hyperexponential where the small-mean phase carries a
    fraction ``f`` of the mean (its share ``p1/mu1 = f * mean``).

    With phase means ``a1 < a2`` the moment conditions reduce to the
    quadratic ``f x^2 + (1 - 2f - h) x + f h = 0`` in ``x = a1/mean``,
    ``h = (scv + 1)/2``; the smaller root is the small-mean phase.
    """
    if not scv > 1:
        raise InvalidScv(f"a two-phase hyperexponential needs scv > 1, got {scv}")
    if not 0 < f < 1:
        raise InvalidShape(f"shape parameter f must lie in (0, 1), got {f}")
    if not mean > 0:
        raise ValueError("mean must be positive")
    h = 0.5 * (scv + 1.0)
    b = h + 2.0 * f - 1.0
    disc = b * b - 4.0 * f * f * h
    x = (b - math.sqrt(disc)) / (2.0 * f)
    a1 = x * mean
    a2 = (h * mean - f * a1) / (1.0 - f)
    p1 = f * mean / a1
    p2 = (1.0 - f) * mean / a2
    if not (0 < p1 < 1 and a1 < a2):
        raise InvalidShape(f"no valid H2 for scv={scv}, f={f}")
    # p1 + p2 == 1 analytically; renormalize away the rounding
    total = p1 + p2
    return ph_make([p1 / total, p2 / total], np.diag([-1.0 / a1, -1.0 / a2]))


_FAMILIES = {
    "expo": lambda mean=1.0: expo(mean),
    "erlang": lambda phases, mean=1.0: erlang(phases, mean),
    "h2_balanced": lambda scv, mean=1.0: h2_balanced(mean, scv),
    "h2_shape": lambda scv, f, mean=1.0: h2_shape(mean, scv, f),
}


def ph_standard(kind: str, **params) -> PhaseType:
    """Build one of the standard families by name.

    ``kind`` is one of ``expo(mean)``, ``erlang(phases, mean)``,
    ``h2_balanced(mean, scv)`` or ``h2_shape(mean, scv, f)``.
    """
    try:
        factory = _FAMILIES[kind]
    except KeyError:
        raise ValueError(f"unknown distribution family {kind!r}") from None
    return factory(**params)


# -- evaluation ----------------------------------------------------------------


def ph_moment(ph: PhaseType, k: int) -> float:
    """``E[X^k] = k! alpha (-S)^{-k} 1``."""
    if int(k) != k or k < 1:
        raise ValueError(f"moment order must be a positive integer, got {k}")
    x = np.ones(ph.n)
    for _ in range(int(k)):
        x = linalg.solve(-ph.S, x)
    return float(math.factorial(int(k)) * ph.alpha @ x)


def ph_laplace(ph: PhaseType, s: float) -> float:
    """Laplace-Stieltjes transform ``alpha (sI - S)^{-1} s*``.

    Negative ``s`` is allowed down to (not including) ``-decay_rate``; the
    tail analysis evaluates transforms at ``-theta_Z``.
    """
    if s == 0:
        return 1.0
    if s <= -ph.decay_rate:
        raise SingularResolvent(
            f"transform diverges at s={s} (decay rate {ph.decay_rate:.6g})"
        )
    y = linalg.solve(s * np.eye(ph.n) - ph.S, ph.exit_vector)
    return float(ph.alpha @ y)


def ph_ccdf(ph: PhaseType, t):
    """``P[X > t]`` for a scalar or an array of times."""
    from .numerics import mat_exp

    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be non-negative")
    ones = np.ones(ph.n)
    out = np.array([ph.alpha @ mat_exp(ph.S * ti) @ ones for ti in ts])
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if np.ndim(t) == 0 else out


def ph_mix(p: float, ph1: PhaseType, ph2: PhaseType) -> PhaseType:
    """Mixture ``p X1 + (1-p) X2`` as one PH: ``alpha = (p a1, (1-p) a2)``,
    block-diagonal ``S``. Phases of a zero-weight component stay in place."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    alpha = np.concatenate([p * ph1.alpha, (1.0 - p) * ph2.alpha])
    S = linalg.block_diag(ph1.S, ph2.S)
    return PhaseType(_frozen(alpha), _frozen(S))


# -- system configuration --------------------------------------------------------


def parse_k(k) -> KValue:
    """Accept a non-negative integer, ``math.inf`` or the token ``"inf"``."""
    if isinstance(k, str):
        token = k.strip().lower()
        if token in ("inf", "infinity"):
            return math.inf
        k = token
    try:
        if isinstance(k, float) and math.isinf(k) and k > 0:
            return math.inf
        kf = float(k)
    except (TypeError, ValueError):
        raise ValueError(f"K must be a non-negative integer or 'inf', got {k!r}") from None
    if kf < 0 or kf != int(kf):
        raise ValueError(f"K must be a non-negative integer or 'inf', got {k!r}")
    return int(kf)


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Two-type M/PH/1 queue under Nudge-K with ``E[X] = 1`` (load = ``lam``)."""

    lam: float
    p: float
    ph1: PhaseType
    ph2: PhaseType
    k: KValue = 1

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"arrival rate must be positive, got {self.lam}")
        if self.lam >= 1:
            raise UnstableSystem(f"load {self.lam} >= 1")
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "k", parse_k(self.k))
        mean = self.p * self.ph1.mean + (1 - self.p) * self.ph2.mean
        if abs(mean - 1.0) > MEAN_TOL:
            raise ValueError(f"E[X] must equal 1 (got {mean!r}); use normalize_system")

    @property
    def k_is_inf(self) -> bool:
        return math.isinf(self.k)

    @cached_property
    def mix(self) -> PhaseType:
        return ph_mix(self.p, self.ph1, self.ph2)

    @property
    def n1(self) -> int:
        return self.ph1.n

    @property
    def n2(self) -> int:
        return self.ph2.n

    @property
    def mean1(self) -> float:
        return self.ph1.mean

    @property
    def mean2(self) -> float:
        return self.ph2.mean

    def with_k(self, k) -> "SystemConfig":
        return replace(self, k=parse_k(k))

    def __repr__(self) -> str:
        return (
            f"SystemConfig(lam={self.lam:g}, p={self.p:g}, k={self.k}, "
            f"ph1={self.ph1!r}, ph2={self.ph2!r})"
        )


def normalize_system(lam, p, shape1: PhaseType, shape2: PhaseType, ratio, k=1) -> SystemConfig:
    """Rescale two shapes so ``E[X2]/E[X1] = ratio`` and ``E[X] = 1``."""
    if not ratio > 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    if lam >= 1:
        raise UnstableSystem(f"load {lam} >= 1")
    m1 = 1.0 / (p + (1.0 - p) * ratio)
    m2 = ratio * m1
    return SystemConfig(lam, p, shape1.scaled_to_mean(m1), shape2.scaled_to_mean(m2), k)
