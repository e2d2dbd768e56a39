"""Discrete-event simulation of the Nudge-K M/PH/1 queue.

The simulator is the independent oracle for the analytic results, so it
implements the scheduling rule literally: an arriving type-1 job walks
back from the tail of the waiting line, passing type-2 jobs until it has
made K passes, meets a type-1 job, meets a type-2 job that was passed
before, or reaches the head. The job in service is never passed.

Inputs (inter-arrival times, types, sizes) are drawn in numpy chunks from
independent Philox streams; the event loop itself is compiled with numba.
Confidence half-widths come from batch means at 99% confidence.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats as sps

from .errors import GridMismatch, InsufficientBatches, UnstableSystem
from .phasetype import PhaseType, SystemConfig

CHUNK = 1 << 18
QMAX = 40
CONFIDENCE = 0.99
MIN_BATCHES = 30
MIN_ARRIVALS = 100_000
# a zero-width interval only matches the analytic value up to rounding
EXACT_TOL = 1e-9

# stream layout of one replication: arrivals, types, type-1 sizes, type-2 sizes
N_STREAMS = 4


def _generator(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


def replication_streams(seed: int, replication: int = 0) -> list[np.random.Generator]:
    """Independent generators for replication ``r`` of master seed ``seed``.

    ``SeedSequence(seed).spawn`` gives one child per replication; each child
    spawns ``N_STREAMS`` grandchildren (arrivals, types, X1, X2).
    """
    child = np.random.SeedSequence(seed).spawn(replication + 1)[replication]
    return [_generator(s) for s in child.spawn(N_STREAMS)]


# -- phase-type sampling -------------------------------------------------------


def ph_sample(ph: PhaseType, rng: np.random.Generator, size=None):
    """Draw absorption times by simulating the underlying CTMC phase by phase."""
    n_draw = 1 if size is None else int(size)
    S = np.asarray(ph.S)
    n = ph.n
    rates = -np.diag(S)
    jump = S / rates[:, None]
    np.fill_diagonal(jump, 0.0)
    jump = np.hstack([jump, ph.exit_vector[:, None] / rates[:, None]])
    cum = np.cumsum(jump, axis=1)
    cum[:, -1] = 1.0
    alpha_cum = np.cumsum(ph.alpha)
    alpha_cum[-1] = 1.0

    phase = np.searchsorted(alpha_cum, rng.random(n_draw), side="right")
    out = np.zeros(n_draw)
    live = np.arange(n_draw)
    while live.size:
        ph_live = phase[live]
        out[live] += rng.standard_exponential(live.size) / rates[ph_live]
        u = rng.random(live.size)
        nxt = (u[:, None] >= cum[ph_live]).sum(axis=1)
        phase[live] = nxt
        live = live[nxt < n]
    return float(out[0]) if size is None else out


def _draw_chunk(cfg: SystemConfig, gens, m: int):
    g_arr, g_type, g_x1, g_x2 = gens
    gaps = g_arr.standard_exponential(m) / cfg.lam
    is1 = g_type.random(m) < cfg.p
    types = np.where(is1, 1, 2).astype(np.int8)
    sizes = np.empty(m)
    n1 = int(is1.sum())
    if n1:
        sizes[is1] = ph_sample(cfg.ph1, g_x1, n1)
    if m - n1:
        sizes[~is1] = ph_sample(cfg.ph2, g_x2, m - n1)
    return gaps, types, sizes


# -- event loop ----------------------------------------------------------------


@njit(cache=True)
def _record_start(job_idx, job_type, job_size, swapped, wait, lo, hi, batch_size,
                  t_points, counts, sum_w, sum_r, swaps, w_exc, r_exc):
    if job_idx < lo or job_idx >= hi:
        return
    b = (job_idx - lo) // batch_size
    ti = job_type - 1
    resp = wait + job_size
    counts[b, ti] += 1
    sum_w[b, ti] += wait
    sum_r[b, ti] += resp
    if job_type == 2 and swapped:
        swaps[b] += 1
    for j in range(t_points.shape[0]):
        if wait > t_points[j]:
            w_exc[b, ti, j] += 1
        if resp > t_points[j]:
            r_exc[b, ti, j] += 1


@njit(cache=True)
def _run_chunk(gaps, types, sizes, pos, idx0, fstate, istate,
               q_arr, q_size, q_type, q_swapped, q_idx,
               k, lo, hi, batch_size, t_points,
               arrivals, z_exc, z_sum, q_hist,
               counts, sum_w, sum_r, swaps, w_exc, r_exc):
    """Advance the queue over ``gaps[pos:]``; returns the position reached.

    ``fstate = [clock, workload, server free at]``,
    ``istate = [queue head, queue tail, started measured jobs, max passes]``.
    ``k < 0`` means unlimited passing. Stops early when the queue buffer is
    full so the caller can grow it.
    """
    clock, work, free_at = fstate[0], fstate[1], fstate[2]
    head, tail, started, max_pass = istate[0], istate[1], istate[2], istate[3]
    cap = q_arr.shape[0]
    qmax = q_hist.shape[1] - 1
    n = gaps.shape[0]
    i = pos
    while i < n:
        if tail == cap:
            if head == 0:
                break
            qlen = tail - head
            for j in range(qlen):
                q_arr[j] = q_arr[head + j]
                q_size[j] = q_size[head + j]
                q_type[j] = q_type[head + j]
                q_swapped[j] = q_swapped[head + j]
                q_idx[j] = q_idx[head + j]
            head = 0
            tail = qlen
        gap = gaps[i]
        t = clock + gap
        job_idx = idx0 + i
        jtype = types[i]
        jsize = sizes[i]

        # service starts that happen before this arrival
        while tail > head and free_at <= t:
            h = head
            head += 1
            wait = free_at - q_arr[h]
            if q_idx[h] < hi:
                started += 1
            _record_start(q_idx[h], q_type[h], q_size[h], q_swapped[h], wait, lo, hi,
                          batch_size, t_points, counts, sum_w, sum_r, swaps, w_exc, r_exc)
            free_at += q_size[h]
        if tail == head:
            head = 0
            tail = 0

        work = work - gap
        if work < 0.0:
            work = 0.0
        z = work
        work += jsize
        busy = free_at > t
        in_system = tail - head + (1 if busy else 0)

        if job_idx >= lo and job_idx < hi:
            b = (job_idx - lo) // batch_size
            arrivals[b] += 1
            z_sum[b] += z
            q_hist[b, min(in_system, qmax)] += 1
            for j in range(t_points.shape[0]):
                if z > t_points[j]:
                    z_exc[b, j] += 1

        if not busy:
            if job_idx < hi:
                started += 1
            _record_start(job_idx, jtype, jsize, False, 0.0, lo, hi, batch_size,
                          t_points, counts, sum_w, sum_r, swaps, w_exc, r_exc)
            free_at = t + jsize
        else:
            passes = 0
            if jtype == 1:
                while tail - passes > head and (k < 0 or passes < k):
                    back = tail - 1 - passes
                    if q_type[back] != 2 or q_swapped[back]:
                        break
                    q_swapped[back] = True
                    passes += 1
                if passes > max_pass:
                    max_pass = passes
            # shift the passed jobs one slot back and insert in front of them
            for j in range(tail, tail - passes, -1):
                q_arr[j] = q_arr[j - 1]
                q_size[j] = q_size[j - 1]
                q_type[j] = q_type[j - 1]
                q_swapped[j] = q_swapped[j - 1]
                q_idx[j] = q_idx[j - 1]
            slot = tail - passes
            q_arr[slot] = t
            q_size[slot] = jsize
            q_type[slot] = jtype
            q_swapped[slot] = False
            q_idx[slot] = job_idx
            tail += 1
        clock = t
        i += 1
    fstate[0], fstate[1], fstate[2] = clock, work, free_at
    istate[0], istate[1], istate[2], istate[3] = head, tail, started, max_pass
    return i


@dataclass
class _Batches:
    arrivals: np.ndarray
    z_exc: np.ndarray
    z_sum: np.ndarray
    q_hist: np.ndarray
    counts: np.ndarray
    sum_w: np.ndarray
    sum_r: np.ndarray
    swaps: np.ndarray
    w_exc: np.ndarray
    r_exc: np.ndarray
    max_passes: int = 0
    workload_path: np.ndarray | None = None

    @classmethod
    def empty(cls, n_batches: int, n_t: int) -> "_Batches":
        return cls(
            arrivals=np.zeros(n_batches, dtype=np.int64),
            z_exc=np.zeros((n_batches, n_t), dtype=np.int64),
            z_sum=np.zeros(n_batches),
            q_hist=np.zeros((n_batches, QMAX + 1), dtype=np.int64),
            counts=np.zeros((n_batches, 2), dtype=np.int64),
            sum_w=np.zeros((n_batches, 2)),
            sum_r=np.zeros((n_batches, 2)),
            swaps=np.zeros(n_batches, dtype=np.int64),
            w_exc=np.zeros((n_batches, 2, n_t), dtype=np.int64),
            r_exc=np.zeros((n_batches, 2, n_t), dtype=np.int64),
        )

    @classmethod
    def concat(cls, parts: list["_Batches"]) -> "_Batches":
        names = ["arrivals", "z_exc", "z_sum", "q_hist", "counts", "sum_w", "sum_r",
                 "swaps", "w_exc", "r_exc"]
        merged = {nm: np.concatenate([getattr(p, nm) for p in parts]) for nm in names}
        return cls(**merged, max_passes=max(p.max_passes for p in parts))


def _replicate(cfg: SystemConfig, n_arrivals: int, seed: int, replication: int,
               t_points: np.ndarray, warmup: float, n_batches: int) -> _Batches:
    gens = replication_streams(seed, replication)
    lo = int(round(warmup * n_arrivals))
    batch_size = (n_arrivals - lo) // n_batches
    if batch_size < 1:
        raise InsufficientBatches("fewer measured arrivals than batches")
    hi = lo + batch_size * n_batches
    acc = _Batches.empty(n_batches, len(t_points))
    k = -1 if cfg.k_is_inf else int(cfg.k)

    cap = 1 << 12
    q_arr = np.zeros(cap)
    q_size = np.zeros(cap)
    q_type = np.zeros(cap, dtype=np.int8)
    q_swapped = np.zeros(cap, dtype=np.bool_)
    q_idx = np.zeros(cap, dtype=np.int64)
    fstate = np.zeros(3)
    istate = np.zeros(4, dtype=np.int64)

    idx0 = 0
    # keep feeding arrivals until every measured job has entered service:
    # a waiting type-2 job's delay depends on type-1 jobs that arrive later
    while istate[2] < hi:
        gaps, types, sizes = _draw_chunk(cfg, gens, CHUNK)
        pos = 0
        while pos < CHUNK:
            pos = _run_chunk(gaps, types, sizes, pos, idx0, fstate, istate,
                             q_arr, q_size, q_type, q_swapped, q_idx,
                             k, lo, hi, batch_size, t_points,
                             acc.arrivals, acc.z_exc, acc.z_sum, acc.q_hist,
                             acc.counts, acc.sum_w, acc.sum_r, acc.swaps,
                             acc.w_exc, acc.r_exc)
            if pos < CHUNK:
                cap *= 2
                q_arr = np.resize(q_arr, cap)
                q_size = np.resize(q_size, cap)
                q_type = np.resize(q_type, cap)
                q_swapped = np.resize(q_swapped, cap)
                q_idx = np.resize(q_idx, cap)
        idx0 += CHUNK
    acc.max_passes = int(istate[3])
    if k >= 0 and acc.max_passes > k:
        raise AssertionError(f"a type-1 job passed {acc.max_passes} > K={k} jobs")
    return acc


# -- statistics ----------------------------------------------------------------


def _ci(per_batch: np.ndarray, point: np.ndarray | float):
    """Point estimate with a batch-means half-width (Student t, 99%)."""
    b = per_batch.shape[0]
    q = sps.t.ppf(0.5 + CONFIDENCE / 2.0, b - 1)
    sd = np.std(per_batch, axis=0, ddof=1)
    return point, q * sd / math.sqrt(b)


def _ratio(num: np.ndarray, den: np.ndarray):
    den_b = np.expand_dims(den, tuple(range(1, num.ndim))) if num.ndim > den.ndim else den
    with np.errstate(divide="ignore", invalid="ignore"):
        per_batch = np.where(den_b > 0, num / np.maximum(den_b, 1), 0.0)
    point = num.sum(axis=0) / max(den.sum(), 1)
    return _ci(per_batch, point)


@dataclass
class SimStats:
    """Simulation estimates; every ``(value, half_width)`` pair is a 99%
    batch-means interval."""

    n_arrivals: int
    seed: int
    k: float
    t_points: np.ndarray
    n_batches: int
    type_counts: tuple[int, int]
    mean_response_by_type: dict
    mean_wait_by_type: dict
    mean_response: tuple
    swap_fraction_type2: tuple
    ccdf_estimates: dict
    qlen_pmf: tuple
    mean_workload: tuple
    max_passes: int
    replications: int = 1
    extras: dict = field(default_factory=dict)


def summarize(cfg: SystemConfig, acc: _Batches, n_arrivals: int, seed: int,
              t_points: np.ndarray, replications: int) -> SimStats:
    counts = acc.counts
    per_type_r = {}
    per_type_w = {}
    ccdf = {}
    for ti, label in ((0, "1"), (1, "2")):
        c = counts[:, ti]
        per_type_r[int(label)] = tuple(float(x) for x in _ratio(acc.sum_r[:, ti], c))
        per_type_w[int(label)] = tuple(float(x) for x in _ratio(acc.sum_w[:, ti], c))
        ccdf["W" + label] = _ratio(acc.w_exc[:, ti, :].astype(float), c)
        ccdf["R" + label] = _ratio(acc.r_exc[:, ti, :].astype(float), c)
    ccdf["Z"] = _ratio(acc.z_exc.astype(float), acc.arrivals)
    total = counts.sum(axis=1)
    ccdf["R"] = _ratio(acc.r_exc.sum(axis=1).astype(float), total)
    mean_r = _ratio(acc.sum_r.sum(axis=1), total)
    swap = _ratio(acc.swaps.astype(float), counts[:, 1])
    qpmf = _ratio(acc.q_hist.astype(float), acc.arrivals)
    mean_z = _ratio(acc.z_sum, acc.arrivals)
    return SimStats(
        n_arrivals=n_arrivals,
        seed=seed,
        k=cfg.k,
        t_points=t_points,
        n_batches=len(acc.arrivals),
        type_counts=(int(counts[:, 0].sum()), int(counts[:, 1].sum())),
        mean_response_by_type=per_type_r,
        mean_wait_by_type=per_type_w,
        mean_response=tuple(float(x) for x in mean_r),
        swap_fraction_type2=tuple(float(x) for x in swap),
        ccdf_estimates=ccdf,
        qlen_pmf=qpmf,
        mean_workload=tuple(float(x) for x in mean_z),
        max_passes=acc.max_passes,
        replications=replications,
        extras={"batches": acc},
    )


def simulate(cfg: SystemConfig, n_arrivals: int, seed: int, t_points,
             warmup: float = 0.1, n_batches: int = 50, replications: int = 1,
             workers: int = 1) -> SimStats:
    """Simulate ``n_arrivals`` arrivals per replication.

    The first ``warmup`` fraction of arrivals is discarded; the remainder is
    split into ``n_batches`` equal batches by arrival index. Replications
    use disjoint random streams and their batches are pooled.
    """
    if cfg.lam >= 1:
        raise UnstableSystem("simulation needs lam < 1")
    if n_arrivals < MIN_ARRIVALS:
        raise ValueError(f"n_arrivals must be at least {MIN_ARRIVALS}")
    if n_batches * replications < MIN_BATCHES:
        raise InsufficientBatches(f"need at least {MIN_BATCHES} batches")
    if not 0 <= warmup < 1:
        raise ValueError("warmup must lie in [0, 1)")
    t_points = np.atleast_1d(np.asarray(t_points, dtype=float))
    args = [(cfg, n_arrivals, seed, r, t_points, warmup, n_batches) for r in range(replications)]
    if workers > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_replicate_star, args))
    else:
        parts = [_replicate(*a) for a in args]
    acc = _Batches.concat(parts)
    return summarize(cfg, acc, n_arrivals, seed, t_points, replications)


def _replicate_star(a):
    return _replicate(*a)


def workload_path(cfg: SystemConfig, n_arrivals: int, seed: int) -> np.ndarray:
    """Workload found by each of the first ``n_arrivals`` arrivals (Lindley
    recursion on the same streams the simulator uses)."""
    gens = replication_streams(seed, 0)
    out = np.empty(n_arrivals)
    work = 0.0
    done = 0
    while done < n_arrivals:
        gaps, _, sizes = _draw_chunk(cfg, gens, CHUNK)
        m = min(CHUNK, n_arrivals - done)
        out[done:done + m], work = _lindley(gaps[:m], sizes[:m], work)
        done += m
    return out


@njit(cache=True)
def _lindley(gaps, sizes, work):
    out = np.empty(gaps.shape[0])
    for i in range(gaps.shape[0]):
        work = max(work - gaps[i], 0.0)
        out[i] = work
        work += sizes[i]
    return out, work


# -- validation ----------------------------------------------------------------


@dataclass
class CurveCheck:
    label: str
    analytic: np.ndarray
    estimate: np.ndarray
    half_width: np.ndarray
    z: np.ndarray

    @property
    def within(self) -> np.ndarray:
        return np.abs(self.z) <= 3.0


@dataclass
class ValidationReport:
    checks: list
    scalars: dict
    passed: bool
    fraction_within: float


def _z(estimate, analytic, hw):
    diff = np.asarray(estimate, dtype=float) - np.asarray(analytic, dtype=float)
    hw = np.asarray(hw, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(hw > 0, diff / np.where(hw > 0, hw, 1.0),
                     np.where(np.abs(diff) <= EXACT_TOL, 0.0, np.inf))
    return z


def validate(cfg: SystemConfig, analytic_curves: dict, stats: SimStats,
             scalars: dict | None = None, required: float = 0.95) -> ValidationReport:
    """Compare analytic curves with simulation estimates.

    ``analytic_curves`` maps a label (``Z``, ``W1``, ``W2``, ``R1``, ``R2``,
    ``R``) to a :class:`~nudgek.fcfs.CcdfCurve` or an array on
    ``stats.t_points``. ``scalars`` maps names to ``(analytic, (est, hw))``.
    A point counts as within tolerance when ``|est - analytic| <= 3 hw``;
    the report passes when at least ``required`` of all points do.
    """
    checks = []
    for label, curve in analytic_curves.items():
        values = getattr(curve, "values", curve)
        grid = getattr(curve, "grid", None)
        values = np.asarray(values, dtype=float)
        if values.shape != stats.t_points.shape or (
            grid is not None and not np.allclose(grid, stats.t_points)
        ):
            raise GridMismatch(f"curve {label!r} is not on the simulated t-points")
        if label not in stats.ccdf_estimates:
            raise GridMismatch(f"no simulated estimate for {label!r}")
        est, hw = stats.ccdf_estimates[label]
        checks.append(CurveCheck(label, values, np.asarray(est), np.asarray(hw), _z(est, values, hw)))
    scalar_z = {}
    for name, (analytic, (est, hw)) in (scalars or {}).items():
        scalar_z[name] = float(_z(est, analytic, hw))
    flags = [c.within for c in checks] + [np.array([abs(z) <= 3.0]) for z in scalar_z.values()]
    flat = np.concatenate(flags) if flags else np.array([True])
    frac = float(flat.mean())
    return ValidationReport(checks, scalar_z, frac >= required, frac)


def analytic_reference(cfg: SystemConfig, t_points) -> dict:
    """The five analytic ccdfs the simulator estimates, on ``t_points``."""
    from . import fcfs, nudge

    g = np.atleast_1d(np.asarray(t_points, dtype=float))
    curves = {"Z": fcfs.workload_ccdf(cfg, g)}
    if cfg.p > 0:
        curves["W1"] = nudge.w1_ccdf(cfg, g)
        curves["R1"] = nudge.r1_ccdf(cfg, g)
    if cfg.p < 1:
        curves["W2"] = nudge.w2_ccdf(cfg, g)
        curves["R2"] = nudge.r2_ccdf(cfg, g)
    return curves
