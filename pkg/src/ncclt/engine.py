"""Replicated evaluation of coupled-index sums.

The engine turns (process, observable, index family, horizon) into per
replication scalars: the sum S_N, and for the normal-approximation error
decomposition also the neighborhood pair sums. Replications are chunked;
every replication owns a counter-based stream derived from the master seed,
so results are bit-identical for any worker count or chunk size.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DegenerateVariance,
    InsufficientReplications,
    PathTooShort,
)
from .neighborhoods import NeighborhoodIndex
from .observables import IndexFamily, Observable
from .processes import PathSample, ProcessSpec, sample_states_batch
from .rng import DOMAIN_CALIBRATION, DOMAIN_EVAL, replication_seed

_CHUNK_BYTES = 160 << 20


def _chunk_rows(L: int) -> int:
    return int(max(16, min(2048, _CHUNK_BYTES // (8 * max(L, 1)))))


def _chunks(T: int, L: int) -> list[tuple[int, int]]:
    rows = _chunk_rows(L)
    return [(lo, min(lo + rows, T)) for lo in range(0, T, rows)]


def _flat_codes(codes: np.ndarray, q_table: np.ndarray, count: int) -> np.ndarray:
    """Flat observable-input tuple codes, shape (rows, N)."""
    flat = codes[:, q_table[0] - 1].astype(np.int64)
    for i in range(1, q_table.shape[0]):
        flat *= count
        flat += codes[:, q_table[i] - 1]
    return flat


def _summands(
    spec: ProcessSpec,
    table: np.ndarray,
    q_table: np.ndarray,
    lo: int,
    hi: int,
    L: int,
    master_seed: int,
    domain: int,
) -> np.ndarray:
    seqs = [replication_seed(master_seed, domain, i) for i in range(lo, hi)]
    codes = sample_states_batch(spec, L, seqs)
    return table[_flat_codes(codes, q_table, spec.input_code_count)]


def _run_chunks(worker, n_chunks: int, workers: int) -> None:
    if workers <= 1 or n_chunks <= 1:
        for c in range(n_chunks):
            worker(c)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(worker, range(n_chunks)))


# -- single-path operations ------------------------------------------------------


def nonconventional_sum(
    path: PathSample,
    F: Observable,
    q: IndexFamily,
    N: int,
    spec: Optional[ProcessSpec] = None,
) -> float:
    """S_N: the sum over n <= N of F at the coupled time points q_1(n)..q_ell(n)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    q_table = q.table(N)
    if len(path) < int(q_table.max()):
        raise PathTooShort(f"path length {len(path)} < required {int(q_table.max())}")
    values = path.values
    if F.on_states:
        args_of = lambda n0: (int(values[j - 1]) for j in q_table[:, n0])  # noqa: E731
    else:
        if spec is None:
            raise ValueError("embedded observables need the process spec")
        emb = spec.embedding
        args_of = lambda n0: (emb[values[j - 1]] for j in q_table[:, n0])  # noqa: E731
    return float(sum(F.eval(*args_of(n0)) for n0 in range(N)))


def count_return_tuples(path: PathSample, sets, q: IndexFamily, n: int) -> int:
    """Number of m <= n whose coupled time points all land in their target sets."""
    if n < 1:
        raise ValueError("n must be >= 1")
    q_table = q.table(n)
    if len(path) < int(q_table.max()):
        raise PathTooShort(f"path length {len(path)} < required {int(q_table.max())}")
    values = path.values
    hits = np.ones(n, dtype=bool)
    for j, A in enumerate(sets):
        idx = [int(s) for s in A]
        members = np.zeros(max(int(values.max()), max(idx, default=0)) + 1, dtype=bool)
        if idx:
            members[idx] = True
        hits &= members[values[q_table[j] - 1]]
    return int(hits.sum())


# -- replicated sums ----------------------------------------------------------------


@dataclass(frozen=True)
class TrialBatch:
    """Replicated normalized sums; Z_samples = values_SN / s_N_hat exactly."""

    N: int
    T: int
    values_SN: np.ndarray
    s_N_hat: float
    Z_samples: np.ndarray
    master_seed: int


@dataclass(frozen=True)
class VarianceEstimate:
    s2: float
    stderr: float
    N: int
    T_cal: int


def replicated_sums(
    spec: ProcessSpec,
    F: Observable,
    q: IndexFamily,
    N: int,
    T: int,
    master_seed: int,
    domain: int = DOMAIN_EVAL,
    workers: int = 1,
) -> np.ndarray:
    """S_N over T independent replications, deterministic in (master_seed, domain)."""
    q_table = q.table(N)
    L = int(q_table.max())
    table = F.value_table(spec)
    chunks = _chunks(T, L)
    out = np.empty(T, dtype=np.float64)

    def worker(c: int) -> None:
        lo, hi = chunks[c]
        s = _summands(spec, table, q_table, lo, hi, L, master_seed, domain)
        out[lo:hi] = s.sum(axis=1)

    _run_chunks(worker, len(chunks), workers)
    return out


def estimate_variance(
    spec: ProcessSpec,
    F: Observable,
    q: IndexFamily,
    N: int,
    T_cal: int,
    seed: int,
    workers: int = 1,
) -> VarianceEstimate:
    """Raw second moment of S_N over a calibration batch with its standard error."""
    if T_cal < 100:
        raise ValueError("T_cal must be >= 100")
    S = replicated_sums(spec, F, q, N, T_cal, seed, domain=DOMAIN_CALIBRATION, workers=workers)
    sq = S * S
    s2 = float(sq.mean())
    stderr = float(sq.std(ddof=1) / np.sqrt(T_cal))
    if s2 <= 3.0 * stderr:
        raise DegenerateVariance(f"s_N^2 = {s2:.6g} <= 3 * stderr = {3 * stderr:.6g}")
    return VarianceEstimate(s2=s2, stderr=stderr, N=N, T_cal=T_cal)


@dataclass(frozen=True)
class D2Estimate:
    D2_hat: float
    rows: tuple  # (N, s2_over_N, deviation, stderr_over_N) per grid point
    envelope_c: float


def estimate_D2(
    spec: ProcessSpec,
    F: Observable,
    q: IndexFamily,
    N_grid,
    T_cal: int,
    seed: int,
    workers: int = 1,
) -> D2Estimate:
    """Per-horizon variance ratios with the largest-horizon value as the limit estimate.

    The envelope constant is fitted on the lower half of the grid:
    c = max (deviation - 3 * stderr)_+ * sqrt(N), so the domination claim
    deviation <= c / sqrt(N) + 3 * stderr is out-of-sample on the upper half.
    """
    N_grid = [int(n) for n in N_grid]
    if len(N_grid) < 3 or any(b <= a for a, b in zip(N_grid, N_grid[1:])):
        raise ValueError("N_grid must be increasing with at least 3 points")
    est = [estimate_variance(spec, F, q, N, T_cal, seed, workers) for N in N_grid]
    D2_hat = est[-1].s2 / N_grid[-1]
    rows = []
    for N, e in zip(N_grid, est):
        ratio = e.s2 / N
        rows.append((N, ratio, abs(ratio - D2_hat), e.stderr / N))
    lower = rows[: max(2, len(rows) // 2)]
    envelope_c = max(
        [max(dev - 3.0 * se, 0.0) * np.sqrt(N) for N, _, dev, se in lower], default=0.0
    )
    return D2Estimate(D2_hat=float(D2_hat), rows=tuple(rows), envelope_c=float(envelope_c))


def replicate_Z(
    spec: ProcessSpec,
    F: Observable,
    q: IndexFamily,
    N: int,
    T: int,
    master_seed: int,
    T_cal: int = 1000,
    workers: int = 1,
) -> TrialBatch:
    """Normalized sums Z = S_N / s_N_hat with the scale calibrated on a disjoint seed stream."""
    cal = estimate_variance(spec, F, q, N, T_cal, master_seed, workers=workers)
    s_hat = float(np.sqrt(cal.s2))
    S = replicated_sums(spec, F, q, N, T, master_seed, domain=DOMAIN_EVAL, workers=workers)
    return TrialBatch(
        N=N, T=T, values_SN=S, s_N_hat=s_hat, Z_samples=S / s_hat, master_seed=master_seed
    )


# -- neighborhood pair statistics -------------------------------------------------


def _slot_arrays(index: NeighborhoodIndex) -> tuple[np.ndarray, np.ndarray]:
    """Padded per-slot interval bounds: for slot s and index n, the s-th interval
    of A_n or the empty placeholder (lo=1, hi=0)."""
    N = index.N
    seg_counts = np.diff(index.row_ptr)
    max_slots = int(seg_counts.max())
    lo = np.ones((max_slots, N), dtype=np.int64)
    hi = np.zeros((max_slots, N), dtype=np.int64)
    for n0 in range(N):
        a, b = index.row_ptr[n0], index.row_ptr[n0 + 1]
        k = b - a
        lo[:k, n0] = index.starts[a:b]
        hi[:k, n0] = index.ends[a:b]
    return lo, hi


def neighborhood_sums(X: np.ndarray, slot_lo: np.ndarray, slot_hi: np.ndarray) -> np.ndarray:
    """Row-wise sums of X over each index's neighborhood, via prefix sums."""
    rows, N = X.shape
    cs = np.zeros((rows, N + 1), dtype=np.float64)
    np.cumsum(X, axis=1, out=cs[:, 1:])
    out = np.zeros_like(X)
    for lo, hi in zip(slot_lo, slot_hi):
        out += cs[:, hi] - cs[:, lo - 1]
    return out


@dataclass(frozen=True)
class PairStatistics:
    """Per-replication scalars of the unscaled summand array Y (rows = replications):
    pair = sum_n Y_n * nbr_n, third = sum_n Y_n * nbr_n**2, total = sum_n Y_n,
    where nbr_n sums Y over the neighborhood of n."""

    pair: np.ndarray
    third: np.ndarray
    total: np.ndarray
    max_abs: float
    N: int
    T: int


def pair_statistics_from_matrix(Y: np.ndarray, index: NeighborhoodIndex) -> PairStatistics:
    slot_lo, slot_hi = _slot_arrays(index)
    nbr = neighborhood_sums(Y, slot_lo, slot_hi)
    return PairStatistics(
        pair=(Y * nbr).sum(axis=1),
        third=(Y * nbr * nbr).sum(axis=1),
        total=Y.sum(axis=1),
        max_abs=float(np.abs(Y).max()),
        N=Y.shape[1],
        T=Y.shape[0],
    )


def pair_statistics(
    spec: ProcessSpec,
    F: Observable,
    q: IndexFamily,
    index: NeighborhoodIndex,
    T: int,
    master_seed: int,
    domain: int = DOMAIN_EVAL,
    workers: int = 1,
) -> PairStatistics:
    """Streaming version over replication chunks; never materializes (T, N)."""
    N = index.N
    q_table = q.table(N)
    L = int(q_table.max())
    table = F.value_table(spec)
    slot_lo, slot_hi = _slot_arrays(index)
    chunks = _chunks(T, L)
    pair = np.empty(T, dtype=np.float64)
    third = np.empty(T, dtype=np.float64)
    total = np.empty(T, dtype=np.float64)
    max_abs = np.zeros(len(chunks), dtype=np.float64)

    def worker(c: int) -> None:
        lo, hi = chunks[c]
        Y = _summands(spec, table, q_table, lo, hi, L, master_seed, domain)
        nbr = neighborhood_sums(Y, slot_lo, slot_hi)
        pair[lo:hi] = (Y * nbr).sum(axis=1)
        third[lo:hi] = (Y * nbr * nbr).sum(axis=1)
        total[lo:hi] = Y.sum(axis=1)
        max_abs[c] = np.abs(Y).max()

    _run_chunks(worker, len(chunks), workers)
    return PairStatistics(
        pair=pair, third=third, total=total, max_abs=float(max_abs.max()), N=N, T=T
    )


@dataclass(frozen=True)
class SteinTerms:
    R1: float
    R3: float
    small_terms: float
    R: float
    W_l2: float
    sigma2: float
    r2_bound: Optional[float]
    r2_available: bool


def stein_terms_from_stats(
    stats: PairStatistics,
    index: NeighborhoodIndex,
    s_N_hat: float,
    sigma2: Optional[float] = None,
    pair_mean: Optional[float] = None,
    C0_prime: Optional[float] = None,
    d: Optional[float] = None,
    c: Optional[float] = None,
    D_hat: Optional[float] = None,
) -> SteinTerms:
    """Normal-approximation error terms from replicated pair statistics.

    The summands are rescaled by s_N_hat and then by sigma, the root of the
    neighborhood covariance mass (estimated from the batch when sigma2 is
    None), so the rebuilt sum W has second moment near 1. pair_mean overrides
    the plug-in pair-term mean with one estimated on an independent batch.
    The conditional-expectation term is never sampled; its closed-form bound
    is reported when (C0_prime, d, c, D_hat) are supplied.
    """
    if stats.T < 10**3:
        raise InsufficientReplications(f"T = {stats.T} < 1000")
    s2 = float(s_N_hat) ** 2
    if sigma2 is None:
        sigma2 = (float(np.mean(stats.pair)) if pair_mean is None else float(pair_mean)) / s2
    sigma2 = float(sigma2)
    if sigma2 <= 0:
        raise DegenerateVariance("estimated neighborhood covariance mass is not positive")
    scale_pair = 1.0 / (s2 * sigma2)  # X_n X_m for one pair
    P_X = stats.pair * scale_pair
    G_X = stats.third * scale_pair / (float(s_N_hat) * np.sqrt(sigma2))
    W = stats.total / (float(s_N_hat) * np.sqrt(sigma2))
    R = stats.max_abs / (float(s_N_hat) * np.sqrt(sigma2))

    center = float(np.mean(P_X)) if pair_mean is None else float(pair_mean) * scale_pair
    R1 = 4.0 * float(np.sqrt(np.mean((P_X - center) ** 2)))
    W_l2 = float(np.sqrt(np.mean(W * W)))
    R3 = 2.0 * float(np.sqrt(np.mean(G_X * G_X))) * (W_l2 + 5.0)
    K1, l, N = index.K1, index.l, stats.N
    small = K1 * l * R + 2.0 * (K1 * l) ** 2 * N * R**3

    r2_bound = None
    available = all(v is not None for v in (C0_prime, d, c, D_hat))
    if available:
        r2_bound = float(C0_prime) * np.sqrt(N) / float(D_hat) * np.sqrt(float(d)) * float(c) ** (
            index.l / 4.0
        )
    return SteinTerms(
        R1=R1,
        R3=R3,
        small_terms=float(small),
        R=float(R),
        W_l2=W_l2,
        sigma2=float(sigma2),
        r2_bound=r2_bound,
        r2_available=bool(available),
    )


def stein_terms(
    X: np.ndarray,
    index: NeighborhoodIndex,
    pair_mean: Optional[float] = None,
    C0_prime: Optional[float] = None,
    d: Optional[float] = None,
    c: Optional[float] = None,
    D_hat: Optional[float] = None,
) -> SteinTerms:
    """Error terms from an explicit batch of already-scaled summand rows X (T, N).

    Rows are taken as the final scaled summands (their sum plays the role of
    the unit-variance W), so no further rescaling is applied here.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != index.N:
        raise ValueError("X must have shape (T, N) matching the index horizon")
    stats = pair_statistics_from_matrix(X, index)
    return stein_terms_from_stats(
        stats,
        index,
        s_N_hat=1.0,
        sigma2=1.0,
        pair_mean=pair_mean,
        C0_prime=C0_prime,
        d=d,
        c=c,
        D_hat=D_hat,
    )
