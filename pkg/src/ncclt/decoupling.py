"""Exact finite-state checks of the dependence-decoupling inequalities.

Everything here is exact enumeration: expectations of block functionals of a
stationary finite chain are computed by forward dynamic programming over all
block-state assignments with matrix-power bridges between windows, and the
inequality checks compare both sides to float precision. No Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import ndtr

from .errors import BudgetExceeded, EmptyInput
from .processes import KIND_CHAIN, KIND_IID, ProcessSpec, phi_coefficient

_ENUM_BUDGET = 10**7
_SLACK = 1e-12

NORMAL_DENSITY_BOUND = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class BlockExpectationProblem:
    """A bounded function of chain states read through ordered disjoint windows.

    blocks are inclusive index windows [(m_1, n_1), ...] with m_t <= n_t < m_{t+1};
    partition groups block positions (0-based); H is a callable on the tuple of
    concatenated states or a dense table over base-a concatenated state codes.
    """

    chain: ProcessSpec
    blocks: tuple[tuple[int, int], ...]
    partition: tuple[tuple[int, ...], ...]
    H: Union[Callable, np.ndarray]
    H_sup: float

    def __post_init__(self) -> None:
        if self.chain.kind not in (KIND_CHAIN, KIND_IID):
            raise ValueError("block problems need a finite chain or iid process")
        if self.chain.alphabet_size > 6:
            raise ValueError("state count must be <= 6")
        blocks = tuple((int(m), int(n)) for m, n in self.blocks)
        if not blocks:
            raise EmptyInput("at least one block window is required")
        for m, n in blocks:
            if m > n:
                raise ValueError(f"window ({m}, {n}) is inverted")
        for (m1, n1), (m2, _) in zip(blocks, blocks[1:]):
            if n1 >= m2:
                raise ValueError("windows must be strictly ordered and disjoint")
        object.__setattr__(self, "blocks", blocks)
        part = tuple(tuple(int(b) for b in g) for g in self.partition)
        flat = sorted(b for g in part for b in g)
        if flat != list(range(len(blocks))):
            raise ValueError("partition must cover every block exactly once")
        object.__setattr__(self, "partition", part)
        if self.H_sup <= 0:
            raise ValueError("H_sup must be positive")

    @property
    def widths(self) -> list[int]:
        return [n - m + 1 for m, n in self.blocks]

    @property
    def combo_counts(self) -> list[int]:
        a = self.chain.alphabet_size
        return [a**w for w in self.widths]

    def total_combos(self) -> int:
        out = 1
        for k in self.combo_counts:
            out *= k
        return out

    def h_table(self, budget: int = _ENUM_BUDGET) -> np.ndarray:
        """Dense H over concatenated base-a state codes, flat C order."""
        total = self.total_combos()
        if total > budget:
            raise BudgetExceeded(f"{total} assignments exceed budget {budget}")
        if isinstance(self.H, np.ndarray):
            table = np.asarray(self.H, dtype=np.float64).ravel()
            if table.shape != (total,):
                raise ValueError(f"H table must have {total} entries")
        else:
            a = self.chain.alphabet_size
            width = sum(self.widths)
            digits = _all_digits(total, a, width)
            table = np.array(
                [float(self.H(tuple(row))) for row in digits], dtype=np.float64
            )
        if np.abs(table).max() > self.H_sup + 1e-12:
            raise ValueError("H exceeds its declared sup")
        return table


def _all_digits(total: int, a: int, width: int) -> np.ndarray:
    out = np.empty((total, width), dtype=np.int64)
    rem = np.arange(total, dtype=np.int64)
    for pos in range(width - 1, -1, -1):
        out[:, pos] = rem % a
        rem //= a
    return out


def _transition_of(spec: ProcessSpec) -> np.ndarray:
    if spec.transition is not None:
        return spec.transition
    return np.tile(spec.marginal, (spec.alphabet_size, 1))


def _block_pieces(spec: ProcessSpec, window: tuple[int, int]):
    """(first, last, inner) per block-state combo; inner is the within-window path weight."""
    a = spec.alphabet_size
    w = window[1] - window[0] + 1
    digits = _all_digits(a**w, a, w)
    P = _transition_of(spec)
    inner = np.ones(a**w, dtype=np.float64)
    for t in range(w - 1):
        inner *= P[digits[:, t], digits[:, t + 1]]
    return digits[:, 0], digits[:, -1], inner


def _chain_law(spec: ProcessSpec, blocks: Sequence[tuple[int, int]], budget: int) -> np.ndarray:
    """Exact joint law over block-state combos, flat C order over blocks."""
    total = 1
    a = spec.alphabet_size
    for m, n in blocks:
        total *= a ** (n - m + 1)
    if total > budget:
        raise BudgetExceeded(f"{total} assignments exceed budget {budget}")
    P = _transition_of(spec)
    first, last, inner = _block_pieces(spec, blocks[0])
    p = spec.marginal[first] * inner
    last_flat = last
    for (m_prev, n_prev), (m_cur, n_cur) in zip(blocks, blocks[1:]):
        bridge = np.linalg.matrix_power(P, m_cur - n_prev)
        first, last, inner = _block_pieces(spec, (m_cur, n_cur))
        step = bridge[last_flat][:, first] * inner[None, :]
        p = (p[:, None] * step).reshape(-1)
        last_flat = np.broadcast_to(last[None, :], step.shape).reshape(-1).copy()
    return p


def exact_joint_expectation(problem: BlockExpectationProblem, budget: int = _ENUM_BUDGET) -> float:
    """E H(U_1..U_k) by exact summation over all block-state assignments."""
    law = _chain_law(problem.chain, problem.blocks, budget)
    return float(np.dot(law, problem.h_table(budget)))


def decoupled_expectation(problem: BlockExpectationProblem, budget: int = _ENUM_BUDGET) -> float:
    """E H under independent copies of each partition group's joint block law."""
    counts = problem.combo_counts
    H_nd = problem.h_table(budget).reshape(counts)
    operands: list = [H_nd, list(range(len(counts)))]
    for group in problem.partition:
        group = tuple(sorted(group))
        law = _chain_law(problem.chain, [problem.blocks[b] for b in group], budget)
        operands.append(law.reshape([counts[b] for b in group]))
        operands.append(list(group))
    return float(np.einsum(*operands, []))


@dataclass(frozen=True)
class InequalityCheck:
    gap: float
    bound: float
    passed: bool


def _phi_sum(spec: ProcessSpec, blocks: Sequence[tuple[int, int]]) -> float:
    return sum(
        phi_coefficient(spec, m_cur - n_prev)
        for (_, n_prev), (m_cur, _) in zip(blocks, blocks[1:])
    )


def check_decoupling_bound(
    problem: BlockExpectationProblem, budget: int = _ENUM_BUDGET
) -> InequalityCheck:
    """|E H - decoupled E H| against 4 * sup|H| * sum of phi over the window gaps."""
    exact = exact_joint_expectation(problem, budget)
    dec = decoupled_expectation(problem, budget)
    gap = abs(exact - dec)
    bound = 4.0 * problem.H_sup * _phi_sum(problem.chain, problem.blocks)
    return InequalityCheck(gap=gap, bound=bound, passed=bool(gap <= bound + _SLACK))


def check_correlation_bound(
    chain: ProcessSpec,
    blocks: Sequence[tuple[int, int]],
    group_tables: Sequence[np.ndarray],
    partition: Sequence[Sequence[int]],
    budget: int = _ENUM_BUDGET,
) -> InequalityCheck:
    """|E prod Z_i - prod E Z_i| against 4 * prod sup|Z_i| * sum of phi.

    group_tables[i] is the dense table of Z_i over group i's block-state
    combos (flat C order over that group's blocks, sorted by position).
    """
    blocks = tuple((int(m), int(n)) for m, n in blocks)
    partition = tuple(tuple(sorted(int(b) for b in g)) for g in partition)
    a = chain.alphabet_size
    counts = [a ** (n - m + 1) for m, n in blocks]

    k = len(blocks)
    H_nd = np.ones([1] * k)
    sup_prod = 1.0
    for group, table in zip(partition, group_tables):
        table = np.asarray(table, dtype=np.float64)
        shape = [1] * k
        for b in group:
            shape[b] = counts[b]
        H_nd = H_nd * table.reshape(shape)
        sup_prod *= float(np.abs(table).max())

    problem = BlockExpectationProblem(
        chain=chain,
        blocks=blocks,
        partition=partition,
        H=np.ascontiguousarray(H_nd).ravel(),
        H_sup=max(sup_prod, 1e-300),
    )
    exact = exact_joint_expectation(problem, budget)
    prod_means = 1.0
    for group, table in zip(partition, group_tables):
        law = _chain_law(chain, [blocks[b] for b in group], budget)
        prod_means *= float(np.dot(law, np.asarray(table, dtype=np.float64).ravel()))
    gap = abs(exact - prod_means)
    bound = 4.0 * sup_prod * _phi_sum(chain, blocks)
    return InequalityCheck(gap=gap, bound=bound, passed=bool(gap <= bound + _SLACK))


def conditional_decoupling_check(
    problem: BlockExpectationProblem, budget: int = _ENUM_BUDGET
) -> InequalityCheck:
    """Two-block direct check: conditioning on the first block moves the mean
    of H by at most 2 * sup|H| * phi(gap), uniformly over positive-mass atoms."""
    if len(problem.blocks) != 2:
        raise ValueError("the conditional check needs exactly two blocks")
    spec = problem.chain
    P = _transition_of(spec)
    (m1, n1), (m2, n2) = problem.blocks
    first1, last1, inner1 = _block_pieces(spec, (m1, n1))
    first2, _, inner2 = _block_pieces(spec, (m2, n2))
    mu1 = spec.marginal[first1] * inner1
    mu2 = spec.marginal[first2] * inner2
    bridge = np.linalg.matrix_power(P, m2 - n1)
    cond = bridge[last1][:, first2] * inner2[None, :]  # rows: P(c2 | c1)
    H_nd = problem.h_table(budget).reshape(len(mu1), len(mu2))
    cond_mean = (cond * H_nd).sum(axis=1)
    h_indep = H_nd @ mu2
    support = mu1 > 0
    dev = float(np.abs(cond_mean - h_indep)[support].max())
    bound = 2.0 * problem.H_sup * phi_coefficient(spec, m2 - n1)
    return InequalityCheck(gap=dev, bound=bound, passed=bool(dev <= bound + _SLACK))


# -- distribution smoothing ----------------------------------------------------------


def kolmogorov_distance_to_normal(atoms: np.ndarray, probs: np.ndarray) -> float:
    """Exact sup distance between a finite law's CDF and the standard normal CDF."""
    atoms = np.asarray(atoms, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if atoms.size == 0:
        raise EmptyInput("empty law")
    order = np.argsort(atoms, kind="stable")
    atoms, probs = atoms[order], probs[order]
    uniq, inv = np.unique(atoms, return_inverse=True)
    mass = np.zeros(uniq.size)
    np.add.at(mass, inv, probs)
    cdf = np.cumsum(mass)
    cdf_left = cdf - mass
    ref = ndtr(uniq)
    return float(np.maximum(cdf - ref, ref - cdf_left).max())


@dataclass(frozen=True)
class SmoothingCheck:
    lhs: float
    rhs_sup: float
    rhs_lb: dict
    passed: bool


def check_smoothing_inequality(
    x_atoms: np.ndarray,
    y_atoms: np.ndarray,
    probs: np.ndarray,
    density_bound: float = NORMAL_DENSITY_BOUND,
    bs: Sequence[int] = (1, 2, 4),
) -> SmoothingCheck:
    """Both closeness-transfer forms for a coupled discrete pair (X, Y) against the normal.

    sup form:  d_K(Y) <= 3 d_K(X) + 4c * max|X - Y|
    moment form, each b: d_K(Y) <= 3 d_K(X) + (1 + 4c) * ||X - Y||_b ** (1 - 1/(b+1))
    """
    x = np.asarray(x_atoms, dtype=np.float64)
    y = np.asarray(y_atoms, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if x.shape != y.shape or x.shape != p.shape:
        raise ValueError("coupled atoms and probabilities must share a shape")
    if x.size == 0:
        raise EmptyInput("empty coupling")
    live = p > 0
    c = float(density_bound)

    lhs = kolmogorov_distance_to_normal(y, p)
    base = 3.0 * kolmogorov_distance_to_normal(x, p)
    diff = np.abs(x - y)
    rhs_sup = base + 4.0 * c * float(diff[live].max())
    ok = lhs <= rhs_sup + _SLACK
    rhs_lb = {}
    for b in bs:
        norm_b = float(np.dot(p, diff**b)) ** (1.0 / b)
        rhs = base + (1.0 + 4.0 * c) * norm_b ** (1.0 - 1.0 / (b + 1.0))
        rhs_lb[int(b)] = rhs
        ok = ok and (lhs <= rhs + _SLACK)
    return SmoothingCheck(lhs=lhs, rhs_sup=rhs_sup, rhs_lb=rhs_lb, passed=bool(ok))
