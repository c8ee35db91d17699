"""Bounded observables of several time points and the index maps that couple them.

An Observable evaluates on a tuple of per-time-point inputs. Inputs are either
embedded real vectors (default) or raw state codes (``on_states=True``, used by
indicator-product observables). Every observable carries a declared sup/Hoelder
bound that downstream rate bounds consume.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, EmptySet, UnsupportedIndexFamily
from .processes import ProcessSpec
from .rng import DOMAIN_AUX, replication_generator

_EXACT_BUDGET = 10**7


@dataclass(frozen=True)
class Observable:
    """Real function of `arity` time points with declared bounds.

    fn receives one argument per time point: a float vector of shape (dim,)
    by default, or an integer state code when on_states is set. Evaluations
    must stay within bound_M in absolute value.
    """

    arity: int
    fn: Callable
    bound_M: float
    holder_kappa: float = 1.0
    growth_iota: Optional[float] = None
    centered: bool = False
    on_states: bool = False
    centering_stderr: float = 0.0
    name: str = "observable"

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise ValueError("arity must be >= 1")
        if not (0.0 < self.holder_kappa <= 1.0):
            raise ValueError("holder_kappa must lie in (0, 1]")
        if self.bound_M <= 0:
            raise ValueError("bound_M must be positive")

    def eval(self, *args) -> float:
        return float(np.asarray(self.fn(*args), dtype=np.float64).reshape(()))

    def value_table(self, spec: ProcessSpec, budget: int = _EXACT_BUDGET) -> np.ndarray:
        """Dense evaluation table over input-code tuples, flat C-order shape (count**arity,)."""
        count = spec.input_code_count
        total = count**self.arity
        if total > budget:
            raise BudgetExceeded(f"{total} table entries exceed budget {budget}")
        emb = spec.embedding
        out = np.empty(total, dtype=np.float64)
        for flat, codes in enumerate(itertools.product(range(count), repeat=self.arity)):
            if self.on_states:
                out[flat] = self.eval(*codes)
            else:
                out[flat] = self.eval(*(emb[c] for c in codes))
        return out


# -- construction and checks -----------------------------------------------------


def spot_check_bound(F: Observable, spec: ProcessSpec) -> None:
    """Exact sup check of |F| <= bound_M over the enumerable input space."""
    table = F.value_table(spec)
    worst = float(np.abs(table).max())
    if worst > F.bound_M + 1e-9:
        raise ValueError(f"observable exceeds declared bound: {worst:.6g} > {F.bound_M:.6g}")


def check_holder_witness(
    F: Observable, spec: ProcessSpec, pairs: int = 10**4, seed: int = 0
) -> None:
    """Random-pair witness check of the declared (bound_M, holder_kappa).

    |F(x) - F(y)| <= bound_M * sum_i max_coord|x_i - y_i|**kappa must hold on
    every sampled pair; a violation rejects the construction.
    """
    if F.on_states:
        return  # piecewise-constant observables carry no smoothness claim
    gen = replication_generator(seed, DOMAIN_AUX, 0)
    count = spec.input_code_count
    emb = spec.embedding
    xs = gen.integers(0, count, size=(pairs, F.arity))
    ys = gen.integers(0, count, size=(pairs, F.arity))
    for x_codes, y_codes in zip(xs, ys):
        fx = F.eval(*(emb[c] for c in x_codes))
        fy = F.eval(*(emb[c] for c in y_codes))
        gap = sum(
            float(np.abs(emb[a] - emb[b]).max()) ** F.holder_kappa
            for a, b in zip(x_codes, y_codes)
        )
        if abs(fx - fy) > F.bound_M * gap + 1e-9:
            raise ValueError(
                f"Hoelder witness violated: |{fx:.6g} - {fy:.6g}| > {F.bound_M:.6g} * {gap:.6g}"
            )


def make_observable(
    arity: int,
    fn: Callable,
    bound_M: float,
    holder_kappa: float = 1.0,
    growth_iota: Optional[float] = None,
    on_states: bool = False,
    spec: Optional[ProcessSpec] = None,
    name: str = "observable",
) -> Observable:
    """Observable with declared constants, verified against spec when given."""
    F = Observable(
        arity=arity,
        fn=fn,
        bound_M=float(bound_M),
        holder_kappa=float(holder_kappa),
        growth_iota=growth_iota,
        on_states=on_states,
        name=name,
    )
    if spec is not None:
        spot_check_bound(F, spec)
        check_holder_witness(F, spec)
    return F


def make_product_observable(spec: ProcessSpec, arity: int, power: int = 1) -> Observable:
    """F(x_1..x_l) = prod_i x_i**power on one-dimensional embedded values."""
    if spec.dim != 1:
        raise ValueError("product observable needs one-dimensional embeddings")
    p = int(power)

    def fn(*args) -> float:
        out = 1.0
        for a in args:
            out *= float(a[0]) ** p
        return out

    B = float(np.abs(spec.embedding).max())
    M = max(1.0, float(p)) * max(B, 1.0) ** (p * arity)
    return make_observable(arity, fn, bound_M=M, holder_kappa=1.0, spec=spec, name="product")


def make_table_observable(
    values: Sequence[float], arity: int, spec: ProcessSpec, holder_kappa: float = 1.0
) -> Observable:
    """Observable given as a dense table over state-code tuples (flat C order)."""
    table = np.asarray(values, dtype=np.float64)
    count = spec.input_code_count
    if table.shape != (count**arity,):
        raise ValueError(f"table must have {count**arity} entries, got {table.shape}")
    strides = count ** np.arange(arity - 1, -1, -1)

    def fn(*codes) -> float:
        flat = int(np.dot(np.asarray(codes, dtype=np.int64), strides))
        return float(table[flat])

    M = max(float(np.abs(table).max()), 1e-300)
    return make_observable(arity, fn, bound_M=M, on_states=True, spec=spec, name="table")


def make_return_time_observable(sets: Sequence[Sequence[int]], alphabet_size: int) -> Observable:
    """Product of per-coordinate membership indicators: counts simultaneous visits.

    Each target set must be a nonempty proper subset of the alphabet.
    """
    frozen: list[frozenset[int]] = []
    for j, A in enumerate(sets):
        A = frozenset(int(s) for s in A)
        if not A:
            raise EmptySet(f"target set {j} is empty")
        if not A.issubset(range(alphabet_size)):
            raise ValueError(f"target set {j} has states outside the alphabet")
        if len(A) == alphabet_size:
            raise EmptySet(f"target set {j} has an empty complement; a proper subset is required")
        frozen.append(A)

    def fn(*codes) -> float:
        out = 1.0
        for code, A in zip(codes, frozen):
            out *= 1.0 if int(code) in A else 0.0
        return out

    return Observable(
        arity=len(frozen),
        fn=fn,
        bound_M=1.0,
        holder_kappa=1.0,
        on_states=True,
        name="return_time_indicator",
    )


# -- centering ---------------------------------------------------------------------


def centering_estimate(
    F: Observable,
    spec: ProcessSpec,
    exact_budget: int = _EXACT_BUDGET,
    mc_samples: int = 200_000,
    seed: int = 0,
) -> tuple[float, float, bool]:
    """Mean of F under independent copies of the stationary marginal.

    Returns (value, stderr, exact). Exact nested summation when the input-code
    grid fits the budget, Monte Carlo with reported standard error otherwise.
    """
    count = spec.input_code_count
    total = count**F.arity
    if total <= exact_budget:
        table = F.value_table(spec, budget=exact_budget)
        probs = spec.input_marginal()
        weights = np.ones(1)
        for _ in range(F.arity):
            weights = np.multiply.outer(weights, probs).ravel()
        return float(np.dot(table, weights)), 0.0, True
    if mc_samples < 2:
        raise BudgetExceeded("input grid exceeds the exact budget and Monte Carlo is disabled")
    gen = replication_generator(seed, DOMAIN_AUX, 1)
    probs = spec.input_marginal()
    emb = spec.embedding
    vals = np.empty(mc_samples, dtype=np.float64)
    codes = gen.choice(count, size=(mc_samples, F.arity), p=probs)
    for i in range(mc_samples):
        if F.on_states:
            vals[i] = F.eval(*codes[i])
        else:
            vals[i] = F.eval(*(emb[c] for c in codes[i]))
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(mc_samples)), False


def centering_constant(F: Observable, spec: ProcessSpec, **kwargs) -> float:
    """Product-measure mean subtracted so independent-copy evaluations average to zero."""
    value, _, _ = centering_estimate(F, spec, **kwargs)
    return value


def center(F: Observable, spec: ProcessSpec, **kwargs) -> Observable:
    """F minus its product-measure mean, flagged centered."""
    shift, stderr, _ = centering_estimate(F, spec, **kwargs)
    base = F.fn

    def fn(*args) -> float:
        return float(np.asarray(base(*args), dtype=np.float64).reshape(())) - shift

    return replace(
        F,
        fn=fn,
        bound_M=F.bound_M + abs(shift),
        centered=True,
        centering_stderr=stderr,
        name=F.name + "_centered",
    )


def truncate(F: Observable, R: float) -> Observable:
    """F where |F| <= R and 0 elsewhere; the new sup bound is R."""
    if R <= 0:
        raise ValueError("R must be positive")
    base = F.fn

    def fn(*args) -> float:
        v = float(np.asarray(base(*args), dtype=np.float64).reshape(()))
        return v if abs(v) <= R else 0.0

    return replace(F, fn=fn, bound_M=float(R), name=F.name + f"_trunc{R:g}")


# -- index families ------------------------------------------------------------------


@dataclass(frozen=True)
class IndexFamily:
    """Strictly increasing index maps q_1..q_ell coupling the time points of one summand."""

    kind: str
    ell: int
    coefficients: Optional[tuple[tuple[int, ...], ...]] = None

    def __post_init__(self) -> None:
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        if self.kind == "linear":
            if self.coefficients is not None:
                raise ValueError("linear families take no coefficients")
            return
        if self.kind != "polynomial":
            raise ValueError(f"unknown index family kind: {self.kind!r}")
        coeffs = self.coefficients
        if coeffs is None or len(coeffs) != self.ell:
            raise ValueError("polynomial families need one coefficient list per map")
        coeffs = tuple(tuple(int(c) for c in row) for row in coeffs)
        object.__setattr__(self, "coefficients", coeffs)
        degrees = []
        for i, row in enumerate(coeffs):
            if not row or all(c == 0 for c in row):
                raise UnsupportedIndexFamily(f"map {i + 1} is identically zero")
            deg = max(k for k, c in enumerate(row) if c != 0)
            if deg < 1:
                raise UnsupportedIndexFamily(f"map {i + 1} is constant")
            if row[deg] < 0:
                raise UnsupportedIndexFamily(f"map {i + 1} has a negative leading coefficient")
            degrees.append(deg)
        if len(set(degrees)) != 1:
            raise UnsupportedIndexFamily(
                f"mixed polynomial degrees {sorted(set(degrees))} are not supported"
            )

    def q_array(self, i: int, ns: np.ndarray) -> np.ndarray:
        """q_i evaluated on an int64 array of positive n."""
        ns = np.asarray(ns, dtype=np.int64)
        if self.kind == "linear":
            return i * ns
        row = self.coefficients[i - 1]
        out = np.zeros_like(ns)
        power = np.ones_like(ns)
        for c in row:
            out += c * power
            power = power * ns
        return out

    def q(self, i: int, n: int) -> int:
        return int(self.q_array(i, np.array([n]))[0])

    def table(self, N: int) -> np.ndarray:
        """Stacked values q_i(1..N), shape (ell, N), validated on this horizon."""
        ns = np.arange(1, N + 1, dtype=np.int64)
        rows = np.stack([self.q_array(i, ns) for i in range(1, self.ell + 1)])
        if rows.min() < 1:
            raise UnsupportedIndexFamily("index maps must take positive values")
        if self.kind != "linear" and np.any(np.diff(rows, axis=1) <= 0):
            raise UnsupportedIndexFamily("index maps must be strictly increasing")
        # eventually ordered: q_1(n) < ... < q_ell(n) from some n0 <= N onward
        if self.ell > 1:
            ordered = np.all(np.diff(rows, axis=0) > 0, axis=0)
            if not ordered[-1]:
                raise UnsupportedIndexFamily("index maps are not ordered by the horizon")
        return rows

    def max_index(self, N: int) -> int:
        return int(self.table(N).max()) if N >= 1 else 0


def linear_index_family(ell: int) -> IndexFamily:
    """The default coupling q_i(n) = i * n."""
    return IndexFamily(kind="linear", ell=ell)


def polynomial_index_family(coefficients: Sequence[Sequence[int]]) -> IndexFamily:
    """Integer-polynomial maps, ascending-power coefficients, equal degrees required."""
    return IndexFamily(
        kind="polynomial",
        ell=len(coefficients),
        coefficients=tuple(tuple(int(c) for c in row) for row in coefficients),
    )
