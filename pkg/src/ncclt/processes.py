"""Stationary finite-state process generators with exact mixing metadata.

Three kinds are supported:

``iid``
    Independent draws from a marginal law; the uniform mixing coefficient is 0.
``doeblin_chain``
    A primitive finite-state Markov chain started from its stationary vector;
    the uniform mixing coefficient has an exact finite formula.
``shift_system``
    A symbol sequence (independent or Markov) read through a centered window
    of radius ``coding_width``; the value at time m is a function of symbols
    m-r0 .. m+r0, so window-averaged approximations are exact at radius r0.

Paths are deterministic functions of the seed; the replication engine derives
one counter-based stream per replication.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, NonStochastic, NotPrimitive, Unsupported
from .rng import single_generator

_ROW_SUM_TOL = 1e-9
_STATIONARY_TOL = 1e-10

KIND_IID = "iid"
KIND_CHAIN = "doeblin_chain"
KIND_SHIFT = "shift_system"


@dataclass(frozen=True)
class ProcessSpec:
    """Immutable process description, safely shareable across worker threads."""

    kind: str
    alphabet_size: int
    marginal: np.ndarray
    transition: Optional[np.ndarray] = None
    coding_width: int = 0
    embedding: np.ndarray = field(default=None)  # (input_code_count, dim)

    def __post_init__(self) -> None:
        if self.kind not in (KIND_IID, KIND_CHAIN, KIND_SHIFT):
            raise ValueError(f"unknown process kind: {self.kind!r}")
        if self.alphabet_size < 1:
            raise ValueError("alphabet_size must be positive")
        if self.coding_width < 0:
            raise ValueError("coding_width must be nonnegative")
        if self.kind != KIND_SHIFT and self.coding_width != 0:
            raise ValueError("coding_width is only meaningful for shift systems")

        marginal = np.asarray(self.marginal, dtype=np.float64)
        if marginal.shape != (self.alphabet_size,):
            raise ValueError("marginal has wrong length")
        if np.any(marginal < 0) or abs(marginal.sum() - 1.0) > _ROW_SUM_TOL:
            raise NonStochastic("marginal is not a probability vector")
        object.__setattr__(self, "marginal", _frozen(marginal))

        if self.transition is not None:
            P = np.asarray(self.transition, dtype=np.float64)
            if P.shape != (self.alphabet_size, self.alphabet_size):
                raise ValueError("transition matrix has wrong shape")
            if np.any(P < 0):
                raise NonStochastic("transition matrix has negative entries")
            dev = np.abs(P.sum(axis=1) - 1.0)
            if dev.max() > _ROW_SUM_TOL:
                row = int(dev.argmax())
                raise NonStochastic(f"transition row {row} sums to {P[row].sum():.12g}")
            if np.max(np.abs(marginal @ P - marginal)) > _STATIONARY_TOL:
                raise ValueError("marginal is not stationary for the transition matrix")
            object.__setattr__(self, "transition", _frozen(P))
        elif self.kind == KIND_CHAIN:
            raise ValueError("doeblin_chain requires a transition matrix")

        emb = self.embedding
        if emb is None:
            # default: the code value itself, one real coordinate
            emb = np.arange(self.input_code_count, dtype=np.float64)[:, None]
        emb = np.asarray(emb, dtype=np.float64)
        if emb.ndim == 1:
            emb = emb[:, None]
        if emb.shape[0] != self.input_code_count:
            raise ValueError(
                f"embedding must have one row per observable input code "
                f"({self.input_code_count}), got {emb.shape[0]}"
            )
        object.__setattr__(self, "embedding", _frozen(emb))

    # -- observable-input view ------------------------------------------------

    @property
    def window_width(self) -> int:
        return 2 * self.coding_width + 1

    @property
    def input_code_count(self) -> int:
        """Number of distinct values the observable can read at one time point."""
        if self.kind == KIND_SHIFT:
            return int(self.alphabet_size ** self.window_width)
        return self.alphabet_size

    @property
    def dim(self) -> int:
        return int(self.embedding.shape[1])

    def input_marginal(self) -> np.ndarray:
        """Stationary law over observable input codes."""
        if self.kind != KIND_SHIFT:
            return self.marginal.copy()
        a, w = self.alphabet_size, self.window_width
        digits = _code_digits(np.arange(a**w), a, w)
        if self.transition is None:
            probs = self.marginal[digits].prod(axis=1)
        else:
            probs = self.marginal[digits[:, 0]].copy()
            for t in range(w - 1):
                probs *= self.transition[digits[:, t], digits[:, t + 1]]
        return probs


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _code_digits(codes: np.ndarray, a: int, width: int) -> np.ndarray:
    """Big-endian base-a digits of each code; shape (len(codes), width)."""
    out = np.empty((codes.shape[0], width), dtype=np.int64)
    rem = codes.astype(np.int64)
    for pos in range(width - 1, -1, -1):
        out[:, pos] = rem % a
        rem = rem // a
    return out


@dataclass(frozen=True)
class PathSample:
    """One realized path of observable input codes plus the seed that made it."""

    values: np.ndarray
    seed_tag: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(np.asarray(self.values)))

    def __len__(self) -> int:
        return int(self.values.shape[0])


# -- construction --------------------------------------------------------------


def stationary_vector(transition: np.ndarray) -> np.ndarray:
    """Stationary probability vector, solved exactly from the linear system."""
    P = np.asarray(transition, dtype=np.float64)
    a = P.shape[0]
    # (P^T - I) pi = 0 with sum(pi) = 1, solved as an augmented least squares
    A = np.vstack([P.T - np.eye(a), np.ones((1, a))])
    b = np.zeros(a + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def is_primitive(transition: np.ndarray) -> bool:
    """Some power up to alphabet_size**2 has all entries strictly positive."""
    P = np.asarray(transition, dtype=np.float64)
    a = P.shape[0]
    reach = (P > 0).astype(np.uint8)
    power = reach.copy()
    for _ in range(a * a):
        if power.all():
            return True
        power = (power @ reach > 0).astype(np.uint8)
    return bool(power.all())


def build_iid(marginal, embedding=None) -> ProcessSpec:
    marginal = np.asarray(marginal, dtype=np.float64)
    return ProcessSpec(
        kind=KIND_IID,
        alphabet_size=marginal.shape[0],
        marginal=marginal,
        embedding=embedding,
    )


def build_doeblin_chain(transition, embedding=None) -> ProcessSpec:
    """Chain spec with the stationary vector solved from the transition matrix."""
    P = np.asarray(transition, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.any(P < 0):
        raise NonStochastic("transition matrix has negative entries")
    dev = np.abs(P.sum(axis=1) - 1.0)
    if dev.max() > _ROW_SUM_TOL:
        row = int(dev.argmax())
        raise NonStochastic(f"transition row {row} sums to {P[row].sum():.12g}")
    if not is_primitive(P):
        raise NotPrimitive("no strictly positive power found")
    return ProcessSpec(
        kind=KIND_CHAIN,
        alphabet_size=P.shape[0],
        marginal=stationary_vector(P),
        transition=P,
        embedding=embedding,
    )


def build_shift_system(
    marginal=None,
    transition=None,
    coding_width: int = 0,
    window_values=None,
) -> ProcessSpec:
    """Shift system over a symbol alphabet, observed through a centered window.

    window_values: array of shape (alphabet**(2*coding_width+1), dim) or a
    callable mapping a symbol tuple to a real vector; default reads the center
    symbol's value.
    """
    if transition is not None:
        transition = np.asarray(transition, dtype=np.float64)
        if not is_primitive(transition):
            raise NotPrimitive("no strictly positive power found")
        marginal = stationary_vector(transition)
    elif marginal is None:
        raise ValueError("shift system needs a marginal or a transition matrix")
    marginal = np.asarray(marginal, dtype=np.float64)
    a = marginal.shape[0]
    w = 2 * coding_width + 1
    if a**w > 10**7:
        raise BudgetExceeded("window code space exceeds the enumeration budget")
    if callable(window_values):
        digits = _code_digits(np.arange(a**w), a, w)
        rows = [np.atleast_1d(np.asarray(window_values(tuple(d)), dtype=np.float64)) for d in digits]
        window_values = np.vstack(rows)
    elif window_values is None:
        digits = _code_digits(np.arange(a**w), a, w)
        window_values = digits[:, coding_width].astype(np.float64)[:, None]
    return ProcessSpec(
        kind=KIND_SHIFT,
        alphabet_size=a,
        marginal=marginal,
        transition=transition,
        coding_width=coding_width,
        embedding=window_values,
    )


# -- mixing coefficients --------------------------------------------------------


def phi_coefficient(spec: ProcessSpec, n: int) -> float:
    """Exact uniform mixing coefficient at gap n.

    For a chain this is max_x sum_y (P^n(x,y) - pi(y))_+, the worst-case
    total deviation of the n-step law from stationarity; point-mass initial
    conditions attain the supremum over past events.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.kind == KIND_IID:
        return 0.0
    if spec.kind == KIND_SHIFT:
        if spec.coding_width > 0:
            raise Unsupported("only an upper bound is available for coded windows; use phi_bound")
        if spec.transition is None:
            return 0.0
    Pn = np.linalg.matrix_power(spec.transition, n)
    excess = np.clip(Pn - spec.marginal[None, :], 0.0, None)
    return float(excess.sum(axis=1).max())


def phi_bound(spec: ProcessSpec, n: int = 200) -> tuple[float, float]:
    """Certified (d, c) with phi(k) <= d * c**k on the numerically resolved range.

    c starts at the second-largest eigenvalue modulus of the transition
    matrix; d is the max pointwise ratio. The certificate is fitted only
    where phi(k) > 1e-12: below that, matrix powers return float noise, not
    the coefficient, so the geometric claim carries an implicit additive
    floor of 1e-12 past the resolved range. A tail-ratio check on the
    resolved segment inflates c slightly when the decay has not settled
    (e.g. polynomial factors from defective transition matrices).
    """
    if spec.kind == KIND_IID or (spec.kind == KIND_SHIFT and spec.transition is None and spec.coding_width == 0):
        return 0.0, 0.5
    if spec.transition is None:
        return 0.0, 0.5
    if not is_primitive(spec.transition):
        raise NotPrimitive("no strictly positive power found")

    horizon = max(int(n), 16)
    base = spec if spec.kind != KIND_SHIFT else ProcessSpec(
        kind=KIND_CHAIN,
        alphabet_size=spec.alphabet_size,
        marginal=spec.marginal,
        transition=spec.transition,
    )
    ks = np.arange(1, horizon + 1)
    phis = np.array([phi_coefficient(base, int(k)) for k in ks])
    live = phis > 1e-12
    if not live.any():
        d, c = 0.0, 0.5
    else:
        k_max = int(np.nonzero(live)[0][-1]) + 1  # 1-based gap of the last resolved value
        eigvals = np.linalg.eigvals(spec.transition)
        moduli = np.sort(np.abs(eigvals))[::-1]
        c = float(min(max(moduli[1], 1e-15), 1.0 - 1e-12))
        lo = max(3 * k_max // 4, 1)
        if k_max - lo >= 2:
            seg = phis[:k_max]
            for _ in range(64):
                if np.all(seg[lo:] <= c * seg[lo - 1 : -1] + 1e-15):
                    break
                c = min(1.0 - 1e-12, c * 1.05)
        d = float(np.max(phis[:k_max] / np.power(c, ks[:k_max])))

    if spec.kind == KIND_SHIFT and spec.coding_width > 0:
        # window at gap k depends on symbols within coding_width of each end
        d = max(d, 1.0) * c ** (-2 * spec.coding_width)
    return d, c


# -- sampling --------------------------------------------------------------------


def _symbols_from_uniforms(spec: ProcessSpec, U: np.ndarray) -> np.ndarray:
    """Map uniforms (rows = replications) to symbol paths, stationary start."""
    cum0 = np.cumsum(spec.marginal)
    cum0[-1] = 1.0
    if spec.transition is None or spec.kind == KIND_IID:
        return np.searchsorted(cum0, U, side="right").astype(np.int16)
    C = np.cumsum(spec.transition, axis=1)
    C[:, -1] = 1.0
    rows, L = U.shape
    states = np.empty((rows, L), dtype=np.int16)
    states[:, 0] = np.searchsorted(cum0, U[:, 0], side="right")
    cur = states[:, 0].astype(np.int64)
    for t in range(1, L):
        thresh = C[cur]  # (rows, a)
        cur = (U[:, t][:, None] >= thresh).sum(axis=1)
        states[:, t] = cur
    return states


def _window_codes(symbols: np.ndarray, a: int, width: int) -> np.ndarray:
    """Codes of sliding windows; output has width-1 fewer columns."""
    rows, L = symbols.shape
    out_len = L - width + 1
    codes = np.zeros((rows, out_len), dtype=np.int64)
    for t in range(width):
        codes *= a
        codes += symbols[:, t : t + out_len]
    return codes


def sample_states_batch(spec: ProcessSpec, length: int, seed_sequences) -> np.ndarray:
    """Observable input codes for a batch of replications, one stream per row."""
    if length < 1:
        raise ValueError("length must be >= 1")
    pad = 2 * spec.coding_width if spec.kind == KIND_SHIFT else 0
    draws = length + pad
    U = np.empty((len(seed_sequences), draws), dtype=np.float64)
    for i, ss in enumerate(seed_sequences):
        U[i] = single_generator(ss).random(draws)
    symbols = _symbols_from_uniforms(spec, U)
    if spec.kind == KIND_SHIFT:
        return _window_codes(symbols, spec.alphabet_size, spec.window_width)
    return symbols.astype(np.int64)


def sample_path(spec: ProcessSpec, length: int, seed) -> PathSample:
    """One stationary path of observable input codes, deterministic in the seed."""
    if isinstance(seed, np.random.SeedSequence):
        tag = f"ss:{seed.entropy}:{tuple(seed.spawn_key)}"
        seqs = [seed]
    else:
        tag = f"seed:{int(seed)}"
        seqs = [np.random.SeedSequence(entropy=int(seed))]
    values = sample_states_batch(spec, length, seqs)[0]
    return PathSample(values=values, seed_tag=tag)


# -- window averaging -------------------------------------------------------------


def _reversed_transition(spec: ProcessSpec) -> np.ndarray:
    P, pi = spec.transition, spec.marginal
    rev = (pi[None, :] * P.T) / pi[:, None]
    return rev / rev.sum(axis=1, keepdims=True)


def averaged_window_table(spec: ProcessSpec, r: int) -> np.ndarray:
    """Value table of the radius-r window average, indexed by full window code.

    Entry w is the exact conditional expectation of the embedded value given
    the centermost 2r+1 symbols of window w; boundary symbols are integrated
    out under the symbol law (reversed steps on the left, forward on the right).
    """
    r0, a = spec.coding_width, spec.alphabet_size
    if r >= r0:
        return spec.embedding.copy()
    w_full = spec.window_width
    w_in = 2 * r + 1
    ext = r0 - r
    full_codes = np.arange(a**w_full)
    digits = _code_digits(full_codes, a, w_full)
    inner_codes = np.zeros(a**w_full, dtype=np.int64)
    for t in range(ext, ext + w_in):
        inner_codes = inner_codes * a + digits[:, t]

    # conditional mean for each inner code
    inner_digits = _code_digits(np.arange(a**w_in), a, w_in)
    ext_digits = _code_digits(np.arange(a**ext), a, ext)
    if spec.transition is None:
        left_w = spec.marginal[ext_digits].prod(axis=1)
        right_w = left_w
        left_given = lambda edge: left_w  # noqa: E731
        right_given = lambda edge: right_w  # noqa: E731
    else:
        P = spec.transition
        rev = _reversed_transition(spec)

        def left_given(edge: int) -> np.ndarray:
            # walk left from the leftmost inner symbol
            probs = np.ones(ext_digits.shape[0])
            cur = np.full(ext_digits.shape[0], edge)
            for t in range(ext - 1, -1, -1):
                probs *= rev[cur, ext_digits[:, t]]
                cur = ext_digits[:, t]
            return probs

        def right_given(edge: int) -> np.ndarray:
            probs = np.ones(ext_digits.shape[0])
            cur = np.full(ext_digits.shape[0], edge)
            for t in range(ext):
                probs *= P[cur, ext_digits[:, t]]
                cur = ext_digits[:, t]
            return probs

    means = np.zeros((a**w_in, spec.dim))
    pow_right = a ** np.arange(w_full - 1, -1, -1)
    for inner in range(a**w_in):
        ind = inner_digits[inner]
        lw = left_given(int(ind[0]))
        rw = right_given(int(ind[-1]))
        # full code = left_ext digits, inner digits, right_ext digits
        lcodes = ext_digits @ pow_right[:ext] if ext else np.zeros(1, dtype=np.int64)
        icode = ind @ pow_right[ext : ext + w_in]
        rcodes = ext_digits @ pow_right[ext + w_in :] if ext else np.zeros(1, dtype=np.int64)
        full = lcodes[:, None] + icode + rcodes[None, :]
        wgt = lw[:, None] * rw[None, :]
        means[inner] = (wgt[:, :, None] * spec.embedding[full]).sum(axis=(0, 1)) / wgt.sum()

    return means[inner_codes]


def coarse_grain(path: PathSample, spec: ProcessSpec, r: int) -> np.ndarray:
    """Observable inputs after window averaging at radius r; identity for r >= coding_width.

    Returns the (length, dim) array of embedded values the observable reads.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if spec.kind != KIND_SHIFT or r >= spec.coding_width:
        return spec.embedding[path.values]
    return averaged_window_table(spec, r)[path.values]


def approximation_rate(spec: ProcessSpec, r: int) -> float:
    """Exact sup-norm error of replacing the value by its radius-r window average."""
    if spec.kind != KIND_SHIFT or r >= spec.coding_width:
        return 0.0
    table = averaged_window_table(spec, r)
    return float(np.abs(spec.embedding - table).max())
