"""Dependency combinatorics for coupled index sums.

For the index maps q_1..q_ell, two summand indices n and m interact when some
pair of coupled time points comes within l of each other:

    d(n, m) = min_{i,j} |q_i(n) - q_j(m)|,   A_n = {1 <= m <= N : d(n, m) <= l}.

Neighborhoods are stored as unions of integer intervals (at most ell**2 per
index before merging). Annuli classify indices by the set distance
d(A_n, A_m) = min over members; the key identity used throughout is

    d(A, B) = dist(U_i q_i(A), U_j q_j(B))

as subsets of the integer line, which turns all-pairs annulus computation into
a per-n one-dimensional distance transform plus a fixed-width sliding minimum.
All arithmetic is integer-exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.ndimage import minimum_filter1d

from .errors import EmptyInput, MixedBlock
from .observables import IndexFamily, linear_index_family

_BIG = np.int32(2**30)


def cardinality_constants(ell: int) -> tuple[int, int]:
    """(K1, K2) with |A_n| <= K1*l and |annulus(n,k)| <= K2*l for l >= 1."""
    return 3 * ell**2, 4 * ell**6 * (ell**2 + 2)


def _family(ell: Optional[int], index_family: Optional[IndexFamily]) -> IndexFamily:
    if index_family is not None:
        return index_family
    if ell is None:
        raise ValueError("either ell or index_family is required")
    return linear_index_family(ell)


def d_ell(a: int, b: int, ell: int) -> int:
    """min over 1 <= i, j <= ell of |i*a - j*b|, exact."""
    if a < 1 or b < 1 or ell < 1:
        raise ValueError("arguments must be positive")
    i = np.arange(1, ell + 1, dtype=np.int64)
    return int(np.abs(i[:, None] * a - i[None, :] * b).min())


def pair_distance(a: int, b: int, family: IndexFamily) -> int:
    """min over i, j of |q_i(a) - q_j(b)| for a general index family."""
    qa = np.array([family.q(i, a) for i in range(1, family.ell + 1)], dtype=np.int64)
    qb = np.array([family.q(j, b) for j in range(1, family.ell + 1)], dtype=np.int64)
    return int(np.abs(qa[:, None] - qb[None, :]).min())


def set_distance(A: Iterable[int], B: Iterable[int], ell: int) -> int:
    """min over a in A, b in B of d_ell(a, b); 0 when the multiplied images meet."""
    A = np.asarray(sorted(set(int(x) for x in A)), dtype=np.int64)
    B = np.asarray(sorted(set(int(x) for x in B)), dtype=np.int64)
    if A.size == 0 or B.size == 0:
        raise EmptyInput("set_distance needs nonempty sets")
    i = np.arange(1, ell + 1, dtype=np.int64)
    UA = np.unique(np.multiply.outer(i, A))
    UB = np.unique(np.multiply.outer(i, B))
    pos = np.searchsorted(UA, UB)
    best = np.int64(np.iinfo(np.int64).max)
    right = pos < UA.size
    if right.any():
        best = min(best, np.min(UA[pos[right]] - UB[right]))
    left = pos > 0
    if left.any():
        best = min(best, np.min(UB[left] - UA[pos[left] - 1]))
    return int(best)


# -- interval construction ------------------------------------------------------


def _merge_intervals(pairs: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Merge integer intervals, joining touching ones ([1,3] and [4,6])."""
    pairs = sorted(p for p in pairs if p[0] <= p[1])
    out: list[tuple[int, int]] = []
    for lo, hi in pairs:
        if out and lo <= out[-1][1] + 1:
            if hi > out[-1][1]:
                out[-1] = (out[-1][0], hi)
        else:
            out.append((lo, hi))
    return out


def _interval_table(q_table: np.ndarray, N: int, l: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merged neighborhood intervals for every n; CSR arrays (starts, ends, row_ptr).

    q_table has shape (ell, N) holding q_i(1..N). Interval per (i, j):
    m with q_j(m) in [q_i(n) - l, q_i(n) + l], found by binary search since
    each q_j is strictly increasing.
    """
    ell = q_table.shape[0]
    los = np.empty((ell * ell, N), dtype=np.int64)
    his = np.empty((ell * ell, N), dtype=np.int64)
    row = 0
    for i in range(ell):
        centers = q_table[i]
        for j in range(ell):
            los[row] = np.searchsorted(q_table[j], centers - l, side="left") + 1
            his[row] = np.searchsorted(q_table[j], centers + l, side="right")
            row += 1
    starts: list[int] = []
    ends: list[int] = []
    row_ptr = np.zeros(N + 1, dtype=np.int64)
    for n0 in range(N):
        merged = _merge_intervals(
            [(int(los[r, n0]), int(his[r, n0])) for r in range(ell * ell)]
        )
        for lo, hi in merged:
            starts.append(lo)
            ends.append(hi)
        row_ptr[n0 + 1] = len(starts)
    return (
        np.asarray(starts, dtype=np.int64),
        np.asarray(ends, dtype=np.int64),
        row_ptr,
    )


def neighborhood_intervals(
    n: int, N: int, l: int, ell: Optional[int] = None, index_family: Optional[IndexFamily] = None
) -> list[tuple[int, int]]:
    """Disjoint merged intervals whose union is the neighborhood of n."""
    fam = _family(ell, index_family)
    q_table = fam.table(N)
    pairs = []
    for i in range(fam.ell):
        c = int(q_table[i, n - 1])
        for j in range(fam.ell):
            lo = int(np.searchsorted(q_table[j], c - l, side="left")) + 1
            hi = int(np.searchsorted(q_table[j], c + l, side="right"))
            pairs.append((lo, hi))
    return _merge_intervals(pairs)


def neighborhood(
    n: int, N: int, l: int, ell: Optional[int] = None, index_family: Optional[IndexFamily] = None
) -> np.ndarray:
    """Sorted array of indices within coupled distance l of n."""
    if not (1 <= n <= N):
        raise ValueError("need 1 <= n <= N")
    if l < 0:
        raise ValueError("l must be >= 0")
    segs = neighborhood_intervals(n, N, l, ell, index_family)
    if not segs:
        return np.empty(0, dtype=np.int64)
    return np.concatenate([np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in segs])


# -- the precomputed index -------------------------------------------------------


@dataclass(frozen=True)
class NeighborhoodIndex:
    """Immutable per-horizon index of all neighborhoods, shared across workers."""

    N: int
    l: int
    family: IndexFamily
    q_table: np.ndarray  # (ell, N) int64
    starts: np.ndarray  # CSR merged intervals
    ends: np.ndarray
    row_ptr: np.ndarray

    @property
    def ell(self) -> int:
        return self.family.ell

    @property
    def K1(self) -> int:
        return cardinality_constants(self.ell)[0]

    @property
    def K2(self) -> int:
        return cardinality_constants(self.ell)[1]

    @staticmethod
    def build(
        N: int, l: int, ell: Optional[int] = None, index_family: Optional[IndexFamily] = None
    ) -> "NeighborhoodIndex":
        if N < 1:
            raise ValueError("N must be >= 1")
        if l < 0:
            raise ValueError("l must be >= 0")
        fam = _family(ell, index_family)
        q_table = fam.table(N)
        starts, ends, row_ptr = _interval_table(q_table, N, l)
        return NeighborhoodIndex(
            N=N, l=l, family=fam, q_table=q_table, starts=starts, ends=ends, row_ptr=row_ptr
        )

    def intervals(self, n: int) -> list[tuple[int, int]]:
        lo, hi = self.row_ptr[n - 1], self.row_ptr[n]
        return [(int(s), int(e)) for s, e in zip(self.starts[lo:hi], self.ends[lo:hi])]

    def neighborhood(self, n: int) -> np.ndarray:
        segs = self.intervals(n)
        return np.concatenate([np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in segs])

    def sizes(self) -> np.ndarray:
        """|A_n| for every n, from the interval lengths."""
        lengths = self.ends - self.starts + 1
        out = np.zeros(self.N, dtype=np.int64)
        np.add.at(out, np.repeat(np.arange(self.N), np.diff(self.row_ptr)), lengths)
        return out

    def membership_matrix(self, ns: np.ndarray) -> np.ndarray:
        """Boolean (len(ns), N+1) rows of A_n membership; column 0 unused."""
        ns = np.asarray(ns, dtype=np.int64)
        mask = np.zeros((ns.size, self.N + 1), dtype=bool)
        for b, n in enumerate(ns):
            for lo, hi in self.intervals(int(n)):
                mask[b, lo : hi + 1] = True
        return mask

    def _columns(self, arr: np.ndarray, i: int) -> np.ndarray:
        """The columns of arr at positions q_i(1..N); a strided view when the
        i-th map is an arithmetic progression (always true for linear maps)."""
        row = self.q_table[i]
        if row.size >= 2:
            step = int(row[1] - row[0])
            if step > 0 and np.all(np.diff(row) == step):
                return arr[:, int(row[0]) : int(row[-1]) + 1 : step]
        elif row.size == 1:
            return arr[:, int(row[0]) : int(row[0]) + 1]
        return arr[:, row]

    def distance_rows(self, ns: np.ndarray) -> np.ndarray:
        """Exact d(A_n, A_m) for each n in ns and every m; shape (len(ns), N), int32.

        Pipeline per batch row: mark occupied positions U_n = union_i q_i(A_n)
        on the integer line, run a two-pass distance transform, pull back
        through every q_j to value V[b] = d(A_n, {b}), scatter V to positions
        q_j(b), take a width-(2l+1) sliding minimum, and read the result off
        at positions q_i(m).
        """
        ns = np.asarray(ns, dtype=np.int64)
        B, N, ell = ns.size, self.N, self.ell
        X = int(self.q_table.max()) + 2
        idx = np.arange(X, dtype=np.int32)

        mask = self.membership_matrix(ns)
        rows, cols = np.nonzero(mask[:, 1:])  # cols are m-1

        occ_neg = np.full((B, X), _BIG, dtype=np.int32)
        occ_pos = np.full((B, X), _BIG, dtype=np.int32)
        for i in range(ell):
            pos = self.q_table[i][cols].astype(np.int32)
            occ_neg[rows, pos] = -pos
            occ_pos[rows, pos] = pos
        fwd = np.minimum.accumulate(occ_neg, axis=1, out=occ_neg)
        fwd += idx
        bwd = np.minimum.accumulate(occ_pos[:, ::-1], axis=1, out=occ_pos[:, ::-1])[:, ::-1]
        bwd -= idx
        dt = np.minimum(fwd, bwd, out=fwd)

        V = np.full((B, N), _BIG, dtype=np.int32)
        for i in range(ell):
            np.minimum(V, self._columns(dt, i), out=V)

        G = np.full((B, X), _BIG, dtype=np.int32)
        for j in range(ell):
            view = self._columns(G, j)
            if view.base is not None:
                np.minimum(view, V, out=view)
            else:
                G[:, self.q_table[j]] = np.minimum(view, V)
        H = minimum_filter1d(G, size=2 * self.l + 1, axis=1, mode="constant", cval=int(_BIG))

        E = np.full((B, N), _BIG, dtype=np.int32)
        for i in range(ell):
            np.minimum(E, self._columns(H, i), out=E)
        return E

    def distance_row(self, n: int) -> np.ndarray:
        return self.distance_rows(np.array([n]))[0]

    def annulus(self, n: int, k: int) -> np.ndarray:
        """Indices m with d(A_n, A_m) exactly k."""
        row = self.distance_row(n)
        return np.nonzero(row == k)[0].astype(np.int64) + 1

    def gamma(self, n: int) -> np.ndarray:
        """The coupled time points {q_i(n)}."""
        return self.q_table[:, n - 1].copy()


def annulus(
    n: int,
    k: int,
    N: int,
    l: int,
    ell: Optional[int] = None,
    index_family: Optional[IndexFamily] = None,
) -> np.ndarray:
    """Indices m with set distance d(A_n, A_m) exactly k."""
    if k < 0:
        raise ValueError("k must be >= 0")
    index = NeighborhoodIndex.build(N, l, ell, index_family)
    return index.annulus(n, k)


# -- block decomposition -----------------------------------------------------------


@dataclass(frozen=True)
class BlockDecomposition:
    """Ordered gap-separated clusters of labeled time points."""

    blocks: tuple[tuple[int, ...], ...]
    labels: tuple[object, ...]
    gap: int

    @property
    def L(self) -> int:
        return len(self.blocks)

    def windows(self) -> list[tuple[int, int]]:
        return [(b[0], b[-1]) for b in self.blocks]


def decompose_blocks(labeled_sets, gap: int) -> BlockDecomposition:
    """Greedy left-to-right clustering of labeled index sets.

    Sort the union; cut wherever consecutive points differ by more than gap;
    every block must inherit a single label, otherwise the caller's sets were
    not gap-separated and MixedBlock is raised.
    """
    if gap < 1:
        raise ValueError("gap must be >= 1")
    if isinstance(labeled_sets, dict):
        items = list(labeled_sets.items())
    else:
        items = [(label, pts) for label, pts in labeled_sets]
    points: list[tuple[int, object]] = []
    for label, pts in items:
        for p in pts:
            points.append((int(p), label))
    if not points:
        raise EmptyInput("no points to decompose")
    points.sort(key=lambda t: t[0])

    blocks: list[list[int]] = [[points[0][0]]]
    labels: list[set] = [{points[0][1]}]
    for value, label in points[1:]:
        if value - blocks[-1][-1] > gap:
            blocks.append([value])
            labels.append({label})
        else:
            if value != blocks[-1][-1]:
                blocks[-1].append(value)
            labels[-1].add(label)
    for block, labs in zip(blocks, labels):
        if len(labs) != 1:
            raise MixedBlock(f"labels {sorted(map(str, labs))} share the cluster at {block[0]}")
    return BlockDecomposition(
        blocks=tuple(tuple(b) for b in blocks),
        labels=tuple(next(iter(labs)) for labs in labels),
        gap=gap,
    )
