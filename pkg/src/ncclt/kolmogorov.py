"""Sup-distance between distribution functions: empirical and exact variants."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.special import ndtr
from scipy.stats import binom

from .errors import BudgetExceeded, EmptySample

normal_cdf = ndtr


def kolmogorov_distance(samples: np.ndarray, reference: Callable = ndtr) -> float:
    """Exact sup distance between the empirical CDF of sorted samples and a continuous CDF.

    At the i-th order statistic the empirical CDF jumps from (i-1)/T to i/T;
    the sup over the whole line is attained at one of these jump points.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptySample("no samples")
    if np.any(np.diff(x) < 0):
        raise ValueError("samples must be sorted ascending")
    T = x.size
    ref = np.asarray(reference(x), dtype=np.float64)
    hi = np.arange(1, T + 1) / T - ref
    lo = ref - np.arange(0, T) / T
    return float(max(hi.max(), lo.max()))


def kolmogorov_statistic_stderr(samples: np.ndarray, reference: Callable = ndtr) -> float:
    """Plug-in standard error of the empirical sup distance.

    Binomial error sqrt(F(1-F)/T) of the empirical CDF at the point achieving
    the sup; at most 0.5/sqrt(T).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptySample("no samples")
    T = x.size
    ref = np.asarray(reference(x), dtype=np.float64)
    hi = np.arange(1, T + 1) / T - ref
    lo = ref - np.arange(0, T) / T
    at = int(np.argmax(np.maximum(hi, lo)))
    f = min(max(ref[at], 1.0 / T), 1.0 - 1.0 / T)
    return float(math.sqrt(f * (1.0 - f) / T))


def kolmogorov_distance_discrete(
    samples: np.ndarray, atom_x: np.ndarray, atom_cdf: np.ndarray
) -> float:
    """Sup distance between the empirical CDF and a discrete reference CDF.

    The reference jumps at atom_x (sorted) to the running values atom_cdf;
    the sup is attained just before or at a jump of either CDF.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptySample("no samples")
    ax = np.asarray(atom_x, dtype=np.float64)
    ac = np.asarray(atom_cdf, dtype=np.float64)
    T = x.size
    grid = np.unique(np.concatenate([x, ax]))
    emp_at = np.searchsorted(x, grid, side="right") / T
    emp_before = np.searchsorted(x, grid, side="left") / T
    ref_at = np.where(
        np.searchsorted(ax, grid, side="right") > 0,
        ac[np.maximum(np.searchsorted(ax, grid, side="right") - 1, 0)],
        0.0,
    )
    ref_before = np.where(
        np.searchsorted(ax, grid, side="left") > 0,
        ac[np.maximum(np.searchsorted(ax, grid, side="left") - 1, 0)],
        0.0,
    )
    return float(
        np.maximum(np.abs(emp_at - ref_at), np.abs(emp_before - ref_before)).max()
    )


def exact_dK_binomial(N: int) -> float:
    """Exact sup distance between the normalized sum of N fair signs and the normal.

    The sum S/sqrt(N) with S = sum of N independent +-1 signs has atoms
    (2k - N)/sqrt(N) with binomial CDF values; the sup against the normal CDF
    is attained at an atom, approached from the left or evaluated at it.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > 10**6:
        raise BudgetExceeded("binomial atom count exceeds the exact budget")
    k = np.arange(N + 1)
    x = (2.0 * k - N) / math.sqrt(N)
    cdf = binom.cdf(k, N, 0.5)
    cdf_left = np.concatenate([[0.0], cdf[:-1]])
    ref = ndtr(x)
    return float(np.maximum(cdf - ref, ref - cdf_left).max())


def dkw_epsilon(T: int, alpha: float = 0.05) -> float:
    """Two-sided DKW envelope: P(sup|F_T - F| > eps) <= alpha."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * T))
