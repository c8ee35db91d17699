"""Convergence-rate evaluation: the closed-form error bound and empirical slope fits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats as _stats

from .errors import DegenerateVariance, NoiseFloor


def theoretical_bound(N: int, M: float, D_hat: float, ell: int, C_free: float) -> float:
    """C_free * max(1, (M/D_hat)^3) * N^(-1/2) * ln^2(N+1).

    ell is part of the instance description and kept for call-site symmetry;
    the dependence on it is absorbed into C_free.
    """
    if D_hat <= 0:
        raise DegenerateVariance(f"D_hat = {D_hat} must be positive")
    rho = M / D_hat
    return float(C_free * max(1.0, rho**3) * N ** (-0.5) * np.log(N + 1.0) ** 2)


def implied_constant(N: int, dK_hat: float) -> float:
    """The C that makes C * N^(-1/2) * ln^2(N+1) equal the observed distance."""
    return float(dK_hat * np.sqrt(N) / np.log(N + 1.0) ** 2)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    slope_ci: float  # half-width, two-sided 95%
    implied_C: tuple


def fit_rate(rows: Sequence[tuple]) -> RateFit:
    """Weighted least squares of ln d_K on ln N.

    rows: (N, d_K_hat, stderr) triples. Weights are the inverse delta-method
    variances of ln d_K, i.e. (d_K/stderr)^2. The confidence half-width uses
    the t distribution on k-2 degrees of freedom with the residual-rescaled
    parameter covariance.
    """
    rows = [(int(N), float(d), float(se)) for N, d, se in rows]
    if len(rows) < 4:
        raise ValueError("need at least 4 grid points")
    for N, d, se in rows:
        if d < 3.0 * se:
            raise NoiseFloor(
                f"d_K at N={N} is {d:.3g} < 3 * stderr = {3 * se:.3g}; increase T"
            )
    N = np.array([r[0] for r in rows], dtype=np.float64)
    d = np.array([r[1] for r in rows], dtype=np.float64)
    se = np.array([r[2] for r in rows], dtype=np.float64)
    x = np.log(N)
    y = np.log(d)
    w = np.where(se > 0, (d / np.maximum(se, 1e-300)) ** 2, 1.0)

    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    G = XtW @ X
    beta = np.linalg.solve(G, XtW @ y)
    resid = y - X @ beta
    dof = len(rows) - 2
    s2 = float((w * resid * resid).sum() / dof)
    cov = s2 * np.linalg.inv(G)
    half = float(_stats.t.ppf(0.975, dof) * np.sqrt(cov[1, 1]))
    implied = tuple(implied_constant(int(n), float(dd)) for n, dd in zip(N, d))
    return RateFit(slope=float(beta[1]), intercept=float(beta[0]), slope_ci=half, implied_C=implied)


@dataclass(frozen=True)
class RateReport:
    """Per-horizon distances with the fitted exponent and a bound curve.

    rows: (N, d_K_hat, mc_stderr, implied_C), sorted by N.
    bound_curve pairs each N with theoretical_bound at the supplied C.
    """

    rows: tuple
    slope: float
    slope_ci: float
    intercept: float
    C_free: float
    rho: float
    bound_curve: tuple


def make_rate_report(
    Ns: Sequence[int],
    dK_hats: Sequence[float],
    stderrs: Sequence[float],
    M: float,
    D_hat: float,
    ell: int,
    C_free: Optional[float] = None,
) -> RateReport:
    """Assemble the report; C_free defaults to the median implied constant."""
    order = np.argsort(np.asarray(Ns))
    Ns = [int(Ns[i]) for i in order]
    dK_hats = [float(dK_hats[i]) for i in order]
    stderrs = [float(stderrs[i]) for i in order]
    fit = fit_rate(list(zip(Ns, dK_hats, stderrs)))
    if C_free is None:
        C_free = float(np.median(fit.implied_C)) / max(1.0, (M / D_hat) ** 3)
    rows = tuple(
        (N, d, se, ic) for N, d, se, ic in zip(Ns, dK_hats, stderrs, fit.implied_C)
    )
    bound_curve = tuple(
        (N, theoretical_bound(N, M, D_hat, ell, C_free)) for N in Ns
    )
    return RateReport(
        rows=rows,
        slope=fit.slope,
        slope_ci=fit.slope_ci,
        intercept=fit.intercept,
        C_free=float(C_free),
        rho=float(M / D_hat),
        bound_curve=bound_curve,
    )
