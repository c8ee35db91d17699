"""Mode drivers: turn a validated config into report documents and CSV files.

Every driver is deterministic in (config, master_seed) and independent of the
worker count; randomized checks draw from the auxiliary seed domain so they
never overlap the evaluation or calibration streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import decoupling, engine, kolmogorov, neighborhoods, processes, rates
from .config import ExperimentConfig, RealizedExperiment, config_to_dict, realize
from .errors import ConfigError
from .neighborhoods import NeighborhoodIndex
from .reporting import csv_text, report_document
from .rng import DOMAIN_AUX, DOMAIN_EVAL, replication_generator


@dataclass(frozen=True)
class ExperimentResult:
    exit_code: int
    report: dict
    files: tuple  # (name, text) pairs; report JSON is emitted by the caller


def run(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    realized = realize(config)
    driver = {
        "rate": run_rate,
        "variance": run_variance,
        "stein": run_stein,
        "inequalities": run_inequalities,
        "return-times": run_return_times,
        "dump-neighborhoods": run_dump_neighborhoods,
    }[config.mode]
    return driver(realized, workers)


# -- rate ---------------------------------------------------------------------------


def run_rate(realized: RealizedExperiment, workers: int = 1) -> ExperimentResult:
    cfg = realized.config
    spec, F, q = realized.spec, realized.F, realized.q
    T, T_cal = cfg.replications.T, cfg.replications.T_cal
    seed = cfg.master_seed

    Ns, dKs, stderrs, s_hats = [], [], [], []
    for N in cfg.grid:
        batch = engine.replicate_Z(spec, F, q, N, T, seed, T_cal=T_cal, workers=workers)
        Z = np.sort(batch.Z_samples)
        dKs.append(kolmogorov.kolmogorov_distance(Z))
        stderrs.append(kolmogorov.kolmogorov_statistic_stderr(Z))
        s_hats.append(batch.s_N_hat)
        Ns.append(N)

    D_hat = s_hats[-1] / math.sqrt(Ns[-1])
    report = rates.make_rate_report(Ns, dKs, stderrs, F.bound_M, D_hat, q.ell)
    bound_of = dict(report.bound_curve)
    csv_rows = [
        (N, T, d, se, ic, bound_of[N]) for (N, d, se, ic) in report.rows
    ]
    results = {
        "rows": [
            {"N": N, "dK_hat": d, "stderr": se, "implied_C": ic, "bound": bound_of[N]}
            for (N, d, se, ic) in report.rows
        ],
        "slope": report.slope,
        "slope_ci": report.slope_ci,
        "intercept": report.intercept,
        "C_free": report.C_free,
        "rho": report.rho,
        "D2_hat": D_hat**2,
        "s_N_hat": {str(N): s for N, s in zip(Ns, s_hats)},
    }
    doc = report_document("rate", config_to_dict(cfg), results)
    files = (
        ("rate.csv", csv_text(["N", "T", "dK_hat", "stderr", "implied_C", "bound"], csv_rows)),
    )
    return ExperimentResult(exit_code=0, report=doc, files=files)


# -- variance ----------------------------------------------------------------------


def run_variance(realized: RealizedExperiment, workers: int = 1) -> ExperimentResult:
    cfg = realized.config
    est = engine.estimate_D2(
        realized.spec,
        realized.F,
        realized.q,
        cfg.grid,
        T_cal=cfg.replications.T,
        seed=cfg.master_seed,
        workers=workers,
    )
    rows = []
    failures = []
    for N, ratio, dev, se in est.rows:
        envelope = est.envelope_c / math.sqrt(N) + 3.0 * se
        ok = dev <= envelope + 1e-12
        if not ok:
            failures.append({"N": N, "deviation": dev, "envelope": envelope})
        rows.append((N, ratio, dev, se, envelope, ok))
    results = {
        "D2_hat": est.D2_hat,
        "envelope_c": est.envelope_c,
        "rows": [
            {"N": N, "ratio": r, "deviation": d, "stderr": se, "envelope": env, "within": ok}
            for (N, r, d, se, env, ok) in rows
        ],
        "failures": failures,
    }
    doc = report_document("variance", config_to_dict(cfg), results)
    files = (
        (
            "variance.csv",
            csv_text(["N", "ratio", "deviation", "stderr", "envelope"], [r[:5] for r in rows]),
        ),
    )
    return ExperimentResult(exit_code=2 if failures else 0, report=doc, files=files)


# -- stein -------------------------------------------------------------------------


def run_stein(realized: RealizedExperiment, workers: int = 1) -> ExperimentResult:
    cfg = realized.config
    spec, F, q = realized.spec, realized.F, realized.q
    T, T_cal = cfg.replications.T, cfg.replications.T_cal
    seed = cfg.master_seed
    A = cfg.stein.A

    d_mix, c_mix = processes.phi_bound(spec)
    if d_mix > 0 and A * abs(math.log(c_mix)) <= 2.0:
        raise ConfigError(
            f"stein.A = {A} too small: need A * |ln c| > 2 with c = {c_mix:.6g}, "
            f"so A > {2.0 / abs(math.log(c_mix)):.3f}"
        )

    rows = []
    for N in cfg.grid:
        l = max(1, math.ceil(4.0 * A * math.log(N + 1.0)))
        index = NeighborhoodIndex.build(N, l, index_family=q)
        cal = engine.estimate_variance(spec, F, q, N, T_cal, seed, workers=workers)
        s_hat = math.sqrt(cal.s2)
        stats = engine.pair_statistics(
            spec, F, q, index, T, seed, domain=DOMAIN_EVAL, workers=workers
        )
        pair_mean = None
        if cfg.stein.independent_moments:
            aux = engine.pair_statistics(
                spec, F, q, index, T, seed, domain=DOMAIN_AUX, workers=workers
            )
            pair_mean = float(np.mean(aux.pair))
        terms = engine.stein_terms_from_stats(
            stats,
            index,
            s_hat,
            pair_mean=pair_mean,
            C0_prime=cfg.stein.C0_prime,
            d=d_mix,
            c=c_mix,
            D_hat=s_hat / math.sqrt(N),
        )
        rows.append((N, l, terms))

    def _slope(values) -> float | None:
        if any(v <= 0 for v in values):
            return None
        x = np.log([float(r[0]) for r in rows])
        return float(np.polyfit(x, np.log(values), 1)[0])

    slope_R1 = _slope([t.R1 for _, _, t in rows])
    slope_R3 = _slope([t.R3 for _, _, t in rows])
    results = {
        "A": A,
        "mixing": {"d": d_mix, "c": c_mix},
        "rows": [
            {
                "N": N,
                "l": l,
                "R1": t.R1,
                "R3": t.R3,
                "small_terms": t.small_terms,
                "R": t.R,
                "sigma2": t.sigma2,
                "r2_bound": t.r2_bound,
                "r2_available": t.r2_available,
            }
            for N, l, t in rows
        ],
        "slope_R1": slope_R1,
        "slope_R3": slope_R3,
    }
    doc = report_document("stein", config_to_dict(cfg), results)
    csv_rows = [
        (N, l, t.R1, t.R3, t.small_terms, "" if t.r2_bound is None else t.r2_bound)
        for N, l, t in rows
    ]
    files = (
        ("stein.csv", csv_text(["N", "l", "R1", "R3", "small_terms", "r2_bound"], csv_rows)),
    )
    return ExperimentResult(exit_code=0, report=doc, files=files)


# -- inequality sweeps ---------------------------------------------------------------


def random_block_problem(gen: np.random.Generator):
    """A random small-chain block-expectation instance with an indicator table."""
    a = int(gen.integers(2, 5))
    P = 0.85 * gen.dirichlet(np.ones(a), size=a) + 0.15 / a
    chain = processes.build_doeblin_chain(P)
    k = int(gen.integers(2, 5))
    widths = gen.integers(1, 3, size=k)
    gaps = gen.integers(1, 7, size=max(k - 1, 1))
    blocks = []
    m = 1
    for t in range(k):
        n = m + int(widths[t]) - 1
        blocks.append((m, n))
        if t < k - 1:
            m = n + int(gaps[t]) + 1
    s = int(gen.integers(2, k + 1))
    labels = gen.integers(0, s, size=k)
    groups = tuple(
        tuple(int(b) for b in range(k) if labels[b] == g) for g in np.unique(labels)
    )
    total = int(np.prod([a ** (n - m + 1) for m, n in blocks]))
    H = gen.integers(0, 2, size=total).astype(np.float64)
    problem = decoupling.BlockExpectationProblem(
        chain=chain, blocks=tuple(blocks), partition=groups, H=H, H_sup=1.0
    )
    counts = [a ** (n - m + 1) for m, n in blocks]
    tables = [
        gen.uniform(-1.0, 1.0, size=int(np.prod([counts[b] for b in g]))) for g in groups
    ]
    return problem, tables


def random_coupled_pair(gen: np.random.Generator):
    """A coupled finite pair (X, Y): shared atom probabilities, perturbed values."""
    m = int(gen.integers(2, 9))
    x = np.sort(gen.normal(0.0, 1.2, size=m))
    probs = gen.dirichlet(np.ones(m))
    style = int(gen.integers(0, 3))
    if style == 0:
        y = x.copy()
    elif style == 1:
        y = x + gen.normal(0.0, 0.25, size=m)
    else:
        y = x + gen.uniform(-1.0, 1.0, size=m)
    return x, y, probs


def run_inequalities(realized: RealizedExperiment, workers: int = 1) -> ExperimentResult:
    cfg = realized.config
    gen = replication_generator(cfg.master_seed, DOMAIN_AUX, 0)
    failures = []

    for i in range(cfg.inequalities.instances):
        problem, tables = random_block_problem(gen)
        chk = decoupling.check_decoupling_bound(problem)
        if not chk.passed:
            failures.append(
                {"instance": i, "check": "decoupling", "gap": chk.gap, "bound": chk.bound}
            )
        chk = decoupling.check_correlation_bound(
            problem.chain, problem.blocks, tables, problem.partition
        )
        if not chk.passed:
            failures.append(
                {"instance": i, "check": "correlation", "gap": chk.gap, "bound": chk.bound}
            )
        if len(problem.blocks) == 2:
            chk = decoupling.conditional_decoupling_check(problem)
            if not chk.passed:
                failures.append(
                    {"instance": i, "check": "conditional", "gap": chk.gap, "bound": chk.bound}
                )

    for j in range(cfg.inequalities.smoothing_pairs):
        x, y, probs = random_coupled_pair(gen)
        chk = decoupling.check_smoothing_inequality(x, y, probs, bs=cfg.inequalities.bs)
        if not chk.passed:
            failures.append(
                {"pair": j, "check": "smoothing", "lhs": chk.lhs, "rhs_sup": chk.rhs_sup}
            )

    results = {
        "instances": cfg.inequalities.instances + cfg.inequalities.smoothing_pairs,
        "block_instances": cfg.inequalities.instances,
        "smoothing_pairs": cfg.inequalities.smoothing_pairs,
        "failures": failures,
    }
    doc = report_document("inequalities", config_to_dict(cfg), results)
    return ExperimentResult(exit_code=2 if failures else 0, report=doc, files=())


# -- return times -------------------------------------------------------------------


def _exact_tuple_probability(
    spec: processes.ProcessSpec, positions: np.ndarray, masks: np.ndarray
) -> float:
    """P(state at each position falls in its mask), positions 1-based ascending."""
    P = np.asarray(
        spec.transition
        if spec.transition is not None
        else np.tile(spec.marginal, (spec.alphabet_size, 1))
    )
    v = spec.marginal * masks[0]
    for t in range(1, len(positions)):
        gap = int(positions[t] - positions[t - 1])
        v = v @ np.linalg.matrix_power(P, gap)
        v = v * masks[t]
    return float(v.sum())


def exact_return_time_mean(
    spec: processes.ProcessSpec, sets, q, n: int
) -> float:
    """E of the simultaneous-visit count up to n, by transfer-matrix enumeration."""
    a = spec.alphabet_size
    set_masks = []
    for A in sets:
        mask = np.zeros(a)
        idx = [int(s) for s in A]
        if idx:
            mask[idx] = 1.0
        set_masks.append(mask)
    total = 0.0
    for m in range(1, n + 1):
        pos = np.array([q.q(i + 1, m) for i in range(q.ell)])
        order = np.argsort(pos, kind="stable")
        merged_pos, merged_masks = [], []
        for t in order:
            if merged_pos and merged_pos[-1] == pos[t]:
                merged_masks[-1] = merged_masks[-1] * set_masks[t]
            else:
                merged_pos.append(int(pos[t]))
                merged_masks.append(set_masks[t].copy())
        total += _exact_tuple_probability(spec, np.array(merged_pos), np.array(merged_masks))
    return total


def run_return_times(realized: RealizedExperiment, workers: int = 1) -> ExperimentResult:
    cfg = realized.config
    spec, q = realized.spec, realized.q
    if spec.coding_width != 0:
        raise ConfigError("return-times mode requires directly observed states (coding_width 0)")
    sets = cfg.return_times.sets
    if len(sets) != q.ell:
        raise ConfigError(f"return_times.sets has {len(sets)} sets, expected {q.ell}")
    for j, A in enumerate(sets):
        if any(s < 0 or s >= spec.alphabet_size for s in A):
            raise ConfigError(f"return_times.sets[{j}] has states outside the alphabet")

    T = cfg.replications.T
    n_max = cfg.grid[-1]
    q_table = q.table(n_max)
    L = int(q_table.max())

    a = spec.alphabet_size
    member = np.zeros((len(sets), a), dtype=bool)
    for j, A in enumerate(sets):
        if A:
            member[j, [int(s) for s in A]] = True

    from .engine import _chunks
    from .rng import replication_seed

    chunks = _chunks(T, L)
    grid_cols = np.asarray(cfg.grid, dtype=np.int64) - 1
    counts = np.empty((T, len(cfg.grid)), dtype=np.int64)

    def worker(c: int) -> None:
        lo, hi = chunks[c]
        seqs = [replication_seed(cfg.master_seed, DOMAIN_EVAL, i) for i in range(lo, hi)]
        codes = processes.sample_states_batch(spec, L, seqs)
        hits = np.ones((hi - lo, n_max), dtype=bool)
        for j in range(len(sets)):
            hits &= member[j][codes[:, q_table[j] - 1]]
        counts[lo:hi] = np.cumsum(hits, axis=1, dtype=np.int64)[:, grid_cols]

    engine._run_chunks(worker, len(chunks), workers)

    rows = []
    for col, n in enumerate(cfg.grid):
        mean = float(counts[:, col].mean())
        se = float(counts[:, col].std(ddof=1) / math.sqrt(T)) if T > 1 else 0.0
        exact = exact_return_time_mean(spec, sets, q, int(n))
        rows.append((int(n), mean, se, exact))
    results = {
        "rows": [
            {"n": n, "mean_count": m, "stderr": se, "exact_mean": ex}
            for n, m, se, ex in rows
        ],
        "T": T,
    }
    doc = report_document("return-times", config_to_dict(cfg), results)
    files = (
        ("return_times.csv", csv_text(["n", "mean_count", "stderr", "exact_mean"], rows)),
    )
    return ExperimentResult(exit_code=0, report=doc, files=files)


# -- neighborhood dump ---------------------------------------------------------------


def run_dump_neighborhoods(realized: RealizedExperiment, workers: int = 1) -> ExperimentResult:
    config = realized.config
    if config.index_family is None or config.neighborhood is None:
        raise ConfigError("dump-neighborhoods needs index_family and neighborhood {N, l}")
    N, l = config.neighborhood.N, config.neighborhood.l
    index = NeighborhoodIndex.build(N, l, index_family=realized.q)
    rows = []
    for n in range(1, N + 1):
        for s, e in index.intervals(n):
            rows.append((n, s, e))
    sizes = index.sizes()
    results = {
        "N": N,
        "l": l,
        "ell": index.ell,
        "max_size": int(sizes.max()),
        "size_bound": int(index.ell**2 * (2 * l + 1)),
        "K1": index.K1,
        "intervals": len(rows),
    }
    doc = report_document("dump-neighborhoods", config_to_dict(config), results)
    files = (
        ("neighborhoods.csv", csv_text(["n", "interval_start", "interval_end"], rows)),
    )
    return ExperimentResult(exit_code=0, report=doc, files=files)


__all__ = [
    "ExperimentResult",
    "run",
    "run_rate",
    "run_variance",
    "run_stein",
    "run_inequalities",
    "run_return_times",
    "run_dump_neighborhoods",
    "random_block_problem",
    "random_coupled_pair",
    "exact_return_time_mean",
]
