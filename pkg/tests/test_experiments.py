"""Tests for experiment drivers: dispatch, guard rails, and small end-to-end runs."""

from __future__ import annotations

import math

import pytest

from ncclt import config as cfg
from ncclt import experiments
from ncclt.errors import ConfigError


def run_doc(doc: dict, workers: int = 1):
    return experiments.run(cfg.config_from_dict(doc), workers=workers)


def chain_doc(mode: str, **over):
    doc = {
        "mode": mode,
        "master_seed": 21,
        "process": {
            "kind": "chain",
            "transition": [[0.75, 0.25], [0.25, 0.75]],
            "embedding": [-1.0, 1.0],
        },
        "observable": {"builder": "product"},
        "index_family": {"kind": "linear", "ell": 1},
        "grid": [16, 32, 64, 128],
        "replications": {"T": 1200, "T_cal": 400},
    }
    doc.update(over)
    return doc


class TestSteinDriver:
    def test_small_A_rejected_for_mixing_chain(self):
        doc = chain_doc("stein", stein={"A": 0.1})
        with pytest.raises(ConfigError, match="A"):
            run_doc(doc)

    def test_small_A_allowed_for_iid(self):
        doc = chain_doc(
            "stein",
            process={"kind": "iid", "marginal": [0.5, 0.5], "embedding": [-1.0, 1.0]},
            grid=[16, 32],
            stein={"A": 0.1},
            replications={"T": 1000, "T_cal": 400},
        )
        result = run_doc(doc)
        assert result.exit_code == 0

    def test_end_to_end_iid(self):
        doc = chain_doc(
            "stein",
            process={"kind": "iid", "marginal": [0.5, 0.5], "embedding": [-1.0, 1.0]},
            grid=[16, 32, 64],
            stein={"A": 0.5, "C0_prime": 2.0},
            replications={"T": 1000, "T_cal": 400},
        )
        result = run_doc(doc)
        assert result.exit_code == 0
        rows = result.report["results"]["rows"]
        assert [r["N"] for r in rows] == [16, 32, 64]
        for r in rows:
            assert r["l"] == max(1, math.ceil(4 * 0.5 * math.log(r["N"] + 1.0)))
            assert r["R1"] > 0 and r["R3"] > 0
            # Independent inputs: the mixing certificate collapses to d = 0,
            # so the conditional-expectation bound is exactly zero.
            assert r["r2_available"] and r["r2_bound"] == 0.0
        name, text = result.files[0]
        assert name == "stein.csv"
        assert text.splitlines()[0] == "N,l,R1,R3,small_terms,r2_bound"

    def test_r2_bound_missing_without_constant(self):
        doc = chain_doc(
            "stein",
            grid=[16, 32],
            replications={"T": 1000, "T_cal": 400},
            stein={"A": 8.0},
        )
        result = run_doc(doc)
        assert result.exit_code == 0
        for r in result.report["results"]["rows"]:
            assert not r["r2_available"] and r["r2_bound"] is None

    def test_mixing_certificate_reported(self):
        doc = chain_doc(
            "stein", grid=[16, 32], replications={"T": 1000, "T_cal": 400}, stein={"A": 8.0}
        )
        result = run_doc(doc)
        mix = result.report["results"]["mixing"]
        # Two symmetric states with flip probability 1/4: second eigenvalue 1/2.
        assert mix["c"] == pytest.approx(0.5, abs=1e-9)
        assert mix["d"] >= 0.5


class TestVarianceDriver:
    def test_chain_envelope_holds(self):
        doc = chain_doc("variance", grid=[32, 64, 128, 256], replications={"T": 1200, "T_cal": 1200})
        result = run_doc(doc)
        assert result.exit_code == 0
        res = result.report["results"]
        assert res["D2_hat"] == pytest.approx(3.0, abs=0.4)
        for row in res["rows"]:
            assert row["deviation"] <= row["envelope"] + 1e-12
        name, text = result.files[0]
        assert name == "variance.csv"
        assert text.splitlines()[0] == "N,ratio,deviation,stderr,envelope"


class TestReturnTimesDriver:
    def base(self, **over):
        doc = {
            "mode": "return-times",
            "master_seed": 3,
            "process": {"kind": "iid", "marginal": [0.5, 0.5], "embedding": [-1.0, 1.0]},
            "index_family": {"kind": "linear", "ell": 2},
            "grid": [8, 16],
            "replications": {"T": 300, "T_cal": 100},
            "return_times": {"sets": [[0], [1]]},
        }
        doc.update(over)
        return doc

    def test_coded_windows_rejected(self):
        doc = self.base(
            process={
                "kind": "shift",
                "transition": [[0.75, 0.25], [0.25, 0.75]],
                "coding_width": 2,
            }
        )
        with pytest.raises(ConfigError, match="cod"):
            run_doc(doc)

    def test_set_count_must_match_arity(self):
        with pytest.raises(ConfigError, match="sets"):
            run_doc(self.base(return_times={"sets": [[0]]}))

    def test_states_must_be_in_alphabet(self):
        with pytest.raises(ConfigError, match="alphabet"):
            run_doc(self.base(return_times={"sets": [[0], [2]]}))

    def test_exact_mean_iid_product_rule(self):
        # Independent coordinates with distinct linear maps never collide for
        # m >= 1 except q_1(m) = q_2(m) has no solution here, so the exact
        # mean is n * P(A_1) * P(A_2) = n/4.
        result = run_doc(self.base())
        for row in result.report["results"]["rows"]:
            assert row["exact_mean"] == pytest.approx(row["n"] / 4.0, rel=1e-12)


class TestDispatch:
    def test_all_modes_dispatch(self):
        # One cheap document per mode proves the dispatch table is complete.
        docs = [
            {
                "mode": "dump-neighborhoods",
                "master_seed": 0,
                "index_family": {"kind": "linear", "ell": 1},
                "neighborhood": {"N": 5, "l": 1},
            },
            {
                "mode": "inequalities",
                "master_seed": 1,
                "inequalities": {"instances": 2, "smoothing_pairs": 2},
            },
        ]
        for doc in docs:
            assert run_doc(doc).exit_code == 0
