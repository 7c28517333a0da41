import csv
import io
import json

import numpy as np
import pytest
import yaml

from hamlearn import ConfigError, ResourceLimitError
from hamlearn.harness import (SCENARIOS, ScenarioConfig, Table, instance_rng, run,
                              run_tables)

SMALL = {
    "multistate_gap": dict(n=4, ensemble_size=2),
    "controls_sweep": dict(n=4, ensemble_size=2),
    "posterior_contraction": dict(n=4, ensemble_size=2),
    "ising_example": dict(schedule=dict(n_states=2, prep_samples=80, quadrature_nodes=8,
                                        times=[1.0, 10.0])),
    "thm4_coverage": dict(schedule=dict(trials=3)),
    "bounds_check": dict(schedule=dict(trials=4)),
}

HEADERS = {
    "multistate_gap": {"gaps.csv": "instance,N,gap,kernel_dim,max_block_gap,kc_residual",
                       "spectra.csv": "instance,N,sv_index,sigma",
                       "correlation_check.csv": "instance,max_abs_ktk_minus_m"},
    "controls_sweep": {"errors.csv": "instance,noise_level,method,N,error"},
    "posterior_contraction": {
        "summary.csv": ("run,step,coverage_c,expected_error_c,prior_error_c,"
                        "realized_error_c,covered_c"),
        "track.csv": ("run,step,mean_c1,mean_c2,var_c1,cov_c12,var_c2,true_c1,true_c2,"
                      "inside_2sigma_ellipse")},
    "ising_example": {
        "fig4a_spectra.csv": "hamiltonian,sample,level,energy",
        "fig4b_commutator.csv": "state,t,commutator_norm,envelope",
        "fig4c_couplings.csv": ("coupling_index,pauli_string,true_value_if_known,prior_mean,"
                                "posterior_mean,posterior_2sigma"),
        "summary.csv": "quantity,value"},
    "thm4_coverage": {"trials.csv": "trial,shots,max_abs_error,missing,all_within_eps"},
    "bounds_check": {"trials.csv": "trial,t,delta,eps,gap,bound,measured,within_bound"},
}


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture(scope="module")
def small_tables():
    return {sc: run_tables(ScenarioConfig.default(sc, **SMALL[sc]), 5) for sc in SCENARIOS}


class TestConfig:
    def test_defaults_resolve(self):
        for sc in SCENARIOS:
            cfg = ScenarioConfig.default(sc)
            assert cfg.scenario == sc and cfg.k <= cfg.n

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.default("nope")

    @pytest.mark.parametrize("bad", [
        {"scenario": "thm4_coverage", "extra": 1},
        {"scenario": "thm4_coverage", "n": 0},
        {"scenario": "thm4_coverage", "noise": {"sigma_E": -1}},
        {"scenario": "thm4_coverage", "basis_kind": "ring"},
        {"n": 4},
    ])
    def test_schema_violations(self, bad):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(bad)

    def test_k_above_n(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.default("bounds_check", n=2, k=3)

    def test_dense_cap(self):
        with pytest.raises(ResourceLimitError):
            ScenarioConfig.default("multistate_gap", n=13)

    def test_ising_requires_four_qubits(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.default("ising_example", n=5)

    def test_nested_override_keeps_defaults(self):
        cfg = ScenarioConfig.default("bounds_check", schedule={"trials": 7})
        assert cfg.schedule["trials"] == 7 and cfg.schedule["times"] == [1.0, 5.0, 25.0]

    def test_hash_ignores_seed_and_workers(self):
        a = ScenarioConfig.default("thm4_coverage", seed=1, workers=1)
        b = ScenarioConfig.default("thm4_coverage", seed=2, workers=3)
        c = ScenarioConfig.default("thm4_coverage", n=3)
        assert a.config_hash() == b.config_hash() != c.config_hash()

    def test_load_yaml(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text(yaml.safe_dump({"scenario": "bounds_check", "n": 3}))
        assert ScenarioConfig.load(p).n == 3

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            ScenarioConfig.load(tmp_path / "missing.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("scenario: [unclosed")
        with pytest.raises(ConfigError):
            ScenarioConfig.load(bad)
        lst = tmp_path / "list.yaml"
        lst.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            ScenarioConfig.load(lst)


class TestRng:
    def test_streams_are_reproducible_and_distinct(self):
        a = instance_rng(9, 0).normal(size=4)
        np.testing.assert_array_equal(a, instance_rng(9, 0).normal(size=4))
        assert not np.allclose(a, instance_rng(9, 1).normal(size=4))
        assert not np.allclose(a, instance_rng(10, 0).normal(size=4))


class TestTable:
    def test_sorted_by_key(self):
        t = Table(("a", "b"), key=1)
        t.rows.extend([(2, 0.5), (1, True), (1, 0.1)])
        # stable sort on the key prefix only, so ties keep insertion order
        assert t.to_csv().splitlines() == ["a,b", "1,1", "1,0.1", "2,0.5"]


class TestScenarios:
    @pytest.mark.parametrize("scenario", SCENARIOS)
    def test_headers(self, small_tables, scenario):
        got = {name: text.splitlines()[0] for name, text in small_tables[scenario].items()}
        assert got == HEADERS[scenario]

    def test_multistate_rows(self, small_tables):
        g = rows(small_tables["multistate_gap"]["gaps.csv"])
        assert len(g) == 2 * 3
        assert all(float(r["kc_residual"]) < 1e-9 for r in g)
        assert all(float(r["gap"]) >= float(r["max_block_gap"]) - 1e-9 for r in g)

    def test_controls_ordering(self, small_tables):
        r = rows(small_tables["controls_sweep"]["errors.csv"])
        methods = {x["method"] for x in r}
        assert methods == {"baseline", "prior", "bhl", "bhl_expected"}
        prior = {x["instance"]: float(x["error"]) for x in r if x["method"] == "prior"}
        for x in r:
            if x["method"] == "bhl_expected":
                assert float(x["error"]) < prior[x["instance"]]

    def test_contraction_expected_error_decreases(self, small_tables):
        r = rows(small_tables["posterior_contraction"]["summary.csv"])
        for run_id in {x["run"] for x in r}:
            errs = [float(x["expected_error_c"]) for x in r if x["run"] == run_id]
            assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))

    def test_ising_envelope(self, small_tables):
        r = rows(small_tables["ising_example"]["fig4b_commutator.csv"])
        for x in r:
            assert float(x["commutator_norm"]) <= float(x["envelope"]) + 1e-9

    def test_bounds_rows(self, small_tables):
        r = rows(small_tables["bounds_check"]["trials.csv"])
        assert len(r) == 4
        assert all(x["within_bound"] == "1" for x in r)


class TestRun:
    def test_manifest_and_files(self, tmp_path):
        cfg = ScenarioConfig.default("thm4_coverage", **SMALL["thm4_coverage"])
        man = run(cfg, 3, tmp_path)
        data = json.loads((tmp_path / "manifest.json").read_text())
        assert data["scenario"] == "thm4_coverage" and data["seed"] == 3
        assert data["config_hash"] == cfg.config_hash()
        assert [f["name"] for f in data["files"]] == ["trials.csv"]
        assert data["files"][0]["rows"] == 3
        assert man.files == tuple(data["files"])

    def test_seed_required(self, tmp_path):
        with pytest.raises(ConfigError):
            run(ScenarioConfig.default("bounds_check", schedule={"trials": 1}), None, tmp_path)

    def test_config_seed_used(self, tmp_path):
        cfg = ScenarioConfig.default("bounds_check", seed=4, schedule={"trials": 1})
        assert run(cfg, None, tmp_path).seed == 4

    def test_worker_count_does_not_change_output(self):
        a = run_tables(ScenarioConfig.default("controls_sweep", n=4, ensemble_size=3), 8)
        b = run_tables(ScenarioConfig.default("controls_sweep", n=4, ensemble_size=3,
                                              workers=2), 8)
        assert a == b

    def test_seed_changes_output(self):
        cfg = ScenarioConfig.default("bounds_check", schedule={"trials": 3})
        assert run_tables(cfg, 1) != run_tables(cfg, 2)
