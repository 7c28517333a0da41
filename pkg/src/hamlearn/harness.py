"""Scenario runner: configured experiments that write CSV tables and a manifest.

Every scenario is a loop over independent instances. Instance ``i`` draws
all of its randomness from ``SeedSequence(seed, spawn_key=(i,))``, so the
output does not depend on execution order or on the worker count, and rows
are sorted by their key columns before they are written.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import jsonschema
import numpy as np
import yaml

from . import __version__
from .bhl import (EstimateReport, GaussianBelief, ResidualModel, approx_error_covariance,
                  baseline_estimate, cor1_bound, fidelity, fit_residual_model, infidelity,
                  online_bhl, posterior)
from .errors import ConfigError
from .forward import (ConstraintMatrix, correlation_matrix, k_matrix, kernel_estimate,
                      spectral_report, stack_controls, stack_states)
from .meas import (NoiseSpec, estimate_k_matrix, noisy_k_matrix, pauli_shadow_estimate,
                   thm4_shot_count)
from .pauli import PauliBasis, enumerate_k_body, enumerate_k_local_chain
from .qsim import (DensityState, HamiltonianSpec, check_dense_cap, commutator_trace_norm,
                   eigenstates, pauli_expectations, time_averaged_state,
                   time_averaged_state_exact, trace_norm)

SCENARIOS = ("multistate_gap", "controls_sweep", "posterior_contraction",
             "ising_example", "thm4_coverage", "bounds_check")

_BASE = {"n": 4, "k": 2, "basis_kind": "k_body", "ensemble_size": 10, "workers": 1,
         "noise": {"sigma_E": 0.0, "flip_rate": 0.0},
         "prior": {"sigma_c": 0.1, "sigma_v": 1e-3, "mean": "random"},
         "schedule": {}}

DEFAULTS: dict[str, dict] = {
    "multistate_gap": {
        "n": 6, "basis_kind": "k_body",
        "schedule": {"hamiltonian": "disordered_xx", "disorder": 0.1, "n_states": [1, 2, 4]}},
    "controls_sweep": {
        "n": 6, "basis_kind": "k_local_chain", "ensemble_size": 20,
        "prior": {"sigma_c": 0.5, "sigma_v": 1e-3, "mean": "random"},
        "schedule": {"n_controls": [1, 2, 4, 8], "noise_levels": [1e-3, 1e-2, 1e-1],
                     "cross_terms": False}},
    "posterior_contraction": {
        "n": 8, "basis_kind": "k_local_chain", "ensemble_size": 20,
        "noise": {"sigma_E": 1e-2},
        "prior": {"sigma_c": 0.1, "sigma_v": 1e-3, "mean": "random"},
        "schedule": {"n_controls": 4, "mode": "recompute", "cross_terms": False}},
    "ising_example": {
        "n": 4, "basis_kind": "k_body", "ensemble_size": 20,
        "noise": {"sigma_E": 1e-3},
        "prior": {"sigma_c": 0.1, "mean": "ising"},
        "schedule": {"n_states": 16, "t": 3 * math.pi, "quadrature_nodes": 48,
                     "measurement": "gaussian", "shots_per_node": 2000, "prep_samples": 400,
                     "times": [0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0]}},
    "thm4_coverage": {
        "n": 4, "basis_kind": "k_body",
        "schedule": {"eps": 0.1, "delta": 0.05, "trials": 200}},
    "bounds_check": {
        "n": 4, "basis_kind": "k_local_chain",
        "schedule": {"trials": 200, "times": [1.0, 5.0, 25.0],
                     "entry_noise": [0.0, 1e-4, 1e-3], "include_exact": True}},
}


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _schema() -> dict:
    text = resources.files("hamlearn").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated scenario definition with defaults filled in."""

    scenario: str
    n: int
    k: int
    basis_kind: str
    ensemble_size: int
    noise: dict
    prior: dict
    schedule: dict
    workers: int = 1
    seed: int | None = None

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScenarioConfig":
        try:
            jsonschema.validate(dict(data), _schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None
        merged = _merge(_merge(_BASE, DEFAULTS[data["scenario"]]), data)
        cfg = cls(**merged)
        cfg._check()
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data)

    @classmethod
    def default(cls, scenario: str, **overrides) -> "ScenarioConfig":
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}")
        return cls.from_dict({"scenario": scenario, **overrides})

    def _check(self) -> None:
        if self.k > self.n:
            raise ConfigError(f"k={self.k} exceeds n={self.n}")
        if self.scenario == "ising_example" and self.n != 4:
            raise ConfigError("ising_example is defined for n = 4")
        check_dense_cap(self.n)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "n": self.n, "k": self.k,
                "basis_kind": self.basis_kind, "ensemble_size": self.ensemble_size,
                "noise": self.noise, "prior": self.prior, "schedule": self.schedule,
                "workers": self.workers, "seed": self.seed}

    def config_hash(self) -> str:
        """sha256 of the resolved config, excluding seed and worker count."""
        body = {k: v for k, v in self.to_dict().items() if k not in ("seed", "workers")}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def basis(self) -> PauliBasis:
        if self.basis_kind == "k_body":
            return enumerate_k_body(self.n, self.k)
        return enumerate_k_local_chain(self.n, self.k)


@dataclass
class Table:
    columns: tuple[str, ...]
    key: int = 1
    rows: list[tuple] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in sorted(self.rows, key=lambda r: tuple(r[:self.key])):
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass(frozen=True)
class RunManifest:
    scenario: str
    config_hash: str
    seed: int
    version: str
    wall_time: float
    files: tuple[dict, ...]

    def to_json(self) -> str:
        return json.dumps({"scenario": self.scenario, "config_hash": self.config_hash,
                           "seed": self.seed, "version": self.version,
                           "wall_time_s": self.wall_time, "files": list(self.files)},
                          indent=2, sort_keys=True) + "\n"


def instance_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


# Hamiltonian ensembles and states

def disordered_xx_couplings(basis: PauliBasis, disorder: float,
                            rng: np.random.Generator) -> np.ndarray:
    """Unit X_iX_j on every pair plus N(0, disorder^2) on all nine letter pairs."""
    c = np.zeros(basis.m)
    for j, p in enumerate(basis):
        if p.weight != 2:
            continue
        if p.label.replace("I", "") == "XX":
            c[j] = 1.0
        c[j] += disorder * rng.standard_normal()
    return c


def ising_mean(basis: PauliBasis) -> np.ndarray:
    return np.array([1.0 if p.weight == 2 and p.label.replace("I", "") == "XX" else 0.0
                     for p in basis])


def haar_state(n: int, rng: np.random.Generator) -> DensityState:
    psi = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return DensityState.from_vector(psi / np.linalg.norm(psi))


def random_mixed_state(n: int, rng: np.random.Generator) -> DensityState:
    g = rng.standard_normal((1 << n, 1 << n)) + 1j * rng.standard_normal((1 << n, 1 << n))
    rho = g @ g.conj().T
    return DensityState(rho / np.trace(rho).real)


def random_product_state(n: int, rng: np.random.Generator) -> DensityState:
    psi = np.ones(1, dtype=complex)
    for _ in range(n):
        q = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        psi = np.kron(psi, q / np.linalg.norm(q))
    return DensityState.from_vector(psi)


def ground_state(spec: HamiltonianSpec) -> DensityState:
    return eigenstates(spec)[0][1]


def _prior_mean(cfg: ScenarioConfig, basis: PauliBasis, rng) -> np.ndarray:
    kind = cfg.prior["mean"]
    if kind == "zero":
        return np.zeros(basis.m)
    if kind == "ising":
        return ising_mean(basis)
    return rng.standard_normal(basis.m)


def _noisy(k: ConstraintMatrix, sigma: float, flip: float, rng) -> ConstraintMatrix:
    if flip:
        k = k.scaled(1 - 2 * flip)
    return noisy_k_matrix(k, NoiseSpec(sigma_E=sigma), rng)


def _sigma_E(cfg: ScenarioConfig) -> float:
    if "shots" in cfg.noise:
        return NoiseSpec.from_shots(cfg.noise["shots"]).sigma_E
    return float(cfg.noise.get("sigma_E", 0.0))


# scenarios; each instance function returns {table name: rows}

def _multistate_instance(cfg: ScenarioConfig, seed: int, i: int) -> dict:
    rng = instance_rng(seed, i)
    basis = cfg.basis()
    sch = cfg.schedule
    if sch["hamiltonian"] == "disordered_xx":
        c = disordered_xx_couplings(basis, sch["disorder"], rng)
    else:
        c = rng.standard_normal(basis.m)
    spec = HamiltonianSpec(basis, c)
    counts = _as_list(sch["n_states"])
    states = [s for _, s in eigenstates(spec)[:max(counts)]]
    ks = [k_matrix(s, basis) for s in states]
    out = {"spectra": [], "gaps": [], "correlation_check": []}
    for n_st in counts:
        rep = spectral_report(stack_states(ks[:n_st]))
        out["spectra"] += [(i, n_st, j, float(sv)) for j, sv in enumerate(rep.singular_values)]
        blocks = max(spectral_report(kk).gap for kk in ks[:n_st])
        out["gaps"].append((i, n_st, rep.gap, rep.kernel_dim_estimate, blocks,
                            float(np.abs(ks[0].entries @ c).max())))
    m_corr = correlation_matrix(states[0], basis)
    ktk = ks[0].entries.T @ ks[0].entries
    out["correlation_check"].append((i, float(np.abs(ktk - m_corr).max())))
    return out


def _controls_instance(cfg: ScenarioConfig, seed: int, i: int) -> dict:
    rng = instance_rng(seed, i)
    basis = cfg.basis()
    m = basis.m
    sch, pr = cfg.schedule, cfg.prior
    counts = _as_list(sch["n_controls"])
    c_bar = _prior_mean(cfg, basis, rng)
    c = c_bar + pr["sigma_c"] * rng.standard_normal(m)
    n_max = max(counts)
    v_bar = [rng.standard_normal(m) for _ in range(n_max)]
    v = [vb + pr["sigma_v"] * rng.standard_normal(m) for vb in v_bar]
    k0 = k_matrix(ground_state(HamiltonianSpec(basis, c)), basis)
    kv = [k_matrix(ground_state(HamiltonianSpec(basis, c + vi)), basis) for vi in v]
    flip = cfg.noise.get("flip_rate", 0.0)
    prior_err = pr["sigma_c"] * math.sqrt(m)
    rows = []
    for li, sigma in enumerate(sch["noise_levels"]):
        nrng = instance_rng(seed, i, li)
        base = baseline_estimate(_noisy(k0, sigma, flip, nrng), float(np.linalg.norm(c)), c)
        rows.append((i, float(sigma), "baseline", 0, float(np.linalg.norm(base - c))))
        rows.append((i, float(sigma), "prior", 0, prior_err))
        for n_ctl in counts:
            # fixed total budget spread over the N + 1 measured matrices
            sig_b = sigma * math.sqrt(n_ctl + 1)
            brng = instance_rng(seed, i, li, n_ctl)
            a = stack_controls(_noisy(k0, sig_b, flip, brng),
                               [_noisy(kk, sig_b, flip, brng) for kk in kv[:n_ctl]])
            prior = GaussianBelief.blocks([c_bar, *v_bar[:n_ctl]],
                                          [pr["sigma_c"]] + [pr["sigma_v"]] * n_ctl)
            cov = approx_error_covariance(prior, sig_b, a, cross_terms=sch["cross_terms"])
            post = posterior(prior, a, cov)
            rows.append((i, float(sigma), "bhl", n_ctl,
                         float(np.linalg.norm(post.mean[:m] - c))))
            rows.append((i, float(sigma), "bhl_expected", n_ctl,
                         float(math.sqrt(np.trace(post.covariance[:m, :m])))))
    return {"errors": rows}


def _contraction_instance(cfg: ScenarioConfig, seed: int, i: int) -> dict:
    rng = instance_rng(seed, i)
    basis = cfg.basis()
    m = basis.m
    sch, pr = cfg.schedule, cfg.prior
    n_ctl = int(sch["n_controls"]) if not isinstance(sch["n_controls"], list) \
        else max(sch["n_controls"])
    sigma = _sigma_E(cfg)
    flip = cfg.noise.get("flip_rate", 0.0)
    c_bar = _prior_mean(cfg, basis, rng)
    c = c_bar + pr["sigma_c"] * rng.standard_normal(m)
    v_bar = [rng.standard_normal(m) for _ in range(n_ctl)]
    v = [vb + pr["sigma_v"] * rng.standard_normal(m) for vb in v_bar]
    k0 = k_matrix(ground_state(HamiltonianSpec(basis, c)), basis)
    kv = [k_matrix(ground_state(HamiltonianSpec(basis, c + vi)), basis) for vi in v]
    a = stack_controls(_noisy(k0, sigma, flip, rng), [_noisy(kk, sigma, flip, rng) for kk in kv])
    prior = GaussianBelief.blocks([c_bar, *v_bar], [pr["sigma_c"]] + [pr["sigma_v"]] * n_ctl)
    truth = np.concatenate([c, *v])
    steps = online_bhl(prior, [a.row_block(r) for r in range(a.n_row_blocks)], sigma,
                       frozen=sch["mode"] == "frozen", cross_terms=sch["cross_terms"])
    track, summary = [], []
    for step, b in enumerate(steps):
        mu, cov = b.mean, b.covariance
        d = c[:2] - mu[:2]
        g2 = cov[:2, :2]
        maha = float(d @ np.linalg.solve(g2, d))
        track.append((i, step, mu[0], mu[1], g2[0, 0], g2[0, 1], g2[1, 1], c[0], c[1],
                      maha <= 4.0))
        rep = EstimateReport(mu, cov, basis.labels() * (n_ctl + 1), truth=truth)
        summary.append((i, step, rep.coverage(slice(0, m)),
                        float(math.sqrt(np.trace(cov[:m, :m]))),
                        pr["sigma_c"] * math.sqrt(m),
                        float(np.linalg.norm(mu[:m] - c)),
                        int(np.sum(np.abs(c - mu[:m]) <= 2 * np.sqrt(np.diag(cov)[:m])))))
    return {"track": track, "summary": summary}


def prep_residual_model(rho0: DensityState, basis: PauliBasis, prior: GaussianBelief,
                        t: float, samples: int, rng: np.random.Generator) -> ResidualModel:
    """Fit how the constraint residual of a time-averaged input depends on x.

    Couplings x are drawn from the prior, ``rho0`` is averaged over
    ``[0, t]`` under H(x), and the residual K(rho_bar) x is regressed on x.
    """
    xs = prior.sample(rng, samples)
    rs = np.empty((samples, basis.m))
    for j, x in enumerate(xs):
        rb = time_averaged_state_exact(rho0, HamiltonianSpec(basis, x), t)
        rs[j] = k_matrix(rb, basis).entries @ x
    return fit_residual_model(xs, rs, prior.mean)


def _ising_run(cfg: ScenarioConfig, seed: int) -> dict:
    rng = instance_rng(seed, 0)
    basis = cfg.basis()
    m = basis.m
    sch, pr = cfg.schedule, cfg.prior
    sigma = _sigma_E(cfg)
    c_bar = _prior_mean(cfg, basis, rng)
    prior = GaussianBelief.isotropic(c_bar, pr["sigma_c"])
    c = prior.sample(rng)
    mean_spec, true_spec = HamiltonianSpec(basis, c_bar), HamiltonianSpec(basis, c)
    out: dict[str, list] = {"fig4a_spectra": [], "fig4b_commutator": [], "summary": []}

    for level, e in enumerate(mean_spec.spectrum[0]):
        out["fig4a_spectra"].append(("prior_mean", 0, level, float(e)))
    for level, e in enumerate(true_spec.spectrum[0]):
        out["fig4a_spectra"].append(("truth", 0, level, float(e)))
    for j in range(cfg.ensemble_size):
        w = HamiltonianSpec(basis, prior.sample(instance_rng(seed, 1, j))).spectrum[0]
        out["fig4a_spectra"] += [("prior_sample", j, lv, float(e)) for lv, e in enumerate(w)]

    prior_states = [s for _, s in eigenstates(mean_spec)]
    probes = {"ground": prior_states[0], "excited": prior_states[len(prior_states) // 2],
              "product": random_product_state(cfg.n, instance_rng(seed, 2))}
    for name, rho0 in probes.items():
        dist = trace_norm(rho0.matrix - time_averaged_state_exact(
            rho0, true_spec, math.inf).matrix)
        for t in sch["times"]:
            val = commutator_trace_norm(true_spec, time_averaged_state_exact(rho0, true_spec, t))
            out["fig4b_commutator"].append((name, float(t), val, 2 * dist / t))

    n_states = int(_as_list(sch["n_states"])[0])
    inputs = prior_states[:n_states]
    t, s = float(sch["t"]), int(sch["quadrature_nodes"])
    flip = cfg.noise.get("flip_rate", 0.0)
    raw, ops, sig, extra, data = [], [], [], [], []
    for j, rho0 in enumerate(inputs):
        mrng = instance_rng(seed, 3, j)
        if sch["measurement"] == "shots":
            k_meas, scale = estimate_k_matrix(rho0, basis, sch["shots_per_node"], mrng,
                                              spec=true_spec, t=t, s=s)
        else:
            k_meas = _noisy(k_matrix(time_averaged_state(rho0, true_spec, t, s), basis),
                            sigma, flip, mrng)
            scale = sigma
        raw.append(k_meas)
        sig.append(scale)
        if sch["prep_samples"]:
            model = prep_residual_model(rho0, basis, prior, t, sch["prep_samples"],
                                        instance_rng(seed, 4, j))
            ops.append(ConstraintMatrix(basis, model.corrected(k_meas.entries)))
            extra.append([model.cov])
            data.append(model.data)
        else:
            ops.append(k_meas)
            extra.append(None)
            data.append(None)
    beliefs = online_bhl(prior, ops, sig, extra=extra, data=data)
    post = beliefs[-1]
    rep = EstimateReport.from_belief(post, basis.labels(), prior=prior, truth=c)
    base = kernel_estimate(stack_states(raw), norm_target=float(np.linalg.norm(c)),
                           sign_reference=c).vector
    outside = int(np.sum(np.abs(c - post.mean) > 2 * post.std))
    out["summary"] = [
        ("prior_fidelity", fidelity(c_bar, c)),
        ("posterior_fidelity", fidelity(post.mean, c)),
        ("baseline_fidelity", fidelity(base, c)),
        ("prior_error", float(np.linalg.norm(c_bar - c))),
        ("posterior_error", float(np.linalg.norm(post.mean - c))),
        ("posterior_expected_error", post.expected_error),
        ("couplings_outside_2sigma", outside),
        ("couplings", m),
    ]
    out["fig4c_couplings"] = rep
    return out


def _thm4_instance(cfg: ScenarioConfig, seed: int, i: int) -> dict:
    rng = instance_rng(seed, i)
    basis = cfg.basis()
    sch = cfg.schedule
    L = thm4_shot_count(basis.m, cfg.k, sch["eps"], sch["delta"])
    rho = haar_state(cfg.n, rng)
    truth = pauli_expectations(rho.matrix, basis)
    batch = pauli_shadow_estimate(rho, list(basis), L, rng)
    err = np.abs(np.nan_to_num(batch.values, nan=np.inf) - truth)
    return {"trials": [(i, L, float(err.max()), int(batch.missing.sum()),
                        bool(np.all(err <= sch["eps"])))]}


def _bounds_instance(cfg: ScenarioConfig, seed: int, i: int) -> dict:
    rng = instance_rng(seed, i)
    basis = cfg.basis()
    sch = cfg.schedule
    times = list(sch["times"]) + ([math.inf] if sch["include_exact"] else [])
    t = times[i % len(times)]
    eps = sch["entry_noise"][(i // len(times)) % len(sch["entry_noise"])]
    c = rng.standard_normal(basis.m)
    spec = HamiltonianSpec(basis, c)
    rho_bar = time_averaged_state_exact(random_mixed_state(cfg.n, rng), spec, t)
    delta = commutator_trace_norm(spec, rho_bar)
    k = k_matrix(rho_bar, basis).entries
    if eps > 0:
        u = np.triu(rng.uniform(-eps, eps, size=k.shape), 1)
        k = k + u - u.T
    gap = spectral_report(k).gap
    measured = infidelity(c, kernel_estimate(k).vector)
    if gap > 0:
        bound = cor1_bound(basis.m, delta, eps, gap, float(np.abs(c).sum()),
                           float(np.linalg.norm(c)))
    else:
        bound = math.inf
    return {"trials": [(i, float(t), delta, float(eps), gap, bound, measured,
                        bool(measured <= bound))]}


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


_LAYOUTS = {
    "multistate_gap": (_multistate_instance, "ensemble_size", {
        "spectra": (("instance", "N", "sv_index", "sigma"), 3),
        "gaps": (("instance", "N", "gap", "kernel_dim", "max_block_gap", "kc_residual"), 2),
        "correlation_check": (("instance", "max_abs_ktk_minus_m",), 1)}),
    "controls_sweep": (_controls_instance, "ensemble_size", {
        "errors": (("instance", "noise_level", "method", "N", "error"), 4)}),
    "posterior_contraction": (_contraction_instance, "ensemble_size", {
        "track": (("run", "step", "mean_c1", "mean_c2", "var_c1", "cov_c12", "var_c2",
                   "true_c1", "true_c2", "inside_2sigma_ellipse"), 2),
        "summary": (("run", "step", "coverage_c", "expected_error_c", "prior_error_c",
                     "realized_error_c", "covered_c"), 2)}),
    "thm4_coverage": (_thm4_instance, "trials", {
        "trials": (("trial", "shots", "max_abs_error", "missing", "all_within_eps"), 1)}),
    "bounds_check": (_bounds_instance, "trials", {
        "trials": (("trial", "t", "delta", "eps", "gap", "bound", "measured",
                    "within_bound"), 1)}),
}


def _count(cfg: ScenarioConfig, attr: str) -> int:
    return cfg.ensemble_size if attr == "ensemble_size" else int(cfg.schedule[attr])


def _call(args):
    fn, cfg, seed, i = args
    return fn(cfg, seed, i)


def _map(fn: Callable, cfg: ScenarioConfig, seed: int, count: int) -> list[dict]:
    jobs = [(fn, cfg, seed, i) for i in range(count)]
    if cfg.workers > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_call, jobs))
    return [_call(j) for j in jobs]


def run_tables(cfg: ScenarioConfig, seed: int) -> dict[str, str]:
    """Run a scenario and return ``{file name: CSV text}``."""
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.scenario == "ising_example":
        res = _ising_run(cfg, seed)
        tables = {
            "fig4a_spectra": Table(("hamiltonian", "sample", "level", "energy"), 3,
                                   res["fig4a_spectra"]),
            "fig4b_commutator": Table(("state", "t", "commutator_norm", "envelope"), 2,
                                      res["fig4b_commutator"]),
            "summary": Table(("quantity", "value"), 0, res["summary"]),
        }
        out = {f"{k}.csv": t.to_csv() for k, t in tables.items()}
        out["fig4c_couplings.csv"] = res["fig4c_couplings"].to_csv()
        return dict(sorted(out.items()))
    fn, attr, layout = _LAYOUTS[cfg.scenario]
    results = _map(fn, cfg, seed, _count(cfg, attr))
    out = {}
    for name, (cols, key) in layout.items():
        t = Table(cols, key)
        for r in results:
            t.rows.extend(r[name])
        out[f"{name}.csv"] = t.to_csv()
    return dict(sorted(out.items()))


def run(cfg: ScenarioConfig, seed: int | None, out_dir: str | os.PathLike) -> RunManifest:
    """Run ``cfg`` and write its CSV files plus ``manifest.json`` to ``out_dir``."""
    seed = cfg.seed if seed is None else seed
    if seed is None:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    start = time.perf_counter()
    tables = run_tables(cfg, int(seed))
    wall = time.perf_counter() - start
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, text in tables.items():
        (out / name).write_text(text)
        files.append({"name": name, "sha256": hashlib.sha256(text.encode()).hexdigest(),
                      "rows": text.count("\n") - 1})
    manifest = RunManifest(cfg.scenario, cfg.config_hash(), int(seed), __version__,
                           round(wall, 6), tuple(files))
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest
