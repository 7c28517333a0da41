"""Shot-level measurement simulation.

Randomized full-weight Pauli measurements estimate many low-weight Pauli
expectations in parallel: every shot measures each qubit in a uniformly
random X/Y/Z basis, and a target is estimated from the shots whose setting
agrees with it on its support.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from math import ceil, log, sqrt
from typing import Mapping, Sequence

import numpy as np

from ._backend import kernels
from .errors import InvalidInputError, NumericalError
from .forward import ConstraintMatrix, product_table
from .pauli import LETTERS, PauliBasis, PauliString
from .qsim import (DensityState, HamiltonianSpec, _evolve_matrix, check_dense_cap,
                   gauss_legendre_rule)

_SQ2 = 1 / sqrt(2)
# maps the letter's +1/-1 eigenvectors to |0>/|1>
_ROTATIONS = {
    1: np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2,
    2: np.array([[1, -1j], [1, 1j]], dtype=complex) * _SQ2,
    3: np.eye(2, dtype=complex),
}


@dataclass(frozen=True)
class NoiseSpec:
    """Noise settings for simulated data.

    ``sigma_E`` is the Gaussian std added per constraint-matrix entry;
    ``flip_rates`` is either one readout flip probability for every target
    or a mapping from target index to its probability (missing keys are 0).
    """

    sigma_E: float = 0.0
    flip_rates: Mapping[int, float] | float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.sigma_E < 0:
            raise InvalidInputError("sigma_E must be non-negative")
        rates = ([self.flip_rates] if isinstance(self.flip_rates, (int, float))
                 else list(self.flip_rates.values()))
        if any(not 0 <= e <= 0.5 for e in rates):
            raise InvalidInputError("flip rates must lie in [0, 1/2]")

    @classmethod
    def from_shots(cls, shots: int, **kw) -> "NoiseSpec":
        """sigma_E = 1/sqrt(shots), the central-limit scale for +-1 averages."""
        if shots < 1:
            raise InvalidInputError("shot count must be >= 1")
        return cls(sigma_E=1 / sqrt(shots), **kw)

    def flip_rate(self, index: int) -> float:
        if isinstance(self.flip_rates, (int, float)):
            return float(self.flip_rates)
        return float(self.flip_rates.get(index, 0.0))

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class ShotRecord:
    pauli_setting: PauliString
    outcomes: tuple[int, ...]

    def __post_init__(self):
        if self.pauli_setting.weight != self.pauli_setting.n:
            raise InvalidInputError("measurement settings must have full weight")


@dataclass(frozen=True, eq=False)
class ShotLog:
    """Settings as (L, n) letter codes and outcomes as (L, n) arrays of +-1."""

    settings: np.ndarray
    outcomes: np.ndarray

    def __len__(self) -> int:
        return self.settings.shape[0]

    def records(self):
        for s, o in zip(self.settings, self.outcomes):
            label = "".join(LETTERS[c] for c in s)
            yield ShotRecord(PauliString.from_label(label), tuple(int(v) for v in o))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shot_index", "setting_string", "outcome_bits"])
        for i, (s, o) in enumerate(zip(self.settings, self.outcomes)):
            w.writerow([i, "".join(LETTERS[c] for c in s),
                        "".join("0" if v > 0 else "1" for v in o)])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class EstimateBatch:
    """Estimates of Tr(C_i rho) for a list of Pauli targets.

    ``values`` is NaN wherever ``missing`` is set (no supporting shot).
    """

    targets: tuple[PauliString, ...]
    values: np.ndarray
    counts: np.ndarray
    sums: np.ndarray | None = None
    shots: ShotLog | None = field(default=None, repr=False)
    variance_bound: np.ndarray | None = field(default=None, repr=False)

    @property
    def missing(self) -> np.ndarray:
        return self.counts == 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target_string", "estimate", "shots_used", "missing_flag"])
        for p, v, c in zip(self.targets, self.values, self.counts):
            w.writerow([p.label, "" if c == 0 else repr(float(v)), int(c), int(c == 0)])
        return buf.getvalue()


def _codes_to_string(codes) -> PauliString:
    return PauliString.from_label("".join(LETTERS[int(c)] for c in codes))


def sample_settings(n: int, L: int, rng: np.random.Generator) -> np.ndarray:
    """(L, n) letter codes, each site uniform over X, Y, Z."""
    if n < 1 or L < 0:
        raise InvalidInputError("need n >= 1 and L >= 0")
    return rng.integers(1, 4, size=(L, n), dtype=np.int8)


def sample_random_setting(n: int, rng: np.random.Generator) -> PauliString:
    return _codes_to_string(sample_settings(n, 1, rng)[0])


def setting_distribution(rho: np.ndarray, codes: Sequence[int]) -> np.ndarray:
    """Outcome probabilities over the 2^n basis indices for one setting.

    Index bit ``n-1-q`` set means qubit q gave -1.
    """
    rho = np.asarray(rho)
    n = len(codes)
    t = rho.reshape((2,) * (2 * n))
    for q, c in enumerate(codes):
        u = _ROTATIONS[int(c)]
        if c == 3:
            continue
        t = np.moveaxis(np.tensordot(u, t, axes=([1], [q])), 0, q)
        t = np.moveaxis(np.tensordot(t, u.conj().T, axes=([n + q], [0])), -1, n + q)
    probs = np.real(np.diagonal(t.reshape(rho.shape))).copy()
    total = probs.sum()
    if abs(total - 1) > 1e-9 or probs.min() < -1e-9:
        raise NumericalError(f"outcome distribution is not normalized (sum {total})")
    probs = np.clip(probs, 0, None)
    return probs / probs.sum()


def _index_to_outcomes(idx: np.ndarray, n: int) -> np.ndarray:
    shifts = np.arange(n - 1, -1, -1)
    bits = (idx[:, None] >> shifts[None, :]) & 1
    return (1 - 2 * bits).astype(np.int8)


def measure_settings(rho: DensityState | np.ndarray, settings: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    """Sample one shot per row of ``settings``; returns (L, n) outcomes."""
    mat = rho.matrix if isinstance(rho, DensityState) else np.asarray(rho)
    settings = np.asarray(settings, dtype=np.int8)
    L, n = settings.shape
    check_dense_cap(n)
    if mat.shape[0] != 1 << n:
        raise InvalidInputError("setting length does not match the state")
    out = np.empty((L, n), dtype=np.int8)
    if L == 0:
        return out
    uniq, inverse = np.unique(settings, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for u, codes in enumerate(uniq):
        rows = np.flatnonzero(inverse == u)
        probs = setting_distribution(mat, codes)
        idx = rng.choice(probs.size, size=rows.size, p=probs)
        out[rows] = _index_to_outcomes(idx, n)
    return out


def measure_setting(rho: DensityState, setting: PauliString,
                    rng: np.random.Generator) -> ShotRecord:
    if setting.weight != setting.n:
        raise InvalidInputError("measurement settings must have full weight")
    outcomes = measure_settings(rho, setting.codes()[None, :], rng)[0]
    return ShotRecord(setting, tuple(int(v) for v in outcomes))


def _target_codes(targets: Sequence[PauliString]) -> np.ndarray:
    return np.stack([t.codes() for t in targets]).astype(np.int8)


def estimates_from_shots(targets: Sequence[PauliString], log: ShotLog) -> EstimateBatch:
    """Average outcome products over the shots that support each target."""
    targets = tuple(targets)
    sums, counts = kernels.shadow_accumulate(log.settings, log.outcomes,
                                             _target_codes(targets))
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return EstimateBatch(targets, values, counts, sums, log,
                         variance_bound=1 / np.maximum(counts, 1))


def pauli_shadow_estimate(rho: DensityState, targets: Sequence[PauliString | str],
                          L: int, rng: np.random.Generator) -> EstimateBatch:
    """Estimate Tr(C_i rho) for every target from L random full-weight shots."""
    targets = tuple(PauliString.from_label(t) if isinstance(t, str) else t
                    for t in targets)
    if not targets:
        raise InvalidInputError("need at least one target")
    if L < 1:
        raise InvalidInputError("shot count must be >= 1")
    n = rho.n
    if any(t.n != n for t in targets):
        raise InvalidInputError("target qubit count differs from the state")
    settings = sample_settings(n, L, rng)
    outcomes = measure_settings(rho, settings, rng)
    return estimates_from_shots(targets, ShotLog(settings, outcomes))


def thm4_shot_bound(m: int, k: int, eps: float, delta: float) -> float:
    """2 / (eps^2 (1 - eps)) * 3^k * ln(3 m / delta), before rounding up."""
    if m < 1 or k < 1:
        raise InvalidInputError("need m >= 1 and k >= 1")
    if not (0 < eps < 1 and 0 < delta < 1):
        raise InvalidInputError("eps and delta must lie in (0, 1)")
    return 2 / (eps ** 2 * (1 - eps)) * 3 ** k * log(3 * m / delta)


def thm4_shot_count(m: int, k: int, eps: float, delta: float) -> int:
    """Shots sufficient for all m weight-<=k estimates within eps w.p. 1-delta."""
    return ceil(thm4_shot_bound(m, k, eps, delta))


def apply_readout_flip(batch: EstimateBatch, noise: NoiseSpec,
                       rng: np.random.Generator) -> EstimateBatch:
    """Flip each per-shot +-1 product with its target's rate, then re-average.

    Needs the integer sums; flipping a of the n_plus products equal to +1 and
    b of the n_minus equal to -1 changes the sum by 2(b - a).
    """
    if batch.sums is None:
        raise InvalidInputError("readout flips need per-target shot sums")
    sums = batch.sums.astype(np.int64).copy()
    counts = batch.counts.astype(np.int64)
    for i in range(len(batch.targets)):
        e = noise.flip_rate(i)
        if e == 0 or counts[i] == 0:
            continue
        n_plus = (counts[i] + sums[i]) // 2
        n_minus = counts[i] - n_plus
        a = rng.binomial(n_plus, e)
        b = rng.binomial(n_minus, e)
        sums[i] += 2 * (b - a)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return replace(batch, values=values, sums=sums, shots=None)


def noisy_k_matrix(k: ConstraintMatrix, noise: NoiseSpec,
                   rng: np.random.Generator | None = None) -> ConstraintMatrix:
    """K + E with one N(0, sigma_E^2) draw per unordered pair, applied
    antisymmetrically so the result stays antisymmetric."""
    if noise.sigma_E == 0:
        return k
    rng = noise.rng() if rng is None else rng
    m = k.m
    upper = np.triu(rng.normal(0.0, noise.sigma_E, size=(m, m)), 1)
    return ConstraintMatrix(k.basis, k.entries + upper - upper.T)


def commutator_targets(basis: PauliBasis) -> tuple[list[PauliString], np.ndarray, np.ndarray]:
    """Distinct Paulis R with i[P_j, P_k] = +-2 R, plus index/sign maps.

    Returns ``(targets, index, coef)`` where ``index[j, k]`` is the target
    position (-1 for commuting pairs) and ``coef[j, k]`` is +-2 or 0.
    """
    table = product_table(basis)
    anti = table.anticommute
    used = np.unique(table.inverse[anti])
    remap = -np.ones(table.x.size, dtype=np.int64)
    remap[used] = np.arange(used.size)
    index = np.where(anti, remap[table.inverse], -1)
    # i * i**e = -1 for e = 1 and +1 for e = 3
    coef = np.where(anti, np.where(table.phase == 1, -2.0, 2.0), 0.0)
    targets = [PauliString(basis.n, int(table.x[u]), int(table.z[u])) for u in used]
    return targets, index, coef


def k_from_estimates(basis: PauliBasis, values: np.ndarray) -> ConstraintMatrix:
    """Assemble K from estimates ordered as in :func:`commutator_targets`."""
    _, index, coef = commutator_targets(basis)
    values = np.asarray(values, dtype=float)
    if np.any(np.isnan(values)):
        raise InvalidInputError("estimates contain missing targets")
    k = np.where(index >= 0, coef * values[np.maximum(index, 0)], 0.0)
    return ConstraintMatrix(basis, (k - k.T) / 2)


def time_averaged_pauli_estimate(rho0: DensityState, spec: HamiltonianSpec,
                                 targets: Sequence[PauliString], s: int, t: float,
                                 L: int, rng: np.random.Generator) -> EstimateBatch:
    """Quadrature-weighted shot estimates of Tr(C_i rho_bar(t)).

    Runs the randomized estimator at each of the s Gauss-Legendre times
    u_k t with L shots apiece and combines the results with the weights.
    ``counts`` holds the total supporting shots over all nodes; a target is
    missing if any node had no supporting shot.
    """
    if t <= 0:
        raise InvalidInputError("averaging time must be positive")
    rule = gauss_legendre_rule(s)
    targets = tuple(targets)
    values = np.zeros(len(targets))
    counts = np.zeros(len(targets), dtype=np.int64)
    missing = np.zeros(len(targets), dtype=bool)
    inv_counts = np.zeros(len(targets))
    for u, w in zip(rule.nodes, rule.weights):
        rho_t = DensityState(_evolve_matrix(rho0.matrix, spec, u * t), check=False)
        batch = pauli_shadow_estimate(rho_t, targets, L, rng)
        missing |= batch.missing
        values += w * np.nan_to_num(batch.values)
        counts += batch.counts
        inv_counts += w ** 2 / np.maximum(batch.counts, 1)
    values[missing] = np.nan
    counts[missing] = 0
    return EstimateBatch(targets, values, counts, variance_bound=inv_counts)


def estimate_k_matrix(rho0: DensityState, basis: PauliBasis, L: int,
                      rng: np.random.Generator, *, spec: HamiltonianSpec | None = None,
                      t: float | None = None, s: int = 1) -> tuple[ConstraintMatrix, float]:
    """Shot-based estimate of K and a per-entry noise scale.

    With ``spec`` and ``t`` the state is time-averaged by quadrature first.
    The returned scale is 2 * sqrt(mean per-target variance bound), using
    Var <= 1 per +-1 product.
    """
    targets, _, _ = commutator_targets(basis)
    if spec is not None and t is not None:
        batch = time_averaged_pauli_estimate(rho0, spec, targets, s, t, L, rng)
        var = batch.variance_bound
    else:
        batch = pauli_shadow_estimate(rho0, targets, L, rng)
        var = batch.variance_bound
    if np.any(batch.missing):
        raise NumericalError(
            f"{int(batch.missing.sum())} commutator targets had no supporting "
            "shot; increase the shot count")
    return k_from_estimates(basis, batch.values), float(2 * np.sqrt(np.mean(var)))
