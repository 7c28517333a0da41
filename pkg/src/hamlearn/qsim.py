"""Dense state simulation: Hamiltonians, eigenstates, unitary evolution and
quadrature-based time averaging.

Everything here is exact linear algebra on d x d matrices (d = 2**n), which
caps the qubit count; see :data:`DENSE_QUBIT_CAP`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import ceil, e, factorial, pi, sqrt
from typing import Sequence

import numpy as np

from ._backend import kernels
from .errors import InvalidInputError, NumericalError, ResourceLimitError
from .pauli import PauliBasis, PauliString

DENSE_QUBIT_CAP = 12
STATE_TOL = 1e-10


def check_dense_cap(n: int, cap: int | None = None) -> None:
    cap = DENSE_QUBIT_CAP if cap is None else cap
    if n > cap:
        raise ResourceLimitError(
            f"{n} qubits exceeds the dense simulation cap of {cap}")


def pauli_expectations(rho: np.ndarray, paulis: Sequence[PauliString] | PauliBasis
                       ) -> np.ndarray:
    """Real parts of Tr(P rho) for each Pauli."""
    if isinstance(paulis, PauliBasis):
        xs, zs = paulis.x_masks, paulis.z_masks
    else:
        xs = np.array([p.x for p in paulis], dtype=np.int64)
        zs = np.array([p.z for p in paulis], dtype=np.int64)
    return kernels.pauli_expectations(rho, xs, zs).real


class DensityState:
    """A validated n-qubit density matrix.

    Raises :class:`InvalidInputError` unless the matrix is Hermitian, has unit
    trace and no eigenvalue below ``-tol``.
    """

    __slots__ = ("n", "matrix")

    def __init__(self, matrix, *, tol: float = STATE_TOL, check: bool = True):
        mat = np.array(matrix, dtype=np.complex128)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidInputError("density matrix must be square")
        d = mat.shape[0]
        n = d.bit_length() - 1
        if d < 2 or (1 << n) != d:
            raise InvalidInputError(f"dimension {d} is not a power of two")
        if check:
            if np.max(np.abs(mat - mat.conj().T)) > tol:
                raise InvalidInputError("density matrix is not Hermitian")
            if abs(np.trace(mat) - 1.0) > tol:
                raise InvalidInputError("density matrix trace differs from 1")
            if np.linalg.eigvalsh(mat).min() < -tol:
                raise InvalidInputError("density matrix has a negative eigenvalue")
        mat.setflags(write=False)
        self.n = n
        self.matrix = mat

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_vector(cls, psi) -> "DensityState":
        """Projector onto ``psi`` after normalization."""
        psi = np.asarray(psi, dtype=np.complex128).ravel()
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise InvalidInputError("zero state vector")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def from_bitstrings(cls, bitstrings: Sequence[str]) -> "DensityState":
        """Normalized projector onto the equal superposition of basis kets."""
        n = len(bitstrings[0])
        psi = np.zeros(1 << n, dtype=np.complex128)
        for b in bitstrings:
            psi[int(b, 2)] += 1.0
        return cls.from_vector(psi)

    @classmethod
    def maximally_mixed(cls, n: int) -> "DensityState":
        d = 1 << n
        return cls(np.eye(d) / d)

    @classmethod
    def product_zero(cls, n: int) -> "DensityState":
        psi = np.zeros(1 << n)
        psi[0] = 1.0
        return cls.from_vector(psi)

    def expectation(self, p: PauliString) -> float:
        return float(pauli_expectations(self.matrix, [p])[0])

    def trace_distance_1norm(self, other: "DensityState") -> float:
        return trace_norm(self.matrix - other.matrix)

    def to_rows(self) -> list[list[float]]:
        """Row-major (re, im) pairs; for debugging dumps only."""
        return [[v for z in row for v in (z.real, z.imag)] for row in self.matrix]

    def __repr__(self) -> str:
        return f"DensityState(n={self.n})"


def trace_norm(a: np.ndarray) -> float:
    """Schatten 1-norm; uses eigenvalues when ``a`` is Hermitian."""
    a = np.asarray(a)
    if np.allclose(a, a.conj().T, atol=1e-13, rtol=0):
        return float(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2)).sum())
    return float(np.linalg.svd(a, compute_uv=False).sum())


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        mags = np.abs(col)
        k = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
        out[:, j] = col * (abs(col[k]) / col[k])
    return out


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """A Hamiltonian sum_i c_i P_i over a Pauli basis.

    The dense matrix and its eigendecomposition are computed lazily and
    cached on the instance.
    """

    basis: PauliBasis
    couplings: np.ndarray

    def __post_init__(self):
        c = np.array(self.couplings, dtype=float).ravel()
        if c.size != self.basis.m:
            raise InvalidInputError(
                f"{c.size} couplings for a basis of size {self.basis.m}")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("couplings must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "couplings", c)

    @property
    def n(self) -> int:
        return self.basis.n

    @cached_property
    def dense(self) -> np.ndarray:
        return dense_hamiltonian(self)

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Ascending eigenvalues and phase-fixed eigenvectors (columns)."""
        h = self.dense
        if np.max(np.abs(h - h.conj().T)) > 1e-10 * max(1.0, np.abs(h).max()):
            raise NumericalError("Hamiltonian accumulated a non-Hermitian part")
        w, v = np.linalg.eigh(h)
        return w, _fix_phase(v)

    @cached_property
    def operator_norm(self) -> float:
        w = self.spectrum[0]
        return float(max(abs(w[0]), abs(w[-1])))

    def with_couplings(self, couplings) -> "HamiltonianSpec":
        return HamiltonianSpec(self.basis, couplings)

    def to_dict(self) -> dict:
        return {"basis": self.basis.to_list(),
                "couplings": [float(v) for v in self.couplings]}

    @classmethod
    def from_dict(cls, data: dict) -> "HamiltonianSpec":
        return cls(PauliBasis(data["basis"]), np.asarray(data["couplings"], float))


def dense_hamiltonian(spec: HamiltonianSpec, cap: int | None = None) -> np.ndarray:
    """The d x d matrix sum_i c_i P_i."""
    n = spec.basis.n
    check_dense_cap(n, cap)
    d = 1 << n
    cols = np.arange(d, dtype=np.int64)
    h = np.zeros((d, d), dtype=np.complex128)
    for p, c in zip(spec.basis, spec.couplings):
        if c == 0:
            continue
        # P|b> = i**|x&z| (-1)**|z&b| |b ^ x>
        signs = 1 - 2 * (np.bitwise_count(cols & p.z).astype(np.int64) & 1)
        phase = 1j ** (bin(p.x & p.z).count("1") % 4)
        h[cols ^ p.x, cols] += c * phase * signs
    return h


def eigenstates(spec: HamiltonianSpec) -> list[tuple[float, DensityState]]:
    """Eigenvalue/projector pairs in ascending eigenvalue order.

    Within a degenerate block the basis is whatever ``eigh`` returns, with
    each vector's largest-magnitude entry rotated to be real positive.
    """
    check_dense_cap(spec.n)
    w, v = spec.spectrum
    return [(float(w[i]), DensityState.from_vector(v[:, i])) for i in range(w.size)]


def evolve(rho0: DensityState, spec: HamiltonianSpec, t: float) -> DensityState:
    """exp(-iHt) rho0 exp(iHt) via the cached spectral decomposition."""
    if t < 0:
        raise InvalidInputError("evolution time must be non-negative")
    _check_match(rho0, spec)
    if t == 0:
        return rho0
    return DensityState(_evolve_matrix(rho0.matrix, spec, t), check=False)


def _evolve_matrix(rho: np.ndarray, spec: HamiltonianSpec, t: float) -> np.ndarray:
    w, v = spec.spectrum
    r = v.conj().T @ rho @ v
    ph = np.exp(-1j * w * t)
    r = ph[:, None] * r * ph.conj()[None, :]
    out = v @ r @ v.conj().T
    return (out + out.conj().T) / 2


def _check_match(rho: DensityState, spec: HamiltonianSpec) -> None:
    if rho.n != spec.n:
        raise InvalidInputError(f"state has {rho.n} qubits, Hamiltonian {spec.n}")
    check_dense_cap(spec.n)


def commutator_trace_norm(spec: HamiltonianSpec, rho: DensityState | np.ndarray) -> float:
    """Schatten 1-norm of H rho - rho H."""
    mat = rho.matrix if isinstance(rho, DensityState) else np.asarray(rho)
    h = spec.dense
    c = h @ mat - mat @ h
    # [H, rho] is anti-Hermitian for Hermitian rho, so i[H, rho] is Hermitian
    return trace_norm(1j * c)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Legendre nodes and weights on [0, 1]."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def s(self) -> int:
        return self.nodes.size

    def integrate(self, f) -> float:
        return float(sum(w * f(u) for u, w in zip(self.nodes, self.weights)))


def _legendre(s: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P_s(x) and P_{s+1}(x) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if s == 0:
        return p_prev, p
    for k in range(1, s):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    p_next = ((2 * s + 1) * x * p - s * p_prev) / (s + 1)
    return p, p_next


def gauss_legendre_rule(s: int, *, max_iter: int = 100, tol: float = 1e-15
                        ) -> QuadratureRule:
    """Nodes u_i with P_s(2u_i - 1) = 0 and weights
    w_i = 4 u_i (1 - u_i) / ((s+1)^2 P_{s+1}(2u_i - 1)^2).
    """
    if s < 1:
        raise InvalidInputError(f"node count must be >= 1, got {s}")
    # Newton on P_s from the Tricomi initial guesses
    k = np.arange(1, s + 1)
    x = np.cos(pi * (4 * k - 1) / (4 * s + 2))
    for _ in range(max_iter):
        p, p_next = _legendre(s, x)
        # (1 - x^2) P_s' = (s+1) (x P_s - P_{s+1})
        dp = (s + 1) * (x * p - p_next) / (1 - x * x)
        step = p / dp
        x = x - step
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise NumericalError(f"Legendre root finding did not converge for s={s}")
    x = np.sort(x)
    u = (x + 1) / 2
    _, p_next = _legendre(s, x)
    w = 4 * u * (1 - u) / ((s + 1) ** 2 * p_next ** 2)
    if not (np.all(np.diff(u) > 0) and u[0] > 0 and u[-1] < 1):
        raise NumericalError("Gauss-Legendre nodes are not strictly inside (0, 1)")
    if abs(w.sum() - 1) > 1e-12:
        raise NumericalError(f"Gauss-Legendre weights sum to {w.sum()!r}")
    u.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(u, w)


def time_averaged_state(rho0: DensityState, spec: HamiltonianSpec, t: float,
                        s: int) -> DensityState:
    """sum_i w_i rho(u_i t) for the s-node Gauss-Legendre rule."""
    if t <= 0:
        raise InvalidInputError("averaging time must be positive")
    _check_match(rho0, spec)
    rule = gauss_legendre_rule(s)
    acc = np.zeros_like(rho0.matrix)
    for u, w in zip(rule.nodes, rule.weights):
        acc += w * _evolve_matrix(rho0.matrix, spec, u * t)
    return DensityState((acc + acc.conj().T) / 2)


def time_averaged_state_exact(rho0: DensityState, spec: HamiltonianSpec,
                              t: float) -> DensityState:
    """(1/t) int_0^t rho(u) du in closed form; ``t = inf`` dephases.

    In the eigenbasis each coherence rho_ab picks up the factor
    (1 - exp(-i w t)) / (i w t) with w = E_a - E_b.
    """
    if not t > 0:
        raise InvalidInputError("averaging time must be positive")
    _check_match(rho0, spec)
    w, v = spec.spectrum
    r = v.conj().T @ rho0.matrix @ v
    omega = w[:, None] - w[None, :]
    if np.isinf(t):
        factor = (np.abs(omega) <= 1e-9 * max(1.0, np.abs(w).max())).astype(float)
    else:
        x = omega * t
        small = np.abs(x) < 1e-8
        safe = np.where(small, 1.0, x)
        factor = np.where(small, 1 - 0.5j * x, -np.expm1(-1j * safe) / (1j * safe))
    out = v @ (r * factor) @ v.conj().T
    return DensityState((out + out.conj().T) / 2)


def quadrature_error_bound(s: int, h_norm: float, t: float) -> float:
    """(sqrt(pi) / (4 sqrt(s))) * (e ||H|| t / (4 s))**(2 s)."""
    if s < 1 or h_norm < 0 or t < 0:
        raise InvalidInputError("need s >= 1, h_norm >= 0, t >= 0")
    return sqrt(pi) / (4 * sqrt(s)) * (e * h_norm * t / (4 * s)) ** (2 * s)


def quadrature_error_exact_factor(s: int, h_norm: float, t: float) -> float:
    """The pre-Stirling form (2||H||t)^{2s} (s!)^4 / ((2s+1) ((2s)!)^3)."""
    return ((2 * h_norm * t) ** (2 * s) * factorial(s) ** 4
            / ((2 * s + 1) * factorial(2 * s) ** 3))


def nodes_for_tolerance(h_norm: float, t: float, tol: float, s_max: int = 200) -> int:
    """Smallest s whose quadrature bound is at most ``tol``."""
    start = max(1, ceil(e * h_norm * t / 4))
    for s in range(1, s_max + 1):
        if s >= start and quadrature_error_bound(s, h_norm, t) <= tol:
            return s
    raise InvalidInputError(f"no s <= {s_max} reaches tolerance {tol}")
