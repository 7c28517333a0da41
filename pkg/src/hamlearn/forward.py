"""Constraint matrices, correlation matrices and stacked forward operators.

For a state rho and basis {P_j}, the constraint matrix is
K_jk = Tr(i[P_j, P_k] rho); the couplings of any Hamiltonian with rho as a
steady state lie in its kernel. Several K's are combined into a forward
operator A whose kernel holds the stacked unknown x.
"""
from __future__ import annotations

import enum
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from ._backend import kernels
from .errors import InvalidInputError, NumericalError
from .pauli import PauliBasis
from .qsim import DensityState, check_dense_cap


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityState) else np.asarray(rho)


class _ProductTable:
    """Distinct products P_j P_k of a basis with their phases."""

    def __init__(self, basis: PauliBasis):
        phase, xr, zr = kernels.pauli_product_table(basis.x_masks, basis.z_masks)
        keys = (xr << 32) | zr
        uniq, inverse = np.unique(keys.ravel(), return_inverse=True)
        self.phase = phase
        self.inverse = inverse.reshape(phase.shape)
        self.x = uniq >> 32
        self.z = uniq & 0xFFFFFFFF
        self.anticommute = (phase % 2) == 1


_TABLES: dict[PauliBasis, _ProductTable] = {}


def product_table(basis: PauliBasis) -> _ProductTable:
    table = _TABLES.get(basis)
    if table is None:
        if len(_TABLES) > 32:
            _TABLES.clear()
        table = _TABLES[basis] = _ProductTable(basis)
    return table


@dataclass(frozen=True, eq=False)
class ConstraintMatrix:
    """An m x m real antisymmetric matrix indexed by ``basis``."""

    basis: PauliBasis
    entries: np.ndarray

    def __post_init__(self):
        k = np.array(self.entries, dtype=float)
        m = self.basis.m
        if k.shape != (m, m):
            raise InvalidInputError(f"expected a {m}x{m} matrix, got {k.shape}")
        k.setflags(write=False)
        object.__setattr__(self, "entries", k)

    @property
    def m(self) -> int:
        return self.basis.m

    def antisymmetry_error(self) -> float:
        return float(np.max(np.abs(self.entries + self.entries.T)))

    def scaled(self, alpha: float) -> "ConstraintMatrix":
        return ConstraintMatrix(self.basis, alpha * self.entries)

    def __matmul__(self, other):
        return self.entries @ other


def k_matrix(rho: DensityState, basis: PauliBasis) -> ConstraintMatrix:
    """K_jk = Tr(i[P_j, P_k] rho)."""
    rho_m = _as_matrix(rho)
    n = rho_m.shape[0].bit_length() - 1
    if n != basis.n:
        raise InvalidInputError(f"state has {n} qubits, basis {basis.n}")
    check_dense_cap(n)
    table = product_table(basis)
    expv = kernels.pauli_expectations(rho_m, table.x, table.z)
    # i [P_j, P_k] = 2i * i**e R for anticommuting pairs, 0 otherwise
    vals = expv[table.inverse] * (1j ** (table.phase + 1).astype(np.int64))
    k = np.where(table.anticommute, 2 * vals.real, 0.0)
    k = (k - k.T) / 2
    return ConstraintMatrix(basis, k)


def correlation_matrix(rho: DensityState, basis: PauliBasis) -> np.ndarray:
    """M_jk = Tr({P_j, P_k} rho) / 2 - Tr(P_j rho) Tr(P_k rho)."""
    rho_m = _as_matrix(rho)
    n = rho_m.shape[0].bit_length() - 1
    if n != basis.n:
        raise InvalidInputError(f"state has {n} qubits, basis {basis.n}")
    check_dense_cap(n)
    table = product_table(basis)
    expv = kernels.pauli_expectations(rho_m, table.x, table.z)
    vals = expv[table.inverse] * (1j ** table.phase.astype(np.int64))
    sym = np.where(table.anticommute, 0.0, vals.real)
    means = kernels.pauli_expectations(rho_m, basis.x_masks, basis.z_masks).real
    out = sym - np.outer(means, means)
    return (out + out.T) / 2


class Layout(enum.Enum):
    SINGLE = "single"
    MULTI_STATE = "multi_state"
    MULTI_CONTROL = "multi_control"
    BLOCK_ROWS = "block_rows"


@dataclass(frozen=True, eq=False)
class ForwardOperator:
    """A block matrix of constraint matrices.

    ``blocks`` maps ``(row_block, col_block)`` to a :class:`ConstraintMatrix`;
    missing keys are zero blocks. The same object may appear in several
    positions (the control-field layout reuses each K_i twice).
    """

    basis: PauliBasis
    layout: Layout
    n_row_blocks: int
    n_col_blocks: int
    blocks: Mapping[tuple[int, int], ConstraintMatrix]
    n_fields: int = 0
    meta: Mapping = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.basis.m

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_row_blocks * self.m, self.n_col_blocks * self.m

    @cached_property
    def assembled(self) -> np.ndarray:
        m = self.m
        a = np.zeros(self.shape)
        for (r, c), blk in self.blocks.items():
            a[r * m:(r + 1) * m, c * m:(c + 1) * m] = blk.entries
        a.setflags(write=False)
        return a

    def row_support(self, r: int) -> tuple[int, ...]:
        """Column blocks touched by block row ``r``."""
        return tuple(sorted(c for (rr, c) in self.blocks if rr == r))

    def row_block(self, r: int) -> "ForwardOperator":
        """Block row ``r`` as its own operator over the same unknowns."""
        if not 0 <= r < self.n_row_blocks:
            raise InvalidInputError(f"row block {r} out of range")
        sub = {(0, c): blk for (rr, c), blk in self.blocks.items() if rr == r}
        return ForwardOperator(self.basis, Layout.BLOCK_ROWS, 1, self.n_col_blocks,
                               sub, self.n_fields)

    def __matmul__(self, x):
        return self.assembled @ x

    def header(self) -> dict:
        return {"layout": self.layout.value, "N": self.n_fields, "m": self.m,
                "rows": self.shape[0], "cols": self.shape[1],
                "row_blocks": self.n_row_blocks, "col_blocks": self.n_col_blocks,
                "basis": self.basis.to_list()}

    def to_text(self) -> str:
        """A ``# {json}`` header line followed by comma-separated rows."""
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
        np.savetxt(buf, self.assembled, delimiter=",", fmt="%.17g")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ForwardOperator":
        """Parse :meth:`to_text` output into a single dense block grid."""
        first, _, body = text.partition("\n")
        if not first.startswith("# "):
            raise InvalidInputError("missing JSON header line")
        head = json.loads(first[2:])
        basis = PauliBasis(head["basis"])
        a = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
        m = head["m"]
        if a.shape != (head["rows"], head["cols"]):
            raise InvalidInputError("matrix shape disagrees with header")
        blocks = {}
        for r in range(head["row_blocks"]):
            for c in range(head["col_blocks"]):
                blk = a[r * m:(r + 1) * m, c * m:(c + 1) * m]
                if np.any(blk):
                    blocks[(r, c)] = ConstraintMatrix(basis, blk)
        return cls(basis, Layout(head["layout"]), head["row_blocks"],
                   head["col_blocks"], blocks, head["N"])

    @classmethod
    def single(cls, k: ConstraintMatrix) -> "ForwardOperator":
        return cls(k.basis, Layout.SINGLE, 1, 1, {(0, 0): k})


def as_operator(a: ForwardOperator | ConstraintMatrix) -> ForwardOperator:
    if isinstance(a, ConstraintMatrix):
        return ForwardOperator.single(a)
    if isinstance(a, ForwardOperator):
        return a
    raise InvalidInputError(f"expected a ForwardOperator, got {type(a).__name__}")


def _check_bases(ks: Sequence[ConstraintMatrix]) -> PauliBasis:
    basis = ks[0].basis
    for k in ks[1:]:
        if k.basis != basis:
            raise InvalidInputError("constraint matrices use different bases")
    return basis


def stack_states(ks: Sequence[ConstraintMatrix]) -> ForwardOperator:
    """Vertical stack [K_1; ...; K_N] acting on x = c."""
    ks = list(ks)
    if not ks:
        raise InvalidInputError("need at least one constraint matrix")
    basis = _check_bases(ks)
    if len(ks) == 1:
        return ForwardOperator.single(ks[0])
    blocks = {(i, 0): k for i, k in enumerate(ks)}
    return ForwardOperator(basis, Layout.MULTI_STATE, len(ks), 1, blocks, len(ks))


def stack_controls(k0: ConstraintMatrix, ks: Sequence[ConstraintMatrix]
                   ) -> ForwardOperator:
    """Block operator acting on x = [c; v_1; ...; v_N].

    Row 0 is [K_0, 0, ..., 0]; row i is K_i in column 0 and column i.
    """
    ks = list(ks)
    basis = _check_bases([k0, *ks])
    if not ks:
        return ForwardOperator.single(k0)
    n = len(ks)
    blocks = {(0, 0): k0}
    for i, k in enumerate(ks, start=1):
        blocks[(i, 0)] = k
        blocks[(i, i)] = k
    return ForwardOperator(basis, Layout.MULTI_CONTROL, n + 1, n + 1, blocks, n)


@dataclass(frozen=True)
class SpectralReport:
    singular_values: np.ndarray
    eigenvalues: np.ndarray
    gap: float
    kernel_dim_estimate: int
    threshold: float


def default_kernel_threshold(a: np.ndarray, sigma: np.ndarray | None = None) -> float:
    """max(rows, cols) * sigma_max * 1e-12."""
    if sigma is None:
        sigma = np.linalg.svd(a, compute_uv=False)
    smax = float(sigma[0]) if sigma.size else 0.0
    return max(a.shape) * smax * 1e-12


def _svd(a: np.ndarray):
    if not np.all(np.isfinite(a)):
        raise NumericalError("forward operator has non-finite entries")
    try:
        return np.linalg.svd(a, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc


def _gram_eigenvalues(sigma: np.ndarray, cols: int) -> np.ndarray:
    """Ascending eigenvalues of A^T A, padding zeros for wide A."""
    lam = np.zeros(cols)
    lam[:sigma.size] = sigma[:cols] ** 2
    return np.sort(lam)


def spectral_report(a: ForwardOperator | ConstraintMatrix | np.ndarray,
                    kernel_threshold: float | None = None) -> SpectralReport:
    """Singular values, gap lambda_2 - lambda_1 of A^T A, and kernel count.

    The kernel count includes the structurally zero singular values of a
    wide matrix.
    """
    mat = a if isinstance(a, np.ndarray) else as_operator(a).assembled
    sigma = _svd(mat)[1]
    cols = mat.shape[1]
    lam = _gram_eigenvalues(sigma, cols)
    thr = default_kernel_threshold(mat, sigma) if kernel_threshold is None else kernel_threshold
    padded = np.zeros(cols)
    padded[:min(sigma.size, cols)] = sigma[:cols]
    kdim = int(np.count_nonzero(padded < thr)) if thr > 0 else int(np.count_nonzero(padded == 0))
    gap = float(lam[1] - lam[0]) if cols > 1 else 0.0
    return SpectralReport(np.sort(padded)[::-1], lam, max(gap, 0.0), kdim, thr)


def spectral_gap(a) -> float:
    return spectral_report(a).gap


@dataclass(frozen=True)
class KernelEstimate:
    vector: np.ndarray
    sigma_min: float
    sigma_next: float
    degenerate: bool


def kernel_estimate(a: ForwardOperator | ConstraintMatrix | np.ndarray,
                    norm_target: float | None = None,
                    sign_reference: np.ndarray | None = None,
                    kernel_threshold: float | None = None) -> KernelEstimate:
    """Least right singular vector of A, optionally rescaled and sign-fixed.

    ``degenerate`` is set when the two smallest singular values are closer
    than the kernel threshold, in which case the direction is arbitrary.
    """
    mat = a if isinstance(a, np.ndarray) else as_operator(a).assembled
    _, sigma, vt = _svd(mat)
    cols = mat.shape[1]
    padded = np.zeros(cols)
    padded[:min(sigma.size, cols)] = sigma[:cols]
    vec = vt[-1].copy()
    s1 = float(padded[-1])
    s2 = float(padded[-2]) if cols > 1 else np.inf
    thr = default_kernel_threshold(mat, sigma) if kernel_threshold is None else kernel_threshold
    degenerate = bool((s2 - s1) <= thr)
    if norm_target is not None:
        vec *= norm_target / np.linalg.norm(vec)
    if sign_reference is not None and float(vec @ np.asarray(sign_reference)) < 0:
        vec = -vec
    return KernelEstimate(vec, s1, s2, degenerate)
