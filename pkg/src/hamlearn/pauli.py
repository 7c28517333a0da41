"""Phase-tracked n-qubit Pauli strings in symplectic form.

A string is stored as two integer bitmasks ``x`` and ``z`` with qubit 0 in
the most significant bit, so the letter string ``"XZIY"`` reads qubit 0
first and ``dense()`` is the Kronecker product in that same order. The
Hermitian Pauli on a site is ``i**(x*z) X**x Z**z`` (so Y = iXZ).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

LETTERS = "IXYZ"
# letter -> (x, z)
_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_LETTER_OF = {v: k for k, v in _BITS.items()}
_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class PauliString:
    """An n-qubit Pauli operator without phase.

    Parameters
    ----------
    n : int
        Number of qubits.
    x, z : int
        Bitmasks of the X and Z components; bit ``n-1-q`` belongs to qubit q.
    """

    n: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"qubit count must be >= 1, got {self.n}")
        limit = 1 << self.n
        if not (0 <= self.x < limit and 0 <= self.z < limit):
            raise InvalidInputError("bitmask does not fit in n qubits")

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        label = label.strip().upper()
        if not label or any(ch not in _BITS for ch in label):
            raise InvalidInputError(f"invalid Pauli label {label!r}")
        x = z = 0
        for ch in label:
            bx, bz = _BITS[ch]
            x = (x << 1) | bx
            z = (z << 1) | bz
        return cls(len(label), x, z)

    @classmethod
    def from_bits(cls, x_bits: Sequence[int], z_bits: Sequence[int]) -> "PauliString":
        if len(x_bits) != len(z_bits):
            raise InvalidInputError("x_bits and z_bits differ in length")
        x = z = 0
        for bx, bz in zip(x_bits, z_bits):
            x = (x << 1) | int(bool(bx))
            z = (z << 1) | int(bool(bz))
        return cls(len(x_bits), x, z)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0)

    @property
    def x_bits(self) -> tuple[int, ...]:
        return tuple((self.x >> (self.n - 1 - q)) & 1 for q in range(self.n))

    @property
    def z_bits(self) -> tuple[int, ...]:
        return tuple((self.z >> (self.n - 1 - q)) & 1 for q in range(self.n))

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    @property
    def support(self) -> tuple[int, ...]:
        mask = self.x | self.z
        return tuple(q for q in range(self.n) if (mask >> (self.n - 1 - q)) & 1)

    @property
    def label(self) -> str:
        return "".join(_LETTER_OF[b] for b in zip(self.x_bits, self.z_bits))

    def codes(self) -> np.ndarray:
        """Per-site letter codes 0=I, 1=X, 2=Y, 3=Z."""
        return np.array([LETTERS.index(ch) for ch in self.label], dtype=np.int8)

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def dense(self) -> np.ndarray:
        """The 2^n x 2^n matrix (Kronecker product, qubit 0 first)."""
        out = np.ones((1, 1), dtype=complex)
        for ch in self.label:
            out = np.kron(out, _SINGLE[ch])
        return out

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"PauliString({self.label!r})"


@dataclass(frozen=True)
class ScaledPauli:
    """A real multiple of a Pauli string, e.g. the Hermitian commutator."""

    coefficient: float
    string: PauliString

    @property
    def is_zero(self) -> bool:
        return self.coefficient == 0


def _check_same_n(p: PauliString, q: PauliString) -> None:
    if p.n != q.n:
        raise InvalidInputError(f"qubit counts differ: {p.n} vs {q.n}")


def multiply(p: PauliString, q: PauliString) -> tuple[int, PauliString]:
    """Return ``(e, r)`` with ``p @ q == 1j**e * r`` as matrices."""
    _check_same_n(p, q)
    xr, zr = p.x ^ q.x, p.z ^ q.z
    e = (_popcount(p.x & p.z) + _popcount(q.x & q.z) - _popcount(xr & zr)
         + 2 * _popcount(p.z & q.x)) % 4
    return e, PauliString(p.n, xr, zr)


def commutes(p: PauliString, q: PauliString) -> bool:
    """True iff the symplectic inner product of ``p`` and ``q`` is even."""
    _check_same_n(p, q)
    return (_popcount(p.x & q.z) + _popcount(p.z & q.x)) % 2 == 0


def hermitian_commutator(p: PauliString, q: PauliString) -> ScaledPauli:
    """``i[p, q]`` as ``alpha * R`` with alpha in {-2, 0, 2}."""
    e, r = multiply(p, q)
    if e % 2 == 0:
        return ScaledPauli(0.0, PauliString.identity(p.n))
    # i * (pq - qp) = 2i * i**e * r, and e is odd here
    return ScaledPauli(-2.0 if e == 1 else 2.0, r)


class PauliBasis:
    """An ordered list of distinct non-identity Pauli strings on n qubits.

    The index order is what every constraint matrix, forward operator and
    coupling vector is laid out against.
    """

    def __init__(self, elements: Iterable[PauliString | str]):
        elems = tuple(PauliString.from_label(e) if isinstance(e, str) else e
                      for e in elements)
        if not elems:
            raise InvalidInputError("basis must contain at least one element")
        n = elems[0].n
        seen = set()
        for e in elems:
            if e.n != n:
                raise InvalidInputError("basis elements differ in qubit count")
            if e.is_identity():
                raise InvalidInputError("identity is not allowed in a basis")
            if (e.x, e.z) in seen:
                raise InvalidInputError(f"duplicate basis element {e.label}")
            seen.add((e.x, e.z))
        self.elements = elems
        self.n = n
        self._index = {(e.x, e.z): i for i, e in enumerate(elems)}

    @property
    def m(self) -> int:
        return len(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, PauliBasis) and self.labels() == other.labels()

    def __hash__(self) -> int:
        return hash(self.labels())

    def __repr__(self) -> str:
        return f"PauliBasis(n={self.n}, m={self.m})"

    def index(self, p: PauliString | str) -> int:
        if isinstance(p, str):
            p = PauliString.from_label(p)
        try:
            return self._index[(p.x, p.z)]
        except KeyError:
            raise InvalidInputError(f"{p.label} is not in the basis") from None

    def __contains__(self, p) -> bool:
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return (p.x, p.z) in self._index

    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.elements)

    @cached_property
    def x_masks(self) -> np.ndarray:
        return np.array([e.x for e in self.elements], dtype=np.int64)

    @cached_property
    def z_masks(self) -> np.ndarray:
        return np.array([e.z for e in self.elements], dtype=np.int64)

    @cached_property
    def codes(self) -> np.ndarray:
        """(m, n) array of per-site letter codes."""
        return np.stack([e.codes() for e in self.elements])

    def to_list(self) -> list[str]:
        return list(self.labels())

    @classmethod
    def from_list(cls, labels: Sequence[str]) -> "PauliBasis":
        return cls(labels)


def _strings_on(n: int, support: tuple[int, ...]):
    for letters in itertools.product("XYZ", repeat=len(support)):
        chars = ["I"] * n
        for q, ch in zip(support, letters):
            chars[q] = ch
        yield PauliString.from_label("".join(chars))


def _check_k(n: int, k: int) -> None:
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if not 1 <= k <= n:
        raise InvalidInputError(f"need 1 <= k <= n, got k={k}, n={n}")


def enumerate_k_body(n: int, k: int) -> PauliBasis:
    """All non-identity strings of weight at most ``k``.

    Order: by weight, then support in lexicographic order, then letters
    per site with X < Y < Z.
    """
    _check_k(n, k)
    elems = [p for w in range(1, k + 1)
             for supp in itertools.combinations(range(n), w)
             for p in _strings_on(n, supp)]
    return PauliBasis(elems)


def k_body_count(n: int, k: int) -> int:
    return sum(comb(n, w) * 3 ** w for w in range(1, k + 1))


def enumerate_k_local_chain(n: int, k: int) -> PauliBasis:
    """Strings supported inside some window of ``k`` contiguous chain sites.

    Same ordering as :func:`enumerate_k_body`, filtered to supports whose
    span ``max - min`` is below ``k``.
    """
    _check_k(n, k)
    elems = [p for w in range(1, k + 1)
             for supp in itertools.combinations(range(n), w)
             if supp[-1] - supp[0] < k
             for p in _strings_on(n, supp)]
    return PauliBasis(elems)
