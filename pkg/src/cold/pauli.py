"""Sparse Pauli-string algebra on N sites.

A word is stored as one integer: the low ``N`` bits hold the X-mask and the
next ``N`` bits the Z-mask (two bits per site).  Site 0 is the leftmost
tensor factor and maps to the most significant bit of each mask, so dense
matrices follow the usual Kronecker ordering.  ``Y`` is the site code with
both bits set; the Hermitian word is ``P = i^{|x&z|} X^x Z^z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

PRUNE_THRESHOLD = 1e-14
DENSE_SITE_CAP = 12

_LETTERS = "IXZY"  # index = x_bit | (z_bit << 1)
_PHASES = (1.0 + 0j, 1j, -1.0 + 0j, -1j)


class PauliError(ValueError):
    """Raised on size mismatches and malformed words."""


@dataclass(frozen=True, order=True)
class PauliWord:
    """A length-``n_sites`` tensor product of single-site Paulis."""

    n_sites: int
    code: int

    def __post_init__(self) -> None:
        if self.n_sites < 1:
            raise PauliError("a Pauli word needs at least one site")
        if self.code < 0 or self.code >> (2 * self.n_sites):
            raise PauliError(f"code {self.code} does not fit {self.n_sites} sites")

    @classmethod
    def from_label(cls, label: str) -> PauliWord:
        label = label.strip().upper()
        n = len(label)
        x = z = 0
        for k, ch in enumerate(label):
            if ch not in "IXYZ":
                raise PauliError(f"unknown Pauli letter {ch!r} in {label!r}")
            bit = 1 << (n - 1 - k)
            if ch in "XY":
                x |= bit
            if ch in "ZY":
                z |= bit
        return cls(n, x | (z << n))

    @classmethod
    def identity(cls, n_sites: int) -> PauliWord:
        return cls(n_sites, 0)

    @property
    def x_mask(self) -> int:
        return self.code & ((1 << self.n_sites) - 1)

    @property
    def z_mask(self) -> int:
        return self.code >> self.n_sites

    @property
    def label(self) -> str:
        n, x, z = self.n_sites, self.x_mask, self.z_mask
        out = []
        for k in range(n):
            bit = 1 << (n - 1 - k)
            out.append(_LETTERS[bool(x & bit) | (bool(z & bit) << 1)])
        return "".join(out)

    @property
    def weight(self) -> int:
        return (self.x_mask | self.z_mask).bit_count()

    def __str__(self) -> str:
        return self.label


def _product_code(n: int, a: int, b: int) -> tuple[int, int]:
    """Return ``(code, k)`` with ``P_a P_b = i^k P_code``."""
    mask = (1 << n) - 1
    xa, za = a & mask, a >> n
    xb, zb = b & mask, b >> n
    xc, zc = xa ^ xb, za ^ zb
    k = (xa & za).bit_count() + (xb & zb).bit_count() - (xc & zc).bit_count()
    k += 2 * (za & xb).bit_count()
    return xc | (zc << n), k % 4


def multiply(a: PauliWord, b: PauliWord) -> tuple[PauliWord, complex]:
    """Product of two words as ``(word, phase)`` with phase in {+-1, +-i}."""
    if a.n_sites != b.n_sites:
        raise PauliError(f"length mismatch: {a.n_sites} vs {b.n_sites}")
    code, k = _product_code(a.n_sites, a.code, b.code)
    return PauliWord(a.n_sites, code), _PHASES[k]


class PauliSum:
    """Immutable sparse linear combination of Pauli words.

    Terms whose coefficient magnitude falls below ``prune`` are dropped on
    construction, so every arithmetic result is canonical.
    """

    __slots__ = ("_n", "_terms")

    def __init__(
        self,
        n_sites: int,
        terms: Mapping[int, complex] | Iterable[tuple[int, complex]] = (),
        prune: float = PRUNE_THRESHOLD,
    ) -> None:
        if n_sites < 1:
            raise PauliError("a Pauli sum needs at least one site")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[int, complex] = {}
        for code, c in items:
            acc[code] = acc.get(code, 0j) + complex(c)
        self._n = n_sites
        self._terms = {k: v for k, v in sorted(acc.items()) if abs(v) >= prune}

    # construction helpers
    @classmethod
    def from_word(cls, word: PauliWord | str, coeff: complex = 1.0) -> PauliSum:
        if isinstance(word, str):
            word = PauliWord.from_label(word)
        return cls(word.n_sites, {word.code: coeff})

    @classmethod
    def from_labels(cls, pairs: Mapping[str, complex] | Iterable[tuple[str, complex]]) -> PauliSum:
        items = list(pairs.items() if isinstance(pairs, Mapping) else pairs)
        if not items:
            raise PauliError("cannot infer the site count of an empty label list")
        words = [(PauliWord.from_label(s), c) for s, c in items]
        n = words[0][0].n_sites
        if any(w.n_sites != n for w, _ in words):
            raise PauliError("labels have different lengths")
        return cls(n, [(w.code, c) for w, c in words])

    @classmethod
    def single(cls, n_sites: int, ops: Mapping[int, str], coeff: complex = 1.0) -> PauliSum:
        """Word with letters ``ops[site]`` and identity elsewhere."""
        letters = ["I"] * n_sites
        for site, letter in ops.items():
            if not 0 <= site < n_sites:
                raise PauliError(f"site {site} outside 0..{n_sites - 1}")
            letters[site] = letter
        return cls.from_word("".join(letters), coeff)

    @classmethod
    def zero(cls, n_sites: int) -> PauliSum:
        return cls(n_sites)

    # accessors
    @property
    def n_sites(self) -> int:
        return self._n

    @property
    def terms(self) -> dict[int, complex]:
        return dict(self._terms)

    def items(self) -> Iterator[tuple[PauliWord, complex]]:
        for code, c in self._terms.items():
            yield PauliWord(self._n, code), c

    def coefficient(self, word: PauliWord | str) -> complex:
        if isinstance(word, str):
            word = PauliWord.from_label(word)
        self._check(word.n_sites)
        return self._terms.get(word.code, 0j)

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __iter__(self) -> Iterator[tuple[PauliWord, complex]]:
        return self.items()

    def is_hermitian(self, tol: float = 0.0) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    def _check(self, n: int) -> None:
        if n != self._n:
            raise PauliError(f"size mismatch: {self._n} vs {n} sites")

    # arithmetic
    def __add__(self, other: PauliSum) -> PauliSum:
        self._check(other._n)
        return PauliSum(self._n, list(self._terms.items()) + list(other._terms.items()))

    def __sub__(self, other: PauliSum) -> PauliSum:
        return self + (-1.0) * other

    def __neg__(self) -> PauliSum:
        return (-1.0) * self

    def __mul__(self, scalar: complex) -> PauliSum:
        if isinstance(scalar, PauliSum):
            return self @ scalar
        return PauliSum(self._n, {k: v * scalar for k, v in self._terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> PauliSum:
        return self * (1.0 / scalar)

    def __matmul__(self, other: PauliSum) -> PauliSum:
        self._check(other._n)
        n = self._n
        acc: dict[int, complex] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                code, k = _product_code(n, a, b)
                acc[code] = acc.get(code, 0j) + _PHASES[k] * ca * cb
        return PauliSum(n, acc)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self._n == other._n and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self._n, tuple(self._terms.items())))

    def allclose(self, other: PauliSum, atol: float = 1e-12) -> bool:
        self._check(other._n)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self._terms.get(k, 0j) - other._terms.get(k, 0j)) <= atol for k in keys)

    def __repr__(self) -> str:
        if not self._terms:
            return f"PauliSum({self._n}, 0)"
        body = " + ".join(f"({c:.6g}){w.label}" for w, c in self.items())
        return f"PauliSum({body})"

    # serialization used by test fixtures
    def to_text(self) -> str:
        return "".join(f"{c.real!r} {c.imag!r} {w.label}\n" for w, c in self.items())

    @classmethod
    def from_text(cls, text: str) -> PauliSum:
        pairs = []
        for line in text.splitlines():
            if not line.strip():
                continue
            re_, im_, label = line.split()
            pairs.append((label, complex(float(re_), float(im_))))
        return cls.from_labels(pairs)


def commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    """``[a, b] = ab - ba``, keeping only anticommuting word pairs."""
    if a.n_sites != b.n_sites:
        raise PauliError(f"size mismatch: {a.n_sites} vs {b.n_sites} sites")
    n = a.n_sites
    acc: dict[int, complex] = {}
    for wa, ca in a._terms.items():
        for wb, cb in b._terms.items():
            code, k = _product_code(n, wa, wb)
            if k % 2:  # odd phase: the words anticommute
                acc[code] = acc.get(code, 0j) + 2 * _PHASES[k] * ca * cb
    return PauliSum(n, acc)


def trace_inner(a: PauliSum, b: PauliSum) -> complex:
    """Normalised trace ``Tr[a b] / 2^N``."""
    if a.n_sites != b.n_sites:
        raise PauliError(f"size mismatch: {a.n_sites} vs {b.n_sites} sites")
    small, big = (a._terms, b._terms) if len(a) <= len(b) else (b._terms, a._terms)
    return sum((c * big[k] for k, c in small.items() if k in big), 0j)


def _popcount_parity(values: np.ndarray) -> np.ndarray:
    v = values.copy()
    parity = np.zeros_like(v)
    while np.any(v):
        parity ^= v & 1
        v >>= 1
    return parity


def to_dense(a: PauliSum, cap: int = DENSE_SITE_CAP) -> np.ndarray:
    """Materialise the ``2^N x 2^N`` matrix of a Pauli sum."""
    n = a.n_sites
    if n > cap:
        raise PauliError(f"{n} sites exceeds the dense cap of {cap}")
    dim = 1 << n
    rows = np.arange(dim, dtype=np.int64)
    out = np.zeros((dim, dim), dtype=complex)
    mask = dim - 1
    for code, c in a._terms.items():
        x, z = code & mask, code >> n
        # P|r> = i^{|x&z|} (-1)^{|z&r|} |r^x>
        cols = rows ^ x
        sign = 1 - 2 * _popcount_parity(rows & z)
        out[cols, rows] += c * _PHASES[(x & z).bit_count() % 4] * sign
    return out


def site_operator(n_sites: int, site: int, letter: str, coeff: complex = 1.0) -> PauliSum:
    return PauliSum.single(n_sites, {site: letter}, coeff)


def pair_operator(n_sites: int, i: int, a: str, j: int, b: str, coeff: complex = 1.0) -> PauliSum:
    if i == j:
        raise PauliError("pair operator needs two distinct sites")
    return PauliSum.single(n_sites, {i: a, j: b}, coeff)


def total(n_sites: int, letter: str) -> PauliSum:
    """``sum_j sigma^letter_j``."""
    out = PauliSum.zero(n_sites)
    for j in range(n_sites):
        out = out + site_operator(n_sites, j, letter)
    return out
