"""Phase-free qudit Pauli arithmetic.

An n-site Pauli with local dimension d is stored as a pair of exponent
vectors (x, z) in Z_d^n, representing the operator

    prod_i X_i^{x_i} Z_i^{z_i}

up to a global phase, which is discarded. All group arithmetic therefore
happens on exponents mod d, and the only phase-like quantity kept is the
scalar commutator exponent e with A B = w^e B A for w = exp(2 pi i / d).

d is restricted to primes by default; composite d can be opted into with
``allow_composite=True`` but then generators of non-maximal order make
group-size bookkeeping the caller's problem.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

_SMALL_PRIMES = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47}

# default cap for enumerate_group: d^{2|r|} <= 4^8
ENUMERATION_CAP = 4 ** 8

_QUBIT_CHARS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_QUBIT_NAMES = {v: k for k, v in _QUBIT_CHARS.items()}


def _is_prime(d: int) -> bool:
    if d in _SMALL_PRIMES:
        return True
    if d < 2 or d % 2 == 0:
        return d == 2
    return all(d % k for k in range(3, int(d ** 0.5) + 1, 2))


class PauliOperator:
    """Immutable phase-free Pauli on n sites of dimension d."""

    __slots__ = ("n", "d", "x", "z", "_hash")

    def __init__(self, x, z, d: int = 2, allow_composite: bool = False):
        if d < 2:
            raise ValueError(f"local dimension must be >= 2, got {d}")
        if not allow_composite and not _is_prime(d):
            raise ValueError(
                f"d={d} is composite; pass allow_composite=True if the "
                "over-counting caveats are acceptable"
            )
        x = np.asarray(x, dtype=np.int64) % d
        z = np.asarray(z, dtype=np.int64) % d
        if x.ndim != 1 or z.ndim != 1 or len(x) != len(z):
            raise ValueError("x and z must be 1-d exponent vectors of equal length")
        self.n = len(x)
        self.d = d
        self.x = x
        self.z = z
        x.setflags(write=False)
        z.setflags(write=False)
        self._hash = None

    # -- constructors ---------------------------------------------------

    @classmethod
    def identity(cls, n: int, d: int = 2) -> "PauliOperator":
        return cls(np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64), d)

    @classmethod
    def from_string(cls, s: str, d: int = 2) -> "PauliOperator":
        """Parse a Pauli literal.

        For d=2 the literal is a string over IXYZ, e.g. "XIZZY". For d>2 it
        is a sequence of whitespace-separated per-site tokens "x<a>z<b>",
        e.g. "x2z1 x0z0".
        """
        if d == 2 and all(c in "IXYZixyz" for c in s.strip()) and " " not in s.strip():
            pairs = [_QUBIT_CHARS[c] for c in s.strip().upper()]
            x, z = zip(*pairs) if pairs else ((), ())
            return cls(np.array(x, dtype=np.int64), np.array(z, dtype=np.int64), d)
        xs, zs = [], []
        for token in s.split():
            token = token.lower()
            if not token.startswith("x") or "z" not in token:
                raise ValueError(f"invalid Pauli token {token!r}")
            xpart, zpart = token[1:].split("z", 1)
            xe, ze = int(xpart), int(zpart)
            if not (0 <= xe < d and 0 <= ze < d):
                raise ValueError(
                    f"token {token!r} exponent out of range for d={d}"
                )
            xs.append(xe)
            zs.append(ze)
        return cls(np.array(xs, dtype=np.int64), np.array(zs, dtype=np.int64), d)

    @classmethod
    def single_site(cls, n: int, site: int, xexp: int, zexp: int, d: int = 2) -> "PauliOperator":
        x = np.zeros(n, dtype=np.int64)
        z = np.zeros(n, dtype=np.int64)
        x[site] = xexp
        z[site] = zexp
        return cls(x, z, d)

    # -- basic queries ---------------------------------------------------

    def is_identity(self) -> bool:
        return not self.x.any() and not self.z.any()

    @property
    def weight(self) -> int:
        return int(np.count_nonzero((self.x != 0) | (self.z != 0)))

    def to_string(self) -> str:
        if self.d == 2:
            return "".join(_QUBIT_NAMES[(int(a), int(b))] for a, b in zip(self.x, self.z))
        return " ".join(f"x{int(a)}z{int(b)}" for a, b in zip(self.x, self.z))

    def __repr__(self):
        return f"PauliOperator({self.to_string()!r}, d={self.d})"

    def __eq__(self, other):
        if not isinstance(other, PauliOperator):
            return NotImplemented
        return (
            self.d == other.d
            and self.n == other.n
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.z, other.z)
        )

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.d, self.x.tobytes(), self.z.tobytes()))
        return self._hash

    # -- group arithmetic ------------------------------------------------

    def __mul__(self, other: "PauliOperator") -> "PauliOperator":
        return multiply(self, other)

    def inverse(self) -> "PauliOperator":
        return PauliOperator((-self.x) % self.d, (-self.z) % self.d, self.d,
                             allow_composite=True)

    def __pow__(self, k: int) -> "PauliOperator":
        return PauliOperator((self.x * k) % self.d, (self.z * k) % self.d, self.d,
                             allow_composite=True)

    def commutator_exponent(self, other: "PauliOperator") -> int:
        return scalar_commutator_exponent(self, other)

    def restrict(self, region: "Region | tuple") -> "PauliOperator":
        return restrict(self, region)

    def embed(self, n: int, sites) -> "PauliOperator":
        """Place this operator on the given sites of a larger n-site register."""
        if isinstance(sites, Region):
            sites = sites.sites
        sites = np.asarray(sites, dtype=np.int64)
        if len(sites) != self.n:
            raise ValueError("site list length must match operator size")
        if len(sites) and (sites.min() < 0 or sites.max() >= n):
            raise ValueError("embedding site out of range")
        x = np.zeros(n, dtype=np.int64)
        z = np.zeros(n, dtype=np.int64)
        x[sites] = self.x
        z[sites] = self.z
        return PauliOperator(x, z, self.d, allow_composite=True)

    # -- packed bits (d=2 fast path) ------------------------------------

    def to_bits(self) -> tuple[int, int]:
        """Pack a qubit Pauli into (x_bits, z_bits) integers, site i at bit i."""
        if self.d != 2:
            raise ValueError("bit packing only defined for d=2")
        xb = zb = 0
        for i in range(self.n):
            xb |= int(self.x[i]) << i
            zb |= int(self.z[i]) << i
        return xb, zb

    @classmethod
    def from_bits(cls, xbits: int, zbits: int, n: int) -> "PauliOperator":
        x = np.array([(xbits >> i) & 1 for i in range(n)], dtype=np.int64)
        z = np.array([(zbits >> i) & 1 for i in range(n)], dtype=np.int64)
        return cls(x, z, 2)


@dataclass(frozen=True)
class Region:
    """An ordered set of distinct site indices."""

    sites: tuple

    def __init__(self, sites):
        sites = tuple(int(s) for s in sites)
        if len(set(sites)) != len(sites):
            raise ValueError(f"region sites must be distinct, got {sites}")
        if any(s < 0 for s in sites):
            raise ValueError("region sites must be non-negative")
        object.__setattr__(self, "sites", sites)

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def validate_for(self, n: int):
        if self.sites and max(self.sites) >= n:
            raise ValueError(f"region {self.sites} out of range for n={n}")


def _check_compatible(a: PauliOperator, b: PauliOperator):
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: d={a.d} vs d={b.d}")
    if a.n != b.n:
        raise ValueError(f"site-count mismatch: n={a.n} vs n={b.n}")


def multiply(a: PauliOperator, b: PauliOperator) -> PauliOperator:
    """Product of two phase-free Paulis (exponents add mod d)."""
    _check_compatible(a, b)
    return PauliOperator((a.x + b.x) % a.d, (a.z + b.z) % a.d, a.d,
                         allow_composite=True)


def scalar_commutator_exponent(a: PauliOperator, b: PauliOperator) -> int:
    """Exponent e in Z_d with A B = w^e B A, w = exp(2 pi i/d).

    e = sum_i (a.x_i b.z_i - a.z_i b.x_i) mod d.
    """
    _check_compatible(a, b)
    e = int(np.dot(a.x, b.z) - np.dot(a.z, b.x))
    return e % a.d


def restrict(p: PauliOperator, region) -> PauliOperator:
    """Restriction of p to the given region, in region order."""
    sites = region.sites if isinstance(region, Region) else tuple(region)
    if sites and max(sites) >= p.n:
        raise ValueError(f"region {sites} out of range for n={p.n}")
    idx = np.asarray(sites, dtype=np.int64)
    return PauliOperator(p.x[idx], p.z[idx], p.d, allow_composite=True)


def enumerate_group(region, d: int = 2, cap: int = ENUMERATION_CAP):
    """Every phase-free Pauli on the region, d^{2|r|} in total.

    Operators are produced on |r| sites (region order), with exponents in
    odometer order: last site fastest, z before x within each site, so the
    list position equals the canonical pauli_index.
    """
    r = len(region.sites) if isinstance(region, Region) else len(tuple(region))
    total = d ** (2 * r)
    if total > cap:
        raise ValueError(
            f"group of size d^(2*{r}) = {total} exceeds enumeration cap {cap}"
        )
    out = []
    for exps in itertools.product(range(d), repeat=2 * r):
        x = np.array(exps[0::2], dtype=np.int64)
        z = np.array(exps[1::2], dtype=np.int64)
        out.append(PauliOperator(x, z, d, allow_composite=True))
    return out


def pauli_index(p: PauliOperator) -> int:
    """Canonical index of a Pauli within its full group enumeration.

    Matches the order produced by enumerate_group: site 0 most significant,
    per-site code x*d + z.
    """
    idx = 0
    for a, b in zip(p.x, p.z):
        idx = idx * p.d * p.d + int(a) * p.d + int(b)
    return idx


def pauli_from_index(idx: int, r: int, d: int = 2) -> PauliOperator:
    """Inverse of pauli_index for an r-site region."""
    x = np.zeros(r, dtype=np.int64)
    z = np.zeros(r, dtype=np.int64)
    for i in range(r - 1, -1, -1):
        code = idx % (d * d)
        idx //= d * d
        x[i] = code // d
        z[i] = code % d
    return PauliOperator(x, z, d, allow_composite=True)


# -- packed-bit helpers (d=2 performance specialisation) -----------------
#
# Hot loops (group enumeration in the class-probability oracle, exhaustive
# decoder tables) work on uint64 bit masks, one bit per site. These helpers
# mirror the dense-array operations and are tested against them.

def bits_multiply(xa: int, za: int, xb: int, zb: int) -> tuple[int, int]:
    return xa ^ xb, za ^ zb


def bits_commutator(xa: int, za: int, xb: int, zb: int) -> int:
    return (int(xa & zb).bit_count() + int(za & xb).bit_count()) % 2


def bits_commutator_array(xa, za, xb: int, zb: int):
    """Commutator exponents of an array of packed qubit Paulis with one fixed
    Pauli (xb, zb). Arrays are uint64; result is uint8 in {0, 1}."""
    acc = np.bitwise_count(xa & np.uint64(zb)) + np.bitwise_count(za & np.uint64(xb))
    return (acc & 1).astype(np.uint8)
