"""Stabiliser and subsystem codes: builders, syndromes, coset representatives
and the brute-force logical-class probability oracle.

A Code stores a (possibly redundant) generating set for its stabiliser
group, gauge generators for subsystem codes, and the full list of logical
class representatives L_l indexed by l in Z_d^{2k}. Lattice builders attach
geometry used by the spin-model compiler and the tensor-network decoder.
"""

from __future__ import annotations

import numpy as np

from . import _gf
from .pauli import PauliOperator, Region, pauli_index

ORACLE_CAP = 2 ** 24


class Syndrome:
    """Commutator exponents of an error with each stored generator."""

    __slots__ = ("values",)

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.int64)
        if self.values.ndim != 1:
            raise ValueError("syndrome must be a vector")
        self.values.setflags(write=False)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, Syndrome):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"Syndrome({self.values.tolist()})"


def _symplectic_rows(paulis, n, d):
    """Stack (x | z) exponent rows for a list of Paulis."""
    rows = np.zeros((len(paulis), 2 * n), dtype=np.int64)
    for i, p in enumerate(paulis):
        rows[i, :n] = p.x
        rows[i, n:] = p.z
    return rows % d


class Code:
    """Immutable code: n sites of dimension d, generators and logicals.

    logical_representatives[l] is the class operator L_l; label 0 is the
    identity. For k logical qudits there are d^{2k} labels ordered by the
    exponent tuple (a_1, b_1, ..., a_k, b_k) of prod_i X_i^a_i Z_i^b_i over
    the logical basis, last exponent fastest.
    """

    def __init__(self, n, d, stabiliser_generators, gauge_generators=(),
                 logical_representatives=None, geometry=None, metadata=None,
                 validate=True):
        self.n = int(n)
        self.d = int(d)
        self.stabiliser_generators = list(stabiliser_generators)
        self.gauge_generators = list(gauge_generators)
        if logical_representatives is None:
            logical_representatives = [PauliOperator.identity(n, d)]
        self.logical_representatives = list(logical_representatives)
        self.geometry = geometry or {}
        self.metadata = metadata or {}
        self._group_codes = None

        for p in (self.stabiliser_generators + self.gauge_generators
                  + self.logical_representatives):
            if p.n != self.n or p.d != self.d:
                raise ValueError("generator does not match code n, d")
        if not self.logical_representatives[0].is_identity():
            raise ValueError("logical label 0 must be the identity")

        stab_rows = _symplectic_rows(self.stabiliser_generators, self.n, self.d)
        self._stab_rows = stab_rows
        rnk = _gf.rank(stab_rows, self.d) if len(stab_rows) else 0
        self.redundancy_count = len(self.stabiliser_generators) - rnk
        self._stab_rank = rnk

        if validate:
            self._validate_commutation()

    def _validate_commutation(self):
        gens = self.stabiliser_generators
        for i, a in enumerate(gens):
            for b in gens[i + 1:]:
                e = a.commutator_exponent(b)
                if e:
                    raise ValueError(
                        f"stabiliser generators do not commute (exponent {e})"
                    )
            for b in self.gauge_generators + self.logical_representatives:
                e = a.commutator_exponent(b)
                if e:
                    raise ValueError(
                        "stabiliser generator fails to commute with gauge/"
                        f"logical operator (exponent {e})"
                    )

    # -- derived structure ----------------------------------------------

    @property
    def num_logical_classes(self) -> int:
        return len(self.logical_representatives)

    @property
    def k(self) -> int:
        """Number of logical qudits, from the class count d^{2k}."""
        count, k = len(self.logical_representatives), 0
        while count > 1:
            count //= self.d * self.d
            k += 1
        return k

    def logical_basis(self):
        """Basis operators (X1, Z1, X2, Z2, ...) extracted from the class
        representatives; class labels read the exponent pairs as base-d
        digits with the first pair most significant."""
        out = []
        for i in range(self.k):
            out.append(self.logical_representatives[
                self.d ** (2 * (self.k - i) - 1)])
            out.append(self.logical_representatives[
                self.d ** (2 * (self.k - i - 1))])
        return tuple(out)

    def independent_stabiliser_indices(self):
        """Indices of a maximal independent subset of the stored stabiliser
        generators, chosen by first-come greedy rank growth (deterministic)."""
        picked, rows = [], []
        for i, _ in enumerate(self.stabiliser_generators):
            cand = rows + [self._stab_rows[i]]
            if _gf.rank(np.array(cand, dtype=np.int64), self.d) > len(rows):
                picked.append(i)
                rows.append(self._stab_rows[i])
        return picked

    def group_generators(self):
        """Generators of the group the class oracle sums over: the gauge
        group for subsystem codes, else the stabiliser group."""
        gens = [self.stabiliser_generators[i]
                for i in self.independent_stabiliser_indices()]
        if self.gauge_generators:
            rows = [self._stab_rows[i]
                    for i in self.independent_stabiliser_indices()]
            for g in self.gauge_generators:
                r = np.concatenate([g.x, g.z]) % self.d
                cand = rows + [r]
                if _gf.rank(np.array(cand, dtype=np.int64), self.d) > len(rows):
                    gens.append(g)
                    rows.append(r)
        return gens

    def group_exponents(self, cap=ORACLE_CAP):
        """All elements of the oracle group as an (m, n, 2) exponent array.

        Cached on the instance; m = d^{#independent generators}.
        """
        if self._group_codes is not None:
            return self._group_codes
        gens = self.group_generators()
        m = self.d ** len(gens)
        if m > cap:
            raise ValueError(
                f"group size {self.d}^{len(gens)} exceeds enumeration cap {cap}"
            )
        out = np.zeros((1, self.n, 2), dtype=np.uint8)
        for g in gens:
            gv = np.stack([g.x, g.z], axis=-1).astype(np.int64)
            layers = [(out + k * gv[None, :, :]) % self.d for k in range(self.d)]
            out = np.concatenate(layers, axis=0).astype(np.uint8)
        self._group_codes = out
        return out


# -- syndromes and coset representatives --------------------------------


def syndrome(code: Code, e: PauliOperator) -> Syndrome:
    """Syndrome components ⟦S_k, e⟧ for every stored stabiliser generator."""
    if e.n != code.n or e.d != code.d:
        raise ValueError("error does not match code n, d")
    vals = [s.commutator_exponent(e) for s in code.stabiliser_generators]
    return Syndrome(vals)


def _syndrome_matrix(code: Code):
    """Matrix M with M @ (x|z) == syndrome(E) over GF(d).

    Row k is (-S_k.z | S_k.x), since ⟦S_k,E⟧ = Σ_i S.x_i E.z_i − S.z_i E.x_i.
    """
    n, d = code.n, code.d
    rows = np.zeros((len(code.stabiliser_generators), 2 * n), dtype=np.int64)
    for k, s in enumerate(code.stabiliser_generators):
        rows[k, :n] = (-s.z) % d
        rows[k, n:] = s.x
    return rows


def coset_representative(code: Code, s: Syndrome) -> PauliOperator:
    """A deterministic Pauli C_s with syndrome(code, C_s) == s.

    Computed by Gaussian elimination over the symplectic generator matrix
    with a fixed pivot order; free components are zero, so the zero
    syndrome maps to the identity.
    """
    if len(s) != len(code.stabiliser_generators):
        raise ValueError("syndrome length does not match generator count")
    v = _gf.solve(_syndrome_matrix(code), s.values, code.d)
    if v is None:
        raise ValueError("inconsistent syndrome: violates generator redundancy")
    return PauliOperator(v[:code.n], v[code.n:], code.d)


def logical_class_label(code: Code, e: PauliOperator) -> int:
    """Label l of the class containing e: the unique l such that
    e·(C_s·L_l)^{-1} lies in the oracle group, with s = syndrome(code, e).

    Decided by row-space membership over the group generators, so it holds
    for any representative convention. The group row matrix is cached on
    the code instance.
    """
    if e.n != code.n or e.d != code.d:
        raise ValueError("error does not match code n, d")
    rows = getattr(code, "_membership_rows", None)
    if rows is None:
        rows = _symplectic_rows(code.group_generators(), code.n, code.d)
        code._membership_rows = rows
    base = coset_representative(code, syndrome(code, e)).inverse() * e
    for l, rep in enumerate(code.logical_representatives):
        diff = base * rep.inverse()
        vec = np.concatenate([diff.x, diff.z]) % code.d
        if _gf.row_space_contains(rows, vec, code.d):
            return l
    raise ValueError("error lies in no stored logical class")


def attainable_syndromes(code: Code):
    """Iterate all d^rank attainable syndromes: free values on an
    independent generator subset, dependent components completed from the
    redundancy relations."""
    from itertools import product

    idx = code.independent_stabiliser_indices()
    for combo in product(range(code.d), repeat=len(idx)):
        yield _complete_syndrome(code, idx, combo)


def _complete_syndrome(code: Code, idx, combo):
    """Fill dependent syndrome components from values on an independent
    generator subset, using the redundancy relations."""
    d = code.d
    rows = code._stab_rows
    full = np.zeros(len(rows), dtype=np.int64)
    full[idx] = combo
    if code.redundancy_count == 0:
        return Syndrome(full)
    sub = rows[idx]
    for j in range(len(rows)):
        if j in idx:
            continue
        coeff = _gf.solve(sub.T, rows[j], d)
        if coeff is None:
            raise AssertionError("stored generator outside independent span")
        full[j] = int(np.dot(coeff, full[idx])) % d
    return Syndrome(full)


# -- the class probability oracle ---------------------------------------


def class_probability_oracle(code: Code, noise, e: PauliOperator,
                             cap=ORACLE_CAP) -> float:
    """Pr(Ē) = Σ_{S in group} Pr(E·S) by explicit group enumeration.

    The group is the stabiliser group, or the gauge group for subsystem
    codes. Noise factors marked FORBIDDEN contribute exactly zero.
    """
    stats = class_log_statistics(code, noise, e, cap=cap)
    return float(np.exp(stats["logsum"])) if np.isfinite(stats["logsum"]) else 0.0


def class_log_statistics(code: Code, noise, e: PauliOperator, cap=ORACLE_CAP,
                         tie_tol=1e-9):
    """Log-domain statistics of {Pr(E·S)} over the oracle group.

    Returns dict with: logsum (log Σ Pr, −inf if the class is forbidden),
    logmax (largest single-element log probability), multiplicity (count of
    elements within tie_tol of logmax), and count of non-forbidden elements.
    """
    if e.n != code.n or e.d != code.d:
        raise ValueError("error does not match code n, d")
    group = code.group_exponents(cap=cap)
    ev = np.stack([e.x, e.z], axis=-1).astype(np.uint8)
    patterns = (group + ev[None, :, :]) % code.d
    logps = noise.log_probability_batch(patterns)
    finite = np.isfinite(logps)
    if not finite.any():
        return {"logsum": -np.inf, "logmax": -np.inf, "multiplicity": 0,
                "count": 0}
    lp = logps[finite]
    mx = float(lp.max())
    logsum = mx + float(np.log(np.sum(np.exp(lp - mx))))
    mult = int(np.sum(lp >= mx - tie_tol))
    return {"logsum": logsum, "logmax": mx, "multiplicity": mult,
            "count": int(finite.sum())}


# -- standard code builders ----------------------------------------------


def build_toric_code(L: int, d: int = 2) -> Code:
    """Toric code on an L×L periodic lattice: n = 2L² edge qudits, L²
    vertex (X-star) and L² plaquette (Z) generators, 2 redundancies, k=2.

    Edge indexing: horizontal edge h(r,c) (from vertex (r,c) towards
    (r,c+1)) is site r·L+c; vertical edge v(r,c) (towards (r+1,c)) is site
    L² + r·L + c. For d > 2 the generators carry the usual orientation
    signs so that everything commutes.
    """
    if L < 2:
        raise ValueError(f"toric code needs L >= 2, got {L}")
    n = 2 * L * L

    def h(r, c):
        return (r % L) * L + (c % L)

    def v(r, c):
        return L * L + (r % L) * L + (c % L)

    stars, plaqs = [], []
    for r in range(L):
        for c in range(L):
            x = np.zeros(n, dtype=np.int64)
            x[h(r, c)] += 1
            x[v(r, c)] += 1
            x[h(r, c - 1)] -= 1
            x[v(r - 1, c)] -= 1
            stars.append(PauliOperator(x, np.zeros(n, dtype=np.int64), d))
            z = np.zeros(n, dtype=np.int64)
            z[h(r, c)] += 1
            z[v(r, c + 1)] += 1
            z[h(r + 1, c)] -= 1
            z[v(r, c)] -= 1
            plaqs.append(PauliOperator(np.zeros(n, dtype=np.int64), z, d))

    def string(sites, kind, signs=None):
        x = np.zeros(n, dtype=np.int64)
        z = np.zeros(n, dtype=np.int64)
        for i, s in enumerate(sites):
            sign = 1 if signs is None else signs[i]
            if kind == "x":
                x[s] = sign
            else:
                z[s] = sign
        return PauliOperator(x, z, d)

    # logical basis: two (X, Z) pairs from non-contractible cycles
    xbar1 = string([h(r, 0) for r in range(L)], "x")
    zbar1 = string([h(0, c) for c in range(L)], "z")
    xbar2 = string([v(0, c) for c in range(L)], "x", [-1] * L)
    zbar2 = string([v(r, 0) for r in range(L)], "z", [-1] * L)
    basis = [(xbar1, zbar1), (xbar2, zbar2)]
    logicals = _logical_classes(basis, n, d)

    geometry = {
        "kind": "toric",
        "L": L,
        "site_coords": [None] * n,
        "generator_coords": [None] * (2 * L * L),
    }
    for r in range(L):
        for c in range(L):
            geometry["site_coords"][h(r, c)] = (r, c + 0.5)
            geometry["site_coords"][v(r, c)] = (r + 0.5, c)
            geometry["generator_coords"][r * L + c] = (r, c)
            geometry["generator_coords"][L * L + r * L + c] = (r + 0.5, c + 0.5)

    return Code(n, d, stars + plaqs, logical_representatives=logicals,
                geometry=geometry,
                metadata={"logical_basis_size": 2})


def _logical_classes(basis, n, d):
    """All d^{2k} class operators from ordered (X̄_i, Z̄_i) pairs."""
    logicals = [PauliOperator.identity(n, d)]
    for xb, zb in basis:
        new = []
        for base in logicals:
            for a in range(d):
                for b in range(d):
                    new.append(base * (xb ** a) * (zb ** b))
        logicals = new
    return logicals


def toric_eta_pairs(code: Code):
    """Edge pairs lying across each plaquette of a toric code: the two
    horizontal edges above/below each face and the two vertical edges
    left/right of it. Two pairs per face."""
    if code.geometry.get("kind") != "toric":
        raise ValueError("eta pairs are defined from toric geometry")
    L = code.geometry["L"]

    def h(r, c):
        return (r % L) * L + (c % L)

    def v(r, c):
        return L * L + (r % L) * L + (c % L)

    pairs = []
    for r in range(L):
        for c in range(L):
            pairs.append((h(r, c), h(r + 1, c)))
            pairs.append((v(r, c), v(r, c + 1)))
    return pairs


def build_surface_code(dist: int) -> Code:
    """Planar surface code of odd distance ≥ 3 on a (2·dist−1)² grid.

    Qubits sit at (even, even) and (odd, odd) grid points; X-checks at
    (odd, even), Z-checks at (even, odd), each acting on its grid
    neighbours (weight 3 on the boundary). n−1 independent generators,
    no redundancy, one logical qubit.
    """
    if dist < 3 or dist % 2 == 0:
        raise ValueError(f"surface code distance must be odd and >= 3, got {dist}")
    d = 2
    size = 2 * dist - 1
    qubit_at = {}
    site_coords = []
    for r in range(size):
        for c in range(size):
            if r % 2 == c % 2:
                qubit_at[(r, c)] = len(site_coords)
                site_coords.append((r, c))
    n = len(site_coords)

    def check(r, c, kind):
        x = np.zeros(n, dtype=np.int64)
        z = np.zeros(n, dtype=np.int64)
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            q = qubit_at.get((rr, cc))
            if q is not None:
                (x if kind == "x" else z)[q] = 1
        return PauliOperator(x, z, d)

    gens, gen_coords, gen_kinds = [], [], []
    for r in range(1, size, 2):
        for c in range(0, size, 2):
            gens.append(check(r, c, "x"))
            gen_coords.append((r, c))
            gen_kinds.append("x")
    for r in range(0, size, 2):
        for c in range(1, size, 2):
            gens.append(check(r, c, "z"))
            gen_coords.append((r, c))
            gen_kinds.append("z")

    x = np.zeros(n, dtype=np.int64)
    for c in range(0, size, 2):
        x[qubit_at[(0, c)]] = 1
    xbar = PauliOperator(x, np.zeros(n, dtype=np.int64), d)
    z = np.zeros(n, dtype=np.int64)
    for r in range(0, size, 2):
        z[qubit_at[(r, 0)]] = 1
    zbar = PauliOperator(np.zeros(n, dtype=np.int64), z, d)

    geometry = {
        "kind": "surface",
        "dist": dist,
        "site_coords": site_coords,
        "generator_coords": gen_coords,
        "generator_kinds": gen_kinds,
    }
    return Code(n, d, gens,
                logical_representatives=_logical_classes([(xbar, zbar)], n, d),
                geometry=geometry,
                metadata={"logical_basis_size": 1})


def surface_eta_pairs(code: Code):
    """Qubit pairs lying across each Z-check of a surface code: the two
    horizontal grid neighbours, plus the two vertical ones when both
    exist. The planar analogue of the toric across-plaquette pairing."""
    if code.geometry.get("kind") != "surface":
        raise ValueError("eta pairs are defined from surface geometry")
    size = 2 * code.geometry["dist"] - 1
    qubit_at = {tuple(rc): i for i, rc in enumerate(code.geometry["site_coords"])}
    pairs = []
    for r in range(0, size, 2):
        for c in range(1, size, 2):
            pairs.append((qubit_at[(r, c - 1)], qubit_at[(r, c + 1)]))
            if 0 < r < size - 1:
                pairs.append((qubit_at[(r - 1, c)], qubit_at[(r + 1, c)]))
    return pairs


def build_repetition_code(n: int, d: int = 2) -> Code:
    """Length-n repetition code: stabilisers Z_i Z_{i+1}^{-1}, logical
    Z̄ = Z_0 and X̄ = X on every site."""
    if n < 2:
        raise ValueError(f"repetition code needs n >= 2, got {n}")
    gens = []
    for i in range(n - 1):
        z = np.zeros(n, dtype=np.int64)
        z[i], z[i + 1] = 1, -1
        gens.append(PauliOperator(np.zeros(n, dtype=np.int64), z, d))
    xbar = PauliOperator(np.ones(n, dtype=np.int64), np.zeros(n, dtype=np.int64), d)
    z = np.zeros(n, dtype=np.int64)
    z[0] = 1
    zbar = PauliOperator(np.zeros(n, dtype=np.int64), z, d)
    return Code(n, d, gens,
                logical_representatives=_logical_classes([(xbar, zbar)], n, d),
                geometry={"kind": "repetition",
                          "site_coords": [(0, i) for i in range(n)]},
                metadata={"logical_basis_size": 1})
