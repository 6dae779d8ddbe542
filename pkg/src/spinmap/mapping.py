"""Compilation of (code, noise) pairs into disordered spin models.

Each selected generator S_k contributes one Z_d spin c_k. Every noise
factor is Fourier-transformed over the Pauli group of its region into
couplings K(sigma); an interaction attaches sigma's coupling to the spins
whose generators fail to commute with it, with a disorder phase from the
error restriction. Energies satisfy exp(-beta_N * H_E(0)) = Pr(E), and
summing exp(-beta_N * H) over spin assignments reproduces logical class
probabilities (times d^r for a redundant generator selection).

Factors with forbidden entries have subgroup support; they contribute
couplings over a quotient transversal plus linear constraints over GF(d)
that freeze part of the spin space. Assignments violating a constraint
take infinite energy and drop out of every partition sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _gf
from .codes import Code
from .noise import FactoredNoiseModel
from .pauli import PauliOperator

INFINITE = float("inf")
PARTITION_CAP = 2 ** 24
PRUNE_TOL = 1e-14


def _omega_powers(d):
    if d == 2:
        return np.array([1.0, -1.0])
    return np.exp(2j * np.pi * np.arange(d) / d)


def _region_vectors(r, d):
    """All Pauli exponent vectors on r sites as rows (x | z), ordered by
    canonical pauli index."""
    dd = d * d
    idx = np.arange(dd ** r, dtype=np.int64)
    vecs = np.empty((len(idx), 2 * r), dtype=np.int64)
    rem = idx.copy()
    for site in range(r - 1, -1, -1):
        codes = rem % dd
        rem //= dd
        vecs[:, site] = codes // d
        vecs[:, r + site] = codes % d
    return vecs


def _sym_commutator(sig, tau, d):
    """Commutator exponent matrix e(sigma_i, tau_j) for (x|z) row vectors."""
    r = sig.shape[1] // 2
    return (sig[:, :r] @ tau[:, r:].T - sig[:, r:] @ tau[:, :r].T) % d


def _op_vec(p: PauliOperator, sites):
    sites = np.asarray(sites, dtype=np.int64)
    return np.concatenate([p.x[sites], p.z[sites]]) % p.d


@dataclass
class CouplingTable:
    """Fourier couplings of one factor.

    For full-support factors `transversal` covers the whole region group
    and `constraint_rows` is empty. Forbidden entries shrink the support
    to a subgroup A: couplings then live on a transversal of the quotient
    by A's symplectic annihilator, and `constraint_rows` spans the
    dot-product annihilator of A, so v lies in A iff constraint_rows @ v
    vanishes mod d.
    """

    region_size: int
    d: int
    transversal: np.ndarray
    couplings: np.ndarray
    constraint_rows: np.ndarray
    frozen: bool

    def coupling_of(self, p: PauliOperator):
        v = np.concatenate([p.x, p.z]) % self.d
        hit = np.all(self.transversal == v[None, :], axis=1)
        if not hit.any():
            raise KeyError(f"{p.to_string()} is not a transversal member")
        return self.couplings[np.argmax(hit)]


def factor_couplings(factor, d, beta=1.0) -> CouplingTable:
    """Nishimori couplings of one noise factor at the given beta.

    beta * J(sigma) = |A|^{-1} sum_{tau in A} log phi(tau) w^{e(sigma,
    tau^{-1})} with A the factor's allowed subgroup (the whole region
    group when nothing is forbidden). Raises if the allowed set is not a
    subgroup, since the quotient construction needs one.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    r = len(factor.region)
    vecs = _region_vectors(r, d)
    allowed = ~factor.forbidden
    if not allowed[0]:
        raise ValueError("factor forbids the identity; support cannot "
                         "be a subgroup")
    a_vecs = vecs[allowed]
    log_phi = factor.log_table[allowed]
    full = bool(allowed.all())
    if full:
        transversal = vecs
        w_rows = np.zeros((0, 2 * r), dtype=np.int64)
    else:
        basis = _gf.row_basis(a_vecs, d)
        if d ** len(basis) != len(a_vecs):
            raise ValueError(
                f"factor support has {len(a_vecs)} elements but spans "
                f"{d ** len(basis)}; not a subgroup"
            )
        # symplectic annihilator of A, then a transversal of the quotient
        # from unit vectors on the free columns of its reduced form
        omega_rows = np.concatenate(
            [basis[:, r:], (-basis[:, :r]) % d], axis=1
        )
        perp = _gf.nullspace(omega_rows, d)
        _, pivots = _gf.rref(perp, d) if len(perp) else (perp, [])
        free_cols = [c for c in range(2 * r) if c not in pivots]
        combos = np.stack(
            np.meshgrid(*([np.arange(d)] * len(free_cols)), indexing="ij"),
            axis=-1,
        ).reshape(-1, len(free_cols)) if free_cols else np.zeros(
            (1, 0), dtype=np.int64
        )
        transversal = np.zeros((len(combos), 2 * r), dtype=np.int64)
        for t, col in enumerate(free_cols):
            transversal[:, col] = combos[:, t]
        w_rows = _gf.nullspace(basis, d)
    om = _omega_powers(d)
    e_mat = _sym_commutator(transversal, a_vecs, d)
    k = om[(-e_mat) % d] @ log_phi / len(a_vecs)
    return CouplingTable(r, d, transversal, k / beta, w_rows, not full)


def nishimori_couplings(factor, beta=1.0, d=2):
    """Coupling table J over the full region group of a forbidden-free
    factor, indexed by canonical pauli index.

    Factors with forbidden entries induce frozen constraints instead; use
    factor_couplings for those (build_statmech_model does).
    """
    table = factor_couplings(factor, d, beta)
    if table.frozen:
        raise ValueError(
            "factor has forbidden entries; its couplings live on a "
            "quotient transversal with frozen-sector constraints"
        )
    return table.couplings


@dataclass
class _FactorTerms:
    """Per-factor compiled structure shared across disorder rebinds."""

    factor_index: int
    sites: np.ndarray
    sigmas: np.ndarray            # kept transversal rows (t, 2r)
    couplings: np.ndarray         # J values, (t,)
    spins: list = field(default_factory=list)
    exps: list = field(default_factory=list)
    e0: np.ndarray | None = None  # disorder exponents, set per error
    constraint_rows: np.ndarray | None = None   # W (w, 2r)
    spin_rows: np.ndarray | None = None         # W @ generator vecs (w, m)
    rhs: np.ndarray | None = None               # -W @ vec(E_R), set per error


class StatMechModel:
    """Disordered spin model for one (code, noise, error) triple."""

    def __init__(self, code, noise, error, terms, beta, selection,
                 spin_generators, redundancy):
        self.code = code
        self.noise = noise
        self.error = error
        self.d = code.d
        self.beta = float(beta)
        self.nishimori_beta = noise.nishimori_beta
        self.selection = selection
        self.spin_generators = spin_generators
        self.num_spins = len(spin_generators)
        self.redundancy = redundancy
        self.terms = terms
        self._omega = _omega_powers(self.d)
        self._bind(error)

    # -- disorder binding ------------------------------------------------

    def _bind(self, error):
        self.error = error
        rows, rhs = [], []
        for ft in self.terms:
            ev = _op_vec(error, ft.sites)
            ft.e0 = _sym_commutator(ft.sigmas, ev[None, :], self.d)[:, 0]
            if ft.constraint_rows is not None and len(ft.constraint_rows):
                ft.rhs = (-ft.constraint_rows @ ev) % self.d
                rows.append(ft.spin_rows)
                rhs.append(ft.rhs)
        if rows:
            self.constraint_matrix = np.concatenate(rows, axis=0)
            self.constraint_rhs = np.concatenate(rhs)
            self._solve_constraints()
        else:
            self.constraint_matrix = None
            self.constraint_rhs = None
            self.forbidden = False
            self._particular = np.zeros(self.num_spins, dtype=np.int64)
            self._null_basis = np.eye(self.num_spins, dtype=np.int64)

    def _solve_constraints(self):
        c0 = _gf.solve(self.constraint_matrix, self.constraint_rhs, self.d)
        if c0 is None:
            self.forbidden = True
            self._particular = None
            self._null_basis = None
            return
        self.forbidden = False
        self._particular = c0
        self._null_basis = _gf.nullspace(self.constraint_matrix, self.d)

    def rebind(self, error) -> "StatMechModel":
        """Same compiled structure, new quenched disorder."""
        clone = object.__new__(StatMechModel)
        clone.__dict__.update(self.__dict__)
        clone.terms = [
            _FactorTerms(ft.factor_index, ft.sites, ft.sigmas, ft.couplings,
                         ft.spins, ft.exps, None, ft.constraint_rows,
                         ft.spin_rows)
            for ft in self.terms
        ]
        clone._bind(error)
        return clone

    # -- evaluation ------------------------------------------------------

    def satisfies_constraints(self, c):
        if self.constraint_matrix is None:
            return True
        if self.forbidden:
            return False
        return not np.any(
            (self.constraint_matrix @ c - self.constraint_rhs) % self.d
        )

    def energies(self, cs):
        """Energies of an (m, num_spins) batch of assignments, ignoring
        constraints (callers restrict to the allowed set)."""
        cs = np.asarray(cs, dtype=np.int64)
        total = np.zeros(len(cs), dtype=self._omega.dtype)
        for ft in self.terms:
            for t in range(len(ft.couplings)):
                e = ft.e0[t]
                if len(ft.spins[t]):
                    e = e + cs[:, ft.spins[t]] @ ft.exps[t]
                total = total + ft.couplings[t] * self._omega[e % self.d]
        if np.iscomplexobj(total):
            assert np.abs(total.imag).max(initial=0.0) < 1e-10
            total = total.real
        return -total + self.noise.log_norm / self.nishimori_beta

    def allowed_count(self):
        if self.forbidden:
            return 0
        return self.d ** len(self._null_basis)

    def allowed_configurations(self, cap=PARTITION_CAP):
        """All assignments satisfying the frozen-sector constraints, as an
        (m, num_spins) array: the particular solution plus GF(d) combos
        of the constraint nullspace."""
        if self.forbidden:
            return np.zeros((0, self.num_spins), dtype=np.int64)
        free = len(self._null_basis)
        if self.d ** free > cap:
            raise ValueError(
                f"{self.d}^{free} allowed assignments exceed cap {cap}"
            )
        combos = np.stack(
            np.meshgrid(*([np.arange(self.d)] * free), indexing="ij"),
            axis=-1,
        ).reshape(-1, free) if free else np.zeros((1, 0), dtype=np.int64)
        return (self._particular[None, :]
                + combos @ self._null_basis) % self.d


def build_statmech_model(code: Code, noise: FactoredNoiseModel, error,
                         selection="full", beta=None,
                         prune=PRUNE_TOL) -> StatMechModel:
    """Compile the disordered spin model for one error.

    selection "full" keeps every stored generator (redundant ones
    included; partition sums then carry a d^r degeneracy), "independent"
    keeps a maximal independent subset. beta defaults to the noise
    model's Nishimori inverse temperature. Interactions whose coupling
    magnitude is below `prune` are dropped unless sigma is the identity;
    constant terms stay so partition identities hold absolutely.
    """
    if code.n != noise.n or code.d != noise.d:
        raise ValueError("code and noise disagree on n or d")
    if error.n != code.n or error.d != code.d:
        raise ValueError("error does not match the code")
    d = code.d
    if selection == "full":
        gens = list(code.stabiliser_generators) + list(code.gauge_generators)
    elif selection == "independent":
        gens = code.group_generators()
    else:
        raise ValueError(f"unknown generator selection {selection!r}")
    rows = np.array(
        [np.concatenate([g.x, g.z]) % d for g in gens], dtype=np.int64
    ).reshape(len(gens), 2 * code.n)
    redundancy = len(gens) - _gf.rank(rows, d) if gens else 0

    cache = {}
    terms = []
    for j, f in enumerate(noise.factors):
        key = (len(f.region), f.log_table.tobytes(), f.forbidden.tobytes())
        if key not in cache:
            cache[key] = factor_couplings(f, d, beta=1.0)
        table = cache[key]
        sites = np.asarray(f.region.sites, dtype=np.int64)
        r = len(sites)
        # exponent of sigma against each generator's restriction
        gen_vecs = np.array(
            [_op_vec(g, sites) for g in gens], dtype=np.int64
        ).reshape(len(gens), 2 * r)
        a_mat = _sym_commutator(table.transversal, gen_vecs, d)
        keep, spins, exps = [], [], []
        for t in range(len(table.transversal)):
            is_id = not table.transversal[t].any()
            if not is_id and abs(table.couplings[t]) <= prune:
                continue
            keep.append(t)
            support = np.nonzero(a_mat[t])[0]
            spins.append(support)
            exps.append(a_mat[t, support])
        ft = _FactorTerms(
            j, sites, table.transversal[keep],
            table.couplings[keep] / noise.nishimori_beta,
            spins, exps,
        )
        if table.frozen:
            ft.constraint_rows = table.constraint_rows
            ft.spin_rows = (table.constraint_rows @ gen_vecs.T) % d
        terms.append(ft)
    if beta is None:
        beta = noise.nishimori_beta
    return StatMechModel(code, noise, error, terms, beta, selection,
                         gens, redundancy)


def energy(model: StatMechModel, c):
    """H_E at one assignment; INFINITE when a frozen constraint fails."""
    c = np.asarray(c, dtype=np.int64) % model.d
    if len(c) != model.num_spins:
        raise ValueError(
            f"expected {model.num_spins} spins, got {len(c)}"
        )
    if not model.satisfies_constraints(c):
        return INFINITE
    return float(model.energies(c[None, :])[0])


def _assignment_blocks(model, block=1 << 16):
    basis = model._null_basis
    free = len(basis)
    total = model.d ** free
    for start in range(0, total, block):
        idx = np.arange(start, min(start + block, total), dtype=np.int64)
        digits = np.empty((len(idx), free), dtype=np.int64)
        rem = idx.copy()
        for pos in range(free):
            digits[:, pos] = rem % model.d
            rem //= model.d
        yield (model._particular[None, :] + digits @ basis) % model.d


def log_partition_function(model: StatMechModel, cap=PARTITION_CAP):
    """log Z_E(beta) over the allowed assignment set; -inf when every
    assignment is forbidden."""
    if model.forbidden:
        return -np.inf
    total = model.allowed_count()
    if total > cap:
        raise ValueError(f"{total} assignments exceed cap {cap}")
    chunk_logs = [
        logsumexp(-model.beta * model.energies(cs))
        for cs in _assignment_blocks(model)
    ]
    return float(logsumexp(chunk_logs))


def partition_function_exact(model: StatMechModel, cap=PARTITION_CAP):
    return float(np.exp(log_partition_function(model, cap)))


def free_energy(model: StatMechModel, cap=PARTITION_CAP):
    """F_E(beta) = -(1/beta) log Z_E(beta); +inf for a forbidden class."""
    lz = log_partition_function(model, cap)
    if lz == -np.inf:
        return INFINITE
    return -lz / model.beta


def delta_m(code: Code, noise: FactoredNoiseModel, error, m, beta=None,
            cap=PARTITION_CAP):
    """Free-energy cost F_{E L_m} - F_E of applying logical class m."""
    base = build_statmech_model(code, noise, error, beta=beta)
    logical = code.logical_representatives[m]
    shifted = base.rebind(error * logical)
    return free_energy(shifted, cap) - free_energy(base, cap)
