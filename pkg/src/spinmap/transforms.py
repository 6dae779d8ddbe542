"""Reductions that bring richer error-correction settings back to a
plain code with purely spatial factored noise.

Three constructions live here. with_noisy_measurements adds an ancilla
per check so unreliable syndrome readout becomes part of the error
model. build_history_code and circuit_noise_model lay measurement
rounds out as extra layers of sites, so a faulty extraction schedule
becomes a subsystem code whose noise factors couple adjacent layers.
build_enlarged_code puts overlapping independent error processes on
separate lattice copies tied together by inter-copy gauge generators,
so their convolution becomes an ordinary product model.

Cliffords are phase-free throughout: a gate is its symplectic action on
stacked (x | z) exponent vectors, which is all the downstream machinery
ever reads. Probability tables follow the canonical Pauli-index order
(first region site most significant, per-site code x*d + z), and every
factor built here lists its region sites in ascending order.

Layer convention: a schedule on a base code with n sites and a ancilla
slots has layer width w = n + a; sites 0..n-1 of each layer are the
code sites, the rest are ancillas. Round r (0-based) occupies history
sites r*w .. (r+1)*w - 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _gf
from .codes import Code
from .noise import Factor, FactoredNoiseModel, factor_from_probabilities
from .pauli import PauliOperator, Region

__all__ = [
    "CliffordAction",
    "Measurement",
    "MeasurementSchedule",
    "bitflip_site_table",
    "build_enlarged_code",
    "build_history_code",
    "circuit_noise_model",
    "cnot_action",
    "controlled_pauli_action",
    "depolarising_site_table",
    "fourier_action",
    "ideal_round",
    "identity_action",
    "manifest_error",
    "measurement_circuit",
    "product_table",
    "propagate_error",
    "pushed_table",
    "simulate_histories",
    "with_noisy_measurements",
]


# -- symplectic Clifford actions -----------------------------------------


def _symplectic_form(m, d):
    j = np.zeros((2 * m, 2 * m), dtype=np.int64)
    j[:m, m:] = np.eye(m, dtype=np.int64)
    j[m:, :m] = (-np.eye(m, dtype=np.int64)) % d
    return j


@dataclass(frozen=True)
class CliffordAction:
    """A phase-free Clifford on an ordered site tuple.

    matrix is the invertible map that conjugation applies to stacked
    (x | z) exponent vectors over Z_d, in the basis given by the order
    of `sites`. The constructor rejects matrices that do not preserve
    the commutator form, which catches most transcription mistakes in
    hand-built gates.
    """

    sites: tuple
    matrix: np.ndarray
    d: int = 2

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in Clifford support {sites}")
        mat = np.asarray(self.matrix, dtype=np.int64) % self.d
        object.__setattr__(self, "matrix", mat)
        m = len(sites)
        if mat.shape != (2 * m, 2 * m):
            raise ValueError(
                f"matrix shape {mat.shape} does not match {m} sites"
            )
        j = _symplectic_form(m, self.d)
        if np.any((mat.T @ j @ mat) % self.d != j):
            raise ValueError("matrix does not preserve the commutator form")

    def embed(self, sites):
        """The same action on a superset of sites (identity elsewhere).

        Also handles pure reordering; `sites` fixes the new basis order.
        """
        new = tuple(int(s) for s in sites)
        if not set(new) >= set(self.sites):
            raise ValueError("embedding sites must contain the action's sites")
        m_new = len(new)
        pos = {s: i for i, s in enumerate(new)}
        out = np.eye(2 * m_new, dtype=np.int64)
        rows = np.array(
            [pos[s] for s in self.sites]
            + [m_new + pos[s] for s in self.sites]
        )
        out[np.ix_(rows, rows)] = self.matrix
        return CliffordAction(new, out, self.d)

    def then(self, other: "CliffordAction") -> "CliffordAction":
        """Composite action: self first, then other."""
        if self.d != other.d:
            raise ValueError("dimension mismatch in Clifford composition")
        union = tuple(sorted(set(self.sites) | set(other.sites)))
        a = self.embed(union)
        b = other.embed(union)
        return CliffordAction(union, (b.matrix @ a.matrix) % self.d, self.d)


def identity_action(sites, d=2) -> CliffordAction:
    sites = tuple(sites)
    return CliffordAction(sites, np.eye(2 * len(sites), dtype=np.int64), d)


def fourier_action(site, d=2) -> CliffordAction:
    """Single-site Fourier gate: X -> Z and Z -> X^{-1} (Hadamard at
    d = 2)."""
    return CliffordAction((site,), np.array([[0, d - 1], [1, 0]]), d)


def controlled_pauli_action(control, targets, p: PauliOperator) -> CliffordAction:
    """Controlled-P with an X-basis control: X_c -> X_c P, Z_c fixed,
    and a target Pauli Q picks up Z_c^e with e the commutator exponent
    of Q with P.

    p acts on len(targets) sites and is applied to the listed target
    sites in order.
    """
    targets = tuple(int(t) for t in targets)
    if p.n != len(targets):
        raise ValueError(
            f"controlled Pauli acts on {p.n} sites, got {len(targets)} targets"
        )
    d = p.d
    m = 1 + len(targets)
    mat = np.eye(2 * m, dtype=np.int64)
    # column of X_control: picks up the full target Pauli
    mat[1:m, 0] = p.x
    mat[m + 1:, 0] = p.z
    # columns of target X_j and Z_j: pick up Z_control^{[[Q, P]]}
    mat[m, 1:m] = p.z % d
    mat[m, m + 1:] = (-p.x) % d
    return CliffordAction((int(control),) + targets, mat, d)


def cnot_action(control, target, d=2) -> CliffordAction:
    """Controlled-X (the SUM gate for d > 2): X_c -> X_c X_t,
    Z_t -> Z_c^{-1} Z_t."""
    return controlled_pauli_action(
        control, (target,), PauliOperator([1], [0], d)
    )


def propagate_error(u: CliffordAction, p: PauliOperator) -> PauliOperator:
    """Conjugation U P U^{-1} mod phase, via the symplectic action.

    p must be supported inside u's sites; anything outside is a
    mismatch, not silently ignored.
    """
    if p.d != u.d:
        raise ValueError(f"dimension mismatch: d={p.d} vs d={u.d}")
    sites = np.asarray(u.sites, dtype=np.int64)
    if sites.size and sites.max() >= p.n:
        raise ValueError(
            f"Clifford site {sites.max()} out of range for n={p.n}"
        )
    outside = np.ones(p.n, dtype=bool)
    outside[sites] = False
    if np.any(p.x[outside]) or np.any(p.z[outside]):
        raise ValueError("error has support outside the Clifford's sites")
    v = np.concatenate([p.x[sites], p.z[sites]])
    w = (u.matrix @ v) % u.d
    m = len(u.sites)
    x = np.zeros(p.n, dtype=np.int64)
    z = np.zeros(p.n, dtype=np.int64)
    x[sites] = w[:m]
    z[sites] = w[m:]
    return PauliOperator(x, z, p.d, allow_composite=True)


# -- probability-table utilities -----------------------------------------


def _region_patterns(r, d):
    """All (d^2)^r exponent patterns of an r-site region in table order
    (first site most significant), as an int64 array of shape (m, r, 2)."""
    m = (d * d) ** r
    out = np.zeros((m, r, 2), dtype=np.int64)
    rem = np.arange(m)
    for col in range(r - 1, -1, -1):
        code = rem % (d * d)
        out[:, col, 0] = code // d
        out[:, col, 1] = code % d
        rem = rem // (d * d)
    return out


def _pattern_indices(patterns, d):
    """Table indices of an (m, r, 2) pattern array."""
    idx = np.zeros(len(patterns), dtype=np.int64)
    for col in range(patterns.shape[1]):
        idx = idx * (d * d) + patterns[:, col, 0] * d + patterns[:, col, 1]
    return idx


def product_table(site_tables) -> np.ndarray:
    """Joint table of independent per-site tables, first site most
    significant (a plain Kronecker chain)."""
    out = np.asarray(site_tables[0], dtype=np.float64)
    for t in site_tables[1:]:
        out = np.kron(out, np.asarray(t, dtype=np.float64))
    return out


def depolarising_site_table(p, d=2) -> np.ndarray:
    """Single-site table: identity with weight 1-p, the rest uniform."""
    t = np.full(d * d, p / (d * d - 1))
    t[0] = 1.0 - p
    return t


def bitflip_site_table(q, d=2) -> np.ndarray:
    """Single-site table: X^a with weight q/(d-1) for a != 0, no Z
    component (a classical flip)."""
    t = np.zeros(d * d)
    t[0] = 1.0 - q
    for a in range(1, d):
        t[a * d] = q / (d - 1)
    return t


def pushed_table(u: CliffordAction, table) -> np.ndarray:
    """Distribution of U e U^{-1} when e follows `table`.

    Both tables index the Paulis of u's sites in ascending site order;
    pushing a table through the extraction circuit turns noise injected
    before the circuit into the effective fresh error after it.
    """
    table = np.asarray(table, dtype=np.float64)
    d = u.d
    m = len(u.sites)
    if len(table) != (d * d) ** m:
        raise ValueError(
            f"table has {len(table)} entries, expected {(d * d) ** m}"
        )
    us = u.embed(tuple(sorted(u.sites)))
    pats = _region_patterns(m, d)
    v = np.concatenate([pats[:, :, 0], pats[:, :, 1]], axis=1)
    w = (v @ us.matrix.T) % d
    out_pats = np.stack([w[:, :m], w[:, m:]], axis=-1)
    out = np.zeros_like(table)
    out[_pattern_indices(out_pats, d)] = table
    return out


def _convolve_push(p_table, u: CliffordAction, r_sites, c_sites, d):
    """Joint factor table over (C sites at the earlier layer, R sites at
    the later layer), both blocks ascending, C block most significant.

    Entry value is p_table at the index of e_R * (U e_C^{-1} U^{-1}):
    the effective fresh error once the propagated image of the earlier
    error is divided out.
    """
    r_sorted = tuple(sorted(r_sites))
    c_sorted = tuple(sorted(c_sites))
    nr, nc = len(r_sorted), len(c_sorted)
    mr, mc = (d * d) ** nr, (d * d) ** nc
    p_table = np.asarray(p_table, dtype=np.float64)
    if len(p_table) != mr:
        raise ValueError(
            f"table has {len(p_table)} entries, expected {mr}"
        )
    if nc == 0:
        return p_table.copy()
    us = u.embed(r_sorted)
    pos_c = np.array([r_sorted.index(c) for c in c_sorted])
    c_pats = _region_patterns(nc, d)
    r_pats = _region_patterns(nr, d)
    out = np.zeros(mc * mr)
    for ic in range(mc):
        v = np.zeros(2 * nr, dtype=np.int64)
        v[pos_c] = (-c_pats[ic, :, 0]) % d
        v[nr + pos_c] = (-c_pats[ic, :, 1]) % d
        w = (us.matrix @ v) % d
        eps = np.stack(
            [(r_pats[:, :, 0] + w[None, :nr]) % d,
             (r_pats[:, :, 1] + w[None, nr:]) % d], axis=-1)
        out[ic * mr:(ic + 1) * mr] = p_table[_pattern_indices(eps, d)]
    return out


def _point_mass(r, d) -> np.ndarray:
    t = np.zeros((d * d) ** r)
    t[0] = 1.0
    return t


# -- measurement schedules -----------------------------------------------


@dataclass(frozen=True)
class Measurement:
    """One measured Pauli in one round.

    pauli: the operator actually read out, on the full layer width.
    clifford: the extraction circuit; its sites R are everything the
        measurement touches. Code sites of R (indices below the base
        code size) carry their error over from the previous layer;
        ancilla sites of R are fresh each round.
    table: distribution of the effective fresh error on R, indexed over
        R in ascending site order. None means an ideal step (point mass
        on the identity).
    """

    pauli: PauliOperator
    clifford: CliffordAction
    table: np.ndarray | None = None


class MeasurementSchedule:
    """An ordered list of measurement rounds over a base code.

    Rounds before the last must have pairwise disjoint supports; the
    last round must be an ideal readout of the stabiliser generators in
    their stored order, since correction is only well-defined against a
    trusted final syndrome. Both conditions are checked here rather
    than downstream.
    """

    def __init__(self, code: Code, rounds, n_ancilla=0):
        self.code = code
        self.n_ancilla = int(n_ancilla)
        self.rounds = tuple(tuple(r) for r in rounds)
        if self.n_ancilla < 0:
            raise ValueError("ancilla slot count must be non-negative")
        if not self.rounds:
            raise ValueError("schedule must contain at least one round")
        self._validate()

    @property
    def n_layer(self):
        return self.code.n + self.n_ancilla

    @property
    def n_rounds(self):
        return len(self.rounds)

    @property
    def n_history(self):
        return self.n_rounds * self.n_layer

    def site(self, i, r):
        """History-code index of layer site i in round r (0-based)."""
        return r * self.n_layer + i

    def code_region(self, m: Measurement):
        """The sites of m's circuit that belong to the base code."""
        return tuple(s for s in m.clifford.sites if s < self.code.n)

    def _validate(self):
        w, d = self.n_layer, self.code.d
        for r, rnd in enumerate(self.rounds):
            for m in rnd:
                if m.pauli.n != w or m.pauli.d != d:
                    raise ValueError(
                        f"round {r}: measured Pauli must act on the "
                        f"{w}-site layer at d={d}"
                    )
                if m.clifford.d != d:
                    raise ValueError(f"round {r}: circuit dimension mismatch")
                sites = set(m.clifford.sites)
                if sites and max(sites) >= w:
                    raise ValueError(
                        f"round {r}: circuit site beyond the layer width"
                    )
                supp = {i for i in range(w)
                        if m.pauli.x[i] or m.pauli.z[i]}
                if not supp <= sites:
                    raise ValueError(
                        f"round {r}: measured Pauli has support outside "
                        f"its circuit"
                    )
                if m.table is not None:
                    need = (d * d) ** len(m.clifford.sites)
                    if len(m.table) != need:
                        raise ValueError(
                            f"round {r}: error table has {len(m.table)} "
                            f"entries, expected {need}"
                        )
        for r, rnd in enumerate(self.rounds[:-1]):
            seen = set()
            for m in rnd:
                overlap = seen & set(m.clifford.sites)
                if overlap:
                    raise ValueError(
                        f"round {r}: measurements within a round must have "
                        f"disjoint support (shared sites {sorted(overlap)})"
                    )
                seen |= set(m.clifford.sites)
        final = self.rounds[-1]
        gens = self.code.stabiliser_generators
        if len(final) != len(gens):
            raise ValueError(
                "final round must read out every stabiliser generator"
            )
        for m, s in zip(final, gens):
            want = s.embed(self.n_layer, range(self.code.n))
            if m.pauli != want:
                raise ValueError(
                    "final round must measure the stabiliser generators "
                    "ideally, in their stored order"
                )
            if m.table is not None:
                raise ValueError("final-round measurements must be ideal")
            us = m.clifford
            if np.any(us.matrix
                      != np.eye(2 * len(us.sites), dtype=np.int64)):
                raise ValueError(
                    "final-round measurements must be ideal (no circuit)"
                )


def ideal_round(code: Code, n_ancilla=0):
    """The trusted final round: each stabiliser generator read out
    directly, no circuit, no error table."""
    w = code.n + n_ancilla
    out = []
    for s in code.stabiliser_generators:
        supp = tuple(int(i) for i in np.flatnonzero((s.x != 0) | (s.z != 0)))
        out.append(Measurement(
            pauli=s.embed(w, range(code.n)),
            clifford=identity_action(supp, code.d),
        ))
    return tuple(out)


def measurement_circuit(stabiliser: PauliOperator, ancilla,
                        layer_width) -> Measurement:
    """Standard one-ancilla extraction: Fourier on the ancilla, then a
    controlled application of the stabiliser, then an X readout.

    Returns a Measurement with no error table; attach one (e.g. a
    pushed-through depolarising product) to model a faulty circuit.
    """
    d = stabiliser.d
    supp = tuple(int(i)
                 for i in np.flatnonzero((stabiliser.x != 0)
                                         | (stabiliser.z != 0)))
    frag = stabiliser.restrict(supp)
    u = fourier_action(ancilla, d).then(
        controlled_pauli_action(ancilla, supp, frag))
    measured = PauliOperator.single_site(layer_width, ancilla, 1, 0, d)
    return Measurement(pauli=measured, clifford=u)


# -- the history code ----------------------------------------------------


def _layer_embed(p: PauliOperator, schedule: MeasurementSchedule, r):
    return p.embed(schedule.n_history,
                   range(r * schedule.n_layer, (r + 1) * schedule.n_layer))


def _local_centraliser(p: PauliOperator):
    """Generators of the centraliser of p within the Pauli group on
    p's own support, as operators on p.n sites."""
    supp = np.flatnonzero((p.x != 0) | (p.z != 0))
    m = len(supp)
    if m == 0:
        return []
    row = np.concatenate([(-p.z[supp]) % p.d, p.x[supp]])[None, :]
    basis = _gf.nullspace(row, p.d)
    out = []
    for v in basis:
        x = np.zeros(p.n, dtype=np.int64)
        z = np.zeros(p.n, dtype=np.int64)
        x[supp] = v[:m]
        z[supp] = v[m:]
        out.append(PauliOperator(x, z, p.d, allow_composite=True))
    return out


def build_history_code(code: Code, schedule: MeasurementSchedule) -> Code:
    """Subsystem code whose sites are (layer site, round) pairs.

    The checks are the measured operators of every round, embedded on
    their layer, so the syndrome is the full measurement record in time
    order. Everything the record cannot see is gauge: per measurement
    of a non-final round, the centraliser of the measured operator on
    its own support; full local Paulis on any earlier-layer site no
    measurement reads; and on the final layer the readout operators
    themselves plus local Paulis on the unused ancilla slots. Logical
    representatives act on the final layer only, because only the last
    accumulated error decides whether a logical fault occurred.
    """
    if schedule.code is not code:
        raise ValueError("schedule was built for a different code")
    w, t_total = schedule.n_layer, schedule.n_rounds
    stab = []
    for r, rnd in enumerate(schedule.rounds):
        for m in rnd:
            stab.append(_layer_embed(m.pauli, schedule, r))
    gauge = []
    for r, rnd in enumerate(schedule.rounds):
        last = r == t_total - 1
        measured = set()
        for m in rnd:
            measured |= {i for i in range(w)
                         if m.pauli.x[i] or m.pauli.z[i]}
            if not last:
                for g in _local_centraliser(m.pauli):
                    gauge.append(_layer_embed(g, schedule, r))
        # sites the round's record never reads carry unobservable
        # errors; on the final layer only ancilla slots qualify, since
        # code-site content there is logical, not gauge
        free = [i for i in range(w) if i not in measured]
        if last:
            free = [i for i in free if i >= code.n]
        for i in free:
            for xe, ze in ((1, 0), (0, 1)):
                gauge.append(_layer_embed(
                    PauliOperator.single_site(w, i, xe, ze, code.d),
                    schedule, r))
    logicals = [_layer_embed(rep.embed(w, range(code.n)),
                             schedule, t_total - 1)
                for rep in code.logical_representatives]
    return Code(
        schedule.n_history, code.d, stab, gauge_generators=gauge,
        logical_representatives=logicals,
        metadata={"kind": "history", "rounds": t_total, "layer_width": w,
                  "base_n": code.n, "base": code.metadata.get("kind")},
    )


def circuit_noise_model(schedule: MeasurementSchedule) -> FactoredNoiseModel:
    """Purely spatial factored noise on the history code.

    Each measurement contributes one factor joining its circuit region
    at its own layer to the touched code sites one layer down: the
    factor weighs the effective fresh error, the accumulated error
    divided by the propagated image of the previous layer's. Sites no
    circuit touches in a round get a deterministic carry-over factor,
    which also pins every layer-one idle site to the identity, so the
    product is a normalised distribution over error histories.
    """
    w, d = schedule.n_layer, schedule.code.d
    factors = []
    for r, rnd in enumerate(schedule.rounds):
        covered = set()
        for m in rnd:
            r_sites = tuple(sorted(m.clifford.sites))
            covered |= set(r_sites)
            table = (np.asarray(m.table, dtype=np.float64)
                     if m.table is not None
                     else _point_mass(len(r_sites), d))
            if r == 0:
                region = tuple(schedule.site(s, 0) for s in r_sites)
                factors.append(factor_from_probabilities(region, table, d))
                continue
            c_sites = schedule.code_region(m)
            joint = _convolve_push(table, m.clifford, r_sites, c_sites, d)
            region = (tuple(schedule.site(c, r - 1)
                            for c in sorted(c_sites))
                      + tuple(schedule.site(s, r) for s in r_sites))
            factors.append(factor_from_probabilities(region, joint, d))
        for s in range(w):
            if s in covered:
                continue
            if r == 0:
                factors.append(factor_from_probabilities(
                    (schedule.site(s, 0),), _point_mass(1, d), d))
            else:
                carry = np.eye(d * d).reshape(-1)
                factors.append(factor_from_probabilities(
                    (schedule.site(s, r - 1), schedule.site(s, r)),
                    carry, d))
    return FactoredNoiseModel(
        schedule.n_history, d, factors, mode="normalised",
        metadata={"kind": "circuit-history",
                  "rounds": schedule.n_rounds, "layer_width": w},
    )


def simulate_histories(schedule: MeasurementSchedule, rng, count):
    """Direct forward simulation of the faulty schedule.

    Draws each measurement's effective fresh error from its table,
    propagates the accumulated error through each round's circuits
    (resetting ancilla sites a circuit is about to reuse), and records
    the per-round snapshots plus every measured commutator exponent.

    Returns (patterns, outcomes): patterns is (count, n_history, 2)
    with the error history of each shot, outcomes is (count, n_checks)
    in the history code's check order. This path shares no code with
    circuit_noise_model, so agreement between the two is evidence, not
    bookkeeping.
    """
    w, d = schedule.n_layer, schedule.code.d
    e = np.zeros((count, w, 2), dtype=np.int64)
    layers = []
    outs = []
    for rnd in schedule.rounds:
        for m in rnd:
            fresh = [s for s in m.clifford.sites if s >= schedule.code.n]
            e[:, fresh, :] = 0
        for m in rnd:
            sites = np.asarray(m.clifford.sites, dtype=np.int64)
            if sites.size == 0:
                continue
            v = np.concatenate([e[:, sites, 0], e[:, sites, 1]], axis=1)
            u = (v @ m.clifford.matrix.T) % d
            mm = len(sites)
            e[:, sites, 0] = u[:, :mm]
            e[:, sites, 1] = u[:, mm:]
        for m in rnd:
            if m.table is None:
                continue
            r_sorted = np.asarray(sorted(m.clifford.sites), dtype=np.int64)
            probs = np.asarray(m.table, dtype=np.float64)
            draw = rng.choice(len(probs), size=count, p=probs / probs.sum())
            pats = _region_patterns(len(r_sorted), d)[draw]
            e[:, r_sorted, :] = (e[:, r_sorted, :] + pats) % d
        for m in rnd:
            outs.append((e[:, :, 1] @ m.pauli.x
                         - e[:, :, 0] @ m.pauli.z) % d)
        layers.append(e.copy())
    patterns = np.concatenate(layers, axis=1).astype(np.uint8)
    return patterns, np.stack(outs, axis=1)


# -- ancilla extension for unreliable readout ----------------------------


def with_noisy_measurements(code: Code, noise: FactoredNoiseModel, q):
    """Extend a code and its noise with one readout ancilla per check.

    Check k becomes S_k Z_{a_k}; an X flip on ancilla a_k then toggles
    syndrome bit k exactly like a misread measurement, and happens with
    probability q, independently per check. The gauge grows by the
    invisible ancilla phases Z_{a_k} and, per independent check, by a
    data operator that trips only that check paired with the matching
    set of readout flips: data error plus consistent misreads is
    indistinguishable from nothing, so it must not split classes.
    """
    if not 0 <= q < 1:
        raise ValueError(f"ancilla flip rate must be in [0, 1), got {q}")
    if noise.n != code.n or noise.d != code.d:
        raise ValueError("noise model does not match the code")
    n, d = code.n, code.d
    m = len(code.stabiliser_generators)
    n2 = n + m
    stab = []
    for k, s in enumerate(code.stabiliser_generators):
        ext = s.embed(n2, range(n))
        z = ext.z.copy()
        z[n + k] = 1
        stab.append(PauliOperator(ext.x, z, d, allow_composite=True))
    gauge = [g.embed(n2, range(n)) for g in code.gauge_generators]
    for k in range(m):
        gauge.append(PauliOperator.single_site(n2, n + k, 0, 1, d))
    rows = np.zeros((m, 2 * n), dtype=np.int64)
    for k, s in enumerate(code.stabiliser_generators):
        rows[k, :n] = (-s.z) % d
        rows[k, n:] = s.x
    indep = code.independent_stabiliser_indices()
    for k in indep:
        rhs = np.zeros(len(indep), dtype=np.int64)
        rhs[indep.index(k)] = 1
        v = _gf.solve(rows[indep], rhs, d)
        x = np.zeros(n2, dtype=np.int64)
        z = np.zeros(n2, dtype=np.int64)
        x[:n] = v[:n]
        z[:n] = v[n:]
        # pair the data operator with a flip on every check it trips,
        # redundant checks included, so the combination stays invisible
        x[n:] = (rows @ v) % d
        gauge.append(PauliOperator(x, z, d, allow_composite=True))
    logicals = [rep.embed(n2, range(n))
                for rep in code.logical_representatives]
    out_code = Code(
        n2, d, stab, gauge_generators=gauge,
        logical_representatives=logicals,
        metadata={"kind": "noisy-readout", "base_n": n,
                  "ancilla_flip": float(q),
                  "base": code.metadata.get("kind")},
    )
    factors = list(noise.factors)
    for k in range(m):
        factors.append(factor_from_probabilities(
            (n + k,), bitflip_site_table(q, d), d))
    out_noise = FactoredNoiseModel(
        n2, d, factors, mode=noise.mode, log_norm=noise.log_norm,
        nishimori_beta=noise.nishimori_beta,
        metadata=dict(noise.metadata, ancilla_flip=float(q)),
    )
    return out_code, out_noise


# -- lattice copies for overlapping independent processes ----------------


def _as_factor(proc, d):
    if hasattr(proc, "region") and hasattr(proc, "log_table"):
        return proc
    region, probs = proc
    return factor_from_probabilities(region, probs, d)


def build_enlarged_code(code: Code, processes, max_copies=None):
    """Spread overlapping independent error processes over lattice
    copies so each acts on its own region.

    processes are factors (or (region, table) pairs) whose regions may
    overlap; the overall error is the product of one draw from each.
    Copies are assigned by greedy colouring of the region-intersection
    graph in the given order; any valid assignment is correct, smaller
    ones are just cheaper. Returns (code, noise): the code gains
    inter-copy difference generators X_i^(c) X_i^-(c+1) and
    Z_i^(c) Z_i^-(c+1) as gauge, so one overall error's many
    manifestations form a single gauge orbit. Checks act diagonally on
    all copies, which commutes with those differences and reads the
    true syndrome of the overall error; the gauge list also carries
    copy-0 embeddings of the checks (and of any base gauge), because
    those shift the overall error by exactly one factor, whereas the
    diagonal form shifts it by the copy-count power and so cannot
    stand in for stabiliser equivalence when that power is trivial.
    The noise keeps each process table verbatim on its copy and pins
    every unused enlarged site to the identity.
    """
    d, n = code.d, code.n
    procs = [_as_factor(p, d) for p in processes]
    regions = [set(f.region.sites) for f in procs]
    for reg in regions:
        if reg and max(reg) >= n:
            raise ValueError("process region out of range for the code")
    colour = []
    for j, reg in enumerate(regions):
        used = {colour[i] for i in range(j) if regions[i] & reg}
        c = 0
        while c in used:
            c += 1
        if max_copies is not None and c >= max_copies:
            raise ValueError(
                f"copy assignment needs more than {max_copies} copies"
            )
        colour.append(c)
    copies = max(colour) + 1 if colour else 1
    n2 = copies * n

    def tiled(p):
        return PauliOperator(np.tile(p.x, copies), np.tile(p.z, copies),
                             d, allow_composite=True)

    stab = [tiled(s) for s in code.stabiliser_generators]
    gauge = []
    for c in range(copies - 1):
        for i in range(n):
            for xe, ze in ((1, 0), (0, 1)):
                x = np.zeros(n2, dtype=np.int64)
                z = np.zeros(n2, dtype=np.int64)
                x[c * n + i] = xe
                z[c * n + i] = ze
                x[(c + 1) * n + i] = (-xe) % d
                z[(c + 1) * n + i] = (-ze) % d
                gauge.append(PauliOperator(x, z, d, allow_composite=True))
    n_intercopy = len(gauge)
    for s in code.stabiliser_generators:
        gauge.append(s.embed(n2, range(n)))
    for g in code.gauge_generators:
        gauge.append(g.embed(n2, range(n)))
    logicals = [rep.embed(n2, range(n))
                for rep in code.logical_representatives]
    site_copy = np.zeros(n, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    for j, reg in enumerate(regions):
        for s in reg:
            if not seen[s]:
                seen[s] = True
                site_copy[s] = colour[j]
    out_code = Code(
        n2, d, stab, gauge_generators=gauge,
        logical_representatives=logicals,
        metadata={"kind": "enlarged", "copies": copies, "base_n": n,
                  "copy_of_factor": tuple(colour),
                  "site_copy": tuple(int(c) for c in site_copy),
                  "n_intercopy_gauge": n_intercopy,
                  "base": code.metadata.get("kind")},
    )
    factors = []
    covered = set()
    for f, c in zip(procs, colour):
        region = tuple(c * n + s for s in f.region.sites)
        covered |= set(region)
        factors.append(Factor(Region(region), f.log_table.copy(),
                              f.forbidden.copy()))
    for s in range(n2):
        if s not in covered:
            factors.append(factor_from_probabilities(
                (s,), _point_mass(1, d), d))
    out_noise = FactoredNoiseModel(
        n2, d, factors, mode="normalised",
        metadata={"kind": "enlarged", "copies": copies},
    )
    return out_code, out_noise


def manifest_error(enlarged: Code, e: PauliOperator) -> PauliOperator:
    """One manifestation of a base-code error on the enlarged code.

    Each site's content lands on the first copy whose assigned regions
    cover it (copy 0 for sites no process touches; any content there is
    then forbidden under the enlarged noise, faithfully so)."""
    meta = enlarged.metadata
    if meta.get("kind") != "enlarged":
        raise ValueError("not an enlarged code")
    n, copies = meta["base_n"], meta["copies"]
    if e.n != n or e.d != enlarged.d:
        raise ValueError("error does not match the base code")
    site_copy = meta["site_copy"]
    x = np.zeros(copies * n, dtype=np.int64)
    z = np.zeros(copies * n, dtype=np.int64)
    for i in range(n):
        x[site_copy[i] * n + i] = e.x[i]
        z[site_copy[i] * n + i] = e.z[i]
    return PauliOperator(x, z, e.d, allow_composite=True)
