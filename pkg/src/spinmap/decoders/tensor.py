"""Partition functions as tensor networks, and the approximate decoder.

The partition sum of a compiled spin model factorises into a network with
one copy-tensor (delta node) per spin and one Gibbs-weight node per
interaction, joined by a dimension-d bond wherever an interaction touches
a spin. Frozen-sector constraints fold into the interaction weights as
zero/one indicators, so contracting the network reproduces the exact
partition function.

Two contraction strategies are provided. `contract_exact` eliminates
bonds pairwise and works on any enumerable network. `contract_mps`
sweeps a boundary matrix product state across the layout rows derived
from the code geometry, truncating to a bond cap after each absorption;
bonds that would cross inside a row are routed with exact swap moves and
truncated like any other bond. Layouts whose bonds span non-adjacent
rows (the torus, or models without coordinates) carry no row structure
and raise UnsupportedLayoutError on the sweep path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..codes import Code, Syndrome
from ..mapping import StatMechModel, build_statmech_model
from .exact import DecodeResult, _argmax_label, class_representatives

SVD_FLOOR = 1e-14
EXACT_CAP = 2 ** 26


class UnsupportedLayoutError(ValueError):
    """The network lacks a row layout the boundary sweep can follow."""


@dataclass
class Node:
    """One tensor: axis k of `tensor` carries bond id `bonds[k]`."""

    tensor: np.ndarray
    bonds: tuple
    tag: str
    pos: tuple | None = None


@dataclass
class TensorNetwork:
    """Closed network whose full contraction is a partition function.

    Every bond id appears on exactly two nodes. `rows` lists node indices
    grouped into sweep rows (column order within a row) when the layout
    admits a row-by-row boundary contraction, else None. The contraction
    value is exp(log_scale) times the contracted node product. `chi`
    records the bond cap a decoder used, if any.
    """

    nodes: list
    bonds: list
    d: int
    rows: list | None
    log_scale: float
    chi: int | None = None


def _delta_tensor(d, degree):
    if degree == 0:
        return np.array(float(d))
    t = np.zeros((d,) * degree)
    t[tuple(np.arange(d) for _ in range(degree))] = 1.0
    return t


def _factor_support(ft, num_spins):
    touched = set()
    for sp in ft.spins:
        touched.update(int(i) for i in sp)
    if ft.spin_rows is not None and len(ft.spin_rows):
        touched.update(int(i) for i in np.nonzero(ft.spin_rows.any(axis=0))[0])
    return sorted(touched)


def _factor_tensor(ft, support, d, beta, omega):
    """Gibbs weight of one interaction over its support assignments,
    constraint indicators included."""
    m = len(support)
    axis = {s: k for k, s in enumerate(support)}
    grid = np.stack(
        np.meshgrid(*([np.arange(d)] * m), indexing="ij"), axis=-1
    ).reshape(-1, m) if m else np.zeros((1, 0), dtype=np.int64)
    weight = np.ones(len(grid))
    for t in range(len(ft.couplings)):
        e = np.full(len(grid), ft.e0[t], dtype=np.int64)
        if len(ft.spins[t]):
            cols = [axis[int(i)] for i in ft.spins[t]]
            e = e + grid[:, cols] @ np.asarray(ft.exps[t], dtype=np.int64)
        weight *= np.exp(beta * (ft.couplings[t] * omega[e % d]).real)
    if ft.constraint_rows is not None and len(ft.constraint_rows):
        local = ft.spin_rows[:, support]
        ok = ((grid @ local.T - ft.rhs) % d == 0).all(axis=1)
        weight = np.where(ok, weight, 0.0)
    return weight.reshape((d,) * m) if m else np.array(float(weight[0]))


def _node_positions(model: StatMechModel):
    geo = model.code.geometry
    if (model.selection != "full" or "generator_coords" not in geo
            or len(geo["generator_coords"]) != model.num_spins):
        return None, None
    sites = [tuple(float(v) for v in rc) for rc in geo["site_coords"]]
    gens = [tuple(float(v) for v in rc) for rc in geo["generator_coords"]]
    return sites, gens


def _row_layout(nodes, bonds):
    """Rows for the boundary sweep: every bond must join the same or
    adjacent occupied rows, directly or after folding odd integer rows
    onto the even row above. None when neither assignment works."""
    bonded = sorted({v for pair in bonds for v in pair})
    if any(nodes[v].pos is None for v in bonded):
        return None
    raw = {v: nodes[v].pos[0] for v in bonded}
    integral = all(float(r).is_integer() for r in raw.values())
    for fold in (False, True):
        if fold and not integral:
            break
        key = {v: (int(r) - int(r) % 2 if fold else r)
               for v, r in raw.items()}
        index = {r: k for k, r in enumerate(sorted(set(key.values())))}
        if any(abs(index[key[a]] - index[key[b]]) > 1 for a, b in bonds):
            continue
        rows = {}
        for v in bonded:
            rows.setdefault(key[v], []).append(v)
        return [
            sorted(rows[r], key=lambda v: (nodes[v].pos[1], nodes[v].pos[0],
                                           0 if nodes[v].tag.startswith("spin")
                                           else 1, v))
            for r in sorted(rows)
        ]
    return None


def build_partition_network(model: StatMechModel) -> TensorNetwork:
    """Network whose contraction equals partition_function_exact(model).

    One delta node per spin, one Gibbs node per interaction; interactions
    touching more than 8 spins are refused. Row layout is attached when
    the code geometry provides coordinates that admit one.
    """
    d = model.d
    supports = []
    for ft in model.terms:
        supp = _factor_support(ft, model.num_spins)
        if len(supp) > 8:
            raise ValueError(
                f"interaction touches {len(supp)} spins; "
                "supports above 8 are not contractible here"
            )
        supports.append(supp)

    nodes = []
    site_coords, gen_coords = _node_positions(model)
    for i in range(model.num_spins):
        pos = gen_coords[i] if gen_coords else None
        nodes.append(Node(None, (), f"spin:{i}", pos))
    bonds = []
    spin_bonds = [[] for _ in range(model.num_spins)]
    for j, (ft, supp) in enumerate(zip(model.terms, supports)):
        fid = len(nodes)
        fb = []
        for s in supp:
            b = len(bonds)
            bonds.append((s, fid))
            spin_bonds[s].append(b)
            fb.append(b)
        pos = None
        if site_coords:
            rc = [site_coords[int(s)] for s in ft.sites]
            pos = (sum(p[0] for p in rc) / len(rc),
                   sum(p[1] for p in rc) / len(rc))
        nodes.append(Node(
            _factor_tensor(ft, supp, d, model.beta, model._omega),
            tuple(fb), f"factor:{ft.factor_index}", pos))
    for i in range(model.num_spins):
        nodes[i].tensor = _delta_tensor(d, len(spin_bonds[i]))
        nodes[i].bonds = tuple(spin_bonds[i])

    counts = np.zeros(len(bonds), dtype=np.int64)
    for node in nodes:
        for b in node.bonds:
            counts[b] += 1
    assert not len(counts) or (counts == 2).all(), "bond endpoint mismatch"

    log_scale = -model.beta * model.noise.log_norm / model.nishimori_beta
    return TensorNetwork(nodes, bonds, d, _row_layout(nodes, bonds),
                         log_scale)


def _with_disorder(network: TensorNetwork,
                   model: StatMechModel) -> TensorNetwork:
    """Same structure, interaction tensors rebuilt for a rebound error.

    Delta nodes, bonds and rows are shared; only the disorder-dependent
    Gibbs entries change.
    """
    nodes = list(network.nodes)
    fids = [k for k, node in enumerate(nodes)
            if node.tag.startswith("factor:")]
    assert len(fids) == len(model.terms)
    for k, ft in zip(fids, model.terms):
        old = nodes[k]
        supp = [network.bonds[b][0] for b in old.bonds]
        nodes[k] = Node(
            _factor_tensor(ft, supp, model.d, model.beta, model._omega),
            old.bonds, old.tag, old.pos)
    return TensorNetwork(nodes, network.bonds, network.d, network.rows,
                         network.log_scale, network.chi)


# -- exact pairwise contraction ------------------------------------------


def contract_exact(network: TensorNetwork, cap=EXACT_CAP) -> float:
    """Full contraction by greedy pairwise bond elimination."""
    items = [(node.tensor, list(node.bonds)) for node in network.nodes]
    while True:
        shared_pairs = {}
        for k, (_, bs) in enumerate(items):
            for b in bs:
                if b in shared_pairs:
                    shared_pairs[b] = (shared_pairs[b][0], k)
                else:
                    shared_pairs[b] = (k, None)
        pairs = {}
        for b, (i, j) in shared_pairs.items():
            pairs.setdefault((i, j), []).append(b)
        if not pairs:
            break
        def result_size(key):
            i, j = key
            return (items[i][0].size * items[j][0].size
                    // network.d ** (2 * len(pairs[key])))
        i, j = min(pairs, key=lambda key: (result_size(key), key))
        shared = pairs[(i, j)]
        ta, ba = items[i]
        tb, bb = items[j]
        out = np.tensordot(ta, tb, axes=([ba.index(b) for b in shared],
                                         [bb.index(b) for b in shared]))
        if out.size > cap:
            raise ValueError(f"contraction intermediate of size {out.size} "
                             f"exceeds cap {cap}")
        keep = ([b for b in ba if b not in shared]
                + [b for b in bb if b not in shared])
        items = [it for k, it in enumerate(items) if k not in (i, j)]
        items.append((out, keep))
    total = network.log_scale
    for t, _ in items:
        v = float(t)
        if v == 0.0:
            return 0.0
        total += math.log(v)
    return float(np.exp(total))


# -- boundary matrix product state sweep ---------------------------------


def _split_chain(blob, chi):
    """Factor (l, d1..dq, r) into a chain of (l_i, d_i, r_i) tensors,
    truncating each cut to chi and dropping singular values below a
    relative floor. Returns (tensors, log norm) or None for a zero blob."""
    nrm = float(np.abs(blob).max())
    if nrm == 0.0:
        return None
    blob = blob / nrm
    logn = math.log(nrm)
    q = blob.ndim - 2
    out = []
    cur = blob
    for _ in range(q - 1):
        l, dk = cur.shape[0], cur.shape[1]
        mat = cur.reshape(l * dk, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = int(min(chi, np.sum(s > SVD_FLOOR * s[0]))) if s[0] > 0 else 1
        keep = max(keep, 1)
        out.append(u[:, :keep].reshape(l, dk, keep))
        cur = (s[:keep, None] * vh[:keep]).reshape((keep,) + cur.shape[2:])
    out.append(cur)
    return out, logn


def _swap_adjacent(tens, legs, i, chi):
    """Exchange boundary legs i and i+1 (an exact move up to the cap)."""
    blob = np.tensordot(tens[i], tens[i + 1], axes=([2], [0]))
    blob = blob.transpose(0, 2, 1, 3)
    split = _split_chain(blob, chi)
    if split is None:
        return None
    (a, b), logn = split
    tens[i], tens[i + 1] = a, b
    legs[i], legs[i + 1] = legs[i + 1], legs[i]
    return logn


def _contract_component(network, order, chi):
    """Log value of one connected component, or None if it vanishes."""
    nodes = network.nodes
    other = {}
    for b, (u, v) in enumerate(network.bonds):
        other[(b, u)] = v
        other[(b, v)] = u
    legs, tens = [], []
    absorbed = set()
    comp_log = 0.0
    before = {v: k for k, v in enumerate(order)}

    def far_key(v, b):
        w = other[(b, v)]
        pos = nodes[w].pos or (0.0, 0.0)
        return (pos[1], pos[0], before[w])

    for v in order:
        node = nodes[v]
        in_bonds = [b for b in node.bonds if other[(b, v)] in absorbed]
        out_bonds = sorted((b for b in node.bonds if other[(b, v)] not in absorbed),
                           key=lambda b: far_key(v, b))
        if not in_bonds:
            blob = node.tensor.reshape((1,) + node.tensor.shape + (1,))
            blob = np.moveaxis(
                blob, [1 + node.bonds.index(b) for b in out_bonds],
                range(1, 1 + len(out_bonds)))
            start = len(legs)
        else:
            while True:
                positions = sorted(legs.index(b) for b in in_bonds)
                if positions[-1] - positions[0] == len(positions) - 1:
                    break
                gap = next(k for k in range(len(positions) - 1)
                           if positions[k + 1] > positions[k] + 1)
                logn = _swap_adjacent(tens, legs, positions[gap], chi)
                if logn is None:
                    return None
                comp_log += logn
            start = positions[0]
            m = len(positions)
            seg = tens[start]
            for k in range(1, m):
                seg = np.tensordot(seg, tens[start + k], axes=([-1], [0]))
            block = legs[start:start + m]
            perm = ([node.bonds.index(b) for b in block]
                    + [node.bonds.index(b) for b in out_bonds])
            blob = np.tensordot(seg, node.tensor.transpose(perm),
                                axes=(range(1, 1 + m), range(m)))
            blob = np.moveaxis(blob, 1, blob.ndim - 1)
            del legs[start:start + m]
            del tens[start:start + m]
        absorbed.add(v)
        if out_bonds:
            split = _split_chain(blob, chi)
            if split is None:
                return None
            pieces, logn = split
            comp_log += logn
            legs[start:start] = out_bonds
            tens[start:start] = pieces
        else:
            nrm = float(np.abs(blob).max())
            if nrm == 0.0:
                return None
            comp_log += math.log(nrm)
            mat = blob.reshape(blob.shape[0], blob.shape[-1]) / nrm
            if not legs:
                val = float(mat.flat[0])
                if val <= 0.0:
                    return None
                comp_log += math.log(val)
            elif start < len(tens):
                tens[start] = np.tensordot(mat, tens[start], axes=([1], [0]))
            else:
                tens[start - 1] = np.tensordot(tens[start - 1], mat,
                                               axes=([2], [0]))
    return comp_log


def contract_mps(network: TensorNetwork, chi: int) -> float:
    """Partition estimate by row-by-row boundary MPS absorption.

    After each absorption the boundary is refactored with SVD truncation
    to at most chi singular values per cut; values below a relative floor
    are dropped even under the cap. Exact whenever chi covers the true
    boundary rank.
    """
    if chi < 1:
        raise ValueError(f"bond cap must be positive, got {chi}")
    if network.rows is None:
        raise UnsupportedLayoutError(
            "unsupported layout: the network has no planar row structure "
            "to sweep (bonds span non-adjacent rows, or the model carries "
            "no coordinates)")
    order = [v for row in network.rows for v in row]
    in_rows = set(order)
    total = network.log_scale
    for k, node in enumerate(network.nodes):
        if k in in_rows or node.bonds:
            continue
        v = float(node.tensor)
        if v == 0.0:
            return 0.0
        total += math.log(v)

    comp_of = list(range(len(network.nodes)))

    def find(a):
        while comp_of[a] != a:
            comp_of[a] = comp_of[comp_of[a]]
            a = comp_of[a]
        return a

    for u, v in network.bonds:
        comp_of[find(u)] = find(v)
    comps = {}
    for v in order:
        comps.setdefault(find(v), []).append(v)
    for comp in comps.values():
        res = _contract_component(network, comp, chi)
        if res is None:
            return 0.0
        total += res
    return float(np.exp(total))


# -- the decoder ----------------------------------------------------------


def decode_tn(code: Code, noise, s: Syndrome, chi: int) -> DecodeResult:
    """Approximate most-likely class via boundary-MPS partition sums.

    One network is built for the syndrome; each logical label rebinds the
    disorder and swaps the interaction tensors before contracting at the
    Nishimori temperature. Scores are log partition estimates; labels
    whose class is structurally forbidden score -inf without contracting.
    """
    reps = class_representatives(code, s)
    model = build_statmech_model(code, noise, reps[0])
    network = build_partition_network(model)
    network.chi = chi
    scores = np.full(len(reps), -np.inf)
    for l, rep in enumerate(reps):
        m_l = model if l == 0 else model.rebind(rep)
        if m_l.forbidden:
            continue
        net_l = network if l == 0 else _with_disorder(network, m_l)
        z = contract_mps(net_l, chi)
        if z > 0.0:
            scores[l] = math.log(z)
    return DecodeResult(min(_argmax_label(scores)), scores, "tn", chi)
