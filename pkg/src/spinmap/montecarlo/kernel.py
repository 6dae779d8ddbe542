"""Compiled single-spin-flip dynamics for +-1 models with 2- and 4-spin
uniform couplings.

The toric families produced by the mapping (independent or pairwise
correlated bit flips) compile to exactly this shape: unit edge couplings
between adjacent star spins plus a uniform four-spin face coupling, with
quenched signs read off the error pattern. Each disorder realisation
runs its own chain with a private counter-based RNG stream, so results
are bit-identical for a fixed seed regardless of thread count.

Measurements are binned logarithmically: bin b holds the 2^b sweeps
after the first 2^b - 1, which gives equilibration diagnostics and the
production average (the last bin, half the run) in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def _mix(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return state, z ^ (z >> np.uint64(31))


def derive_seeds(seed, count):
    """Independent uint64 stream heads from one master seed."""
    state = np.uint64(seed)
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        state = np.uint64((int(state) + int(_GOLDEN)) % (1 << 64))
        z = int(state)
        z = ((z ^ (z >> 30)) * int(_MIX1)) % (1 << 64)
        z = ((z ^ (z >> 27)) * int(_MIX2)) % (1 << 64)
        out[i] = np.uint64(z ^ (z >> 31))
    return out


@dataclass
class KernelModel:
    """Static structure of one compiled lattice model."""

    L: int
    n_spins: int
    coupling2: float
    coupling4: float
    sites2: np.ndarray        # error sites giving each 2-spin term's sign
    sites4: np.ndarray        # (m4, 2) error site pairs for 4-spin terms
    partners2: np.ndarray     # flattened adjacency: partner spin
    terms2: np.ndarray        # flattened adjacency: term index
    off2: np.ndarray
    partners4: np.ndarray     # (entries, 3) partner spins
    terms4: np.ndarray
    off4: np.ndarray
    coords: np.ndarray        # (n_spins, 2) grid coordinates
    active: np.ndarray        # model spin index of each kernel spin


def compile_kernel_model(model) -> KernelModel:
    """Extract the +-1 kernel arrays from a compiled spin model.

    Requires d=2, uniform real couplings per arity, and terms of arity 2
    (from single-site factors) or 4 (from pair factors) only.
    """
    if model.d != 2:
        raise ValueError("kernel supports d=2 models only")
    two, four = [], []
    for ft in model.terms:
        for t in range(len(ft.couplings)):
            spins = ft.spins[t]
            if len(spins) == 0:
                continue
            j = complex(ft.couplings[t])
            if abs(j.imag) > 1e-12:
                raise ValueError("kernel needs real couplings")
            if len(spins) == 2 and len(ft.sites) == 1:
                two.append((j.real, spins, ft.sites))
            elif len(spins) == 4 and len(ft.sites) == 2:
                four.append((j.real, spins, ft.sites))
            else:
                raise ValueError(
                    f"unsupported term: {len(spins)} spins from a "
                    f"{len(ft.sites)}-site factor"
                )
    if not two:
        raise ValueError("no two-spin terms; nothing to simulate")

    def uniform(entries, what):
        js = np.array([e[0] for e in entries])
        if len(js) and np.abs(js - js[0]).max() > 1e-9:
            raise ValueError(f"non-uniform {what} couplings")
        return float(js[0]) if len(js) else 0.0

    j2 = uniform(two, "two-spin")
    j4 = uniform(four, "four-spin")

    active = np.unique(np.concatenate(
        [s for _, s, _ in two] + [s for _, s, _ in four]))
    remap = {int(m): i for i, m in enumerate(active)}
    n = len(active)

    geom = model.code.geometry
    if geom.get("generator_coords") is None:
        raise ValueError("code geometry lacks generator coordinates")
    coords = np.array([geom["generator_coords"][int(m)] for m in active],
                      dtype=np.float64)
    L = int(geom["L"])

    def adjacency(entries, arity):
        per_spin = [[] for _ in range(n)]
        for t, (_, spins, _) in enumerate(entries):
            ks = [remap[int(s)] for s in spins]
            for k in ks:
                others = [q for q in ks if q != k]
                per_spin[k].append((t, others))
        off = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            off[i + 1] = off[i] + len(per_spin[i])
        terms = np.zeros(off[-1], dtype=np.int32)
        partners = np.zeros((off[-1], arity - 1), dtype=np.int32)
        pos = 0
        for i in range(n):
            for t, others in per_spin[i]:
                terms[pos] = t
                partners[pos, :] = others
                pos += 1
        return partners, terms, off

    partners2, terms2, off2 = adjacency(two, 2)
    partners4, terms4, off4 = adjacency(four, 4) if four else (
        np.zeros((0, 3), dtype=np.int32), np.zeros(0, dtype=np.int32),
        np.zeros(n + 1, dtype=np.int64))

    return KernelModel(
        L, n, j2, j4,
        np.array([s[0] for _, _, s in two], dtype=np.int64),
        np.array([list(s) for _, _, s in four], dtype=np.int64).reshape(
            len(four), 2),
        partners2[:, 0].copy(), terms2, off2,
        partners4, terms4, off4,
        coords, active,
    )


def disorder_signs(km: KernelModel, x):
    """Quenched term signs (-1)^(error exponent) for one or more X-type
    error patterns; x has shape (n_sites,) or (chains, n_sites)."""
    x = np.asarray(x, dtype=np.int64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    s2 = (1 - 2 * (x[:, km.sites2] % 2)).astype(np.int8)
    s4 = (1 - 2 * ((x[:, km.sites4[:, 0]] + x[:, km.sites4[:, 1]]) % 2)
          ).astype(np.int8)
    if single:
        return s2[0], s4[0]
    return s2, s4


def acceptance_table(beta, j2, j4, deg2, deg4):
    """min(1, exp(-2 beta (j2 a + j4 b))) on the integer local-field
    grid a in [-deg2, deg2], b in [-deg4, deg4]."""
    a = np.arange(-deg2, deg2 + 1)[:, None]
    b = np.arange(-deg4, deg4 + 1)[None, :]
    return np.minimum(1.0, np.exp(-2.0 * beta * (j2 * a + j4 * b)))


@njit(parallel=True, cache=True)
def _run(partners2, terms2, off2, partners4, terms4, off4,
         signs2, signs4, accept, a_off, b_off, cosk, sink,
         n_bins, seeds, out_m0sq, out_mksq, out_counts, out_final):
    nchains, n = out_final.shape
    for chain in prange(nchains):
        rng = seeds[chain]
        # all-plus start: in the gauged model this is the reference
        # error configuration, typical of the sector being sampled, so
        # chains begin far closer to equilibrium than a random start
        s = np.ones(n, dtype=np.int8)
        m0 = 0
        mkr = 0.0
        mki = 0.0
        for i in range(n):
            m0 += s[i]
            mkr += s[i] * cosk[i]
            mki += s[i] * sink[i]
        sweep = 0
        for b in range(n_bins):
            sum0 = 0.0
            sumk = 0.0
            cnt = 0
            for _ in range(1 << b):
                for _prop in range(n):
                    # random site choice keeps the chain aperiodic even
                    # where zero-cost moves are always accepted
                    rng, z = _mix(rng)
                    i = int((np.uint64(z >> np.uint64(32)) * np.uint64(n))
                            >> np.uint64(32))
                    a = 0
                    for j in range(off2[i], off2[i + 1]):
                        a += signs2[chain, terms2[j]] * s[partners2[j]]
                    bb = 0
                    for j in range(off4[i], off4[i + 1]):
                        t = terms4[j]
                        bb += (signs4[chain, t] * s[partners4[j, 0]]
                               * s[partners4[j, 1]] * s[partners4[j, 2]])
                    rng, z = _mix(rng)
                    u = (z >> np.uint64(11)) * _INV53
                    if u < accept[s[i] * a + a_off, s[i] * bb + b_off]:
                        s[i] = -s[i]
                        m0 += 2 * s[i]
                        mkr += 2 * s[i] * cosk[i]
                        mki += 2 * s[i] * sink[i]
                sweep += 1
                if sweep % 4096 == 0:
                    m0 = 0
                    mkr = 0.0
                    mki = 0.0
                    for i in range(n):
                        m0 += s[i]
                        mkr += s[i] * cosk[i]
                        mki += s[i] * sink[i]
                sum0 += float(m0) * float(m0)
                sumk += mkr * mkr + mki * mki
                cnt += 1
            out_m0sq[chain, b] = sum0
            out_mksq[chain, b] = sumk
            out_counts[chain, b] = cnt
        for i in range(n):
            out_final[chain, i] = s[i]


def run_ensemble(km: KernelModel, signs2, signs4, beta, sweeps_log2, seeds):
    """One chain per disorder realisation, 2^sweeps_log2 - 1 sweeps each.

    Returns per-chain, per-logarithmic-bin thermal means of |M(0)|^2 and
    |M(k_min)|^2 plus final spin states.
    """
    signs2 = np.asarray(signs2, dtype=np.int8)
    signs4 = np.asarray(signs4, dtype=np.int8)
    seeds = np.asarray(seeds, dtype=np.uint64)
    nchains = len(seeds)
    if signs2.shape != (nchains, len(km.sites2)):
        raise ValueError("signs2 shape mismatch")
    deg2 = int(np.diff(km.off2).max(initial=0))
    deg4 = int(np.diff(km.off4).max(initial=0))
    accept = acceptance_table(beta, km.coupling2, km.coupling4, deg2, deg4)
    phase = 2.0 * np.pi * km.coords[:, 1] / km.L
    cosk = np.cos(phase)
    sink = np.sin(phase)
    n_bins = int(sweeps_log2)
    m0sq = np.zeros((nchains, n_bins))
    mksq = np.zeros((nchains, n_bins))
    counts = np.zeros((nchains, n_bins), dtype=np.int64)
    final = np.zeros((nchains, km.n_spins), dtype=np.int8)
    _run(km.partners2, km.terms2, km.off2, km.partners4, km.terms4, km.off4,
         signs2, signs4, accept, deg2, deg4, cosk, sink,
         n_bins, seeds, m0sq, mksq, counts, final)
    return {
        "m0sq": m0sq / counts,
        "mksq": mksq / counts,
        "counts": counts,
        "final": final,
    }
