"""Factored Pauli noise models.

A FactoredNoiseModel is a product of local factors phi_j over (possibly
overlapping) site regions, stored as log tables with an explicit FORBIDDEN
sentinel for zero-probability entries. Tables are indexed in the canonical
Pauli order of pauli.pauli_index (first region site most significant,
per-site code x*d+z); the iid constructor additionally accepts the
conventional (I, X, Y, Z) ordering for d=2 site tables.

Models are either normalised (the factor product is a probability) or
unnormalised Gibbs weights; in the latter case log_norm holds the exact
log normaliser when it is computable, so log_probability stays honest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pauli import PauliOperator, Region

ENUMERATION_CAP = 2 ** 22
DEFAULT_BURN_IN = 2 ** 16
_NORMALISATION_CHECK_CAP = 2 ** 16


class _Forbidden:
    """Sentinel for exactly-zero probability entries."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FORBIDDEN"


FORBIDDEN = _Forbidden()

# public d=2 site-table order (I, X, Y, Z) -> internal code x*2+z
_IXYZ_TO_CODE = np.array([0, 2, 3, 1])


@dataclass
class Factor:
    """One local factor: a log table over the Paulis of its region."""

    region: Region
    log_table: np.ndarray
    forbidden: np.ndarray

    def __post_init__(self):
        self.log_table = np.asarray(self.log_table, dtype=np.float64)
        self.forbidden = np.asarray(self.forbidden, dtype=bool)
        if self.log_table.shape != self.forbidden.shape:
            raise ValueError("log table and forbidden mask shapes differ")

    def table_size_ok(self, d):
        return len(self.log_table) == (d * d) ** len(self.region)


def factor_from_probabilities(region, probs, d):
    """Build a factor from a probability table (internal Pauli order);
    zero entries become FORBIDDEN."""
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < 0):
        raise ValueError("negative probability in factor table")
    forb = probs == 0.0
    logs = np.full(len(probs), 0.0)
    logs[~forb] = np.log(probs[~forb])
    return Factor(Region(region), logs, forb)


class FactoredNoiseModel:
    """Product of local factors over n sites of dimension d."""

    def __init__(self, n, d, factors, mode="normalised", log_norm=0.0,
                 nishimori_beta=1.0, metadata=None, check=True):
        self.n = int(n)
        self.d = int(d)
        self.factors = list(factors)
        if mode not in ("normalised", "gibbs"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.log_norm = float(log_norm)
        self.nishimori_beta = float(nishimori_beta)
        self.metadata = metadata or {}
        for f in self.factors:
            f.region.validate_for(self.n)
            if not f.table_size_ok(self.d):
                raise ValueError(
                    f"factor on region {f.region.sites} has "
                    f"{len(f.log_table)} entries, expected "
                    f"{(self.d * self.d) ** len(f.region)}"
                )
        if check and self.mode == "normalised":
            self._check_normalisation()

    def _check_normalisation(self):
        if (self.d * self.d) ** self.n > _NORMALISATION_CHECK_CAP:
            return
        logps = enumerate_log_probabilities(self)
        total = np.exp(logps[np.isfinite(logps)]).sum()
        if abs(total - 1.0) > 1e-8:
            raise ValueError(
                f"normalised-mode factors sum to {total!r}, not 1"
            )

    # -- evaluation ------------------------------------------------------

    def _factor_index(self, f, patterns):
        """Table indices of an (m, n, 2) pattern batch for one factor."""
        sites = np.asarray(f.region.sites, dtype=np.int64)
        codes = (patterns[:, sites, 0].astype(np.int64) * self.d
                 + patterns[:, sites, 1])
        idx = np.zeros(len(patterns), dtype=np.int64)
        for col in range(codes.shape[1]):
            idx = idx * (self.d * self.d) + codes[:, col]
        return idx

    def log_probability_batch(self, patterns):
        """Log probabilities of an (m, n, 2) uint8 exponent-pattern batch;
        forbidden patterns get −inf."""
        patterns = np.asarray(patterns)
        m = patterns.shape[0]
        lp = np.full(m, -self.log_norm, dtype=np.float64)
        forb = np.zeros(m, dtype=bool)
        for f in self.factors:
            idx = self._factor_index(f, patterns)
            forb |= f.forbidden[idx]
            lp += np.where(f.forbidden[idx], 0.0, f.log_table[idx])
        lp[forb] = -np.inf
        return lp

    def sites_touched(self):
        out = set()
        for f in self.factors:
            out.update(f.region.sites)
        return out


def log_probability(model: FactoredNoiseModel, e: PauliOperator):
    """Σ_j log φ_j(E restricted to R_j) − log_norm, or FORBIDDEN."""
    if e.n != model.n or e.d != model.d:
        raise ValueError("error does not match model n, d")
    pattern = np.stack([e.x, e.z], axis=-1).astype(np.uint8)[None, :, :]
    lp = model.log_probability_batch(pattern)[0]
    return FORBIDDEN if not np.isfinite(lp) else float(lp)


def enumerate_log_probabilities(model: FactoredNoiseModel,
                                cap=ENUMERATION_CAP):
    """Log probabilities of every Pauli pattern, indexed by pauli_index.

    −inf marks forbidden patterns. Total count (d²)^n must fit the cap.
    """
    total = (model.d * model.d) ** model.n
    if total > cap:
        raise ValueError(f"pattern count {total} exceeds enumeration cap {cap}")
    out = np.empty(total, dtype=np.float64)
    chunk = 1 << 16
    dd = model.d * model.d
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        patterns = np.empty((len(idx), model.n, 2), dtype=np.uint8)
        rem = idx.copy()
        for site in range(model.n - 1, -1, -1):
            code = rem % dd
            rem //= dd
            patterns[:, site, 0] = code // model.d
            patterns[:, site, 1] = code % model.d
        out[start:start + len(idx)] = model.log_probability_batch(patterns)
    return out


# -- iid models ----------------------------------------------------------


def iid_model(site_distributions, d=2, order=None, nishimori_beta=1.0,
              metadata=None) -> FactoredNoiseModel:
    """Independent per-site noise from per-site probability tables.

    For d=2 tables are read in the conventional (I, X, Y, Z) order unless
    order="internal"; for d>2 they are always in internal pauli order.
    Each table must sum to 1 within 1e−12.
    """
    tables = [np.asarray(t, dtype=np.float64) for t in site_distributions]
    n = len(tables)
    factors = []
    for i, t in enumerate(tables):
        if len(t) != d * d:
            raise ValueError(f"site {i}: table has {len(t)} entries, want {d * d}")
        if np.any(t < 0):
            raise ValueError(f"site {i}: negative probability")
        if abs(t.sum() - 1.0) > 1e-12:
            raise ValueError(f"site {i}: table sums to {t.sum()!r}, not 1")
        if d == 2 and order != "internal":
            internal = np.empty(4)
            internal[_IXYZ_TO_CODE] = t
        else:
            internal = t
        factors.append(factor_from_probabilities((i,), internal, d))
    return FactoredNoiseModel(n, d, factors, mode="normalised",
                              nishimori_beta=nishimori_beta,
                              metadata=metadata, check=False)


def bitflip_model(n, p) -> FactoredNoiseModel:
    """iid bit-flip: Pr(X)=p, Y and Z forbidden. Carries the Nishimori
    inverse temperature ½·log((1−p)/p) of the induced Ising couplings."""
    if not 0 < p < 1:
        raise ValueError("bit-flip rate must be in (0,1)")
    beta_n = 0.5 * np.log((1 - p) / p) if p != 0.5 else 1.0
    return iid_model([[1 - p, p, 0, 0]] * n, d=2, nishimori_beta=beta_n,
                     metadata={"family": "bitflip", "p": p})


def depolarising_model(n, p) -> FactoredNoiseModel:
    """iid depolarising: Pr(X)=Pr(Y)=Pr(Z)=p/3. Carries the Nishimori
    inverse temperature ¼·log(3(1−p)/p)."""
    if not 0 < p < 1:
        raise ValueError("depolarising rate must be in (0,1)")
    beta_n = 0.25 * np.log(3 * (1 - p) / p)
    return iid_model([[1 - p, p / 3, p / 3, p / 3]] * n, d=2,
                     nishimori_beta=beta_n,
                     metadata={"family": "depolarising", "p": p})


def independent_xz_model(n, px, pz) -> FactoredNoiseModel:
    """Independent X and Z flips per site: Pr(Y) = px·pz."""
    for name, p in (("px", px), ("pz", pz)):
        if not 0 < p < 1:
            raise ValueError(f"{name} must be in (0,1)")
    table = [(1 - px) * (1 - pz), px * (1 - pz), px * pz, (1 - px) * pz]
    beta_n = 0.5 * np.log((1 - px) / px)
    return iid_model([table] * n, d=2, nishimori_beta=beta_n,
                     metadata={"family": "independent_xz", "px": px, "pz": pz})


# -- Ising-form correlated bit-flip models -------------------------------


@dataclass
class EtaModelSpec:
    """Marginal flip rate p with a pair-correlation parameter eta.

    eta = Pr(X | partner X) / Pr(X | partner I); eta = 1 is iid. The
    conditional rates are p_minus = p/(1+(eta−1)p) and p_plus = eta·p_minus.
    """

    p: float
    eta: float
    pairs: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.p < 0.5:
            raise ValueError(f"marginal p must be in (0, 0.5), got {self.p}")
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        pm, pp = self.p_minus, self.p_plus
        if not (0 < pm < 1 and 0 < pp < 1):
            raise ValueError(f"conditional rates ({pm}, {pp}) leave (0,1)")

    @property
    def p_minus(self):
        return self.p / (1 + (self.eta - 1) * self.p)

    @property
    def p_plus(self):
        return self.eta * self.p_minus


def eta_field(p, eta):
    """Single-edge field h̃ with Pr ∝ e^{h̃·x}, x=+1 for I and −1 for X."""
    return 0.5 * np.log((1 + (eta - 2) * p) / (eta * p))


def eta_pair_coupling(p, eta):
    """Pair coupling J̃ with Pr ∝ e^{J̃·x·x'} across each pair."""
    return 0.25 * np.log(eta * (1 + (eta - 2) * p) / (1 - p))


def ising_noise_model(n, h_tilde, j_tilde, pairs, nishimori_beta=None,
                      metadata=None) -> FactoredNoiseModel:
    """Unnormalised Gibbs bit-flip model: weight e^{h̃·x_e} per site and
    e^{J̃·x_e·x_e'} per pair, with x=±1 encoding {I, X}; all entries with
    Y or Z content are forbidden.

    The exact log normaliser is filled in when the pair graph decomposes
    into disjoint chains and cycles (transfer matrices) and left at 0
    otherwise, in which case probabilities are relative weights only.
    """
    if not np.isfinite(h_tilde) or not np.isfinite(j_tilde):
        raise ValueError("couplings must be finite")
    factors = []
    for i in range(n):
        # internal order (I, Z, X, Y): allow I and X only
        log_t = np.array([h_tilde, 0.0, -h_tilde, 0.0])
        forb = np.array([False, True, False, True])
        factors.append(Factor(Region((i,)), log_t, forb))
    for a, b in pairs:
        log_t = np.zeros(16)
        forb = np.ones(16, dtype=bool)
        for ca, xa in ((0, 1), (2, -1)):
            for cb, xb in ((0, 1), (2, -1)):
                idx = ca * 4 + cb
                log_t[idx] = j_tilde * xa * xb
                forb[idx] = False
        factors.append(Factor(Region((a, b)), log_t, forb))

    components = _pair_components(pairs)
    md = dict(metadata or {})
    md.setdefault("family", "ising_bitflip")
    md["h_tilde"] = float(h_tilde)
    md["j_tilde"] = float(j_tilde)
    md["pairs"] = [tuple(p) for p in pairs]
    if components is not None:
        md["pair_components"] = components
    if nishimori_beta is None:
        nishimori_beta = h_tilde if h_tilde > 0 else 1.0
    model = FactoredNoiseModel(n, 2, factors, mode="gibbs",
                               log_norm=0.0, nishimori_beta=nishimori_beta,
                               metadata=md, check=False)
    if components is not None:
        log_norm = _exact_ising_log_norm(n, h_tilde, j_tilde, components,
                                         pairs)
    elif 2 ** n <= ENUMERATION_CAP:
        logps = enumerate_log_probabilities(model)
        finite = logps[np.isfinite(logps)]
        mx = finite.max()
        log_norm = mx + np.log(np.exp(finite - mx).sum())
    else:
        log_norm = None
    if log_norm is not None:
        model.log_norm = float(log_norm)
    return model


def eta_model(spec: EtaModelSpec, n=None) -> FactoredNoiseModel:
    """Correlated bit-flip model with marginal p and correlation eta over
    the given pair set, as a Gibbs model with the closed-form couplings.

    Carries nishimori_beta = h̃(p, eta), under which the induced
    random-bond model has unit edge coupling.
    """
    if n is None:
        n = 1 + max((max(a, b) for a, b in spec.pairs), default=0)
    h = eta_field(spec.p, spec.eta)
    j = eta_pair_coupling(spec.p, spec.eta)
    return ising_noise_model(
        n, h, j, spec.pairs, nishimori_beta=h,
        metadata={"family": "eta", "p": spec.p, "eta": spec.eta},
    )


def _pair_components(pairs):
    """Decompose the pair graph into disjoint chains and cycles.

    Returns a list of ("chain"|"cycle", [site order]) or None when some
    site has more than two distinct partners (no 1-d decomposition).
    Parallel pairs over the same two sites merge into one edge whose
    coupling is scaled by multiplicity, so a doubled pair is a 2-chain.
    """
    nbrs = {}
    for a, b in pairs:
        if a == b:
            return None
        nbrs.setdefault(a, set()).add(b)
        nbrs.setdefault(b, set()).add(a)
    if any(len(v) > 2 for v in nbrs.values()):
        return None
    seen = set()
    comps = []
    for start in sorted(nbrs):
        if start in seen:
            continue
        comp = {start}
        frontier = [start]
        while frontier:
            cur = frontier.pop()
            for x in nbrs[cur]:
                if x not in comp:
                    comp.add(x)
                    frontier.append(x)
        seen |= comp
        ends = sorted(s for s in comp if len(nbrs[s]) == 1)
        kind = "chain" if ends else "cycle"
        first = ends[0] if ends else min(comp)
        order = [first]
        prev, cur = None, first
        while len(order) < len(comp):
            nxt = min(x for x in nbrs[cur] if x != prev)
            order.append(nxt)
            prev, cur = cur, nxt
        comps.append((kind, order))
    return comps


def _edge_multiplicity(pairs):
    mult = {}
    for a, b in pairs:
        key = (min(a, b), max(a, b))
        mult[key] = mult.get(key, 0) + 1
    return mult


def _component_forward_tables(order, kind, h, j, mult):
    """Forward partial sums for one chain/cycle component, per x_0 branch.

    Returns {x0: (weight, alphas)}: alphas[k][x] sums the weight of
    x_1..x_k given x_0 fixed and x_k = x (the cycle's closing bond is
    folded into the last alpha); weight is the branch partition sum.
    Sampling draws x_0 from the branch weights and then x_k backwards.
    """
    m = len(order)

    def cpl(a, b):
        return j * mult[(min(a, b), max(a, b))]

    if m == 1:
        return {+1: (np.exp(h), []), -1: (np.exp(-h), [])}
    out = {}
    closing = cpl(order[-1], order[0]) if kind == "cycle" else 0.0
    for x0 in (+1, -1):
        alphas = [None] * m
        alphas[0] = {x0: 1.0}
        for k in range(1, m):
            c = cpl(order[k - 1], order[k])
            cur = {}
            for x in (+1, -1):
                cur[x] = np.exp(h * x) * sum(
                    np.exp(c * y * x) * w for y, w in alphas[k - 1].items()
                )
                if k == m - 1:
                    cur[x] *= np.exp(closing * x * x0)
            alphas[k] = cur
        weight = np.exp(h * x0) * sum(alphas[m - 1].values())
        out[x0] = (weight, alphas)
    return out


def _exact_ising_log_norm(n, h, j, components, pairs):
    mult = _edge_multiplicity(pairs)
    covered = set()
    total = 0.0
    for kind, order in components:
        covered.update(order)
        tables = _component_forward_tables(order, kind, h, j, mult)
        total += np.log(tables[+1][0] + tables[-1][0])
    isolated = n - len(covered)
    total += isolated * np.log(2 * np.cosh(h))
    return total


# -- sampling ------------------------------------------------------------


def _sampler_kind(model: FactoredNoiseModel):
    if "pair_components" in model.metadata:
        return "components"
    if model.mode == "normalised" and all(
        len(f.region) == 1 for f in model.factors
    ):
        sites = [f.region.sites[0] for f in model.factors]
        if sorted(sites) == list(range(model.n)):
            return "iid"
    return "heat_bath"


def _sample_iid(model, rng, count):
    dd = model.d * model.d
    cumulative = np.zeros((model.n, dd))
    for f in model.factors:
        probs = np.where(f.forbidden, 0.0, np.exp(f.log_table))
        cumulative[f.region.sites[0]] = np.cumsum(probs)
    u = rng.random((count, model.n))
    codes = np.empty((count, model.n), dtype=np.int64)
    for i in range(model.n):
        codes[:, i] = np.searchsorted(cumulative[i], u[:, i], side="right")
    codes = np.minimum(codes, dd - 1)
    out = np.empty((count, model.n, 2), dtype=np.uint8)
    out[:, :, 0] = codes // model.d
    out[:, :, 1] = codes % model.d
    return out


def _sample_components(model, rng, count):
    h = model.metadata["h_tilde"]
    j = model.metadata["j_tilde"]
    components = model.metadata["pair_components"]
    mult = _edge_multiplicity(model.metadata["pairs"])
    tables = [
        (order, kind, _component_forward_tables(order, kind, h, j, mult))
        for kind, order in components
    ]
    covered = set()
    for kind, order in components:
        covered.update(order)
    isolated = sorted(set(range(model.n)) - covered)
    p_iso_flip = np.exp(-h) / (2 * np.cosh(h))

    def cpl(a, b):
        return j * mult[(min(a, b), max(a, b))]

    out = np.zeros((count, model.n, 2), dtype=np.uint8)
    for t in range(count):
        spins = np.ones(model.n, dtype=np.int64)
        for order, kind, branch in tables:
            w_plus = branch[+1][0]
            w_minus = branch[-1][0]
            x0 = +1 if rng.random() * (w_plus + w_minus) < w_plus else -1
            spins[order[0]] = x0
            _, alphas = branch[x0]
            m = len(order)
            if m > 1:
                nxt = None
                for k in range(m - 1, 0, -1):
                    w = {}
                    for x, a in alphas[k].items():
                        w[x] = a
                        if nxt is not None:
                            w[x] *= np.exp(cpl(order[k], order[k + 1])
                                           * x * nxt)
                    keys = list(w)
                    total = sum(w.values())
                    xk = keys[0] if rng.random() * total < w[keys[0]] else keys[1]
                    spins[order[k]] = xk
                    nxt = xk
        for s in isolated:
            spins[s] = -1 if rng.random() < p_iso_flip else +1
        out[t, spins < 0, 0] = 1
    return out


def _heat_bath_factor_views(model):
    """Per-factor site/stride arrays for incremental index updates."""
    dd = model.d * model.d
    views = []
    for f in model.factors:
        sites = np.asarray(f.region.sites, dtype=np.int64)
        strides = dd ** np.arange(len(sites) - 1, -1, -1, dtype=np.int64)
        views.append((sites, strides, f.log_table, f.forbidden))
    touching = [[] for _ in range(model.n)]
    for fi, (sites, strides, _, _) in enumerate(views):
        for pos, s in enumerate(sites):
            touching[s].append((fi, strides[pos]))
    return views, touching


def _sample_heat_bath(model, rng, count, burn_in, thin):
    dd = model.d * model.d
    views, touching = _heat_bath_factor_views(model)
    codes = np.zeros(model.n, dtype=np.int64)
    fidx = np.zeros(len(views), dtype=np.int64)
    candidates = np.arange(dd)

    def sweep():
        for i in range(model.n):
            old = codes[i]
            logw = np.zeros(dd)
            alive = np.ones(dd, dtype=bool)
            for fi, stride in touching[i]:
                base = fidx[fi] - old * stride
                idx = base + candidates * stride
                _, _, table, forb = views[fi]
                alive &= ~forb[idx]
                logw += np.where(forb[idx], 0.0, table[idx])
            logw[~alive] = -np.inf
            logw -= logw.max()
            w = np.exp(logw)
            new = rng.choice(dd, p=w / w.sum())
            if new != old:
                for fi, stride in touching[i]:
                    fidx[fi] += (new - old) * stride
                codes[i] = new

    for _ in range(burn_in):
        sweep()
    out = np.empty((count, model.n, 2), dtype=np.uint8)
    for t in range(count):
        for _ in range(thin):
            sweep()
        out[t, :, 0] = codes // model.d
        out[t, :, 1] = codes % model.d
    return out


def sample_errors(model: FactoredNoiseModel, rng, count, burn_in=None,
                  thin=1):
    """Draw `count` error patterns as a (count, n, 2) exponent array.

    iid models sample directly; Ising-form pair models with a chain/cycle
    decomposition sample each component exactly by forward filtering and
    backward sampling; anything else runs single-site heat-bath MCMC with
    the given burn-in (default 2^16 sweeps) and thinning.
    """
    kind = _sampler_kind(model)
    if kind == "iid":
        return _sample_iid(model, rng, count)
    if kind == "components":
        return _sample_components(model, rng, count)
    if burn_in is None:
        burn_in = int(model.metadata.get("burn_in", DEFAULT_BURN_IN))
    return _sample_heat_bath(model, rng, count, burn_in, thin)


def sample_error(model: FactoredNoiseModel, rng, burn_in=None):
    """Draw a single error as a PauliOperator."""
    pattern = sample_errors(model, rng, 1, burn_in=burn_in)[0]
    return PauliOperator(pattern[:, 0], pattern[:, 1], model.d)


# -- calibration ---------------------------------------------------------


def _pair_joint_exact(model, a, b):
    dd = model.d * model.d
    logps = enumerate_log_probabilities(model)
    probs = np.exp(np.where(np.isfinite(logps), logps, -np.inf))
    shaped = probs.reshape((dd,) * model.n)
    axes = [a, b] + [i for i in range(model.n) if i not in (a, b)]
    joint = shaped.transpose(axes).reshape(dd, dd, -1).sum(axis=2)
    return joint / joint.sum()


def calibrate_eta(model: FactoredNoiseModel, pair, cap=ENUMERATION_CAP,
                  rng=None, samples=2 ** 17):
    """Measure the realised (p, eta) of a model on one site pair.

    p is the mean flip probability of the two sites (flip = any
    non-identity); eta is Pr(flip | partner flipped) / Pr(flip | partner
    clean), averaged over the two directions. Uses exact enumeration when
    the pattern count fits the cap, otherwise `samples` draws from the
    model's sampler (an rng is then required).
    """
    a, b = pair
    dd = model.d * model.d
    if (dd) ** model.n <= cap:
        joint = _pair_joint_exact(model, a, b)
        flip_a = 1.0 - joint[0, :].sum()
        flip_b = 1.0 - joint[:, 0].sum()
        both = joint[1:, 1:].sum()
        if flip_a == 0 or flip_b == 0:
            raise ValueError("a site never flips; eta is undefined")
        conds = []
        for flip_t, clean_t in (
            (both / flip_b, joint[1:, 0].sum() / joint[:, 0].sum()),
            (both / flip_a, joint[0, 1:].sum() / joint[0, :].sum()),
        ):
            if clean_t == 0:
                raise ValueError("conditional flip rate is degenerate")
            conds.append(flip_t / clean_t)
        return float((flip_a + flip_b) / 2.0), float(np.mean(conds))
    if rng is None:
        raise ValueError(
            "pattern count exceeds the enumeration cap; "
            "provide an rng for sampled calibration"
        )
    patterns = sample_errors(model, rng, samples)
    flips = (patterns[:, [a, b], :] != 0).any(axis=2)
    fa, fb = flips[:, 0], flips[:, 1]
    p_measured = (fa.mean() + fb.mean()) / 2.0
    conds = []
    for t, c in ((fa, fb), (fb, fa)):
        n_flip, n_clean = c.sum(), (~c).sum()
        if n_flip == 0 or n_clean == 0 or t[~c].sum() == 0:
            raise ValueError("too few samples to estimate the ratio")
        conds.append((t[c].mean()) / (t[~c].mean()))
    return float(p_measured), float(np.mean(conds))


# -- graphical-model front ends ------------------------------------------

MRF_VARIABLE_CAP = 16


def _pattern_index(codes, sites, m, dd):
    """Joint-table index of the pattern with `codes` on `sites`, identity
    elsewhere. codes has shape (..., len(sites))."""
    idx = np.zeros(codes.shape[:-1], dtype=np.int64)
    strides = dd ** (m - 1 - np.asarray(sites, dtype=np.int64))
    for k in range(len(sites)):
        idx = idx + codes[..., k] * strides[k]
    return idx


def _all_cliques(m, adjacency):
    cliques = [()]
    for i in range(m):
        cliques.append((i,))
    grow = [c for c in cliques if c]
    while grow:
        nxt = []
        for c in grow:
            for j in range(c[-1] + 1, m):
                if all(adjacency[i][j] for i in c):
                    nxt.append(c + (j,))
        cliques.extend(nxt)
        grow = nxt
    return cliques


def mrf_to_factors(joint, graph, d=2, tol=1e-8) -> FactoredNoiseModel:
    """Factor a strictly positive joint Pauli distribution over the cliques
    of an undirected graph.

    joint is indexed in canonical Pauli order over all m sites. Canonical
    clique potentials come from Mobius inversion against the all-identity
    reference pattern; each is folded into its first maximal clique. If
    the reassembled product does not reproduce the joint, the distribution
    is not Markov for this graph and a ValueError is raised.
    """
    joint = np.asarray(joint, dtype=np.float64)
    dd = d * d
    m = 0
    while dd ** m < len(joint):
        m += 1
    if dd ** m != len(joint):
        raise ValueError(f"joint length {len(joint)} is not a power of {dd}")
    if m > MRF_VARIABLE_CAP:
        raise ValueError(f"{m} variables exceeds the cap {MRF_VARIABLE_CAP}")
    if len(joint) > ENUMERATION_CAP:
        raise ValueError("joint table exceeds the enumeration cap")
    if np.any(joint <= 0):
        raise ValueError("Mobius factorisation requires a strictly "
                         "positive joint")
    if abs(joint.sum() - 1.0) > 1e-8:
        raise ValueError(f"joint sums to {joint.sum()!r}, not 1")
    log_joint = np.log(joint)

    adjacency = [[False] * m for _ in range(m)]
    for i, j in graph:
        if i == j or not (0 <= i < m and 0 <= j < m):
            raise ValueError(f"bad edge ({i}, {j})")
        adjacency[i][j] = adjacency[j][i] = True

    cliques = _all_cliques(m, adjacency)
    maximal = [
        c for c in cliques
        if c and not any(set(c) < set(o) for o in cliques)
    ]
    maximal.sort()
    if not maximal:
        maximal = [(i,) for i in range(m)]

    def host(clique):
        for c in maximal:
            if set(clique) <= set(c):
                return c
        raise AssertionError("clique outside every maximal clique")

    potentials = {c: np.zeros(dd ** len(c)) for c in maximal}
    for y in cliques:
        ky = len(y)
        codes = np.stack(
            np.meshgrid(*([np.arange(dd)] * ky), indexing="ij"), axis=-1
        ).reshape(-1, ky) if ky else np.zeros((1, 0), dtype=np.int64)
        log_phi = np.zeros(len(codes))
        for mask in range(1 << ky):
            positions = [t for t in range(ky) if mask >> t & 1]
            sign = (-1) ** (ky - len(positions))
            sub_sites = [y[t] for t in positions]
            idx = _pattern_index(codes[:, positions], sub_sites, m, dd)
            log_phi += sign * log_joint[idx]
        c = host(y) if y else maximal[0]
        positions = [c.index(s) for s in y]
        strides = (dd ** (len(c) - 1 - np.arange(len(c))))
        target = np.zeros(len(codes), dtype=np.int64)
        for t, pos in enumerate(positions):
            target += codes[:, t] * strides[pos]
        free = [pos for pos in range(len(c)) if pos not in positions]
        fill = np.stack(
            np.meshgrid(*([np.arange(dd)] * len(free)), indexing="ij"),
            axis=-1,
        ).reshape(-1, len(free)) if free else np.zeros((1, 0), dtype=np.int64)
        offsets = np.zeros(len(fill), dtype=np.int64)
        for t, pos in enumerate(free):
            offsets += fill[:, t] * strides[pos]
        table = potentials[c]
        for off in offsets:
            np.add.at(table, target + off, log_phi)

    factors = [
        Factor(Region(c), potentials[c], np.zeros(dd ** len(c), dtype=bool))
        for c in maximal
    ]
    model = FactoredNoiseModel(m, d, factors, mode="normalised", check=False)
    rebuilt = enumerate_log_probabilities(model)
    if np.max(np.abs(rebuilt - log_joint)) > tol:
        raise ValueError(
            "joint is not a Markov field for the given graph: "
            "clique product does not reproduce it"
        )
    return model


def bn_to_factors(tables, parents, d=2) -> FactoredNoiseModel:
    """Build a model from per-node conditional tables of a Bayesian
    network.

    parents[i] lists node i's parents; tables[i] has one row per parent
    pattern (canonical Pauli order over the parent tuple) and one column
    per node value (internal single-site order). Rows must be probability
    vectors; zero entries become forbidden. Cyclic structures are
    rejected.
    """
    m = len(parents)
    if len(tables) != m:
        raise ValueError("one table per node required")
    if m > MRF_VARIABLE_CAP:
        raise ValueError(f"{m} variables exceeds the cap {MRF_VARIABLE_CAP}")
    dd = d * d

    indegree = [len(p) for p in parents]
    children = [[] for _ in range(m)]
    for i, ps in enumerate(parents):
        for p in ps:
            children[p].append(i)
    ready = [i for i in range(m) if indegree[i] == 0]
    seen = 0
    while ready:
        node = ready.pop()
        seen += 1
        for c in children[node]:
            indegree[c] -= 1
            if indegree[c] == 0:
                ready.append(c)
    if seen != m:
        raise ValueError("parent structure contains a cycle")

    factors = []
    for i, ps in enumerate(parents):
        t = np.asarray(tables[i], dtype=np.float64)
        want = (dd ** len(ps), dd)
        if t.shape != want:
            raise ValueError(f"node {i}: table shape {t.shape}, want {want}")
        if np.any(t < 0):
            raise ValueError(f"node {i}: negative conditional probability")
        rows = t.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-10:
            raise ValueError(f"node {i}: rows must sum to 1")
        region = tuple(ps) + (i,)
        factors.append(factor_from_probabilities(region, t.reshape(-1), d))
    return FactoredNoiseModel(m, d, factors, mode="normalised", check=False)


def merge_factors(model: FactoredNoiseModel, i, j) -> FactoredNoiseModel:
    """Replace factors i and j by their product on the union region."""
    fi, fj = model.factors[i], model.factors[j]
    union = list(fi.region.sites)
    union += [s for s in fj.region.sites if s not in union]
    dd = model.d * model.d
    size = dd ** len(union)
    codes = np.stack(
        np.meshgrid(*([np.arange(dd)] * len(union)), indexing="ij"), axis=-1
    ).reshape(-1, len(union))
    log_t = np.zeros(size)
    forb = np.zeros(size, dtype=bool)
    for f in (fi, fj):
        positions = [union.index(s) for s in f.region.sites]
        idx = np.zeros(size, dtype=np.int64)
        for pos in positions:
            idx = idx * dd + codes[:, pos]
        forb |= f.forbidden[idx]
        log_t += np.where(f.forbidden[idx], 0.0, f.log_table[idx])
    log_t[forb] = 0.0
    merged = Factor(Region(tuple(union)), log_t, forb)
    keep = [f for k, f in enumerate(model.factors) if k not in (i, j)]
    keep.insert(min(i, j), merged)
    return FactoredNoiseModel(model.n, model.d, keep, mode=model.mode,
                              log_norm=model.log_norm,
                              nishimori_beta=model.nishimori_beta,
                              metadata=model.metadata, check=False)
