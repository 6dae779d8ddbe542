import numpy as np
import pytest

from spinmap.noise import (
    FORBIDDEN,
    EtaModelSpec,
    Factor,
    FactoredNoiseModel,
    bitflip_model,
    bn_to_factors,
    calibrate_eta,
    depolarising_model,
    enumerate_log_probabilities,
    eta_field,
    eta_model,
    eta_pair_coupling,
    independent_xz_model,
    iid_model,
    ising_noise_model,
    log_probability,
    merge_factors,
    mrf_to_factors,
    sample_errors,
)
from spinmap.pauli import PauliOperator, Region


def P(s):
    return PauliOperator.from_string(s, 2)


def test_iid_table_order_is_ixyz():
    m = iid_model([[0.7, 0.1, 0.08, 0.12]])
    assert log_probability(m, P("X")) == pytest.approx(np.log(0.1))
    assert log_probability(m, P("Y")) == pytest.approx(np.log(0.08))
    assert log_probability(m, P("Z")) == pytest.approx(np.log(0.12))
    assert log_probability(m, P("I")) == pytest.approx(np.log(0.7))


def test_iid_rejects_bad_tables():
    with pytest.raises(ValueError):
        iid_model([[0.5, 0.5, 0.1, 0.0]])  # sums to 1.1
    with pytest.raises(ValueError):
        iid_model([[1.1, -0.1, 0.0, 0.0]])


def test_bitflip_forbidden_entries():
    m = bitflip_model(3, 0.1)
    assert log_probability(m, P("ZII")) is FORBIDDEN
    assert log_probability(m, P("YII")) is FORBIDDEN
    assert log_probability(m, P("XXI")) == pytest.approx(
        2 * np.log(0.1) + np.log(0.9)
    )
    batch = np.zeros((2, 3, 2), dtype=np.uint8)
    batch[0, 0, 1] = 1  # ZII
    lp = m.log_probability_batch(batch)
    assert lp[0] == -np.inf
    assert lp[1] == pytest.approx(3 * np.log(0.9))


def test_nishimori_beta_constants():
    assert bitflip_model(1, 0.1).nishimori_beta == pytest.approx(
        0.5 * np.log(9), abs=1e-14
    )
    assert depolarising_model(1, 0.1).nishimori_beta == pytest.approx(
        0.25 * np.log(27), abs=1e-14
    )
    assert independent_xz_model(1, 0.1, 0.2).nishimori_beta == pytest.approx(
        0.5 * np.log(9), abs=1e-14
    )


def test_enumeration_normalised():
    for m in (depolarising_model(3, 0.07), independent_xz_model(2, 0.1, 0.2)):
        logs = enumerate_log_probabilities(m)
        assert np.exp(logs[np.isfinite(logs)]).sum() == pytest.approx(1.0)


def test_eta_closed_forms():
    # single-pair relations written out by hand from the conditional flip
    # rates p_minus = p/(1+(eta-1)p), p_plus = eta*p_minus:
    #   h = (1/2) log((1-p_minus)/p_plus)
    #   J = (1/4) log((1-p_minus) p_plus / (p_minus (1-p_plus)))
    for p in (0.01, 0.1, 0.3):
        for eta in (0.5, 1.0, 2.0, 4.0):
            pm = p / (1 + (eta - 1) * p)
            pp = eta * pm
            assert eta_field(p, eta) == pytest.approx(
                0.5 * np.log((1 - pm) / pp), abs=1e-14
            )
            assert eta_pair_coupling(p, eta) == pytest.approx(
                0.25 * np.log((1 - pm) * pp / (pm * (1 - pp))), abs=1e-14
            )
    # frozen values at p=0.1, eta=2
    assert eta_field(0.1, 2.0) == pytest.approx(0.8047189562170501, abs=1e-15)
    assert eta_pair_coupling(0.1, 2.0) == pytest.approx(
        0.1996269240544429, abs=1e-15
    )


def test_eta_one_is_iid_bitflip():
    em = eta_model(EtaModelSpec(p=0.1, eta=1.0, pairs=[(0, 1)]))
    ref = bitflip_model(2, 0.1)
    got = enumerate_log_probabilities(em)
    want = enumerate_log_probabilities(ref)
    finite = np.isfinite(want)
    assert np.array_equal(np.isfinite(got), finite)
    assert np.allclose(got[finite], want[finite], atol=1e-12)


def test_eta_model_on_cycle_recovers_nominal_parameters():
    # the pair couplings along a closed cycle realise a stationary two-state
    # chain, so the measured marginal and conditional ratio converge to the
    # nominal (p, eta) exponentially fast in the cycle length
    pairs = [(i, (i + 1) % 8) for i in range(8)]
    em = eta_model(EtaModelSpec(p=0.1, eta=2.0, pairs=pairs))
    p_m, eta_m = calibrate_eta(em, (3, 4))
    assert p_m == pytest.approx(0.1, abs=1e-6)
    assert eta_m == pytest.approx(2.0, abs=1e-5)


def test_ising_log_norm_matches_enumeration():
    h, j = 0.7, 0.3
    cases = [
        [(0, 1), (1, 2), (2, 3)],          # open chain
        [(0, 1), (1, 2), (2, 0)],          # 3-cycle
        [(0, 1), (1, 0)],                  # doubled pair
        [(0, 1), (2, 3), (3, 4), (4, 2)],  # mixed components
    ]
    for pairs in cases:
        n = 1 + max(max(a, b) for a, b in pairs)
        m = ising_noise_model(n, h, j, pairs)
        assert "pair_components" in m.metadata
        logs = enumerate_log_probabilities(m)
        total = np.exp(logs[np.isfinite(logs)]).sum()
        assert total == pytest.approx(1.0, abs=1e-12), pairs


def test_ising_log_norm_fallback_enumeration():
    # a degree-3 site breaks the chain/cycle decomposition; the normaliser
    # then comes from direct enumeration
    pairs = [(0, 1), (0, 2), (0, 3)]
    m = ising_noise_model(4, 0.5, 0.2, pairs)
    assert "pair_components" not in m.metadata
    logs = enumerate_log_probabilities(m)
    assert np.exp(logs[np.isfinite(logs)]).sum() == pytest.approx(1.0)


def test_calibrate_single_pair_against_hand_arithmetic():
    p, eta = 0.1, 2.0
    em = eta_model(EtaModelSpec(p=p, eta=eta, pairs=[(0, 1)]))
    h, j = eta_field(p, eta), eta_pair_coupling(p, eta)
    q = {(xa, xb): np.exp(h * (xa + xb) + j * xa * xb)
         for xa in (1, -1) for xb in (1, -1)}
    z = sum(q.values())
    p_m, eta_m = calibrate_eta(em, (0, 1))
    flip = (q[(-1, 1)] + q[(-1, -1)]) / z
    cond_flip = q[(-1, -1)] / (q[(1, -1)] + q[(-1, -1)])
    cond_clean = q[(-1, 1)] / (q[(1, 1)] + q[(-1, 1)])
    assert p_m == pytest.approx(flip, abs=1e-12)
    assert eta_m == pytest.approx(cond_flip / cond_clean, abs=1e-12)


def test_iid_sampler_matches_distribution():
    m = depolarising_model(4, 0.3)
    rng = np.random.default_rng(42)
    pats = sample_errors(m, rng, 20000)
    assert pats.shape == (20000, 4, 2)
    frac_i = (pats.sum(axis=2) == 0).mean()
    assert frac_i == pytest.approx(0.7, abs=0.01)
    # same seed, same draw
    again = sample_errors(m, np.random.default_rng(42), 20000)
    assert np.array_equal(pats, again)


def test_component_sampler_matches_enumeration():
    pairs = [(i, (i + 1) % 6) for i in range(6)]
    em = eta_model(EtaModelSpec(p=0.15, eta=3.0, pairs=pairs))
    logs = enumerate_log_probabilities(em)
    probs = np.exp(np.where(np.isfinite(logs), logs, -np.inf))
    # exact two-point function of neighbouring sites
    idx = np.arange(4 ** 6)
    c0 = (idx >> 10) & 3
    c1 = (idx >> 8) & 3
    exact_joint = probs[(c0 == 2) & (c1 == 2)].sum()
    rng = np.random.default_rng(3)
    pats = sample_errors(em, rng, 30000)
    got = (pats[:, 0, 0] & pats[:, 1, 0]).astype(bool).mean()
    sigma = np.sqrt(exact_joint * (1 - exact_joint) / 30000)
    assert abs(got - exact_joint) < 4 * sigma


def test_heat_bath_sampler_agrees_on_small_model():
    # force the generic path by building factors directly (no metadata)
    h, j = 0.6, 0.25
    log_site = np.array([h, 0.0, -h, 0.0])
    forb_site = np.array([False, True, False, True])
    log_pair = np.zeros(16)
    forb_pair = np.ones(16, dtype=bool)
    for ca, xa in ((0, 1), (2, -1)):
        for cb, xb in ((0, 1), (2, -1)):
            log_pair[ca * 4 + cb] = j * xa * xb
            forb_pair[ca * 4 + cb] = False
    m = FactoredNoiseModel(
        2, 2,
        [Factor(Region((0,)), log_site, forb_site),
         Factor(Region((1,)), log_site, forb_site),
         Factor(Region((0, 1)), log_pair, forb_pair)],
        mode="gibbs",
    )
    logs = enumerate_log_probabilities(m)
    weights = np.exp(np.where(np.isfinite(logs), logs, -np.inf))
    exact = weights / weights.sum()
    rng = np.random.default_rng(8)
    pats = sample_errors(m, rng, 3000, burn_in=200, thin=2)
    counts = np.zeros(16)
    codes = (pats[:, 0, 0].astype(int) * 2 + pats[:, 0, 1]) * 4 + (
        pats[:, 1, 0].astype(int) * 2 + pats[:, 1, 1]
    )
    for c in codes:
        counts[c] += 1
    tv = 0.5 * np.abs(counts / 3000 - exact).sum()
    assert tv < 0.05


def test_mrf_round_trip_chain():
    # joint built as a product of pair factors on a 3-site chain graph
    rng = np.random.default_rng(1)
    t01 = rng.random(16) + 0.1
    t12 = rng.random(16) + 0.1
    joint = np.zeros(64)
    for idx in range(64):
        c0, c1, c2 = (idx >> 4) & 3, (idx >> 2) & 3, idx & 3
        joint[idx] = t01[c0 * 4 + c1] * t12[c1 * 4 + c2]
    joint /= joint.sum()
    model = mrf_to_factors(joint, [(0, 1), (1, 2)])
    rebuilt = np.exp(enumerate_log_probabilities(model))
    assert np.allclose(rebuilt, joint, atol=1e-12)
    regions = sorted(f.region.sites for f in model.factors)
    assert regions == [(0, 1), (1, 2)]


def test_mrf_rejects_non_markov_joint():
    # direct 0..2 correlation cannot factor over the chain graph 0-1-2
    joint = np.full(64, 1.0)
    for idx in range(64):
        c0, c2 = (idx >> 4) & 3, idx & 3
        if c0 == c2:
            joint[idx] = 3.0
    joint /= joint.sum()
    with pytest.raises(ValueError, match="not a Markov field"):
        mrf_to_factors(joint, [(0, 1), (1, 2)])


def test_mrf_rejects_zero_entries():
    joint = np.zeros(16)
    joint[0] = 1.0
    with pytest.raises(ValueError, match="strictly positive"):
        mrf_to_factors(joint, [(0, 1)])


def test_bn_chain():
    # node 0: bit flip with rate 0.2; node 1 copies node 0's flip state
    # with probability 0.9 (else identity)
    t0 = np.array([[0.8, 0.0, 0.2, 0.0]])
    t1 = np.zeros((4, 4))
    t1[0] = [1.0, 0.0, 0.0, 0.0]
    t1[2] = [0.1, 0.0, 0.9, 0.0]
    t1[1] = [1.0, 0.0, 0.0, 0.0]
    t1[3] = [1.0, 0.0, 0.0, 0.0]
    model = bn_to_factors([t0, t1], [(), (0,)])
    assert np.exp(log_probability(model, P("II"))) == pytest.approx(0.8)
    assert np.exp(log_probability(model, P("XX"))) == pytest.approx(0.18)
    assert np.exp(log_probability(model, P("XI"))) == pytest.approx(0.02)
    assert log_probability(model, P("IX")) is FORBIDDEN


def test_bn_rejects_cycles():
    t = np.zeros((4, 4))
    t[:] = [0.5, 0.5, 0.0, 0.0]
    with pytest.raises(ValueError, match="cycle"):
        bn_to_factors([t, t], [(1,), (0,)])


def test_merge_factors_preserves_probabilities():
    m = eta_model(EtaModelSpec(p=0.1, eta=2.0, pairs=[(0, 1), (1, 2)]))
    merged = merge_factors(m, 0, 3)  # site factor 0 with pair (0,1)
    before = enumerate_log_probabilities(m)
    after = enumerate_log_probabilities(merged)
    finite = np.isfinite(before)
    assert np.array_equal(finite, np.isfinite(after))
    assert np.allclose(before[finite], after[finite], atol=1e-12)
