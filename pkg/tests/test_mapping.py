"""Spin-model compilation: couplings, frozen sectors, partition sums."""

import numpy as np
import pytest

from spinmap import (
    Code,
    PauliOperator,
    bitflip_model,
    build_toric_code,
    class_log_statistics,
    class_probability_oracle,
    depolarising_model,
    eta_field,
    eta_model,
    eta_pair_coupling,
    EtaModelSpec,
    factor_from_probabilities,
    iid_model,
    independent_xz_model,
    toric_eta_pairs,
)
from spinmap.mapping import (
    INFINITE,
    build_statmech_model,
    delta_m,
    energy,
    factor_couplings,
    free_energy,
    log_partition_function,
    nishimori_couplings,
    partition_function_exact,
)
from spinmap.pauli import Region


def xx_code():
    xx = PauliOperator.from_string("XX")
    logicals = [
        PauliOperator.from_string("II"),
        PauliOperator.from_string("ZZ"),
        PauliOperator.from_string("XI"),
        PauliOperator.from_string("XI") * PauliOperator.from_string("ZZ"),
    ]
    return Code(2, 2, [xx], logical_representatives=logicals)


def test_xx_code_hand_example():
    # single XX stabiliser, bit flips at p = 0.1, trivial disorder:
    # the two spin values weight (1-p)^2 and p^2
    code = xx_code()
    noise = bitflip_model(2, 0.1)
    model = build_statmech_model(code, noise, PauliOperator.identity(2))
    beta = noise.nishimori_beta
    w0 = np.exp(-beta * energy(model, [0]))
    w1 = np.exp(-beta * energy(model, [1]))
    assert w0 == pytest.approx(0.81, abs=1e-12)
    assert w1 == pytest.approx(0.01, abs=1e-12)
    assert partition_function_exact(model) == pytest.approx(0.82, abs=1e-12)
    assert free_energy(model) == pytest.approx(-np.log(0.82) / beta,
                                               abs=1e-12)


def test_nishimori_couplings_depolarising():
    noise = depolarising_model(1, 0.1)
    j = nishimori_couplings(noise.factors[0], beta=1.0)
    want = 0.25 * np.log(27.0)
    # canonical single-site order I, Z, X, Y
    for idx in (1, 2, 3):
        assert j[idx] == pytest.approx(want, abs=1e-12)
    assert j[0] == pytest.approx(0.25 * np.log(0.9 * (0.1 / 3) ** 3),
                                 abs=1e-12)
    # halving beta doubles every coupling
    j2 = nishimori_couplings(noise.factors[0], beta=0.5)
    assert np.allclose(j2, 2 * j, atol=1e-12)


def test_nishimori_couplings_independent_xz():
    q = 0.07
    noise = independent_xz_model(1, q, q)
    j = nishimori_couplings(noise.factors[0], beta=1.0)
    assert abs(j[3]) <= 1e-14          # the Y coupling cancels exactly
    want = 0.5 * np.log((1 - q) / q)
    assert j[1] == pytest.approx(want, abs=1e-12)
    assert j[2] == pytest.approx(want, abs=1e-12)


def test_bitflip_factor_frozen():
    p = 0.1
    noise = bitflip_model(1, p)
    table = factor_couplings(noise.factors[0], 2)
    assert table.frozen
    assert sorted(map(tuple, table.transversal)) == [(0, 0), (0, 1)]
    z = PauliOperator.from_string("Z")
    assert table.coupling_of(z) == pytest.approx(0.5 * np.log(9.0),
                                                 abs=1e-12)
    assert table.constraint_rows.tolist() == [[0, 1]]
    with pytest.raises(ValueError, match="frozen"):
        nishimori_couplings(noise.factors[0])


def test_non_subgroup_support_rejected():
    f = factor_from_probabilities(Region((0,)), [0.4, 0.3, 0.3, 0.0], 2)
    with pytest.raises(ValueError, match="subgroup"):
        factor_couplings(f, 2)


def test_identity_forbidden_rejected():
    f = factor_from_probabilities(Region((0,)), [0.0, 0.5, 0.25, 0.25], 2)
    with pytest.raises(ValueError, match="identity"):
        factor_couplings(f, 2)


def test_toric_bitflip_structure():
    code = build_toric_code(2)
    noise = bitflip_model(code.n, 0.1)
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    assert model.num_spins == 8
    assert model.redundancy == 2
    # plaquette spins are frozen equal: 2 * 2^4 assignments survive
    assert model.allowed_count() == 32
    for ft in model.terms:
        for t in range(len(ft.couplings)):
            if ft.sigmas[t].any():
                # at the Nishimori point every edge coupling is 1 and
                # touches the two incident stars
                assert ft.couplings[t] == pytest.approx(1.0, abs=1e-12)
                assert len(ft.spins[t]) == 2
                assert all(model.spin_generators[k].z.sum() == 0
                           for k in ft.spins[t])
    # unequal plaquette spins violate the frozen constraints
    c = np.zeros(8, dtype=int)
    c[[k for k, g in enumerate(model.spin_generators)
       if g.x.sum() == 0][0]] = 1
    assert energy(model, c) == INFINITE


def test_theorem2_toric_depolarising():
    code = build_toric_code(2)
    noise = depolarising_model(code.n, 0.1)
    rng = np.random.default_rng(7)
    errors = [PauliOperator.identity(code.n),
              PauliOperator.single_site(code.n, 0, 1, 0),
              PauliOperator.single_site(code.n, 3, 1, 1)]
    for _ in range(8):
        errors.append(PauliOperator(rng.integers(0, 2, code.n),
                                    rng.integers(0, 2, code.n), 2))
    for e in errors:
        pr = class_probability_oracle(code, noise, e)
        full = build_statmech_model(code, noise, e)
        z_full = partition_function_exact(full)
        assert z_full == pytest.approx(4.0 * pr, rel=1e-10)
        indep = build_statmech_model(code, noise, e,
                                     selection="independent")
        assert indep.num_spins == 6 and indep.redundancy == 0
        assert partition_function_exact(indep) == pytest.approx(pr,
                                                                rel=1e-10)


def test_theorem2_eta():
    code = build_toric_code(2)
    noise = eta_model(EtaModelSpec(0.1, 2.0, toric_eta_pairs(code)))
    some_x = PauliOperator.single_site(code.n, 2, 1, 0)
    for e in (PauliOperator.identity(code.n), some_x):
        pr = class_probability_oracle(code, noise, e)
        assert pr > 0
        model = build_statmech_model(code, noise, e)
        assert partition_function_exact(model) == pytest.approx(4.0 * pr,
                                                                rel=1e-10)
    # couplings: unit edge terms on star pairs, four-spin face terms
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    j4 = eta_pair_coupling(0.1, 2.0) / eta_field(0.1, 2.0)
    arities = set()
    for ft in model.terms:
        for t in range(len(ft.couplings)):
            if not ft.sigmas[t].any():
                continue
            arities.add(len(ft.spins[t]))
            if len(ft.spins[t]) == 2:
                assert ft.couplings[t] == pytest.approx(1.0, abs=1e-12)
            else:
                assert ft.couplings[t] == pytest.approx(j4, abs=1e-12)
    assert arities == {2, 4}


def test_forbidden_class_gives_zero():
    code = build_toric_code(2)
    noise = bitflip_model(code.n, 0.1)
    single_z = PauliOperator.single_site(code.n, 0, 0, 1)
    model = build_statmech_model(code, noise, single_z)
    assert model.forbidden
    assert log_partition_function(model) == -np.inf
    assert partition_function_exact(model) == 0.0
    assert free_energy(model) == INFINITE
    assert class_probability_oracle(code, noise, single_z) == 0.0
    # a full plaquette of Z errors is a stabiliser: class is attainable
    plaq = next(g for g in code.stabiliser_generators if g.x.sum() == 0)
    model2 = model.rebind(plaq)
    assert not model2.forbidden
    assert partition_function_exact(model2) == pytest.approx(
        4.0 * class_probability_oracle(code, noise, plaq), rel=1e-10)


def test_theorem2_qutrit():
    code = build_toric_code(2, d=3)
    rng = np.random.default_rng(11)
    probs = rng.dirichlet(np.ones(9) * 5.0)
    noise = iid_model(np.tile(probs, (code.n, 1)), d=3, order="internal")
    errors = [PauliOperator.identity(code.n, 3)]
    for _ in range(4):
        errors.append(PauliOperator(rng.integers(0, 3, code.n),
                                    rng.integers(0, 3, code.n), 3))
    for e in errors:
        pr = class_probability_oracle(code, noise, e)
        model = build_statmech_model(code, noise, e)
        assert partition_function_exact(model) == pytest.approx(
            9.0 * pr, rel=1e-10)


def test_gauge_symmetry():
    code = build_toric_code(2)
    noise = depolarising_model(code.n, 0.15)
    rng = np.random.default_rng(3)
    e = PauliOperator(rng.integers(0, 2, code.n),
                      rng.integers(0, 2, code.n), 2)
    model = build_statmech_model(code, noise, e)
    for _ in range(20):
        l = rng.integers(0, 8)
        c = rng.integers(0, 2, 8)
        shifted = model.rebind(e * code.stabiliser_generators[l])
        c_shift = c.copy()
        c_shift[l] = (c_shift[l] + 1) % 2
        assert energy(shifted, c) == pytest.approx(energy(model, c_shift),
                                                   abs=1e-10)
    shifted = model.rebind(e * code.stabiliser_generators[2])
    assert log_partition_function(shifted) == pytest.approx(
        log_partition_function(model), abs=1e-10)


def test_delta_m():
    code = build_toric_code(2)
    noise = bitflip_model(code.n, 0.1)
    e = PauliOperator.single_site(code.n, 1, 1, 0)
    assert delta_m(code, noise, e, 0) == 0.0
    beta = noise.nishimori_beta
    for m in range(4):
        lbl = code.logical_representatives[m]
        if lbl.z.sum() > 0:
            continue       # Z-type classes are forbidden under bit flips
        stats_base = class_log_statistics(code, noise, e)
        stats_shift = class_log_statistics(code, noise, e * lbl)
        want = -(stats_shift["logsum"] - stats_base["logsum"]) / beta
        assert delta_m(code, noise, e, m) == pytest.approx(want, abs=1e-10)


def test_energy_fixed_under_beta_change():
    code = build_toric_code(2)
    noise = depolarising_model(code.n, 0.1)
    e = PauliOperator.single_site(code.n, 0, 1, 0)
    at_nishimori = build_statmech_model(code, noise, e)
    hot = build_statmech_model(code, noise, e, beta=0.3)
    c = np.ones(8, dtype=int)
    assert energy(hot, c) == pytest.approx(energy(at_nishimori, c),
                                           abs=1e-12)
    assert log_partition_function(hot) != pytest.approx(
        log_partition_function(at_nishimori), abs=1e-6)


def test_rebind_shares_couplings():
    code = build_toric_code(2)
    noise = depolarising_model(code.n, 0.1)
    e1 = PauliOperator.identity(code.n)
    e2 = PauliOperator.single_site(code.n, 4, 1, 1)
    model = build_statmech_model(code, noise, e1)
    clone = model.rebind(e2)
    for a, b in zip(model.terms, clone.terms):
        assert a.couplings is b.couplings
    fresh = build_statmech_model(code, noise, e2)
    assert log_partition_function(clone) == pytest.approx(
        log_partition_function(fresh), abs=1e-12)


def test_partition_cap_enforced():
    code = build_toric_code(2)
    noise = depolarising_model(code.n, 0.1)
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    with pytest.raises(ValueError, match="cap"):
        log_partition_function(model, cap=100)


def test_coupling_table_lookup_errors():
    noise = bitflip_model(1, 0.2)
    table = factor_couplings(noise.factors[0], 2)
    with pytest.raises(KeyError):
        table.coupling_of(PauliOperator.from_string("X"))
