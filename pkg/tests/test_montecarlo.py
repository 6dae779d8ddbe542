"""Metropolis chains, quenched observables, scaling fits."""

import numpy as np
import pytest

from spinmap import (
    PauliOperator,
    bitflip_model,
    build_statmech_model,
    build_toric_code,
    depolarising_model,
)
from spinmap.montecarlo import (
    bootstrap_ci,
    compile_kernel_model,
    correlation_length,
    crossing_fit,
    derive_seeds,
    disorder_signs,
    equilibration_check,
    init_chain,
    ising_view,
    k_min,
    metropolis_sweep,
    nishimori_temperature,
    run_chain,
    run_ensemble,
    susceptibility,
)
from tests.test_mapping import xx_code


def test_susceptibility_frozen_all_up():
    L = 4
    samples = np.ones((5, L * L))
    assert susceptibility(samples, (0.0, 0.0), L) == pytest.approx(L * L)
    assert susceptibility(samples, k_min(L), L) == pytest.approx(0.0,
                                                                 abs=1e-12)


def test_susceptibility_hand_value():
    # 4 spins on a ring, k = pi/2 along the chain: amplitudes 1, i, -1, -i
    coords = np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 2.0], [0.0, 3.0]])
    samples = np.array([[1, 1, -1, 1]])
    chi = susceptibility(samples, (0.0, np.pi / 2), 4, coords=coords)
    # amp = 1 + i + 1 - i = 2, |amp|^2 / L^2 = 4/16
    assert chi == pytest.approx(0.25, abs=1e-12)


def test_susceptibility_requires_geometry():
    with pytest.raises(ValueError, match="coordinates"):
        susceptibility(np.ones((2, 10)), (0.0, 0.0), 4)


def test_correlation_length_values():
    assert correlation_length(1.0, 1.0, 8) == 0.0
    want = 1.0 / (2.0 * np.sin(np.pi / 12))
    assert correlation_length(2.0, 1.0, 12) == pytest.approx(want, rel=1e-12)
    assert np.isnan(correlation_length(0.5, 1.0, 8))


def test_bootstrap_ci():
    lo, hi = bootstrap_ci(np.full(50, 3.25), resamples=500)
    assert lo == hi == pytest.approx(3.25)
    rng = np.random.default_rng(5)
    draws = rng.standard_normal(1000)
    lo, hi = bootstrap_ci(draws, rng=np.random.default_rng(1))
    half = (hi - lo) / 2
    assert half == pytest.approx(1.96 / np.sqrt(1000), rel=0.15)
    again = bootstrap_ci(draws, rng=np.random.default_rng(1))
    assert (lo, hi) == again
    with pytest.raises(ValueError, match="10"):
        bootstrap_ci(np.ones(5))


def test_equilibration_check():
    flat = [(1.0, 0.9, 1.1)] * 4
    ok, _ = equilibration_check(flat)
    assert ok
    drift = [(0.2, 0.19, 0.21), (0.5, 0.49, 0.51), (0.9, 0.89, 0.91)]
    ok, report = equilibration_check(drift)
    assert not ok and not report["equilibrated"]
    with pytest.raises(ValueError, match="three"):
        equilibration_check(drift[:2])


def test_metropolis_single_spin_tanh():
    # one free spin in field 2J with J=1: <s> = tanh(2 beta)
    code = xx_code()
    noise = bitflip_model(2, 0.1)
    model = build_statmech_model(code, noise, PauliOperator.identity(2))
    rng = np.random.default_rng(42)
    _, samples = run_chain(model, 100_000, rng, burn_in=500)
    m = ising_view(samples[:, 0]).mean()
    want = np.tanh(2.0 * noise.nishimori_beta)
    assert m == pytest.approx(want, abs=0.03)


def test_metropolis_beta_zero_uniform():
    code = xx_code()
    noise = bitflip_model(2, 0.1)
    model = build_statmech_model(code, noise, PauliOperator.identity(2),
                                 beta=0.0)
    rng = np.random.default_rng(0)
    _, samples = run_chain(model, 4000, rng)
    frac = samples[:, 0].mean()
    assert abs(frac - 0.5) < 0.05


def test_metropolis_respects_frozen_sectors():
    code = build_toric_code(2)
    noise = bitflip_model(code.n, 0.3)
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    rng = np.random.default_rng(9)
    state = init_chain(model, rng)
    for _ in range(200):
        metropolis_sweep(model, state, rng)
        assert model.satisfies_constraints(state.spins)


def test_metropolis_histogram_matches_gibbs():
    # hot enough that 2*10^4 sweeps cover the 32 allowed assignments
    code = build_toric_code(2)
    noise = bitflip_model(code.n, 0.3)
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    cs = model.allowed_configurations()
    w = np.exp(-model.beta * model.energies(cs))
    w /= w.sum()
    keys = {tuple(row): i for i, row in enumerate(cs)}
    rng = np.random.default_rng(31)
    _, samples = run_chain(model, 20_000, rng, burn_in=1000)
    counts = np.zeros(len(cs))
    for row in samples:
        counts[keys[tuple(row)]] += 1
    tv = 0.5 * np.abs(counts / counts.sum() - w).sum()
    assert tv < 0.08


def test_kernel_structure_eta():
    from spinmap import EtaModelSpec, eta_model, toric_eta_pairs
    from spinmap.noise import eta_field, eta_pair_coupling

    code = build_toric_code(3)
    noise = eta_model(EtaModelSpec(0.1, 2.0, toric_eta_pairs(code)))
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    km = compile_kernel_model(model)
    assert km.n_spins == 9 and km.L == 3
    assert len(km.sites2) == 18 and len(km.sites4) == 18
    assert km.coupling2 == pytest.approx(1.0, abs=1e-12)
    want = eta_pair_coupling(0.1, 2.0) / eta_field(0.1, 2.0)
    assert km.coupling4 == pytest.approx(want, abs=1e-12)
    assert np.diff(km.off2).max() == 4 and np.diff(km.off4).max() == 8


def test_kernel_rejects_depolarising():
    code = build_toric_code(2)
    noise = depolarising_model(code.n, 0.1)
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    with pytest.raises(ValueError, match="unsupported term"):
        compile_kernel_model(model)


def test_disorder_signs_parity():
    code = build_toric_code(2)
    noise = bitflip_model(code.n, 0.1)
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    km = compile_kernel_model(model)
    x = np.zeros(code.n, dtype=np.int64)
    x[int(km.sites2[0])] = 1
    s2, _ = disorder_signs(km, x)
    flipped = np.where(km.sites2 == km.sites2[0])[0]
    assert np.all(s2[flipped] == -1)
    assert np.sum(s2 == -1) == len(flipped)


def test_kernel_histogram_matches_exact_gibbs():
    code = build_toric_code(2)
    noise = bitflip_model(code.n, 0.3)
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    km = compile_kernel_model(model)
    cs = model.allowed_configurations()
    w = np.exp(-model.beta * model.energies(cs))
    star_pattern = cs[:, km.active]
    probs = np.zeros(2 ** km.n_spins)
    for pat, wi in zip(star_pattern, w):
        idx = int(np.dot(pat, 1 << np.arange(km.n_spins)))
        probs[idx] += wi
    probs /= probs.sum()

    nchains = 8192
    x = np.zeros((nchains, code.n), dtype=np.int64)
    s2, s4 = disorder_signs(km, x)
    out = run_ensemble(km, s2, s4, model.beta, 10, derive_seeds(77, nchains))
    final_c = ((1 - out["final"]) // 2).astype(np.int64)
    counts = np.bincount(
        final_c @ (1 << np.arange(km.n_spins)), minlength=len(probs))
    tv = 0.5 * np.abs(counts / counts.sum() - probs).sum()
    assert tv < 0.05


def test_kernel_seed_determinism():
    code = build_toric_code(3)
    noise = bitflip_model(code.n, 0.1)
    model = build_statmech_model(code, noise, PauliOperator.identity(code.n))
    km = compile_kernel_model(model)
    rng = np.random.default_rng(4)
    x = rng.integers(0, 2, (16, code.n))
    s2, s4 = disorder_signs(km, x)
    seeds = derive_seeds(123, 16)
    a = run_ensemble(km, s2, s4, 1.0, 8, seeds)
    b = run_ensemble(km, s2, s4, 1.0, 8, seeds)
    assert np.array_equal(a["final"], b["final"])
    assert np.array_equal(a["m0sq"], b["m0sq"])
    assert np.array_equal(a["mksq"], b["mksq"])


def test_crossing_fit_synthetic_recovery():
    # exact quadratic scaling data must be refit to 1%
    tc_true, nu_true = 2.0, 1.5
    curves = []
    for L in (8, 12, 16):
        T = np.linspace(1.85, 2.15, 9)
        x = L ** (1 / nu_true) * (T - tc_true)
        y = 0.9 + 0.35 * x - 0.06 * x * x
        curves.append({"L": L, "T": T, "xi_over_l": y,
                       "se": np.full(len(T), 0.004)})
    fit = crossing_fit(curves, resamples=60,
                       rng=np.random.default_rng(2))
    assert fit.crossed
    assert fit.t_c == pytest.approx(tc_true, rel=0.01)
    assert fit.nu == pytest.approx(nu_true, rel=0.01)
    assert fit.t_c_ci[0] <= fit.t_c <= fit.t_c_ci[1]


def test_crossing_fit_absence():
    curves = []
    for L, offset in ((8, 0.2), (16, 0.6)):
        T = np.linspace(1.8, 2.2, 6)
        curves.append({"L": L, "T": T,
                       "xi_over_l": np.full(len(T), offset),
                       "se": np.full(len(T), 0.01)})
    fit = crossing_fit(curves, resamples=10)
    assert not fit.crossed
    assert "no transition" in fit.note


def test_nishimori_temperature():
    # eta=1 reduces to the independent bit-flip line
    p = 0.109
    want = 1.0 / (0.5 * np.log((1 - p) / p))
    assert nishimori_temperature(p, 1.0) == pytest.approx(want, rel=1e-12)
