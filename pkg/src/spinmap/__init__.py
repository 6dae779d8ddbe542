"""Stat-mech compilation of stabiliser codes under correlated Pauli noise.

The package maps a stabiliser or subsystem code plus a factored Pauli
noise model onto a classical disordered spin model whose partition
function reproduces logical class probabilities exactly, then builds on
that mapping: exact and tensor-network maximum-likelihood decoders, and
Monte Carlo threshold estimation through finite-size scaling.
"""

from .pauli import (
    PauliOperator,
    Region,
    enumerate_group,
    multiply,
    pauli_from_index,
    pauli_index,
    scalar_commutator_exponent,
)
from .codes import (
    Code,
    Syndrome,
    attainable_syndromes,
    build_repetition_code,
    build_surface_code,
    build_toric_code,
    class_log_statistics,
    class_probability_oracle,
    coset_representative,
    logical_class_label,
    surface_eta_pairs,
    syndrome,
    toric_eta_pairs,
)
from .noise import (
    FORBIDDEN,
    EtaModelSpec,
    Factor,
    FactoredNoiseModel,
    bitflip_model,
    bn_to_factors,
    calibrate_eta,
    depolarising_model,
    enumerate_log_probabilities,
    factor_from_probabilities,
    eta_field,
    eta_model,
    eta_pair_coupling,
    independent_xz_model,
    iid_model,
    ising_noise_model,
    log_probability,
    merge_factors,
    mrf_to_factors,
    sample_error,
    sample_errors,
)
from .mapping import (
    INFINITE,
    CouplingTable,
    StatMechModel,
    build_statmech_model,
    delta_m,
    energy,
    factor_couplings,
    free_energy,
    log_partition_function,
    nishimori_couplings,
    partition_function_exact,
)
from .decoders import (
    DecodeResult,
    FailureRate,
    TensorNetwork,
    UnsupportedLayoutError,
    build_partition_network,
    contract_exact,
    contract_mps,
    decode_mfe,
    decode_ml_exact,
    decode_mp_exact,
    decode_tn,
    exact_failure_probability,
    logical_failure_rate,
    wilson_interval,
)
from .transforms import (
    CliffordAction,
    Measurement,
    MeasurementSchedule,
    bitflip_site_table,
    build_enlarged_code,
    build_history_code,
    circuit_noise_model,
    cnot_action,
    controlled_pauli_action,
    depolarising_site_table,
    fourier_action,
    ideal_round,
    identity_action,
    manifest_error,
    measurement_circuit,
    product_table,
    propagate_error,
    pushed_table,
    simulate_histories,
    with_noisy_measurements,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
