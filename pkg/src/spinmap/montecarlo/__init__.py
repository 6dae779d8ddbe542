"""Metropolis sampling, quenched observables and threshold extraction."""

from .chains import (
    ChainState,
    init_chain,
    ising_view,
    metropolis_sweep,
    run_chain,
)
from .observables import (
    bootstrap_ci,
    correlation_length,
    equilibration_check,
    k_min,
    square_coords,
    susceptibility,
    xi_over_l_estimate,
)
from .kernel import (
    KernelModel,
    acceptance_table,
    compile_kernel_model,
    derive_seeds,
    disorder_signs,
    run_ensemble,
)
from .scaling import (
    ISING_CONTROL_PROTOCOL,
    THRESHOLD_PROTOCOLS,
    FssEstimate,
    crossing_fit,
    measure_point,
    nishimori_scan,
    nishimori_temperature,
    pure_ising_fit,
    sample_disorder,
    scan_curves,
    threshold_on_nishimori_line,
    threshold_scan,
)

__all__ = [name for name in dir() if not name.startswith("_")]
