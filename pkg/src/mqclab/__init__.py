"""Exact small-network simulation of multiple-quantum coherence growth and
its localization under a tunable perturbation."""

from .errors import MqcError, NumericalError, ValidationError
from .evolution import (
    DensityOperator,
    Propagator,
    backward_evolve,
    cycle_propagator,
    evolve,
    forward_evolve,
    make_propagator,
    run_cycles,
    thermal_state,
    z_rotate,
)
from .mqc import (
    ClusterEstimate,
    MqcSpectrum,
    binomial_profile,
    cluster_size,
    decompose_orders,
    fidelity_profile,
    mqc_spectrum_direct,
    mqc_spectrum_phase,
    overlap_spectrum_direct,
    second_moment,
    width_at_1_over_e,
)
from .pheno import PhenoParams, fit_alpha_b, simulate_model, stationary_kloc, update_map_step
from .protocols import (
    ClusterSeries,
    PlateauReport,
    ProtocolConfig,
    detect_plateau,
    fit_power_law,
    run_equilibrium,
    run_growth,
    run_perturbed,
    sweep_kloc,
)
from .spin_core import (
    Basis,
    Operator,
    SpinSystem,
    build_basis,
    build_h0,
    build_hdd,
    build_heff,
    make_network,
)

__version__ = "0.1.0"
