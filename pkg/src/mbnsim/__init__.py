"""Cooperative dual-band (upper-mid-band + THz) network simulator."""

__version__ = "0.1.0"

from .arrays import (
    ArrayGeometry,
    UserPose,
    array_response,
    doppler_response,
    effective_array_response,
    element_distance,
    radial_velocity,
)
from .channel import (
    BandParams,
    ChannelRealization,
    build_thz_channels,
    build_umb_channel,
    molecular_noise_variance,
    perturb_csi,
    sample_blockage,
    thz_absorption_pathloss,
    thz_pathloss,
    umb_pathloss,
)
from .metrics import (
    AssociationState,
    HOCostParams,
    ho_aware_rate,
    ho_counts,
    ho_sum_rate,
    thz_sinr,
    total_hos,
    umb_sinr,
    user_rate,
)
from .analog import analog_fc, analog_pc, effective_power_budget
from .fp import AlgoOptions, FPState, mm_linearize_penalty, quadratic_transform, run_algorithm1
from .ho import jensen_objective, run_ho_cost, run_moop, transform_qos_jensen
from .baselines import nearest_association, rzf_beamformers
from .oracle import BudgetExceeded, brute_force_solve
from .results import BeamformerSet, SolveResult
from .scenario import Scenario, Topology, generate_topology, scenario_from_config, step_trajectory
from .subproblem import Infeasible, MaxIterations, SolveOptions, SubproblemSpec, build_bigM_constraints, solve
