"""Random walks that rewrite their own environment, plus the machinery to
sample that environment exactly or by Wilson's method and to test the
stationarity and diffusion claims at desk scale."""

__version__ = "0.1.0"

from .network import (
    Network,
    FiniteNetwork,
    NetworkError,
    Window,
    make_lattice,
    make_triangular,
    make_finite_cayley,
    as_finite_network,
    wire,
    window_vertices,
    lattice_distance,
)
from .mechanism import (
    Mechanism,
    TableMechanism,
    HiddenMechanism,
    MechanismError,
    expand_hidden,
    degenerate_hidden,
    mech_aldous_broder,
    mech_rotor_perm,
    mech_p_rotor_1d,
    mech_p_rotor_zd,
    mech_pq_rotor,
    mech_pq_cycle,
    mech_hv,
    mech_triangular,
    mech_hidden_triangular,
    step_kernel,
    check_T1,
    check_elliptic,
    check_MG1,
    check_MG2,
    gamma_matrix,
)
from .walk import (
    WalkError,
    WalkerState,
    HiddenState,
    Trajectory,
    FiniteScope,
    WindowScope,
    CayleyScope,
    rwlm_step,
    rwhlm_step,
    run_rwlm,
    run_rwhlm,
    scenery_step,
    recentered_rotors,
    lift_hidden_rotors,
    emulate_equivalence,
)
from .stats import (
    StatsError,
    StatsReport,
    ErgodicTarget,
    ExactScenery,
    frobenius_error,
    estimate_diffusion,
    embed_positions,
    ergodic_fraction,
    martingale_drift,
    normality_surrogate,
    stationarity_exact,
)
from .forest import (
    ForestError,
    OrientedForest,
    ExactDistribution,
    loop_erase,
    wilson_rooted,
    wilson_transient_window,
    sample_wsf_plus,
    sample_wsf_plus_window,
    tree_weight,
    enumerate_spanning_trees,
    exact_wsf_plus,
    exact_wsf_plus_product,
    exact_wsf_plus_unicycle,
    check_forest_invariants,
)
