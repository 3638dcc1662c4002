"""Multiple orthogonal polynomials and ratio-asymptotic limits for Nikishin
systems on star-like sets, with cross-validation of the recurrence side
against genus-zero conformal-map predictions."""

from .counting import (
    IndexPair,
    Lambda,
    SystemShape,
    Z,
    count_Mj,
    epsilon,
    index_pair,
    lambda_closed_form,
    residue_ell,
    sign_f_product,
    sign_phi_infinity,
    theta,
)
from .measures import (
    DiscretizedMeasure,
    MeasureCache,
    MeasureConstructionError,
    StarSystemConfig,
    SupportError,
    WeightSpec,
    build_base_measure,
    cauchy_transform,
    gauss_jacobi,
    load_config,
    moments,
    nested_measure,
    varying_measure,
    working_prec,
)
from .mop import (
    MonicPolynomial,
    MopSystem,
    ZeroSet,
    compute_Qd,
    interlace,
    k_norm_check,
    psi_eval,
    psi_zeros,
    recurrence_coefficient,
)
from .surface import (
    BranchAssignmentError,
    CombinatorialMismatchError,
    ConformalFamily,
    Uniformization,
    UniformizationError,
    branch_points_check,
    normalize_family,
    solve_uniformization,
)
from .limits import (
    LimitIdentityError,
    LimitTable,
    C_constant,
    F_tilde,
    boundary_constancy_check,
    eta,
    f_product,
    predict_a,
    zero_at_origin_collision,
)
from .harness import (
    cfg_a,
    cfg_b,
    cfg_c,
    run_convergence,
    run_counting_suite,
    run_crossval,
    run_ratio,
    run_verify,
)

__version__ = "0.1.0"
