"""mtctrl: one nonlinear neural controller approximating many linear ones.

Train a shared connectivity matrix plus per-task bias vectors so the
controller's linearizations match a bank of desired LTI controllers in the
H2 sense, then certify the achieved cost against analytic upper and lower
bounds.
"""

from ._backend import backend_name
from .lti import (
    BalancedRealization,
    StateSpace,
    balanced_minimal_realization,
    gramians,
    h2_norm_sq,
    hinf_norm,
    impulse_response,
    l1_norm,
    lqr,
    negative_feedback,
    solve_lyapunov,
    spectral_abscissa,
)
from .neural import (
    NeuralController,
    TaskBias,
    equilibrium,
    linearize,
    logit,
    realize_bias,
    sigmoid,
    simulate,
    softplus,
)
from .trainer import (
    DecisionVars,
    GradientBlocks,
    MultiTaskProblem,
    TrainConfig,
    TrainResult,
    TrainStatus,
    cost,
    error_system,
    finite_diff_gradient,
    gradients,
    gradients_theta,
    init_vars,
    train,
)
from .bounds import (
    BoundsReport,
    a_function,
    bounds_report,
    constructive_vars,
    lambert_w_neg1,
    lower_bound_l1,
    lower_bound_sup,
    parallel_system,
    upper_bound,
)
from .benchmarks import (
    PlantCatalog,
    lqg_controller,
    plant_catalog,
    random_siso,
)

__version__ = "0.1.0"
