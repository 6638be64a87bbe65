"""Online contextual decision-making with resource constraints.

A library plus CLI for sequential decision problems where each round
predicts a reward vector and consumption matrix from a context, maximizes
a dual-adjusted linear objective over a decision region, and updates both
mirror-descent dual variables and the prediction model from realized
outcomes.  Ships synthetic knapsack and grid-path instance families and a
reproducible multi-trial experiment harness.
"""

from .core import (
    Arrival,
    ConfigurationError,
    CostVector,
    DualPair,
    Prediction,
    decision_cost,
    unvec_pair,
    vec_pair,
)
from .datagen import (
    SyntheticInstance,
    instance_rng,
    load_arrival_stream,
    make_instance,
    make_knapsack_instance,
    make_longest_path_instance,
    sample_weight_matrix,
    save_arrival_stream,
)
from .duals import (
    ConsumptionSet,
    DualState,
    LeftoverValueUtility,
    SeparableQuadraticUtility,
    UpperBoxSet,
    UtilityModel,
    ZeroUtility,
    initial_duals,
    lemma1_step_sizes,
    omd_step,
    power_schedule_step_size,
    project_theta_box_ball,
    subgrad_phi,
    subgrad_xi,
)
from .losses import (
    LossKind,
    cost_grad_to_prediction_grad,
    ls_cost_grad,
    ls_cost_loss,
    ls_pred_grad,
    ls_pred_loss,
    spo_loss,
    spo_plus_loss,
    spo_plus_subgrad_cost,
)
from .models import (
    AdamState,
    BenchmarkKind,
    LinearModel,
    MlpModel,
    TrainingBuffer,
    adam_step,
    backward,
    benchmark_predict,
    fit_erm,
    forward,
    load_model,
    make_adam_state,
    save_model,
)
from .oracles import (
    FeasibleRegionOracle,
    GridPathRegion,
    KnapsackRegion,
    brute_force_solve,
)
from .simulate import (
    EpisodeConfig,
    Metrics,
    PeriodicSchedule,
    PowerSchedule,
    Trajectory,
    compute_objective,
    relative_regret,
    run_episode,
    run_trials,
    update_schedule,
)

__version__ = "0.1.0"
