"""Exact laboratory for boosting adversarial robustness on finite spaces."""

from .space import (
    Concept,
    Distribution,
    Hypothesis,
    InstanceSpace,
    Labeling,
    PerturbationRelation,
    PROB_TOL,
    bits,
    check_robust_realizable,
    compose_inverse,
    condition,
    grid_metric,
    invert,
    line_metric,
    make_metric_ball,
    mask_of,
    point_mass_distribution,
    points_of,
    relation_from_sets,
    uniform_distribution,
)
from .predictor import (
    ABSTAIN,
    CascadePredictor,
    MajorityPredictor,
    SelectiveClassifier,
    cascade_predict,
    forced_abstain_region,
    majority_vote,
    robust_region,
    selective_predict,
)
from .risk import (
    RiskReport,
    empirical_robust_risk,
    natural_error,
    risk_report,
    robust_risk,
    robust_shattering_dim,
    robustness_mass,
)
from .sampling import (
    ConditionalOracle,
    PseudoLabelingOracle,
    ReplayOracle,
    SamplingOracle,
    derive_rng,
    geometric_tail_check,
)
from .learners import (
    ConvertedLearner,
    ErmRobustLearner,
    ExpansionPredictor,
    LearnContext,
    Learner,
    RandomBitstringLearner,
    ScriptedCoverageLearner,
    convert_strong_to_barely,
    erm_robust,
    expand,
    random_bitstring_learner,
    scripted_oracle_learner,
)
from .boost import (
    BoostRun,
    RoundRecord,
    alpha_boost,
    beta_roboost,
    beta_uroboost,
    granular_boost,
    rejection_sampling,
    two_layer_boost,
)
from .errors import (
    BudgetExhaustedError,
    EmptyEventError,
    EmptyRegionSignal,
    InfeasibleScriptError,
    RoboostError,
    ScenarioError,
    WeakLearnerFailureError,
)
from .harness import (
    Report,
    Scenario,
    build_counterexample,
    build_granular_line,
    build_threshold_line,
    build_twin_blocks,
    bitstring_concepts,
    load_scenario,
    load_scenario_file,
    report_diff,
    run_scenario,
    write_csv,
    write_report,
)

__version__ = "0.1.0"
