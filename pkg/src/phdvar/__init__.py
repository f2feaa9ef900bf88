"""PHD and CPHD multi-target filter data updates with regional statistics:
mean and variance of the target count in arbitrary user-defined regions,
validated against an exact-enumeration multi-target Bayes oracle.
"""

from .core import (
    CardinalityDistribution,
    DegenerateModelError,
    Measurement,
    MultiTargetConfig,
    ObservationModel,
    Region,
    RegionalStats,
    State,
    TailMassWarning,
    WeightedParticleSet,
    ZeroMassError,
    count_in_region,
    disc_region,
    empty_region,
    annulus_region,
    fov_region,
    full_space,
    region_intersection,
    wrap_angle,
)
from .combinatorics import EsfTable, UpsilonVector, esf_all, upsilon, upsilon_inner, upsilon_vector
from .phd import (
    PhdConditionalWeights,
    phd_conditional_weights,
    phd_regional_stats,
    phd_update_intensity,
)
from .cphd import (
    CorrectorTerms,
    CphdConditionalWeights,
    CphdUpdateResult,
    cphd_conditional_weights,
    cphd_correctors,
    cphd_regional_stats,
    cphd_update,
    cphd_update_cardinality,
    cphd_update_intensity,
)
from .oracle import (
    DiscretePosterior,
    DiscretePrior,
    likelihood_exact,
    moments_exact,
    posterior_exact,
    tabular_model,
)
from .prediction import (
    BirthModel,
    MotionModel,
    constant_survival,
    cv_transition,
    predict_cardinality,
    predict_particles,
)
from .simulation import (
    INFERIOR_SENSOR,
    SUPERIOR_SENSOR,
    Scenario,
    SensorSpec,
    Track,
    generate_measurements,
    generate_truth,
    generate_truth_tracks,
    range_bearing_model,
    scenario_table1,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    detect_resolution_dip,
    run_benchmark,
    run_filter_experiment,
    run_oracle_check,
    run_resolution,
    run_scenario_filter,
)

__version__ = "0.1.0"
