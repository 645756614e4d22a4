"""Monte Carlo statistics of Brownian flights near rough domain boundaries.

A Brownian flight starts at the center of a random Whitney cube at
distance ~epsilon from the boundary of a bounded domain and runs until
it hits the boundary.  This package builds the Whitney decomposition,
samples flights reproducibly, and verifies the power-law scaling of the
duration and hitting-distance tails against exact 1D oracles and
fractal test domains.
"""

from .analysis import (
    DimensionEstimate,
    ExponentFit,
    SurvivalCurve,
    VerificationReport,
    empirical_survival,
    fit_exponent,
    fit_length_exponent,
    nested_windows,
    sausage_upper_bound,
    theorem_report,
    whitney_dimension,
)
from .config import SimConfig, load_config
from .errors import ConfigurationError, DecompositionError, FitWindowError
from .flight import (
    DeltaRegReport,
    FlightRecord,
    StepPolicy,
    beta_s,
    delta_beta_s,
    estimate_delta_regularity,
    read_records_jsonl,
    run_campaign,
    run_paths_from,
    sample_flight,
    write_records_jsonl,
)
from .geometry import (
    KOCH_DIMENSION,
    Domain,
    distance_interval_on_cube,
    koch_snowflake_vertices,
    make_domain,
    r_omega,
)
from .oracles import (
    IntervalSurvivalQuery,
    cube_survival,
    interval_survival,
    interval_survival_eigen,
    interval_survival_reflection,
)
from .whitney import (
    DyadicCube,
    HypothesisReport,
    WhitneyDecomposition,
    check_self_similarity_hypothesis,
    decompose,
    layer,
    layer_counts,
)

__version__ = "0.1.0"
