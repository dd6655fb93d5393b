"""Numerical toolkit for subordinated-Brownian-motion jump kernels,
Harnack-violation criteria, and exit-time Monte Carlo."""

__version__ = "0.1.0"

from .errors import (
    DivergentMomentError,
    DriftPathsUnsupportedError,
    DynamicRangeError,
    InvalidSpecError,
    PrecisionUnattainableError,
    RecipeInapplicableError,
    ScenarioGeometryError,
    SingularRegionError,
    ToolkitError,
    TruncationRequiredError,
    UnboundedMassError,
)
from .measure import (
    AtomicSum,
    AtomicTail,
    ExponentialMixture,
    GeneralDensity,
    Interval,
    SubordinatorSpec,
    laplace_exponent,
    mass,
    partial_moment,
    spec_from_json,
    spec_to_json,
    validate,
)
from .kernel import (
    BoxRegion,
    KernelEvaluator,
    KernelRatio,
    gaussian_exponential_integral,
    gaussian_exponential_integral_quadrature,
)
from .recipe import (
    CatalogExample,
    RecipeInput,
    RecipeReport,
    RecipeRun,
    catalog,
    check_recipe,
    critical_radius,
    prejump_mean,
)
from .sim import (
    Ball,
    Estimate,
    JumpChain,
    RngStream,
    RunningStat,
    TruncationPolicy,
    estimate_escape_probability,
    estimate_exit_distribution,
    estimate_exit_functional,
    exit_indicator_and_functional,
    sample_sbm_chain,
    sample_subordinator_events,
)
from .experiments import (
    DiagramScenario,
    FigureTable,
    Halfspace,
    VerificationResult,
    figure_jratio_data,
    verify_bernoulli_even,
    verify_diagram_prop,
    verify_integral_lemma,
    verify_intermediate_jump,
    verify_levy_system,
    verify_preferred_side,
)
