"""Distance-field to closed-embedding pipeline on sampled manifolds."""

from .distance import distance_field, graph_shortest_paths, metric_ball
from .embedding import (
    DistortionReport,
    EmbedRequest,
    distortion,
    embed,
    embed_curve,
    nash_dimension,
    optimize_embedding,
)
from .errors import (
    CertificationError,
    EmbeddingError,
    ParseError,
    PipelineError,
    RefinementCapError,
    StageError,
    SurgeryError,
    UnsupportedQueryError,
    ValidationError,
)
from .fileio import load_manifold, save_manifold
from .geometry import (
    CovectorField,
    EmbeddingMap,
    MetricField,
    SampledManifold,
    ScalarField,
    original_metric_field,
    refine,
)
from .lifting import (
    EscapeReport,
    NonPropernessWitness,
    PropernessCertificate,
    escape_bound_check,
    lift,
    non_properness_witness,
    properness_certificate,
    pullback_check,
)
from .pipeline import RunReport, emit_plots, run_scenario
from .scenarios import (
    Scenario,
    WitnessConfig,
    circle,
    get_scenario,
    grid_patch,
    line_segment,
    list_scenarios,
    resolve_scenario,
    revolution_surface,
    scenario_from_dict,
    scenario_from_file,
)
from .smoothing import (
    SmoothingCertificate,
    SmoothingParams,
    lipschitz_number,
    mollify,
    smooth_approx,
    truncate_distance,
    tube_bounds,
    verify_tube,
)
from .surgery import (
    SpdReport,
    covector_norm,
    differential,
    modify_metric,
    spd_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
