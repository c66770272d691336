"""Symmetry tools for Brownian-driven SDEs.

The package verifies infinitesimal symmetries of Ito diffusions, applies
finite state/noise/clock/measure transformations, straightens symmetric
systems into triangular form, and validates the round trip by comparing
direct Monte Carlo estimates against reweighted estimates computed from the
reduced process.
"""

__version__ = "0.1.0"

from .catalog import CatalogEntry, default_parameters, get_model, model_ids, routes_for
from .checks import (
    ResidualReport,
    check_algebra_closure,
    check_determining_equations,
    check_finite_symmetry,
    check_lemma_identities,
    check_quasi_doob,
    check_reduced_form,
    check_straightening,
    check_triangular,
    structure_constants,
)
from .mc import (
    LegResult,
    McEstimate,
    ReconstructionResult,
    estimate_direct,
    estimate_reconstructed,
    girsanov_log_weight,
    run_reconstruction,
)
from .errors import (
    ConfigError,
    DegenerateWeightsWarning,
    DomainError,
    HorizonError,
    NumericError,
    RangeError,
    ReliabilityError,
    SingularMapError,
    StochsymError,
)
from .fields import FdConfig, MatrixField, ScalarField, VectorField
from .sde import (
    DiscretePath,
    Sde,
    evaluate_at,
    generator_apply,
    simulate_em,
    time_change_forward,
    time_change_inverse,
)
from .transform import (
    Diffeomorphism,
    FiniteTransformation,
    InfinitesimalTransformation,
    canonical_map,
    compose,
    flow_transformation,
    identity_transformation,
    invert,
    lie_bracket,
    make_infinitesimal,
    make_transformation,
    one_parameter_group,
    pushforward,
    transform_path,
    transform_sde,
    validate_infinitesimal,
    validate_transformation,
)

__all__ = [
    "__version__",
    "CatalogEntry",
    "ConfigError",
    "DegenerateWeightsWarning",
    "Diffeomorphism",
    "DiscretePath",
    "DomainError",
    "FdConfig",
    "FiniteTransformation",
    "HorizonError",
    "InfinitesimalTransformation",
    "LegResult",
    "MatrixField",
    "McEstimate",
    "NumericError",
    "RangeError",
    "ReconstructionResult",
    "ReliabilityError",
    "ResidualReport",
    "ScalarField",
    "Sde",
    "SingularMapError",
    "StochsymError",
    "VectorField",
    "canonical_map",
    "check_algebra_closure",
    "check_determining_equations",
    "check_finite_symmetry",
    "check_lemma_identities",
    "check_quasi_doob",
    "check_reduced_form",
    "check_straightening",
    "check_triangular",
    "compose",
    "default_parameters",
    "estimate_direct",
    "estimate_reconstructed",
    "evaluate_at",
    "flow_transformation",
    "generator_apply",
    "get_model",
    "girsanov_log_weight",
    "identity_transformation",
    "invert",
    "lie_bracket",
    "make_infinitesimal",
    "make_transformation",
    "model_ids",
    "one_parameter_group",
    "pushforward",
    "routes_for",
    "run_reconstruction",
    "simulate_em",
    "structure_constants",
    "time_change_forward",
    "time_change_inverse",
    "transform_path",
    "transform_sde",
    "validate_infinitesimal",
    "validate_transformation",
]
