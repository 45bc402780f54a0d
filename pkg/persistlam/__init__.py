"""
persistlam: persistent invariant laminations of perturbed maps.
Graph-transform fixed points, tangent planes, normal hyperbolicity and the
verification checks that go with them.
"""

__version__ = "0.1.0"
__description__ = "Numerical persistence of normally hyperbolic laminations"

# Module exports
from .config import settings
from .errors import LaminationError
from .models import CheckName, Pipeline, RunConfig, RunReport, Variant
from .bundle import NormalFrame, PlaneField, Section, build_normal_frames, section_to_immersion
from .dynsys import DeformationFamily, MapSystem, StateSpace, eval_map, jacobian
from .lamination import Axis, DiscreteLamination, MarkedRegion, TransversalCode
from .graph_transform import BaseDynamics, TransformConfig, apply_transform, iterate_to_fixed_point
from .scenarios import CATALOG, get_scenario

__all__ = [
    # Version info
    "__version__",
    "__description__",

    # Configuration
    "settings",

    # Models
    "CheckName",
    "Pipeline",
    "RunConfig",
    "RunReport",
    "Variant",

    # Geometry
    "Axis",
    "DiscreteLamination",
    "MarkedRegion",
    "TransversalCode",
    "NormalFrame",
    "PlaneField",
    "Section",
    "build_normal_frames",
    "section_to_immersion",

    # Dynamics
    "DeformationFamily",
    "MapSystem",
    "StateSpace",
    "eval_map",
    "jacobian",

    # Graph transform
    "BaseDynamics",
    "TransformConfig",
    "apply_transform",
    "iterate_to_fixed_point",

    # Scenarios
    "CATALOG",
    "get_scenario",

    # Errors
    "LaminationError",
]
