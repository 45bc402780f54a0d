"""
Data models for the persistlam engine.
Run-configuration schema (validated JSON input) and the JSON reports the
pipelines emit.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ===========================================
# ENUMS
# ===========================================

class Variant(str, Enum):
    """Graph-transform variant."""
    EXPANDED = "expanded"
    CONTRACTED = "contracted"


class Pipeline(str, Enum):
    """Pipelines the CLI can run."""
    EXPANDED = "expanded"
    CONTRACTED = "contracted"
    HYPERBOLIC = "hyperbolic"
    DEFORM = "deform"


class CheckName(str, Enum):
    """Named assertions a run config may request."""
    CONVERGED = "converged"
    CONTRACTION = "contraction"
    INVARIANCE = "invariance"
    LOCALIZATION = "localization"
    CLOSED_FORM = "closed_form"
    PLANES = "planes"
    HYPERBOLICITY = "hyperbolicity"
    COMMUTATION = "commutation"
    INJECTIVITY = "injectivity"
    SHADOW = "shadow"
    CONTAINMENT = "containment"
    EXPANSIVENESS = "expansiveness"
    J_INVARIANCE = "j_invariance"
    HOLOMORPHY = "holomorphy"


ParamValue = Union[float, int, bool, str]


# ===========================================
# RUN CONFIGURATION SCHEMA
# ===========================================

class GridConfig(BaseModel):
    """Grid resolution and truncation depth."""
    model_config = ConfigDict(extra="forbid")

    nodes: int = Field(default=256, ge=8, description="nodes on the primary leaf axis")
    secondary_nodes: int = Field(default=16, ge=8, description="nodes on further leaf axes")
    depth: int = Field(default=0, ge=0, le=14, description="code truncation depth")
    thick_nodes: int = Field(default=17, ge=8, description="nodes per thickened disk axis")


class TransformSettings(BaseModel):
    """Overrides for graph-transform tolerances; None means scenario/env default."""
    model_config = ConfigDict(extra="forbid")

    eta: Optional[float] = Field(default=None, gt=0)
    newton_tol: Optional[float] = Field(default=None, gt=0)
    newton_max: Optional[int] = Field(default=None, ge=1)
    fixpoint_tol: Optional[float] = Field(default=None, gt=0)
    fixpoint_max: Optional[int] = Field(default=None, ge=1)
    plane_eps: Optional[float] = Field(default=None, gt=0)
    plane_tol: Optional[float] = Field(default=None, gt=0)
    disk_radius: Optional[float] = Field(default=None, gt=0)


class SweepSettings(BaseModel):
    """Real-parameter sweep."""
    model_config = ConfigDict(extra="forbid")

    param: str
    values: List[float] = Field(default_factory=list)


class DeformSettings(BaseModel):
    """Complex parameter disk for deformation families."""
    model_config = ConfigDict(extra="forbid")

    param: str = "b"
    radius: float = Field(default=0.02, gt=0)
    rings: int = Field(default=2, ge=2)
    angles: int = Field(default=8, ge=4)
    cold_check: bool = True


class RunConfig(BaseModel):
    """
    Top-level run configuration.

    Example:
        {"scenario": "doubling", "params": {"eps": 0.1},
         "grid": {"nodes": 1024}, "pipeline": "expanded",
         "checks": ["converged", "closed_form"], "seed": 0}
    """
    model_config = ConfigDict(extra="forbid")

    scenario: str
    params: Dict[str, ParamValue] = Field(default_factory=dict)
    grid: GridConfig = Field(default_factory=GridConfig)
    transform: TransformSettings = Field(default_factory=TransformSettings)
    pipeline: Optional[Pipeline] = None
    checks: List[CheckName] = Field(default_factory=list)
    seed: Optional[int] = None
    sweep: Optional[SweepSettings] = None
    deform: Optional[DeformSettings] = None

    @field_validator("scenario")
    @classmethod
    def scenario_known(cls, value: str) -> str:
        from .scenarios import CATALOG

        if value not in CATALOG:
            known = ", ".join(sorted(CATALOG))
            raise ValueError(f"unknown scenario {value!r}; known: {known}")
        return value

    @model_validator(mode="after")
    def deform_needs_settings(self) -> "RunConfig":
        if self.pipeline == Pipeline.DEFORM and self.deform is None:
            self.deform = DeformSettings()
        return self


# ===========================================
# REPORTS
# ===========================================

class IterationRecord(BaseModel):
    k: int
    sup_distance: float
    ratio: Optional[float] = None


class NewtonSummary(BaseModel):
    max_iters: int = 0
    failures: int = 0


class TransformReport(BaseModel):
    """Per-iteration evidence of the contraction claims."""
    scenario: str = ""
    variant: Variant
    iterations: List[IterationRecord] = Field(default_factory=list)
    final_residual: float = 0.0
    newton: NewtonSummary = Field(default_factory=NewtonSummary)
    converged: bool = False

    @property
    def ratios(self) -> List[float]:
        return [r.ratio for r in self.iterations if r.ratio is not None]


class PlaneReport(BaseModel):
    variant: Variant
    iterations: List[IterationRecord] = Field(default_factory=list)
    converged: bool = False
    sup_norm: float = 0.0


class Offender(BaseModel):
    code: str
    u: List[float]
    ratio: float


class HyperbolicityEstimate(BaseModel):
    """Measured λ and the largest admissible r."""
    model_config = ConfigDict(populate_by_name=True)

    lambda_: float = Field(alias="lambda")
    r_max: int
    samples: int
    hyperbolic: bool
    lambda_by_r: List[float] = Field(default_factory=list)
    worst_offenders: List[Offender] = Field(default_factory=list)


class CheckResult(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class FamilyMember(BaseModel):
    t: List[float]
    converged: bool
    sup_distance: float
    sup_norm: float
    residuals: Dict[str, float] = Field(default_factory=dict)


class FamilyReport(BaseModel):
    members: List[FamilyMember] = Field(default_factory=list)
    parameter_cr_residual: float = 0.0
    largest_ring: float = 0.0
    coherence_constant: float = 0.0


class RunReport(BaseModel):
    """Top-level report.json contents."""
    scenario: str
    pipeline: str
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    status: str = "ok"
    checks: List[CheckResult] = Field(default_factory=list)
    transform: Optional[TransformReport] = None
    stable: Optional[TransformReport] = None
    unstable: Optional[TransformReport] = None
    planes: Optional[PlaneReport] = None
    hyperbolicity: Optional[HyperbolicityEstimate] = None
    family: Optional[FamilyReport] = None
    metrics: Dict[str, float] = Field(default_factory=dict)
    verification: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None
    generated_at: str = ""

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)
