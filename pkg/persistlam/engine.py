"""
Run orchestration for the persistlam CLI.
Builds the scenario context, runs a pipeline, evaluates the configured
checks and writes the output files.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .bundle import NormalFrame, PlaneField, Section, section_to_immersion, tangent_planes_fd
from .complex_structure import (
    FamilyResult,
    ambient_planes,
    deform_family,
    holomorphy_residual_section,
    j_invariance_residual,
)
from .config import settings
from .dynsys import MapSystem
from .errors import HypothesisError, InputError, LaminationError, NumericError, SchemaError
from .graph_transform import (
    BaseDynamics,
    Pullback,
    TransformConfig,
    apply_transform,
    bump_weights,
    contraction_probe,
    iterate_to_fixed_point,
    pullback_table,
)
from .hyperbolic import persist_hyperbolic
from .lamination import DiscreteLamination
from .models import (
    CheckName,
    CheckResult,
    HyperbolicityEstimate,
    PlaneReport,
    Pipeline,
    RunConfig,
    RunReport,
    TransformReport,
    Variant,
)
from .scenarios import Scenario, get_scenario
from .tangent import MARGIN, PlaneTransport, estimate_normal_hyperbolicity, iterate_plane_field, plane_contraction_ratios
from .utils import code_label, parse_code_label, read_csv, read_json, write_csv, write_json
from .verify import (
    MIN_ORBIT,
    ImmersedLamination,
    exact_orbit,
    injectivity_margin,
    plaque_expansiveness_probe,
    plaque_growth_check,
    shadow_check_backward,
    shadow_check_forward,
    surviving_core,
)

logger = logging.getLogger(__name__)

# ===========================================
# CHECK THRESHOLDS
# ===========================================
INVARIANCE_TOL = 1e-8
COMMUTATION_TOL = 1e-8
CONTRACTION_SLACK = 0.1
CONTAINMENT_FRACTION = 0.99
ORBIT_LEN = 4
SHADOW_LENGTH = MIN_ORBIT + 2
SHADOW_LADDER = [0.2 * 0.5 ** j for j in range(20)]
EXPANSIVE_EPS = 0.05

REPORT_FILE = "report.json"
VERIFY_FILE = "verify_report.json"
SECTION_FILE = "section.csv"
PLANES_FILE = "planes.csv"
SERIES_FILE = "plot_series.csv"
PULLBACK_FILE = "pullback.csv"
FAMILY_FILE = "family.json"
SWEEP_FILE = "sweep_summary.csv"

RUN_ERRORS = (LaminationError, ValidationError, np.linalg.LinAlgError, FloatingPointError)


# ===========================================
# CONTEXT
# ===========================================

@dataclass
class RunContext:
    """Everything a pipeline needs, resolved from one RunConfig."""
    config: RunConfig
    scenario: Scenario
    system: MapSystem
    lam: DiscreteLamination
    frames: NormalFrame
    dynamics: BaseDynamics
    cfg: TransformConfig
    pipeline: Pipeline
    seed: int

    @property
    def variant(self) -> Variant:
        if self.pipeline in (Pipeline.EXPANDED, Pipeline.CONTRACTED):
            return Variant(self.pipeline.value)
        return self.scenario.variant

    @property
    def depth(self) -> int:
        return self.lam.codes[0].depth if self.lam.codes else 0

    @property
    def orbit_backward(self) -> bool:
        """Pullback orbits run through f*⁻¹ for contracted scenarios that have it."""
        if self.dynamics.inverse is None:
            return False
        return self.scenario.backward_orbits or self.variant == Variant.CONTRACTED


def resolve_seed(flag: Optional[int], config: RunConfig) -> int:
    """Flag > environment > config file > default."""
    if flag is not None:
        return int(flag)
    if settings.SEED_FROM_ENV:
        return settings.SEED
    if config.seed is not None:
        return int(config.seed)
    return settings.SEED


def resolve_threads(flag: Optional[int]) -> int:
    threads = int(flag) if flag is not None else settings.THREADS
    if threads < 1:
        raise SchemaError("thread count must be at least 1", {"threads": threads})
    return threads


def transform_config(config: RunConfig, scenario: Scenario, lam: DiscreteLamination, threads: int) -> TransformConfig:
    """Scenario defaults overlaid with the config's transform overrides."""
    overrides = {
        key: value
        for key, value in config.transform.model_dump().items()
        if value is not None and key in ("newton_tol", "newton_max", "fixpoint_tol", "fixpoint_max")
    }
    eta = config.transform.eta or scenario.eta
    try:
        return TransformConfig(eta=eta, marked_region=lam.marked_region, threads=threads, **overrides)
    except ValidationError as exc:
        raise SchemaError("transform settings are inconsistent", {"errors": exc.errors()}) from exc


def prepare(config: RunConfig, threads: Optional[int] = None, seed: Optional[int] = None) -> RunContext:
    """
    Resolve a RunConfig into a RunContext.

    Raises:
        SchemaError: unknown scenario parameters or inconsistent tolerances
    """
    try:
        scenario = get_scenario(config.scenario, config.params)
    except InputError as exc:
        raise SchemaError(exc.message, exc.context) from exc

    lam = scenario.build_lamination(config.grid)
    workers = resolve_threads(threads)
    ctx = RunContext(
        config=config,
        scenario=scenario,
        system=scenario.system(),
        lam=lam,
        frames=scenario.frames(lam),
        dynamics=scenario.dynamics(lam),
        cfg=transform_config(config, scenario, lam, workers),
        pipeline=config.pipeline or scenario.pipeline,
        seed=resolve_seed(seed, config),
    )
    logger.info(f"prepared {scenario.name}: {len(lam.codes)} codes x {lam.nodes_per_leaf} nodes",
                extra={"scenario": scenario.name, "pipeline": ctx.pipeline.value})
    return ctx


# ===========================================
# PIPELINES
# ===========================================

@dataclass
class PipelineResult:
    system: MapSystem
    section: Section
    frames: NormalFrame
    planes: Optional[PlaneField] = None
    plane_report: Optional[PlaneReport] = None
    pullback: Optional[Pullback] = None
    transform: Optional[TransformReport] = None
    stable: Optional[TransformReport] = None
    unstable: Optional[TransformReport] = None
    family: Optional[FamilyResult] = None
    verification: Dict[str, Any] = field(default_factory=dict)


def core_pullback(ctx: RunContext, system: MapSystem, frames: NormalFrame, section: Section) -> Pullback:
    """Pullback on nodes where the bump is 1 at x and at f*(x)."""
    rho, _ = bump_weights(ctx.lam, ctx.cfg)
    rows = np.nonzero(rho.reshape(-1) == 1.0)[0]
    table = pullback_table(system, ctx.lam, frames, section, ctx.dynamics, ctx.cfg, rows=rows)
    region = ctx.cfg.marked_region
    if region is None or table.rows.size == 0:
        return table
    image_rho, _ = region.rho(ctx.lam.axes, table.params)
    keep = image_rho == 1.0
    return Pullback(rows=table.rows[keep], codes=table.codes[keep], params=table.params[keep],
                    residual=table.residual[keep])


def _run_graph_transform(ctx: RunContext, warm: Optional[Section] = None) -> PipelineResult:
    start = warm if warm is not None else Section.zero(ctx.lam)
    section, report = iterate_to_fixed_point(ctx.system, ctx.lam, ctx.frames, start, ctx.variant, ctx.dynamics,
                                             ctx.cfg, scenario=ctx.scenario.name)
    planes, plane_report = iterate_plane_field(ctx.system, ctx.lam, ctx.frames, section, ctx.variant, ctx.dynamics,
                                               ctx.cfg, plane_eps=ctx.config.transform.plane_eps,
                                               plane_tol=ctx.config.transform.plane_tol)
    return PipelineResult(
        system=ctx.system,
        section=section,
        frames=ctx.frames,
        planes=planes,
        plane_report=plane_report,
        pullback=core_pullback(ctx, ctx.system, ctx.frames, section),
        transform=report,
    )


def _run_hyperbolic(ctx: RunContext, warm: Optional[Section] = None) -> PipelineResult:
    splitting = ctx.scenario.splitting()
    if splitting is None:
        raise InputError("hyperbolic pipeline needs a splitting", {"scenario": ctx.scenario.name})
    result = persist_hyperbolic(ctx.system, ctx.lam, splitting, ctx.dynamics, ctx.cfg,
                                disk_radius=ctx.config.transform.disk_radius,
                                thick_nodes=ctx.config.grid.thick_nodes, scenario=ctx.scenario.name)
    verification: Dict[str, Any] = {}
    if result.stable is not None and result.unstable is not None:
        verification["thickened"] = {
            "stable_inclusion_gap": result.stable.inclusion_gap(),
            "unstable_inclusion_gap": result.unstable.inclusion_gap(),
            "min_singular": result.min_singular,
            "intersection_residual": result.invariance_residual,
        }
    return PipelineResult(
        system=ctx.system,
        section=result.section,
        frames=result.frames,
        planes=tangent_planes_fd(ctx.lam, result.frames, result.section),
        pullback=result.pullback,
        stable=result.stable_report,
        unstable=result.unstable_report,
        verification=verification,
    )


def _run_deform(ctx: RunContext, warm: Optional[Section] = None) -> PipelineResult:
    family = ctx.scenario.family()
    if family is None:
        raise InputError("scenario has no deformation family", {"scenario": ctx.scenario.name})
    disk = ctx.config.deform
    result = deform_family(family, ctx.lam, ctx.frames, ctx.variant, ctx.dynamics, ctx.cfg,
                           radius=disk.radius, rings=disk.rings, angles=disk.angles,
                           cold_check=disk.cold_check)
    centre = result.sections[0j]
    return PipelineResult(
        system=family(0j),
        section=centre,
        frames=ctx.frames,
        planes=tangent_planes_fd(ctx.lam, ctx.frames, centre),
        family=result,
    )


PIPELINES: Dict[Pipeline, Callable[[RunContext, Optional[Section]], PipelineResult]] = {
    Pipeline.EXPANDED: _run_graph_transform,
    Pipeline.CONTRACTED: _run_graph_transform,
    Pipeline.HYPERBOLIC: _run_hyperbolic,
    Pipeline.DEFORM: _run_deform,
}


def run_pipeline(ctx: RunContext, warm: Optional[Section] = None) -> PipelineResult:
    logger.info(f"running {ctx.pipeline.value} pipeline", extra={"scenario": ctx.scenario.name})
    return PIPELINES[ctx.pipeline](ctx, warm)


def hyperbolicity(ctx: RunContext, system: MapSystem) -> Optional[HyperbolicityEstimate]:
    """Domination rates sampled on nodes whose orbit stays in the chart."""
    splitting = ctx.scenario.splitting()
    if splitting is None:
        return None
    core = surviving_core(ctx.lam, ctx.dynamics, ORBIT_LEN, backward=ctx.scenario.backward_orbits)
    return estimate_normal_hyperbolicity(system, ctx.lam, splitting, ctx.dynamics, orbit_len=ORBIT_LEN,
                                         seed=ctx.seed, backward=ctx.scenario.backward_orbits, core=core)


# ===========================================
# CHECKS
# ===========================================

def _result(name: CheckName, passed: bool, value: Optional[float] = None, threshold: Optional[float] = None,
            detail: str = "") -> CheckResult:
    if value is not None and not np.isfinite(value):
        value = None
    return CheckResult(name=name.value, passed=bool(passed), value=value, threshold=threshold, detail=detail)


class CheckSuite:
    """
    Named assertions over one pipeline result.

    Each check returns a CheckResult; auxiliary evidence lands in
    `verification` for the report.
    """

    def __init__(self, ctx: RunContext, result: PipelineResult, estimate: Optional[HyperbolicityEstimate]):
        self.ctx = ctx
        self.result = result
        self.estimate = estimate
        self.verification: Dict[str, Any] = dict(result.verification)

    # ---- shared evidence ----

    @property
    def spacing(self) -> float:
        return max(axis.spacing for axis in self.ctx.lam.axes)

    @cached_property
    def pullback(self) -> Pullback:
        if self.result.pullback is not None:
            return self.result.pullback
        return core_pullback(self.ctx, self.result.system, self.result.frames, self.result.section)

    @cached_property
    def immersed(self) -> ImmersedLamination:
        return ImmersedLamination(self.ctx.lam, self.result.frames, self.result.section, self.ctx.cfg)

    @cached_property
    def plane_field(self) -> PlaneField:
        if self.result.planes is not None:
            return self.result.planes
        return tangent_planes_fd(self.ctx.lam, self.result.frames, self.result.section)

    # ---- checks ----

    def converged(self) -> CheckResult:
        reports = [r for r in (self.result.transform, self.result.stable, self.result.unstable) if r is not None]
        if self.result.family is not None:
            members = self.result.family.report.members
            ok = all(m.converged for m in members)
            return _result(CheckName.CONVERGED, ok, detail=f"{len(members)} family members")
        if not reports:
            return _result(CheckName.CONVERGED, False, detail="no transform report")
        residual = max(r.final_residual for r in reports)
        return _result(CheckName.CONVERGED, all(r.converged for r in reports), residual)

    def contraction(self) -> CheckResult:
        ctx, res = self.ctx, self.result
        if ctx.pipeline == Pipeline.HYPERBOLIC:
            ratios = [rec.ratio for r in (res.stable, res.unstable) if r is not None
                      for rec in r.iterations if rec.ratio is not None and rec.sup_distance > 1e-8]
        else:
            ratios = contraction_probe(res.system, ctx.lam, res.frames, ctx.variant, ctx.dynamics, ctx.cfg,
                                       pairs=20, seed=ctx.seed)
            if ctx.pipeline != Pipeline.DEFORM:
                transport = PlaneTransport(res.system, ctx.lam, res.frames, res.section, ctx.variant,
                                           ctx.dynamics, ctx.cfg)
                ratios += plane_contraction_ratios(transport, pairs=20, seed=ctx.seed)
        worst = max(ratios) if ratios else 0.0
        bound = self.estimate.lambda_ + CONTRACTION_SLACK if self.estimate is not None else 1.0
        self.verification["contraction_ratios"] = {"max": worst, "count": len(ratios)}
        return _result(CheckName.CONTRACTION, worst <= bound and worst < 1.0, worst, bound)

    def invariance(self) -> CheckResult:
        ctx, res = self.ctx, self.result
        if ctx.pipeline == Pipeline.HYPERBOLIC:
            table = self.pullback
            value = float(np.max(table.residual)) if table.residual.size else 0.0
            return _result(CheckName.INVARIANCE, value <= INVARIANCE_TOL, value, INVARIANCE_TOL,
                           detail="pullback residual")
        step = apply_transform(res.system, ctx.lam, res.frames, res.section, ctx.variant, ctx.dynamics, ctx.cfg,
                               warm=res.section)
        value = step.section.distance(res.section)
        return _result(CheckName.INVARIANCE, value <= INVARIANCE_TOL, value, INVARIANCE_TOL)

    def localization(self) -> CheckResult:
        if self.ctx.cfg.marked_region is None:
            return _result(CheckName.LOCALIZATION, True, 0.0, 0.0, detail="no marked region")
        rho, _ = bump_weights(self.ctx.lam, self.ctx.cfg)
        outside = self.result.section.values[rho == 0.0]
        value = float(np.max(np.abs(outside))) if outside.size else 0.0
        return _result(CheckName.LOCALIZATION, value == 0.0, value, 0.0)

    def closed_form(self) -> CheckResult:
        lam = self.ctx.lam
        oracle = self.ctx.scenario.oracle(lam)
        if oracle is None:
            return _result(CheckName.CLOSED_FORM, False, detail="no closed-form oracle for these parameters")
        value = float(np.max(np.abs(self.result.section.values - oracle)))
        tol = 2.0 ** (-self.ctx.depth) + 1e-9 if lam.scheme is not None else 1e-9
        if self.ctx.pipeline == Pipeline.HYPERBOLIC:
            tol = max(tol, INVARIANCE_TOL)
        return _result(CheckName.CLOSED_FORM, value <= tol, value, tol)

    def planes(self) -> CheckResult:
        fd = tangent_planes_fd(self.ctx.lam, self.result.frames, self.result.section)
        value = self.plane_field.distance(fd)
        tol = max(1e-4, 10.0 * self.spacing ** 2)
        detail = "" if self.result.plane_report is not None else "finite-difference planes"
        return _result(CheckName.PLANES, value <= tol, value, tol, detail=detail)

    def hyperbolicity(self) -> CheckResult:
        if self.estimate is None:
            return _result(CheckName.HYPERBOLICITY, False, detail="scenario has no splitting")
        return _result(CheckName.HYPERBOLICITY, self.estimate.hyperbolic, self.estimate.lambda_, 1.0 / MARGIN,
                       detail=f"r_max={self.estimate.r_max}")

    def commutation(self) -> CheckResult:
        table = self.pullback
        value = float(np.max(table.residual)) if table.residual.size else 0.0
        return _result(CheckName.COMMUTATION, value <= COMMUTATION_TOL, value, COMMUTATION_TOL,
                       detail=f"{table.rows.size} nodes")

    def injectivity(self) -> CheckResult:
        ctx = self.ctx
        lam = ctx.lam
        eps0 = 4.0 * 2.0 ** (-ctx.depth) if lam.scheme is not None else 0.1
        core = surviving_core(lam, ctx.dynamics, max(ctx.depth, 1), backward=ctx.orbit_backward)
        nodes = section_to_immersion(lam, self.result.frames, self.result.section).at_nodes()
        margin = injectivity_margin(lam, nodes, eps0, sample_count=256, seed=ctx.seed, core=core)
        self.verification["injectivity"] = {**margin.to_dict(), "eps0": eps0,
                                            "surviving_fraction": float(np.mean(core))}
        value = margin.margin if np.isfinite(margin.margin) else None
        return _result(CheckName.INJECTIVITY, margin.injective, value, 1e-9,
                       detail=f"{margin.pairs_checked} pairs beyond {eps0:.3g}")

    def shadow(self) -> CheckResult:
        ctx, res = self.ctx, self.result
        backward = ctx.orbit_backward
        core = surviving_core(ctx.lam, ctx.dynamics, SHADOW_LENGTH, backward=backward)
        rows = np.nonzero(core.reshape(-1))[0]
        if rows.size == 0:
            return _result(CheckName.SHADOW, False, detail="no orbit stays in the chart")
        rng = np.random.default_rng(ctx.seed)
        code_idx, node = divmod(int(rng.choice(rows)), ctx.lam.nodes_per_leaf)
        pseudo, ambient = exact_orbit(res.system, ctx.lam, res.frames, res.section, ctx.dynamics, code_idx, node,
                                      SHADOW_LENGTH, backward=backward)
        check = shadow_check_backward if backward else shadow_check_forward
        best, used = None, None
        for eps in SHADOW_LADDER:
            try:
                outcome = check(res.system, ctx.lam, res.frames, res.section, pseudo, ambient, eps, ctx.cfg,
                                ctx.dynamics, tol=max(1e-10, 10.0 * ctx.cfg.newton_tol))
            except HypothesisError:
                break
            if not outcome.success:
                break
            best, used = outcome, eps
        direction = "backward" if backward else "forward"
        if best is None:
            return _result(CheckName.SHADOW, False, detail=f"{direction} shadowing failed at eps={SHADOW_LADDER[0]}")
        self.verification["shadow"] = {direction: {**best.to_dict(), "eps": used}}
        return _result(CheckName.SHADOW, True, best.residual, used, detail=direction)

    def containment(self) -> CheckResult:
        report = self.ctx.scenario.containment(self.result.system, self.immersed, seed=self.ctx.seed)
        if report is None:
            return _result(CheckName.CONTAINMENT, False, detail="no bounded-orbit oracle for this scenario")
        self.verification["containment"] = report.to_dict()
        if report.bounded == 0:
            return _result(CheckName.CONTAINMENT, False, detail="no bounded orbits sampled")
        return _result(CheckName.CONTAINMENT, report.fraction >= CONTAINMENT_FRACTION, report.fraction,
                       CONTAINMENT_FRACTION, detail=f"{report.bounded} bounded of {report.sampled}")

    def expansiveness(self) -> CheckResult:
        ctx = self.ctx
        backward = ctx.dynamics.inverse is not None
        profile = plaque_expansiveness_probe(ctx.lam, ctx.dynamics, EXPANSIVE_EPS, seed=ctx.seed, backward=backward)
        growth = plaque_growth_check(ctx.lam, ctx.dynamics, EXPANSIVE_EPS, seed=ctx.seed, backward=backward)
        self.verification["expansiveness"] = {"probe": profile.to_dict(), "growth": growth.to_dict()}
        return _result(CheckName.EXPANSIVENESS, profile.collapsed, profile.profile[-1], profile.threshold,
                       detail=profile.verdict)

    def j_invariance(self) -> CheckResult:
        space = self.ctx.lam.space
        if not space.is_complex:
            return _result(CheckName.J_INVARIANCE, False, detail="ambient space has no complex structure")
        _, value = j_invariance_residual(ambient_planes(self.result.frames, self.plane_field), space)
        tol = max(1e-6, 10.0 * self.spacing ** 2)
        return _result(CheckName.J_INVARIANCE, value <= tol, value, tol)

    def holomorphy(self) -> CheckResult:
        lam = self.ctx.lam
        if not lam.leaf_complex_pairs or not lam.space.is_complex:
            return _result(CheckName.HOLOMORPHY, False, detail="leaves carry no complex coordinate")
        value, errbar = holomorphy_residual_section(lam, self.result.frames, self.result.section)
        tol = max(1e-6, 10.0 * self.spacing ** 2)
        self.verification["holomorphy"] = {"residual": value, "error_bar": errbar}
        if self.result.family is not None:
            self.verification["holomorphy"]["parameter_cr"] = self.result.family.report.parameter_cr_residual
        return _result(CheckName.HOLOMORPHY, value <= tol, value, tol)

    def run(self, names: Sequence[CheckName]) -> List[CheckResult]:
        results = []
        for name in names:
            check = getattr(self, CheckName(name).value)
            outcome = check()
            level = logging.INFO if outcome.passed else logging.WARNING
            logger.log(level, f"check {outcome.name}: {'passed' if outcome.passed else 'FAILED'} "
                              f"(value={outcome.value}, threshold={outcome.threshold})",
                       extra={"scenario": self.ctx.scenario.name, "check": outcome.name})
            results.append(outcome)
        return results


# ===========================================
# OUTPUT FILES
# ===========================================

def _node_rows(lam: DiscreteLamination, values: np.ndarray):
    params = lam.leaf_params()
    flat = values.reshape(len(lam.codes), lam.nodes_per_leaf, -1)
    for c, code in enumerate(lam.codes):
        for p in range(lam.nodes_per_leaf):
            yield [code.label] + [float(x) for x in params[p]] + [float(x) for x in flat[c, p]]


def _param_header(lam: DiscreteLamination) -> List[str]:
    return ["code"] + [f"u{j}" for j in range(lam.d)]


def write_section(path: Path, lam: DiscreteLamination, section: Section) -> int:
    header = _param_header(lam) + [f"v{j}" for j in range(lam.normal_dim)]
    return write_csv(path, header, _node_rows(lam, section.values))


def write_planes(path: Path, lam: DiscreteLamination, planes: PlaneField) -> int:
    header = _param_header(lam) + [f"l{i}{j}" for i in range(lam.normal_dim) for j in range(lam.d)]
    return write_csv(path, header, _node_rows(lam, planes.matrices))


def write_series(path: Path, lam: DiscreteLamination, frames: NormalFrame, section: Section) -> int:
    header = _param_header(lam) + [f"x{j}" for j in range(lam.space.n)]
    return write_csv(path, header, _node_rows(lam, section_to_immersion(lam, frames, section).at_nodes()))


def write_pullback(path: Path, lam: DiscreteLamination, table: Pullback) -> int:
    params = lam.leaf_params()
    header = (_param_header(lam) + ["image_code"] + [f"image_u{j}" for j in range(lam.d)] + ["residual"])
    rows = []
    for row, code, image, gap in zip(table.rows, table.codes, table.params, table.residual):
        c, p = divmod(int(row), lam.nodes_per_leaf)
        rows.append([lam.codes[c].label] + [float(x) for x in params[p]] + [lam.codes[int(code)].label]
                    + [float(x) for x in image] + [float(gap)])
    return write_csv(path, header, rows)


def _load_node_table(path: Path, lam: DiscreteLamination, width: int) -> np.ndarray:
    """Read a per-node CSV back into (codes, nodes, width), checking codes and node order."""
    if not Path(path).exists():
        raise InputError("missing output file", {"path": str(path)})
    header, rows = read_csv(path)
    expected = lam.node_count
    if len(rows) != expected or len(header) != 1 + lam.d + width:
        raise InputError("output file does not match the lamination",
                         {"path": str(path), "rows": len(rows), "expected": expected})
    values = np.empty((lam.node_count, width))
    for k, row in enumerate(rows):
        c, _ = divmod(k, lam.nodes_per_leaf)
        if code_label(parse_code_label(row[0])) != lam.codes[c].label:
            raise InputError("code order differs from the lamination", {"row": k, "code": row[0]})
        values[k] = [float(x) for x in row[1 + lam.d:]]
    return values.reshape(len(lam.codes), lam.nodes_per_leaf, width)


def load_section(path: Path, lam: DiscreteLamination) -> Section:
    return Section(_load_node_table(path, lam, lam.normal_dim))


def load_planes(path: Path, lam: DiscreteLamination) -> PlaneField:
    flat = _load_node_table(path, lam, lam.normal_dim * lam.d)
    return PlaneField(flat.reshape(len(lam.codes), lam.nodes_per_leaf, lam.normal_dim, lam.d))


def write_outputs(out: Path, ctx: RunContext, result: PipelineResult) -> None:
    out = Path(out)
    lam = ctx.lam
    write_section(out / SECTION_FILE, lam, result.section)
    if result.planes is not None:
        write_planes(out / PLANES_FILE, lam, result.planes)
    write_series(out / SERIES_FILE, lam, result.frames, result.section)
    if result.pullback is not None:
        write_pullback(out / PULLBACK_FILE, lam, result.pullback)
    if result.family is not None:
        write_json(out / FAMILY_FILE, result.family.report.model_dump(mode="json"))


def write_report(path: Path, report: RunReport) -> None:
    write_json(path, report.model_dump(mode="json", by_alias=True))


# ===========================================
# RUN / VERIFY / SWEEP
# ===========================================

def _metrics(result: PipelineResult, estimate: Optional[HyperbolicityEstimate]) -> Dict[str, float]:
    metrics = {"sup_norm": result.section.sup_norm()}
    if result.transform is not None:
        metrics["iterations"] = float(len(result.transform.iterations))
        metrics["final_residual"] = result.transform.final_residual
        if result.transform.iterations:
            metrics["first_sup_distance"] = result.transform.iterations[0].sup_distance
    if result.plane_report is not None:
        metrics["plane_sup_norm"] = result.plane_report.sup_norm
    if result.pullback is not None and result.pullback.residual.size:
        metrics["pullback_residual"] = float(np.max(result.pullback.residual))
    if estimate is not None:
        metrics["lambda"] = estimate.lambda_
        metrics["r_max"] = float(estimate.r_max)
    return metrics


def _base_report(config: RunConfig, ctx: Optional[RunContext], seed: int) -> RunReport:
    pipeline = ctx.pipeline.value if ctx is not None else (config.pipeline.value if config.pipeline else "")
    params = ctx.scenario.params if ctx is not None else dict(config.params)
    return RunReport(scenario=config.scenario, pipeline=pipeline, params=_plain_params(params), seed=seed,
                     generated_at=datetime.now(timezone.utc).isoformat())


def _plain_params(params: Dict[str, Any]) -> Dict[str, Any]:
    plain = {}
    for key, value in params.items():
        plain[key] = [value.real, value.imag] if isinstance(value, complex) else value
    return plain


def _fail(report: RunReport, exc: Exception) -> RunReport:
    if isinstance(exc, ValidationError):
        exc = InputError("invalid record", {"errors": exc.errors(include_url=False, include_context=False)})
    elif not isinstance(exc, LaminationError):
        exc = NumericError(f"{type(exc).__name__}: {exc}")
    logger.error(f"run failed: {exc}", exc_info=True)
    report.status = "error"
    report.error = exc.to_dict()
    return report


def execute(config: RunConfig, out: Path, threads: Optional[int] = None, seed: Optional[int] = None) -> RunReport:
    """
    Run the configured pipeline and checks; write every output file.

    Raises:
        SchemaError: the config does not resolve (CLI exit 2)
    """
    ctx = prepare(config, threads=threads, seed=seed)
    report = _base_report(config, ctx, ctx.seed)
    try:
        result = run_pipeline(ctx)
        estimate = hyperbolicity(ctx, result.system)
        suite = CheckSuite(ctx, result, estimate)
        report.checks = suite.run(config.checks)
        report.transform = result.transform
        report.stable = result.stable
        report.unstable = result.unstable
        report.planes = result.plane_report
        report.hyperbolicity = estimate
        report.family = result.family.report if result.family is not None else None
        report.metrics = _metrics(result, estimate)
        report.verification = suite.verification
        report.status = "ok" if report.passed else "failed"
        write_outputs(out, ctx, result)
    except RUN_ERRORS as exc:
        _fail(report, exc)
    write_report(Path(out) / REPORT_FILE, report)
    logger.info(f"run {report.status}: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed",
                extra={"scenario": ctx.scenario.name})
    return report


def verify_outputs(config: RunConfig, out: Path, threads: Optional[int] = None,
                   seed: Optional[int] = None) -> RunReport:
    """Re-run the configured checks against section.csv (and planes.csv) of a previous run."""
    ctx = prepare(config, threads=threads, seed=seed)
    out = Path(out)
    report = _base_report(config, ctx, ctx.seed)
    try:
        section = load_section(out / SECTION_FILE, ctx.lam)
        planes = load_planes(out / PLANES_FILE, ctx.lam) if (out / PLANES_FILE).exists() else None
        system = ctx.system
        if ctx.pipeline == Pipeline.DEFORM and ctx.scenario.family() is not None:
            system = ctx.scenario.family()(0j)
        previous = RunReport.model_validate(read_json(out / REPORT_FILE)) if (out / REPORT_FILE).exists() else None
        result = PipelineResult(
            system=system,
            section=section,
            frames=ctx.frames,
            planes=planes,
            plane_report=previous.planes if previous is not None else None,
            transform=previous.transform if previous is not None else None,
            stable=previous.stable if previous is not None else None,
            unstable=previous.unstable if previous is not None else None,
        )
        if previous is not None and previous.family is not None:
            result.family = FamilyResult(sections={0j: section}, report=previous.family)
        estimate = hyperbolicity(ctx, system)
        suite = CheckSuite(ctx, result, estimate)
        report.checks = suite.run(config.checks)
        report.hyperbolicity = estimate
        report.metrics = _metrics(result, estimate)
        report.verification = suite.verification
        report.status = "ok" if report.passed else "failed"
    except RUN_ERRORS as exc:
        _fail(report, exc)
    write_report(out / VERIFY_FILE, report)
    return report


@dataclass
class SweepRow:
    value: float
    sup_norm: float
    lambda_: Optional[float]
    iterations: int
    converged: bool

    def as_row(self) -> List[Any]:
        return [self.value, self.sup_norm, "" if self.lambda_ is None else self.lambda_, self.iterations,
                str(self.converged).lower()]


def run_sweep(config: RunConfig, out: Path, param: str, values: Sequence[float],
              threads: Optional[int] = None, seed: Optional[int] = None) -> Tuple[List[SweepRow], bool]:
    """
    One run per value, each warm-started from the previous section.

    A zero perturbation restarts from the zero section. The first failing
    value stops the sweep; the rows so far are still written.

    Raises:
        SchemaError: unknown parameter or empty value list
    """
    if not values:
        raise SchemaError("sweep needs at least one value", {"param": param})
    try:
        scenario = get_scenario(config.scenario, config.params)
    except InputError as exc:
        raise SchemaError(exc.message, exc.context) from exc
    if param not in scenario.defaults:
        raise SchemaError(f"unknown sweep parameter {param!r}", {"known": sorted(scenario.defaults)})

    out = Path(out)
    rows: List[SweepRow] = []
    warm: Optional[Section] = None
    ok = True
    header = ["value", "sup_norm", "lambda", "iterations", "converged"]
    for index, value in enumerate(values):
        run_config = config.model_copy(update={"params": {**config.params, param: value}})
        ctx = prepare(run_config, threads=threads, seed=seed)
        report = _base_report(run_config, ctx, ctx.seed)
        start = None if (value == 0.0 and param in ctx.scenario.perturbations) else warm
        try:
            result = run_pipeline(ctx, start)
            estimate = hyperbolicity(ctx, result.system)
            report.checks = CheckSuite(ctx, result, estimate).run(run_config.checks)
            report.transform = result.transform
            report.hyperbolicity = estimate
            report.metrics = _metrics(result, estimate)
            report.status = "ok" if report.passed else "failed"
            write_outputs(out / f"{param}_{index}", ctx, result)
        except RUN_ERRORS as exc:
            _fail(report, exc)
            result, estimate = None, None
        write_report(out / f"{param}_{index}" / REPORT_FILE, report)

        if result is None or not report.passed:
            logger.error(f"sweep stopped at {param}={value}", extra={"scenario": config.scenario})
            ok = False
            break
        iterations = len(result.transform.iterations) if result.transform is not None else 0
        converged = result.transform.converged if result.transform is not None else True
        rows.append(SweepRow(value=float(value), sup_norm=result.section.sup_norm(),
                             lambda_=estimate.lambda_ if estimate is not None else None,
                             iterations=iterations, converged=converged))
        warm = result.section if ctx.pipeline in (Pipeline.EXPANDED, Pipeline.CONTRACTED) else None

    write_csv(out / SWEEP_FILE, header, [row.as_row() for row in rows])
    return rows, ok
