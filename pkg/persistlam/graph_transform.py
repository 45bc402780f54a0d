"""
Graph transform on sections of the tubular neighborhood.

expanded:   S⁰(s)(x) = v where f'(I(x, v)) lies on the s-immersed plaque of f*(x)
contracted: S⁰(s)(x) = w where f'(s-immersed plaque of f*⁻¹(x)) meets the fiber of x at I(x, w)

Both are solved per node by Newton on an n-dimensional system (fiber
coordinate + leaf parameter), residuals in ambient coordinates.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .bundle import NormalFrame, Section, SectionImmersion, section_to_immersion
from .config import settings
from .dynsys import MapSystem, eval_map
from .errors import DomainError, InputError, NonContractionError, TransversalityError
from .lamination import DiscreteLamination, GridInterpolant, MarkedRegion
from .models import IterationRecord, NewtonSummary, TransformReport, Variant
from .solvers import NewtonResult, batched_newton
from .utils import parallel_map

logger = logging.getLogger(__name__)

# (code_idx (p,), u (p, d)) -> (code_idx (p,), u (p, d))
CodeRule = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass
class BaseDynamics:
    """Exact base dynamics f* on (code index, leaf parameter) pairs."""
    forward: CodeRule
    inverse: Optional[CodeRule] = None
    name: str = "f*"


class TransformConfig(BaseModel):
    """Tolerances, caps and the bump regions of one transform run."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    eta: float = Field(gt=0)
    newton_tol: float = Field(default_factory=lambda: settings.NEWTON_TOL, gt=0)
    newton_max: int = Field(default_factory=lambda: settings.NEWTON_MAX, ge=1)
    fixpoint_tol: float = Field(default_factory=lambda: settings.FIXPOINT_TOL, gt=0)
    fixpoint_max: int = Field(default_factory=lambda: settings.FIXPOINT_MAX, ge=1)
    stall_window: int = Field(default_factory=lambda: settings.STALL_WINDOW, ge=1)
    marked_region: Optional[MarkedRegion] = None
    threads: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def tolerance_below_radius(self) -> "TransformConfig":
        if not self.newton_tol < self.eta:
            raise ValueError(f"newton_tol ({self.newton_tol}) must be below eta ({self.eta})")
        return self


# ===========================================
# HELPERS
# ===========================================

class FiberChart:
    """I(c, u, w) = i(c, u) + N(c, u)·w with interpolated base points and frames."""

    def __init__(self, lam: DiscreteLamination, frames: NormalFrame):
        self.lam = lam
        self.frames = frames
        self._base = section_to_immersion(lam, frames, Section.zero(lam))
        width = lam.space.n * lam.normal_dim
        self._frames = tuple(
            GridInterpolant(lam.axes, frames.matrices[c].reshape(lam.counts + (width,)))
            for c in range(len(lam.codes))
        )

    def frame(self, code_idx: int, u: np.ndarray) -> np.ndarray:
        flat = self._frames[code_idx](np.atleast_2d(u))
        return flat.reshape(-1, self.lam.space.n, self.lam.normal_dim)

    def __call__(self, code_idx: int, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self._base(code_idx, u) + np.einsum("pnk,pk->pn", self.frame(code_idx, u), w)


def _grouped(codes: np.ndarray, u: np.ndarray, evaluate: Callable[[int, np.ndarray], np.ndarray], width: int) -> np.ndarray:
    """Evaluate a per-code function on rows with mixed code indices."""
    out = np.empty((u.shape[0], width))
    for c in np.unique(codes):
        mask = codes == c
        out[mask] = evaluate(int(c), u[mask])
    return out


def bump_weights(lam: DiscreteLamination, cfg: TransformConfig) -> Tuple[np.ndarray, np.ndarray]:
    """ρ and ∇ρ per node, shapes (codes, nodes) and (codes, nodes, d)."""
    region = cfg.marked_region or lam.marked_region
    params = lam.leaf_params()
    if region is None:
        rho = np.ones(lam.nodes_per_leaf)
        grad = np.zeros((lam.nodes_per_leaf, lam.d))
    else:
        rho, grad = region.rho(lam.axes, params)
    count = len(lam.codes)
    return np.broadcast_to(rho, (count,) + rho.shape).copy(), np.broadcast_to(grad, (count,) + grad.shape).copy()


def _node_arrays(lam: DiscreteLamination):
    count, nodes = len(lam.codes), lam.nodes_per_leaf
    code_idx = np.repeat(np.arange(count), nodes)
    params = np.tile(lam.leaf_params(), (count, 1))
    return code_idx, params


def _raise_failures(lam: DiscreteLamination, rows: np.ndarray, result: NewtonResult, fiber: np.ndarray,
                    eta: float, variant: Variant) -> None:
    norms = np.linalg.norm(fiber, axis=1)
    bad = ~result.converged | ~np.isfinite(norms) | (norms > eta)
    if not np.any(bad):
        return
    first = int(np.nonzero(bad)[0][0])
    code_idx, node = divmod(int(rows[first]), lam.nodes_per_leaf)
    reason = "Newton did not converge" if not result.converged[first] else "fiber coordinate exceeds eta"
    raise TransversalityError(reason, {
        "variant": variant.value,
        "code": lam.codes[code_idx].label,
        "node": node,
        "u": lam.leaf_params()[node],
        "norm": float(norms[first]),
        "eta": eta,
        "failures": int(np.count_nonzero(bad)),
    })


@dataclass
class TransformStep:
    """One application of S⁰ plus Newton statistics and solved target parameters."""
    section: Section
    newton: NewtonSummary
    target_codes: np.ndarray
    target_params: np.ndarray


# ===========================================
# OPERATIONS
# ===========================================

def transform_expanded(
    sys: MapSystem,
    lam: DiscreteLamination,
    frames: NormalFrame,
    s: Section,
    base_dynamics: BaseDynamics,
    cfg: TransformConfig,
    warm: Optional[Section] = None,
) -> TransformStep:
    """
    Expanded graph transform S⁰ (normal expansion).

    Unknowns per node: fiber coordinate v and target leaf parameter u''.
    Residual: f'(i(x) + N(x)·v) - I_s(code', u''), code' from f*.
    """
    n, k, d = lam.space.n, lam.normal_dim, lam.d
    code_idx, params = _node_arrays(lam)
    target_codes, target_params = base_dynamics.forward(code_idx, params)
    base = lam.flat_points().reshape(-1, n)
    normals = frames.matrices.reshape(-1, n, k)
    immersion = section_to_immersion(lam, frames, s)

    rho, _ = bump_weights(lam, cfg)
    active = np.nonzero(rho.reshape(-1) > 0.0)[0]
    start = (warm or s).values.reshape(-1, k)
    z0 = np.concatenate([start, target_params], axis=1)
    cold = np.concatenate([np.zeros_like(start), target_params], axis=1)

    def residual(z: np.ndarray, rows: np.ndarray) -> np.ndarray:
        v, u2 = z[:, :k], z[:, k:]
        moved = eval_map(sys, base[rows] + np.einsum("pnk,pk->pn", normals[rows], v))
        target = _grouped(target_codes[rows], u2, immersion, n)
        return lam.space.difference(moved, target)

    result, retried = _solve_rows(residual, z0, active, cfg, cold=cold)
    _raise_failures(lam, active, result, result.z[:, :k], cfg.eta, Variant.EXPANDED)

    values = s.values.reshape(-1, k).copy()
    values[active] = result.z[:, :k]
    solved_params = target_params.copy()
    solved_params[active] = result.z[:, k:]
    return TransformStep(
        section=Section(values.reshape(s.values.shape)),
        newton=NewtonSummary(max_iters=result.max_iterations, failures=retried + result.failures),
        target_codes=target_codes,
        target_params=solved_params,
    )


def transform_contracted(
    sys: MapSystem,
    lam: DiscreteLamination,
    frames: NormalFrame,
    s: Section,
    base_dynamics: BaseDynamics,
    cfg: TransformConfig,
    warm: Optional[Section] = None,
) -> TransformStep:
    """
    Contracted graph transform S⁰ (normal contraction).

    Unknowns per node: source leaf parameter u near f*⁻¹(x) and fiber
    coordinate w. Residual: f'(I_s(code_src, u)) - (i(x) + N(x)·w).

    Raises:
        InputError: base dynamics without an inverse rule
    """
    if base_dynamics.inverse is None:
        raise InputError("contracted transform needs the inverse of f*", {"dynamics": base_dynamics.name})
    n, k, d = lam.space.n, lam.normal_dim, lam.d
    code_idx, params = _node_arrays(lam)
    source_codes, source_params = base_dynamics.inverse(code_idx, params)
    base = lam.flat_points().reshape(-1, n)
    normals = frames.matrices.reshape(-1, n, k)
    immersion = section_to_immersion(lam, frames, s)

    rho, _ = bump_weights(lam, cfg)
    active = np.nonzero(rho.reshape(-1) > 0.0)[0]
    start = (warm or s).values.reshape(-1, k)
    z0 = np.concatenate([source_params, start], axis=1)
    cold = np.concatenate([source_params, np.zeros_like(start)], axis=1)

    def residual(z: np.ndarray, rows: np.ndarray) -> np.ndarray:
        u, w = z[:, :d], z[:, d:]
        pushed = eval_map(sys, _grouped(source_codes[rows], u, immersion, n))
        fiber = base[rows] + np.einsum("pnk,pk->pn", normals[rows], w)
        return lam.space.difference(pushed, fiber)

    result, retried = _solve_rows(residual, z0, active, cfg, cold=cold)
    _raise_failures(lam, active, result, result.z[:, d:], cfg.eta, Variant.CONTRACTED)

    values = s.values.reshape(-1, k).copy()
    values[active] = result.z[:, d:]
    solved_params = source_params.copy()
    solved_params[active] = result.z[:, :d]
    return TransformStep(
        section=Section(values.reshape(s.values.shape)),
        newton=NewtonSummary(max_iters=result.max_iterations, failures=retried + result.failures),
        target_codes=source_codes,
        target_params=solved_params,
    )


def _newton_rows(residual, z0: np.ndarray, active: np.ndarray, cfg: TransformConfig) -> NewtonResult:
    """Newton over the active rows, chunked across worker threads in row order."""

    def run(bounds: Tuple[int, int]) -> NewtonResult:
        rows = active[bounds[0]:bounds[1]]
        return batched_newton(lambda z, sub: residual(z, rows[sub]), z0[rows], cfg.newton_tol, cfg.newton_max)

    parts = parallel_map(run, active.size, cfg.threads)
    if not parts:
        empty = np.zeros((0, z0.shape[1]))
        return NewtonResult(z=empty, converged=np.zeros(0, bool), iterations=np.zeros(0, int), residual=np.zeros(0))
    return NewtonResult(
        z=np.concatenate([p.z for p in parts]),
        converged=np.concatenate([p.converged for p in parts]),
        iterations=np.concatenate([p.iterations for p in parts]),
        residual=np.concatenate([p.residual for p in parts]),
    )


def _solve_rows(residual, z0: np.ndarray, active: np.ndarray, cfg: TransformConfig,
                cold: Optional[np.ndarray] = None) -> Tuple[NewtonResult, int]:
    """
    Warm-started Newton; rows that fail are solved once more from the cold start.

    Returns:
        (result, number of rows whose warm start failed)
    """
    result = _newton_rows(residual, z0, active, cfg)
    missed = np.nonzero(~result.converged)[0]
    if cold is None or missed.size == 0:
        return result, 0
    retry = _newton_rows(residual, cold, active[missed], cfg)
    result.z[missed] = retry.z
    result.converged[missed] = retry.converged
    result.iterations[missed] += retry.iterations
    result.residual[missed] = retry.residual
    logger.debug(f"Newton: {missed.size} warm starts failed, {retry.failures} still unconverged from cold")
    return result, int(missed.size)


def apply_bump(lam: DiscreteLamination, s_new: Section, s_base: Section, cfg: TransformConfig) -> Section:
    """ρ·s_new + (1 - ρ)·s_base; s_base is the zero section in the graph transform."""
    rho, _ = bump_weights(lam, cfg)
    return Section(rho[..., None] * s_new.values + (1.0 - rho[..., None]) * s_base.values)


TRANSFORMS = {
    Variant.EXPANDED: transform_expanded,
    Variant.CONTRACTED: transform_contracted,
}


def apply_transform(sys, lam, frames, s, variant: Variant, dynamics: BaseDynamics, cfg: TransformConfig,
                    warm: Optional[Section] = None) -> TransformStep:
    """Bump-localized S = ρ·S⁰."""
    step = TRANSFORMS[Variant(variant)](sys, lam, frames, s, dynamics, cfg, warm=warm)
    step.section = apply_bump(lam, step.section, Section.zero(lam), cfg)
    return step


def iterate_to_fixed_point(
    sys: MapSystem,
    lam: DiscreteLamination,
    frames: NormalFrame,
    s0: Section,
    variant: Variant,
    dynamics: BaseDynamics,
    cfg: TransformConfig,
    scenario: str = "",
) -> Tuple[Section, TransformReport]:
    """
    Iterate S until successive sections agree within fixpoint_tol.

    Raises:
        NonContractionError: sup-distance ratio ≥ 1 for stall_window consecutive steps
    """
    variant = Variant(variant)
    s0.check_tube(cfg.eta)
    report = TransformReport(scenario=scenario, variant=variant)
    current = s0
    previous_distance: Optional[float] = None
    stalled = 0
    max_iters = 0
    failures = 0

    for k in range(1, cfg.fixpoint_max + 1):
        step = apply_transform(sys, lam, frames, current, variant, dynamics, cfg, warm=current)
        max_iters = max(max_iters, step.newton.max_iters)
        failures += step.newton.failures
        distance = step.section.distance(current)
        ratio = distance / previous_distance if previous_distance else None
        report.iterations.append(IterationRecord(k=k, sup_distance=distance, ratio=ratio))
        logger.debug(f"{variant.value} iteration {k}: distance={distance:.3e} ratio={ratio}",
                     extra={"scenario": scenario, "variant": variant.value, "iteration": k})
        current = step.section

        if distance <= cfg.fixpoint_tol:
            report.converged = True
            break
        if ratio is not None and ratio >= 1.0 and distance > 10.0 * cfg.fixpoint_tol:
            stalled += 1
            if stalled >= cfg.stall_window:
                raise NonContractionError("graph transform is not contracting", {
                    "variant": variant.value, "iteration": k, "ratio": ratio, "distance": distance})
        else:
            stalled = 0
        previous_distance = distance

    check = apply_transform(sys, lam, frames, current, variant, dynamics, cfg, warm=current)
    report.final_residual = check.section.distance(current)
    report.newton = NewtonSummary(max_iters=max(max_iters, check.newton.max_iters),
                                  failures=failures + check.newton.failures)
    if report.converged:
        logger.info(f"{variant.value} transform converged in {len(report.iterations)} iterations",
                    extra={"scenario": scenario, "variant": variant.value})
    else:
        logger.warning(f"{variant.value} transform hit the iteration cap",
                       extra={"scenario": scenario, "variant": variant.value})
    return current, report


# ===========================================
# PULLBACK
# ===========================================

@dataclass
class Pullback:
    """f'* on nodes: image codes, image parameters and commuting residuals."""
    rows: np.ndarray
    codes: np.ndarray
    params: np.ndarray
    residual: np.ndarray


def _inside(lam: DiscreteLamination, u: np.ndarray) -> np.ndarray:
    mask = np.ones(u.shape[0], dtype=bool)
    for j, axis in enumerate(lam.axes):
        if not axis.periodic:
            mask &= (u[:, j] >= axis.lo) & (u[:, j] <= axis.hi)
    return mask


def pullback_table(
    sys: MapSystem,
    lam: DiscreteLamination,
    frames: NormalFrame,
    s_star: Section,
    dynamics: BaseDynamics,
    cfg: TransformConfig,
    rows: Optional[np.ndarray] = None,
) -> Pullback:
    """
    Induced f'* for a set of nodes (all nodes by default).

    Each image f'(i'(x)) is projected along the fibers onto the base
    lamination near f*(x); the residual is ‖f'(i'(x)) - i'(f'*(x))‖.
    Nodes whose f*-image leaves a line axis are dropped.
    """
    n, k, d = lam.space.n, lam.normal_dim, lam.d
    code_idx, params = _node_arrays(lam)
    rows = np.arange(code_idx.size) if rows is None else np.asarray(rows, dtype=int)
    target_codes, target_params = dynamics.forward(code_idx[rows], params[rows])
    keep = _inside(lam, target_params)
    rows, target_codes, target_params = rows[keep], target_codes[keep], target_params[keep]

    immersion = section_to_immersion(lam, frames, s_star)
    chart = FiberChart(lam, frames)
    images = eval_map(sys, immersion.at_nodes().reshape(-1, n)[rows])
    z0 = np.concatenate([target_params, s_star.values.reshape(-1, k)[rows] * 0.0], axis=1)

    def residual(z: np.ndarray, sub: np.ndarray) -> np.ndarray:
        u, w = z[:, :d], z[:, d:]
        projected = _grouped(target_codes[sub], np.hstack([u, w]),
                             lambda c, uw: chart(c, uw[:, :d], uw[:, d:]), n)
        return lam.space.difference(images[sub], projected)

    result = batched_newton(residual, z0, cfg.newton_tol, cfg.newton_max)
    if result.failures:
        first = int(np.nonzero(~result.converged)[0][0])
        code, node = divmod(int(rows[first]), lam.nodes_per_leaf)
        raise TransversalityError("pullback projection failed", {"code": lam.codes[code].label, "node": node})

    u_star = result.z[:, :d]
    for j, axis in enumerate(lam.axes):
        u_star[:, j] = axis.reduce(u_star[:, j])
    landed = _grouped(target_codes, u_star, immersion, n)
    gap = np.linalg.norm(lam.space.difference(images, landed), axis=1)
    return Pullback(rows=rows, codes=target_codes, params=u_star, residual=gap)


def induced_pullback(
    sys: MapSystem,
    lam: DiscreteLamination,
    frames: NormalFrame,
    s_star: Section,
    code_idx: int,
    node: int,
    dynamics: BaseDynamics,
    cfg: TransformConfig,
) -> Tuple[int, np.ndarray, float]:
    """
    f'*(x) for one node: (image code index, image leaf parameters, residual).

    Raises:
        DomainError: f*(x) leaves the lamination chart
    """
    row = code_idx * lam.nodes_per_leaf + node
    table = pullback_table(sys, lam, frames, s_star, dynamics, cfg, rows=np.array([row]))
    if table.rows.size == 0:
        raise DomainError("f*(x) leaves the chart", {"code": lam.codes[code_idx].label, "node": node})
    return int(table.codes[0]), table.params[0], float(table.residual[0])


def contraction_probe(
    sys: MapSystem,
    lam: DiscreteLamination,
    frames: NormalFrame,
    variant: Variant,
    dynamics: BaseDynamics,
    cfg: TransformConfig,
    pairs: int = 20,
    seed: int = 0,
    amplitude: Optional[float] = None,
) -> List[float]:
    """sup‖S(s1) - S(s2)‖ / sup‖s1 - s2‖ for random smooth section pairs."""
    rng = np.random.default_rng(seed)
    amplitude = amplitude if amplitude is not None else 0.25 * cfg.eta
    params = lam.leaf_params()
    ratios = []

    def random_section() -> Section:
        values = np.zeros((len(lam.codes), lam.nodes_per_leaf, lam.normal_dim))
        for j, axis in enumerate(lam.axes):
            scale = axis.period if not axis.periodic else axis.period / (2 * np.pi)
            phase = rng.uniform(0, 2 * np.pi, size=(len(lam.codes), 1, lam.normal_dim))
            freq = 1.0 if not axis.periodic else float(rng.integers(1, 3))
            values += np.sin(freq * (params[None, :, j:j + 1] - axis.lo) / scale + phase)
        values *= amplitude / max(1, lam.d)
        rho, _ = bump_weights(lam, cfg)
        return Section(values * rho[..., None])

    for _ in range(pairs):
        s1, s2 = random_section(), random_section()
        gap = s1.distance(s2)
        if gap == 0.0:
            continue
        t1 = apply_transform(sys, lam, frames, s1, variant, dynamics, cfg).section
        t2 = apply_transform(sys, lam, frames, s2, variant, dynamics, cfg).section
        ratios.append(t1.distance(t2) / gap)
    return ratios
