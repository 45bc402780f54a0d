"""
Verification of the persistence conclusions.

Injectivity margins, shadowing of pseudo-orbits, bounded (pre)orbit
containment and statistical plaque-expansiveness probes. Every randomized
check takes a seed and is deterministic given it.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .bundle import NormalFrame, Section, section_to_immersion
from .dynsys import MapSystem, eval_map
from .errors import ContainmentError, HypothesisError, InputError
from .graph_transform import BaseDynamics, FiberChart, TransformConfig
from .lamination import DiscreteLamination, leaf_distance, plaque_neighborhood
from .solvers import batched_newton

logger = logging.getLogger(__name__)

MIN_ORBIT = 10


# ===========================================
# INJECTIVITY
# ===========================================

@dataclass
class InjectivityMargin:
    margin: float
    pair: Optional[Tuple[Tuple[str, List[float]], Tuple[str, List[float]]]]
    pairs_checked: int

    @property
    def injective(self) -> bool:
        return self.margin > 1e-9

    def to_dict(self) -> Dict[str, Any]:
        return {"margin": self.margin, "pairs_checked": self.pairs_checked, "injective": self.injective,
                "pair": self.pair}


def _arclength(lam: DiscreteLamination) -> Tuple[np.ndarray, Optional[float]]:
    """Cumulative arclength per leaf for d = 1, plus the closed length of periodic leaves."""
    axis = lam.axes[0]
    pts = lam.flat_points()
    steps = lam.space.difference(pts[:, 1:], pts[:, :-1]) * lam.metric_scale
    seg = np.linalg.norm(steps, axis=-1)
    cum = np.concatenate([np.zeros((len(lam.codes), 1)), np.cumsum(seg, axis=1)], axis=1)
    if axis.periodic:
        closing = lam.space.difference(pts[:, 0], pts[:, -1]) * lam.metric_scale
        total = cum[:, -1] + np.linalg.norm(closing, axis=-1)
        return cum, float(np.max(total))
    return cum, None


def injectivity_margin(
    lam: DiscreteLamination,
    immersion_nodes: np.ndarray,
    eps0: float,
    sample_count: int = 256,
    seed: int = 0,
    core: Optional[np.ndarray] = None,
) -> InjectivityMargin:
    """
    min ‖i'(x) - i'(y)‖ over sampled node pairs with lamination distance > eps0.

    The candidate pairs do not depend on eps0, so the margin is monotone in it.

    Args:
        immersion_nodes: i' at nodes, shape (codes, nodes, n)
        core: optional boolean mask of admissible nodes (codes, nodes)
    """
    rng = np.random.default_rng(seed)
    rows = np.arange(lam.node_count)
    if core is not None:
        rows = rows[np.asarray(core).reshape(-1)]
    if rows.size > sample_count:
        rows = np.sort(rng.choice(rows, size=sample_count, replace=False))
    codes = rows // lam.nodes_per_leaf
    nodes = rows % lam.nodes_per_leaf
    params = lam.leaf_params()[nodes]
    images = np.asarray(immersion_nodes).reshape(-1, lam.space.n)[rows]

    cum, closed = _arclength(lam) if lam.d == 1 else (None, None)
    best = np.inf
    pair = None
    checked = 0
    for a in range(rows.size):
        b = np.arange(a + 1, rows.size)
        if b.size == 0:
            continue
        dist = np.empty(b.size)
        same = codes[b] == codes[a]
        if lam.d == 1:
            gap = np.abs(cum[codes[a], nodes[b]] - cum[codes[a], nodes[a]])
            if closed is not None:
                gap = np.minimum(gap, closed - gap)
            dist[same] = gap[same]
        else:
            for j in np.nonzero(same)[0]:
                dist[j] = leaf_distance(lam, lam.codes[codes[a]], params[a], params[b[j]], segments=16)
        for j in np.nonzero(~same)[0]:
            dist[j] = lam.code_metric(lam.codes[codes[a]], params[a], lam.codes[codes[b[j]]], params[b[j]])
        far = dist > eps0
        checked += int(np.count_nonzero(far))
        if not np.any(far):
            continue
        img = np.linalg.norm(lam.space.difference(images[b[far]], images[a]), axis=1)
        k = int(np.argmin(img))
        if img[k] < best:
            best = float(img[k])
            other = b[far][k]
            pair = ((lam.codes[codes[a]].label, params[a].tolist()),
                    (lam.codes[codes[other]].label, params[other].tolist()))
    if not np.isfinite(best):
        best = float("inf")
    return InjectivityMargin(margin=best, pair=pair, pairs_checked=checked)


def surviving_core(
    lam: DiscreteLamination,
    dynamics: BaseDynamics,
    steps: int,
    backward: bool = False,
    use_region: bool = True,
) -> np.ndarray:
    """
    Nodes whose f*-orbit (or f*⁻¹-orbit) stays in the chart for `steps` steps.

    Returns:
        boolean mask (codes, nodes); its mean is the surviving fraction
    """
    rule = dynamics.inverse if backward else dynamics.forward
    if rule is None:
        raise InputError("surviving core needs the requested base dynamics", {"backward": backward})
    count = len(lam.codes)
    codes = np.repeat(np.arange(count), lam.nodes_per_leaf)
    params = np.tile(lam.leaf_params(), (count, 1))
    alive = np.ones(codes.size, dtype=bool)
    region = lam.marked_region if use_region else None
    for _ in range(steps):
        codes, params = rule(codes, params)
        for j, axis in enumerate(lam.axes):
            if not axis.periodic:
                alive &= (params[:, j] >= axis.lo - 1e-12) & (params[:, j] <= axis.hi + 1e-12)
        if region is not None:
            t, _ = region.normalized_distance(lam.axes, params)
            alive &= t < 1.0
    return alive.reshape(count, lam.nodes_per_leaf)


# ===========================================
# PROJECTION ONTO THE IMMERSED LAMINATION
# ===========================================

@dataclass
class Projection:
    codes: np.ndarray
    params: np.ndarray
    distance: np.ndarray
    converged: np.ndarray


class ImmersedLamination:
    """i' = I(·, s) with fiber projection of arbitrary ambient points."""

    def __init__(self, lam: DiscreteLamination, frames: NormalFrame, s: Section, cfg: TransformConfig):
        self.lam = lam
        self.cfg = cfg
        self.immersion = section_to_immersion(lam, frames, s)
        self.chart = FiberChart(lam, frames)
        nodes = self.immersion.at_nodes().reshape(-1, lam.space.n)
        self.node_points = nodes
        self.tree = cKDTree(self._embed(nodes))

    def _embed(self, pts: np.ndarray) -> np.ndarray:
        """Angles go to (cos, sin) so that the tree sees circle distances."""
        mask = self.lam.space.angle_mask
        if not mask.any():
            return pts
        return np.hstack([pts[:, ~mask], np.cos(pts[:, mask]), np.sin(pts[:, mask])])

    def _clip(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, copy=True)
        for j, axis in enumerate(self.lam.axes):
            if not axis.periodic:
                slack = 0.99 * axis.spacing
                u[:, j] = np.clip(u[:, j], axis.lo - slack, axis.hi + slack)
        return u

    def _project_once(self, points: np.ndarray, codes: np.ndarray, guess: np.ndarray) -> Projection:
        lam = self.lam
        n, d, k = lam.space.n, lam.d, lam.normal_dim
        z0 = np.hstack([guess, np.zeros((points.shape[0], k))])

        def residual(z: np.ndarray, rows: np.ndarray) -> np.ndarray:
            out = np.empty((rows.size, n))
            u = self._clip(z[:, :d])
            for c in np.unique(codes[rows]):
                mask = codes[rows] == c
                out[mask] = self.chart(int(c), u[mask], z[mask, d:])
            return lam.space.difference(points[rows], out)

        result = batched_newton(residual, z0, self.cfg.newton_tol, self.cfg.newton_max)
        u = result.z[:, :d]
        inside = np.ones(points.shape[0], dtype=bool)
        for j, axis in enumerate(lam.axes):
            if axis.periodic:
                u[:, j] = axis.reduce(u[:, j])
            else:
                inside &= (u[:, j] >= axis.lo - axis.spacing) & (u[:, j] <= axis.hi + axis.spacing)
        dist = np.full(points.shape[0], np.inf)
        ok = result.converged & inside
        for c in np.unique(codes[ok]):
            mask = ok & (codes == c)
            landed = self.immersion(int(c), u[mask])
            dist[mask] = np.linalg.norm(lam.space.difference(points[mask], landed), axis=1)
        return Projection(codes=codes, params=u, distance=dist, converged=ok)

    def project(self, points: np.ndarray, codes: Optional[np.ndarray] = None,
                guess: Optional[np.ndarray] = None, candidates: int = 8) -> Projection:
        """
        Fiber projection y = I(c, u, w); distance = ‖y - i'(c, u)‖.

        Without an explicit (code, guess) the nearest `candidates` nodes of i'
        seed separate solves and the closest landing wins.
        """
        lam = self.lam
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if codes is not None and guess is not None:
            return self._project_once(points, np.asarray(codes), np.atleast_2d(guess))
        count = min(candidates, self.node_points.shape[0])
        _, nearest = self.tree.query(self._embed(points), k=count)
        nearest = nearest.reshape(points.shape[0], count)
        best: Optional[Projection] = None
        for j in range(count):
            rows = nearest[:, j]
            trial = self._project_once(points, rows // lam.nodes_per_leaf,
                                       lam.leaf_params()[rows % lam.nodes_per_leaf])
            if best is None:
                best = trial
                continue
            better = trial.distance < best.distance
            best.codes = np.where(better, trial.codes, best.codes)
            best.params = np.where(better[:, None], trial.params, best.params)
            best.distance = np.where(better, trial.distance, best.distance)
            best.converged = best.converged | trial.converged
        return best


# ===========================================
# SHADOWING
# ===========================================

@dataclass
class ShadowResult:
    code: str
    u: List[float]
    residual: float
    leaf_distance: float
    bound: float
    success: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _check_hypotheses(lam: DiscreteLamination, sys: MapSystem, dynamics: BaseDynamics,
                      immersed: ImmersedLamination, pseudo: Sequence[Tuple[int, np.ndarray]],
                      ambient: np.ndarray, eps: float, backward: bool) -> None:
    if len(pseudo) < MIN_ORBIT or len(ambient) < MIN_ORBIT:
        raise HypothesisError("shadowing needs sequences of length >= 10",
                              {"pseudo": len(pseudo), "ambient": len(ambient)})
    if len(pseudo) != len(ambient):
        raise HypothesisError("pseudo-orbit and ambient orbit lengths differ")
    rule = dynamics.inverse if backward else dynamics.forward
    if rule is None:
        raise InputError("base dynamics lacks the requested direction", {"backward": backward})
    for j in range(len(pseudo) - 1):
        c, u = pseudo[j]
        nc, nu = rule(np.array([c]), np.atleast_2d(u))
        jump = lam.distance_between(int(nc[0]), nu[0], pseudo[j + 1][0], pseudo[j + 1][1])
        if jump > eps:
            raise HypothesisError("pseudo-orbit jump exceeds eps", {"step": j, "jump": jump, "eps": eps})
        if backward:
            drift = np.linalg.norm(lam.space.difference(eval_map(sys, ambient[j + 1]), ambient[j]))
        else:
            drift = np.linalg.norm(lam.space.difference(eval_map(sys, ambient[j]), ambient[j + 1]))
        if drift > eps:
            raise HypothesisError("ambient orbit step exceeds eps", {"step": j, "drift": float(drift)})
    for j, (c, u) in enumerate(pseudo):
        near = immersed.immersion(int(c), np.atleast_2d(u))[0]
        gap = float(np.linalg.norm(lam.space.difference(near, ambient[j])))
        if gap > eps:
            raise HypothesisError("ambient orbit is not eps-close to the pseudo-orbit", {"step": j, "gap": gap})


def _shadow(sys, lam, frames, s_star, pseudo, ambient, eps, cfg, dynamics, tol, bound, backward) -> ShadowResult:
    immersed = ImmersedLamination(lam, frames, s_star, cfg)
    ambient = np.asarray(ambient, dtype=float)
    _check_hypotheses(lam, sys, dynamics, immersed, pseudo, ambient, eps, backward)
    c0, u0 = pseudo[0]
    proj = immersed.project(ambient[:1], codes=np.array([c0]), guess=np.atleast_2d(u0))
    if not proj.converged[0]:
        raise ContainmentError("y0 does not project onto the immersed leaf of x0",
                               {"code": lam.codes[c0].label, "u": np.asarray(u0).tolist()})
    z0 = proj.params[0]
    along = leaf_distance(lam, lam.codes[c0], u0, z0)
    bound = eps if bound is None else bound
    tol = 10.0 * cfg.newton_tol if tol is None else tol
    residual = float(proj.distance[0])
    return ShadowResult(code=lam.codes[c0].label, u=z0.tolist(), residual=residual, leaf_distance=along,
                        bound=bound, success=residual <= tol and along <= bound)


def shadow_check_forward(sys: MapSystem, lam: DiscreteLamination, frames: NormalFrame, s_star: Section,
                         pseudo_orbit: Sequence[Tuple[int, np.ndarray]], ambient_orbit: np.ndarray,
                         eps: float, cfg: TransformConfig, dynamics: BaseDynamics,
                         tol: Optional[float] = None, bound: Optional[float] = None) -> ShadowResult:
    """
    Find z₀ on the leaf of x₀ with i'(z₀) = y₀ for an ε-pseudo-orbit (x_n) shadowed by an f'-orbit (y_n).

    Raises:
        HypothesisError: closeness hypotheses violated
        ContainmentError: y₀ does not project onto the immersed lamination
    """
    return _shadow(sys, lam, frames, s_star, pseudo_orbit, ambient_orbit, eps, cfg, dynamics, tol, bound, False)


def shadow_check_backward(sys: MapSystem, lam: DiscreteLamination, frames: NormalFrame, s_star: Section,
                          pseudo_preorbit: Sequence[Tuple[int, np.ndarray]], ambient_preorbit: np.ndarray,
                          eps: float, cfg: TransformConfig, dynamics: BaseDynamics,
                          tol: Optional[float] = None, bound: Optional[float] = None) -> ShadowResult:
    """Mirror of shadow_check_forward along preorbits (f*⁻¹ jumps, f'(y_{n+1}) ≈ y_n)."""
    return _shadow(sys, lam, frames, s_star, pseudo_preorbit, ambient_preorbit, eps, cfg, dynamics, tol, bound,
                   True)


def exact_orbit(sys: MapSystem, lam: DiscreteLamination, frames: NormalFrame, s_star: Section,
                dynamics: BaseDynamics, code_idx: int, node: int, length: int,
                backward: bool = False) -> Tuple[List[Tuple[int, np.ndarray]], np.ndarray]:
    """Pseudo-orbit of f* (or f*⁻¹) from a node and the matching points of i'."""
    immersion = section_to_immersion(lam, frames, s_star)
    rule = dynamics.inverse if backward else dynamics.forward
    c = np.array([code_idx])
    u = lam.leaf_params()[node][None, :]
    pseudo, ambient = [], []
    for _ in range(length):
        pseudo.append((int(c[0]), u[0].copy()))
        ambient.append(immersion(int(c[0]), u)[0])
        c, u = rule(c, u)
    return pseudo, np.array(ambient)


# ===========================================
# BOUNDED ORBIT CONTAINMENT
# ===========================================

@dataclass
class ContainmentReport:
    sampled: int
    bounded: int
    contained: int
    unresolved: int
    worst: float
    tolerance: float

    @property
    def fraction(self) -> float:
        if self.bounded == 0:
            return 1.0
        return (self.contained + self.unresolved) / self.bounded

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["fraction"] = self.fraction
        return out


def _containment(immersed: ImmersedLamination, points: np.ndarray, sampled: int, tol: float) -> ContainmentReport:
    lam = immersed.lam
    depth = lam.codes[0].depth if lam.codes else 0
    resolution = 2.0 ** (-depth) if lam.scheme is not None else 0.0
    if points.shape[0] == 0:
        return ContainmentReport(sampled=sampled, bounded=0, contained=0, unresolved=0, worst=0.0, tolerance=tol)
    proj = immersed.project(points)
    dist = proj.distance
    contained = int(np.count_nonzero(dist <= tol))
    unresolved = int(np.count_nonzero((dist > tol) & (dist <= max(tol, resolution))))
    if unresolved:
        logger.warning(f"{unresolved} containment gaps below the truncation resolution {resolution:.3g}")
    worst = float(np.max(dist[np.isfinite(dist)])) if np.any(np.isfinite(dist)) else float("inf")
    return ContainmentReport(sampled=sampled, bounded=int(points.shape[0]), contained=contained,
                             unresolved=unresolved, worst=worst, tolerance=tol)


def bounded_orbit_containment(sys: MapSystem, immersed: ImmersedLamination, points: np.ndarray,
                              steps: int = 50, radius: float = 4.0, tol: float = 1e-3) -> ContainmentReport:
    """Points whose `steps`-step f'-orbit stays within `radius` must lie on i'."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    current = points.copy()
    bounded = np.ones(points.shape[0], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            current = np.asarray(sys.rule(current, sys.params), dtype=float)
            bounded &= np.all(np.isfinite(current), axis=1) & (np.linalg.norm(current, axis=1) <= radius)
            current[~bounded] = 0.0
    return _containment(immersed, points[bounded], points.shape[0], tol)


def bounded_preorbit_containment(sys: MapSystem, immersed: ImmersedLamination, seeds: np.ndarray,
                                 steps: int = 30, inside=None, tol: float = 1e-3) -> ContainmentReport:
    """
    Push seeds forward `steps` times; final points whose whole history stays
    in `inside` have a bounded preorbit and must lie on i'.
    """
    current = np.atleast_2d(np.asarray(seeds, dtype=float))
    keep = np.ones(current.shape[0], dtype=bool)
    if inside is not None:
        keep &= inside(current)
    for _ in range(steps):
        current = eval_map(sys, current)
        if inside is not None:
            keep &= inside(current)
    return _containment(immersed, current[keep], current.shape[0], tol)


# ===========================================
# EXPANSIVENESS
# ===========================================

@dataclass
class ExpansivenessProfile:
    profile: List[float]
    surviving: List[int]
    threshold: float
    collapsed: bool
    trials: int

    @property
    def verdict(self) -> str:
        return "collapsed" if self.collapsed else "inconclusive"

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["verdict"] = self.verdict
        return out


def plaque_expansiveness_probe(
    lam: DiscreteLamination,
    dynamics: BaseDynamics,
    eps: float,
    trial_count: int = 64,
    steps: Optional[int] = None,
    seed: int = 0,
    backward: bool = False,
    threshold: Optional[float] = None,
) -> ExpansivenessProfile:
    """
    Random ε-close pairs iterated by f* (or f*⁻¹).

    profile[n] is the largest root transversal distance among pairs still
    ε-close after n steps; collapse below `threshold` is evidence of
    plaque-expansiveness, never proof.
    """
    rule = dynamics.inverse if backward else dynamics.forward
    if rule is None:
        raise InputError("probe needs the requested base dynamics", {"backward": backward})
    depth = lam.codes[0].depth if lam.codes else 0
    steps = steps if steps is not None else max(depth + 2, 4)
    threshold = threshold if threshold is not None else min(2.0 ** (-depth), eps / 4.0)
    rng = np.random.default_rng(seed)
    params = lam.leaf_params()

    roots: List[float] = []
    pairs = []
    attempts = 0
    while len(pairs) < trial_count and attempts < 20 * trial_count:
        attempts += 1
        row = int(rng.integers(lam.node_count))
        ca, node = divmod(row, lam.nodes_per_leaf)
        cb = int(rng.integers(len(lam.codes)))
        ua = params[node]
        spacing = np.array([a.spacing for a in lam.axes])
        ub = ua + rng.uniform(-1.0, 1.0, size=lam.d) * spacing
        for j, axis in enumerate(lam.axes):
            if not axis.periodic:
                ub[j] = min(max(ub[j], axis.lo), axis.hi)
        if lam.distance_between(ca, ua, cb, ub) > eps:
            continue
        transversal = 0.0 if ca == cb else float(lam.code_metric(lam.codes[ca], ua, lam.codes[cb], ub))
        pairs.append([np.array([ca, cb]), np.vstack([ua, ub])])
        roots.append(transversal)

    alive = np.ones(len(pairs), dtype=bool)
    profile = [max(roots) if roots else 0.0]
    surviving = [len(pairs)]
    for _ in range(steps):
        for idx, (codes, us) in enumerate(pairs):
            if not alive[idx]:
                continue
            codes, us = rule(codes, us)
            pairs[idx] = [codes, us]
            inside = all(axis.periodic or np.all((us[:, j] >= axis.lo) & (us[:, j] <= axis.hi))
                         for j, axis in enumerate(lam.axes))
            if not inside or lam.distance_between(int(codes[0]), us[0], int(codes[1]), us[1]) > eps:
                alive[idx] = False
        live = [roots[i] for i in range(len(pairs)) if alive[i]]
        profile.append(max(live) if live else 0.0)
        surviving.append(len(live))

    collapsed = profile[-1] < threshold
    if not collapsed:
        logger.warning("expansiveness probe inconclusive: transversally separated pairs stay eps-close")
    return ExpansivenessProfile(profile=profile, surviving=surviving, threshold=threshold,
                                collapsed=collapsed, trials=len(pairs))


@dataclass
class PlaqueGrowth:
    passed: bool
    delta: float
    eps: float
    diameters: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def plaque_growth_check(
    lam: DiscreteLamination,
    dynamics: BaseDynamics,
    eps: float,
    steps: int = 3,
    samples: int = 8,
    seed: int = 0,
    backward: bool = False,
    halvings: int = 12,
) -> PlaqueGrowth:
    """
    Search δ ∈ {ε, ε/2, ...} with f*ⁿ(plaque_δ(x)) inside plaque_ε(f*ⁿ(x)) for n ≤ steps.

    Plaque images are measured through the corners of the δ-plaque box.
    """
    rule = dynamics.inverse if backward else dynamics.forward
    if rule is None:
        raise InputError("growth check needs the requested base dynamics", {"backward": backward})
    rng = np.random.default_rng(seed)
    params = lam.leaf_params()
    rows = rng.choice(lam.node_count, size=min(samples, lam.node_count), replace=False)

    delta = eps
    for _ in range(halvings):
        worst = []
        ok = True
        for row in rows:
            c, node = divmod(int(row), lam.nodes_per_leaf)
            u = params[node]
            box = plaque_neighborhood(lam, lam.codes[c], u, delta)
            corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in zip(box.lo, box.hi)], indexing="ij"))
            corners = corners.reshape(lam.d, -1).T
            codes = np.full(corners.shape[0] + 1, c)
            us = np.vstack([u, corners])
            for n in range(steps):
                codes, us = rule(codes, us)
                if not all(axis.periodic or np.all((us[:, j] >= axis.lo) & (us[:, j] <= axis.hi))
                           for j, axis in enumerate(lam.axes)):
                    ok = False
                    break
                spread = max(lam.distance_between(int(codes[0]), us[0], int(codes[m]), us[m])
                             for m in range(1, us.shape[0]))
                worst.append(spread)
                if spread > eps:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return PlaqueGrowth(passed=True, delta=delta, eps=eps, diameters=worst)
        delta *= 0.5
    return PlaqueGrowth(passed=False, delta=delta, eps=eps)
