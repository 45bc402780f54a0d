"""
Normally hyperbolic persistence through stable and unstable laminations.

The base leaves are thickened by an E^s disk (stable lamination, normally
expanded) and by an E^u disk (unstable lamination, normally contracted).
Each is carried through the graph transform; the perturbed leaf is their
intersection inside the fibers of the base lamination.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bundle import NormalFrame, Section, SectionImmersion, build_normal_frames, section_to_immersion
from .config import settings
from .dynsys import MapSystem, jacobian
from .errors import GeometryError, InputError, LocalityError
from .graph_transform import (
    BaseDynamics,
    Pullback,
    TransformConfig,
    iterate_to_fixed_point,
    pullback_table,
)
from .lamination import Axis, DiscreteLamination, node_params
from .models import TransformReport, Variant
from .solvers import batched_newton, fd_jacobian
from .tangent import Splitting

logger = logging.getLogger(__name__)


@dataclass
class ThickenedLamination:
    """Base leaves × an E^s (stable) or E^u (unstable) disk, with its converged section."""
    kind: str
    base: DiscreteLamination
    lamination: DiscreteLamination
    thick_dim: int
    disk_radius: float
    frames: NormalFrame
    section: Section
    report: TransformReport

    def immersion(self) -> SectionImmersion:
        return section_to_immersion(self.lamination, self.frames, self.section)

    def zero_slice(self) -> np.ndarray:
        """Thickened points at zero thickening, shape (codes, base nodes, n)."""
        mid = tuple(axis.count // 2 for axis in self.lamination.axes[self.base.d:])
        points = self.lamination.points[(slice(None),) * (1 + self.base.d) + mid]
        return points.reshape(len(self.base.codes), self.base.nodes_per_leaf, self.base.space.n)

    def inclusion_gap(self) -> float:
        """Distance between the zero-thickening slice and the base immersion."""
        diff = self.base.space.difference(self.zero_slice(), self.base.flat_points())
        return float(np.max(np.abs(diff))) if diff.size else 0.0


# ===========================================
# CONSTRUCTION
# ===========================================

def thicken(
    lam: DiscreteLamination,
    directions: Callable[[np.ndarray], np.ndarray],
    thick_dim: int,
    disk_radius: float,
    thick_nodes: int,
    name: str,
) -> DiscreteLamination:
    """Leaves i(x) + H(x)·a over a centered disk grid a ∈ [-r, r]^k."""
    if thick_nodes % 2 == 0:
        raise InputError("thick axes need an odd node count", {"thick_nodes": thick_nodes})
    n = lam.space.n
    thick_axes = tuple(Axis.line(-disk_radius, disk_radius, thick_nodes) for _ in range(thick_dim))
    disk = node_params(thick_axes).reshape(-1, thick_dim)
    base = lam.flat_points()
    H = directions(base.reshape(-1, n)).reshape(base.shape + (thick_dim,))
    offsets = np.einsum("cpnk,qk->cpqn", H, disk)
    points = lam.space.wrap(base[:, :, None, :] + offsets)
    shape = (len(lam.codes),) + lam.counts + tuple(a.count for a in thick_axes) + (n,)
    return DiscreteLamination(
        name=name,
        space=lam.space,
        axes=lam.axes + thick_axes,
        codes=lam.codes,
        points=points.reshape(shape),
        metric_scale=lam.metric_scale,
        tube_radius=lam.tube_radius,
    )


def _thick_dynamics(dynamics: BaseDynamics, d: int, thick_dim: int) -> BaseDynamics:
    """f* on the leaf part; the disk coordinate is left to Newton from 0."""
    def extend(rule):
        if rule is None:
            return None

        def lifted(codes: np.ndarray, u: np.ndarray):
            c, v = rule(codes, u[:, :d])
            return c, np.hstack([v, np.zeros((u.shape[0], thick_dim))])
        return lifted

    return BaseDynamics(forward=extend(dynamics.forward), inverse=extend(dynamics.inverse),
                        name=f"{dynamics.name}-thick")


def _build(kind: str, sys: MapSystem, lam: DiscreteLamination, along, across, thick_dim: int,
           dynamics: BaseDynamics, cfg: TransformConfig, disk_radius: float, thick_nodes: int,
           scenario: str) -> ThickenedLamination:
    thick = thicken(lam, along, thick_dim, disk_radius, thick_nodes, name=f"{lam.name}-{kind}")
    hint = across(thick.flat_points().reshape(-1, lam.space.n))
    hint = hint.reshape(len(thick.codes), thick.nodes_per_leaf, lam.space.n, -1)
    frames = build_normal_frames(thick, hint=hint)
    variant = Variant.EXPANDED if kind == "stable" else Variant.CONTRACTED
    local_cfg = cfg.model_copy(update={"marked_region": None})
    section, report = iterate_to_fixed_point(sys, thick, frames, Section.zero(thick), variant,
                                             _thick_dynamics(dynamics, lam.d, thick_dim), local_cfg,
                                             scenario=f"{scenario}:{kind}")
    return ThickenedLamination(kind=kind, base=lam, lamination=thick, thick_dim=thick_dim,
                               disk_radius=disk_radius, frames=frames, section=section, report=report)


def build_stable_lamination(sys: MapSystem, lam: DiscreteLamination, splitting: Splitting,
                            dynamics: BaseDynamics, cfg: TransformConfig,
                            disk_radius: Optional[float] = None, thick_nodes: int = 17,
                            scenario: str = "") -> ThickenedLamination:
    """E^s-thickened leaves carried by the expanded transform (fibers along E^u)."""
    radius = disk_radius or 0.5 * cfg.eta
    return _build("stable", sys, lam, splitting.stable, splitting.unstable, splitting.ks,
                  dynamics, cfg, radius, thick_nodes, scenario)


def build_unstable_lamination(sys: MapSystem, lam: DiscreteLamination, splitting: Splitting,
                              dynamics: BaseDynamics, cfg: TransformConfig,
                              disk_radius: Optional[float] = None, thick_nodes: int = 17,
                              scenario: str = "") -> ThickenedLamination:
    """E^u-thickened leaves carried by the contracted transform (fibers along E^s)."""
    if dynamics.inverse is None:
        raise InputError("unstable lamination needs a bijective pullback", {"dynamics": dynamics.name})
    radius = disk_radius or 0.5 * cfg.eta
    return _build("unstable", sys, lam, splitting.unstable, splitting.stable, splitting.ku,
                  dynamics, cfg, radius, thick_nodes, scenario)


# ===========================================
# INTERSECTION
# ===========================================

@dataclass
class Intersection:
    """Fiber coordinates of i(f') per node plus the solve's transversality margin."""
    section: Section
    stable_params: np.ndarray
    unstable_params: np.ndarray
    min_singular: float


def intersect_transverse(
    stable: ThickenedLamination,
    unstable: ThickenedLamination,
    lam: DiscreteLamination,
    frames: NormalFrame,
    cfg: TransformConfig,
    rows: Optional[np.ndarray] = None,
) -> Intersection:
    """
    Solve i^s(u_s, a) = i^u(u_u, b) = i(x) + N(x)·w for every node x.

    Raises:
        GeometryError: the two thickened leaves are not transverse
        LocalityError: the intersection lies outside the ε fiber
    """
    n, d, k = lam.space.n, lam.d, lam.normal_dim
    ks, ku = stable.thick_dim, unstable.thick_dim
    total = lam.node_count
    rows = np.arange(total) if rows is None else np.asarray(rows, dtype=int)
    codes = rows // lam.nodes_per_leaf
    params = lam.leaf_params()[rows % lam.nodes_per_leaf]
    base = lam.flat_points().reshape(-1, n)[rows]
    normals = frames.matrices.reshape(-1, n, k)[rows]

    imm_s = stable.immersion()
    imm_u = unstable.immersion()

    def evaluate(imm: SectionImmersion, sub_codes: np.ndarray, u: np.ndarray) -> np.ndarray:
        out = np.empty((u.shape[0], n))
        for c in np.unique(sub_codes):
            mask = sub_codes == c
            out[mask] = imm(int(c), u[mask])
        return out

    def split(z: np.ndarray):
        w = z[:, :k]
        ps = z[:, k:k + d + ks]
        pu = z[:, k + d + ks:]
        return w, ps, pu

    def residual(z: np.ndarray, sub: np.ndarray) -> np.ndarray:
        w, ps, pu = split(z)
        fiber = base[sub] + np.einsum("pnk,pk->pn", normals[sub], w)
        gap_s = lam.space.difference(evaluate(imm_s, codes[sub], ps), fiber)
        gap_u = lam.space.difference(evaluate(imm_u, codes[sub], pu), fiber)
        return np.hstack([gap_s, gap_u])

    z0 = np.hstack([np.zeros((rows.size, k)), params, np.zeros((rows.size, ks)), params,
                    np.zeros((rows.size, ku))])
    result = batched_newton(residual, z0, cfg.newton_tol, cfg.newton_max)
    if result.failures:
        first = int(np.nonzero(~result.converged)[0][0])
        raise GeometryError("stable and unstable leaves do not intersect transversally",
                            {"code": lam.codes[codes[first]].label, "u": params[first].tolist()})

    jac = fd_jacobian(lambda zz: residual(zz, np.arange(rows.size)), result.z)
    min_singular = float(np.min(np.linalg.svd(jac, compute_uv=False)[:, -1])) if rows.size else 0.0

    w, ps, pu = split(result.z)
    norms = np.linalg.norm(w, axis=1)
    if np.any(norms > cfg.eta):
        first = int(np.argmax(norms))
        raise LocalityError("intersection outside the ε fiber",
                            {"code": lam.codes[codes[first]].label, "norm": float(norms[first]), "eta": cfg.eta})

    values = np.zeros((total, k))
    values[rows] = w
    return Intersection(section=Section(values.reshape(len(lam.codes), lam.nodes_per_leaf, k)),
                        stable_params=ps, unstable_params=pu, min_singular=min_singular)


# ===========================================
# PIPELINE
# ===========================================

@dataclass
class HyperbolicResult:
    section: Section
    frames: NormalFrame
    pullback: Pullback
    stable: Optional[ThickenedLamination]
    unstable: Optional[ThickenedLamination]
    stable_report: Optional[TransformReport]
    unstable_report: Optional[TransformReport]
    min_singular: Optional[float] = None

    @property
    def invariance_residual(self) -> float:
        return float(np.max(self.pullback.residual)) if self.pullback.residual.size else 0.0


def splitting_frames(lam: DiscreteLamination, splitting: Splitting) -> NormalFrame:
    """Base frames spanning E^s ⊕ E^u."""
    pts = lam.flat_points().reshape(-1, lam.space.n)
    hint = np.concatenate([splitting.stable(pts), splitting.unstable(pts)], axis=-1)
    hint = hint.reshape(len(lam.codes), lam.nodes_per_leaf, lam.space.n, -1)
    return build_normal_frames(lam, hint=hint)


def persist_hyperbolic(
    sys: MapSystem,
    lam: DiscreteLamination,
    splitting: Splitting,
    dynamics: BaseDynamics,
    cfg: TransformConfig,
    disk_radius: Optional[float] = None,
    thick_nodes: int = 17,
    scenario: str = "",
) -> HyperbolicResult:
    """
    Full normally hyperbolic pipeline.

    Purely expanded (no E^s) and purely contracted (no E^u) splittings run
    the plain graph transform on the base lamination.
    """
    frames = splitting_frames(lam, splitting)

    if splitting.ks == 0 or splitting.ku == 0:
        variant = Variant.EXPANDED if splitting.ks == 0 else Variant.CONTRACTED
        section, report = iterate_to_fixed_point(sys, lam, frames, Section.zero(lam), variant, dynamics, cfg,
                                                 scenario=scenario)
        pull = pullback_table(sys, lam, frames, section, dynamics, cfg)
        stable_report = report if variant == Variant.EXPANDED else None
        unstable_report = report if variant == Variant.CONTRACTED else None
        return HyperbolicResult(section=section, frames=frames, pullback=pull, stable=None, unstable=None,
                                stable_report=stable_report, unstable_report=unstable_report)

    args = (sys, lam, splitting, dynamics, cfg, disk_radius, thick_nodes, scenario)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            stable_future = pool.submit(build_stable_lamination, *args)
            unstable_future = pool.submit(build_unstable_lamination, *args)
            stable, unstable = stable_future.result(), unstable_future.result()
    else:
        stable = build_stable_lamination(*args)
        unstable = build_unstable_lamination(*args)

    for thick in (stable, unstable):
        gap = thick.inclusion_gap()
        if gap > 1e-10:
            raise GeometryError("thickened lamination does not contain the base", {"kind": thick.kind, "gap": gap})

    meet = intersect_transverse(stable, unstable, lam, frames, cfg)
    pull = pullback_table(sys, lam, frames, meet.section, dynamics, cfg)
    logger.info(f"hyperbolic pipeline: sup norm {meet.section.sup_norm():.3e}, "
                f"transversality margin {meet.min_singular:.3e}", extra={"scenario": scenario})
    return HyperbolicResult(section=meet.section, frames=frames, pullback=pull, stable=stable, unstable=unstable,
                            stable_report=stable.report, unstable_report=unstable.report,
                            min_singular=meet.min_singular)


def strong_stable_alignment(sys: MapSystem, lam: DiscreteLamination, hint: Callable[[np.ndarray], np.ndarray],
                            samples: int = 64, seed: int = 0) -> float:
    """
    Largest principal-angle sine between the hint and ker Df at base points.

    The kernel is spanned by the right singular vectors of the smallest
    singular values (as many as the hint has columns).
    """
    rng = np.random.default_rng(seed)
    pts = lam.flat_points().reshape(-1, lam.space.n)
    pick = rng.choice(pts.shape[0], size=min(samples, pts.shape[0]), replace=False)
    pts = pts[np.sort(pick)]
    H = hint(pts)
    q, _ = np.linalg.qr(H)
    _, _, vt = np.linalg.svd(jacobian(sys, pts))
    kernel = np.swapaxes(vt[:, -H.shape[-1]:, :], -1, -2)
    residual = kernel - q @ (np.swapaxes(q, -1, -2) @ kernel)
    return float(np.max(np.linalg.norm(residual, ord=2, axis=(1, 2))))
