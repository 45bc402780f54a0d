"""
Tangent-plane transport and normal hyperbolicity.

Planes are graphs l: ℝ^d → ℝ^k over the leaf direction in the node basis
[T | N] (horizontal first). For a Jacobian written in such bases as
M = [[A, C], [E, B]]:

    expanded:   l' = (B - l·C)⁻¹ (l·A - E)       (pull back from f̂(x))
    contracted: l' = (E + B·l)(A + C·l)⁻¹       (push forward from z)
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bundle import NormalFrame, PlaneField, Section, leaf_tangents, section_to_immersion
from .config import settings
from .dynsys import MapSystem, jacobian
from .errors import GeometryError, HyperbolicityViolation, ImmersionViolation, NonContractionError
from .graph_transform import TRANSFORMS, BaseDynamics, TransformConfig, bump_weights
from .lamination import DiscreteLamination, GridInterpolant
from .models import HyperbolicityEstimate, IterationRecord, Offender, PlaneReport, Variant

logger = logging.getLogger(__name__)

MARGIN = 1.05


# ===========================================
# TRANSPORT
# ===========================================

def _blocks(M: np.ndarray, d: int):
    return M[..., :d, :d], M[..., :d, d:], M[..., d:, :d], M[..., d:, d:]


def _check_condition(matrices: np.ndarray, error, message: str) -> None:
    if matrices.shape[-1] == 0:
        return
    cond = np.linalg.cond(matrices.reshape(-1, *matrices.shape[-2:]))
    bad = ~np.isfinite(cond) | (cond > settings.MAX_TRANSPORT_CONDITION)
    if np.any(bad):
        first = int(np.nonzero(bad)[0][0])
        raise error(message, {"index": first, "condition": float(cond[first])})


def transport_plane_expanded(M: np.ndarray, l: np.ndarray, d: int) -> np.ndarray:
    """
    Pull a plane back through Df (normal expansion).

    Args:
        M: Df in node bases, shape (..., n, n)
        l: plane at the image point, shape (..., k, d)
        d: leaf dimension

    Raises:
        HyperbolicityViolation: vertical block B - l·C singular
    """
    A, C, E, B = _blocks(np.asarray(M, dtype=float), d)
    l = np.asarray(l, dtype=float)
    vertical = B - l @ C
    _check_condition(vertical, HyperbolicityViolation, "vertical block not invertible")
    return np.linalg.solve(vertical, l @ A - E)


def transport_plane_contracted(M: np.ndarray, l: np.ndarray, d: int) -> np.ndarray:
    """
    Push a plane forward through Df (normal contraction).

    Raises:
        ImmersionViolation: horizontal block A + C·l singular
    """
    A, C, E, B = _blocks(np.asarray(M, dtype=float), d)
    l = np.asarray(l, dtype=float)
    horizontal = A + C @ l
    _check_condition(horizontal, ImmersionViolation, "horizontal block not invertible")
    numerator = E + B @ l
    # X·H = N  <=>  Hᵀ·Xᵀ = Nᵀ
    return np.swapaxes(np.linalg.solve(np.swapaxes(horizontal, -1, -2), np.swapaxes(numerator, -1, -2)), -1, -2)


def bump_leibniz(rho: np.ndarray, grad_rho: np.ndarray, s_new: np.ndarray, l: np.ndarray) -> np.ndarray:
    """∇(ρ·s) = ρ·∇s + s ⊗ ∇ρ, shapes (...), (..., d), (..., k), (..., k, d)."""
    rho = np.asarray(rho, dtype=float)
    return rho[..., None, None] * np.asarray(l) + np.asarray(s_new)[..., :, None] * np.asarray(grad_rho)[..., None, :]


# ===========================================
# PLANE FIELD FIXED POINT
# ===========================================

class BasisChart:
    """Interpolated node bases [T | N] off the grid."""

    def __init__(self, lam: DiscreteLamination, frames: NormalFrame):
        self.lam = lam
        self.basis = frames.basis()
        n = lam.space.n
        self._interpolants = tuple(
            GridInterpolant(lam.axes, self.basis[c].reshape(lam.counts + (n * n,)))
            for c in range(len(lam.codes))
        )

    def __call__(self, code_idx: int, u: np.ndarray) -> np.ndarray:
        n = self.lam.space.n
        return self._interpolants[code_idx](np.atleast_2d(u)).reshape(-1, n, n)


def _grouped_matrices(codes: np.ndarray, u: np.ndarray, evaluate, shape) -> np.ndarray:
    out = np.empty((u.shape[0],) + shape)
    for c in np.unique(codes):
        mask = codes == c
        out[mask] = evaluate(int(c), u[mask])
    return out


class PlaneTransport:
    """One transport step of a plane field along the converged section."""

    def __init__(
        self,
        sys: MapSystem,
        lam: DiscreteLamination,
        frames: NormalFrame,
        s_star: Section,
        variant: Variant,
        dynamics: BaseDynamics,
        cfg: TransformConfig,
    ):
        self.lam = lam
        self.variant = Variant(variant)
        self.cfg = cfg
        n, d, k = lam.space.n, lam.d, lam.normal_dim
        step = TRANSFORMS[self.variant](sys, lam, frames, s_star, dynamics, cfg, warm=s_star)
        self.unbumped = step.section.values.reshape(-1, k)
        self.other_codes = step.target_codes
        self.other_params = step.target_params
        chart = BasisChart(lam, frames)
        own = frames.basis().reshape(-1, n, n)
        other = _grouped_matrices(self.other_codes, self.other_params, chart, (n, n))

        if self.variant == Variant.EXPANDED:
            points = section_to_immersion(lam, frames, s_star).at_nodes().reshape(-1, n)
            Df = jacobian(sys, points)
            self.M = np.linalg.solve(other, Df @ own)
        else:
            immersion = section_to_immersion(lam, frames, s_star)
            points = _grouped_matrices(self.other_codes, self.other_params, immersion, (n,))
            Df = jacobian(sys, points)
            self.M = np.linalg.solve(own, Df @ other)

        rho, grad = bump_weights(lam, cfg)
        self.rho = rho.reshape(-1)
        self.grad = grad.reshape(-1, d)

    def __call__(self, planes: PlaneField) -> PlaneField:
        lam = self.lam
        k, d = lam.normal_dim, lam.d
        values = planes.matrices.reshape(len(lam.codes), -1, k * d)
        interp = {int(c): GridInterpolant(lam.axes, values[c].reshape(lam.counts + (k * d,)))
                  for c in np.unique(self.other_codes)}

        def evaluate(c: int, u: np.ndarray) -> np.ndarray:
            return interp[c](u).reshape(-1, k, d)

        remote = _grouped_matrices(self.other_codes, self.other_params, evaluate, (k, d))
        if self.variant == Variant.EXPANDED:
            moved = transport_plane_expanded(self.M, remote, d)
        else:
            moved = transport_plane_contracted(self.M, remote, d)
        corrected = bump_leibniz(self.rho, self.grad, self.unbumped, moved)
        return PlaneField(corrected.reshape(planes.matrices.shape))


def iterate_plane_field(
    sys: MapSystem,
    lam: DiscreteLamination,
    frames: NormalFrame,
    s_star: Section,
    variant: Variant,
    dynamics: BaseDynamics,
    cfg: TransformConfig,
    plane_eps: Optional[float] = None,
    plane_tol: Optional[float] = None,
) -> Tuple[PlaneField, PlaneReport]:
    """
    Fixed point of the plane transport from the zero plane field.

    Raises:
        HyperbolicityViolation: a transported plane leaves the ε_plane ball
        NonContractionError: no contraction for stall_window steps
    """
    plane_eps = plane_eps or settings.PLANE_EPS
    plane_tol = plane_tol or settings.PLANE_TOL
    transport = PlaneTransport(sys, lam, frames, s_star, variant, dynamics, cfg)
    report = PlaneReport(variant=Variant(variant))
    current = PlaneField.zero(lam)
    previous: Optional[float] = None
    stalled = 0

    for k in range(1, cfg.fixpoint_max + 1):
        nxt = transport(current)
        norm = nxt.sup_norm()
        if norm > plane_eps:
            raise HyperbolicityViolation("plane left the ε_plane ball", {"iteration": k, "norm": norm, "eps": plane_eps})
        distance = nxt.distance(current)
        ratio = distance / previous if previous else None
        report.iterations.append(IterationRecord(k=k, sup_distance=distance, ratio=ratio))
        current = nxt
        if distance <= plane_tol:
            report.converged = True
            break
        if ratio is not None and ratio >= 1.0 and distance > 10.0 * plane_tol:
            stalled += 1
            if stalled >= cfg.stall_window:
                raise NonContractionError("plane transport is not contracting", {"iteration": k, "ratio": ratio})
        else:
            stalled = 0
        previous = distance

    report.sup_norm = current.sup_norm()
    logger.info(f"plane field: {len(report.iterations)} iterations, sup norm {report.sup_norm:.3e}")
    return current, report


def plane_contraction_ratios(transport: PlaneTransport, pairs: int = 100, seed: int = 0,
                             radius: Optional[float] = None) -> List[float]:
    """‖φ(l1) - φ(l2)‖ / ‖l1 - l2‖ for random plane fields in the ε_plane ball."""
    rng = np.random.default_rng(seed)
    radius = radius or 0.5 * settings.PLANE_EPS
    lam = transport.lam
    shape = (len(lam.codes), lam.nodes_per_leaf, lam.normal_dim, lam.d)
    ratios = []
    for _ in range(pairs):
        a = PlaneField(rng.uniform(-radius, radius, size=shape) / max(1, lam.d))
        b = PlaneField(rng.uniform(-radius, radius, size=shape) / max(1, lam.d))
        gap = a.distance(b)
        if gap > 0:
            ratios.append(transport(a).distance(transport(b)) / gap)
    return ratios


# ===========================================
# NORMAL HYPERBOLICITY
# ===========================================

@dataclass
class Splitting:
    """Raw E^s / E^u hints as functions of ambient points."""
    stable: Callable[[np.ndarray], np.ndarray]
    unstable: Callable[[np.ndarray], np.ndarray]
    ks: int
    ku: int


def _empty(n: int) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.zeros(np.shape(x)[:-1] + (n, 0))


def coordinate_splitting(n: int, stable_axes: Sequence[int], unstable_axes: Sequence[int]) -> Splitting:
    """Splitting spanned by coordinate axes."""
    def columns(axes: Sequence[int]) -> Callable[[np.ndarray], np.ndarray]:
        if not axes:
            return _empty(n)
        basis = np.eye(n)[:, list(axes)]
        return lambda x: np.broadcast_to(basis, np.shape(x)[:-1] + basis.shape).copy()

    return Splitting(stable=columns(stable_axes), unstable=columns(unstable_axes),
                     ks=len(stable_axes), ku=len(unstable_axes))


def _orbit(lam: DiscreteLamination, dynamics: BaseDynamics, codes: np.ndarray, u: np.ndarray,
           length: int, backward: bool):
    path = [(codes, u)]
    for _ in range(length):
        c, p = path[-1]
        path.append(dynamics.inverse(c, p) if backward else dynamics.forward(c, p))
    return path


def estimate_normal_hyperbolicity(
    sys: MapSystem,
    lam: DiscreteLamination,
    splitting: Splitting,
    dynamics: BaseDynamics,
    orbit_len: int = 4,
    samples: int = 64,
    r_query: int = 6,
    seed: int = 0,
    backward: bool = False,
    core: Optional[np.ndarray] = None,
) -> HyperbolicityEstimate:
    """
    Measure the domination rates along f*-orbits.

    With diagonal blocks Ms, Mc, Mu of Dfⁿ in the raw [E^s | T | E^u] bases:
        λ_s(r) = ‖Ms‖ / min(1, σ_min(Mc))^r
        λ_u(r) = max(1, σ_max(Mc))^r / σ_min(Mu)
        λ(r)   = max(λ_s, λ_u)^(1/n)
    r_max is the largest r ≤ r_query with 1.05·λ(r) < 1; λ is reported at r = 1.

    Raises:
        GeometryError: splitting not transverse
    """
    n, d = lam.space.n, lam.d
    ks, ku = splitting.ks, splitting.ku
    if ks + d + ku != n:
        raise GeometryError("splitting dimensions must sum to n", {"ks": ks, "d": d, "ku": ku, "n": n})
    rng = np.random.default_rng(seed)
    total = lam.node_count
    pool = np.arange(total) if core is None else np.nonzero(np.asarray(core).reshape(-1))[0]
    if pool.size == 0:
        raise GeometryError("no admissible sample nodes", {"lamination": lam.name})
    rows = np.sort(rng.choice(pool, size=min(samples, pool.size), replace=False))
    codes = rows // lam.nodes_per_leaf
    params = lam.leaf_params()[rows % lam.nodes_per_leaf]

    tangents = leaf_tangents(lam)
    tangent_interp = [GridInterpolant(lam.axes, tangents[c].reshape(lam.counts + (n * d,)))
                      for c in range(len(lam.codes))]

    def tangent_at(c: int, u: np.ndarray) -> np.ndarray:
        return tangent_interp[c](u).reshape(-1, n, d)

    def point_at(c: int, u: np.ndarray) -> np.ndarray:
        return lam.interpolant(c)(u)

    def basis_at(c_arr: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = _grouped_matrices(c_arr, u, point_at, (n,))
        tan = _grouped_matrices(c_arr, u, tangent_at, (n, d))
        B = np.concatenate([splitting.stable(pts), tan, splitting.unstable(pts)], axis=-1)
        return pts, B

    path = _orbit(lam, dynamics, codes, params, orbit_len, backward)
    bases = [basis_at(c, u) for c, u in path]
    cond = np.linalg.cond(bases[0][1])
    if np.any(~np.isfinite(cond)) or np.any(cond > settings.MAX_CONDITION):
        worst = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
        raise GeometryError("splitting hint not transverse", {"code": lam.codes[codes[worst]].label,
                                                               "u": params[worst].tolist()})

    product = np.broadcast_to(np.eye(n), (rows.size, n, n)).copy()
    for j in range(orbit_len):
        if backward:
            # the map runs from path[j + 1] to path[j]
            src_pts, src_B = bases[j + 1]
            _, dst_B = bases[j]
        else:
            src_pts, src_B = bases[j]
            _, dst_B = bases[j + 1]
        M = np.linalg.solve(dst_B, jacobian(sys, src_pts) @ src_B)
        diag = np.zeros_like(M)
        for lo, hi in ((0, ks), (ks, ks + d), (ks + d, n)):
            diag[:, lo:hi, lo:hi] = M[:, lo:hi, lo:hi]
        product = diag @ product if not backward else product @ diag

    Ms = product[:, :ks, :ks]
    Mc = product[:, ks:ks + d, ks:ks + d]
    Mu = product[:, ks + d:, ks + d:]
    sc = np.linalg.svd(Mc, compute_uv=False)
    c_min, c_max = sc[:, -1], sc[:, 0]
    s_norm = np.linalg.norm(Ms, ord=2, axis=(1, 2)) if ks else np.zeros(rows.size)
    u_min = np.linalg.svd(Mu, compute_uv=False)[:, -1] if ku else None

    def rate(r: float) -> np.ndarray:
        lam_s = s_norm / np.minimum(1.0, c_min) ** r
        lam_u = np.maximum(1.0, c_max) ** r / u_min if ku else np.zeros(rows.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.maximum(lam_s, lam_u) ** (1.0 / orbit_len)

    by_r = [float(np.max(rate(r))) for r in range(0, r_query + 1)]
    r_max = 0
    for r in range(1, r_query + 1):
        if MARGIN * by_r[r] < 1.0:
            r_max = r
        else:
            break
    hyperbolic = by_r[0] < 1.0 and MARGIN * by_r[1] < 1.0

    per_sample = rate(1)
    order = np.argsort(-per_sample, kind="stable")[:5]
    offenders = [Offender(code=lam.codes[codes[i]].label, u=params[i].tolist(), ratio=float(per_sample[i]))
                 for i in order]
    if not hyperbolic:
        logger.warning(f"normal hyperbolicity not detected: lambda(1)={by_r[1]:.3f}")
    return HyperbolicityEstimate(lambda_=by_r[1], r_max=r_max if hyperbolic else 0, samples=int(rows.size),
                                 hyperbolic=hyperbolic, lambda_by_r=by_r, worst_offenders=offenders)


# ===========================================
# REGULARITY DIAGNOSTIC
# ===========================================

def divided_difference_sup(values: np.ndarray, spacing: float, order: int, periodic: bool = True) -> float:
    """sup |Δ^order v| / h^order along axis 0."""
    diff = np.asarray(values, dtype=float)
    for _ in range(order):
        diff = np.roll(diff, -1, axis=0) - diff if periodic else np.diff(diff, axis=0)
    return float(np.max(np.abs(diff))) / spacing ** order


def regularity_profile(samples: Sequence[Tuple[float, np.ndarray]], max_order: int = 5,
                       periodic: bool = True) -> Dict[int, List[float]]:
    """
    Divided-difference sup-norms per order for a sequence of refinements.

    Args:
        samples: (spacing, node values) from coarse to fine
    """
    return {order: [divided_difference_sup(v, h, order, periodic) for h, v in samples]
            for order in range(1, max_order + 1)}


def growth_factors(profile: Dict[int, List[float]]) -> Dict[int, float]:
    """Last-over-first growth of each order across the refinements."""
    out = {}
    for order, sups in profile.items():
        out[order] = sups[-1] / sups[0] if sups[0] > 0 else float("inf")
    return out


def regularity_consistent(profile: Dict[int, List[float]], r_max: int,
                          bounded: float = 1.5, growing: float = 2.0) -> bool:
    """Order r_max differences stay bounded; order r_max + 1 differences grow."""
    growth = growth_factors(profile)
    if r_max not in growth or r_max + 1 not in growth:
        return False
    return growth[r_max] < bounded and growth[r_max + 1] >= growing
