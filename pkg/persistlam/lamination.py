"""
Discrete laminations: transversal codes × leaf parameter grids.

A DiscreteLamination stores, for every transversal code, the ambient points
i(x) at the nodes of a shared leaf grid. Between nodes the immersion is
interpolated per axis (periodic on angle axes) and composed across axes.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .dynsys import TWO_PI, CoordinateKind, StateSpace, wrap_angle
from .errors import DomainError, InputError
from .utils import code_label

logger = logging.getLogger(__name__)

MIN_NODES = 8


# ===========================================
# GRID TYPES
# ===========================================

@dataclass(frozen=True)
class Axis:
    """Uniform grid on a line interval (endpoints included) or a full circle."""
    kind: CoordinateKind
    lo: float
    hi: float
    count: int

    def __post_init__(self):
        object.__setattr__(self, "kind", CoordinateKind(self.kind))
        if self.count < MIN_NODES:
            raise InputError(f"axis needs at least {MIN_NODES} nodes", {"count": self.count})
        if not self.hi > self.lo:
            raise InputError("axis needs hi > lo", {"lo": self.lo, "hi": self.hi})

    @classmethod
    def circle(cls, count: int) -> "Axis":
        return cls(CoordinateKind.ANGLE, 0.0, TWO_PI, count)

    @classmethod
    def line(cls, lo: float, hi: float, count: int) -> "Axis":
        return cls(CoordinateKind.LINE, float(lo), float(hi), count)

    @property
    def periodic(self) -> bool:
        return self.kind == CoordinateKind.ANGLE

    @property
    def period(self) -> float:
        return self.hi - self.lo

    @property
    def spacing(self) -> float:
        if self.periodic:
            return self.period / self.count
        return self.period / (self.count - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.spacing * np.arange(self.count)

    def refined(self, factor: int = 2) -> "Axis":
        """Same domain with spacing divided by `factor`."""
        if self.periodic:
            return Axis(self.kind, self.lo, self.hi, self.count * factor)
        return Axis(self.kind, self.lo, self.hi, (self.count - 1) * factor + 1)

    def reduce(self, u: np.ndarray) -> np.ndarray:
        """Map periodic parameters into [lo, hi)."""
        if self.periodic:
            return self.lo + wrap_angle(np.asarray(u, dtype=float) - self.lo, self.period)
        return np.asarray(u, dtype=float)

    def delta(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """a - b, shortest way round on periodic axes."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.periodic:
            d = wrap_angle(d + 0.5 * self.period, self.period) - 0.5 * self.period
        return d


@dataclass(frozen=True)
class TransversalCode:
    """Finite word of branch choices labelling one leaf."""
    symbols: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))

    @property
    def depth(self) -> int:
        return len(self.symbols)

    @property
    def label(self) -> str:
        return code_label(self.symbols)

    def __add__(self, other: "TransversalCode") -> "TransversalCode":
        return TransversalCode(self.symbols + other.symbols)


@dataclass
class LeafGrid:
    """Node values i(x) of one leaf."""
    code: TransversalCode
    axes: Tuple[Axis, ...]
    points: np.ndarray

    @property
    def d(self) -> int:
        return len(self.axes)

    def params(self) -> np.ndarray:
        return node_params(self.axes)


@dataclass(frozen=True)
class MarkedRegion:
    """
    Parameter boxes V' ⊂ V around a center (same for every leaf).

    Distances are per-axis parameter distances divided by (outer - inner);
    axes with an infinite inner half-width are unrestricted.
    """
    center: Tuple[float, ...]
    inner: Tuple[float, ...]
    outer: Tuple[float, ...]

    def __post_init__(self):
        for a, b in zip(self.inner, self.outer):
            if not (np.isinf(a) and np.isinf(b)) and not 0 <= a < b:
                raise InputError("marked region needs 0 <= inner < outer", {"inner": a, "outer": b})

    def normalized_distance(self, axes: Sequence[Axis], u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """t in [0, 1] (0 on V', 1 outside V) and the index of the active axis."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        ts = np.zeros(u.shape)
        for k, axis in enumerate(axes):
            if np.isinf(self.inner[k]):
                continue
            dist = np.abs(axis.delta(u[:, k], self.center[k]))
            ts[:, k] = np.clip((dist - self.inner[k]) / (self.outer[k] - self.inner[k]), 0.0, 1.0)
        active = np.argmax(ts, axis=1)
        return ts[np.arange(u.shape[0]), active], active

    def rho(self, axes: Sequence[Axis], u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Bump value ρ = 1 - smoothstep(t) and its gradient in leaf parameters."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        t, active = self.normalized_distance(axes, u)
        rho = 1.0 - smoothstep(t)
        grad = np.zeros(u.shape)
        slope = smoothstep_derivative(t)
        for k, axis in enumerate(axes):
            if np.isinf(self.inner[k]):
                continue
            rows = active == k
            sign = np.sign(axis.delta(u[rows, k], self.center[k]))
            grad[rows, k] = -slope[rows] * sign / (self.outer[k] - self.inner[k])
        return rho, grad


def smoothstep(t: np.ndarray) -> np.ndarray:
    """Quintic smoothstep 6t⁵ - 15t⁴ + 10t³."""
    t = np.asarray(t, dtype=float)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep_derivative(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return 30.0 * t * t * (1.0 - t) ** 2


def node_params(axes: Sequence[Axis]) -> np.ndarray:
    """Parameter mesh of shape (*counts, d)."""
    mesh = np.meshgrid(*[a.nodes for a in axes], indexing="ij")
    return np.stack(mesh, axis=-1)


# ===========================================
# INTERPOLATION
# ===========================================

END_SLOPE_WEIGHTS = (-25.0, 48.0, -36.0, 16.0, -3.0)


def end_slopes(data: np.ndarray, axis: Axis, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Fourth-order one-sided derivative estimates at both ends of a line axis."""
    h = 12.0 * axis.spacing
    lo = sum(w * np.take(data, j, axis=k) for j, w in enumerate(END_SLOPE_WEIGHTS)) / h
    hi = -sum(w * np.take(data, -1 - j, axis=k) for j, w in enumerate(END_SLOPE_WEIGHTS)) / h
    return lo, hi


def axis_spline(axis: Axis, data: np.ndarray, k: int) -> CubicSpline:
    """Cubic spline along grid axis k: periodic on angles, clamped on lines."""
    if axis.periodic:
        x = np.append(axis.nodes, axis.hi)
        y = np.concatenate([data, np.take(data, [0], axis=k)], axis=k)
        return CubicSpline(x, y, axis=k, bc_type="periodic")
    lo, hi = end_slopes(data, axis, k)
    return CubicSpline(axis.nodes, data, axis=k, bc_type=((1, lo), (1, hi)), extrapolate=True)


def _hermite_weights(s: np.ndarray, h: float) -> np.ndarray:
    """Cubic Hermite basis, shape (2 kinds: value/slope, 2 corners, points)."""
    s2 = s * s
    s3 = s2 * s
    return np.array([
        [2.0 * s3 - 3.0 * s2 + 1.0, -2.0 * s3 + 3.0 * s2],
        [h * (s3 - 2.0 * s2 + s), h * (s3 - s2)],
    ])


class GridInterpolant:
    """
    Tensor-product cubic spline over a leaf grid.

    Each axis carries a cubic spline (periodic on angle axes, clamped to
    fourth-order end-slope estimates on line axes). The node values and the
    spline derivatives along every subset of axes are computed once; off the
    nodes the interpolant is the tensor Hermite cubic built from them, which
    is the C² tensor spline itself. Output coordinates flagged as angles are
    unwrapped before fitting and wrapped again on evaluation.
    """

    def __init__(
        self,
        axes: Sequence[Axis],
        values: np.ndarray,
        angle_outputs: Optional[np.ndarray] = None,
        extrapolate_cells: float = 1.0,
    ):
        self.axes = tuple(axes)
        self.d = len(self.axes)
        counts = tuple(a.count for a in self.axes)
        values = np.asarray(values, dtype=float)
        if values.shape[: self.d] != counts:
            raise InputError("values do not match grid", {"grid": counts, "values": values.shape})
        if values.ndim == self.d:
            values = values[..., None]
        self.m = values.shape[-1]
        self.extrapolate_cells = extrapolate_cells
        self.angle_outputs = (
            np.zeros(self.m, dtype=bool) if angle_outputs is None else np.asarray(angle_outputs, dtype=bool)
        )
        self.slopes = np.zeros((self.d, self.m))
        data = np.array(values, copy=True)
        if self.angle_outputs.any():
            data = self._lift_angles(data)
        self.data = data
        self._derivs = self._build_derivatives()

    def _lift_angles(self, data: np.ndarray) -> np.ndarray:
        cols = np.nonzero(self.angle_outputs)[0]
        sub = data[..., cols]
        params = node_params(self.axes)
        for k, axis in enumerate(self.axes):
            if axis.periodic:
                closed = np.concatenate([sub, np.take(sub, [0], axis=k)], axis=k)
                closed = np.unwrap(closed, axis=k)
                delta = np.take(closed, [-1], axis=k) - np.take(closed, [0], axis=k)
                turns = np.round(delta / TWO_PI).reshape(-1, cols.size)[0]
                slope = turns * TWO_PI / axis.period
                sub = np.take(closed, np.arange(axis.count), axis=k)
                sub = sub - slope * (params[..., k:k + 1] - axis.lo)
                self.slopes[k, cols] = slope
            else:
                sub = np.unwrap(sub, axis=k)
        data[..., cols] = sub
        return data

    def _build_derivatives(self) -> Tuple[np.ndarray, ...]:
        """Node derivatives indexed by axis bitmask; entry 0 is the data."""
        derivs = []
        for mask in range(1 << self.d):
            arr = self.data
            for k, axis in enumerate(self.axes):
                if mask >> k & 1:
                    arr = axis_spline(axis, arr, k)(axis.nodes, 1)
            derivs.append(np.ascontiguousarray(arr))
        return tuple(derivs)

    def check_domain(self, u: np.ndarray, extrapolate_cells: Optional[float] = None) -> None:
        cells = self.extrapolate_cells if extrapolate_cells is None else extrapolate_cells
        for k, axis in enumerate(self.axes):
            if axis.periodic:
                continue
            slack = cells * axis.spacing
            uk = u[:, k]
            if np.any(uk < axis.lo - slack) or np.any(uk > axis.hi + slack):
                worst = uk[np.argmax(np.maximum(axis.lo - uk, uk - axis.hi))]
                raise DomainError("leaf parameter outside line axis", {"axis": k, "u": float(worst)})

    def __call__(self, u: np.ndarray, extrapolate_cells: Optional[float] = None) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        self.check_domain(u, extrapolate_cells)
        out = self._tensor(u)
        if self.angle_outputs.any():
            for k, axis in enumerate(self.axes):
                out = out + self.slopes[k] * (u[:, k:k + 1] - axis.lo)
            out[:, self.angle_outputs] = wrap_angle(out[:, self.angle_outputs])
        return out

    def _tensor(self, u: np.ndarray) -> np.ndarray:
        corners = []
        weights = []
        for k, axis in enumerate(self.axes):
            t = (axis.reduce(u[:, k]) - axis.lo) / axis.spacing
            if axis.periodic:
                base = np.minimum(np.floor(t).astype(int), axis.count - 1)
                upper = np.mod(base + 1, axis.count)
            else:
                base = np.clip(np.floor(t).astype(int), 0, axis.count - 2)
                upper = base + 1
            corners.append((base, upper))
            weights.append(_hermite_weights(t - base, axis.spacing))

        out = np.zeros((u.shape[0], self.m))
        for mask, deriv in enumerate(self._derivs):
            kinds = [mask >> k & 1 for k in range(self.d)]
            for corner in itertools.product((0, 1), repeat=self.d):
                w = np.ones(u.shape[0])
                index = []
                for k, j in enumerate(corner):
                    w = w * weights[k][kinds[k], j]
                    index.append(corners[k][j])
                out += w[:, None] * deriv[tuple(index)]
        return out


# ===========================================
# LAMINATION
# ===========================================

CodeMetric = Callable[[TransversalCode, np.ndarray, TransversalCode, np.ndarray], float]


def discrete_code_metric(a: TransversalCode, ua: np.ndarray, b: TransversalCode, ub: np.ndarray) -> float:
    return 0.0 if a == b else 1.0


@dataclass
class DiscreteLamination:
    """Transversal codes × leaf grids with embedded base points."""
    name: str
    space: StateSpace
    axes: Tuple[Axis, ...]
    codes: Tuple[TransversalCode, ...]
    points: np.ndarray
    metric_scale: Optional[np.ndarray] = None
    marked_region: Optional[MarkedRegion] = None
    tube_radius: Optional[float] = None
    code_metric: CodeMetric = discrete_code_metric
    leaf_complex_pairs: Tuple[Tuple[int, int], ...] = ()
    scheme: Optional[Any] = None
    code_split: int = 0
    _interpolants: Tuple[GridInterpolant, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        self.axes = tuple(self.axes)
        self.codes = tuple(c if isinstance(c, TransversalCode) else TransversalCode(c) for c in self.codes)
        self.points = np.asarray(self.points, dtype=float)
        expected = (len(self.codes),) + self.counts + (self.space.n,)
        if self.points.shape != expected:
            raise InputError("lamination points have wrong shape",
                             {"expected": expected, "got": self.points.shape})
        if len(set(self.codes)) != len(self.codes):
            raise InputError("duplicate transversal codes", {"lamination": self.name})
        if not np.all(np.isfinite(self.points)):
            raise InputError("lamination points must be finite", {"lamination": self.name})
        if self.metric_scale is None:
            self.metric_scale = np.ones(self.space.n)
        self.metric_scale = np.asarray(self.metric_scale, dtype=float)
        self._index = {code: k for k, code in enumerate(self.codes)}
        self._interpolants = tuple(
            GridInterpolant(self.axes, self.points[c], angle_outputs=self.space.angle_mask)
            for c in range(len(self.codes))
        )
        if self.tube_radius is None:
            self.tube_radius = default_tube_radius(self)

    # ---- shape helpers ----

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def counts(self) -> Tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def nodes_per_leaf(self) -> int:
        return int(np.prod(self.counts))

    @property
    def node_count(self) -> int:
        return len(self.codes) * self.nodes_per_leaf

    @property
    def normal_dim(self) -> int:
        return self.space.n - self.d

    def code_index(self, code: TransversalCode) -> int:
        if not isinstance(code, TransversalCode):
            code = TransversalCode(code)
        try:
            return self._index[code]
        except KeyError:
            raise InputError("unknown transversal code", {"code": code.label}) from None

    def grid(self, code: TransversalCode) -> LeafGrid:
        return LeafGrid(code=code, axes=self.axes, points=self.points[self.code_index(code)])

    def leaf_params(self) -> np.ndarray:
        """Flattened node parameters of one leaf, shape (nodes_per_leaf, d)."""
        return node_params(self.axes).reshape(-1, self.d)

    def flat_points(self) -> np.ndarray:
        return self.points.reshape(len(self.codes), self.nodes_per_leaf, self.space.n)

    def interpolant(self, code_idx: int) -> GridInterpolant:
        return self._interpolants[code_idx]

    def distance_between(self, ca: int, ua: np.ndarray, cb: int, ub: np.ndarray) -> float:
        """Lamination distance: leaf metric on one leaf, code metric across leaves."""
        if ca == cb:
            return leaf_distance(self, self.codes[ca], ua, ub)
        return float(self.code_metric(self.codes[ca], np.asarray(ua), self.codes[cb], np.asarray(ub)))


def default_tube_radius(lam: DiscreteLamination) -> float:
    """0.25 × min distance between distinct-code leaves at equal parameters, floor 1e-3."""
    if len(lam.codes) < 2:
        return 0.25
    flat = lam.flat_points()
    best = np.inf
    for a in range(len(lam.codes)):
        for b in range(a + 1, len(lam.codes)):
            diff = lam.space.difference(flat[a], flat[b])
            best = min(best, float(np.min(np.linalg.norm(diff, axis=-1))))
    return max(1e-3, 0.25 * best)


# ===========================================
# OPERATIONS
# ===========================================

def build_lamination(config: Any) -> DiscreteLamination:
    """
    Build the base lamination of a catalog scenario.

    Args:
        config: RunConfig (or any object with `scenario`, `params`, `grid`)
    """
    from .scenarios import get_scenario

    scenario = get_scenario(config.scenario, config.params)
    return scenario.build_lamination(config.grid)


def evaluate_immersion(lam: DiscreteLamination, code: TransversalCode, u: np.ndarray) -> np.ndarray:
    """
    Interpolated immersion i(code, u); exact at grid nodes.

    Raises:
        DomainError: u outside a line axis
    """
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    U = np.atleast_2d(u)
    out = lam.interpolant(lam.code_index(code))(U, extrapolate_cells=0.0)
    return out[0] if single else out


def _path_deltas(lam: DiscreteLamination, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    return np.array([axis.delta(u2[k], u1[k]) if axis.periodic else u2[k] - u1[k]
                     for k, axis in enumerate(lam.axes)])


def leaf_distance(
    lam: DiscreteLamination,
    code: TransversalCode,
    u1: np.ndarray,
    u2: np.ndarray,
    segments: Optional[int] = None,
) -> float:
    """
    Length of the immersed straight parameter path from u1 to u2.

    Periodic axes take the shorter way round; lengths use metric_scale
    weights per ambient coordinate.
    """
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    u2 = np.atleast_1d(np.asarray(u2, dtype=float))
    delta = _path_deltas(lam, u1, u2)
    if not np.any(delta):
        return 0.0
    if segments is None:
        cells = max(abs(delta[k]) / axis.spacing for k, axis in enumerate(lam.axes))
        segments = max(64, 8 * int(np.ceil(cells)))
    s = np.linspace(0.0, 1.0, segments + 1)
    path = u1[None, :] + s[:, None] * delta[None, :]
    interp = lam.interpolant(lam.code_index(code))
    interp.check_domain(np.vstack([u1, u2]))
    pts = interp(path)
    steps = lam.space.difference(pts[1:], pts[:-1]) * lam.metric_scale
    return float(np.sum(np.linalg.norm(steps, axis=1)))


@dataclass(frozen=True)
class ParameterBox:
    lo: np.ndarray
    hi: np.ndarray

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)


def plaque_neighborhood(lam: DiscreteLamination, code: TransversalCode, u: np.ndarray, eps: float) -> ParameterBox:
    """
    Largest centered parameter box whose leaf-distance diameter is ≤ eps.

    Each axis is sized separately; an axis whose whole extent fits in eps
    saturates to the full domain.
    """
    if eps <= 0:
        raise InputError("plaque radius must be positive", {"eps": eps})
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lo = np.empty(lam.d)
    hi = np.empty(lam.d)

    for k, axis in enumerate(lam.axes):
        def diameter(r: float) -> float:
            a = u.copy()
            b = u.copy()
            a[k] = u[k] - r
            b[k] = u[k] + r
            if not axis.periodic:
                a[k] = max(a[k], axis.lo)
                b[k] = min(b[k], axis.hi)
            if axis.periodic and r >= 0.5 * axis.period:
                # the two endpoints coincide; measure half circles
                mid = u.copy()
                mid[k] = u[k] + 0.5 * axis.period
                return leaf_distance(lam, code, u, mid) * 2.0
            return leaf_distance(lam, code, a, b)

        if axis.periodic:
            r_full = 0.5 * axis.period
        else:
            r_full = max(u[k] - axis.lo, axis.hi - u[k])

        if diameter(r_full) <= eps:
            if axis.periodic:
                lo[k], hi[k] = u[k] - r_full, u[k] + r_full
            else:
                lo[k], hi[k] = axis.lo, axis.hi
            continue

        a, b = 0.0, r_full
        for _ in range(60):
            mid = 0.5 * (a + b)
            if diameter(mid) <= eps:
                a = mid
            else:
                b = mid
        lo[k], hi[k] = u[k] - a, u[k] + a
        if not axis.periodic:
            lo[k], hi[k] = max(lo[k], axis.lo), min(hi[k], axis.hi)

    return ParameterBox(lo=lo, hi=hi)


# ===========================================
# CONSTRUCTION HELPERS
# ===========================================

def curve_lamination(
    name: str,
    space: StateSpace,
    axis: Axis,
    curve: Callable[[np.ndarray], np.ndarray],
    codes: Sequence[TransversalCode] = (TransversalCode(),),
    **kwargs: Any,
) -> DiscreteLamination:
    """One-dimensional leaves from a vectorized curve(code_index, u) or curve(u)."""
    u = axis.nodes
    pts = []
    for k, _code in enumerate(codes):
        try:
            pts.append(np.asarray(curve(u, k), dtype=float))
        except TypeError:
            pts.append(np.asarray(curve(u), dtype=float))
    return DiscreteLamination(name=name, space=space, axes=(axis,), codes=tuple(codes),
                              points=np.stack(pts), **kwargs)


def product_lamination(
    first: DiscreteLamination,
    second: DiscreteLamination,
    order: Optional[Sequence[int]] = None,
    name: Optional[str] = None,
) -> DiscreteLamination:
    """
    Product lamination 𝓛 × 𝓛'.

    Codes concatenate, leaf axes concatenate, ambient coordinates are
    concatenated and then permuted by `order` (new position -> old index).
    """
    n1, n2 = first.space.n, second.space.n
    order = list(range(n1 + n2)) if order is None else list(order)
    if sorted(order) != list(range(n1 + n2)):
        raise InputError("order must be a permutation of the product coordinates", {"order": order})
    inverse = np.argsort(order)

    kinds = first.space.factor_kinds + second.space.factor_kinds
    pairs = list(first.space.complex_pairs) + [(a + n1, b + n1) for a, b in second.space.complex_pairs]
    space = StateSpace(n1 + n2, tuple(kinds[i] for i in order),
                       tuple((int(inverse[a]), int(inverse[b])) for a, b in pairs))

    codes = []
    blocks = []
    c1 = first.counts
    c2 = second.counts
    for i, ca in enumerate(first.codes):
        for j, cb in enumerate(second.codes):
            codes.append(ca + cb)
            pa = first.points[i].reshape(c1 + (1,) * len(c2) + (n1,))
            pb = second.points[j].reshape((1,) * len(c1) + c2 + (n2,))
            pa = np.broadcast_to(pa, c1 + c2 + (n1,))
            pb = np.broadcast_to(pb, c1 + c2 + (n2,))
            blocks.append(np.concatenate([pa, pb], axis=-1)[..., order])

    split = first.codes[0].depth if first.codes else 0
    scale = np.concatenate([first.metric_scale, second.metric_scale])[order]
    leaf_pairs = tuple(first.leaf_complex_pairs) + tuple(
        (a + first.d, b + first.d) for a, b in second.leaf_complex_pairs)

    def product_metric(a: TransversalCode, ua: np.ndarray, b: TransversalCode, ub: np.ndarray) -> float:
        a1, a2 = TransversalCode(a.symbols[:split]), TransversalCode(a.symbols[split:])
        b1, b2 = TransversalCode(b.symbols[:split]), TransversalCode(b.symbols[split:])
        return (first.code_metric(a1, ua[: first.d], b1, ub[: first.d])
                + second.code_metric(a2, ua[first.d:], b2, ub[first.d:]))

    return DiscreteLamination(
        name=name or f"{first.name}x{second.name}",
        space=space,
        axes=first.axes + second.axes,
        codes=tuple(codes),
        points=np.stack(blocks),
        metric_scale=scale,
        tube_radius=min(first.tube_radius, second.tube_radius),
        code_metric=product_metric,
        leaf_complex_pairs=leaf_pairs,
        scheme=first.scheme,
        code_split=split,
    )
