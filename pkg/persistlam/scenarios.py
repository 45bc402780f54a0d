"""
Scenario catalog.

Every scenario bundles a perturbed map f' and its unperturbed f, the base
lamination, the exact base dynamics f* on (code, parameter) pairs, the
E^s / E^u hints and, where one exists, a closed-form invariant section.
"""

import itertools
import logging
from typing import Any, Callable, ClassVar, Dict, Mapping, Optional, Tuple, Type

import numpy as np

from .bundle import NormalFrame, build_normal_frames
from .dynsys import TWO_PI, CoordinateKind, DeformationFamily, MapSystem, StateSpace, wrap_angle
from .errors import InputError, SchemeError
from .graph_transform import BaseDynamics
from .hyperbolic import splitting_frames
from .inverse_limit import PreorbitScheme, build_preorbit_space, doubling_scheme, quadratic_scheme, shift_code
from .lamination import (
    Axis,
    DiscreteLamination,
    MarkedRegion,
    TransversalCode,
    curve_lamination,
    product_lamination,
)
from .models import GridConfig, Pipeline, Variant
from .tangent import Splitting, coordinate_splitting
from .verify import ContainmentReport, ImmersedLamination, bounded_orbit_containment, bounded_preorbit_containment

logger = logging.getLogger(__name__)


# ===========================================
# HELPERS
# ===========================================

def _realify(blocks: np.ndarray) -> np.ndarray:
    """Complex (..., m, m) matrices as real (..., 2m, 2m) in (re, im) pairs."""
    m = blocks.shape[-1]
    out = np.zeros(blocks.shape[:-2] + (2 * m, 2 * m))
    out[..., 0::2, 0::2] = blocks.real
    out[..., 0::2, 1::2] = -blocks.imag
    out[..., 1::2, 0::2] = blocks.imag
    out[..., 1::2, 1::2] = blocks.real
    return out


def _split_complex(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return x[..., 0] + 1j * x[..., 1], x[..., 2] + 1j * x[..., 3]


def _join_complex(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag, w.real, w.imag], axis=-1)


def _pad_normals(lam: DiscreteLamination, space: StateSpace, name: str, **kwargs: Any) -> DiscreteLamination:
    """Append zero normal coordinates to a lamination embedded in its leaf space."""
    extra = space.n - lam.space.n
    points = np.concatenate([lam.points, np.zeros(lam.points.shape[:-1] + (extra,))], axis=-1)
    return DiscreteLamination(
        name=name,
        space=space,
        axes=lam.axes,
        codes=lam.codes,
        points=points,
        metric_scale=np.concatenate([lam.metric_scale, np.ones(extra)]),
        code_metric=lam.code_metric,
        scheme=lam.scheme,
        code_split=lam.code_split,
        **kwargs,
    )


class PreorbitDynamics:
    """
    Shift dynamics on a preorbit lamination, optionally times a rule on the
    remaining leaf axes.
    """

    def __init__(
        self,
        lam: DiscreteLamination,
        scheme: PreorbitScheme,
        extra_forward: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        extra_inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        tail: int = 0,
    ):
        self.lam = lam
        self.scheme = scheme
        self.width = len(scheme.axes)
        self.extra_forward = extra_forward
        self.extra_inverse = extra_inverse
        self.tail = tail

    def _split(self, code: TransversalCode) -> Tuple[TransversalCode, TransversalCode]:
        depth = self.scheme.depth
        return TransversalCode(code.symbols[:depth]), TransversalCode(code.symbols[depth:])

    def _apply(self, codes: np.ndarray, u: np.ndarray, direction: str) -> Tuple[np.ndarray, np.ndarray]:
        codes = np.asarray(codes, dtype=int)
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out_codes = np.empty_like(codes)
        out_u = u.copy()
        w = self.width
        if direction == "forward":
            _, groups = self.scheme.image(u[:, :w])
        else:
            groups = np.zeros(codes.size, dtype=int)
        for c in np.unique(codes):
            head, rest = self._split(self.lam.codes[c])
            for g in np.unique(groups[codes == c]):
                mask = (codes == c) & (groups == g)
                new_head, new_u = shift_code(self.scheme, head, u[mask, :w], direction, self.tail)
                out_codes[mask] = self.lam.code_index(new_head + rest)
                out_u[mask, :w] = new_u
        extra = self.extra_forward if direction == "forward" else self.extra_inverse
        if extra is not None and u.shape[1] > w:
            out_u[:, w:] = extra(u[:, w:])
        return out_codes, out_u

    def forward(self, codes: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self._apply(codes, u, "forward")

    def inverse(self, codes: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self._apply(codes, u, "inverse")

    def base_dynamics(self, name: str) -> BaseDynamics:
        return BaseDynamics(forward=self.forward, inverse=self.inverse, name=name)


def _leaf_rule(rule: Callable[[np.ndarray], np.ndarray]):
    """Lift a parameter rule to (codes, u) pairs that keep the code."""
    def apply(codes: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(codes, dtype=int), rule(np.atleast_2d(np.asarray(u, dtype=float)))
    return apply


# ===========================================
# SCENARIO BASE
# ===========================================

class Scenario:
    """
    Base class of catalog entries.

    Subclasses declare `defaults` (every accepted parameter), the transform
    variant, the tube radius `eta` and the pipeline the CLI runs by default.
    """
    name: ClassVar[str] = ""
    description: ClassVar[str] = ""
    defaults: ClassVar[Dict[str, Any]] = {}
    perturbations: ClassVar[Tuple[str, ...]] = ()
    variant: ClassVar[Variant] = Variant.CONTRACTED
    pipeline: ClassVar[Pipeline] = Pipeline.CONTRACTED
    eta: ClassVar[float] = 0.5
    default_depth: ClassVar[int] = 0
    backward_orbits: ClassVar[bool] = False

    def __init__(self, params: Optional[Mapping[str, Any]] = None):
        params = dict(params or {})
        unknown = sorted(set(params) - set(self.defaults))
        if unknown:
            raise InputError(f"unknown parameter(s) for scenario {self.name}: {', '.join(unknown)}",
                             {"known": sorted(self.defaults)})
        self.params: Dict[str, Any] = {**self.defaults, **params}

    def with_params(self, **updates: Any) -> "Scenario":
        return type(self)({**self.params, **updates})

    def depth(self, grid: GridConfig) -> int:
        return grid.depth or self.default_depth

    # ---- maps ----

    def system(self) -> MapSystem:
        """The perturbed map f'."""
        raise NotImplementedError

    def unperturbed(self) -> MapSystem:
        """The map f that preserves the base lamination."""
        return self.with_params(**{key: 0.0 for key in self.perturbations}).system()

    # ---- lamination ----

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        raise NotImplementedError

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        raise NotImplementedError

    def splitting(self) -> Optional[Splitting]:
        return None

    def frames(self, lam: DiscreteLamination) -> NormalFrame:
        splitting = self.splitting()
        if splitting is None:
            return build_normal_frames(lam)
        return splitting_frames(lam, splitting)

    def oracle(self, lam: DiscreteLamination) -> Optional[np.ndarray]:
        """Closed-form invariant section (codes, nodes, k) in frame coordinates, if known."""
        return None

    def family(self) -> Optional[DeformationFamily]:
        return None

    def containment(self, sys: MapSystem, immersed: ImmersedLamination, seed: int = 0) -> Optional[ContainmentReport]:
        """Brute-force bounded-orbit oracle for i', if the scenario has one."""
        return None


# ===========================================
# CIRCLES
# ===========================================

class CircleScenario(Scenario):
    """Attracting circle of (x, θ) ↦ (λx + ε sin θ, θ + α)."""
    name = "circle"
    description = "normally contracted invariant circle of a rotation skew product"
    defaults = {"lam": 0.5, "eps": 0.1, "alpha": TWO_PI / 8.0}
    perturbations = ("eps",)
    eta = 0.5

    def system(self) -> MapSystem:
        space = StateSpace(2, (CoordinateKind.LINE, CoordinateKind.ANGLE))

        def rule(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            return np.stack([p["lam"] * x[..., 0] + p["eps"] * np.sin(x[..., 1]), x[..., 1] + p["alpha"]], axis=-1)

        def jac(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            out = np.zeros(x.shape[:-1] + (2, 2))
            out[..., 0, 0] = p["lam"]
            out[..., 0, 1] = p["eps"] * np.cos(x[..., 1])
            out[..., 1, 1] = 1.0
            return out

        return MapSystem(space, rule, jac, dict(self.params), name=self.name)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        space = StateSpace(2, (CoordinateKind.LINE, CoordinateKind.ANGLE))
        axis = Axis.circle(grid.nodes)
        return curve_lamination(self.name, space, axis, lambda u: np.stack([np.zeros_like(u), u], axis=-1),
                                tube_radius=self.eta)

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        alpha = float(self.params["alpha"])
        axis = lam.axes[0]
        return BaseDynamics(forward=_leaf_rule(lambda u: axis.reduce(u + alpha)),
                            inverse=_leaf_rule(lambda u: axis.reduce(u - alpha)), name="rotation")

    def splitting(self) -> Splitting:
        return coordinate_splitting(2, [0], [])

    def oracle(self, lam: DiscreteLamination) -> np.ndarray:
        lam_, eps, alpha = (float(self.params[k]) for k in ("lam", "eps", "alpha"))
        theta = lam.leaf_params()[:, 0]
        x = np.imag(eps * np.exp(1j * (theta - alpha)) / (1.0 - lam_ * np.exp(-1j * alpha)))
        return x[None, :, None]


class PlanarCircleScenario(Scenario):
    """Unit circle in ℝ² under radial contraction and rotation."""
    name = "planar_circle"
    description = "embedded circle in the plane attracted radially"
    defaults = {"contraction": 0.5, "alpha": TWO_PI / 8.0, "eps": 0.05}
    perturbations = ("eps",)
    eta = 0.3

    def system(self) -> MapSystem:
        def rule(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            r = np.hypot(x[..., 0], x[..., 1])
            scale = (1.0 + p["contraction"] * (r - 1.0)) / r
            c, s = np.cos(p["alpha"]), np.sin(p["alpha"])
            a, b = scale * x[..., 0], scale * x[..., 1]
            return np.stack([c * a - s * b + p["eps"] * x[..., 0] * x[..., 1], s * a + c * b], axis=-1)

        return MapSystem(StateSpace.lines(2), rule, None, dict(self.params), name=self.name)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        axis = Axis.circle(grid.nodes)
        return curve_lamination(self.name, StateSpace.lines(2), axis,
                                lambda u: np.stack([np.cos(u), np.sin(u)], axis=-1), tube_radius=self.eta)

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        alpha = float(self.params["alpha"])
        axis = lam.axes[0]
        return BaseDynamics(forward=_leaf_rule(lambda u: axis.reduce(u + alpha)),
                            inverse=_leaf_rule(lambda u: axis.reduce(u - alpha)), name="rotation")

    def splitting(self) -> Splitting:
        def radial(x: np.ndarray) -> np.ndarray:
            r = np.hypot(x[..., 0], x[..., 1])[..., None]
            return (x / r)[..., None]

        return Splitting(stable=radial, unstable=lambda x: np.zeros(np.shape(x)[:-1] + (2, 0)), ks=1, ku=0)


class FigureEightScenario(Scenario):
    """Self-intersecting immersed circle (sin θ, sin θ cos θ) under the identity."""
    name = "figure_eight"
    description = "immersed, non-injective circle; identity dynamics"
    defaults = {}
    eta = 0.1

    def system(self) -> MapSystem:
        return MapSystem(StateSpace.lines(2), lambda x, p: np.array(x, dtype=float),
                         lambda x, p: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy(), {}, name=self.name)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        axis = Axis.circle(grid.nodes)
        return curve_lamination(self.name, StateSpace.lines(2), axis,
                                lambda u: np.stack([np.sin(u), np.sin(u) * np.cos(u)], axis=-1),
                                tube_radius=self.eta)

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        same = _leaf_rule(lambda u: u.copy())
        return BaseDynamics(forward=same, inverse=same, name="identity")


class IdentityScenario(Scenario):
    """
    Identity on a circle times the identity on a transversal of levels.

    Leaves y = level·spacing; the code metric is the level gap, so leaves
    can be closer than any ε without ever separating.
    """
    name = "identity"
    description = "degenerate, non-expansive product of identities"
    defaults = {"levels": 4, "spacing": 0.01}
    eta = 0.1

    def system(self) -> MapSystem:
        space = StateSpace(2, (CoordinateKind.ANGLE, CoordinateKind.LINE))
        return MapSystem(space, lambda x, p: np.array(x, dtype=float),
                         lambda x, p: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy(), {}, name=self.name)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        space = StateSpace(2, (CoordinateKind.ANGLE, CoordinateKind.LINE))
        levels = int(self.params["levels"])
        spacing = float(self.params["spacing"])
        axis = Axis.circle(grid.nodes)
        codes = tuple(TransversalCode((j,)) for j in range(levels))

        def level_metric(a: TransversalCode, ua: np.ndarray, b: TransversalCode, ub: np.ndarray) -> float:
            return spacing * abs(a.symbols[0] - b.symbols[0])

        return curve_lamination(self.name, space, axis,
                                lambda u, k: np.stack([u, np.full_like(u, k * spacing)], axis=-1),
                                codes=codes, code_metric=level_metric, tube_radius=0.25 * spacing)

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        same = _leaf_rule(lambda u: u.copy())
        return BaseDynamics(forward=same, inverse=same, name="identity")

    def splitting(self) -> Splitting:
        return coordinate_splitting(2, [1], [])


# ===========================================
# SKEW PRODUCTS OVER THE DOUBLING MAP
# ===========================================

class DoublingScenario(Scenario):
    """(θ, y) ↦ (2θ + ε₀ sin θ, μy + ε sin θ); expanded invariant circle."""
    name = "doubling"
    description = "normally expanded circle over angle doubling"
    defaults = {"mu": 10.0, "eps": 0.1, "base_eps": 0.0}
    perturbations = ("eps", "base_eps")
    variant = Variant.EXPANDED
    pipeline = Pipeline.EXPANDED
    eta = 0.5

    def system(self) -> MapSystem:
        space = StateSpace(2, (CoordinateKind.ANGLE, CoordinateKind.LINE))

        def rule(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            th = x[..., 0]
            return np.stack([2.0 * th + p["base_eps"] * np.sin(th), p["mu"] * x[..., 1] + p["eps"] * np.sin(th)],
                            axis=-1)

        def jac(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            th = x[..., 0]
            out = np.zeros(x.shape[:-1] + (2, 2))
            out[..., 0, 0] = 2.0 + p["base_eps"] * np.cos(th)
            out[..., 1, 0] = p["eps"] * np.cos(th)
            out[..., 1, 1] = p["mu"]
            return out

        return MapSystem(space, rule, jac, dict(self.params), name=self.name)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        space = StateSpace(2, (CoordinateKind.ANGLE, CoordinateKind.LINE))
        axis = Axis.circle(grid.nodes)
        return curve_lamination(self.name, space, axis, lambda u: np.stack([u, np.zeros_like(u)], axis=-1),
                                tube_radius=self.eta)

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        axis = lam.axes[0]
        return BaseDynamics(forward=_leaf_rule(lambda u: axis.reduce(2.0 * u)), name="doubling")

    def splitting(self) -> Splitting:
        return coordinate_splitting(2, [], [1])

    def oracle(self, lam: DiscreteLamination) -> Optional[np.ndarray]:
        if float(self.params["base_eps"]) != 0.0:
            return None
        mu, eps = float(self.params["mu"]), float(self.params["eps"])
        theta = lam.leaf_params()[:, 0]
        terms = int(np.ceil(18.0 / np.log10(mu)))
        y = np.zeros_like(theta)
        for k in range(terms):
            y -= mu ** (-(k + 1)) * eps * np.sin(2.0 ** k * theta)
        return y[None, :, None]


class SolenoidScenario(Scenario):
    """(x, θ) ↦ (λx + a sin θ, 2θ); the attractor is a solenoid over preorbits of θ."""
    name = "solenoid"
    description = "solenoid attractor as a normally contracted preorbit lamination"
    defaults = {"lam": 0.5, "amp": 0.5}
    perturbations = ("amp",)
    eta = 1.5
    default_depth = 8

    def system(self) -> MapSystem:
        space = StateSpace(2, (CoordinateKind.LINE, CoordinateKind.ANGLE))

        def rule(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            th = x[..., 1]
            return np.stack([p["lam"] * x[..., 0] + p["amp"] * np.sin(th), 2.0 * th], axis=-1)

        def jac(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            out = np.zeros(x.shape[:-1] + (2, 2))
            out[..., 0, 0] = p["lam"]
            out[..., 0, 1] = p["amp"] * np.cos(x[..., 1])
            out[..., 1, 1] = 2.0
            return out

        return MapSystem(space, rule, jac, dict(self.params), name=self.name)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        scheme = doubling_scheme(self.depth(grid), grid.nodes)
        space = StateSpace(2, (CoordinateKind.LINE, CoordinateKind.ANGLE))

        def embed(u: np.ndarray) -> np.ndarray:
            return np.stack([np.zeros(u.shape[0]), wrap_angle(u[:, 0])], axis=-1)

        return build_preorbit_space(scheme, space=space, embed=embed, name=self.name, tube_radius=self.eta)

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        return PreorbitDynamics(lam, lam.scheme).base_dynamics("shift")

    def splitting(self) -> Splitting:
        return coordinate_splitting(2, [0], [])

    def oracle(self, lam: DiscreteLamination) -> np.ndarray:
        lam_, amp = float(self.params["lam"]), float(self.params["amp"])
        params = lam.leaf_params()
        out = np.zeros((len(lam.codes), params.shape[0], 1))
        for c, code in enumerate(lam.codes):
            hist = lam.scheme.history(code, params)
            for n in range(1, hist.shape[0]):
                out[c, :, 0] += lam_ ** (n - 1) * amp * np.sin(hist[n, :, 0])
        return out


class TorusScenario(Scenario):
    """
    (θ, φ, x, y) ↦ (2θ, φ + α, a x + ε_x sin θ, μ y + ε_y cos θ).

    The invariant set is the preorbit lamination of θ times the φ circle,
    contracted along x and expanded along y.
    """
    name = "torus"
    description = "normally hyperbolic solenoid-times-circle with both normal directions"
    defaults = {"alpha": TWO_PI * 3.0 / 16.0, "a_x": 0.0, "mu": 10.0, "eps_x": 0.01, "eps_y": 0.05}
    perturbations = ("eps_x", "eps_y")
    variant = Variant.EXPANDED
    pipeline = Pipeline.HYPERBOLIC
    eta = 0.3
    default_depth = 2

    def system(self) -> MapSystem:
        space = StateSpace(4, (CoordinateKind.ANGLE, CoordinateKind.ANGLE, CoordinateKind.LINE, CoordinateKind.LINE))

        def rule(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            th = x[..., 0]
            return np.stack([
                2.0 * th,
                x[..., 1] + p["alpha"],
                p["a_x"] * x[..., 2] + p["eps_x"] * np.sin(th),
                p["mu"] * x[..., 3] + p["eps_y"] * np.cos(th),
            ], axis=-1)

        def jac(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            th = x[..., 0]
            out = np.zeros(x.shape[:-1] + (4, 4))
            out[..., 0, 0] = 2.0
            out[..., 1, 1] = 1.0
            out[..., 2, 0] = p["eps_x"] * np.cos(th)
            out[..., 2, 2] = p["a_x"]
            out[..., 3, 0] = -p["eps_y"] * np.sin(th)
            out[..., 3, 3] = p["mu"]
            return out

        return MapSystem(space, rule, jac, dict(self.params), name=self.name)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        scheme = doubling_scheme(self.depth(grid), grid.nodes)
        solenoid = build_preorbit_space(scheme)
        circle = curve_lamination("phi", StateSpace(1, (CoordinateKind.ANGLE,)), Axis.circle(grid.secondary_nodes),
                                  lambda u: u[:, None])
        product = product_lamination(solenoid, circle)
        space = StateSpace(4, (CoordinateKind.ANGLE, CoordinateKind.ANGLE, CoordinateKind.LINE, CoordinateKind.LINE))
        return _pad_normals(product, space, self.name, tube_radius=self.eta)

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        alpha = float(self.params["alpha"])
        phi = lam.axes[1]
        return PreorbitDynamics(
            lam, lam.scheme,
            extra_forward=lambda u: phi.reduce(u + alpha),
            extra_inverse=lambda u: phi.reduce(u - alpha),
        ).base_dynamics("shift-rotation")

    def splitting(self) -> Splitting:
        return coordinate_splitting(4, [2], [3])

    def oracle(self, lam: DiscreteLamination) -> np.ndarray:
        a_x, mu = float(self.params["a_x"]), float(self.params["mu"])
        eps_x, eps_y = float(self.params["eps_x"]), float(self.params["eps_y"])
        params = lam.leaf_params()
        theta = params[:, 0]
        y = np.zeros_like(theta)
        for k in range(int(np.ceil(18.0 / np.log10(mu)))):
            y -= mu ** (-(k + 1)) * eps_y * np.cos(2.0 ** k * theta)
        out = np.zeros((len(lam.codes), params.shape[0], 2))
        for c, code in enumerate(lam.codes):
            head = TransversalCode(code.symbols[:lam.code_split])
            hist = lam.scheme.history(head, params[:, :1])
            for n in range(1, hist.shape[0]):
                out[c, :, 0] += a_x ** (n - 1) * eps_x * np.sin(hist[n, :, 0])
            out[c, :, 1] = y
        return out


# ===========================================
# HOLOMORPHIC SCENARIOS
# ===========================================

class HenonScenario(Scenario):
    """
    H_b(z, z') = (z² + c + z', b z) near b = 0.

    At b = 0 the preorbit lamination of P(z) = z² + c over an annulus
    around its Julia set is invariant; it persists as a normally
    contracted lamination with holomorphic leaves.
    """
    name = "henon"
    description = "complex Henon maps as perturbations of a quadratic preorbit lamination"
    defaults = {"c": -0.1, "b": 0.01, "r_inner": 0.6, "r_outer": 1.6}
    perturbations = ("b",)
    eta = 0.3
    default_depth = 6
    backward_orbits = True
    disk_radius = 0.02

    @staticmethod
    def _system(c: float, b: complex, name: str) -> MapSystem:
        def rule(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            z, w = _split_complex(x)
            return _join_complex(z * z + p["c"] + w, p["b"] * z)

        def jac(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            z, _ = _split_complex(x)
            blocks = np.zeros(z.shape + (2, 2), dtype=complex)
            blocks[..., 0, 0] = 2.0 * z
            blocks[..., 0, 1] = 1.0
            blocks[..., 1, 0] = p["b"]
            return _realify(blocks)

        return MapSystem(StateSpace.complex(2), rule, jac, {"c": c, "b": b}, name=name)

    def system(self) -> MapSystem:
        return self._system(float(self.params["c"]), self.params["b"], self.name)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        scheme = quadratic_scheme(float(self.params["c"]), self.depth(grid), grid.nodes, grid.secondary_nodes,
                                  r_inner=float(self.params["r_inner"]), r_outer=float(self.params["r_outer"]))

        def embed(u: np.ndarray) -> np.ndarray:
            z = np.exp(u[:, 0] + 1j * u[:, 1])
            return _join_complex(z, np.zeros_like(z))

        return build_preorbit_space(scheme, space=StateSpace.complex(2), embed=embed, name=self.name,
                                    tube_radius=self.eta, leaf_complex_pairs=((0, 1),))

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        return PreorbitDynamics(lam, lam.scheme).base_dynamics("quadratic-shift")

    def splitting(self) -> Splitting:
        J = StateSpace.complex(2).j_matrix()

        def kernel(x: np.ndarray) -> np.ndarray:
            z, _ = _split_complex(x)
            v = _join_complex(np.ones_like(z), -2.0 * z)
            return np.stack([v, v @ J.T], axis=-1)

        return Splitting(stable=kernel, unstable=lambda x: np.zeros(np.shape(x)[:-1] + (4, 0)), ks=2, ku=0)

    def family(self) -> DeformationFamily:
        c = float(self.params["c"])
        return DeformationFamily(lambda t: self._system(c, complex(t), f"{self.name}@b={t}"),
                                 disk_radius=self.disk_radius, name="henon-b")

    def real_part_family(self) -> DeformationFamily:
        """t ↦ H_{Re t}: a smooth but non-holomorphic family."""
        c = float(self.params["c"])
        return DeformationFamily(lambda t: self._system(c, complex(t.real), f"{self.name}@b={t.real}"),
                                 disk_radius=self.disk_radius, name="henon-re-b")

    def inside(self, points: np.ndarray, fiber: float = 0.05) -> np.ndarray:
        """Membership in W = {r_inner + 0.05 ≤ |z| ≤ r_outer - 0.05, |z'| ≤ fiber}."""
        z, w = _split_complex(np.atleast_2d(points))
        r = np.abs(z)
        return ((r >= self.params["r_inner"] + 0.05) & (r <= self.params["r_outer"] - 0.05)
                & (np.abs(w) <= fiber))

    def seeds(self, count: int, seed: int = 0, fiber: float = 0.05) -> np.ndarray:
        """Uniform random points of W."""
        rng = np.random.default_rng(seed)
        lo, hi = self.params["r_inner"] + 0.05, self.params["r_outer"] - 0.05
        r = np.sqrt(rng.uniform(lo ** 2, hi ** 2, size=count))
        z = r * np.exp(1j * rng.uniform(0.0, TWO_PI, size=count))
        w = fiber * np.sqrt(rng.uniform(0.0, 1.0, size=count)) * np.exp(1j * rng.uniform(0.0, TWO_PI, size=count))
        return _join_complex(z, w)

    def containment(self, sys: MapSystem, immersed: ImmersedLamination, seed: int = 0) -> ContainmentReport:
        depth = immersed.lam.codes[0].depth if immersed.lam.codes else 0
        return bounded_preorbit_containment(sys, immersed, self.seeds(4000, seed), steps=max(depth, 1),
                                            inside=self.inside)


class EndomorphismScenario(Scenario):
    """
    (z, z') ↦ (z(z + e^{iθ}) + ε z', 4 z' + ε z²).

    The z-plane {z' = 0} is normally expanded; the marked region covers the
    filled Julia set of z(z + e^{iθ}).
    """
    name = "endomorphism"
    description = "polynomial endomorphism of C^2 with a normally expanded line"
    defaults = {"theta": 0.0, "eps": 0.001}
    perturbations = ("eps",)
    variant = Variant.EXPANDED
    pipeline = Pipeline.EXPANDED
    eta = 0.5
    box = ((-2.5, 1.5), (-2.0, 2.0))
    marked_region = MarkedRegion(center=(-0.5, 0.0), inner=(0.8, 0.8), outer=(0.9, 0.9))

    def system(self) -> MapSystem:
        def rule(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            z, w = _split_complex(x)
            rot = np.exp(1j * p["theta"])
            return _join_complex(z * (z + rot) + p["eps"] * w, 4.0 * w + p["eps"] * z * z)

        def jac(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            z, _ = _split_complex(x)
            blocks = np.zeros(z.shape + (2, 2), dtype=complex)
            blocks[..., 0, 0] = 2.0 * z + np.exp(1j * p["theta"])
            blocks[..., 0, 1] = p["eps"]
            blocks[..., 1, 0] = 2.0 * p["eps"] * z
            blocks[..., 1, 1] = 4.0
            return _realify(blocks)

        return MapSystem(StateSpace.complex(2), rule, jac, dict(self.params), name=self.name)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        (x0, x1), (y0, y1) = self.box
        axes = (Axis.line(x0, x1, grid.nodes), Axis.line(y0, y1, grid.nodes))
        mesh = np.stack(np.meshgrid(axes[0].nodes, axes[1].nodes, indexing="ij"), axis=-1)
        points = np.concatenate([mesh, np.zeros(mesh.shape)], axis=-1)
        return DiscreteLamination(name=self.name, space=StateSpace.complex(2), axes=axes,
                                  codes=(TransversalCode(),), points=points[None],
                                  marked_region=self.marked_region, tube_radius=self.eta, leaf_complex_pairs=((0, 1),))

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        rot = np.exp(1j * float(self.params["theta"]))

        def forward(u: np.ndarray) -> np.ndarray:
            z = u[:, 0] + 1j * u[:, 1]
            image = z * (z + rot)
            return np.stack([image.real, image.imag], axis=-1)

        return BaseDynamics(forward=_leaf_rule(forward), name="polynomial")

    def splitting(self) -> Splitting:
        return coordinate_splitting(4, [], [2, 3])

    def sample_grid(self, count: int = 200) -> np.ndarray:
        """count × count points of the z-box times {z' = 0}."""
        (x0, x1), (y0, y1) = self.box
        xs, ys = np.meshgrid(np.linspace(x0, x1, count), np.linspace(y0, y1, count), indexing="ij")
        return np.stack([xs.ravel(), ys.ravel(), np.zeros(xs.size), np.zeros(xs.size)], axis=-1)

    def containment(self, sys: MapSystem, immersed: ImmersedLamination, seed: int = 0) -> ContainmentReport:
        return bounded_orbit_containment(sys, immersed, self.sample_grid(), steps=50, radius=4.0)


# ===========================================
# REAL HENON HORSESHOE
# ===========================================

def coded_periodic_orbits(words: np.ndarray, c: np.ndarray, b: float, sweeps: int = 200) -> np.ndarray:
    """
    Periodic orbits of x_{n+1} = x_n² + c + b·x_{n-1} with a prescribed sign itinerary.

    Each sweep replaces x_n by ±sqrt(x_{n+1} - c - b·x_{n-1}), a contraction
    while the radicand stays well above zero.

    Args:
        words: (codes, p) symbols, 0 for x_n < 0 and 1 for x_n > 0
        c: (nodes,) parameter values

    Returns:
        (codes, p, nodes) orbit coordinates x_0 .. x_{p-1}

    Raises:
        SchemeError: a radicand left the positive half-line
    """
    c = np.asarray(c, dtype=float)
    signs = np.where(np.asarray(words) > 0, 1.0, -1.0)[:, :, None]
    x = signs * np.sqrt(np.abs(c))[None, None, :]
    for _ in range(sweeps):
        radicand = np.roll(x, -1, axis=1) - c - b * np.roll(x, 1, axis=1)
        if np.any(radicand <= 0.0):
            raise SchemeError("itinerary leaves the horseshoe", {"c": [float(c.min()), float(c.max())], "b": b})
        new = signs * np.sqrt(radicand)
        step = float(np.max(np.abs(new - x)))
        x = new
        if step <= 4.0 * np.finfo(float).eps * float(np.max(np.abs(x))):
            break
    return x


class HorseshoeScenario(Scenario):
    """
    (t, x, y) ↦ (t, x² + c + t + b y, x) over a parameter interval |t| ≤ w.

    For c well below -2 the real Hénon map is a horseshoe; each periodic
    itinerary of period `depth` gives one leaf t ↦ (t, x₀(t), x_{p-1}(t)).
    The fiber {t} × ℝ² is split into a stable and an unstable direction.
    """
    name = "horseshoe"
    description = "fibered real Henon horseshoe over a parameter interval"
    defaults = {"c": -6.0, "b": 0.1, "eps": 0.01, "half_width": 0.5}
    perturbations = ("eps",)
    variant = Variant.EXPANDED
    pipeline = Pipeline.HYPERBOLIC
    eta = 0.2
    default_depth = 3

    def _beta(self) -> float:
        return float(self.params["b"]) + float(self.params["eps"])

    def system(self) -> MapSystem:
        def rule(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            t, u, v = x[..., 0], x[..., 1], x[..., 2]
            return np.stack([t, u * u + p["c"] + t + (p["b"] + p["eps"]) * v, u], axis=-1)

        def jac(x: np.ndarray, p: Mapping[str, Any]) -> np.ndarray:
            out = np.zeros(x.shape[:-1] + (3, 3))
            out[..., 0, 0] = 1.0
            out[..., 1, 0] = 1.0
            out[..., 1, 1] = 2.0 * x[..., 1]
            out[..., 1, 2] = p["b"] + p["eps"]
            out[..., 2, 1] = 1.0
            return out

        return MapSystem(StateSpace.lines(3), rule, jac, dict(self.params), name=self.name)

    def words(self, depth: int) -> np.ndarray:
        return np.array(list(itertools.product((0, 1), repeat=depth)), dtype=int).reshape(-1, depth)

    def orbits(self, lam: DiscreteLamination, b: float) -> np.ndarray:
        """(codes, p, nodes) periodic orbits of the map with coupling b at the leaf nodes."""
        words = np.array([code.symbols for code in lam.codes], dtype=int)
        c = float(self.params["c"]) + lam.axes[0].nodes
        return coded_periodic_orbits(words, c, b)

    def build_lamination(self, grid: GridConfig) -> DiscreteLamination:
        w = float(self.params["half_width"])
        axis = Axis.line(-w, w, grid.nodes)
        words = self.words(self.depth(grid))
        x = coded_periodic_orbits(words, float(self.params["c"]) + axis.nodes, float(self.params["b"]))
        t = np.broadcast_to(axis.nodes, x[:, 0].shape)
        points = np.stack([t, x[:, 0], x[:, -1]], axis=-1)
        codes = tuple(TransversalCode(tuple(int(s) for s in word)) for word in words)
        logger.debug(f"horseshoe lamination: {len(codes)} periodic leaves", extra={"scenario": self.name})
        return DiscreteLamination(name=self.name, space=StateSpace.lines(3), axes=(axis,), codes=codes,
                                  points=points, tube_radius=self.eta)

    def dynamics(self, lam: DiscreteLamination) -> BaseDynamics:
        ahead = np.array([lam.code_index(code.symbols[1:] + code.symbols[:1]) for code in lam.codes], dtype=int)
        behind = np.argsort(ahead)

        def forward(codes: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            return ahead[np.asarray(codes, dtype=int)], np.atleast_2d(np.asarray(u, dtype=float)).copy()

        def inverse(codes: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            return behind[np.asarray(codes, dtype=int)], np.atleast_2d(np.asarray(u, dtype=float)).copy()

        return BaseDynamics(forward=forward, inverse=inverse, name="horseshoe-shift")

    def splitting(self) -> Splitting:
        beta = self._beta()

        def unit(first: np.ndarray) -> np.ndarray:
            v = np.stack([np.zeros_like(first), first, np.ones_like(first)], axis=-1)
            return (v / np.linalg.norm(v, axis=-1, keepdims=True))[..., None]

        return Splitting(stable=lambda x: unit(-beta / (2.0 * x[..., 1])),
                         unstable=lambda x: unit(2.0 * x[..., 2]), ks=1, ku=1)

    def stable_directions(self, lam: DiscreteLamination, loops: int = 12) -> np.ndarray:
        """
        Unit E^s vectors (codes, nodes, 3) at the periodic points of f'.

        Backward products of the fiber Jacobians along each orbit.
        """
        beta = self._beta()
        x = self.orbits(lam, beta)
        p = x.shape[1]
        v = np.zeros(x[:, 0].shape + (2,))
        v[..., 1] = 1.0
        for _ in range(loops):
            for n in range(p - 1, -1, -1):
                # Df⁻¹ at z_n = (x_n, x_{n-1})
                v = np.stack([v[..., 1], (v[..., 0] - 2.0 * x[:, n] * v[..., 1]) / beta], axis=-1)
                v /= np.linalg.norm(v, axis=-1, keepdims=True)
        return np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)

    def oracle(self, lam: DiscreteLamination) -> np.ndarray:
        x = self.orbits(lam, self._beta())
        t = lam.axes[0].nodes
        moved = np.stack([np.broadcast_to(t, x[:, 0].shape), x[:, 0], x[:, -1]], axis=-1)
        offset = moved - lam.flat_points()
        return np.einsum("cpnk,cpn->cpk", self.frames(lam).matrices, offset)


# ===========================================
# CATALOG
# ===========================================

CATALOG: Dict[str, Type[Scenario]] = {
    cls.name: cls
    for cls in (
        CircleScenario,
        PlanarCircleScenario,
        SolenoidScenario,
        DoublingScenario,
        TorusScenario,
        HenonScenario,
        EndomorphismScenario,
        IdentityScenario,
        FigureEightScenario,
        HorseshoeScenario,
    )
}


def get_scenario(name: str, params: Optional[Mapping[str, Any]] = None) -> Scenario:
    """
    Instantiate a catalog scenario.

    Raises:
        InputError: unknown scenario or parameter
    """
    if name not in CATALOG:
        raise InputError(f"unknown scenario {name!r}", {"known": sorted(CATALOG)})
    return CATALOG[name](params)
