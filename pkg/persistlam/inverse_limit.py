"""
Preorbit-space laminations.

A truncated preorbit (x_0, x_1, ..., x_N) with f(x_{k+1}) = x_k is stored
as a leaf parameter u of x_0 plus a code (b_1, ..., b_N) naming the branch
used for each preimage. Leaves use line-axis charts so that every branch
is a continuous function of u.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .dynsys import TWO_PI, CoordinateKind, StateSpace, wrap_angle
from .errors import InputError, SchemeError, TruncationError
from .lamination import Axis, DiscreteLamination, TransversalCode, node_params

logger = logging.getLogger(__name__)

BRANCH_TOLERANCE = 1e-10

# preimage(u, branch) -> parameters of the branch preimage
PreimageRule = Callable[[np.ndarray, int], np.ndarray]
# image(u) -> (parameters of f(x), branch b with preimage(u', b) == u)
ImageRule = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass
class PreorbitScheme:
    """
    Base dynamics with explicit branch solvers, truncated at `depth`.

    All rules act on leaf parameters of shape (p, d); `to_point` embeds
    parameters in the base space.
    """
    name: str
    base_space: StateSpace
    axes: Tuple[Axis, ...]
    depth: int
    branch_count: int
    to_point: Callable[[np.ndarray], np.ndarray]
    base_map: Callable[[np.ndarray], np.ndarray]
    preimage: PreimageRule
    image: ImageRule
    critical_values: Tuple[np.ndarray, ...] = ()
    margin: float = 1e-3
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.depth < 0:
            raise InputError("depth must be non-negative", {"depth": self.depth})
        if self.branch_count < 1:
            raise InputError("branch_count must be positive", {"branch_count": self.branch_count})

    def codes(self) -> Tuple[TransversalCode, ...]:
        """All branch words of length depth, lexicographic."""
        words = itertools.product(range(self.branch_count), repeat=self.depth)
        return tuple(TransversalCode(w) for w in words)

    def history(self, code: TransversalCode, u: np.ndarray) -> np.ndarray:
        """Parameters of x_0 .. x_depth, shape (depth + 1, p, d)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out = [u]
        for symbol in code.symbols:
            out.append(self.preimage(out[-1], symbol))
        return np.stack(out)

    def history_points(self, code: TransversalCode, u: np.ndarray) -> np.ndarray:
        hist = self.history(code, u)
        return np.stack([self.to_point(h) for h in hist])

    def metric(self, a: TransversalCode, ua: np.ndarray, b: TransversalCode, ub: np.ndarray) -> float:
        return preorbit_distance(self, a, ua, b, ub)


# ===========================================
# OPERATIONS
# ===========================================

def preorbit_distance(
    scheme: PreorbitScheme,
    a: TransversalCode,
    ua: np.ndarray,
    b: TransversalCode,
    ub: np.ndarray,
) -> float:
    """Truncated d̃ = Σ_n min(d(x_n, y_n), 1) / 2ⁿ over n = 0 .. depth."""
    xa = scheme.history_points(a, np.atleast_2d(ua))[:, 0]
    xb = scheme.history_points(b, np.atleast_2d(ub))[:, 0]
    dist = np.linalg.norm(scheme.base_space.difference(xa, xb), axis=-1)
    weights = 0.5 ** np.arange(dist.size)
    return float(np.sum(np.minimum(dist, 1.0) * weights))


def check_branches(scheme: PreorbitScheme, u: np.ndarray) -> float:
    """
    Verify every branch maps back onto its input and stays off critical values.

    Returns:
        worst branch residual

    Raises:
        SchemeError: residual above tolerance or a point near a critical value
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    target = scheme.to_point(u)
    worst = 0.0
    for crit in scheme.critical_values:
        gap = np.linalg.norm(scheme.base_space.difference(target, crit), axis=-1)
        if np.any(gap < scheme.margin):
            k = int(np.argmin(gap))
            raise SchemeError("region meets a critical value", {"u": u[k], "gap": float(gap[k])})
    for branch in range(scheme.branch_count):
        pre = scheme.preimage(u, branch)
        back = scheme.base_map(scheme.to_point(pre))
        err = np.linalg.norm(scheme.base_space.difference(back, target), axis=-1)
        if not np.all(np.isfinite(err)) or np.max(err) > BRANCH_TOLERANCE:
            k = int(np.nanargmax(np.where(np.isfinite(err), err, np.inf)))
            raise SchemeError("branch solver does not invert the base map",
                              {"branch": branch, "u": u[k], "residual": float(err[k])})
        worst = max(worst, float(np.max(err)))
    return worst


def build_preorbit_space(
    scheme: PreorbitScheme,
    space: Optional[StateSpace] = None,
    embed: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    **kwargs,
) -> DiscreteLamination:
    """
    Lamination of truncated preorbits.

    Every code's leaf carries the same depth-0 points; the codes differ in
    the histories they select, which enter through the code metric and the
    shift dynamics.

    Args:
        scheme: base dynamics with branch solvers
        space: ambient space (defaults to the base space)
        embed: parameters -> ambient points (defaults to scheme.to_point)
        **kwargs: passed on to DiscreteLamination
    """
    space = space or scheme.base_space
    embed = embed or scheme.to_point
    params = node_params(scheme.axes)
    flat = params.reshape(-1, len(scheme.axes))
    check_branches(scheme, flat)

    codes = scheme.codes()
    base = np.asarray(embed(flat), dtype=float).reshape(params.shape[:-1] + (space.n,))
    points = np.broadcast_to(base, (len(codes),) + base.shape).copy()
    logger.debug(f"Preorbit space {scheme.name}: depth {scheme.depth}, {len(codes)} codes")

    return DiscreteLamination(
        name=kwargs.pop("name", f"preorbit-{scheme.name}"),
        space=space,
        axes=scheme.axes,
        codes=codes,
        points=points,
        code_metric=scheme.metric,
        scheme=scheme,
        **kwargs,
    )


TailRule = Union[int, Callable[[TransversalCode], int]]


def shift_code(
    scheme: PreorbitScheme,
    code: TransversalCode,
    u: np.ndarray,
    direction: str = "forward",
    new_tail_rule: TailRule = 0,
) -> Tuple[TransversalCode, np.ndarray]:
    """
    Shift dynamics on truncated preorbits.

    forward: (x_n) ↦ (f(x_n)); the recoded leading symbol is prepended and
        the deepest one drops off.
    inverse: (x_n) ↦ (x_{n+1}); the leading symbol is consumed and the tail
        symbol comes from `new_tail_rule`.

    Returns:
        (new code, new leaf parameters)

    Raises:
        TruncationError: code of depth 0
    """
    if code.depth == 0:
        raise TruncationError("code depth exhausted; rebuild at greater depth", {"code": code.label})
    u = np.atleast_2d(np.asarray(u, dtype=float))

    if direction == "forward":
        u_new, symbol = scheme.image(u)
        symbols = np.atleast_1d(symbol)
        if np.unique(symbols).size != 1:
            raise InputError("forward shift of several points must share a symbol", {"code": code.label})
        return TransversalCode((int(symbols[0]),) + code.symbols[:-1]), u_new

    if direction == "inverse":
        tail = new_tail_rule(code) if callable(new_tail_rule) else int(new_tail_rule)
        if not 0 <= tail < scheme.branch_count:
            raise InputError("tail symbol out of range", {"tail": tail})
        u_new = scheme.preimage(u, code.symbols[0])
        return TransversalCode(code.symbols[1:] + (tail,)), u_new

    raise InputError("direction must be 'forward' or 'inverse'", {"direction": direction})


def truncation_gap(scheme: PreorbitScheme) -> float:
    """Largest d̃ difference between depth-N and deeper representations."""
    return 2.0 ** (-scheme.depth)


# ===========================================
# SCHEMES
# ===========================================

def doubling_scheme(depth: int, nodes: int) -> PreorbitScheme:
    """θ ↦ 2θ on the circle; leaves are θ ∈ [0, 2π] charts."""
    axis = Axis.line(0.0, TWO_PI, nodes)
    circle = StateSpace(1, (CoordinateKind.ANGLE,))

    def preimage(u: np.ndarray, branch: int) -> np.ndarray:
        return (u + TWO_PI * branch) / 2.0

    def image(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        branch = (u[:, 0] > np.pi).astype(int)
        return 2.0 * u - TWO_PI * branch[:, None], branch

    return PreorbitScheme(
        name="doubling",
        base_space=circle,
        axes=(axis,),
        depth=depth,
        branch_count=2,
        to_point=wrap_angle,
        base_map=lambda x: wrap_angle(2.0 * x),
        preimage=preimage,
        image=image,
    )


def quadratic_scheme(
    c: float,
    depth: int,
    nodes: int,
    secondary_nodes: int,
    r_inner: float = 0.6,
    r_outer: float = 1.6,
) -> PreorbitScheme:
    """
    P(z) = z² + c (c real) on the annulus r_inner ≤ |z| ≤ r_outer.

    Leaf parameters are (log|z|, ψ) with ψ ∈ [0, 2π]; preimage branches use
    the continuous argument of z - c along the chart.
    """
    c = float(c)
    if abs(c) >= r_inner:
        raise InputError("critical value must lie inside the annulus hole", {"c": c})
    rho_axis = Axis.line(np.log(r_inner), np.log(r_outer), secondary_nodes)
    psi_axis = Axis.line(0.0, TWO_PI, nodes)
    plane = StateSpace.complex(1)

    def to_complex(u: np.ndarray) -> np.ndarray:
        return np.exp(u[:, 0] + 1j * u[:, 1])

    def to_point(u: np.ndarray) -> np.ndarray:
        z = to_complex(np.atleast_2d(u))
        return np.stack([z.real, z.imag], axis=-1)

    def base_map(x: np.ndarray) -> np.ndarray:
        z = x[..., 0] + 1j * x[..., 1]
        w = z * z + c
        return np.stack([w.real, w.imag], axis=-1)

    def preimage(u: np.ndarray, branch: int) -> np.ndarray:
        z = to_complex(u)
        shifted = z - c
        arg = u[:, 1] + np.angle(shifted * np.exp(-1j * u[:, 1]))
        return np.stack([0.5 * np.log(np.abs(shifted)), 0.5 * arg + np.pi * branch], axis=-1)

    def image(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        branch = (u[:, 1] > np.pi).astype(int)
        w = to_complex(u)
        z = w * w + c
        lifted = 2.0 * u[:, 1] - TWO_PI * branch
        psi = lifted + np.angle(z * np.exp(-1j * lifted))
        return np.stack([np.log(np.abs(z)), psi], axis=-1), branch

    return PreorbitScheme(
        name="quadratic",
        base_space=plane,
        axes=(rho_axis, psi_axis),
        depth=depth,
        branch_count=2,
        to_point=to_point,
        base_map=base_map,
        preimage=preimage,
        image=image,
        critical_values=(np.array([c, 0.0]),),
        params={"c": c},
    )


def random_codes(scheme: PreorbitScheme, count: int, seed: int = 0) -> Sequence[TransversalCode]:
    rng = np.random.default_rng(seed)
    words = rng.integers(0, scheme.branch_count, size=(count, scheme.depth))
    return [TransversalCode(tuple(w)) for w in words]
