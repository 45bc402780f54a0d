"""
Ambient dynamical systems on flat-chart state spaces.

A state space is a product of lines and circles (angles in radians mod 2π)
with an optional complex structure J on declared coordinate pairs. Maps
are numpy-vectorized rules acting on arrays of shape (..., n).
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError, NumericError
from .solvers import fd_steps

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

MapRule = Callable[[np.ndarray, Mapping[str, Any]], np.ndarray]
JacobianRule = Callable[[np.ndarray, Mapping[str, Any]], np.ndarray]


def wrap_angle(x: np.ndarray, period: float = TWO_PI) -> np.ndarray:
    """x mod period, landing in [0, period) even when the mod rounds up to period."""
    r = np.mod(np.asarray(x, dtype=float), period)
    return np.where(r >= period, 0.0, r)


class CoordinateKind(str, Enum):
    LINE = "line"
    ANGLE = "angle"


@dataclass(frozen=True)
class StateSpace:
    """Product of lines and circles with optional complex pairs."""
    n: int
    factor_kinds: Tuple[CoordinateKind, ...]
    complex_pairs: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise InputError("state space needs n >= 1", {"n": self.n})
        kinds = tuple(CoordinateKind(k) for k in self.factor_kinds)
        object.__setattr__(self, "factor_kinds", kinds)
        if len(kinds) != self.n:
            raise InputError("factor_kinds must have one entry per coordinate",
                             {"n": self.n, "kinds": len(kinds)})
        seen = set()
        for pair in self.complex_pairs:
            for index in pair:
                if not 0 <= index < self.n:
                    raise InputError("complex pair index out of range", {"index": index})
                if index in seen:
                    raise InputError("coordinate used in two complex pairs", {"index": index})
                if kinds[index] == CoordinateKind.ANGLE:
                    raise InputError("angle coordinate in a complex pair", {"index": index})
                seen.add(index)

    @classmethod
    def lines(cls, n: int, complex_pairs: Sequence[Tuple[int, int]] = ()) -> "StateSpace":
        return cls(n, tuple([CoordinateKind.LINE] * n), tuple(complex_pairs))

    @classmethod
    def complex(cls, dim: int) -> "StateSpace":
        """ℂ^dim as ℝ^{2 dim} with pairs (2k, 2k+1)."""
        return cls.lines(2 * dim, [(2 * k, 2 * k + 1) for k in range(dim)])

    @property
    def angle_mask(self) -> np.ndarray:
        return np.array([k == CoordinateKind.ANGLE for k in self.factor_kinds])

    @property
    def is_complex(self) -> bool:
        return bool(self.complex_pairs)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Wrap angle coordinates into [0, 2π)."""
        x = np.array(x, dtype=float, copy=True)
        mask = self.angle_mask
        if mask.any():
            x[..., mask] = wrap_angle(x[..., mask])
        return x

    def difference(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """a - b with angle coordinates reduced to [-π, π)."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        mask = self.angle_mask
        if mask.any():
            d = np.array(d, copy=True)
            d[..., mask] = wrap_angle(d[..., mask] + np.pi) - np.pi
        return d

    def j_matrix(self) -> np.ndarray:
        """Complex structure J (multiplication by i) on the paired coordinates."""
        J = np.zeros((self.n, self.n))
        for re, im in self.complex_pairs:
            J[im, re] = 1.0
            J[re, im] = -1.0
        return J

    def paired_indices(self) -> np.ndarray:
        return np.array(sorted(i for pair in self.complex_pairs for i in pair), dtype=int)


@dataclass
class MapSystem:
    """An evaluable self-map f' of a state space."""
    space: StateSpace
    rule: MapRule
    jac_rule: Optional[JacobianRule] = None
    params: Dict[str, Any] = field(default_factory=dict)
    name: str = "custom"

    def with_params(self, **updates: Any) -> "MapSystem":
        params = dict(self.params)
        params.update(updates)
        return replace(self, params=params)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return eval_map(self, x)


@dataclass
class DeformationFamily:
    """Complex analytic family t ↦ f_t over the disk |t| < disk_radius."""
    base: Callable[[complex], MapSystem]
    disk_radius: float
    name: str = "family"

    def __call__(self, t: complex) -> MapSystem:
        return self.base(complex(t))

    def base_mismatch(self, reference: MapSystem, points: np.ndarray) -> float:
        """Sup distance between family(0) and the declared unperturbed system."""
        at_zero = self(0.0)
        diff = reference.space.difference(eval_map(at_zero, points), eval_map(reference, points))
        return float(np.max(np.abs(diff))) if diff.size else 0.0


# ===========================================
# OPERATIONS
# ===========================================

def _as_points(space: StateSpace, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != space.n:
        raise InputError("point dimension does not match state space",
                         {"expected": space.n, "shape": list(np.shape(x))})
    return x


def eval_map(sys: MapSystem, x: np.ndarray) -> np.ndarray:
    """
    Evaluate f'(x) with angle coordinates wrapped into [0, 2π).

    Args:
        sys: the map
        x: point(s), shape (..., n)

    Returns:
        image point(s), same shape
    """
    x = _as_points(sys.space, x)
    y = np.asarray(sys.rule(x, sys.params), dtype=float)
    if not np.all(np.isfinite(y)):
        bad = np.argwhere(~np.all(np.isfinite(y.reshape(-1, sys.space.n)), axis=1))
        first = x.reshape(-1, sys.space.n)[int(bad[0, 0])] if bad.size else x
        raise NumericError("non-finite map value", {"x": first, "system": sys.name})
    return sys.space.wrap(y)


def jacobian(sys: MapSystem, x: np.ndarray, h: Optional[float] = None) -> np.ndarray:
    """
    Jacobian of f' at x, analytic when available.

    The finite-difference path uses central differences with step
    cbrt(eps)*max(1, |x_k|) per coordinate (or the fixed step `h`).

    Returns:
        array of shape (..., n, n)
    """
    x = _as_points(sys.space, x)
    if sys.jac_rule is not None and h is None:
        J = np.asarray(sys.jac_rule(x, sys.params), dtype=float)
    else:
        n = sys.space.n
        steps = fd_steps(x) if h is None else np.full(x.shape, float(h))
        cols = []
        for k in range(n):
            xp = np.array(x, copy=True)
            xm = np.array(x, copy=True)
            xp[..., k] += steps[..., k]
            xm[..., k] -= steps[..., k]
            diff = sys.space.difference(sys.rule(xp, sys.params), sys.rule(xm, sys.params))
            cols.append(diff / (2.0 * steps[..., k, None]))
        J = np.stack(cols, axis=-1)
    if not np.all(np.isfinite(J)):
        raise NumericError("non-finite Jacobian entries", {"system": sys.name})
    return J


def check_holomorphy(sys: MapSystem, x: np.ndarray, h: Optional[float] = None) -> float:
    """
    Cauchy-Riemann residual max ‖J·Df − Df·J‖ over the paired coordinates.

    Returns:
        operator-norm residual (0 means holomorphic to tolerance), maximized
        over all supplied points
    """
    if not sys.space.is_complex:
        raise InputError("check_holomorphy needs declared complex pairs", {"system": sys.name})
    Df = jacobian(sys, x, h=h)
    J = sys.space.j_matrix()
    idx = sys.space.paired_indices()
    comm = J @ Df - Df @ J
    comm = comm[..., idx[:, None], idx[None, :]]
    norms = np.linalg.norm(comm.reshape(-1, idx.size, idx.size), ord=2, axis=(1, 2))
    return float(np.max(norms))


def complex_view(values: np.ndarray) -> np.ndarray:
    """Pairs (re, im) along the last axis as complex numbers."""
    values = np.asarray(values, dtype=float)
    return values[..., 0::2] + 1j * values[..., 1::2]


def real_view(values: np.ndarray) -> np.ndarray:
    """Inverse of complex_view."""
    values = np.asarray(values)
    out = np.empty(values.shape[:-1] + (2 * values.shape[-1],))
    out[..., 0::2] = values.real
    out[..., 1::2] = values.imag
    return out
