"""
Normal frames, sections and the tubular neighborhood I(x, v) = i(x) + N(x)·v.

Frames and sections are stored per node, flattened per leaf: arrays have
shape (codes, nodes_per_leaf, ...).
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import settings
from .dynsys import StateSpace
from .errors import GeometryError, InputError, NumericError
from .lamination import Axis, DiscreteLamination, GridInterpolant

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-10


# ===========================================
# FINITE DIFFERENCES ON LEAF GRIDS
# ===========================================

_CENTRAL = (np.array([-2, -1, 0, 1, 2]), np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0)
_EDGE0 = (np.array([0, 1, 2, 3, 4]), np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0)
_EDGE1 = (np.array([-1, 0, 1, 2, 3]), np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0)


def _stencils(axis: Axis):
    """Per-node (offsets, coefficients) of a fourth-order first derivative."""
    count = axis.count
    offsets = np.tile(_CENTRAL[0], (count, 1))
    coefs = np.tile(_CENTRAL[1], (count, 1))
    if not axis.periodic:
        offsets[0], coefs[0] = _EDGE0
        offsets[1], coefs[1] = _EDGE1
        offsets[-1], coefs[-1] = -_EDGE0[0], -_EDGE0[1]
        offsets[-2], coefs[-2] = -_EDGE1[0], -_EDGE1[1]
    return offsets, coefs


def grid_derivative(values: np.ndarray, axis_index: int, axis: Axis, space: Optional[StateSpace] = None) -> np.ndarray:
    """
    d/du along one grid axis of node values.

    Args:
        values: array whose axis `axis_index` runs over the grid axis
        space: if given, the last axis holds ambient points and angle
            coordinates are differenced mod 2π
    """
    offsets, coefs = _stencils(axis)
    count = axis.count
    base = np.arange(count)
    moved = np.moveaxis(values, axis_index, 0)
    out = np.zeros(moved.shape)
    shape = (count,) + (1,) * (moved.ndim - 1)
    for m in range(offsets.shape[1]):
        idx = base + offsets[:, m]
        if axis.periodic:
            idx = np.mod(idx, count)
        neighbour = moved[idx]
        delta = space.difference(neighbour, moved) if space is not None else neighbour - moved
        out += coefs[:, m].reshape(shape) * delta
    return np.moveaxis(out / axis.spacing, 0, axis_index)


def leaf_tangents(lam: DiscreteLamination, points: Optional[np.ndarray] = None) -> np.ndarray:
    """Leaf tangent vectors ∂i/∂u_j, shape (codes, nodes_per_leaf, n, d)."""
    points = lam.points if points is None else points
    columns = [grid_derivative(points, 1 + j, axis, lam.space) for j, axis in enumerate(lam.axes)]
    tangents = np.stack(columns, axis=-1)
    return tangents.reshape(len(lam.codes), lam.nodes_per_leaf, lam.space.n, lam.d)


# ===========================================
# TYPES
# ===========================================

@dataclass
class NormalFrame:
    """Orthonormal transverse frames N(x) and leaf tangents T(x) per node."""
    matrices: np.ndarray
    tangents: np.ndarray
    hint: Optional[np.ndarray] = None

    @property
    def k(self) -> int:
        return self.matrices.shape[-1]

    def basis(self) -> np.ndarray:
        """[T | N] per node, shape (codes, nodes, n, n)."""
        return np.concatenate([self.tangents, self.matrices], axis=-1)


@dataclass
class Section:
    """Fiber coordinates v(x) per node, shape (codes, nodes_per_leaf, k)."""
    values: np.ndarray

    @classmethod
    def zero(cls, lam: DiscreteLamination) -> "Section":
        return cls(np.zeros((len(lam.codes), lam.nodes_per_leaf, lam.normal_dim)))

    def sup_norm(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.values, axis=-1)))

    def distance(self, other: "Section") -> float:
        return Section(self.values - other.values).sup_norm()

    def check_tube(self, eta: float) -> None:
        if not np.all(np.isfinite(self.values)):
            raise NumericError("section has non-finite entries")
        norm = self.sup_norm()
        if norm > eta:
            raise InputError("section leaves the tube", {"sup_norm": norm, "eta": eta})

    def __add__(self, other: "Section") -> "Section":
        return Section(self.values + other.values)

    def __sub__(self, other: "Section") -> "Section":
        return Section(self.values - other.values)

    def scaled(self, factor: float) -> "Section":
        return Section(self.values * factor)


@dataclass
class PlaneField:
    """Tangent planes as graphs over the leaf direction: (codes, nodes, k, d)."""
    matrices: np.ndarray

    def sup_norm(self) -> float:
        if self.matrices.size == 0:
            return 0.0
        flat = self.matrices.reshape(-1, *self.matrices.shape[-2:])
        return float(np.max(np.linalg.norm(flat, ord=2, axis=(1, 2))))

    def distance(self, other: "PlaneField") -> float:
        return PlaneField(self.matrices - other.matrices).sup_norm()

    @classmethod
    def zero(cls, lam: DiscreteLamination) -> "PlaneField":
        return cls(np.zeros((len(lam.codes), lam.nodes_per_leaf, lam.normal_dim, lam.d)))


# ===========================================
# OPERATIONS
# ===========================================

def _orthonormalize(vectors: np.ndarray) -> np.ndarray:
    """QR with positive diagonal so that continuous inputs stay continuous."""
    q, r = np.linalg.qr(vectors)
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return q * signs[..., None, :]


def _reference_nodes(counts) -> np.ndarray:
    """Previous node along the last axis, or the row start above it."""
    last = counts[-1]
    total = int(np.prod(counts))
    ref = np.arange(total) - 1
    starts = np.arange(total) % last == 0
    ref[starts] = np.arange(total)[starts] - last
    return ref


def _aligned_complement(tangents: np.ndarray, counts) -> np.ndarray:
    codes, nodes, n, d = tangents.shape
    u, _, _ = np.linalg.svd(tangents, full_matrices=True)
    complement = u[..., d:]
    frames = np.empty_like(complement)
    frames[:, 0] = complement[:, 0]
    ref = _reference_nodes(counts)
    for p in range(1, nodes):
        prev = frames[:, ref[p]]
        overlap = np.swapaxes(complement[:, p], -1, -2) @ prev
        a, _, bt = np.linalg.svd(overlap)
        frames[:, p] = complement[:, p] @ (a @ bt)
    return frames


def build_normal_frames(lam: DiscreteLamination, hint: Optional[np.ndarray] = None) -> NormalFrame:
    """
    Orthonormal transverse frames for every node.

    Args:
        lam: base lamination
        hint: optional (codes, nodes, n, n - d) guess of the transverse subspace

    Raises:
        GeometryError: frame and leaf tangent do not span ℝⁿ well enough
    """
    tangents = leaf_tangents(lam)
    k = lam.normal_dim
    if k == 0:
        frames = np.zeros(tangents.shape[:-1] + (0,))
    elif hint is None:
        frames = _aligned_complement(tangents, lam.counts)
    else:
        hint = np.asarray(hint, dtype=float)
        expected = (len(lam.codes), lam.nodes_per_leaf, lam.space.n, k)
        if hint.shape != expected:
            raise InputError("frame hint has wrong shape", {"expected": expected, "got": hint.shape})
        frames = _orthonormalize(hint)

    basis = np.concatenate([tangents, frames], axis=-1)
    cond = np.linalg.cond(basis.reshape(-1, lam.space.n, lam.space.n))
    worst = int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))
    if not np.isfinite(cond[worst]) or cond[worst] > settings.MAX_CONDITION:
        code_idx, node = divmod(worst, lam.nodes_per_leaf)
        raise GeometryError("frame not transverse to the leaf",
                            {"code": lam.codes[code_idx].label, "node": node, "condition": float(cond[worst])})
    return NormalFrame(matrices=frames, tangents=tangents, hint=hint)


class SectionImmersion:
    """Immersion evaluator u, code ↦ i(x) + N(x)·v(x), exact at nodes."""

    def __init__(self, lam: DiscreteLamination, frames: NormalFrame, s: Section):
        self.lam = lam
        self.frames = frames
        self.section = s
        offset = np.einsum("cpnk,cpk->cpn", frames.matrices, s.values)
        flat = lam.flat_points() + offset
        self.node_values = lam.space.wrap(flat)
        counts = lam.counts
        self._interpolants = tuple(
            GridInterpolant(lam.axes, self.node_values[c].reshape(counts + (lam.space.n,)),
                            angle_outputs=lam.space.angle_mask)
            for c in range(len(lam.codes))
        )

    def interpolant(self, code_idx: int) -> GridInterpolant:
        return self._interpolants[code_idx]

    def __call__(self, code_idx: int, u: np.ndarray) -> np.ndarray:
        return self.interpolant(code_idx)(np.atleast_2d(u))

    def at_nodes(self) -> np.ndarray:
        return self.node_values


def section_to_immersion(lam: DiscreteLamination, frames: NormalFrame, s: Section) -> SectionImmersion:
    return SectionImmersion(lam, frames, s)


def tangent_planes_fd(lam: DiscreteLamination, frames: NormalFrame, s: Section) -> PlaneField:
    """
    Finite-difference tangent planes of i' = I(·, s) as graphs in frame coordinates.

    Each leaf derivative of i' is split into tangent part A (d×d) and normal
    part C (k×d) in the [T | N] basis; the plane is L = C·A⁻¹.
    """
    immersed = section_to_immersion(lam, frames, s).at_nodes()
    shaped = immersed.reshape((len(lam.codes),) + lam.counts + (lam.space.n,))
    derivs = leaf_tangents(lam, shaped)
    coeffs = np.linalg.solve(frames.basis(), derivs)
    a = coeffs[..., : lam.d, :]
    c = coeffs[..., lam.d:, :]
    planes = np.swapaxes(np.linalg.solve(np.swapaxes(a, -1, -2), np.swapaxes(c, -1, -2)), -1, -2)
    return PlaneField(planes)


def frame_continuity(lam: DiscreteLamination, frames: NormalFrame) -> float:
    """Largest adjacent-node frame distance divided by the smallest spacing."""
    if frames.k == 0:
        return 0.0
    ref = _reference_nodes(lam.counts)
    valid = ref >= 0
    diff = frames.matrices[:, valid] - frames.matrices[:, ref[valid]]
    h = min(axis.spacing for axis in lam.axes)
    return float(np.max(np.linalg.norm(diff, axis=(-2, -1))) / h)
