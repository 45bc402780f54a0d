"""
J-invariance and holomorphy residuals; continuation over complex parameter disks.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .bundle import NormalFrame, PlaneField, Section, section_to_immersion
from .dynsys import DeformationFamily, StateSpace, complex_view
from .errors import ContinuationError, InputError, LaminationError
from .graph_transform import BaseDynamics, TransformConfig, iterate_to_fixed_point
from .lamination import DiscreteLamination
from .models import FamilyMember, FamilyReport, Variant

logger = logging.getLogger(__name__)

CONTINUATION_TOL = 1e-8


# ===========================================
# J-INVARIANCE
# ===========================================

def ambient_planes(frames: NormalFrame, planes: PlaneField) -> np.ndarray:
    """Spanning vectors T + N·l of each tangent plane, shape (codes, nodes, n, d)."""
    return frames.tangents + frames.matrices @ planes.matrices


def j_invariance_residual(vectors: np.ndarray, space: StateSpace) -> Tuple[np.ndarray, float]:
    """
    Largest principal-angle sine between J·span(P) and span(P).

    Args:
        vectors: (..., n, d) spanning vectors per node
        space: ambient space with complex pairs

    Returns:
        (per-node residuals, sup residual)
    """
    if not space.is_complex:
        raise InputError("J-invariance needs declared complex pairs")
    vectors = np.asarray(vectors, dtype=float)
    q, _ = np.linalg.qr(vectors)
    jq = space.j_matrix() @ q
    outside = jq - q @ (np.swapaxes(q, -1, -2) @ jq)
    flat = outside.reshape(-1, *outside.shape[-2:])
    per_node = np.linalg.norm(flat, ord=2, axis=(1, 2)).reshape(outside.shape[:-2])
    return per_node, float(np.max(per_node)) if per_node.size else 0.0


# ===========================================
# LEAFWISE CAUCHY-RIEMANN
# ===========================================

def cauchy_riemann_residual(values: np.ndarray, lam: DiscreteLamination, pair: Tuple[int, int],
                            step: int = 1) -> float:
    """
    sup ‖½(∂_re P + J·∂_im P)‖ over interior nodes, central differences.

    Args:
        values: immersed node values (codes, *counts, n)
        pair: leaf axes (re, im) forming a complex coordinate
        step: stencil spacing in nodes
    """
    re, im = pair
    J = lam.space.j_matrix()
    a_re, a_im = lam.axes[re], lam.axes[im]

    def central(axis_index: int, axis) -> Tuple[np.ndarray, np.ndarray]:
        moved = np.moveaxis(values, 1 + axis_index, 0)
        count = axis.count
        centre = np.arange(step, count - step) if not axis.periodic else np.arange(count)
        plus = np.mod(centre + step, count)
        minus = np.mod(centre - step, count)
        deriv = lam.space.difference(moved[plus], moved[minus]) / (2.0 * step * axis.spacing)
        return np.moveaxis(deriv, 0, 1 + axis_index), centre

    d_re, keep_re = central(re, a_re)
    d_im, keep_im = central(im, a_im)
    # crop both derivatives to the common interior
    index_re = [slice(None)] * values.ndim
    index_im = [slice(None)] * values.ndim
    index_re[1 + im] = keep_im
    index_im[1 + re] = keep_re
    d_re = d_re[tuple(index_re)]
    d_im = d_im[tuple(index_im)]
    cr = 0.5 * (d_re + d_im @ J.T)
    return float(np.max(np.linalg.norm(cr, axis=-1))) if cr.size else 0.0


def holomorphy_residual_section(lam: DiscreteLamination, frames: NormalFrame, s: Section) -> Tuple[float, float]:
    """
    Leafwise Cauchy-Riemann residual of the immersion I(·, s).

    Returns:
        (residual at spacing h, error bar |R(h) - R(2h)|)

    Raises:
        InputError: no complex leaf pairing or ambient pairing
    """
    if not lam.leaf_complex_pairs or not lam.space.is_complex:
        raise InputError("holomorphy residual needs complex leaf and ambient pairings", {"lamination": lam.name})
    values = section_to_immersion(lam, frames, s).at_nodes()
    values = values.reshape((len(lam.codes),) + lam.counts + (lam.space.n,))
    fine = max(cauchy_riemann_residual(values, lam, pair, 1) for pair in lam.leaf_complex_pairs)
    coarse = max(cauchy_riemann_residual(values, lam, pair, 2) for pair in lam.leaf_complex_pairs)
    return fine, abs(coarse - fine)


# ===========================================
# DEFORMATION FAMILIES
# ===========================================

def disk_grid(radius: float, rings: int, angles: int) -> List[complex]:
    """Center, then ring by ring outward: t = (j/rings)·radius·e^{2πim/angles}."""
    grid = [0j]
    for j in range(1, rings + 1):
        rho = radius * j / rings
        grid.extend(rho * np.exp(2j * np.pi * m / angles) for m in range(angles))
    return grid


def _fiber_values(lam: DiscreteLamination, frames: NormalFrame, s: Section) -> np.ndarray:
    """Fiber coordinates as complex numbers when the fibers are complex lines."""
    if lam.space.is_complex and lam.normal_dim % 2 == 0:
        return complex_view(s.values)
    return s.values.astype(complex)


@dataclass
class FamilyResult:
    sections: Dict[complex, Section]
    report: FamilyReport
    t_grid: List[complex] = field(default_factory=list)


def parameter_cr_residual(values: Dict[complex, np.ndarray], radius: float, rings: int, angles: int) -> float:
    """
    sup |∂S/∂t̄| over the interior points of the ring lattice.

    At t = ρe^{iθ}, ∂/∂t̄ = ½e^{iθ}(∂_ρ + (i/ρ)∂_θ), each derivative a central
    difference over the two lattice neighbours along it. The angular
    difference is divided by 2·sin Δθ so the stencil is exact on a + b·t + c·t̄.

    Raises:
        InputError: fewer than two rings (no interior points)
    """
    if rings < 2:
        raise InputError("parameter CR residual needs at least two rings", {"rings": rings})
    grid = disk_grid(radius, rings, angles)
    h = radius / rings
    step = 2.0 * np.pi / angles

    def at(j: int, m: int) -> np.ndarray:
        return values[grid[0]] if j == 0 else values[grid[1 + (j - 1) * angles + m % angles]]

    worst = 0.0
    for j in range(1, rings):
        rho = h * j
        for m in range(angles):
            d_rho = (at(j + 1, m) - at(j - 1, m)) / (2.0 * h)
            d_theta = (at(j, m + 1) - at(j, m - 1)) / (2.0 * np.sin(step))
            dbar = 0.5 * np.exp(1j * step * m) * (d_rho + 1j * d_theta / rho)
            worst = max(worst, float(np.max(np.abs(dbar))))
    return worst


def deform_family(
    family: DeformationFamily,
    lam: DiscreteLamination,
    frames: NormalFrame,
    variant: Variant,
    dynamics: BaseDynamics,
    cfg: TransformConfig,
    radius: float,
    rings: int = 2,
    angles: int = 8,
    cold_check: bool = True,
) -> FamilyResult:
    """
    Continue the fixed point over a disk of complex parameters.

    Each t is warm-started from its inward neighbour (the center for the
    first ring); the outermost ring is re-solved cold and must agree.

    Raises:
        ContinuationError: warm and cold solutions disagree, or a ring fails
    """
    if radius > family.disk_radius:
        raise InputError("parameter grid leaves the family's disk", {"radius": radius, "disk": family.disk_radius})
    t_grid = disk_grid(radius, rings, angles)
    sections: Dict[complex, Section] = {}
    members: List[FamilyMember] = []
    largest_ring = 0.0

    for index, t in enumerate(t_grid):
        ring = 0 if index == 0 else (index - 1) // angles + 1
        if ring == 0:
            warm = Section.zero(lam)
        else:
            inward = t * (ring - 1) / ring
            warm = sections[min(sections, key=lambda key: abs(key - inward))]
        try:
            section, report = iterate_to_fixed_point(family(t), lam, frames, warm, variant, dynamics, cfg,
                                                     scenario=f"{family.name}@{t:.4g}")
        except LaminationError as exc:
            exc.context["t"] = [t.real, t.imag]
            raise ContinuationError(f"continuation failed: {exc.message}", exc.context) from exc

        if cold_check and ring == rings and ring > 0:
            cold, _ = iterate_to_fixed_point(family(t), lam, frames, Section.zero(lam), variant, dynamics, cfg)
            gap = cold.distance(section)
            if gap > CONTINUATION_TOL:
                raise ContinuationError("warm and cold continuation disagree", {"t": [t.real, t.imag], "gap": gap})

        sections[t] = section
        members.append(FamilyMember(
            t=[t.real, t.imag],
            converged=report.converged,
            sup_distance=report.iterations[-1].sup_distance if report.iterations else 0.0,
            sup_norm=section.sup_norm(),
            residuals={"invariance": report.final_residual},
        ))
        if ring > 0 and (index - 1) % angles == angles - 1:
            largest_ring = abs(t)

    values = {t: _fiber_values(lam, frames, s) for t, s in sections.items()}
    cr = parameter_cr_residual(values, radius, rings, angles)
    coherence = 0.0
    for t in t_grid[1:]:
        coherence = max(coherence, sections[t].distance(sections[0j]) / abs(t))

    report = FamilyReport(members=members, parameter_cr_residual=cr, largest_ring=largest_ring,
                          coherence_constant=coherence)
    logger.info(f"deformation family {family.name}: parameter CR residual {cr:.3e}")
    return FamilyResult(sections=sections, report=report, t_grid=t_grid)
