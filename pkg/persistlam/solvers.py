"""
Batched Newton solver with central finite-difference Jacobians.

Each row of the unknown array is an independent system. A row stops
iterating as soon as it converges, so a row's result does not depend on
which other rows share its batch.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

FD_FACTOR = float(np.cbrt(np.finfo(float).eps))
SINGULAR_CONDITION = 1e14

# residual(z_subset, row_indices) -> residual_subset
Residual = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class NewtonResult:
    """Outcome of a batched Newton solve."""
    z: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray

    @property
    def failures(self) -> int:
        return int(np.count_nonzero(~self.converged))

    @property
    def max_iterations(self) -> int:
        return int(self.iterations.max()) if self.iterations.size else 0


def fd_steps(z: np.ndarray) -> np.ndarray:
    """Step h = cbrt(eps) * max(1, |z_k|) per coordinate."""
    return FD_FACTOR * np.maximum(1.0, np.abs(z))


def fd_jacobian(func: Callable[[np.ndarray], np.ndarray], z: np.ndarray) -> np.ndarray:
    """
    Central finite-difference Jacobian of a batched function.

    Args:
        func: maps (m, k) -> (m, p)
        z: points, shape (m, k)

    Returns:
        Jacobians, shape (m, p, k)
    """
    z = np.asarray(z, dtype=float)
    m, k = z.shape
    h = fd_steps(z)
    columns = []
    for j in range(k):
        zp = z.copy()
        zm = z.copy()
        zp[:, j] += h[:, j]
        zm[:, j] -= h[:, j]
        columns.append((func(zp) - func(zm)) / (2.0 * h[:, j, None]))
    return np.stack(columns, axis=-1)


def batched_newton(
    residual: Residual,
    z0: np.ndarray,
    tol: float,
    max_iter: int,
) -> NewtonResult:
    """
    Solve residual(z) = 0 row by row.

    Args:
        residual: residual(z_rows, row_indices) -> (len(rows), k)
        z0: initial guesses, shape (m, k)
        tol: max-abs residual tolerance
        max_iter: iteration cap per row

    Returns:
        NewtonResult with per-row convergence flags
    """
    z = np.array(z0, dtype=float, copy=True)
    m = z.shape[0]
    all_rows = np.arange(m)

    r = residual(z, all_rows)
    res = np.max(np.abs(r), axis=1) if m else np.zeros(0)
    finite = np.all(np.isfinite(r), axis=1) if m else np.zeros(0, dtype=bool)
    converged = finite & (res <= tol)
    failed = ~finite
    active = ~converged & ~failed
    iterations = np.zeros(m, dtype=int)

    for _ in range(max_iter):
        rows = np.nonzero(active)[0]
        if rows.size == 0:
            break

        jac = fd_jacobian(lambda zz: residual(zz, rows), z[rows])
        cond = np.linalg.cond(jac)
        solvable = np.isfinite(cond) & (cond < SINGULAR_CONDITION)

        bad_rows = rows[~solvable]
        failed[bad_rows] = True
        active[bad_rows] = False

        rows = rows[solvable]
        if rows.size == 0:
            continue
        step = np.linalg.solve(jac[solvable], -r[rows][..., None])[..., 0]
        z[rows] += step
        iterations[rows] += 1

        r_new = residual(z[rows], rows)
        r[rows] = r_new
        res[rows] = np.max(np.abs(r_new), axis=1)

        ok = np.all(np.isfinite(r_new), axis=1)
        stagnant = np.max(np.abs(step), axis=1) <= 4.0 * np.finfo(float).eps * (
            1.0 + np.max(np.abs(z[rows]), axis=1)
        )
        done = ok & ((res[rows] <= tol) | (stagnant & (res[rows] <= 1e3 * tol)))

        converged[rows[done]] = True
        active[rows[done]] = False
        failed[rows[~ok]] = True
        active[rows[~ok]] = False

    if np.any(~converged):
        logger.debug(f"Newton: {int(np.count_nonzero(~converged))} of {m} rows unconverged")

    return NewtonResult(z=z, converged=converged, iterations=iterations, residual=res)
