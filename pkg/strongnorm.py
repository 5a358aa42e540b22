import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.optimize

import config
from errors import AsymptoticSingularityError, CausalityError, DelayNormError
from extrema import ExtremaOptions, ExtremumPoint, run_extrema
from model import DdaeSystem, NullspaceBases, check_causality, nullspace_bases
from transfer import AsymptoticBlocks, asymptotic_blocks, asymptotic_value

# Configure logging
logger = logging.getLogger(__name__)


class GridDimensionError(DelayNormError):
    """Too many active delays for an exhaustive angle grid"""


@dataclass(frozen=True)
class GridOptions:
    """Angle grid used to maximize |G_a| over the delay torus"""
    # Points per active angle; None picks GRID_DENSITY by dimension
    density: Optional[int] = None
    allow_high_dimension: bool = False
    refine_tol: float = config.ANGLE_REFINE_TOL
    max_sweeps: int = config.MAX_REFINE_SWEEPS


@dataclass(frozen=True)
class NormOptions:
    extrema: ExtremaOptions = field(default_factory=ExtremaOptions)
    grid: GridOptions = field(default_factory=GridOptions)
    active_tol: float = config.ACTIVE_DELAY_TOL
    # Replaces the computed asymptotic norm (e.g. a value known in closed form)
    asymptotic_override: Optional[float] = None


@dataclass(frozen=True)
class StrongNormResult:
    """Strong H-infinity norm and where it is attained"""
    standard_peak: float
    peak_frequency: float
    asymptotic_norm: float
    theta_star: Tuple[float, ...]
    strong_norm: float
    # math.inf when the norm is only approached at high frequencies
    frequency: float
    extrema: Tuple[ExtremumPoint, ...]
    predicted: Tuple[Tuple[float, float], ...]
    active_delays: Tuple[int, ...]


def active_delay_indices(sys: DdaeSystem, bases: NullspaceBases,
                         tol: float = config.ACTIVE_DELAY_TOL) -> Tuple[int, ...]:
    """
    Delays that reach the asymptotic transfer function

    Args:
        sys: The system
        bases: Nullspace bases of sys.E
        tol: Relative threshold on ||U^T A_i V||

    Returns:
        1-based indices i with ||U^T A_i V|| > tol * max(1, ||A_i||)
    """
    if bases.nu == 0:
        return ()
    active = []
    for index, A in enumerate(sys.delay_matrices, start=1):
        projected = np.linalg.norm(bases.U.T @ A @ bases.V, 2)
        if projected > tol * max(1.0, np.linalg.norm(A, 2)):
            active.append(index)
    return tuple(active)


def _grid_values(blocks: AsymptoticBlocks, weights: np.ndarray) -> np.ndarray:
    """|G_a| for a batch of weight vectors, shape (points, m)"""
    M = np.broadcast_to(blocks.m0.astype(complex), (len(weights),) + blocks.m0.shape)
    if blocks.mi:
        M = M + np.einsum("pk,kij->pij", weights, np.array(blocks.mi))
    sigma = np.linalg.svd(M, compute_uv=False)
    singular = (sigma[:, 0] == 0) | (sigma[:, -1] < config.POLE_RCOND_TOL * sigma[:, 0])
    if np.any(singular):
        logger.error(f"Asymptotic pencil is singular at {np.count_nonzero(singular)} grid points")
        raise AsymptoticSingularityError(
            "the asymptotic pencil is singular, the asymptotic norm is unbounded")
    rhs = np.broadcast_to(blocks.ub.astype(complex), (len(weights),) + blocks.ub.shape)
    values = -(blocks.cv[None, :, :] @ np.linalg.solve(M, rhs))
    return np.abs(values[:, 0, 0])


def _full_weights(m: int, active: Tuple[int, ...], angles: np.ndarray) -> np.ndarray:
    weights = np.ones((angles.shape[0], m), dtype=complex)
    weights[:, [i - 1 for i in active]] = np.exp(1j * angles)
    return weights


def _refine(blocks: AsymptoticBlocks, m: int, active: Tuple[int, ...], theta: np.ndarray,
            value: float, h: float, grid: GridOptions) -> Tuple[np.ndarray, float]:
    """Coordinate-wise golden-section ascent of |G_a| around a grid maximizer"""

    def magnitude(angles: np.ndarray) -> float:
        return float(_grid_values(blocks, _full_weights(m, active, angles[None, :]))[0])

    theta = theta.copy()
    # golden works on x = 2 + (t - center) / h so that its relative tolerance is an absolute one
    xtol = 0.1 * grid.refine_tol / h
    for sweep in range(grid.max_sweeps):
        largest_move = 0.0
        for k in range(len(theta)):
            center = theta[k]

            def objective(x: float) -> float:
                trial = theta.copy()
                trial[k] = center + (x - 2.0) * h
                return -magnitude(trial)

            try:
                result = scipy.optimize.minimize_scalar(objective, bracket=(1.0, 2.0, 3.0),
                                                        method="golden", tol=xtol)
            except ValueError:
                # the grid point is not strictly interior, fall back to a plain interval
                result = scipy.optimize.minimize_scalar(objective, bracket=(1.0, 3.0),
                                                        method="golden", tol=xtol)
            if -result.fun > value:
                moved = center + (result.x - 2.0) * h
                largest_move = max(largest_move, abs(moved - center))
                theta[k] = moved
                value = -float(result.fun)
        logger.debug(f"Angle refinement sweep {sweep + 1}: |G_a| = {value:.15g}, move {largest_move:.3e}")
        if largest_move < grid.refine_tol:
            break
    return np.mod(theta, 2.0 * np.pi), value


def asymptotic_norm(sys: DdaeSystem, bases: NullspaceBases, grid: GridOptions = GridOptions(),
                    active_tol: float = config.ACTIVE_DELAY_TOL) -> Tuple[float, Tuple[float, ...]]:
    """
    Maximize |G_a| over the delay angles of the active delays

    Args:
        sys: The system
        bases: Nullspace bases of sys.E
        grid: Grid density and refinement settings
        active_tol: Threshold passed to active_delay_indices

    Returns:
        (asymptotic norm, maximizing angles of the active delays); the angles are () when G_a vanishes

    Raises:
        CausalityError: U^T A_0 V is singular
        AsymptoticSingularityError: the asymptotic pencil is singular somewhere on the torus
        GridDimensionError: more than MAX_GRID_DIMENSION active delays without allow_high_dimension
    """
    if bases.nu == 0:
        return 0.0, ()
    blocks = asymptotic_blocks(sys, bases)
    active = active_delay_indices(sys, bases, active_tol)
    m = sys.m
    if not active:
        value = float(_grid_values(blocks, np.ones((1, m), dtype=complex))[0])
        logger.info(f"No active delays, asymptotic norm {value:.15g}")
        return value, ()

    d = len(active)
    if d > config.MAX_GRID_DIMENSION and not grid.allow_high_dimension:
        raise GridDimensionError(f"{d} active delays exceed the grid limit of {config.MAX_GRID_DIMENSION}")
    density = grid.density or config.GRID_DENSITY.get(d)
    if not density:
        raise GridDimensionError(f"no default grid density for {d} active delays, pass one explicitly")

    axis = np.linspace(0.0, 2.0 * np.pi, density, endpoint=False)
    total = density ** d
    logger.info(f"Scanning {total} angle grid points over {d} active delays")
    best_value, best_index = -1.0, 0
    for start in range(0, total, config.GRID_CHUNK_SIZE):
        flat = np.arange(start, min(start + config.GRID_CHUNK_SIZE, total))
        angles = axis[np.stack(np.unravel_index(flat, (density,) * d), axis=1)]
        values = _grid_values(blocks, _full_weights(m, active, angles))
        # argmax returns the first maximizer, so ties go to the lexicographically smallest point
        local = int(np.argmax(values))
        if values[local] > best_value:
            best_value, best_index = float(values[local]), int(flat[local])

    if best_value < config.ZERO_MAGNITUDE_TOL:
        logger.info(f"G_a vanishes on the angle grid (max {best_value:.3e}), asymptotic norm 0")
        return 0.0, ()

    theta = axis[np.array(np.unravel_index(best_index, (density,) * d))]
    theta, value = _refine(blocks, m, active, theta, best_value, 2.0 * np.pi / density, grid)
    logger.info(f"Asymptotic norm {value:.15g} at theta = {theta}")
    return value, tuple(float(t) for t in theta)


def strong_hinf_norm(sys: DdaeSystem, opts: NormOptions = NormOptions()) -> StrongNormResult:
    """
    Strong H-infinity norm max(standard peak of |G(j omega)|, asymptotic norm)

    Args:
        sys: The system
        opts: Extremum, grid and asymptotic settings

    Returns:
        StrongNormResult; frequency is math.inf when the asymptotic norm dominates

    Raises:
        CausalityError: U^T A_0 V is singular
        StabilityViolationError: G_N has imaginary axis poles or the asymptotic pencil is singular
    """
    bases = nullspace_bases(sys, opts.extrema.rank_tol)
    passes, rcond = check_causality(sys, bases)
    if not passes:
        logger.error(f"Causality check failed, rcond(U^T A_0 V) = {rcond:.3e}")
        raise CausalityError("U^T A_0 V is singular", rcond)

    active = active_delay_indices(sys, bases, opts.active_tol)
    if opts.asymptotic_override is not None:
        xi_a, theta = float(opts.asymptotic_override), ()
        logger.info(f"Asymptotic norm overridden with {xi_a}")
    else:
        xi_a, theta = asymptotic_norm(sys, bases, opts.grid, opts.active_tol)

    report = run_extrema(sys, opts.extrema)
    unstable = [p for p in report.zpk.poles if p.real > -config.STABILITY_MARGIN]
    if unstable:
        logger.warning(f"G_N has {len(unstable)} poles with Re >= -{config.STABILITY_MARGIN}, "
                       f"the system may not be exponentially stable")

    converged = [p for p in report.extrema if p.converged]
    if converged:
        peak = max(converged, key=lambda p: p.xi)
        xi_o, omega_o = peak.xi, peak.omega
    elif report.predicted:
        logger.warning("No extremum converged, using the best predicted value")
        omega_o, xi_o = max(report.predicted, key=lambda c: c[1])
    else:
        logger.warning("No extremum candidates, the standard peak is taken as 0")
        omega_o, xi_o = 0.0, 0.0

    strong = max(xi_o, xi_a)
    frequency = omega_o if xi_o > xi_a else math.inf
    logger.info(f"Strong norm {strong:.15g} (standard peak {xi_o:.15g} at {omega_o:.15g}, "
                f"asymptotic {xi_a:.15g})")
    return StrongNormResult(
        standard_peak=float(xi_o),
        peak_frequency=float(omega_o),
        asymptotic_norm=float(xi_a),
        theta_star=theta,
        strong_norm=float(strong),
        frequency=float(frequency),
        extrema=report.extrema,
        predicted=report.predicted,
        active_delays=active,
    )
