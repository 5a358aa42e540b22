import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.interpolate import BarycentricInterpolator

import config
from errors import EigenSolverError, StabilityViolationError, ZpkExtractionError
from model import DdaeSystem
from transfer import checked_solver

# Configure logging
logger = logging.getLogger(__name__)

GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class DescriptorRealization:
    """Delay-free SISO descriptor system G_N(s) = C_N (s E_N - A_N)^{-1} B_N"""
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    # Frequency scale over which the realization approximates the delay system
    frequency_scale: float = 1.0

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def transfer(self, s: complex) -> complex:
        s = complex(s)
        x = checked_solver(s * self.E - self.A, s)(self.B.astype(complex))
        return complex((self.C @ x)[0, 0])


@dataclass(frozen=True)
class ZpkForm:
    """Zero-pole-gain form k * prod(s - z_i) / prod(s - p_k)"""
    zeros: np.ndarray
    poles: np.ndarray
    gain: complex

    def evaluate(self, s: complex) -> complex:
        s = complex(s)
        log_ratio = np.sum(np.log(s - self.zeros)) - np.sum(np.log(s - self.poles))
        return complex(self.gain * np.exp(log_ratio))


def chebyshev_grid(N: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Chebyshev extremal points on [-1, 1] and the differentiation matrix

    Args:
        N: Number of intervals (N + 1 points)

    Returns:
        (x, D) with x[0] = 1, x[N] = -1
    """
    k = np.arange(N + 1)
    x = np.cos(np.pi * k / N)
    c = np.hstack(([2.0], np.ones(N - 1), [2.0])) * (-1.0) ** k
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D = D - np.diag(D.sum(axis=1))
    return x, D


def _delayed_components(sys: DdaeSystem) -> np.ndarray:
    """Indices of state components read with a positive delay"""
    used = np.zeros(sys.n, dtype=bool)
    for A in sys.delay_matrices:
        used |= np.any(A != 0, axis=0)
    return np.flatnonzero(used)


def spectral_discretize(sys: DdaeSystem, N: int = config.DEFAULT_N,
                        compact: bool = False) -> DescriptorRealization:
    """
    Approximate the delay system by a rational descriptor system

    The state segment on [-tau_max, 0] is collocated on N + 1 Chebyshev
    points. Block row 0 carries the system equation with delayed values
    interpolated barycentrically; the other block rows impose the
    differentiation matrix on the history.

    Args:
        sys: The system
        N: Number of Chebyshev intervals
        compact: Keep the history only for components that appear delayed

    Returns:
        DescriptorRealization of order n(N + 1), or n + n_d N when compact
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    N = int(N)
    if sys.m == 0:
        return DescriptorRealization(E=sys.E, A=sys.A0, B=sys.B, C=sys.C)

    n = sys.n
    tau_max = sys.tau_max
    x, D = chebyshev_grid(N)
    D = D * (2.0 / tau_max)

    history = _delayed_components(sys) if compact else np.arange(n)
    n_d = len(history)
    S = np.eye(n)[:, history]
    order = n + n_d * N

    # Lagrange basis values at each delay: rows of the identity interpolated
    basis = BarycentricInterpolator(x, np.eye(N + 1))
    rows = basis(1.0 + 2.0 * np.array(sys.delays) / -tau_max)
    rows = np.atleast_2d(rows)

    E_N = np.zeros((order, order))
    A_N = np.zeros((order, order))
    E_N[:n, :n] = sys.E
    E_N[n:, n:] = np.eye(n_d * N)

    A_N[:n, :n] = sys.A0
    for (tau, A), ell in zip(sys.terms[1:], rows):
        AS = A @ S
        A_N[:n, :n] += ell[0] * AS @ S.T
        for j in range(1, N + 1):
            A_N[:n, n + (j - 1) * n_d:n + j * n_d] += ell[j] * AS

    # history rows: psi_k' = D[k, 0] S^T phi_0 + sum_j D[k, j] psi_j
    A_N[n:, :n] = np.kron(D[1:, :1], S.T)
    A_N[n:, n:] = np.kron(D[1:, 1:], np.eye(n_d))

    B_N = np.zeros((order, 1))
    B_N[:n] = sys.B
    C_N = np.zeros((1, order))
    C_N[:, :n] = sys.C
    scale = (N + 1) / tau_max
    logger.info(f"Spectral discretization with N = {N}: order {order} "
                f"(nominal {n * (N + 1)}), {n_d} delayed components")
    return DescriptorRealization(E=E_N, A=A_N, B=B_N, C=C_N, frequency_scale=scale)


def solve_gevp(A: np.ndarray, E: np.ndarray, vectors: bool = False,
               cap: float = config.INFINITE_EIGENVALUE_CAP):
    """
    Finite generalized eigenvalues of the pencil (A, E)

    Args:
        A: Square matrix
        E: Square matrix of the same size
        vectors: Also return the right eigenvectors
        cap: Eigenvalues of larger modulus are treated as infinite

    Returns:
        Array of finite eigenvalues, or (eigenvalues, eigenvectors)
    """
    A = np.asarray(A)
    E = np.asarray(E)
    if A.shape != E.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"pencil matrices must be square and equal size, got {A.shape} and {E.shape}")
    size = A.shape[0]
    if size == 0:
        empty = np.zeros(0, dtype=complex)
        return (empty, np.zeros((0, 0), dtype=complex)) if vectors else empty
    try:
        result = scipy.linalg.eig(A, E, right=vectors, homogeneous_eigvals=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.error(f"QZ failed on a pencil of size {size}: {e}")
        raise EigenSolverError(f"generalized eigenvalue solver failed: {e}", size)
    if vectors:
        (alpha, beta), eigenvectors = result
    else:
        alpha, beta = result
    magnitude = np.maximum(np.abs(alpha), np.abs(beta))
    finite = np.abs(beta) > config.BETA_TOL * magnitude
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(finite, alpha / np.where(finite, beta, 1.0), np.inf)
    keep = finite & (np.abs(values) < cap)
    if vectors:
        return values[keep], eigenvectors[:, keep]
    return values[keep]


def _cancel_pairs(zeros: np.ndarray, poles: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Remove pole-zero pairs closer than tol * max(1, |p|), nearest first"""
    zeros = list(zeros)
    poles = list(poles)
    if not zeros or not poles:
        return np.array(zeros, dtype=complex), np.array(poles, dtype=complex)
    distance = np.abs(np.subtract.outer(np.array(zeros), np.array(poles)))
    limit = tol * np.maximum(1.0, np.abs(np.array(poles)))[None, :]
    candidates = np.argwhere(distance <= limit)
    order = np.argsort(distance[candidates[:, 0], candidates[:, 1]])
    used_zeros, used_poles = set(), set()
    for i, j in candidates[order]:
        if i in used_zeros or j in used_poles:
            continue
        used_zeros.add(i)
        used_poles.add(j)
    kept_zeros = np.array([z for i, z in enumerate(zeros) if i not in used_zeros], dtype=complex)
    kept_poles = np.array([p for j, p in enumerate(poles) if j not in used_poles], dtype=complex)
    if used_zeros:
        logger.debug(f"Cancelled {len(used_zeros)} pole-zero pairs")
    return kept_zeros, kept_poles


def reject_axis_poles(poles: np.ndarray) -> None:
    """Raise StabilityViolationError when a pole lies on the imaginary axis"""
    poles = np.asarray(poles, dtype=complex)
    on_axis = np.abs(poles.real) <= config.AXIS_ZERO_TOL * np.maximum(1.0, np.abs(poles))
    if np.any(on_axis):
        logger.error(f"G_N has poles on the imaginary axis: {poles[on_axis]}")
        raise StabilityViolationError(f"poles on the imaginary axis: {poles[on_axis]}")


def _validation_point(zeros: np.ndarray, poles: np.ndarray, scale: float) -> complex:
    roots = np.concatenate([zeros, poles])
    s0 = 1j * GOLDEN_RATIO * scale
    for _ in range(20):
        if roots.size == 0 or np.min(np.abs(roots - s0)) > 1e-3 * max(1.0, abs(s0)):
            break
        s0 *= GOLDEN_RATIO
    return s0


def to_zpk(g: DescriptorRealization, validate: bool = True) -> ZpkForm:
    """
    Zero-pole-gain form of a SISO descriptor system

    Poles are the finite eigenvalues of (A, E), zeros the finite eigenvalues
    of the system pencil ([[A, B], [C, 0]], blkdiag(E, 0)); the gain is
    matched at one point and checked on a validation grid.

    Args:
        g: Descriptor realization
        validate: Check the form against g on ZPK_VALIDATION_POINTS frequencies

    Returns:
        ZpkForm

    Raises:
        StabilityViolationError: G_N has a pole on the imaginary axis
        ZpkExtractionError: the form does not reproduce g on the validation grid
    """
    poles = solve_gevp(g.A, g.E)
    system = np.block([[g.A, g.B], [g.C, np.zeros((1, 1))]])
    padded = scipy.linalg.block_diag(g.E, np.zeros((1, 1)))
    zeros = solve_gevp(system, padded)
    zeros, poles = _cancel_pairs(zeros, poles, config.CANCELLATION_TOL)
    reject_axis_poles(poles)

    for name, roots in (("zeros", zeros), ("poles", poles)):
        if roots.size and not np.allclose(np.sort_complex(roots), np.sort_complex(roots.conj()),
                                          rtol=config.CONJUGATE_PAIR_TOL, atol=config.CONJUGATE_PAIR_TOL):
            logger.warning(f"The {name} of G_N are not closed under conjugation")

    s0 = _validation_point(zeros, poles, g.frequency_scale)
    unit = ZpkForm(zeros=zeros, poles=poles, gain=1.0)
    gain = g.transfer(s0) / unit.evaluate(s0)
    zpk = ZpkForm(zeros=zeros, poles=poles, gain=complex(gain))
    logger.info(f"G_N has {len(poles)} finite poles and {len(zeros)} finite zeros "
                f"(order {g.order})")

    if validate:
        omegas = g.frequency_scale * np.logspace(-4, 0, config.ZPK_VALIDATION_POINTS)
        worst = 0.0
        for omega in omegas:
            reference = g.transfer(1j * omega)
            error = abs(zpk.evaluate(1j * omega) - reference) / (1.0 + abs(reference))
            worst = max(worst, error)
        if worst > config.ZPK_VALIDATION_TOL:
            logger.error(f"Zero-pole-gain form deviates from G_N by {worst:.3e}")
            raise ZpkExtractionError(
                f"zero-pole-gain form does not reproduce G_N (relative error {worst:.3e})")
    return zpk
