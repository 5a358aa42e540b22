import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import get_lapack_funcs

import config
from errors import AsymptoticSingularityError, CausalityError, PoleProximityError
from model import DdaeSystem, NullspaceBases, check_causality

# Configure logging
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PencilValue:
    """The delay pencil A(s) = A_0 + sum_i A_i exp(-s tau_i) and its s-derivatives"""
    value: np.ndarray
    derivative: np.ndarray
    second: Optional[np.ndarray] = None


def eval_pencil(sys: DdaeSystem, s: complex, order: int = 1) -> PencilValue:
    """
    Evaluate the delay pencil and its derivatives at s

    Args:
        sys: The system
        s: Complex frequency
        order: 2 to also return A''(s) = sum_i tau_i^2 A_i exp(-s tau_i)

    Returns:
        PencilValue
    """
    s = complex(s)
    value = sys.A0.astype(complex)
    derivative = np.zeros_like(value)
    second = np.zeros_like(value) if order >= 2 else None
    for tau, A in sys.terms[1:]:
        weight = np.exp(-s * tau)
        value = value + weight * A
        derivative = derivative - (tau * weight) * A
        if second is not None:
            second = second + (tau * tau * weight) * A
    return PencilValue(value=value, derivative=derivative, second=second)


def checked_solver(M: np.ndarray, s: complex) -> Callable[[np.ndarray], np.ndarray]:
    """
    LU-factor M once, verify its reciprocal condition and return a solver

    Raises:
        PoleProximityError: rcond(M) below POLE_RCOND_TOL
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    gecon, = get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, np.linalg.norm(M, 1), norm="1")
    if info != 0 or not np.isfinite(rcond) or rcond < config.POLE_RCOND_TOL:
        raise PoleProximityError(s, float(rcond) if np.isfinite(rcond) else 0.0)
    return lambda rhs: scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def _resolvent(sys: DdaeSystem, s: complex, order: int = 1):
    pencil = eval_pencil(sys, s, order)
    solve = checked_solver(complex(s) * sys.E - pencil.value, s)
    return pencil, solve


def eval_transfer(sys: DdaeSystem, s: complex) -> complex:
    """
    Evaluate G(s) = C (sE - A(s))^{-1} B

    Args:
        sys: The system
        s: Complex frequency, not a characteristic root

    Returns:
        G(s)
    """
    _, solve = _resolvent(sys, s)
    return complex((sys.C @ solve(sys.B.astype(complex)))[0, 0])


def eval_transfer_and_derivative(sys: DdaeSystem, s: complex) -> Tuple[complex, complex]:
    """G(s) and G'(s) from a single factorization of sE - A(s)"""
    pencil, solve = _resolvent(sys, s)
    x = solve(sys.B.astype(complex))
    z = solve((sys.E - pencil.derivative) @ x)
    return complex((sys.C @ x)[0, 0]), complex(-(sys.C @ z)[0, 0])


def eval_transfer_derivative(sys: DdaeSystem, s: complex) -> complex:
    """
    Evaluate G'(s) = -C (sE - A)^{-1} (E - A'(s)) (sE - A)^{-1} B

    Args:
        sys: The system
        s: Complex frequency, not a characteristic root

    Returns:
        G'(s)
    """
    return eval_transfer_and_derivative(sys, s)[1]


def eval_Z(sys: DdaeSystem, s: complex) -> complex:
    """
    Evaluate the extremum function Z(s) = G'(s) G(-s) - G'(-s) G(s)

    Its imaginary axis zeros are the stationary points of |G(j omega)|.
    """
    g_plus, dg_plus = eval_transfer_and_derivative(sys, s)
    g_minus, dg_minus = eval_transfer_and_derivative(sys, -complex(s))
    return dg_plus * g_minus - dg_minus * g_plus


@dataclass(frozen=True)
class ZssRealization:
    """Descriptor realization Z(s) = C_z (s E_z - A_z(s))^{-1} B_z of size 6n"""
    E_z: np.ndarray
    a_z: Callable[[complex], np.ndarray]
    B_z: np.ndarray
    C_z: np.ndarray


def build_Zss(sys: DdaeSystem) -> ZssRealization:
    """
    Build the 6n-dimensional realization of Z

    E_z = blkdiag(-E, E, E, -E, E, E) and A_z(s) = blkdiag(Az(s), -Az(-s)) with

        Az(s) = [[A(-s), 0,    0         ],
                 [0,     A(s), A'(s) - E ],
                 [B C,   0,    A(s)      ]]

    The first half yields G'(s)G(-s), the negated second half -G'(-s)G(s).
    """
    n = sys.n
    E = sys.E
    BC = sys.B @ sys.C
    zero = np.zeros((n, n))

    def block(s: complex) -> np.ndarray:
        ahead = eval_pencil(sys, s)
        behind = eval_pencil(sys, -s)
        return np.block([
            [behind.value, zero, zero],
            [zero, ahead.value, ahead.derivative - E],
            [BC, zero, ahead.value],
        ])

    def a_z(s: complex) -> np.ndarray:
        s = complex(s)
        return scipy.linalg.block_diag(block(s), -block(-s))

    E_z = scipy.linalg.block_diag(-E, E, E, -E, E, E)
    B_z = np.vstack([sys.B, np.zeros((2 * n, 1)), sys.B, np.zeros((2 * n, 1))])
    C_z = np.hstack([np.zeros((1, n)), sys.C, np.zeros((1, 2 * n)), sys.C, np.zeros((1, n))])
    return ZssRealization(E_z=E_z, a_z=a_z, B_z=B_z, C_z=C_z)


def eval_Zss(z: ZssRealization, s: complex) -> complex:
    """Evaluate the realization built by build_Zss at s"""
    s = complex(s)
    solve = checked_solver(s * z.E_z - z.a_z(s), s)
    return complex((z.C_z @ solve(z.B_z.astype(complex)))[0, 0])


@dataclass(frozen=True)
class AsymptoticBlocks:
    """Projections U^T A_i V, C V and U^T B defining the asymptotic transfer function"""
    m0: np.ndarray
    mi: Tuple[np.ndarray, ...]
    cv: np.ndarray
    ub: np.ndarray

    @property
    def nu(self) -> int:
        return self.m0.shape[0]


def asymptotic_blocks(sys: DdaeSystem, bases: NullspaceBases) -> AsymptoticBlocks:
    """
    Project the system onto the nullspaces of E

    Raises:
        CausalityError: U^T A_0 V is singular
    """
    passes, rcond = check_causality(sys, bases)
    if not passes:
        logger.error(f"Causality check failed, rcond(U^T A_0 V) = {rcond:.3e}")
        raise CausalityError("U^T A_0 V is singular", rcond)
    U, V = bases.U, bases.V
    return AsymptoticBlocks(
        m0=U.T @ sys.A0 @ V,
        mi=tuple(U.T @ A @ V for A in sys.delay_matrices),
        cv=sys.C @ V,
        ub=U.T @ sys.B,
    )


def eval_Ga(sys: DdaeSystem, bases: NullspaceBases,
            arg: Union[complex, Sequence[float], np.ndarray]) -> complex:
    """
    Evaluate the asymptotic transfer function

    For a scalar arg = s this is -C V (U^T A_0 V + sum_i U^T A_i V exp(-s tau_i))^{-1} U^T B;
    for a vector arg = theta of length m, exp(j theta_i) replaces exp(-s tau_i).

    Args:
        sys: The system
        bases: Nullspace bases of sys.E
        arg: Complex frequency or delay angle vector

    Returns:
        G_a at the argument (exactly 0 when nu = 0)
    """
    if bases.nu == 0:
        return 0j
    blocks = asymptotic_blocks(sys, bases)
    if np.ndim(arg) == 0:
        s = complex(arg)
        weights = np.exp(-s * np.array(sys.delays))
    else:
        theta = np.asarray(arg, dtype=float)
        if theta.shape != (sys.m,):
            raise ValueError(f"expected {sys.m} delay angles, got shape {theta.shape}")
        weights = np.exp(1j * theta)
    return asymptotic_value(blocks, weights)


def asymptotic_value(blocks: AsymptoticBlocks, weights: np.ndarray) -> complex:
    """G_a for the given values of exp(-s tau_i) (or exp(j theta_i))"""
    M = blocks.m0.astype(complex)
    for weight, Mi in zip(weights, blocks.mi):
        M = M + weight * Mi
    sigma = scipy.linalg.svdvals(M)
    if sigma[0] == 0 or sigma[-1] / sigma[0] < config.POLE_RCOND_TOL:
        logger.error(f"Asymptotic pencil is singular at weights {weights}")
        raise AsymptoticSingularityError(
            "the asymptotic pencil is singular, the asymptotic norm is unbounded")
    return complex(-(blocks.cv @ np.linalg.solve(M, blocks.ub.astype(complex)))[0, 0])
