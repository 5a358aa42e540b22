import logging
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import scipy.linalg

import config
from errors import ModelError

# Configure logging
logger = logging.getLogger(__name__)

Term = Tuple[float, np.ndarray]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _as_block(value, shape: Tuple[int, int], name: str) -> np.ndarray:
    """
    Coerce a nested list or array into a real matrix of the given shape

    Args:
        value: Row-major nested list, flat list or array
        shape: Expected (rows, cols)
        name: Block name used in the error message

    Returns:
        Read-only float matrix
    """
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise ModelError(f"block {name} is not numeric: {e}")
    if array.size != shape[0] * shape[1]:
        raise ModelError(f"block {name} has shape {array.shape}, expected {shape}")
    if array.ndim == 2 and array.shape != shape and 1 not in shape:
        raise ModelError(f"block {name} has shape {array.shape}, expected {shape}")
    if not np.all(np.isfinite(array)):
        raise ModelError(f"block {name} contains non-finite entries")
    return _frozen(array.reshape(shape))


@dataclass(frozen=True)
class DdaeSystem:
    """
    SISO delay differential algebraic system

        E x'(t) = A_0 x(t) + sum_i A_i x(t - tau_i) + B u(t),   y(t) = C x(t)

    Terms are normalized at construction: sorted by delay, delays equal to
    DELAY_MERGE_TOL merged by summing their matrices, and a tau = 0 term is
    always present.
    """
    E: np.ndarray
    terms: Tuple[Term, ...]
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.E, dtype=float)
        if E.ndim != 2 or E.shape[0] != E.shape[1] or E.shape[0] == 0:
            raise ModelError(f"E must be a nonempty square matrix, got shape {E.shape}")
        n = E.shape[0]
        object.__setattr__(self, "E", _as_block(E, (n, n), "E"))
        try:
            object.__setattr__(self, "B", _as_block(self.B, (n, 1), "B"))
            object.__setattr__(self, "C", _as_block(self.C, (1, n), "C"))
        except ModelError as e:
            raise ModelError(f"only SISO systems are supported: {e}")
        object.__setattr__(self, "terms", _normalize_terms(self.terms, n))

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        """Number of strictly positive delays"""
        return len(self.terms) - 1

    @property
    def A0(self) -> np.ndarray:
        return self.terms[0][1]

    @property
    def delays(self) -> Tuple[float, ...]:
        return tuple(tau for tau, _ in self.terms[1:])

    @property
    def delay_matrices(self) -> Tuple[np.ndarray, ...]:
        return tuple(A for _, A in self.terms[1:])

    @property
    def tau_max(self) -> float:
        return self.terms[-1][0]


def _normalize_terms(terms: Iterable, n: int) -> Tuple[Term, ...]:
    collected: List[Term] = []
    for index, term in enumerate(terms):
        try:
            tau, matrix = term
            tau = float(tau)
        except (TypeError, ValueError):
            raise ModelError(f"term {index} must be a (delay, matrix) pair")
        if not np.isfinite(tau) or tau < 0:
            raise ModelError(f"term {index} has invalid delay {tau}")
        collected.append((tau, np.asarray(_as_block(matrix, (n, n), f"A[{index}]"))))

    collected.sort(key=lambda t: t[0])
    merged: List[List] = [[0.0, np.zeros((n, n))]]
    for tau, matrix in collected:
        last_tau = merged[-1][0]
        if abs(tau - last_tau) <= config.DELAY_MERGE_TOL * max(1.0, tau):
            merged[-1][1] = merged[-1][1] + matrix
        else:
            merged.append([tau, matrix.copy()])
    return tuple((tau, _frozen(matrix)) for tau, matrix in merged)


@dataclass(frozen=True)
class NullspaceBases:
    """Orthonormal bases of the left (U) and right (V) nullspaces of E"""
    nu: int
    U: np.ndarray
    V: np.ndarray


def nullspace_bases(sys: DdaeSystem, rank_tol: float = config.RANK_TOL) -> NullspaceBases:
    """
    Compute the left and right nullspace bases of E from its SVD

    Args:
        sys: The system
        rank_tol: Relative singular value threshold

    Returns:
        NullspaceBases with nu = n - rank(E)
    """
    W, sigma, Vh = scipy.linalg.svd(sys.E)
    scale = sigma[0] if sigma[0] > 0 else 1.0
    nu = int(np.count_nonzero(sigma < rank_tol * scale))
    if nu == sys.n:
        logger.error("E is numerically zero, the system has no dynamics")
        raise ModelError("E must have rank at least one (0 <= nu < n)")
    U = W[:, sys.n - nu:]
    V = Vh[sys.n - nu:, :].T
    logger.debug(f"Nullspace dimension nu = {nu} for n = {sys.n}")
    return NullspaceBases(nu=nu, U=_frozen(U), V=_frozen(V))


def check_causality(sys: DdaeSystem, bases: NullspaceBases) -> Tuple[bool, float]:
    """
    Check that U^T A_0 V is nonsingular

    Args:
        sys: The system
        bases: Nullspace bases of sys.E

    Returns:
        (passes, reciprocal condition number of U^T A_0 V)
    """
    if bases.nu == 0:
        return True, 1.0
    sigma = scipy.linalg.svdvals(bases.U.T @ sys.A0 @ bases.V)
    rcond = float(sigma[-1] / sigma[0]) if sigma[0] > 0 else 0.0
    passes = rcond > config.CAUSALITY_RCOND_TOL
    if not passes:
        logger.warning(f"U^T A_0 V is singular (rcond = {rcond:.3e})")
    return passes, rcond


@dataclass(frozen=True)
class LftDelaySystem:
    """
    Delay-free descriptor block in feedback with pure delay channels

        F x' = A x + B1 u + B2 w,  y = C1 x + D11 u + D12 w,
        z = C2 x + D21 u + D22 w,  w_i(t) = z_i(t - internal_delays[i])

    with an optional input delay on u and output delay on y.
    """
    F: np.ndarray
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    D22: np.ndarray
    internal_delays: Tuple[float, ...] = ()
    input_delays: Tuple[float, ...] = ()
    output_delays: Tuple[float, ...] = ()

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        n_x = A.shape[0] if A.size else 0
        k = len(self.internal_delays)
        shapes = {
            "F": (n_x, n_x), "A": (n_x, n_x), "B1": (n_x, 1), "B2": (n_x, k),
            "C1": (1, n_x), "C2": (k, n_x), "D11": (1, 1), "D12": (1, k),
            "D21": (k, 1), "D22": (k, k),
        }
        for name, shape in shapes.items():
            object.__setattr__(self, name, _as_block(getattr(self, name), shape, name))

        internal = tuple(float(tau) for tau in self.internal_delays)
        if any(not np.isfinite(tau) or tau <= 0 for tau in internal):
            raise ModelError(f"internal delays must be positive, got {internal}")
        object.__setattr__(self, "internal_delays", internal)
        for name in ("input_delays", "output_delays"):
            delays = tuple(float(tau) for tau in getattr(self, name))
            if len(delays) > 1:
                raise ModelError(f"{name} must hold at most one (SISO) channel, got {len(delays)}")
            if any(not np.isfinite(tau) or tau < 0 for tau in delays):
                raise ModelError(f"{name} must be nonnegative, got {delays}")
            object.__setattr__(self, name, delays)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    def transfer(self, s: complex) -> complex:
        """
        Evaluate the transfer function by closing the delay loop directly

        Args:
            s: Complex frequency

        Returns:
            y/u at s
        """
        s = complex(s)
        k = len(self.internal_delays)
        if self.n_x:
            R = np.linalg.solve(s * self.F - self.A, np.hstack([self.B1, self.B2]).astype(complex))
            R1, R2 = R[:, :1], R[:, 1:]
        else:
            R1, R2 = np.zeros((0, 1)), np.zeros((0, k))
        H11 = self.C1 @ R1 + self.D11
        H12 = self.C1 @ R2 + self.D12
        H21 = self.C2 @ R1 + self.D21
        H22 = self.C2 @ R2 + self.D22
        y = H11[0, 0]
        if k:
            Lam = np.diag(np.exp(-s * np.array(self.internal_delays)))
            z = np.linalg.solve(np.eye(k) - H22 @ Lam, H21)
            y += (H12 @ Lam @ z)[0, 0]
        external = sum(self.input_delays) + sum(self.output_delays)
        return complex(y * np.exp(-s * external))


def _absorb_io_delays(sys: LftDelaySystem) -> LftDelaySystem:
    """Turn input and output delays into extra internal delay channels"""
    F, A, B1, B2 = sys.F, sys.A, sys.B1, sys.B2
    C1, C2, D11, D12, D21, D22 = sys.C1, sys.C2, sys.D11, sys.D12, sys.D21, sys.D22
    internal = list(sys.internal_delays)
    n_x = sys.n_x

    for tau in sys.input_delays:
        if tau == 0:
            continue
        # z_new = u, and every former use of u reads w_new = u(t - tau)
        k = len(internal)
        B2 = np.hstack([B2, B1])
        D12 = np.hstack([D12, D11])
        D22 = np.block([[D22, D21], [np.zeros((1, k)), np.zeros((1, 1))]])
        C2 = np.vstack([C2, np.zeros((1, n_x))])
        D21 = np.vstack([np.zeros((k, 1)), np.ones((1, 1))])
        B1 = np.zeros((n_x, 1))
        D11 = np.zeros((1, 1))
        internal.append(tau)

    for tau in sys.output_delays:
        if tau == 0:
            continue
        # z_new = y, and the output becomes w_new = y(t - tau)
        k = len(internal)
        C2 = np.vstack([C2, C1])
        D21 = np.vstack([D21, D11])
        D22 = np.block([[D22, np.zeros((k, 1))], [D12, np.zeros((1, 1))]])
        B2 = np.hstack([B2, np.zeros((n_x, 1))])
        C1 = np.zeros((1, n_x))
        D11 = np.zeros((1, 1))
        D12 = np.hstack([np.zeros((1, k)), np.ones((1, 1))])
        internal.append(tau)

    return LftDelaySystem(F=F, A=A, B1=B1, B2=B2, C1=C1, C2=C2, D11=D11, D12=D12,
                          D21=D21, D22=D22, internal_delays=tuple(internal))


def lft_to_ddae(sys: LftDelaySystem) -> DdaeSystem:
    """
    Rewrite an LFT delay system in the DDAE standard form

    The state is augmented to [x; gamma_u; w; z]; input and output delays are
    first turned into internal channels.

    Args:
        sys: LFT delay system

    Returns:
        Equivalent DdaeSystem of dimension n_x + 1 + 2k
    """
    lft = _absorb_io_delays(sys)
    n_x = lft.n_x
    k = len(lft.internal_delays)
    n = n_x + 1 + 2 * k
    # column offsets of x, gamma_u, w, z
    cx, cg, cw, cz = 0, n_x, n_x + 1, n_x + 1 + k
    # row offsets of the x, z-definition, w-definition and gamma_u equations
    rx, rz, rw, rg = 0, n_x, n_x + k, n_x + 2 * k

    E = np.zeros((n, n))
    E[:n_x, :n_x] = lft.F

    A0 = np.zeros((n, n))
    A0[rx:rz, cx:cg] = lft.A
    A0[rx:rz, cg:cw] = lft.B1
    A0[rx:rz, cw:cz] = lft.B2
    A0[rz:rw, cx:cg] = lft.C2
    A0[rz:rw, cg:cw] = lft.D21
    A0[rz:rw, cw:cz] = lft.D22
    A0[rz:rw, cz:] = -np.eye(k)
    A0[rw:rg, cw:cz] = -np.eye(k)
    A0[rg, cg] = -1.0

    terms: List[Term] = [(0.0, A0)]
    for i, tau in enumerate(lft.internal_delays):
        Ai = np.zeros((n, n))
        Ai[rw + i, cz + i] = 1.0
        terms.append((tau, Ai))

    B = np.zeros((n, 1))
    B[rg, 0] = 1.0
    C = np.zeros((1, n))
    C[0, cx:cg] = lft.C1.ravel()
    C[0, cg] = lft.D11[0, 0]
    C[0, cw:cz] = lft.D12.ravel()
    logger.debug(f"LFT with n_x = {n_x} and {k} delay channels mapped to a DDAE of dimension {n}")
    return DdaeSystem(E=E, terms=tuple(terms), B=B, C=C)


def _place(size: int, blocks: Sequence[Tuple[int, int, np.ndarray]]) -> np.ndarray:
    matrix = np.zeros((size, size))
    for row, col, block in blocks:
        matrix[row:row + block.shape[0], col:col + block.shape[1]] += block
    return matrix


def _stacked_terms(g1: DdaeSystem, g2: DdaeSystem, size: int, offset2: int) -> List[Term]:
    """Block-diagonal delay terms of g1 and g2; equal delays merge on construction"""
    terms = [(tau, _place(size, [(0, 0, A)])) for tau, A in g1.terms]
    terms += [(tau, _place(size, [(offset2, offset2, A)])) for tau, A in g2.terms]
    return terms


def series(g1: DdaeSystem, g2: DdaeSystem) -> DdaeSystem:
    """Series connection u -> g1 -> g2 -> y, transfer G2 * G1"""
    n1, n2 = g1.n, g2.n
    n = n1 + n2
    E = scipy.linalg.block_diag(g1.E, g2.E)
    terms = _stacked_terms(g1, g2, n, n1)
    terms.append((0.0, _place(n, [(n1, 0, g2.B @ g1.C)])))
    B = np.vstack([g1.B, np.zeros((n2, 1))])
    C = np.hstack([np.zeros((1, n1)), g2.C])
    return DdaeSystem(E=E, terms=tuple(terms), B=B, C=C)


def parallel(g1: DdaeSystem, g2: DdaeSystem) -> DdaeSystem:
    """Parallel connection, transfer G1 + G2"""
    n = g1.n + g2.n
    E = scipy.linalg.block_diag(g1.E, g2.E)
    terms = _stacked_terms(g1, g2, n, g1.n)
    B = np.vstack([g1.B, g2.B])
    C = np.hstack([g1.C, g2.C])
    return DdaeSystem(E=E, terms=tuple(terms), B=B, C=C)


def feedback(g1: DdaeSystem, g2: DdaeSystem, sign: int = -1) -> DdaeSystem:
    """
    Feedback connection with g1 in the forward path and g2 in the loop

    The loop signal e = u + sign * y2 is an extra algebraic variable, so
    sign = -1 gives G1 / (1 + G2 G1) without inverting anything.

    Args:
        g1: Forward path
        g2: Feedback path
        sign: -1 for negative feedback, +1 for positive

    Returns:
        Closed-loop DdaeSystem of dimension n1 + n2 + 1
    """
    if sign not in (-1, 1):
        raise ModelError(f"feedback sign must be -1 or +1, got {sign}")
    n1, n2 = g1.n, g2.n
    n = n1 + n2 + 1
    E = scipy.linalg.block_diag(g1.E, g2.E, np.zeros((1, 1)))
    terms = _stacked_terms(g1, g2, n, n1)
    terms.append((0.0, _place(n, [
        (0, n1 + n2, g1.B),
        (n1, 0, g2.B @ g1.C),
        (n1 + n2, n1, sign * g2.C),
        (n1 + n2, n1 + n2, -np.ones((1, 1))),
    ])))
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = np.hstack([g1.C, np.zeros((1, n2 + 1))])
    return DdaeSystem(E=E, terms=tuple(terms), B=B, C=C)


def negate(g: DdaeSystem) -> DdaeSystem:
    """The system with transfer -G"""
    return DdaeSystem(E=g.E, terms=g.terms, B=g.B, C=-g.C)
