import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import psutil
import scipy.linalg
import scipy.optimize

import config
from discretize import DescriptorRealization, ZpkForm, reject_axis_poles, solve_gevp, spectral_discretize, to_zpk
from errors import CausalityError, PoleProximityError
from model import DdaeSystem, check_causality, nullspace_bases
from transfer import eval_pencil, eval_transfer, eval_Z

# Configure logging
logger = logging.getLogger(__name__)

MAXIMUM = "maximum"
MINIMUM = "minimum"
UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class ExtremaOptions:
    """Settings of the predictor-corrector extremum computation"""
    N: int = config.DEFAULT_N
    axis_tol: float = config.AXIS_TOL
    # Gauss-Newton stops once the residual is below corrector_tol * (1 + xi)
    corrector_tol: float = config.CORRECTOR_TOL
    max_iter: int = config.MAX_ITERATIONS
    max_halvings: int = config.MAX_STEP_HALVINGS
    rank_tol: float = config.RANK_TOL
    workers: int = config.CORRECTION_WORKERS
    compact_history: bool = config.COMPACT_HISTORY


@dataclass(frozen=True)
class ExtremumPoint:
    """A corrected stationary point of |G(j omega)|"""
    omega: float
    xi: float
    kind: str
    predictor_omega: float
    predictor_xi: float
    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class CorrectorState:
    """Unknowns (omega, xi, u, v) of the correction equations and the frozen normalization q"""
    omega: float
    xi: float
    u: np.ndarray
    v: np.ndarray
    q: np.ndarray

    @property
    def zeta(self) -> np.ndarray:
        return np.concatenate([self.u, self.v])

    def to_vector(self) -> np.ndarray:
        zeta = self.zeta
        return np.concatenate([[self.omega, self.xi], zeta.real, zeta.imag])

    def from_vector(self, x: np.ndarray) -> "CorrectorState":
        size = (len(x) - 2) // 2
        zeta = x[2:2 + size] + 1j * x[2 + size:]
        n = size // 2
        return CorrectorState(omega=float(x[0]), xi=float(x[1]), u=zeta[:n], v=zeta[n:], q=self.q)


@dataclass(frozen=True)
class ExtremaReport:
    """Extremum computation output together with its intermediate data"""
    extrema: Tuple[ExtremumPoint, ...]
    predicted: Tuple[Tuple[float, float], ...]
    axis_zeros: Tuple[float, ...]
    zpk: ZpkForm
    order: int
    nominal_order: int
    delta_size: int


def build_delta(zpk: ZpkForm) -> DescriptorRealization:
    """
    Diagonal realization of the extremum function of G_N

        Delta(s) = sum_i (1/(s + conj(z_i)) + 1/(s - z_i)) - sum_k (1/(s + conj(p_k)) + 1/(s - p_k))

    Zeros on the imaginary axis are left out (see axis_zero_frequencies).

    Raises:
        StabilityViolationError: a pole lies on the imaginary axis
    """
    poles = np.asarray(zpk.poles, dtype=complex)
    reject_axis_poles(poles)
    zeros = np.asarray(zpk.zeros, dtype=complex)
    zeros = zeros[~_near_axis(zeros)]

    diagonal = np.concatenate([-zeros.conj(), zeros, -poles.conj(), poles])
    signs = np.concatenate([np.ones(2 * len(zeros)), -np.ones(2 * len(poles))])
    size = len(diagonal)
    return DescriptorRealization(
        E=np.eye(size),
        A=np.diag(diagonal),
        B=np.ones((size, 1)),
        C=signs.reshape(1, -1),
    )


def _near_axis(zeros: np.ndarray) -> np.ndarray:
    return np.abs(zeros.real) <= config.AXIS_ZERO_TOL * np.maximum(1.0, np.abs(zeros))


def axis_zero_frequencies(zpk: ZpkForm) -> List[float]:
    """Frequencies of the zeros of G_N on the imaginary axis (direct minimum candidates)"""
    zeros = np.asarray(zpk.zeros, dtype=complex)
    return _dedup(np.abs(zeros[_near_axis(zeros)].imag), config.PREDICTION_DEDUP_TOL)


def _dedup(values: Sequence[float], tol: float) -> List[float]:
    kept: List[float] = []
    for value in sorted(float(v) for v in values):
        if not kept or value - kept[-1] > tol * max(1.0, value):
            kept.append(value)
    return kept


def predict_frequencies(delta: DescriptorRealization, axis_tol: float = config.AXIS_TOL) -> List[float]:
    """
    Imaginary axis zeros of Delta from its (size + 1) system pencil

    Args:
        delta: Realization from build_delta
        axis_tol: Eigenvalues with |Re| <= axis_tol * (1 + |lambda|) count as imaginary

    Returns:
        Sorted predicted frequencies, always including 0
    """
    size = delta.order
    pencil = np.block([[delta.A, delta.B], [delta.C, np.zeros((1, 1))]])
    weight = scipy.linalg.block_diag(np.eye(size), np.zeros((1, 1)))
    eigenvalues = solve_gevp(pencil, weight)
    on_axis = np.abs(eigenvalues.real) <= axis_tol * (1.0 + np.abs(eigenvalues))
    frequencies = _dedup(np.concatenate([[0.0], np.abs(eigenvalues[on_axis].imag)]),
                         config.PREDICTION_DEDUP_TOL)
    logger.info(f"Delta pencil of size {size + 1}: {len(eigenvalues)} finite eigenvalues, "
                f"{len(frequencies)} predicted frequencies")
    return frequencies


def build_H(sys: DdaeSystem, omega: float, xi: float) -> np.ndarray:
    """
    Matrix whose singularity characterizes xi as a singular value of G(j omega)

        H = [[j w E - A(j w),   -B B^T / xi              ],
             [C^T C / xi,       j w E^T + A(-j w)^T      ]]
    """
    s = 1j * omega
    ahead = eval_pencil(sys, s).value
    behind = eval_pencil(sys, -s).value
    return np.block([
        [s * sys.E - ahead, -(sys.B @ sys.B.T) / xi],
        [(sys.C.T @ sys.C) / xi, s * sys.E.T + behind.T],
    ])


def corrector_residual(sys: DdaeSystem, st: CorrectorState) -> np.ndarray:
    """
    Residual of the correction equations, 4n + 3 real entries

    Stacks Re/Im of H(j omega, xi)[u; v], Im{v^* (E - A'(j omega)) u} and
    Re/Im of q^* [u; v] - 1.
    """
    r = build_H(sys, st.omega, st.xi) @ st.zeta
    K = sys.E - eval_pencil(sys, 1j * st.omega).derivative
    stationarity = np.vdot(st.v, K @ st.u).imag
    normalization = np.vdot(st.q, st.zeta) - 1.0
    return np.concatenate([r.real, r.imag, [stationarity, normalization.real, normalization.imag]])


def _jacobian(sys: DdaeSystem, st: CorrectorState) -> np.ndarray:
    """Analytic Jacobian of corrector_residual in (omega, xi, Re zeta, Im zeta)"""
    s = 1j * st.omega
    ahead = eval_pencil(sys, s, order=2)
    behind = eval_pencil(sys, -s)
    K = sys.E - ahead.derivative
    K_behind = sys.E - behind.derivative
    H = build_H(sys, st.omega, st.xi)

    d_omega = 1j * np.concatenate([K @ st.u, K_behind.T @ st.v])
    d_xi = np.concatenate([(sys.B @ (sys.B.T @ st.v)) / st.xi ** 2,
                           -(sys.C.T @ (sys.C @ st.u)) / st.xi ** 2])
    complex_block = np.column_stack([d_omega, d_xi, H, 1j * H])

    vK = st.v.conj() @ K
    Ku = K @ st.u
    dK = -1j * ahead.second
    stationarity = np.concatenate([
        [np.vdot(st.v, dK @ st.u).imag, 0.0],
        vK.imag, Ku.imag,
        vK.real, -Ku.real,
    ])
    q_row = st.q.conj()
    normalization = np.concatenate([[0.0, 0.0], q_row, 1j * q_row])

    # (4n + 3) x (4n + 2)
    return np.vstack([
        complex_block.real,
        complex_block.imag,
        stationarity,
        normalization.real,
        normalization.imag,
    ])


def classify_extremum(sys: DdaeSystem, omega: float, xi: float) -> str:
    """Maximum or minimum from the sign of the second difference of |G(j omega)|"""
    h = config.CLASSIFY_STEP * (1.0 + omega)
    try:
        upper = abs(eval_transfer(sys, 1j * (omega + h)))
        lower = abs(eval_transfer(sys, 1j * (omega - h)))
    except PoleProximityError:
        return UNDETERMINED
    curvature = upper - 2.0 * xi + lower
    if abs(curvature) <= 1e3 * np.finfo(float).eps * (1.0 + xi):
        return UNDETERMINED
    return MAXIMUM if curvature < 0 else MINIMUM


def _finish(sys: DdaeSystem, omega: float, xi_corrector: float, omega0: float, xi0: float,
            iterations: int, residual: float, converged: bool) -> ExtremumPoint:
    omega = abs(omega)
    try:
        xi = abs(eval_transfer(sys, 1j * omega))
    except PoleProximityError:
        return ExtremumPoint(omega=omega, xi=float("inf"), kind=UNDETERMINED, predictor_omega=omega0,
                             predictor_xi=xi0, iterations=iterations, residual=residual, converged=False)
    if abs(xi_corrector - xi) > config.XI_CONSISTENCY_TOL * (1.0 + xi):
        converged = False
    return ExtremumPoint(omega=omega, xi=xi, kind=classify_extremum(sys, omega, xi),
                         predictor_omega=omega0, predictor_xi=xi0, iterations=iterations,
                         residual=residual, converged=converged)


def gauss_newton_correct(sys: DdaeSystem, omega0: float, xi0: float,
                         opts: ExtremaOptions = ExtremaOptions()) -> ExtremumPoint:
    """
    Correct a predicted extremum with damped Gauss-Newton on the correction equations

    Args:
        sys: The system
        omega0: Predicted frequency
        xi0: |G(j omega0)|
        opts: Corrector settings

    Returns:
        ExtremumPoint (converged = False when the iteration diverges or stalls)
    """
    if xi0 < config.ZERO_MAGNITUDE_TOL:
        return ExtremumPoint(omega=abs(omega0), xi=xi0, kind=MINIMUM, predictor_omega=omega0,
                             predictor_xi=xi0, iterations=0, residual=0.0, converged=True)

    _, _, Vh = scipy.linalg.svd(build_H(sys, omega0, xi0))
    zeta = Vh[-1].conj()
    n = sys.n
    state = CorrectorState(omega=omega0, xi=xi0, u=zeta[:n], v=zeta[n:], q=zeta.copy())
    x = state.to_vector()
    r = corrector_residual(sys, state)
    norm = np.linalg.norm(r)
    iterations = 0

    while iterations < opts.max_iter and norm > opts.corrector_tol * (1.0 + state.xi):
        J = _jacobian(sys, state)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        accepted = False
        for _ in range(opts.max_halvings + 1):
            trial = x + t * step
            if trial[1] > 0:
                trial_state = state.from_vector(trial)
                trial_r = corrector_residual(sys, trial_state)
                trial_norm = np.linalg.norm(trial_r)
                if trial_norm < norm:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            logger.debug(f"Gauss-Newton stalled at omega = {state.omega:.6g}, residual {norm:.3e}")
            break
        x, state, r, norm = trial, trial_state, trial_r, trial_norm
        iterations += 1
        logger.debug(f"Gauss-Newton iteration {iterations}: omega = {state.omega:.12g}, "
                     f"xi = {state.xi:.12g}, residual {norm:.3e}, step {t}")

    converged = bool(norm <= opts.corrector_tol * (1.0 + state.xi))
    if not converged:
        logger.warning(f"Correction from omega = {omega0:.6g} did not converge (residual {norm:.3e})")
    return _finish(sys, state.omega, state.xi, omega0, xi0, iterations, float(norm), converged)


def newton_correct(sys: DdaeSystem, omega0: float, tol: float = 1e-12,
                   max_iter: int = config.MAX_ITERATIONS) -> ExtremumPoint:
    """
    Fallback corrector: secant Newton on Im Z(j omega) = 0

    Equivalent to gauss_newton_correct at the root for SISO systems; kept to
    cross-check the correction equations.
    """
    xi0 = abs(eval_transfer(sys, 1j * omega0))

    def stationarity(omega: float) -> float:
        return eval_Z(sys, 1j * omega).imag

    omega, result = scipy.optimize.newton(stationarity, omega0, tol=tol, maxiter=max_iter,
                                          full_output=True, disp=False)
    residual = abs(stationarity(omega))
    xi = abs(eval_transfer(sys, 1j * omega))
    return _finish(sys, float(omega), xi, omega0, xi0, int(result.iterations), float(residual),
                   bool(result.converged))


def _worker_count(opts: ExtremaOptions, tasks: int) -> int:
    workers = opts.workers if opts.workers > 0 else (psutil.cpu_count(logical=False) or 1)
    return max(1, min(workers, tasks))


def _merge_extrema(points: Sequence[ExtremumPoint]) -> List[ExtremumPoint]:
    """Merge points whose frequencies agree to EXTREMA_DEDUP_TOL, keeping the smaller residual"""
    merged: List[ExtremumPoint] = []
    for point in sorted(points, key=lambda p: (p.omega, p.residual)):
        if merged and point.omega - merged[-1].omega <= config.EXTREMA_DEDUP_TOL * max(1.0, point.omega):
            if point.residual < merged[-1].residual:
                merged[-1] = point
            continue
        merged.append(point)
    return merged


def run_extrema(sys: DdaeSystem, opts: ExtremaOptions = ExtremaOptions()) -> ExtremaReport:
    """
    Compute all extrema of |G(j omega)| by prediction and correction

    Args:
        sys: The system
        opts: Settings

    Returns:
        ExtremaReport with the corrected extrema sorted by frequency

    Raises:
        CausalityError: U^T A_0 V is singular
        StabilityViolationError: G_N has poles on the imaginary axis
    """
    bases = nullspace_bases(sys, opts.rank_tol)
    passes, rcond = check_causality(sys, bases)
    if not passes:
        logger.error(f"Causality check failed, rcond(U^T A_0 V) = {rcond:.3e}")
        raise CausalityError("U^T A_0 V is singular", rcond)

    realization = spectral_discretize(sys, opts.N, compact=opts.compact_history)
    zpk = to_zpk(realization)
    delta = build_delta(zpk)
    axis_zeros = axis_zero_frequencies(zpk)
    frequencies = _dedup(predict_frequencies(delta, opts.axis_tol) + axis_zeros,
                         config.PREDICTION_DEDUP_TOL)

    predicted: List[Tuple[float, float]] = []
    for omega in frequencies:
        try:
            predicted.append((omega, abs(eval_transfer(sys, 1j * omega))))
        except PoleProximityError as e:
            logger.warning(f"Skipping predicted frequency {omega:.6g}: {e}")

    workers = _worker_count(opts, len(predicted))
    logger.info(f"Correcting {len(predicted)} candidates with {workers} workers")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(lambda c: gauss_newton_correct(sys, c[0], c[1], opts), predicted))
    else:
        points = [gauss_newton_correct(sys, omega, xi, opts) for omega, xi in predicted]

    extrema = tuple(_merge_extrema(points))
    logger.info(f"Found {sum(p.converged for p in extrema)} converged extrema "
                f"out of {len(extrema)} corrected candidates")
    return ExtremaReport(
        extrema=extrema,
        predicted=tuple(predicted),
        axis_zeros=tuple(axis_zeros),
        zpk=zpk,
        order=realization.order,
        nominal_order=sys.n * (opts.N + 1) if sys.m else sys.n,
        delta_size=delta.order + 1,
    )


def compute_extrema(sys: DdaeSystem, opts: ExtremaOptions = ExtremaOptions()) -> List[ExtremumPoint]:
    """All extrema of |G(j omega)| sorted by frequency (see run_extrema)"""
    return list(run_extrema(sys, opts).extrema)
