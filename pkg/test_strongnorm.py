import logging
import math
import os

import numpy as np
import pytest
import scipy.optimize

from errors import StabilityViolationError
from extrema import ExtremaOptions, run_extrema
from model import DdaeSystem, nullspace_bases
from strongnorm import (GridDimensionError, GridOptions, NormOptions, active_delay_indices, asymptotic_norm,
                        strong_hinf_norm)
from system_files import load_system
from transfer import eval_Ga, eval_transfer

# Configure logging
logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    level=logging.DEBUG
)
logger = logging.getLogger(__name__)

SYSTEMS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "systems")


def shipped(name: str) -> DdaeSystem:
    return load_system(os.path.join(SYSTEMS_DIR, name))


def algebraic_delays(delay_gains, a0: float = -1.0) -> DdaeSystem:
    """x1' = -x1 + x2, 0 = a0 x2 + sum_i g_i x2(t - i) + u, y = x2"""
    terms = [(0.0, [[-1.0, 1.0], [0.0, a0]])]
    terms += [(float(i), [[0.0, 0.0], [0.0, g]]) for i, g in enumerate(delay_gains, start=1)]
    return DdaeSystem(E=np.diag([1.0, 0.0]), terms=tuple(terms), B=[[0.0], [1.0]], C=[[0.0, 1.0]])


def angle_distance(a: float, b: float) -> float:
    return abs((a - b + np.pi) % (2.0 * np.pi) - np.pi)


def random_retarded_system(rng: np.random.Generator) -> DdaeSystem:
    """Stable for all delays: the logarithmic norm of A_0 plus sum ||A_i|| is -0.5"""
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, 3))
    R = rng.normal(size=(n, n))
    matrices = [0.5 * rng.normal(size=(n, n)) for _ in range(m)]
    alpha = np.linalg.eigvalsh((R + R.T) / 2.0)[-1] + sum(np.linalg.norm(A, 2) for A in matrices) + 0.5
    terms = [(0.0, R - alpha * np.eye(n))] + [(tau, A) for tau, A in zip(rng.uniform(0.1, 2.0, size=m), matrices)]
    return DdaeSystem(E=np.eye(n), terms=tuple(terms), B=rng.normal(size=(n, 1)), C=rng.normal(size=(1, n)))


def dense_sweep_peak(sys: DdaeSystem, omega_max: float = 20.0, points: int = 10 ** 5) -> float:
    """Brute-force max of |G(j w)|: vectorized sweep plus golden-section refinement"""

    def magnitudes(omegas: np.ndarray) -> np.ndarray:
        s = 1j * omegas[:, None, None]
        M = s * sys.E[None] - sys.A0[None]
        for tau, A in sys.terms[1:]:
            M = M - np.exp(-s * tau) * A[None]
        x = np.linalg.solve(M, np.broadcast_to(sys.B.astype(complex), (len(omegas),) + sys.B.shape))
        return np.abs((sys.C[None] @ x)[:, 0, 0])

    omegas = np.linspace(0.0, omega_max, points)
    values = np.concatenate([magnitudes(chunk) for chunk in np.array_split(omegas, 20)])
    k = int(np.argmax(values))
    low, high = omegas[max(k - 1, 0)], omegas[min(k + 1, points - 1)]
    result = scipy.optimize.minimize_scalar(lambda w: -magnitudes(np.array([w]))[0], bounds=(low, high),
                                            method="bounded", options={"xatol": 1e-12})
    return max(values[k], -result.fun)


def test_active_delay_indices():
    """Test which delays reach the algebraic part"""
    ode = shipped("one_delay.json")
    assert active_delay_indices(ode, nullspace_bases(ode)) == ()

    tsh = shipped("tsh.json")
    assert active_delay_indices(tsh, nullspace_bases(tsh)) == (1, 2)

    sys = DdaeSystem(E=np.diag([1.0, 0.0]),
                     terms=((0.0, -np.eye(2)), (1.0, [[0.0, 0.0], [0.0, 0.5]]), (2.0, [[-0.2, 0.0], [0.0, 0.0]])),
                     B=[[0.0], [1.0]], C=[[0.0, 1.0]])
    assert active_delay_indices(sys, nullspace_bases(sys)) == (1,)


def test_asymptotic_norm_tsh():
    """Test the T_a norm 4 at theta = (0, pi) and its invariance under grid doubling"""
    tsh = shipped("tsh.json")
    bases = nullspace_bases(tsh)
    value, theta = asymptotic_norm(tsh, bases)
    logger.info(f"Asymptotic norm {value} at {theta}")
    assert abs(value - 4.0) <= 1e-6, f"Expected 4, got {value}"
    assert angle_distance(theta[0], 0.0) < 1e-3 and angle_distance(theta[1], np.pi) < 1e-3, f"theta = {theta}"
    assert all(0.0 <= t < 2.0 * np.pi for t in theta)

    doubled, _ = asymptotic_norm(tsh, bases, GridOptions(density=256))
    assert abs(doubled - value) <= 1e-8, f"Grid doubling changed {value} to {doubled}"


def test_asymptotic_norm_single_delay():
    """Test max |1 / (1 + 0.5 exp(j theta))| = 2 at theta = pi"""
    sys = algebraic_delays([-0.5])
    value, theta = asymptotic_norm(sys, nullspace_bases(sys))
    assert value == pytest.approx(2.0, abs=1e-8)
    assert angle_distance(theta[0], np.pi) < 1e-3


def test_asymptotic_norm_without_algebraic_part():
    """Test that an ODE has a zero asymptotic norm"""
    sys = shipped("one_delay.json")
    assert asymptotic_norm(sys, nullspace_bases(sys)) == (0.0, ())


def test_asymptotic_norm_bounds_high_frequencies():
    """Test |G_a(j w)| <= asymptotic norm for large w on T_sh"""
    tsh = shipped("tsh.json")
    bases = nullspace_bases(tsh)
    value, _ = asymptotic_norm(tsh, bases)
    rng = np.random.default_rng(12)
    for omega in rng.uniform(1e3, 1e6, size=10):
        assert abs(eval_Ga(tsh, bases, 1j * omega)) <= value + 1e-8


def test_grid_dimension_limit():
    """Test the refusal above four active delays and the explicit override"""
    sys = algebraic_delays([0.05] * 5)
    bases = nullspace_bases(sys)
    with pytest.raises(GridDimensionError):
        asymptotic_norm(sys, bases)
    value, theta = asymptotic_norm(sys, bases, GridOptions(density=4, allow_high_dimension=True))
    assert len(theta) == 5
    assert value == pytest.approx(1.0 / 0.75, rel=1e-8), f"Expected 4/3, got {value}"


def test_strong_norm_first_order():
    """Test the strong norm of 1/(s+1)"""
    result = strong_hinf_norm(shipped("first_order.json"))
    assert result.strong_norm == pytest.approx(1.0, abs=1e-12)
    assert result.frequency == pytest.approx(0.0, abs=1e-8) and result.asymptotic_norm == 0.0


def test_strong_norm_tsh():
    """Test that the asymptotic norm 4 dominates the T_sh standard peak 2.5788"""
    result = strong_hinf_norm(shipped("tsh.json"))
    logger.info(f"T_sh: {result.strong_norm} (peak {result.standard_peak}, asymptotic {result.asymptotic_norm})")
    assert abs(result.strong_norm - 4.0) <= 1e-6
    assert math.isinf(result.frequency)
    assert abs(result.standard_peak - 2.5788) <= 1e-3
    assert result.active_delays == (1, 2)


def test_strong_norm_smith_predictor():
    """Test the Smith predictor norm 1.3308 at a finite frequency with a vanishing asymptotic part"""
    smith = shipped("smith.json")
    result = strong_hinf_norm(smith)
    logger.info(f"Smith predictor: {result.strong_norm} at omega = {result.frequency}")
    assert abs(result.strong_norm - 1.3308) <= 2e-3, f"Expected 1.3308, got {result.strong_norm}"
    assert math.isfinite(result.frequency) and result.frequency > 0
    assert result.asymptotic_norm < 1e-10
    assert result.theta_star == (), f"Vanishing G_a has no maximizing angles, got {result.theta_star}"

    report = run_extrema(smith)
    logger.info(f"Delta pencil size {report.delta_size}, nominal order {report.nominal_order}")
    assert report.delta_size < 2 * report.nominal_order
    if not report.axis_zeros:
        assert report.delta_size == 2 * (len(report.zpk.poles) + len(report.zpk.zeros)) + 1


def test_asymptotic_override():
    """Test that overriding the asymptotic norm composes with the standard peak monotonically"""
    tsh = shipped("tsh.json")
    low = strong_hinf_norm(tsh, NormOptions(asymptotic_override=0.0))
    assert low.strong_norm == pytest.approx(low.standard_peak) and math.isfinite(low.frequency)
    high = strong_hinf_norm(tsh, NormOptions(asymptotic_override=10.0))
    assert high.strong_norm == 10.0 and math.isinf(high.frequency)
    assert low.strong_norm <= high.strong_norm


def test_delay_perturbation_reaches_asymptotic_norm():
    """Test that moving tau_1 from 1 to 1.01 lifts |G(j w)| from the 2.5788 peak towards the asymptotic norm 4"""
    tsh = shipped("tsh.json")
    perturbed = shipped("tsh_perturbed.json")
    value, _ = asymptotic_norm(perturbed, nullspace_bases(perturbed))
    assert abs(value - 4.0) <= 1e-6, f"Delay perturbations keep the asymptotic norm, got {value}"

    # 2 w = 99 pi and 1.01 w is within 0.016 of 50 pi: the delay angles sit next to (0, pi)
    omega = 99.0 * np.pi / 2.0
    nominal = abs(eval_transfer(tsh, 1j * omega))
    shifted = abs(eval_transfer(perturbed, 1j * omega))
    logger.info(f"|G(j {omega:.4f})|: nominal {nominal}, perturbed {shifted}")
    assert nominal <= 2.5788 + 1e-3, f"Nominal magnitude {nominal} exceeds the standard peak"
    assert shifted > 3.9, f"Perturbed magnitude {shifted} should approach 4"

    sweep = max(abs(eval_transfer(perturbed, 1j * w)) for w in np.linspace(150.0, 160.0, 2001))
    assert 3.9 < sweep < 4.2, f"Perturbed sweep maximum {sweep}"


def test_undamped_oscillator_is_rejected():
    """Test that poles at +-j raise StabilityViolationError"""
    oscillator = DdaeSystem(E=np.eye(2), terms=((0.0, [[0.0, 1.0], [-1.0, 0.0]]),), B=[[0.0], [1.0]],
                            C=[[1.0, 0.0]])
    with pytest.raises(StabilityViolationError):
        strong_hinf_norm(oscillator)


def test_random_retarded_systems_match_dense_sweep():
    """Test the strong norm of stable retarded systems against a brute-force sweep"""
    rng = np.random.default_rng(2024)
    for index in range(20):
        sys = random_retarded_system(rng)
        result = strong_hinf_norm(sys, NormOptions(extrema=ExtremaOptions(workers=1)))
        expected = dense_sweep_peak(sys)
        error = abs(result.strong_norm - expected) / expected
        logger.info(f"System {index} (n = {sys.n}, m = {sys.m}): {result.strong_norm} vs {expected}")
        assert error <= 1e-4, f"System {index}: relative error {error:.3e}"
        assert result.asymptotic_norm == 0.0

        h = 1e-6 / (1.0 + sys.tau_max)
        for point in result.extrema:
            if not point.converged:
                continue
            slope = (abs(eval_transfer(sys, 1j * (point.omega + h)))
                     - abs(eval_transfer(sys, 1j * (point.omega - h)))) / (2.0 * h)
            assert abs(slope) <= 1e-6 * (1.0 + point.xi) * (1.0 + sys.tau_max), \
                f"System {index}: not stationary at omega = {point.omega}"


if __name__ == "__main__":
    test_active_delay_indices()
    test_asymptotic_norm_tsh()
    test_asymptotic_norm_single_delay()
    test_asymptotic_norm_without_algebraic_part()
    test_asymptotic_norm_bounds_high_frequencies()
    test_grid_dimension_limit()
    test_strong_norm_first_order()
    test_strong_norm_tsh()
    test_strong_norm_smith_predictor()
    test_asymptotic_override()
    test_delay_perturbation_reaches_asymptotic_norm()
    test_undamped_oscillator_is_rejected()
    test_random_retarded_systems_match_dense_sweep()
    logger.info("Strong norm tests passed!")
