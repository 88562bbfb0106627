"""
Linearized optomechanics: drift and noise matrices, steady states, transients and the closed-form mechanical block.

State ordering is (dq, dp, dX, dY): mechanical position and momentum, then cavity amplitude and phase quadratures.
"""
import logging
import math
from dataclasses import dataclass, fields, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import constants

from cslfisher.models.csl_model import thermal_occupation
from cslfisher.models.estimation import FisherResult

logger = logging.getLogger(__name__)

HBAR = constants.hbar
C_LIGHT = constants.c

RESIDUAL_TOL = 1e-10
REFINEMENT_ROUNDS = 2
STEP_TOL = 1e-10
DEGENERATE_TOL = 1e-300


@dataclass(frozen=True)
class SystemParams:
    """
    Physical inputs of the optomechanical model, all SI. Rates are angular (rad/s).
    """
    mass: float = 15e-12
    omega_m: float = 2 * math.pi * 2.75e5
    gamma_m: float = 2 * math.pi * 2.75e5 / 1e5
    kappa: float = 5e7
    delta: float = 5 * 5e7
    cavity_length: float = 0.025
    laser_power: float = 2e-3
    laser_wavelength: float = 1064e-9
    temperature: float = 1e-3
    r_c: float = 1e-7
    material_density: float = 2200.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise InvalidParameter(f.name, f'must be finite, got {value}')
            if f.name in ('delta', 'laser_power', 'temperature'):
                continue
            if value <= 0:
                raise InvalidParameter(f.name, f'must be strictly positive, got {value}')
        if self.laser_power < 0:
            raise InvalidParameter('laser_power', f'must be nonnegative, got {self.laser_power}')
        if self.temperature < 0:
            raise InvalidParameter('temperature', f'must be nonnegative, got {self.temperature}')

    def with_values(self, **kwargs) -> 'SystemParams':
        return replace(self, **kwargs)

    @property
    def n_bar(self) -> float:
        return thermal_occupation(self.omega_m, self.temperature)


@dataclass(frozen=True)
class MechCoefficients:
    """
    sigma_M(Lambda) = diag(alpha1 + beta1 * Lambda, alpha2 + beta2 * Lambda). beta values are in s.
    """
    alpha1: float
    beta1: float
    alpha2: float
    beta2: float
    denomA: float
    denomB: float

    def sigma_m(self, Lambda: float) -> np.ndarray:
        return np.diag([self.alpha1 + self.beta1 * Lambda, self.alpha2 + self.beta2 * Lambda])


class DriftNoisePair(NamedTuple):
    A: np.ndarray
    D: np.ndarray


class OpticalSpring(NamedTuple):
    frequency_shift: float
    optical_damping: float


def effective_coupling(p: SystemParams) -> float:
    """
    Effective optomechanical coupling chi in rad/s.

    Args:
        p: System parameters. The pump amplitude follows from the input power as sqrt(2 P kappa / (hbar omega_0)) with
           the laser frequency omega_0 = omega_c - delta.

    Returns:
        chi = sqrt(2) chi_0 E / sqrt(kappa^2 + delta^2).
    """
    omega_c = 2 * math.pi * C_LIGHT / p.laser_wavelength
    chi_0 = omega_c / p.cavity_length * math.sqrt(HBAR / (p.mass * p.omega_m))
    omega_0 = omega_c - p.delta
    if omega_0 <= 0:
        raise InvalidParameter('delta', f'detuning {p.delta} leaves no positive laser frequency')
    pump = math.sqrt(2 * p.laser_power * p.kappa / (HBAR * omega_0))
    return math.sqrt(2) * chi_0 * pump / math.sqrt(p.kappa ** 2 + p.delta ** 2)


def drift_matrix(p: SystemParams) -> np.ndarray:
    chi = effective_coupling(p)
    return np.array([
        [0.0, p.omega_m, 0.0, 0.0],
        [-p.omega_m, -p.gamma_m, chi, 0.0],
        [0.0, 0.0, -p.kappa, p.delta],
        [chi, 0.0, -p.delta, -p.kappa],
    ])


def noise_matrix(p: SystemParams, Lambda: float) -> np.ndarray:
    """
    diag(0, Gamma, kappa, kappa) with Gamma = gamma_m (2 n_bar + 1) + Lambda.
    """
    if Lambda < 0:
        raise InvalidParameter('Lambda', f'must be nonnegative, got {Lambda}')
    gamma_total = p.gamma_m * (2 * p.n_bar + 1) + Lambda
    return np.diag([0.0, gamma_total, p.kappa, p.kappa])


def drift_noise(p: SystemParams, Lambda: float) -> DriftNoisePair:
    return DriftNoisePair(drift_matrix(p), noise_matrix(p, Lambda))


def stability_check(A: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0))


def steady_state(A: np.ndarray, D: np.ndarray) -> np.ndarray:
    """
    Solves the Lyapunov equation A sigma + sigma A^T + D = 0.

    The equation is vectorized (row-major) into a 16x16 system and polished by iterative refinement with residuals
    accumulated in extended precision.

    Args:
        A: Drift matrix, all eigenvalues in the open left half plane.
        D: Symmetric noise matrix.

    Returns:
        Symmetrized steady-state covariance.
    """
    A = np.asarray(A, dtype=float)
    D = np.asarray(D, dtype=float)
    if not stability_check(A):
        raise UnstableDrift(f'Drift matrix has eigenvalues {np.linalg.eigvals(A)} outside the left half plane')
    n = A.shape[0]
    eye = np.eye(n)
    lyap = np.kron(A, eye) + np.kron(eye, A)
    rhs = -D.reshape(-1)

    x = np.linalg.solve(lyap, rhs).astype(np.longdouble)
    lyap_ext = lyap.astype(np.longdouble)
    rhs_ext = rhs.astype(np.longdouble)
    for _ in range(REFINEMENT_ROUNDS):
        residual = rhs_ext - lyap_ext @ x
        x = x + np.linalg.solve(lyap, residual.astype(float)).astype(np.longdouble)

    sigma = x.astype(float).reshape(n, n)
    sigma = (sigma + sigma.T) / 2
    d_norm = np.linalg.norm(D)
    residual = np.linalg.norm(A @ sigma + sigma @ A.T + D)
    if d_norm > 0 and residual > RESIDUAL_TOL * d_norm:
        logger.warning(f'Lyapunov residual {residual:.3g} exceeds tolerance relative to |D| = {d_norm:.3g}')
    return sigma


def steady_state_for(p: SystemParams, Lambda: float) -> np.ndarray:
    A, D = drift_noise(p, Lambda)
    return steady_state(A, D)


def dsigma_dLambda(p: SystemParams) -> np.ndarray:
    """
    Derivative of the steady state with respect to Lambda.

    The steady state is affine in Lambda, so the derivative is the Lyapunov solution driven by dD/dLambda alone.
    """
    return steady_state(drift_matrix(p), np.diag([0.0, 1.0, 0.0, 0.0]))


def blocks(sigma: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Splits a two-mode covariance into mechanical, optical and cross-correlation blocks.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (4, 4):
        raise ValueError(f'Expected a 4x4 covariance, got shape {sigma.shape}')
    sigma_m = sigma[:2, :2]
    sigma_m = (sigma_m + sigma_m.T) / 2
    return sigma_m, sigma[2:, 2:].copy(), sigma[:2, 2:].copy()


def propagate(sigma0: np.ndarray, A: np.ndarray, D: np.ndarray, t_final: float,
              dt_max: Optional[float] = None) -> np.ndarray:
    """
    Integrates d(sigma)/dt = A sigma + sigma A^T + D from 0 to t_final with the classical fourth-order Runge-Kutta
    scheme.

    On this linear system one step of size h is the affine map x -> x + G x + c. The step is halved from dt_max until
    the step-doubling error estimate of that map is below tolerance, and the resulting map is raised to the required
    number of steps by repeated squaring.

    Args:
        sigma0: Initial covariance.
        A: Drift matrix.
        D: Noise matrix.
        t_final: Integration time in s.
        dt_max: Largest step tried, defaults to 0.1 / max |diag(A)| (0.1 / kappa for the optomechanical drift).

    Returns:
        Symmetrized covariance at t_final.
    """
    sigma0 = np.asarray(sigma0, dtype=float)
    if t_final < 0:
        raise ValueError(f't_final must be nonnegative, got {t_final}')
    if t_final == 0:
        return sigma0.copy()

    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    eye = np.eye(n)
    lyap = np.kron(A, eye) + np.kron(eye, A)
    source = np.asarray(D, dtype=float).reshape(-1)
    if dt_max is None:
        fastest = np.abs(np.diag(A)).max()
        dt_max = 0.1 / fastest if fastest > 0 else t_final

    h = min(dt_max, t_final)
    while True:
        full = _rk4_map(lyap, source, h)
        half = _rk4_map(lyap, source, h / 2)
        double_half = _compose(half, half)
        scale = max(1.0, np.abs(double_half[0]).max(), np.abs(double_half[1]).max())
        err = max(np.abs(full[0] - double_half[0]).max(), np.abs(full[1] - double_half[1]).max()) / 15 / scale
        if err < STEP_TOL:
            break
        h /= 2
        if h < dt_max * 1e-12:
            raise StepUnderflow(f'Step size collapsed below {dt_max * 1e-12:.3g} s')

    steps = int(math.ceil(t_final / h))
    h = t_final / steps
    logger.debug(f'propagate: {steps} steps of {h:.3g} s, local error {err:.3g}')
    G, c = _power(_rk4_map(lyap, source, h), steps)

    x = sigma0.reshape(-1)
    sigma = (x + G @ x + c).reshape(n, n)
    return (sigma + sigma.T) / 2


def mech_coefficients(p: SystemParams) -> MechCoefficients:
    """
    Closed form of the mechanical steady-state block, sigma_M = diag(alpha1 + beta1 Lambda, alpha2 + beta2 Lambda).

    Eliminating the Lyapunov system leaves the q-X and q-Y correlations as the unknowns of a 2x2 linear system driven
    by the momentum variance, which is in turn fixed by the mechanical energy balance. Everything is evaluated with
    time measured in units of 1 / omega_m.

    Args:
        p: System parameters with a stable drift matrix.

    Returns:
        MechCoefficients. denomA is the determinant of the reduced system, denomB the effective mechanical damping
        (scaled by omega_m).
    """
    if not stability_check(drift_matrix(p)):
        raise UnstableDrift('mech_coefficients requires a stable drift matrix')
    w = p.omega_m
    gamma = p.gamma_m / w
    kappa = p.kappa / w
    delta = p.delta / w
    chi = effective_coupling(p) / w
    gamma_0 = gamma * (2 * p.n_bar + 1)

    k2 = kappa ** 2 + delta ** 2
    g = gamma + kappa
    p_ = delta * chi ** 2 / (2 * k2)
    q_ = kappa * chi ** 2 / (2 * k2)
    r_ = delta ** 2 * chi ** 2 / (2 * kappa * k2)

    m11 = g * (p_ - 1) + delta * q_ - (g ** 2 + delta ** 2) * kappa
    m12 = g * r_ + delta * (p_ - 1) + (g ** 2 + delta ** 2) * delta
    m21 = chi ** 2 - delta + q_ / g - delta * kappa / g
    m22 = -kappa + (p_ - 1) / g + delta ** 2 / g
    det = m11 * m22 - m12 * m21
    if abs(det) < DEGENERATE_TOL:
        raise DegenerateDenominator(f'Reduced system determinant {det} vanishes')

    def solve(rhs1, rhs2):
        c = (rhs1 * m22 - m12 * rhs2) / det
        d = (m11 * rhs2 - m21 * rhs1) / det
        return c, d, kappa * c - delta * d

    # Response per unit momentum variance, and the part driven by vacuum optical noise.
    c1, _, e1 = solve(0.0, -chi)
    c0, _, e0 = solve(g * (-chi / 2), 0.0)

    damping = gamma - chi * e1
    if abs(damping) < DEGENERATE_TOL:
        raise DegenerateDenominator(f'Effective damping {damping} vanishes')
    beta2 = 1 / (2 * damping)
    alpha2 = (gamma_0 + 2 * chi * e0) * beta2
    stiffness = 1 + chi * c1
    alpha1 = alpha2 * stiffness + chi * c0
    beta1 = beta2 * stiffness

    return MechCoefficients(alpha1=alpha1, beta1=beta1 / w, alpha2=alpha2, beta2=beta2 / w,
                            denomA=det, denomB=damping)


def optical_spring(p: SystemParams) -> OpticalSpring:
    """
    Cavity-induced shift of the mechanical frequency and extra mechanical damping, both in rad/s.
    """
    coeffs = mech_coefficients(p)
    # beta1 / beta2 is the ratio omega_m^2 / omega_eff^2 set by equipartition.
    omega_eff = p.omega_m * math.sqrt(coeffs.beta2 / coeffs.beta1)
    damping = coeffs.denomB * p.omega_m
    return OpticalSpring(frequency_shift=omega_eff - p.omega_m, optical_damping=damping - p.gamma_m)


def mech_qfi(p: SystemParams, Lambda: float) -> FisherResult:
    """
    Quantum Fisher information of the mechanical block with respect to Lambda.
    """
    c = mech_coefficients(p)
    a = c.alpha1 + c.beta1 * Lambda
    b = c.alpha2 + c.beta2 * Lambda
    numerator = 4 * (c.beta1 * c.beta2 + 2 * c.beta2 ** 2 * a ** 2 + 2 * c.beta1 ** 2 * b ** 2)
    return FisherResult(numerator / (16 * a ** 2 * b ** 2 - 1), 'Lambda')


def _rk4_map(lyap: np.ndarray, source: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    z = h * lyap
    eye = np.eye(lyap.shape[0])
    series = eye + z / 2 + z @ z / 6 + z @ z @ z / 24
    return z @ series, h * series @ source


def _compose(first: Tuple[np.ndarray, np.ndarray], second: Tuple[np.ndarray, np.ndarray]
             ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composes x -> x + G x + c maps, first applied first, without forming I + G.
    """
    g_a, c_a = first
    g_b, c_b = second
    return g_a + g_b + g_b @ g_a, c_a + c_b + g_b @ c_a


def _power(step: Tuple[np.ndarray, np.ndarray], count: int) -> Tuple[np.ndarray, np.ndarray]:
    size = step[0].shape[0]
    result = (np.zeros((size, size)), np.zeros(size))
    base = step
    while count:
        if count & 1:
            result = _compose(result, base)
        count >>= 1
        if count:
            base = _compose(base, base)
    return result


class InvalidParameter(Exception):
    """Raised when a physical parameter is outside its valid range"""

    def __init__(self, name, message):
        self.name = name
        self.reason = message
        self.message = f'{name}: {message}'
        super().__init__(self.message)


class UnstableDrift(Exception):
    pass


class StepUnderflow(Exception):
    pass


class DegenerateDenominator(Exception):
    pass
