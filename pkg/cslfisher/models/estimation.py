"""
Fisher information for Gaussian measurements and quantum Fisher information of Gaussian state families.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from cslfisher.models.symplectic_core import GaussianState, symplectic_form, williamson

logger = logging.getLogger(__name__)

# Squeezing parameter value standing for the l -> 0 homodyne limit.
HOMODYNE = 0.0
HETERODYNE = 1.0

MIXEDNESS_TOL = 1e-12
RICHARDSON_TOL = 1e-4
EPS = np.finfo(float).eps


@dataclass(frozen=True)
class FisherResult:
    value: float
    parameter: str = 'Lambda'

    def __post_init__(self):
        # Round-off can push a vanishing information slightly below zero.
        object.__setattr__(self, 'value', max(float(self.value), 0.0))


@dataclass(frozen=True)
class MeasurementSpec:
    """
    General-dyne Gaussian measurement.

    Args:
        l: Squeezing of the measurement seed, 1 for heterodyne, HOMODYNE (0) for the homodyne limit.
        theta: Rotation angle in radians, reduced to [0, pi).
    """
    l: float = HETERODYNE
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.l) and self.l >= 0):
            raise ValueError(f'Measurement squeezing l must be finite and nonnegative, got {self.l}')
        object.__setattr__(self, 'theta', float(self.theta) % math.pi)

    @property
    def is_homodyne(self) -> bool:
        return self.l == HOMODYNE

    @property
    def is_heterodyne(self) -> bool:
        return self.l == HETERODYNE

    @property
    def label(self) -> str:
        if self.is_homodyne:
            return f'homodyne(theta={self.theta:.6g})'
        if self.is_heterodyne:
            return 'heterodyne'
        return f'general(l={self.l:.6g}, theta={self.theta:.6g})'


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def gaussian_meas_cov(spec: MeasurementSpec) -> np.ndarray:
    """
    Covariance R diag(l/2, 1/(2l)) R^T of the measurement seed.
    """
    if spec.is_homodyne:
        raise HomodyneNotFinite('Homodyne has no finite seed covariance; use the homodyne path of fisher_gaussian')
    R = rotation(spec.theta)
    return R @ np.diag([spec.l / 2, 1 / (2 * spec.l)]) @ R.T


def fisher_gaussian(sigma: np.ndarray, dsigma: np.ndarray, spec: MeasurementSpec) -> FisherResult:
    """
    Fisher information of a zero-mean single-mode Gaussian state probed by a Gaussian measurement.

    Args:
        sigma: 2x2 covariance of the state.
        dsigma: Derivative of sigma with respect to the parameter.
        spec: The measurement.

    Returns:
        FisherResult. For a finite l this is 1/2 tr[(sigma_p^-1 dsigma)^2] with sigma_p = sigma + sigma_meas; for
        homodyne it is the information of the variance of the measured quadrature.
    """
    sigma = np.asarray(sigma, dtype=float)
    dsigma = np.asarray(dsigma, dtype=float)
    if spec.is_homodyne:
        R = rotation(spec.theta)
        v = (R.T @ sigma @ R)[0, 0]
        dv = (R.T @ dsigma @ R)[0, 0]
        if not v > 0:
            raise SingularMeasCov(f'Measured quadrature variance {v} is not positive')
        return FisherResult(dv ** 2 / (2 * v ** 2))

    sigma_p = sigma + gaussian_meas_cov(spec)
    try:
        chol = cholesky(sigma_p, lower=True)
    except LinAlgError:
        raise SingularMeasCov('Outcome covariance is not positive definite')
    half = solve_triangular(chol, dsigma, lower=True)
    whitened = solve_triangular(chol, half.T, lower=True)
    return FisherResult(0.5 * float(np.sum(whitened ** 2)))


def fisher_gaussian_grid(sigma: np.ndarray, dsigma: np.ndarray, l_values: Sequence[float],
                         theta_values: Sequence[float]) -> np.ndarray:
    """
    Vectorized fisher_gaussian over a grid of measurements.

    Args:
        sigma: 2x2 covariance of the state.
        dsigma: Its derivative.
        l_values: Measurement squeezings; HOMODYNE entries use the homodyne formula.
        theta_values: Measurement angles.

    Returns:
        Array of shape (len(l_values), len(theta_values)).
    """
    sigma = np.asarray(sigma, dtype=float)
    dsigma = np.asarray(dsigma, dtype=float)
    l_arr = np.asarray(l_values, dtype=float)[:, None]
    theta = np.asarray(theta_values, dtype=float)[None, :]
    c, s = np.cos(theta), np.sin(theta)

    # Seed covariance entries of R diag(a, b) R^T.
    homodyne = l_arr == HOMODYNE
    l_safe = np.where(homodyne, 1.0, l_arr)
    a, b = l_safe / 2, 1 / (2 * l_safe)
    p00 = sigma[0, 0] + c ** 2 * a + s ** 2 * b
    p11 = sigma[1, 1] + s ** 2 * a + c ** 2 * b
    p01 = sigma[0, 1] + c * s * (b - a)
    det = p00 * p11 - p01 ** 2
    if np.any(det <= 0):
        raise SingularMeasCov('Outcome covariance is not positive definite on the grid')

    # tr[(P^-1 D)^2] = tr[(adj(P) D)^2] / det(P)^2 for 2x2 matrices.
    m00 = p11 * dsigma[0, 0] - p01 * dsigma[1, 0]
    m01 = p11 * dsigma[0, 1] - p01 * dsigma[1, 1]
    m10 = -p01 * dsigma[0, 0] + p00 * dsigma[1, 0]
    m11 = -p01 * dsigma[0, 1] + p00 * dsigma[1, 1]
    general = 0.5 * (m00 ** 2 + 2 * m01 * m10 + m11 ** 2) / det ** 2

    v = c ** 2 * sigma[0, 0] - 2 * c * s * sigma[0, 1] + s ** 2 * sigma[1, 1]
    dv = c ** 2 * dsigma[0, 0] - 2 * c * s * dsigma[0, 1] + s ** 2 * dsigma[1, 1]
    homodyne_fi = dv ** 2 / (2 * v ** 2)

    return np.maximum(np.where(homodyne, homodyne_fi, general), 0.0)


def qfi_single_mode(sigma: np.ndarray, dsigma: np.ndarray) -> FisherResult:
    """
    Closed-form QFI of a zero-mean single-mode Gaussian family.

    The numerator is evaluated as tr[(adj(dsigma) sigma)^2] + det(dsigma) / 2, which avoids inverting dsigma. Families
    with a singular dsigma go through the SLD route.

    Args:
        sigma: 2x2 covariance.
        dsigma: Its derivative.

    Returns:
        FisherResult
    """
    sigma = np.asarray(sigma, dtype=float)
    dsigma = np.asarray(dsigma, dtype=float)
    det_sigma = np.linalg.det(sigma)
    denominator = 2 * det_sigma ** 2 - 0.125
    if abs(denominator) <= MIXEDNESS_TOL:
        raise NearPure(f'State is too close to pure (2 det(sigma)^2 - 1/8 = {denominator:.3g}); use qfi_sld')

    det_d = np.linalg.det(dsigma)
    if abs(det_d) <= EPS * max(np.abs(dsigma).max() ** 2, np.finfo(float).tiny):
        logger.debug('Singular dsigma, switching to the SLD route')
        return qfi_sld_moments(sigma, dsigma)

    adj = np.array([[dsigma[1, 1], -dsigma[0, 1]], [-dsigma[1, 0], dsigma[0, 0]]])
    product = adj @ sigma
    numerator = np.trace(product @ product) + 0.5 * det_d
    return FisherResult(numerator / denominator)


def qfi_sld_moments(sigma: np.ndarray, dsigma: np.ndarray, dmean: Optional[np.ndarray] = None) -> FisherResult:
    """
    QFI from the symmetric logarithmic derivative, solved in the Williamson basis of sigma.

    Args:
        sigma: 2n x 2n covariance (n = 1 or 2).
        dsigma: Its derivative.
        dmean: Derivative of the mean vector, zero when omitted.

    Returns:
        FisherResult
    """
    sigma = np.asarray(sigma, dtype=float)
    dsigma = np.asarray(dsigma, dtype=float)
    size = sigma.shape[0]
    omega = symplectic_form(size // 2)

    decomposition = williamson(sigma)
    S = decomposition.S
    d = decomposition.diagonal
    sigma_s = np.diag(d)
    dsigma_s = S @ dsigma @ S.T

    numerator = omega.T @ sigma_s @ dsigma_s @ sigma_s @ omega + dsigma_s / 4
    denominator = 2 * np.outer(d ** 2, d ** 2) - 0.125
    numerator_tol = MIXEDNESS_TOL * max(np.abs(numerator).max(), np.abs(dsigma_s).max(), np.finfo(float).tiny)
    pure = np.abs(denominator) < MIXEDNESS_TOL
    if np.any(pure & (np.abs(numerator) > numerator_tol)):
        raise PureStateDivergence('The SLD diverges: a pure mode pair carries a nonzero covariance derivative')
    phi_s = np.where(pure, 0.0, numerator / np.where(pure, 1.0, denominator))

    s_inv = np.linalg.inv(S)
    phi = s_inv @ phi_s @ s_inv.T
    value = np.trace(omega.T @ dsigma @ omega @ phi)
    if dmean is not None:
        dmean = np.asarray(dmean, dtype=float).reshape(-1)
        value += dmean @ np.linalg.solve(sigma, dmean)
    return FisherResult(value)


def qfi_sld(state_fn: Callable[[float], GaussianState], Lambda: float, affine: bool = False,
            step: Optional[float] = None) -> FisherResult:
    """
    QFI of a parameterized Gaussian family via the SLD.

    Args:
        state_fn: Maps the parameter to a GaussianState.
        Lambda: Point of evaluation.
        affine: The family is affine in the parameter; derivatives are then taken exactly from the states at 0 and 1.
        step: Central-difference step for non-affine families, defaults to 1e-5 * max(1, |Lambda|).

    Returns:
        FisherResult
    """
    if affine:
        lo, hi, width = state_fn(0.0), state_fn(1.0), 1.0
    else:
        h = step if step else 1e-5 * max(1.0, abs(Lambda))
        lo, hi, width = state_fn(Lambda - h), state_fn(Lambda + h), 2 * h
    dsigma = (hi.cov - lo.cov) / width
    dmean = (hi.mean - lo.mean) / width
    return qfi_sld_moments(state_fn(Lambda).cov, dsigma, dmean)


def gaussian_fidelity(state_a: GaussianState, state_b: GaussianState) -> float:
    """
    Root fidelity tr|sqrt(rho_a) sqrt(rho_b)| of two single-mode Gaussian states.
    """
    return math.exp(-_infidelity_exponent(state_a, state_b))


def qfi_fidelity(state_fn: Callable[[float], GaussianState], Lambda: float,
                 step: Optional[float] = None) -> FisherResult:
    """
    QFI from the fidelity of neighbouring states, I = 8 (1 - sqrt(F)) / (2h)^2, extrapolated to h -> 0.

    The estimates at h, h/2 and h/4 are combined into two Richardson values that must agree.

    Args:
        state_fn: Maps the parameter to a single-mode GaussianState; evaluated at Lambda +- h.
        Lambda: Point of evaluation.
        step: Largest step h. By default it is tuned so the fidelity drop is about 1e-4.

    Returns:
        FisherResult
    """
    def estimate(h):
        lo, hi = state_fn(Lambda - h), state_fn(Lambda + h)
        if np.array_equal(lo.cov, hi.cov) and np.array_equal(lo.mean, hi.mean):
            return 0.0
        return 8 * -math.expm1(-_infidelity_exponent(lo, hi)) / (2 * h) ** 2

    if step is None:
        h = 1e-3 * max(1.0, abs(Lambda))
        for _ in range(3):
            trial = estimate(h)
            if trial == 0.0:
                return FisherResult(0.0)
            h = 1e-2 / math.sqrt(trial)
    else:
        h = step

    i_h, i_h2, i_h4 = estimate(h), estimate(h / 2), estimate(h / 4)
    r1 = (4 * i_h2 - i_h) / 3
    r2 = (4 * i_h4 - i_h2) / 3
    logger.debug(f'qfi_fidelity: h = {h:.4g}, Richardson {r1:.10g} / {r2:.10g}')
    if abs(r1 - r2) > RICHARDSON_TOL * abs(r2) + 64 * EPS / h ** 2:
        raise StepSelectionFailure(f'Richardson estimates disagree: {r1:.10g} vs {r2:.10g} at h = {h:.4g}')
    return FisherResult(r2)


def snr(Lambda: float, fisher: FisherResult) -> float:
    return Lambda ** 2 * fisher.value


def reparameterize(fisher_in_Lambda: FisherResult, dLambda_dGamma: float) -> FisherResult:
    """
    Chain rule I(gamma) = (dLambda/dgamma)^2 I(Lambda).
    """
    if not dLambda_dGamma > 0:
        raise ValueError(f'dLambda_dGamma must be positive, got {dLambda_dGamma}')
    return FisherResult(fisher_in_Lambda.value * dLambda_dGamma ** 2, 'gamma')


def _infidelity_exponent(state_a: GaussianState, state_b: GaussianState) -> float:
    """
    -log of the root fidelity. Uses Delta / (sqrt(Delta + delta) + sqrt(delta)) in place of the difference of roots.
    """
    if state_a.n_modes != 1 or state_b.n_modes != 1:
        raise ValueError('Gaussian fidelity is implemented for single-mode states')
    total = state_a.cov + state_b.cov
    big_delta = np.linalg.det(total)
    small_delta = 4 * (np.linalg.det(state_a.cov) - 0.25) * (np.linalg.det(state_b.cov) - 0.25)
    small_delta = max(small_delta, 0.0)
    denominator = big_delta / (math.sqrt(big_delta + small_delta) + math.sqrt(small_delta))
    shift = state_b.mean - state_a.mean
    return 0.25 * float(shift @ np.linalg.solve(total, shift)) + 0.5 * math.log(denominator)


class HomodyneNotFinite(Exception):
    pass


class SingularMeasCov(Exception):
    pass


class NearPure(Exception):
    pass


class PureStateDivergence(Exception):
    pass


class StepSelectionFailure(Exception):
    pass
