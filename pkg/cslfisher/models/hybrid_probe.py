"""
Qubit probe coupled to the mechanical resonator through exp(-i tau dq sigma_x).

The mechanical state enters only through alpha1 + beta1 * Lambda, the steady-state position variance.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np

from cslfisher.models.estimation import FisherResult

logger = logging.getLogger(__name__)

INV_E = math.exp(-1)
TRACE_TOL = 1e-12
SPECTRUM_TOL = 1e-12
OUTCOME_TOL = 1e-300

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)


@dataclass(frozen=True)
class QubitPrep:
    """
    Bloch-sphere angles of the initial state cos(vartheta/2)|0> + exp(i varphi) sin(vartheta/2)|1>.
    """
    vartheta: float = 0.0
    varphi: float = 0.0

    def __post_init__(self):
        if not 0 <= self.vartheta <= math.pi:
            raise ValueError(f'vartheta must lie in [0, pi], got {self.vartheta}')
        if not 0 <= self.varphi < 2 * math.pi:
            raise ValueError(f'varphi must lie in [0, 2 pi), got {self.varphi}')

    @property
    def ket(self) -> np.ndarray:
        return np.array([math.cos(self.vartheta / 2), np.exp(1j * self.varphi) * math.sin(self.vartheta / 2)])


@dataclass(frozen=True)
class QubitDensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f'Expected a 2x2 matrix, got shape {m.shape}')
        if np.abs(m - m.conj().T).max() > TRACE_TOL:
            raise ValueError('Density matrix is not Hermitian')
        if abs(np.trace(m) - 1) > TRACE_TOL:
            raise ValueError(f'Density matrix trace is {np.trace(m)}')
        eig = np.linalg.eigvalsh(m)
        if eig.min() < -TRACE_TOL or eig.max() > 1 + TRACE_TOL:
            raise ValueError(f'Density matrix eigenvalues {eig} outside [0, 1]')
        object.__setattr__(self, 'matrix', m)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


class PopulationFisher(NamedTuple):
    """
    Two-outcome Fisher information of a sigma_z measurement.

    value is derived directly from the outcome probabilities; reduced omits the constant factor 4, which leaves the
    maximizing interaction time unchanged.
    """
    value: FisherResult
    reduced: FisherResult


def decoherence_exponent(tau: float, alpha1: float, beta1: float, Lambda: float) -> float:
    """
    zeta = 2 tau^2 (alpha1 + beta1 Lambda).
    """
    variance = alpha1 + beta1 * Lambda
    if not variance > 0:
        raise ValueError(f'alpha1 + beta1 * Lambda must be positive, got {variance}')
    if tau < 0:
        raise ValueError(f'tau must be nonnegative, got {tau}')
    return 2 * tau ** 2 * variance


def characteristic_function(sigma_M: np.ndarray, xi: complex) -> complex:
    """
    Characteristic function of a zero-mean Gaussian mechanical state.

    Args:
        sigma_M: 2x2 mechanical covariance.
        xi: Complex displacement argument.

    Returns:
        exp(-v^T sigma_M v / 2) with v = (sqrt(2) Im xi, -sqrt(2) Re xi).
    """
    v = math.sqrt(2) * np.array([xi.imag, -xi.real])
    return complex(math.exp(-0.5 * float(v @ np.asarray(sigma_M, dtype=float) @ v)))


def qubit_reduced_state(prep: QubitPrep, tau: float, alpha1: float, beta1: float,
                        Lambda: float) -> QubitDensityMatrix:
    """
    Reduced qubit state after the interaction.

    Args:
        prep: Initial qubit preparation.
        tau: Dimensionless interaction time.
        alpha1: Lambda-independent part of the mechanical position variance.
        beta1: Its slope in Lambda (s).
        Lambda: Rescaled CSL parameter (rad/s).

    Returns:
        QubitDensityMatrix
    """
    zeta = decoherence_exponent(tau, alpha1, beta1, Lambda)
    return QubitDensityMatrix(_reduced_matrix(prep.vartheta, prep.varphi, math.exp(-zeta)))


def qubit_state_derivative(prep: QubitPrep, tau: float, alpha1: float, beta1: float, Lambda: float) -> np.ndarray:
    """
    d(rho)/d(Lambda), through d(zeta)/d(Lambda) = 2 tau^2 beta1.
    """
    zeta = decoherence_exponent(tau, alpha1, beta1, Lambda)
    return _reduced_derivative(prep.vartheta, prep.varphi, math.exp(-zeta), 2 * tau ** 2 * beta1)


def qubit_reduced_state_fock(prep: QubitPrep, tau: float, n_bar: float, cutoff: int = 80) -> QubitDensityMatrix:
    """
    Brute-force reduced state for a thermal resonator, simulated in a truncated number basis.

    The coupling is diagonal in the sigma_x eigenbasis, where it reduces to the two displacements exp(-+ i tau q).

    Args:
        prep: Initial qubit preparation.
        tau: Interaction time.
        n_bar: Thermal occupation of the resonator.
        cutoff: Number-basis dimension.

    Returns:
        QubitDensityMatrix
    """
    n = np.arange(cutoff)
    populations = (n_bar / (n_bar + 1)) ** n / (n_bar + 1)
    populations /= populations.sum()

    lowering = np.diag(np.sqrt(n[1:].astype(float)), k=1)
    q = (lowering + lowering.T) / math.sqrt(2)
    eigval, eigvec = np.linalg.eigh(q)
    propagators = [eigvec @ np.diag(np.exp(-1j * sign * tau * eigval)) @ eigvec.conj().T for sign in (1, -1)]
    thermal = np.diag(populations)

    amplitudes = _HADAMARD @ prep.ket
    rho_pm = np.empty((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            overlap = np.trace(propagators[i] @ thermal @ propagators[j].conj().T)
            rho_pm[i, j] = amplitudes[i] * np.conj(amplitudes[j]) * overlap
    rho = _HADAMARD @ rho_pm @ _HADAMARD
    return QubitDensityMatrix((rho + rho.conj().T) / 2)


def fi_population(prep: QubitPrep, tau: float, alpha1: float, beta1: float, Lambda: float) -> PopulationFisher:
    """
    Fisher information on Lambda of a computational-basis measurement of the probe.

    Returns:
        PopulationFisher with value = 4 tau^4 beta1^2 cos^2(vartheta) / (exp(2 zeta) - cos^2(vartheta)).
    """
    zeta = decoherence_exponent(tau, alpha1, beta1, Lambda)
    cos2 = math.cos(prep.vartheta) ** 2
    contrast = math.exp(-zeta) * math.cos(prep.vartheta)
    if min(1 + contrast, 1 - contrast) / 2 < OUTCOME_TOL:
        raise DegenerateOutcome(f'An outcome probability vanishes at tau = {tau}, vartheta = {prep.vartheta}')
    # exp(2 zeta) - cos^2 written to stay accurate for small zeta.
    gap = math.expm1(2 * zeta) + math.sin(prep.vartheta) ** 2
    reduced = tau ** 4 * beta1 ** 2 * cos2 / gap
    return PopulationFisher(FisherResult(4 * reduced), FisherResult(reduced))


def lambert_w0(x: float) -> float:
    """
    Principal branch of the Lambert W function for real x >= -1/e.

    Halley iteration from the branch-point series near -1/e and the asymptotic log(x) - log(log(x)) elsewhere.
    """
    if math.isnan(x):
        raise DomainError('lambert_w0 is undefined for NaN')
    branch = 2 * (math.e * x + 1)
    if branch < 0:
        if branch > -1e-15:
            return -1.0
        raise DomainError(f'lambert_w0 requires x >= -1/e, got {x}')
    if x == 0:
        return 0.0
    p = math.sqrt(branch)
    if p < 1e-3:
        return -1 + p - p ** 2 / 3 + 11 * p ** 3 / 72

    if x < 0:
        w = p - 1
    elif x < 3:
        w = math.log1p(x)
    else:
        log_x = math.log(x)
        w = log_x - math.log(log_x)

    for _ in range(100):
        ew = math.exp(w)
        residual = w * ew - x
        w1 = w + 1
        dw = residual / (ew * w1 - (w + 2) * residual / (2 * w1))
        w -= dw
        if abs(dw) < 0.7e-16 * (2 + abs(w)):
            break
    return w


def optimal_time(alpha1: float, beta1: float, Lambda: float) -> float:
    """
    Interaction time maximizing the population Fisher information for vartheta in {0, pi}.

    tau_opt = sqrt((2 + W(-2 / e^2)) / (alpha1 + beta1 Lambda)) / 2, about 0.631 / sqrt(alpha1 + beta1 Lambda).
    """
    variance = alpha1 + beta1 * Lambda
    if not variance > 0:
        raise ValueError(f'alpha1 + beta1 * Lambda must be positive, got {variance}')
    return 0.5 * math.sqrt((2 + lambert_w0(-2 * math.exp(-2))) / variance)


def qfi_qubit(state_fn: Callable[[float], QubitDensityMatrix], Lambda: float,
              dstate: Optional[np.ndarray] = None, step: Optional[float] = None) -> FisherResult:
    """
    QFI of a qubit family from its spectral decomposition, I = sum_kl 2 |<k|d rho|l>|^2 / (lambda_k + lambda_l).

    Args:
        state_fn: Maps the parameter to a QubitDensityMatrix.
        Lambda: Point of evaluation.
        dstate: Exact derivative of the state, when known. Otherwise a central difference of state_fn is used.
        step: Central-difference step, defaults to 1e-5 * max(1, |Lambda|).

    Returns:
        FisherResult
    """
    rho = state_fn(Lambda).matrix
    if dstate is None:
        h = step if step else 1e-5 * max(1.0, abs(Lambda))
        dstate = (state_fn(Lambda + h).matrix - state_fn(Lambda - h).matrix) / (2 * h)
    return FisherResult(float(_qfi_stack(rho[None], np.asarray(dstate, dtype=complex)[None])[0]))


def optimize_preparation(tau: float, alpha1: float, beta1: float, Lambda: float,
                         target: str = 'QFI') -> Tuple[QubitPrep, FisherResult]:
    """
    Grid search for the qubit preparation maximizing the population FI or the QFI.

    The coarse grid has 181 polar by 360 azimuthal points and is followed by a 21 x 21 refinement around the best
    cell.

    Args:
        tau: Interaction time.
        alpha1: Lambda-independent position variance.
        beta1: Position variance slope.
        Lambda: Rescaled CSL parameter.
        target: 'FI' or 'QFI'.

    Returns:
        (best preparation, its Fisher information)
    """
    target = target.upper()
    if target not in ('FI', 'QFI'):
        raise ValueError(f"target must be 'FI' or 'QFI', got {target}")
    zeta = decoherence_exponent(tau, alpha1, beta1, Lambda)
    decay = math.exp(-zeta)
    dzeta = 2 * tau ** 2 * beta1

    def evaluate(varthetas, varphis):
        vt, vp = np.meshgrid(varthetas, varphis, indexing='ij')
        if target == 'FI':
            cos2 = np.cos(vt) ** 2
            gap = math.expm1(2 * zeta) + np.sin(vt) ** 2
            return 4 * tau ** 4 * beta1 ** 2 * cos2 / gap
        rho = _reduced_matrix(vt, vp, decay)
        drho = _reduced_derivative(vt, vp, decay, dzeta)
        rho = np.moveaxis(rho, (0, 1), (-2, -1)).reshape(-1, 2, 2)
        drho = np.moveaxis(drho, (0, 1), (-2, -1)).reshape(-1, 2, 2)
        return _qfi_stack(rho, drho).reshape(vt.shape)

    varthetas = np.linspace(0, math.pi, 181)
    varphis = np.arange(360) * 2 * math.pi / 360
    values = evaluate(varthetas, varphis)
    i, j = np.unravel_index(np.argmax(values), values.shape)
    best = (varthetas[i], varphis[j], values[i, j])

    d_theta = varthetas[1] - varthetas[0]
    d_phi = varphis[1] - varphis[0]
    fine_thetas = np.clip(varthetas[i] + np.linspace(-d_theta, d_theta, 21), 0, math.pi)
    fine_phis = np.mod(varphis[j] + np.linspace(-d_phi, d_phi, 21), 2 * math.pi)
    fine = evaluate(fine_thetas, fine_phis)
    k, m = np.unravel_index(np.argmax(fine), fine.shape)
    if fine[k, m] > best[2]:
        best = (fine_thetas[k], fine_phis[m], fine[k, m])
    logger.debug(f'optimize_preparation({target}): vartheta = {best[0]:.6g}, varphi = {best[1]:.6g}')
    return QubitPrep(float(best[0]), float(best[1]) % (2 * math.pi)), FisherResult(float(best[2]))


def _reduced_matrix(vartheta, varphi, decay) -> np.ndarray:
    """
    Reduced state entries; broadcasts over array angles with the 2x2 axes first.
    """
    rho00 = 0.5 * (1 + decay * np.cos(vartheta))
    rho01 = 0.5 * np.sin(vartheta) * (np.cos(varphi) - 1j * decay * np.sin(varphi))
    return np.array([[rho00 + 0j, rho01], [np.conj(rho01), 1 - rho00 + 0j]])


def _reduced_derivative(vartheta, varphi, decay, dzeta) -> np.ndarray:
    d00 = -0.5 * decay * np.cos(vartheta) * dzeta
    d01 = 0.5j * np.sin(vartheta) * decay * np.sin(varphi) * dzeta
    return np.array([[d00 + 0j, d01], [np.conj(d01), -d00 + 0j]])


def _qfi_stack(rho: np.ndarray, drho: np.ndarray) -> np.ndarray:
    """
    QFI for a stack of density matrices of shape (..., 2, 2).
    """
    eigval, eigvec = np.linalg.eigh(rho)
    elements = np.conj(np.swapaxes(eigvec, -1, -2)) @ drho @ eigvec
    weights = eigval[..., :, None] + eigval[..., None, :]
    magnitude = np.abs(elements) ** 2
    support = weights > SPECTRUM_TOL
    if np.any(~support & (magnitude > SPECTRUM_TOL * max(np.abs(drho).max(), 1.0) ** 2)):
        raise DegenerateSpectrum('State derivative leaves the support of a rank-deficient state')
    terms = np.where(support, 2 * magnitude / np.where(support, weights, 1.0), 0.0)
    return terms.sum(axis=(-2, -1))


class DegenerateOutcome(Exception):
    pass


class DegenerateSpectrum(Exception):
    pass


class DomainError(Exception):
    pass
