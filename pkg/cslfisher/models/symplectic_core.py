"""
Gaussian-state linear algebra.

Quadrature convention used across the package: xpxp ordering, vacuum variance 1/2.
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.linalg import schur, sqrtm

logger = logging.getLogger(__name__)

# Slack absorbed by the physicality test.
PHYSICAL_SLACK = 1e-12
DECOMPOSITION_TOL = 1e-10


@dataclass(frozen=True)
class GaussianState:
    """
    Mean vector plus covariance matrix of an n-mode Gaussian state.
    """
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
            raise UnphysicalState(f'Covariance must be 2n x 2n, got shape {cov.shape}')
        if mean.shape[0] != cov.shape[0]:
            raise UnphysicalState(f'Mean has length {mean.shape[0]} but covariance is {cov.shape[0]} wide')
        if not check_physical(cov):
            raise UnphysicalState('Covariance violates the uncertainty relation')
        object.__setattr__(self, 'cov', cov)
        object.__setattr__(self, 'mean', mean)

    @property
    def n_modes(self) -> int:
        return self.cov.shape[0] // 2

    @classmethod
    def zero_mean(cls, cov: np.ndarray) -> 'GaussianState':
        cov = np.asarray(cov, dtype=float)
        return cls(np.zeros(cov.shape[0]), cov)


@dataclass(frozen=True)
class SymplecticDecomposition:
    """
    Williamson normal form: S @ cov @ S.T == diag(d_1, d_1, ..., d_n, d_n).
    """
    S: np.ndarray
    d: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return np.repeat(self.d, 2)


def symplectic_form(n_modes: int) -> np.ndarray:
    """
    Direct sum of n copies of [[0, 1], [-1, 0]].
    """
    if n_modes < 1:
        raise ValueError(f'n_modes must be positive, got {n_modes}')
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def williamson(cov: np.ndarray) -> SymplecticDecomposition:
    """
    Williamson decomposition of a positive definite covariance matrix.

    The antisymmetric matrix cov^{-1/2} Omega cov^{-1/2} is brought to real Schur form, whose 2x2 blocks
    [[0, a_j], [-a_j, 0]] give the symplectic eigenvalues d_j = 1 / a_j.

    Args:
        cov: 2n x 2n real symmetric positive definite matrix.

    Returns:
        SymplecticDecomposition with the eigenvalues sorted in descending order.
    """
    cov = _validated(cov)
    n = cov.shape[0] // 2
    omega = symplectic_form(n)

    inv_sqrt = np.real(sqrtm(np.linalg.inv(cov)))
    inv_sqrt = (inv_sqrt + inv_sqrt.T) / 2
    antisym = inv_sqrt @ omega @ inv_sqrt
    block_form, basis = schur(antisym, output='real')

    # Flip any block whose upper entry is negative so every a_j is positive.
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    perm = np.eye(2 * n)
    for j in range(n):
        if block_form[2 * j, 2 * j + 1] < 0:
            perm[2 * j:2 * j + 2, 2 * j:2 * j + 2] = swap
    basis = basis @ perm
    block_form = perm @ block_form @ perm
    d = np.array([1.0 / block_form[2 * j, 2 * j + 1] for j in range(n)])

    order = np.argsort(-d, kind='stable')
    mode_perm = np.zeros((2 * n, 2 * n))
    for new, old in enumerate(order):
        mode_perm[2 * old:2 * old + 2, 2 * new:2 * new + 2] = np.eye(2)
    basis = basis @ mode_perm
    d = d[order]

    S = (inv_sqrt @ basis @ np.diag(np.sqrt(np.repeat(d, 2)))).T
    logger.debug(f'Williamson eigenvalues {d}')
    return SymplecticDecomposition(S=S, d=d)


def symplectic_eigenvalues(cov: np.ndarray) -> List[float]:
    """
    Moduli of the eigenvalues of i * Omega * cov, one per mode, sorted descending.
    """
    cov = _validated(cov)
    n = cov.shape[0] // 2
    moduli = np.sort(np.abs(np.linalg.eigvals(1j * symplectic_form(n) @ cov)))[::-1]
    return [float(x) for x in moduli[::2]]


def check_physical(cov: np.ndarray) -> bool:
    cov = np.asarray(cov, dtype=float)
    try:
        d = symplectic_eigenvalues(cov)
    except (NonPositiveDefinite, ValueError):
        return False
    return min(d) >= 0.5 - PHYSICAL_SLACK


def _validated(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
        raise ValueError(f'Expected a 2n x 2n matrix, got shape {cov.shape}')
    scale = max(np.abs(cov).max(), 1.0)
    if np.abs(cov - cov.T).max() > DECOMPOSITION_TOL * scale:
        raise ValueError('Covariance matrix is not symmetric')
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite('Cholesky factorization failed; covariance is not positive definite')
    return (cov + cov.T) / 2


class NonPositiveDefinite(Exception):
    pass


class UnphysicalState(Exception):
    pass
