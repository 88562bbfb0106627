"""
Single-oscillator model of squeezing-assisted estimation of an additive occupation delta.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence, Tuple

import numpy as np
import pandas as pd

from cslfisher.models.estimation import (HOMODYNE, FisherResult, MeasurementSpec, fisher_gaussian_grid,
                                         qfi_single_mode)
from cslfisher.models.sweep_result import SweepResult

logger = logging.getLogger(__name__)

ORDERINGS = ('before', 'after')
COARSE_L = np.logspace(-3, 3, 61)
COARSE_THETA = np.linspace(0, math.pi, 91)
REFINE_POINTS = 21


@dataclass(frozen=True)
class SqueezeParams:
    """
    Args:
        n_th: Thermal occupation before squeezing.
        s: Squeezing parameter.
        delta: Additive CSL-type occupation.
        ordering: 'before' adds delta to the thermal occupation ahead of the squeezer, 'after' adds delta
                  isotropically to the squeezed state.
    """
    n_th: float
    s: float = 0.0
    delta: float = 0.0
    ordering: str = 'before'

    def __post_init__(self):
        if self.n_th < 0 or self.delta < 0:
            raise ValueError(f'n_th and delta must be nonnegative, got {self.n_th}, {self.delta}')
        if self.ordering not in ORDERINGS:
            raise ValueError(f'ordering must be one of {ORDERINGS}, got {self.ordering}')

    @property
    def mean_occupation(self) -> float:
        return (float(np.trace(squeezed_thermal_cov(self))) - 1) / 2


def squeezed_thermal_cov(p: SqueezeParams) -> np.ndarray:
    squeeze = np.diag([math.exp(2 * p.s), math.exp(-2 * p.s)])
    if p.ordering == 'before':
        return (p.n_th + p.delta + 0.5) * squeeze
    return (p.n_th + 0.5) * squeeze + p.delta * np.eye(2)


def squeezed_thermal_dcov(p: SqueezeParams) -> np.ndarray:
    """
    Derivative of squeezed_thermal_cov with respect to delta.
    """
    if p.ordering == 'before':
        return np.diag([math.exp(2 * p.s), math.exp(-2 * p.s)])
    return np.eye(2)


def qfi_delta(p: SqueezeParams) -> FisherResult:
    result = qfi_single_mode(squeezed_thermal_cov(p), squeezed_thermal_dcov(p))
    return FisherResult(result.value, 'delta')


def optimize_gaussian_meas(p: SqueezeParams) -> Tuple[MeasurementSpec, FisherResult]:
    """
    Best Gaussian measurement for estimating delta.

    Searches homodyne plus 61 log-spaced squeezings in [1e-3, 1e3] against 91 angles, then refines ten times finer
    around the best point.

    Returns:
        (best measurement, its Fisher information)
    """
    sigma = squeezed_thermal_cov(p)
    dsigma = squeezed_thermal_dcov(p)

    l_values = np.concatenate([[HOMODYNE], COARSE_L])
    grid = fisher_gaussian_grid(sigma, dsigma, l_values, COARSE_THETA)
    i, j = np.unravel_index(np.argmax(grid), grid.shape)
    best_l, best_theta, best_value = l_values[i], COARSE_THETA[j], grid[i, j]

    d_theta = COARSE_THETA[1] - COARSE_THETA[0]
    fine_theta = best_theta + np.linspace(-d_theta, d_theta, REFINE_POINTS)
    if best_l == HOMODYNE:
        fine_l = np.array([HOMODYNE])
    else:
        d_log = math.log10(COARSE_L[1]) - math.log10(COARSE_L[0])
        fine_l = np.logspace(math.log10(best_l) - d_log, math.log10(best_l) + d_log, REFINE_POINTS)
    fine = fisher_gaussian_grid(sigma, dsigma, fine_l, fine_theta)
    k, m = np.unravel_index(np.argmax(fine), fine.shape)
    if fine[k, m] > best_value:
        best_l, best_theta, best_value = fine_l[k], fine_theta[m], fine[k, m]

    spec = MeasurementSpec(l=float(best_l), theta=float(best_theta))
    logger.debug(f'optimize_gaussian_meas: {spec.label} gives {best_value:.6g}')
    return spec, FisherResult(float(best_value), 'delta')


def squeeze_row(p: SqueezeParams) -> Tuple[float, float, float, float]:
    """
    (QFI unsqueezed, QFI squeezed, best Gaussian FI unsqueezed, best Gaussian FI squeezed) at p.delta.
    """
    flat = replace(p, s=0.0)
    return (qfi_delta(flat).value, qfi_delta(p).value,
            optimize_gaussian_meas(flat)[1].value, optimize_gaussian_meas(p)[1].value)


SQUEEZE_COLUMNS = [('qfi_unsqueezed', 'quanta^-2'), ('qfi_squeezed', 'quanta^-2'),
                   ('fi_unsqueezed', 'quanta^-2'), ('fi_squeezed', 'quanta^-2')]


def sweep_delta(p_base: SqueezeParams, delta_grid: Sequence[float], runner=None) -> SweepResult:
    """
    Tabulates QFI and best Gaussian FI, with and without squeezing, against delta.

    Args:
        p_base: Squeezing setup; its delta is replaced by the grid values.
        delta_grid: Ascending, nonempty list of delta values (absolute quanta).
        runner: Optional Model whose map_ordered evaluates the rows.

    Returns:
        SweepResult
    """
    delta_grid = [float(d) for d in delta_grid]
    if not delta_grid:
        raise ValueError('delta_grid must not be empty')
    if any(b <= a for a, b in zip(delta_grid, delta_grid[1:])):
        raise ValueError('delta_grid must be strictly ascending')
    params = [replace(p_base, delta=d) for d in delta_grid]
    rows = runner.map_ordered(squeeze_row, params) if runner else [squeeze_row(x) for x in params]
    frame = pd.DataFrame(rows, columns=[name for name, _ in SQUEEZE_COLUMNS])
    frame.insert(0, 'delta', delta_grid)
    return SweepResult(axis='delta', axis_unit='quanta', columns=list(SQUEEZE_COLUMNS), frame=frame)
