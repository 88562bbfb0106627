"""
Parameter sweeps over the optomechanical model.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from cslfisher.models.csl_model import (InvalidGrid, QuadratureFailure, ResolutionTooCoarse, lambda_per_gamma,
                                        n_csl)
from cslfisher.models.estimation import (HETERODYNE, HOMODYNE, FisherResult, HomodyneNotFinite, MeasurementSpec,
                                         NearPure, PureStateDivergence, SingularMeasCov, StepSelectionFailure,
                                         fisher_gaussian, qfi_single_mode, qfi_sld_moments, snr)
from cslfisher.models.hybrid_probe import (DegenerateOutcome, DegenerateSpectrum, DomainError, QubitPrep,
                                           fi_population, optimal_time, qfi_qubit, qubit_reduced_state,
                                           qubit_state_derivative)
from cslfisher.models.model import Model
from cslfisher.models.optomech_dynamics import (DegenerateDenominator, InvalidParameter, StepUnderflow, UnstableDrift,
                                                blocks, drift_matrix, dsigma_dLambda, mech_coefficients, mech_qfi,
                                                noise_matrix, steady_state)
from cslfisher.models.squeezing_study import SQUEEZE_COLUMNS, SqueezeParams, sweep_delta
from cslfisher.models.sweep_result import SweepResult
from cslfisher.models.symplectic_core import NonPositiveDefinite, UnphysicalState
from cslfisher.sweep_config import SweepConfig

logger = logging.getLogger(__name__)

OUTPUT_UNITS = {
    'qfi_mech': 's^2',
    'qfi_opt': 's^2',
    'fi_homodyne': 's^2',
    'fi_heterodyne': 's^2',
    'snr_mech': '1',
    'snr_opt': '1',
    'snr_homodyne': '1',
    'hybrid_fi': 's^2',
    'hybrid_fi_reduced': 's^2',
    'hybrid_qfi': 's^2',
    'tau_opt': '1',
    'qfi_mech_closed': 's^2',
    'n_csl': 'quanta',
}

ROW_ERRORS = (
    (UnstableDrift, 'unstable'),
    (DegenerateDenominator, 'degenerate'),
    (DegenerateOutcome, 'degenerate'),
    (DegenerateSpectrum, 'degenerate'),
    (PureStateDivergence, 'pure'),
    (NearPure, 'pure'),
    (SingularMeasCov, 'singular'),
    (HomodyneNotFinite, 'singular'),
    (InvalidParameter, 'invalid'),
    (DomainError, 'invalid'),
    (NonPositiveDefinite, 'unphysical'),
    (UnphysicalState, 'unphysical'),
    (QuadratureFailure, 'quadrature'),
    (ResolutionTooCoarse, 'resolution'),
    (InvalidGrid, 'resolution'),
    (StepSelectionFailure, 'step'),
    (StepUnderflow, 'step'),
    (np.linalg.LinAlgError, 'linalg'),
)

_STEADY_STATE_OUTPUTS = {'qfi_mech', 'qfi_opt', 'fi_homodyne', 'fi_heterodyne', 'snr_mech', 'snr_opt',
                         'snr_homodyne'}
_COEFFICIENT_OUTPUTS = {'hybrid_fi', 'hybrid_fi_reduced', 'hybrid_qfi', 'tau_opt', 'qfi_mech_closed'}


class SweepRunner(Model):
    """
    Evaluates a SweepConfig row by row. Rows are independent and may run in worker processes; the table is always
    assembled in axis order.
    """

    def run_sweep(self, cfg: SweepConfig) -> SweepResult:
        """
        Runs the sweep described by cfg.

        Args:
            cfg: Validated sweep configuration.

        Returns:
            SweepResult. Rows whose parameters fail (for example an unstable drift) carry an error code instead of
            aborting the sweep.
        """
        grid = self.build_grid(cfg.scale, cfg.min, cfg.max, cfg.points)
        if cfg.sweep_axis == 'squeeze_delta':
            return self._run_squeeze(cfg, grid)

        rows = self.map_ordered(compute_row, [(cfg, float(value)) for value in grid])
        names = ['Lambda'] + list(cfg.outputs)
        frame = pd.DataFrame([values for values, _ in rows], columns=names)
        frame.insert(0, cfg.sweep_axis, grid)
        errors = [error for _, error in rows]
        for value, error in zip(grid, errors):
            if error:
                logger.warning(f'{cfg.sweep_axis} = {value:.6g}: row failed ({error})')

        columns = [('Lambda', 'rad/s')] + [(name, OUTPUT_UNITS[name]) for name in cfg.outputs]
        return SweepResult(axis=cfg.sweep_axis, axis_unit=cfg.axis_unit, columns=columns, frame=frame,
                           errors=errors, label=cfg.label)

    def _run_squeeze(self, cfg: SweepConfig, grid: np.ndarray) -> SweepResult:
        p_base = SqueezeParams(n_th=cfg.squeeze_n_th, s=cfg.squeeze_s, ordering=cfg.squeeze_ordering)
        result = sweep_delta(p_base, grid, runner=self)
        units = dict(SQUEEZE_COLUMNS)
        outputs = list(cfg.outputs) if cfg.outputs else list(units)
        frame = result.frame[[result.axis] + outputs]
        return SweepResult(axis=cfg.sweep_axis, axis_unit=cfg.axis_unit,
                           columns=[(name, units[name]) for name in outputs],
                           frame=frame.rename(columns={result.axis: cfg.sweep_axis}), label=cfg.label)


def compute_row(job: Tuple[SweepConfig, float]) -> Tuple[List[float], Optional[str]]:
    """
    One sweep row: Lambda followed by the requested outputs.

    Args:
        job: (config, axis value).

    Returns:
        (values, error code or None). Values that could not be computed are NaN.
    """
    cfg, value = job
    values = [math.nan] * (1 + len(cfg.outputs))
    try:
        p = cfg.params_at(value)
        gamma = value if cfg.sweep_axis == 'gamma' else cfg.gamma
        slope = cfg.lambda_per_gamma if cfg.lambda_per_gamma else lambda_per_gamma(p)
        Lambda = gamma * slope
        values[0] = Lambda
        computed = _outputs(cfg, p, Lambda, value)
    except Exception as e:
        for error_type, code in ROW_ERRORS:
            if isinstance(e, error_type):
                return values, code
        raise
    values[1:] = [computed[name] for name in cfg.outputs]
    return values, None


def _outputs(cfg: SweepConfig, p, Lambda: float, value: float) -> dict:
    requested = set(cfg.outputs)
    out = {}
    if requested & _STEADY_STATE_OUTPUTS:
        A = drift_matrix(p)
        sigma_m, sigma_l, _ = blocks(steady_state(A, noise_matrix(p, Lambda)))
        dsigma_m, dsigma_l, _ = blocks(dsigma_dLambda(p))
        out['qfi_mech'] = _qfi(sigma_m, dsigma_m)
        out['qfi_opt'] = _qfi(sigma_l, dsigma_l)
        out['fi_heterodyne'] = fisher_gaussian(sigma_l, dsigma_l, MeasurementSpec(HETERODYNE)).value
        if cfg.theta is not None:
            out['fi_homodyne'] = fisher_gaussian(sigma_l, dsigma_l, MeasurementSpec(HOMODYNE, cfg.theta)).value
            out['snr_homodyne'] = snr(Lambda, FisherResult(out['fi_homodyne']))
        out['snr_mech'] = snr(Lambda, FisherResult(out['qfi_mech']))
        out['snr_opt'] = snr(Lambda, FisherResult(out['qfi_opt']))

    if requested & _COEFFICIENT_OUTPUTS:
        c = mech_coefficients(p)
        out['qfi_mech_closed'] = mech_qfi(p, Lambda).value
        out['tau_opt'] = optimal_time(c.alpha1, c.beta1, Lambda)
        if cfg.sweep_axis == 'tau':
            tau = value
        else:
            tau = cfg.tau if cfg.tau else out['tau_opt']
        prep = QubitPrep(cfg.qubit_theta, cfg.qubit_phi)
        if requested & {'hybrid_fi', 'hybrid_fi_reduced'}:
            population = fi_population(prep, tau, c.alpha1, c.beta1, Lambda)
            out['hybrid_fi'] = population.value.value
            out['hybrid_fi_reduced'] = population.reduced.value
        if 'hybrid_qfi' in requested:
            out['hybrid_qfi'] = qfi_qubit(lambda x: qubit_reduced_state(prep, tau, c.alpha1, c.beta1, x), Lambda,
                                          dstate=qubit_state_derivative(prep, tau, c.alpha1, c.beta1, Lambda)).value

    if 'n_csl' in requested:
        out['n_csl'] = n_csl(p.n_bar, Lambda, p.gamma_m)
    return out


def _qfi(sigma: np.ndarray, dsigma: np.ndarray) -> float:
    try:
        return qfi_single_mode(sigma, dsigma).value
    except NearPure:
        return qfi_sld_moments(sigma, dsigma).value
