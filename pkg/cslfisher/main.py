import argparse
import csv
import logging
import sys
from typing import Iterable, List, TextIO, Union

import pandas as pd

from cslfisher.configuration_service import ConfigurationService, InvalidEnviron
from cslfisher.models.csl_model import SphereGeometry, crossover_gamma, eta_sphere, lambda_per_gamma
from cslfisher.models.optomech_dynamics import InvalidParameter, steady_state_for
from cslfisher.models.sweep_result import SweepResult, emit_csv, format_value
from cslfisher.models.sweeps import SweepRunner
from cslfisher.sweep_config import ParseError, SweepConfig, ValidationError, parse_config

logger = logging.getLogger(__name__)

HYBRID_DEFAULTS = {
    'sweep_axis': 'tau',
    'scale': 'log10',
    'min': '-3',
    'max': '0',
    'points': '61',
    'outputs': 'hybrid_fi, hybrid_qfi, tau_opt',
}
SQUEEZE_DEFAULTS = {
    'sweep_axis': 'squeeze_delta',
    'scale': 'linear',
    'min': '0',
    'max': '10',
    'points': '41',
}
QUADRATURES = ('q', 'p', 'X', 'Y')

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_ALL_ROWS_FAILED = 3


class CslFisher:
    """
    Front end for the CSL estimation sweeps. One public method per command line subcommand.
    """

    def __init__(self, test_mode: bool = False, jobs: int = None):
        self._config = ConfigurationService(test_mode, jobs=jobs)
        self._runner = SweepRunner(self._config)

    '''
    # Section - Public Methods
    '''

    def sweep(self, config_text: str, overrides: Iterable[str] = (), destination: TextIO = None) -> SweepResult:
        """
        Runs a config-driven sweep.

        Args:
            config_text: Contents of the sweep config file.
            overrides: `key=value` strings applied after the file.
            destination: Optional stream that receives the CSV.

        Returns:
            SweepResult
        """
        cfg = parse_config(config_text, overrides)
        return self._run(cfg, destination)

    def steady_state(self, config_text: str = '', overrides: Iterable[str] = (),
                     destination: TextIO = None) -> pd.DataFrame:
        """
        Steady-state covariance of one parameter set.

        Args:
            config_text: Config file contents; only the system parameters, gamma and lambda_per_gamma are used.
            overrides: `key=value` strings applied after the file.
            destination: Optional stream that receives the CSV.

        Returns:
            4x4 DataFrame indexed by the quadratures (q, p, X, Y).
        """
        cfg = parse_config(config_text, overrides, require_sweep=False)
        sigma = steady_state_for(cfg.base, self._lambda(cfg))
        df = pd.DataFrame(sigma, index=list(QUADRATURES), columns=list(QUADRATURES))
        if destination:
            writer = csv.writer(destination, lineterminator='\n')
            writer.writerow([''] + list(QUADRATURES))
            for name, row in df.iterrows():
                writer.writerow([name] + [format_value(x) for x in row])
        return df

    def eta(self, config_text: str = '', overrides: Iterable[str] = (), destination: TextIO = None) -> pd.DataFrame:
        """
        CSL diffusion rate, Lambda and the thermal crossover for the sphere implied by mass and material_density.

        Returns:
            DataFrame with columns quantity, value and unit.
        """
        cfg = parse_config(config_text, overrides, require_sweep=False)
        p = cfg.base
        geom = SphereGeometry.from_mass(p.mass, p.material_density)
        rows = [
            ('radius', geom.radius, 'm'),
            ('gamma', cfg.gamma, 'm^3/s'),
            ('eta', eta_sphere(geom, p.r_c, cfg.gamma), 'm^-2 s^-1'),
            ('lambda_per_gamma', lambda_per_gamma(p), 'm^-3'),
            ('Lambda', self._lambda(cfg), 'rad/s'),
            ('n_bar', p.n_bar, 'quanta'),
            ('crossover_gamma', crossover_gamma(p), 'm^3/s'),
        ]
        df = pd.DataFrame(rows, columns=['quantity', 'value', 'unit'])
        if destination:
            writer = csv.writer(destination, lineterminator='\n')
            writer.writerow(list(df.columns))
            for quantity, value, unit in rows:
                writer.writerow([quantity, format_value(value), unit])
        return df

    def hybrid(self, config_text: str = '', overrides: Iterable[str] = (), destination: TextIO = None) -> SweepResult:
        """
        Interaction-time sweep of the qubit probe, reporting tau_opt on every row.
        """
        cfg = parse_config(config_text, overrides, defaults=HYBRID_DEFAULTS)
        if cfg.sweep_axis != 'tau':
            raise ValidationError('sweep_axis', 'the hybrid command sweeps tau')
        return self._run(cfg, destination)

    def squeeze(self, config_text: str = '', overrides: Iterable[str] = (),
                destination: TextIO = None) -> SweepResult:
        """
        Squeezing study against the additive occupation delta.
        """
        cfg = parse_config(config_text, overrides, defaults=SQUEEZE_DEFAULTS)
        if cfg.sweep_axis != 'squeeze_delta':
            raise ValidationError('sweep_axis', 'the squeeze command sweeps squeeze_delta')
        return self._run(cfg, destination)

    '''
    # Section - Private Methods
    '''

    def _run(self, cfg: SweepConfig, destination: Union[TextIO, None]) -> SweepResult:
        result = self._runner.run_sweep(cfg)
        if destination:
            emit_csv(result, destination)
        return result

    @staticmethod
    def _lambda(cfg: SweepConfig) -> float:
        slope = cfg.lambda_per_gamma if cfg.lambda_per_gamma else lambda_per_gamma(cfg.base)
        return cfg.gamma * slope


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Sweep config file. Defaults to $CSLFISHER_CONFIG.')
    common.add_argument('--out', help='CSV destination. Defaults to stdout.')
    common.add_argument('--jobs', type=int, help='Worker processes. Defaults to $CSLFISHER_JOBS or the CPU count.')
    common.add_argument('--override', action='append', default=[], metavar='KEY=VALUE',
                        help='Config value applied after the file. Repeatable.')

    parser = argparse.ArgumentParser(prog='cslfisher', description='Fisher information of CSL-induced noise in '
                                                                   'linearized optomechanics.')
    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('sweep', parents=[common], help='Config-driven parameter sweep.')
    commands.add_parser('steady-state', parents=[common], help='Steady-state covariance for one parameter set.')
    commands.add_parser('eta', parents=[common], help='CSL diffusion rate and Lambda for the sphere geometry.')
    commands.add_parser('hybrid', parents=[common], help='Qubit probe interaction-time sweep.')
    commands.add_parser('squeeze', parents=[common], help='Squeezing study against the additive occupation.')
    return parser


def main(argv: List[str] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs is not None and args.jobs < 1:
        logger.error(f'--jobs must be at least 1, got {args.jobs}')
        return EXIT_CONFIG
    config = ConfigurationService(jobs=args.jobs)
    try:
        logging.basicConfig(level=config.log_level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
        app = CslFisher(jobs=config.jobs)
        path = args.config if args.config else config.default_config_path
    except InvalidEnviron as e:
        logger.error(e.message)
        return EXIT_CONFIG

    method = {
        'sweep': app.sweep,
        'steady-state': app.steady_state,
        'eta': app.eta,
        'hybrid': app.hybrid,
        'squeeze': app.squeeze,
    }[args.command]

    try:
        text = ''
        if path:
            with open(path, encoding='utf-8') as f:
                text = f.read()
        if args.out:
            with open(args.out, 'w', encoding='utf-8', newline='') as out:
                result = method(text, args.override, out)
        else:
            result = method(text, args.override, sys.stdout)
    except (ParseError, ValidationError, InvalidParameter) as e:
        logger.error(f'Invalid configuration: {e.message}')
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f'I/O error: {e}')
        return EXIT_IO

    if isinstance(result, SweepResult) and result.failed_rows == len(result.frame):
        logger.error(f'All {result.failed_rows} rows failed.')
        return EXIT_ALL_ROWS_FAILED
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
