import io
import math
import os
import tempfile
from unittest import TestCase, mock

import numpy as np
import pandas as pd

from cslfisher.main import (EXIT_ALL_ROWS_FAILED, EXIT_CONFIG, EXIT_IO, EXIT_OK, CslFisher, build_parser, main)
from cslfisher.models.csl_model import QuadratureFailure
from cslfisher.models.optomech_dynamics import InvalidParameter, SystemParams, steady_state_for
from cslfisher.models.sweep_result import SweepResult
from cslfisher.models.sweeps import ROW_ERRORS, SweepRunner, compute_row
from cslfisher.sweep_config import ValidationError, parse_config

SWEEP_CONFIG = """
# Mechanical and heterodyne information against the collapse rate.
sweep_axis = gamma
scale = linear
min = 0
max = 1e-27
points = 5
outputs = qfi_mech, fi_heterodyne, snr_mech, n_csl
"""
UNSTABLE = ['laser_power=1', 'delta=5e7']


class TestCslFisher(TestCase):

    def setUp(self):
        self._dir = tempfile.TemporaryDirectory()
        self.addCleanup(self._dir.cleanup)
        self.config_path = self._write('sweep.cfg', SWEEP_CONFIG)
        patcher = mock.patch.dict(os.environ, {}, clear=True)
        patcher.start()
        self.addCleanup(patcher.stop)

    def test__sweep(self):
        c = CslFisher(test_mode=True)
        out = io.StringIO()
        res = c.sweep(SWEEP_CONFIG, destination=out)

        lines = out.getvalue().splitlines()
        golden = 'gamma (m^3/s),Lambda (rad/s),qfi_mech (s^2),fi_heterodyne (s^2),snr_mech (1),n_csl (quanta)'
        self.assertEqual(golden, lines[0])
        self.assertEqual(6, len(lines))
        self.assertEqual(0, res.failed_rows)

        # Lambda is linear in gamma and the first row has no collapse noise.
        Lambda = res.frame['Lambda'].to_numpy()
        self.assertEqual(0.0, Lambda[0])
        np.testing.assert_allclose(np.linspace(0, 1, 5) * Lambda[-1], Lambda, rtol=1e-12)
        self.assertEqual(0.0, res.frame['snr_mech'][0])

        # Extra CSL phonons Lambda / (2 gamma_m) on top of the thermal occupation.
        p = SystemParams()
        golden = p.n_bar + Lambda[-1] / (2 * p.gamma_m)
        self.assertAlmostEqual(golden, res.frame['n_csl'].iloc[-1], places=9)

    def test__sweep_no_outputs(self):
        out = io.StringIO()
        CslFisher(test_mode=True).sweep(SWEEP_CONFIG, overrides=['outputs='], destination=out)
        self.assertEqual('gamma (m^3/s),Lambda (rad/s)', out.getvalue().splitlines()[0])

    def test__sweep_unstable_rows(self):
        out = io.StringIO()
        res = CslFisher(test_mode=True).sweep(SWEEP_CONFIG, overrides=UNSTABLE, destination=out)
        self.assertEqual(5, res.failed_rows)
        self.assertEqual(['unstable'] * 5, res.errors)

        row = out.getvalue().splitlines()[-1].split(',')
        self.assertEqual(1e-27, float(row[0]))
        self.assertTrue(math.isfinite(float(row[1])))
        self.assertEqual(['ERR:unstable'] * 4, row[2:])

    def test__compute_row_error_codes(self):
        cfg = parse_config(SWEEP_CONFIG)
        for error_type, code in ROW_ERRORS:
            if error_type is InvalidParameter:
                error = InvalidParameter('mass', 'must be positive')
            else:
                error = error_type('row failed')
            with self.subTest(error=error_type.__name__):
                with mock.patch('cslfisher.models.sweeps._outputs', side_effect=error):
                    values, test = compute_row((cfg, 1e-27))
                self.assertEqual(code, test)
                self.assertTrue(math.isfinite(values[0]))
                self.assertTrue(all(math.isnan(x) for x in values[1:]))

        with mock.patch('cslfisher.models.sweeps._outputs', side_effect=KeyError('qfi_mech')):
            with self.assertRaises(KeyError):
                compute_row((cfg, 1e-27))

    def test__main_numerical_row_failure(self):
        out = os.path.join(self._dir.name, 'quadrature.csv')
        with mock.patch('cslfisher.models.sweeps._outputs', side_effect=QuadratureFailure('no convergence')):
            test = main(['sweep', '--config', self.config_path, '--out', out, '--jobs', '1'])
        self.assertEqual(EXIT_ALL_ROWS_FAILED, test)
        with open(out, encoding='utf-8') as f:
            lines = f.read().splitlines()
        self.assertEqual(6, len(lines))
        self.assertEqual(['ERR:quadrature'] * 4, lines[-1].split(',')[2:])

    def test__steady_state(self):
        out = io.StringIO()
        df = CslFisher(test_mode=True).steady_state('', ['gamma=0'], out)
        golden = steady_state_for(SystemParams(), 0.0)
        np.testing.assert_array_equal(golden, df.to_numpy())

        lines = out.getvalue().splitlines()
        self.assertEqual(',q,p,X,Y', lines[0])
        test = pd.read_csv(io.StringIO(out.getvalue()), index_col=0).to_numpy()
        np.testing.assert_array_equal(golden, test)

    def test__eta(self):
        out = io.StringIO()
        df = CslFisher(test_mode=True).eta(destination=out)
        self.assertEqual(['quantity', 'value', 'unit'], list(df.columns))
        values = dict(zip(df['quantity'], df['value']))
        self.assertAlmostEqual(11.76e-6, values['radius'], delta=0.01e-6)
        self.assertAlmostEqual(values['gamma'] * values['lambda_per_gamma'], values['Lambda'], places=12)
        self.assertEqual('quantity,value,unit', out.getvalue().splitlines()[0])

    def test__hybrid(self):
        res = CslFisher(test_mode=True).hybrid('', ['points=21'])
        self.assertEqual('tau', res.axis)
        self.assertEqual(['tau', 'Lambda', 'hybrid_fi', 'hybrid_qfi', 'tau_opt'], list(res.frame.columns))
        self.assertEqual(0, res.failed_rows)

        tau_opt = res.frame['tau_opt'].to_numpy()
        np.testing.assert_array_equal(np.full(21, tau_opt[0]), tau_opt)

        # The population is the best measurement for a polar preparation.
        early = res.frame[res.frame['tau'] <= 0.2]
        np.testing.assert_allclose(early['hybrid_qfi'], early['hybrid_fi'], rtol=1e-8)

        best = res.frame['tau'][res.frame['hybrid_fi'].idxmax()]
        self.assertLessEqual(abs(math.log10(best) - math.log10(tau_opt[0])), 0.15 + 1e-12)

        with self.assertRaises(ValidationError) as e:
            CslFisher(test_mode=True).hybrid(SWEEP_CONFIG)
        self.assertEqual('sweep_axis', e.exception.key)

    def test__squeeze(self):
        out = io.StringIO()
        res = CslFisher(test_mode=True).squeeze('', ['points=3', 'max=2'], out)
        golden = ('squeeze_delta (quanta),qfi_unsqueezed (quanta^-2),qfi_squeezed (quanta^-2),'
                  'fi_unsqueezed (quanta^-2),fi_squeezed (quanta^-2)')
        self.assertEqual(golden, out.getvalue().splitlines()[0])
        self.assertEqual([0.0, 1.0, 2.0], list(res.frame['squeeze_delta']))

        res = CslFisher(test_mode=True).squeeze('', ['points=3', 'max=2', 'outputs=fi_squeezed'])
        self.assertEqual(['squeeze_delta', 'fi_squeezed'], list(res.frame.columns))

    def test__run(self):
        c = CslFisher(test_mode=True)
        c._runner = MockSweepRunner_test_run()
        out = io.StringIO()
        c.sweep(SWEEP_CONFIG, destination=out)
        lines = out.getvalue().splitlines()
        self.assertEqual('gamma (m^3/s),Lambda (rad/s),qfi_mech (s^2)', lines[0])
        self.assertEqual('0,0,0.5', lines[1])
        self.assertEqual('1,2.5,ERR:unstable', lines[2])
        self.assertEqual('2,ERR:invalid,ERR:invalid', lines[3])

    def test__main_deterministic(self):
        single = os.path.join(self._dir.name, 'single.csv')
        pooled = os.path.join(self._dir.name, 'pooled.csv')
        self.assertEqual(EXIT_OK, main(['sweep', '--config', self.config_path, '--out', single, '--jobs', '1']))
        self.assertEqual(EXIT_OK, main(['sweep', '--config', self.config_path, '--out', pooled, '--jobs', '8']))
        with open(single, 'rb') as a, open(pooled, 'rb') as b:
            self.assertEqual(a.read(), b.read())

    def test__main_exit_codes(self):
        out = os.path.join(self._dir.name, 'out.csv')

        test = main(['sweep', '--config', self.config_path, '--out', out, '--override', 'points=1'])
        self.assertEqual(EXIT_CONFIG, test)

        test = main(['sweep', '--config', os.path.join(self._dir.name, 'missing.cfg'), '--out', out])
        self.assertEqual(EXIT_IO, test)

        test = main(['sweep', '--config', self.config_path, '--out', out, '--jobs', '0'])
        self.assertEqual(EXIT_CONFIG, test)

        test = main(['sweep', '--config', self.config_path, '--out', out, '--jobs', '1',
                     '--override', UNSTABLE[0], '--override', UNSTABLE[1]])
        self.assertEqual(EXIT_ALL_ROWS_FAILED, test)
        with open(out, encoding='utf-8') as f:
            self.assertIn('ERR:unstable', f.read())

        with mock.patch.dict(os.environ, {'CSLFISHER_JOBS': 'all'}):
            self.assertEqual(EXIT_CONFIG, main(['eta', '--out', out]))

    def test__main_env_config(self):
        out = os.path.join(self._dir.name, 'env.csv')
        with mock.patch.dict(os.environ, {'CSLFISHER_CONFIG': self.config_path}):
            self.assertEqual(EXIT_OK, main(['sweep', '--out', out, '--jobs', '1']))
        with open(out, encoding='utf-8') as f:
            self.assertEqual(6, len(f.read().splitlines()))

    def test__build_parser(self):
        args = build_parser().parse_args(['hybrid', '--override', 'points=5', '--override', 'tau=0.1'])
        self.assertEqual('hybrid', args.command)
        self.assertEqual(['points=5', 'tau=0.1'], args.override)
        self.assertIsNone(args.jobs)

        with self.assertRaises(SystemExit):
            build_parser().parse_args([])

    def _write(self, name: str, text: str) -> str:
        path = os.path.join(self._dir.name, name)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
        return path


class MockSweepRunner_test_run(SweepRunner):
    """
    Returns a canned table so the CSV layout can be checked without running the model.
    """

    def __init__(self):
        super().__init__(jobs=1)

    def run_sweep(self, cfg):
        frame = pd.DataFrame({'gamma': [0.0, 1.0, 2.0], 'Lambda': [0.0, 2.5, math.nan],
                              'qfi_mech': [0.5, math.nan, math.nan]})
        return SweepResult(axis='gamma', axis_unit='m^3/s', columns=[('Lambda', 'rad/s'), ('qfi_mech', 's^2')],
                           frame=frame, errors=[None, 'unstable', 'invalid'])
