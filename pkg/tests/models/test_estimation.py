import math
from unittest import TestCase

import numpy as np

from cslfisher.models.estimation import (HETERODYNE, HOMODYNE, FisherResult, HomodyneNotFinite, MeasurementSpec,
                                         NearPure, PureStateDivergence, SingularMeasCov, fisher_gaussian,
                                         fisher_gaussian_grid, gaussian_fidelity, gaussian_meas_cov, qfi_fidelity,
                                         qfi_single_mode, qfi_sld, qfi_sld_moments, reparameterize, rotation, snr)
from cslfisher.models.csl_model import lambda_per_gamma
from cslfisher.models.optomech_dynamics import (SystemParams, blocks, dsigma_dLambda, mech_coefficients, mech_qfi,
                                                steady_state_for)
from cslfisher.models.symplectic_core import GaussianState

SIGMA = np.array([[2.0, 0.3], [0.3, 1.0]])
DSIGMA = np.array([[1.0, 0.2], [0.2, 0.5]])


class TestEstimation(TestCase):

    def test__fisher_result(self):
        test = FisherResult(-1e-18)
        self.assertEqual(0.0, test.value)
        self.assertEqual('Lambda', test.parameter)

    def test__measurement_spec(self):
        spec = MeasurementSpec(1.0, 4.0)
        self.assertAlmostEqual(4.0 - math.pi, spec.theta, places=14)
        self.assertTrue(spec.is_heterodyne)
        self.assertEqual('heterodyne', spec.label)
        self.assertTrue(MeasurementSpec(HOMODYNE).is_homodyne)

        with self.assertRaises(ValueError):
            MeasurementSpec(-1.0)

    def test__gaussian_meas_cov(self):
        np.testing.assert_allclose(0.5 * np.eye(2), gaussian_meas_cov(MeasurementSpec(HETERODYNE, 0.7)), atol=1e-15)

        test = gaussian_meas_cov(MeasurementSpec(4.0, 0.0))
        np.testing.assert_allclose(np.diag([2.0, 0.125]), test, atol=1e-15)
        self.assertAlmostEqual(0.25, np.linalg.det(gaussian_meas_cov(MeasurementSpec(0.3, 1.1))), places=14)

        with self.assertRaises(HomodyneNotFinite):
            gaussian_meas_cov(MeasurementSpec(HOMODYNE))

    def test__thermal_closed_forms(self):
        for n in (0.5, 1.0, 3.0, 100.0):
            sigma = (n + 0.5) * np.eye(2)
            dsigma = np.eye(2)

            test = qfi_single_mode(sigma, dsigma).value
            golden = 1 / (n * (n + 1))
            np.testing.assert_allclose(golden, test, rtol=1e-10)

            test = fisher_gaussian(sigma, dsigma, MeasurementSpec(HETERODYNE)).value
            golden = 1 / (n + 1) ** 2
            np.testing.assert_allclose(golden, test, rtol=1e-12)

            for theta in (0.0, 0.9, 2.5):
                test = fisher_gaussian(sigma, dsigma, MeasurementSpec(HOMODYNE, theta)).value
                golden = 1 / (2 * (n + 0.5) ** 2)
                np.testing.assert_allclose(golden, test, rtol=1e-12)

        test = qfi_single_mode(1.5 * np.eye(2), np.eye(2)).value
        self.assertAlmostEqual(0.5, test, places=10)

    def test__homodyne_limit(self):
        for theta in (0.0, 0.7, 2.0):
            golden = fisher_gaussian(SIGMA, DSIGMA, MeasurementSpec(HOMODYNE, theta)).value
            test = fisher_gaussian(SIGMA, DSIGMA, MeasurementSpec(1e-7, theta)).value
            np.testing.assert_allclose(golden, test, rtol=1e-5)

    def test__singular_meas_cov(self):
        with self.assertRaises(SingularMeasCov):
            fisher_gaussian(np.diag([0.0, 1.0]), np.eye(2), MeasurementSpec(HOMODYNE, 0.0))

    def test__fisher_gaussian_grid(self):
        l_values = [HOMODYNE, 0.1, 1.0, 7.0]
        thetas = [0.0, 0.4, 2.0]
        grid = fisher_gaussian_grid(SIGMA, DSIGMA, l_values, thetas)
        self.assertEqual((4, 3), grid.shape)
        for i, l in enumerate(l_values):
            for j, theta in enumerate(thetas):
                golden = fisher_gaussian(SIGMA, DSIGMA, MeasurementSpec(l, theta)).value
                np.testing.assert_allclose(golden, grid[i, j], rtol=1e-10)

    def test__rotation_invariance(self):
        phi = 0.8
        R = rotation(phi)
        sigma = R @ SIGMA @ R.T
        dsigma = R @ DSIGMA @ R.T
        for l in (HOMODYNE, 0.3, 1.0, 5.0):
            golden = fisher_gaussian(SIGMA, DSIGMA, MeasurementSpec(l, 0.5)).value
            test = fisher_gaussian(sigma, dsigma, MeasurementSpec(l, 0.5 + phi)).value
            np.testing.assert_allclose(golden, test, rtol=1e-10)

        golden = qfi_single_mode(SIGMA, DSIGMA).value
        test = qfi_single_mode(sigma, dsigma).value
        np.testing.assert_allclose(golden, test, rtol=1e-10)

    def test__cramer_rao_random(self):
        rng = np.random.default_rng(17)
        l_values = np.concatenate([[HOMODYNE], np.logspace(-3, 3, 25)])
        thetas = np.linspace(0, math.pi, 37)
        for _ in range(50):
            sigma, dsigma = _random_family(rng)
            bound = qfi_single_mode(sigma, dsigma).value
            grid = fisher_gaussian_grid(sigma, dsigma, l_values, thetas)
            self.assertLessEqual(grid.max(), bound * (1 + 1e-9))

    def test__cramer_rao_optical_block(self):
        p = SystemParams()
        dsigma_l = blocks(dsigma_dLambda(p))[1]
        l_values = np.concatenate([[HOMODYNE], np.logspace(-3, 3, 25)])
        thetas = np.linspace(0, math.pi, 37)
        for Lambda in (0.0, 1.0, 1e3, 1e5):
            sigma_l = blocks(steady_state_for(p, Lambda))[1]
            bound = qfi_single_mode(sigma_l, dsigma_l).value
            grid = fisher_gaussian_grid(sigma_l, dsigma_l, l_values, thetas)
            self.assertLessEqual(grid.max(), bound * (1 + 1e-9))

    def test__homodyne_beats_heterodyne_optical(self):
        # The optical mode stays close to vacuum, where the best quadrature wins over heterodyne.
        p = SystemParams()
        dsigma_l = blocks(dsigma_dLambda(p))[1]
        thetas = np.linspace(0, math.pi, 181)
        for Lambda in (0.0, 1.0, 1e3):
            sigma_l = blocks(steady_state_for(p, Lambda))[1]
            homodyne = fisher_gaussian_grid(sigma_l, dsigma_l, [HOMODYNE], thetas)[0].max()
            heterodyne = fisher_gaussian(sigma_l, dsigma_l, MeasurementSpec(HETERODYNE)).value
            self.assertGreater(homodyne, heterodyne)

    def test__qfi_routes_agree_random(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            sigma0, dsigma = _random_family(rng)

            def state_fn(x, sigma0=sigma0, dsigma=dsigma):
                return GaussianState.zero_mean(sigma0 + x * dsigma)

            golden = qfi_single_mode(sigma0 + dsigma, dsigma).value
            test = qfi_sld(state_fn, 1.0, affine=True).value
            np.testing.assert_allclose(golden, test, rtol=1e-6)
            test = qfi_fidelity(state_fn, 1.0).value
            np.testing.assert_allclose(golden, test, rtol=1e-6)

    def test__qfi_routes_agree_mechanical(self):
        for mass in (15e-12, 150e-12, 500e-12):
            c = mech_coefficients(SystemParams(mass=mass))

            def state_fn(x, c=c):
                return GaussianState.zero_mean(c.sigma_m(x))

            golden = qfi_single_mode(c.sigma_m(1.0), np.diag([c.beta1, c.beta2])).value
            test = qfi_sld(state_fn, 1.0, affine=True).value
            np.testing.assert_allclose(golden, test, rtol=1e-6)
            test = qfi_sld(state_fn, 1.0).value
            np.testing.assert_allclose(golden, test, rtol=1e-6)
            test = qfi_fidelity(state_fn, 1.0).value
            np.testing.assert_allclose(golden, test, rtol=1e-6)

    def test__singular_derivative_uses_sld(self):
        sigma = np.diag([2.0, 1.0])
        dsigma = np.diag([1.0, 0.0])
        test = qfi_single_mode(sigma, dsigma).value
        golden = qfi_sld_moments(sigma, dsigma).value
        np.testing.assert_allclose(golden, test, rtol=1e-12)

        # Equals the classical value plus the quantum correction, so it exceeds the homodyne information of q.
        homodyne = fisher_gaussian(sigma, dsigma, MeasurementSpec(HOMODYNE, 0.0)).value
        self.assertGreater(test, homodyne)

    def test__two_mode_product_thermal(self):
        sigma = np.diag([1.5, 1.5, 2.5, 2.5])
        dsigma = np.eye(4)
        test = qfi_sld_moments(sigma, dsigma).value
        golden = (qfi_sld_moments(sigma[:2, :2], dsigma[:2, :2]).value
                  + qfi_sld_moments(sigma[2:, 2:], dsigma[2:, 2:]).value)
        np.testing.assert_allclose(golden, test, rtol=1e-10)
        np.testing.assert_allclose(1 / 2 + 1 / 6, test, rtol=1e-10)

    def test__two_mode_steady_state(self):
        p = SystemParams()
        for Lambda in (0.0, 1.0):
            test = qfi_sld_moments(steady_state_for(p, Lambda), dsigma_dLambda(p)).value
            golden = mech_qfi(p, Lambda).value
            self.assertGreaterEqual(test, golden * (1 - 1e-9))
            np.testing.assert_allclose(golden, test, rtol=1e-3)

    def test__plateau_and_knee(self):
        p = SystemParams()
        slope = lambda_per_gamma(p)
        dsigma_m, dsigma_l, _ = blocks(dsigma_dLambda(p))

        def qfi_pair(gamma):
            sigma_m, sigma_l, _ = blocks(steady_state_for(p, gamma * slope))
            return _qfi(sigma_m, dsigma_m), _qfi(sigma_l, dsigma_l)

        plateau = np.array([qfi_pair(gamma) for gamma in np.logspace(-36, -30, 7)])
        for column in plateau.T:
            self.assertLess((column.max() - column.min()) / column.max(), 1e-3)

        knee = np.array([qfi_pair(gamma) for gamma in np.logspace(-27, -24, 13)])
        for column in knee.T:
            self.assertTrue(np.all(np.diff(column) < 0))

    def test__snr_decreases_with_mass_frequency_and_temperature(self):
        base = SystemParams()
        grids = {
            'mass': [base.with_values(mass=m) for m in np.logspace(math.log10(5e-12), math.log10(500e-12), 6)],
            'omega_m': [base.with_values(omega_m=w, gamma_m=w / 1e5)
                        for w in base.omega_m * np.array([0.5, 1.0, 2.0, 4.0, 7.0, 10.0])],
            'temperature': [base.with_values(temperature=t) for t in np.logspace(-4, 0, 6)],
        }
        for axis, params in grids.items():
            table = np.array([_snr_triple(p, 1e-28 * lambda_per_gamma(p)) for p in params])
            for name, column in zip(('mech', 'opt', 'homodyne'), table.T):
                with self.subTest(axis=axis, snr=name):
                    self.assertTrue(np.all(np.diff(column) < 0))

    def test__homodyne_saturation(self):
        # Below saturation at 1 K and the reference coupling.
        _, opt, homodyne = _snr_triple(SystemParams(temperature=1.0), 1.0)
        self.assertAlmostEqual(0.778, homodyne / opt, delta=0.01)

        # Saturated once the mechanical noise is classical, by temperature or by collapse noise.
        for p, Lambda in ((SystemParams(temperature=10.0), 1.0), (SystemParams(temperature=1.0), 1e8)):
            _, opt, homodyne = _snr_triple(p, Lambda)
            self.assertGreaterEqual(homodyne / opt, 0.9)
            self.assertLessEqual(homodyne / opt, 1 + 1e-9)

    def test__displacement_family(self):
        def state_fn(x):
            return GaussianState(np.array([x, 0.0]), 0.5 * np.eye(2))

        test = qfi_sld(state_fn, 0.3, affine=True).value
        self.assertAlmostEqual(2.0, test, places=10)

        test = qfi_fidelity(state_fn, 0.3).value
        np.testing.assert_allclose(2.0, test, rtol=1e-6)

    def test__near_pure(self):
        with self.assertRaises(NearPure):
            qfi_single_mode(0.5 * np.eye(2), np.eye(2))

        with self.assertRaises(PureStateDivergence):
            qfi_sld_moments(0.5 * np.eye(2), np.eye(2))

    def test__qfi_fidelity_constant_family(self):
        def state_fn(x):
            return GaussianState.zero_mean(2.0 * np.eye(2))

        self.assertEqual(0.0, qfi_fidelity(state_fn, 1.0).value)

    def test__gaussian_fidelity(self):
        a = GaussianState.zero_mean(SIGMA)
        self.assertAlmostEqual(1.0, gaussian_fidelity(a, a), places=12)

        vacuum = GaussianState.zero_mean(0.5 * np.eye(2))
        shifted = GaussianState(np.array([0.6, -0.8]), 0.5 * np.eye(2))
        test = gaussian_fidelity(vacuum, shifted)
        golden = math.exp(-0.25)
        self.assertAlmostEqual(golden, test, places=12)

        b = GaussianState.zero_mean(SIGMA + 0.1 * np.eye(2))
        self.assertLess(gaussian_fidelity(a, b), 1.0)
        self.assertAlmostEqual(gaussian_fidelity(a, b), gaussian_fidelity(b, a), places=14)

    def test__snr(self):
        test = snr(2.0, FisherResult(3.0))
        golden = 12.0
        self.assertEqual(golden, test)

    def test__reparameterize(self):
        test = reparameterize(FisherResult(2.0), 3.0)
        self.assertEqual(18.0, test.value)
        self.assertEqual('gamma', test.parameter)

        # The signal-to-noise ratio does not depend on the parameterization.
        Lambda, slope = 5.0, 4.0
        fisher = FisherResult(0.7)
        self.assertAlmostEqual(snr(Lambda, fisher), snr(Lambda / slope, reparameterize(fisher, slope)), places=12)

        with self.assertRaises(ValueError):
            reparameterize(FisherResult(2.0), 0.0)


def _random_family(rng: np.random.Generator):
    """
    A mixed single-mode covariance and a positive definite derivative, so sigma + x dsigma stays physical for x >= 0.
    """
    d = rng.uniform(1.0, 3.0)
    r = rng.uniform(-0.3, 0.3)
    S = rotation(rng.uniform(0, math.pi)) @ np.diag([math.exp(r), math.exp(-r)])
    sigma = d * S @ S.T
    B = rng.normal(size=(2, 2))
    dsigma = 0.1 * B @ B.T + 0.1 * np.eye(2)
    return (sigma + sigma.T) / 2, (dsigma + dsigma.T) / 2


def _qfi(sigma: np.ndarray, dsigma: np.ndarray) -> float:
    try:
        return qfi_single_mode(sigma, dsigma).value
    except NearPure:
        return qfi_sld_moments(sigma, dsigma).value


def _snr_triple(p: SystemParams, Lambda: float):
    """
    Mechanical and optical quantum SNR, and the SNR of homodyne detection at the best angle.
    """
    sigma_m, sigma_l, _ = blocks(steady_state_for(p, Lambda))
    dsigma_m, dsigma_l, _ = blocks(dsigma_dLambda(p))
    thetas = np.linspace(0, math.pi, 1801)
    homodyne = fisher_gaussian_grid(sigma_l, dsigma_l, [HOMODYNE], thetas)[0].max()
    return (snr(Lambda, FisherResult(_qfi(sigma_m, dsigma_m))), snr(Lambda, FisherResult(_qfi(sigma_l, dsigma_l))),
            snr(Lambda, FisherResult(homodyne)))
