import numpy as np

from desvar.distributions import Distribution
from desvar.errors import InsufficientDataError, ValidationError
from desvar.estimators import (
    CvInput,
    PairedSeries,
    av_pair_series,
    crn_difference_variance,
    cv_adjust,
)
from desvar.streams import RandomStream, StreamMode
from tests.base_test import BaseTest


class TestCrn(BaseTest):
    def test_hand_examples(self):
        data = (
            ([(2, 1), (4, 3), (6, 5)], [1.0, 1.0, 1.0], 0.0),
            ([(1, 3), (2, 2), (3, 1)], [-2.0, 0.0, 2.0], 4.0),
            ([(1.5, 1.5), (7, 7), (3, 3)], [0.0, 0.0, 0.0], 0.0),
        )
        for pairs, d_series, var_d in data:
            with self.subTest(pairs=pairs):
                # Execute
                result = crn_difference_variance(PairedSeries(pairs))

                # Assert
                self.assertEqual(result.d_series, d_series)
                self.assertAlmostEqual(result.var_d, var_d, places=12)

    def test_decomposition_terms(self):
        # Execute
        result = crn_difference_variance(PairedSeries([(1, 3), (2, 2), (3, 1)]))

        # Assert
        self.assertAlmostEqual(result.var_a, 1.0)
        self.assertAlmostEqual(result.var_b, 1.0)
        self.assertAlmostEqual(result.cov_ab, -1.0)

    def test_identity_on_random_series(self):
        """Var(D) = Var(A) + Var(B) - 2 Cov(A, B) on arbitrary samples"""
        # Setup
        rng = np.random.default_rng(11)

        for _ in range(1000):
            n = int(rng.integers(2, 12))
            a = rng.normal(size=n) * 10
            b = 0.5 * a + rng.normal(size=n)

            # Execute
            result = crn_difference_variance(PairedSeries.from_series(a, b))

            # Assert
            expected = result.var_a + result.var_b - 2 * result.cov_ab
            self.assertLessEqual(abs(result.var_d - expected), 1e-12 * max(1.0, result.var_a + result.var_b))

    def test_insufficient_data(self):
        with self.assertRaises(InsufficientDataError):
            PairedSeries([(1, 2)])
        with self.assertRaises(ValidationError):
            PairedSeries.from_series([1, 2, 3], [1, 2])


class TestAv(BaseTest):
    def test_hand_examples(self):
        data = (
            ([(1, 3), (2, 2), (3, 1)], [2.0, 2.0, 2.0], 0.0, None, None, None),
            ([(1, 1), (3, 3)], [1.0, 3.0], 2.0, 2.0, 2.0, 2.0),
            ([(1, 4), (2, 1), (6, 3)], [2.5, 1.5, 4.5], 7 / 3, 7.0, 7 / 3, 0.0),
        )
        for pairs, y, var_y, var_x, var_xp, cov in data:
            with self.subTest(pairs=pairs):
                # Execute
                result = av_pair_series(PairedSeries(pairs))

                # Assert
                self.assertEqual(result.y_series, y)
                self.assertAlmostEqual(result.var_y, var_y, places=12)
                if var_x is not None:
                    self.assertAlmostEqual(result.var_x, var_x, places=12)
                    self.assertAlmostEqual(result.var_xp, var_xp, places=12)
                    self.assertAlmostEqual(result.cov, cov, places=12)

    def test_mean_is_average_of_means(self):
        # Setup
        pairs = PairedSeries([(1.0, 4.0), (2.5, 1.0), (6.0, 3.25), (0.5, 8.0)])

        # Execute
        result = av_pair_series(pairs)

        # Assert
        expected = (np.mean(pairs.first) + np.mean(pairs.second)) / 2
        self.assertAlmostEqual(result.mean_y, expected, places=12)

    def test_antithetic_pairs_beat_independent_draws(self):
        """50 antithetic pairs estimate an EXPO(1) mean better than 100 independent draws"""
        # Setup
        expo = Distribution.expo(1)
        antithetic_means, independent_means = [], []

        # Execute
        for macro in range(1000):
            direct = RandomStream(2 * macro)
            mirror = RandomStream(2 * macro, StreamMode.Antithetic)
            pairs = [(expo.sample(direct), expo.sample(mirror)) for _ in range(50)]
            antithetic_means.append(av_pair_series(PairedSeries(pairs)).mean_y)

            independent = RandomStream(2 * macro + 1)
            independent_means.append(np.mean([expo.sample(independent) for _ in range(100)]))

        # Assert
        ratio = np.var(antithetic_means, ddof=1) / np.var(independent_means, ddof=1)
        self.assertLessEqual(ratio, 0.8)


class TestCv(BaseTest):
    def test_perfect_linear_control(self):
        # Execute
        result = cv_adjust(CvInput([2, 4, 6], [1, 2, 3], expected_x=2))

        # Assert
        self.assertAlmostEqual(result.a_hat, 2.0)
        self.assertEqual(result.adjusted_series, [4.0, 4.0, 4.0])
        self.assertAlmostEqual(result.var_adjusted, 0.0)
        self.assertAlmostEqual(result.correlation, 1.0)

    def test_zero_covariance(self):
        # Execute
        result = cv_adjust(CvInput([5, 5, 5], [1, 7, 2]))

        # Assert
        self.assertEqual(result.a_hat, 0.0)
        self.assertEqual(result.adjusted_series, [5.0, 5.0, 5.0])
        self.assertIsNone(result.correlation)

    def test_degenerate_control_warns(self):
        # Execute
        with self.assertLogs("desvar", level="WARNING") as logs:
            result = cv_adjust(CvInput([1, 2, 4], [3, 3, 3]))

        # Assert
        self.assertEqual(result.a_hat, 0.0)
        self.assertEqual(result.adjusted_series, [1.0, 2.0, 4.0])
        self.assertTrue(any("degenerate control" in line for line in logs.output))

    def test_mean_preserved(self):
        # Setup
        rng = np.random.default_rng(5)

        for _ in range(50):
            y = rng.normal(size=10)
            x = y + rng.normal(size=10)

            # Execute
            result = cv_adjust(CvInput(y, x))

            # Assert
            self.assertAlmostEqual(np.mean(result.adjusted_series), np.mean(y), places=12)
            self.assertAlmostEqual(result.var_adjusted, np.var(result.adjusted_series, ddof=1), places=12)

    def test_a_hat_minimizes_variance(self):
        # Setup
        rng = np.random.default_rng(8)
        x = rng.normal(size=40)
        y = 2 * x + rng.normal(size=40)
        result = cv_adjust(CvInput(y, x))

        # Execute
        grid = result.a_hat + np.linspace(-0.5, 0.5, 21)
        variances = [np.var(y - a * (x - x.mean()), ddof=1) for a in grid]

        # Assert
        self.assertEqual(int(np.argmin(variances)), 10)

    def test_variance_ratio_matches_correlation(self):
        """Adjusted / raw variance is close to 1 - corr^2"""
        # Setup
        rng = np.random.default_rng(21)
        x = rng.normal(size=10000)
        y = 3 * x + rng.normal(scale=1.45, size=10000)

        # Execute
        result = cv_adjust(CvInput(y, x))

        # Assert
        self.assertGreater(result.correlation, 0.85)
        self.assertAlmostEqual(
            result.var_adjusted / result.var_raw, 1 - result.correlation**2, delta=0.02
        )

    def test_length_mismatch(self):
        with self.assertRaises(ValidationError):
            CvInput([1, 2, 3], [1, 2])
        with self.assertRaises(InsufficientDataError):
            CvInput([1], [1])
