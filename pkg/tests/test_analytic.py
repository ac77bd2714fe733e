import math
from unittest import TestCase
import numpy as np
from pydantic import ValidationError
from analytic import (BoundParams, ExtensionParams, UpdateLaw, alpha, blocking_finite, blocking_limit,
                      bound_derivative, bound_property_suite, erlang_loss, expected_admissions,
                      expected_admissions_alternate, expected_admissions_mc, expected_admissions_second_derivative,
                      extension_blocking_finite, extension_derived, extension_metrics, extension_open_closed_pmf,
                      messages_per_admitted_job, open_closed_from_load, open_closed_pmf, poisson_terms,
                      throughput_bound, truncated_poisson_probs)


class TestExpectedAdmissions(TestCase):

    def test_closed_forms_for_small_K(self):
        for tau in (0.1, 1.0, 3.0):
            self.assertAlmostEqual(1 - math.exp(-tau), expected_admissions(UpdateLaw(tau=tau, K=1)), places=12)
            self.assertAlmostEqual(2 - 2 * math.exp(-tau) - tau * math.exp(-tau),
                                   expected_admissions(UpdateLaw(tau=tau, K=2)), places=12)

    def test_both_forms_agree(self):
        for K in (1, 2, 3, 5, 10, 50):
            for tau in (1e-3, 0.5, 1.0, 7.0, 40.0):
                law = UpdateLaw(tau=tau, K=K)
                self.assertAlmostEqual(expected_admissions(law), expected_admissions_alternate(law), places=10)

    def test_bounded_by_K_and_tau(self):
        for K in (1, 2, 5):
            for tau in (0.01, 1.0, 100.0):
                m = expected_admissions(UpdateLaw(tau=tau, K=K))
                self.assertLess(m, min(K, tau) + 1e-12)
                self.assertGreater(m, 0)

    def test_small_tau_keeps_relative_accuracy(self):
        m = expected_admissions(UpdateLaw(tau=1e-12, K=3))
        self.assertAlmostEqual(1.0, m / 1e-12, places=6)

    def test_monte_carlo_matches(self):
        law = UpdateLaw(tau=1.5, K=3)
        mean, se = expected_admissions_mc(law, 200000, np.random.default_rng(5))
        self.assertLess(abs(mean - expected_admissions(law)), 5 * se)

    def test_second_derivative_matches_differences(self):
        law = UpdateLaw(tau=1.3, K=3)
        h = 1e-4
        values = [expected_admissions(UpdateLaw(tau=law.tau + x * h, K=3)) for x in (-1, 0, 1)]
        numeric = (values[0] - 2 * values[1] + values[2]) / h ** 2
        self.assertAlmostEqual(expected_admissions_second_derivative(law), numeric, places=5)

    def test_invalid_tau_rejected(self):
        for tau in (0.0, -1.0, math.inf):
            with self.assertRaises(ValidationError):
                UpdateLaw(tau=tau, K=2)
        with self.assertRaises(ValidationError):
            UpdateLaw(tau=1.0, K=0)


class TestPoissonTerms(TestCase):

    def test_terms_sum_to_one(self):
        self.assertAlmostEqual(1.0, poisson_terms(3.0, 60).sum(), places=12)

    def test_alpha(self):
        self.assertAlmostEqual(math.exp(-2.0) * (1 + 2 + 2), alpha(2, 2.0), places=12)
        self.assertEqual(1.0, alpha(0, 0.0))
        with self.assertRaises(ValueError):
            alpha(1.5, 1.0)
        with self.assertRaises(ValueError):
            alpha(-1, 1.0)

    def test_large_tau_is_finite(self):
        terms = poisson_terms(1000.0, 1200)
        self.assertTrue(np.all(np.isfinite(terms)))
        self.assertAlmostEqual(1.0, terms.sum(), places=6)


class TestThroughputBound(TestCase):

    def test_reference_values(self):
        self.assertAlmostEqual(1 - math.exp(-1), throughput_bound(BoundParams(delta=1.0, K=1)), places=12)
        self.assertAlmostEqual(2 - 3 * math.exp(-1), throughput_bound(BoundParams(delta=1.0, K=2)), places=12)
        self.assertAlmostEqual(0.5 * (1 - math.exp(-2)), throughput_bound(BoundParams(delta=0.5, K=1)), places=12)

    def test_speed_scales_tau(self):
        value = throughput_bound(BoundParams(delta=1.0, K=2, mu_bar=2.0))
        self.assertAlmostEqual(expected_admissions(UpdateLaw(tau=2.0, K=2)), value, places=12)

    def test_derivative(self):
        params = BoundParams(delta=0.7, K=3)
        h = 1e-6
        numeric = (throughput_bound(BoundParams(delta=0.7 + h, K=3))
                   - throughput_bound(BoundParams(delta=0.7 - h, K=3))) / (2 * h)
        self.assertAlmostEqual(numeric, bound_derivative(params), places=6)
        self.assertAlmostEqual(3 * (1 - alpha(3, 1 / 0.7)), bound_derivative(params), places=12)

    def test_bound_stays_below_mean_speed(self):
        for K in range(1, 12):
            for delta in np.logspace(0, 5, 60):
                value = throughput_bound(BoundParams(delta=delta, K=K))
                self.assertTrue(0 < value < 1.0, (delta, K, value))
        self.assertLess(throughput_bound(BoundParams(delta=1e4, K=5)), 1.0)
        self.assertLess(throughput_bound(BoundParams(delta=1e4, K=10, mu_bar=2.0)), 2.0)
        self.assertLessEqual(expected_admissions(UpdateLaw(tau=1e5, K=3)), 3)

    def test_property_suite_passes(self):
        report = bound_property_suite(list(np.linspace(0.05, 3.0, 30)), [1, 2, 3, 5, 10])
        self.assertTrue(report.passed, [x.name for x in report.failures])
        self.assertIn("utilization_per_K_messages", [x.name for x in report.checks])

    def test_property_suite_rejects_empty_grid(self):
        with self.assertRaises(ValueError):
            bound_property_suite([], [1])


class TestOpenClosed(TestCase):

    def test_truncated_poisson(self):
        p = truncated_poisson_probs(1.0, 2)
        e = math.exp(-1)
        np.testing.assert_allclose(p, [1 - 2 * e, e, e], atol=1e-12)
        np.testing.assert_allclose(truncated_poisson_probs(0.0, 3), [0, 0, 0, 1])

    def test_small_load(self):
        np.testing.assert_allclose(open_closed_from_load(2.0, 2), [0.4, 0.4, 0.2], atol=1e-12)

    def test_erlang_loss(self):
        self.assertAlmostEqual(0.5, erlang_loss(1.0, 1), places=12)
        self.assertAlmostEqual(0.4, erlang_loss(2.0, 2), places=12)
        self.assertAlmostEqual(open_closed_from_load(37.5, 50)[0], erlang_loss(37.5, 50), places=12)

    def test_large_N_finite(self):
        probs = open_closed_from_load(0.9 * 100000, 100000)
        self.assertTrue(np.all(np.isfinite(probs)))
        self.assertAlmostEqual(1.0, probs.sum(), places=9)

    def test_pmf_and_blocking_agree(self):
        law = UpdateLaw(tau=1.0, K=2)
        pmf = open_closed_pmf(20, 0.8, law)
        self.assertEqual(21, len(pmf))
        self.assertAlmostEqual(pmf[0], blocking_finite(20, 0.8, law), places=12)

    def test_blocking_tends_to_limit(self):
        law = UpdateLaw(tau=1.0, K=2)
        limit = blocking_limit(1.2, 1.0, 2)
        self.assertAlmostEqual(1 - (2 - 3 * math.exp(-1)) / 1.2, limit, places=12)
        self.assertAlmostEqual(limit, blocking_finite(100000, 1.2, law), places=3)
        self.assertEqual(0.0, blocking_limit(0.5, 1.0, 2))
        self.assertLess(blocking_finite(100000, 0.5, law), 1e-6)

    def test_invalid_population_rejected(self):
        law = UpdateLaw(tau=1.0, K=2)
        with self.assertRaises(ValueError):
            open_closed_pmf(0, 0.5, law)
        with self.assertRaises(ValueError):
            blocking_finite(10, 0.0, law)

    def test_messages_per_job(self):
        self.assertAlmostEqual(1 / (1 - math.exp(-1)), messages_per_admitted_job(UpdateLaw(tau=1.0, K=1)),
                               places=12)


class TestExtension(TestCase):

    def test_derived_probabilities(self):
        d = extension_derived(ExtensionParams(tau1=0.5, tau2=1.0, tau3=2.0))
        self.assertAlmostEqual(1.0, d.p20 + d.p21 + d.p22, places=12)
        self.assertAlmostEqual(1.0, d.q20 + d.q21 + d.q22, places=12)
        self.assertTrue(min(d.p20, d.p21, d.p22, d.q20, d.q21, d.q22) >= 0)
        self.assertAlmostEqual(math.exp(-1.5), d.p22, places=12)
        self.assertAlmostEqual(math.exp(-2.0), d.q22, places=12)

    def test_metrics_reference(self):
        e = math.exp(-1)
        p20 = e * (1 - 2 * e) + (1 - e) ** 2
        kappa3 = e * e / (1 - e)
        gamma = p20 + kappa3 * (1 - 2 * e) + 1
        lambda_star, u, q = extension_metrics(ExtensionParams(tau1=1.0, tau2=1.0, tau3=1.0))
        self.assertAlmostEqual(gamma / (2 + kappa3), lambda_star, places=12)
        self.assertAlmostEqual((1 + kappa3) / gamma, u, places=12)
        self.assertAlmostEqual(e / gamma, q, places=12)

    def test_zero_first_cooldown(self):
        lambda_star, u, q = extension_metrics(ExtensionParams(tau1=0.0, tau2=1.0, tau3=1.0))
        self.assertGreater(lambda_star, 0)
        self.assertGreater(q, 0)

    def test_tau3_zero_rejected(self):
        with self.assertRaises(ValidationError) as ctx:
            ExtensionParams(tau1=1.0, tau2=1.0, tau3=0.0)
        self.assertIn("q22", str(ctx.exception))

    def test_pmf_and_blocking_agree(self):
        params = ExtensionParams(tau1=0.5, tau2=1.0, tau3=1.0)
        pmf = extension_open_closed_pmf(30, 0.6, params)
        self.assertAlmostEqual(1.0, pmf.sum(), places=12)
        self.assertAlmostEqual(pmf[0], extension_blocking_finite(30, 0.6, params), places=12)

    def test_reduces_to_baseline_without_first_cooldown(self):
        for tau in (0.5, 1.0, 2.0):
            _, u, _ = extension_metrics(ExtensionParams(tau1=0.0, tau2=tau, tau3=tau))
            self.assertAlmostEqual(1 / expected_admissions(UpdateLaw(tau=tau, K=2)), u, places=12)
        lambda_star, _, _ = extension_metrics(ExtensionParams(tau1=0.0, tau2=1.0, tau3=1.0))
        self.assertAlmostEqual(throughput_bound(BoundParams(delta=1.0, K=2)), lambda_star, places=12)

    def test_longer_first_cooldown(self):
        results = [extension_metrics(ExtensionParams(tau1=t, tau2=1.0, tau3=1.0)) for t in np.linspace(0, 3, 13)]
        q = [x.q for x in results]
        self.assertTrue(all(b < a for a, b in zip(q, q[1:])))
        self.assertTrue(all(x.lambda_star_ext < results[0].lambda_star_ext for x in results[1:]))


class TestReferenceValues(TestCase):

    def test_bound_values(self):
        self.assertAlmostEqual(0.73, throughput_bound(BoundParams(delta=0.5, K=2)), delta=0.005)
        self.assertAlmostEqual(0.90, throughput_bound(BoundParams(delta=1.0, K=2)), delta=0.005)
        self.assertAlmostEqual(0.39, throughput_bound(BoundParams(delta=0.2, K=2)), delta=0.005)

    def test_K2_identity(self):
        for delta in np.linspace(0.1, 5.0, 50):
            e = math.exp(-1 / delta)
            expected = 2 * delta - 2 * delta * e - e
            self.assertLess(abs(throughput_bound(BoundParams(delta=delta, K=2)) - expected), 1e-12)
