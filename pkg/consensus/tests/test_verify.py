import json
import math
import tempfile
import time
from pathlib import Path
from types import SimpleNamespace
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from consensus.services import verify
from consensus.services.verify import (
    CheckReport, check_convergence, check_gradient_expansion, check_preset_reproduction,
    check_stability_estimates, check_support_bound, check_variational_taylor, fv_error, run_suite,
    suite_passed, write_report,
)


class CheckReportTests(SimpleTestCase):

    def test_pass_rule(self):
        self.assertTrue(CheckReport('a', 1.0, 2.0).passed)
        self.assertFalse(CheckReport('a', 3.0, 2.0).passed)
        self.assertTrue(CheckReport('a', 2.05, 2.0, relative_slack=0.05).passed)
        self.assertTrue(CheckReport('a', 3.0, 2.0, absolute_slack=1.5).passed)
        self.assertFalse(CheckReport('a', 1.0, 2.0, conditions={'monotone': False}).passed)

    def test_inflated_lhs_fails(self):
        report = CheckReport('a', 1.0, 2.0, relative_slack=0.1)
        inflated = report.with_inflated_lhs()
        self.assertAlmostEqual(inflated.lhs, 4.4)
        self.assertFalse(inflated.passed)
        self.assertTrue(report.run_self_test())
        self.assertTrue(report.self_test_failed)

    def test_zero_report_is_still_self_tested(self):
        report = CheckReport('empty', 0.0, 0.0)
        self.assertTrue(report.passed)
        self.assertEqual(report.with_inflated_lhs().lhs, 1.0)
        self.assertTrue(report.run_self_test())

    def test_to_dict(self):
        data = CheckReport('a', 1.0, 2.0, resolutions=[100], orders=[1.1]).to_dict()
        self.assertEqual(
            sorted(data),
            ['check', 'conditions', 'lhs', 'orders', 'params', 'pass', 'resolutions', 'rhs', 'self_test_failed'],
        )
        self.assertTrue(data['pass'])
        self.assertIsNone(data['self_test_failed'])

    def test_suite_passed(self):
        good = CheckReport('a', 1.0, 2.0)
        good.run_self_test()
        vacuous = CheckReport('b', 1.0, 2.0, self_test_failed=False)
        self.assertTrue(suite_passed([good]))
        self.assertFalse(suite_passed([good, vacuous]))
        self.assertFalse(suite_passed([good, CheckReport('c', 5.0, 1.0)]))


class AnalyticCheckTests(SimpleTestCase):
    """Each estimate holds at its default setting and would catch an inflated left-hand side."""

    def assertSound(self, report):
        report.run_self_test()
        self.assertTrue(report.passed, report.to_dict())
        self.assertTrue(report.self_test_failed)

    def test_support_bound(self):
        report = check_support_bound()
        self.assertSound(report)
        self.assertGreater(report.lhs, 0.0)
        self.assertEqual(report.resolutions, [200])

    def test_stability_estimates(self):
        reports = check_stability_estimates()
        self.assertEqual([r.check for r in reports],
                         ['characteristic_stability', 'density_stability', 'local_stability'])
        for report in reports:
            self.assertSound(report)
            self.assertGreater(report.lhs, 0.0)

    def test_gradient_expansion(self):
        report = check_gradient_expansion()
        self.assertSound(report)
        self.assertGreater(report.params['fitted_order'], 2.0)
        self.assertEqual(len(report.params['deviations']), 3)

    def test_variational_taylor(self):
        report = check_variational_taylor()
        self.assertSound(report)
        errors = report.params['errors']
        self.assertLess(errors[-1], errors[0])


class ConvergenceTests(SimpleTestCase):

    def test_error_decreases_with_refinement(self):
        self.assertGreater(fv_error(50, 0.5), fv_error(100, 0.5))

    def test_inert_agent_is_exact(self):
        report = check_convergence(resolutions=(20, 40), strength=0.0)
        self.assertEqual(report.orders, [])
        self.assertEqual(report.params['errors'], [0.0, 0.0])
        self.assertTrue(report.passed)

    def test_first_order_on_a_reduced_ladder(self):
        report = check_convergence(resolutions=(50, 100, 200))
        report.run_self_test()
        self.assertTrue(report.passed, report.to_dict())
        self.assertTrue(report.self_test_failed)
        self.assertEqual(len(report.orders), 2)
        for order in report.orders:
            self.assertTrue(0.7 <= order <= 1.3, report.orders)
        self.assertEqual(report.params['ramp_width'], 2.0)
        self.assertEqual(report.params['t'], 0.25)


class ReproductionTests(SimpleTestCase):

    def reproduce(self, costs):
        trace = SimpleNamespace(final_costs=np.array(costs), masses=np.array([8.0, 8.0]))
        with mock.patch('consensus.services.verify.run_game', return_value=trace):
            return check_preset_reproduction('two-attractive', n=20)

    def test_close_costs_in_reference_order_pass(self):
        report = self.reproduce([40.0, 30.0])
        self.assertTrue(report.passed, report.to_dict())
        self.assertAlmostEqual(report.lhs, (40.0 - 36.41) / 36.41)
        self.assertEqual(report.params['reference'], {'J_1': 36.41, 'J_2': 32.65})
        self.assertEqual(report.params['agents'][1]['gradient'], 'descent')
        self.assertTrue(report.run_self_test())

    def test_measured_costs_are_reported_as_failures(self):
        report = self.reproduce([54.0, 61.5])
        self.assertFalse(report.passed)
        self.assertFalse(report.conditions['second_below_first'])
        self.assertEqual(report.check, 'reproduction_two-attractive')

    def test_suite_covers_every_preset(self):
        self.assertEqual(len(verify._suite_jobs('reproduction')), len(verify.PRESETS))
        self.assertNotIn('reproduction', verify.SUITES)


class RunSuiteTests(SimpleTestCase):

    def job(self, name, delay):
        def run():
            time.sleep(delay)
            return [CheckReport(name, 1.0, 2.0)]
        return run

    def test_reports_keep_suite_order(self):
        jobs = {
            'support': [self.job('s1', 0.05), self.job('s2', 0.0)],
            'gradient': [self.job('g1', 0.02)],
        }
        with mock.patch('consensus.services.verify._suite_jobs', side_effect=lambda name: jobs[name]):
            reports = run_suite(['support', 'gradient'], threads=4)
        self.assertEqual([r.check for r in reports], ['s1', 's2', 'g1'])
        self.assertTrue(all(r.self_test_failed for r in reports))

    def test_unknown_suite(self):
        with self.assertRaises(ValueError):
            verify._suite_jobs('everything')

    def test_write_report(self):
        report = CheckReport('a', 1.0, 2.0, params={'C': math.e})
        report.run_self_test()
        with tempfile.TemporaryDirectory() as tmp:
            path = write_report([report], Path(tmp) / 'verify')
            data = json.loads(path.read_text())
        self.assertEqual(path.name, 'verify_report.json')
        self.assertEqual(data[0]['check'], 'a')
        self.assertTrue(data[0]['pass'])
        self.assertAlmostEqual(data[0]['params']['C'], math.e)
