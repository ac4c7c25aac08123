#!/usr/bin/env python3
"""
Unit tests for the trustworthy test and menu solvers.

Tests cover:
1. Piecewise payoffs, state distributions and environment validation
2. Exact integration and the (p, μ) geometry of binary tests
3. Equilibrium evaluation and trustworthiness of binary and multi-signal tests
4. The single-test solvers on environments with known optima
5. Brute-force oracles
6. Screening menus for the linear specification
7. Several agents and rich actions
8. Config documents and report output
"""

import json
import os
import tempfile
import unittest
from dataclasses import replace

import numpy as np
import pandas as pd

from config_parser import environment_to_document, parse_document, parse_types
from equilibrium import acceptance_cutoff, evaluate, evaluate_general, full_learning_benchmark, full_learning_set
from extensions import (RichActionSpec, batch_rich_outcomes, pivotal_prior, rich_best_action, solve_multi_agent,
                        verify_rich_binary_sufficiency)
from measure import (fit_interval, integrate, max_feasible_p, summarize, theta_mu, upper_tail_moment)
from model import (AdditiveAgentPayoff, BinaryTest, Environment, EnvironmentValidationError, GeneralTest,
                   MenuEntry, MenuSchedule, PayoffSpec, PiecewiseLinear, StateDistribution, TabulatedAgentPayoff,
                   TypePrior, require_valid, validate_environment)
from oracle import brute_force_best_test, brute_force_menu, resample_environment, verify_binary_sufficiency
from reference_environments import concave_environment, fig1, fig1_reduced, linear_environment, menu51, menuB
from settings import DEFAULT_SETTINGS, settings_from_options
from solve_reporter import SolveReporter, solve_result_to_dict
from solver_menu import (check_menu_incentives, envelope_schedule, is_linear_specification, single_test_menu,
                         solve_menu_linear, solve_single_linear)
from solver_single import classify_form, solve_general, solve_interval, solve_threshold

SETTINGS = replace(DEFAULT_SETTINGS, grid_n=200)
THIRD = 1 / 3
TWO_THIRDS = 2 / 3


def positive_environment(types, grid_n=200):
    """u(θ) = θ and v(θ, λ) = θ + λ on uniform[−1, 1]."""
    return Environment(
        StateDistribution.uniform(-1.0, 1.0, grid_n),
        PayoffSpec(PiecewiseLinear.linear(-1.0, 1.0, 0.0, 1.0),
                   AdditiveAgentPayoff(PiecewiseLinear.linear(-1.0, 1.0, 0.0, 1.0)), 'positive'),
        types,
    )


def menu51_payoff(epsilon):
    top = (1 - 4 * epsilon / 3) / (2 - 4 * epsilon)
    return top, (1 - epsilon) * (top - top ** 2) + epsilon * (top ** 2 - top / 3)


class TestPiecewiseLinear(unittest.TestCase):
    """Test piecewise-linear payoffs."""

    def test_continuous_interpolation(self):
        f = PiecewiseLinear.continuous([-1, 0, 1], [0, 1, 0])
        self.assertAlmostEqual(f(0.5), 0.5)
        self.assertAlmostEqual(f(-1.0), 0.0)
        self.assertAlmostEqual(f(1.0), 0.0)
        self.assertEqual(f.bounds_on(-1, 1), (0.0, 1.0))

    def test_step_is_right_continuous(self):
        f = PiecewiseLinear.step([-1, 0, 1], [1, -2])
        self.assertEqual(f(-0.5), 1.0)
        self.assertEqual(f(0.0), -2.0)
        self.assertEqual(f(1.0), -2.0)

    def test_cell_values_use_limits_inside_each_cell(self):
        f = PiecewiseLinear.step([-1, 0, 1], [1, -2])
        starts, ends = f.cell_values(np.array([-1.0, 0.0, 1.0]))
        np.testing.assert_array_equal(starts, [1.0, -2.0])
        np.testing.assert_array_equal(ends, [1.0, -2.0])

    def test_rejects_bad_breakpoints(self):
        with self.assertRaises(ValueError):
            PiecewiseLinear.step([0, 0, 1], [1, 2])
        with self.assertRaises(ValueError):
            PiecewiseLinear.continuous([0, 1], [1])

    def test_evaluation_outside_domain_raises(self):
        with self.assertRaises(ValueError):
            PiecewiseLinear.linear(-1, 1, 0, 1)(1.5)


class TestStateDistribution(unittest.TestCase):
    """Test piecewise-constant state densities."""

    def setUp(self):
        self.dist = StateDistribution(-1.0, 1.0, (-1.0, 0.0, 1.0), (0.25, 0.75))

    def test_cdf_and_quantile(self):
        self.assertAlmostEqual(self.dist.cdf(0.0), 0.25)
        self.assertAlmostEqual(self.dist.quantile(0.25), 0.0)
        self.assertAlmostEqual(self.dist.quantile(0.625), 0.5)

    def test_mean_and_mass(self):
        self.assertAlmostEqual(self.dist.mean(), 0.25)
        self.assertAlmostEqual(self.dist.total_mass(), 1.0)
        self.assertTrue(self.dist.has_full_support())


class TestValidation(unittest.TestCase):
    """Test environment validation."""

    def test_linear_environment_is_valid(self):
        env = linear_environment(TypePrior.from_pairs([(THIRD, 0.5), (TWO_THIRDS, 0.5)]), grid_n=100)
        self.assertEqual(validate_environment(env), [])

    def test_type_probabilities_must_sum_to_one(self):
        env = linear_environment(TypePrior.from_pairs([(0.2, 0.4), (0.5, 0.5)]), grid_n=100)
        violations = validate_environment(env)
        self.assertTrue(any('sum to 1' in v for v in violations))

    def test_principal_payoff_must_change_sign(self):
        env = linear_environment(TypePrior.degenerate(0.5), grid_n=100)
        env = replace(env, payoffs=replace(env.payoffs, u=PiecewiseLinear.linear(-1, 1, 2.0, 1.0)))
        self.assertTrue(any('inf u < 0' in v for v in validate_environment(env)))

    def test_agent_payoff_must_increase_in_type(self):
        line = PiecewiseLinear.linear(-1, 1, 0.0, -1.0)
        v = TabulatedAgentPayoff((0.0, 0.5), (line.shifted(0.3), line.shifted(0.1)))
        env = Environment(StateDistribution.uniform(-1, 1, 100),
                          PayoffSpec(PiecewiseLinear.linear(-1, 1, 0.0, 1.0), v, 'general'),
                          TypePrior.from_pairs([(0.0, 0.5), (0.5, 0.5)]))
        self.assertTrue(any('strictly increasing in λ' in v for v in validate_environment(env)))

    def test_declared_alignment_is_checked(self):
        env = linear_environment(TypePrior.degenerate(0.5), grid_n=100)
        env = replace(env, payoffs=replace(env.payoffs, alignment_tag='positive'))
        self.assertTrue(any('positive alignment fails' in v for v in validate_environment(env)))

    def test_density_must_integrate_to_one(self):
        env = linear_environment(TypePrior.degenerate(0.5), grid_n=100)
        env = replace(env, states=StateDistribution(-1.0, 1.0, (-1.0, 1.0), (0.4,), 100))
        self.assertTrue(any('integrate to 1' in v for v in validate_environment(env)))

    def test_require_valid_carries_every_violation(self):
        env = linear_environment(TypePrior.from_pairs([(0.2, 0.4), (0.5, -0.1)]), grid_n=100)
        with self.assertRaises(EnvironmentValidationError) as context:
            require_valid(env)
        self.assertGreaterEqual(len(context.exception.violations), 2)


class TestBinaryTest(unittest.TestCase):
    """Test proposal-set normalization and form tags."""

    def test_touching_intervals_merge(self):
        test = BinaryTest(((0.0, 0.5), (0.5, 1.0)), -1.0, 1.0)
        self.assertEqual(test.intervals, ((0.0, 1.0),))
        self.assertEqual(test.form_tag, 'threshold')

    def test_form_tags(self):
        self.assertEqual(BinaryTest.empty(-1, 1).form_tag, 'empty')
        self.assertEqual(BinaryTest.interval(-0.5, 0.5, -1, 1).form_tag, 'interval')
        self.assertEqual(BinaryTest(((-1, -0.5), (0.5, 1)), -1, 1).form_tag, 'tail')
        self.assertEqual(BinaryTest(((-1, -0.5), (0.0, 0.2)), -1, 1).form_tag, 'general')
        self.assertEqual(BinaryTest.interval(-1, 1, -1, 1).form_tag, 'threshold')

    def test_set_outside_support_raises(self):
        with self.assertRaisesRegex(ValueError, 'escapes support'):
            BinaryTest(((-1.5, 0.0),), -1.0, 1.0)

    def test_complement_and_indicator(self):
        test = BinaryTest.from_indicator([-1, -0.5, 0, 0.5, 1], [False, True, True, False])
        self.assertEqual(test.intervals, ((-0.5, 0.5),))
        self.assertEqual(test.complement_intervals(), ((-1.0, -0.5), (0.5, 1.0)))
        np.testing.assert_array_equal(test.to_indicator([-1, -0.5, 0, 0.5, 1]), [False, True, True, False])

    def test_general_test_rows_must_sum_to_one(self):
        with self.assertRaises(ValueError):
            GeneralTest((-1.0, 0.0, 1.0), np.array([[0.5, 0.4], [1.0, 0.0]]), ('a', 'b'))


class TestMeasure(unittest.TestCase):
    """Test exact integration and the (p, μ) geometry on uniform[−1, 1]."""

    def setUp(self):
        self.dist = StateDistribution.uniform(-1.0, 1.0)

    def test_integrate_identity_over_upper_half(self):
        self.assertAlmostEqual(integrate(PiecewiseLinear.linear(-1, 1, 0, 1), BinaryTest.threshold(0, -1, 1),
                                         self.dist), 0.25, places=12)

    def test_summarize_threshold(self):
        summary = summarize(BinaryTest.threshold(0.0, -1, 1), self.dist)
        self.assertAlmostEqual(summary.p, 0.5)
        self.assertAlmostEqual(summary.mu, 0.5)
        self.assertAlmostEqual(summary.null_p, 0.5)
        self.assertAlmostEqual(summary.null_mu, -0.5)

    def test_summarize_empty_has_no_mean(self):
        summary = summarize(BinaryTest.empty(-1, 1), self.dist)
        self.assertEqual(summary.p, 0.0)
        self.assertIsNone(summary.mu)

    def test_theta_mu(self):
        self.assertAlmostEqual(theta_mu(THIRD, self.dist), -THIRD, places=10)
        self.assertEqual(theta_mu(0.0, self.dist), -1.0)
        with self.assertRaisesRegex(ValueError, 'infeasible posterior mean'):
            theta_mu(1.5, self.dist)
        with self.assertRaisesRegex(ValueError, 'infeasible posterior mean'):
            theta_mu(-0.5, self.dist)

    def test_max_feasible_p(self):
        self.assertAlmostEqual(max_feasible_p(THIRD, self.dist), TWO_THIRDS, places=10)
        self.assertAlmostEqual(max_feasible_p(0.5, self.dist), 0.5, places=10)

    def test_upper_tail_moment(self):
        self.assertAlmostEqual(upper_tail_moment(0.5, self.dist), 0.25, places=12)
        shifted = StateDistribution.uniform(-1 / 3, 2 / 3)
        self.assertAlmostEqual(upper_tail_moment(0.5, shifted), 1 / 3 - 1 / 8, places=12)

    def test_fit_interval_realises_pair(self):
        test = fit_interval(0.25, THIRD, self.dist)
        summary = summarize(test, self.dist)
        self.assertAlmostEqual(summary.p, 0.25, places=8)
        self.assertAlmostEqual(summary.mu, THIRD, places=8)
        (a, b), = test.intervals
        self.assertAlmostEqual(a, 1 / 12, places=7)
        self.assertAlmostEqual(b, 7 / 12, places=7)

    def test_fit_interval_on_frontier_is_threshold(self):
        test = fit_interval(0.5, 0.5, self.dist)
        self.assertEqual(test.form_tag, 'threshold')
        self.assertAlmostEqual(test.intervals[0][0], 0.0, places=9)

    def test_fit_interval_rejects_infeasible_pair(self):
        with self.assertRaisesRegex(ValueError, 'pair not inducible'):
            fit_interval(0.7, THIRD, self.dist)


class TestEquilibrium(unittest.TestCase):
    """Test evaluation of binary and multi-signal tests."""

    def setUp(self):
        self.env = linear_environment(TypePrior.degenerate(TWO_THIRDS), grid_n=200)

    def test_threshold_test_on_linear_environment(self):
        report = evaluate(BinaryTest.threshold(0.0, -1, 1), self.env)
        self.assertAlmostEqual(report.principal_payoff, 0.25, places=12)
        self.assertAlmostEqual(report.null_value, -0.25, places=12)
        self.assertTrue(report.trustworthy)
        self.assertEqual(report.acceptance_prob, 1.0)
        self.assertAlmostEqual(report.acceptance_cutoff, TWO_THIRDS)
        self.assertAlmostEqual(report.agent_values[0], 1 / 12, places=12)

    def test_negative_proposal_is_not_trustworthy(self):
        report = evaluate(BinaryTest.interval(-1.0, -0.5, -1, 1), self.env)
        self.assertFalse(report.trustworthy)
        self.assertEqual(report.principal_payoff, 0.0)
        self.assertAlmostEqual(report.proposal_value, -0.1875, places=12)

    def test_empty_test_has_no_cutoff(self):
        with self.assertRaisesRegex(ValueError, 'no proposal signal'):
            acceptance_cutoff(BinaryTest.empty(-1, 1), self.env)
        report = evaluate(BinaryTest.empty(-1, 1), self.env)
        self.assertTrue(report.trustworthy)
        self.assertEqual(report.principal_payoff, 0.0)

    def test_full_learning_set(self):
        (a, b), = full_learning_set(self.env).intervals
        self.assertAlmostEqual(a, 0.0, places=12)
        self.assertAlmostEqual(b, 1.0, places=12)

    def test_full_learning_benchmark(self):
        env = linear_environment(TypePrior.degenerate(2.0), grid_n=200)
        self.assertAlmostEqual(full_learning_benchmark(env).principal_payoff, 0.25, places=12)
        # The agent rejects everything the principal likes
        self.assertEqual(full_learning_benchmark(fig1_reduced(0.1, 400)).principal_payoff, 0.0)

    def test_learning_less_beats_full_learning(self):
        env = fig1_reduced(0.1, 400)
        benchmark = full_learning_benchmark(env)
        self.assertGreater(solve_general(env, SETTINGS).payoff, benchmark.principal_payoff + 0.02)

    def test_binary_test_as_two_signals(self):
        edges = np.linspace(-1, 1, 201)
        report = evaluate_general(GeneralTest.from_binary(BinaryTest.threshold(0.0, -1, 1), edges), self.env)
        self.assertTrue(report.trustworthy)
        self.assertAlmostEqual(report.truthful_payoff, 0.25, places=12)
        self.assertEqual(report.proposes, (True, False))

    def test_profitable_misreport_is_found(self):
        env = linear_environment(TypePrior.degenerate(0.1), grid_n=200)
        test = GeneralTest.deterministic((-1.0, -0.2, 0.2, 1.0), [2, 0, 1], 3)
        report = evaluate_general(test, env)
        self.assertFalse(report.trustworthy)
        self.assertEqual(report.best_deviation, ('s0', 's1'))
        self.assertAlmostEqual(report.deviation_gain, 0.6, places=10)
        self.assertAlmostEqual(report.truthful_payoff, 0.0, places=10)
        self.assertEqual(report.acceptance_probs, (1.0, 0.0, 0.0))


class TestSingleTestSolvers(unittest.TestCase):
    """Test the optimal trustworthy test on environments with known optima."""

    def test_fig1_only_empty_test_is_trustworthy(self):
        report = solve_general(fig1(0.1, 400), SETTINGS)
        self.assertTrue(report.best_test.is_empty)
        self.assertEqual(report.payoff, 0.0)
        self.assertEqual(report.form_tag, 'empty')
        self.assertTrue(report.skipped)

    def test_fig1_reduced_interval(self):
        report = solve_general(fig1_reduced(0.1, 400), SETTINGS)
        self.assertAlmostEqual(report.payoff, 0.025, places=10)
        self.assertEqual(report.form_tag, 'interval')
        (a, b), = report.best_test.intervals
        self.assertAlmostEqual(a, -0.55, places=9)
        self.assertAlmostEqual(b, 0.5, places=9)

    def test_fig1_reduced_scales_with_epsilon(self):
        report = solve_general(fig1_reduced(0.2, 400), SETTINGS)
        self.assertAlmostEqual(report.payoff, 0.05, places=10)

    def test_single_type_linear_is_full_learning(self):
        env = linear_environment(TypePrior.degenerate(TWO_THIRDS), grid_n=200)
        for solver in (solve_general, solve_threshold, solve_interval):
            report = solver(env, SETTINGS)
            self.assertAlmostEqual(report.payoff, 0.25, places=10)
            self.assertEqual(report.form_tag, 'threshold')
            self.assertAlmostEqual(report.evaluation.agent_values[0], 1 / 12, places=10)

    def test_positive_alignment_threshold(self):
        env = positive_environment(TypePrior.degenerate(-0.6))
        report = solve_threshold(env, SETTINGS)
        self.assertAlmostEqual(report.payoff, 0.24, places=10)
        self.assertAlmostEqual(report.best_test.intervals[0][0], 0.2, places=9)
        self.assertAlmostEqual(report.lambda_star, -0.6)
        general = solve_general(env, SETTINGS)
        self.assertAlmostEqual(general.payoff, 0.24, places=9)
        self.assertAlmostEqual(general.eta, 0.5, places=6)

    def test_concave_agent_gets_an_interval(self):
        env = concave_environment(grid_n=200)
        structured = solve_interval(env, SETTINGS)
        general = solve_general(env, SETTINGS)
        self.assertIn(general.form_tag, ('interval', 'threshold'))
        self.assertAlmostEqual(structured.payoff, general.payoff, delta=1e-4)
        self.assertGreater(general.payoff, 0.0)

    def test_classify_form(self):
        self.assertEqual(classify_form(BinaryTest.empty(-1, 1)), 'empty')
        self.assertEqual(classify_form(BinaryTest(((-1.0, -0.5), (0.5, 1.0)), -1, 1)), 'tail')
        self.assertEqual(classify_form(BinaryTest(((-0.5, -0.2), (0.5, 0.8)), -1, 1)), 'general')

    def test_solver_alignment_mismatch(self):
        env = positive_environment(TypePrior.degenerate(0.0))
        with self.assertRaisesRegex(ValueError, 'solver/alignment mismatch'):
            solve_interval(env, SETTINGS)


class TestOracle(unittest.TestCase):
    """Test brute-force ground truth."""

    def test_resampling_keeps_cell_integrals(self):
        env = fig1_reduced(0.1, 400)
        sampled = resample_environment(env, cells=8)
        self.assertEqual(sampled.states.grid_n, 8)
        self.assertEqual(validate_environment(sampled), [])
        self.assertAlmostEqual(evaluate(BinaryTest.interval(-0.5, 0.5, -1, 1), sampled).proposal_value,
                               evaluate(BinaryTest.interval(-0.5, 0.5, -1, 1), env).proposal_value, places=12)

    def test_brute_force_needs_partial_cell(self):
        report = brute_force_best_test(fig1_reduced(0.1, 400), cells=8, settings=SETTINGS)
        self.assertAlmostEqual(report.payoff, 0.025, places=10)
        (a, b), = report.best_test.intervals
        self.assertAlmostEqual(a, -0.55, places=9)
        self.assertAlmostEqual(b, 0.5, places=9)

    def test_oracle_refuses_large_grids(self):
        with self.assertRaisesRegex(ValueError, 'Oracle refuses'):
            brute_force_best_test(fig1_reduced(0.1, 400), cells=30, settings=SETTINGS)

    def test_binary_sufficiency_on_step_environment(self):
        report = verify_binary_sufficiency(fig1_reduced(0.1, 400), signal_count=3, samples=20, cells=6,
                                           settings=SETTINGS)
        self.assertTrue(report.holds)
        self.assertEqual(report.kernels_examined, 3 ** 6 + 20)
        self.assertLessEqual(report.max_general_payoff, report.binary_payoff + 1e-9)

    def test_menu_oracle_picks_both_limit_tests(self):
        epsilon = 0.01
        env = menu51(epsilon, 200)
        pool = [BinaryTest.threshold(0.0, -1, 1), BinaryTest.interval(1 / 12, 7 / 12, -1, 1),
                BinaryTest.interval(-1.0, -0.5, -1, 1)]
        report = brute_force_menu(env, pool, SETTINGS)
        self.assertAlmostEqual(report.payoff, epsilon / 12 + (1 - epsilon) / 4, places=10)
        self.assertEqual(len(report.menu), 2)
        chosen = [report.menu[i].form_tag for i in report.choices]
        self.assertEqual(chosen, ['interval', 'threshold'])

    def test_menu_oracle_rejects_empty_pool(self):
        with self.assertRaises(ValueError):
            brute_force_menu(menu51(0.01, 100), [], SETTINGS)


class TestMenus(unittest.TestCase):
    """Test screening menus for u(θ) = θ, v(θ, λ) = λ − θ."""

    def test_envelope_two_types(self):
        types = TypePrior.from_pairs([(THIRD, 0.5), (TWO_THIRDS, 0.5)])
        schedule = envelope_schedule([0.25, 0.5], 0, types)
        self.assertAlmostEqual(schedule[0][1], THIRD)
        self.assertAlmostEqual(schedule[1][1], 0.5)

    def test_envelope_three_types(self):
        types = TypePrior.from_pairs([(7 / 24, 0.2), (0.5, 0.3), (TWO_THIRDS, 0.5)])
        schedule = envelope_schedule([4 / 7, 13 / 21, TWO_THIRDS], 0, types)
        np.testing.assert_array_almost_equal([mu for _, mu in schedule], [7 / 24, 4 / 13, THIRD], decimal=12)

    def test_envelope_skips_unserved_types(self):
        types = TypePrior.from_pairs([(THIRD, 0.5), (TWO_THIRDS, 0.5)])
        self.assertEqual(envelope_schedule([0.0, 0.5], 1, types), [(0.5, TWO_THIRDS)])

    def test_envelope_rejects_bad_levels(self):
        types = TypePrior.from_pairs([(THIRD, 0.5), (TWO_THIRDS, 0.5)])
        with self.assertRaises(ValueError):
            envelope_schedule([0.5, 0.25], 0, types)
        with self.assertRaises(ValueError):
            envelope_schedule([0.0, 0.5], 0, types)
        with self.assertRaises(ValueError):
            envelope_schedule([0.5], 0, types)
        with self.assertRaises(ValueError):
            envelope_schedule([0.25, 0.5], 0, types, rent=-0.1)

    def test_limit_menu_passes_every_check(self):
        env = menu51(0.01, 200)
        menu = MenuSchedule((
            MenuEntry(THIRD, 0.25, THIRD, BinaryTest.interval(1 / 12, 7 / 12, -1, 1)),
            MenuEntry(TWO_THIRDS, 0.5, 0.5, BinaryTest.threshold(0.0, -1, 1)),
        ), ())
        self.assertEqual(check_menu_incentives(menu, env, SETTINGS), [])

    def test_schedule_below_prior_mean_is_not_trustworthy(self):
        env = menuB(grid_n=200)
        menu = MenuSchedule((MenuEntry(7 / 24, 8 / 15, 7 / 24),), (0.5, TWO_THIRDS))
        violations = check_menu_incentives(menu, env, SETTINGS)
        self.assertTrue(any("IC-P''" in v for v in violations))
        self.assertTrue(any('IC-A' in v for v in violations))

    def test_menu51_closed_form(self):
        epsilon = 0.01
        top, payoff = menu51_payoff(epsilon)
        report = solve_menu_linear(menu51(epsilon, 200), SETTINGS)
        self.assertAlmostEqual(report.payoff, payoff, places=7)
        self.assertAlmostEqual(report.top_probability, top, places=5)
        self.assertEqual(len(report.schedule.entries), 2)
        self.assertEqual(report.violations, [])
        low, high = report.schedule.entries
        self.assertAlmostEqual(low.mu, THIRD, places=7)
        self.assertAlmostEqual(low.p, 3 * top ** 2 - top, places=5)
        self.assertEqual(high.test.form_tag, 'threshold')

    def test_menu_beats_single_test(self):
        env = menu51(0.01, 200)
        single = solve_single_linear(env, SETTINGS)
        self.assertAlmostEqual(single.payoff, 0.99 / 4, places=10)
        self.assertGreater(solve_menu_linear(env, SETTINGS).payoff, single.payoff)

    def test_three_type_menu_has_three_tests(self):
        report = solve_menu_linear(menuB(grid_n=200), SETTINGS)
        self.assertEqual(len(report.schedule.distinct_tests()), 3)
        self.assertAlmostEqual(report.schedule.entries[0].p, 4 / 7, places=5)
        self.assertAlmostEqual(report.top_probability, 0.679223, places=4)

    def test_pessimistic_types_get_nothing(self):
        env = linear_environment(TypePrior.from_pairs([(0.05, 0.5), (0.1, 0.5)]), lo=-1 / 3, hi=2 / 3, grid_n=200)
        report = solve_menu_linear(env, SETTINGS)
        self.assertTrue(report.schedule.is_empty)
        self.assertEqual(report.payoff, 0.0)
        single = solve_single_linear(env, SETTINGS)
        self.assertTrue(single.best_test.is_empty)

    def test_menus_need_linear_payoffs(self):
        self.assertFalse(is_linear_specification(fig1(0.1, 100)))
        self.assertTrue(is_linear_specification(menu51(0.01, 100)))
        with self.assertRaises(ValueError):
            solve_menu_linear(fig1(0.1, 100), SETTINGS)

    def test_frontier_menu_is_realised(self):
        types = TypePrior.from_pairs([(-0.081, 0.129), (0.107, 0.466), (0.227, 0.405)])
        env = linear_environment(types, lo=-0.698, hi=0.495, grid_n=200)
        single = solve_single_linear(env, SETTINGS)
        self.assertAlmostEqual(single.payoff, 0.871 * 0.107 * 2 * (0.495 - 0.107) / 1.193, places=8)
        report = solve_menu_linear(env, SETTINGS)
        self.assertFalse(report.schedule.is_empty)
        self.assertGreaterEqual(report.payoff, single.payoff - 1e-12)
        self.assertEqual(check_menu_incentives(report.schedule, env, SETTINGS), [])

    def test_single_test_menu_passes_every_check(self):
        env = menu51(0.01, 200)
        single = solve_single_linear(env, SETTINGS)
        menu = single_test_menu(single, env)
        self.assertEqual(len(menu.distinct_tests()), 1)
        self.assertAlmostEqual(menu.payoff(env.types), single.payoff, places=12)
        self.assertEqual(check_menu_incentives(menu, env, SETTINGS), [])
        pessimistic = linear_environment(TypePrior.from_pairs([(0.05, 0.5), (0.1, 0.5)]), lo=-1 / 3, hi=2 / 3,
                                         grid_n=200)
        self.assertTrue(single_test_menu(solve_single_linear(pessimistic, SETTINGS), pessimistic).is_empty)


class TestExtensions(unittest.TestCase):
    """Test several agents and rich actions."""

    def test_pivotal_prior_two_agents(self):
        prior = pivotal_prior([TypePrior.from_pairs([(0.2, 0.5), (0.6, 0.5)])] * 2)
        self.assertEqual(prior.atoms, ((0.2, 0.75), (0.6, 0.25)))

    def test_pivotal_prior_three_agents(self):
        prior = pivotal_prior([TypePrior.from_pairs([(THIRD, 0.5), (TWO_THIRDS, 0.5)])] * 3)
        np.testing.assert_array_almost_equal(prior.probs, [7 / 8, 1 / 8])

    def test_pivotal_prior_drops_types_nobody_reaches(self):
        prior = pivotal_prior([TypePrior.degenerate(0.1), TypePrior.degenerate(0.5)])
        self.assertEqual(prior.atoms, ((0.1, 1.0),))
        with self.assertRaises(ValueError):
            pivotal_prior([])

    def test_multi_agent_solves_for_pivotal_agent(self):
        types = TypePrior.from_pairs([(THIRD, 0.5), (TWO_THIRDS, 0.5)])
        env = linear_environment(types, grid_n=400)
        report = solve_multi_agent([env, env], SETTINGS)
        self.assertAlmostEqual(report.payoff, 2 / 9, places=8)
        self.assertAlmostEqual(report.best_test.intervals[0][0], -THIRD, places=8)

    def test_multi_agent_requires_shared_payoffs(self):
        env = linear_environment(TypePrior.degenerate(0.5), grid_n=100)
        with self.assertRaises(ValueError):
            solve_multi_agent([], SETTINGS)
        with self.assertRaises(ValueError):
            solve_multi_agent([env, fig1(0.1, 100)], SETTINGS)

    def test_rich_best_action(self):
        spec = RichActionSpec.quadratic([0.0, 0.3], action_max=2.0, action_step=0.1)
        self.assertEqual(spec.validate(), [])
        self.assertAlmostEqual(rich_best_action(0.5, 0.0, spec), 0.5)
        self.assertAlmostEqual(rich_best_action(0.2, 0.3, spec), 0.5)
        self.assertAlmostEqual(rich_best_action(0.6, 0.3, spec), 0.9)
        self.assertEqual(rich_best_action(-0.5, 0.0, spec), 0.0)
        self.assertAlmostEqual(rich_best_action(5.0, 0.3, spec), 2.0)

    def test_rich_action_spec_validation(self):
        spec = RichActionSpec.quadratic([0.0], action_step=0.5)
        broken = RichActionSpec(spec.lambdas, spec.actions, spec.intercept + 1.0, spec.slope)
        self.assertTrue(any('rejection action' in v for v in broken.validate()))
        flipped = RichActionSpec(spec.lambdas, spec.actions, spec.intercept, spec.slope[:, ::-1].copy())
        self.assertTrue(flipped.validate())
        with self.assertRaises(ValueError):
            rich_best_action(0.0, 0.7, spec)

    def test_rich_misreport_is_flagged(self):
        spec = RichActionSpec.quadratic([0.3], action_max=2.0, action_step=0.1)
        probs = np.array([[0.5, 0.5]])
        moment = np.array([[0.25, 0.1]])
        outcome = batch_rich_outcomes(probs, moment, moment, spec, TypePrior.degenerate(0.3), SETTINGS)
        self.assertFalse(outcome.trustworthy[0])
        np.testing.assert_array_almost_equal(outcome.acceptance[0], [0.8, 0.5])
        self.assertAlmostEqual(outcome.deviation_gain[0], 0.2 * 0.3, places=10)

    def test_rich_binary_sufficiency(self):
        env = linear_environment(TypePrior.degenerate(0.3), grid_n=200)
        spec = RichActionSpec.quadratic([0.3], action_max=2.0, action_step=0.1)
        report = verify_rich_binary_sufficiency(env, spec, signal_count=3, samples=0, cells=6, settings=SETTINGS)
        self.assertTrue(report.holds)
        self.assertEqual(report.kernels_examined, 3 ** 6)
        self.assertGreater(report.binary_payoff, 0.0)

    def test_rich_sufficiency_rejects_invalid_spec(self):
        env = linear_environment(TypePrior.degenerate(0.3), grid_n=100)
        spec = RichActionSpec.quadratic([0.3], action_step=0.5)
        broken = RichActionSpec(spec.lambdas, spec.actions, spec.intercept + 1.0, spec.slope)
        with self.assertRaisesRegex(ValueError, 'Invalid action specification'):
            verify_rich_binary_sufficiency(env, broken, cells=4, settings=SETTINGS)


class TestConfig(unittest.TestCase):
    """Test config documents and solver options."""

    def test_document_round_trip(self):
        env = menu51(0.01, 100)
        settings = replace(DEFAULT_SETTINGS, grid_n=100)
        config = parse_document(environment_to_document(env, 'menu', settings))
        self.assertEqual(config.command, 'menu')
        self.assertEqual(config.environment, env)
        self.assertEqual(config.settings.grid_n, 100)

    def test_missing_fields_are_named(self):
        with self.assertRaisesRegex(ValueError, "Missing required fields in environment: \\['v', 'types'\\]"):
            parse_document({'distribution': {'uniform': [-1, 1]}, 'u': {'breakpoints': [-1, 1], 'values': [-1, 1]}})

    def test_unknown_command_and_option(self):
        document = environment_to_document(fig1(0.1, 50), 'solve', DEFAULT_SETTINGS)
        with self.assertRaisesRegex(ValueError, 'Invalid command'):
            parse_document({**document, 'command': 'optimise'})
        with self.assertRaisesRegex(ValueError, 'Unknown solver options'):
            parse_document({**document, 'solver_options': {'grid_size': 10}})
        with self.assertRaises(ValueError):
            settings_from_options({'grid_n': -5})

    def test_type_formats(self):
        pairs = parse_types([[0.5, 0.25], [0.1, 0.75]])
        dicts = parse_types([{'lambda': 0.1, 'prob': 0.75}, {'lambda': 0.5, 'prob': 0.25}])
        self.assertEqual(pairs, dicts)
        self.assertEqual(pairs.atoms[0], (0.1, 0.75))
        with self.assertRaises(ValueError):
            parse_types([[0.5]])

    def test_multi_agent_document_needs_agents(self):
        document = environment_to_document(menu51(0.01, 50), 'multi-agent', DEFAULT_SETTINGS)
        with self.assertRaisesRegex(ValueError, 'agents'):
            parse_document(document)
        config = parse_document({**document, 'agents': [document['types'], {'types': document['types']}]})
        self.assertEqual(len(config.agents), 2)

    def test_rich_actions_from_document(self):
        document = environment_to_document(linear_environment(TypePrior.degenerate(0.3), grid_n=50),
                                           'verify-binary', DEFAULT_SETTINGS)
        config = parse_document({**document, 'rich_actions': {'kind': 'quadratic', 'action_max': 1.0}})
        self.assertEqual(config.rich_actions.actions[-1], 1.0)
        self.assertEqual(config.rich_actions.validate(), [])

    def test_integer_options_reject_fractions(self):
        with self.assertRaisesRegex(ValueError, 'grid_n needs int'):
            settings_from_options({'grid_n': 1.5})
        with self.assertRaisesRegex(ValueError, 'needs int'):
            settings_from_options({'oracle_samples': True})
        self.assertEqual(settings_from_options({'grid_n': 300.0}).grid_n, 300)
        self.assertIsInstance(settings_from_options({'grid_n': 300.0}).grid_n, int)
        self.assertEqual(settings_from_options({'fit_tol': 1}).fit_tol, 1.0)

    def test_zero_samples_allowed(self):
        self.assertEqual(settings_from_options({'oracle_samples': 0}).oracle_samples, 0)
        with self.assertRaisesRegex(ValueError, 'nonnegative'):
            settings_from_options({'oracle_samples': -1})
        with self.assertRaisesRegex(ValueError, 'positive'):
            settings_from_options({'grid_n': 0})


class TestReporter(unittest.TestCase):
    """Test JSON and CSV output."""

    def test_report_and_cell_rows(self):
        env = linear_environment(TypePrior.degenerate(TWO_THIRDS), grid_n=20)
        settings = replace(DEFAULT_SETTINGS, grid_n=20)
        report = solve_general(env, settings)
        with tempfile.TemporaryDirectory() as tmp:
            reporter = SolveReporter(os.path.join(tmp, 'linear'))
            json_path = reporter.write_report('solve', env, settings, solve_result_to_dict(report))
            csv_path = reporter.write_cell_rows(env, [('best', report.best_test)])

            with open(json_path, 'r', encoding='utf-8') as f:
                document = json.load(f)
            self.assertEqual(document['command'], 'solve')
            self.assertAlmostEqual(document['result']['payoff'], 0.25, places=12)
            self.assertEqual(parse_document(document['environment']).environment, env)

            cells = pd.read_csv(csv_path)
            self.assertEqual(list(cells.columns), ['cell_lo', 'cell_hi', 'indicator', 'u', 'v_0.666667'])
            self.assertEqual(len(cells), 20)
            self.assertEqual(cells['indicator'].sum(), 10)

    def test_no_output_file_writes_nothing(self):
        env = linear_environment(TypePrior.degenerate(TWO_THIRDS), grid_n=20)
        reporter = SolveReporter(None)
        self.assertIsNone(reporter.write_report('solve', env, DEFAULT_SETTINGS, {}))


def run_unit_tests():
    """Run all unit tests."""
    # Create test suite
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()

    # Add test classes
    suite.addTests(loader.loadTestsFromTestCase(TestPiecewiseLinear))
    suite.addTests(loader.loadTestsFromTestCase(TestStateDistribution))
    suite.addTests(loader.loadTestsFromTestCase(TestValidation))
    suite.addTests(loader.loadTestsFromTestCase(TestBinaryTest))
    suite.addTests(loader.loadTestsFromTestCase(TestMeasure))
    suite.addTests(loader.loadTestsFromTestCase(TestEquilibrium))
    suite.addTests(loader.loadTestsFromTestCase(TestSingleTestSolvers))
    suite.addTests(loader.loadTestsFromTestCase(TestOracle))
    suite.addTests(loader.loadTestsFromTestCase(TestMenus))
    suite.addTests(loader.loadTestsFromTestCase(TestExtensions))
    suite.addTests(loader.loadTestsFromTestCase(TestConfig))
    suite.addTests(loader.loadTestsFromTestCase(TestReporter))

    # Run tests
    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(suite)

    return result.wasSuccessful()


if __name__ == '__main__':
    import sys
    success = run_unit_tests()
    sys.exit(0 if success else 1)
