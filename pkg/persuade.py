#!/usr/bin/env python3
import argparse
import sys
from dataclasses import replace
from pathlib import Path

from config_parser import COMMANDS, parse_config
from extensions import pivotal_prior, solve_multi_agent, verify_rich_binary_sufficiency
from logger import logger, setup_logger
from model import EnvironmentValidationError, SolverInfeasibleError, require_valid
from oracle import brute_force_best_test, resample_environment, verify_binary_sufficiency
from reference_environments import REFERENCE_BUILDERS, fig1, fig1_reduced, menu51, menuB
from settings import DEFAULT_SETTINGS
from solve_reporter import (SolveReporter, menu_result_to_dict, solve_result_to_dict,
                            sufficiency_to_dict)
from solver_menu import solve_menu_linear, solve_single_linear
from solver_single import solve_general, solve_interval, solve_tail, solve_threshold
from test_runner import run_tests

# Exit codes
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3

STRUCTURED_SOLVERS = {
    'positive': ('threshold', solve_threshold),
    'negative-concave': ('interval', solve_interval),
    'negative-convex': ('tail', solve_tail),
}


def parse_args(argv=None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description='Find optimal trustworthy tests and screening menus.',
        allow_abbrev=False
    )
    parser.add_argument('command', nargs='?', choices=list(COMMANDS) + ['reproduce'],
                        help='Command to run; defaults to the command in --config')
    parser.add_argument('target', nargs='?', choices=sorted(REFERENCE_BUILDERS),
                        help='Worked environment for reproduce')
    parser.add_argument('--config', type=str,
                        help='JSON or YAML environment document')
    parser.add_argument('--mode', default='run', choices=['run', 'test'],
                        help='run (solve a config or worked environment) or test (run automated tests)')
    parser.add_argument('--output-file', default=None,
                        help='Base path for the JSON report; the cell CSV is written next to it')
    parser.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
                        help='Set the logging level')
    parser.add_argument('--epsilon', type=float, default=None,
                        help='ε of the worked environment (reproduce only)')
    parser.add_argument('--delta', type=float, default=1e-3,
                        help='δ of the three-type menu environment (reproduce menuB only)')
    parser.add_argument('--grid-n', type=int, default=None,
                        help='Grid cells for reproduce; configs use solver_options.grid_n')
    parser.add_argument('--cells', type=int, default=None,
                        help='Coarse grid size for oracle and verify-binary')
    parser.add_argument('--signals', type=int, default=3,
                        help='Signals per test for verify-binary')
    parser.add_argument('--samples', type=int, default=None,
                        help='Random stochastic kernels for verify-binary')
    parser.add_argument('--test-data', type=str, default='test_data',
                        help='Directory containing test configs and reference outputs (test mode only)')
    parser.add_argument('--slow', action='store_true',
                        help='Run the full-size oracle comparison (test mode only)')
    return parser.parse_args(argv)


def run_solve(env, settings, reporter, command='solve', extra=None):
    require_valid(env)
    report = solve_general(env, settings)
    reports = [('general', report)]
    structured = STRUCTURED_SOLVERS.get(env.payoffs.alignment_tag)
    if structured:
        name, solver = structured
        reports.append((name, solver(env, settings)))
    reporter.display_solve(reports, env, 'Optimal Trustworthy Test')

    result = solve_result_to_dict(report)
    if structured:
        result['structured'] = solve_result_to_dict(reports[1][1])
    reporter.write_report(command, env, settings, result, extra, document_command='solve')
    reporter.write_cell_rows(env, [('best', report.best_test)])
    return report


def run_menu(env, settings, reporter, command='menu'):
    require_valid(env)
    menu = solve_menu_linear(env, settings)
    single = solve_single_linear(env, settings)
    reporter.display_menu(menu, env, single)
    reporter.write_report(command, env, settings, menu_result_to_dict(menu, single), document_command='menu')
    tests = [(f"{entry.type_lambda:.6g}", entry.test) for entry in menu.schedule.distinct_tests()
             if entry.test is not None]
    reporter.write_cell_rows(env, tests or [('single', single.best_test)])
    return menu


def run_oracle(env, settings, reporter, cells):
    require_valid(env)
    cells = cells or 12
    sampled = resample_environment(env, cells=cells)
    oracle = brute_force_best_test(sampled, edges=sampled.states.breakpoints, settings=settings)
    solver = solve_general(sampled, settings)
    reporter.display_solve([('brute force', oracle), ('general', solver)], sampled,
                           f'Brute Force on {cells} Cells')
    result = {'oracle': solve_result_to_dict(oracle), 'solver': solve_result_to_dict(solver),
              'difference': solver.payoff - oracle.payoff}
    reporter.write_report('oracle', sampled, settings, result, {'seed': settings.oracle_seed})
    reporter.write_cell_rows(sampled, [('oracle', oracle.best_test), ('solver', solver.best_test)])


def run_verify(env, settings, reporter, rich, signals, samples, cells):
    require_valid(env)
    cells = cells or 8
    if rich is not None:
        report = verify_rich_binary_sufficiency(env, rich, signals, samples or 0, cells, settings)
    else:
        report = verify_binary_sufficiency(env, signals, samples, cells, settings)
    reporter.display_sufficiency(report, f'Binary Sufficiency with {signals} Signals')
    reporter.write_report('verify-binary', env, settings, sufficiency_to_dict(report), {'seed': settings.oracle_seed})
    return report


def run_multi_agent(agents, settings, reporter):
    report = solve_multi_agent(agents, settings)
    pivotal = agents[0].with_types(pivotal_prior([agent.types for agent in agents]))
    reporter.display_solve([('pivotal', report)], pivotal, f'Pivotal Agent of {len(agents)}')
    extra = {'agents': [agent.types.to_config() for agent in agents]}
    reporter.write_report('multi-agent', pivotal, settings, solve_result_to_dict(report), extra)
    reporter.write_cell_rows(pivotal, [('best', report.best_test)])
    return report


def run_reproduce(target, args, reporter):
    settings = replace(DEFAULT_SETTINGS, grid_n=args.grid_n) if args.grid_n else DEFAULT_SETTINGS
    grid_n = settings.grid_n
    if target in ('fig1', 'fig1-reduced'):
        epsilon = 0.1 if args.epsilon is None else args.epsilon
        extra = {'epsilon': epsilon}
        if target == 'fig1':
            original = fig1(epsilon, grid_n)
            require_valid(original)
            original_report = solve_general(original, settings)
            reporter.display_solve([('general', original_report)], original, 'Original Environment')
            extra['original'] = solve_result_to_dict(original_report)
        run_solve(fig1_reduced(epsilon, grid_n), settings, reporter, f'reproduce {target}', extra)
    elif target == 'menu51':
        epsilon = 0.01 if args.epsilon is None else args.epsilon
        run_menu(menu51(epsilon, grid_n), settings, reporter, 'reproduce menu51')
    else:
        epsilon = 0.01 if args.epsilon is None else args.epsilon
        run_menu(menuB(args.delta, epsilon, grid_n), settings, reporter, 'reproduce menuB')


def main():
    """Main entry point for the CLI."""
    args = parse_args()

    setup_logger(args.log_level)

    try:
        if args.mode == 'test':
            if not Path(args.test_data).exists():
                logger.error(f"Test data directory not found: {args.test_data}")
                sys.exit(1)
            sys.exit(0 if run_tests(args.test_data, slow=args.slow) else 1)

        reporter = SolveReporter(args.output_file)
        if args.command == 'reproduce':
            if not args.target:
                logger.error("reproduce needs a target: " + ", ".join(sorted(REFERENCE_BUILDERS)))
                sys.exit(EXIT_VALIDATION)
            run_reproduce(args.target, args, reporter)
            return

        if not args.config:
            logger.error("A --config document is required unless reproducing a worked environment")
            sys.exit(EXIT_VALIDATION)
        config = parse_config(args.config)
        command = args.command or config.command
        env, settings = config.environment, config.settings

        if command == 'solve':
            run_solve(env, settings, reporter)
        elif command == 'menu':
            run_menu(env, settings, reporter)
        elif command == 'oracle':
            run_oracle(env, settings, reporter, args.cells)
        elif command == 'verify-binary':
            run_verify(env, settings, reporter, config.rich_actions, args.signals, args.samples, args.cells)
        else:  # multi-agent
            if not config.agents:
                logger.error("multi-agent needs an 'agents' list in the config")
                sys.exit(EXIT_VALIDATION)
            run_multi_agent(config.agents, settings, reporter)

    except EnvironmentValidationError as e:
        for violation in e.violations:
            logger.error(f"Validation failed: {violation}")
        sys.exit(EXIT_VALIDATION)
    except SolverInfeasibleError as e:
        logger.error(f"Solver failed: {str(e)}")
        sys.exit(EXIT_INFEASIBLE)
    except ValueError as e:
        logger.error(f"Invalid input: {str(e)}")
        sys.exit(EXIT_VALIDATION)
    except RuntimeError as e:
        logger.error(f"Solver failed: {str(e)}")
        logger.exception("Full traceback:")
        sys.exit(EXIT_INFEASIBLE)
    except Exception as e:
        logger.error(f"Error processing environment: {str(e)}")
        logger.exception("Full traceback:")
        sys.exit(1)


if __name__ == "__main__":
    main()
