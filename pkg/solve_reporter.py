"""Console tables, JSON reports and per-cell CSV output for solver results."""

import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import reporter_definitions as rd
from config_parser import environment_to_document
from console_table_writer import ConsoleTableWriter
from csv_writer import CSVWriter
from data_table_builder import DataTableBuilder
from logger import logger
from measure import PRINCIPAL, FIRST_AGENT, discretize
from model import BinaryTest, Environment, GeneralTest
from oracle import SufficiencyReport
from settings import SolverSettings
from solver_menu import MenuReport
from solver_single import SolveReport


def solve_result_to_dict(report: SolveReport) -> Dict[str, Any]:
    return {
        'test': report.best_test.to_config(),
        'form': report.form_tag,
        'payoff': report.payoff,
        'lambda_star': report.lambda_star,
        'eta': report.eta,
        'candidates_examined': report.candidates_examined,
        'grid_cells': report.grid_cells,
        'skipped': list(report.skipped),
        'notes': list(report.notes),
        'evaluation': asdict(report.evaluation) if report.evaluation is not None else None,
    }


def menu_result_to_dict(report: MenuReport, single: Optional[SolveReport] = None) -> Dict[str, Any]:
    schedule = report.schedule
    result = {
        'menu': [{'type_lambda': e.type_lambda, 'p': e.p, 'mu': e.mu,
                  'test': e.test.to_config() if e.test is not None else None,
                  'form': e.test.form_tag if e.test is not None else None}
                 for e in schedule.entries],
        'unserved': list(schedule.unserved),
        'rent': schedule.rent,
        'distinct_tests': len(schedule.distinct_tests()),
        'payoff': report.payoff,
        'top_probability': report.top_probability,
        'lowest_served': report.lowest_served,
        'levels': report.levels,
        'configurations_examined': report.configurations_examined,
        'violations': list(report.violations),
        'notes': list(report.notes),
    }
    if single is not None:
        result['single_test'] = solve_result_to_dict(single)
        result['screening_value'] = report.payoff - single.payoff
    return result


def sufficiency_to_dict(report: SufficiencyReport) -> Dict[str, Any]:
    witness = None
    if report.witness is not None:
        witness = {'edges': list(report.witness.edges), 'kernel': report.witness.kernel.tolist(),
                   'signals': list(report.witness.signals)}
    return {
        'signal_count': report.signal_count,
        'binary_payoff': report.binary_payoff,
        'max_general_payoff': report.max_general_payoff,
        'kernels_examined': report.kernels_examined,
        'trustworthy_kernels': report.trustworthy_kernels,
        'seed': report.seed,
        'holds': report.holds,
        'witness': witness,
        'witness_payoff': report.witness_payoff,
    }


def _json_default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialise {type(value).__name__}")


class SolveReporter:
    """Renders solver results to the console and, given an output path, to JSON and CSV."""

    def __init__(self, output_file: Optional[str] = None):
        """Initialize the reporter.

        Args:
            output_file: Base path for the JSON report; the CSV goes next to it as <stem>_cells.csv
        """
        self.output_file = Path(output_file) if output_file else None
        self.data_builder = DataTableBuilder()
        self.console_writer = ConsoleTableWriter()

    def _render(self, tables: Sequence[Tuple[pd.DataFrame, str, str]]) -> None:
        for df_table, config_name, title in tables:
            config = rd.COLUMN_CONFIGS[config_name]
            table_data = self.data_builder.build_table(df_table, config, title)
            self.console_writer.write_table(table_data, config)

    def _notes_frame(self, entries: Sequence[Tuple[str, str]]) -> pd.DataFrame:
        return pd.DataFrame([{'kind': kind, 'detail': detail} for kind, detail in entries])

    def display_solve(self, reports: Sequence[Tuple[str, SolveReport]], env: Environment, title: str) -> None:
        """One row per solver, then the per-type values of the first solver's test."""
        logger.info(f"Displaying {len(reports)} solve results")
        rows = []
        for name, report in reports:
            evaluation = report.evaluation
            rows.append({
                'solver': name,
                'form_tag': report.form_tag,
                'intervals': report.best_test.intervals,
                'payoff': report.payoff,
                'lambda_star': report.lambda_star,
                'eta': report.eta,
                'acceptance_prob': evaluation.acceptance_prob if evaluation else None,
                'trustworthy': evaluation.trustworthy if evaluation else None,
                'candidates_examined': report.candidates_examined,
                'grid_cells': report.grid_cells,
            })
        tables = [(pd.DataFrame(rows), 'solve_result', title)]

        first = reports[0][1]
        if first.evaluation is not None and not first.best_test.is_empty:
            types = pd.DataFrame({
                'type_lambda': env.types.lambdas,
                'prob': env.types.probs,
                'agent_value': first.evaluation.agent_values,
            })
            cutoff = first.evaluation.cutoff_index
            types['accepts'] = [cutoff is not None and k >= cutoff for k in range(len(types))]
            tables.append((types, 'type_values', 'Agent Types'))

        entries = [(f"{name} skipped", s) for name, r in reports for s in r.skipped]
        entries += [(f"{name} note", n) for name, r in reports for n in r.notes]
        if entries:
            tables.append((self._notes_frame(entries), 'notes', 'Solver Notes'))
        self._render(tables)

    def display_menu(self, report: MenuReport, env: Environment, single: Optional[SolveReport] = None) -> None:
        logger.info("Displaying menu result")
        weights = dict(env.types.atoms)
        schedule = pd.DataFrame([{
            'type_lambda': e.type_lambda,
            'prob': weights[e.type_lambda],
            'p': e.p,
            'mu': e.mu,
            'agent_value': (e.type_lambda - e.mu) * e.p,
            'intervals': e.test.intervals if e.test is not None else None,
            'form_tag': e.test.form_tag if e.test is not None else None,
        } for e in report.schedule.entries])
        summary = pd.DataFrame([{
            'payoff': report.payoff,
            'top_probability': report.top_probability,
            'lowest_served': report.lowest_served,
            'tests': len(report.schedule.distinct_tests()),
            'levels': report.levels,
            'rent': report.schedule.rent,
            'configurations_examined': report.configurations_examined,
            'violations': len(report.violations),
        }])
        tables = [(summary, 'menu_result', 'Optimal Menu'), (schedule, 'menu_schedule', 'Menu Schedule')]
        if single is not None:
            tables.append((pd.DataFrame([{'solver': 'single test', 'form_tag': single.form_tag,
                                          'intervals': single.best_test.intervals, 'payoff': single.payoff,
                                          'lambda_star': single.lambda_star, 'eta': single.eta,
                                          'candidates_examined': single.candidates_examined,
                                          'grid_cells': single.grid_cells}]),
                           'solve_result', 'Best Single Test'))
        entries = [('violation', v) for v in report.violations] + [('note', n) for n in report.notes]
        if entries:
            tables.append((self._notes_frame(entries), 'notes', 'Menu Notes'))
        self._render(tables)
        if single is not None:
            self.console_writer.write_text(f"\nScreening value: {report.payoff - single.payoff:.9f}")

    def display_sufficiency(self, report: SufficiencyReport, title: str) -> None:
        logger.info(f"Displaying sufficiency check with {report.signal_count} signals")
        row = sufficiency_to_dict(report)
        self._render([(pd.DataFrame([row]), 'sufficiency', title)])
        if report.witness is not None:
            self.console_writer.write_text(f"Witness pays {report.witness_payoff:.9f}; "
                                           f"kernel rows: {report.witness.kernel.round(6).tolist()}")

    def write_report(self, command: str, env: Environment, settings: SolverSettings,
                     result: Dict[str, Any], extra: Optional[Dict[str, Any]] = None,
                     document_command: Optional[str] = None) -> Optional[Path]:
        """Write the JSON report; returns its path, or None without an output file.

        The embedded environment document re-runs as document_command (default: command).
        """
        if not self.output_file:
            return None
        path = self.output_file.with_suffix('.json')
        document = {
            'command': command,
            'environment': environment_to_document(env, document_command or command, settings),
            'grid_cells': discretize(env).n_cells,
            'result': result,
        }
        document.update(extra or {})
        try:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(document, f, indent=2, default=_json_default)
        except Exception as e:
            logger.error(f"Error writing report {path}: {str(e)}")
            raise
        logger.info(f"Report written: {path}")
        return path

    def write_cell_rows(self, env: Environment, tests: Sequence[Tuple[str, BinaryTest]]) -> Optional[Path]:
        """Write cell_lo, cell_hi, an indicator column per test, u and v_<λ> per type."""
        if not self.output_file:
            return None
        endpoints = [x for _, test in tests for interval in test.intervals for x in interval]
        grid = discretize(env, extra_points=endpoints)
        mids = 0.5 * (grid.starts + grid.ends)
        df = pd.DataFrame({'cell_lo': grid.edges[:-1], 'cell_hi': grid.edges[1:]})
        for name, test in tests:
            column = 'indicator' if len(tests) == 1 else f"indicator_{name}"
            df[column] = GeneralTest.from_binary(test, grid.edges).kernel[:, 0]
        df['u'] = mids[PRINCIPAL]
        for k, lam in enumerate(env.types.lambdas):
            df[f"v_{lam:.6g}"] = mids[FIRST_AGENT + k]

        path = self.output_file.parent / f"{self.output_file.stem}_cells.csv"
        CSVWriter(str(path)).write_cell_rows(df)
        return path
