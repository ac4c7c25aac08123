"""Test evaluation inside the truthful equilibrium.

A binary test is evaluated by the agent's acceptance cutoff (the smallest type whose
expected payoff given the proposal is nonnegative), the principal's payoff
∫_{Θ₁} u dG · Pr[λ ≥ λ*], and trustworthiness: the principal must not gain by
reporting the proposal signal after the null signal, i.e. ∫_{Θ₀} u dG ≤ 0.
General finite-signal tests are checked against every misreport.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from logger import logger
from measure import FIRST_AGENT, MASS, PRINCIPAL, CellGrid, discretize, nonnegative_pieces, pieces_to_intervals
from model import BinaryTest, Environment, GeneralTest, TypePrior
from settings import DEFAULT_SETTINGS, SolverSettings


@dataclass(frozen=True)
class EvalReport:
    """Outcome of a binary test in the truthful equilibrium."""
    proposal_value: float
    null_value: float
    acceptance_cutoff: Optional[float]
    cutoff_index: Optional[int]
    acceptance_prob: float
    principal_payoff: float
    trustworthy: bool
    agent_values: Tuple[float, ...]


@dataclass(frozen=True)
class BatchOutcome:
    """Vectorised evaluation of many candidate sets from their integrals."""
    payoff: np.ndarray
    trustworthy: np.ndarray
    acceptance_prob: np.ndarray
    cutoff_index: np.ndarray


@dataclass(frozen=True)
class GeneralEvalReport:
    trustworthy: bool
    best_deviation: Optional[Tuple[str, str]]
    deviation_gain: float
    truthful_payoff: float
    signal_probs: Tuple[float, ...]
    proposes: Tuple[bool, ...]
    acceptance_probs: Tuple[float, ...]


def batch_outcomes(mass: np.ndarray, proposal: np.ndarray, agent: np.ndarray, total_u: float,
                   types: TypePrior, settings: SolverSettings = DEFAULT_SETTINGS) -> BatchOutcome:
    """Evaluate candidate proposal sets given their integrals.

    Args:
        mass: Probability of each candidate set, shape (N,)
        proposal: ∫ u dG over each set, shape (N,)
        agent: ∫ v(·, λ_k) dG over each set, shape (N, K)
        total_u: E[u] over the whole support
        types: Type prior supplying the weights q_k

    Returns:
        BatchOutcome; untrustworthy candidates keep their payoff but are flagged
    """
    tol = settings.trust_tol
    mass = np.asarray(mass, dtype=float)
    proposal = np.asarray(proposal, dtype=float)
    agent = np.atleast_2d(np.asarray(agent, dtype=float))
    nonempty = mass > 0

    accepts = agent >= -tol
    any_accepts = accepts.any(axis=1) & nonempty
    first = np.argmax(accepts, axis=1)
    tails = np.cumsum(types.probs[::-1])[::-1]
    acceptance = np.where(any_accepts, tails[first], 0.0)
    cutoff = np.where(any_accepts, first, -1)

    trustworthy = ~nonempty | ((total_u - proposal <= tol) & (proposal >= -tol))
    payoff = np.where(nonempty & (proposal >= 0), proposal * acceptance, 0.0)
    return BatchOutcome(payoff, trustworthy, acceptance, cutoff)


def _set_integrals(test: BinaryTest, grid: CellGrid) -> np.ndarray:
    return grid.integrals(test.intervals)


def acceptance_cutoff(test: BinaryTest, env: Environment, grid: Optional[CellGrid] = None,
                      settings: SolverSettings = DEFAULT_SETTINGS) -> Optional[int]:
    """Index of the smallest type that accepts the proposal, or None if no type does.

    Indifferent types accept.

    Raises:
        ValueError: If the test is empty
    """
    if test.is_empty:
        raise ValueError("no proposal signal: the empty test never proposes")
    grid = grid if grid is not None else discretize(env)
    agent_values = _set_integrals(test, grid)[FIRST_AGENT:]
    accepting = np.nonzero(agent_values >= -settings.trust_tol)[0]
    return int(accepting[0]) if len(accepting) else None


def evaluate(test: BinaryTest, env: Environment, grid: Optional[CellGrid] = None,
             settings: SolverSettings = DEFAULT_SETTINGS) -> EvalReport:
    """Principal payoff, acceptance and trustworthiness of a binary test."""
    grid = grid if grid is not None else discretize(env)
    integrals = _set_integrals(test, grid)
    total_u = float(grid.totals()[PRINCIPAL])
    mass = integrals[MASS] if not test.is_empty else 0.0
    outcome = batch_outcomes(np.array([mass]), integrals[[PRINCIPAL]], integrals[FIRST_AGENT:][None, :],
                             total_u, env.types, settings)

    cutoff_index = int(outcome.cutoff_index[0])
    cutoff_index = cutoff_index if cutoff_index >= 0 else None
    report = EvalReport(
        proposal_value=float(integrals[PRINCIPAL]),
        null_value=float(total_u - integrals[PRINCIPAL]),
        acceptance_cutoff=float(env.types.lambdas[cutoff_index]) if cutoff_index is not None else None,
        cutoff_index=cutoff_index,
        acceptance_prob=float(outcome.acceptance_prob[0]),
        principal_payoff=float(outcome.payoff[0]),
        trustworthy=bool(outcome.trustworthy[0]),
        agent_values=tuple(float(x) for x in integrals[FIRST_AGENT:]),
    )
    logger.debug(f"Evaluated {test.form_tag} test {test.intervals}: payoff={report.principal_payoff:.6g}, "
                 f"cutoff={report.acceptance_cutoff}, trustworthy={report.trustworthy}")
    return report


def full_learning_set(env: Environment, grid: Optional[CellGrid] = None) -> BinaryTest:
    """The states where the principal likes the project: {θ : u(θ) ≥ 0}."""
    grid = grid if grid is not None else discretize(env)
    left, right = nonnegative_pieces(grid, grid.starts[PRINCIPAL], grid.ends[PRINCIPAL])
    lo, hi = env.support
    return BinaryTest(pieces_to_intervals(left, right), lo, hi)


def full_learning_benchmark(env: Environment, settings: SolverSettings = DEFAULT_SETTINGS) -> EvalReport:
    """Evaluate the full-learning test {u ≥ 0}; its trustworthiness flag is informational only."""
    grid = discretize(env)
    test = full_learning_set(env, grid)
    report = evaluate(test, env, grid, settings)
    logger.info(f"Full-learning benchmark {test.intervals}: payoff {report.principal_payoff:.6g}")
    return report


@dataclass(frozen=True)
class GeneralBatchOutcome:
    """Misreport analysis of many finite-signal tests at once; arrays have one row per test."""
    trustworthy: np.ndarray
    truthful_payoff: np.ndarray
    deviation_gain: np.ndarray
    best_deviation: np.ndarray
    proposes: np.ndarray
    acceptance: np.ndarray


def misreport_outcomes(probs: np.ndarray, proposal: np.ndarray, response: np.ndarray,
                       settings: SolverSettings = DEFAULT_SETTINGS) -> GeneralBatchOutcome:
    """Check finite-signal tests for profitable misreports given the agent's response to each signal.

    Args:
        probs: Probability of each signal, shape (N, S)
        proposal: ∫ u dG restricted to each signal, shape (N, S)
        response: Agent response to each signal when it is reported with a proposal, shape (N, S):
            the acceptance probability, or the expected action when actions are richer

    After signal s the principal proposes iff E[u | s] ≥ 0. Reporting s̃ instead earns
    E[u | s] times the response to s̃. Signals with zero probability, or that never lead to
    a proposal, get no response.
    """
    tol = settings.trust_tol
    probs = np.atleast_2d(probs)
    proposal = np.atleast_2d(proposal)
    live = probs > 0
    conditional_u = np.where(live, proposal / np.where(live, probs, 1.0), 0.0)
    proposes = live & (proposal >= -tol)
    response = np.where(proposes, response, 0.0)

    truthful = np.where(proposes, conditional_u * response, 0.0)
    deviation = conditional_u[:, :, None] * response[:, None, :]
    gain = np.where(live[:, :, None], deviation - truthful[:, :, None], -np.inf)
    signals = probs.shape[1]
    gain[:, np.arange(signals), np.arange(signals)] = -np.inf

    flat = gain.reshape(len(gain), -1)
    best = np.argmax(flat, axis=1)
    best_gain = flat[np.arange(len(gain)), best]
    return GeneralBatchOutcome(
        trustworthy=~(best_gain > tol),
        truthful_payoff=np.where(proposes, proposal * response, 0.0).sum(axis=1),
        deviation_gain=np.maximum(best_gain, 0.0),
        best_deviation=np.column_stack([best // signals, best % signals]),
        proposes=proposes,
        acceptance=response,
    )


def batch_general_outcomes(probs: np.ndarray, proposal: np.ndarray, agent: np.ndarray, types: TypePrior,
                           settings: SolverSettings = DEFAULT_SETTINGS) -> GeneralBatchOutcome:
    """Misreport analysis when the agent accepts or rejects; agent is ∫ v(·, λ_k) dG per signal, shape (N, S, K)."""
    accepts = agent >= -settings.trust_tol
    tails = np.cumsum(types.probs[::-1])[::-1]
    acceptance = np.where(accepts.any(axis=-1), tails[np.argmax(accepts, axis=-1)], 0.0)
    return misreport_outcomes(probs, proposal, acceptance, settings)


def evaluate_general(test: GeneralTest, env: Environment,
                     settings: SolverSettings = DEFAULT_SETTINGS) -> GeneralEvalReport:
    """Trustworthiness and truthful payoff of a finite-signal test."""
    grid = discretize(env, extra_points=test.edges)
    cell_integrals = np.diff(grid.cumulative(np.asarray(test.edges)), axis=1)
    per_signal = cell_integrals @ test.kernel
    outcome = batch_general_outcomes(per_signal[MASS][None, :], per_signal[PRINCIPAL][None, :],
                                     per_signal[FIRST_AGENT:].T[None, :, :], env.types, settings)

    trustworthy = bool(outcome.trustworthy[0])
    deviation = None
    if not trustworthy:
        seen, reported = outcome.best_deviation[0]
        deviation = (test.signals[reported], test.signals[seen])
        logger.debug(f"Profitable misreport: report {deviation[0]} after {deviation[1]} "
                     f"gains {outcome.deviation_gain[0]:.6g}")
    return GeneralEvalReport(
        trustworthy=trustworthy,
        best_deviation=deviation,
        deviation_gain=float(outcome.deviation_gain[0]),
        truthful_payoff=float(outcome.truthful_payoff[0]),
        signal_probs=tuple(float(p) for p in per_signal[MASS]),
        proposes=tuple(bool(x) for x in outcome.proposes[0]),
        acceptance_probs=tuple(float(a) for a in outcome.acceptance[0]),
    )
