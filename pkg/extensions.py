"""Several agents who must all accept, and agents with more than two actions.

With independent agents and a unanimity rule only the most reluctant agent matters, so
several agents reduce to one agent whose type is the minimum of the individual types.
With richer actions ṽ(θ, λ, a) affine in θ the agent's choice depends on the posterior
mean only, and verify_rich_binary_sufficiency checks on coarse grids that no test with more
signals beats the best binary one.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from equilibrium import GeneralBatchOutcome, misreport_outcomes
from logger import logger
from measure import MASS, MOMENT, PRINCIPAL
from model import Environment, TypePrior, require_valid
from oracle import SufficiencyReport, sufficiency_search
from settings import DEFAULT_SETTINGS, SolverSettings
from solver_single import SolveReport, solve_general

# Action values closer than this count as tied
_ACTION_TIE = 1e-12


@dataclass(frozen=True, eq=False)
class RichActionSpec:
    """Agent payoff ṽ(θ, λ_k, a_j) = intercept[k, j] + slope[k, j]·θ on a finite action grid.

    The grid must contain the rejection action 0, where the payoff is zero.
    """
    lambdas: np.ndarray
    actions: np.ndarray
    intercept: np.ndarray
    slope: np.ndarray

    @classmethod
    def quadratic(cls, lambdas: Sequence[float], action_max: float = 2.0,
                  action_step: float = DEFAULT_SETTINGS.action_step) -> 'RichActionSpec':
        """ṽ(θ, λ, a) = (θ + λ)·a − a²/2 on {0, step, ..., action_max}."""
        actions = np.linspace(0.0, action_max, int(round(action_max / action_step)) + 1)
        lambdas = np.asarray(lambdas, dtype=float)
        intercept = lambdas[:, None] * actions[None, :] - actions[None, :] ** 2 / 2
        slope = np.tile(actions, (len(lambdas), 1))
        return cls(lambdas, actions, intercept, slope)

    def type_indices(self, lambdas: Sequence[float]) -> np.ndarray:
        indices = []
        for lam in lambdas:
            match = np.nonzero(np.abs(self.lambdas - lam) <= 1e-12)[0]
            if not len(match):
                raise ValueError(f"No action payoffs given for type {lam}")
            indices.append(int(match[0]))
        return np.array(indices, dtype=int)

    def validate(self) -> List[str]:
        """Shape and monotonicity problems; empty when the spec is usable."""
        violations = []
        shape = (len(self.lambdas), len(self.actions))
        if self.intercept.shape != shape or self.slope.shape != shape:
            return [f"action payoff tables must have shape {shape}, got {self.intercept.shape} and {self.slope.shape}"]
        if np.any(np.diff(self.actions) <= 0) or self.actions[0] < 0:
            violations.append(f"actions must be nonnegative and strictly increasing: {self.actions.tolist()}")
        zero = np.nonzero(np.abs(self.actions) <= _ACTION_TIE)[0]
        if not len(zero):
            violations.append("action grid must contain the rejection action 0")
        elif np.any(np.abs(self.intercept[:, zero[0]]) > _ACTION_TIE) or np.any(np.abs(self.slope[:, zero[0]]) > _ACTION_TIE):
            violations.append("payoff of the rejection action must be zero for every state and type")
        positive = self.actions > _ACTION_TIE
        if np.any(self.slope[:, positive] <= 0):
            violations.append("payoff must strictly increase in θ for every positive action")
        cross = np.diff(self.slope, axis=1)
        if np.any(cross < -_ACTION_TIE):
            k, j = np.argwhere(cross < -_ACTION_TIE)[0]
            violations.append(f"payoff not supermodular in (θ, a) for λ={self.lambdas[k]} "
                              f"between actions {self.actions[j]} and {self.actions[j + 1]}")
        return violations


def best_actions(mu: np.ndarray, spec: RichActionSpec, lambdas: Sequence[float]) -> np.ndarray:
    """a*(μ, λ) for every posterior mean and type; shape mu.shape + (len(lambdas),).

    Ties go to the largest action.
    """
    mu = np.asarray(mu, dtype=float)
    rows = spec.type_indices(lambdas)
    values = spec.intercept[rows] + spec.slope[rows] * mu[..., None, None]
    best = values.max(axis=-1, keepdims=True)
    reversed_choice = np.argmax((values >= best - _ACTION_TIE)[..., ::-1], axis=-1)
    return spec.actions[len(spec.actions) - 1 - reversed_choice]


def rich_best_action(mu: float, lam: float, spec: RichActionSpec) -> float:
    """Optimal action of type λ at posterior mean μ."""
    return float(best_actions(np.array(mu), spec, [lam])[0])


def batch_rich_outcomes(probs: np.ndarray, proposal: np.ndarray, moment: np.ndarray, spec: RichActionSpec,
                        types: TypePrior, settings: SolverSettings = DEFAULT_SETTINGS) -> GeneralBatchOutcome:
    """Misreport analysis when the agent picks an action; the principal earns u(θ)·a.

    Args:
        probs: Probability of each signal, shape (N, S)
        proposal: ∫ u dG restricted to each signal, shape (N, S)
        moment: ∫ θ dG restricted to each signal, shape (N, S)
    """
    probs = np.atleast_2d(probs)
    live = probs > 0
    mu = np.where(live, np.atleast_2d(moment) / np.where(live, probs, 1.0), 0.0)
    expected_action = best_actions(mu, spec, types.lambdas) @ types.probs
    return misreport_outcomes(probs, proposal, expected_action, settings)


def verify_rich_binary_sufficiency(env: Environment, spec: RichActionSpec, signal_count: int = 3,
                                   samples: int = 0, cells: int = 8,
                                   settings: SolverSettings = DEFAULT_SETTINGS) -> SufficiencyReport:
    """Search multi-signal tests under rich actions for one that beats every binary test.

    The binary baseline is the best trustworthy two-signal test from the same kernel
    enumeration, so only deterministic assignments are compared exactly.
    """
    violations = spec.validate()
    if violations:
        raise ValueError(f"Invalid action specification: {'; '.join(violations)}")
    types = env.types

    def outcome(per_signal: np.ndarray):
        result = batch_rich_outcomes(per_signal[:, :, MASS], per_signal[:, :, PRINCIPAL],
                                     per_signal[:, :, MOMENT], spec, types, settings)
        return result.trustworthy, result.truthful_payoff

    binary = sufficiency_search(env, cells, 2, samples, settings, outcome, binary_payoff=np.inf)
    logger.info(f"Best binary test under rich actions pays {binary.max_general_payoff:.9g}")
    return sufficiency_search(env, cells, signal_count, samples, settings, outcome,
                              binary_payoff=binary.max_general_payoff)


def pivotal_prior(priors: Sequence[TypePrior]) -> TypePrior:
    """Distribution of the smallest type among independent agents.

    Pr[min λ_i ≥ x] is the product of the individual survivals, evaluated on the union of
    the supports.

    Raises:
        ValueError: If no prior is given
    """
    if not priors:
        raise ValueError("pivotal_prior needs at least one type prior")
    support = np.unique(np.concatenate([prior.lambdas for prior in priors]))
    survival = np.array([np.prod([prior.survival(x) for prior in priors]) for x in support])
    masses = survival - np.append(survival[1:], 0.0)
    atoms = [(float(lam), float(q)) for lam, q in zip(support, masses) if q > 1e-15]
    logger.debug(f"Pivotal prior of {len(priors)} agents: {atoms}")
    return TypePrior.from_pairs(atoms)


def solve_multi_agent(agents: Sequence[Environment], settings: SolverSettings = DEFAULT_SETTINGS) -> SolveReport:
    """Optimal binary test when every agent must accept.

    Agents share G, u and v and differ only in their type priors.

    Raises:
        ValueError: If no agent is given or the agents do not share G, u and v
        EnvironmentValidationError: If an agent's environment or the pivotal one is invalid
    """
    if not agents:
        raise ValueError("solve_multi_agent needs at least one agent")
    first = agents[0]
    for i, agent in enumerate(agents[1:], start=2):
        if agent.states != first.states or agent.payoffs != first.payoffs:
            logger.error(f"Agent {i} does not share the state distribution and payoffs of agent 1")
            raise ValueError(f"agents must share G, u and v; agent {i} differs")
    for agent in agents:
        require_valid(agent)

    pivotal = first.with_types(pivotal_prior([agent.types for agent in agents]))
    require_valid(pivotal)
    logger.info(f"Solving for the pivotal agent of {len(agents)}: {pivotal.types.atoms}")
    return solve_general(pivotal, settings)
