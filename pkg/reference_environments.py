"""Worked environments used by `persuade.py reproduce` and the tests."""

import numpy as np

from model import (AdditiveAgentPayoff, Environment, PayoffSpec, PiecewiseLinear, StateDistribution,
                   TypePrior)
from settings import DEFAULT_SETTINGS


def _step_environment(epsilon: float, u_breakpoints, u_levels, grid_n: int) -> Environment:
    """Single agent of type 0 on uniform[−1, 1] who gets 1 below zero and −1 − ε above."""
    agent = AdditiveAgentPayoff(PiecewiseLinear.step((-1.0, 0.0, 1.0), (1.0, -1.0 - epsilon)))
    return Environment(
        StateDistribution.uniform(-1.0, 1.0, grid_n),
        PayoffSpec(PiecewiseLinear.step(u_breakpoints, u_levels), agent, 'general'),
        TypePrior.degenerate(0.0),
    )


def fig1(epsilon: float = 0.1, grid_n: int = DEFAULT_SETTINGS.grid_n) -> Environment:
    """u = −1 below zero and 1 + 2ε above.

    The agent rejects full learning and no set with ∫u ≥ E[u] = ε keeps the agent on board,
    so the best trustworthy test is empty.
    """
    return _step_environment(epsilon, (-1.0, 0.0, 1.0), (-1.0, 1.0 + 2 * epsilon), grid_n)


def fig1_reduced(epsilon: float = 0.1, grid_n: int = DEFAULT_SETTINGS.grid_n) -> Environment:
    """fig1 with u lowered to 1 − 2ε on (1/2, 1], which makes E[u] = 0.

    The best test proposes on [−(1/2 + ε/2), 1/2] and pays ε/4.
    """
    return _step_environment(epsilon, (-1.0, 0.0, 0.5, 1.0), (-1.0, 1.0 + 2 * epsilon, 1.0 - 2 * epsilon), grid_n)


def linear_environment(types: TypePrior, lo: float = -1.0, hi: float = 1.0,
                       grid_n: int = DEFAULT_SETTINGS.grid_n) -> Environment:
    """u(θ) = θ and v(θ, λ) = λ − θ on uniform[lo, hi]."""
    return Environment(
        StateDistribution.uniform(lo, hi, grid_n),
        PayoffSpec(PiecewiseLinear.linear(lo, hi, 0.0, 1.0),
                   AdditiveAgentPayoff(PiecewiseLinear.linear(lo, hi, 0.0, -1.0)),
                   'negative-concave'),
        types,
    )


def menu51(epsilon: float = 0.01, grid_n: int = DEFAULT_SETTINGS.grid_n) -> Environment:
    """Types 1/3 (probability ε) and 2/3 on uniform[−1, 1].

    As ε → 0 the optimal menu offers [1/12, 7/12] to type 1/3 and [0, 1] to type 2/3.
    """
    return linear_environment(TypePrior.from_pairs([(1 / 3, epsilon), (2 / 3, 1.0 - epsilon)]), grid_n=grid_n)


def menuB(delta: float = 1e-3, epsilon: float = 1e-2, grid_n: int = DEFAULT_SETTINGS.grid_n) -> Environment:
    """Types 7/24, 1/2 and 2/3 on uniform[−1/3, 2/3], where the optimal menu has three tests."""
    q1 = (95 / 243 - delta) * epsilon
    q2 = (148 / 243 + delta) * epsilon
    types = TypePrior.from_pairs([(7 / 24, q1), (1 / 2, q2), (2 / 3, 1.0 - q1 - q2)])
    return linear_environment(types, lo=-1 / 3, hi=2 / 3, grid_n=grid_n)


def concave_environment(lam: float = 0.04, pieces: int = 40,
                        grid_n: int = DEFAULT_SETTINGS.grid_n) -> Environment:
    """u(θ) = θ against v(θ, λ) = λ − θ − θ²/2 (interpolated), a negatively aligned concave agent."""
    breakpoints = np.linspace(-1.0, 1.0, pieces + 1)
    base = PiecewiseLinear.continuous(breakpoints, -breakpoints - breakpoints ** 2 / 2)
    return Environment(
        StateDistribution.uniform(-1.0, 1.0, grid_n),
        PayoffSpec(PiecewiseLinear.linear(-1.0, 1.0, 0.0, 1.0), AdditiveAgentPayoff(base), 'negative-concave'),
        TypePrior.degenerate(lam),
    )


REFERENCE_BUILDERS = {
    'fig1': fig1,
    'fig1-reduced': fig1_reduced,
    'menu51': menu51,
    'menuB': menuB,
}
