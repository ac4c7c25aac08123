"""Screening menus of tests for the linear case u(θ) = θ, v(θ, λ) = λ − θ.

A binary test is summarised by its proposal probability p and conditional mean μ. A menu
gives each served type λ_k a pair (p_k, μ_k); the envelope formula pins μ_k once the
p-levels and the rent left to the lowest served type are chosen. For a fixed lowest served
type and top proposal probability P the principal's problem is a linear programme in the
lower p-levels and the rent. Its value is concave in P, so P is scanned on a coarse grid
and refined with a bounded scalar search.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from logger import logger
from measure import fit_interval, max_feasible_p, summarize, upper_tail_moment
from model import Environment, MenuEntry, MenuSchedule, SolverInfeasibleError, TypePrior
from settings import DEFAULT_SETTINGS, SolverSettings
from solver_single import SolveReport, solve_threshold

# p-levels below this are treated as not serving the type
_MIN_LEVEL = 1e-7
# Objective handed to the scalar search where the programme is infeasible
_INFEASIBLE = 1e6
_PAYOFF_TIE = 1e-12
# Slack taken off the frontier row when the LP optimum lands just outside the inducible set
_FRONTIER_MARGINS = (0.0, 1e-9, 1e-8, 1e-7, 1e-6)
_LP_OPTIONS = {'primal_feasibility_tolerance': 1e-10, 'dual_feasibility_tolerance': 1e-10}


@dataclass
class MenuReport:
    """Optimal menu with the top probability and lowest served type that produced it."""
    schedule: MenuSchedule
    payoff: float
    top_probability: Optional[float]
    lowest_served: Optional[float]
    levels: int
    configurations_examined: int
    violations: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)


def is_linear_specification(env: Environment, tol: float = 1e-12) -> bool:
    """True when u(θ) = θ and v(θ, λ) = λ − θ for every type."""
    u = env.payoffs.u
    bp = np.asarray(u.breakpoints)
    if not (np.allclose(u.starts, bp[:-1], atol=tol) and np.allclose(u.ends, bp[1:], atol=tol)):
        return False
    try:
        agent = env.agent_functions()
    except ValueError:
        return False
    for lam, f in zip(env.types.lambdas, agent):
        fbp = np.asarray(f.breakpoints)
        if not (np.allclose(f.starts, lam - fbp[:-1], atol=tol) and np.allclose(f.ends, lam - fbp[1:], atol=tol)):
            return False
    return True


def _require_linear(env: Environment) -> None:
    if not is_linear_specification(env):
        raise ValueError("menus are solved only for u(θ) = θ and v(θ, λ) = λ − θ")


def envelope_schedule(p: Sequence[float], served_from: int, types: TypePrior,
                      rent: float = 0.0) -> List[Tuple[float, float]]:
    """(p_k, μ_k) for every served type from the envelope formula.

    μ_k = λ_k − (rent + Σ_{served j<k} p_j·(λ_{j+1} − λ_j)) / p_k, so the lowest served
    type's μ equals its λ when the rent is zero.

    Args:
        p: Proposal probability for every type in the prior (entries below served_from are ignored)
        served_from: Index of the lowest served type
        types: Type prior
        rent: Interim value left to the lowest served type

    Raises:
        ValueError: If a served p_k is not positive or the served p are not nondecreasing
    """
    lambdas = types.lambdas
    p = np.asarray(p, dtype=float)
    if len(p) != len(lambdas):
        raise ValueError(f"Expected {len(lambdas)} proposal probabilities, got {len(p)}")
    served = p[served_from:]
    if np.any(served <= 0):
        raise ValueError(f"Served types need positive proposal probability, got {served.tolist()}")
    if np.any(np.diff(served) < 0):
        raise ValueError(f"Proposal probabilities must be nondecreasing over served types: {served.tolist()}")
    if rent < 0:
        raise ValueError(f"Rent must be nonnegative, got {rent}")

    schedule = []
    info_rent = rent
    for k in range(served_from, len(lambdas)):
        schedule.append((float(p[k]), float(lambdas[k] - info_rent / p[k])))
        if k + 1 < len(lambdas):
            info_rent += p[k] * (lambdas[k + 1] - lambdas[k])
    return schedule


def check_menu_incentives(menu: MenuSchedule, env: Environment,
                          settings: SolverSettings = DEFAULT_SETTINGS) -> List[str]:
    """Every agent incentive, trust, participation and feasibility violation of a menu.

    The agent's value from type λ′'s test is V(λ, λ′) = (λ − μ(λ′))·p(λ′); unserved types
    have value zero.
    """
    tol = settings.menu_check_tol
    dist = env.states
    expected = dist.mean()
    violations = menu.check_invariants(tol)

    for entry in menu.entries:
        lam, p, mu = entry.type_lambda, entry.p, entry.mu
        if not 0 < p <= 1 + tol:
            violations.append(f"proposal probability {p:.9g} for type {lam:.6g} outside (0, 1]")
            continue
        if mu > lam + tol:
            violations.append(f"IR-A fails for type {lam:.6g}: μ={mu:.9g} > λ")
        floor = max(0.0, expected / p)
        if mu < floor - tol:
            violations.append(f"IC-P'' fails for type {lam:.6g}: μ={mu:.9g} < max(0, E[θ]/p)={floor:.9g}")
        try:
            p_max = max_feasible_p(mu, dist, settings)
        except ValueError as e:
            violations.append(f"FSB fails for type {lam:.6g}: {e}")
        else:
            if p > p_max + tol:
                violations.append(f"FSB fails for type {lam:.6g}: p={p:.9g} > 1 - G(θ_μ)={p_max:.9g}")
        if entry.test is not None:
            realised = summarize(entry.test, dist)
            if abs(realised.p - p) > 1e-8 or realised.mu is None or abs(realised.mu - mu) > 1e-8:
                violations.append(f"test for type {lam:.6g} realises (p={realised.p:.9g}, μ={realised.mu}) "
                                  f"instead of ({p:.9g}, {mu:.9g})")

    offers = {entry.type_lambda: entry for entry in menu.entries}
    for lam in env.types.lambdas:
        own = offers.get(lam)
        own_value = (lam - own.mu) * own.p if own is not None else 0.0
        for entry in menu.entries:
            other_value = (lam - entry.mu) * entry.p
            if other_value > own_value + tol:
                violations.append(f"IC-A fails: type {lam:.6g} gains {other_value - own_value:.3g} "
                                  f"by taking the test for type {entry.type_lambda:.6g}")
    if violations:
        logger.debug(f"Menu violations: {violations}")
    return violations


class _MenuProgram:
    """Linear programme for a fixed lowest served type, as a function of the top probability P.

    Variables are the p-levels of the served types below the top, then the rent c.
    Each constraint row has a right-hand side b₀ + b_P·P + b_H·H(P), where H(P) is the
    moment of the top-P mass of states.
    """

    def __init__(self, types: TypePrior, served_from: int, env: Environment):
        lambdas, probs = types.lambdas, types.probs
        self.dist = env.states
        self.lambdas = lambdas
        self.served_from = s = served_from
        top = len(lambdas) - 1
        self.free = free = top - s
        steps = np.diff(lambdas)
        floor = max(env.states.mean(), 0.0)
        size = free + 1
        rent = free

        gain = np.zeros(size)
        for i in range(free):
            j = s + i
            gain[i] = probs[j] * lambdas[j] - steps[j] * probs[j + 1:].sum()
        gain[rent] = -probs[s:].sum()
        self.gain = gain
        self.top_gain = probs[top] * lambdas[top]

        rows = []

        def row(coefficients, b0=0.0, b_top=0.0, b_moment=0.0):
            rows.append((np.asarray(coefficients, dtype=float), b0, b_top, b_moment))

        def unit(i):
            e = np.zeros(size)
            e[i] = 1.0
            return e

        for i in range(free - 1):
            row(unit(i) - unit(i + 1))
        if free:
            row(unit(free - 1), b_top=1.0)
            row(-lambdas[s] * unit(0) + unit(rent), b0=-floor)
        else:
            row(unit(rent), b0=-floor, b_top=lambdas[top])

        # Frontier at the top: P·λ_top − Σ p_j·Δ_j − c ≤ H(P)
        increments = np.zeros(size)
        increments[:free] = steps[s:top]
        self.frontier_row = len(rows)
        row(-increments - unit(rent), b_top=-lambdas[top], b_moment=1.0)

        # The highest unserved type must not gain from any test in the menu
        if s > 0:
            outside = lambdas[s - 1]
            for i in range(free):
                coefficients = unit(rent) + (outside - lambdas[s + i]) * unit(i)
                coefficients[:i] += steps[s:s + i]
                row(coefficients)
            row(increments + unit(rent), b_top=lambdas[top] - outside)

        self.A = np.vstack([r[0] for r in rows])
        self.b = np.array([r[1:] for r in rows])
        self.bounds = [(0.0, 1.0)] * free + [(0.0, None)]

    def solve(self, top_p: float, frontier_margin: float = 0.0) -> Optional[np.ndarray]:
        """Optimal (p-levels, rent) at top probability P, or None when infeasible.

        Args:
            top_p: Proposal probability of the highest type
            frontier_margin: Amount the frontier row's right-hand side is lowered by

        Raises:
            SolverInfeasibleError: If the LP solver fails for a reason other than infeasibility
        """
        moment = upper_tail_moment(top_p, self.dist)
        b_ub = self.b[:, 0] + self.b[:, 1] * top_p + self.b[:, 2] * moment
        b_ub[self.frontier_row] -= frontier_margin
        result = optimize.linprog(-self.gain, A_ub=self.A, b_ub=b_ub, bounds=self.bounds, method='highs-ds',
                                  options=_LP_OPTIONS)
        if result.status == 2:
            return None
        if result.status != 0:
            raise SolverInfeasibleError(f"linprog failed at P={top_p:.9g}: {result.message}")
        if self.free and result.x[0] < _MIN_LEVEL:
            return None
        return result.x

    def value(self, top_p: float) -> float:
        x = self.solve(top_p)
        if x is None:
            return -np.inf
        return float(self.top_gain * top_p + self.gain @ x)

    def levels(self, top_p: float, x: np.ndarray) -> Tuple[np.ndarray, float]:
        """Per-type proposal probabilities (zero for unserved types) and the rent."""
        p = np.zeros(len(self.lambdas))
        p[self.served_from:-1] = x[:self.free]
        p[-1] = top_p
        # LP noise can leave a level a hair above the next one
        p[self.served_from:] = np.minimum.accumulate(p[self.served_from:][::-1])[::-1]
        return p, max(float(x[-1]), 0.0)


def _best_top_probability(program: _MenuProgram, settings: SolverSettings) -> Tuple[Optional[float], float, int]:
    step = settings.menu_p_step
    candidates = np.unique(np.clip(np.append(np.arange(step, 1.0, step), 1.0), step, 1.0))
    values = np.array([program.value(P) for P in candidates])
    if not np.any(np.isfinite(values)):
        return None, -np.inf, len(candidates)

    i = int(np.argmax(values))
    best_p, best_value = float(candidates[i]), float(values[i])

    def objective(P: float) -> float:
        v = program.value(P)
        return -v if np.isfinite(v) else _INFEASIBLE

    a, b = max(best_p - step, 1e-9), min(best_p + step, 1.0)
    result = optimize.minimize_scalar(objective, bounds=(a, b), method='bounded',
                                      options={'xatol': settings.menu_p_tol, 'maxiter': 500})
    examined = len(candidates) + int(result.nfev)
    refined = program.value(float(result.x))
    if refined > best_value:
        best_p, best_value = float(result.x), refined
    return best_p, best_value, examined


def _realise(program: _MenuProgram, top_p: float, env: Environment, settings: SolverSettings,
             frontier_margin: float = 0.0) -> MenuSchedule:
    x = program.solve(top_p, frontier_margin)
    if x is None:
        raise ValueError(f"menu programme infeasible at P={top_p} with frontier margin {frontier_margin}")
    p, rent = program.levels(top_p, x)
    types = env.types
    s = program.served_from
    entries = []
    fitted = {}
    for lam, (p_k, mu_k) in zip(types.lambdas[s:], envelope_schedule(p, s, types, rent)):
        key = (round(p_k, 9), round(mu_k, 9))
        if key not in fitted:
            fitted[key] = fit_interval(p_k, mu_k, env.states, settings)
        entries.append(MenuEntry(float(lam), p_k, mu_k, fitted[key]))
    return MenuSchedule(tuple(entries), tuple(types.lambdas[:s].tolist()), rent)


def _realise_with_margins(program: _MenuProgram, top_p: float, env: Environment,
                          settings: SolverSettings) -> Tuple[Optional[MenuSchedule], List[str]]:
    """First realisable, incentive-compatible schedule as the frontier row is tightened step by step."""
    problems = []
    for margin in _FRONTIER_MARGINS:
        try:
            schedule = _realise(program, top_p, env, settings, margin)
        except (ValueError, SolverInfeasibleError) as e:
            problems.append(str(e))
            continue
        violations = check_menu_incentives(schedule, env, settings)
        if not violations:
            if margin:
                logger.debug(f"Realised P={top_p:.12g} after lowering the frontier by {margin}")
            return schedule, problems
        problems.append(violations[0])
    return None, problems


def single_test_menu(report: SolveReport, env: Environment) -> MenuSchedule:
    """The menu offering one test to every type that accepts it.

    Served types share the test's (p, μ); the rent is what the lowest accepting type keeps.
    """
    types = env.types
    if report.best_test.is_empty or report.evaluation is None or report.evaluation.cutoff_index is None:
        return MenuSchedule.empty(types)
    summary = summarize(report.best_test, env.states)
    s = report.evaluation.cutoff_index
    entries = tuple(MenuEntry(float(lam), summary.p, summary.mu, report.best_test) for lam in types.lambdas[s:])
    rent = max(0.0, float(types.lambdas[s] - summary.mu) * summary.p)
    return MenuSchedule(entries, tuple(types.lambdas[:s].tolist()), rent)


def solve_menu_linear(env: Environment, settings: SolverSettings = DEFAULT_SETTINGS) -> MenuReport:
    """Payoff-maximising menu of trustworthy tests for the linear specification.

    Tries every lowest served type, best programme value first. A programme whose optimum
    cannot be realised is retried with the frontier row tightened, then the next lowest
    served type is tried. The result never pays less than the best single test offered to
    every type that accepts it. Returns the empty menu when every type is below E[θ] or
    nothing feasible pays more than zero.

    Raises:
        ValueError: If the environment is not the linear specification
    """
    _require_linear(env)
    types = env.types
    lambdas = types.lambdas
    expected = env.states.mean()
    logger.info(f"Menu search over {len(types)} types, E[θ]={expected:.6g}")
    if lambdas.max() < expected:
        logger.info("Every type is pessimistic, no test can be accepted")
        return MenuReport(MenuSchedule.empty(types), 0.0, None, None, 0, 0,
                          notes=["every type lies below E[θ]"])

    candidates = []
    examined = 0
    for s, lam in enumerate(lambdas):
        if lam < expected or lam <= 0:
            logger.debug(f"Lowest served type {lam} cannot satisfy the trust constraint, skipping")
            continue
        program = _MenuProgram(types, s, env)
        top_p, value, count = _best_top_probability(program, settings)
        examined += count
        logger.debug(f"Lowest served type {lam}: best P={top_p}, value {value:.12g}")
        if top_p is not None:
            candidates.append((value, s, top_p, program))

    notes = []
    best = None
    for value, s, top_p, program in sorted(candidates, key=lambda c: (-c[0], c[1])):
        if value <= _PAYOFF_TIE:
            break
        schedule, problems = _realise_with_margins(program, top_p, env, settings)
        if schedule is None:
            logger.warning(f"Menu serving from type {lambdas[s]} cannot be realised: {problems[-1]}")
            notes.append(f"serving from λ={lambdas[s]:.6g} not realisable: {problems[-1]}")
            continue
        best = (schedule, top_p, float(lambdas[s]))
        break

    single = solve_single_linear(env, settings)
    if best is None or single.payoff > best[0].payoff(types) + _PAYOFF_TIE:
        fallback = single_test_menu(single, env)
        if not fallback.is_empty and not check_menu_incentives(fallback, env, settings):
            logger.info(f"Falling back to the single threshold test, payoff {single.payoff:.12g}")
            notes.append("offering the best single test to every accepting type")
            best = (fallback, fallback.entries[-1].p, fallback.entries[0].type_lambda)
    if best is None:
        logger.info("No menu pays more than the empty test")
        return MenuReport(MenuSchedule.empty(types), 0.0, None, None, 0, examined, notes=notes)

    schedule, top_p, lowest = best
    levels = len({round(e.p, 9) for e in schedule.entries})
    if levels > 3:
        notes.append(f"{levels} distinct proposal probabilities")
    payoff = schedule.payoff(types)
    logger.info(f"Menu with {len(schedule.distinct_tests())} tests, P={top_p:.12g}, payoff {payoff:.12g}")
    return MenuReport(schedule, payoff, top_p, lowest, levels, examined, notes=notes)


def solve_single_linear(env: Environment, settings: SolverSettings = DEFAULT_SETTINGS) -> SolveReport:
    """Best single test for the linear specification, which is always a threshold test or empty."""
    _require_linear(env)
    return solve_threshold(env, settings)
