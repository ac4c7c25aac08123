"""Optimal trustworthy binary tests.

Three structured scans cover the aligned cases: thresholds for positively aligned
payoffs, single intervals for negatively aligned concave ones and tails for negatively
aligned convex ones. solve_general handles any environment: for each candidate
acceptance cutoff λ* it maximises the Lagrangian ∫ (u + η·v(·, λ*)) ω dG with a bang-bang
proposal set, bisecting η until the agent's participation constraint binds.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from equilibrium import EvalReport, batch_outcomes, evaluate
from logger import logger
from measure import (FIRST_AGENT, MASS, PRINCIPAL, CellGrid, discretize, nonnegative_pieces,
                     pieces_to_intervals, quadratic_roots, slice_lengths)
from model import LENGTH_TOL, BinaryTest, Environment, SolverInfeasibleError
from settings import DEFAULT_SETTINGS, SolverSettings

# Upper bound on candidate pairs evaluated in one vectorised batch
_PAIR_BUDGET = 1 << 19
# Payoffs closer than this are treated as tied
_PAYOFF_TIE = 1e-12


@dataclass
class SolveReport:
    """Best trustworthy binary test found by a solver, with search bookkeeping."""
    best_test: BinaryTest
    payoff: float
    lambda_star: Optional[float]
    eta: Optional[float]
    form_tag: str
    candidates_examined: int
    grid_cells: int
    skipped: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    evaluation: Optional[EvalReport] = None


def classify_form(test: BinaryTest) -> str:
    """Shape of a proposal set: empty, threshold, interval, tail or general."""
    return test.form_tag


@dataclass
class _Incumbent:
    """Running best (lo, hi) pair under the payoff-then-smaller-mass tie-break."""
    payoff: float = 0.0
    mass: float = 0.0
    bounds: Optional[Tuple[float, float]] = None
    examined: int = 1

    def offer(self, payoff: np.ndarray, mass: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> None:
        self.examined += len(payoff)
        if not len(payoff):
            return
        top = float(np.max(payoff))
        if top == -np.inf:
            return
        tied = np.nonzero(payoff >= top - _PAYOFF_TIE)[0]
        pick = tied[np.argmin(mass[tied])]
        better = top > self.payoff + _PAYOFF_TIE
        tie_smaller = abs(top - self.payoff) <= _PAYOFF_TIE and mass[pick] < self.mass
        if better or tie_smaller:
            self.payoff = float(payoff[pick])
            self.mass = float(mass[pick])
            self.bounds = (float(lows[pick]), float(highs[pick]))


def _cell_ranges(grid: CellGrid, channel: int) -> Tuple[np.ndarray, np.ndarray]:
    """Smallest and largest value the running integral of a channel takes in each cell."""
    cum = grid.cum[channel]
    fa, fb = grid.starts[channel], grid.ends[channel]
    low = np.minimum(cum[:-1], cum[1:])
    high = np.maximum(cum[:-1], cum[1:])
    turning = fa * fb < 0
    with np.errstate(divide='ignore', invalid='ignore'):
        t = np.where(turning, fa / (fa - fb) * grid.widths, 0.0)
    extreme = cum[:-1] + grid.density * t * 0.5 * fa
    low = np.where(turning, np.minimum(low, extreme), low)
    high = np.where(turning, np.maximum(high, extreme), high)
    return low, high


def _crossings(grid: CellGrid, channel: int, levels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Every x where the running integral of a channel equals one of the levels.

    Returns (level index, x) pairs as two flat arrays.
    """
    levels = np.asarray(levels, dtype=float)
    low, high = _cell_ranges(grid, channel)
    slack = 1e-14 * max(1.0, float(np.max(np.abs(grid.cum[channel]))))
    chunk = max(1, _PAIR_BUDGET // max(grid.n_cells, 1))
    found_idx, found_x = [], []
    for start in range(0, len(levels), chunk):
        block = levels[start:start + chunk]
        hits = (block[:, None] >= low[None, :] - slack) & (block[:, None] <= high[None, :] + slack)
        level_idx, cells = np.nonzero(hits)
        if not len(cells):
            continue
        targets = block[level_idx] - grid.cum[channel, cells]
        for root in slice_lengths(grid, channel, cells, targets, from_left=True):
            ok = ~np.isnan(root)
            found_idx.append(level_idx[ok] + start)
            found_x.append(grid.edges[cells[ok]] + root[ok])
    if not found_idx:
        return np.zeros(0, dtype=int), np.zeros(0)
    return np.concatenate(found_idx), np.concatenate(found_x)


def _endpoint_candidates(grid: CellGrid) -> np.ndarray:
    """Grid edges plus every root of u."""
    left, right = nonnegative_pieces(grid, grid.starts[PRINCIPAL], grid.ends[PRINCIPAL])
    roots = np.concatenate([left[~np.isnan(left)], right[~np.isnan(right)]])
    return np.unique(np.concatenate([grid.edges, roots]))


class _PairScan:
    """Evaluates proposal sets given by endpoint pairs.

    A pair (a, b) is the interval [a, b], or with complement=True the tail set
    [lo, a] ∪ [b, hi].
    """

    def __init__(self, env: Environment, grid: CellGrid, complement: bool, settings: SolverSettings):
        self.env = env
        self.grid = grid
        self.complement = complement
        self.settings = settings
        self.totals = grid.totals()
        self.expected_u = float(self.totals[PRINCIPAL])
        self.incumbent = _Incumbent()

    def offer(self, inner: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> None:
        """inner holds the integrals over [a, b] for each pair, shape (channels, N)."""
        if self.complement:
            keep = highs >= lows
            sets = self.totals[:, None] - inner
        else:
            keep = highs - lows > LENGTH_TOL
            sets = inner
        outcome = batch_outcomes(sets[MASS], sets[PRINCIPAL], sets[FIRST_AGENT:].T,
                                 self.expected_u, self.env.types, self.settings)
        payoff = np.where(outcome.trustworthy & keep & (sets[MASS] > 0), outcome.payoff, -np.inf)
        self.incumbent.offer(payoff, sets[MASS], lows, highs)

    def offer_points(self, lows: np.ndarray, highs: np.ndarray) -> None:
        if len(lows):
            self.offer(self.grid.cumulative(highs) - self.grid.cumulative(lows), lows, highs)

    def offer_all_pairs(self, points: np.ndarray) -> None:
        cum = self.grid.cumulative(points)
        n = len(points)
        step = max(1, _PAIR_BUDGET // n)
        for start in range(0, n, step):
            rows, cols = np.meshgrid(np.arange(start, min(start + step, n)), np.arange(n), indexing='ij')
            upper = cols > rows
            rows, cols = rows[upper], cols[upper]
            self.offer(cum[:, cols] - cum[:, rows], points[rows], points[cols])

    def offer_completions(self, points: np.ndarray, targets: List[Tuple[int, float]]) -> None:
        """Pairs with one end in points and the other where ∫_a^b channel = target."""
        cum = self.grid.cumulative(points)
        for channel, target in targets:
            idx, xs = _crossings(self.grid, channel, cum[channel] + target)
            self.offer_points(points[idx], xs)
            idx, xs = _crossings(self.grid, channel, cum[channel] - target)
            self.offer_points(xs, points[idx])

    def best_test(self) -> BinaryTest:
        lo, hi = self.env.support
        if self.incumbent.bounds is None:
            return BinaryTest.empty(lo, hi)
        a, b = self.incumbent.bounds
        if self.complement:
            return BinaryTest(((lo, a), (b, hi)), lo, hi)
        return BinaryTest(((a, b),), lo, hi)


def _is_identity(env: Environment) -> bool:
    """True when the principal's payoff is u(θ) = θ."""
    u = env.payoffs.u
    bp = np.asarray(u.breakpoints)
    return bool(np.allclose(u.starts, bp[:-1], atol=1e-12) and np.allclose(u.ends, bp[1:], atol=1e-12))


def _grid_step(env: Environment) -> float:
    lo, hi = env.support
    return (hi - lo) / env.states.grid_n


def build_report(test: BinaryTest, env: Environment, grid: CellGrid, examined: int, settings: SolverSettings,
                 eta: Optional[float] = None, skipped: Optional[List[str]] = None) -> SolveReport:
    """Evaluate a chosen test and wrap it in a SolveReport (the empty test if it is not trustworthy)."""
    report = evaluate(test, env, grid, settings)
    notes = []
    if not report.trustworthy:
        logger.warning(f"Selected test {test.intervals} failed the final trust check, falling back to empty")
        notes.append(f"selected set {test.intervals} failed the final trust check")
        lo, hi = env.support
        test = BinaryTest.empty(lo, hi)
        report = evaluate(test, env, grid, settings)
    return SolveReport(
        best_test=test,
        payoff=report.principal_payoff,
        lambda_star=report.acceptance_cutoff,
        eta=eta,
        form_tag=classify_form(test),
        candidates_examined=examined,
        grid_cells=grid.n_cells,
        skipped=list(skipped or []),
        notes=notes,
        evaluation=report,
    )


def _require_alignment(env: Environment, expected: str, solver: str) -> None:
    if env.payoffs.alignment_tag != expected:
        raise ValueError(f"solver/alignment mismatch: {solver} needs alignment {expected}, "
                         f"environment declares {env.payoffs.alignment_tag}")


def solve_threshold(env: Environment, settings: SolverSettings = DEFAULT_SETTINGS) -> SolveReport:
    """Best trustworthy threshold test [θ̂, hi], or the empty test.

    Candidate thresholds are the grid edges, the roots of u, and every point where
    a type's participation constraint or the trust constraint binds exactly.
    """
    logger.info(f"Threshold scan for {len(env.types)} types")
    grid = discretize(env)
    scan = _PairScan(env, grid, complement=False, settings=settings)
    totals = scan.totals

    cutoffs = [_endpoint_candidates(grid)]
    for channel in range(FIRST_AGENT, len(totals)):
        cutoffs.append(_crossings(grid, channel, np.array([totals[channel]]))[1])
    cutoffs.append(_crossings(grid, PRINCIPAL, np.array([0.0]))[1])
    cutoffs = np.unique(np.concatenate(cutoffs))
    scan.offer_points(cutoffs, np.full(len(cutoffs), grid.hi))

    report = build_report(scan.best_test(), env, grid, scan.incumbent.examined, settings)
    if env.payoffs.alignment_tag == 'positive' and _is_identity(env) and not report.best_test.is_empty:
        cutoff = report.best_test.intervals[0][0]
        if cutoff < -_grid_step(env):
            logger.warning(f"Threshold {cutoff:.6g} is below zero for positively aligned payoffs")
            report.notes.append(f"threshold {cutoff:.6g} < 0 under positive alignment")
    logger.info(f"Threshold scan done: {report.best_test.intervals} payoff {report.payoff:.9g}")
    return report


def _pair_scan(env: Environment, complement: bool, settings: SolverSettings) -> Tuple[_PairScan, CellGrid]:
    grid = discretize(env)
    scan = _PairScan(env, grid, complement=complement, settings=settings)
    totals = scan.totals
    points = _endpoint_candidates(grid)
    scan.offer_all_pairs(points)

    # Completion targets are integrals over the inner block [a, b]
    if complement:
        targets = [(c, float(totals[c])) for c in range(FIRST_AGENT, len(totals))]
        targets.append((PRINCIPAL, 0.0))
        scan.offer_points(np.array([grid.lo]), np.array([grid.lo]))
    else:
        targets = [(c, 0.0) for c in range(FIRST_AGENT, len(totals))]
        targets.append((PRINCIPAL, float(totals[PRINCIPAL])))
    scan.offer_completions(points, targets)
    return scan, grid


def solve_interval(env: Environment, settings: SolverSettings = DEFAULT_SETTINGS) -> SolveReport:
    """Best trustworthy single-interval test [θ*, θ**] for negatively aligned concave payoffs.

    Raises:
        ValueError: If the environment is not tagged negative-concave
    """
    _require_alignment(env, 'negative-concave', 'solve_interval')
    logger.info(f"Interval scan for {len(env.types)} types")
    scan, grid = _pair_scan(env, complement=False, settings=settings)
    report = build_report(scan.best_test(), env, grid, scan.incumbent.examined, settings)

    if _is_identity(env) and report.form_tag in ('interval', 'threshold'):
        a, b = report.best_test.intervals[0]
        step = _grid_step(env)
        if a > step or b < -step:
            logger.warning(f"Interval [{a:.6g}, {b:.6g}] does not straddle zero")
            report.notes.append(f"interval [{a:.6g}, {b:.6g}] does not satisfy θ* ≤ 0 ≤ θ**")
    logger.info(f"Interval scan done: {report.best_test.intervals} payoff {report.payoff:.9g}")
    return report


def solve_tail(env: Environment, settings: SolverSettings = DEFAULT_SETTINGS) -> SolveReport:
    """Best trustworthy tail test [lo, θ**] ∪ [θ*, hi] for negatively aligned convex payoffs.

    Raises:
        ValueError: If the environment is not tagged negative-convex
    """
    _require_alignment(env, 'negative-convex', 'solve_tail')
    logger.info(f"Tail scan for {len(env.types)} types")
    scan, grid = _pair_scan(env, complement=True, settings=settings)
    report = build_report(scan.best_test(), env, grid, scan.incumbent.examined, settings)
    logger.info(f"Tail scan done: {report.best_test.intervals} payoff {report.payoff:.9g}")
    return report


def _pieces_integrals(grid: CellGrid, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    keep = ~np.isnan(left)
    if not np.any(keep):
        return np.zeros(len(grid.starts))
    return (grid.cumulative(right[keep]) - grid.cumulative(left[keep])).sum(axis=1)


def _slice_from_right(grid: CellGrid, channel: int, left: np.ndarray, right: np.ndarray,
                      need: float) -> List[Tuple[float, float]]:
    """Contiguous slice from the right end of the given pieces whose channel integral is need.

    Every piece must carry integrand of the same sign as need.
    """
    cells = np.nonzero(~np.isnan(left))[0]
    if not len(cells) or need == 0:
        return []
    inner = (grid.cumulative(right[cells]) - grid.cumulative(left[cells]))[channel]
    running = np.cumsum(inner[::-1])
    reached = np.nonzero(np.abs(running) >= abs(need))[0]
    if not len(reached):
        logger.debug(f"Tie region carries {running[-1]:.6g}, short of {need:.6g}; taking all of it")
        return list(zip(left[cells].tolist(), right[cells].tolist()))

    j = int(reached[0])
    full = cells[len(cells) - j:]
    pieces = list(zip(left[full].tolist(), right[full].tolist()))
    remaining = need - (running[j - 1] if j > 0 else 0.0)
    cell = cells[len(cells) - 1 - j]
    a, b = grid.edges[cell], grid.edges[cell + 1]
    slope = grid.slopes()[channel, cell]
    r = right[cell]
    value_r = grid.starts[channel, cell] + slope * (r - a)
    g = grid.density[cell]
    roots = np.array(quadratic_roots(-0.5 * slope * g, g * value_r, -remaining)).ravel()
    length = r - left[cell]
    roots = roots[~np.isnan(roots) & (roots >= -1e-12 * (b - a)) & (roots <= length + 1e-12 * (b - a))]
    t = float(np.clip(np.min(roots), 0.0, length)) if len(roots) else length
    pieces.append((r - t, r))
    return sorted(pieces)


def _lagrangian_set(grid: CellGrid, channel: int, settings: SolverSettings) -> Tuple[Tuple[Tuple[float, float], ...], float]:
    """Bang-bang maximiser of ∫ u ω dG subject to ∫ v(·, λ*) ω dG ≥ 0, and its multiplier.

    Raises:
        SolverInfeasibleError: If no multiplier makes the constraint hold
    """
    us, ue = grid.starts[PRINCIPAL], grid.ends[PRINCIPAL]
    vs, ve = grid.starts[channel], grid.ends[channel]
    tol = settings.trust_tol

    def agent_value(eta: float) -> float:
        left, right = nonnegative_pieces(grid, us + eta * vs, ue + eta * ve)
        return float(_pieces_integrals(grid, left, right)[channel])

    if agent_value(0.0) >= -tol:
        logger.debug("Participation is slack at η=0")
        return pieces_to_intervals(*nonnegative_pieces(grid, us, ue)), 0.0

    low, high = 0.0, 1.0
    for _ in range(settings.eta_growth_steps):
        if agent_value(high) >= -tol:
            break
        low, high = high, 2.0 * high
    else:
        raise SolverInfeasibleError(f"no multiplier up to {high:.3g} makes the participation constraint hold")

    for _ in range(settings.eta_max_iter):
        if high - low <= settings.bisection_tol * max(1.0, high):
            break
        mid = 0.5 * (low + high)
        if agent_value(mid) >= -tol:
            high = mid
        else:
            low = mid
    eta = high
    logger.debug(f"η bracket [{low:.15g}, {high:.15g}]")

    ws, we = us + eta * vs, ue + eta * ve
    scale = settings.tie_tol * (np.maximum(np.abs(us), np.abs(ue)) + eta * np.maximum(np.abs(vs), np.abs(ve)))
    tie = (np.abs(ws) <= scale) & (np.abs(we) <= scale)
    left, right = nonnegative_pieces(grid, ws, we)
    left[tie] = np.nan
    right[tie] = np.nan
    intervals = list(pieces_to_intervals(left, right))
    if np.any(tie):
        need = -float(_pieces_integrals(grid, left, right)[channel])
        sign = 1.0 if need > 0 else -1.0
        z_left, z_right = nonnegative_pieces(grid, sign * vs, sign * ve)
        z_left[~tie] = np.nan
        z_right[~tie] = np.nan
        logger.debug(f"Tie region over {int(tie.sum())} cells, slicing {need:.6g} of agent value from its right end")
        intervals += _slice_from_right(grid, channel, z_left, z_right, need)
    return tuple(intervals), eta


def solve_general(env: Environment, settings: SolverSettings = DEFAULT_SETTINGS) -> SolveReport:
    """Optimal trustworthy binary test for any valid environment.

    Each type in turn is taken as the lowest accepting type λ*. A candidate whose best
    value ∫ u ω dG falls short of E[u] cannot be trustworthy, and neither can anything else
    that type accepts, so it is dropped. The empty test is always a candidate.
    """
    logger.info(f"General solve for {len(env.types)} types")
    grid = discretize(env)
    lo, hi = env.support
    expected_u = float(grid.totals()[PRINCIPAL])

    best_test = BinaryTest.empty(lo, hi)
    best_payoff, best_mass, best_eta, best_k = 0.0, 0.0, None, None
    skipped, examined = [], 1
    for k, lam in enumerate(env.types.lambdas):
        channel = FIRST_AGENT + k
        examined += 1
        try:
            intervals, eta = _lagrangian_set(grid, channel, settings)
        except SolverInfeasibleError as e:
            logger.warning(f"Skipping λ*={lam}: {e}")
            skipped.append(f"λ*={lam:.6g}: {e}")
            continue

        test = BinaryTest(intervals, lo, hi)
        proposal_value = float(grid.integrals(test.intervals)[PRINCIPAL])
        if proposal_value < expected_u - settings.trust_tol:
            logger.debug(f"λ*={lam}: ∫u={proposal_value:.6g} below E[u]={expected_u:.6g}, cannot be trusted")
            skipped.append(f"λ*={lam:.6g}: proposal value {proposal_value:.6g} below E[u]={expected_u:.6g}")
            continue

        report = evaluate(test, env, grid, settings)
        logger.debug(f"λ*={lam}: η={eta:.9g}, set {test.intervals}, payoff {report.principal_payoff:.9g}")
        if not report.trustworthy:
            skipped.append(f"λ*={lam:.6g}: candidate set is not trustworthy")
            continue
        mass = float(grid.integrals(test.intervals)[MASS])
        better = report.principal_payoff > best_payoff + _PAYOFF_TIE
        tied = abs(report.principal_payoff - best_payoff) <= _PAYOFF_TIE and mass < best_mass
        if better or tied:
            best_test, best_payoff, best_mass, best_eta, best_k = test, report.principal_payoff, mass, eta, k

    result = build_report(best_test, env, grid, examined, settings, eta=best_eta, skipped=skipped)
    if best_eta is not None and best_eta > 1e-9 and result.evaluation is not None:
        slack = result.evaluation.agent_values[best_k]
        if abs(slack) > 1e-9:
            result.notes.append(f"participation slack {slack:.3g} with η={best_eta:.6g}")
    logger.info(f"General solve done: {result.best_test.intervals} payoff {result.payoff:.9g}, η={best_eta}")
    return result
