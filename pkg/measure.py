"""Exact integration over proposal sets and the (p, μ) geometry of binary tests.

Every integral is closed-form: the grid is aligned to all breakpoints, so within a cell
the density is constant and each integrand is linear. A CellGrid stacks several
integrands ("channels") over the same cells and keeps their running integrals, so the
integral over any union of intervals is a handful of lookups.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from logger import logger
from model import (BinaryTest, Environment, PiecewiseLinear, SolverInfeasibleError, StateDistribution,
                   aligned_edges, environment_edges)
from settings import DEFAULT_SETTINGS, SolverSettings

# Channel layout of an environment grid
MASS = 0
MOMENT = 1
PRINCIPAL = 2
FIRST_AGENT = 3


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Aligned cells with linear integrands and their cumulative integrals.

    starts/ends have shape (channels, cells); cum has shape (channels, cells + 1).
    """
    edges: np.ndarray
    density: np.ndarray
    starts: np.ndarray
    ends: np.ndarray
    cum: np.ndarray

    @classmethod
    def build(cls, dist: StateDistribution, edges: np.ndarray, functions: Sequence[PiecewiseLinear]) -> 'CellGrid':
        edges = np.asarray(edges, dtype=float)
        mids = 0.5 * (edges[:-1] + edges[1:])
        bp = np.asarray(dist.breakpoints)
        piece = np.clip(np.searchsorted(bp, mids, side='right') - 1, 0, len(bp) - 2)
        density = np.asarray(dist.densities)[piece]

        starts = [np.ones(len(mids)), edges[:-1].copy()]
        ends = [np.ones(len(mids)), edges[1:].copy()]
        for f in functions:
            fa, fb = f.cell_values(edges)
            starts.append(fa)
            ends.append(fb)
        starts = np.vstack(starts)
        ends = np.vstack(ends)
        cells = density * np.diff(edges) * 0.5 * (starts + ends)
        cum = np.concatenate([np.zeros((len(starts), 1)), np.cumsum(cells, axis=1)], axis=1)
        return cls(edges, density, starts, ends, cum)

    @property
    def n_cells(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def lo(self) -> float:
        return float(self.edges[0])

    @property
    def hi(self) -> float:
        return float(self.edges[-1])

    def cell_integrals(self) -> np.ndarray:
        """Integral of every channel over every cell, shape (channels, cells)."""
        return np.diff(self.cum, axis=1)

    def totals(self) -> np.ndarray:
        return self.cum[:, -1].copy()

    def slopes(self) -> np.ndarray:
        return (self.ends - self.starts) / self.widths

    def cumulative(self, x) -> np.ndarray:
        """Integral of every channel from lo to each x, shape (channels, len(x))."""
        x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), self.edges[0], self.edges[-1])
        idx = np.clip(np.searchsorted(self.edges, x, side='right') - 1, 0, self.n_cells - 1)
        offset = x - self.edges[idx]
        fa = self.starts[:, idx]
        fx = fa + (self.ends[:, idx] - fa) * (offset / self.widths[idx])
        return self.cum[:, idx] + self.density[idx] * offset * 0.5 * (fa + fx)

    def integrals(self, intervals: Sequence[Tuple[float, float]]) -> np.ndarray:
        """Integral of every channel over a union of disjoint intervals."""
        if not intervals:
            return np.zeros(len(self.starts))
        bounds = np.asarray(intervals, dtype=float)
        return (self.cumulative(bounds[:, 1]) - self.cumulative(bounds[:, 0])).sum(axis=1)


def quadratic_roots(a, b, c) -> Tuple[np.ndarray, np.ndarray]:
    """Real roots of a·t² + b·t + c = 0, vectorised; NaN where a root does not exist.

    Uses the cancellation-free form and falls back to the linear root when a = 0.
    """
    a, b, c = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                                  np.asarray(c, dtype=float))
    disc = b * b - 4.0 * a * c
    scale = b * b + np.abs(4.0 * a * c)
    disc = np.where((disc < 0) & (disc > -1e-12 * scale), 0.0, disc)
    quad = (a != 0) & (disc >= 0)
    root = np.sqrt(np.where(quad, disc, 0.0))
    q = -0.5 * (b + np.where(b >= 0, 1.0, -1.0) * root)
    with np.errstate(divide='ignore', invalid='ignore'):
        first = np.where(quad, q / a, np.nan)
        second = np.where(quad & (q != 0), c / q, np.nan)
        linear = (a == 0) & (b != 0)
        first = np.where(linear, -c / b, first)
    return first, second


def slice_lengths(grid: CellGrid, channel: int, cells, target, from_left: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Lengths t of a slice of each cell with ∫ channel over the slice = target.

    The slice is [a, a + t] when from_left, else [b − t, b]. Returns two candidate arrays
    (NaN where no root lies in [0, width]).
    """
    cells = np.asarray(cells, dtype=int)
    g = grid.density[cells]
    width = grid.widths[cells]
    slope = grid.slopes()[channel, cells]
    f0 = grid.starts[channel, cells] if from_left else grid.ends[channel, cells]
    sign = 1.0 if from_left else -1.0
    first, second = quadratic_roots(0.5 * sign * slope * g, g * f0, -np.asarray(target, dtype=float))
    results = []
    for root in (first, second):
        tol = 1e-12 * width
        ok = (root >= -tol) & (root <= width + tol)
        results.append(np.where(ok, np.clip(root, 0.0, width), np.nan))
    return results[0], results[1]


def discretize(env: Environment, extra_points: Sequence[float] = ()) -> CellGrid:
    """Grid for an environment with channels [1, θ, u, v(·, λ_1), ..., v(·, λ_K)]."""
    agent = env.agent_functions()
    edges = environment_edges(env)
    if len(extra_points):
        lo, hi = env.support
        edges = aligned_edges(lo, hi, 1, [edges, extra_points])
    grid = CellGrid.build(env.states, edges, [env.payoffs.u] + agent)
    logger.debug(f"Discretized environment on {grid.n_cells} cells with {len(agent)} agent channels")
    return grid


@lru_cache(maxsize=64)
def _distribution_grid(dist: StateDistribution) -> CellGrid:
    return CellGrid.build(dist, np.asarray(dist.breakpoints), [])


def _require_inside(intervals: Sequence[Tuple[float, float]], dist: StateDistribution) -> None:
    for a, b in intervals:
        if a < dist.support_lo - 1e-12 or b > dist.support_hi + 1e-12:
            raise ValueError(f"set escapes support: [{a}, {b}] not inside [{dist.support_lo}, {dist.support_hi}]")


def integrate(f: PiecewiseLinear, test: BinaryTest, dist: StateDistribution) -> float:
    """Exact ∫ f dG over the proposal set of a test.

    Example:
        >>> integrate(PiecewiseLinear.linear(-1, 1, 0, 1), BinaryTest.threshold(0, -1, 1),
        ...           StateDistribution.uniform(-1, 1))
        0.25
    """
    _require_inside(test.intervals, dist)
    if not f.covers(dist.support_lo, dist.support_hi):
        raise ValueError(f"Integrand domain [{f.lo}, {f.hi}] does not cover the support")
    if test.is_empty:
        return 0.0
    edges = aligned_edges(dist.support_lo, dist.support_hi, 1, [dist.breakpoints, f.breakpoints])
    grid = CellGrid.build(dist, edges, [f])
    return float(grid.integrals(test.intervals)[-1])


@dataclass(frozen=True)
class PosteriorSummary:
    """Proposal probability and conditional means of both signals of a binary test."""
    p: float
    mu: Optional[float]
    null_p: float
    null_mu: Optional[float]


def summarize(test: BinaryTest, dist: StateDistribution) -> PosteriorSummary:
    """Probability of the proposal signal and the expected state under each signal."""
    _require_inside(test.intervals, dist)
    grid = _distribution_grid(dist)
    mass, moment = grid.integrals(test.intervals)[[MASS, MOMENT]]
    total_moment = grid.totals()[MOMENT]
    null_p = 1.0 - mass
    mu = moment / mass if mass > 0 else None
    null_mu = (total_moment - moment) / null_p if null_p > 0 else None
    return PosteriorSummary(float(mass), mu, float(null_p), null_mu)


def _require_full_support(dist: StateDistribution) -> None:
    if not dist.has_full_support():
        raise ValueError("Posterior-mean geometry needs a strictly positive density on the support")


def conditional_mean_above(x: float, dist: StateDistribution) -> float:
    """E[θ | θ ≥ x]; equals x when no mass lies above x."""
    grid = _distribution_grid(dist)
    mass, moment = grid.totals()[[MASS, MOMENT]] - grid.cumulative(x)[[MASS, MOMENT], 0]
    if mass <= 1e-300:
        return float(x)
    return float(moment / mass)


def _bisect(f, a: float, b: float, settings: SolverSettings, what: str) -> float:
    try:
        return float(optimize.bisect(f, a, b, xtol=settings.bisection_tol, maxiter=settings.bisection_max_iter))
    except (RuntimeError, ValueError) as e:
        logger.error(f"Bisection for {what} failed on [{a}, {b}]: {e}")
        raise SolverInfeasibleError(f"Bisection for {what} failed: {e}")


def theta_mu(mu: float, dist: StateDistribution, settings: SolverSettings = DEFAULT_SETTINGS) -> float:
    """Cutoff θ_μ whose upper conditional mean E[θ | θ ≥ θ_μ] equals μ.

    Raises:
        ValueError: If μ lies outside [E[θ], support_hi]
    """
    _require_full_support(dist)
    lo, hi = dist.support_lo, dist.support_hi
    prior_mean = dist.mean()
    if mu < prior_mean - 1e-12 or mu > hi + 1e-12:
        raise ValueError(f"infeasible posterior mean {mu}: must lie in [{prior_mean}, {hi}]")
    if mu <= prior_mean:
        return lo
    if mu >= hi:
        return hi
    return _bisect(lambda x: conditional_mean_above(x, dist) - mu, lo, hi, settings, f"theta_mu({mu})")


def max_feasible_p(mu: float, dist: StateDistribution, settings: SolverSettings = DEFAULT_SETTINGS) -> float:
    """Largest proposal probability a deterministic binary test can pair with mean μ: 1 − G(θ_μ)."""
    return 1.0 - float(dist.cdf(theta_mu(mu, dist, settings)))


def upper_tail_moment(p: float, dist: StateDistribution) -> float:
    """∫ θ dG over the top-p probability mass of the states."""
    grid = _distribution_grid(dist)
    cutoff = dist.quantile(1.0 - p)
    return float(grid.totals()[MOMENT] - grid.cumulative(cutoff)[MOMENT, 0])


def fit_interval(p: float, mu: float, dist: StateDistribution,
                 settings: SolverSettings = DEFAULT_SETTINGS) -> BinaryTest:
    """Interval (or threshold) test with proposal probability p and conditional mean μ.

    Starts from the threshold test [θ_μ, hi] and trims both tails: for each left end a the
    right end b(a) keeps the mass at p, and a is bisected until the mean is μ.

    Raises:
        ValueError: If p > max_feasible_p(μ) ("pair not inducible") or p ≤ 0
    """
    if p <= 0:
        raise ValueError(f"fit_interval needs a positive proposal probability, got {p}")
    lo, hi = dist.support_lo, dist.support_hi
    cutoff = theta_mu(mu, dist, settings)
    p_max = 1.0 - float(dist.cdf(cutoff))
    if p > p_max + settings.fit_tol:
        raise ValueError(f"pair not inducible: p={p} exceeds max feasible {p_max} for mu={mu}")
    if p >= p_max - settings.fit_tol:
        logger.debug(f"(p={p:.6g}, mu={mu:.6g}) sits on the frontier, threshold at {cutoff:.6g}")
        return BinaryTest.threshold(cutoff, lo, hi)

    grid = _distribution_grid(dist)

    def right_end(a: float) -> float:
        return float(dist.quantile(min(float(dist.cdf(a)) + p, 1.0)))

    def mean_gap(a: float) -> float:
        b = right_end(a)
        mass, moment = (grid.cumulative(b) - grid.cumulative(a))[[MASS, MOMENT], 0]
        return moment / mass - mu

    a = _bisect(mean_gap, cutoff, float(dist.quantile(1.0 - p)), settings, f"fit_interval({p}, {mu})")
    test = BinaryTest.interval(a, right_end(a), lo, hi)
    logger.debug(f"Fitted (p={p:.6g}, mu={mu:.6g}) with {test.intervals}")
    return test


def nonnegative_pieces(grid: CellGrid, starts: np.ndarray, ends: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per cell, the closed sub-interval where a linear integrand is ≥ 0.

    starts/ends are the integrand's values at each cell's edges. Returns left and right
    end arrays, NaN for cells where the integrand is negative throughout.
    """
    a, b = grid.edges[:-1], grid.edges[1:]
    left = np.full(grid.n_cells, np.nan)
    right = np.full(grid.n_cells, np.nan)
    whole = (starts >= 0) & (ends >= 0)
    left[whole], right[whole] = a[whole], b[whole]
    falling = (starts >= 0) & (ends < 0)
    rising = (starts < 0) & (ends >= 0)
    with np.errstate(divide='ignore', invalid='ignore'):
        root = a + starts / (starts - ends) * (b - a)
    left[falling], right[falling] = a[falling], root[falling]
    left[rising], right[rising] = root[rising], b[rising]
    return left, right


def pieces_to_intervals(left: np.ndarray, right: np.ndarray) -> Tuple[Tuple[float, float], ...]:
    keep = ~np.isnan(left)
    return tuple(zip(left[keep].tolist(), right[keep].tolist()))
