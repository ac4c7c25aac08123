"""Brute-force ground truth on coarse grids.

The oracles resample an environment onto a handful of cells, where the density, u and
every v(·, λ_k) become step functions, and then enumerate instead of optimise:
every subset of cells for binary tests, every deterministic signal assignment (plus
random stochastic kernels) for multi-signal tests, and every subset of a finite pool
for menus.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from equilibrium import batch_general_outcomes, batch_outcomes, evaluate
from logger import logger
from measure import FIRST_AGENT, MASS, PRINCIPAL, CellGrid, discretize
from model import (BinaryTest, Environment, GeneralTest, PayoffSpec, PiecewiseLinear, StateDistribution,
                   TabulatedAgentPayoff, environment_edges)
from settings import DEFAULT_SETTINGS, SolverSettings
from solver_single import SolveReport, build_report

_PAYOFF_TIE = 1e-12
# Largest number of deterministic kernels enumerated exhaustively
_MAX_KERNELS = 1 << 17
# Grids larger than this are too coarse a check to be worth the enumeration
_MAX_SUFFICIENCY_CELLS = 12
_MAX_POOL = 12


def resample_environment(env: Environment, cells: Optional[int] = None,
                         edges: Optional[Sequence[float]] = None) -> Environment:
    """Step-function version of an environment on n equal cells or on explicit edges.

    Each cell keeps its probability, and u and v(·, λ_k) become their conditional means on
    the cell, so integrals over unions of whole cells are unchanged.
    """
    lo, hi = env.support
    if edges is None:
        edges = np.linspace(lo, hi, cells + 1) if cells else environment_edges(env)
    edges = np.array(edges, dtype=float)
    if abs(edges[0] - lo) > 1e-12 or abs(edges[-1] - hi) > 1e-12 or np.any(np.diff(edges) <= 0):
        raise ValueError(f"Resampling edges must increase strictly from {lo} to {hi}")
    edges[0], edges[-1] = lo, hi

    grid = discretize(env, extra_points=edges)
    integrals = np.diff(grid.cumulative(edges), axis=1)
    widths = np.diff(edges)
    mass = integrals[MASS]
    mids = 0.5 * (edges[:-1] + edges[1:])
    with np.errstate(divide='ignore', invalid='ignore'):
        means = np.where(mass > 0, integrals / np.where(mass > 0, mass, 1.0), np.nan)

    def level(channel: int, function: PiecewiseLinear) -> np.ndarray:
        # Cells without mass fall back to the midpoint value
        return np.where(np.isnan(means[channel]), function(mids), means[channel])

    u = PiecewiseLinear.step(edges, level(PRINCIPAL, env.payoffs.u))
    agent = tuple(PiecewiseLinear.step(edges, level(FIRST_AGENT + k, f))
                  for k, f in enumerate(env.agent_functions()))
    states = StateDistribution(lo, hi, tuple(edges), tuple(mass / widths), grid_n=len(widths))
    payoffs = PayoffSpec(u, TabulatedAgentPayoff(tuple(env.types.lambdas.tolist()), agent),
                         env.payoffs.alignment_tag)
    logger.debug(f"Resampled environment onto {len(widths)} cells")
    return replace(env, states=states, payoffs=payoffs)


def _cell_grid(sampled: Environment) -> CellGrid:
    """Grid whose cells are exactly the resampled cells."""
    edges = np.asarray(sampled.states.breakpoints)
    return CellGrid.build(sampled.states, edges, [sampled.payoffs.u] + sampled.agent_functions())


def _subset_bits(start: int, stop: int, n: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


@dataclass
class _OracleBest:
    payoff: float = 0.0
    mass: float = 0.0
    fractions: Optional[np.ndarray] = None

    def offer(self, payoff: np.ndarray, mass: np.ndarray, fractions: np.ndarray) -> None:
        top = float(np.max(payoff)) if len(payoff) else -np.inf
        if top == -np.inf:
            return
        tied = np.nonzero(payoff >= top - _PAYOFF_TIE)[0]
        lightest = tied[mass[tied] <= mass[tied].min()]
        # lexsort keys run last-to-first, so the first cell is the primary key
        pick = lightest[np.lexsort(fractions[lightest].T[::-1])[0]]
        candidate = fractions[pick]
        if top > self.payoff + _PAYOFF_TIE:
            better = True
        elif top < self.payoff - _PAYOFF_TIE or self.fractions is None:
            better = False
        elif mass[pick] != self.mass:
            better = mass[pick] < self.mass
        else:
            better = tuple(candidate) < tuple(self.fractions)
        if better:
            self.payoff, self.mass, self.fractions = float(payoff[pick]), float(mass[pick]), candidate.copy()


def _fractions_to_test(fractions: Optional[np.ndarray], edges: np.ndarray) -> BinaryTest:
    """Whole cells for fraction 1; a partial cell keeps the right end of the cell."""
    lo, hi = float(edges[0]), float(edges[-1])
    if fractions is None:
        return BinaryTest.empty(lo, hi)
    pieces = [(edges[i + 1] - f * (edges[i + 1] - edges[i]), edges[i + 1])
              for i, f in enumerate(fractions) if f > 0]
    return BinaryTest(tuple(pieces), lo, hi)


def brute_force_best_test(env: Environment, cells: Optional[int] = None, edges: Optional[Sequence[float]] = None,
                          settings: SolverSettings = DEFAULT_SETTINGS) -> SolveReport:
    """Best trustworthy binary test by exhaustive search over cell subsets.

    Besides the 2ⁿ unions of whole cells, each excluded cell may be added partially, in
    exactly the proportion that makes one type's participation (or the trust constraint)
    bind. Ties go to the smaller proposal mass, then to the lexicographically smallest
    inclusion vector.

    Raises:
        ValueError: If the grid has more than oracle_max_cells cells
    """
    sampled = resample_environment(env, cells=cells, edges=edges)
    grid = _cell_grid(sampled)
    n = grid.n_cells
    if n > settings.oracle_max_cells:
        raise ValueError(f"Oracle refuses {n} cells; the limit is {settings.oracle_max_cells}")
    logger.info(f"Brute-force search over {1 << n} subsets of {n} cells")

    per_cell = grid.cell_integrals()
    expected_u = float(grid.totals()[PRINCIPAL])
    types = sampled.types
    binding = [(FIRST_AGENT + k, 0.0) for k in range(len(types))] + [(PRINCIPAL, expected_u)]

    best = _OracleBest()
    examined = 1
    for start in range(0, 1 << n, settings.oracle_chunk):
        bits = _subset_bits(start, min(start + settings.oracle_chunk, 1 << n), n)
        whole = bits.astype(float) @ per_cell.T
        candidates = [(whole, bits.astype(float))]
        for cell in range(n):
            excluded = ~bits[:, cell]
            for channel, target in binding:
                if per_cell[channel, cell] == 0:
                    continue
                fraction = (target - whole[:, channel]) / per_cell[channel, cell]
                ok = excluded & (fraction > 0) & (fraction < 1)
                if not np.any(ok):
                    continue
                partial = whole[ok] + fraction[ok, None] * per_cell[:, cell]
                inclusion = bits[ok].astype(float)
                inclusion[:, cell] = fraction[ok]
                candidates.append((partial, inclusion))

        for sets, inclusion in candidates:
            examined += len(sets)
            outcome = batch_outcomes(sets[:, MASS], sets[:, PRINCIPAL], sets[:, FIRST_AGENT:],
                                     expected_u, types, settings)
            nonempty = sets[:, MASS] > 0
            payoff = np.where(outcome.trustworthy & nonempty, outcome.payoff, -np.inf)
            best.offer(payoff, sets[:, MASS], inclusion)

    test = _fractions_to_test(best.fractions, grid.edges)
    report = build_report(test, sampled, grid, examined, settings)
    logger.info(f"Brute force done: {report.best_test.intervals} payoff {report.payoff:.9g}")
    return report


@dataclass
class SufficiencyReport:
    """Largest truthful payoff over trustworthy multi-signal tests against the binary optimum."""
    signal_count: int
    binary_payoff: float
    max_general_payoff: float
    kernels_examined: int
    trustworthy_kernels: int
    seed: int
    witness: Optional[GeneralTest] = None
    witness_payoff: Optional[float] = None

    @property
    def holds(self) -> bool:
        return self.witness is None


def _kernel_batches(n: int, signal_count: int, samples: int, seed: int, chunk: int):
    """Deterministic assignments first (when few enough), then Dirichlet rows."""
    total = signal_count ** n
    if total <= _MAX_KERNELS:
        for start in range(0, total, chunk):
            codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
            digits = (codes[:, None] // signal_count ** np.arange(n)) % signal_count
            yield np.eye(signal_count)[digits]
    else:
        logger.info(f"{total} deterministic kernels is too many to enumerate, sampling only")
    rng = np.random.default_rng(seed)
    for start in range(0, samples, chunk):
        size = min(chunk, samples - start)
        yield rng.dirichlet(np.ones(signal_count), size=(size, n))


def sufficiency_search(env: Environment, cells: int, signal_count: int, samples: Optional[int],
                       settings: SolverSettings, outcome_fn,
                       binary_payoff: Optional[float] = None) -> SufficiencyReport:
    """Run kernels through outcome_fn and compare the best trustworthy payoff with a binary baseline.

    outcome_fn maps per-signal integrals of shape (B, S, channels) to (trustworthy, payoff)
    arrays of shape (B,). The baseline defaults to brute_force_best_test on the same cells.
    """
    if cells > _MAX_SUFFICIENCY_CELLS:
        raise ValueError(f"Binary sufficiency checks run on at most {_MAX_SUFFICIENCY_CELLS} cells, got {cells}")
    sampled = resample_environment(env, cells=cells)
    grid = _cell_grid(sampled)
    if binary_payoff is None:
        binary_payoff = brute_force_best_test(sampled, edges=grid.edges, settings=settings).payoff
    per_cell = grid.cell_integrals()
    samples = settings.oracle_samples if samples is None else samples

    best_payoff, examined, trusted = 0.0, 0, 0
    witness, witness_payoff = None, None
    for kernels in _kernel_batches(cells, signal_count, samples, settings.oracle_seed, settings.oracle_chunk):
        per_signal = np.einsum('cn,bns->bsc', per_cell, kernels)
        trustworthy, payoff = outcome_fn(per_signal)
        examined += len(kernels)
        trusted += int(trustworthy.sum())
        payoff = np.where(trustworthy, payoff, -np.inf)
        top = int(np.argmax(payoff))
        if payoff[top] > best_payoff:
            best_payoff = float(payoff[top])
        if witness is None and payoff[top] > binary_payoff + 1e-9:
            witness = GeneralTest(tuple(grid.edges), kernels[top], tuple(f"s{i}" for i in range(signal_count)))
            witness_payoff = float(payoff[top])
            logger.warning(f"{signal_count}-signal test beats the binary optimum: {witness_payoff:.9g} > {binary_payoff:.9g}")

    logger.info(f"Checked {examined} kernels with {signal_count} signals, {trusted} trustworthy; "
                f"best {best_payoff:.9g} vs binary {binary_payoff:.9g}")
    return SufficiencyReport(signal_count, binary_payoff, best_payoff, examined, trusted,
                             settings.oracle_seed, witness, witness_payoff)


def verify_binary_sufficiency(env: Environment, signal_count: int = 3, samples: Optional[int] = None,
                              cells: int = 8, settings: SolverSettings = DEFAULT_SETTINGS) -> SufficiencyReport:
    """Search multi-signal tests for one that beats the best binary test.

    Every deterministic assignment of cells to signals is tried when there are at most
    2¹⁷ of them, followed by `samples` random stochastic kernels drawn with the oracle
    seed. A trustworthy test paying more than the binary optimum + 1e-9 is returned as
    the witness.
    """
    types = env.types

    def outcome(per_signal: np.ndarray):
        result = batch_general_outcomes(per_signal[:, :, MASS], per_signal[:, :, PRINCIPAL],
                                        per_signal[:, :, FIRST_AGENT:], types, settings)
        return result.trustworthy, result.truthful_payoff

    return sufficiency_search(env, cells, signal_count, samples, settings, outcome)


@dataclass
class MenuOracleReport:
    """Best menu over subsets of a finite pool of binary tests."""
    menu: Tuple[BinaryTest, ...]
    payoff: float
    choices: Tuple[Optional[int], ...]
    menus_examined: int
    pool_size: int
    notes: List[str] = field(default_factory=list)


def brute_force_menu(env: Environment, pool: Sequence[BinaryTest],
                     settings: SolverSettings = DEFAULT_SETTINGS) -> MenuOracleReport:
    """Best menu drawn from a pool of tests, counting only menus of trustworthy tests.

    Each type picks the test that maximises max(∫ v(·, λ) dG, 0), accepting when
    indifferent; ties between tests go to the one the principal prefers. choices gives,
    per type, the index into `menu` of the chosen test (None when the type is not served).
    Ties between menus go to fewer tests, then to the earlier subset.

    Raises:
        ValueError: If the pool is empty or holds more than 12 tests
    """
    if not pool or len(pool) > _MAX_POOL:
        raise ValueError(f"Menu oracle needs between 1 and {_MAX_POOL} pool tests, got {len(pool)}")
    tol = settings.trust_tol
    grid = discretize(env)
    integrals = np.array([grid.integrals(test.intervals) for test in pool])
    trusted = np.array([evaluate(test, env, grid, settings).trustworthy and not test.is_empty for test in pool])
    proposal = integrals[:, PRINCIPAL]
    agent = integrals[:, FIRST_AGENT:]
    value = np.maximum(agent, 0.0)
    principal = np.where(agent >= -tol, proposal[:, None], 0.0)
    weights = env.types.probs

    size = len(pool)
    bits = _subset_bits(1, 1 << size, size)
    allowed = ~np.any(bits & ~trusted[None, :], axis=1)
    bits = bits[allowed]
    if not len(bits):
        logger.info("No menu of trustworthy pool tests exists")
        return MenuOracleReport((), 0.0, tuple(None for _ in weights), 0, size)

    in_menu = bits[:, :, None]
    best_value = np.max(np.where(in_menu, value[None], -np.inf), axis=1)
    indifferent = in_menu & (value[None] >= best_value[:, None, :] - tol)
    served = np.where(indifferent, principal[None], -np.inf)
    chosen = np.argmax(served, axis=1)
    payoffs = np.max(served, axis=1) @ weights

    top = float(payoffs.max())
    tied = np.nonzero(payoffs >= top - _PAYOFF_TIE)[0]
    pick = tied[np.argmin(bits[tied].sum(axis=1))]
    members = np.nonzero(bits[pick])[0]
    position = {int(t): i for i, t in enumerate(members)}
    choices = tuple(position[int(t)] if agent[t, k] >= -tol else None
                    for k, t in enumerate(chosen[pick]))
    logger.info(f"Best pool menu uses tests {members.tolist()} with payoff {top:.9g}")
    return MenuOracleReport(tuple(pool[t] for t in members), float(payoffs[pick]), choices, len(bits), size)
