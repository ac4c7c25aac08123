"""Environments, tests and menus for persuasion under limited commitment.

The state density is piecewise constant and every payoff is piecewise linear in the
state, so integrals over proposal sets are closed-form per grid cell (see measure.py).
validate_environment() checks the model assumptions and returns violations as data;
the solvers assume a valid environment.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from logger import logger

ALIGNMENT_TAGS = ('positive', 'negative-concave', 'negative-convex', 'general')
FORM_TAGS = ('empty', 'threshold', 'interval', 'tail', 'general')

# Components shorter than this are dropped, gaps shorter than this are merged
LENGTH_TOL = 1e-14
# Slack allowed when a set endpoint touches the support boundary
EDGE_TOL = 1e-12


class EnvironmentValidationError(ValueError):
    """Raised when an environment fails validation; carries every violation found."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("Invalid environment: " + "; ".join(self.violations))


class SolverInfeasibleError(RuntimeError):
    """Raised when a numerical routine cannot bracket or converge."""


@dataclass(frozen=True)
class PiecewiseLinear:
    """Piecewise-linear function of the state, possibly discontinuous at breakpoints.

    Segment i covers [breakpoints[i], breakpoints[i+1]] and runs linearly from starts[i]
    at its left end to ends[i] at its right end. Evaluation is right-continuous, except at
    the final breakpoint where the left limit is used.
    """
    breakpoints: Tuple[float, ...]
    starts: Tuple[float, ...]
    ends: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'breakpoints', tuple(float(x) for x in self.breakpoints))
        object.__setattr__(self, 'starts', tuple(float(x) for x in self.starts))
        object.__setattr__(self, 'ends', tuple(float(x) for x in self.ends))
        pieces = len(self.breakpoints) - 1
        if pieces < 1:
            raise ValueError("A piecewise function needs at least two breakpoints")
        if len(self.starts) != pieces or len(self.ends) != pieces:
            raise ValueError(f"Expected {pieces} segments, got {len(self.starts)} starts and {len(self.ends)} ends")
        bp = np.asarray(self.breakpoints)
        if np.any(np.diff(bp) <= 0):
            raise ValueError(f"Breakpoints must be strictly increasing: {self.breakpoints}")
        if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(self.starts)) and np.all(np.isfinite(self.ends))):
            raise ValueError("Piecewise function values must be finite")

    @classmethod
    def continuous(cls, breakpoints: Sequence[float], values: Sequence[float]) -> 'PiecewiseLinear':
        """Continuous interpolant through (breakpoints[i], values[i])."""
        if len(values) != len(breakpoints):
            raise ValueError("Continuous piecewise function needs one value per breakpoint")
        return cls(tuple(breakpoints), tuple(values[:-1]), tuple(values[1:]))

    @classmethod
    def step(cls, breakpoints: Sequence[float], levels: Sequence[float]) -> 'PiecewiseLinear':
        """Step function with a constant level on each segment."""
        return cls(tuple(breakpoints), tuple(levels), tuple(levels))

    @classmethod
    def linear(cls, lo: float, hi: float, intercept: float, slope: float) -> 'PiecewiseLinear':
        """intercept + slope·θ on [lo, hi]."""
        return cls((lo, hi), (intercept + slope * lo,), (intercept + slope * hi,))

    @property
    def lo(self) -> float:
        return self.breakpoints[0]

    @property
    def hi(self) -> float:
        return self.breakpoints[-1]

    def covers(self, lo: float, hi: float) -> bool:
        return self.lo <= lo + EDGE_TOL and self.hi >= hi - EDGE_TOL

    def __call__(self, x):
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < self.lo - EDGE_TOL) or np.any(x_arr > self.hi + EDGE_TOL):
            raise ValueError(f"Evaluation point outside [{self.lo}, {self.hi}]")
        bp = np.asarray(self.breakpoints)
        idx = np.clip(np.searchsorted(bp, x_arr, side='right') - 1, 0, len(bp) - 2)
        values = self._segment_values(idx, x_arr)
        return float(values) if np.ndim(values) == 0 else values

    def _segment_values(self, idx, x):
        bp = np.asarray(self.breakpoints)
        starts = np.asarray(self.starts)
        ends = np.asarray(self.ends)
        a = bp[idx]
        b = bp[idx + 1]
        t = (x - a) / (b - a)
        return starts[idx] + (ends[idx] - starts[idx]) * t

    def cell_values(self, edges: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Right limit at each cell's left edge and left limit at its right edge.

        The edges must be aligned: no breakpoint strictly inside a cell.
        """
        edges = np.asarray(edges, dtype=float)
        mids = 0.5 * (edges[:-1] + edges[1:])
        bp = np.asarray(self.breakpoints)
        idx = np.clip(np.searchsorted(bp, mids, side='right') - 1, 0, len(bp) - 2)
        return self._segment_values(idx, edges[:-1]), self._segment_values(idx, edges[1:])

    def bounds_on(self, lo: float, hi: float) -> Tuple[float, float]:
        """Infimum and supremum over [lo, hi] (attained at segment ends)."""
        bp = np.asarray(self.breakpoints)
        a = np.maximum(bp[:-1], lo)
        b = np.minimum(bp[1:], hi)
        keep = b > a
        if not np.any(keep):
            raise ValueError(f"Function domain does not meet [{lo}, {hi}]")
        idx = np.nonzero(keep)[0]
        values = np.concatenate([self._segment_values(idx, a[keep]), self._segment_values(idx, b[keep])])
        return float(values.min()), float(values.max())

    def shifted(self, offset: float) -> 'PiecewiseLinear':
        return PiecewiseLinear(self.breakpoints,
                               tuple(s + offset for s in self.starts),
                               tuple(e + offset for e in self.ends))

    def to_config(self) -> Dict[str, list]:
        bp = list(self.breakpoints)
        if self.starts == self.ends:
            return {'breakpoints': bp, 'levels': list(self.starts)}
        if all(abs(e - s) == 0.0 for e, s in zip(self.ends[:-1], self.starts[1:])):
            return {'breakpoints': bp, 'values': list(self.starts) + [self.ends[-1]]}
        return {'breakpoints': bp, 'segments': [[s, e] for s, e in zip(self.starts, self.ends)]}


@dataclass(frozen=True)
class StateDistribution:
    """State distribution G with a piecewise-constant density on [support_lo, support_hi]."""
    support_lo: float
    support_hi: float
    breakpoints: Tuple[float, ...]
    densities: Tuple[float, ...]
    grid_n: int = 2000

    def __post_init__(self):
        object.__setattr__(self, 'breakpoints', tuple(float(x) for x in self.breakpoints))
        object.__setattr__(self, 'densities', tuple(float(x) for x in self.densities))
        if len(self.densities) != len(self.breakpoints) - 1:
            raise ValueError("Density needs one value per breakpoint interval")

    @classmethod
    def uniform(cls, lo: float, hi: float, grid_n: int = 2000) -> 'StateDistribution':
        return cls(lo, hi, (lo, hi), (1.0 / (hi - lo),), grid_n)

    def _cumulative(self) -> np.ndarray:
        bp = np.asarray(self.breakpoints)
        return np.concatenate([[0.0], np.cumsum(np.asarray(self.densities) * np.diff(bp))])

    def cdf(self, x):
        """G(x), vectorised."""
        bp = np.asarray(self.breakpoints)
        x_arr = np.clip(np.asarray(x, dtype=float), bp[0], bp[-1])
        idx = np.clip(np.searchsorted(bp, x_arr, side='right') - 1, 0, len(bp) - 2)
        values = self._cumulative()[idx] + np.asarray(self.densities)[idx] * (x_arr - bp[idx])
        return float(values) if np.ndim(values) == 0 else values

    def quantile(self, q):
        """Smallest x with G(x) = q, vectorised; needs positive density."""
        bp = np.asarray(self.breakpoints)
        cum = self._cumulative()
        q_arr = np.clip(np.asarray(q, dtype=float), 0.0, cum[-1])
        idx = np.clip(np.searchsorted(cum, q_arr, side='right') - 1, 0, len(bp) - 2)
        dens = np.asarray(self.densities)[idx]
        with np.errstate(divide='ignore', invalid='ignore'):
            x = np.where(dens > 0, bp[idx] + (q_arr - cum[idx]) / dens, bp[idx])
        x = np.clip(x, bp[idx], bp[idx + 1])
        return float(x) if np.ndim(x) == 0 else x

    def mean(self) -> float:
        bp = np.asarray(self.breakpoints)
        return float(np.sum(np.asarray(self.densities) * (bp[1:] ** 2 - bp[:-1] ** 2) / 2.0))

    def total_mass(self) -> float:
        return float(self._cumulative()[-1])

    def has_full_support(self) -> bool:
        return all(d > 0 for d in self.densities)


@dataclass(frozen=True)
class AdditiveAgentPayoff:
    """Agent payoff v(θ, λ) = weight·λ + base(θ); strictly increasing in λ when weight > 0."""
    base: PiecewiseLinear
    weight: float = 1.0

    def for_type(self, lam: float) -> PiecewiseLinear:
        return self.base.shifted(self.weight * lam)

    def to_config(self) -> Dict:
        return {'kind': 'additive', 'base': self.base.to_config(), 'weight': self.weight}


@dataclass(frozen=True)
class TabulatedAgentPayoff:
    """Agent payoff given separately for each type on the type support."""
    lambdas: Tuple[float, ...]
    functions: Tuple[PiecewiseLinear, ...]

    def for_type(self, lam: float) -> PiecewiseLinear:
        for tabulated, function in zip(self.lambdas, self.functions):
            if abs(tabulated - lam) <= 1e-12:
                return function
        raise ValueError(f"No agent payoff tabulated for type {lam}")

    def to_config(self) -> Dict:
        return {'kind': 'tabulated',
                'per_type': [{'lambda': lam, 'function': f.to_config()}
                             for lam, f in zip(self.lambdas, self.functions)]}


AgentPayoff = Union[AdditiveAgentPayoff, TabulatedAgentPayoff]


@dataclass(frozen=True)
class PayoffSpec:
    """Principal payoff u(θ), agent payoff family v(θ, λ) and the declared alignment."""
    u: PiecewiseLinear
    v: AgentPayoff
    alignment_tag: str = 'general'


@dataclass(frozen=True)
class TypePrior:
    """Finite prior over agent types: atoms (λ_k, q_k) sorted by λ."""
    atoms: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, 'atoms', tuple((float(lam), float(q)) for lam, q in self.atoms))

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[float, float]]) -> 'TypePrior':
        return cls(tuple(sorted(pairs, key=lambda atom: atom[0])))

    @classmethod
    def degenerate(cls, lam: float) -> 'TypePrior':
        return cls(((lam, 1.0),))

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([lam for lam, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([q for _, q in self.atoms])

    def __len__(self) -> int:
        return len(self.atoms)

    def survival(self, x: float) -> float:
        """Pr[λ ≥ x]."""
        return float(sum(q for lam, q in self.atoms if lam >= x))

    def to_config(self) -> List[List[float]]:
        return [[lam, q] for lam, q in self.atoms]


@dataclass(frozen=True)
class Environment:
    """Everything a solver needs: G, u, v and the type prior F."""
    states: StateDistribution
    payoffs: PayoffSpec
    types: TypePrior

    @property
    def support(self) -> Tuple[float, float]:
        return self.states.support_lo, self.states.support_hi

    def agent_functions(self) -> List[PiecewiseLinear]:
        """v(·, λ_k) for every type in the support, in type order."""
        return [self.payoffs.v.for_type(lam) for lam in self.types.lambdas]

    def with_types(self, types: TypePrior) -> 'Environment':
        return replace(self, types=types)

    def with_grid(self, grid_n: int) -> 'Environment':
        return replace(self, states=replace(self.states, grid_n=grid_n))


def _normalize_intervals(intervals, lo: float, hi: float) -> Tuple[Tuple[float, float], ...]:
    pieces = []
    for a, b in intervals:
        a, b = float(a), float(b)
        if a < lo - EDGE_TOL or b > hi + EDGE_TOL:
            raise ValueError(f"set escapes support: [{a}, {b}] not inside [{lo}, {hi}]")
        a, b = max(a, lo), min(b, hi)
        if b - a > LENGTH_TOL:
            pieces.append((a, b))
    pieces.sort()
    merged: List[Tuple[float, float]] = []
    for a, b in pieces:
        if merged and a <= merged[-1][1] + LENGTH_TOL:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return tuple(merged)


def classify_intervals(intervals: Sequence[Tuple[float, float]], lo: float, hi: float) -> str:
    """Form tag of a normalized proposal set.

    The full support and any [θ̂, hi] count as threshold tests rather than as degenerate
    interval or tail tests.
    """
    if not intervals:
        return 'empty'
    touches_lo = intervals[0][0] <= lo + EDGE_TOL
    touches_hi = intervals[-1][1] >= hi - EDGE_TOL
    if len(intervals) == 1:
        return 'threshold' if touches_hi else 'interval'
    if len(intervals) == 2 and touches_lo and touches_hi:
        return 'tail'
    return 'general'


@dataclass(frozen=True)
class BinaryTest:
    """Deterministic binary test given by its proposal set Θ₁ (a union of closed intervals)."""
    intervals: Tuple[Tuple[float, float], ...]
    support_lo: float
    support_hi: float
    form_tag: str = field(init=False)

    def __post_init__(self):
        normalized = _normalize_intervals(self.intervals, self.support_lo, self.support_hi)
        object.__setattr__(self, 'intervals', normalized)
        object.__setattr__(self, 'form_tag', classify_intervals(normalized, self.support_lo, self.support_hi))

    @classmethod
    def empty(cls, lo: float, hi: float) -> 'BinaryTest':
        return cls((), lo, hi)

    @classmethod
    def threshold(cls, cutoff: float, lo: float, hi: float) -> 'BinaryTest':
        return cls(((cutoff, hi),), lo, hi)

    @classmethod
    def interval(cls, a: float, b: float, lo: float, hi: float) -> 'BinaryTest':
        return cls(((a, b),), lo, hi)

    @classmethod
    def from_indicator(cls, edges: Sequence[float], indicator: Sequence[bool]) -> 'BinaryTest':
        """Union of the grid cells whose indicator is set."""
        edges = list(edges)
        return cls(tuple((edges[i], edges[i + 1]) for i, flag in enumerate(indicator) if flag),
                   edges[0], edges[-1])

    def to_indicator(self, edges: Sequence[float]) -> np.ndarray:
        """1 for every grid cell whose midpoint lies in the proposal set."""
        edges = np.asarray(edges, dtype=float)
        mids = 0.5 * (edges[:-1] + edges[1:])
        flags = np.zeros(len(mids), dtype=bool)
        for a, b in self.intervals:
            flags |= (mids >= a) & (mids <= b)
        return flags

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def complement_intervals(self) -> Tuple[Tuple[float, float], ...]:
        gaps = []
        cursor = self.support_lo
        for a, b in self.intervals:
            if a - cursor > LENGTH_TOL:
                gaps.append((cursor, a))
            cursor = b
        if self.support_hi - cursor > LENGTH_TOL:
            gaps.append((cursor, self.support_hi))
        return tuple(gaps)

    def to_config(self) -> List[List[float]]:
        return [[a, b] for a, b in self.intervals]


@dataclass(frozen=True, eq=False)
class GeneralTest:
    """Finite-signal stochastic test: one probability row over the signals per grid cell."""
    edges: Tuple[float, ...]
    kernel: np.ndarray
    signals: Tuple[str, ...]

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=float)
        object.__setattr__(self, 'kernel', kernel)
        object.__setattr__(self, 'edges', tuple(float(e) for e in self.edges))
        if kernel.shape != (len(self.edges) - 1, len(self.signals)):
            raise ValueError(f"Kernel shape {kernel.shape} does not match "
                             f"{len(self.edges) - 1} cells and {len(self.signals)} signals")
        if np.any(kernel < 0):
            raise ValueError("Kernel entries must be nonnegative")
        if np.any(np.abs(kernel.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("Every kernel row must sum to 1")

    @classmethod
    def deterministic(cls, edges: Sequence[float], assignment: Sequence[int], signal_count: int) -> 'GeneralTest':
        """Each cell sends exactly one signal."""
        kernel = np.zeros((len(assignment), signal_count))
        kernel[np.arange(len(assignment)), np.asarray(assignment, dtype=int)] = 1.0
        return cls(tuple(edges), kernel, tuple(f"s{i}" for i in range(signal_count)))

    @classmethod
    def from_binary(cls, test: BinaryTest, edges: Sequence[float]) -> 'GeneralTest':
        """Two-signal version of a binary test; cells cut by the set get fractional rows.

        Exact whenever the set's endpoints fall on the given edges.
        """
        edges = np.asarray(edges, dtype=float)
        widths = np.diff(edges)
        covered = np.zeros(len(widths))
        for a, b in test.intervals:
            covered += np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
        fraction = np.clip(covered / widths, 0.0, 1.0)
        return cls(tuple(edges), np.column_stack([fraction, 1.0 - fraction]), ('propose', 'null'))


@dataclass(frozen=True)
class MenuEntry:
    """One served type's (p, μ) pair and the test realising it (None for a hypothetical schedule)."""
    type_lambda: float
    p: float
    mu: float
    test: Optional[BinaryTest] = None


@dataclass(frozen=True)
class MenuSchedule:
    """Per-type (p, μ) pairs with their realised tests; unserved types listed separately."""
    entries: Tuple[MenuEntry, ...]
    unserved: Tuple[float, ...]
    rent: float = 0.0

    @classmethod
    def empty(cls, types: TypePrior) -> 'MenuSchedule':
        return cls((), tuple(types.lambdas.tolist()))

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def interim_values(self) -> List[float]:
        """Agent value (λ_k − μ_k)·p_k of each served type from its own test."""
        return [(e.type_lambda - e.mu) * e.p for e in self.entries]

    def payoff(self, types: TypePrior) -> float:
        """E_λ[p(λ)·μ(λ)] over served types."""
        weights = dict(types.atoms)
        return float(sum(weights[e.type_lambda] * e.p * e.mu for e in self.entries))

    def distinct_tests(self) -> List[MenuEntry]:
        seen = {}
        for entry in self.entries:
            key = (round(entry.p, 9), round(entry.mu, 9))
            seen.setdefault(key, entry)
        return list(seen.values())

    def check_invariants(self, tol: float = 1e-9) -> List[str]:
        problems = []
        for lower, upper in zip(self.entries, self.entries[1:]):
            if upper.p < lower.p - tol:
                problems.append(f"p not nondecreasing between types {lower.type_lambda} and {upper.type_lambda}")
            if upper.p * upper.mu < lower.p * lower.mu - tol:
                problems.append(f"p·mu not nondecreasing between types {lower.type_lambda} and {upper.type_lambda}")
        return problems


def aligned_edges(lo: float, hi: float, grid_n: int, breakpoint_sets: Sequence[Sequence[float]]) -> np.ndarray:
    """Uniform grid on [lo, hi] refined by every breakpoint that falls inside it."""
    points = [np.linspace(lo, hi, max(int(grid_n), 1) + 1)]
    points += [np.asarray(bp, dtype=float) for bp in breakpoint_sets]
    edges = np.unique(np.concatenate(points))
    edges = edges[(edges >= lo) & (edges <= hi)]
    keep = np.concatenate([[True], np.diff(edges) > LENGTH_TOL])
    edges = edges[keep]
    edges[-1] = hi
    return edges


def environment_edges(env: Environment) -> np.ndarray:
    """Grid aligned to the breakpoints of G, u and every v(·, λ_k)."""
    lo, hi = env.support
    sets = [env.states.breakpoints, env.payoffs.u.breakpoints]
    sets += [f.breakpoints for f in env.agent_functions()]
    return aligned_edges(lo, hi, env.states.grid_n, sets)


def _check_distribution(dist: StateDistribution) -> List[str]:
    violations = []
    bp = np.asarray(dist.breakpoints)
    if not dist.support_lo < dist.support_hi:
        violations.append(f"support must be a nondegenerate interval, got [{dist.support_lo}, {dist.support_hi}]")
        return violations
    if np.any(np.diff(bp) <= 0):
        violations.append(f"density breakpoints must be strictly increasing: {dist.breakpoints}")
    if abs(bp[0] - dist.support_lo) > EDGE_TOL or abs(bp[-1] - dist.support_hi) > EDGE_TOL:
        violations.append(f"density breakpoints must span the support exactly: {bp[0]}..{bp[-1]}")
    negative = [d for d in dist.densities if d < 0]
    if negative:
        violations.append(f"density must be nonnegative, found {negative[0]}")
    mass = dist.total_mass()
    if abs(mass - 1.0) > 1e-10:
        violations.append(f"density must integrate to 1 within 1e-10, integrates to {mass:.12g}")
    if dist.grid_n < 1:
        violations.append(f"grid_n must be positive, got {dist.grid_n}")
    return violations


def _check_types(types: TypePrior) -> List[str]:
    violations = []
    if not types.atoms:
        return ["type prior must have at least one atom"]
    for lam, q in types.atoms:
        if q <= 0:
            violations.append(f"type probability must be positive: q={q} at λ={lam}")
    total = float(types.probs.sum())
    if abs(total - 1.0) > 1e-12:
        violations.append(f"type probabilities must sum to 1 within 1e-12, sum to {total:.15g}")
    lambdas = types.lambdas
    for lower, upper in zip(lambdas, lambdas[1:]):
        if upper <= lower:
            violations.append(f"type support must be strictly increasing: {lower} then {upper}")
    return violations


def _check_alignment(tag: str, lambdas: np.ndarray, agent: Sequence[PiecewiseLinear], edges: np.ndarray) -> List[str]:
    violations = []
    if tag == 'general':
        return violations
    mids = 0.5 * (edges[:-1] + edges[1:])
    for lam, f in zip(lambdas, agent):
        starts, ends = f.cell_values(edges)
        path = np.column_stack([starts, ends]).ravel()
        scale = 1e-12 * max(1.0, float(np.max(np.abs(path))))
        steps = np.diff(path)
        if tag == 'positive':
            bad = np.nonzero(steps < -scale)[0]
            if len(bad):
                violations.append(f"positive alignment fails: v(·,{lam}) decreases near θ={edges[(bad[0] + 1) // 2]:.6g}")
            continue
        bad = np.nonzero(steps > scale)[0]
        if len(bad):
            violations.append(f"negative alignment fails: v(·,{lam}) increases near θ={edges[(bad[0] + 1) // 2]:.6g}")
        if len(mids) >= 3:
            midvalues = 0.5 * (starts + ends)
            slopes = np.diff(midvalues) / np.diff(mids)
            slope_scale = 1e-9 * max(1.0, float(np.max(np.abs(slopes))))
            turns = np.diff(slopes)
            if tag == 'negative-concave':
                bad = np.nonzero(turns > slope_scale)[0]
                shape = 'concave'
            else:
                bad = np.nonzero(turns < -slope_scale)[0]
                shape = 'convex'
            if len(bad):
                violations.append(f"{tag} alignment fails: v(·,{lam}) not {shape} near θ={mids[bad[0] + 1]:.6g}")
    return violations


def validate_environment(env: Environment) -> List[str]:
    """Check every model assumption; returns violation descriptions (empty = valid).

    Each description names the failed condition and a witness where one exists.
    """
    violations = _check_distribution(env.states)
    violations += _check_types(env.types)
    if env.payoffs.alignment_tag not in ALIGNMENT_TAGS:
        violations.append(f"alignment_tag must be one of {ALIGNMENT_TAGS}, got {env.payoffs.alignment_tag!r}")
    if violations:
        logger.debug(f"Structural violations, skipping payoff checks: {violations}")
        return violations

    lo, hi = env.support
    u = env.payoffs.u
    if not u.covers(lo, hi):
        violations.append(f"u must be evaluable on the whole support, domain is [{u.lo}, {u.hi}]")
    try:
        agent = env.agent_functions()
    except ValueError as e:
        violations.append(f"v must be defined for every type: {e}")
        return violations
    for lam, f in zip(env.types.lambdas, agent):
        if not f.covers(lo, hi):
            violations.append(f"v(·,{lam}) must be evaluable on the whole support, domain is [{f.lo}, {f.hi}]")
    if violations:
        return violations

    inf_u, sup_u = u.bounds_on(lo, hi)
    if not inf_u < 0:
        violations.append(f"inf u < 0 fails: inf u = {inf_u}")
    if not sup_u > 0:
        violations.append(f"sup u > 0 fails: sup u = {sup_u}")
    for lam, f in zip(env.types.lambdas, agent):
        inf_v, sup_v = f.bounds_on(lo, hi)
        if not inf_v < 0:
            violations.append(f"inf v(·,{lam}) < 0 fails: inf = {inf_v}")
        if not sup_v > 0:
            violations.append(f"sup v(·,{lam}) > 0 fails: sup = {sup_v}")

    edges = environment_edges(env)
    lambdas = env.types.lambdas
    for k in range(len(agent) - 1):
        low_start, low_end = agent[k].cell_values(edges)
        high_start, high_end = agent[k + 1].cell_values(edges)
        gap = np.minimum(high_start - low_start, high_end - low_end)
        worst = int(np.argmin(gap))
        if gap[worst] <= 0:
            violations.append(f"v strictly increasing in λ fails between λ={lambdas[k]} and λ={lambdas[k + 1]} "
                              f"near θ={edges[worst]:.6g}")

    violations += _check_alignment(env.payoffs.alignment_tag, lambdas, agent, edges)
    if violations:
        logger.info(f"Environment has {len(violations)} violations")
    return violations


def require_valid(env: Environment) -> None:
    """Raise EnvironmentValidationError unless the environment is valid."""
    violations = validate_environment(env)
    if violations:
        for violation in violations:
            logger.error(f"Validation failure: {violation}")
        raise EnvironmentValidationError(violations)
