#!/usr/bin/env python3
"""
Parse environment documents for the persuade.py command line.

A document is JSON (or YAML, which the loader also accepts) holding the state
distribution, the payoffs u and v, the type prior and the command to run.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from extensions import RichActionSpec
from logger import logger
from model import (AdditiveAgentPayoff, Environment, PayoffSpec, PiecewiseLinear, StateDistribution,
                   TabulatedAgentPayoff, TypePrior)
from settings import SolverSettings, settings_from_options, settings_to_options

COMMANDS = ('solve', 'menu', 'oracle', 'verify-binary', 'multi-agent')


@dataclass
class RunConfig:
    """A parsed document: what to run, on which environment, with which settings."""
    command: str
    environment: Environment
    settings: SolverSettings
    agents: List[Environment] = field(default_factory=list)
    rich_actions: Optional[RichActionSpec] = None
    document: Dict[str, Any] = field(default_factory=dict)


def load_document(path: str) -> Dict[str, Any]:
    """Read a JSON or YAML document.

    Raises:
        ValueError: If the file cannot be parsed or is not a mapping
    """
    logger.info(f"Processing config: {path}")
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f)
    except Exception as e:
        logger.error(f"Failed to parse config file {path}: {e}")
        raise ValueError(f"Invalid config file: {e}")
    if not isinstance(data, dict):
        raise ValueError(f"Config {path} must be a mapping, got {type(data).__name__}")
    return data


def parse_function(data: Dict[str, Any], where: str) -> PiecewiseLinear:
    """Piecewise-linear function given by values, levels or segments over breakpoints."""
    if not isinstance(data, dict) or 'breakpoints' not in data:
        raise ValueError(f"Missing required fields in {where}: ['breakpoints']")
    breakpoints = [float(x) for x in data['breakpoints']]
    try:
        if 'values' in data:
            return PiecewiseLinear.continuous(breakpoints, [float(x) for x in data['values']])
        if 'levels' in data:
            return PiecewiseLinear.step(breakpoints, [float(x) for x in data['levels']])
        if 'segments' in data:
            segments = [(float(s), float(e)) for s, e in data['segments']]
            return PiecewiseLinear(tuple(breakpoints), tuple(s for s, _ in segments), tuple(e for _, e in segments))
    except (TypeError, ValueError) as e:
        raise ValueError(f"Invalid function in {where}: {e}")
    raise ValueError(f"Function in {where} needs one of 'values', 'levels' or 'segments'")


def parse_distribution(data: Dict[str, Any], grid_n: int) -> StateDistribution:
    """{"uniform": [lo, hi]} or {"breakpoints": [...], "densities": [...]}."""
    if not isinstance(data, dict):
        raise ValueError("distribution must be a mapping")
    if 'uniform' in data:
        lo, hi = (float(x) for x in data['uniform'])
        return StateDistribution.uniform(lo, hi, grid_n)
    required = ['breakpoints', 'densities']
    missing = [f for f in required if f not in data]
    if missing:
        raise ValueError(f"Missing required fields in distribution: {missing}")
    breakpoints = [float(x) for x in data['breakpoints']]
    return StateDistribution(breakpoints[0], breakpoints[-1], tuple(breakpoints),
                             tuple(float(d) for d in data['densities']), grid_n)


def parse_agent_payoff(data: Dict[str, Any]):
    kind = data.get('kind', '') if isinstance(data, dict) else ''
    if kind == 'additive':
        if 'base' not in data:
            raise ValueError("Missing required fields in v: ['base']")
        return AdditiveAgentPayoff(parse_function(data['base'], 'v.base'), float(data.get('weight', 1.0)))
    if kind == 'tabulated':
        rows = data.get('per_type') or []
        missing = [f for row in rows for f in ('lambda', 'function') if f not in row]
        if not rows or missing:
            raise ValueError(f"Missing required fields in v.per_type: {missing or ['per_type']}")
        return TabulatedAgentPayoff(tuple(float(row['lambda']) for row in rows),
                                    tuple(parse_function(row['function'], f"v.per_type[{i}]") for i, row in enumerate(rows)))
    logger.error(f"Unknown agent payoff kind '{kind}'")
    raise ValueError(f"Invalid v kind: {kind!r}, expected 'additive' or 'tabulated'")


def parse_types(data: Any) -> TypePrior:
    """[[λ, q], ...] or [{"lambda": λ, "prob": q}, ...]."""
    if not isinstance(data, list) or not data:
        raise ValueError("types must be a nonempty list of (lambda, prob) pairs")
    pairs = []
    for atom in data:
        if isinstance(atom, dict):
            missing = [f for f in ('lambda', 'prob') if f not in atom]
            if missing:
                raise ValueError(f"Missing required fields in types: {missing}")
            pairs.append((float(atom['lambda']), float(atom['prob'])))
        else:
            try:
                lam, q = atom
                pairs.append((float(lam), float(q)))
            except (TypeError, ValueError):
                raise ValueError(f"Invalid type atom {atom!r}, expected [lambda, prob]")
    return TypePrior.from_pairs(pairs)


def parse_rich_actions(data: Dict[str, Any], types: TypePrior, settings: SolverSettings) -> RichActionSpec:
    """{"kind": "quadratic", "action_max": a} or explicit action, intercept and slope tables."""
    if data.get('kind') == 'quadratic':
        return RichActionSpec.quadratic(types.lambdas, float(data.get('action_max', 2.0)), settings.action_step)
    required = ['actions', 'intercept', 'slope']
    missing = [f for f in required if f not in data]
    if missing:
        raise ValueError(f"Missing required fields in rich_actions: {missing}")
    return RichActionSpec(types.lambdas, np.asarray(data['actions'], dtype=float),
                          np.asarray(data['intercept'], dtype=float), np.asarray(data['slope'], dtype=float))


def parse_environment(data: Dict[str, Any], settings: SolverSettings) -> Environment:
    required = ['distribution', 'u', 'v', 'types']
    missing = [f for f in required if f not in data]
    if missing:
        raise ValueError(f"Missing required fields in environment: {missing}")
    payoffs = PayoffSpec(parse_function(data['u'], 'u'), parse_agent_payoff(data['v']),
                         data.get('alignment', 'general'))
    return Environment(parse_distribution(data['distribution'], settings.grid_n), payoffs, parse_types(data['types']))


def parse_agents(data: List[Any], env: Environment) -> List[Environment]:
    """Per-agent environments sharing G, u and v; an entry is a type list or {"types": ..., "v": ...}."""
    agents = []
    for i, entry in enumerate(data):
        if isinstance(entry, dict):
            if 'v' in entry and parse_agent_payoff(entry['v']) != env.payoffs.v:
                logger.error(f"Agent {i + 1} declares its own v")
                raise ValueError(f"agents must share v; agent {i + 1} declares a different one")
            entry = entry.get('types')
        agents.append(env.with_types(parse_types(entry)))
    return agents


def parse_document(data: Dict[str, Any]) -> RunConfig:
    """Turn a loaded document into a RunConfig.

    Raises:
        ValueError: If a field is missing, malformed or unknown
    """
    command = data.get('command', 'solve')
    if command not in COMMANDS:
        raise ValueError(f"Invalid command {command!r}, expected one of {COMMANDS}")
    settings = settings_from_options(data.get('solver_options'))
    env = parse_environment(data, settings)
    agents = parse_agents(data['agents'], env) if 'agents' in data else []
    if command == 'multi-agent' and not agents:
        raise ValueError("Missing required fields for multi-agent: ['agents']")
    rich = parse_rich_actions(data['rich_actions'], env.types, settings) if 'rich_actions' in data else None
    logger.info(f"Parsed {command} config with {len(env.types)} types")
    return RunConfig(command, env, settings, agents, rich, data)


def parse_config(path: str) -> RunConfig:
    return parse_document(load_document(path))


def distribution_to_config(dist: StateDistribution) -> Dict[str, list]:
    return {'breakpoints': list(dist.breakpoints), 'densities': list(dist.densities)}


def environment_to_document(env: Environment, command: str, settings: SolverSettings) -> Dict[str, Any]:
    """Document that parse_document turns back into the same environment."""
    return {
        'command': command,
        'distribution': distribution_to_config(env.states),
        'u': env.payoffs.u.to_config(),
        'v': env.payoffs.v.to_config(),
        'alignment': env.payoffs.alignment_tag,
        'types': env.types.to_config(),
        'solver_options': {**settings_to_options(settings), 'grid_n': env.states.grid_n},
    }
