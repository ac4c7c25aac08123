"""Solver tolerances and grid sizes.

Every numeric knob used by the solvers lives on SolverSettings so a config document can
override it through its ``solver_options`` block.
"""

from dataclasses import dataclass, fields, replace
from typing import Any, Dict, Optional

from logger import logger


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances, iteration caps and grid sizes shared by all solvers."""
    grid_n: int = 2000
    trust_tol: float = 1e-12
    bisection_tol: float = 1e-12
    bisection_max_iter: int = 200
    eta_max_iter: int = 300
    eta_growth_steps: int = 200
    tie_tol: float = 1e-9
    menu_p_step: float = 1e-2
    menu_p_tol: float = 1e-12
    menu_check_tol: float = 1e-9
    fit_tol: float = 1e-8
    action_step: float = 1e-2
    oracle_seed: int = 20240601
    oracle_samples: int = 200
    oracle_max_cells: int = 22
    oracle_chunk: int = 1 << 14


DEFAULT_SETTINGS = SolverSettings()

# Zero samples searches only the deterministic assignments
_ZERO_ALLOWED = {'oracle_samples', 'oracle_seed'}


def settings_from_options(options: Optional[Dict[str, Any]]) -> SolverSettings:
    """Build settings from a ``solver_options`` mapping.

    Args:
        options: Mapping of SolverSettings field names to values, or None

    Returns:
        SolverSettings with the given overrides applied to the defaults

    Raises:
        ValueError: If an option name is unknown or a value cannot be coerced
    """
    if not options:
        return DEFAULT_SETTINGS

    known = {f.name: f.type for f in fields(SolverSettings)}
    unknown = [name for name in options if name not in known]
    if unknown:
        raise ValueError(f"Unknown solver options: {', '.join(sorted(unknown))}")

    overrides = {}
    for name, value in options.items():
        kind = known[name]
        if isinstance(value, bool) or (kind is int and isinstance(value, float) and not value.is_integer()):
            raise ValueError(f"Solver option {name} needs {kind.__name__}, got {value!r}")
        try:
            overrides[name] = kind(value)
        except (TypeError, ValueError):
            raise ValueError(f"Solver option {name} has invalid value {value!r}")
        if name in _ZERO_ALLOWED:
            if overrides[name] < 0:
                raise ValueError(f"Solver option {name} must be nonnegative, got {value!r}")
        elif overrides[name] <= 0:
            raise ValueError(f"Solver option {name} must be positive, got {value!r}")

    logger.debug(f"Solver option overrides: {overrides}")
    return replace(DEFAULT_SETTINGS, **overrides)


def settings_to_options(settings: SolverSettings) -> Dict[str, Any]:
    """Return the settings as a plain mapping (used in reports)."""
    return {f.name: getattr(settings, f.name) for f in fields(SolverSettings)}
