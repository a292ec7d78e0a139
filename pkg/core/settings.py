"""
Solver settings: every tolerance and default lives here.

Defaults come from config/solver_config.yaml; a user file may override any
subset of keys. No environment variables are read.
"""
import os
import logging
from dataclasses import dataclass, fields, replace
from typing import Any, Dict, Optional

import yaml

from core.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = os.path.join(
    os.path.dirname(__file__),
    '..',
    'config',
    'solver_config.yaml'
)

# (section, key) in the YAML document -> SolverOptions field
_KEY_MAP = {
    ('sdp', 'gap_tol'): 'gap_tol',
    ('sdp', 'feas_tol'): 'feas_tol',
    ('sdp', 'primal_tol'): 'primal_tol',
    ('sdp', 'max_iterations'): 'max_iterations',
    ('sdp', 'step_fraction'): 'step_fraction',
    ('sdp', 'objective_cap'): 'objective_cap',
    ('sdp', 'trace_bound'): 'trace_bound',
    ('sdp', 'phase_one_tol'): 'phase_one_tol',
    ('sdp', 'psd_tol'): 'psd_tol',
    ('sdp', 'certificate_tol'): 'certificate_tol',
    ('dependence', 'tol'): 'dependence_tol',
    ('recovery', 'epsilon'): 'epsilon',
    ('recovery', 'zero_value_tol'): 'zero_value_tol',
    ('recovery', 'restarts'): 'restarts',
    ('recovery', 'newton_max_iter'): 'newton_max_iter',
    ('recovery', 'line_search_halvings'): 'line_search_halvings',
    ('recovery', 'seed'): 'seed',
    ('apps', 'rho'): 'rho',
    ('apps', 'aqp_zero_tol'): 'aqp_zero_tol',
    ('oracle', 'grid_box'): 'grid_box',
    ('oracle', 'max_grid_dim'): 'max_grid_dim',
    ('oracle', 'constraint_slack'): 'constraint_slack',
}


@dataclass(frozen=True)
class SolverOptions:
    """Numerical options shared by every module"""
    gap_tol: float = 1e-8
    feas_tol: float = 1e-9
    primal_tol: float = 1e-8
    max_iterations: int = 200
    step_fraction: float = 0.98
    objective_cap: float = 1e12
    trace_bound: float = 1e8
    phase_one_tol: float = 1e-7
    psd_tol: float = 1e-10
    certificate_tol: float = 1e-8
    dependence_tol: float = 1e-9
    epsilon: float = 1e-2
    zero_value_tol: float = 1e-9
    restarts: int = 20
    newton_max_iter: int = 100
    line_search_halvings: int = 30
    seed: int = 0
    rho: float = 1e-8
    aqp_zero_tol: float = 1e-7
    grid_box: float = 10.0
    max_grid_dim: int = 4
    constraint_slack: float = 1e-9

    def replace(self, **overrides: Any) -> 'SolverOptions':
        """Return a copy with the given fields changed (None values are skipped)"""
        changes = {k: v for k, v in overrides.items() if v is not None}
        for key in changes:
            if key not in _FIELD_TYPES:
                raise ConfigError(f"Unknown solver option: {key}")
        return replace(self, **{k: _coerce(k, v) for k, v in changes.items()})


_FIELD_TYPES = {f.name: f.type for f in fields(SolverOptions)}


def _coerce(name: str, value: Any) -> Any:
    expected = _FIELD_TYPES[name]
    if expected in (int, 'int'):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"Option '{name}' expects an integer, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"Option '{name}' expects a number, got {value!r}")
    return float(value)


def _read_yaml(config_file: str) -> Dict[str, Any]:
    with open(config_file, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{config_file}: top level must be a mapping")
    return data


def _overrides_from(data: Dict[str, Any], source: str) -> Dict[str, Any]:
    overrides = {}
    for section, body in data.items():
        if not isinstance(body, dict):
            logger.warning(f"{source}: ignoring non-mapping section '{section}'")
            continue
        for key, value in body.items():
            target = _KEY_MAP.get((section, key))
            if target is None:
                logger.warning(f"{source}: unknown key '{section}.{key}' ignored")
                continue
            overrides[target] = _coerce(target, value)
    return overrides


def load_settings(config_file: Optional[str] = None) -> SolverOptions:
    """
    Load solver options from the bundled YAML file, then a user file

    Args:
        config_file: Optional path to a YAML file overriding the defaults

    Returns:
        SolverOptions with all overrides applied
    """
    options = SolverOptions()
    if os.path.exists(DEFAULT_CONFIG_FILE):
        options = replace(options, **_overrides_from(_read_yaml(DEFAULT_CONFIG_FILE), 'solver_config.yaml'))

    if config_file:
        if not os.path.exists(config_file):
            raise ConfigError(f"Config file not found: {config_file}")
        options = replace(options, **_overrides_from(_read_yaml(config_file), config_file))
        logger.info(f"Loaded solver settings from {config_file}")

    return options
