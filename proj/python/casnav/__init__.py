"""Cascaded LTV Riccati observer and SO(3) pose observer.

Thin wrapper around the C++ core. Configs are the same INI files the
``casnav`` command line tool reads; summaries come back as dicts and numpy
arrays.
"""

from ._casnav import (
    CasnavError,
    Config,
    attitude_distance,
    check_observability,
    exp_so3,
    fit_exponential,
    is_rotation,
    load_config,
    orthonormalize,
    parse_config,
    proj,
    psi,
    run_scenario,
    skew,
    sweep,
    sweep_parameters,
)

__all__ = [
    "CasnavError",
    "Config",
    "attitude_distance",
    "check_observability",
    "exp_so3",
    "fit_exponential",
    "is_rotation",
    "load_config",
    "orthonormalize",
    "parse_config",
    "proj",
    "psi",
    "run_scenario",
    "skew",
    "sweep",
    "sweep_parameters",
]
