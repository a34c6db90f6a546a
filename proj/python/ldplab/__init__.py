"""Quadratic-map dynamics, thermodynamic proxies and large-deviation estimators."""

from ._core import (
    LdplabError,
    MapParams,
    birkhoff_mean,
    carved_fraction,
    check_A2,
    check_A3,
    check_A4,
    critical_orbit,
    critical_table,
    deviation_rate,
    horseshoe_branches,
    ldp_crosscheck,
    legendre_transform,
    linear_toy_free_energy,
    periodic_orbits,
    pressure_cgf,
    run_cli,
    sample_mu,
    verify_lemma,
)

__version__ = "0.1.0"

__all__ = [
    "LdplabError",
    "MapParams",
    "birkhoff_mean",
    "carved_fraction",
    "check_A2",
    "check_A3",
    "check_A4",
    "critical_orbit",
    "critical_table",
    "deviation_rate",
    "horseshoe_branches",
    "ldp_crosscheck",
    "legendre_transform",
    "linear_toy_free_energy",
    "periodic_orbits",
    "pressure_cgf",
    "run_cli",
    "sample_mu",
    "verify_lemma",
]
