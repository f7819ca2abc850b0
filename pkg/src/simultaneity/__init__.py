"""Delay statistics, simulation and window design for event-driven sensor updates.

A physical event reaches I wireless sensors after a propagation delay; each
sensor computes an update and sends it to a base station over a frame-based
request/grant protocol. The base station groups updates into temporal windows
of integration (TWIs) of length W. This package simulates that pipeline,
evaluates closed-form approximations of the packet delay variation, and picks
W for a target probability that one event's updates end up split.
"""

from .analytic import (
    ClosedFormDist,
    abs_diff_oracle,
    access_delay_pmf,
    comp_pdv_dist,
    design_twi,
    prop_pdv_dist,
    psv,
)
from .errors import ConfigError, DomainError, InfeasibleTargetError
from .params import CommConfig, ScenarioConfig, SensorLink, SystemConfig

__version__ = "0.1.0"

__all__ = [
    "ClosedFormDist", "CommConfig", "ConfigError", "DomainError", "InfeasibleTargetError",
    "ScenarioConfig", "SensorLink", "SystemConfig", "abs_diff_oracle", "access_delay_pmf",
    "comp_pdv_dist", "design_twi", "prop_pdv_dist", "psv",
]
