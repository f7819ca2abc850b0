"""Scenario, protocol and per-sensor link parameters.

Everything is in SI units (seconds, metres, hertz, watts). Unit conversion from
config files happens in :mod:`simultaneity.config`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and sensing parameters of one monitored process."""

    t0: float = 0.0
    v: float = 3e8
    D_max: float = 100.0
    I: int = 2
    C_min: float = 0.010
    C_max: float = 0.500
    # C_min == C_max is only accepted when this is set (point-mass PDV)
    allow_degenerate_comp: bool = False

    def __post_init__(self):
        if not self.v > 0:
            raise ConfigError(f"v must be > 0, got {self.v}")
        if not self.D_max > 0:
            raise ConfigError(f"D_max must be > 0, got {self.D_max}")
        if int(self.I) != self.I or self.I < 1:
            raise ConfigError(f"I must be an integer >= 1, got {self.I}")
        if self.C_min < 0 or self.C_max < self.C_min:
            raise ConfigError(f"need 0 <= C_min <= C_max, got ({self.C_min}, {self.C_max})")
        if self.C_min == self.C_max and not self.allow_degenerate_comp:
            raise ConfigError("C_min == C_max requires allow_degenerate_comp")

    @property
    def max_propagation(self) -> float:
        return self.D_max / self.v


@dataclass(frozen=True)
class CommConfig:
    """Frame-based grant access protocol parameters."""

    T_f: float = 0.010
    M_max: int = 5
    N_max: int = 5
    T_p: Optional[float] = None
    B: Optional[float] = None
    b: Optional[float] = None
    N0: Optional[float] = None
    S: Optional[int] = None
    gamma_th_override: Optional[float] = None

    def __post_init__(self):
        if not self.T_f > 0:
            raise ConfigError(f"T_f must be > 0, got {self.T_f}")
        if self.T_p is not None and not 0 < self.T_p < self.T_f:
            raise ConfigError(f"need 0 < T_p < T_f, got T_p={self.T_p}, T_f={self.T_f}")
        for name in ("M_max", "N_max"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {val}")
        if self.gamma_th_override is None:
            missing = [n for n in ("B", "T_p", "b") if getattr(self, n) is None]
            if missing:
                raise ConfigError(
                    "gamma_th not given, so these fields are required: " + ", ".join(missing)
                )
        elif not self.gamma_th_override > 0:
            raise ConfigError(f"gamma_th must be > 0, got {self.gamma_th_override}")

    @property
    def gamma_th(self) -> float:
        return gamma_threshold(self)


@dataclass(frozen=True)
class SensorLink:
    """Raw link inputs for one sensor. Use :meth:`derive` for the link budget."""

    P: Optional[float] = None
    beta: Optional[float] = None
    gamma_override: Optional[float] = None
    perfect_detection: bool = False
    perfect_transmission: bool = False

    def derive(self, comm: CommConfig) -> "DerivedLink":
        gamma = average_snr(self, comm)
        gamma_th = gamma_threshold(comm)
        zeta = 0.0 if self.perfect_detection else sr_miss_probability(gamma)
        eps = 0.0 if self.perfect_transmission else outage_probability(gamma, gamma_th)
        return DerivedLink(
            gamma=gamma,
            gamma_th=gamma_th,
            eta=detection_threshold(gamma),
            zeta=zeta,
            epsilon=eps,
            rho=packet_drop_rate(zeta, eps, comm.M_max, comm.N_max),
            perfect_detection=self.perfect_detection,
            perfect_transmission=self.perfect_transmission,
        )


@dataclass(frozen=True)
class DerivedLink:
    """Per-sensor quantities that the simulator and the analysis consume."""

    gamma: float
    gamma_th: float
    eta: float
    zeta: float
    epsilon: float
    rho: float
    perfect_detection: bool = False
    perfect_transmission: bool = False

    @property
    def false_alarm_rate(self) -> float:
        """Rate at which noise alone crosses the detection threshold.

        Not simulated: a false alarm for a silent sensor has no effect on the
        delay model. Reported for reference only.
        """
        return math.exp(-self.eta)


@dataclass(frozen=True)
class SystemConfig:
    """A complete experiment setup: scenario, protocol and one link per sensor."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    comm: CommConfig = field(default_factory=lambda: CommConfig(gamma_th_override=1.0))
    links: tuple = ()
    serialize_grants: bool = False

    def __post_init__(self):
        if len(self.links) != self.scenario.I:
            raise ConfigError(
                f"expected {self.scenario.I} sensor links, got {len(self.links)}"
            )
        S = self.comm.S
        if S is not None and S < self.scenario.I:
            raise ConfigError(f"preamble length S={S} must be >= I={self.scenario.I}")
        # surface link errors at construction time rather than mid-simulation
        self.derived()

    def derived(self) -> list[DerivedLink]:
        return [link.derive(self.comm) for link in self.links]

    @property
    def rho2(self) -> float:
        """Drop rate of the second sensor (the first one if I == 1)."""
        links = self.derived()
        return links[1].rho if len(links) > 1 else links[0].rho


def uniform_links(I: int, **kwargs) -> tuple:
    return tuple(SensorLink(**kwargs) for _ in range(I))


def average_snr(link: SensorLink, comm: CommConfig) -> float:
    if link.gamma_override is not None:
        if not link.gamma_override > 0:
            raise ConfigError(f"gamma must be > 0, got {link.gamma_override}")
        return float(link.gamma_override)
    values = {"P": link.P, "beta": link.beta, "N0": comm.N0, "B": comm.B}
    for name, val in values.items():
        if val is None:
            raise ConfigError(f"average SNR needs '{name}' (or a direct gamma)")
        if not val > 0:
            raise ConfigError(f"'{name}' must be > 0, got {val}")
    return link.P * link.beta / (comm.N0 * comm.B)


def gamma_threshold(comm: CommConfig) -> float:
    """Outage SNR threshold 2**(b / (T_p B)) - 1, unless given directly."""
    if comm.gamma_th_override is not None:
        return float(comm.gamma_th_override)
    for name in ("b", "T_p", "B"):
        val = getattr(comm, name)
        if val is None or not val > 0:
            raise ConfigError(f"'{name}' must be > 0 to compute gamma_th, got {val}")
    return 2.0 ** (comm.b / (comm.T_p * comm.B)) - 1.0


def _check_gamma(gamma: float) -> None:
    if not gamma > 0 or math.isinf(gamma):
        raise DomainError(f"average SNR must be finite and > 0, got {gamma}")


def detection_threshold(gamma: float) -> float:
    _check_gamma(gamma)
    return (1.0 + 1.0 / gamma) * math.log1p(gamma)


def sr_miss_probability(gamma: float) -> float:
    """Probability that the base station misses a scheduling request."""
    _check_gamma(gamma)
    # 1 - (1+g)^(-1/g), written with expm1/log1p to stay accurate for large g
    return -math.expm1(-math.log1p(gamma) / gamma)


def outage_probability(gamma: float, gamma_th: float) -> float:
    _check_gamma(gamma)
    if not gamma_th > 0:
        raise DomainError(f"gamma_th must be > 0, got {gamma_th}")
    return -math.expm1(-gamma_th / gamma)


def packet_drop_rate(zeta: float, epsilon: float, M_max: int, N_max: int) -> float:
    for name, p in (("zeta", zeta), ("epsilon", epsilon)):
        if not 0.0 <= p < 1.0:
            raise DomainError(f"{name} must lie in [0, 1), got {p}")
    if M_max < 1 or N_max < 1:
        raise DomainError(f"attempt caps must be >= 1, got M_max={M_max}, N_max={N_max}")
    sr = zeta**M_max
    pt = epsilon**N_max
    return sr + pt - sr * pt

