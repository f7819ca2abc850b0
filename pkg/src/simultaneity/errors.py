"""Exception types shared across the package.

The CLI maps each class to a fixed exit code, so raise the most specific one.
"""


class ConfigError(ValueError):
    """Missing, malformed or inconsistent configuration."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class InfeasibleTargetError(DomainError):
    """A target violation probability below the packet-drop floor."""

    def __init__(self, target: float, floor: float):
        self.target = target
        self.floor = floor
        super().__init__(
            f"target sigma {target:.6g} is below the drop-rate floor rho2 = {floor:.6g}; "
            "no window duration can reach it"
        )
