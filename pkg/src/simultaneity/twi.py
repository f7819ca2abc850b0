"""Base-station buffer that groups updates into temporal windows of integration.

The buffer stores updates from one event and hands them to the application
either when all ``I`` have arrived or when ``W`` seconds have passed since the
first stored update, whichever comes first. Updates that miss a window open a
new one. A window boundary is inclusive: an update exactly ``W`` after the
first one still makes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError

# I > 2 counting rule, written into run metadata
VIOLATION_CONVENTION = "any split across >=2 deliveries, or any drop with >=1 delivery"


@dataclass
class DeliveryRecord:
    delivery_time: float
    window_start: float
    delivered_ids: frozenset
    violation: bool = False
    latency: Optional[float] = None


@dataclass
class TwiBuffer:
    """Event-driven window buffer; feed arrivals in time order with :meth:`offer`."""

    W: float
    expected_count: int
    stored: List[Tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.W > 0:
            raise ConfigError(f"window duration W must be > 0, got {self.W}")
        if self.expected_count < 1:
            raise ConfigError(f"expected_count must be >= 1, got {self.expected_count}")

    @property
    def window_start(self) -> Optional[float]:
        return self.stored[0][1] if self.stored else None

    def _deliver(self, at: float) -> DeliveryRecord:
        rec = DeliveryRecord(at, self.window_start, frozenset(s for s, _ in self.stored))
        self.stored.clear()
        return rec

    def offer(self, sensor_id: int, t: float) -> List[DeliveryRecord]:
        """Store an update arriving at ``t``; return deliveries it triggers."""
        out = []
        if self.stored and t - self.window_start > self.W:
            out.append(self._deliver(self.window_start + self.W))
        self.stored.append((sensor_id, t))
        if len(self.stored) == self.expected_count:
            start = self.window_start
            out.append(self._deliver(start + (t - start)))
        return out

    def flush(self) -> List[DeliveryRecord]:
        """Expire an open window once no further update can arrive."""
        if not self.stored:
            return []
        return [self._deliver(self.window_start + self.W)]


def ingest(arrivals: Iterable, W: float, I: int, t0: float = 0.0) -> Tuple[List[DeliveryRecord], bool]:
    """Run one event's arrivals through a fresh buffer.

    ``arrivals`` holds :class:`~simultaneity.sim.PacketOutcome` objects or
    ``(sensor_id, arrival_time)`` pairs; dropped packets carry ``inf``.
    Returns the deliveries and whether the event suffered a simultaneity
    violation.
    """
    pairs = [_as_pair(a) for a in arrivals]
    buf = TwiBuffer(W, I)
    received = sorted((t, sid) for sid, t in pairs if math.isfinite(t))
    records: List[DeliveryRecord] = []
    for t, sid in received:
        records.extend(buf.offer(sid, t))
    records.extend(buf.flush())

    any_drop = len(received) < len(pairs)
    violation = bool(records) and (len(records) > 1 or any_drop)
    for rec in records:
        rec.violation = violation
        rec.latency = rec.delivery_time - t0
    return records, violation


def _as_pair(a) -> Tuple[int, float]:
    if hasattr(a, "arrival_time"):
        return a.sensor_id, a.arrival_time
    sid, t = a
    return sid, float(t)


def latency(first_arrival: float, pdv: float, W: float, t0: float = 0.0) -> float:
    """Time from the event to the first delivery; ``pdv`` is ``inf`` if the other update dropped."""
    if not math.isfinite(first_arrival):
        raise ValueError("latency is undefined when no update arrived")
    return first_arrival + min(pdv, W) - t0


def pdv(arrivals: Sequence[float]) -> Optional[float]:
    """Spread between the first and last surviving arrivals, or None if fewer than two survive."""
    alive = [t for t in arrivals if math.isfinite(t)]
    if len(alive) < 2:
        return None
    return max(alive) - min(alive)


# -- vectorised forms used by the Monte Carlo harness -----------------------------


def event_violations(arrival: np.ndarray, W: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-replication violation flags for a (n, I) arrival matrix, full-event rule.

    Returns ``(violated, delivered)`` where ``delivered`` marks replications with
    at least one received update. Matches :func:`ingest` row by row.
    """
    finite = np.isfinite(arrival)
    delivered = finite.any(axis=1)
    any_drop = ~finite.all(axis=1)
    first = np.where(finite, arrival, np.inf).min(axis=1)
    last = np.where(finite, arrival, -np.inf).max(axis=1)
    with np.errstate(invalid="ignore"):
        split = (last - first) > W
    return delivered & (any_drop | split), delivered


def first_two_gap(arrival: np.ndarray) -> np.ndarray:
    """Gap between the two earliest arrivals per row (``inf`` if fewer than two)."""
    if arrival.shape[1] == 1:
        return np.full(arrival.shape[0], np.inf)
    two = np.partition(arrival, 1, axis=1)[:, :2]
    with np.errstate(invalid="ignore"):
        gap = two[:, 1] - two[:, 0]
    return np.where(np.isfinite(two[:, 0]), gap, np.nan)


def first_delivery_latency(arrival: np.ndarray, W: float, t0: float = 0.0) -> np.ndarray:
    """Latency of each replication's first delivery; NaN where nothing arrived."""
    finite = np.isfinite(arrival)
    first = np.where(finite, arrival, np.inf).min(axis=1)
    last = np.where(finite, arrival, -np.inf).max(axis=1)
    with np.errstate(invalid="ignore"):
        spread = last - first
        complete = finite.all(axis=1) & (spread <= W)
        lat = np.where(complete, first + spread, first + W) - t0
    return np.where(np.isfinite(first), lat, np.nan)
