"""Monte Carlo simulation of one physical event seen by I sensors.

Two engines share the same physics:

* :func:`run_replication` steps frame by frame through one replication and can
  emit a per-frame trace. It also supports round-robin serialisation of grants.
* :func:`iter_blocks` / :func:`simulate_batch` draw whole blocks of
  replications with numpy. Replications are grouped into fixed blocks of
  ``BLOCK_SIZE``; block ``k`` always uses the stream derived from
  ``(master_seed, k)`` and always draws a full block, so a replication's values
  do not depend on the total count or on the number of worker threads.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .analytic import frame_index
from .params import DerivedLink, SystemConfig

BLOCK_SIZE = 1 << 15

# spawn-key tags keep single-replication and block streams disjoint
_REPLICATION_STREAM = 0
_BLOCK_STREAM = 1


class ChannelMode(str, Enum):
    STATISTICAL = "statistical"
    SIGNAL_LEVEL = "signal_level"


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replication_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(_REPLICATION_STREAM, self.replication_index)
        )
        return np.random.Generator(np.random.PCG64(seq))


def block_generator(master_seed: int, block_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(_BLOCK_STREAM, block_index))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass
class PacketOutcome:
    sensor_id: int
    distance: float
    action_time: float
    comp_delay: float
    start_frame: int
    sr_attempts: int
    pt_attempts: int
    arrival_time: float
    dropped: bool
    drop_stage: Optional[str] = None
    deferrals: int = 0

    def expected_arrival(self, T_f: float) -> float:
        """Arrival time rebuilt from the frame alignment and attempt counts."""
        if self.dropped:
            return math.inf
        return (self.start_frame + self.sr_attempts + self.pt_attempts + self.deferrals) * T_f


# -- elementary draws ---------------------------------------------------------


def sample_distance(rng: np.random.Generator, D_max: float, size=None):
    """Distance of a sensor placed uniformly on a disc of radius ``D_max``."""
    return D_max * np.sqrt(rng.random(size))


def event_action_time(t0: float, D, v: float):
    return t0 + D / v


def sr_successes(link: DerivedLink, mode: ChannelMode, rng: np.random.Generator, size) -> np.ndarray:
    """Outcome of scheduling-request detection for ``size`` independent attempts."""
    if link.perfect_detection:
        return np.ones(size, dtype=bool)
    if mode == ChannelMode.STATISTICAL:
        return rng.random(size) >= link.zeta
    # normalised so that noise has unit power and the fading gain has mean gamma;
    # the correlator output |s^H y|^2 / (N0 B) is then exponential with mean 1 + gamma
    shape = (size,) if np.ndim(size) == 0 else tuple(size)
    z = rng.standard_normal(shape + (4,)) * math.sqrt(0.5)
    h = math.sqrt(link.gamma) * (z[..., 0] + 1j * z[..., 1])
    noise = z[..., 2] + 1j * z[..., 3]
    return np.abs(h + noise) ** 2 >= link.eta


def pt_successes(link: DerivedLink, mode: ChannelMode, rng: np.random.Generator, size) -> np.ndarray:
    """Outcome of packet transmissions: success unless the SNR falls below gamma_th."""
    if link.perfect_transmission:
        return np.ones(size, dtype=bool)
    if mode == ChannelMode.STATISTICAL:
        return rng.random(size) >= link.epsilon
    shape = (size,) if np.ndim(size) == 0 else tuple(size)
    z = rng.standard_normal(shape + (2,)) * math.sqrt(0.5)
    snr = link.gamma * (z[..., 0] ** 2 + z[..., 1] ** 2)
    return snr >= link.gamma_th


def sr_attempt(link: DerivedLink, mode: ChannelMode, rng: np.random.Generator) -> bool:
    return bool(sr_successes(link, mode, rng, 1)[0])


def pt_attempt(link: DerivedLink, mode: ChannelMode, rng: np.random.Generator) -> bool:
    return bool(pt_successes(link, mode, rng, 1)[0])


# -- frame-stepped replication ---------------------------------------------------


@dataclass
class _SensorState:
    next_sr_frame: int
    phase: str = "sr"  # sr -> pt -> done | dropped
    m: int = 0
    n: int = 0
    pt_frame: int = -1
    deferrals: int = 0
    arrival: float = math.inf
    drop_stage: Optional[str] = None


def run_replication(system: SystemConfig, mode: ChannelMode, seed: SeedSpec, *,
                    distances: Optional[Sequence[float]] = None,
                    comp_delays: Optional[Sequence[float]] = None,
                    trace: Optional[list] = None) -> List[PacketOutcome]:
    """Simulate one event through sensing, request, grant and transmission.

    ``distances`` and ``comp_delays`` pin the sensing draws (for deterministic
    checks). If ``trace`` is a list, one dict per frame event is appended.
    """
    sc, comm = system.scenario, system.comm
    links = system.derived()
    mode = ChannelMode(mode)
    rng = seed.generator()
    I, T_f = sc.I, comm.T_f

    D = sample_distance(rng, sc.D_max, I) if distances is None else np.asarray(distances, float)
    C = rng.uniform(sc.C_min, sc.C_max, I) if comp_delays is None else np.asarray(comp_delays, float)
    t_ea = event_action_time(sc.t0, D, sc.v)
    k0 = frame_index(t_ea + C, T_f)
    states = [_SensorState(next_sr_frame=int(k)) for k in k0]

    def log(frame, sensor, event, attempt="", ok=""):
        if trace is not None:
            trace.append({
                "replication": seed.replication_index, "frame": frame,
                "time_s": frame * T_f, "sensor_id": sensor, "event": event,
                "attempt": attempt, "success": ok,
            })

    for i, k in enumerate(k0):
        log(int(k), i + 1, "ready")

    queue: deque = deque()
    frame = int(min(k0))
    while any(s.phase in ("sr", "pt") for s in states):
        # packet-transmission sub-frame uses grants issued in earlier frames
        due = [i for i in queue if states[i].pt_frame <= frame]
        transmit = due[:1] if system.serialize_grants else due
        for i in due:
            if i not in transmit:
                states[i].deferrals += 1
                states[i].pt_frame = frame + 1
        for i in transmit:
            st = states[i]
            queue.remove(i)
            st.n += 1
            ok = pt_attempt(links[i], mode, rng)
            log(frame, i + 1, "pt", st.n, int(ok))
            if ok:
                st.phase, st.arrival = "done", (frame + 1) * T_f
                log(frame + 1, i + 1, "arrival")
            elif st.n == comm.N_max:
                st.phase, st.drop_stage = "dropped", "pt"
                log(frame, i + 1, "drop")
            else:
                st.pt_frame = frame + 1
                queue.append(i)
        # scheduling-request sub-frame
        for i, st in enumerate(states):
            if st.phase != "sr" or st.next_sr_frame != frame:
                continue
            st.m += 1
            ok = sr_attempt(links[i], mode, rng)
            log(frame, i + 1, "sr", st.m, int(ok))
            if ok:
                st.phase, st.pt_frame = "pt", frame + 1
                queue.append(i)
            elif st.m == comm.M_max:
                st.phase, st.drop_stage = "dropped", "sr"
                log(frame, i + 1, "drop")
            else:
                st.next_sr_frame = frame + 1
        frame += 1

    return [
        PacketOutcome(
            sensor_id=i + 1,
            distance=float(D[i]),
            action_time=float(t_ea[i]),
            comp_delay=float(C[i]),
            start_frame=int(k0[i]),
            sr_attempts=st.m,
            pt_attempts=st.n,
            arrival_time=st.arrival,
            dropped=st.phase == "dropped",
            drop_stage=st.drop_stage,
            deferrals=st.deferrals,
        )
        for i, st in enumerate(states)
    ]


TRACE_FIELDS = ["replication", "frame", "time_s", "sensor_id", "event", "attempt", "success"]


def write_trace(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, "time_s": f"{row['time_s']:.9g}"})


# -- vectorised blocks --------------------------------------------------------------


@dataclass
class BlockDraws:
    """Outcomes for a contiguous range of replications, arrays shaped (n, I)."""

    start: int
    arrival: np.ndarray
    sr_attempts: np.ndarray
    pt_attempts: np.ndarray
    sr_failures: np.ndarray
    pt_failures: np.ndarray
    dropped: np.ndarray

    def __len__(self):
        return self.arrival.shape[0]

    def truncated(self, n: int) -> "BlockDraws":
        return BlockDraws(self.start, *(getattr(self, f)[:n] for f in _BLOCK_ARRAYS))


_BLOCK_ARRAYS = ("arrival", "sr_attempts", "pt_attempts", "sr_failures", "pt_failures", "dropped")


def _first_success(success: np.ndarray):
    """1-based index of the first True per row and whether any was True."""
    any_ok = success.any(axis=1)
    first = np.argmax(success, axis=1) + 1
    return first, any_ok


def simulate_block(system: SystemConfig, mode: ChannelMode, master_seed: int, block_index: int) -> BlockDraws:
    sc, comm = system.scenario, system.comm
    links = system.derived()
    mode = ChannelMode(mode)
    rng = block_generator(master_seed, block_index)
    B, I = BLOCK_SIZE, sc.I
    M, N = comm.M_max, comm.N_max

    arrival = np.empty((B, I))
    sr_att = np.empty((B, I), dtype=np.int16)
    pt_att = np.empty((B, I), dtype=np.int16)
    sr_fail = np.empty((B, I), dtype=np.int16)
    pt_fail = np.empty((B, I), dtype=np.int16)
    dropped = np.empty((B, I), dtype=bool)
    for i, link in enumerate(links):
        D = sample_distance(rng, sc.D_max, B)
        C = rng.uniform(sc.C_min, sc.C_max, B)
        k0 = frame_index(event_action_time(sc.t0, D, sc.v) + C, comm.T_f)
        m, sr_ok = _first_success(sr_successes(link, mode, rng, (B, M)))
        n, pt_ok = _first_success(pt_successes(link, mode, rng, (B, N)))
        delivered = sr_ok & pt_ok
        lost = ~delivered
        # a transmission phase only happens after a granted request
        sr_att[:, i] = np.where(sr_ok, m, M)
        sr_fail[:, i] = sr_att[:, i] - sr_ok
        pt_att[:, i] = np.where(sr_ok, np.where(pt_ok, n, N), 0)
        pt_fail[:, i] = pt_att[:, i] - delivered
        arrival[:, i] = np.where(lost, np.inf, (k0 + m + n) * comm.T_f)
        dropped[:, i] = lost
    return BlockDraws(block_index * B, arrival, sr_att, pt_att, sr_fail, pt_fail, dropped)


def _replication_block(system, mode, master_seed, block_index) -> BlockDraws:
    """Serialised-grant variant: falls back to the frame-stepped engine."""
    start = block_index * BLOCK_SIZE
    rows = []
    for r in range(start, start + BLOCK_SIZE):
        rows.append(run_replication(system, mode, SeedSpec(master_seed, r)))
    return _outcomes_to_block(start, rows)


def _outcomes_to_block(start: int, rows: List[List[PacketOutcome]]) -> BlockDraws:
    def grid(attr, dtype):
        return np.array([[getattr(o, attr) for o in row] for row in rows], dtype=dtype)

    sr_att = grid("sr_attempts", np.int16)
    pt_att = grid("pt_attempts", np.int16)
    dropped = grid("dropped", bool)
    stage = np.array([[o.drop_stage or "" for o in row] for row in rows])
    sr_fail = sr_att - (stage != "sr")
    pt_fail = pt_att - ((pt_att > 0) & (stage != "pt"))
    return BlockDraws(start, grid("arrival_time", float), sr_att, pt_att,
                      sr_fail.astype(np.int16), pt_fail.astype(np.int16), dropped)


def iter_blocks(system: SystemConfig, mode: ChannelMode, master_seed: int, replications: int,
                threads: int = 1, _block_fn=None) -> Iterator[BlockDraws]:
    """Yield blocks covering replications ``0 .. replications-1`` in order."""
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    if _block_fn is None:
        _block_fn = _replication_block if system.serialize_grants and system.scenario.I > 1 else simulate_block
    n_blocks = -(-replications // BLOCK_SIZE)

    def finish(block):
        remaining = replications - block.start
        return block if remaining >= len(block) else block.truncated(remaining)

    if threads <= 1:
        for b in range(n_blocks):
            yield finish(_block_fn(system, mode, master_seed, b))
        return
    # bounded look-ahead keeps memory flat for long runs
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = deque()
        next_block = 0
        while next_block < n_blocks or pending:
            while next_block < n_blocks and len(pending) < 2 * threads:
                pending.append(pool.submit(_block_fn, system, mode, master_seed, next_block))
                next_block += 1
            yield finish(pending.popleft().result())


@dataclass
class BatchResult:
    arrival: np.ndarray
    sr_attempts: np.ndarray
    pt_attempts: np.ndarray
    sr_failures: np.ndarray
    pt_failures: np.ndarray
    dropped: np.ndarray

    @property
    def replications(self) -> int:
        return self.arrival.shape[0]


def simulate_batch(system: SystemConfig, mode: ChannelMode, master_seed: int, replications: int,
                   threads: int = 1) -> BatchResult:
    blocks = list(iter_blocks(system, mode, master_seed, replications, threads))
    return BatchResult(*(np.concatenate([getattr(b, f) for b in blocks]) for f in _BLOCK_ARRAYS))


@dataclass
class LinkCounts:
    """Streaming per-sensor attempt and drop tallies."""

    replications: int = 0
    sr_attempts: np.ndarray = field(default=None)
    sr_failures: np.ndarray = field(default=None)
    pt_attempts: np.ndarray = field(default=None)
    pt_failures: np.ndarray = field(default=None)
    drops: np.ndarray = field(default=None)

    def add(self, block) -> None:
        sums = {
            "sr_attempts": block.sr_attempts.sum(axis=0, dtype=np.int64),
            "sr_failures": block.sr_failures.sum(axis=0, dtype=np.int64),
            "pt_attempts": block.pt_attempts.sum(axis=0, dtype=np.int64),
            "pt_failures": block.pt_failures.sum(axis=0, dtype=np.int64),
            "drops": block.dropped.sum(axis=0, dtype=np.int64),
        }
        for name, val in sums.items():
            cur = getattr(self, name)
            setattr(self, name, val if cur is None else cur + val)
        self.replications += block.arrival.shape[0]


def count_links(system: SystemConfig, mode: ChannelMode, master_seed: int, replications: int,
                threads: int = 1) -> LinkCounts:
    counts = LinkCounts()
    for block in iter_blocks(system, mode, master_seed, replications, threads):
        counts.add(block)
    return counts
