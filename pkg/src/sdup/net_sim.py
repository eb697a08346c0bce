"""Deterministic discrete-event model of an ad hoc radio network.

Propagation is a unit disk: a listener hears a sender when their distance is
at most the listener's radio range, and two nodes are linked when the
distance is within both ranges. Each node owns a FIFO MAC queue. Before a
frame goes on air the sender senses the medium; if busy it defers a uniform
number of backoff slots, and gives up after ``max_backoffs`` deferrals.

A transmission reaches a listener unless some other transmission audible to
that listener (or sent by the listener itself) overlaps it in time, or an
independent loss draw fires. Loss draws are keyed hashes of the sim seed,
the frame's loss key and the listener, so adding unrelated traffic never
reshuffles other frames' fates.
"""

from __future__ import annotations

import heapq
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Sequence

from .errors import ConfigurationError, ParameterError, RoutingError
from .prng import keyed_uniform

log = logging.getLogger(__name__)

TRANSMIT_END = "transmit-end"
DELIVER = "deliver"
MOBILITY = "mobility"
TRANSMIT_START = "transmit-start"
# Same-time ordering: finished airtime is settled before anything new senses the medium.
_KIND_RANK = {TRANSMIT_END: 0, DELIVER: 1, MOBILITY: 2, TRANSMIT_START: 3}
# Airtime intervals that touch only within float rounding do not overlap.
TIME_EPS = 1e-12


@dataclass
class NodeState:
    id: int
    x: float
    y: float
    speed: float = 0.0
    heading: float = 0.0
    radio_range: float = 250.0
    compromise_prob: float = 0.0
    compromised: bool = False
    waypoint: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.radio_range > 0:
            raise ConfigurationError(f"node {self.id}: radio range must be > 0")
        if not 0.0 <= self.compromise_prob <= 1.0:
            raise ConfigurationError(f"node {self.id}: compromise_prob must be in [0, 1]")
        if self.speed < 0:
            raise ConfigurationError(f"node {self.id}: speed must be >= 0")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def build_links(nodes: Iterable[NodeState]) -> dict[int, frozenset[int]]:
    nodes = list(nodes)
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("duplicate node ids")
    adj: dict[int, set[int]] = {i: set() for i in ids}
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if math.hypot(a.x - b.x, a.y - b.y) <= min(a.radio_range, b.radio_range):
                adj[a.id].add(b.id)
                adj[b.id].add(a.id)
    return {i: frozenset(s) for i, s in adj.items()}


class Topology:
    """Node snapshot plus derived symmetric links, inside a width x height arena."""

    def __init__(self, nodes: Iterable[NodeState], width: float = 1000.0, height: float = 1000.0):
        nodes = list(nodes)
        if width <= 0 or height <= 0:
            raise ConfigurationError("arena dimensions must be > 0")
        self.links = build_links(nodes)
        self.nodes = {n.id: n for n in sorted(nodes, key=lambda n: n.id)}
        self.width = width
        self.height = height

    def __repr__(self):
        return f"Topology({len(self.nodes)} nodes, {self.width}x{self.height})"

    def linked(self, a: int, b: int) -> bool:
        return b in self.links.get(a, ())

    def distance(self, a: int, b: int) -> float:
        na, nb = self.nodes[a], self.nodes[b]
        return math.hypot(na.x - nb.x, na.y - nb.y)

    def hears(self, listener: int, sender: int) -> bool:
        return listener != sender and self.distance(listener, sender) <= self.nodes[listener].radio_range

    def hearers(self, sender: int) -> tuple[int, ...]:
        return tuple(i for i in self.nodes if self.hears(i, sender))

    def copy(self) -> "Topology":
        return Topology([replace(n) for n in self.nodes.values()], self.width, self.height)


def average_mobility(topology: Topology) -> float:
    if not topology.nodes:
        raise ParameterError("average mobility of an empty topology")
    return sum(n.speed for n in topology.nodes.values()) / len(topology.nodes)


def _ray_exit(node: NodeState, width: float, height: float) -> tuple[float, float]:
    dx, dy = math.cos(node.heading), math.sin(node.heading)
    ts = []
    if dx > 0:
        ts.append((width - node.x) / dx)
    elif dx < 0:
        ts.append(-node.x / dx)
    if dy > 0:
        ts.append((height - node.y) / dy)
    elif dy < 0:
        ts.append(-node.y / dy)
    t = max(0.0, min(ts))
    return (min(max(node.x + t * dx, 0.0), width), min(max(node.y + t * dy, 0.0), height))


def assign_waypoints(topology: Topology, randomness: random.Random) -> Topology:
    """Give every node a uniform random waypoint and point its heading at it."""
    nodes = []
    for n in topology.nodes.values():
        wp = (randomness.uniform(0, topology.width), randomness.uniform(0, topology.height))
        nodes.append(replace(n, waypoint=wp, heading=math.atan2(wp[1] - n.y, wp[0] - n.x)))
    return Topology(nodes, topology.width, topology.height)


def step_mobility(topology: Topology, dt: float, randomness: random.Random) -> Topology:
    """Random-waypoint motion for ``dt`` seconds; returns a new Topology.

    A node without a waypoint heads for the point where its current heading
    leaves the arena, so the first leg follows the initial heading.
    """
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    moved = []
    for n in topology.nodes.values():
        n = replace(n)
        travel = n.speed * dt
        if travel > 0 and n.waypoint is None:
            n.waypoint = _ray_exit(n, topology.width, topology.height)
        for _ in range(10_000):
            if travel <= 0:
                break
            wx, wy = n.waypoint
            gap = math.hypot(wx - n.x, wy - n.y)
            if gap <= travel:
                n.x, n.y = wx, wy
                travel -= gap
                n.waypoint = (randomness.uniform(0, topology.width), randomness.uniform(0, topology.height))
                n.heading = math.atan2(n.waypoint[1] - n.y, n.waypoint[0] - n.x)
            else:
                n.x += (wx - n.x) / gap * travel
                n.y += (wy - n.y) / gap * travel
                travel = 0.0
        moved.append(n)
    return Topology(moved, topology.width, topology.height)


def load_topology(text: str) -> Topology:
    """Parse ``node <id> <x> <y> <speed> <range> <compromise_prob>`` / ``arena <w> <h>`` lines."""
    nodes, arena = [], (1000.0, 1000.0)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line:
            continue
        fields = line.split(" ")
        if "" in fields:
            raise ConfigurationError("fields must be separated by single spaces", lineno)
        try:
            if fields[0] == "node" and len(fields) == 7:
                nodes.append(NodeState(
                    id=int(fields[1]), x=float(fields[2]), y=float(fields[3]), speed=float(fields[4]),
                    radio_range=float(fields[5]), compromise_prob=float(fields[6])))
            elif fields[0] == "arena" and len(fields) == 3:
                arena = (float(fields[1]), float(fields[2]))
            else:
                raise ConfigurationError(f"unrecognised line {line!r}", lineno)
        except ValueError as exc:
            raise ConfigurationError(f"malformed number: {exc}", lineno) from None
        except ConfigurationError as exc:
            if exc.line is None:
                raise ConfigurationError(str(exc), lineno) from None
            raise
    for n in nodes:
        if not (0 <= n.x <= arena[0] and 0 <= n.y <= arena[1]):
            raise ConfigurationError(f"node {n.id} lies outside the arena")
    return Topology(nodes, *arena)


def dump_topology(topology: Topology) -> str:
    lines = [f"arena {topology.width!r} {topology.height!r}"]
    for n in topology.nodes.values():
        lines.append(f"node {n.id} {n.x!r} {n.y!r} {n.speed!r} {n.radio_range!r} {n.compromise_prob!r}")
    return "\n".join(lines) + "\n"


@dataclass
class ChannelParams:
    frame_airtime: float = 0.002
    loss_prob: float = 0.0
    backoff_slot: float = 0.0001
    max_backoffs: int = 7
    contention_window: int = 16
    carrier_sense: bool = True

    def __post_init__(self):
        if not self.frame_airtime > 0:
            raise ParameterError("frame_airtime must be > 0")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ParameterError("loss_prob must be in [0, 1]")
        if self.backoff_slot < 0 or self.max_backoffs < 0 or self.contention_window < 1:
            raise ParameterError("backoff parameters out of range")


@dataclass(frozen=True)
class MediumEvent:
    kind: str
    time: float
    sender: int
    receiver: int
    frame: Any = None
    tx_id: int = -1


@dataclass(frozen=True)
class TraceRecord:
    time: float
    kind: str
    node: int
    peer: int = -1
    tx_id: int = -1
    frame: Any = None
    nodes: tuple[int, ...] = ()

    def serialize(self) -> str:
        return f"{self.time!r} {self.kind} {self.node} {self.peer} {self.tx_id} {_label(self.frame)} {','.join(map(str, self.nodes))}"


def _label(frame: Any) -> str:
    frame = getattr(frame, "frame", frame)
    if frame is None:
        return "-"
    if hasattr(frame, "to_bytes") and not isinstance(frame, int):
        return frame.to_bytes().hex()
    return repr(frame)


def serialize_trace(trace: Iterable[TraceRecord]) -> str:
    return "".join(r.serialize() + "\n" for r in trace)


@dataclass
class _Pending:
    frame: Any
    receiver: int
    ready: float
    loss_key: tuple[int, ...]
    attempts: int = 0


@dataclass
class _Tx:
    id: int
    sender: int
    receiver: int
    start: float
    end: float
    frame: Any
    hearers: tuple[int, ...]
    loss_key: tuple[int, ...]


@dataclass
class SimCounters:
    transmissions: int = 0
    delivered: int = 0
    collisions: int = 0
    channel_losses: int = 0
    backoff_exhausted: int = 0
    link_broken: int = 0


class Simulator:
    """Single-threaded event loop over one topology.

    ``on_deliver(receiver, frame, sender, time)`` fires for every frame that
    reaches its intended receiver; ``on_mac(kind, node, frame, time)`` reports
    sender-side MAC outcomes ('sense_busy', 'tx_start', 'tx_done', 'dropped').
    """

    def __init__(self, topology: Topology, channel: ChannelParams, randomness: random.Random,
                 mobility_dt: float | None = None, mobility_randomness: random.Random | None = None):
        self.topology = topology
        self.channel = channel
        self.rng = randomness
        self.loss_seed = randomness.getrandbits(64)
        self.mobility_dt = mobility_dt
        self.mobility_rng = mobility_randomness or random.Random(randomness.getrandbits(64))
        self.now = 0.0
        self.trace: list[TraceRecord] = []
        self.counters = SimCounters()
        self.events_processed = 0
        self.on_deliver: Callable[[int, Any, int, float], None] | None = None
        self.on_mac: Callable[[str, int, Any, float], None] | None = None
        self._heap: list = []
        self._seq = 0
        self._queues: dict[int, deque[_Pending]] = {}
        self._busy: set[int] = set()
        self._recent: list[_Tx] = []
        self._tx_seq = 0
        self._medium_pending = 0
        self._mobility_pending = False
        self._last_tick = 0.0

    # -- scheduling -------------------------------------------------------
    def _push(self, event: MediumEvent, payload: Any = None) -> MediumEvent:
        heapq.heappush(self._heap, (event.time, _KIND_RANK[event.kind], event.sender, self._seq, event, payload))
        self._seq += 1
        if event.kind != MOBILITY:
            self._medium_pending += 1
            self._ensure_tick()
        return event

    def _ensure_tick(self) -> None:
        if self.mobility_dt and not self._mobility_pending:
            self._mobility_pending = True
            self._push(MediumEvent(MOBILITY, self._last_tick + self.mobility_dt, -1, -1))

    def record(self, kind: str, node: int, peer: int = -1, frame: Any = None) -> None:
        """Append an out-of-band record (e.g. a relay dropping a frame on a broken hop)."""
        if kind == "link_broken":
            self.counters.link_broken += 1
        self.trace.append(TraceRecord(self.now, kind, node, peer, -1, frame))

    def transmit(self, frame: Any, sender: int, receiver: int, time: float | None = None,
                 loss_key: Sequence[int] | None = None) -> list[MediumEvent]:
        """Queue ``frame`` on the sender's MAC, ready no earlier than ``time``."""
        if not self.topology.linked(sender, receiver):
            raise RoutingError(f"node {sender} is not linked to node {receiver}")
        ready = self.now if time is None else max(time, self.now)
        if loss_key is None:
            loss_key = (self._tx_seq,)
            self._tx_seq += 1
        self._queues.setdefault(sender, deque()).append(_Pending(frame, receiver, ready, tuple(loss_key)))
        if sender in self._busy:
            return []
        return [self._start_next(sender)]

    def _start_next(self, node: int) -> MediumEvent | None:
        queue = self._queues.get(node)
        if not queue:
            self._busy.discard(node)
            return None
        self._busy.add(node)
        head = queue[0]
        return self._push(MediumEvent(TRANSMIT_START, max(head.ready, self.now), node, head.receiver, head.frame),
                          head)

    def _finish_head(self, node: int) -> None:
        self._queues[node].popleft()
        self._busy.discard(node)
        self._start_next(node)

    # -- medium -----------------------------------------------------------
    def is_medium_idle(self, node: int, time: float | None = None) -> bool:
        t = self.now if time is None else time
        for tx in self._recent:
            if tx.start <= t < tx.end - TIME_EPS and (tx.sender == node or node in tx.hearers):
                return False
        return True

    def _collided(self, tx: _Tx, listener: int) -> bool:
        for other in self._recent:
            if other is tx or not (other.start < tx.end - TIME_EPS and tx.start < other.end - TIME_EPS):
                continue
            if other.sender == listener or listener in other.hearers:
                return True
        return False

    # -- event handlers ---------------------------------------------------
    def _on_start(self, ev: MediumEvent, pending: _Pending) -> None:
        node, ch = ev.sender, self.channel
        if not self.topology.linked(node, pending.receiver):
            self.counters.link_broken += 1
            self.trace.append(TraceRecord(self.now, "link_broken", node, pending.receiver, -1, pending.frame))
            self._notify("dropped", node, pending.frame)
            self._finish_head(node)
            return
        if ch.carrier_sense:
            if not self.is_medium_idle(node):
                pending.attempts += 1
                self.trace.append(TraceRecord(self.now, "sense_busy", node, pending.receiver, -1, pending.frame))
                self._notify("sense_busy", node, pending.frame)
                if pending.attempts > ch.max_backoffs:
                    self.counters.backoff_exhausted += 1
                    self.trace.append(TraceRecord(self.now, "backoff_exhausted", node, pending.receiver, -1,
                                                  pending.frame))
                    self._notify("dropped", node, pending.frame)
                    self._finish_head(node)
                else:
                    slots = self.rng.randint(1, ch.contention_window)
                    self._push(replace(ev, time=self.now + slots * ch.backoff_slot), pending)
                return
            self.trace.append(TraceRecord(self.now, "sense_idle", node, pending.receiver, -1, pending.frame))
        tx = _Tx(self.counters.transmissions, node, pending.receiver, self.now, self.now + ch.frame_airtime,
                 pending.frame, self.topology.hearers(node), pending.loss_key)
        self.counters.transmissions += 1
        self._recent.append(tx)
        self.trace.append(TraceRecord(self.now, "tx_start", node, tx.receiver, tx.id, tx.frame, tx.hearers))
        self._notify("tx_start", node, tx.frame)
        self._push(MediumEvent(TRANSMIT_END, tx.end, node, tx.receiver, tx.frame, tx.id), tx)

    def _on_end(self, ev: MediumEvent, tx: _Tx) -> None:
        ch = self.channel
        heard, outcome = [], "lost_channel"
        for listener in tx.hearers:
            collided = self._collided(tx, listener)
            lost = keyed_uniform(self.loss_seed, *tx.loss_key, listener) < ch.loss_prob
            if listener == tx.receiver:
                outcome = "lost_collision" if collided else "lost_channel" if lost else DELIVER
            if not collided and not lost:
                heard.append(listener)
        self.trace.append(TraceRecord(self.now, "tx_end", tx.sender, tx.receiver, tx.id, tx.frame, tuple(heard)))
        if outcome == DELIVER:
            self._push(MediumEvent(DELIVER, self.now, tx.sender, tx.receiver, tx.frame, tx.id), tx)
        elif outcome == "lost_collision":
            self.counters.collisions += 1
            self.trace.append(TraceRecord(self.now, outcome, tx.receiver, tx.sender, tx.id, tx.frame))
        else:
            self.counters.channel_losses += 1
            self.trace.append(TraceRecord(self.now, outcome, tx.receiver, tx.sender, tx.id, tx.frame))
        horizon = self.now - ch.frame_airtime
        self._recent = [o for o in self._recent if o.end > horizon]
        self._notify("tx_done", tx.sender, tx.frame)
        self._finish_head(tx.sender)

    def _on_deliver(self, ev: MediumEvent, tx: _Tx) -> None:
        self.counters.delivered += 1
        self.trace.append(TraceRecord(self.now, "deliver", tx.receiver, tx.sender, tx.id, tx.frame))
        if self.on_deliver is not None:
            self.on_deliver(tx.receiver, tx.frame, tx.sender, self.now)

    def _on_mobility(self, ev: MediumEvent) -> None:
        self._mobility_pending = False
        self.topology = step_mobility(self.topology, ev.time - self._last_tick, self.mobility_rng)
        self._last_tick = ev.time
        self.trace.append(TraceRecord(self.now, "mobility", -1))
        if self._medium_pending:
            self._ensure_tick()

    def _notify(self, kind: str, node: int, frame: Any) -> None:
        if self.on_mac is not None:
            self.on_mac(kind, node, frame, self.now)

    def run_until(self, t_end: float = math.inf) -> list[TraceRecord]:
        if t_end < self.now:
            raise ParameterError("t_end precedes the current simulation time")
        while self._heap and self._heap[0][0] <= t_end:
            time, _, _, _, ev, payload = heapq.heappop(self._heap)
            self.now = time
            self.events_processed += 1
            if ev.kind == MOBILITY:
                self._on_mobility(ev)
                continue
            self._medium_pending -= 1
            if ev.kind == TRANSMIT_START:
                self._on_start(ev, payload)
            elif ev.kind == TRANSMIT_END:
                self._on_end(ev, payload)
            else:
                self._on_deliver(ev, payload)
        if math.isfinite(t_end):
            self.now = max(self.now, t_end)
        return self.trace


def schedule_poisson_flows(sim: Simulator, flows: Sequence[tuple[int, int]], frames_per_flow: int,
                           mean_gap: float, randomness: random.Random, start: float = 0.0) -> int:
    """Inject background traffic: each (sender, receiver) flow gets exponential inter-arrival gaps."""
    total = 0
    for flow_id, (sender, receiver) in enumerate(flows):
        t = start
        for j in range(frames_per_flow):
            t += randomness.expovariate(1.0 / mean_gap)
            sim.transmit(("flow", flow_id, j), sender, receiver, time=t, loss_key=(flow_id, j))
            total += 1
    return total
