"""End-to-end SDUP sessions: encode at the sender, relay hop by hop, decode at the receiver.

The source paces its frames: consecutive source transmissions are spaced by
``frame_gap`` (default ``airtime * min(3, longest hop count)``) and rotate
over the primary and duplicate paths, so on a straight path no relay ever
competes with the next frame coming up behind it. There is no ACK layer;
relays forward frames unchanged and drop them when their next hop has moved
out of range.
"""

from __future__ import annotations

import enum
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ParameterError, SdupError
from .frame_codec import Frame, SessionKey, decode_frames, encode_frames
from .gf_sharing import split
from .net_sim import Simulator, TraceRecord

log = logging.getLogger(__name__)


class SenderPhase(enum.Enum):
    IDLE = "IDLE"
    SENSING = "SENSING"
    TRANSMITTING = "TRANSMITTING"
    DONE = "DONE"
    FAILED = "FAILED"


class ReceiverPhase(enum.Enum):
    COLLECTING = "COLLECTING"
    DECODED = "DECODED"
    TIMED_OUT = "TIMED_OUT"


@dataclass
class SessionConfig:
    key: SessionKey
    k: int
    n: int
    primary_path: Sequence[int]
    duplicate_paths: Sequence[Sequence[int]] = ()
    timeout: float | None = None
    frame_gap: float | None = None

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ParameterError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        self.primary_path = tuple(self.primary_path)
        self.duplicate_paths = tuple(tuple(p) for p in self.duplicate_paths)
        for p in self.paths:
            if len(p) < 2 or len(set(p)) != len(p):
                raise ParameterError(f"invalid path {p}")
            if (p[0], p[-1]) != (self.source, self.destination):
                raise ParameterError("all paths must share the sender and the receiver")

    @property
    def paths(self) -> tuple[tuple[int, ...], ...]:
        return (self.primary_path, *self.duplicate_paths)

    @property
    def source(self) -> int:
        return self.primary_path[0]

    @property
    def destination(self) -> int:
        return self.primary_path[-1]

    def receiver_timeout(self, airtime: float) -> float:
        if self.timeout is not None:
            return self.timeout
        hops = sum(len(p) - 1 for p in self.paths)
        return 2 * hops * airtime * (self.n + 1)

    def gap(self, airtime: float) -> float:
        if self.frame_gap is not None:
            return self.frame_gap
        return airtime * min(3, max(len(p) - 1 for p in self.paths))


@dataclass(frozen=True)
class Packet:
    """What travels through the simulator: a frame tagged with its path and hop."""
    frame: Frame
    path_index: int
    hop: int

    @property
    def loss_key(self) -> tuple[int, ...]:
        return (self.frame.session_id, self.frame.wire_pos, self.path_index, self.hop)


@dataclass
class SenderState:
    phase: SenderPhase = SenderPhase.IDLE
    pending: dict[int, list[Frame]] = field(default_factory=dict)
    backoffs: dict[tuple[int, int], int] = field(default_factory=dict)
    sent: int = 0
    dropped: int = 0


@dataclass
class ReceiverState:
    deadline: float
    phase: ReceiverPhase = ReceiverPhase.COLLECTING
    frames: dict[int, Frame] = field(default_factory=dict)
    message: bytes | None = None
    arrivals: int = 0

    def accept(self, frame: Frame) -> bool:
        """Store a frame; duplicate wire positions keep the first copy."""
        self.arrivals += 1
        if frame.wire_pos in self.frames:
            return False
        self.frames[frame.wire_pos] = frame
        return True


@dataclass
class SessionOutcome:
    delivered: bool
    message: bytes | None
    phase: ReceiverPhase
    reason: str | None
    sender_phase: SenderPhase
    frames_sent: int
    frame_bytes: int
    transmissions: int
    collisions: int
    backoff_exhausted: int
    link_broken: int
    arrivals: int
    trace: list[TraceRecord]


def sender_encode(message: bytes, session: SessionConfig, randomness: random.Random) -> list[list[Frame]]:
    """One identical wire-ordered frame queue per path (primary first)."""
    if not message:
        raise ParameterError("message must be nonempty")
    frames = encode_frames(split(message, session.k, session.n, randomness), session.key)
    return [list(frames) for _ in session.paths]


def receiver_decode_attempt(state: ReceiverState, session: SessionConfig) -> bytes | None:
    if state.phase is not ReceiverPhase.COLLECTING:
        raise ParameterError("decode attempted outside COLLECTING")
    try:
        message = decode_frames(state.frames.values(), session.key, session.n, session.k)
    except SdupError:
        return None
    state.phase = ReceiverPhase.DECODED
    state.message = message
    return message


def run_session(sim: Simulator, session: SessionConfig, message: bytes,
                randomness: random.Random) -> SessionOutcome:
    """Send one message through ``sim`` and report what the receiver made of it.

    The receiver decides at its deadline; afterwards the loop is drained so the
    trace holds every transmission an eavesdropper could have heard.
    """
    airtime = sim.channel.frame_airtime
    start = sim.now
    trace_from = len(sim.trace)
    before = sim.counters.__dict__.copy()
    queues = sender_encode(message, session, randomness)
    sender = SenderState(pending={p: list(q) for p, q in enumerate(queues)})
    receiver = ReceiverState(deadline=start + session.receiver_timeout(airtime))
    src, dst = session.source, session.destination
    outstanding = [0]

    def source_done(kind: str) -> None:
        outstanding[0] -= 1
        if kind == "dropped":
            sender.dropped += 1
        if outstanding[0] == 0:
            sender.phase = SenderPhase.FAILED if sender.sent == 0 else SenderPhase.DONE

    def on_mac(kind: str, node: int, packet, now: float) -> None:
        if node != src or not isinstance(packet, Packet) or packet.hop != 0:
            return
        if kind == "sense_busy":
            sender.phase = SenderPhase.SENSING
            key = (packet.path_index, packet.frame.wire_pos)
            sender.backoffs[key] = sender.backoffs.get(key, 0) + 1
        elif kind == "tx_start":
            sender.phase = SenderPhase.TRANSMITTING
            sender.sent += 1
            sender.pending[packet.path_index].remove(packet.frame)
        elif kind in ("tx_done", "dropped"):
            source_done(kind)

    def on_deliver(node: int, packet, from_node: int, now: float) -> None:
        if not isinstance(packet, Packet):
            return
        path = session.paths[packet.path_index]
        here = packet.hop + 1
        if node == dst:
            if receiver.phase is ReceiverPhase.COLLECTING and now <= receiver.deadline:
                receiver.accept(packet.frame)
                if len(receiver.frames) >= session.k:
                    receiver_decode_attempt(receiver, session)
            return
        nxt = path[here + 1]
        forwarded = Packet(packet.frame, packet.path_index, here)
        if sim.topology.linked(node, nxt):
            sim.transmit(forwarded, node, nxt, loss_key=forwarded.loss_key)
        else:
            sim.record("link_broken", node, nxt, forwarded)

    prev_hooks = (sim.on_deliver, sim.on_mac)
    sim.on_deliver, sim.on_mac = on_deliver, on_mac
    try:
        gap = session.gap(airtime)
        npaths = len(session.paths)
        for j in range(len(queues[0])):
            for p, queue in enumerate(queues):
                packet = Packet(queue[j], p, 0)
                path = session.paths[p]
                if sim.topology.linked(src, path[1]):
                    outstanding[0] += 1
                    sim.transmit(packet, src, path[1], time=start + (j * npaths + p) * gap,
                                 loss_key=packet.loss_key)
                else:
                    sender.dropped += 1
                    sim.record("link_broken", src, path[1], packet)
        if outstanding[0] == 0:
            sender.phase = SenderPhase.FAILED
        sim.run_until(receiver.deadline)
        reason = None
        if receiver.phase is ReceiverPhase.COLLECTING:
            if receiver_decode_attempt(receiver, session) is None:
                receiver.phase = ReceiverPhase.TIMED_OUT
                reason = "insufficient-shares"
        sim.run_until(math.inf)
    finally:
        sim.on_deliver, sim.on_mac = prev_hooks

    after = sim.counters.__dict__
    frames_sent = sum(len(q) for q in queues)
    wire_len = len(queues[0][0].to_bytes())
    outcome = SessionOutcome(
        delivered=receiver.phase is ReceiverPhase.DECODED,
        message=receiver.message,
        phase=receiver.phase,
        reason=reason,
        sender_phase=sender.phase,
        frames_sent=frames_sent,
        frame_bytes=frames_sent * wire_len,
        transmissions=after["transmissions"] - before["transmissions"],
        collisions=after["collisions"] - before["collisions"],
        backoff_exhausted=after["backoff_exhausted"] - before["backoff_exhausted"],
        link_broken=after["link_broken"] - before["link_broken"],
        arrivals=receiver.arrivals,
        trace=sim.trace[trace_from:],
    )
    log.debug("session %08x: %s after %d arrivals", session.key.session_id, outcome.phase.value, outcome.arrivals)
    return outcome
