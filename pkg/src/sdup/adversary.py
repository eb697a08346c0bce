"""Passive eavesdroppers: what compromised nodes capture and whether it suffices.

Keystream secrecy is taken as absolute, so success is structural: an attack
succeeds when the captured frames let it recover at least k encrypted shares.

* ORACLE knows the keyed permutation (hence every frame's role) - an upper
  bound on risk.
* BLIND sees only frames. It tries every injective assignment of captured
  frames to logical slots, keeps the assignments whose ring bodies satisfy
  the one keystream-free relation (a complete ring XORs to zero), and
  succeeds only when all surviving assignments recover the same indexed set
  of encrypted shares, of size >= k. The true assignment always survives, so
  blind success implies oracle success.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import EnumerationLimitError, ModelLimitError, ParameterError
from .frame_codec import Frame, SessionKey, derive_permutation, encode_frames, recover_shares, \
    recoverable_indices, slot_count
from .gf_sharing import evaluate_shares
from .net_sim import TraceRecord, Topology
from .secroute import RedundancyPlan

BLIND_EXHAUSTIVE_LIMIT = 6
ENUMERATION_LIMIT = 20


class AttackerModel(enum.Enum):
    ORACLE = "ORACLE"
    BLIND = "BLIND"


@dataclass
class CaptureLog:
    by_node: dict[int, set[tuple[int, int, bytes]]] = field(default_factory=lambda: defaultdict(set))

    def add(self, node: int, frame: Frame) -> None:
        self.by_node[node].add((frame.session_id, frame.wire_pos, frame.body))

    def frames(self, session_id: int | None = None) -> dict[int, bytes]:
        """Pooled captures keyed by wire position (colluding attackers)."""
        pooled = {}
        for node in sorted(self.by_node):
            for sid, pos, body in sorted(self.by_node[node]):
                if session_id is None or sid == session_id:
                    pooled.setdefault(pos, body)
        return pooled

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_node.values())


def _as_frame(obj) -> Frame | None:
    obj = getattr(obj, "frame", obj)
    return obj if isinstance(obj, Frame) else None


def capture_frames(trace: Iterable[TraceRecord], topology: Topology) -> CaptureLog:
    """Frames held by compromised nodes: those they transmitted and those they received or overheard."""
    compromised = {i for i, n in topology.nodes.items() if n.compromised}
    log = CaptureLog()
    if not compromised:
        return log
    for rec in trace:
        frame = _as_frame(rec.frame)
        if frame is None:
            continue
        if rec.kind == "tx_start" and rec.node in compromised:
            log.add(rec.node, frame)
        elif rec.kind == "tx_end":
            for listener in rec.nodes:
                if listener in compromised:
                    log.add(listener, frame)
    return log


def oracle_attack(log: CaptureLog, n: int, k: int, permutation: Sequence[int],
                  session_id: int | None = None) -> bool:
    """Structural recoverability of >= k shares given the frame roles."""
    inverse = {pos: slot for slot, pos in enumerate(permutation)}
    slots = {inverse[pos] for pos in log.frames(session_id) if pos in inverse}
    return len(recoverable_indices(slots, n)) >= k


def _ring_closes(bodies: Sequence[bytes]) -> bool:
    acc = 0
    for b in bodies:
        acc ^= int.from_bytes(b, "big")
    return acc == 0


def blind_attack(log: CaptureLog, n: int, k: int, session_id: int | None = None,
                 limit: int = BLIND_EXHAUSTIVE_LIMIT) -> bool:
    if n > limit:
        raise ModelLimitError(f"blind attack is exhaustive only up to n={limit}")
    captured = list(log.frames(session_id).values())
    m = slot_count(n)
    if not captured or len(captured) > m:
        return False
    ring_slots = set(range(1, m))
    outcome = None
    for assignment in itertools.permutations(range(m), len(captured)):
        held = dict(zip(assignment, captured))
        if n >= 2 and ring_slots <= held.keys() and not _ring_closes([held[s] for s in ring_slots]):
            continue
        ring = {s - 1: body for s, body in held.items() if s >= 1}
        result = frozenset(recover_shares(held.get(0), ring, n).items())
        if outcome is None:
            outcome = result
        elif result != outcome:
            return False
    return outcome is not None and len(outcome) >= k


# -- analytic interception ---------------------------------------------------

def _synthetic_frames(n: int) -> tuple[list[Frame], list[int]]:
    """Generic frames for structure-only evaluation (fixed key, 16-byte random shares)."""
    rng = random.Random(0x5D0B)
    key = SessionKey(rng.randbytes(16), 0)
    shares = evaluate_shares(rng.randbytes(16), [rng.randbytes(16)], n) if n > 1 else \
        evaluate_shares(rng.randbytes(16), [], 1)
    frames = encode_frames(shares, key)
    perm = derive_permutation(key, slot_count(n))
    return frames, perm


@functools.lru_cache(maxsize=None)
def success_counts(n: int, k: int, attacker: AttackerModel) -> tuple[int, ...]:
    """counts[j] = number of j-slot capture sets that let the attacker win."""
    m = slot_count(n)
    counts = [0] * (m + 1)
    if attacker is AttackerModel.BLIND:
        frames, perm = _synthetic_frames(n)
        by_slot = {slot: next(f for f in frames if f.wire_pos == perm[slot]) for slot in range(m)}
    for size in range(m + 1):
        for subset in itertools.combinations(range(m), size):
            if attacker is AttackerModel.ORACLE:
                win = len(recoverable_indices(subset, n)) >= k
            else:
                log = CaptureLog()
                for slot in subset:
                    log.add(-1, by_slot[slot])
                win = blind_attack(log, n, k)
            counts[size] += win
    return tuple(counts)


def _path_miss_probability(path: Sequence[int], compromised: set[int], hop_loss: float,
                           listeners: Mapping[int, Sequence[int]]) -> float:
    """P(one frame crosses ``path`` without any compromised node receiving it)."""
    miss_total, alive = 0.0, 1.0
    for i in range(len(path) - 1):
        nxt = path[i + 1]
        others = sum(1 for v in listeners.get(path[i], ()) if v != nxt and v in compromised)
        unheard = hop_loss ** others
        if nxt in compromised:
            miss_total += alive * unheard * hop_loss
            return miss_total
        miss_total += alive * unheard * hop_loss
        alive *= unheard * (1.0 - hop_loss)
    return miss_total + alive


def _listener_map(paths: Sequence[Sequence[int]], topology: Topology | None) -> dict[int, tuple[int, ...]]:
    senders = {u for p in paths for u in p[:-1]}
    if topology is None:
        return {u: () for u in senders}
    return {u: topology.hearers(u) for u in senders}


def _used_paths(path_set: Sequence[Sequence[int]], plan: RedundancyPlan) -> list[tuple[int, ...]]:
    if not path_set:
        raise ParameterError("empty path set")
    if plan.duplicate_paths >= len(path_set):
        raise ParameterError("plan wants more duplicate paths than the path set holds")
    return [tuple(p) for p in path_set[:1 + plan.duplicate_paths]]


def involved_nodes(path_set: Sequence[Sequence[int]], plan: RedundancyPlan, probs: Mapping[int, float],
                   topology: Topology | None = None) -> list[int]:
    paths = _used_paths(path_set, plan)
    endpoints = {paths[0][0], paths[0][-1]}
    nodes = {v for p in paths for v in p[1:-1]}
    for heard in _listener_map(paths, topology).values():
        nodes.update(heard)
    return sorted(v for v in nodes - endpoints if probs.get(v, 0.0) > 0.0)


def interception_probability(path_set: Sequence[Sequence[int]], probs: Mapping[int, float],
                             plan: RedundancyPlan, attacker: AttackerModel = AttackerModel.ORACLE,
                             hop_loss: float = 0.0, topology: Topology | None = None) -> float:
    """Exact attack success probability over every compromise outcome.

    Uses the primary path plus ``plan.duplicate_paths`` following ones from
    ``path_set``. Every transmitted frame is captured by a compromised relay
    that receives it; with ``topology`` given, compromised nodes that
    overhear a hop capture it too. Each reception is lost independently with
    ``hop_loss``; endpoints are trusted. Collisions are not modelled.
    """
    paths = _used_paths(path_set, plan)
    nodes = involved_nodes(path_set, plan, probs, topology)
    if len(nodes) > ENUMERATION_LIMIT:
        raise EnumerationLimitError(f"{len(nodes)} involved nodes exceed the limit of {ENUMERATION_LIMIT}")
    listeners = _listener_map(paths, topology)
    counts = success_counts(plan.n, plan.k, attacker)
    m = slot_count(plan.n)
    total = 0.0
    for bits in range(1, 1 << len(nodes)):
        weight, compromised = 1.0, set()
        for i, v in enumerate(nodes):
            if bits >> i & 1:
                weight *= probs[v]
                compromised.add(v)
            else:
                weight *= 1.0 - probs[v]
        if weight == 0.0:
            continue
        q = 1.0 - math.prod(_path_miss_probability(p, compromised, hop_loss, listeners) for p in paths)
        win = sum(c * q ** j * (1.0 - q) ** (m - j) for j, c in enumerate(counts) if c)
        total += weight * win
    return total


def simulate_interception(path_set: Sequence[Sequence[int]], probs: Mapping[int, float],
                          plan: RedundancyPlan, trials: int, randomness: random.Random,
                          attacker: AttackerModel = AttackerModel.ORACLE, hop_loss: float = 0.0,
                          topology: Topology | None = None) -> float:
    """Monte Carlo counterpart of interception_probability.

    Samples compromise outcomes and per-reception losses, replays every frame
    hop by hop, and runs the real attack on the resulting capture log.
    """
    paths = _used_paths(path_set, plan)
    nodes = involved_nodes(path_set, plan, probs, topology)
    listeners = _listener_map(paths, topology)
    key = SessionKey(randomness.randbytes(16), randomness.getrandbits(32))
    frames = encode_frames(evaluate_shares(randomness.randbytes(8), [randomness.randbytes(8)
                                                                     for _ in range(plan.k - 1)], plan.n), key)
    perm = derive_permutation(key, slot_count(plan.n))
    wins = 0
    rand = randomness.random
    for _ in range(trials):
        compromised = {v for v in nodes if rand() < probs[v]}
        if not compromised:
            continue
        log = CaptureLog()
        for path in paths:
            for frame in frames:
                for i in range(len(path) - 1):
                    nxt = path[i + 1]
                    for v in listeners[path[i]]:
                        if v != nxt and v in compromised and rand() >= hop_loss:
                            log.add(v, frame)
                    if rand() < hop_loss:
                        break
                    if nxt in compromised:
                        log.add(nxt, frame)
        if attacker is AttackerModel.ORACLE:
            wins += oracle_attack(log, plan.n, plan.k, perm)
        else:
            wins += blind_attack(log, plan.n, plan.k)
    return wins / trials
