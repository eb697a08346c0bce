"""Scenario files, seeded multi-trial runs and CSV output.

Scenario format: one ``key = value`` per line, ``#`` starts a comment.
Unknown keys are rejected; absent keys keep their defaults. The defaults
(50 nodes in a 1000 x 1000 m arena, 250 m radio range, 1 KiB messages) are
conventions of this tool, not measured values.
"""

from __future__ import annotations

import dataclasses
import io
import logging
import math
import os
import random
from dataclasses import dataclass, fields
from typing import IO, Iterable, Sequence

from .adversary import blind_attack, capture_frames, oracle_attack, BLIND_EXHAUSTIVE_LIMIT
from .errors import ConfigurationError, ParameterError, UnreachableError
from .frame_codec import SessionKey, derive_permutation, slot_count
from .net_sim import (
    ChannelParams,
    NodeState,
    Simulator,
    Topology,
    assign_waypoints,
    average_mobility,
    load_topology,
    step_mobility,
)
from .prng import mix
from .secroute import (
    RedundancyConfig,
    RedundancyPlan,
    discover_disjoint_paths,
    order_paths,
    path_security_cost,
    redundancy_decision,
)
from .session import SessionConfig, run_session

log = logging.getLogger(__name__)

REDUNDANCY_MODES = ("auto", "none", "shares", "full")
CSV_HEADER = "trial,delivered,oracle_success,blind_success,frames_sent,collisions,backoff_exhausted,overhead_ratio,path_cost"

# Independent per-trial random streams.
_STREAM_COMPROMISE, _STREAM_PLACEMENT, _STREAM_MOBILITY, _STREAM_CHANNEL, _STREAM_SESSION = range(1, 6)


@dataclass(frozen=True)
class ScenarioConfig:
    # topology: a file, or a random placement
    topology: str | None = None
    nodes: int = 50
    arena_width: float = 1000.0
    arena_height: float = 1000.0
    radio_range: float = 250.0
    speed_min: float = 0.0
    speed_max: float = 2.0
    compromise_prob: float | None = None
    source: int = 0
    destination: int = -1
    # protocol
    k: int = 3
    r: int = 1
    theta: float = 1.0
    max_paths: int = 4
    redundancy: str = "auto"
    # channel / MAC
    frame_airtime: float = 0.002
    loss_prob: float = 0.0
    backoff_slot: float = 0.0001
    max_backoffs: int = 7
    contention_window: int = 16
    carrier_sense: bool = True
    # mobility and timing
    mobility_dt: float = 1.0
    warmup: float = 0.0
    timeout: float = 0.0
    # experiment
    message_length: int = 1024
    trials: int = 100
    seed: int = 1

    def __post_init__(self):
        _validate(self)

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(self.frame_airtime, self.loss_prob, self.backoff_slot, self.max_backoffs,
                             self.contention_window, self.carrier_sense)

    @property
    def redundancy_config(self) -> RedundancyConfig:
        return RedundancyConfig(self.k, self.r, self.theta)


DEFAULT_COMPROMISE_PROB = 0.1


def _validate(c: ScenarioConfig) -> None:
    def bad(key, why):
        raise ConfigurationError(f"{key}: {why}")

    for key in ("loss_prob", "compromise_prob"):
        value = getattr(c, key)
        if value is not None and not 0.0 <= value <= 1.0:
            bad(key, f"probability {value} outside [0, 1]")
    if c.trials < 1:
        bad("trials", "must be >= 1")
    if c.nodes < 2:
        bad("nodes", "need at least 2 nodes")
    if c.arena_width <= 0 or c.arena_height <= 0 or c.radio_range <= 0:
        bad("arena", "dimensions and radio range must be > 0")
    if not 0 <= c.speed_min <= c.speed_max:
        bad("speed_min", "need 0 <= speed_min <= speed_max")
    if c.k < 1 or c.r < 0 or c.k + c.r > 255:
        bad("k", "need k >= 1, r >= 0, k + r <= 255")
    if c.theta < 0:
        bad("theta", "must be >= 0")
    if c.max_paths < 1:
        bad("max_paths", "must be >= 1")
    if c.redundancy not in REDUNDANCY_MODES:
        bad("redundancy", f"must be one of {', '.join(REDUNDANCY_MODES)}")
    if c.frame_airtime <= 0 or c.backoff_slot < 0 or c.max_backoffs < 0 or c.contention_window < 1:
        bad("frame_airtime", "channel timing parameters out of range")
    if c.mobility_dt <= 0 or c.warmup < 0 or c.timeout < 0:
        bad("mobility_dt", "timing parameters out of range")
    if c.message_length < 1:
        bad("message_length", "must be >= 1")
    if not 0 <= c.seed < 1 << 64:
        bad("seed", "must fit in an unsigned 64-bit integer")


def _parse_value(field: dataclasses.Field, text: str):
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    if "None" in kind and text.lower() == "none":
        return None
    if kind.startswith("bool"):
        lowered = text.lower()
        if lowered in ("true", "yes", "on", "1"):
            return True
        if lowered in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind.startswith("int"):
        return int(text, 0)
    if kind.startswith("float"):
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(f"not a finite number: {text!r}")
        return value
    return text


_FIELDS = {f.name: f for f in fields(ScenarioConfig)}


def parse_assignment(key: str, value: str):
    if key not in _FIELDS:
        raise ConfigurationError(f"unknown key {key!r}")
    try:
        return _parse_value(_FIELDS[key], value)
    except ValueError as exc:
        raise ConfigurationError(f"malformed value for {key}: {exc}") from None


def load_scenario(text: str) -> ScenarioConfig:
    values, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError("expected 'key = value'", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            values[key] = parse_assignment(key, value)
        except ConfigurationError as exc:
            raise ConfigurationError(str(exc), lineno) from None
        where[key] = lineno
    try:
        return ScenarioConfig(**values)
    except ConfigurationError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigurationError(str(exc), where.get(key)) from None


def serialize_scenario(config: ScenarioConfig) -> str:
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TrialMetrics:
    delivered: bool
    attacker_oracle_success: bool
    attacker_blind_success: bool
    frames_sent: int
    collisions: int
    backoff_exhausted: int
    bytes_overhead_ratio: float
    path_cost_selected: float


def sub_seed(seed: int, trial: int) -> int:
    return mix(seed, trial)


def _generate_topology(config: ScenarioConfig, rng: random.Random) -> Topology:
    prob = DEFAULT_COMPROMISE_PROB if config.compromise_prob is None else config.compromise_prob
    nodes = [
        NodeState(i, rng.uniform(0, config.arena_width), rng.uniform(0, config.arena_height),
                  speed=rng.uniform(config.speed_min, config.speed_max), radio_range=config.radio_range,
                  compromise_prob=prob)
        for i in range(config.nodes)
    ]
    return Topology(nodes, config.arena_width, config.arena_height)


def _base_topology(config: ScenarioConfig, base_dir: str | None) -> Topology | None:
    if config.topology is None:
        return None
    path = config.topology
    if base_dir and not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    try:
        with open(path, encoding="utf-8") as fh:
            topo = load_topology(fh.read())
    except OSError as exc:
        raise ConfigurationError(f"topology: cannot read {path}: {exc.strerror}") from None
    if config.compromise_prob is not None:
        for node in topo.nodes.values():
            node.compromise_prob = config.compromise_prob
    return topo


def choose_plan(config: ScenarioConfig, topology: Topology, path_count: int) -> RedundancyPlan:
    k, r = config.k, config.r
    if config.redundancy == "auto":
        return redundancy_decision(average_mobility(topology), path_count, config.redundancy_config)
    if config.redundancy == "none":
        return RedundancyPlan(k, k, 0)
    if config.redundancy == "shares":
        return RedundancyPlan(k, k + r, 0)
    return RedundancyPlan(k, k + r, min(1, path_count - 1))


def run_trial(config: ScenarioConfig, trial: int, base: Topology | None = None) -> TrialMetrics:
    seed = sub_seed(config.seed, trial)
    streams = {s: random.Random(mix(seed, s)) for s in range(1, 6)}
    topo = base.copy() if base is not None else _generate_topology(config, streams[_STREAM_PLACEMENT])
    src = config.source
    dst = config.destination if config.destination >= 0 else max(topo.nodes)
    if src not in topo.nodes or dst not in topo.nodes or src == dst:
        raise ConfigurationError("source/destination must be distinct nodes of the topology")

    mobility_rng = streams[_STREAM_MOBILITY]
    topo = assign_waypoints(topo, mobility_rng)
    draw = streams[_STREAM_COMPROMISE]
    for node_id, node in topo.nodes.items():
        # one draw per node in id order, so raising a probability only adds compromised nodes
        u = draw.random()
        node.compromised = node_id not in (src, dst) and u < node.compromise_prob
    moving = any(n.speed > 0 for n in topo.nodes.values())
    elapsed = 0.0
    while moving and elapsed + config.mobility_dt <= config.warmup:
        topo = step_mobility(topo, config.mobility_dt, mobility_rng)
        elapsed += config.mobility_dt

    try:
        paths = order_paths(discover_disjoint_paths(topo, src, dst, config.max_paths), topo)
    except UnreachableError:
        log.info("trial %d: destination unreachable", trial)
        return TrialMetrics(False, False, False, 0, 0, 0, 0.0, math.nan)
    plan = choose_plan(config, topo, len(paths))
    session_rng = streams[_STREAM_SESSION]
    key = SessionKey(session_rng.randbytes(16), session_rng.getrandbits(32))
    message = session_rng.randbytes(config.message_length)
    session = SessionConfig(key, plan.k, plan.n, paths[0], paths[1:1 + plan.duplicate_paths],
                            timeout=config.timeout or None)
    sim = Simulator(topo, config.channel, streams[_STREAM_CHANNEL],
                    mobility_dt=config.mobility_dt if moving else None, mobility_randomness=mobility_rng)
    outcome = run_session(sim, session, message, session_rng)

    capture = capture_frames(outcome.trace, topo)
    perm = derive_permutation(key, slot_count(plan.n))
    oracle = oracle_attack(capture, plan.n, plan.k, perm, key.session_id)
    # beyond the exhaustive bound the blind model is reported as a failed attack (lower bound)
    blind = plan.n <= BLIND_EXHAUSTIVE_LIMIT and blind_attack(capture, plan.n, plan.k, key.session_id)
    return TrialMetrics(
        delivered=outcome.delivered and outcome.message == message,
        attacker_oracle_success=oracle,
        attacker_blind_success=blind,
        frames_sent=outcome.frames_sent,
        collisions=outcome.collisions,
        backoff_exhausted=outcome.backoff_exhausted,
        bytes_overhead_ratio=outcome.frame_bytes / len(message),
        path_cost_selected=path_security_cost(paths[0], topo),
    )


def run_trials(config: ScenarioConfig, base_dir: str | None = None,
               trial_indices: Iterable[int] | None = None) -> list[TrialMetrics]:
    base = _base_topology(config, base_dir)
    indices = range(config.trials) if trial_indices is None else trial_indices
    return [run_trial(config, t, base) for t in indices]


def write_csv(metrics: Sequence[TrialMetrics], destination: str | os.PathLike | IO[str]) -> None:
    def emit(fh):
        fh.write(CSV_HEADER + "\n")
        for t, m in enumerate(metrics):
            fh.write(f"{t},{int(m.delivered)},{int(m.attacker_oracle_success)},{int(m.attacker_blind_success)},"
                     f"{m.frames_sent},{m.collisions},{m.backoff_exhausted},"
                     f"{m.bytes_overhead_ratio:.6f},{m.path_cost_selected:.6f}\n")

    if hasattr(destination, "write"):
        emit(destination)
        return
    with open(destination, "w", encoding="utf-8", newline="\n") as fh:
        emit(fh)


def csv_text(metrics: Sequence[TrialMetrics]) -> str:
    buf = io.StringIO()
    write_csv(metrics, buf)
    return buf.getvalue()


def summarize(metrics: Sequence[TrialMetrics]) -> dict[str, float]:
    if not metrics:
        raise ParameterError("nothing to summarize")
    count = len(metrics)
    return {
        "trials": count,
        "delivery_ratio": sum(m.delivered for m in metrics) / count,
        "oracle_success_rate": sum(m.attacker_oracle_success for m in metrics) / count,
        "blind_success_rate": sum(m.attacker_blind_success for m in metrics) / count,
        "mean_collisions": sum(m.collisions for m in metrics) / count,
        "mean_overhead_ratio": sum(m.bytes_overhead_ratio for m in metrics) / count,
    }
