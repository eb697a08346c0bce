"""Node-disjoint path discovery, security cost scoring and the redundancy rule."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ParameterError, RoutingError, UnreachableError
from .net_sim import Topology

Path = tuple[int, ...]


@dataclass(frozen=True)
class RedundancyConfig:
    k: int = 3
    r: int = 1
    theta: float = 1.0

    def __post_init__(self):
        if self.k < 1 or self.r < 0 or self.theta < 0:
            raise ParameterError("need k >= 1, r >= 0, theta >= 0")


@dataclass(frozen=True)
class RedundancyPlan:
    k: int
    n: int
    duplicate_paths: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ParameterError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.duplicate_paths < 0:
            raise ParameterError("duplicate_paths must be >= 0")


def _lexi_shortest(links: Mapping[int, frozenset[int]], src: int, dst: int,
                   banned: set[int], banned_edges: set[frozenset[int]]) -> Path | None:
    def usable(u: int, v: int) -> bool:
        return v not in banned and frozenset((u, v)) not in banned_edges

    # Distances to dst let us walk forward greedily by smallest id.
    dist = {dst: 0}
    frontier = deque([dst])
    while frontier:
        u = frontier.popleft()
        for v in links[u]:
            if v not in dist and usable(u, v):
                dist[v] = dist[u] + 1
                frontier.append(v)
    if src not in dist:
        return None
    path = [src]
    while path[-1] != dst:
        u = path[-1]
        path.append(min(v for v in links[u] if usable(u, v) and dist.get(v) == dist[u] - 1))
    return tuple(path)


def discover_disjoint_paths(topology: Topology, src: int, dst: int, max_paths: int = 4) -> list[Path]:
    """Greedy shortest-first node-disjoint paths.

    Each round takes the shortest path (lexicographically smallest id sequence
    among equals), then bans its intermediate nodes. A direct src-dst path
    bans that edge instead, since it has no intermediates to remove.
    """
    if src == dst:
        raise ParameterError("source and destination must differ")
    if src not in topology.nodes or dst not in topology.nodes:
        raise ParameterError("source or destination not in topology")
    if max_paths < 1:
        raise ParameterError("max_paths must be >= 1")
    banned: set[int] = set()
    banned_edges: set[frozenset[int]] = set()
    paths: list[Path] = []
    while len(paths) < max_paths:
        path = _lexi_shortest(topology.links, src, dst, banned, banned_edges)
        if path is None:
            break
        paths.append(path)
        if len(path) == 2:
            banned_edges.add(frozenset(path))
        banned.update(path[1:-1])
    if not paths:
        raise UnreachableError(f"no path from {src} to {dst}")
    return paths


def validate_path(path: Sequence[int], topology: Topology) -> None:
    if len(path) < 2 or len(set(path)) != len(path):
        raise RoutingError(f"invalid path {tuple(path)}")
    for u, v in zip(path, path[1:]):
        if not topology.linked(u, v):
            raise RoutingError(f"hop {u}-{v} is not a link")


def path_security_cost(path: Sequence[int], topology: Topology) -> float:
    """Probability that at least one intermediate relay is compromised."""
    survive = 1.0
    for node in path[1:-1]:
        survive *= 1.0 - topology.nodes[node].compromise_prob
    return 1.0 - survive


def _rank(path: Sequence[int], topology: Topology):
    return (path_security_cost(path, topology), len(path), tuple(path))


def select_path(path_set: Sequence[Sequence[int]], topology: Topology) -> Path:
    if not path_set:
        raise ParameterError("empty path set")
    return tuple(min(path_set, key=lambda p: _rank(p, topology)))


def order_paths(path_set: Sequence[Sequence[int]], topology: Topology) -> list[Path]:
    """All paths best-first under the same ordering select_path uses."""
    return [tuple(p) for p in sorted(path_set, key=lambda p: _rank(p, topology))]


def redundancy_decision(avg_mobility: float, path_count: int, config: RedundancyConfig) -> RedundancyPlan:
    if path_count < 1:
        raise ParameterError("path_count must be >= 1")
    if avg_mobility > config.theta and path_count >= 2:
        return RedundancyPlan(config.k, config.k + config.r, min(1, path_count - 1))
    return RedundancyPlan(config.k, config.k, 0)
