import itertools
import math
import random
from dataclasses import replace

import pytest

from sdup.adversary import (
    AttackerModel,
    CaptureLog,
    blind_attack,
    capture_frames,
    interception_probability,
    oracle_attack,
    simulate_interception,
    success_counts,
)
from sdup.errors import EnumerationLimitError, ModelLimitError, ParameterError
from sdup.frame_codec import SessionKey, derive_permutation, encode_frames, recoverable_indices, slot_count
from sdup.gf_sharing import split
from sdup.net_sim import ChannelParams, NodeState, Simulator, Topology
from sdup.secroute import RedundancyPlan, discover_disjoint_paths, path_security_cost, select_path
from sdup.session import SessionConfig, run_session

from conftest import fixture_topology

ORACLE, BLIND = AttackerModel.ORACLE, AttackerModel.BLIND
KEY = SessionKey(bytes(range(16, 32)), 77)


def session_frames(n, k, seed=0):
    frames = encode_frames(split(random.Random(seed).randbytes(12), k, n, random.Random(seed)), KEY)
    return frames, derive_permutation(KEY, slot_count(n))


def log_of(frames, perm, slots):
    log = CaptureLog()
    by_pos = {f.wire_pos: f for f in frames}
    for s in slots:
        log.add(9, by_pos[perm[s]])
    return log


def compromise(topo, *ids):
    topo = topo.copy()
    for i in ids:
        topo.nodes[i] = replace(topo.nodes[i], compromised=True)
    return topo


def session_trace(topo, path, n=4, k=3, dups=()):
    sim = Simulator(topo, ChannelParams(), random.Random(1))
    out = run_session(sim, SessionConfig(KEY, k, n, path, dups), b"secret stuff", random.Random(1))
    return out.trace


def test_no_compromised_nodes_capture_nothing(diamond):
    assert len(capture_frames(session_trace(diamond, (0, 1, 3)), diamond)) == 0


def test_relay_on_only_path_sees_everything(diamond):
    topo = compromise(diamond, 1)
    log = capture_frames(session_trace(topo, (0, 1, 3)), topo)
    assert set(log.by_node) == {1}
    assert sorted(log.frames()) == list(range(5))


def test_off_path_neighbour_overhears_the_source(diamond):
    topo = compromise(diamond, 2)
    assert topo.hears(2, 0) and not topo.hears(2, 1)
    log = capture_frames(session_trace(topo, (0, 1, 3)), topo)
    assert sorted(log.frames()) == list(range(5))


def test_out_of_range_node_captures_nothing():
    topo = compromise(fixture_topology("line"), 3)
    assert len(capture_frames(session_trace(topo, (0, 1, 2)), topo)) == 0


def test_bystander_hears_exactly_one_hop():
    topo = compromise(fixture_topology("bystander"), 4)
    trace = session_trace(topo, (0, 1, 3))
    log = capture_frames(trace, topo)
    # geometric check: 4 hears relay 1 but not the source
    assert topo.hears(4, 1) and not topo.hears(4, 0)
    relayed = {r.frame.frame.wire_pos for r in trace if r.kind == "tx_end" and r.node == 1 and 4 in r.nodes}
    assert set(log.frames()) == relayed == set(range(5))
    assert set(log.by_node) == {4}


def test_oracle_examples():
    frames, perm = session_frames(4, 3)
    assert oracle_attack(log_of(frames, perm, range(5)), 4, 3, perm)
    assert not oracle_attack(log_of(frames, perm, range(1, 5)), 4, 3, perm)
    assert not oracle_attack(log_of(frames, perm, [0, 1]), 4, 3, perm)
    assert oracle_attack(log_of(frames, perm, [0, 1, 2]), 4, 3, perm)
    assert not oracle_attack(log_of(frames, perm, [0, 1, 2]), 4, 3, perm, session_id=KEY.session_id + 1)


def test_blind_examples():
    frames, perm = session_frames(4, 3)
    assert not blind_attack(CaptureLog(), 4, 3)
    # all frames but the ring order is ambiguous
    assert not blind_attack(log_of(frames, perm, range(5)), 4, 3)
    one, one_perm = session_frames(1, 1)
    assert blind_attack(log_of(one, one_perm, [0]), 1, 1)


def test_blind_full_capture_n2_matches_brute_force():
    frames, perm = session_frames(2, 2)
    bodies = [f.body for f in frames]
    outcomes = set()
    for order in itertools.permutations(bodies):
        anchor, f0, f1 = order
        if bytes(a ^ b for a, b in zip(f0, f1)) != bytes(len(f0)):
            continue
        e1 = bytes(a ^ b for a, b in zip(anchor, f0))
        outcomes.add(((0, anchor), (1, e1)))
    assert blind_attack(log_of(frames, perm, range(3)), 2, 2) == (len(outcomes) == 1)


def test_blind_model_limit():
    frames, perm = session_frames(7, 3)
    with pytest.raises(ModelLimitError):
        blind_attack(log_of(frames, perm, [0]), 7, 3)


@pytest.mark.parametrize("n", range(1, 6))
def test_dominance_and_monotonicity_over_all_capture_subsets(n):
    m = slot_count(n)
    for k in range(1, n + 1):
        frames, perm = session_frames(n, k, seed=n * 10 + k)
        oracle, blind = {}, {}
        for size in range(m + 1):
            for subset in itertools.combinations(range(m), size):
                log = log_of(frames, perm, subset)
                oracle[subset] = oracle_attack(log, n, k, perm)
                blind[subset] = blind_attack(log, n, k)
                assert oracle[subset] == (len(recoverable_indices(subset, n)) >= k)
                assert blind[subset] <= oracle[subset]
        for subset in oracle:
            for extra in set(range(m)) - set(subset):
                bigger = tuple(sorted(subset + (extra,)))
                assert oracle[bigger] >= oracle[subset]
                assert blind[bigger] >= blind[subset]


def test_analytic_trivial_values(diamond):
    plan = RedundancyPlan(3, 4, 1)
    assert interception_probability([(0, 1, 3), (0, 2, 3)], {1: 0, 2: 0}, plan) == 0.0
    for p in (0.0, 0.13, 0.5, 1.0):
        got = interception_probability([(0, 1, 3)], {1: p}, RedundancyPlan(3, 4, 0))
        assert math.isclose(got, p)
        assert math.isclose(interception_probability([(0, 1, 3)], {1: p}, RedundancyPlan(1, 1, 0)), p)


def test_analytic_diamond_closed_form():
    # duplicated onto both relays: any compromised relay sees everything
    got = interception_probability([(0, 1, 3), (0, 2, 3)], {1: 0.2, 2: 0.2}, RedundancyPlan(3, 4, 1))
    assert math.isclose(got, 1 - 0.8 * 0.8)


def test_analytic_matches_monte_carlo_on_diamond(diamond):
    probs = {1: 0.2, 2: 0.2}
    plan = RedundancyPlan(3, 4, 1)
    exact = interception_probability([(0, 1, 3), (0, 2, 3)], probs, plan, hop_loss=0.1, topology=diamond)
    mc = simulate_interception([(0, 1, 3), (0, 2, 3)], probs, plan, 100_000, random.Random(5),
                               hop_loss=0.1, topology=diamond)
    assert abs(exact - mc) <= 0.01


def test_hop_loss_closed_form_single_relay():
    # relay 1 must receive >= 3 of the 4-share plan's anchor plus enough ring frames
    p, loss = 0.5, 0.25
    q = 1 - loss
    counts = success_counts(4, 3, ORACLE)
    expected = p * sum(c * q**j * (1 - q) ** (5 - j) for j, c in enumerate(counts))
    got = interception_probability([(0, 1, 3)], {1: p}, RedundancyPlan(3, 4, 0), hop_loss=loss)
    assert math.isclose(got, expected)


def test_enumeration_limit():
    nodes = [NodeState(i, 10.0 * i, 0, radio_range=15, compromise_prob=0.1) for i in range(24)]
    topo = Topology(nodes, 300, 10)
    path = tuple(range(24))
    probs = {i: 0.1 for i in path}
    with pytest.raises(EnumerationLimitError):
        interception_probability([path], probs, RedundancyPlan(1, 1, 0), topology=topo)
    assert issubclass(EnumerationLimitError, ModelLimitError)
    with pytest.raises(ParameterError):
        interception_probability([path], probs, RedundancyPlan(1, 1, 1))


@pytest.mark.parametrize("name,src,dst", [("diamond", 0, 3), ("ladder", 0, 5), ("grid", 0, 8), ("bystander", 0, 3)])
def test_security_ordering(name, src, dst):
    topo = fixture_topology(name)
    probs = {i: n.compromise_prob for i, n in topo.nodes.items()}
    paths = discover_disjoint_paths(topo, src, dst)
    best = select_path(paths, topo)
    for plan in (RedundancyPlan(1, 1, 0), RedundancyPlan(3, 4, 0)):
        ours = interception_probability([best], probs, plan)
        for other in paths:
            assert ours <= interception_probability([other], probs, plan) + 1e-12
            assert math.isclose(interception_probability([other], probs, plan), path_security_cost(other, topo))


def test_blind_is_never_above_oracle_analytically(diamond):
    probs = {1: 0.4, 2: 0.4}
    for n, k in [(1, 1), (2, 1), (2, 2), (3, 2), (4, 3)]:
        plan = RedundancyPlan(k, n, 1)
        o = interception_probability([(0, 1, 3), (0, 2, 3)], probs, plan, ORACLE, 0.2, diamond)
        b = interception_probability([(0, 1, 3), (0, 2, 3)], probs, plan, BLIND, 0.2, diamond)
        assert b <= o + 1e-12
