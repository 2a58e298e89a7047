from __future__ import annotations

import itertools
import math
import random

import pytest

from navhint import envmodel
from navhint.envmodel import (
    ConfigError,
    EnvConfig,
    EnvironmentTooSmall,
    UnknownNode,
    egocentric_direction,
    generate_environment,
    observation_at,
    path_distance,
    sample_route,
    turn_label,
)


def test_generation_is_deterministic():
    a = generate_environment(42)
    b = generate_environment(42)
    assert a == b


def test_node_count_respects_range():
    for seed in range(10):
        env = generate_environment(seed, EnvConfig(node_range=(8, 12)))
        assert 8 <= len(env.nodes) <= 12


def test_every_node_reachable_bfs_oracle():
    """Independent BFS over the raw edge list."""
    env = generate_environment(7)
    adjacency: dict[str, set[str]] = {n.id: set() for n in env.nodes}
    for e in env.edges:
        adjacency[e.from_node].add(e.to_node)
        adjacency[e.to_node].add(e.from_node)
    seen = {env.nodes[0].id}
    frontier = [env.nodes[0].id]
    while frontier:
        nxt = []
        for node in frontier:
            for other in adjacency[node]:
                if other not in seen:
                    seen.add(other)
                    nxt.append(other)
        frontier = nxt
    assert seen == {n.id for n in env.nodes}


def test_vocab_equals_placed_labels():
    env = generate_environment(13)
    assert env.room_vocab == {n.room_label for n in env.nodes}
    assert env.object_vocab == {o.name for n in env.nodes for o in n.objects}


def test_object_count_bounds():
    for seed in range(6):
        env = generate_environment(seed)
        for node in env.nodes:
            assert 0 <= len(node.objects) <= 4


def test_edge_lengths_match_euclidean():
    env = generate_environment(3)
    for edge in env.edges:
        a = env.node(edge.from_node).position
        b = env.node(edge.to_node).position
        assert edge.length_m == pytest.approx(math.dist(a, b), abs=1e-12)


def test_rejects_tiny_vocabularies():
    with pytest.raises(ConfigError):
        generate_environment(1, EnvConfig(rooms=("bedroom",)))
    with pytest.raises(ConfigError):
        generate_environment(1, EnvConfig(objects=("couch", "table")))
    with pytest.raises(ConfigError):
        generate_environment(1, EnvConfig(node_range=(9, 5)))


def test_quadrant_rule_cardinal_points():
    assert egocentric_direction(90.0, 90.0) == "ahead"
    assert egocentric_direction(180.0, 90.0) == "right"


def test_quadrant_rule_hand_table():
    """Enumerate all four quadrants plus their boundary angles."""
    heading = 30.0
    table = {
        0.0: "ahead",
        44.9: "ahead",
        45.0: "right",
        134.9: "right",
        135.0: "behind",
        224.9: "behind",
        225.0: "left",
        314.9: "left",
        315.0: "ahead",
        359.9: "ahead",
    }
    for delta, expected in table.items():
        bearing = (heading + delta) % 360.0
        assert egocentric_direction(bearing, heading) == expected, delta


def test_turn_label_follows_quadrants():
    assert turn_label(0.0, 0.0) == "go straight"
    assert turn_label(90.0, 0.0) == "turn right"
    assert turn_label(180.0, 0.0) == "turn around"
    assert turn_label(270.0, 0.0) == "turn left"


def test_observation_unknown_node():
    env = generate_environment(5)
    with pytest.raises(UnknownNode):
        observation_at(env, "missing", 0.0)


def test_observation_directions_match_quadrants():
    env = generate_environment(9)
    node = next(n for n in env.nodes if n.objects)
    obs = observation_at(env, node.id, 45.0)
    for (name, direction), obj in zip(obs.visible, node.objects):
        assert name == obj.name
        assert direction == egocentric_direction(obj.bearing, 45.0)


def test_route_length_one():
    env = generate_environment(21)
    route = sample_route(env, 4, (1, 1))
    assert len(route.steps) == 1


def test_route_determinism():
    env = generate_environment(21)
    assert sample_route(env, 9, (2, 5)) == sample_route(env, 9, (2, 5))


def test_route_revalidates_on_raw_edges():
    """Re-walk the sampled path on the raw edge list."""
    env = generate_environment(33)
    route = sample_route(env, 2, (5, 5))
    edge_set = set()
    for e in env.edges:
        edge_set.add((e.from_node, e.to_node))
        edge_set.add((e.to_node, e.from_node))
    nodes = route.node_ids()
    assert len(nodes) == 6
    assert len(set(nodes)) == len(nodes)  # simple path
    for a, b in zip(nodes, nodes[1:]):
        assert (a, b) in edge_set
    for t, step in enumerate(route.steps):
        assert step.node_id == nodes[t]
        assert step.action.target == nodes[t + 1]
        assert step.observation == observation_at(env, step.node_id, step.heading)


def test_route_rejects_bad_length_range():
    env = generate_environment(21)
    with pytest.raises(ConfigError):
        sample_route(env, 1, (0, 3))
    with pytest.raises(ConfigError):
        sample_route(env, 1, (2, 11))


def test_route_impossible_length():
    env = generate_environment(1, EnvConfig(node_range=(4, 4)))
    with pytest.raises(EnvironmentTooSmall):
        sample_route(env, 1, (9, 9))


def test_path_distance_identity_and_single_edge():
    env = generate_environment(11)
    assert path_distance(env, env.nodes[0].id, env.nodes[0].id) == 0.0
    edge = env.edges[0]
    direct = min(
        e.length_m for e in env.edges
        if {e.from_node, e.to_node} == {edge.from_node, edge.to_node}
    )
    assert path_distance(env, edge.from_node, edge.to_node) <= direct + 1e-12


def _brute_force_distance(env, a, b):
    best = math.inf
    ids = [n.id for n in env.nodes]
    adjacency = {nid: {} for nid in ids}
    for e in env.edges:
        adjacency[e.from_node][e.to_node] = e.length_m
        adjacency[e.to_node][e.from_node] = e.length_m

    def walk(node, cost, seen):
        nonlocal best
        if cost >= best:
            return
        if node == b:
            best = cost
            return
        for nxt, length in adjacency[node].items():
            if nxt not in seen:
                walk(nxt, cost + length, seen | {nxt})

    walk(a, 0.0, {a})
    return best


def test_path_distance_matches_exhaustive_enumeration():
    env = generate_environment(8, EnvConfig(node_range=(6, 6)))
    ids = [n.id for n in env.nodes]
    for a, b in itertools.combinations(ids, 2):
        assert path_distance(env, a, b) == pytest.approx(_brute_force_distance(env, a, b), abs=1e-9)


def test_path_distance_symmetry_and_triangle():
    env = generate_environment(17)
    rng = random.Random(0)
    ids = [n.id for n in env.nodes]
    for _ in range(25):
        a, b, c = rng.choice(ids), rng.choice(ids), rng.choice(ids)
        assert path_distance(env, a, b) == pytest.approx(path_distance(env, b, a), abs=1e-9)
        assert path_distance(env, a, c) <= path_distance(env, a, b) + path_distance(env, b, c) + 1e-9


def test_observation_invariant_to_unrelated_edges():
    env = generate_environment(19)
    node = env.nodes[0]
    before = observation_at(env, node.id, 120.0)
    extra = envmodel.Edge(env.nodes[-1].id, env.nodes[-2].id, 1.0)
    bigger = envmodel.Environment(
        id=env.id,
        nodes=env.nodes,
        edges=env.edges + (extra,),
        room_vocab=env.room_vocab,
        object_vocab=env.object_vocab,
    )
    assert observation_at(bigger, node.id, 120.0) == before
