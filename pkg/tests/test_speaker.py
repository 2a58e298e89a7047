from __future__ import annotations

import pytest

from navhint import envmodel, lexicon, speaker
from navhint.envmodel import (
    Action,
    Edge,
    Environment,
    Node,
    Observation,
    PlacedObject,
    Route,
    RouteStep,
)
from navhint.instructions import MAX_TOKENS, extract_phrases


def _two_node_env():
    nodes = (
        Node("a", (0.0, 0.0), "hallway", (PlacedObject("couch", 0.0),)),
        Node("b", (0.0, -2.0), "bedroom", ()),
    )
    return Environment(
        id="tiny",
        nodes=nodes,
        edges=(Edge("a", "b", 2.0),),
        room_vocab=frozenset({"hallway", "bedroom"}),
        object_vocab=frozenset({"couch"}),
    )


def _route_turn_right(env):
    # heading east (compass 90), target due south (bearing 180) => turn right
    obs = envmodel.observation_at(env, "a", 90.0)
    step = RouteStep(node_id="a", heading=90.0, observation=obs, action=Action("turn right", "b"))
    assert envmodel.movement_label(env, "a", "b", 90.0) == "turn right"
    return Route(env_id=env.id, start_node="a", start_heading=90.0, steps=(step,))


def test_fig_style_template_shape():
    """A 1-step route past a couch ending in a bedroom can realize the canonical shape."""
    env = _two_node_env()
    route = _route_turn_right(env)
    for seed in range(40):
        ann = speaker.describe_route(env, route, seed)
        if ann.tokens[:8] == ("walk", "past", "the", "couch", "and", "turn", "right", "."):
            assert ann.tokens[8:] == ("stop", "in", "the", "bedroom", ".")
            return
    pytest.fail("template shape never realized across 40 seeds")


def test_describe_is_deterministic(small_env, small_route):
    assert speaker.describe_route(small_env, small_route, 5) == speaker.describe_route(
        small_env, small_route, 5
    )


def _independent_grounding_check(env, route, ann):
    """Re-derive groundedness per span directly from the route structure."""
    positions = len(route.steps) + 1
    failures = []
    for span in ann.phrase_spans:
        clause = ann.clause_of_span(span)
        pos = ann.alignment.get(clause)
        text = span.text(ann.tokens)
        if pos is None:
            failures.append(span)
            continue
        pos = min(pos, positions - 1)
        if pos < len(route.steps):
            node = env.node(route.steps[pos].node_id)
            incoming = route.steps[pos].heading
        else:
            node = env.node(route.goal)
            incoming = envmodel.arrival_heading(env, route)
        obs = envmodel.observation_at(env, node.id, incoming)
        if span.kind == "room":
            if text != obs.room_label:
                failures.append(span)
        elif span.kind == "object":
            if text not in {n for n, _ in obs.visible}:
                failures.append(span)
        else:
            valid = set()
            if pos < len(route.steps):
                action = route.steps[pos].action
                valid.add(lexicon.action_phrase(action.direction_label))
                there = env.node(action.target).room_label
                valid.add("out of" if there != obs.room_label else "through")
                if obs.visible:
                    valid.add("past")
            if text not in valid:
                failures.append(span)
    return failures


def test_every_span_grounded_by_independent_checker():
    for seed in range(30):
        env = envmodel.generate_environment(200 + seed)
        route = envmodel.sample_route(env, seed, (1, 5))
        ann = speaker.describe_route(env, route, seed)
        assert _independent_grounding_check(env, route, ann) == []
        assert speaker.grounding_violations(env, route, ann) == []


def test_gold_labels_all_clean(small_env, small_route, small_instruction):
    assert all(not g.is_hallucination for g in small_instruction.gold)


def test_extraction_closure(small_instruction):
    assert extract_phrases(small_instruction.tokens) == small_instruction.phrase_spans


def test_token_cap_on_long_routes():
    env = envmodel.generate_environment(77, envmodel.EnvConfig(node_range=(14, 16)))
    for seed in range(10):
        route = envmodel.sample_route(env, seed, (9, 10))
        ann = speaker.describe_route(env, route, seed)
        assert len(ann.tokens) <= MAX_TOKENS
        assert speaker.grounding_violations(env, route, ann) == []


def test_alignment_one_clause_per_step(small_env, small_route, small_instruction):
    n = len(small_route.steps)
    assert small_instruction.alignment == {c: c for c in range(n + 1)}
    assert len(small_instruction.clauses()) == n + 1


def test_valid_direction_phrases_terminal_empty(small_env, small_route):
    assert speaker.valid_direction_phrases(small_env, small_route, len(small_route.steps)) == frozenset()
