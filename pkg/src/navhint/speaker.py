"""Templated instruction generation for routes, plus the grounding checker.

The generator stands in for a learned speaker: it emits one clause per route
step and a terminal stop clause, recording exact phrase spans, clause-to-step
alignment, and clean gold labels. Controlled corruption of its output lives in
the perturb module and is re-exported here.
"""

from __future__ import annotations

import random

from . import envmodel, lexicon
from .envmodel import Environment, Route
from .instructions import (
    AnnotatedInstruction,
    MAX_TOKENS,
    PhraseSpan,
    annotate,
    extract_phrases,
)
from .perturb import CorruptionRates, PAPER_CALIBRATED_RATES, corrupt_instruction, restore_original

__all__ = [
    "CorruptionRates",
    "PAPER_CALIBRATED_RATES",
    "corrupt_instruction",
    "describe_route",
    "extract_phrases",
    "grounding_violations",
    "is_grounded_span",
    "position_observation",
    "restore_original",
    "valid_direction_phrases",
]


def n_positions(route: Route) -> int:
    """Route positions 0..L: position t < L observes step t, position L is the arrival."""
    return len(route.steps) + 1


def position_observation(env: Environment, route: Route, position: int) -> envmodel.Observation:
    if position < len(route.steps):
        return route.steps[position].observation
    return envmodel.arrival_observation(env, route)


def position_action(route: Route, position: int) -> envmodel.Action | None:
    if position < len(route.steps):
        return route.steps[position].action
    return None


def valid_direction_phrases(env: Environment, route: Route, position: int) -> frozenset[str]:
    """Direction phrases a truthful speaker could emit for this position."""
    action = position_action(route, position)
    if action is None:
        return frozenset()
    phrases = {lexicon.action_phrase(action.direction_label)}
    here = position_observation(env, route, position).room_label
    there = env.node(action.target).room_label
    if there != here:
        phrases.add("out of")
    else:
        phrases.add("through")
    if position_observation(env, route, position).visible:
        phrases.add("past")
    return frozenset(phrases)


def is_grounded_span(env: Environment, route: Route, ann: AnnotatedInstruction, span: PhraseSpan) -> bool:
    """True if the span is consistent with the observation/action at its aligned position."""
    position = ann.span_position(span, n_positions(route))
    if position is None:
        return False
    text = span.text(ann.tokens)
    if span.kind == lexicon.ROOM_KIND:
        return text == position_observation(env, route, position).room_label
    if span.kind == lexicon.OBJECT_KIND:
        return text in {name for name, _ in position_observation(env, route, position).visible}
    return text in valid_direction_phrases(env, route, position)


def grounding_violations(env: Environment, route: Route, ann: AnnotatedInstruction) -> list[PhraseSpan]:
    """Spans that fail the grounding check; empty for truthful speaker output."""
    return [span for span in ann.phrase_spans if not is_grounded_span(env, route, ann, span)]


def _direction_tokens(direction_label: str) -> tuple[list[str], int]:
    """Tokens realizing an action, and the offset of the direction span within them."""
    phrase = lexicon.action_phrase(direction_label)
    if direction_label in (envmodel.GO_UP, envmodel.GO_DOWN):
        return ["go", phrase], 1
    return phrase.split(), 0


def describe_route(env: Environment, route: Route, seed: int) -> AnnotatedInstruction:
    """Generate a grounded instruction: one clause per step plus a stop clause."""
    rng = random.Random(seed)
    length = len(route.steps)
    clauses: list[list[str]] = []
    clause_spans: list[list[tuple[int, int, str]]] = []  # offsets within the clause

    for t, step in enumerate(route.steps):
        d_tokens, d_off = _direction_tokens(step.action.direction_label)
        d_phrase = lexicon.action_phrase(step.action.direction_label)
        here = step.observation.room_label
        there = env.node(step.action.target).room_label
        objects = [name for name, _ in step.observation.visible]

        options = ["bare"]
        if objects:
            options += ["past_then_turn", "turn_then_past"]
        if there != here:
            options.append("leave_room")
        else:
            options.append("cross_room")
        choice = rng.choice(options)

        if choice == "past_then_turn":
            obj = rng.choice(objects)
            tokens = ["walk", "past", "the", *obj.split(), "and", *d_tokens]
            spans = [
                (1, 1, lexicon.DIRECTION_KIND),
                (3, 3 + len(obj.split()) - 1, lexicon.OBJECT_KIND),
                (4 + len(obj.split()) + d_off, 3 + len(obj.split()) + len(d_tokens), lexicon.DIRECTION_KIND),
            ]
        elif choice == "turn_then_past":
            obj = rng.choice(objects)
            tokens = [*d_tokens, "and", "walk", "past", "the", *obj.split()]
            spans = [
                (d_off, len(d_tokens) - 1, lexicon.DIRECTION_KIND),
                (len(d_tokens) + 2, len(d_tokens) + 2, lexicon.DIRECTION_KIND),
                (len(d_tokens) + 4, len(d_tokens) + 3 + len(obj.split()), lexicon.OBJECT_KIND),
            ]
        elif choice == "leave_room":
            tokens = ["walk", "out", "of", "the", *here.split(), "and", *d_tokens]
            spans = [
                (1, 2, lexicon.DIRECTION_KIND),
                (4, 3 + len(here.split()), lexicon.ROOM_KIND),
                (5 + len(here.split()) + d_off, 4 + len(here.split()) + len(d_tokens), lexicon.DIRECTION_KIND),
            ]
        elif choice == "cross_room":
            tokens = ["walk", "through", "the", *here.split(), "and", *d_tokens]
            spans = [
                (1, 1, lexicon.DIRECTION_KIND),
                (3, 2 + len(here.split()), lexicon.ROOM_KIND),
                (4 + len(here.split()) + d_off, 3 + len(here.split()) + len(d_tokens), lexicon.DIRECTION_KIND),
            ]
        else:
            tokens = list(d_tokens)
            spans = [(d_off, len(d_tokens) - 1, lexicon.DIRECTION_KIND)]
        clauses.append(tokens)
        clause_spans.append(spans)

    goal_obs = envmodel.arrival_observation(env, route)
    goal_objects = [name for name, _ in goal_obs.visible]
    if goal_objects and rng.random() < 0.5:
        obj = rng.choice(goal_objects)
        clauses.append(["stop", "near", "the", *obj.split()])
        clause_spans.append([(3, 2 + len(obj.split()), lexicon.OBJECT_KIND)])
    else:
        room = goal_obs.room_label
        clauses.append(["stop", "in", "the", *room.split()])
        clause_spans.append([(3, 2 + len(room.split()), lexicon.ROOM_KIND)])

    # Trim to the token cap: fall back to bare direction clauses from the left.
    def total_len(parts: list[list[str]]) -> int:
        return sum(len(c) + 1 for c in parts)  # +1 per delimiter

    t = 0
    while total_len(clauses) > MAX_TOKENS and t < length:
        d_tokens, d_off = _direction_tokens(route.steps[t].action.direction_label)
        clauses[t] = list(d_tokens)
        clause_spans[t] = [(d_off, len(d_tokens) - 1, lexicon.DIRECTION_KIND)]
        t += 1

    tokens: list[str] = []
    spans: list[PhraseSpan] = []
    for c, (clause, offsets) in enumerate(zip(clauses, clause_spans)):
        base = len(tokens)
        tokens.extend(clause)
        for i, j, kind in offsets:
            spans.append(PhraseSpan(base + i, base + j, kind))
        terminal = c == len(clauses) - 1
        tokens.append("." if terminal or rng.random() >= 0.25 else ",")

    alignment: dict[int, int | None] = {c: c for c in range(length + 1)}
    ann = annotate(tuple(tokens), phrase_spans=tuple(spans), alignment=alignment)
    ann.validate()
    if extract_phrases(ann.tokens) != ann.phrase_spans:
        raise AssertionError("speaker emitted spans that do not survive lexicon extraction")
    return ann
