"""Shipped vocabularies: room names, object names, and the direction substitution table."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

ROOM_KIND = "room"
OBJECT_KIND = "object"
DIRECTION_KIND = "direction"

REMOVE_TOKEN = "[REMOVE]"
BH_TOKEN = "[BH]"
EH_TOKEN = "[EH]"


def _read_lines(name: str) -> list[str]:
    text = resources.files("navhint.data").joinpath(name).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


@lru_cache(maxsize=1)
def room_names() -> tuple[str, ...]:
    return tuple(_read_lines("rooms.txt"))


@lru_cache(maxsize=1)
def object_names() -> tuple[str, ...]:
    return tuple(_read_lines("objects.txt"))


@lru_cache(maxsize=1)
def direction_groups() -> tuple[tuple[str, ...], ...]:
    """Substitution groups: phrases within a group redirect a follower relative to each other."""
    groups = []
    for line in _read_lines("directions.tsv"):
        groups.append(tuple(p.strip() for p in line.split("\t") if p.strip()))
    return tuple(groups)


@lru_cache(maxsize=1)
def direction_phrases() -> tuple[str, ...]:
    phrases: list[str] = []
    for group in direction_groups():
        phrases.extend(group)
    return tuple(phrases)


class UnknownDirectionPhrase(ValueError):
    """The phrase has no row in the shipped substitution table."""


def substitution_row(phrase: str) -> tuple[str, ...]:
    """Alternatives for a direction phrase: its group minus the phrase itself."""
    for group in direction_groups():
        if phrase in group:
            return tuple(p for p in group if p != phrase)
    raise UnknownDirectionPhrase(f"no substitution row for {phrase!r}")


@lru_cache(maxsize=1)
def _phrase_index() -> dict[tuple[str, ...], str]:
    """Token-tuple -> kind for every lexicon phrase. Directions win collisions, then rooms."""
    index: dict[tuple[str, ...], str] = {}
    for name in object_names():
        index[tuple(name.split())] = OBJECT_KIND
    for name in room_names():
        index[tuple(name.split())] = ROOM_KIND
    for phrase in direction_phrases():
        index[tuple(phrase.split())] = DIRECTION_KIND
    return index


@lru_cache(maxsize=1)
def max_phrase_len() -> int:
    return max(len(toks) for toks in _phrase_index())


def phrase_kind(phrase: str) -> str | None:
    """Kind of a phrase string, or None if it is not in any lexicon."""
    return _phrase_index().get(tuple(phrase.split()))


def lookup(tokens: tuple[str, ...]) -> str | None:
    """Kind of an exact token tuple, or None."""
    return _phrase_index().get(tokens)


# Canonical phrase realizing each movement label in generated text.
ACTION_PHRASES = {
    "turn left": "turn left",
    "turn right": "turn right",
    "go straight": "go straight",
    "turn around": "turn around",
    "go up": "up",
    "go down": "down",
}


def action_phrase(direction_label: str) -> str:
    return ACTION_PHRASES[direction_label]
