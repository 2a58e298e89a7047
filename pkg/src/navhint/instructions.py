"""Annotated instruction representation: tokens, phrase spans, clause alignment, gold labels."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import lexicon

MAX_TOKENS = 60

INTRINSIC = "intrinsic"
EXTRINSIC = "extrinsic"
NO_TYPE = "none"

DELIMITERS = (",", ".")


@dataclass(frozen=True)
class PhraseSpan:
    i: int  # start token index
    j: int  # end token index, inclusive
    kind: str  # room | object | direction

    def tokens(self, all_tokens: tuple[str, ...]) -> tuple[str, ...]:
        return all_tokens[self.i : self.j + 1]

    def text(self, all_tokens: tuple[str, ...]) -> str:
        return " ".join(self.tokens(all_tokens))


@dataclass(frozen=True)
class GoldLabel:
    is_hallucination: bool
    h_type: str = NO_TYPE  # none iff is_hallucination is false
    gold_correction: str | None = None  # phrase text, lexicon.REMOVE_TOKEN, or None

    def __post_init__(self) -> None:
        if (self.h_type == NO_TYPE) == self.is_hallucination:
            raise ValueError(f"h_type {self.h_type!r} inconsistent with label {self.is_hallucination}")
        if self.h_type == EXTRINSIC and self.gold_correction != lexicon.REMOVE_TOKEN:
            raise ValueError("extrinsic hallucinations are corrected by removal")


CLEAN = GoldLabel(False)


def sentence_bounds(tokens: tuple[str, ...]) -> tuple[tuple[int, int], ...]:
    """Half-open (start, end) ranges; a sentence includes its terminal period."""
    bounds = []
    start = 0
    for idx, tok in enumerate(tokens):
        if tok == ".":
            bounds.append((start, idx + 1))
            start = idx + 1
    if start < len(tokens):
        bounds.append((start, len(tokens)))
    return tuple(bounds)


def clause_bounds(tokens: tuple[str, ...]) -> tuple[tuple[int, int], ...]:
    """Half-open (start, end) ranges of comma- or period-delimited runs, delimiter excluded."""
    bounds = []
    start = 0
    for idx, tok in enumerate(tokens):
        if tok in DELIMITERS:
            if idx > start:
                bounds.append((start, idx))
            start = idx + 1
    if start < len(tokens):
        bounds.append((start, len(tokens)))
    return tuple(bounds)


def clause_of_token(tokens: tuple[str, ...], index: int) -> int:
    for c, (start, end) in enumerate(clause_bounds(tokens)):
        if start <= index < end:
            return c
    raise IndexError(f"token {index} is a delimiter or out of range")


def proportional_alignment(n_clauses: int, n_positions: int) -> dict[int, int | None]:
    """Fallback clause->position mapping when generation metadata is absent."""
    if n_clauses <= 0:
        return {}
    return {
        c: min(n_positions - 1, (c * n_positions) // n_clauses) for c in range(n_clauses)
    }


@dataclass(frozen=True)
class AnnotatedInstruction:
    tokens: tuple[str, ...]
    phrase_spans: tuple[PhraseSpan, ...]
    alignment: dict[int, int | None] = field(default_factory=dict)  # clause -> route position
    gold: tuple[GoldLabel, ...] = ()
    sentence_bounds: tuple[tuple[int, int], ...] = ()

    def validate(self) -> None:
        if len(self.tokens) > MAX_TOKENS:
            raise ValueError(f"instruction has {len(self.tokens)} tokens, cap is {MAX_TOKENS}")
        if len(self.gold) != len(self.phrase_spans):
            raise ValueError("gold labels must parallel phrase spans")
        prev_end = -1
        for span in self.phrase_spans:
            if span.i > span.j or span.i <= prev_end or span.j >= len(self.tokens):
                raise ValueError(f"span {span} out of order or out of bounds")
            prev_end = span.j
        if self.sentence_bounds != sentence_bounds(self.tokens):
            raise ValueError("stale sentence bounds")

    def clauses(self) -> tuple[tuple[int, int], ...]:
        return clause_bounds(self.tokens)

    def clause_of_span(self, span: PhraseSpan) -> int:
        return clause_of_token(self.tokens, span.i)

    def span_position(self, span: PhraseSpan, n_positions: int) -> int | None:
        """Route position the span's clause describes; None marks an inserted clause."""
        clause = self.clause_of_span(span)
        if clause in self.alignment:
            pos = self.alignment[clause]
            return None if pos is None else min(pos, n_positions - 1)
        return proportional_alignment(len(self.clauses()), n_positions)[clause]

    def hallucinated_spans(self) -> list[tuple[PhraseSpan, GoldLabel]]:
        return [(s, g) for s, g in zip(self.phrase_spans, self.gold) if g.is_hallucination]

    def text(self) -> str:
        return " ".join(self.tokens)


def annotate(
    tokens: tuple[str, ...],
    phrase_spans: tuple[PhraseSpan, ...] | None = None,
    alignment: dict[int, int | None] | None = None,
    gold: tuple[GoldLabel, ...] | None = None,
) -> AnnotatedInstruction:
    """Build an instruction, extracting spans and defaulting gold labels to clean."""
    spans = extract_phrases(tokens) if phrase_spans is None else tuple(phrase_spans)
    if gold is None:
        gold = tuple(CLEAN for _ in spans)
    return AnnotatedInstruction(
        tokens=tuple(tokens),
        phrase_spans=spans,
        alignment=dict(alignment or {}),
        gold=gold,
        sentence_bounds=sentence_bounds(tuple(tokens)),
    )


def extract_phrases(tokens: tuple[str, ...] | list[str]) -> tuple[PhraseSpan, ...]:
    """Maximal non-overlapping longest matches over the shipped lexicons.

    Ties break by earlier start, then longer span; the scan is idempotent on
    its own output since matched tokens are consumed left to right.
    """
    tokens = tuple(tokens)
    spans = []
    limit = lexicon.max_phrase_len()
    i = 0
    n = len(tokens)
    while i < n:
        matched = False
        for length in range(min(limit, n - i), 0, -1):
            kind = lexicon.lookup(tokens[i : i + length])
            if kind is not None:
                spans.append(PhraseSpan(i=i, j=i + length - 1, kind=kind))
                i += length
                matched = True
                break
        if not matched:
            i += 1
    return tuple(spans)


def shift_alignment(alignment: dict[int, int | None], at_clause: int, delta: int) -> dict[int, int | None]:
    """Renumber clause keys at/after at_clause by delta (insertion or deletion of clauses)."""
    shifted: dict[int, int | None] = {}
    for clause, pos in alignment.items():
        if delta < 0 and at_clause <= clause < at_clause - delta:
            continue  # deleted clause
        shifted[clause + delta if clause >= at_clause else clause] = pos
    return shifted


__all__ = [
    "AnnotatedInstruction",
    "CLEAN",
    "EXTRINSIC",
    "GoldLabel",
    "INTRINSIC",
    "MAX_TOKENS",
    "NO_TYPE",
    "PhraseSpan",
    "annotate",
    "clause_bounds",
    "clause_of_token",
    "extract_phrases",
    "proportional_alignment",
    "sentence_bounds",
    "shift_alignment",
]
