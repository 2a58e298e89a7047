"""User-facing artifacts: highlight selection with clause merging, correction
ranking via the two-case score, the one-stage variant, and suggestion application."""

from __future__ import annotations

from dataclasses import dataclass

from . import grounding, lexicon
from .envmodel import Environment
from .instructions import AnnotatedInstruction, PhraseSpan, shift_alignment
from .perturb import CandidateSet, DetectionExample, make_detection_example

DEFAULT_TOP_K = 3
HIGHLIGHT_CAP = 3


class StaleSpanError(ValueError):
    """The instruction tokens changed since the highlight was computed."""


@dataclass(frozen=True)
class Highlight:
    span: tuple[int, int]  # inclusive token range; a whole clause when merged
    confidence: float
    member_spans: tuple[PhraseSpan, ...]
    clause_level: bool = False

    @property
    def key(self) -> str:
        return f"{self.span[0]}-{self.span[1]}"


@dataclass(frozen=True)
class Suggestion:
    candidate: str  # phrase text or [REMOVE]
    score: float
    target: tuple[int, int] | None = None  # member span a replacement applies to


@dataclass(frozen=True)
class SuggestionList:
    for_highlight: tuple[int, int]
    items: tuple[Suggestion, ...]


def _sorted_suggestions(items: list[Suggestion], k: int | None) -> tuple[Suggestion, ...]:
    # Descending score; ties lexicographic by candidate with [REMOVE] last among equals.
    ordered = sorted(
        items, key=lambda s: (-s.score, s.candidate == lexicon.REMOVE_TOKEN, s.candidate)
    )
    return tuple(ordered if k is None else ordered[:k])


def detect_highlights(
    det_model: grounding.GroundingModel,
    env: Environment,
    route,
    ann: AnnotatedInstruction,
    cap: int = HIGHLIGHT_CAP,
) -> list[Highlight]:
    """Classify every span; merge a clause when all of its spans are positive; keep top `cap`."""
    verdicts = []
    for span in ann.phrase_spans:
        example = make_detection_example(env, route, ann, span, label=False)
        label, conf = grounding.predict(det_model, env, route, example)
        verdicts.append((span, label, conf))

    by_clause: dict[int, list[tuple[PhraseSpan, bool, float]]] = {}
    for span, label, conf in verdicts:
        by_clause.setdefault(ann.clause_of_span(span), []).append((span, label, conf))

    highlights = []
    clauses = ann.clauses()
    for clause_idx, members in sorted(by_clause.items()):
        positives = [(s, c) for s, label, c in members if label]
        if positives and len(positives) == len(members):
            start, end = clauses[clause_idx]
            highlights.append(
                Highlight(
                    span=(start, end - 1),
                    confidence=max(c for _, c in positives),
                    member_spans=tuple(s for s, _ in positives),
                    clause_level=True,
                )
            )
        else:
            for span, conf in positives:
                highlights.append(
                    Highlight(span=(span.i, span.j), confidence=conf, member_spans=(span,))
                )
    highlights.sort(key=lambda h: (-h.confidence, h.span[0]))
    return highlights[:cap]


def oracle_highlights(ann: AnnotatedInstruction, cap: int = HIGHLIGHT_CAP) -> list[Highlight]:
    """Highlights taken from gold labels, clause-merged like model highlights."""
    by_clause: dict[int, list[tuple[PhraseSpan, bool]]] = {}
    for span, gold in zip(ann.phrase_spans, ann.gold):
        by_clause.setdefault(ann.clause_of_span(span), []).append((span, gold.is_hallucination))

    highlights = []
    clauses = ann.clauses()
    for clause_idx, members in sorted(by_clause.items()):
        bad = [s for s, is_bad in members if is_bad]
        if not bad:
            continue
        if len(bad) == len(members):
            start, end = clauses[clause_idx]
            highlights.append(
                Highlight(span=(start, end - 1), confidence=1.0, member_spans=tuple(bad), clause_level=True)
            )
        else:
            highlights.extend(
                Highlight(span=(s.i, s.j), confidence=1.0, member_spans=(s,)) for s in bad
            )
    highlights.sort(key=lambda h: (-h.confidence, h.span[0]))
    return highlights[:cap]


def _substituted_example(
    env: Environment, x: DetectionExample, candidate: str
) -> DetectionExample:
    tokens = x.unmarked_tokens()
    cand_tokens = tuple(candidate.split())
    new_tokens = tokens[: x.i] + cand_tokens + tokens[x.j + 1 :]
    if not cand_tokens or any(t in (lexicon.BH_TOKEN, lexicon.EH_TOKEN) for t in cand_tokens):
        raise ValueError(f"candidate {candidate!r} does not tokenize")
    new_j = x.i + len(cand_tokens) - 1
    kind = lexicon.phrase_kind(candidate)
    marked = (
        new_tokens[: x.i]
        + (lexicon.BH_TOKEN,)
        + new_tokens[x.i : new_j + 1]
        + (lexicon.EH_TOKEN,)
        + new_tokens[new_j + 1 :]
    )
    return DetectionExample(
        env_id=x.env_id,
        route=x.route,
        tokens=marked,
        i=x.i,
        j=new_j,
        label=x.label,
        kind=kind if kind is not None else "removed",
        alignment=dict(x.alignment),
    )


def rank_candidates(
    det_model: grounding.GroundingModel,
    type_model: grounding.GroundingModel,
    env: Environment,
    x: DetectionExample,
    candidates: CandidateSet,
    k: int | None = DEFAULT_TOP_K,
) -> SuggestionList:
    """Two-case ranking: replacements score P_I(intrinsic | x) * P_H(hallucination | substituted),
    deletion scores 1 - P_I(intrinsic | x)."""
    p_intrinsic = grounding.confidence(type_model, grounding.featurize(env, x.route, x))
    items = []
    for candidate in candidates.candidates:
        if candidate == lexicon.REMOVE_TOKEN:
            items.append(Suggestion(candidate, 1.0 - p_intrinsic, target=(x.i, x.j)))
        else:
            substituted = _substituted_example(env, x, candidate)
            p_h = grounding.confidence(det_model, grounding.featurize(env, x.route, substituted))
            items.append(Suggestion(candidate, p_intrinsic * p_h, target=(x.i, x.j)))
    return SuggestionList(for_highlight=(x.i, x.j), items=_sorted_suggestions(items, k))


def rank_one_stage(
    joint_model: grounding.GroundingModel,
    env: Environment,
    x: DetectionExample,
    candidates: CandidateSet,
    k: int | None = DEFAULT_TOP_K,
) -> SuggestionList:
    """Single-model ranking: every candidate (deletion included, substituted textually)
    scores 1 - P(hallucination | substituted)."""
    items = []
    for candidate in candidates.candidates:
        substituted = _substituted_example(env, x, candidate)
        p_h = grounding.confidence(joint_model, grounding.featurize(env, x.route, substituted))
        items.append(Suggestion(candidate, 1.0 - p_h, target=(x.i, x.j)))
    return SuggestionList(for_highlight=(x.i, x.j), items=_sorted_suggestions(items, k))


def rank_for_highlight(
    det_model: grounding.GroundingModel,
    type_model: grounding.GroundingModel,
    env: Environment,
    route,
    ann: AnnotatedInstruction,
    highlight: Highlight,
    k: int | None = DEFAULT_TOP_K,
) -> SuggestionList:
    """Suggestions for a highlight; merged clauses pool per-member replacements and
    a single [REMOVE] scored by the most extrinsic-looking member."""
    from .perturb import generate_candidates

    if len(highlight.member_spans) == 1 and not highlight.clause_level:
        span = highlight.member_spans[0]
        x = make_detection_example(env, route, ann, span, label=False)
        ranked = rank_candidates(det_model, type_model, env, x, generate_candidates(env, ann, span), k)
        return SuggestionList(for_highlight=highlight.span, items=ranked.items)

    items: list[Suggestion] = []
    remove_score = 0.0
    for span in highlight.member_spans:
        x = make_detection_example(env, route, ann, span, label=False)
        ranked = rank_candidates(det_model, type_model, env, x, generate_candidates(env, ann, span), k=None)
        for item in ranked.items:
            if item.candidate == lexicon.REMOVE_TOKEN:
                remove_score = max(remove_score, item.score)
            else:
                items.append(item)
    items.append(Suggestion(lexicon.REMOVE_TOKEN, remove_score, target=None))
    return SuggestionList(for_highlight=highlight.span, items=_sorted_suggestions(items, k))


def _validate_highlight(ann: AnnotatedInstruction, highlight: Highlight) -> None:
    start, end = highlight.span
    if start < 0 or end >= len(ann.tokens) or start > end:
        raise StaleSpanError(f"highlight {highlight.span} out of bounds")
    current = set(ann.phrase_spans)
    for member in highlight.member_spans:
        if member not in current:
            raise StaleSpanError(f"span {member} no longer present; tokens changed")


def apply_suggestion(
    ann: AnnotatedInstruction, highlight: Highlight, suggestion: Suggestion
) -> AnnotatedInstruction:
    """Pure application: [REMOVE] deletes the span (whole clause if merged, repairing
    the clause delimiter); a replacement splices candidate tokens. Spans re-extract
    and gold labels carry across so oracle conditions survive user edits."""
    from .instructions import CLEAN, GoldLabel, INTRINSIC
    from .perturb import carry_gold

    _validate_highlight(ann, highlight)
    tokens = list(ann.tokens)
    alignment = dict(ann.alignment)

    if suggestion.candidate == lexicon.REMOVE_TOKEN:
        start, end = highlight.span
        if highlight.clause_level:
            clause_idx = _clause_index_of(ann, start)
            stop = end + 1
            if stop < len(tokens):
                stop += 1  # the clause delimiter goes with the clause
            del tokens[start:stop]
            alignment = shift_alignment(alignment, clause_idx, -1)
            old_end = stop - 1
        else:
            del tokens[start : end + 1]
            old_end = end
        return carry_gold(
            ann,
            tuple(tokens),
            edit_start=start,
            old_end=old_end,
            new_end=start - 1,
            edited_gold=[],
            alignment=alignment,
        )

    if suggestion.target is None:
        raise ValueError("replacement suggestion lacks a target span")
    start, end = suggestion.target
    if end >= len(ann.tokens):
        raise StaleSpanError("replacement target out of bounds")
    candidate_tokens = suggestion.candidate.split()
    if tuple(candidate_tokens) == ann.tokens[start : end + 1]:
        return ann  # keeping the original phrase is a no-op
    old_gold = CLEAN
    original_text = " ".join(ann.tokens[start : end + 1])
    for span, gold in zip(ann.phrase_spans, ann.gold):
        if (span.i, span.j) == (start, end):
            old_gold = gold
            break
    if old_gold.is_hallucination and suggestion.candidate == old_gold.gold_correction:
        new_gold = CLEAN
    elif old_gold.is_hallucination:
        new_gold = old_gold
    else:
        new_gold = GoldLabel(True, INTRINSIC, original_text)  # user broke a grounded phrase
    tokens[start : end + 1] = candidate_tokens
    return carry_gold(
        ann,
        tuple(tokens),
        edit_start=start,
        old_end=end,
        new_end=start + len(candidate_tokens) - 1,
        edited_gold=[new_gold],
        alignment=alignment,
    )


def _clause_index_of(ann: AnnotatedInstruction, token_index: int) -> int:
    for idx, (start, end) in enumerate(ann.clauses()):
        if start <= token_index < end:
            return idx
    raise StaleSpanError(f"token {token_index} not inside any clause")
