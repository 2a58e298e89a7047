"""Synthetic hallucination creation, training-pair construction, and candidate generation."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from . import lexicon
from .envmodel import Environment, Route
from .instructions import (
    AnnotatedInstruction,
    CLEAN,
    EXTRINSIC,
    GoldLabel,
    INTRINSIC,
    MAX_TOKENS,
    PhraseSpan,
    annotate,
    clause_bounds,
    extract_phrases,
    sentence_bounds,
    shift_alignment,
)
from .seeding import derive_seed

DEFAULT_STRATEGY = "default"
SAME_ENV_SWAP = "same_env_swap"

REMOVED_KIND = "removed"  # span slot holding the literal [REMOVE] token


class PerturbationError(ValueError):
    """A perturbation cannot be applied to the given span."""


@dataclass(frozen=True)
class PerturbationRecord:
    kind: str  # room | object | direction | extrinsic
    start: int  # token index in the perturbed instruction
    original: tuple[str, ...]  # replaced tokens, or () for an insertion
    replacement: tuple[str, ...]  # inserted tokens
    fallback: bool = False  # object perturbation fell back to the environment vocab


@dataclass(frozen=True)
class PerturbResult:
    ann: AnnotatedInstruction
    record: PerturbationRecord


def carry_gold(
    ann: AnnotatedInstruction,
    new_tokens: tuple[str, ...],
    edit_start: int,
    old_end: int,
    new_end: int,
    edited_gold: list[GoldLabel],
    alignment: dict[int, int | None],
) -> AnnotatedInstruction:
    """Rebuild annotation after one contiguous token edit, carrying gold labels across."""
    delta = new_end - old_end
    new_spans = extract_phrases(new_tokens)
    gold_by_pos: dict[int, GoldLabel] = {}
    for span, gold in zip(ann.phrase_spans, ann.gold):
        if span.j < edit_start:
            gold_by_pos[span.i] = gold
        elif span.i > old_end:
            gold_by_pos[span.i + delta] = gold
    new_gold = []
    edited = list(edited_gold)
    for span in new_spans:
        if edit_start <= span.i <= new_end:
            if not edited:
                raise PerturbationError("edit produced unexpected spans; lexicon closure broken")
            new_gold.append(edited.pop(0))
        elif span.i in gold_by_pos:
            new_gold.append(gold_by_pos[span.i])
        else:
            raise PerturbationError("edit disturbed spans outside the edited region")
    if edited:
        raise PerturbationError("edited region lost a span; lexicon closure broken")
    return AnnotatedInstruction(
        tokens=new_tokens,
        phrase_spans=new_spans,
        alignment=alignment,
        gold=tuple(new_gold),
        sentence_bounds=sentence_bounds(new_tokens),
    )


def _replace_span(
    ann: AnnotatedInstruction, span: PhraseSpan, replacement: str, kind: str, fallback: bool = False
) -> PerturbResult:
    original = span.tokens(ann.tokens)
    repl_tokens = tuple(replacement.split())
    new_tokens = ann.tokens[: span.i] + repl_tokens + ann.tokens[span.j + 1 :]
    gold = GoldLabel(True, INTRINSIC, gold_correction=" ".join(original))
    new_ann = carry_gold(
        ann,
        new_tokens,
        edit_start=span.i,
        old_end=span.j,
        new_end=span.i + len(repl_tokens) - 1,
        edited_gold=[gold],
        alignment=dict(ann.alignment),
    )
    record = PerturbationRecord(kind, span.i, original, repl_tokens, fallback)
    return PerturbResult(new_ann, record)


def perturb_room(
    ann: AnnotatedInstruction, span: PhraseSpan, seed: int, pool: tuple[str, ...] | None = None
) -> PerturbResult:
    """Swap a room phrase for a different one from the pool (shipped list by default)."""
    if span.kind != lexicon.ROOM_KIND:
        raise PerturbationError(f"span kind {span.kind} is not a room")
    original = span.text(ann.tokens)
    pool = pool if pool is not None else lexicon.room_names()
    choices = sorted(set(pool) - {original})
    if not choices:
        raise PerturbationError("room list has fewer than 2 entries")
    replacement = random.Random(seed).choice(choices)
    return _replace_span(ann, span, replacement, lexicon.ROOM_KIND)


def perturb_object(
    ann: AnnotatedInstruction,
    span: PhraseSpan,
    seed: int,
    env: Environment | None = None,
    pool: tuple[str, ...] | None = None,
) -> PerturbResult:
    """Swap an object phrase for another object mentioned in the same instruction.

    Falls back to the environment (or shipped) object vocabulary when the
    instruction mentions fewer than two distinct objects; the record is flagged.
    """
    if span.kind != lexicon.OBJECT_KIND:
        raise PerturbationError(f"span kind {span.kind} is not an object")
    original = span.text(ann.tokens)
    in_instruction = sorted(
        {s.text(ann.tokens) for s in ann.phrase_spans if s.kind == lexicon.OBJECT_KIND}
        - {original}
    )
    rng = random.Random(seed)
    if in_instruction:
        return _replace_span(ann, span, rng.choice(in_instruction), lexicon.OBJECT_KIND)
    if pool is None:
        pool = tuple(sorted(env.object_vocab)) if env is not None else lexicon.object_names()
    choices = sorted(set(pool) - {original})
    if not choices:
        raise PerturbationError("no distractor objects available")
    return _replace_span(ann, span, rng.choice(choices), lexicon.OBJECT_KIND, fallback=True)


def perturb_direction(ann: AnnotatedInstruction, span: PhraseSpan, seed: int) -> PerturbResult:
    """Swap a direction phrase for a redirecting alternative from its table row."""
    if span.kind != lexicon.DIRECTION_KIND:
        raise PerturbationError(f"span kind {span.kind} is not a direction")
    row = lexicon.substitution_row(span.text(ann.tokens))
    replacement = random.Random(seed).choice(sorted(row))
    return _replace_span(ann, span, replacement, lexicon.DIRECTION_KIND)


def insert_extrinsic(
    ann: AnnotatedInstruction, donor_sentence: tuple[str, ...], seed: int
) -> PerturbResult:
    """Insert a donor sentence at a beginning-of-sentence location."""
    donor = tuple(donor_sentence)
    if not donor:
        raise PerturbationError("donor sentence is empty")
    if donor[-1] != ".":
        donor = donor + (".",)
    starts = [start for start, _ in ann.sentence_bounds]
    offset = random.Random(seed).choice(starts)
    new_tokens = ann.tokens[:offset] + donor + ann.tokens[offset:]

    insert_clause = sum(1 for start, _ in clause_bounds(ann.tokens) if start < offset)
    donor_clauses = len(clause_bounds(donor))
    alignment = shift_alignment(dict(ann.alignment), insert_clause, donor_clauses)
    for c in range(insert_clause, insert_clause + donor_clauses):
        alignment[c] = None

    donor_span_count = len(extract_phrases(donor))
    extrinsic_gold = [GoldLabel(True, EXTRINSIC, lexicon.REMOVE_TOKEN)] * donor_span_count
    new_ann = carry_gold(
        ann,
        new_tokens,
        edit_start=offset,
        old_end=offset - 1,  # zero-width edit site: nothing replaced
        new_end=offset + len(donor) - 1,
        edited_gold=extrinsic_gold,
        alignment=alignment,
    )
    record = PerturbationRecord("extrinsic", offset, (), donor)
    return PerturbResult(new_ann, record)


@dataclass(frozen=True)
class CorruptionRates:
    room: float = 0.0
    object: float = 0.0
    direction: float = 0.0
    extrinsic: float = 0.0
    max_hallucinations: int = 3
    cluster_boost: float = 0.0  # multiplier on per-kind rates for a second pass once corrupted

    def for_kind(self, kind: str) -> float:
        return {"room": self.room, "object": self.object, "direction": self.direction}[kind]

    def boosted(self, kind: str) -> float:
        return min(1.0, self.for_kind(kind) * self.cluster_boost)


# Calibrated so a 1,000-instruction corpus lands near the reported speaker error
# profile: ~67.5% of instructions corrupted, ~20.9% of object+direction phrases.
# The cluster boost makes hallucinations co-occur within an already-corrupted
# instruction, which raises the phrase-level rate without corrupting more
# instructions; it scales each kind's own rate, so the kind mix is stable.
PAPER_CALIBRATED_RATES = CorruptionRates(
    room=0.025, object=0.05, direction=0.20, extrinsic=0.06, cluster_boost=0.80
)


def corrupt_instruction(
    ann: AnnotatedInstruction,
    rates: CorruptionRates,
    seed: int,
    env: Environment | None = None,
    donor_sentences: list[tuple[str, ...]] | None = None,
    strategy: str = DEFAULT_STRATEGY,
    route: Route | None = None,
    ensure_one: bool = False,
) -> AnnotatedInstruction:
    """Apply seeded perturbations; gold labels record the true type and correction.

    The number of hallucinations per instruction is capped (default 3); a span
    survives with its pre-corruption phrase stored as the gold correction, and
    an inserted sentence's spans are labeled extrinsic with [REMOVE] as gold.
    """
    rng = random.Random(seed)
    insert = rng.random() < rates.extrinsic
    chosen = [span for span in ann.phrase_spans if rng.random() < rates.for_kind(span.kind)]
    if (chosen or insert) and rates.cluster_boost > 0.0:
        picked = {span.i for span in chosen}
        chosen += [
            span
            for span in ann.phrase_spans
            if span.i not in picked and rng.random() < rates.boosted(span.kind)
        ]
    if ensure_one and not chosen and not insert:
        if ann.phrase_spans and rng.random() < 0.85:
            chosen = [ann.phrase_spans[rng.randrange(len(ann.phrase_spans))]]
        else:
            insert = True
    allowed = rates.max_hallucinations - (1 if insert else 0)
    if len(chosen) > allowed:
        chosen = rng.sample(chosen, allowed) if allowed > 0 else []
    span_seeds = {span.i: rng.randrange(2**31) for span in chosen}
    donor_seed = rng.randrange(2**31)
    insert_seed = rng.randrange(2**31)

    current = ann
    for span in sorted(chosen, key=lambda s: s.i, reverse=True):
        child = span_seeds[span.i]
        if span.kind == lexicon.ROOM_KIND:
            pool = tuple(sorted(env.room_vocab)) if strategy == SAME_ENV_SWAP and env else None
            current = perturb_room(current, span, child, pool=pool).ann
        elif span.kind == lexicon.OBJECT_KIND:
            if strategy == SAME_ENV_SWAP and env is not None and route is not None:
                pool = _route_objects(env, route)
                current = _perturb_object_from_pool(current, span, child, pool)
            else:
                current = perturb_object(current, span, child, env=env).ann
        else:
            current = perturb_direction(current, span, child).ann

    if insert:
        pool = donor_sentences if donor_sentences else _own_sentences(ann)
        donor = pool[random.Random(donor_seed).randrange(len(pool))]
        if len(current.tokens) + len(donor) <= MAX_TOKENS:
            current = insert_extrinsic(current, donor, insert_seed).ann
    return current


def _own_sentences(ann: AnnotatedInstruction) -> list[tuple[str, ...]]:
    return [ann.tokens[start:end] for start, end in ann.sentence_bounds]


def _route_objects(env: Environment, route: Route) -> tuple[str, ...]:
    names = []
    for node_id in route.node_ids():
        names.extend(obj.name for obj in env.node(node_id).objects)
    return tuple(sorted(set(names))) or tuple(sorted(env.object_vocab))


def _perturb_object_from_pool(
    ann: AnnotatedInstruction, span: PhraseSpan, seed: int, pool: tuple[str, ...]
) -> AnnotatedInstruction:
    original = span.text(ann.tokens)
    choices = sorted(set(pool) - {original})
    if not choices:
        return perturb_object(ann, span, seed).ann
    replacement = random.Random(seed).choice(choices)
    return _replace_span(ann, span, replacement, lexicon.OBJECT_KIND).ann


def restore_original(ann: AnnotatedInstruction) -> tuple[str, ...]:
    """Invert recorded corruptions: drop inserted clauses, splice back gold phrases."""
    edits: list[tuple[int, int, tuple[str, ...]]] = []
    clauses = clause_bounds(ann.tokens)
    for c, (start, end) in enumerate(clauses):
        if ann.alignment.get(c, 0) is None:
            trailing = end + 1 if end < len(ann.tokens) else end  # clause delimiter
            edits.append((start, trailing, ()))
    for span, gold in zip(ann.phrase_spans, ann.gold):
        if gold.is_hallucination and gold.gold_correction != lexicon.REMOVE_TOKEN:
            edits.append((span.i, span.j + 1, tuple(gold.gold_correction.split())))
    tokens = list(ann.tokens)
    for start, end, repl in sorted(edits, key=lambda e: e[0], reverse=True):
        tokens[start:end] = repl
    return tuple(tokens)


@dataclass(frozen=True)
class DetectionExample:
    """One wrapped span on one route; the classification unit for both models."""

    env_id: str
    route: Route
    tokens: tuple[str, ...]  # instruction tokens including the [BH]/[EH] pair
    i: int  # wrapped span start in the unmarked token stream
    j: int  # wrapped span end, inclusive
    label: bool
    kind: str  # room | object | direction | removed
    alignment: dict[int, int | None] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.tokens.count(lexicon.BH_TOKEN) != 1 or self.tokens.count(lexicon.EH_TOKEN) != 1:
            raise ValueError("exactly one [BH]/[EH] marker pair is required")
        if self.tokens.index(lexicon.BH_TOKEN) >= self.tokens.index(lexicon.EH_TOKEN):
            raise ValueError("[BH] must precede [EH]")

    def unmarked_tokens(self) -> tuple[str, ...]:
        return tuple(t for t in self.tokens if t not in (lexicon.BH_TOKEN, lexicon.EH_TOKEN))

    def span_text(self) -> str:
        return " ".join(self.unmarked_tokens()[self.i : self.j + 1])


def make_detection_example(
    env: Environment,
    route: Route,
    ann: AnnotatedInstruction,
    span: PhraseSpan,
    label: bool,
    kind: str | None = None,
) -> DetectionExample:
    marked = (
        ann.tokens[: span.i]
        + (lexicon.BH_TOKEN,)
        + ann.tokens[span.i : span.j + 1]
        + (lexicon.EH_TOKEN,)
        + ann.tokens[span.j + 1 :]
    )
    return DetectionExample(
        env_id=env.id,
        route=route,
        tokens=marked,
        i=span.i,
        j=span.j,
        label=label,
        kind=kind if kind is not None else span.kind,
        alignment=dict(ann.alignment),
    )


@dataclass(frozen=True)
class PairedExample:
    positive: DetectionExample
    negative: DetectionExample

    def __post_init__(self) -> None:
        if self.positive.route != self.negative.route:
            raise ValueError("pair members must share a route")
        if not self.positive.label or self.negative.label:
            raise ValueError("positive must be labeled true, negative false")


@dataclass(frozen=True)
class CandidateSet:
    for_span: tuple[int, int, str]
    candidates: tuple[str, ...]
    gold: str | None = None  # recorded when known, for recall evaluation

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("candidate set is empty")
        if self.candidates.count(lexicon.REMOVE_TOKEN) != 1:
            raise ValueError("[REMOVE] must appear exactly once")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("duplicate candidates")


def generate_candidates(
    env: Environment, ann: AnnotatedInstruction, span: PhraseSpan, gold: str | None = None
) -> CandidateSet:
    """All plausible corrections for a span: vocabulary phrases (or the direction
    table row) minus the current phrase, in lexicographic order, [REMOVE] last."""
    original = span.text(ann.tokens)
    if span.kind == lexicon.DIRECTION_KIND:
        phrases = sorted(lexicon.substitution_row(original))
    else:
        phrases = sorted((env.room_vocab | env.object_vocab) - {original})
    return CandidateSet(
        for_span=(span.i, span.j, span.kind),
        candidates=tuple(phrases) + (lexicon.REMOVE_TOKEN,),
        gold=gold,
    )


@dataclass(frozen=True)
class CorpusRecord:
    route_id: str
    env_id: str
    route: Route
    instruction: AnnotatedInstruction


_PAIR_RATES = CorruptionRates(room=0.10, object=0.12, direction=0.30, extrinsic=0.25)


def _corrupt_for_pair(
    record: CorpusRecord,
    envs: dict[str, Environment],
    seed: int,
    strategy: str,
    donor_sentences: list[tuple[str, ...]] | None,
) -> AnnotatedInstruction:
    return corrupt_instruction(
        record.instruction,
        _PAIR_RATES,
        seed,
        env=envs[record.env_id],
        donor_sentences=donor_sentences,
        strategy=strategy,
        route=record.route,
        ensure_one=True,
    )


def _donor_pool(corpus: list[CorpusRecord]) -> list[tuple[str, ...]]:
    pool = []
    for record in corpus:
        pool.extend(_own_sentences(record.instruction))
    return pool


def build_detection_pairs(
    corpus: list[CorpusRecord],
    envs: dict[str, Environment],
    seed: int,
    strategy: str = DEFAULT_STRATEGY,
    n_pairs: int | None = None,
) -> list[PairedExample]:
    """Positive wraps a true hallucination; negative wraps a clean span of the same route."""
    if not corpus:
        raise ValueError("corpus is empty")
    donors = _donor_pool(corpus)
    n_pairs = n_pairs if n_pairs is not None else len(corpus)
    pairs = []
    attempt = 0
    while len(pairs) < n_pairs:
        record = corpus[attempt % len(corpus)]
        child = derive_seed(seed, "det", strategy, attempt)
        attempt += 1
        corrupted = _corrupt_for_pair(record, envs, child, strategy, donors)
        bad = corrupted.hallucinated_spans()
        clean = [s for s, g in zip(corrupted.phrase_spans, corrupted.gold) if not g.is_hallucination]
        env = envs[record.env_id]
        rng = random.Random(derive_seed(child, "choose"))
        if not bad:
            continue
        pos_span = bad[rng.randrange(len(bad))][0]
        positive = make_detection_example(env, record.route, corrupted, pos_span, True)
        if clean:
            neg_span = clean[rng.randrange(len(clean))]
            negative = make_detection_example(env, record.route, corrupted, neg_span, False)
        else:
            spans = record.instruction.phrase_spans
            neg_span = spans[rng.randrange(len(spans))]
            negative = make_detection_example(env, record.route, record.instruction, neg_span, False)
        pairs.append(PairedExample(positive, negative))
    return pairs


def build_type_pairs(
    corpus: list[CorpusRecord],
    envs: dict[str, Environment],
    seed: int,
    n_pairs: int | None = None,
) -> list[PairedExample]:
    """Positive wraps an intrinsic hallucination, negative an extrinsic one; same route."""
    if not corpus:
        raise ValueError("corpus is empty")
    donors = _donor_pool(corpus)
    n_pairs = n_pairs if n_pairs is not None else len(corpus)
    pairs = []
    attempt = 0
    while len(pairs) < n_pairs:
        record = corpus[attempt % len(corpus)]
        child = derive_seed(seed, "type", attempt)
        attempt += 1
        rng = random.Random(child)
        ann = record.instruction
        if not ann.phrase_spans:
            continue
        span = ann.phrase_spans[rng.randrange(len(ann.phrase_spans))]
        rep_seed, ins_seed = rng.randrange(2**31), rng.randrange(2**31)
        env = envs[record.env_id]
        if span.kind == lexicon.ROOM_KIND:
            corrupted = perturb_room(ann, span, rep_seed).ann
        elif span.kind == lexicon.OBJECT_KIND:
            corrupted = perturb_object(ann, span, rep_seed, env=env).ann
        else:
            corrupted = perturb_direction(ann, span, rep_seed).ann
        donor = donors[rng.randrange(len(donors))]
        if len(corrupted.tokens) + len(donor) > MAX_TOKENS:
            continue
        corrupted = insert_extrinsic(corrupted, donor, ins_seed).ann
        intrinsic = [
            s for s, g in zip(corrupted.phrase_spans, corrupted.gold)
            if g.is_hallucination and g.h_type == INTRINSIC
        ]
        extrinsic = [
            s for s, g in zip(corrupted.phrase_spans, corrupted.gold)
            if g.is_hallucination and g.h_type == EXTRINSIC
        ]
        if not intrinsic or not extrinsic:
            continue
        pos_span = intrinsic[rng.randrange(len(intrinsic))]
        neg_span = extrinsic[rng.randrange(len(extrinsic))]
        positive = make_detection_example(env, record.route, corrupted, pos_span, True)
        negative = make_detection_example(env, record.route, corrupted, neg_span, False)
        pairs.append(PairedExample(positive, negative))
    return pairs


def build_one_stage_pairs(
    corpus: list[CorpusRecord],
    envs: dict[str, Environment],
    seed: int,
    n_pairs: int | None = None,
) -> list[PairedExample]:
    """Detection pairs plus removal pairs: [REMOVE] in a needed slot is positive (bad),
    [REMOVE] over an extrinsic insertion is negative (good)."""
    if not corpus:
        raise ValueError("corpus is empty")
    donors = _donor_pool(corpus)
    n_pairs = n_pairs if n_pairs is not None else len(corpus)
    base = build_detection_pairs(corpus, envs, derive_seed(seed, "base"), n_pairs=(n_pairs + 1) // 2)
    pairs = list(base)
    attempt = 0
    while len(pairs) < n_pairs:
        record = corpus[attempt % len(corpus)]
        child = derive_seed(seed, "removal", attempt)
        attempt += 1
        rng = random.Random(child)
        ann = record.instruction
        if not ann.phrase_spans:
            continue
        donor = donors[rng.randrange(len(donors))]
        if len(ann.tokens) + len(donor) > MAX_TOKENS:
            continue
        corrupted = insert_extrinsic(ann, donor, rng.randrange(2**31)).ann
        clean = [s for s, g in zip(corrupted.phrase_spans, corrupted.gold) if not g.is_hallucination]
        extrinsic = [s for s, g in zip(corrupted.phrase_spans, corrupted.gold) if g.is_hallucination]
        if not clean or not extrinsic:
            continue
        env = envs[record.env_id]
        positive = _removal_example(env, record.route, corrupted, clean[rng.randrange(len(clean))], True)
        negative = _removal_example(
            env, record.route, corrupted, extrinsic[rng.randrange(len(extrinsic))], False
        )
        pairs.append(PairedExample(positive, negative))
    return pairs


def _removal_example(
    env: Environment, route: Route, ann: AnnotatedInstruction, span: PhraseSpan, label: bool
) -> DetectionExample:
    tokens = ann.tokens[: span.i] + (lexicon.REMOVE_TOKEN,) + ann.tokens[span.j + 1 :]
    marked = (
        tokens[: span.i]
        + (lexicon.BH_TOKEN, lexicon.REMOVE_TOKEN, lexicon.EH_TOKEN)
        + tokens[span.i + 1 :]
    )
    return DetectionExample(
        env_id=env.id,
        route=route,
        tokens=marked,
        i=span.i,
        j=span.i,
        label=label,
        kind=REMOVED_KIND,
        alignment=dict(ann.alignment),
    )
