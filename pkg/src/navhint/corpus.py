"""Corpus synthesis: environments, routes, instructions, and train/dev/test splits."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import perturb, speaker
from .envmodel import EnvConfig, Environment, EnvironmentTooSmall, generate_environment, sample_route
from .instructions import AnnotatedInstruction
from .perturb import CorpusRecord, CorruptionRates, DetectionExample, make_detection_example
from .seeding import derive_seed


@dataclass
class CorpusConfig:
    seed: int = 42
    n_envs: int = 20
    routes_per_env: int = 15
    length_range: tuple[int, int] = (1, 5)
    env_config: EnvConfig = field(default_factory=EnvConfig)


def build_environments(config: CorpusConfig) -> dict[str, Environment]:
    envs = {}
    for e in range(config.n_envs):
        env = generate_environment(derive_seed(config.seed, "env", e), config.env_config)
        envs[env.id] = env
    return envs


def build_corpus(config: CorpusConfig) -> tuple[dict[str, Environment], list[CorpusRecord]]:
    """Deterministic (seed, config) -> environments plus described routes."""
    envs = build_environments(config)
    records = []
    for e, env in enumerate(envs.values()):
        for r in range(config.routes_per_env):
            route = None
            for retry in range(10):
                try:
                    route = sample_route(env, derive_seed(config.seed, "route", e, r, retry), config.length_range)
                    break
                except EnvironmentTooSmall:
                    continue
            if route is None:
                continue
            ann = speaker.describe_route(env, route, derive_seed(config.seed, "ann", e, r))
            records.append(
                CorpusRecord(route_id=f"{env.id}/r{r}", env_id=env.id, route=route, instruction=ann)
            )
    return envs, records


def split_records(
    records: list[CorpusRecord], dev_fraction: float = 0.2, test_fraction: float = 0.2
) -> tuple[list[CorpusRecord], list[CorpusRecord], list[CorpusRecord]]:
    """Deterministic round-robin split so every environment appears in every split."""
    train, dev, test = [], [], []
    period = 10
    dev_slots = max(1, round(dev_fraction * period))
    test_slots = max(1, round(test_fraction * period))
    for idx, record in enumerate(records):
        slot = idx % period
        if slot < dev_slots:
            dev.append(record)
        elif slot < dev_slots + test_slots:
            test.append(record)
        else:
            train.append(record)
    return train, dev, test


def corrupt_record(
    record: CorpusRecord,
    envs: dict[str, Environment],
    rates: CorruptionRates,
    seed: int,
    donor_sentences: list[tuple[str, ...]] | None = None,
    strategy: str = perturb.DEFAULT_STRATEGY,
    ensure_one: bool = False,
) -> AnnotatedInstruction:
    return perturb.corrupt_instruction(
        record.instruction,
        rates,
        seed,
        env=envs[record.env_id],
        donor_sentences=donor_sentences,
        strategy=strategy,
        route=record.route,
        ensure_one=ensure_one,
    )


def balanced_examples(
    records: list[CorpusRecord],
    envs: dict[str, Environment],
    seed: int,
    n_examples: int,
) -> list[DetectionExample]:
    """A balanced labeled example set: one hallucinated and one clean wrapped span
    per corrupted instruction, until n_examples/2 of each are collected."""
    donors = []
    for record in records:
        donors.extend(record.instruction.tokens[s:e] for s, e in record.instruction.sentence_bounds)
    per_class = n_examples // 2
    positives: list[DetectionExample] = []
    negatives: list[DetectionExample] = []
    attempt = 0
    while (len(positives) < per_class or len(negatives) < per_class) and attempt < n_examples * 20:
        record = records[attempt % len(records)]
        child = derive_seed(seed, "balanced", attempt)
        attempt += 1
        corrupted = corrupt_record(
            record, envs, perturb._PAIR_RATES, child, donor_sentences=donors, ensure_one=True
        )
        env = envs[record.env_id]
        rng = random.Random(derive_seed(child, "pick"))
        bad = [s for s, g in zip(corrupted.phrase_spans, corrupted.gold) if g.is_hallucination]
        clean = [s for s, g in zip(corrupted.phrase_spans, corrupted.gold) if not g.is_hallucination]
        if bad and len(positives) < per_class:
            span = bad[rng.randrange(len(bad))]
            positives.append(make_detection_example(env, record.route, corrupted, span, True))
        if clean and len(negatives) < per_class:
            span = clean[rng.randrange(len(clean))]
            negatives.append(make_detection_example(env, record.route, corrupted, span, False))
    examples = positives[:per_class] + negatives[:per_class]
    if len(examples) < n_examples:
        raise RuntimeError(f"could only build {len(examples)} of {n_examples} examples")
    return examples


@dataclass
class SuggestionCase:
    record: CorpusRecord
    instruction: AnnotatedInstruction  # corrupted
    example: DetectionExample  # wraps the hallucinated span
    candidates: perturb.CandidateSet
    gold: str


def suggestion_cases(
    records: list[CorpusRecord],
    envs: dict[str, Environment],
    rates: CorruptionRates,
    seed: int,
    n_cases: int,
) -> list[SuggestionCase]:
    """Hallucinated spans with known gold corrections and their candidate sets."""
    donors = []
    for record in records:
        donors.extend(record.instruction.tokens[s:e] for s, e in record.instruction.sentence_bounds)
    cases: list[SuggestionCase] = []
    attempt = 0
    while len(cases) < n_cases and attempt < n_cases * 30:
        record = records[attempt % len(records)]
        child = derive_seed(seed, "sugg", attempt)
        attempt += 1
        corrupted = corrupt_record(
            record, envs, rates, child, donor_sentences=donors, ensure_one=True
        )
        env = envs[record.env_id]
        for span, gold in corrupted.hallucinated_spans():
            if len(cases) >= n_cases:
                break
            example = make_detection_example(env, record.route, corrupted, span, True)
            candidates = perturb.generate_candidates(
                env, corrupted, span, gold=gold.gold_correction
            )
            cases.append(
                SuggestionCase(
                    record=record,
                    instruction=corrupted,
                    example=example,
                    candidates=candidates,
                    gold=gold.gold_correction,
                )
            )
    if len(cases) < n_cases:
        raise RuntimeError(f"could only build {len(cases)} of {n_cases} suggestion cases")
    return cases
