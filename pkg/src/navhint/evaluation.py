"""Simulated instruction follower and the experiment runner.

The follower stands in for human subjects: it cannot see the goal, walks the
graph clause by clause, and can press Check. Highlight-aware modes treat
highlighted phrases as unreliable and backtrack through highlighted decisions
on Check failure; the suggestion-aware mode first applies top suggestions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from . import corpus as corpus_mod
from . import grounding, lexicon, metrics, perturb, remedy
from .envmodel import Environment, Route, movement_label, path_distance
from .instructions import AnnotatedInstruction, PhraseSpan
from .metrics import Episode, NavReport, SUCCESS_RADIUS_M
from .perturb import CorruptionRates
from .remedy import Highlight, Suggestion, SuggestionList
from .seeding import derive_seed

LITERAL = "literal"
HIGHLIGHT_AWARE = "highlight_aware"
SUGGESTION_AWARE = "suggestion_aware"

CONDITIONS = ("none", "model_highlights", "model_full", "oracle_highlights", "oracle_full")


@dataclass(frozen=True)
class FollowerPolicy:
    mode: str = LITERAL
    check_budget: int = 6
    seed: int = 0
    room_weight: float = 2.0
    object_weight: float = 1.0
    direction_weight: float = 3.0  # directions dominate at junctions

    def __post_init__(self) -> None:
        if self.check_budget < 1:
            raise ValueError("check budget must be at least 1")
        if self.mode not in (LITERAL, HIGHLIGHT_AWARE, SUGGESTION_AWARE):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class _ClausePlan:
    spans: list[PhraseSpan]
    texts: list[str]
    kinds: list[str]
    wild: list[bool]
    is_stop: bool
    decision: bool
    fully_wild: bool


_SKIP = ("<skip>", None)


def _build_plans(
    ann: AnnotatedInstruction,
    wildcard_spans: set[tuple[int, int]],
    decision_clauses: set[int],
) -> list[_ClausePlan]:
    plans = []
    clauses = ann.clauses()
    spans_by_clause: dict[int, list[PhraseSpan]] = {c: [] for c in range(len(clauses))}
    for span in ann.phrase_spans:
        spans_by_clause[ann.clause_of_span(span)].append(span)
    for c, (start, end) in enumerate(clauses):
        spans = spans_by_clause[c]
        wild = [(s.i, s.j) in wildcard_spans for s in spans]
        fully_wild = bool(spans) and all(wild)
        plans.append(
            _ClausePlan(
                spans=spans,
                texts=[s.text(ann.tokens) for s in spans],
                kinds=[s.kind for s in spans],
                wild=wild,
                is_stop="stop" in ann.tokens[start:end],
                decision=c in decision_clauses,
                fully_wild=fully_wild,
            )
        )
    return plans


def _phrase_selects(env: Environment, node: str, target: str, label: str, phrase: str) -> bool:
    if phrase == lexicon.action_phrase(label):
        return True
    here = env.node(node).room_label
    there = env.node(target).room_label
    if phrase in ("out of", "into"):
        return there != here
    if phrase == "through":
        return there == here
    return False


def _move_options(
    env: Environment, node: str, heading: float, plan: _ClausePlan, policy: FollowerPolicy
) -> list[tuple[str, str | None]]:
    """Neighbor moves ranked by clause match score; a fully wildcarded clause
    offers skipping first (the clause may describe a path that does not exist)."""
    scored = []
    for target in env.neighbors(node):
        label = movement_label(env, node, target, heading)
        score = 0.0
        room_there = env.node(target).room_label
        names_there = {obj.name for obj in env.node(target).objects}
        has_out_of = any(
            t == "out of" for t, k, w in zip(plan.texts, plan.kinds, plan.wild)
            if k == lexicon.DIRECTION_KIND and not w
        )
        for text, kind, wild in zip(plan.texts, plan.kinds, plan.wild):
            if wild:
                continue
            if kind == lexicon.DIRECTION_KIND and _phrase_selects(env, node, target, label, text):
                score += policy.direction_weight
            elif kind == lexicon.ROOM_KIND:
                if has_out_of:
                    if env.node(node).room_label == text and room_there != text:
                        score += policy.room_weight
                elif room_there == text:
                    score += policy.room_weight
            elif kind == lexicon.OBJECT_KIND and text in names_there:
                score += policy.object_weight
        scored.append((-score, target))
    scored.sort()
    options: list[tuple[str, str | None]] = [(t, None) for _, t in scored]
    if plan.fully_wild:
        options = [_SKIP] + options
    return options


def _stop_options(
    env: Environment, node: str, plan: _ClausePlan, policy: FollowerPolicy
) -> list[tuple[str, str | None]]:
    """Stay or make one final adjustment toward the described stop location."""

    def match(candidate: str) -> float:
        room = env.node(candidate).room_label
        names = {obj.name for obj in env.node(candidate).objects}
        score = 0.0
        for text, kind, wild in zip(plan.texts, plan.kinds, plan.wild):
            if wild:
                continue
            if kind == lexicon.ROOM_KIND and room == text:
                score += policy.room_weight
            elif kind == lexicon.OBJECT_KIND and text in names:
                score += policy.object_weight
        return score

    ranked = [(-match(node), 0, node)] + [
        (-match(t), 1, t) for t in env.neighbors(node)
    ]
    ranked.sort()
    return [(t, None) for _, _, t in ranked]


def _execute(
    env: Environment,
    plans: list[_ClausePlan],
    start_node: str,
    start_heading: float,
    ranks: list[int],
    policy: FollowerPolicy,
) -> tuple[str, list[str], list[int]]:
    node, heading = start_node, start_heading
    walk = [node]
    counts: list[int] = []
    d = 0
    for plan in plans:
        if plan.is_stop:
            options = _stop_options(env, node, plan, policy)
        else:
            options = _move_options(env, node, heading, plan, policy)
        if not options:
            continue
        if plan.decision:
            rank = ranks[d] if d < len(ranks) else 0
            counts.append(len(options))
            choice = options[min(rank, len(options) - 1)]
            d += 1
        else:
            choice = options[0]
        if choice is _SKIP:
            continue
        target = choice[0]
        if target != node:
            if not plan.is_stop:
                heading = _heading_after(env, node, target)
            node = target
            walk.append(node)
    return node, walk, counts


def _heading_after(env: Environment, node: str, target: str) -> float:
    from .envmodel import bearing_between

    return bearing_between(env.node(node).position, env.node(target).position)


def _stitch(trajectory: list[str], prev_walk: list[str], walk: list[str]) -> None:
    """Physically backtrack along the previous walk to the divergence point."""
    common = 0
    for a, b in zip(prev_walk, walk):
        if a != b:
            break
        common += 1
    common = max(common, 1)
    back = list(reversed(prev_walk[common - 1 : -1]))
    trajectory.extend(back)
    trajectory.extend(walk[common:])


def simulate_follower(
    env: Environment,
    instruction: AnnotatedInstruction,
    highlights: list[Highlight],
    suggestion_lists: dict[str, SuggestionList],
    goal: str,
    policy: FollowerPolicy,
    start_node: str,
    start_heading: float,
    episode_id: str = "episode",
) -> Episode:
    """Walk the environment following the instruction under the given policy."""
    ann = instruction
    wildcard_spans: set[tuple[int, int]] = set()
    decision_clauses: set[int] = set()

    if policy.mode == SUGGESTION_AWARE and highlights:
        ann, decision_clauses = _apply_top_suggestions(ann, highlights, suggestion_lists)
    elif policy.mode == HIGHLIGHT_AWARE and highlights:
        for h in highlights:
            for member in h.member_spans:
                wildcard_spans.add((member.i, member.j))
        for h in highlights:
            clause = _clause_containing(ann, h.span[0])
            if clause is not None:
                decision_clauses.add(clause)

    plans = _build_plans(ann, wildcard_spans, decision_clauses)
    trajectory: list[str] = [start_node]
    prev_walk: list[str] | None = None
    ranks: list[int] = []
    checks = 0
    final = start_node
    while True:
        final, walk, counts = _execute(env, plans, start_node, start_heading, ranks, policy)
        if prev_walk is None:
            trajectory.extend(walk[1:])
        else:
            _stitch(trajectory, prev_walk, walk)
        prev_walk = walk
        checks += 1
        if path_distance(env, final, goal) <= SUCCESS_RADIUS_M:
            break
        if checks >= policy.check_budget:
            break
        advanced = False
        effective = [ranks[i] if i < len(ranks) else 0 for i in range(len(counts))]
        for i in reversed(range(len(counts))):
            if effective[i] + 1 < counts[i]:
                ranks = effective[:i] + [effective[i] + 1]
                advanced = True
                break
        if not advanced:
            break
    return Episode(
        episode_id=episode_id,
        env_id=env.id,
        goal=goal,
        final_node=final,
        trajectory=tuple(trajectory),
        checks_used=checks,
        nav_error_m=path_distance(env, final, goal),
    )


def _clause_containing(ann: AnnotatedInstruction, token_index: int) -> int | None:
    for c, (start, end) in enumerate(ann.clauses()):
        if start <= token_index < end:
            return c
    return None


def _apply_top_suggestions(
    ann: AnnotatedInstruction,
    highlights: list[Highlight],
    suggestion_lists: dict[str, SuggestionList],
) -> tuple[AnnotatedInstruction, set[int]]:
    """Apply the best suggestion at every highlight (descending span order keeps
    earlier spans valid); edited clauses stay backtrackable decision points."""
    decisions: list[int] = []
    current = ann
    for h in sorted(highlights, key=lambda h: h.span[0], reverse=True):
        ranked = suggestion_lists.get(h.key)
        if ranked is None or not ranked.items:
            clause = _clause_containing(current, h.span[0])
            if clause is not None:
                decisions.append(clause)
            continue
        top = ranked.items[0]
        clause = _clause_containing(current, h.span[0])
        try:
            current = remedy.apply_suggestion(current, h, top)
        except (remedy.StaleSpanError, ValueError):
            if clause is not None:
                decisions.append(clause)
            continue
        if top.candidate == lexicon.REMOVE_TOKEN and h.clause_level:
            decisions = [c - 1 if c > clause else c for c in decisions if c != clause]
        elif clause is not None:
            decisions.append(clause)
    return current, set(decisions)


def oracle_suggestions(ann: AnnotatedInstruction, highlight: Highlight) -> SuggestionList:
    """Two-item oracle menu: the gold correction first, then the current phrase."""
    members = sorted(highlight.member_spans, key=lambda s: s.i)
    gold_by_span = {
        (s.i, s.j): g.gold_correction
        for s, g in zip(ann.phrase_spans, ann.gold)
        if g.is_hallucination and g.gold_correction is not None
    }
    first = members[0]
    gold = gold_by_span.get((first.i, first.j))
    original_text = " ".join(ann.tokens[highlight.span[0] : highlight.span[1] + 1])
    if gold is None:
        items = (Suggestion(original_text, 1.0, target=highlight.span),)
    elif gold == lexicon.REMOVE_TOKEN:
        items = (
            Suggestion(lexicon.REMOVE_TOKEN, 1.0, target=None),
            Suggestion(original_text, 0.0, target=highlight.span),
        )
    else:
        items = (
            Suggestion(gold, 1.0, target=(first.i, first.j)),
            Suggestion(first.text(ann.tokens), 0.0, target=(first.i, first.j)),
        )
    return SuggestionList(for_highlight=highlight.span, items=items)


@dataclass
class ExperimentConfig:
    seed: int = 42
    corpus: corpus_mod.CorpusConfig = field(default_factory=corpus_mod.CorpusConfig)
    n_detection_pairs: int = 2000
    n_type_pairs: int = 1400
    n_one_stage_pairs: int = 2600
    n_eval_examples: int = 500  # balanced dev and test sets
    n_suggestion_cases: int = 300
    n_episodes: int = 100
    rates: CorruptionRates = field(default_factory=lambda: perturb.PAPER_CALIBRATED_RATES)
    detection_train: grounding.TrainConfig = field(default_factory=grounding.TrainConfig)
    type_train: grounding.TrainConfig = field(
        default_factory=lambda: grounding.TrainConfig(epochs=800)
    )
    check_budget: int = 6

    def __post_init__(self) -> None:
        self.corpus = replace(self.corpus, seed=self.seed)


@dataclass
class TrainedSystems:
    envs: dict[str, Environment]
    records: list[perturb.CorpusRecord]
    train: list[perturb.CorpusRecord]
    dev: list[perturb.CorpusRecord]
    test: list[perturb.CorpusRecord]
    detector: grounding.GroundingModel
    detector_same_env: grounding.GroundingModel
    type_model: grounding.GroundingModel
    one_stage: grounding.GroundingModel


def train_systems(config: ExperimentConfig) -> TrainedSystems:
    envs, records = corpus_mod.build_corpus(config.corpus)
    train, dev, test = corpus_mod.split_records(records)

    det_pairs = perturb.build_detection_pairs(
        train, envs, derive_seed(config.seed, "detpairs"), n_pairs=config.n_detection_pairs
    )
    swap_pairs = perturb.build_detection_pairs(
        train,
        envs,
        derive_seed(config.seed, "swappairs"),
        strategy=perturb.SAME_ENV_SWAP,
        n_pairs=config.n_detection_pairs,
    )
    type_pairs = perturb.build_type_pairs(
        train, envs, derive_seed(config.seed, "typepairs"), n_pairs=config.n_type_pairs
    )
    one_stage_pairs = perturb.build_one_stage_pairs(
        train, envs, derive_seed(config.seed, "onestage"), n_pairs=config.n_one_stage_pairs
    )

    detector = grounding.train_contrastive(det_pairs, envs, config.detection_train)
    detector_same_env = grounding.train_contrastive(swap_pairs, envs, config.detection_train)
    type_model = grounding.train_contrastive(
        type_pairs, envs, config.type_train, task=grounding.TYPE_TASK
    )
    one_stage = grounding.train_contrastive(one_stage_pairs, envs, config.detection_train)

    dev_examples = corpus_mod.balanced_examples(
        dev, envs, derive_seed(config.seed, "dev"), config.n_eval_examples
    )
    detector = detector.with_threshold(grounding.select_threshold_for(detector, dev_examples, envs))
    detector_same_env = detector_same_env.with_threshold(
        grounding.select_threshold_for(detector_same_env, dev_examples, envs)
    )
    one_stage = one_stage.with_threshold(grounding.select_threshold_for(one_stage, dev_examples, envs))
    type_model = type_model.with_threshold(0.0)  # used through raw confidences

    return TrainedSystems(
        envs=envs,
        records=records,
        train=train,
        dev=dev,
        test=test,
        detector=detector,
        detector_same_env=detector_same_env,
        type_model=type_model,
        one_stage=one_stage,
    )


def _detection_reports(
    systems: TrainedSystems, config: ExperimentConfig
) -> list[metrics.DetectionReport]:
    reports = []
    for split_name, records in (("dev", systems.dev), ("test", systems.test)):
        examples = corpus_mod.balanced_examples(
            records, systems.envs, derive_seed(config.seed, split_name), config.n_eval_examples
        )
        golds = [e.label for e in examples]
        named = [
            ("random", metrics.random_detection_baseline(len(examples), derive_seed(config.seed, "rand", split_name))),
        ]
        for name, model in (
            ("detector", systems.detector),
            ("detector_same_env_swap", systems.detector_same_env),
            ("one_stage", systems.one_stage),
        ):
            preds = [
                grounding.predict(model, systems.envs[e.env_id], e.route, e)[0] for e in examples
            ]
            named.append((name, preds))
        for name, preds in named:
            reports.append(
                metrics.DetectionReport(
                    system=name,
                    split=split_name,
                    macro_f1=metrics.macro_f1(preds, golds),
                    per_class=metrics.per_class_report(preds, golds),
                    count=len(examples),
                )
            )
    return reports


def _suggestion_reports(
    systems: TrainedSystems, config: ExperimentConfig
) -> list[metrics.SuggestionReport]:
    reports = []
    for split_name, records in (("dev", systems.dev), ("test", systems.test)):
        cases = corpus_mod.suggestion_cases(
            records,
            systems.envs,
            config.rates,
            derive_seed(config.seed, "sugg", split_name),
            config.n_suggestion_cases,
        )
        golds = [c.gold for c in cases]
        cand_sets = [c.candidates for c in cases]
        mean_m = metrics.mean([float(len(c.candidates.candidates)) for c in cases])

        two_stage = [
            remedy.rank_candidates(
                systems.detector, systems.type_model, systems.envs[c.example.env_id], c.example, c.candidates
            )
            for c in cases
        ]
        one_stage = [
            remedy.rank_one_stage(
                systems.one_stage, systems.envs[c.example.env_id], c.example, c.candidates
            )
            for c in cases
        ]
        random_lists = metrics.random_suggestion_baseline(
            cand_sets, derive_seed(config.seed, "randsugg", split_name)
        )
        for name, lists in (("two_stage", two_stage), ("one_stage", one_stage), ("random", random_lists)):
            reports.append(
                metrics.SuggestionReport(
                    system=name,
                    split=split_name,
                    recall_at_3=metrics.recall_at_k(lists, golds, k=3, candidate_sets=cand_sets),
                    count=len(cases),
                    mean_candidates=mean_m,
                )
            )
    return reports


def _model_suggestion_lists(
    systems: TrainedSystems, env: Environment, route: Route, ann: AnnotatedInstruction, highlights: list[Highlight]
) -> dict[str, SuggestionList]:
    return {
        h.key: remedy.rank_for_highlight(systems.detector, systems.type_model, env, route, ann, h)
        for h in highlights
    }


def _oracle_suggestion_lists(
    ann: AnnotatedInstruction, highlights: list[Highlight]
) -> dict[str, SuggestionList]:
    return {h.key: oracle_suggestions(ann, h) for h in highlights}


def condition_setup(
    systems: TrainedSystems,
    env: Environment,
    route: Route,
    ann: AnnotatedInstruction,
    condition: str,
) -> tuple[list[Highlight], dict[str, SuggestionList], str]:
    """Highlights, suggestion lists, and follower mode for an experiment condition."""
    if condition == "none":
        return [], {}, LITERAL
    if condition == "model_highlights":
        return remedy.detect_highlights(systems.detector, env, route, ann), {}, HIGHLIGHT_AWARE
    if condition == "model_full":
        highlights = remedy.detect_highlights(systems.detector, env, route, ann)
        return highlights, _model_suggestion_lists(systems, env, route, ann, highlights), SUGGESTION_AWARE
    if condition == "oracle_highlights":
        return remedy.oracle_highlights(ann), {}, HIGHLIGHT_AWARE
    if condition == "oracle_full":
        highlights = remedy.oracle_highlights(ann)
        return highlights, _oracle_suggestion_lists(ann, highlights), SUGGESTION_AWARE
    raise ValueError(f"unknown condition {condition!r}")


def _nav_reports(systems: TrainedSystems, config: ExperimentConfig) -> list[NavReport]:
    episodes_by_condition: dict[str, list[Episode]] = {c: [] for c in CONDITIONS}
    test = systems.test
    for idx in range(config.n_episodes):
        record = test[idx % len(test)]
        env = systems.envs[record.env_id]
        corrupted = corpus_mod.corrupt_record(
            record, systems.envs, config.rates, derive_seed(config.seed, "episode", idx)
        )
        for condition in CONDITIONS:
            highlights, lists, mode = condition_setup(systems, env, record.route, corrupted, condition)
            policy = FollowerPolicy(mode=mode, check_budget=config.check_budget)
            episode = simulate_follower(
                env,
                corrupted,
                highlights,
                lists,
                goal=record.route.goal,
                policy=policy,
                start_node=record.route.start_node,
                start_heading=record.route.start_heading,
                episode_id=f"{record.route_id}#{idx}",
            )
            episodes_by_condition[condition].append(episode)
    return [metrics.nav_report(c, eps) for c in CONDITIONS for eps in [episodes_by_condition[c]]]


@dataclass
class ReportBundle:
    detection: list[metrics.DetectionReport]
    suggestion: list[metrics.SuggestionReport]
    navigation: list[NavReport]

    def to_dict(self) -> dict:
        return {
            "schema": "report@1",
            "detection": [r.to_dict() for r in self.detection],
            "suggestion": [r.to_dict() for r in self.suggestion],
            "navigation": [r.to_dict() for r in self.navigation],
        }

    def summary(self) -> str:
        lines = ["== detection (macro F-1) =="]
        for r in self.detection:
            lines.append(f"{r.system:<26} {r.split:<5} {r.macro_f1:.3f}  (n={r.count})")
        lines.append("== suggestion (recall@3) ==")
        for r in self.suggestion:
            lines.append(
                f"{r.system:<26} {r.split:<5} {r.recall_at_3:.3f}  (n={r.count}, mean |candidates|={r.mean_candidates:.1f})"
            )
        lines.append("== navigation (100-episode simulated follower) ==")
        lines.append(f"{'condition':<22} {'SR':>6} {'DIST':>7} {'checks':>7}")
        for r in self.navigation:
            lines.append(
                f"{r.condition:<22} {r.success_rate:>6.3f} {r.mean_error_m:>7.2f} {r.mean_checks:>7.2f}"
            )
        return "\n".join(lines)


def run_experiment(config: ExperimentConfig | None = None, suite: str = "all") -> ReportBundle:
    """Train every system on the standard synthetic suite and emit the report bundle."""
    config = config or ExperimentConfig()
    systems = train_systems(config)
    detection = _detection_reports(systems, config) if suite in ("all", "intrinsic") else []
    suggestion = _suggestion_reports(systems, config) if suite in ("all", "intrinsic") else []
    navigation = _nav_reports(systems, config) if suite in ("all", "extrinsic") else []
    return ReportBundle(detection=detection, suggestion=suggestion, navigation=navigation)


def nav_report_from_episodes(condition: str, episodes: list[Episode]) -> NavReport:
    return metrics.nav_report(condition, episodes)
