"""Acceptance criteria, one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
"""

from __future__ import annotations

import math
import random
import time

import numpy as np
import pytest

from navhint import corpus as corpus_mod
from navhint import envmodel, evaluation, grounding, lexicon, metrics, perturb, remedy, serialize, speaker
from navhint.grounding import DIM, GroundingModel, TrainConfig, macro_f1_counts
from navhint.instructions import annotate
from navhint.perturb import CandidateSet, make_detection_example
from navhint.seeding import derive_seed

SEED = 42


def _line(criterion: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def suite():
    """The standard synthetic suite: seed 42, 20 environments, 2,000 training pairs,
    500-example balanced dev/test."""
    start = time.monotonic()
    config = evaluation.ExperimentConfig(seed=SEED)
    systems = evaluation.train_systems(config)
    elapsed = time.monotonic() - start
    return config, systems, elapsed


# -- P1: formula fidelity -------------------------------------------------------


def test_p1_rank_candidates_matches_exhaustive_oracle(small_env, small_route, small_instruction):
    start = time.monotonic()
    rng = random.Random(SEED)
    ann = small_instruction
    phrases = sorted(set(lexicon.room_names()) | set(lexicon.object_names()) | set(lexicon.direction_phrases()))
    max_deviation = 0.0
    for trial in range(200):
        det = GroundingModel(weights=tuple(rng.uniform(-2, 2) for _ in range(DIM)))
        typ = GroundingModel(weights=tuple(rng.uniform(-2, 2) for _ in range(DIM)))
        span = ann.phrase_spans[rng.randrange(len(ann.phrase_spans))]
        x = make_detection_example(small_env, small_route, ann, span, True)
        m = rng.randint(2, 25)
        pool = [p for p in rng.sample(phrases, m) if p != span.text(ann.tokens)]
        cands = CandidateSet((span.i, span.j, span.kind), tuple(pool) + (lexicon.REMOVE_TOKEN,))

        ranked = remedy.rank_candidates(det, typ, small_env, x, cands, k=None)

        p_int = grounding.confidence(typ, grounding.featurize(small_env, small_route, x))
        oracle = []
        for candidate in cands.candidates:
            if candidate == lexicon.REMOVE_TOKEN:
                oracle.append((1.0 - p_int, candidate))
            else:
                sub = remedy._substituted_example(small_env, x, candidate)
                p_h = grounding.confidence(det, grounding.featurize(small_env, small_route, sub))
                oracle.append((p_int * p_h, candidate))
        oracle.sort(key=lambda t: (-t[0], t[1] == lexicon.REMOVE_TOKEN, t[1]))

        got = [(s.score, s.candidate) for s in ranked.items]
        assert [c for _, c in got] == [c for _, c in oracle], trial
        for (score_a, _), (score_b, _) in zip(got, oracle):
            max_deviation = max(max_deviation, abs(score_a - score_b))
        top3 = remedy.rank_candidates(det, typ, small_env, x, cands, k=3)
        assert list(top3.items) == list(ranked.items[:3])
    elapsed = time.monotonic() - start
    _line(
        "P1 formula fidelity",
        max_deviation == 0.0 and elapsed < 10.0,
        f"max |deviation| = {max_deviation} over 200 instances in {elapsed:.1f}s (< 10s)",
    )


# -- P2: closed-form check -------------------------------------------------------


def test_p2_equal_probability_closed_form(small_env, small_route):
    tokens = ("turn", "right", ".")
    ann = annotate(tokens, alignment={0: 0})
    x = make_detection_example(small_env, small_route, ann, ann.phrase_spans[0], True)
    cands = perturb.generate_candidates(small_env, ann, ann.phrase_spans[0])
    flat = GroundingModel(weights=tuple([0.0] * DIM))
    ranked = remedy.rank_candidates(flat, flat, small_env, x, cands, k=None)
    scores = {s.candidate: s.score for s in ranked.items}
    remove_exact = scores[lexicon.REMOVE_TOKEN] == 0.5
    repl_exact = all(v == 0.25 for c, v in scores.items() if c != lexicon.REMOVE_TOKEN)
    first = ranked.items[0].candidate == lexicon.REMOVE_TOKEN
    _line(
        "P2 closed-form check",
        remove_exact and repl_exact and first,
        f"REMOVE={scores[lexicon.REMOVE_TOKEN]}, replacements all 0.25: {repl_exact}, REMOVE first: {first}",
    )


# -- P3: trainer correctness ------------------------------------------------------


def test_p3_trainer_correctness():
    start = time.monotonic()
    rng = random.Random(SEED)
    h = 1e-5
    worst = 0.0
    for _ in range(50):
        n = rng.randint(2, 12)
        f_pos = np.array([[rng.uniform(-1, 1) for _ in range(DIM)] for _ in range(n)])
        f_neg = np.array([[rng.uniform(-1, 1) for _ in range(DIM)] for _ in range(n)])
        w = np.array([rng.uniform(-1.5, 1.5) for _ in range(DIM)])
        mix = rng.choice([0.0, 0.25, 0.5, 1.0])
        _, grad = grounding.pair_loss_and_grad(w, f_pos, f_neg, mix)
        for k in rng.sample(range(DIM), 4):
            wp, wm = w.copy(), w.copy()
            wp[k] += h
            wm[k] -= h
            lp, _ = grounding.pair_loss_and_grad(wp, f_pos, f_neg, mix)
            lm, _ = grounding.pair_loss_and_grad(wm, f_pos, f_neg, mix)
            numeric = (lp - lm) / (2 * h)
            rel = abs(grad[k] - numeric) / max(1.0, abs(grad[k]))
            worst = max(worst, rel)
    grad_ok = worst < 1e-6

    # toy separable set: one informative feature, 100 pairs
    f_pos = np.zeros((100, DIM))
    f_neg = np.zeros((100, DIM))
    toy_rng = random.Random(7)
    for i in range(100):
        f_pos[i, 7] = 1.0
        f_pos[i, 13] = f_neg[i, 13] = 1.0
        f_pos[i, 12] = toy_rng.random()
        f_neg[i, 12] = toy_rng.random()
    model = grounding.train_on_features(f_pos, f_neg, TrainConfig(learning_rate=0.5, epochs=200))
    margins = (f_pos - f_neg) @ model.weight_vector()
    pair_loss = float(np.mean(np.logaddexp(0.0, -margins)))

    # loss trace is non-increasing
    losses = []
    w = np.zeros(DIM)
    lr = 0.1
    loss, grad = grounding.pair_loss_and_grad(w, f_pos, f_neg, 0.5)
    losses.append(loss)
    for _ in range(100):
        while True:
            cand = w - lr * grad
            new_loss, new_grad = grounding.pair_loss_and_grad(cand, f_pos, f_neg, 0.5)
            if new_loss <= loss or lr < 1e-12:
                break
            lr *= 0.5
        if new_loss > loss:
            break
        w, loss, grad = cand, new_loss, new_grad
        losses.append(loss)
    monotone = all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))

    elapsed = time.monotonic() - start
    _line(
        "P3 trainer correctness",
        grad_ok and pair_loss < 0.1 and monotone and elapsed < 30.0,
        f"max rel grad err {worst:.2e} (< 1e-6), toy pair loss {pair_loss:.4f} (< 0.1), "
        f"monotone {monotone}, {elapsed:.1f}s (< 30s)",
    )


# -- P4: detection skill -----------------------------------------------------------


def test_p4_detection_skill(suite):
    config, systems, train_time = suite
    start = time.monotonic()
    examples = corpus_mod.balanced_examples(
        systems.test, systems.envs, derive_seed(SEED, "test"), config.n_eval_examples
    )
    golds = [e.label for e in examples]
    preds = [grounding.predict(systems.detector, systems.envs[e.env_id], e.route, e)[0] for e in examples]
    trained_f1 = metrics.macro_f1(preds, golds)
    random_preds = metrics.random_detection_baseline(len(examples), derive_seed(SEED, "rand", "test"))
    random_f1 = metrics.macro_f1(random_preds, golds)
    elapsed = train_time + (time.monotonic() - start)
    ok = trained_f1 >= 0.80 and trained_f1 - random_f1 >= 0.25 and abs(random_f1 - 0.5) < 0.1 and elapsed < 120.0
    _line(
        "P4 detection skill",
        ok,
        f"macro-F1 {trained_f1:.3f} (>= 0.80), random {random_f1:.3f}, margin "
        f"{trained_f1 - random_f1:.3f} (>= 0.25), {elapsed:.1f}s (< 2min)",
    )


# -- P5: suggestion skill ------------------------------------------------------------


def test_p5_suggestion_skill(suite):
    config, systems, _ = suite
    cases = corpus_mod.suggestion_cases(
        systems.test, systems.envs, config.rates, derive_seed(SEED, "sugg", "test"), config.n_suggestion_cases
    )
    golds = [c.gold for c in cases]
    cand_sets = [c.candidates for c in cases]

    two_stage = [
        remedy.rank_candidates(
            systems.detector, systems.type_model, systems.envs[c.example.env_id], c.example, c.candidates
        )
        for c in cases
    ]
    r3 = metrics.recall_at_k(two_stage, golds, k=3, candidate_sets=cand_sets)

    one_stage = [
        remedy.rank_one_stage(systems.one_stage, systems.envs[c.example.env_id], c.example, c.candidates)
        for c in cases
    ]
    one_stage_r3 = metrics.recall_at_k(one_stage, golds, k=3, candidate_sets=cand_sets)

    gold_in_candidates = all(c.gold in c.candidates.candidates for c in cases)

    # random baseline per candidate-set-size bucket, 99% binomial CI around 3/M
    random_lists = metrics.random_suggestion_baseline(cand_sets, derive_seed(SEED, "rb"))
    buckets: dict[int, list[int]] = {}
    for ranked, gold, cands in zip(random_lists, golds, cand_sets):
        m = len(cands.candidates)
        hit = gold in [s.candidate for s in ranked.items[:3]]
        buckets.setdefault(m, []).append(1 if hit else 0)
    ci_ok = True
    for m, hits in buckets.items():
        n = len(hits)
        p = 1.0 if m <= 3 else 3.0 / m
        expected = n * p
        slack = 2.576 * math.sqrt(max(n * p * (1 - p), 1e-12)) + 1.0
        if abs(sum(hits) - expected) > slack:
            ci_ok = False
    ok = r3 >= 0.75 and gold_in_candidates and ci_ok
    _line(
        "P5 suggestion skill",
        ok,
        f"two-stage R@3 {r3:.3f} (>= 0.75), one-stage R@3 {one_stage_r3:.3f} (reported), "
        f"gold always in candidates: {gold_in_candidates}, random within 99% CI of 3/M: {ci_ok}",
    )


# -- P6: threshold selection -----------------------------------------------------------


def test_p6_threshold_selection_matches_brute_force():
    rng = random.Random(SEED)
    exact = True
    for trial in range(100):
        n = rng.randint(6, 60)
        scores = [rng.uniform(-4, 4) for _ in range(n)]
        labels = [rng.random() < 0.5 for _ in range(n)]
        if len(set(labels)) < 2:
            labels[0] = not labels[1]
        features = np.zeros((n, DIM))
        features[:, 13] = scores
        model = GroundingModel(weights=tuple([0.0] * 13 + [1.0]))
        tau = grounding.select_threshold(model, features, labels)
        achieved = macro_f1_counts([s > tau for s in scores], labels)
        candidates = [-math.inf, math.inf]
        for s in scores:
            candidates.extend([s - 1e-9, s, s + 1e-9])
        brute = max(macro_f1_counts([s > c for s in scores], labels) for c in candidates)
        if achieved != brute:
            exact = False
            break
    _line("P6 threshold selection", exact, "matches brute-force F-1 maximization on 100 random dev sets")


# -- P7: extrinsic orderings -------------------------------------------------------------


def test_p7_extrinsic_orderings(suite):
    config, systems, _ = suite
    start = time.monotonic()
    reports = {r.condition: r for r in evaluation._nav_reports(systems, config)}
    elapsed = time.monotonic() - start
    none = reports["none"]
    oh = reports["oracle_highlights"]
    of = reports["oracle_full"]
    assisted = [reports[c] for c in ("model_highlights", "model_full", "oracle_highlights", "oracle_full")]
    checks = [
        (none.episodes[i].checks_used, [r.episodes[i].checks_used for r in assisted])
        for i in range(len(none.episodes))
    ]
    ok = (
        oh.success_rate >= none.success_rate + 0.05
        and of.success_rate >= oh.success_rate
        and of.mean_error_m <= none.mean_error_m
        and all(r.mean_checks >= none.mean_checks for r in assisted)
        and elapsed < 60.0
    )
    _line(
        "P7 extrinsic orderings",
        ok,
        f"SR none {none.success_rate:.2f} -> oracle highlights {oh.success_rate:.2f} "
        f"(+{oh.success_rate - none.success_rate:.2f} >= 0.05) -> oracle full {of.success_rate:.2f}; "
        f"DIST {of.mean_error_m:.2f} <= {none.mean_error_m:.2f}; "
        f"checks assisted {[round(r.mean_checks, 2) for r in assisted]} >= {none.mean_checks:.2f}; "
        f"{elapsed:.1f}s (< 1min)",
    )
    del checks


# -- P8: corruption calibration -------------------------------------------------------------


def test_p8_corruption_calibration():
    cfg = corpus_mod.CorpusConfig(seed=derive_seed(SEED, "p8-corpus"), n_envs=25, routes_per_env=40)
    envs, records = corpus_mod.build_corpus(cfg)
    records = records[:1000]
    assert len(records) == 1000
    donors = []
    for r in records:
        donors.extend(r.instruction.tokens[s:e] for s, e in r.instruction.sentence_bounds)
    corrupted_count = 0
    od_total = 0
    od_bad = 0
    for idx, record in enumerate(records):
        corrupted = corpus_mod.corrupt_record(
            record, envs, perturb.PAPER_CALIBRATED_RATES, derive_seed(SEED, "p8", idx), donor_sentences=donors
        )
        if corrupted.hallucinated_spans():
            corrupted_count += 1
        for span, gold in zip(corrupted.phrase_spans, corrupted.gold):
            if span.kind in (lexicon.OBJECT_KIND, lexicon.DIRECTION_KIND):
                od_total += 1
                od_bad += gold.is_hallucination
    instr_rate = corrupted_count / len(records)
    phrase_rate = od_bad / od_total
    ok = abs(instr_rate - 0.675) <= 0.05 and abs(phrase_rate - 0.209) <= 0.03
    _line(
        "P8 corruption calibration",
        ok,
        f"instruction-level {instr_rate:.3f} (0.675 +/- 0.05), "
        f"object+direction phrase-level {phrase_rate:.3f} (0.209 +/- 0.03)",
    )


# -- P9: round-trip integrity ------------------------------------------------------------------


def test_p9_round_trip_integrity(suite):
    config, systems, _ = suite
    envs = systems.envs
    records = systems.records
    clean = 0
    total = 200
    for idx in range(total):
        record = records[idx % len(records)]
        corrupted = corpus_mod.corrupt_record(
            record, envs, config.rates, derive_seed(SEED, "p9", idx), ensure_one=True
        )
        current = corrupted
        for _ in range(12):
            highlights = remedy.oracle_highlights(current)
            if not highlights:
                break
            top = evaluation.oracle_suggestions(current, highlights[0]).items[0]
            current = remedy.apply_suggestion(current, highlights[0], top)
        env = envs[record.env_id]
        if not speaker.grounding_violations(env, record.route, current) and not current.hallucinated_spans():
            clean += 1

    env = next(iter(envs.values()))
    env_lines = serialize.env_to_lines(env)
    env_ok = serialize.env_to_lines(serialize.env_from_lines(env_lines)) == env_lines
    corpus_lines = serialize.corpus_to_lines(records[:40])
    corpus_ok = serialize.corpus_to_lines(serialize.corpus_from_lines(corpus_lines)) == corpus_lines
    pairs = perturb.build_detection_pairs(systems.train, envs, derive_seed(SEED, "p9pairs"), n_pairs=25)
    pair_lines = serialize.pairs_to_lines(pairs, "detection")
    pairs_ok = serialize.pairs_to_lines(*serialize.pairs_from_lines(pair_lines)) == pair_lines
    model_lines = serialize.model_to_lines(systems.detector)
    model_ok = serialize.model_to_lines(serialize.model_from_lines(model_lines)) == model_lines

    ok = clean == total and env_ok and corpus_ok and pairs_ok and model_ok
    _line(
        "P9 round-trip integrity",
        ok,
        f"gold corrections restore {clean}/{total} instructions to grounding-clean; "
        f"byte-identical round-trips: env {env_ok}, corpus {corpus_ok}, pairs {pairs_ok}, model {model_ok}",
    )


# -- P10: determinism -----------------------------------------------------------------------------


def test_p10_pipeline_determinism(tmp_path):
    import json as json_mod

    from click.testing import CliRunner

    from navhint.cli import main

    config_path = tmp_path / "config.json"
    config_path.write_text(
        json_mod.dumps(
            {
                "n_envs": 5,
                "routes_per_env": 8,
                "n_detection_pairs": 250,
                "n_type_pairs": 150,
                "n_one_stage_pairs": 250,
                "n_eval_examples": 100,
                "n_suggestion_cases": 50,
                "n_episodes": 15,
            }
        ),
        encoding="utf-8",
    )
    runner = CliRunner()
    digests = []
    for run in ("a", "b"):
        work = tmp_path / run
        work.mkdir()
        env_file = work / "one.env"
        data_dir = work / "data"
        model_file = work / "detector.model"
        report_file = work / "report.jsonl"
        for args in (
            ["--seed", str(SEED), "gen-env", "--out", str(env_file)],
            ["--seed", str(SEED), "--config", str(config_path), "gen-data", "--out", str(data_dir)],
            [
                "--seed", str(SEED), "train", "--task", "detection",
                "--pairs", str(data_dir / "pairs-detection.jsonl"),
                "--dev", str(data_dir / "pairs-detection.jsonl"),
                "--envs", str(data_dir), "--out", str(model_file), "--epochs", "80",
            ],
            ["--seed", str(SEED), "--config", str(config_path), "eval", "--suite", "all", "--out", str(report_file)],
        ):
            result = runner.invoke(main, args)
            assert result.exit_code == 0, result.output
        digests.append(
            (
                env_file.read_bytes(),
                (data_dir / "pairs-detection.jsonl").read_bytes(),
                model_file.read_bytes(),
                report_file.read_bytes(),
            )
        )
    identical = digests[0] == digests[1]
    _line("P10 determinism", identical, "gen-env -> gen-data -> train -> eval byte-identical across two runs")
