"""Featurization, scoring, and contrastive training for the two binary classifiers.

One linear architecture serves both tasks: hallucination detection and
hallucination-type classification. The scorer is s(x) = <w, f(x)>, the
confidence is sigmoid(s), and the decision threshold lives in score space.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from . import lexicon, speaker
from .envmodel import Environment, Route
from .instructions import annotate, clause_of_token, proportional_alignment
from .perturb import DetectionExample, PairedExample

FEATURE_NAMES = (
    "kind_room",
    "kind_object",
    "kind_direction",
    "room_match_in_window",
    "room_match_anywhere",
    "object_match_in_window",
    "object_match_anywhere",
    "direction_match_in_window",
    "direction_antonym_in_window",
    "span_duplicated_in_instruction",
    "clause_has_no_aligned_step",
    "clause_count_minus_step_count",
    "span_relative_position",
    "bias",
)
DIM = len(FEATURE_NAMES)

DETECTION_TASK = "detection"
TYPE_TASK = "type"


class TrainingError(RuntimeError):
    """Training diverged or produced a non-finite loss."""


class ThresholdUnset(RuntimeError):
    """predict() requires select_threshold() to have run."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    seed: int = 0
    pointwise_mix: float = 0.5  # weight of the pointwise BCE term next to the pair loss

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if not 0.0 <= self.pointwise_mix <= 1.0:
            raise ValueError("pointwise mix must be in [0, 1]")

    def digest(self) -> str:
        payload = repr((self.learning_rate, self.epochs, self.seed, self.pointwise_mix))
        return hashlib.blake2b(payload.encode(), digest_size=8).hexdigest()


@dataclass(frozen=True)
class GroundingModel:
    weights: tuple[float, ...]
    threshold: float | None = None  # score space; set by select_threshold
    meta: dict | None = None

    def weight_vector(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    def with_threshold(self, tau: float) -> "GroundingModel":
        return replace(self, threshold=tau)


def sigmoid(s: float) -> float:
    if s >= 0:
        return 1.0 / (1.0 + math.exp(-min(s, 700.0)))
    z = math.exp(max(s, -700.0))
    return z / (1.0 + z)


def featurize(env: Environment, route: Route, example: DetectionExample) -> np.ndarray:
    """Grounding features for the wrapped span.

    The window is the aligned route position of the span's clause, widened by
    one step on each side for observation matching; direction phrases are
    checked against the central action only, since adjacent actions belong to
    other clauses. Proportional clause mapping applies when the example carries
    no alignment metadata.
    """
    tokens = example.unmarked_tokens()
    text = example.span_text()
    ann = annotate(tokens, alignment=example.alignment)
    n_pos = len(route.steps) + 1
    clauses = ann.clauses()

    clause = clause_of_token(tokens, example.i)
    if clause in ann.alignment:
        position = ann.alignment[clause]
        position = None if position is None else min(position, n_pos - 1)
    else:
        position = proportional_alignment(len(clauses), n_pos)[clause]

    f = np.zeros(DIM, dtype=np.float64)
    f[0] = 1.0 if example.kind == lexicon.ROOM_KIND else 0.0
    f[1] = 1.0 if example.kind == lexicon.OBJECT_KIND else 0.0
    f[2] = 1.0 if example.kind == lexicon.DIRECTION_KIND else 0.0

    all_rooms = [speaker.position_observation(env, route, p).room_label for p in range(n_pos)]
    all_objects = [
        {name for name, _ in speaker.position_observation(env, route, p).visible}
        for p in range(n_pos)
    ]
    if position is not None:
        window = [p for p in (position - 1, position, position + 1) if 0 <= p < n_pos]
        f[3] = 1.0 if any(all_rooms[p] == text for p in window) else 0.0
        f[5] = 1.0 if any(text in all_objects[p] for p in window) else 0.0
        f[7] = 1.0 if text in speaker.valid_direction_phrases(env, route, position) else 0.0
        action = speaker.position_action(route, position)
        if action is not None and example.kind == lexicon.DIRECTION_KIND:
            try:
                row = lexicon.substitution_row(text)
            except lexicon.UnknownDirectionPhrase:
                row = ()
            f[8] = 1.0 if lexicon.action_phrase(action.direction_label) in row else 0.0
    f[4] = 1.0 if any(r == text for r in all_rooms) else 0.0
    f[6] = 1.0 if any(text in objs for objs in all_objects) else 0.0

    span_texts = [s.text(tokens) for s in ann.phrase_spans]
    f[9] = 1.0 if span_texts.count(text) > 1 else 0.0
    f[10] = 1.0 if position is None else 0.0
    f[11] = float(np.clip(len(clauses) - n_pos, -3, 3)) / 3.0
    f[12] = example.i / max(1, len(tokens) - 1)
    f[13] = 1.0
    return f


def score(model: GroundingModel, features: np.ndarray) -> float:
    """Linear score s(x) = <weights, features>."""
    w = model.weight_vector()
    if w.shape != features.shape:
        raise ValueError(f"dimension mismatch: {w.shape} vs {features.shape}")
    return float(np.dot(w, features))


def confidence(model: GroundingModel, features: np.ndarray) -> float:
    """Hallucination confidence sigmoid(s(x)) in (0, 1)."""
    return sigmoid(score(model, features))


def _stable_log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _sigmoid_vec(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -700.0, 700.0)))


def pair_loss_and_grad(
    w: np.ndarray, f_pos: np.ndarray, f_neg: np.ndarray, mix: float
) -> tuple[float, np.ndarray]:
    """Mean pairwise logistic loss -log sigmoid(s+ - s-), plus mix * pointwise BCE."""
    diff = f_pos - f_neg
    margins = diff @ w
    loss = float(np.mean(-_stable_log_sigmoid(margins)))
    grad = -(diff * (1.0 - _sigmoid_vec(margins))[:, None]).mean(axis=0)
    if mix > 0.0:
        stacked = np.vstack([f_pos, f_neg])
        labels = np.concatenate([np.ones(len(f_pos)), np.zeros(len(f_neg))])
        s = stacked @ w
        bce = np.where(labels == 1.0, -_stable_log_sigmoid(s), -_stable_log_sigmoid(-s))
        loss += mix * float(np.mean(bce))
        grad = grad + mix * (stacked * (_sigmoid_vec(s) - labels)[:, None]).mean(axis=0)
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}")
    return loss, grad


def featurize_pairs(
    pairs: list[PairedExample], envs: dict[str, Environment]
) -> tuple[np.ndarray, np.ndarray]:
    f_pos = np.array([featurize(envs[p.positive.env_id], p.positive.route, p.positive) for p in pairs])
    f_neg = np.array([featurize(envs[p.negative.env_id], p.negative.route, p.negative) for p in pairs])
    return f_pos, f_neg


def train_contrastive(
    pairs: list[PairedExample],
    envs: dict[str, Environment],
    config: TrainConfig | None = None,
    task: str = DETECTION_TASK,
) -> GroundingModel:
    """Deterministic full-batch gradient descent on the contrastive objective.

    The loss never increases across epochs: a step that would increase it is
    retried with a halved learning rate. Feature rows are canonicalized first,
    so training is exactly invariant to pair order.
    """
    if not pairs:
        raise ValueError("no training pairs")
    config = config or TrainConfig()
    f_pos, f_neg = featurize_pairs(pairs, envs)
    return train_on_features(f_pos, f_neg, config, task)


def train_on_features(
    f_pos: np.ndarray, f_neg: np.ndarray, config: TrainConfig, task: str = DETECTION_TASK
) -> GroundingModel:
    order = np.lexsort(np.hstack([f_pos, f_neg]).T[::-1])
    f_pos, f_neg = f_pos[order], f_neg[order]

    w = np.zeros(f_pos.shape[1], dtype=np.float64)
    lr = config.learning_rate
    loss, grad = pair_loss_and_grad(w, f_pos, f_neg, config.pointwise_mix)
    for _ in range(config.epochs):
        while True:
            candidate = w - lr * grad
            new_loss, new_grad = pair_loss_and_grad(candidate, f_pos, f_neg, config.pointwise_mix)
            if new_loss <= loss or lr < 1e-12:
                break
            lr *= 0.5
        if new_loss > loss:
            break  # learning rate exhausted; keep the best iterate
        w, loss, grad = candidate, new_loss, new_grad
    if not np.all(np.isfinite(w)):
        raise TrainingError("non-finite weights after training")
    return GroundingModel(
        weights=tuple(float(v) for v in w),
        threshold=None,
        meta={"trained_on": task, "seed": config.seed, "config": config.digest()},
    )


def macro_f1_counts(predictions: list[bool], golds: list[bool]) -> float:
    """Macro F-1 over the two classes; a class with zero support scores 0."""
    if len(predictions) != len(golds):
        raise ValueError("prediction/gold length mismatch")
    f1s = []
    for positive in (True, False):
        tp = sum(1 for p, g in zip(predictions, golds) if p == positive and g == positive)
        fp = sum(1 for p, g in zip(predictions, golds) if p == positive and g != positive)
        fn = sum(1 for p, g in zip(predictions, golds) if p != positive and g == positive)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return sum(f1s) / 2.0


def select_threshold(
    model: GroundingModel,
    dev_features: np.ndarray,
    dev_labels: list[bool],
) -> float:
    """Score-space threshold maximizing macro F-1 on the dev set.

    Candidates are midpoints between consecutive distinct sorted scores plus
    the two degenerate all-positive/all-negative thresholds; ties break toward
    the smallest threshold.
    """
    if len(dev_features) == 0 or len(dev_labels) != len(dev_features):
        raise ValueError("dev set empty or mismatched")
    if len(set(dev_labels)) < 2:
        raise ValueError("dev set must contain both labels")
    w = model.weight_vector()
    scores = dev_features @ w
    distinct = sorted(set(float(s) for s in scores))
    candidates = [-math.inf]
    candidates += [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
    candidates.append(math.inf)
    best_tau = None
    best_f1 = -1.0
    for tau in candidates:
        preds = [float(s) > tau for s in scores]
        f1 = macro_f1_counts(preds, list(dev_labels))
        if f1 > best_f1:
            best_f1, best_tau = f1, tau
    return float(best_tau)


def featurize_examples(
    examples: list[DetectionExample], envs: dict[str, Environment]
) -> np.ndarray:
    return np.array([featurize(envs[e.env_id], e.route, e) for e in examples])


def select_threshold_for(
    model: GroundingModel, examples: list[DetectionExample], envs: dict[str, Environment]
) -> float:
    return select_threshold(model, featurize_examples(examples, envs), [e.label for e in examples])


def predict(
    model: GroundingModel, env: Environment, route: Route, example: DetectionExample
) -> tuple[bool, float]:
    """Thresholded label and raw confidence; the comparison is strict (s > tau)."""
    if model.threshold is None:
        raise ThresholdUnset("call select_threshold before predict")
    s = score(model, featurize(env, route, example))
    return s > model.threshold, sigmoid(s)
