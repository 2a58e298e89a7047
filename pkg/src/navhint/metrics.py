"""Intrinsic and extrinsic evaluation metrics plus the random baselines."""

from __future__ import annotations

import random
import warnings
from dataclasses import dataclass, field

from .envmodel import Environment, path_distance
from .grounding import macro_f1_counts
from .perturb import CandidateSet
from .remedy import Suggestion, SuggestionList

SUCCESS_RADIUS_M = 3.0  # inclusive boundary


def macro_f1(predictions: list[bool], golds: list[bool]) -> float:
    """Mean of the positive-class and negative-class F-1 scores."""
    if len(predictions) != len(golds):
        raise ValueError("prediction/gold length mismatch")
    if not predictions:
        raise ValueError("empty prediction list")
    for positive in (True, False):
        if not any(g == positive for g in golds):
            warnings.warn(f"class {positive} has zero support; its F-1 counts as 0", stacklevel=2)
    return macro_f1_counts(predictions, golds)


def per_class_report(predictions: list[bool], golds: list[bool]) -> dict:
    classes = {}
    for positive in (True, False):
        tp = sum(1 for p, g in zip(predictions, golds) if p == positive and g == positive)
        fp = sum(1 for p, g in zip(predictions, golds) if p == positive and g != positive)
        fn = sum(1 for p, g in zip(predictions, golds) if p != positive and g == positive)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        classes["positive" if positive else "negative"] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": sum(1 for g in golds if g == positive),
        }
    return classes


def recall_at_k(
    suggestion_lists: list[SuggestionList],
    golds: list[str],
    k: int = 3,
    candidate_sets: list[CandidateSet] | None = None,
) -> float:
    """Fraction of examples whose top-k suggestions contain the gold correction.

    Examples whose gold is missing from the candidate set are excluded with a
    warning (they cannot be recalled by any ranking).
    """
    if len(suggestion_lists) != len(golds):
        raise ValueError("suggestion/gold length mismatch")
    hits = 0
    evaluated = 0
    excluded = 0
    for idx, (ranked, gold) in enumerate(zip(suggestion_lists, golds)):
        if candidate_sets is not None and gold not in candidate_sets[idx].candidates:
            excluded += 1
            continue
        evaluated += 1
        if gold in [s.candidate for s in ranked.items[:k]]:
            hits += 1
    if excluded:
        warnings.warn(f"excluded {excluded} examples whose gold is not a candidate", stacklevel=2)
    if not evaluated:
        raise ValueError("no evaluable examples")
    return hits / evaluated


@dataclass(frozen=True)
class Episode:
    episode_id: str
    env_id: str
    goal: str
    final_node: str
    trajectory: tuple[str, ...]
    checks_used: int
    nav_error_m: float

    @property
    def success(self) -> bool:
        return self.nav_error_m <= SUCCESS_RADIUS_M


def navigation_error(env: Environment, final_node: str, goal: str) -> float:
    """Shortest-path distance from the final location to the goal."""
    return path_distance(env, final_node, goal)


def success_rate(episodes: list[Episode]) -> float:
    """Fraction of episodes ending within the success radius (inclusive)."""
    if not episodes:
        raise ValueError("no episodes")
    return sum(1 for e in episodes if e.success) / len(episodes)


def mean(values: list[float]) -> float:
    return sum(values) / len(values)


def median(values: list[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    return ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2.0


def random_detection_baseline(n_examples: int, seed: int) -> list[bool]:
    """Uniform coin flip per example."""
    rng = random.Random(seed)
    return [rng.random() < 0.5 for _ in range(n_examples)]


def random_suggestion_baseline(
    candidate_sets: list[CandidateSet], seed: int, k: int = 3
) -> list[SuggestionList]:
    """Uniform k-subset of each candidate set (the whole set when it is small)."""
    rng = random.Random(seed)
    lists = []
    for cands in candidate_sets:
        pool = list(cands.candidates)
        picked = pool if len(pool) <= k else rng.sample(pool, k)
        items = tuple(Suggestion(candidate=c, score=0.0) for c in picked)
        lists.append(SuggestionList(for_highlight=cands.for_span[:2], items=items))
    return lists


@dataclass
class DetectionReport:
    system: str
    split: str
    macro_f1: float
    per_class: dict
    count: int

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "split": self.split,
            "macro_f1": round(self.macro_f1, 6),
            "per_class": self.per_class,
            "count": self.count,
        }


@dataclass
class SuggestionReport:
    system: str
    split: str
    recall_at_3: float
    count: int
    mean_candidates: float

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "split": self.split,
            "recall_at_3": round(self.recall_at_3, 6),
            "count": self.count,
            "mean_candidates": round(self.mean_candidates, 3),
        }


@dataclass
class NavReport:
    condition: str
    success_rate: float
    mean_error_m: float
    median_error_m: float
    mean_checks: float
    episodes: list[Episode] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "success_rate": round(self.success_rate, 6),
            "mean_error_m": round(self.mean_error_m, 6),
            "median_error_m": round(self.median_error_m, 6),
            "mean_checks": round(self.mean_checks, 6),
            "episodes": [
                {
                    "episode_id": e.episode_id,
                    "env_id": e.env_id,
                    "goal": e.goal,
                    "final_node": e.final_node,
                    "trajectory": list(e.trajectory),
                    "checks_used": e.checks_used,
                    "nav_error_m": round(e.nav_error_m, 6),
                    "success": e.success,
                }
                for e in self.episodes
            ],
        }


def nav_report(condition: str, episodes: list[Episode]) -> NavReport:
    errors = [e.nav_error_m for e in episodes]
    return NavReport(
        condition=condition,
        success_rate=success_rate(episodes),
        mean_error_m=mean(errors),
        median_error_m=median(errors),
        mean_checks=mean([float(e.checks_used) for e in episodes]),
        episodes=list(episodes),
    )
