from __future__ import annotations

import pytest

from navhint import corpus as corpus_mod
from navhint import envmodel, evaluation, speaker


@pytest.fixture(scope="session")
def small_env():
    return envmodel.generate_environment(42)


@pytest.fixture(scope="session")
def small_route(small_env):
    return envmodel.sample_route(small_env, 7, (2, 4))


@pytest.fixture(scope="session")
def small_instruction(small_env, small_route):
    return speaker.describe_route(small_env, small_route, 3)


@pytest.fixture(scope="session")
def mini_config():
    config = evaluation.ExperimentConfig(seed=11)
    config.corpus = corpus_mod.CorpusConfig(seed=11, n_envs=5, routes_per_env=8)
    config.n_detection_pairs = 300
    config.n_type_pairs = 200
    config.n_one_stage_pairs = 300
    config.n_eval_examples = 120
    config.n_suggestion_cases = 60
    config.n_episodes = 20
    return config


@pytest.fixture(scope="session")
def mini_systems(mini_config):
    return evaluation.train_systems(mini_config)
