"""Shared fixtures: the trained policies used by the learning criteria.

All training is bit-deterministic, so the session fixture may point at a
persistent cache directory (ATSCLAB_TEST_CACHE) to skip retraining between
runs; a fresh run in a temporary directory produces identical artifacts.
"""

import os
from pathlib import Path

import pytest


TRAIN_SEEDS = (0, 1, 2)
MAIN_EPISODES = 160
SPEED_EPISODES = 120


@pytest.fixture(scope="session")
def training_runs(tmp_path_factory):
    from atsclab import mappo
    from atsclab.scenario import load_scenario, with_full_phase_set

    cache = os.environ.get("ATSCLAB_TEST_CACHE")
    root = Path(cache) if cache else tmp_path_factory.mktemp("acceptance-training")
    root.mkdir(parents=True, exist_ok=True)

    toy2 = load_scenario("toy2")
    toy2_wide = with_full_phase_set(toy2)

    runs = {}
    main_hp = mappo.Hyperparams(episode_len_s=1800.0)
    runs["main"] = mappo.train(
        toy2, main_hp, n_episodes=MAIN_EPISODES, seed=0,
        out_dir=root / "main", checkpoint_every=20, resume=True)

    speed_hp = mappo.Hyperparams(episode_len_s=900.0)
    for seed in TRAIN_SEEDS:
        runs[f"4ph_{seed}"] = mappo.train(
            toy2, speed_hp, n_episodes=SPEED_EPISODES, seed=seed,
            out_dir=root / f"speed_4ph_{seed}", checkpoint_every=30, resume=True)
        runs[f"8ph_{seed}"] = mappo.train(
            toy2_wide, speed_hp, n_episodes=SPEED_EPISODES, seed=seed,
            out_dir=root / f"speed_8ph_{seed}", checkpoint_every=30, resume=True)

    return {
        "root": root,
        "runs": runs,
        "main_hp": main_hp,
        "speed_hp": speed_hp,
        "toy2": toy2,
        "toy2_wide": toy2_wide,
    }
