"""
Trendtests auf dem synthetischen Datensatz.

Diese Tests trainieren mehrere Netze und laufen nur mit ``pytest -m slow``.
"""

import pytest

from snnd.config import AttackConfig, DistillConfig, EarlyExitConfig, OptimConfig, SnnConfig, SynthConfig
from snnd.data import generate_synthetic, split
from snnd.evaluation import early_exit, eval_at, robust_eval
from snnd.network import build
from snnd.train import fit

pytestmark = pytest.mark.slow

SEEDS = range(5)


@pytest.fixture(scope="module")
def data():
    ds = generate_synthetic(SynthConfig(num_classes=4, features=32, timesteps=5, samples_per_class=500))
    return split(ds, 0.9, seed=0)


def _train(data, scheme: str, seed: int):
    train_set, test_set = data
    net = build(SnnConfig(layer_sizes=[32, 64, 4], timesteps=5), seed)
    optim = OptimConfig(epochs=40, seed=seed)
    return fit(net, train_set, test_set, optim, DistillConfig(scheme=scheme)).network


@pytest.fixture(scope="module")
def networks(data):
    return {
        (scheme, seed): _train(data, scheme, seed)
        for scheme in ("none", "s2w", "w2s")
        for seed in SEEDS
    }


@pytest.mark.parametrize("scheme", ["s2w", "w2s"])
def test_distillation_helps_mean_accuracy(data, networks, scheme):
    _, test_set = data
    wins = sum(
        eval_at(networks[(scheme, seed)], test_set, 5) > eval_at(networks[("none", seed)], test_set, 5)
        for seed in SEEDS
    )
    assert wins >= 4


@pytest.mark.parametrize("scheme", ["s2w", "w2s"])
def test_distillation_helps_first_timestep(data, networks, scheme):
    _, test_set = data
    wins = sum(
        eval_at(networks[(scheme, seed)], test_set, 1) > eval_at(networks[("none", seed)], test_set, 1)
        for seed in SEEDS
    )
    assert wins >= 4


def test_early_exit_trades_accuracy_for_timesteps(data, networks):
    _, test_set = data
    net = networks[("s2w", 0)]
    results = [early_exit(net, test_set, EarlyExitConfig(t)) for t in (0.95, 0.9, 0.8, 0.5)]
    averages = [r.avg_timesteps for r in results]
    assert all(a >= b for a, b in zip(averages, averages[1:]))
    assert results[0].accuracy >= eval_at(net, test_set, 5) - 0.02


def test_iterative_attack_is_stronger(data, networks):
    _, test_set = data
    rows = robust_eval(
        networks[("s2w", 0)],
        test_set,
        [AttackConfig("fgsm", epsilon=0.05), AttackConfig("pgd", epsilon=0.05, pgd_steps=7)],
    )
    clean, fgsm, pgd = (row.accuracy for row in rows)
    assert pgd <= fgsm <= clean
