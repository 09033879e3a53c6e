"""
Auswertung zur Inferenzzeit.

- Genauigkeit mit reduzierter Zeitschrittzahl
- Früher Ausstieg anhand der Konfidenz der kumulierten mittleren Logits
- Robustheit gegen Gaußsches Rauschen, FGSM und PGD (BIM = PGD ohne Zufallsstart)

Alle Funktionen verändern die Netzparameter nicht.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .autodiff import Tensor, backward, cross_entropy, no_grad, softmax_array
from .config import AttackConfig, EarlyExitConfig
from .data import Dataset
from .errors import UsageError
from .network import Network, forward, mean_logits, truncated_forward

DEFAULT_BATCH_SIZE = 256

logger = logging.getLogger("snnd.evaluation")


@dataclass
class EvalRow:
    """Eine Zeile von eval.csv."""

    mode: str  # "t_max" oder "early_exit"
    parameter: float
    accuracy: float
    avg_timesteps: float


@dataclass
class EarlyExitResult:
    accuracy: float
    avg_timesteps: float


@dataclass
class RobustRow:
    """Eine Zeile des Robustheitsberichts."""

    attack: str
    epsilon: float
    sigma: float
    steps: int
    accuracy: float
    avg_timesteps: Optional[float] = None


def _logits(net: Network, inputs: np.ndarray, t_max: int) -> np.ndarray:
    with no_grad():
        return truncated_forward(net, inputs, t_max).logits.data


def eval_at(net: Network, dataset: Dataset, t_max: int, batch_size: int = DEFAULT_BATCH_SIZE) -> float:
    """
    Genauigkeit von argmax(Mittel der ersten t_max Logit-Scheiben).

    Raises:
        UsageError: Wenn t_max außerhalb von [1, T] liegt
    """
    if not 1 <= t_max <= net.config.timesteps:
        raise UsageError(f"t_max muss in [1, {net.config.timesteps}] liegen, ist {t_max}")
    correct = 0
    for inputs, labels in dataset.batches(batch_size):
        logits = _logits(net, inputs, t_max)
        correct += int((logits.mean(axis=0).argmax(axis=1) == labels).sum())
    return correct / len(dataset)


def early_exit(
    net: Network, dataset: Dataset, cfg: EarlyExitConfig, batch_size: int = DEFAULT_BATCH_SIZE
) -> EarlyExitResult:
    """
    Dynamische Inferenz mit frühem Ausstieg.

    Je Beispiel wird beim ersten t ausgestiegen, an dem die maximale
    Softmax-Wahrscheinlichkeit der über 1..t gemittelten Logits die Schwelle
    erreicht, spätestens bei max_timesteps. Die Kausalität des Netzes erlaubt,
    alle Zeitschritte eines Batches auf einmal zu berechnen.
    """
    max_t = cfg.max_timesteps or net.config.timesteps
    if not 1 <= max_t <= net.config.timesteps:
        raise UsageError(f"max_timesteps muss in [1, {net.config.timesteps}] liegen, ist {max_t}")

    correct = 0
    exit_sum = 0
    for inputs, labels in dataset.batches(batch_size):
        logits = _logits(net, inputs, max_t)
        cumulative = np.stack([logits[: t + 1].mean(axis=0) for t in range(max_t)])
        confidence = softmax_array(cumulative).max(axis=-1)  # [t, B]
        reached = confidence >= cfg.threshold
        exit_t = np.where(reached.any(axis=0), reached.argmax(axis=0), max_t - 1)
        columns = np.arange(len(labels))
        predictions = cumulative[exit_t, columns].argmax(axis=-1)
        correct += int((predictions == labels).sum())
        exit_sum += int((exit_t + 1).sum())

    return EarlyExitResult(accuracy=correct / len(dataset), avg_timesteps=exit_sum / len(dataset))


# ---------------------------------------------------------------------------
# Angriffe
# ---------------------------------------------------------------------------


def input_gradient(net: Network, inputs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient der Kreuzentropie der mittleren Logits nach der Eingabe [T, B, D]."""
    with net.frozen():
        x = Tensor(inputs, requires_grad=True)
        loss = cross_entropy(mean_logits(forward(net, x)), labels)
        backward(loss)
    return np.zeros_like(x.data) if x.grad is None else x.grad


def gn_attack(
    inputs: np.ndarray,
    cfg: AttackConfig,
    bounds: Tuple[float, float],
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """x' = clip(x + ε·N(0, σ²), min, max)."""
    rng = rng or np.random.default_rng(cfg.seed)
    noise = rng.normal(0.0, cfg.sigma, size=inputs.shape)
    return np.clip(inputs + cfg.epsilon * noise, *bounds)


def fgsm_attack(
    net: Network,
    inputs: np.ndarray,
    labels: np.ndarray,
    cfg: AttackConfig,
    bounds: Tuple[float, float],
) -> np.ndarray:
    """x' = clip(x + ε·sign(∇x CE), min, max), sign(0) = 0."""
    grad = input_gradient(net, inputs, labels)
    return np.clip(inputs + cfg.epsilon * np.sign(grad), *bounds)


def pgd_attack(
    net: Network,
    inputs: np.ndarray,
    labels: np.ndarray,
    cfg: AttackConfig,
    bounds: Tuple[float, float],
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Iteriertes FGSM mit Projektion auf die ℓ∞-Kugel mit Radius ε um x."""
    eps = cfg.epsilon
    adv = inputs.copy()
    if cfg.random_start:
        rng = rng or np.random.default_rng(cfg.seed)
        adv = np.clip(inputs + rng.uniform(-eps, eps, size=inputs.shape), *bounds)
    for _ in range(cfg.pgd_steps):
        grad = input_gradient(net, adv, labels)
        adv = adv + cfg.pgd_alpha * np.sign(grad)
        adv = np.clip(adv, inputs - eps, inputs + eps)
        adv = np.clip(adv, *bounds)
    return adv


def attack_batch(
    net: Network,
    inputs: np.ndarray,
    labels: np.ndarray,
    cfg: AttackConfig,
    bounds: Tuple[float, float],
    rng: np.random.Generator,
) -> np.ndarray:
    if cfg.kind == "gn":
        return gn_attack(inputs, cfg, bounds, rng)
    if cfg.kind == "fgsm":
        return fgsm_attack(net, inputs, labels, cfg, bounds)
    return pgd_attack(net, inputs, labels, cfg, bounds, rng)


def robust_eval(
    net: Network,
    dataset: Dataset,
    configs: Iterable[AttackConfig],
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> List[RobustRow]:
    """
    Saubere Genauigkeit plus Genauigkeit unter jedem Angriff.

    Returns:
        Liste von RobustRow, beginnend mit der Zeile "clean"
    """
    timesteps = net.config.timesteps
    rows = [RobustRow("clean", 0.0, 0.0, 0, eval_at(net, dataset, timesteps, batch_size))]

    for cfg in configs:
        rng = np.random.default_rng(cfg.seed)
        correct = 0
        for inputs, labels in dataset.batches(batch_size):
            adv = attack_batch(net, inputs, labels, cfg, dataset.input_bounds, rng)
            logits = _logits(net, adv, timesteps)
            correct += int((logits.mean(axis=0).argmax(axis=1) == labels).sum())
        steps = cfg.pgd_steps if cfg.kind == "pgd" else (1 if cfg.kind == "fgsm" else 0)
        row = RobustRow(cfg.kind, cfg.epsilon, cfg.sigma, steps, correct / len(dataset))
        logger.info(f"Angriff {cfg.kind} (ε={cfg.epsilon}, σ={cfg.sigma}): {row.accuracy:.4f}")
        rows.append(row)
    return rows
