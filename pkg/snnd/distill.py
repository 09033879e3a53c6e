"""
Zeitliche Selbstdistillation zwischen den Submodellen eines SNN.

Die Submodelle werden über eine labelfreie Metrik ihrer Softmax-Ausgaben
bewertet (Batch-Mittel, ohne Gradient). Das stärkste (t_strong) und das
schwächste (t_weak) Submodell bilden das Lehrer/Schüler-Paar; die Schemata
bestimmen, wer wen in welcher Richtung destilliert.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import (
    PROB_CLAMP,
    Tensor,
    cross_entropy,
    kl_divergence,
    mean,
    mse_loss,
    softmax,
    softmax_array,
    stack,
)
from .config import METRICS, SCHEMES, DistillConfig
from .errors import ConfigError, UsageError
from .network import TimestepOutputs, mean_logits


@dataclass
class SubmodelScore:
    """Bewertung der T Submodelle eines Batches."""

    per_timestep: List[float]
    t_strong: int
    t_weak: int

    @property
    def timesteps(self) -> int:
        return len(self.per_timestep)


@dataclass
class LossParts:
    """Gesamtverlust und seine Bestandteile."""

    loss: Tensor
    ce_part: Tensor
    distill_part: Tensor
    score: SubmodelScore

    @property
    def ce(self) -> float:
        return self.ce_part.item()

    @property
    def distill(self) -> float:
        return self.distill_part.item()


# ---------------------------------------------------------------------------
# Bewertung und Auswahl
# ---------------------------------------------------------------------------


def metric_score(logits_t, metric: str) -> float:
    """
    Batch-Mittel einer Stärke-Metrik (größer = stärker).

    Args:
        logits_t: Logits eines Submodells [B, C] (Tensor oder Array)
        metric: confidence, entropy (negiert), margin oder diversity

    Raises:
        ConfigError: Bei unbekannter Metrik
    """
    data = logits_t.data if isinstance(logits_t, Tensor) else np.asarray(logits_t)
    p = softmax_array(data, 1.0)

    if metric == "confidence":
        values = p.max(axis=1)
    elif metric == "entropy":
        values = (p * np.log(np.maximum(p, PROB_CLAMP))).sum(axis=1)
    elif metric == "margin":
        ordered = np.sort(p, axis=1)
        values = ordered[:, -1] - ordered[:, -2]
    elif metric == "diversity":
        values = p.var(axis=1)
    else:
        raise ConfigError(f"Unbekannte Metrik '{metric}', erlaubt: {', '.join(METRICS)}")
    return float(values.mean())


def _strong_weak(scores: Sequence[float]) -> Tuple[int, int]:
    t_strong = int(np.argmax(scores))
    t_weak = int(np.argmin(scores))
    if t_strong == t_weak:
        return 0, 1
    return t_strong, t_weak


def identify(out: TimestepOutputs, metric: str = "confidence") -> SubmodelScore:
    """
    Bestimmt stärkstes und schwächstes Submodell per Batch-Mittel.

    Gleichstände gehen an den niedrigsten Index; sind alle Werte gleich, gilt
    t_strong = 0 und t_weak = 1.
    """
    logits = out.logits.data
    scores = [metric_score(logits[t], metric) for t in range(logits.shape[0])]
    t_strong, t_weak = _strong_weak(scores)
    return SubmodelScore(per_timestep=scores, t_strong=t_strong, t_weak=t_weak)


def rank(score: SubmodelScore) -> List[int]:
    """Zeitschritte nach absteigender Bewertung, Gleichstände nach Index."""
    return [int(t) for t in np.argsort(-np.asarray(score.per_timestep), kind="stable")]


def select(
    out: TimestepOutputs, cfg: DistillConfig, rng: Optional[np.random.Generator] = None
) -> SubmodelScore:
    """
    Bewertet die Submodelle und wählt das Paar gemäß ``cfg.selection``.

    Raises:
        UsageError: Wenn selection=random ohne Zufallsgenerator aufgerufen wird
    """
    score = identify(out, cfg.metric)
    last = score.timesteps - 1

    if cfg.selection == "random":
        if rng is None:
            raise UsageError("selection=random benötigt einen Zufallsgenerator")
        strong, weak = rng.choice(score.timesteps, size=2, replace=False)
        score.t_strong, score.t_weak = int(strong), int(weak)
    elif cfg.selection == "last_first":
        score.t_strong, score.t_weak = last, 0
    elif cfg.selection == "first_last":
        score.t_strong, score.t_weak = 0, last
    return score


# ---------------------------------------------------------------------------
# Verluste
# ---------------------------------------------------------------------------


def soften(logits: Tensor, alpha: float) -> Tensor:
    """Softmax bei Temperatur alpha."""
    return softmax(logits, alpha)


def _teacher(logits: Tensor, cfg: DistillConfig) -> Tensor:
    return logits.detach() if cfg.detach_teacher else logits


def pair_loss(teacher_logits: Tensor, student_logits: Tensor, cfg: DistillConfig) -> Tensor:
    """
    Distillationsverlust eines Lehrer/Schüler-Paars.

    kl: α² · KL(soften(Lehrer) || soften(Schüler)); mse: MSE der rohen Logits.
    """
    teacher = _teacher(teacher_logits, cfg)
    if cfg.loss_fn == "mse":
        return mse_loss(teacher, student_logits)
    alpha = cfg.alpha
    return kl_divergence(soften(teacher, alpha), soften(student_logits, alpha)) * (alpha * alpha)


def ensemble_teacher_loss(
    teacher_logits: Sequence[Tensor], student_logits: Tensor, cfg: DistillConfig
) -> Tensor:
    """Mehrere Lehrer: Mittel der weichen Verteilungen (kl) bzw. der Logits (mse)."""
    teachers = [_teacher(t, cfg) for t in teacher_logits]
    if cfg.loss_fn == "mse":
        return mse_loss(mean(stack(teachers), axis=0), student_logits)
    alpha = cfg.alpha
    target = mean(stack([soften(t, alpha) for t in teachers]), axis=0)
    return kl_divergence(target, soften(student_logits, alpha)) * (alpha * alpha)


def distill_terms(
    out: TimestepOutputs, cfg: DistillConfig, rng: Optional[np.random.Generator] = None
) -> Tuple[List[Tuple[float, Tensor]], SubmodelScore]:
    """
    Ungewichtete Distillationsterme des konfigurierten Schemas mit ihren Koeffizienten.

    Args:
        out: Ausgaben der T Submodelle
        cfg: Distillationskonfiguration
        rng: Zufallsgenerator, nur für selection=random nötig

    Returns:
        ([(λ, L), ...], Bewertung der Submodelle); leer für scheme=none

    Raises:
        ConfigError: Bei unbekanntem Schema
    """
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"Unbekanntes Schema '{cfg.scheme}', erlaubt: {', '.join(SCHEMES)}")

    score = select(out, cfg, rng)
    timesteps = out.timesteps
    strong, weak = score.t_strong, score.t_weak
    o = out.at

    if cfg.scheme == "none":
        return [], score
    if cfg.scheme == "s2w":
        return [(cfg.lambda_s2w, pair_loss(o(strong), o(weak), cfg))], score
    if cfg.scheme == "w2s":
        return [(cfg.lambda_w2s, pair_loss(o(weak), o(strong), cfg))], score
    if cfg.scheme == "simultaneous":
        return [
            (cfg.lambda_s2w, pair_loss(o(strong), o(weak), cfg)),
            (cfg.lambda_w2s, pair_loss(o(weak), o(strong), cfg)),
        ], score

    lam = cfg.directional_lambda
    s2w_direction = cfg.direction == "s2w"

    if cfg.scheme == "ensemble_teacher":
        student = weak if s2w_direction else strong
        teachers = [o(t) for t in range(timesteps) if t != student]
        return [(lam, ensemble_teacher_loss(teachers, o(student), cfg))], score

    if cfg.scheme == "ensemble_student":
        teacher = strong if s2w_direction else weak
        total = None
        for t in range(timesteps):
            if t == teacher:
                continue
            term = pair_loss(o(teacher), o(t), cfg)
            total = term if total is None else total + term
        return [(lam, total * (1.0 / (timesteps - 1)))], score

    # cascade
    ranked = rank(score)
    total = None
    for higher, lower in zip(ranked[:-1], ranked[1:]):
        if s2w_direction:
            term = pair_loss(o(higher), o(lower), cfg)
        else:
            term = pair_loss(o(lower), o(higher), cfg)
        total = term if total is None else total + term
    return [(lam, total * (1.0 / (timesteps - 1)))], score


def _weighted_sum(terms: Sequence[Tuple[float, Tensor]]) -> Tensor:
    total = Tensor(0.0)
    for i, (lam, term) in enumerate(terms):
        weighted = term * lam
        total = weighted if i == 0 else total + weighted
    return total


def scheme_loss(
    out: TimestepOutputs, cfg: DistillConfig, rng: Optional[np.random.Generator] = None
) -> Tuple[Tensor, SubmodelScore]:
    """Distillationsverlust des Schemas mit eingerechneten Koeffizienten λ."""
    terms, score = distill_terms(out, cfg, rng)
    return _weighted_sum(terms), score


def total_loss(
    out: TimestepOutputs,
    labels,
    cfg: DistillConfig,
    rng: Optional[np.random.Generator] = None,
) -> LossParts:
    """
    Kreuzentropie der gemittelten Logits plus λ-gewichteter Distillationsverlust.

    ``distill_part`` ist der ungewichtete Distillationsterm, also gilt
    loss = ce + λ · distill. Bei simultaneous ist er die Summe beider
    ungewichteter Terme; die Zerlegung gilt dort mit λ_s2w = λ_w2s.

    Ohne aktive Distillation (Schema none oder alle relevanten λ = 0) ist der
    Verlust exakt der Kreuzentropieteil; die Bewertung wird trotzdem
    berechnet, damit die Protokolle vergleichbar bleiben.
    """
    ce = cross_entropy(mean_logits(out), labels)
    if not cfg.is_active:
        return LossParts(loss=ce, ce_part=ce, distill_part=Tensor(0.0), score=select(out, cfg, rng))
    terms, score = distill_terms(out, cfg, rng)
    unweighted = terms[0][1]
    for _, term in terms[1:]:
        unweighted = unweighted + term
    return LossParts(
        loss=ce + _weighted_sum(terms), ce_part=ce, distill_part=unweighted, score=score
    )
