"""
Trainingsschleife für snnd.

SGD mit Momentum und Weight Decay, stufenweiser Lernratenabfall,
deterministisches Mischen je Epoche und Protokollierung je Epoche
(Verluste, Genauigkeit je Zeitschritt, Häufigkeit der starken/schwachen
Zeitschritte).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Protocol, Sequence

import numpy as np

from .autodiff import Tensor, backward, no_grad
from .config import DistillConfig, OptimConfig
from .data import Dataset
from .distill import total_loss
from .errors import DataError, NumericError
from .network import Network, forward, save_checkpoint


@dataclass
class RunRecord:
    """Kennzahlen einer Epoche auf einer Teilmenge (train oder test)."""

    epoch: int
    split: str
    lr: float
    loss_ce: float
    loss_distill: float
    acc_mean: float
    acc_per_timestep: List[float]
    t_strong_hist: List[int]
    t_weak_hist: List[int]


class RecordSink(Protocol):
    def write(self, record: RunRecord) -> None: ...


@dataclass
class FitResult:
    """Ergebnis von ``fit``."""

    network: Network
    best_network: Network
    records: List[RunRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None


def sgd_step(
    params: Sequence[Tensor],
    grads: Sequence[Optional[np.ndarray]],
    velocity: Sequence[np.ndarray],
    cfg: OptimConfig,
    lr: float,
) -> None:
    """
    Ein SGD-Schritt mit Momentum, in-place.

    g' = grad + wd·param; v ← μ·v + g'; param ← param − lr·v
    """
    for param, grad, v in zip(params, grads, velocity):
        g = np.zeros_like(param.data) if grad is None else grad
        if cfg.weight_decay:
            g = g + cfg.weight_decay * param.data
        v *= cfg.momentum
        v += g
        param.data -= lr * v


def lr_at(epoch: int, cfg: OptimConfig) -> float:
    """Lernrate lr0 · factor^floor(epoch / drop_every)."""
    return cfg.lr0 * cfg.lr_drop_factor ** (epoch // cfg.lr_drop_every)


class _EpochStats:
    """Sammelt Kennzahlen über die Batches einer Epoche."""

    def __init__(self, timesteps: int):
        self.batches = 0
        self.samples = 0
        self.loss_ce = 0.0
        self.loss_distill = 0.0
        self.correct_mean = 0
        self.correct_t = np.zeros(timesteps, dtype=np.int64)
        self.strong_hist = np.zeros(timesteps, dtype=np.int64)
        self.weak_hist = np.zeros(timesteps, dtype=np.int64)

    def add(self, logits: np.ndarray, labels: np.ndarray, parts) -> None:
        self.batches += 1
        self.samples += len(labels)
        self.loss_ce += parts.ce
        self.loss_distill += parts.distill
        self.correct_mean += int((logits.mean(axis=0).argmax(axis=1) == labels).sum())
        self.correct_t += (logits.argmax(axis=2) == labels[None, :]).sum(axis=1)
        self.strong_hist[parts.score.t_strong] += 1
        self.weak_hist[parts.score.t_weak] += 1

    def record(self, epoch: int, split: str, lr: float) -> RunRecord:
        return RunRecord(
            epoch=epoch,
            split=split,
            lr=lr,
            loss_ce=self.loss_ce / self.batches,
            loss_distill=self.loss_distill / self.batches,
            acc_mean=self.correct_mean / self.samples,
            acc_per_timestep=[int(c) / self.samples for c in self.correct_t],
            t_strong_hist=[int(c) for c in self.strong_hist],
            t_weak_hist=[int(c) for c in self.weak_hist],
        )


class Trainer:
    """
    Orchestriert das Training eines Netzes.

    Der Zufall hängt nur von cfg.seed und der Epoche ab.
    """

    def __init__(
        self,
        net: Network,
        cfg: OptimConfig,
        dcfg: DistillConfig,
        logger: Optional[logging.Logger] = None,
    ):
        """
        Initialisiert den Trainer.

        Args:
            net: Zu trainierendes Netz (wird in-place verändert)
            cfg: Optimierer-Konfiguration
            dcfg: Distillationskonfiguration
            logger: Optionaler Logger
        """
        self.net = net
        self.cfg = cfg
        self.dcfg = dcfg
        self.logger = logger or logging.getLogger("snnd.train")
        self.velocity = [np.zeros_like(p.data) for p in net.params]

    def train_epoch(self, dataset: Dataset, epoch: int) -> RunRecord:
        """
        Eine Trainingsepoche.

        Raises:
            DataError: Bei leerem Datensatz
            NumericError: Wenn der Verlust nicht endlich ist
        """
        if len(dataset) == 0:
            raise DataError("Trainingsdatensatz ist leer")

        rng = np.random.default_rng([self.cfg.seed, epoch])
        order = rng.permutation(len(dataset))
        lr = lr_at(epoch, self.cfg)
        stats = _EpochStats(self.net.config.timesteps)

        for batch_no, (inputs, labels) in enumerate(dataset.batches(self.cfg.batch_size, order)):
            out = forward(self.net, inputs)
            parts = total_loss(out, labels, self.dcfg, rng)
            if not np.isfinite(parts.loss.item()):
                raise NumericError(f"Verlust nicht endlich in Epoche {epoch}, Batch {batch_no}")

            self.net.zero_grad()
            backward(parts.loss)
            sgd_step(
                self.net.params, [p.grad for p in self.net.params], self.velocity, self.cfg, lr
            )

            stats.add(out.logits.data, labels, parts)
            self.logger.debug(
                f"Epoche {epoch} Batch {batch_no}: ce={parts.ce:.4f} "
                f"distill={parts.distill:.4f} stark={parts.score.t_strong} "
                f"schwach={parts.score.t_weak}"
            )

        return stats.record(epoch, "train", lr)

    def evaluate_epoch(self, dataset: Dataset, epoch: int) -> RunRecord:
        """Auswertung ohne Gradienten und ohne Mischen."""
        if len(dataset) == 0:
            raise DataError("Testdatensatz ist leer")

        rng = np.random.default_rng([self.cfg.seed, epoch, 1])
        stats = _EpochStats(self.net.config.timesteps)
        with no_grad():
            for inputs, labels in dataset.batches(self.cfg.batch_size):
                out = forward(self.net, inputs)
                parts = total_loss(out, labels, self.dcfg, rng)
                stats.add(out.logits.data, labels, parts)
        return stats.record(epoch, "test", lr_at(epoch, self.cfg))

    def fit(
        self,
        train_set: Dataset,
        test_set: Dataset,
        sink: Optional[RecordSink] = None,
        checkpoint_dir: Optional[Path] = None,
    ) -> FitResult:
        """
        Trainiert über alle Epochen und wertet nach jeder Epoche aus.

        Args:
            train_set: Trainingsdaten
            test_set: Testdaten
            sink: Optionales Ziel für RunRecords (z.B. CSV)
            checkpoint_dir: Optionales Verzeichnis für final.snnm und best.snnm

        Returns:
            FitResult mit finalem und bestem Netz sowie allen Records
        """
        result = FitResult(network=self.net, best_network=self.net.clone())
        best_acc = -1.0

        for epoch in range(self.cfg.epochs):
            train_record = self.train_epoch(train_set, epoch)
            test_record = self.evaluate_epoch(test_set, epoch)

            for record in (train_record, test_record):
                result.records.append(record)
                if sink is not None:
                    sink.write(record)

            if test_record.acc_mean > best_acc:
                best_acc = test_record.acc_mean
                result.best_network = self.net.clone()
                result.best_epoch = epoch

            self.logger.info(
                f"Epoche {epoch + 1}/{self.cfg.epochs}: lr={train_record.lr:.4g} "
                f"ce={train_record.loss_ce:.4f} distill={train_record.loss_distill:.4f} "
                f"train={train_record.acc_mean:.4f} test={test_record.acc_mean:.4f} "
                f"t1={test_record.acc_per_timestep[0]:.4f}"
            )

        if checkpoint_dir is not None:
            checkpoint_dir = Path(checkpoint_dir)
            checkpoint_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(result.network, checkpoint_dir / "final.snnm", self.logger)
            save_checkpoint(result.best_network, checkpoint_dir / "best.snnm", self.logger)
            if result.best_epoch is not None:
                self.logger.info(
                    f"Bestes Modell aus Epoche {result.best_epoch + 1} (test={best_acc:.4f})"
                )

        return result


def train_epoch(
    net: Network,
    dataset: Dataset,
    cfg: OptimConfig,
    dcfg: DistillConfig,
    epoch: int,
    velocity: Optional[List[np.ndarray]] = None,
) -> RunRecord:
    """Eine Epoche mit frischem (oder übergebenem) Momentum-Puffer."""
    trainer = Trainer(net, cfg, dcfg)
    if velocity is not None:
        trainer.velocity = velocity
    return trainer.train_epoch(dataset, epoch)


def fit(
    net: Network,
    train_set: Dataset,
    test_set: Dataset,
    cfg: OptimConfig,
    dcfg: DistillConfig,
    sink: Optional[RecordSink] = None,
    checkpoint_dir: Optional[Path] = None,
    logger: Optional[logging.Logger] = None,
) -> FitResult:
    """Kurzform für ``Trainer(net, cfg, dcfg).fit(...)``."""
    return Trainer(net, cfg, dcfg, logger).fit(train_set, test_set, sink, checkpoint_dir)
