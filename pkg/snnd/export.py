"""
Export-Modul für Laufartefakte.

Schreibt metrics.csv, eval.csv, robustness.csv, logits.csv, sweep.csv und
resolved-config.txt. Alle Dateien werden atomar geschrieben (temporäre Datei,
danach os.replace); Gleitkommazahlen werden mit repr() formatiert, damit
identische Läufe byte-identische Dateien erzeugen.
"""

import csv
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence

from .autodiff import no_grad
from .config import RunConfig
from .data import Dataset
from .evaluation import DEFAULT_BATCH_SIZE, EvalRow, RobustRow
from .network import Network, forward
from .train import RunRecord


@dataclass
class SweepRow:
    """Endergebnis eines Sweep-Laufs."""

    value: str
    seed: int
    acc_mean: float
    acc_per_timestep: List[float]


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_header(timesteps: int) -> List[str]:
    steps = range(1, timesteps + 1)
    return [
        "epoch",
        "split",
        "lr",
        "loss_ce",
        "loss_distill",
        "acc_mean",
        *(f"acc_t{t}" for t in steps),
        *(f"t_strong_h{t}" for t in steps),
        *(f"t_weak_h{t}" for t in steps),
    ]


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    os.replace(tmp_path, path)
    return path


class MetricsCsvSink:
    """
    Nimmt RunRecords während des Trainings entgegen.

    Die Zeilen werden in eine temporäre Datei geschrieben und erst bei
    ``close`` an ihren Zielort verschoben.
    """

    def __init__(self, path: Path, timesteps: int):
        self.path = Path(path)
        self.timesteps = timesteps
        self._tmp_path = self.path.with_name(self.path.name + ".tmp")
        self._file = open(self._tmp_path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(metrics_header(timesteps))

    def write(self, record: RunRecord) -> None:
        row = [
            record.epoch,
            record.split,
            record.lr,
            record.loss_ce,
            record.loss_distill,
            record.acc_mean,
            *record.acc_per_timestep,
            *record.t_strong_hist,
            *record.t_weak_hist,
        ]
        self._writer.writerow([_cell(v) for v in row])
        self._file.flush()

    def close(self) -> None:
        if self._file.closed:
            return
        self._file.close()
        os.replace(self._tmp_path, self.path)

    def __enter__(self) -> "MetricsCsvSink":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        else:
            self._file.close()
            self._tmp_path.unlink(missing_ok=True)


class ArtifactWriter:
    """
    Schreibt die Artefakte eines Laufs in ein Ausgabeverzeichnis.
    """

    def __init__(self, out_dir: Path, logger: Optional[logging.Logger] = None):
        """
        Initialisiert den Writer.

        Args:
            out_dir: Ausgabeverzeichnis (wird bei Bedarf angelegt)
            logger: Optionaler Logger
        """
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.logger = logger or logging.getLogger("snnd.export")

    def metrics_sink(self, timesteps: int) -> MetricsCsvSink:
        return MetricsCsvSink(self.out_dir / "metrics.csv", timesteps)

    def write_resolved_config(self, config: RunConfig) -> Path:
        path = self.out_dir / "resolved-config.txt"
        tmp_path = path.with_name(path.name + ".tmp")
        tmp_path.write_text(config.to_text(), encoding="utf-8")
        os.replace(tmp_path, path)
        self.logger.debug(f"Konfiguration geschrieben: {path}")
        return path

    def write_eval(self, rows: Sequence[EvalRow]) -> Path:
        path = _write_csv(
            self.out_dir / "eval.csv",
            ["mode", "parameter", "accuracy", "avg_timesteps"],
            ([r.mode, r.parameter, r.accuracy, r.avg_timesteps] for r in rows),
        )
        self.logger.info(f"✅ {len(rows)} Auswertungszeilen exportiert nach: {path}")
        return path

    def write_robustness(self, rows: Sequence[RobustRow]) -> Path:
        path = _write_csv(
            self.out_dir / "robustness.csv",
            ["attack", "epsilon", "sigma", "steps", "accuracy", "avg_timesteps"],
            (
                [r.attack, r.epsilon, r.sigma, r.steps, r.accuracy, r.avg_timesteps]
                for r in rows
            ),
        )
        self.logger.info(f"✅ {len(rows)} Robustheitszeilen exportiert nach: {path}")
        return path

    def write_logits(
        self, net: Network, dataset: Dataset, batch_size: int = DEFAULT_BATCH_SIZE
    ) -> Path:
        """
        Exportiert die rohen Logits aller Submodelle.

        Eine Zeile je (Beispiel, Zeitschritt); timestep ist 1-basiert.
        """
        classes = net.config.num_classes
        header = ["sample_id", "label", "timestep", *(f"c{c}" for c in range(classes))]

        def rows():
            sample_id = 0
            with no_grad():
                for inputs, labels in dataset.batches(batch_size):
                    logits = forward(net, inputs).logits.data
                    for b, label in enumerate(labels):
                        for t in range(logits.shape[0]):
                            yield [sample_id, int(label), t + 1, *map(float, logits[t, b])]
                        sample_id += 1

        path = _write_csv(self.out_dir / "logits.csv", header, rows())
        self.logger.info(
            f"✅ Logits von {len(dataset)} Beispielen × {net.config.timesteps} Zeitschritten "
            f"exportiert nach: {path}"
        )
        return path

    def write_sweep(self, rows: Sequence[SweepRow], timesteps: int) -> Path:
        header = ["value", "seed", "acc_mean", *(f"acc_t{t}" for t in range(1, timesteps + 1))]
        path = _write_csv(
            self.out_dir / "sweep.csv",
            header,
            (
                [r.value, r.seed, r.acc_mean, *r.acc_per_timestep]
                + [None] * (timesteps - len(r.acc_per_timestep))
                for r in rows
            ),
        )
        self.logger.info(f"✅ {len(rows)} Sweep-Läufe zusammengefasst in: {path}")
        return path


def print_eval_report(rows: Sequence[EvalRow]) -> None:
    """Gibt die Auswertung als Tabelle aus."""
    print("\n" + "=" * 60)
    print("AUSWERTUNG")
    print("=" * 60)
    print(f"{'Modus':<12} {'Parameter':>10} {'Genauigkeit':>12} {'Ø Zeitschritte':>15}")
    for r in rows:
        print(f"{r.mode:<12} {r.parameter:>10.4g} {r.accuracy:>12.4f} {r.avg_timesteps:>15.3f}")
    print("=" * 60 + "\n")


def print_robustness_report(rows: Sequence[RobustRow]) -> None:
    """Gibt den Robustheitsbericht als Tabelle aus."""
    print("\n" + "=" * 60)
    print("ROBUSTHEITS-REPORT")
    print("=" * 60)
    print(f"{'Angriff':<8} {'ε':>8} {'σ':>8} {'Schritte':>9} {'Genauigkeit':>12}")
    for r in rows:
        print(f"{r.attack:<8} {r.epsilon:>8.4g} {r.sigma:>8.4g} {r.steps:>9} {r.accuracy:>12.4f}")
    print("=" * 60 + "\n")
