"""
Orchestrierung von Trainingsläufen und Sweeps.

Ein Lauf lädt die konfigurierten Daten, baut das Netz, trainiert es und
schreibt metrics.csv, final.snnm, best.snnm und resolved-config.txt.
Ein Sweep wiederholt Läufe über eine Werteliste eines Konfigurationsschlüssels
und optional über mehrere Seeds.
"""

import logging
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .config import RunConfig, parse_value
from .data import Dataset, generate_synthetic, load_event_frames, load_table, split
from .errors import ConfigError, DimensionError
from .export import ArtifactWriter, SweepRow
from .network import Network, build
from .train import RunRecord, Trainer


@dataclass
class RunSummary:
    """Ergebnis eines Trainingslaufs."""

    out_dir: Path
    final_test: RunRecord
    best_epoch: Optional[int]
    network: Network
    best_network: Network


def load_dataset(config: RunConfig, logger: Optional[logging.Logger] = None) -> Dataset:
    """
    Lädt den vollständigen Datensatz gemäß ``data.source``.

    Raises:
        DimensionError: Wenn die Zeitschritte der Datei nicht zu model.timesteps passen
    """
    logger = logger or logging.getLogger("snnd.experiment")
    source = config.get("data.source")
    timesteps = config.get("model.timesteps")

    if source == "synthetic":
        return generate_synthetic(config.synth_config())
    if source == "evf":
        dataset = load_event_frames(Path(config.get("data.path")))
        if dataset.timesteps != timesteps:
            raise DimensionError(
                f"Event-Datei hat T={dataset.timesteps}, konfiguriert ist model.timesteps={timesteps}"
            )
        return dataset
    logger.info(f"Lade Tabelle {config.get('data.path')} (direkte Kodierung über T={timesteps})")
    return load_table(Path(config.get("data.path")), timesteps)


class ExperimentRunner:
    """
    Hauptklasse für einen Trainingslauf.

    Alle Zufälligkeit hängt an seed.model (Initialisierung) und seed.data
    (Daten, Aufteilung, Mischen).
    """

    def __init__(self, config: RunConfig, logger: Optional[logging.Logger] = None):
        """
        Initialisiert den Runner.

        Args:
            config: Validierte Lauf-Konfiguration
            logger: Optionaler Logger
        """
        self.config = config
        self.logger = logger or logging.getLogger("snnd.experiment")

    def load_data(self) -> Tuple[Dataset, Dataset]:
        """Lädt die Daten und teilt sie in Trainings- und Testmenge."""
        dataset = load_dataset(self.config, self.logger)
        train_set, test_set = split(
            dataset, self.config.get("data.train_fraction"), self.config.get("seed.data")
        )
        self.logger.info(
            f"Daten: {len(train_set)} Training, {len(test_set)} Test, "
            f"T={dataset.timesteps}, D={dataset.features}, C={dataset.num_classes}"
        )
        return train_set, test_set

    def build_network(self, dataset: Dataset) -> Network:
        snn_config = self.config.snn_config(dataset.features, dataset.num_classes)
        net = build(snn_config, self.config.get("seed.model"))
        self.logger.debug(f"Netz {snn_config.layer_sizes} mit {net.parameter_count} Parametern")
        return net

    def run(self, out_dir: Optional[Path] = None) -> RunSummary:
        """
        Führt den Lauf vollständig aus und schreibt alle Artefakte.

        Args:
            out_dir: Ausgabeverzeichnis (Standard: output.dir)

        Returns:
            RunSummary mit der letzten Testauswertung
        """
        out_dir = Path(out_dir or self.config.get("output.dir"))
        train_set, test_set = self.load_data()
        net = self.build_network(train_set)
        optim = self.config.optim_config()
        distill = self.config.distill_config()

        writer = ArtifactWriter(out_dir, self.logger)
        writer.write_resolved_config(self.config)

        self.logger.info(
            f"Starte Training: Schema {distill.scheme}, Metrik {distill.metric}, "
            f"{optim.epochs} Epochen → {out_dir}"
        )
        trainer = Trainer(net, optim, distill, self.logger)
        with writer.metrics_sink(net.config.timesteps) as sink:
            result = trainer.fit(train_set, test_set, sink=sink, checkpoint_dir=out_dir)

        final_test = next((r for r in reversed(result.records) if r.split == "test"), None)
        if final_test is None:
            final_test = trainer.evaluate_epoch(test_set, 0)

        self.logger.info(f"✅ Training abgeschlossen: Testgenauigkeit {final_test.acc_mean:.4f}")
        return RunSummary(
            out_dir=out_dir,
            final_test=final_test,
            best_epoch=result.best_epoch,
            network=result.network,
            best_network=result.best_network,
        )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def parse_axis(spec: str) -> Tuple[str, List[str]]:
    """
    Zerlegt ``schluessel=w1,w2,...`` in Schlüssel und Rohwerte.

    Enthalten die Werte selbst Kommas (z.B. model.hidden_sizes), werden sie
    mit ``;`` getrennt.

    Raises:
        ConfigError: Bei fehlendem ``=``, unbekanntem Schlüssel, ungültigen
            oder doppelten Werten
    """
    key, sep, raw_values = spec.partition("=")
    key = key.strip()
    if not sep or not raw_values.strip():
        raise ConfigError(f"Sweep-Achse muss die Form schluessel=w1,w2,... haben: '{spec}'")
    separator = ";" if ";" in raw_values else ","
    values = [v.strip() for v in raw_values.split(separator) if v.strip()]

    seen: List[Any] = []
    for value in values:
        parsed = parse_value(key, value)
        if parsed in seen:
            raise ConfigError(f"Doppelter Wert '{value}' in der Sweep-Achse {key}")
        seen.append(parsed)
    return key, values


def _run_point(values: Dict[str, Any], run_dir: str) -> Tuple[float, List[float]]:
    """Ein Sweep-Lauf; schreibt erst in ein temporäres Verzeichnis, dann atomar um."""
    target = Path(run_dir)
    staging = target.with_name(target.name + ".tmp")
    if staging.exists():
        shutil.rmtree(staging)

    summary = ExperimentRunner(RunConfig(values=values)).run(staging)

    if target.exists():
        shutil.rmtree(target)
    os.replace(staging, target)
    return summary.final_test.acc_mean, summary.final_test.acc_per_timestep


def _value_key(value: str) -> Tuple[int, float, str]:
    try:
        return 0, float(value), value
    except ValueError:
        return 1, 0.0, value


def run_sweep(
    config: RunConfig,
    key: str,
    values: Sequence[str],
    seeds: Sequence[int],
    out_dir: Path,
    jobs: int = 1,
    logger: Optional[logging.Logger] = None,
) -> List[SweepRow]:
    """
    Trainiert je (Wert, Seed) einen Lauf und fasst die Endgenauigkeiten zusammen.

    Der Seed überschreibt seed.model. Die Ergebnisse sind nach (Wert, Seed)
    sortiert, unabhängig von jobs; numerische Werte nach Zahlwert, alle
    übrigen danach als Zeichenkette.

    Args:
        config: Basiskonfiguration
        key: Konfigurationsschlüssel der Achse
        values: Rohwerte der Achse
        seeds: Seeds je Wert
        out_dir: Wurzel der Lauf-Verzeichnisse ``<key>=<value>/seed=<s>/``
        jobs: Anzahl paralleler Prozesse
        logger: Optionaler Logger

    Returns:
        Eine SweepRow je Lauf, zusätzlich in sweep.csv geschrieben
    """
    logger = logger or logging.getLogger("snnd.experiment")
    if jobs < 1:
        raise ConfigError(f"jobs muss >= 1 sein, ist {jobs}")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("Doppelte Seeds im Sweep")

    out_dir = Path(out_dir)
    points: List[Tuple[str, int]] = sorted(
        ((value, seed) for value in values for seed in seeds),
        key=lambda point: (_value_key(point[0]), point[1]),
    )
    tasks = []
    for value, seed in points:
        run_config = config.with_override(key, value).with_override("seed.model", str(seed))
        run_dir = out_dir / f"{key}={value}" / f"seed={seed}"
        run_dir.parent.mkdir(parents=True, exist_ok=True)
        tasks.append((run_config.values, str(run_dir)))

    logger.info(f"Sweep über {key}: {len(values)} Werte × {len(seeds)} Seeds, {jobs} Prozess(e)")
    if jobs == 1:
        results = [_run_point(v, d) for v, d in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_run_point, *zip(*tasks)))

    rows = [
        SweepRow(value=value, seed=seed, acc_mean=acc, acc_per_timestep=per_t)
        for (value, seed), (acc, per_t) in zip(points, results)
    ]
    timesteps = max(len(row.acc_per_timestep) for row in rows) if rows else 0
    ArtifactWriter(out_dir, logger).write_sweep(rows, timesteps)
    return rows
