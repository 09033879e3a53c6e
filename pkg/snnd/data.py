"""
Datensätze für snnd.

- Synthetische Zeitmuster (Ersatz für neuromorphe Daten auf dem Schreibtisch)
- EVF1-Event-Frame-Dateien
- Kommagetrennte Tabellen mit statischen Merkmalen (direkte Kodierung)
- Deterministische Aufteilung in Trainings- und Testmenge

EVF1-Format (little-endian):
    b"EVF1", u8 Version=1, u32 N, T, C, H, W, N × u16 Labels,
    N·T·C·H·W × float32 Werte in Zeilenreihenfolge [n][t][c][h][w]
"""

import csv
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import DTYPE
from .config import SynthConfig
from .errors import ConfigError, DataError, FormatError

EVF_MAGIC = b"EVF1"
EVF_VERSION = 1
_EVF_HEADER = struct.Struct("<4sB5I")

logger = logging.getLogger("snnd.data")


@dataclass
class Dataset:
    """Eingaben [N, T, D], Labels [N], Klassenanzahl und Wertebereich der Eingaben."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    input_bounds: Tuple[float, float]

    def __post_init__(self):
        if self.inputs.ndim != 3:
            raise DataError(f"Eingaben müssen [N, T, D] sein, sind {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise DataError(
                f"{self.labels.shape[0]} Labels passen nicht zu {self.inputs.shape[0]} Beispielen"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"Labels müssen in [0, {self.num_classes}) liegen")
        low, high = self.input_bounds
        if self.inputs.size and (self.inputs.min() < low or self.inputs.max() > high):
            raise DataError(f"Eingaben liegen außerhalb der Grenzen [{low}, {high}]")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def timesteps(self) -> int:
        return self.inputs.shape[1]

    @property
    def features(self) -> int:
        return self.inputs.shape[2]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes, self.input_bounds)

    def batches(
        self, batch_size: int, order: Optional[np.ndarray] = None
    ) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """
        Liefert Batches als (Eingaben [T, B, D], Labels [B]).

        Der letzte, unvollständige Batch wird mitgeliefert.
        """
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            yield self.inputs[idx].transpose(1, 0, 2), self.labels[idx]


# ---------------------------------------------------------------------------
# Synthetische Zeitmuster
# ---------------------------------------------------------------------------


def rate_profiles(cfg: SynthConfig) -> np.ndarray:
    """
    Klassenprofile r_k[t, d] ∈ {rate_lo, rate_hi}, Form [C, T, D].

    Bei t=0 ist ein Anteil early_share der Merkmale für alle Klassen gleich;
    der Anteil fällt linear auf 0 bei t=T-1. Frühe Frames tragen dadurch
    weniger Klasseninformation als späte.

    Raises:
        ConfigError: Wenn sich keine unterscheidbaren Klassenprofile ziehen lassen
    """
    rng = np.random.default_rng(cfg.seed)
    classes, timesteps, features = cfg.num_classes, cfg.timesteps, cfg.features

    for _ in range(100):
        shared = rng.random((timesteps, features)) < 0.5
        mask = rng.random((classes, timesteps, features)) < 0.5
        for t in range(timesteps):
            fraction = cfg.early_share * (1.0 - t / (timesteps - 1)) if timesteps > 1 else 0.0
            common = rng.permutation(features)[: int(round(fraction * features))]
            mask[:, t, common] = shared[t, common]
        flat = mask.reshape(classes, -1)
        if len(np.unique(flat, axis=0)) == classes:
            return np.where(mask, cfg.rate_hi, cfg.rate_lo).astype(DTYPE)

    raise ConfigError("Keine unterscheidbaren Klassenprofile gefunden (zu wenige Merkmale?)")


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """
    Erzeugt binäre Bernoulli-Frames aus den Klassenprofilen.

    Das Ergebnis ist eine reine Funktion von cfg (inklusive seed).
    """
    profiles = rate_profiles(cfg)
    rng = np.random.default_rng([cfg.seed, 1])

    inputs = np.empty(
        (cfg.num_classes * cfg.samples_per_class, cfg.timesteps, cfg.features), dtype=DTYPE
    )
    labels = np.repeat(np.arange(cfg.num_classes, dtype=np.int64), cfg.samples_per_class)
    for k in range(cfg.num_classes):
        start = k * cfg.samples_per_class
        draws = rng.random((cfg.samples_per_class, cfg.timesteps, cfg.features))
        inputs[start : start + cfg.samples_per_class] = draws < profiles[k]

    logger.debug(
        f"Synthetischer Datensatz: {len(labels)} Beispiele, C={cfg.num_classes}, "
        f"T={cfg.timesteps}, D={cfg.features}"
    )
    return Dataset(inputs, labels, cfg.num_classes, (0.0, 1.0))


# ---------------------------------------------------------------------------
# EVF1 Event-Frames
# ---------------------------------------------------------------------------


def write_event_frames(path: Union[str, Path], frames: np.ndarray, labels: np.ndarray) -> Path:
    """
    Schreibt Event-Frames [N, T, C, H, W] und Labels [N] im EVF1-Format.

    Raises:
        DataError: Bei falschen Formen oder Labels außerhalb von u16
    """
    path = Path(path)
    frames = np.asarray(frames)
    labels = np.asarray(labels)
    if frames.ndim != 5 or labels.shape != (frames.shape[0],):
        raise DataError(f"Erwartet Frames [N,T,C,H,W] und Labels [N], bekam {frames.shape}, {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise DataError("Labels müssen in den u16-Bereich passen")

    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "wb") as f:
        f.write(_EVF_HEADER.pack(EVF_MAGIC, EVF_VERSION, *frames.shape))
        f.write(labels.astype("<u2").tobytes())
        f.write(frames.astype("<f4").tobytes())
    os.replace(tmp_path, path)
    return path


def read_event_frames(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Liest eine EVF1-Datei ohne Normierung.

    Returns:
        (Frames float32 [N, T, C, H, W], Labels int64 [N])

    Raises:
        FormatError: Bei falscher Magic, Version oder abgeschnittener Datei
    """
    payload = Path(path).read_bytes()
    if len(payload) < _EVF_HEADER.size:
        raise FormatError(
            f"EVF1-Kopf abgeschnitten: erwartet {_EVF_HEADER.size} Bytes, vorhanden {len(payload)}",
            offset=len(payload),
        )
    magic, version, n, t, c, h, w = _EVF_HEADER.unpack_from(payload, 0)
    if magic != EVF_MAGIC:
        raise FormatError(f"Keine EVF1-Datei (Magic {magic!r})", offset=0)
    if version != EVF_VERSION:
        raise FormatError(f"Nicht unterstützte EVF1-Version {version}", offset=4)

    label_bytes = 2 * n
    value_count = n * t * c * h * w
    expected = _EVF_HEADER.size + label_bytes + 4 * value_count
    if len(payload) != expected:
        raise FormatError(
            f"EVF1-Nutzdaten {'abgeschnitten' if len(payload) < expected else 'zu lang'}: "
            f"erwartet {expected} Bytes, vorhanden {len(payload)}",
            offset=min(len(payload), expected),
        )

    offset = _EVF_HEADER.size
    labels = np.frombuffer(payload, dtype="<u2", count=n, offset=offset).astype(np.int64)
    offset += label_bytes
    frames = np.frombuffer(payload, dtype="<f4", count=value_count, offset=offset)
    return frames.reshape(n, t, c, h, w).astype(np.float32), labels


def load_event_frames(path: Union[str, Path], num_classes: Optional[int] = None) -> Dataset:
    """
    Lädt Event-Frames als Datensatz [N, T, C·H·W], normiert auf [0, 1].

    Die Normierung teilt durch das Maximum der Datei.

    Raises:
        FormatError: Siehe read_event_frames
        DataError: Bei negativen oder nicht endlichen Werten
    """
    frames, labels = read_event_frames(path)
    n, t = frames.shape[:2]
    inputs = frames.reshape(n, t, -1).astype(DTYPE)
    if not np.all(np.isfinite(inputs)) or (inputs.size and inputs.min() < 0.0):
        raise DataError(f"Event-Frames in {path} müssen endlich und nicht negativ sein")
    peak = inputs.max() if inputs.size else 0.0
    if peak > 0.0:
        inputs = inputs / peak

    classes = num_classes if num_classes is not None else int(labels.max()) + 1 if n else 1
    logger.info(f"{n} Event-Samples geladen aus {path} (T={t}, D={inputs.shape[2]})")
    return Dataset(inputs, labels, classes, (0.0, 1.0))


# ---------------------------------------------------------------------------
# Tabellen mit statischen Merkmalen
# ---------------------------------------------------------------------------


def load_table(
    path: Union[str, Path], timesteps: int, num_classes: Optional[int] = None
) -> Dataset:
    """
    Lädt eine kommagetrennte Tabelle (Label, dann D Merkmale) und kachelt sie über T.

    Leere Zeilen und Zeilen, die mit ``#`` beginnen, werden übersprungen.

    Raises:
        FormatError: Bei ungleich langen Zeilen oder nicht numerischen Zellen
        DataError: Bei leerer Tabelle oder Labels außerhalb von [0, C)
    """
    labels = []
    rows = []
    width: Optional[int] = None

    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise FormatError("Zeile braucht ein Label und mindestens ein Merkmal", line=line_no)
            elif len(row) != width:
                raise FormatError(
                    f"Ungleich lange Zeile: erwartet {width} Spalten, gefunden {len(row)}",
                    line=line_no,
                )
            try:
                label = int(row[0])
            except ValueError:
                raise FormatError(f"Label ist keine ganze Zahl: '{row[0]}'", line=line_no, column=1)
            values = []
            for column, cell in enumerate(row[1:], start=2):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise FormatError(f"Nicht numerischer Wert '{cell}'", line=line_no, column=column)
            labels.append(label)
            rows.append(values)

    if not rows:
        raise DataError(f"Tabelle {path} enthält keine Daten")

    label_array = np.asarray(labels, dtype=np.int64)
    classes = num_classes if num_classes is not None else int(label_array.max()) + 1
    if label_array.min() < 0 or label_array.max() >= classes:
        raise DataError(f"Labels in {path} müssen in [0, {classes}) liegen")

    features = np.asarray(rows, dtype=DTYPE)
    if not np.all(np.isfinite(features)):
        raise DataError(f"Tabelle {path} enthält nicht endliche Werte")
    inputs = np.repeat(features[:, None, :], timesteps, axis=1)
    bounds = (float(features.min()), float(features.max()))
    return Dataset(inputs, label_array, classes, bounds)


# ---------------------------------------------------------------------------
# Aufteilung
# ---------------------------------------------------------------------------


def split(ds: Dataset, train_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Zufällige, nicht stratifizierte Aufteilung in Trainings- und Testmenge.

    Raises:
        ConfigError: Wenn der Anteil nicht in (0, 1) liegt oder eine Seite leer wäre
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction muss in (0, 1) liegen, ist {train_fraction}")
    n_train = int(round(train_fraction * len(ds)))
    if n_train == 0 or n_train == len(ds):
        raise ConfigError(
            f"Aufteilung {train_fraction} von {len(ds)} Beispielen ergibt eine leere Seite"
        )
    order = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(order[:n_train]), ds.subset(order[n_train:])
