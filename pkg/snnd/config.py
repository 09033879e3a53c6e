"""
Konfigurationsmodul für snnd.

Enthält alle Konfigurations-Dataclasses, das Logging-Setup und den Parser
für Lauf-Konfigurationsdateien (flache ``abschnitt.schluessel = wert``-Zeilen).
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Set, Tuple

from dotenv import dotenv_values

from .errors import ConfigError

SCHEMES = (
    "none",
    "s2w",
    "w2s",
    "simultaneous",
    "ensemble_teacher",
    "ensemble_student",
    "cascade",
)
METRICS = ("confidence", "entropy", "margin", "diversity")
LOSS_FUNCTIONS = ("kl", "mse")
DIRECTIONS = ("s2w", "w2s")
SELECTIONS = ("metric", "random", "first_last", "last_first")
ATTACK_KINDS = ("gn", "fgsm", "pgd")
DATA_SOURCES = ("synthetic", "evf", "table")
READOUTS = ("membrane",)

_TRUE_VALUES = ("true", "1", "yes")
_FALSE_VALUES = ("false", "0", "no")


def setup_logging(level: str = "INFO") -> logging.Logger:
    """Richtet das Logging ein."""
    log_level = getattr(logging, level.upper(), logging.INFO)

    # Farbiges Logging wenn möglich
    try:
        import colorlog

        handler = colorlog.StreamHandler()
        handler.setFormatter(
            colorlog.ColoredFormatter(
                "%(log_color)s%(asctime)s - %(levelname)s - %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
                log_colors={
                    "DEBUG": "cyan",
                    "INFO": "green",
                    "WARNING": "yellow",
                    "ERROR": "red",
                    "CRITICAL": "red,bg_white",
                },
            )
        )
    except ImportError:
        handler = logging.StreamHandler()
        handler.setFormatter(
            logging.Formatter(
                "%(asctime)s - %(levelname)s - %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
            )
        )

    logger = logging.getLogger("snnd")
    logger.setLevel(log_level)
    # Mehrfacher Aufruf (Tests, Sweeps) soll keine Handler stapeln
    for existing in list(logger.handlers):
        if getattr(existing, "_snnd_handler", False):
            logger.removeHandler(existing)
    handler._snnd_handler = True  # type: ignore[attr-defined]
    logger.addHandler(handler)

    return logger


@dataclass
class LifParams:
    """Parameter des LIF-Neurons."""

    tau: float = 2.0  # Membranzeitkonstante
    threshold: float = 1.0  # Feuerschwelle
    surrogate_width: float = 1.0  # Breite a des Rechteck-Surrogats

    def __post_init__(self):
        if not self.tau > 1.0:
            raise ConfigError(f"tau muss > 1 sein, ist {self.tau}")
        if not self.threshold > 0.0:
            raise ConfigError(f"threshold muss > 0 sein, ist {self.threshold}")
        if not self.surrogate_width > 0.0:
            raise ConfigError(f"surrogate_width muss > 0 sein, ist {self.surrogate_width}")

    @property
    def leak(self) -> float:
        """Leckfaktor (1 - 1/tau)."""
        return 1.0 - 1.0 / self.tau


@dataclass
class SnnConfig:
    """Architektur des SNN: [D_in, D_h1, ..., C] und Anzahl Zeitschritte."""

    layer_sizes: List[int]
    timesteps: int
    lif: LifParams = field(default_factory=LifParams)
    readout: str = "membrane"

    def __post_init__(self):
        if self.timesteps < 2:
            raise ConfigError(
                f"timesteps muss >= 2 sein (Zerlegung braucht >= 2 Submodelle), ist {self.timesteps}"
            )
        if len(self.layer_sizes) < 2:
            raise ConfigError("layer_sizes braucht mindestens Eingabe- und Ausgabegröße")
        if any(size < 1 for size in self.layer_sizes):
            raise ConfigError(f"Ungültige Schichtgrößen: {self.layer_sizes}")
        if self.readout not in READOUTS:
            raise ConfigError(f"Unbekannter Readout '{self.readout}', erlaubt: {READOUTS}")

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class DistillConfig:
    """Konfiguration der zeitlichen Selbstdistillation."""

    scheme: str = "s2w"
    metric: str = "confidence"
    alpha: float = 2.0  # Temperatur
    lambda_s2w: float = 1.0
    lambda_w2s: float = 1.0
    loss_fn: str = "kl"
    detach_teacher: bool = False
    direction: str = "s2w"  # Orientierung für Ensemble- und Kaskaden-Schemata
    selection: str = "metric"

    def __post_init__(self):
        _check_choice("distill.scheme", self.scheme, SCHEMES)
        _check_choice("distill.metric", self.metric, METRICS)
        _check_choice("distill.loss_fn", self.loss_fn, LOSS_FUNCTIONS)
        _check_choice("distill.direction", self.direction, DIRECTIONS)
        _check_choice("distill.selection", self.selection, SELECTIONS)
        if not self.alpha > 0.0:
            raise ConfigError(f"alpha muss > 0 sein, ist {self.alpha}")
        if self.lambda_s2w < 0.0 or self.lambda_w2s < 0.0:
            raise ConfigError("Die Koeffizienten lambda müssen >= 0 sein")

    @property
    def is_active(self) -> bool:
        """True, wenn die Distillation tatsächlich zum Verlust beiträgt."""
        if self.scheme == "none":
            return False
        if self.scheme == "s2w":
            return self.lambda_s2w > 0.0
        if self.scheme == "w2s":
            return self.lambda_w2s > 0.0
        if self.scheme == "simultaneous":
            return self.lambda_s2w > 0.0 or self.lambda_w2s > 0.0
        return self.directional_lambda > 0.0

    @property
    def directional_lambda(self) -> float:
        """Koeffizient der Ensemble- und Kaskaden-Schemata."""
        return self.lambda_s2w if self.direction == "s2w" else self.lambda_w2s


@dataclass
class OptimConfig:
    """SGD-Konfiguration (Desk-Scale-Standardwerte)."""

    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_drop_every: int = 15
    lr_drop_factor: float = 0.1
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lr0 < 0.0:
            raise ConfigError(f"lr0 muss >= 0 sein, ist {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum muss in [0, 1) liegen, ist {self.momentum}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size muss >= 1 sein, ist {self.batch_size}")
        if self.lr_drop_every < 1:
            raise ConfigError(f"lr_drop_every muss >= 1 sein, ist {self.lr_drop_every}")
        if self.epochs < 0:
            raise ConfigError(f"epochs muss >= 0 sein, ist {self.epochs}")
        if self.weight_decay < 0.0:
            raise ConfigError("weight_decay muss >= 0 sein")

    @classmethod
    def gpu_scale(cls, neuromorphic: bool = True, seed: int = 0) -> "OptimConfig":
        """Einstellungen der GPU-Experimente (100 Epochen, Abfall alle 30, Batch 64)."""
        return cls(
            lr0=0.1,
            momentum=0.9,
            weight_decay=1e-3 if neuromorphic else 1e-4,
            lr_drop_every=30,
            lr_drop_factor=0.1,
            epochs=100,
            batch_size=64,
            seed=seed,
        )


@dataclass
class SynthConfig:
    """Konfiguration des synthetischen Zeitmuster-Datensatzes."""

    num_classes: int = 4
    features: int = 32
    timesteps: int = 5
    samples_per_class: int = 500
    rate_lo: float = 0.1
    rate_hi: float = 0.6
    seed: int = 0
    early_share: float = 0.75  # Anteil klassenübergreifend geteilter Merkmale bei t=0

    def __post_init__(self):
        if not 0.0 <= self.rate_lo < self.rate_hi <= 1.0:
            raise ConfigError(
                f"Es muss 0 <= rate_lo < rate_hi <= 1 gelten (rate_lo={self.rate_lo}, "
                f"rate_hi={self.rate_hi})"
            )
        if self.num_classes < 2:
            raise ConfigError("num_classes muss >= 2 sein")
        if self.features < 1 or self.timesteps < 1 or self.samples_per_class < 1:
            raise ConfigError("features, timesteps und samples_per_class müssen >= 1 sein")
        if not 0.0 <= self.early_share < 1.0:
            raise ConfigError(f"early_share muss in [0, 1) liegen, ist {self.early_share}")


@dataclass
class EarlyExitConfig:
    """Konfiguration des frühen Ausstiegs."""

    threshold: float
    max_timesteps: Optional[int] = None  # None = alle T Zeitschritte

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"Exit-Schwelle muss in (0, 1] liegen, ist {self.threshold}")
        if self.max_timesteps is not None and self.max_timesteps < 1:
            raise ConfigError("max_timesteps muss >= 1 sein")


@dataclass
class AttackConfig:
    """Konfiguration eines Rausch- oder Adversarial-Angriffs."""

    kind: str
    epsilon: float = 0.0
    sigma: float = 0.0
    pgd_steps: int = 7
    pgd_alpha: float = 0.01
    random_start: bool = True
    seed: int = 0

    def __post_init__(self):
        _check_choice("attack", self.kind, ATTACK_KINDS)
        if self.epsilon < 0.0:
            raise ConfigError(f"epsilon muss >= 0 sein, ist {self.epsilon}")
        if self.sigma < 0.0:
            raise ConfigError(f"sigma muss >= 0 sein, ist {self.sigma}")
        if self.pgd_steps < 1:
            raise ConfigError(f"pgd_steps muss >= 1 sein, ist {self.pgd_steps}")


def _check_choice(name: str, value: str, choices: Tuple[str, ...]) -> None:
    if value not in choices:
        raise ConfigError(f"Unbekannter Wert '{value}' für {name}, erlaubt: {', '.join(choices)}")


# ---------------------------------------------------------------------------
# Lauf-Konfiguration (Datei + --set Overrides)
# ---------------------------------------------------------------------------


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in _TRUE_VALUES:
        return True
    if value in _FALSE_VALUES:
        return False
    raise ValueError(f"kein Wahrheitswert: '{raw}'")


def _parse_int_list(raw: str) -> List[int]:
    parts = [part.strip() for part in raw.split(",") if part.strip()]
    if not parts:
        raise ValueError("leere Liste")
    return [int(part) for part in parts]


def _choice(choices: Tuple[str, ...]) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        value = raw.strip()
        if value not in choices:
            raise ValueError(f"'{value}' nicht in {', '.join(choices)}")
        return value

    return parse


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


# Schlüssel -> (Parser, Standardwert)
_SCHEMA: Dict[str, Tuple[Callable[[str], Any], Any]] = {
    "model.hidden_sizes": (_parse_int_list, [64]),
    "model.timesteps": (int, 5),
    "model.tau": (float, 2.0),
    "model.threshold": (float, 1.0),
    "model.surrogate_width": (float, 1.0),
    "optim.lr0": (float, 0.1),
    "optim.momentum": (float, 0.9),
    "optim.weight_decay": (float, 1e-4),
    "optim.lr_drop_every": (int, 15),
    "optim.lr_drop_factor": (float, 0.1),
    "optim.epochs": (int, 40),
    "optim.batch_size": (int, 32),
    "distill.scheme": (_choice(SCHEMES), "s2w"),
    "distill.metric": (_choice(METRICS), "confidence"),
    "distill.alpha": (float, 2.0),
    "distill.lambda_s2w": (float, 1.0),
    "distill.lambda_w2s": (float, 1.0),
    "distill.loss_fn": (_choice(LOSS_FUNCTIONS), "kl"),
    "distill.detach_teacher": (_parse_bool, False),
    "distill.direction": (_choice(DIRECTIONS), "s2w"),
    "distill.selection": (_choice(SELECTIONS), "metric"),
    "data.source": (_choice(DATA_SOURCES), "synthetic"),
    "data.path": (str.strip, ""),
    "data.train_fraction": (float, 0.9),
    "data.num_classes": (int, 4),
    "data.features": (int, 32),
    "data.samples_per_class": (int, 500),
    "data.rate_lo": (float, 0.1),
    "data.rate_hi": (float, 0.6),
    "data.early_share": (float, 0.75),
    "seed.model": (int, 0),
    "seed.data": (int, 0),
    "output.dir": (str.strip, "runs/default"),
    "log.level": (_choice(("DEBUG", "INFO", "WARNING", "ERROR")), "INFO"),
}

CONFIG_KEYS = tuple(sorted(_SCHEMA))


def parse_value(key: str, raw: str) -> Any:
    """
    Parst einen einzelnen Konfigurationswert.

    Raises:
        ConfigError: Bei unbekanntem Schlüssel oder ungültigem Wert
    """
    if key not in _SCHEMA:
        raise ConfigError(f"Unbekannter Konfigurationsschlüssel: '{key}'")
    parser, _ = _SCHEMA[key]
    try:
        return parser(raw)
    except ValueError as e:
        raise ConfigError(f"Ungültiger Wert für {key}: {e}") from e


@dataclass
class RunConfig:
    """Alle effektiven Einstellungen eines Laufs als flache Schlüssel."""

    values: Dict[str, Any] = field(
        default_factory=lambda: {key: default for key, (_, default) in _SCHEMA.items()}
    )
    # Schlüssel, die aus Datei oder Overrides stammen
    explicit_keys: Set[str] = field(default_factory=set, compare=False)

    @classmethod
    def from_file(
        cls, path: Optional[Path] = None, overrides: Iterable[str] = ()
    ) -> "RunConfig":
        """
        Lädt eine Konfigurationsdatei und wendet ``--set``-Overrides an.

        Args:
            path: Pfad zur Konfigurationsdatei (None = nur Standardwerte)
            overrides: Liste von ``schluessel=wert``-Strings

        Returns:
            Validierte RunConfig-Instanz

        Raises:
            ConfigError: Wenn die Datei fehlt, ein Schlüssel unbekannt oder ein Wert ungültig ist
        """
        config = cls()

        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"Konfigurationsdatei nicht gefunden: {path}")
            entries = dotenv_values(path, interpolate=False)
            for key, raw in entries.items():
                if raw is None:
                    raise ConfigError(f"Eintrag ohne Wert in {path}: '{key}'")
                config.set(key, raw)

        for override in overrides:
            key, sep, raw = override.partition("=")
            if not sep:
                raise ConfigError(f"Override muss die Form schluessel=wert haben: '{override}'")
            config.set(key.strip(), raw)

        config.validate()
        return config

    def set(self, key: str, raw: str) -> None:
        """Setzt einen Wert aus seiner Textform."""
        self.values[key] = parse_value(key, raw)
        self.explicit_keys.add(key)

    def get(self, key: str) -> Any:
        return self.values[key]

    def with_override(self, key: str, raw: str) -> "RunConfig":
        """Kopie mit einem geänderten Wert (für Sweeps)."""
        copy = RunConfig(values=dict(self.values), explicit_keys=set(self.explicit_keys))
        copy.set(key, raw)
        copy.validate()
        return copy

    def validate(self) -> None:
        """Baut alle Teilkonfigurationen einmal auf, damit Fehler vor jeder Arbeit auffallen."""
        self.lif_params()
        self.distill_config()
        self.optim_config()
        if self.get("data.source") == "synthetic":
            self.synth_config()
        elif not self.get("data.path"):
            raise ConfigError(f"data.path ist für data.source={self.get('data.source')} erforderlich")
        if not 0.0 < self.get("data.train_fraction") < 1.0:
            raise ConfigError("data.train_fraction muss in (0, 1) liegen")
        if self.get("model.timesteps") < 2:
            raise ConfigError("model.timesteps muss >= 2 sein")
        if any(size < 1 for size in self.get("model.hidden_sizes")):
            raise ConfigError("model.hidden_sizes muss positive Größen enthalten")

    def lif_params(self) -> LifParams:
        return LifParams(
            tau=self.get("model.tau"),
            threshold=self.get("model.threshold"),
            surrogate_width=self.get("model.surrogate_width"),
        )

    def snn_config(self, features: int, num_classes: int) -> SnnConfig:
        """SNN-Konfiguration für die Dimensionen eines Datensatzes."""
        return SnnConfig(
            layer_sizes=[features, *self.get("model.hidden_sizes"), num_classes],
            timesteps=self.get("model.timesteps"),
            lif=self.lif_params(),
        )

    def distill_config(self) -> DistillConfig:
        return DistillConfig(
            scheme=self.get("distill.scheme"),
            metric=self.get("distill.metric"),
            alpha=self.get("distill.alpha"),
            lambda_s2w=self.get("distill.lambda_s2w"),
            lambda_w2s=self.get("distill.lambda_w2s"),
            loss_fn=self.get("distill.loss_fn"),
            detach_teacher=self.get("distill.detach_teacher"),
            direction=self.get("distill.direction"),
            selection=self.get("distill.selection"),
        )

    def optim_config(self) -> OptimConfig:
        return OptimConfig(
            lr0=self.get("optim.lr0"),
            momentum=self.get("optim.momentum"),
            weight_decay=self.get("optim.weight_decay"),
            lr_drop_every=self.get("optim.lr_drop_every"),
            lr_drop_factor=self.get("optim.lr_drop_factor"),
            epochs=self.get("optim.epochs"),
            batch_size=self.get("optim.batch_size"),
            seed=self.get("seed.data"),
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            num_classes=self.get("data.num_classes"),
            features=self.get("data.features"),
            timesteps=self.get("model.timesteps"),
            samples_per_class=self.get("data.samples_per_class"),
            rate_lo=self.get("data.rate_lo"),
            rate_hi=self.get("data.rate_hi"),
            seed=self.get("seed.data"),
            early_share=self.get("data.early_share"),
        )

    def to_text(self) -> str:
        """Rendert alle effektiven Schlüssel, sortiert, im Dateiformat."""
        lines = ["# snnd resolved config"]
        for key in CONFIG_KEYS:
            lines.append(f"{key} = {_format_value(self.values[key])}")
        return "\n".join(lines) + "\n"


def default_log_level() -> str:
    """Log-Level aus der Umgebung (SNND_LOG_LEVEL), sonst INFO."""
    return os.getenv("SNND_LOG_LEVEL", "INFO")
