"""
Mehrschrittiges SNN aus Dense- und LIF-Schichten.

Jeder Zeitschritt t ist ein Submodell f(θ; t): gleiche Parameter, eigener
Membranzustand. ``forward`` liefert die Logits aller Submodelle als
TimestepOutputs [T, B, C]. Die Ausleseschicht feuert nicht; ihre Logits sind
der Eingangsstrom des jeweiligen Zeitschritts.

Checkpoint-Format (SNNM, Version 1, little-endian):
    b"SNNM", u8 Version, u32 Anzahl Schichtgrößen, u32 je Größe, u32 T,
    f64 tau, f64 threshold, f64 surrogate_width, u8 Readout (0 = membrane),
    danach W/b aller Schichten in Deklarationsreihenfolge als f64.
"""

import logging
import math
import os
import struct
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Union

import numpy as np

from .autodiff import DTYPE, Tensor, dense_forward, mean, stack, take
from .config import READOUTS, LifParams, SnnConfig
from .errors import ConfigError, DimensionError, FormatError, UsageError
from .spiking import LifState, lif_step, reset_states

CHECKPOINT_MAGIC = b"SNNM"
CHECKPOINT_VERSION = 1


@dataclass
class TimestepOutputs:
    """Logits der T Submodelle, [T, B, C]."""

    logits: Tensor

    @property
    def timesteps(self) -> int:
        return self.logits.shape[0]

    def at(self, t: int) -> Tensor:
        """Ausgabe o(t) des Submodells t (0-basiert), mit Graph."""
        return take(self.logits, t)


class Network:
    """
    SNN mit geteilten Parametern über alle Zeitschritte.

    Parameter liegen als Liste [W0, b0, W1, b1, ...] vor; W hat die Form
    [D_in, D_out].
    """

    def __init__(self, config: SnnConfig, params: List[Tensor]):
        self.config = config
        self.params = params
        self.states: List[LifState] = []

    @property
    def num_layers(self) -> int:
        return len(self.config.layer_sizes) - 1

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)

    def weights(self, layer: int) -> Tensor:
        return self.params[2 * layer]

    def bias(self, layer: int) -> Tensor:
        return self.params[2 * layer + 1]

    def reset(self, batch: int = 0) -> None:
        """Setzt die Membranen aller LIF-Schichten auf Null."""
        if batch and (not self.states or self.states[0].shape[0] != batch):
            self.states = [
                LifState.zeros(batch, width) for width in self.config.layer_sizes[1:-1]
            ]
        reset_states(self.states)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def clone(self) -> "Network":
        """Tiefe Kopie der Parameter."""
        return Network(
            self.config,
            [Tensor(p.data, requires_grad=p.requires_grad, name=p.name) for p in self.params],
        )

    @contextmanager
    def frozen(self) -> Iterator["Network"]:
        """Parameter benötigen innerhalb des Blocks keine Gradienten."""
        previous = [p.requires_grad for p in self.params]
        for p in self.params:
            p.requires_grad = False
        try:
            yield self
        finally:
            for p, flag in zip(self.params, previous):
                p.requires_grad = flag

    def step(
        self, x_t: Tensor, mode: str = "hard", probe: Optional[List[np.ndarray]] = None
    ) -> Tensor:
        """Treibt einen Zeitschritt durch alle Schichten und liefert dessen Logits."""
        h = x_t
        for layer in range(self.num_layers - 1):
            current = dense_forward(h, self.weights(layer), self.bias(layer))
            h, self.states[layer] = lif_step(
                self.states[layer], current, self.config.lif, mode, probe
            )
        last = self.num_layers - 1
        return dense_forward(h, self.weights(last), self.bias(last))


def build(config: SnnConfig, seed: int) -> Network:
    """
    Initialisiert ein Netz deterministisch.

    Gewichte ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)), Biases Null.

    Raises:
        ConfigError: Wenn T < 2 (bereits beim Anlegen von SnnConfig geprüft)
    """
    if config.timesteps < 2:
        raise ConfigError("timesteps muss >= 2 sein")
    rng = np.random.default_rng(seed)
    params: List[Tensor] = []
    sizes = config.layer_sizes
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = math.sqrt(1.0 / fan_in)
        params.append(
            Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), True, name=f"W{layer}")
        )
        params.append(Tensor(np.zeros(fan_out), True, name=f"b{layer}"))
    return Network(config, params)


def _as_tensor(x: Union[Tensor, np.ndarray]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def truncated_forward(
    net: Network,
    inputs: Union[Tensor, np.ndarray],
    t_max: int,
    mode: str = "hard",
    probe: Optional[List[np.ndarray]] = None,
) -> TimestepOutputs:
    """
    Wie ``forward``, bricht aber nach t_max Zeitschritten ab.

    Args:
        net: Netz
        inputs: Eingabesequenz [T, B, D_in]
        t_max: Anzahl auszuführender Zeitschritte (1..T)
        mode: Spike-Modus ("hard" oder "soft")
        probe: Optionale Liste, die alle Membranpotentiale vor dem Reset sammelt

    Raises:
        UsageError: Wenn t_max außerhalb von [1, T] liegt
        DimensionError: Wenn die Eingabe nicht [T, B, D_in] ist
    """
    x = _as_tensor(inputs)
    timesteps = net.config.timesteps
    if not 1 <= t_max <= timesteps:
        raise UsageError(f"t_max muss in [1, {timesteps}] liegen, ist {t_max}")
    if x.ndim != 3 or x.shape[0] != timesteps or x.shape[2] != net.config.layer_sizes[0]:
        raise DimensionError(
            f"Eingabe muss [T={timesteps}, B, D={net.config.layer_sizes[0]}] sein, ist {x.shape}"
        )

    net.reset(batch=x.shape[1])
    outputs = [net.step(take(x, t), mode, probe) for t in range(t_max)]
    return TimestepOutputs(stack(outputs))


def forward(
    net: Network,
    inputs: Union[Tensor, np.ndarray],
    mode: str = "hard",
    probe: Optional[List[np.ndarray]] = None,
) -> TimestepOutputs:
    """Alle T Submodelle; Zustände werden zu Beginn zurückgesetzt."""
    return truncated_forward(net, inputs, net.config.timesteps, mode, probe)


def mean_logits(out: TimestepOutputs) -> Tensor:
    """Mittel der Logits über die Zeitachse, [B, C]."""
    return mean(out.logits, axis=0)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    net: Network, path: Union[str, Path], logger: Optional[logging.Logger] = None
) -> Path:
    """Schreibt das Netz atomar im SNNM-Format."""
    logger = logger or logging.getLogger("snnd.network")
    path = Path(path)
    config = net.config
    header = bytearray(CHECKPOINT_MAGIC)
    header += struct.pack("<B", CHECKPOINT_VERSION)
    header += struct.pack("<I", len(config.layer_sizes))
    header += struct.pack(f"<{len(config.layer_sizes)}I", *config.layer_sizes)
    header += struct.pack("<I", config.timesteps)
    header += struct.pack(
        "<ddd", config.lif.tau, config.lif.threshold, config.lif.surrogate_width
    )
    header += struct.pack("<B", READOUTS.index(config.readout))

    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "wb") as f:
        f.write(bytes(header))
        for p in net.params:
            f.write(p.data.astype("<f8").tobytes())
    os.replace(tmp_path, path)
    logger.debug(f"Checkpoint geschrieben: {path}")
    return path


class _Reader:
    """Liest Werte aus einem Byte-Puffer und meldet Fehler mit Offset."""

    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def read(self, fmt: str, what: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.payload):
            raise FormatError(
                f"Checkpoint abgeschnitten beim Lesen von {what}: erwartet {size} Bytes, "
                f"vorhanden {len(self.payload) - self.offset}",
                offset=self.offset,
            )
        values = struct.unpack_from(fmt, self.payload, self.offset)
        self.offset += size
        return values


def load_checkpoint(path: Union[str, Path]) -> Network:
    """
    Lädt ein Netz aus einer SNNM-Datei.

    Raises:
        FormatError: Bei falscher Magic, Version, Konfiguration oder abgeschnittener Datei
    """
    payload = Path(path).read_bytes()
    reader = _Reader(payload)

    (magic,) = reader.read("<4s", "Magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"Keine SNNM-Datei (Magic {magic!r})", offset=0)
    (version,) = reader.read("<B", "Version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"Nicht unterstützte Checkpoint-Version {version}", offset=4)
    (count,) = reader.read("<I", "Schichtanzahl")
    sizes = list(reader.read(f"<{count}I", "Schichtgrößen"))
    (timesteps,) = reader.read("<I", "Zeitschritte")
    tau, threshold, width = reader.read("<ddd", "LIF-Parameter")
    (readout_code,) = reader.read("<B", "Readout")
    if readout_code >= len(READOUTS):
        raise FormatError(f"Unbekannter Readout-Code {readout_code}", offset=reader.offset - 1)

    try:
        config = SnnConfig(
            layer_sizes=sizes,
            timesteps=timesteps,
            lif=LifParams(tau=tau, threshold=threshold, surrogate_width=width),
            readout=READOUTS[readout_code],
        )
    except ConfigError as e:
        raise FormatError(f"Ungültige Konfiguration im Checkpoint: {e}", offset=5) from e

    params: List[Tensor] = []
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        for name, shape in ((f"W{layer}", (fan_in, fan_out)), (f"b{layer}", (fan_out,))):
            n = int(np.prod(shape))
            (raw,) = reader.read(f"<{8 * n}s", name)
            values = np.frombuffer(raw, dtype="<f8").reshape(shape)
            params.append(Tensor(values.astype(DTYPE), True, name=name))

    if reader.offset != len(payload):
        raise FormatError(
            f"Überzählige Bytes im Checkpoint: erwartet {reader.offset}, vorhanden {len(payload)}",
            offset=reader.offset,
        )
    return Network(config, params)
