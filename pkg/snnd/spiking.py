"""
LIF-Neuronen mit weichem Reset und Rechteck-Surrogatgradient.

Im Modus "hard" sind Spikes exakt binär; der Rückwärtsdurchlauf ersetzt die
Ableitung der Schwellenfunktion durch das Rechteckfenster (1/a) für
|H - ϑ| < a/2. Der Modus "soft" ersetzt die Schwelle durch die Rampe
clip((H - ϑ)/a + 0.5, 0, 1), deren Ableitung genau dieses Fenster ist; er
existiert nur, damit Gradientenprüfungen das ganze Netz abdecken können.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .autodiff import DTYPE, Tensor, add, make_op, scale, sub
from .config import LifParams
from .errors import ConfigError, DimensionError

SPIKE_MODES = ("hard", "soft")


@dataclass
class LifState:
    """Membranpotentiale H einer Schicht, [B, D]."""

    membrane: Tensor

    @classmethod
    def zeros(cls, batch: int, width: int) -> "LifState":
        return cls(Tensor(np.zeros((batch, width), dtype=DTYPE)))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.membrane.shape


def surrogate_grad(membrane: np.ndarray, params: LifParams) -> np.ndarray:
    """Rechteck-Surrogat: 1/a innerhalb von |H - ϑ| < a/2, sonst 0."""
    a = params.surrogate_width
    window = np.abs(np.asarray(membrane) - params.threshold) < a / 2.0
    return window.astype(DTYPE) / a


def _spike_hard(membrane: Tensor, params: LifParams) -> Tensor:
    spikes = (membrane.data >= params.threshold).astype(DTYPE)
    window = surrogate_grad(membrane.data, params)
    return make_op("spike_hard", spikes, (membrane,), lambda g: (g * window,))


def _spike_soft(membrane: Tensor, params: LifParams) -> Tensor:
    ramp = (membrane.data - params.threshold) / params.surrogate_width + 0.5
    spikes = np.clip(ramp, 0.0, 1.0)
    window = surrogate_grad(membrane.data, params)
    return make_op("spike_soft", spikes, (membrane,), lambda g: (g * window,))


def lif_step(
    state: LifState,
    input_current: Tensor,
    params: LifParams,
    mode: str = "hard",
    probe: Optional[List[np.ndarray]] = None,
) -> Tuple[Tensor, LifState]:
    """
    Ein Zeitschritt der LIF-Dynamik.

    H' = (1 - 1/τ)·H + I, Spike S aus H', danach weicher Reset H' - S·ϑ.
    Im Modus "hard" wird S im Reset-Term als Konstante behandelt; im Modus
    "soft" ist der Reset voll differenzierbar.

    Args:
        state: Zustand vor dem Schritt
        input_current: Eingangsstrom [B, D]
        params: LIF-Parameter
        mode: "hard" (Training) oder "soft" (nur Gradientenprüfung)
        probe: Optionale Liste, an die H' vor dem Reset angehängt wird

    Returns:
        (Spikes, neuer Zustand)

    Raises:
        DimensionError: Wenn Zustand und Eingangsstrom unterschiedlich geformt sind
        ConfigError: Bei unbekanntem Modus
    """
    if state.shape != input_current.shape:
        raise DimensionError(
            f"lif_step: Membran {state.shape} und Eingangsstrom {input_current.shape} passen nicht"
        )
    if mode not in SPIKE_MODES:
        raise ConfigError(f"Unbekannter Spike-Modus '{mode}', erlaubt: {SPIKE_MODES}")

    charged = add(scale(state.membrane, params.leak), input_current)
    if probe is not None:
        probe.append(charged.data.copy())

    if mode == "hard":
        spikes = _spike_hard(charged, params)
        reset = Tensor._wrap(spikes.data * params.threshold, False)
    else:
        # Im Soft-Modus ist der Reset Teil der glatten Funktion, damit
        # Differenzenquotienten über mehrere Zeitschritte stimmen
        spikes = _spike_soft(charged, params)
        reset = scale(spikes, params.threshold)
    return spikes, LifState(sub(charged, reset))


def reset_states(states: Iterable[LifState]) -> None:
    """Setzt alle Membranen auf Null und verwirft ihre Gradientenhistorie."""
    for state in states:
        state.membrane = Tensor(np.zeros(state.shape, dtype=DTYPE))
