"""
Minimale Rückwärts-Differentiation über dichte numpy-Arrays.

Jede Primitive berechnet ihr Ergebnis sofort und trägt, falls ein Operand
Gradienten benötigt, einen Knoten in den aktuellen Graphen ein. ``backward``
läuft die Knoten genau einmal in umgekehrter Aufzeichnungsreihenfolge ab und
leert den Graphen danach.

Ausser dem Bias-Add gibt es kein Broadcasting: alle Formen müssen exakt passen.
"""

import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError, DimensionError, NumericError, ParameterError, UsageError

# float64 ist Standard; SNND_FLOAT=float32 als Build-Option
DTYPE = np.dtype(os.getenv("SNND_FLOAT", "float64"))

PROB_CLAMP = 1e-12
NORMALIZATION_TOLERANCE = 1e-6

ArrayLike = Union[np.ndarray, Sequence, float, int]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """Dichtes Array mit optionalem Gradientenpuffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data: np.ndarray = np.array(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Gleiche Werte, ohne Verbindung zum Graphen."""
        return Tensor._wrap(self.data, False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return mean(self, axis)

    def __getitem__(self, index: int) -> "Tensor":
        return take(self, index)

    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    __radd__ = __add__

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -float(other))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "Tensor":
        return scale(self, 1.0 / float(other))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    """Eine aufgezeichnete Anwendung einer Primitive."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


@dataclass
class Graph:
    """Aufzeichnungsband; die Reihenfolge ist eine topologische Ordnung."""

    nodes: List[Node] = field(default_factory=list)
    enabled: bool = True

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


_graph = Graph()


def get_graph() -> Graph:
    return _graph


@contextmanager
def no_grad() -> Iterator[None]:
    """Deaktiviert die Aufzeichnung innerhalb des Blocks."""
    previous = _graph.enabled
    _graph.enabled = False
    try:
        yield
    finally:
        _graph.enabled = previous


def make_op(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """
    Erzeugt das Ergebnis einer Primitive und zeichnet es bei Bedarf auf.

    Args:
        op: Name der Primitive (für Fehlermeldungen)
        data: Bereits berechnetes Ergebnis
        inputs: Operanden in der Reihenfolge, in der backward_fn Gradienten liefert
        backward_fn: Bildet den Ausgabegradienten auf die Operandengradienten ab

    Raises:
        NumericError: Wenn das Ergebnis NaN oder Inf enthält
    """
    if not np.all(np.isfinite(data)):
        raise NumericError(f"Operation '{op}' hat NaN/Inf erzeugt")
    requires_grad = _graph.enabled and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(np.asarray(data, dtype=DTYPE), requires_grad)
    if requires_grad:
        _graph.record(Node(op, tuple(inputs), out, backward_fn))
    return out


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: Formen passen nicht zusammen: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# Elementare Primitive
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return make_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return make_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    return make_op("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, factor: float) -> Tensor:
    return make_op("scale", x.data * factor, (x,), lambda g: (g * factor,))


def shift(x: Tensor, offset: float) -> Tensor:
    return make_op("shift", x.data + offset, (x,), lambda g: (g,))


def sum_all(x: Tensor) -> Tensor:
    return make_op("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.full(x.shape, g),))


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    if axis is None:
        n = x.size
        return make_op("mean", np.asarray(x.data.mean()), (x,), lambda g: (np.full(x.shape, g / n),))

    n = x.shape[axis]

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy(),)

    return make_op("mean", x.data.mean(axis=axis), (x,), backward_fn)


def take(x: Tensor, index: int) -> Tensor:
    """Wählt den Eintrag ``index`` entlang der ersten Achse."""
    if not -x.shape[0] <= index < x.shape[0]:
        raise DimensionError(f"take: Index {index} außerhalb von [0, {x.shape[0]})")

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(x.shape, dtype=DTYPE)
        full[index] = g
        return (full,)

    return make_op("take", x.data[index].copy(), (x,), backward_fn)


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stapelt gleich geformte Tensoren entlang einer neuen ersten Achse."""
    if not tensors:
        raise DimensionError("stack: leere Liste")
    for t in tensors[1:]:
        _check_same_shape("stack", tensors[0], t)

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(g[i] for i in range(len(tensors)))

    return make_op("stack", np.stack([t.data for t in tensors]), tuple(tensors), backward_fn)


def dense_forward(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """
    Affine Abbildung y = xW + b.

    Raises:
        DimensionError: Wenn x [B, Din], W [Din, Dout] und b [Dout] nicht zusammenpassen
    """
    if x.ndim != 2 or W.ndim != 2 or b.ndim != 1:
        raise DimensionError(f"dense: erwartet x[B,Din], W[Din,Dout], b[Dout], bekam {x.shape}, {W.shape}, {b.shape}")
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise DimensionError(f"dense: Formen passen nicht zusammen: {x.shape}, {W.shape}, {b.shape}")

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        return (g @ W.data.T, x.data.T @ g, g.sum(axis=0))

    return make_op("dense", x.data @ W.data + b.data, (x, W, b), backward_fn)


# ---------------------------------------------------------------------------
# Softmax und Verlustfunktionen
# ---------------------------------------------------------------------------


def softmax_array(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Softmax entlang der letzten Achse ohne Graph (Max-Subtraktion)."""
    if not temperature > 0.0:
        raise ParameterError(f"Temperatur muss > 0 sein, ist {temperature}")
    z = logits / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits: Tensor, temperature: float = 1.0) -> Tensor:
    """
    Softmax entlang der letzten Achse bei gegebener Temperatur.

    Raises:
        ParameterError: Wenn temperature <= 0
    """
    p = softmax_array(logits.data, temperature)

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        inner = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - inner) / temperature,)

    return make_op("softmax", p, (logits,), backward_fn)


def cross_entropy(logits: Tensor, labels: ArrayLike) -> Tensor:
    """
    Mittlere Kreuzentropie über den Batch.

    Raises:
        DimensionError: Wenn logits nicht [B, C] ist oder die Label-Anzahl nicht B entspricht
        DataError: Wenn ein Label außerhalb von [0, C) liegt
    """
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or y.shape[0] != logits.shape[0]:
        raise DimensionError(f"cross_entropy: logits {logits.shape} passen nicht zu {y.shape[0]} Labels")
    batch, classes = logits.shape
    if np.any(y < 0) or np.any(y >= classes):
        raise DataError(f"cross_entropy: Label außerhalb von [0, {classes})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    rows = np.arange(batch)
    loss = -log_p[rows, y].mean()

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.exp(log_p)
        grad[rows, y] -= 1.0
        return (grad * (g / batch),)

    return make_op("cross_entropy", np.asarray(loss), (logits,), backward_fn)


def _check_probability_rows(name: str, p: np.ndarray) -> None:
    if np.any(p < 0.0):
        raise DataError(f"kl_divergence: {name} enthält negative Einträge")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > NORMALIZATION_TOLERANCE):
        raise DataError(f"kl_divergence: Zeilen von {name} summieren nicht zu 1")


def kl_divergence(p_teacher: Tensor, p_student: Tensor) -> Tensor:
    """
    Batch-Mittel von sum_j p_t * log(p_t / p_s).

    Beide Argumente werden vor dem Logarithmus auf >= 1e-12 geklemmt. Der
    Gradient fließt in beide Argumente; ein abgetrennter Lehrer-Tensor
    blockiert den Lehrerpfad.

    Raises:
        DimensionError: Bei unterschiedlichen Formen oder nicht [B, C]
        DataError: Wenn eine Zeile keine Wahrscheinlichkeitsverteilung ist
    """
    _check_same_shape("kl_divergence", p_teacher, p_student)
    if p_teacher.ndim != 2:
        raise DimensionError(f"kl_divergence: erwartet [B, C], bekam {p_teacher.shape}")
    pt, ps = p_teacher.data, p_student.data
    _check_probability_rows("p_teacher", pt)
    _check_probability_rows("p_student", ps)

    batch = pt.shape[0]
    pt_c = np.maximum(pt, PROB_CLAMP)
    ps_c = np.maximum(ps, PROB_CLAMP)
    log_ratio = np.log(pt_c) - np.log(ps_c)
    value = (pt * log_ratio).sum(axis=1).mean()

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_t = log_ratio + np.where(pt >= PROB_CLAMP, 1.0, 0.0)
        grad_s = np.where(ps >= PROB_CLAMP, -pt / ps_c, 0.0)
        return (grad_t * (g / batch), grad_s * (g / batch))

    return make_op("kl_divergence", np.asarray(value), (p_teacher, p_student), backward_fn)


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mittel der quadrierten Differenzen."""
    _check_same_shape("mse_loss", a, b)
    diff = a.data - b.data
    n = diff.size

    def backward_fn(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad = diff * (2.0 * g / n)
        return (grad, -grad)

    return make_op("mse_loss", np.asarray((diff * diff).mean()), (a, b), backward_fn)


# ---------------------------------------------------------------------------
# Rückwärtsdurchlauf
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """
    Füllt ``grad`` aller Tensoren mit requires_grad, die zum Verlust beitragen.

    Gradienten werden aufsummiert; mehrfach verwendete Tensoren erhalten die
    Summe aller Pfade. Der Graph wird danach geleert.

    Raises:
        UsageError: Wenn loss kein Skalar ist
    """
    if loss.ndim != 0:
        raise UsageError(f"backward erwartet einen skalaren Verlust, bekam Form {loss.shape}")

    graph = get_graph()
    try:
        seed = np.ones((), dtype=DTYPE)
        loss.grad = seed if loss.grad is None else loss.grad + seed
        for node in reversed(graph.nodes):
            out_grad = node.output.grad
            if out_grad is None:
                continue
            for inp, g in zip(node.inputs, node.backward(out_grad)):
                if g is None or not inp.requires_grad:
                    continue
                inp.grad = np.array(g, dtype=DTYPE) if inp.grad is None else inp.grad + g
    finally:
        graph.clear()


def finite_difference_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6
) -> float:
    """
    Vergleicht backward-Gradienten mit zentralen Differenzen.

    Args:
        f: Deterministische, glatte Funktion von x auf einen skalaren Tensor
        x: Tensor mit requires_grad=True; wird temporär elementweise verschoben
        eps: Schrittweite

    Returns:
        max |fd - ad| / max(1, |fd|) über alle Elemente
    """
    get_graph().clear()
    x.grad = None
    backward(f(x))
    analytic = np.zeros(x.shape, dtype=DTYPE) if x.grad is None else x.grad.copy()

    numeric = np.zeros(x.size, dtype=DTYPE)
    x.data = np.ascontiguousarray(x.data)
    flat = x.data.reshape(-1)  # View, Änderungen wirken auf x
    with no_grad():
        for i in range(x.size):
            original = flat[i]
            flat[i] = original + eps
            upper = f(x).item()
            flat[i] = original - eps
            lower = f(x).item()
            flat[i] = original
            numeric[i] = (upper - lower) / (2.0 * eps)

    error = np.abs(numeric - analytic.reshape(-1)) / np.maximum(1.0, np.abs(numeric))
    return float(error.max()) if error.size else 0.0
