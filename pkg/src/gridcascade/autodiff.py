"""Minimal reverse-mode automatic differentiation on dense float64 arrays.

A Tape records tensors in creation order (already topological); backward
walks the record in reverse, calling each node's vector-Jacobian closure and
accumulating into parent gradients. Parameter leaves flush their gradient
into a ParameterSet with +=, so several tapes can accumulate before an
optimizer step.

Only the operations the model needs exist: dense matmul, elementwise
arithmetic with one-column broadcasting, concat/slice, the activations, row
lookup with scatter-add backward, per-segment softmax and sum for attention
over edges, layer normalization, and summed cross-entropy.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

LEAKY_RELU_SLOPE = 0.2
LAYER_NORM_EPS = 1e-5
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class Tensor:
    """A node on a tape: a value, its parents, and a backward closure."""

    __slots__ = ("tape", "value", "parents", "vjp", "grad", "param_ref")

    def __init__(self, tape, value, parents=(), vjp=None, param_ref=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad = None
        self.param_ref = param_ref  # (ParameterSet, name) for leaves

    @property
    def shape(self):
        return self.value.shape


class ParameterSet:
    """Named parameter arrays with accumulated gradients and Adam state."""

    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.values:
            raise ShapeError(f"parameter {name!r} already exists")
        value = np.asarray(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self._m[name] = np.zeros_like(value)
        self._v[name] = np.zeros_like(value)

    @property
    def names(self) -> list[str]:
        return list(self.values)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def state_copy(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.values.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.values):
            raise ShapeError("parameter state names do not match")
        for name, value in state.items():
            if value.shape != self.values[name].shape:
                raise ShapeError(
                    f"parameter {name!r}: state shape {value.shape} != "
                    f"{self.values[name].shape}"
                )
            self.values[name][...] = value


class Tape:
    """Records tensors in creation order and runs reverse accumulation."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def _make(self, value, parents=(), vjp=None, param_ref=None) -> Tensor:
        t = Tensor(self, np.asarray(value, dtype=np.float64), parents, vjp, param_ref)
        self.nodes.append(t)
        return t

    def constant(self, value) -> Tensor:
        return self._make(value)

    def parameter(self, params: ParameterSet, name: str) -> Tensor:
        if name not in params.values:
            raise ShapeError(f"unknown parameter {name!r}")
        return self._make(params.values[name], param_ref=(params, name))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every reachable parameter (+=)."""
        if loss.tape is not self:
            raise ShapeError("loss tensor belongs to a different tape")
        if loss.value.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is None or node.vjp is None:
                continue
            for parent, pg in node.vjp(node.grad):
                if pg is None:
                    continue
                if parent.grad is None:
                    parent.grad = pg.copy()
                else:
                    parent.grad = parent.grad + pg
        for node in self.nodes:
            if node.param_ref is not None and node.grad is not None:
                params, name = node.param_ref
                params.grads[name] += node.grad


def _same_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ShapeError("operands recorded on different tapes")
    return tape


def _binary_shapes(op: str, a: Tensor, b: Tensor) -> None:
    """Shapes must match exactly or differ only by a broadcastable last
    column: (n, 1) against (n, m)."""
    if a.shape == b.shape:
        return
    if (
        len(a.shape) == 2
        and len(b.shape) == 2
        and a.shape[0] == b.shape[0]
        and (a.shape[1] == 1 or b.shape[1] == 1)
    ):
        return
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return grad.sum(axis=1, keepdims=True)


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        scalar = float(b)
        return a.tape._make(a.value + scalar, (a,), lambda g, a=a: [(a, g)])
    tape = _same_tape(a, b)
    _binary_shapes("add", a, b)
    value = a.value + b.value

    def vjp(g, a=a, b=b):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))]

    return tape._make(value, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, mul(b, -1.0))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        scalar = float(b)
        return a.tape._make(a.value * scalar, (a,), lambda g, a=a: [(a, g * scalar)])
    tape = _same_tape(a, b)
    _binary_shapes("mul", a, b)
    value = a.value * b.value

    def vjp(g, a=a, b=b):
        return [
            (a, _unbroadcast(g * b.value, a.shape)),
            (b, _unbroadcast(g * a.value, b.shape)),
        ]

    return tape._make(value, (a, b), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape(a, b)
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    value = a.value @ b.value

    def vjp(g, a=a, b=b):
        return [(a, g @ b.value.T), (b, a.value.T @ g)]

    return tape._make(value, (a, b), vjp)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    tape = _same_tape(*tensors)
    value = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g, tensors=tuple(tensors)):
        out = []
        for k, t in enumerate(tensors):
            index = [slice(None)] * g.ndim
            index[axis] = slice(int(offsets[k]), int(offsets[k + 1]))
            out.append((t, g[tuple(index)]))
        return out

    return tape._make(value, tuple(tensors), vjp)


def slice_axis(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    index = [slice(None)] * len(a.shape)
    index[axis] = slice(start, stop)
    index = tuple(index)
    value = a.value[index]

    def vjp(g, a=a, index=index):
        full = np.zeros_like(a.value)
        full[index] = g
        return [(a, full)]

    return a.tape._make(value, (a,), vjp)


def leaky_relu(a: Tensor, slope: float = LEAKY_RELU_SLOPE) -> Tensor:
    positive = a.value > 0
    value = np.where(positive, a.value, slope * a.value)

    def vjp(g, a=a, positive=positive):
        return [(a, g * np.where(positive, 1.0, slope))]

    return a.tape._make(value, (a,), vjp)


def elu(a: Tensor) -> Tensor:
    positive = a.value > 0
    value = np.where(positive, a.value, np.expm1(a.value))

    def vjp(g, positive=positive, value=value):
        return [(a, g * np.where(positive, 1.0, value + 1.0))]

    return a.tape._make(value, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    value = 1.0 / (1.0 + np.exp(-a.value))

    def vjp(g, a=a, value=value):
        return [(a, g * value * (1.0 - value))]

    return a.tape._make(value, (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    value = np.tanh(a.value)

    def vjp(g, a=a, value=value):
        return [(a, g * (1.0 - value * value))]

    return a.tape._make(value, (a,), vjp)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each row of a to zero mean and unit variance, then scale and
    shift per feature."""
    tape = _same_tape(a, gain, bias)
    if len(a.shape) != 2:
        raise ShapeError(f"layer_norm: expected a matrix, got shape {a.shape}")
    d = a.shape[1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} do not "
            f"match feature count {d}"
        )
    mean = a.value.mean(axis=1, keepdims=True)
    centered = a.value - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normalized = centered * inv_std
    value = normalized * gain.value + bias.value

    def vjp(g, a=a, gain=gain, bias=bias, normalized=normalized, inv_std=inv_std, d=d):
        g_bias = g.sum(axis=0)
        g_gain = (g * normalized).sum(axis=0)
        g_norm = g * gain.value
        g_a = inv_std * (
            g_norm
            - g_norm.mean(axis=1, keepdims=True)
            - normalized * (g_norm * normalized).mean(axis=1, keepdims=True)
        )
        return [(a, g_a), (gain, g_gain), (bias, g_bias)]

    return tape._make(value, (a, gain, bias), vjp)


def embedding_lookup(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of `table`; backward scatter-adds into the table rows.

    Also serves as the per-edge gather of node features (indices may repeat).
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 1:
        raise ShapeError(f"embedding_lookup: indices must be 1-d, got {indices.shape}")
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding_lookup: index out of range for table with "
            f"{table.shape[0]} rows"
        )
    value = table.value[indices]

    def vjp(g, table=table, indices=indices):
        full = np.zeros_like(table.value)
        np.add.at(full, indices, g)
        return [(table, full)]

    return table.tape._make(value, (table,), vjp)


def _segment_layout(op: str, a: Tensor, segment_ids: np.ndarray, num_segments: int):
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.ndim != 1 or segment_ids.shape[0] != a.shape[0]:
        raise ShapeError(
            f"{op}: segment ids shape {segment_ids.shape} does not match "
            f"leading dimension of {a.shape}"
        )
    if segment_ids.size and (segment_ids.min() < 0 or segment_ids.max() >= num_segments):
        raise ShapeError(f"{op}: segment id out of range [0, {num_segments})")
    return segment_ids


def segment_softmax(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Softmax over the entries sharing a segment id (numerically shifted).

    `a` is (E,) or (E, 1): one logit per edge, segments indexed by target.
    """
    if len(a.shape) == 2 and a.shape[1] != 1:
        raise ShapeError(f"segment_softmax: expected one logit per row, got {a.shape}")
    segment_ids = _segment_layout("segment_softmax", a, segment_ids, num_segments)
    flat = a.value.reshape(-1)
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, segment_ids, flat)
    shifted = np.exp(flat - seg_max[segment_ids])
    seg_sum = np.zeros(num_segments)
    np.add.at(seg_sum, segment_ids, shifted)
    out = (shifted / seg_sum[segment_ids]).reshape(a.shape)

    def vjp(g, a=a, segment_ids=segment_ids, out=out):
        g_flat = g.reshape(-1)
        out_flat = out.reshape(-1)
        weighted = np.zeros(num_segments)
        np.add.at(weighted, segment_ids, g_flat * out_flat)
        g_a = out_flat * (g_flat - weighted[segment_ids])
        return [(a, g_a.reshape(a.shape))]

    return a.tape._make(out, (a,), vjp)


def segment_sum(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of `a` into num_segments buckets by segment id."""
    segment_ids = _segment_layout("segment_sum", a, segment_ids, num_segments)
    out_shape = (num_segments,) + a.shape[1:]
    value = np.zeros(out_shape)
    np.add.at(value, segment_ids, a.value)

    def vjp(g, a=a, segment_ids=segment_ids):
        return [(a, g[segment_ids])]

    return a.tape._make(value, (a,), vjp)


def cross_entropy_with_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Summed cross-entropy between per-row logits and integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(logits.shape) != 2:
        raise ShapeError(f"cross_entropy: logits must be a matrix, got {logits.shape}")
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(
            f"cross_entropy: labels shape {labels.shape} does not match {n} rows"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ShapeError(f"cross_entropy: label out of range [0, {c})")
    row_max = logits.value.max(axis=1, keepdims=True)
    shifted = logits.value - row_max
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + row_max
    log_probs = logits.value - log_norm
    value = -log_probs[np.arange(n), labels].sum()

    def vjp(g, logits=logits, labels=labels, log_probs=log_probs):
        soft = np.exp(log_probs)
        soft[np.arange(len(labels)), labels] -= 1.0
        return [(logits, float(g) * soft)]

    return logits.tape._make(value, (logits,), vjp)


def adam_step(
    params: ParameterSet,
    lr: float,
    betas: tuple[float, float] = ADAM_BETAS,
    eps: float = ADAM_EPS,
) -> None:
    """One bias-corrected Adam update over every parameter; gradients reset."""
    beta1, beta2 = betas
    params.step += 1
    correction1 = 1.0 - beta1 ** params.step
    correction2 = 1.0 - beta2 ** params.step
    for name, value in params.values.items():
        g = params.grads[name]
        m = params._m[name]
        v = params._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        value -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    params.zero_grads()
