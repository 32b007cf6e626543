"""Reverse-mode automatic differentiation over dense float64 tensors.

Operations eagerly record a closure graph as they execute; ``backward`` walks
it once in reverse topological order and accumulates gradients additively.
Shapes are strict: the only broadcast supported is adding a ``[n]`` bias
vector to a ``[m, n]`` matrix, so mismatches surface as shape errors instead
of silent bugs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, GraphError, LabelError, VocabularyError

Array = np.ndarray

_SIGMOID_LO = np.finfo(np.float64).tiny
_SIGMOID_HI = float(np.nextafter(1.0, 0.0))


class ComputationNode:
    """Backward record for one operation.

    ``backward_fn`` closes over whatever forward values the gradient rule
    needs and accumulates into the inputs' ``grad`` buffers when called with
    the upstream gradient.
    """

    __slots__ = ("op_kind", "inputs", "backward_fn")

    def __init__(self, op_kind: str, inputs: Sequence["Tensor"],
                 backward_fn: Callable[[Array], None]):
        self.op_kind = op_kind
        self.inputs = tuple(inputs)
        self.backward_fn = backward_fn


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    Tensors produced by recorded operations carry a ``node`` linking them to
    their parents; leaves (parameters, inputs) have ``node is None``.
    """

    __slots__ = ("data", "grad", "requires_grad", "node", "path")

    def __init__(self, data, requires_grad: bool = False,
                 node: ComputationNode | None = None, path: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self.node = node
        self.path = path

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" path={self.path!r}" if self.path else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"


def parameter(data, path: str) -> Tensor:
    """A trainable leaf tensor registered under a unique path."""
    return Tensor(data, requires_grad=True, path=path)


def _accumulate(t: Tensor, g: Array) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


def _result(data: Array, op_kind: str, inputs: Sequence[Tensor],
            backward_fn: Callable[[Array], None]) -> Tensor:
    if any(t.requires_grad for t in inputs):
        node = ComputationNode(op_kind, inputs, backward_fn)
        return Tensor(data, requires_grad=True, node=node)
    return Tensor(data)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for parent in t.node.inputs:
                stack.append((parent, False))
    return order


def backward_from(output: Tensor, upstream: Array) -> None:
    """Seed ``output`` with an arbitrary upstream gradient and propagate."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != output.data.shape:
        raise DimensionError(
            f"upstream gradient shape {upstream.shape} does not match "
            f"output shape {output.data.shape}")
    order = _topo_order(output)
    _accumulate(output, upstream)
    for t in reversed(order):
        if t.node is not None and t.grad is not None:
            t.node.backward_fn(t.grad)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad ancestor of a scalar loss.

    Repeated calls without zeroing accumulate additively.
    """
    if loss.data.size != 1:
        raise GraphError(
            f"backward requires a scalar loss, got shape {loss.data.shape}")
    backward_from(loss, np.ones_like(loss.data))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(
            f"matmul requires 2-d operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} and {b.shape}")
    out = a.data @ b.data

    def _back(g: Array) -> None:
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(out, "matmul", (a, b), _back)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; the one allowed broadcast is bias-add of ``[n]`` to ``[m, n]``."""
    if a.shape == b.shape:
        def _back_same(g: Array) -> None:
            _accumulate(a, g)
            _accumulate(b, g)
        return _result(a.data + b.data, "add", (a, b), _back_same)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        def _back_bias(g: Array) -> None:
            _accumulate(a, g)
            _accumulate(b, g.sum(axis=0))
        return _result(a.data + b.data, "add", (a, b), _back_bias)
    raise DimensionError(f"add shapes incompatible: {a.shape} and {b.shape}")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    mask = x.data > 0.0  # relu'(0) := 0

    def _back(g: Array) -> None:
        _accumulate(x, g * mask)

    return _result(out, "relu", (x,), _back)


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    out = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                   np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    out = np.clip(out, _SIGMOID_LO, _SIGMOID_HI)  # keep outputs inside (0, 1)

    def _back(g: Array) -> None:
        _accumulate(x, g * out * (1.0 - out))

    return _result(out, "sigmoid", (x,), _back)


def softmax(x: Tensor) -> Tensor:
    """Softmax along the final axis of a 1-d or 2-d tensor."""
    if x.data.ndim not in (1, 2):
        raise DimensionError(f"softmax requires a 1-d or 2-d tensor, got {x.shape}")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def _back(g: Array) -> None:
        inner = (g * out).sum(axis=-1, keepdims=True)
        _accumulate(x, out * (g - inner))

    return _result(out, "softmax", (x,), _back)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise DimensionError("concat of zero tensors")
    ndim = tensors[0].data.ndim
    if not 0 <= axis < ndim:
        raise DimensionError(f"concat axis {axis} out of range for {ndim}-d tensors")
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != ndim or other[:axis] + other[axis + 1:] != ref[:axis] + ref[axis + 1:]:
            raise DimensionError(
                "concat shapes incompatible along axis "
                f"{axis}: {[tuple(t.shape) for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def _back(g: Array) -> None:
        offset = 0
        for t, size in zip(tensors, sizes):
            sl = [slice(None)] * ndim
            sl[axis] = slice(offset, offset + size)
            _accumulate(t, g[tuple(sl)])
            offset += size

    return _result(out, "concat", tuple(tensors), _back)


def mean(x: Tensor) -> Tensor:
    """Mean over all elements, producing a scalar."""
    n = x.data.size
    out = np.asarray(x.data.mean())

    def _back(g: Array) -> None:
        _accumulate(x, np.full_like(x.data, float(g) / n))

    return _result(out, "mean", (x,), _back)


def masked_mean(x: Tensor, mask: Array) -> Tensor:
    """Mean of ``x [b, L, e]`` over the positions where ``mask [b, L]`` is 1.

    Divides by the mask sum of each row, never by L; all-masked rows pool
    to the zero vector.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if x.data.ndim != 3 or mask.shape != x.data.shape[:2]:
        raise DimensionError(
            f"masked_mean expects x [b, L, e] and mask [b, L], got {x.shape} and {mask.shape}")
    counts = np.maximum(mask.sum(axis=1), 1.0)
    out = (x.data * mask[:, :, None]).sum(axis=1) / counts[:, None]

    def _back(g: Array) -> None:
        _accumulate(x, g[:, None, :] * mask[:, :, None] / counts[:, None, None])

    return _result(out, "mean", (x,), _back)


def embedding_lookup(table: Tensor, ids: Array) -> Tensor:
    """Gather rows of ``table [V, e]`` by integer ids ``[b, L]``."""
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise DimensionError(f"embedding table must be 2-d, got {table.shape}")
    vocab_size = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        bad = int(ids.max() if ids.max() >= vocab_size else ids.min())
        raise VocabularyError(f"token id {bad} outside vocabulary of size {vocab_size}")
    out = table.data[ids]

    def _back(g: Array) -> None:
        if not table.requires_grad:
            return
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        _accumulate(table, gt)

    return _result(out, "embedding_lookup", (table,), _back)


def _log_softmax(z: Array) -> Array:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, targets: Array, weight: float = 1.0) -> Tensor:
    """Mean over the batch of -log softmax(logits)[target].

    ``weight`` scales the loss (and its gradients), for joint objectives.
    """
    targets = np.asarray(targets)
    if logits.data.ndim != 2:
        raise DimensionError(f"cross_entropy expects logits [b, c], got {logits.shape}")
    b, c = logits.shape
    if c < 2:
        raise DimensionError(f"cross_entropy needs at least 2 classes, got {c}")
    if targets.shape != (b,):
        raise DimensionError(
            f"cross_entropy targets shape {targets.shape} does not match batch {b}")
    bad = np.nonzero((targets < 0) | (targets >= c))[0]
    if bad.size:
        i = int(bad[0])
        raise LabelError(
            f"target {int(targets[i])} at index {i} outside class range [0, {c})")
    lsm = _log_softmax(logits.data)
    out = np.asarray(-lsm[np.arange(b), targets].mean() * weight)

    def _back(g: Array) -> None:
        dz = np.exp(lsm)
        dz[np.arange(b), targets] -= 1.0
        _accumulate(logits, dz * (weight * float(g) / b))

    return _result(out, "cross_entropy", (logits,), _back)


def grouped_cross_entropy(logits: Tensor, targets: Array, groups: int,
                          weight: float = 1.0) -> Tensor:
    """Cross-entropy over ``groups`` independent class blocks per row.

    ``logits [b, groups*c]`` is reshaped to ``[b, groups, c]``; ``targets``
    is ``[b, groups]`` of class indices. Loss is the mean over all b*groups
    sub-problems.
    """
    targets = np.asarray(targets)
    if logits.data.ndim != 2 or logits.shape[1] % groups != 0:
        raise DimensionError(
            f"grouped_cross_entropy logits {logits.shape} not divisible into {groups} groups")
    b = logits.shape[0]
    c = logits.shape[1] // groups
    if c < 2:
        raise DimensionError(f"grouped_cross_entropy needs at least 2 classes, got {c}")
    if targets.shape != (b, groups):
        raise DimensionError(
            f"grouped_cross_entropy targets shape {targets.shape}, expected {(b, groups)}")
    bad = np.nonzero((targets < 0) | (targets >= c))
    if bad[0].size:
        i, j = int(bad[0][0]), int(bad[1][0])
        raise LabelError(
            f"target {int(targets[i, j])} at index ({i}, {j}) outside class range [0, {c})")
    z = logits.data.reshape(b, groups, c)
    lsm = _log_softmax(z)
    rows = np.arange(b)[:, None]
    cols = np.arange(groups)[None, :]
    out = np.asarray(-lsm[rows, cols, targets].mean() * weight)

    def _back(g: Array) -> None:
        dz = np.exp(lsm)
        dz[rows, cols, targets] -= 1.0
        _accumulate(logits, dz.reshape(b, groups * c) * (weight * float(g) / (b * groups)))

    return _result(out, "cross_entropy", (logits,), _back)


def binary_cross_entropy(logits: Tensor, targets: Array, weight: float = 1.0) -> Tensor:
    """Mean over all entries of the stable logits-form binary cross-entropy."""
    targets = np.asarray(targets, dtype=np.float64)
    if logits.data.ndim != 2:
        raise DimensionError(
            f"binary_cross_entropy expects logits [b, k], got {logits.shape}")
    if targets.shape != logits.data.shape:
        raise DimensionError(
            f"binary_cross_entropy targets shape {targets.shape} "
            f"does not match logits {logits.shape}")
    if not np.all((targets == 0.0) | (targets == 1.0)):
        bad = np.argwhere((targets != 0.0) & (targets != 1.0))[0]
        raise LabelError(
            f"non-binary target {targets[tuple(bad)]} at index {tuple(int(v) for v in bad)}")
    z = logits.data
    # max(z,0) - z*t + log(1 + exp(-|z|)) is exact and overflow-free
    per_elem = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    out = np.asarray(per_elem.mean() * weight)

    def _back(g: Array) -> None:
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                       np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        _accumulate(logits, (sig - targets) * (weight * float(g) / n))

    return _result(out, "binary_cross_entropy", (logits,), _back)
