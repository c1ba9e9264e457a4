"""
Dense float64 tensors with reverse-mode automatic differentiation.

Only the primitives a small MLP classifier needs are provided. Operations are
recorded on the tape that is active in the current thread::

    with ComputationTape() as tape:
        hidden = relu(add(matmul(x, w), b))
        loss, probs = softmax_cross_entropy(hidden, labels)
    grad_w, grad_b = backward(tape, loss, [w, b])

Outside a tape the same functions just compute values, which is how inference
runs. Every op output is checked for NaN/Inf.
"""
import threading
from dataclasses import dataclass
from typing import Callable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from masksembles.errors import NonFiniteError
from masksembles.errors import ShapeError
from masksembles.errors import ValidationError


class Tensor:
    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        label = self.name or 'Tensor'
        return '<%s shape=%s requires_grad=%s>' % (label, self.shape, self.requires_grad)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class Node:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


_local = threading.local()


def _tape_stack() -> list:
    if not hasattr(_local, 'stack'):
        _local.stack = []
    return _local.stack


def current_tape() -> Optional['ComputationTape']:
    stack = _tape_stack()
    return stack[-1] if stack else None


class ComputationTape:
    """Ordered record of primitive ops; inputs always precede the ops using them."""

    def __init__(self):
        self.nodes: List[Node] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, type_, value, tb):
        _tape_stack().remove(self)

    def __len__(self):
        return len(self.nodes)

    def record(self, node: Node) -> None:
        self.nodes.append(node)


def _check_finite(op: str, values: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError('%s produced non-finite values' % op)
    return values


def _emit(op: str, inputs: Sequence[Tensor], values: np.ndarray, backward_fn) -> Tensor:
    output = Tensor(_check_finite(op, values))
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        tape.record(Node(op, tuple(inputs), output, backward_fn))
    return output


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError('matmul: shape mismatch %s @ %s' % (a.shape, b.shape))
    return _emit('matmul', (a, b), a.data @ b.data,
                 lambda grad: (grad @ b.data.T, a.data.T @ grad))


def add(a, b) -> Tensor:
    """Elementwise sum of equal shapes, or a row-wise bias add of a vector."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _emit('add', (a, b), a.data + b.data, lambda grad: (grad, grad))
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return _emit('add', (a, b), a.data + b.data, lambda grad: (grad, grad.sum(axis=0)))
    raise ShapeError('add: shape mismatch %s + %s' % (a.shape, b.shape))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError('mul: shape mismatch %s * %s' % (a.shape, b.shape))
    return _emit('mul', (a, b), a.data * b.data, lambda grad: (grad * b.data, grad * a.data))


def scale(x, factor: float) -> Tensor:
    x = as_tensor(x)
    factor = float(factor)
    return _emit('scale', (x,), x.data * factor, lambda grad: (grad * factor,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    active = x.data > 0
    return _emit('relu', (x,), np.where(active, x.data, 0.0), lambda grad: (grad * active,))


def mask(x, mask_values) -> Tensor:
    """
    Multiply activations by a constant 0/1 mask: one vector for the whole
    batch, or a ``B x K`` matrix with one mask per sample.
    """
    x = as_tensor(x)
    values = np.asarray(mask_values, dtype=np.float64)
    if x.data.ndim != 2 or values.shape not in ((x.shape[1],), x.shape):
        raise ShapeError('mask: shape mismatch %s vs mask %s' % (x.shape, values.shape))
    return _emit('mask', (x,), x.data * values, lambda grad: (grad * values,))


def sum(x) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    return _emit('sum', (x,), np.array(x.data.sum()),
                 lambda grad: (np.full(x.shape, float(grad)),))


def mean(x) -> Tensor:
    x = as_tensor(x)
    count = x.size
    return _emit('mean', (x,), np.array(x.data.mean()),
                 lambda grad: (np.full(x.shape, float(grad) / count),))


def _log_softmax(logits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    return shifted - np.log(total), exp / total


def softmax(logits) -> np.ndarray:
    values = as_tensor(logits).data
    if values.ndim != 2:
        raise ShapeError('softmax: expected a B x C matrix, got %s' % (values.shape,))
    return _check_finite('softmax', _log_softmax(values)[1])


def softmax_cross_entropy(logits, labels, reduction: str = 'mean') -> Tuple[Tensor, np.ndarray]:
    """
    Numerically stable softmax followed by the negative log-likelihood of
    ``labels``. Returns the scalar loss (mean or sum over the batch) and the
    probabilities.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError('softmax_cross_entropy: logits %s vs labels %s' % (logits.shape, labels.shape))
    classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValidationError('labels must be in [0, %d)' % classes)
    if reduction not in ('mean', 'sum'):
        raise ValidationError('unknown reduction "%s"' % reduction)

    log_probs, probs = _log_softmax(logits.data)
    rows = np.arange(labels.size)
    nll = -log_probs[rows, labels]
    weight = 1.0 / labels.size if reduction == 'mean' and labels.size else 1.0
    loss = np.array(nll.sum() * weight)

    def backward_fn(grad):
        delta = probs.copy()
        delta[rows, labels] -= 1.0
        return (delta * (float(grad) * weight),)

    return _emit('softmax_cross_entropy', (logits,), loss, backward_fn), _check_finite('softmax', probs)


def backward(tape: ComputationTape, loss: Tensor, params: Optional[Sequence[Tensor]] = None):
    """
    Propagate d(loss)/d(.) back through the tape. Every tensor on the tape
    that requires a gradient gets ``.grad`` set, zeros when unreachable from
    the loss. Returns the gradients of ``params`` in order.
    """
    if loss.size != 1:
        raise ValidationError('backward needs a scalar loss, got shape %s' % (loss.shape,))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        grad = grads.get(id(node.output))
        if grad is None:
            continue
        for tensor, input_grad in zip(node.inputs, node.backward(grad)):
            if not tensor.requires_grad or input_grad is None:
                continue
            key = id(tensor)
            grads[key] = input_grad if key not in grads else grads[key] + input_grad

    seen = {}
    for node in tape.nodes:
        for tensor in node.inputs + (node.output,):
            seen[id(tensor)] = tensor
    for tensor in params or ():
        seen[id(tensor)] = tensor
    for key, tensor in seen.items():
        if tensor.requires_grad:
            tensor.grad = grads.get(key, np.zeros_like(tensor.data))

    return [tensor.grad for tensor in params] if params is not None else None
