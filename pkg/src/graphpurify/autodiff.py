"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records its inputs and a backward closure on the output
tensor; ``backward`` replays the recorded graph in reverse topological
order. Outputs whose inputs all have ``requires_grad=False`` drop their
record, so constant subgraphs cost nothing at backward time. There is no
global state: independent computations can run on separate threads.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DegenerateInputError, ShapeError


class Tensor:
    """A dense float64 array plus the bookkeeping for reverse-mode AD.

    ``grad`` is populated by ``backward(..., accumulate=True)`` and holds
    the accumulated gradient of the last scalar that was differentiated.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Convenience arithmetic; other may be a Tensor, array, or scalar.
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))


def as_tensor(x) -> Tensor:
    """Wrap arrays and scalars as constant tensors; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _record(data: np.ndarray, parents, backward_fn) -> Tensor:
    """Build an op output, recording the backward rule only when needed."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting expanded."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting."""

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _record(a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        return (g.T,)

    return _record(a.data.T, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape

    def backward(g):
        return (g.reshape(old),)

    return _record(a.data.reshape(shape), (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return _record(np.where(mask, a.data, 0.0), (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        return (g * s * (1.0 - s),)

    return _record(s, (a,), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    """Elementwise a**exponent; caller guarantees a > 0 for fractional exponents."""
    out = a.data ** exponent

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _record(out, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape

    def backward(g):
        return (np.full(shape, float(g)),)

    return _record(np.asarray(a.data.sum()), (a,), backward)


def sum_rows(a: Tensor) -> Tensor:
    """Row sums of a matrix: (n, m) -> (n, 1)."""
    if a.data.ndim != 2:
        raise ShapeError(f"sum_rows expects a matrix, got shape {a.shape}")
    cols = a.shape[1]

    def backward(g):
        return (np.repeat(g, cols, axis=1),)

    return _record(a.data.sum(axis=1, keepdims=True), (a,), backward)


def mean_rows(a: Tensor) -> Tensor:
    """Column-wise mean over rows: (n, m) -> (1, m). This is the GAP readout."""
    if a.data.ndim != 2:
        raise ShapeError(f"mean_rows expects a matrix, got shape {a.shape}")
    n = a.shape[0]

    def backward(g):
        return (np.repeat(g / n, n, axis=0),)

    return _record(a.data.mean(axis=0, keepdims=True), (a,), backward)


def softmax_rows(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - dot),)

    return _record(s, (a,), backward)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Negative log-softmax probability of ``label``; logits of shape (C,) or (1, C)."""
    flat = logits.data.reshape(-1)
    n = flat.shape[0]
    if not 0 <= label < n:
        raise ContractError(f"label {label} out of range for {n} classes")
    m = flat.max()
    lse = m + np.log(np.exp(flat - m).sum())
    loss = lse - flat[label]
    probs = np.exp(flat - lse)

    def backward(g):
        grad = probs.copy()
        grad[label] -= 1.0
        return (float(g) * grad.reshape(logits.shape),)

    return _record(np.asarray(loss), (logits,), backward)


def l2_norm(a: Tensor) -> Tensor:
    """Euclidean norm of all entries, as a scalar tensor."""
    norm = float(np.sqrt((a.data ** 2).sum()))

    def backward(g):
        if norm == 0.0:
            return (np.zeros(a.shape),)  # subgradient at the origin
        return (float(g) * a.data / norm,)

    return _record(np.asarray(norm), (a,), backward)


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two tensors viewed as flat vectors."""
    av = a.data.reshape(-1)
    bv = b.data.reshape(-1)
    if av.shape != bv.shape:
        raise ShapeError(f"cosine operands differ in size: {a.shape} vs {b.shape}")
    na = float(np.sqrt((av ** 2).sum()))
    nb = float(np.sqrt((bv ** 2).sum()))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine of a zero vector is undefined")
    c = float(av @ bv) / (na * nb)

    def backward(g):
        ga = (bv / (na * nb) - c * av / (na * na)).reshape(a.shape)
        gb = (av / (na * nb) - c * bv / (nb * nb)).reshape(b.shape)
        return float(g) * ga, float(g) * gb

    return _record(np.asarray(c), (a, b), backward)


def binarize_ste(a: Tensor, threshold: float = 0.5) -> Tensor:
    """Hard threshold in the forward pass, straight-through gradient backward."""

    def backward(g):
        return (g,)

    return _record((a.data >= threshold).astype(np.float64), (a,), backward)


# ---------------------------------------------------------------------------
# Backward pass and SGD
# ---------------------------------------------------------------------------

def backward(loss: Tensor, accumulate: bool = True) -> dict[Tensor, np.ndarray]:
    """Differentiate a scalar tensor through the recorded graph.

    Returns a map from every requires_grad tensor reachable from ``loss``
    to its gradient. With ``accumulate=True`` the gradients are also added
    into each tensor's ``grad`` field (the training path); pass False for
    side-effect-free queries such as activation-map gradients.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.get(node)
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            if parent in grads:
                grads[parent] = grads[parent] + pg
            else:
                grads[parent] = pg

    if accumulate:
        for tensor, g in grads.items():
            tensor.grad = g if tensor.grad is None else tensor.grad + g
    return grads


def sgd_step(params, lr: float, grads: dict[Tensor, np.ndarray] | None = None):
    """In-place p <- p - lr * g for every parameter with a gradient."""
    for p in params:
        g = grads.get(p) if grads is not None else p.grad
        if g is not None:
            p.data -= lr * g


def zero_grads(params):
    for p in params:
        p.grad = None
