"""
PerturbKit Autodiff - Minimal reverse-mode automatic differentiation.

Every op builds a Node holding a float64 value, its inputs, and a backward
rule mapping the output gradient to one gradient per input. `backward()`
walks the graph in reverse topological order and accumulates gradients.

Ops: MatMul, Add, Mul, Softmax, LayerNorm, Gelu, EmbedLookup, CrossEntropy,
Reshape, Concat, Slice, Sum, Transpose. Add/Mul/MatMul broadcast like numpy;
gradients are summed back to each input's shape.
"""

import logging
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


# ============================================================================
# ERRORS & ENUMS
# ============================================================================


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class CycleError(RuntimeError):
    """The computation graph contains a cycle."""


class Op(str, Enum):
    """Node operation tags."""

    LEAF = "leaf"
    CONST = "const"
    MATMUL = "matmul"
    ADD = "add"
    MUL = "mul"
    SOFTMAX = "softmax"
    LAYER_NORM = "layer_norm"
    GELU = "gelu"
    EMBED_LOOKUP = "embed_lookup"
    CROSS_ENTROPY = "cross_entropy"
    RESHAPE = "reshape"
    CONCAT = "concat"
    SLICE = "slice"
    SUM = "sum"
    TRANSPOSE = "transpose"


# ============================================================================
# NODE
# ============================================================================


class Node:
    """One value in the computation graph."""

    __slots__ = ("op", "inputs", "value", "grad", "name", "requires_grad", "_backward")

    def __init__(
        self,
        op: Op,
        value: np.ndarray,
        inputs: Tuple["Node", ...] = (),
        backward_fn: Optional[BackwardFn] = None,
        name: Optional[str] = None,
        requires_grad: Optional[bool] = None,
    ):
        self.op = op
        self.value = value
        self.inputs = inputs
        self.grad: Optional[np.ndarray] = None
        self.name = name
        if requires_grad is None:
            requires_grad = any(x.requires_grad for x in inputs)
        self.requires_grad = requires_grad
        self._backward = backward_fn

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Node({self.op.value}{label}, shape={self.shape})"


def leaf(value: np.ndarray, name: Optional[str] = None) -> Node:
    """Trainable input (gradients are collected for it)."""
    return Node(Op.LEAF, np.asarray(value, dtype=np.float64), name=name, requires_grad=True)


def const(value) -> Node:
    """Non-trainable input."""
    return Node(Op.CONST, np.asarray(value, dtype=np.float64), requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Node, b: Node, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from e


# ============================================================================
# ELEMENTWISE & LINEAR ALGEBRA
# ============================================================================


def add(a: Node, b: Node) -> Node:
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Node(Op.ADD, a.value + b.value, (a, b), backward)


def mul(a: Node, b: Node) -> Node:
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return Node(Op.MUL, a.value * b.value, (a, b), backward)


def matmul(a: Node, b: Node) -> Node:
    """Batched matrix product over the last two axes (both inputs >= 2-D)."""
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ShapeError(f"matmul needs >= 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Node(Op.MATMUL, np.matmul(a.value, b.value), (a, b), backward)


def gelu(x: Node) -> Node:
    """GELU, tanh approximation."""
    c = np.sqrt(2.0 / np.pi)
    v = x.value
    t = np.tanh(c * (v + 0.044715 * v ** 3))

    def backward(g):
        dt = (1.0 - t ** 2) * c * (1.0 + 3.0 * 0.044715 * v ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

    return Node(Op.GELU, 0.5 * v * (1.0 + t), (x,), backward)


def softmax(x: Node, axis: int = -1) -> Node:
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Node(Op.SOFTMAX, s, (x,), backward)


def layer_norm(x: Node, gain: Node, bias: Node, eps: float = 1e-12) -> Node:
    """Normalise over the last axis, then scale by `gain` and shift by `bias`."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must be ({d},), got {gain.shape} / {bias.shape}")
    mu = x.value.mean(axis=-1, keepdims=True)
    centered = x.value - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def backward(g):
        g_xhat = g * gain.value
        gx = inv_std * (
            g_xhat
            - g_xhat.mean(axis=-1, keepdims=True)
            - xhat * (g_xhat * xhat).mean(axis=-1, keepdims=True)
        )
        reduce_axes = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=reduce_axes), g.sum(axis=reduce_axes)

    return Node(Op.LAYER_NORM, xhat * gain.value + bias.value, (x, gain, bias), backward)


# ============================================================================
# INDEXING & SHAPE
# ============================================================================


def embed_lookup(table: Node, ids: np.ndarray) -> Node:
    """Rows of a [vocab, d] table for an integer id array of any shape."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embed_lookup: ids must lie in [0, {table.shape[0]}), got [{ids.min()}, {ids.max()}]")

    def backward(g):
        gt = np.zeros_like(table.value)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return Node(Op.EMBED_LOOKUP, table.value[ids], (table,), backward)


def reshape(x: Node, shape: Tuple[int, ...]) -> Node:
    try:
        out = x.value.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from e

    def backward(g):
        return (g.reshape(x.shape),)

    return Node(Op.RESHAPE, out, (x,), backward)


def transpose(x: Node, axes: Sequence[int]) -> Node:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return Node(Op.TRANSPOSE, np.transpose(x.value, axes), (x,), backward)


def concat(xs: Sequence[Node], axis: int = -1) -> Node:
    xs = tuple(xs)
    if not xs:
        raise ShapeError("concat needs at least one input")
    try:
        out = np.concatenate([x.value for x in xs], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}") from e
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Node(Op.CONCAT, out, xs, backward)


def slice_(x: Node, key) -> Node:
    """Basic (non-fancy) slicing, e.g. slice_(x, (slice(None), -1))."""
    out = x.value[key]

    def backward(g):
        gx = np.zeros_like(x.value)
        gx[key] = g
        return (gx,)

    return Node(Op.SLICE, np.array(out, dtype=np.float64), (x,), backward)


def sum_(x: Node, axis: Optional[int] = None, keepdims: bool = False) -> Node:
    out = x.value.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Node(Op.SUM, np.asarray(out, dtype=np.float64), (x,), backward)


# ============================================================================
# LOSSES
# ============================================================================


def cross_entropy(
    logits: Node,
    targets: np.ndarray,
    weights: Optional[np.ndarray] = None,
) -> Node:
    """
    Weighted mean negative log-likelihood over the last axis.

    Args:
        logits: [..., C]
        targets: int array matching logits.shape[:-1]
        weights: optional float mask/weights with the same shape as targets;
            the loss is sum(w * nll) / sum(w) (0 when sum(w) == 0)
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(f"cross_entropy: targets {targets.shape} vs logits {logits.shape}")
    w = np.ones(targets.shape) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != targets.shape:
        raise ShapeError(f"cross_entropy: weights {w.shape} vs targets {targets.shape}")

    shifted = logits.value - logits.value.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_p = shifted - log_z
    nll = -np.take_along_axis(log_p, targets[..., None], axis=-1)[..., 0]
    total = w.sum()
    loss = float((w * nll).sum() / total) if total > 0 else 0.0

    def backward(g):
        if total == 0:
            return (np.zeros_like(logits.value),)
        p = np.exp(log_p)
        np.put_along_axis(p, targets[..., None], np.take_along_axis(p, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (g * p * (w / total)[..., None],)

    return Node(Op.CROSS_ENTROPY, np.asarray(loss), (logits,), backward)


# ============================================================================
# BACKWARD PASS
# ============================================================================


def _topological_order(root: Node) -> List[Node]:
    """Post-order DFS (iterative); raises CycleError on a back edge."""
    order: List[Node] = []
    state: Dict[int, int] = {}  # 1 = on stack, 2 = done
    stack: List[Tuple[Node, int]] = [(root, 0)]
    while stack:
        node, child_idx = stack.pop()
        key = id(node)
        if child_idx == 0:
            if state.get(key) == 2:
                continue
            state[key] = 1
        if child_idx < len(node.inputs):
            stack.append((node, child_idx + 1))
            child = node.inputs[child_idx]
            child_state = state.get(id(child))
            if child_state == 1:
                raise CycleError(f"Cycle detected at {child!r}")
            if child_state is None and child.requires_grad:
                stack.append((child, 0))
        else:
            state[key] = 2
            order.append(node)
    return order


def backward(loss: Node, params: Optional[Dict[str, Node]] = None) -> Dict[str, np.ndarray]:
    """
    Reverse-mode gradients of a scalar loss.

    Args:
        loss: Scalar node
        params: Optional name -> leaf map; unreached parameters get zero gradients

    Returns:
        name -> gradient for every named leaf (plus every entry of `params`)

    Raises:
        ShapeError: If loss is not scalar
        CycleError: If the graph is not acyclic
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    order = _topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)

    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        input_grads = node._backward(node.grad)
        for child, g in zip(node.inputs, input_grads):
            if g is None or not child.requires_grad:
                continue
            child.grad = g if child.grad is None else child.grad + g

    grads: Dict[str, np.ndarray] = {}
    for node in order:
        if node.op == Op.LEAF and node.name is not None:
            grads[node.name] = node.grad if node.grad is not None else np.zeros_like(node.value)
    for name, node in (params or {}).items():
        if name not in grads:
            grads[name] = np.zeros_like(node.value)
    return grads


# ============================================================================
# GRADIENT CHECKING
# ============================================================================


def numerical_gradients(
    loss_fn: Callable[[Dict[str, np.ndarray]], float],
    params: Dict[str, np.ndarray],
    eps: float = 1e-5,
    names: Optional[Iterable[str]] = None,
) -> Dict[str, np.ndarray]:
    """Central finite differences of a scalar function of named arrays."""
    grads = {}
    for name in names or list(params):
        base = params[name]
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        g_flat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = loss_fn(params)
            flat[k] = orig - eps
            down = loss_fn(params)
            flat[k] = orig
            g_flat[k] = (up - down) / (2.0 * eps)
        grads[name] = g
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a|| + ||b||, 1e-12)."""
    denom = max(float(np.linalg.norm(a) + np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom


def gradient_check(
    build_loss: Callable[[Dict[str, Node]], Node],
    params: Dict[str, np.ndarray],
    eps: float = 1e-5,
) -> Dict[str, float]:
    """
    Compare autodiff gradients with central finite differences.

    Args:
        build_loss: Maps name -> leaf node to a scalar loss node
        params: name -> float64 array (perturbed in place during the check, restored after)
        eps: Finite-difference step

    Returns:
        name -> relative error per tensor
    """
    leaves = {name: leaf(value, name) for name, value in params.items()}
    analytic = backward(build_loss(leaves), leaves)

    def loss_fn(p: Dict[str, np.ndarray]) -> float:
        return float(build_loss({n: leaf(v, n) for n, v in p.items()}).value)

    numeric = numerical_gradients(loss_fn, params, eps)
    errors = {name: relative_error(analytic[name], numeric[name]) for name in params}
    logger.debug(f"Gradient check over {len(errors)} tensors, max rel err {max(errors.values(), default=0):.3e}")
    return errors
