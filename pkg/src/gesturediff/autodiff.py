"""A small reverse-mode automatic differentiation engine over numpy arrays.

Every :class:`Tensor` wraps a float64 array.  Operations on tensors record
the parents and a backward closure; :func:`backward` walks the graph in
reverse topological order and accumulates gradients into ``Tensor.grad``.

Inside :func:`no_grad` no graph is recorded, which keeps inference cheap.
"""

import contextlib

import numpy as np

__all__ = [
    "GraphError", "Tensor", "backward", "no_grad", "grad_enabled",
    "as_tensor", "matmul", "concatenate", "stack", "tanh", "sigmoid", "silu",
    "exp", "lstm_cell", "square_norm", "mean",
]

_GRAD_ENABLED = True


class GraphError(RuntimeError):
    """Raised for graphs that cannot be differentiated."""


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def grad_enabled():
    return _GRAD_ENABLED


def _unbroadcast(grad, shape):
    # sum out axes that numpy broadcasting added or stretched
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return self.transpose()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # -- construction helper -------------------------------------------------

    @staticmethod
    def _make(data, parents, backward_fn, op):
        if not _GRAD_ENABLED or not any(p.requires_grad for p in parents):
            return Tensor(data)
        return Tensor(data, True, parents, backward_fn, op)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))
        return Tensor._make(a.data + b.data, (a, b), bw, "add")

    __radd__ = __add__

    def __neg__(self):
        a = self
        return Tensor._make(-a.data, (a,), lambda g: a._accumulate(-g), "neg")

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))
        return Tensor._make(a.data * b.data, (a, b), bw, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * a.data / b.data ** 2, b.shape))
        return Tensor._make(a.data / b.data, (a, b), bw, "div")

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise GraphError("unsupported primitive: tensor-valued exponent")
        a = self
        p = float(exponent)
        return Tensor._make(a.data ** p, (a,),
                            lambda g: a._accumulate(g * p * a.data ** (p - 1)), "pow")

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    # -- shape ---------------------------------------------------------------

    def __getitem__(self, idx):
        a = self

        def bw(g):
            if a.grad is None:
                a.grad = np.zeros(a.shape)
            if _has_fancy(idx):
                np.add.at(a.grad, idx, g)
            else:
                a.grad[idx] += g
        return Tensor._make(a.data[idx], (a,), bw, "getitem")

    def reshape(self, *shape):
        a = self
        return Tensor._make(a.data.reshape(*shape), (a,),
                            lambda g: a._accumulate(g.reshape(a.shape)), "reshape")

    def transpose(self, *axes):
        a = self
        axes = axes or None
        inv = None if axes is None else np.argsort(axes)
        return Tensor._make(a.data.transpose(axes), (a,),
                            lambda g: a._accumulate(g.transpose(inv)), "transpose")

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))
        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw, "sum")

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod(
            [self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def backward(self, grad=None):
        backward(self, grad)


def _has_fancy(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2) if b.ndim > 1 else np.multiply.outer(g, b.data)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.multiply.outer(a.data, g)
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))
    return Tensor._make(a.data @ b.data, (a, b), bw, "matmul")


def concatenate(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis),
                        tuple(tensors), bw, "concatenate")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))
    return Tensor._make(np.stack([t.data for t in tensors], axis=axis),
                        tuple(tensors), bw, "stack")


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return Tensor._make(y, (x,), lambda g: x._accumulate(g * (1.0 - y * y)), "tanh")


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(x):
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return Tensor._make(y, (x,), lambda g: x._accumulate(g * y * (1.0 - y)), "sigmoid")


def silu(x):
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return Tensor._make(x.data * s, (x,),
                        lambda g: x._accumulate(g * s * (1.0 + x.data * (1.0 - s))), "silu")


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return Tensor._make(y, (x,), lambda g: x._accumulate(g * y), "exp")


def square_norm(x, axis=None):
    """Sum of squares, over all entries or along ``axis``."""
    x = as_tensor(x)
    return Tensor._make((x.data ** 2).sum(axis=axis), (x,),
                        lambda g: x._accumulate(2.0 * x.data * (
                            g if axis is None else np.expand_dims(g, axis))), "square_norm")


def mean(x, axis=None):
    return as_tensor(x).mean(axis=axis)


def lstm_cell(gates, c_prev):
    """Fused LSTM cell.

    ``gates`` holds the pre-activations ``[i, f, g, o]`` of width ``4H``
    along the last axis.  Returns one tensor ``[h, c]`` of width ``2H``.
    """
    gates, c_prev = as_tensor(gates), as_tensor(c_prev)
    H = c_prev.shape[-1]
    z = gates.data
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    u = np.tanh(z[..., 2 * H:3 * H])
    o = _sigmoid(z[..., 3 * H:])
    c = f * c_prev.data + i * u
    tc = np.tanh(c)
    h = o * tc

    def bw(g):
        gh, gc = g[..., :H], g[..., H:]
        gc = gc + gh * o * (1.0 - tc * tc)
        if gates.requires_grad:
            dz = np.empty_like(z)
            dz[..., :H] = gc * u * i * (1.0 - i)
            dz[..., H:2 * H] = gc * c_prev.data * f * (1.0 - f)
            dz[..., 2 * H:3 * H] = gc * i * (1.0 - u * u)
            dz[..., 3 * H:] = gh * tc * o * (1.0 - o)
            gates._accumulate(dz)
        if c_prev.requires_grad:
            c_prev._accumulate(gc * f)
    return Tensor._make(np.concatenate([h, c], axis=-1), (gates, c_prev), bw, "lstm_cell")


def backward(root, grad=None):
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if not isinstance(root, Tensor):
        raise GraphError("backward needs a Tensor")
    if grad is None:
        if root.data.size != 1:
            raise GraphError("grad must be given for non-scalar roots")
        grad = np.ones_like(root.data)
    if not root.requires_grad:
        return
    order = []
    state = {}  # id -> 1 while on the DFS stack, 2 when finished
    stack_ = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        key = id(node)
        if done:
            state[key] = 2
            order.append(node)
            continue
        mark = state.get(key)
        if mark == 2:
            continue
        if mark == 1:
            raise GraphError(f"cycle detected at {node!r}")
        state[key] = 1
        stack_.append((node, True))
        for p in node._parents:
            pm = state.get(id(p))
            if pm == 1:
                raise GraphError(f"cycle detected at {p!r}")
            if pm is None and p.requires_grad:
                stack_.append((p, False))
    for node in order:
        if node._parents and node is not root:
            node.grad = None
    root._accumulate(grad)
    for node in reversed(order):
        if not node._parents:
            continue
        if node._backward is None:
            raise GraphError(f"unsupported primitive {node.op!r} has no backward rule")
        if node.grad is not None:
            node._backward(node.grad)
            node.grad = None
