"""Reverse-mode automatic differentiation on a value graph.

Every :class:`Node` holds a numpy array and the list of parents it was
computed from.  The vector-Jacobian products of the primitives are written
with the same primitives, so a backward pass run with ``create_graph=True``
produces derivative nodes that are ordinary graph nodes and can be
differentiated again (tape over tape).  With ``create_graph=False`` the same
rules run on plain arrays, which keeps first-order passes cheap.

Values are arrays rather than Python floats so that a batch of independent
tuples is evaluated in one graph; ``grad`` still requires a scalar output,
and per-tuple derivatives are obtained by differentiating the batch sum.
"""

from __future__ import annotations

import numpy as np


class Node:
    __slots__ = ("value", "prim", "args", "kwargs", "adjoint", "__weakref__")
    __array_ufunc__ = None  # make ndarray <op> Node defer to Node.__r<op>__

    def __init__(self, value, prim=None, args=(), kwargs=None):
        self.value = np.asarray(value, dtype=float)
        self.prim = prim
        self.args = args
        self.kwargs = kwargs or {}
        self.adjoint = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    @property
    def is_leaf(self):
        return self.prim is None

    def __repr__(self):
        kind = "leaf" if self.prim is None else self.prim.name
        return f"Node({kind}, shape={self.shape})"

    def __len__(self):
        return len(self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self):
        """Populate ``adjoint`` (plain arrays) on every node of the graph."""
        if self.value.size != 1:
            raise ValueError("backward() needs a scalar output")
        order = _toposort(self)
        adj = _backprop(self, order, None, create_graph=False)
        for node in order:
            node.adjoint = adj.get(id(node), np.zeros_like(node.value))


def value_of(x):
    return x.value if isinstance(x, Node) else x


def variable(x):
    """Fresh leaf node (an independent input of a graph)."""
    return Node(np.array(x, dtype=float, copy=True))


def detach(x):
    return Node(value_of(x)) if isinstance(x, Node) else x


class Primitive:
    """A differentiable operation.

    ``vjps[i](g, out, *args, **kwargs)`` returns the contribution of the
    output adjoint ``g`` to the adjoint of argument ``i``.  The rule receives
    Nodes when a derivative graph is being recorded and arrays otherwise.
    """

    def __init__(self, name, fwd, vjps):
        self.name = name
        self.fwd = fwd
        self.vjps = vjps

    def __call__(self, *args, **kwargs):
        traced = False
        vals = []
        for a in args:
            if isinstance(a, Node):
                traced = True
                vals.append(a.value)
            else:
                vals.append(a)
        out = self.fwd(*vals, **kwargs)
        if not traced:
            return out
        return Node(out, self, args, kwargs)


def _shape(x):
    return np.shape(value_of(x))


def _unbroadcast(g, shape):
    if _shape(g) == tuple(shape):
        return g
    return sum_to(g, shape)


# --- shape plumbing ------------------------------------------------------


def _sum_to_fwd(x, shape):
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and x.shape[i + lead] != 1
    )
    return np.sum(x, axis=axes, keepdims=True).reshape(shape)


sum_to = Primitive(
    "sum_to",
    _sum_to_fwd,
    [lambda g, out, x, shape: broadcast_to(g, _shape(x))],
)

broadcast_to = Primitive(
    "broadcast_to",
    lambda x, shape: np.broadcast_to(x, tuple(shape)).copy(),
    [lambda g, out, x, shape: sum_to(g, _shape(x))],
)

reshape = Primitive(
    "reshape",
    lambda x, shape: np.reshape(x, shape),
    [lambda g, out, x, shape: reshape(g, _shape(x))],
)

transpose = Primitive(
    "transpose",
    lambda x: np.transpose(x),
    [lambda g, out, x: transpose(g)],
)


def _scatter_fwd(g, idx, shape):
    res = np.zeros(shape)
    np.add.at(res, idx, g)
    return res


getitem = Primitive(
    "getitem",
    lambda x, idx: np.asarray(x[idx]),
    [lambda g, out, x, idx: scatter(g, idx, _shape(x))],
)

scatter = Primitive(
    "scatter",
    _scatter_fwd,
    [lambda g, out, x, idx, shape: getitem(g, idx)],
)


def _sum_fwd(x, axis=None, keepdims=False):
    return np.sum(x, axis=axis, keepdims=keepdims)


def _sum_vjp(g, out, x, axis=None, keepdims=False):
    shape = _shape(x)
    if axis is not None and not keepdims:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        kept = list(shape)
        for ax in axes:
            kept[ax % len(shape)] = 1
        g = reshape(g, tuple(kept))
    elif axis is None and not keepdims:
        g = reshape(g, (1,) * len(shape))
    return broadcast_to(g, shape)


sum_ = Primitive("sum", _sum_fwd, [_sum_vjp])


def mean(x, axis=None, keepdims=False):
    shape = _shape(x)
    if axis is None:
        n = int(np.prod(shape)) if shape else 1
    else:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        n = int(np.prod([shape[a] for a in axes]))
    return sum_(x, axis=axis, keepdims=keepdims) * (1.0 / n)


def _concat_fwd(*xs, axis=0):
    return np.concatenate([np.asarray(x, dtype=float) for x in xs], axis=axis)


def _concat_vjp(i):
    def rule(g, out, *xs, axis=0):
        sizes = [_shape(x)[axis] for x in xs]
        start = int(np.sum(sizes[:i]))
        idx = [slice(None)] * len(_shape(g))
        idx[axis] = slice(start, start + sizes[i])
        return getitem(g, tuple(idx))

    return rule


class _ConcatRules:
    def __getitem__(self, i):
        return _concat_vjp(i)


_concat = Primitive("concatenate", _concat_fwd, _ConcatRules())


def concatenate(xs, axis=0):
    return _concat(*xs, axis=axis)


def stack_columns(cols):
    """Stack 1D arrays/nodes of equal length into a (B, k) matrix."""
    return concatenate([reshape(c, (-1, 1)) for c in cols], axis=1)


# --- arithmetic ------------------------------------------------------------

add = Primitive(
    "add",
    np.add,
    [
        lambda g, out, a, b: _unbroadcast(g, _shape(a)),
        lambda g, out, a, b: _unbroadcast(g, _shape(b)),
    ],
)

sub = Primitive(
    "sub",
    np.subtract,
    [
        lambda g, out, a, b: _unbroadcast(g, _shape(a)),
        lambda g, out, a, b: _unbroadcast(-g, _shape(b)),
    ],
)

mul = Primitive(
    "mul",
    np.multiply,
    [
        lambda g, out, a, b: _unbroadcast(g * b, _shape(a)),
        lambda g, out, a, b: _unbroadcast(g * a, _shape(b)),
    ],
)

div = Primitive(
    "div",
    np.divide,
    [
        lambda g, out, a, b: _unbroadcast(g / b, _shape(a)),
        lambda g, out, a, b: _unbroadcast(-g * out / b, _shape(b)),
    ],
)

neg = Primitive("neg", np.negative, [lambda g, out, a: -g])

power = Primitive(
    "power",
    lambda a, p: np.power(a, p),
    [lambda g, out, a, p: g * (p * power(a, p - 1))],
)

matmul = Primitive(
    "matmul",
    np.matmul,
    [
        lambda g, out, a, b: matmul(g, transpose(b)),
        lambda g, out, a, b: matmul(transpose(a), g),
    ],
)


# --- elementwise nonlinearities -------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


tanh = Primitive("tanh", np.tanh, [lambda g, out, x: g * (1.0 - out * out)])
exp = Primitive("exp", np.exp, [lambda g, out, x: g * out])
log = Primitive("log", np.log, [lambda g, out, x: g / x])
sigmoid = Primitive("sigmoid", _sigmoid, [lambda g, out, x: g * (out * (1.0 - out))])
softplus = Primitive(
    "softplus", lambda x: np.logaddexp(0.0, x), [lambda g, out, x: g * sigmoid(x)]
)
# relu and abs: masks are constants, second derivatives vanish almost everywhere
relu = Primitive(
    "relu",
    lambda x: np.maximum(x, 0.0),
    [lambda g, out, x: g * (value_of(x) > 0.0).astype(float)],
)
abs_ = Primitive("abs", np.abs, [lambda g, out, x: g * np.sign(value_of(x))])


def identity(x):
    return x


def square(x):
    return x * x


# --- differentiation ---------------------------------------------------------


def _toposort(root):
    """Nodes reachable from ``root`` in dependency order (parents first)."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for a in node.args:
            if isinstance(a, Node) and id(a) not in seen:
                stack.append((a, False))
    return order


def _backprop(output, order, targets, create_graph, seed=None):
    if targets is not None:
        relevant = set(id(t) for t in targets)
        for node in order:
            if id(node) in relevant:
                continue
            if any(isinstance(a, Node) and id(a) in relevant for a in node.args):
                relevant.add(id(node))
    else:
        relevant = None

    if seed is None:
        seed = np.ones_like(output.value)
    adj = {id(output): Node(seed) if create_graph else np.asarray(seed, dtype=float)}

    for node in reversed(order):
        g = adj.get(id(node))
        if g is None or node.prim is None:
            continue
        if create_graph:
            call_args = node.args
            out = node
        else:
            call_args = tuple(value_of(a) for a in node.args)
            out = node.value
        for i, a in enumerate(node.args):
            if not isinstance(a, Node):
                continue
            if relevant is not None and id(a) not in relevant:
                continue
            contrib = node.prim.vjps[i](g, out, *call_args, **node.kwargs)
            key = id(a)
            prev = adj.get(key)
            adj[key] = contrib if prev is None else prev + contrib
    return adj


def grad(output, wrt, create_graph=False, seed=None):
    """Derivatives of a scalar ``output`` with respect to the nodes ``wrt``.

    Returns a list matching ``wrt`` (or a single entry if ``wrt`` is a Node).
    With ``create_graph`` the results are Nodes that can be differentiated
    again.  Nodes that ``output`` does not depend on get a zero derivative.
    ``seed`` replaces the unit output adjoint (vector-Jacobian products).
    """
    single = isinstance(wrt, Node)
    targets = [wrt] if single else list(wrt)
    if not isinstance(output, Node):
        zeros = [np.zeros_like(t.value) for t in targets]
        return zeros[0] if single else zeros
    if seed is None and output.value.size != 1:
        raise ValueError("grad() needs a scalar output (or an explicit seed)")
    order = _toposort(output)
    adj = _backprop(output, order, targets, create_graph, seed)
    res = []
    for t in targets:
        g = adj.get(id(t))
        if g is None:
            g = np.zeros_like(t.value)
            if create_graph:
                g = Node(g)
        elif create_graph and not isinstance(g, Node):
            g = Node(g)
        elif not create_graph:
            g = np.broadcast_to(np.asarray(g, dtype=float), t.shape).copy()
        res.append(g)
    return res[0] if single else res


def value_and_grad(fun, x):
    """Evaluate ``fun`` at array ``x`` and return (value, d fun / dx)."""
    xn = variable(x)
    out = fun(xn)
    return float(value_of(out)), grad(out, xn)
