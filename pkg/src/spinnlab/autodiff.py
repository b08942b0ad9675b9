"""Computational-graph engine with exact input and parameter derivatives.

Two mechanisms cooperate:

* reverse mode: ``Node`` records every primitive applied to it, and
  ``gradients``/``param_gradient`` walk the graph backwards to return
  d(loss)/d(leaf) for every leaf, so one sweep prices all parameters.
* forward second order: ``Triple`` carries (value, first, second) input
  derivatives through a composed predictor, one slot per input coordinate.
  Only pure second derivatives are propagated; no residual in this code
  base needs mixed partials.

Payloads are floats or numpy arrays with elementwise semantics, so the same
graph code serves single-point checks and batched training.  Triple slots may
themselves hold Nodes, which is how d(u_x)/d(theta) reaches the loss graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError

# exp() exponents at or below this produce a clean 0.0 instead of a subnormal
EXP_FLOOR = -745.0


def value_of(x):
    """Raw float/array behind ``x`` (Triples report their value slot)."""
    if isinstance(x, Node):
        return x.value
    if isinstance(x, Triple):
        return value_of(x.u)
    return x


def _iszero(x):
    return type(x) is float and x == 0.0


def _unbroadcast(g, shape):
    """Sum gradient ``g`` down to ``shape`` (undo numpy broadcasting)."""
    if np.shape(g) == shape:
        return g
    g = np.asarray(g)
    if g.ndim > len(shape):
        g = g.sum(axis=tuple(range(g.ndim - len(shape))))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Node:
    """One recorded operation: payload value plus backward closures.

    ``parents`` holds predecessor Nodes, ``vjps`` the matching closures that
    map the incoming gradient to each parent's contribution.  The graph is
    acyclic and ``gradients`` consumes it in topological order.
    """

    __slots__ = ("value", "op", "parents", "vjps")

    # numpy must defer mixed ndarray/Node arithmetic to our operators
    # instead of building object arrays
    __array_ufunc__ = None

    def __init__(self, value, op="leaf", parents=(), vjps=()):
        self.value = value
        self.op = op
        self.parents = parents
        self.vjps = vjps

    def __repr__(self):
        return f"Node({self.op}, shape={np.shape(self.value)})"

    # arithmetic operators route through the module-level dispatchers so
    # Node/const mixtures and Triples behave uniformly
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

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


def _shape(v):
    return np.shape(v)


def add(a, b):
    if isinstance(a, Triple) or isinstance(b, Triple):
        return Triple._add(a, b)
    an, bn = isinstance(a, Node), isinstance(b, Node)
    if not (an or bn):
        return a + b
    av = a.value if an else a
    bv = b.value if bn else b
    out = av + bv
    if an and bn:
        sa, sb = _shape(av), _shape(bv)
        return Node(out, "add", (a, b),
                    (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)))
    n, v = (a, av) if an else (b, bv)
    s = _shape(v)
    return Node(out, "add", (n,), (lambda g: _unbroadcast(g, s),))


def neg(a):
    if isinstance(a, Triple):
        def slot(d):
            if d is None or _iszero(d):
                return d
            return neg(d)
        return Triple(neg(a.u), tuple(map(slot, a.du)), tuple(map(slot, a.d2u)))
    if isinstance(a, Node):
        return Node(-a.value, "neg", (a,), (lambda g: -g,))
    return -a


def sub(a, b):
    if isinstance(a, Triple) or isinstance(b, Triple):
        return Triple._add(a, neg(b))
    an, bn = isinstance(a, Node), isinstance(b, Node)
    if not (an or bn):
        return a - b
    av = a.value if an else a
    bv = b.value if bn else b
    out = av - bv
    if an and bn:
        sa, sb = _shape(av), _shape(bv)
        return Node(out, "sub", (a, b),
                    (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(-g, sb)))
    if an:
        sa = _shape(av)
        return Node(out, "sub", (a,), (lambda g: _unbroadcast(g, sa),))
    sb = _shape(bv)
    return Node(out, "sub", (b,), (lambda g: _unbroadcast(-g, sb),))


def mul(a, b):
    if isinstance(a, Triple) or isinstance(b, Triple):
        return Triple._mul(a, b)
    an, bn = isinstance(a, Node), isinstance(b, Node)
    if not (an or bn):
        return a * b
    av = a.value if an else a
    bv = b.value if bn else b
    out = av * bv
    if an and bn:
        sa, sb = _shape(av), _shape(bv)
        return Node(out, "mul", (a, b),
                    (lambda g: _unbroadcast(g * bv, sa), lambda g: _unbroadcast(g * av, sb)))
    if an:
        sa = _shape(av)
        return Node(out, "mul", (a,), (lambda g: _unbroadcast(g * bv, sa),))
    sb = _shape(bv)
    return Node(out, "mul", (b,), (lambda g: _unbroadcast(g * av, sb),))


def div(a, b):
    if isinstance(b, (Node, Triple)):
        return mul(a, power(b, -1.0))
    return mul(a, 1.0 / b)


def power(a, p):
    """a**p for constant real exponent p."""
    if not isinstance(p, (int, float)):
        raise ConfigurationError("power exponent must be a constant real")
    p = float(p)
    if isinstance(a, Triple):
        f = power(a.u, p)
        d1 = mul(p, power(a.u, p - 1.0))
        return a._chain(f, d1, lambda: mul(p * (p - 1.0), power(a.u, p - 2.0)))
    if isinstance(a, Node):
        av = a.value
        out = av ** p
        coeff = p * av ** (p - 1.0)
        return Node(out, "pow", (a,), (lambda g: g * coeff,))
    return a ** p


def square(a):
    return mul(a, a)


def _unary(a, raw, d1_of, d2_of, opname):
    """Build the unary dispatcher result for ``a``.

    ``raw`` maps a float/array to the value; ``d1_of``/``d2_of`` map the
    *output already computed in-algebra* plus the input to the first and
    second derivative, again in-algebra so theta-dependence is preserved.
    """
    if isinstance(a, Triple):
        f = _unary(a.u, raw, d1_of, d2_of, opname)
        return a._chain(f, d1_of(f, a.u), lambda: d2_of(f, a.u))
    if isinstance(a, Node):
        out = raw(a.value)
        dval = value_of(d1_of(out, a.value))
        return Node(out, opname, (a,), (lambda g: g * dval,))
    return raw(a)


def tanh(a):
    return _unary(a, np.tanh,
                  lambda f, u: sub(1.0, mul(f, f)),
                  lambda f, u: mul(-2.0, mul(f, sub(1.0, mul(f, f)))),
                  "tanh")


def _sigmoid_raw(u):
    # tanh form is stable for large |u| in both directions
    return 0.5 * (np.tanh(0.5 * np.asarray(u, dtype=float)) + 1.0) if np.ndim(u) \
        else 0.5 * (math.tanh(0.5 * u) + 1.0)


def sigmoid(a):
    return _unary(a, _sigmoid_raw,
                  lambda f, u: mul(f, sub(1.0, f)),
                  lambda f, u: mul(mul(f, sub(1.0, f)), sub(1.0, mul(2.0, f))),
                  "sigmoid")


def sin(a):
    return _unary(a, np.sin, lambda f, u: cos(u), lambda f, u: neg(f), "sin")


def cos(a):
    return _unary(a, np.cos, lambda f, u: neg(sin(u)), lambda f, u: neg(f), "cos")


def exp(a):
    return _unary(a, np.exp, lambda f, u: f, lambda f, u: f, "exp")


def _satexp_raw(u):
    if np.ndim(u) == 0:
        return math.exp(u) if u > EXP_FLOOR else 0.0
    u = np.asarray(u, dtype=float)
    return np.where(u > EXP_FLOOR, np.exp(np.maximum(u, EXP_FLOOR)), 0.0)


def satexp(a):
    """exp with a saturating floor: exponents <= -745 give exactly 0.

    The derivative equals the value, so saturated regions are exactly flat
    and no floating-point exception can escape the exponential layers.
    """
    return _unary(a, _satexp_raw, lambda f, u: f, lambda f, u: f, "satexp")


def acos(a):
    """acos on (-1, 1); used by identity tests, never inside training graphs."""
    return _unary(a, np.arccos,
                  lambda f, u: neg(power(sub(1.0, mul(u, u)), -0.5)),
                  lambda f, u: neg(mul(u, power(sub(1.0, mul(u, u)), -1.5))),
                  "acos")


def matmul(a, b):
    """Matrix product; the right factor never carries input derivatives."""
    if isinstance(b, Triple):
        raise ConfigurationError("matmul: right operand with input derivatives is unsupported")
    if isinstance(a, Triple):
        def slot(d):
            if d is None or _iszero(d):
                return d
            return matmul(d, b)
        return Triple(matmul(a.u, b), tuple(map(slot, a.du)), tuple(map(slot, a.d2u)))
    an, bn = isinstance(a, Node), isinstance(b, Node)
    if not (an or bn):
        return a @ b
    av = a.value if an else a
    bv = b.value if bn else b
    out = av @ bv
    if an and bn:
        return Node(out, "matmul", (a, b),
                    (lambda g: g @ bv.T, lambda g: av.T @ g))
    if an:
        return Node(out, "matmul", (a,), (lambda g: g @ bv.T,))
    return Node(out, "matmul", (b,), (lambda g: av.T @ g,))


def total(a):
    """Full sum to a scalar (numpy's deterministic pairwise reduction)."""
    if isinstance(a, Node):
        s = _shape(a.value)
        return Node(float(np.sum(a.value)), "sum", (a,),
                    (lambda g: g * np.ones(s) if s else g,))
    return float(np.sum(a))


def take_last(a, k):
    """Slice index ``k`` from the trailing axis of a tensor."""
    if isinstance(a, Node):
        av = a.value

        def vjp(g, k=k, shape=av.shape):
            out = np.zeros(shape)
            out[..., k] = g
            return out

        return Node(av[..., k], "take_last", (a,), (vjp,))
    return a[..., k]


_FUNCTIONS = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "satexp": satexp,
    "acos": acos,
}


class Triple:
    """Value plus per-input-coordinate first and second derivatives.

    ``du``/``d2u`` are tuples of length input-dimension; slots hold floats,
    arrays or Nodes, with the exact float 0.0 acting as a structural zero so
    known-dead terms cost nothing.  A ``d2u`` slot of None means that second
    derivative is not tracked at all (residuals that never use it skip the
    propagation cost); None contaminates through every combination rule.
    """

    __slots__ = ("u", "du", "d2u")

    __array_ufunc__ = None

    def __init__(self, u, du, d2u):
        self.u = u
        self.du = tuple(du)
        self.d2u = tuple(d2u)

    @property
    def dim(self):
        return len(self.du)

    @staticmethod
    def lift(c, dim):
        """Constant (in the inputs) as a Triple."""
        return Triple(c, (0.0,) * dim, (0.0,) * dim)

    @staticmethod
    def _coerce(x, dim):
        return x if isinstance(x, Triple) else Triple.lift(x, dim)

    @staticmethod
    def _add(a, b):
        dim = a.dim if isinstance(a, Triple) else b.dim
        a = Triple._coerce(a, dim)
        b = Triple._coerce(b, dim)

        def slot(x, y):
            if x is None or y is None:
                return None
            if _iszero(x):
                return y
            if _iszero(y):
                return x
            return add(x, y)

        return Triple(add(a.u, b.u),
                      tuple(slot(x, y) for x, y in zip(a.du, b.du)),
                      tuple(slot(x, y) for x, y in zip(a.d2u, b.d2u)))

    @staticmethod
    def _mul(a, b):
        dim = a.dim if isinstance(a, Triple) else b.dim
        a = Triple._coerce(a, dim)
        b = Triple._coerce(b, dim)

        def term(x, y):
            if _iszero(x) or _iszero(y):
                return 0.0
            return mul(x, y)

        def acc(*terms):
            out = 0.0
            for t in terms:
                if _iszero(t):
                    continue
                out = t if _iszero(out) else add(out, t)
            return out

        du = tuple(acc(term(da, b.u), term(a.u, db))
                   for da, db in zip(a.du, b.du))

        def slot2(da, db, d2a, d2b):
            if d2a is None or d2b is None:
                return None
            cross = mul(2.0, term(da, db)) if not (_iszero(da) or _iszero(db)) else 0.0
            return acc(term(d2a, b.u), cross, term(a.u, d2b))

        d2u = tuple(slot2(*z) for z in zip(a.du, b.du, a.d2u, b.d2u))
        return Triple(mul(a.u, b.u), du, d2u)

    def _chain(self, f, d1, d2_thunk):
        """Compose a unary map: value f, first derivative d1 and second
        derivative (built lazily by ``d2_thunk``) at self.u."""
        du = tuple(0.0 if _iszero(d) else mul(d1, d) for d in self.du)
        d2 = None

        def second(d, dd):
            nonlocal d2
            if dd is None:
                return None
            t1 = 0.0
            if not _iszero(d):
                if d2 is None:
                    d2 = d2_thunk()
                t1 = mul(d2, mul(d, d))
            t2 = 0.0 if _iszero(dd) else mul(d1, dd)
            if _iszero(t1):
                return t2
            if _iszero(t2):
                return t1
            return add(t1, t2)

        d2u = tuple(second(d, dd) for d, dd in zip(self.du, self.d2u))
        return Triple(f, du, d2u)

    def __add__(self, other):
        return Triple._add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return Triple._add(self, neg(other))

    def __rsub__(self, other):
        return Triple._add(other, neg(self))

    def __mul__(self, other):
        return Triple._mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Node, Triple)):
            return Triple._mul(self, power(other, -1.0))
        return Triple._mul(self, 1.0 / other)

    def __rtruediv__(self, other):
        return mul(other, power(self, -1.0))

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)


def input_triple(x, d2_dims=None, frozen_dims=()):
    """Seed a batch of coordinates for forward derivative propagation.

    ``x`` is an (n, d) array of points.  Slot i of the first derivative is
    the one-hot row for coordinate i; dims in ``frozen_dims`` are constants
    (projected face coordinates) and get a structural zero.  ``d2_dims``
    restricts which second derivatives are tracked (None tracks all).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ConfigurationError(f"input points must be 2-D, got shape {x.shape}")
    n, d = x.shape
    if d2_dims is None:
        d2_dims = tuple(range(d))
    du, d2u = [], []
    for i in range(d):
        if i in frozen_dims:
            du.append(0.0)
            d2u.append(0.0)
            continue
        e = np.zeros((1, d))
        e[0, i] = 1.0
        du.append(e)
        d2u.append(0.0 if i in d2_dims else None)
    return Triple(x, tuple(du), tuple(d2u))


def column(x, j):
    """Coordinate column j of a batched point algebra element.

    Input points are constants, so slots are plain arrays or structural
    zeros; one-hot rows of shape (1, d) slice down to their (1, 1) entry and
    keep broadcasting against (n, 1) columns.
    """
    if isinstance(x, Triple):
        def pick(slot):
            if slot is None or _iszero(slot):
                return slot
            return slot[:, j:j + 1]
        return Triple(pick(x.u), tuple(map(pick, x.du)), tuple(map(pick, x.d2u)))
    return x[:, j:j + 1]


# --- fused stream lane -------------------------------------------------
#
# Dense layers dominate training cost, so derivative propagation through
# them runs on one contiguous array of shape (streams, n, width): stream 0
# is the value, then one stream per live first derivative (second-tracked
# dims first), then one per tracked second derivative.  Each layer becomes
# a single matmul node plus a single fused activation node instead of a
# dozen elementwise passes.

@dataclass(frozen=True)
class StreamLayout:
    """Which input dims occupy which derivative streams."""

    du_dims: tuple
    d2_dims: tuple

    @property
    def n_streams(self):
        return 1 + len(self.du_dims) + len(self.d2_dims)

    @staticmethod
    def of(tri):
        """Layout for a Triple with constant slots, or None if ineligible."""
        for s in (tri.u, *tri.du, *tri.d2u):
            if isinstance(s, Node):
                return None
        d2 = tuple(i for i, s in enumerate(tri.d2u)
                   if s is not None and not _iszero(tri.du[i]))
        du = d2 + tuple(i for i, s in enumerate(tri.du)
                        if not _iszero(s) and i not in d2)
        return StreamLayout(du, d2)


def pack_streams(tri, layout):
    """Constant Triple -> (streams, n, d) float array per ``layout``."""
    x = np.asarray(tri.u, dtype=float)
    n, d = x.shape
    out = np.zeros((layout.n_streams, n, d))
    out[0] = x
    for s, i in enumerate(layout.du_dims):
        out[1 + s] = np.broadcast_to(tri.du[i], (n, d))
    # second-derivative seeds of raw coordinates are identically zero
    return out


def affine_streams(x, w, b):
    """One dense layer over a stream stack: x @ w, bias on the value stream."""
    xn, wn, bn = isinstance(x, Node), isinstance(w, Node), isinstance(b, Node)
    xv = x.value if xn else x
    wv = w.value if wn else w
    bv = b.value if bn else b
    s, n, _ = xv.shape
    x2 = xv.reshape(s * n, -1)
    y = (x2 @ wv).reshape(s, n, wv.shape[1])
    y[0] += bv
    parents, vjps = [], []
    if xn:
        parents.append(x)
        vjps.append(lambda g: (g.reshape(s * n, -1) @ wv.T).reshape(xv.shape))
    if wn:
        parents.append(w)
        vjps.append(lambda g: x2.T @ g.reshape(s * n, -1))
    if bn:
        parents.append(b)
        vjps.append(lambda g: _unbroadcast(g[0], _shape(bv)))
    if not parents:
        return y
    return Node(y, "affine_streams", tuple(parents), tuple(vjps))


def _act_value_coeffs(kind, u):
    """Activation value t plus p = f' and q = f'' expressed through t."""
    if kind == "tanh":
        t = np.tanh(u)
        p = 1.0 - t * t
        q = -2.0 * t * p
    else:  # sigmoid
        t = _sigmoid_raw(u)
        p = t * (1.0 - t)
        q = p * (1.0 - 2.0 * t)
    return t, p, q


def activation_streams(x, layout, kind):
    """Fused activation over a stream stack.

    Value stream v -> f(v); first-derivative streams scale by f'(v); tracked
    second-derivative streams become f''(v) d^2 + f'(v) dd, pairing stream
    1+i with stream 1+k+i by construction of the layout.  The chain-rule
    coefficients are cached for the hand-written backward pass.
    """
    xn = isinstance(x, Node)
    xv = x.value if xn else x
    k, m = len(layout.du_dims), len(layout.d2_dims)
    t, p, q = _act_value_coeffs(kind, xv[0])
    y = np.empty_like(xv)
    y[0] = t
    if k:
        np.multiply(p, xv[1:1 + k], out=y[1:1 + k])
    if m:
        d = xv[1:1 + m]
        y2 = y[1 + k:]
        np.multiply(q, d, out=y2)
        y2 *= d
        y2 += p * xv[1 + k:]
    if not xn:
        return y

    def vjp(g):
        # dq/du: -2 p (1 - 3 t^2) for tanh, q (1 - 2 t) - 2 p^2 for sigmoid
        if kind == "tanh":
            qp = (-2.0 * p) * (1.0 - 3.0 * t * t)
        else:
            qp = q * (1.0 - 2.0 * t) - 2.0 * p * p
        gx = np.empty_like(xv)
        gu = g[0] * p
        if k:
            gd = g[1:1 + k]
            np.multiply(p, gd, out=gx[1:1 + k])
            s = gd[0] * xv[1] if k == 1 else (gd * xv[1:1 + k]).sum(axis=0)
            s *= q
            gu += s
        if m:
            d = xv[1:1 + m]
            g2 = g[1 + k:]
            g2d = g2 * d
            s2 = g2d[0] * d[0] if m == 1 else (g2d * d).sum(axis=0)
            s2 *= qp
            gu += s2
            s3 = g2[0] * xv[1 + k] if m == 1 else (g2 * xv[1 + k:]).sum(axis=0)
            s3 *= q
            gu += s3
            g2d *= 2.0 * q
            gx[1:1 + m] += g2d
            np.multiply(p, g2, out=gx[1 + k:])
        gx[0] = gu
        return gx

    return Node(y, f"{kind}_streams", (x,), (vjp,))


def unpack_streams(x, layout, dim):
    """Stream stack back into a Triple of per-dim slots."""
    xn = isinstance(x, Node)
    xv = x.value if xn else x

    def stream(i):
        if not xn:
            return xv[i]

        def vjp(g, i=i):
            out = np.zeros(xv.shape)
            out[i] = g
            return out

        return Node(xv[i], "stream", (x,), (vjp,))

    du, d2u = [0.0] * dim, [0.0] * dim
    for s, i in enumerate(layout.du_dims):
        du[i] = stream(1 + s)
        if i not in layout.d2_dims:
            d2u[i] = None
    for s, i in enumerate(layout.d2_dims):
        d2u[i] = stream(1 + len(layout.du_dims) + s)
    return Triple(stream(0), tuple(du), tuple(d2u))


@dataclass
class DerivativeBundle:
    """Model output with first and pure second input derivatives.

    Slot lengths equal the input dimension; entries are floats, batched
    arrays, or Nodes depending on evaluation mode.
    """

    u: object
    du: list
    d2u: list

    def __post_init__(self):
        if len(self.du) != len(self.d2u):
            raise ConfigurationError("du and d2u lengths differ")


def _first_nonfinite(root):
    """Name the first op (topological order) whose value is non-finite."""
    order, seen, stack = [], set(), [root]
    while stack:
        node = stack.pop()
        if id(node) in seen or not isinstance(node, Node):
            continue
        seen.add(id(node))
        order.append(node)
        stack.extend(node.parents)
    for node in reversed(order):
        if not np.all(np.isfinite(node.value)):
            return node.op
    return None


def eval_with_input_derivatives(model, point, params):
    """Exact value and first/second input derivatives of ``model`` at ``point``.

    ``model(params, triple)`` must accept a batched Triple; the point is run
    as a batch of one and unpacked to plain floats.
    """
    point = np.atleast_1d(np.asarray(point, dtype=float))
    dim = getattr(model, "input_dim", point.shape[-1])
    if point.shape != (dim,):
        raise ConfigurationError(
            f"point has shape {point.shape}, model expects ({dim},)")
    if hasattr(model, "bundle"):
        tri = model.bundle(params, point.reshape(1, dim))
    else:
        tri = model(params, input_triple(point.reshape(1, dim)))
    flat = lambda s: float(np.asarray(value_of(s)).reshape(()))  # noqa: E731
    bundle = DerivativeBundle(flat(tri.u),
                              [flat(s) for s in tri.du],
                              [flat(s) for s in tri.d2u])
    vals = [bundle.u, *bundle.du, *bundle.d2u]
    if not all(math.isfinite(v) for v in vals):
        op = _first_nonfinite(tri.u) if isinstance(tri.u, Node) else None
        raise NumericError(
            f"non-finite derivative bundle at point {point.tolist()}"
            + (f" (first offending op: {op})" if op else ""))
    return bundle


def gradients(root, leaves):
    """Reverse-mode d(root)/d(leaf) for every leaf Node.

    Returns one array per leaf, zeros (exactly) for leaves the root does not
    depend on.  ``root`` must be a scalar-valued Node.
    """
    if not isinstance(root, Node):
        raise ConfigurationError("gradients: root is not part of the graph")
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    grads = {id(root): np.float64(1.0)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            prev = grads.get(id(parent))
            grads[id(parent)] = contrib if prev is None else prev + contrib
    out = []
    for leaf in leaves:
        g = grads.get(id(leaf))
        out.append(np.zeros(_shape(leaf.value)) if g is None else np.asarray(g, dtype=float))
    return out


def param_gradient(loss, lifted):
    """Flat d(loss)/d(theta) over a lifted parameter set.

    ``lifted`` is the mapping produced by ``NetworkParams.lift`` (or a list
    of such mappings); the returned vector (or list of vectors) follows the
    owning shape-table layout, with exact zeros for disconnected tensors.
    """
    if isinstance(lifted, (list, tuple)):
        flat_leaves = []
        for m in lifted:
            flat_leaves.extend(m[name] for name in m.order)
        gs = gradients(loss, flat_leaves)
        out, i = [], 0
        for m in lifted:
            parts = []
            for _ in m.order:
                parts.append(np.asarray(gs[i]).ravel())
                i += 1
            out.append(np.concatenate(parts) if parts else np.zeros(0))
        return out
    gs = gradients(loss, [lifted[name] for name in lifted.order])
    return np.concatenate([np.asarray(g).ravel() for g in gs]) if gs else np.zeros(0)
