"""Compact reverse-mode automatic differentiation over float64 arrays.

Every operation executed through a Tape records the node, its parents, and a
vector-Jacobian closure over the saved activations. backward() replays the
recorded list in exact reverse order (recording order is topological), so
gradients accumulate additively at fan-out and parameters reached through
several leaves (weight sharing across unrolled iterations) sum up naturally.

Complex linear-operator applications enter the graph through apply_linop /
apply_linop_adjoint: the operators are complex-linear, so the real-valued
vector-Jacobian product of H is H^H applied to the upstream gradient (and vice
versa). Everything else stays real; complex channels are carried as stacked
real/imaginary planes.
"""

import numpy as np


class Param:
    """A named, optionally trainable array of weights."""

    __slots__ = ("name", "value", "trainable")

    def __init__(self, name, value, trainable=True):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.trainable = trainable

    def __repr__(self):
        return f"Param({self.name}, shape={self.value.shape}, trainable={self.trainable})"


class Node:
    __slots__ = ("value", "parents", "vjp", "param")

    def __init__(self, value, parents=(), vjp=None, param=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.param = param


def _unbroadcast(grad, shape):
    """Reduce a gradient back to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def c2r_channels(z):
    """Complex (s, ...) -> real (2s, ...): real planes then imaginary planes."""
    return np.concatenate([z.real, z.imag], axis=0)


def r2c_channels(x):
    s = x.shape[0] // 2
    return x[:s] + 1j * x[s:]


def c2r_stack(z):
    """Complex array -> real (2, ...) stack."""
    return np.stack([z.real, z.imag])


def r2c_stack(x):
    return x[0] + 1j * x[1]


class Tape:
    """Operation recorder for one forward pass."""

    def __init__(self):
        self._nodes = []

    def _record(self, value, parents=(), vjp=None, param=None):
        node = Node(np.asarray(value, dtype=np.float64), tuple(parents), vjp, param)
        self._nodes.append(node)
        return node

    # ---- leaves ------------------------------------------------------------

    def constant(self, value):
        return self._record(value)

    def leaf(self, param):
        return self._record(param.value, param=param)

    # ---- arithmetic --------------------------------------------------------

    def add(self, a, b):
        def vjp(g):
            return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

        return self._record(a.value + b.value, (a, b), vjp)

    def sub(self, a, b):
        def vjp(g):
            return _unbroadcast(g, a.value.shape), -_unbroadcast(g, b.value.shape)

        return self._record(a.value - b.value, (a, b), vjp)

    def mul(self, a, b):
        av, bv = a.value, b.value

        def vjp(g):
            return (
                _unbroadcast(g * bv, av.shape),
                _unbroadcast(g * av, bv.shape),
            )

        return self._record(av * bv, (a, b), vjp)

    def scale(self, a, c):
        c = float(c)

        def vjp(g):
            return (g * c,)

        return self._record(a.value * c, (a,), vjp)

    # ---- elementwise nonlinearities ----------------------------------------

    def exp(self, a):
        out = np.exp(a.value)

        def vjp(g):
            return (g * out,)

        return self._record(out, (a,), vjp)

    def log(self, a):
        av = a.value

        def vjp(g):
            return (g / av,)

        return self._record(np.log(av), (a,), vjp)

    def tanh(self, a):
        out = np.tanh(a.value)

        def vjp(g):
            return (g * (1.0 - out * out),)

        return self._record(out, (a,), vjp)

    def sigmoid(self, a):
        av = a.value
        out = np.empty_like(av)
        pos = av >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
        ez = np.exp(av[~pos])
        out[~pos] = ez / (1.0 + ez)

        def vjp(g):
            return (g * out * (1.0 - out),)

        return self._record(out, (a,), vjp)

    def scaled_sigmoid(self, a, lo, hi):
        """lo + (hi - lo) * sigmoid(a); lo/hi broadcastable constants."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        s = self.sigmoid(a)
        span = hi - lo

        def vjp(g):
            return (g * span,)

        shifted = self._record(s.value * span + lo, (s,), vjp)
        return shifted

    def leaky_relu(self, a, slope=0.01):
        av = a.value
        gate = np.where(av >= 0.0, 1.0, slope)

        def vjp(g):
            return (g * gate,)

        return self._record(av * gate, (a,), vjp)

    # ---- linear algebra ----------------------------------------------------

    def matmul(self, a, b):
        av, bv = a.value, b.value

        def vjp(g):
            return g @ bv.T, av.T @ g

        return self._record(av @ bv, (a, b), vjp)

    def conv2d(self, x, w, b):
        """Same-padded 2-D convolution: x (Cin,H,W), w (Cout,Cin,kh,kw), b (Cout,)."""
        xv, wv, bv = x.value, w.value, b.value
        cout, cin, kh, kw = wv.shape
        h, wd = xv.shape[1:]
        ph, pw = kh // 2, kw // 2
        xp = np.pad(xv, ((0, 0), (ph, ph), (pw, pw)))
        cols = np.empty((cin, kh, kw, h, wd))
        for i in range(kh):
            for j in range(kw):
                cols[:, i, j] = xp[:, i : i + h, j : j + wd]
        cols2 = cols.reshape(cin * kh * kw, h * wd)
        wmat = wv.reshape(cout, -1)
        out = (wmat @ cols2 + bv[:, None]).reshape(cout, h, wd)

        def vjp(g):
            g2 = g.reshape(cout, -1)
            dw = (g2 @ cols2.T).reshape(wv.shape)
            db = g2.sum(axis=1)
            dcols = (wmat.T @ g2).reshape(cin, kh, kw, h, wd)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i : i + h, j : j + wd] += dcols[:, i, j]
            dx = dxp[:, ph : ph + h, pw : pw + wd]
            return dx, dw, db

        return self._record(out, (x, w, b), vjp)

    # ---- shape plumbing ------------------------------------------------------

    def reshape(self, a, shape):
        old = a.value.shape

        def vjp(g):
            return (g.reshape(old),)

        return self._record(a.value.reshape(shape), (a,), vjp)

    def transpose2d(self, a):
        def vjp(g):
            return (g.T.copy(),)

        return self._record(a.value.T.copy(), (a,), vjp)

    def concat(self, nodes, axis=0):
        sizes = [n.value.shape[axis] for n in nodes]
        splits = np.cumsum(sizes)[:-1]

        def vjp(g):
            return tuple(np.split(g, splits, axis=axis))

        return self._record(np.concatenate([n.value for n in nodes], axis=axis), nodes, vjp)

    def slice_axis0(self, a, start, stop):
        shape = a.value.shape

        def vjp(g):
            out = np.zeros(shape)
            out[start:stop] = g
            return (out,)

        return self._record(a.value[start:stop].copy(), (a,), vjp)

    def spatial_mean(self, a):
        """(C, H, W) -> (C,) global average pool."""
        c, h, w = a.value.shape

        def vjp(g):
            return (np.broadcast_to(g[:, None, None] / (h * w), (c, h, w)).copy(),)

        return self._record(a.value.mean(axis=(1, 2)), (a,), vjp)

    # ---- losses ----------------------------------------------------------

    def mse(self, pred, target):
        """Mean squared error against a constant target array."""
        tv = np.asarray(target, dtype=np.float64)
        diff = pred.value - tv
        n = diff.size

        def vjp(g):
            return (g * 2.0 * diff / n,)

        return self._record(np.array(np.mean(diff * diff)), (pred,), vjp)

    def weighted_sum(self, nodes, weights):
        weights = [float(w) for w in weights]
        total = sum(w * n.value for w, n in zip(weights, nodes))

        def vjp(g):
            return tuple(g * w for w in weights)

        return self._record(np.array(total), tuple(nodes), vjp)

    # ---- complex linear-operator bridges -----------------------------------

    def apply_linop(self, x, op):
        """Forward acquisition: real (2s,N,N) -> real (2, frames, C, d)."""
        y = op.forward(r2c_channels(x.value))

        def vjp(g):
            gz = op.adjoint(r2c_stack(g))
            return (c2r_channels(gz),)

        return self._record(c2r_stack(y), (x,), vjp)

    def apply_linop_adjoint(self, y, op):
        """Adjoint acquisition: real (2, frames, C, d) -> real (2s,N,N)."""
        x = op.adjoint(r2c_stack(y.value))

        def vjp(g):
            gy = op.forward(r2c_channels(g))
            return (c2r_stack(gy),)

        return self._record(c2r_channels(x), (y,), vjp)

    # ---- reverse pass ------------------------------------------------------

    def backward(self, root, seed=1.0):
        """Accumulate gradients of `root` w.r.t. every trainable Param leaf.

        Returns {Param: grad}. Does not mutate the tape: repeated calls give
        identical results.
        """
        grads = {id(root): np.broadcast_to(np.asarray(seed, dtype=np.float64), root.value.shape).copy()}
        param_grads = {}
        for node in reversed(self._nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.param is not None and node.param.trainable:
                acc = param_grads.get(node.param)
                param_grads[node.param] = g.copy() if acc is None else acc + g
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return param_grads


class Adam:
    """Adaptive-moment optimizer over Param objects."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {id(p): np.zeros_like(p.value) for p in self.params}
        self._v = {id(p): np.zeros_like(p.value) for p in self.params}

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            g = grads.get(p)
            if g is None:
                continue
            m = self._m[id(p)]
            v = self._v[id(p)]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / (1.0 - b1**self.t)
            vhat = v / (1.0 - b2**self.t)
            p.value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
