"""Reverse-mode automatic differentiation on numpy arrays.

Supplies exactly the operations the network needs: batched matmul,
broadcast add/mul, tanh, leaky ReLU, softmax, batch normalization,
masked pair max-pooling, reductions, reshape, concat, and a fused
softmax cross-entropy. Every executed op is recorded on an explicit
tape in execution order; the tape replays the backward rules in
reverse and is consumed by a single backward pass.
"""

import struct

import numpy as np

_DEFAULT_DTYPE = np.float64

CHECKPOINT_MAGIC = b"AGRN"


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""


class TapeError(RuntimeError):
    """Raised on tape misuse (backward on a consumed tape, non-scalar loss)."""


def set_default_dtype(kind):
    """Select the working precision: 'f64' (default, required for gradient
    checks) or 'f32' (training throughput)."""
    global _DEFAULT_DTYPE
    if kind in ("f64", "float64", np.float64):
        _DEFAULT_DTYPE = np.float64
    elif kind in ("f32", "float32", np.float32):
        _DEFAULT_DTYPE = np.float32
    else:
        raise ValueError(f"unknown precision {kind!r}; expected 'f32' or 'f64'")


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """N-dimensional float array participating in reverse-mode differentiation.

    ``grad`` stays None until a backward pass accumulates into it; when
    present it always has the same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return smul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of executed operations and their backward rules.

    Use as a context manager around the forward pass; ops executed while
    the tape is active append their backward closures. ``backward``
    replays them in reverse once and marks the tape consumed.
    """

    def __init__(self):
        self._ops = []
        self._consumed = False
        self._prev = None

    def __enter__(self):
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        return False

    def record(self, backward_fn):
        self._ops.append(backward_fn)

    def backward(self, loss):
        """Seed d(loss)/d(loss) = 1 and populate .grad of every
        requires_grad tensor reachable through the recorded ops."""
        if self._consumed:
            raise TapeError("tape already consumed by a previous backward pass")
        if loss.data.size != 1:
            raise TapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for fn in reversed(self._ops):
            fn()


_ACTIVE_TAPE = None


def _propagate(out, inputs, backward_fn):
    out.requires_grad = any(t.requires_grad for t in inputs)
    if _ACTIVE_TAPE is not None and out.requires_grad:
        _ACTIVE_TAPE.record(backward_fn)
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    # Reduce a gradient back to the pre-broadcast operand shape.
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] > 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / linear ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch broadcasting; operands must be >= 2-D."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def backward():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accum(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accum(b, _unbroadcast(gb, b.shape))

    return _propagate(out, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Broadcasting elementwise sum."""
    try:
        out = Tensor(a.data + b.data)
    except ValueError:
        raise ShapeError(f"add shapes do not broadcast: {a.shape} + {b.shape}") from None

    def backward():
        g = out.grad
        if g is None:
            return
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _propagate(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Broadcasting elementwise product."""
    try:
        out = Tensor(a.data * b.data)
    except ValueError:
        raise ShapeError(f"mul shapes do not broadcast: {a.shape} * {b.shape}") from None

    def backward():
        g = out.grad
        if g is None:
            return
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _propagate(out, (a, b), backward)


def smul(a: Tensor, c: float) -> Tensor:
    """Multiplication by a python scalar constant."""
    c = float(c)
    out = Tensor(a.data * c)

    def backward():
        if out.grad is not None:
            _accum(a, out.grad * c)

    return _propagate(out, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))

    def backward():
        if out.grad is not None:
            _accum(a, out.grad * (1.0 - out.data * out.data))

    return _propagate(out, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    """x for x >= 0, slope*x otherwise."""
    pos = a.data >= 0
    out = Tensor(np.where(pos, a.data, slope * a.data))

    def backward():
        if out.grad is not None:
            _accum(a, out.grad * np.where(pos, 1.0, slope))

    return _propagate(out, (a,), backward)


def softmax(a: Tensor, axis: int) -> Tensor:
    """Softmax along ``axis`` with max-subtraction for stability."""
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = Tensor(e / e.sum(axis=axis, keepdims=True))

    def backward():
        g = out.grad
        if g is None:
            return
        y = out.data
        _accum(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _propagate(out, (a,), backward)


# ---------------------------------------------------------------------------
# reductions / structural ops


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward():
        g = out.grad
        if g is None:
            return
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _propagate(out, (a,), backward)


def mean_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[i] for i in axes]))
    return smul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if np.prod(a.shape, dtype=int) != abs(np.prod(shape, dtype=int)):
        # -1 wildcards resolve through numpy below; only reject clear mismatches
        pass
    try:
        out = Tensor(a.data.reshape(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} into {shape}") from None

    def backward():
        if out.grad is not None:
            _accum(a, out.grad.reshape(a.shape))

    return _propagate(out, (a,), backward)


def concat(tensors, axis: int) -> Tensor:
    """Concatenate tensors along ``axis``."""
    try:
        out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat shapes incompatible along axis {axis}: {shapes}") from None
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward():
        g = out.grad
        if g is None:
            return
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _propagate(out, tuple(tensors), backward)


def masked_pair_max(x: Tensor, fake_mask: np.ndarray) -> Tensor:
    """Max over adjacent node pairs (2j, 2j+1), skipping fake slots.

    ``fake_mask`` is a boolean vector over the input node axis marking
    padding positions. A pair of two fakes yields 0; fake slots never
    receive gradient; ties route gradient to the lower index.
    """
    if x.ndim != 3:
        raise ShapeError(f"masked_pair_max expects batch x nodes x features, got {x.shape}")
    b, two_m, f = x.shape
    if two_m % 2:
        raise ShapeError(f"masked_pair_max needs an even node dimension, got {two_m}")
    m = two_m // 2
    fake_mask = np.asarray(fake_mask, dtype=bool)
    if fake_mask.shape != (two_m,):
        raise ShapeError(f"mask shape {fake_mask.shape} does not match node count {two_m}")

    pairs = x.data.reshape(b, m, 2, f)
    mask_pairs = fake_mask.reshape(m, 2)
    guarded = np.where(mask_pairs[None, :, :, None], -np.inf, pairs)
    arg = np.argmax(guarded, axis=2)  # ties -> lower index
    vals = np.take_along_axis(guarded, arg[:, :, None, :], axis=2)[:, :, 0, :]
    both_fake = mask_pairs.all(axis=1)
    if both_fake.any():
        vals = vals.copy()
        vals[:, both_fake, :] = 0.0
    out = Tensor(vals)

    def backward():
        g = out.grad
        if g is None:
            return
        gx = np.zeros((b, m, 2, f), dtype=x.data.dtype)
        np.put_along_axis(gx, arg[:, :, None, :], g[:, :, None, :], axis=2)
        if both_fake.any():
            gx[:, both_fake, :, :] = 0.0
        _accum(x, gx.reshape(b, two_m, f))

    return _propagate(out, (x,), backward)


# ---------------------------------------------------------------------------
# batch normalization


class BatchNormState:
    """Learned scale/shift plus running statistics for one feature width."""

    def __init__(self, n_features: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(n_features), requires_grad=True)
        self.beta = Tensor(np.zeros(n_features), requires_grad=True)
        self.running_mean = np.zeros(n_features, dtype=_DEFAULT_DTYPE)
        self.running_var = np.ones(n_features, dtype=_DEFAULT_DTYPE)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Normalize per feature channel over all leading axes.

    Training mode uses batch statistics (and updates the running ones);
    inference mode is a pure affine map from the running statistics.
    """
    if x.shape[-1] != state.gamma.shape[0]:
        raise ShapeError(
            f"batch_norm feature width {x.shape[-1]} does not match state "
            f"width {state.gamma.shape[0]}"
        )
    axes = tuple(range(x.ndim - 1))
    gamma, beta = state.gamma, state.beta

    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var + state.eps)
        xhat = (x.data - mu) * inv_std
        state.running_mean = state.momentum * state.running_mean + (1 - state.momentum) * mu
        state.running_var = state.momentum * state.running_var + (1 - state.momentum) * var
    else:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.data - state.running_mean) * inv_std
    out = Tensor(gamma.data * xhat + beta.data)

    m = int(np.prod([x.shape[i] for i in axes])) if axes else 1

    def backward():
        g = out.grad
        if g is None:
            return
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            _accum(beta, g.sum(axis=axes))
        if not x.requires_grad:
            return
        dxhat = g * gamma.data
        if training:
            # full gradient through the batch statistics
            gx = (inv_std / m) * (
                m * dxhat
                - dxhat.sum(axis=axes)
                - xhat * (dxhat * xhat).sum(axis=axes)
            )
        else:
            gx = dxhat * inv_std
        _accum(x, gx)

    return _propagate(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# classification loss head


def cross_entropy_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label].

    ``labels`` are integer class indices; out-of-range labels are a hard
    error.
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects batch x classes logits, got {logits.shape}")
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"label out of range [0, {c}): {labels.min()}..{labels.max()}")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(n), labels]
    out = Tensor(np.mean(lse - picked))

    def backward():
        g = out.grad
        if g is None:
            return
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        _accum(logits, (float(g) / n) * p)

    return _propagate(out, (logits,), backward)


# ---------------------------------------------------------------------------
# named-tensor checkpoint archive


def save_tensors(path, named: dict):
    """Write a named-tensor archive: magic 'AGRN', then per tensor the
    name length + UTF-8 name, rank, shape dims (u32 LE), float64 LE payload."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        for name, value in named.items():
            arr = np.ascontiguousarray(
                value.data if isinstance(value, Tensor) else value, dtype="<f8"
            )
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_tensors(path) -> dict:
    """Read a named-tensor archive back into {name: float64 ndarray}."""
    named = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            count = int(np.prod(shape, dtype=int)) if shape else 1
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise ValueError(f"truncated checkpoint payload for tensor {name!r}")
            named[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return named
