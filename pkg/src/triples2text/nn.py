"""float64 tensor operations with a replay tape for reverse-mode gradients.

Everything operates on 2-D, C-contiguous numpy float64 arrays with shape
[batch, features] unless stated otherwise; that array layout is the
project's only tensor type. A forward pass optionally records closures on
a :class:`Tape`; ``Tape.backward`` replays them in reverse order and
accumulates gradients into ``Parameter.grad`` buffers. There is no graph
compiler: the operation set is exactly what the triple encoder, the
recurrent decoders and batch normalisation need. Passing ``tape=None``
runs the same code as a pure forward evaluation.
"""

from __future__ import annotations

import json
import struct
from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray


class ShapeError(ValueError):
    """Operands with incompatible shapes, named in the message."""


class TapeError(RuntimeError):
    """Tape misuse, e.g. backward() twice without a new forward pass."""


class BadCheckpointError(ValueError):
    """Checkpoint container is truncated, corrupt, or of the wrong version."""


def tensor2d(rows: int, cols: int) -> Array:
    return np.zeros((rows, cols), dtype=np.float64)


class Parameter:
    """A named trainable matrix with its gradient and RMSProp accumulator.

    value, grad and rms_acc always share one shape. Vectors are stored as
    [1, n] matrices so every parameter serialises the same way.
    """

    __slots__ = ("name", "value", "grad", "rms_acc")

    def __init__(self, name: str, rows: int, cols: int):
        self.name = name
        self.value = tensor2d(rows, cols)
        self.grad = tensor2d(rows, cols)
        self.rms_acc = tensor2d(rows, cols)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, {self.value.shape[0]}x{self.value.shape[1]})"


class Node:
    """A value in the recorded computation, with a lazily allocated gradient."""

    __slots__ = ("value", "grad")

    def __init__(self, value: Array):
        self.value = value
        self.grad: Array | None = None


def _acc(node: Node, g: Array) -> None:
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += g


class Tape:
    """Records backward closures during a forward pass and replays them."""

    def __init__(self):
        self._ops: list[Callable[[], None]] = []
        self._spent = False

    def record(self, fn: Callable[[], None]) -> None:
        self._ops.append(fn)

    def param(self, p: Parameter) -> Node:
        """Enter a parameter into the recorded computation.

        The node's gradient aliases ``p.grad``, which the caller must have
        zeroed before the forward pass (see :func:`zero_grads`).
        """
        node = Node(p.value)
        node.grad = p.grad
        return node

    def backward(self, loss: Node) -> None:
        """Populate gradients of every recorded input of ``loss``.

        Raises TapeError when called a second time: the recorded closures
        accumulate, so replaying them again would double every gradient.
        """
        if self._spent:
            raise TapeError("backward() called twice on the same tape; run a new forward pass")
        self._spent = True
        loss.grad = np.ones_like(loss.value)
        for fn in reversed(self._ops):
            fn()


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad[...] = 0.0


def leaf(value: Array) -> Node:
    return Node(np.asarray(value, dtype=np.float64))


# ---------------------------------------------------------------------------
# recorded operations


def matmul(tape: Tape | None, a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: {a.value.shape} @ {b.value.shape}")
    out = Node(a.value @ b.value)
    if tape is not None:
        def bwd():
            _acc(a, out.grad @ b.value.T)
            _acc(b, a.value.T @ out.grad)
        tape.record(bwd)
    return out


def add_bias(tape: Tape | None, x: Node, b: Node) -> Node:
    """Add a [1, n] bias row to every row of x."""
    if b.value.shape != (1, x.value.shape[1]):
        raise ShapeError(f"add_bias: bias {b.value.shape} onto {x.value.shape}")
    out = Node(x.value + b.value)
    if tape is not None:
        def bwd():
            _acc(x, out.grad)
            _acc(b, out.grad.sum(axis=0, keepdims=True))
        tape.record(bwd)
    return out


def affine(tape: Tape | None, x: Node, w: Node, b: Node | None) -> Node:
    """x @ w (+ b broadcast over the batch)."""
    out = matmul(tape, x, w)
    if b is not None:
        out = add_bias(tape, out, b)
    return out


def add(tape: Tape | None, x: Node, y: Node) -> Node:
    if x.value.shape != y.value.shape:
        raise ShapeError(f"add: {x.value.shape} + {y.value.shape}")
    out = Node(x.value + y.value)
    if tape is not None:
        def bwd():
            _acc(x, out.grad)
            _acc(y, out.grad)
        tape.record(bwd)
    return out


def mul(tape: Tape | None, x: Node, y: Node) -> Node:
    if x.value.shape != y.value.shape:
        raise ShapeError(f"mul: {x.value.shape} * {y.value.shape}")
    out = Node(x.value * y.value)
    if tape is not None:
        def bwd():
            _acc(x, out.grad * y.value)
            _acc(y, out.grad * x.value)
        tape.record(bwd)
    return out


def scale_shift(tape: Tape | None, x: Node, scale: float, shift: float = 0.0) -> Node:
    out = Node(x.value * scale + shift)
    if tape is not None:
        def bwd():
            _acc(x, out.grad * scale)
        tape.record(bwd)
    return out


def rows_lookup(tape: Tape | None, w: Node, idx: Array) -> Node:
    """Select rows of w by index; the embedding realisation of one-hot input."""
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= w.value.shape[0]):
        raise ShapeError(
            f"rows_lookup: index out of range [0, {w.value.shape[0]}) in {np.sort(np.unique(idx))[:5]}..."
        )
    out = Node(w.value[idx])
    if tape is not None:
        def bwd():
            if w.grad is None:
                w.grad = np.zeros_like(w.value)
            np.add.at(w.grad, idx, out.grad)
        tape.record(bwd)
    return out


def hstack(tape: Tape | None, parts: Sequence[Node]) -> Node:
    widths = [p.value.shape[1] for p in parts]
    out = Node(np.concatenate([p.value for p in parts], axis=1))
    if tape is not None:
        def bwd():
            off = 0
            for p, w in zip(parts, widths):
                _acc(p, out.grad[:, off:off + w])
                off += w
        tape.record(bwd)
    return out


def vstack(tape: Tape | None, parts: Sequence[Node]) -> Node:
    heights = [p.value.shape[0] for p in parts]
    out = Node(np.concatenate([p.value for p in parts], axis=0))
    if tape is not None:
        def bwd():
            off = 0
            for p, h in zip(parts, heights):
                _acc(p, out.grad[off:off + h])
                off += h
        tape.record(bwd)
    return out


def slice_cols(tape: Tape | None, x: Node, start: int, stop: int) -> Node:
    out = Node(x.value[:, start:stop])
    if tape is not None:
        def bwd():
            if x.grad is None:
                x.grad = np.zeros_like(x.value)
            x.grad[:, start:stop] += out.grad
        tape.record(bwd)
    return out


def slice_rows(tape: Tape | None, x: Node, start: int, stop: int) -> Node:
    out = Node(x.value[start:stop])
    if tape is not None:
        def bwd():
            if x.grad is None:
                x.grad = np.zeros_like(x.value)
            x.grad[start:stop] += out.grad
        tape.record(bwd)
    return out


def pack_slots(tape: Tape | None, x: Node, example_idx: Array, slot_idx: Array,
               n_examples: int, n_slots: int) -> Node:
    """Scatter rows of x into a zero-padded [n_examples, n_slots*width] layout.

    Row r of x lands in example example_idx[r], slot slot_idx[r]. Unfilled
    slots stay zero, which realises padding-with-zero-vectors.
    """
    width = x.value.shape[1]
    buf = np.zeros((n_examples, n_slots, width))
    buf[example_idx, slot_idx] = x.value
    out = Node(buf.reshape(n_examples, n_slots * width))
    if tape is not None:
        def bwd():
            g3 = out.grad.reshape(n_examples, n_slots, width)
            _acc(x, g3[example_idx, slot_idx])
        tape.record(bwd)
    return out


def relu(tape: Tape | None, x: Node) -> Node:
    out = Node(np.maximum(x.value, 0.0))
    if tape is not None:
        def bwd():
            _acc(x, out.grad * (x.value > 0.0))
        tape.record(bwd)
    return out


def sigmoid(tape: Tape | None, x: Node) -> Node:
    out = Node(sigmoid_array(x.value))
    if tape is not None:
        def bwd():
            _acc(x, out.grad * out.value * (1.0 - out.value))
        tape.record(bwd)
    return out


def tanh(tape: Tape | None, x: Node) -> Node:
    out = Node(np.tanh(x.value))
    if tape is not None:
        def bwd():
            _acc(x, out.grad * (1.0 - out.value * out.value))
        tape.record(bwd)
    return out


def softmax(tape: Tape | None, x: Node) -> Node:
    """Row-wise softmax, max-subtracted for stability."""
    out = Node(softmax_array(x.value))
    if tape is not None:
        def bwd():
            p = out.value
            inner = (out.grad * p).sum(axis=1, keepdims=True)
            _acc(x, p * (out.grad - inner))
        tape.record(bwd)
    return out


def sum_all(tape: Tape | None, x: Node) -> Node:
    out = Node(np.array([[x.value.sum()]]))
    if tape is not None:
        def bwd():
            _acc(x, np.full_like(x.value, out.grad[0, 0]))
        tape.record(bwd)
    return out


def sigmoid_array(x: Array) -> Array:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_array(x: Array) -> Array:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def masked_log_softmax(logits: Array, masked_cols: Sequence[int]) -> Array:
    """Row-wise log softmax with the given columns excluded (probability 0)."""
    z = logits.copy()
    if len(masked_cols):
        z[:, list(masked_cols)] = -np.inf
    zmax = z.max(axis=1, keepdims=True)
    s = z - zmax
    lse = np.log(np.exp(s).sum(axis=1, keepdims=True))
    return s - lse


def masked_softmax_nll(tape: Tape | None, logits: Node, targets: Array,
                       weights: Array, masked_cols: Sequence[int]) -> tuple[Node, Array]:
    """Per-row negative log probability of `targets`, with masked columns
    renormalised away and rows weighted (weight 0 = padding, no loss).

    Returns the [batch, 1] loss node and the probability matrix.
    """
    b, _ = logits.value.shape
    z = logits.value.copy()
    cols = list(masked_cols)
    if cols:
        z[:, cols] = -np.inf
    zmax = z.max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):  # -inf - -inf on masked columns is fine
        e = np.exp(z - zmax)
        total = e.sum(axis=1, keepdims=True)
        probs = e / total
    rows = np.arange(b)
    # weight-0 rows may point at a masked target; keep the log argument sane
    ptar = probs[rows, targets]
    safe = np.where(weights > 0.0, ptar, 1.0)
    nll = -(np.log(safe) * weights)[:, None]
    out = Node(nll)
    if tape is not None:
        def bwd():
            g = out.grad[:, 0] * weights
            d = probs * g[:, None]
            d[rows, targets] -= g
            _acc(logits, d)
        tape.record(bwd)
    return out, probs


# ---------------------------------------------------------------------------
# batch normalisation


class BatchNorm:
    """Per-feature batch normalisation with running statistics.

    Training mode normalises by the batch mean and (biased) variance and
    folds them into the running statistics; inference mode normalises by
    the running statistics alone. A training batch of one row has no
    usable variance and is rejected.
    """

    def __init__(self, name: str, width: int, momentum: float = 0.9, eps: float = 1e-5):
        self.name = name
        self.width = width
        self.momentum = momentum
        self.eps = eps
        self.scale = Parameter(f"{name}.scale", 1, width)
        self.scale.value[...] = 1.0
        self.shift = Parameter(f"{name}.shift", 1, width)
        self.running_mean = tensor2d(1, width)
        self.running_var = tensor2d(1, width)
        self.running_var[...] = 1.0

    def parameters(self) -> list[Parameter]:
        return [self.scale, self.shift]

    def state_blocks(self) -> list[tuple[str, Array]]:
        return [(f"{self.name}.running_mean", self.running_mean),
                (f"{self.name}.running_var", self.running_var)]


def batch_norm(tape: Tape | None, x: Node, bn: BatchNorm, training: bool,
               update_running: bool = True) -> Node:
    if x.value.shape[1] != bn.width:
        raise ShapeError(f"batch_norm {bn.name}: width {x.value.shape[1]} != {bn.width}")
    scale = tape.param(bn.scale) if tape is not None else Node(bn.scale.value)
    shift = tape.param(bn.shift) if tape is not None else Node(bn.shift.value)
    if training:
        n = x.value.shape[0]
        if n < 2:
            raise ValueError(f"batch_norm {bn.name}: training needs a batch of >= 2 rows, got {n}")
        mean = x.value.mean(axis=0, keepdims=True)
        var = x.value.var(axis=0, keepdims=True)
        if update_running:
            bn.running_mean[...] = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * mean
            bn.running_var[...] = bn.momentum * bn.running_var + (1.0 - bn.momentum) * var
        inv = 1.0 / np.sqrt(var + bn.eps)
        xhat = (x.value - mean) * inv
        out = Node(scale.value * xhat + shift.value)
        if tape is not None:
            def bwd():
                g = out.grad
                _acc(shift, g.sum(axis=0, keepdims=True))
                _acc(scale, (g * xhat).sum(axis=0, keepdims=True))
                dxhat = g * scale.value
                dx = inv / n * (n * dxhat
                                - dxhat.sum(axis=0, keepdims=True)
                                - xhat * (dxhat * xhat).sum(axis=0, keepdims=True))
                _acc(x, dx)
            tape.record(bwd)
        return out
    inv = 1.0 / np.sqrt(bn.running_var + bn.eps)
    xhat = (x.value - bn.running_mean) * inv
    out = Node(scale.value * xhat + shift.value)
    if tape is not None:
        def bwd():
            g = out.grad
            _acc(shift, g.sum(axis=0, keepdims=True))
            _acc(scale, (g * xhat).sum(axis=0, keepdims=True))
            _acc(x, g * scale.value * inv)
        tape.record(bwd)
    return out


# ---------------------------------------------------------------------------
# optimisation


def init_uniform(params: Iterable[Parameter], low: float = -0.001, high: float = 0.001,
                 seed: int | None = None) -> None:
    """Fill every parameter with uniform samples from [low, high).

    The generator is seeded once and parameters are filled in iteration
    order, so an identical seed reproduces the initialisation bitwise.
    """
    if seed is None:
        raise ValueError("init_uniform requires a seed")
    rng = np.random.default_rng(seed)
    for p in params:
        p.value[...] = rng.uniform(low, high, size=p.value.shape)


def clip_gradients(params: Iterable[Parameter], max_norm: float | None) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the applied scale (1.0 when no clipping happened or clipping
    is disabled with max_norm=None).
    """
    params = list(params)
    if max_norm is None:
        return 1.0
    total = 0.0
    for p in params:
        total += float((p.grad * p.grad).sum())
    norm = total ** 0.5
    if norm <= max_norm or norm == 0.0:
        return 1.0
    factor = max_norm / norm
    for p in params:
        p.grad *= factor
    return factor


def rmsprop_step(params: Iterable[Parameter], learning_rate: float,
                 decay_rho: float = 0.95, epsilon: float = 1e-8,
                 l2_coefficient: float = 0.0) -> None:
    """One RMSProp update: divide each step by a running RMS of gradients.

    The l2 penalty enters through the gradient (g += 2*l2*value) before
    both the accumulator and the step, so zero gradient with zero l2 is a
    fixed point.
    """
    for p in params:
        g = p.grad
        if l2_coefficient:
            g = g + 2.0 * l2_coefficient * p.value
        p.rms_acc[...] = decay_rho * p.rms_acc + (1.0 - decay_rho) * g * g
        p.value -= learning_rate * g / np.sqrt(p.rms_acc + epsilon)


def gradient_check(loss_fn: Callable[[bool], float], params: Sequence[Parameter],
                   h: float = 1e-5) -> float:
    """Compare analytic gradients to central finite differences.

    ``loss_fn(compute_grads)`` must rerun the same forward pass on fixed
    data; with compute_grads=True it must also populate Parameter.grad.
    Returns the worst relative error over every entry of every parameter,
    with the denominator floored at 1e-4 so that pure float noise around
    zero gradients does not register.
    """
    zero_grads(params)
    loss_fn(True)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_fn(False)
            flat[i] = keep - h
            down = loss_fn(False)
            flat[i] = keep
            fd = (up - down) / (2.0 * h)
            an = a.reshape(-1)[i]
            err = abs(an - fd) / max(abs(an), abs(fd), 1e-4)
            if err > worst:
                worst = err
    return worst


# ---------------------------------------------------------------------------
# binary block container (checkpoints)

_MAGIC = b"T2TB"
_VERSION = 1


def write_blocks(path: str, header: dict, blocks: Sequence[tuple[str, Array]]) -> None:
    """Write the versioned container: magic, version, JSON header, then
    named blocks of (name, rows, cols, row-major little-endian float64).
    """
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(struct.pack("<I", len(blocks)))
        for name, arr in blocks:
            if arr.ndim != 2:
                raise ShapeError(f"block {name}: expected a 2-D array")
            data = np.ascontiguousarray(arr, dtype="<f8")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<QQ", data.shape[0], data.shape[1]))
            fh.write(data.tobytes())


def read_blocks(path: str) -> tuple[dict, dict[str, Array]]:
    def take(fh, n, what):
        buf = fh.read(n)
        if len(buf) != n:
            raise BadCheckpointError(f"truncated checkpoint while reading {what}")
        return buf

    with open(path, "rb") as fh:
        if take(fh, 4, "magic") != _MAGIC:
            raise BadCheckpointError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", take(fh, 4, "version"))
        if version != _VERSION:
            raise BadCheckpointError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", take(fh, 4, "header length"))
        header = json.loads(take(fh, hlen, "header").decode("utf-8"))
        (nblocks,) = struct.unpack("<I", take(fh, 4, "block count"))
        blocks: dict[str, Array] = {}
        for _ in range(nblocks):
            (nlen,) = struct.unpack("<I", take(fh, 4, "name length"))
            name = take(fh, nlen, "name").decode("utf-8")
            rows, cols = struct.unpack("<QQ", take(fh, 16, "shape"))
            raw = take(fh, rows * cols * 8, f"data of {name}")
            blocks[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(np.float64)
        return header, blocks
