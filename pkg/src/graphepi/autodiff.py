"""Minimal reverse-mode automatic differentiation over dense matrices.

Supports exactly the operations the surrogate models need: dense and
sparse-dense matrix products, bias addition, ReLU/ELU, scaling, elementwise
addition, and a mean-absolute-percentage-error loss. Tensors default to
float32; float64 is accepted so gradient checks can run in double precision.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sparse


class AutodiffError(Exception):
    pass


class ShapeMismatchError(AutodiffError):
    pass


class StaleTapeError(AutodiffError):
    """Backward was called twice on the same tape without a new forward."""


class AllExcludedError(AutodiffError):
    """Every target entry fell below the MAPE denominator floor."""


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is None:
        dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
    arr = arr.astype(dtype, copy=False)
    # ascontiguousarray would promote 0-d scalars to 1-d; keep their shape.
    return arr if arr.ndim == 0 else np.ascontiguousarray(arr)


class Tensor:
    """Array value with an optional gradient buffer.

    Leaf tensors (parameters, constants) have no tape; tensors produced by
    operations remember the tape that recorded them.
    """

    __slots__ = ("data", "grad", "requires_grad", "tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Execution-ordered record of operations for one forward pass."""

    def __init__(self):
        self._nodes = []  # (output, inputs, backward_fn)
        self._consumed = False

    def constant(self, data, dtype=None) -> Tensor:
        t = Tensor(data, requires_grad=False, dtype=dtype)
        t.tape = self
        return t

    def _record(self, output: Tensor, inputs, backward_fn):
        output.tape = self
        self._nodes.append((output, inputs, backward_fn))

    def backward(self, loss: Tensor):
        """Accumulate gradients of `loss` into every recorded tensor."""
        if self._consumed:
            raise StaleTapeError("tape already consumed; run a new forward pass")
        if loss.tape is not self:
            raise AutodiffError("loss does not belong to this tape")
        if loss.data.shape != ():
            raise AutodiffError("backward requires a scalar loss")
        self._consumed = True
        loss.grad = np.ones((), dtype=loss.data.dtype)
        for output, inputs, backward_fn in reversed(self._nodes):
            if output.grad is None:
                continue
            for tensor, grad in zip(inputs, backward_fn(output.grad)):
                if grad is None or isinstance(tensor, np.ndarray):
                    continue
                if tensor.requires_grad or tensor.tape is self:
                    tensor._accumulate(grad)


def _tape_of(*operands) -> Tape | None:
    tape = None
    has_tensor = False
    for op in operands:
        if isinstance(op, Tensor):
            has_tensor = True
            if op.tape is not None:
                if tape is not None and tape is not op.tape:
                    raise AutodiffError("operands belong to different tapes")
                tape = op.tape
    if has_tensor and tape is None:
        raise AutodiffError("tensor operation outside a tape; wrap inputs via tape.constant")
    return tape


def _value(x):
    return x.data if isinstance(x, Tensor) else x


def matmul(a, b):
    """a @ b for 2-D operands or a batched 3-D `a` against a 2-D `b`."""
    tape = _tape_of(a, b)
    av, bv = _value(a), _value(b)
    if av.ndim not in (2, 3) or bv.ndim != 2 or av.shape[-1] != bv.shape[0]:
        raise ShapeMismatchError(f"cannot matmul shapes {av.shape} and {bv.shape}")
    out_v = av @ bv
    if tape is None:
        return out_v
    out = Tensor(out_v)

    def backward(g):
        ga = g @ bv.swapaxes(-1, -2)
        if av.ndim == 3:
            gb = np.einsum("bnk,bnm->km", av, g)
        else:
            gb = av.T @ g
        return ga, gb

    tape._record(out, (a, b), backward)
    return out


def sp_matmul(matrix: sparse.spmatrix, x):
    """Sparse (n, n) matrix times dense (n, c) or batched (B, n, c) features."""
    tape = _tape_of(x)
    xv = _value(x)
    n = matrix.shape[0]
    if matrix.shape[1] != (xv.shape[0] if xv.ndim == 2 else xv.shape[1]):
        raise ShapeMismatchError(f"cannot multiply {matrix.shape} sparse by {xv.shape}")

    def apply(m, v):
        if v.ndim == 2:
            return m @ v
        batch, _, c = v.shape
        flat = v.transpose(1, 0, 2).reshape(n, batch * c)
        return (m @ flat).reshape(n, batch, c).transpose(1, 0, 2)

    out_v = apply(matrix, xv).astype(xv.dtype, copy=False)
    if tape is None:
        return out_v
    out = Tensor(out_v)
    transposed = matrix.T.tocsr()

    def backward(g):
        return (apply(transposed, g),)

    tape._record(out, (x,), backward)
    return out


def add(a, b):
    tape = _tape_of(a, b)
    av, bv = _value(a), _value(b)
    if av.shape != bv.shape:
        raise ShapeMismatchError(f"cannot add shapes {av.shape} and {bv.shape}")
    out_v = av + bv
    if tape is None:
        return out_v
    out = Tensor(out_v)
    tape._record(out, (a, b), lambda g: (g, g))
    return out


def add_bias(x, bias):
    """x + bias with bias broadcast over all leading axes."""
    tape = _tape_of(x, bias)
    xv, bv = _value(x), _value(bias)
    if bv.ndim != 1 or xv.shape[-1] != bv.shape[0]:
        raise ShapeMismatchError(f"bias {bv.shape} does not match features {xv.shape}")
    out_v = xv + bv
    if tape is None:
        return out_v
    out = Tensor(out_v)
    axes = tuple(range(xv.ndim - 1))

    def backward(g):
        return g, g.sum(axis=axes)

    tape._record(out, (x, bias), backward)
    return out


def relu(x):
    tape = _tape_of(x)
    xv = _value(x)
    out_v = np.maximum(xv, 0)
    if tape is None:
        return out_v
    out = Tensor(out_v)
    mask = xv > 0

    def backward(g):
        return (g * mask,)

    tape._record(out, (x,), backward)
    return out


def elu(x):
    """elu(x) = x for x >= 0, exp(x) - 1 otherwise."""
    tape = _tape_of(x)
    xv = _value(x)
    neg = np.expm1(np.minimum(xv, 0))
    out_v = np.where(xv >= 0, xv, neg).astype(xv.dtype, copy=False)
    if tape is None:
        return out_v
    out = Tensor(out_v)
    slope = np.where(xv >= 0, xv.dtype.type(1.0), (neg + 1).astype(xv.dtype))

    def backward(g):
        return (g * slope,)

    tape._record(out, (x,), backward)
    return out


def scale(x, factor: float):
    tape = _tape_of(x)
    xv = _value(x)
    out_v = xv * xv.dtype.type(factor)
    if tape is None:
        return out_v
    out = Tensor(out_v)
    tape._record(out, (x,), lambda g: (g * xv.dtype.type(factor),))
    return out


DENOMINATOR_FLOOR = 1e-12


def mape_loss(pred, target, floor: float = DENOMINATOR_FLOOR):
    """Mean absolute percentage error over entries with |target| > floor.

    Returns 100/n * sum(|y - yhat| / |y|); the subgradient at yhat == y is
    zero. Accumulation runs in float64 regardless of operand dtype.
    """
    tape = _tape_of(pred)
    pv = _value(pred)
    tv = np.asarray(_value(target))
    if pv.shape != tv.shape:
        raise ShapeMismatchError(f"prediction {pv.shape} vs target {tv.shape}")
    mask = np.abs(tv) > floor
    n = int(mask.sum())
    if n == 0:
        raise AllExcludedError("no target entry above the denominator floor")
    diff = pv.astype(np.float64) - tv.astype(np.float64)
    denom = np.abs(tv.astype(np.float64))
    value = 100.0 / n * np.abs(diff[mask] / denom[mask]).sum()
    if tape is None:
        return float(value)
    out = Tensor(np.asarray(value, dtype=pv.dtype))

    def backward(g):
        grad = np.zeros_like(pv, dtype=np.float64)
        grad[mask] = np.sign(diff[mask]) / denom[mask] * (100.0 / n)
        return (grad.astype(pv.dtype) * g,)

    tape._record(out, (pred,), backward)
    return out


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class Adam:
    """Adam with bias correction over a fixed parameter list."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moments = [np.zeros_like(p.data) for p in self.params]
        self.second_moments = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        for p, m, v in zip(self.params, self.first_moments, self.second_moments):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            p.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def sgd_step(params, grads, lr: float):
    """Plain gradient descent: w <- w - lr * g, exactly."""
    for p, g in zip(params, grads):
        if isinstance(p, Tensor):
            p.data -= (lr * g).astype(p.data.dtype)
        else:
            p -= lr * g
