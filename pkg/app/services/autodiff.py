"""
Dense tensor core with tape-based reverse-mode differentiation

Tensors wrap numpy arrays (32-bit floats unless a float64 array is passed in
explicitly). Operations executed while a Tape is active are recorded on it;
Tape.backward walks the records in reverse and accumulates gradients into
every tensor that requires them. Each thread or context has its own active
tape, so independent tapes can run concurrently.
"""

import contextvars
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.utils.exceptions import IndexOutOfRange, NonFiniteValue, ShapeMismatch, StateShapeMismatch

logger = logging.getLogger(__name__)

DTYPE = np.float32

ArrayLike = Union[np.ndarray, float, int, Sequence]

_active_tape: contextvars.ContextVar = contextvars.ContextVar("active_tape", default=None)


class Tensor:
    """An n-dimensional array that can take part in differentiation"""

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str = ""):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(DTYPE)
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._tape: Optional["Tape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self._tape is None:
            raise RuntimeError("Tensor was not produced on a tape")
        self._tape.backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """Trainable tensor; its gradient buffer always matches its value"""

    def __init__(self, value: ArrayLike, name: str):
        super().__init__(np.array(value, dtype=DTYPE) if not isinstance(value, np.ndarray) else value,
                         requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        if self.grad is None or self.grad.shape != self.data.shape or self.grad.dtype != self.data.dtype:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0)


@dataclass
class _Record:
    inputs: Tuple[Tensor, ...]
    outputs: Tuple[Tensor, ...]
    backward: Callable[..., Sequence[Optional[np.ndarray]]]


class Tape:
    """Records differentiable operations executed inside its context"""

    def __init__(self):
        self.records: List[_Record] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for record in reversed(self.records):
            grads = [out.grad for out in record.outputs]
            if all(g is None for g in grads):
                continue
            grads = [np.zeros_like(out.data) if g is None else g for out, g in zip(record.outputs, grads)]
            for tensor, grad in zip(record.inputs, record.backward(*grads)):
                if grad is None or not tensor.requires_grad:
                    continue
                grad = _unbroadcast(np.asarray(grad), tensor.shape)
                if tensor.grad is None:
                    tensor.grad = grad.astype(tensor.data.dtype, copy=True)
                else:
                    tensor.grad += grad


def current_tape() -> Optional[Tape]:
    return _active_tape.get()


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _check_finite(outputs: Sequence[np.ndarray], inputs: Sequence[Tensor], op_name: str) -> None:
    if not all(np.all(np.isfinite(t.data)) for t in inputs):
        return
    for out in outputs:
        if not np.all(np.isfinite(out)):
            raise NonFiniteValue(f"{op_name} produced non-finite values from finite inputs")


def apply_multi(
    outputs: Sequence[np.ndarray],
    inputs: Sequence[Tensor],
    backward: Callable[..., Sequence[Optional[np.ndarray]]],
    op_name: str = "op",
) -> Tuple[Tensor, ...]:
    """Wrap raw forward results as tensors and record the op on the active tape"""
    if settings.DEBUG:
        _check_finite(outputs, inputs, op_name)
    requires_grad = any(t.requires_grad for t in inputs)
    results = tuple(Tensor(out, requires_grad=requires_grad) for out in outputs)
    tape = _active_tape.get()
    if tape is not None and requires_grad:
        tape.records.append(_Record(tuple(inputs), results, backward))
        for result in results:
            result._tape = tape
    return results


def apply(
    output: np.ndarray,
    inputs: Sequence[Tensor],
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    op_name: str = "op",
) -> Tensor:
    """Single-output form of apply_multi; backward maps dL/dout to per-input grads"""
    (result,) = apply_multi((output,), inputs, backward, op_name)
    return result


# Elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return apply(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return apply(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return apply(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(x, factor: float) -> Tensor:
    x = as_tensor(x)
    return apply(x.data * factor, (x,), lambda g: (g * factor,), "scale")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return apply(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return apply(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(values: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * values) + 1.0)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return apply(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return apply(y, (x,), lambda g: (g * y,), "exp")


def clamp(x: Tensor, low: float, high: float) -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    return apply(np.clip(x.data, low, high), (x,), lambda g: (g * inside,), "clamp")


# Reductions and shape ops

def sum_all(x: Tensor) -> Tensor:
    return apply(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape),), "sum")


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    return apply(np.asarray(x.data.mean()), (x,), lambda g: (np.broadcast_to(g / n, x.shape),), "mean")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatch(f"concat: {e}")
    boundaries = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, boundaries, axis=axis))

    return apply(data, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatch(f"stack: {e}")

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return apply(data, tensors, backward, "stack")


def select(x: Tensor, index: int, axis: int = 0) -> Tensor:
    """x[..., index, ...] along one axis"""
    data = np.take(x.data, index, axis=axis)

    def backward(g):
        full = np.zeros_like(x.data)
        slicer = [slice(None)] * x.ndim
        slicer[axis] = index
        full[tuple(slicer)] = g
        return (full,)

    return apply(data, (x,), backward, "select")


# Linear algebra

def matmul(a, b) -> Tensor:
    """a[..., k] @ b[k, n]"""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        grad_a = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        g2 = g.reshape(-1, b.shape[1])
        return grad_a, a2.T @ g2

    return apply(a.data @ b.data, (a, b), backward, "matmul")


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def embedding_lookup(table: Tensor, indices: np.ndarray) -> Tensor:
    indices = np.asarray(indices)
    if not np.issubdtype(indices.dtype, np.integer):
        raise IndexOutOfRange("embedding indices must be integers")
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise IndexOutOfRange(f"embedding index outside [0, {table.shape[0]})")

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, indices, g)
        return (full,)

    return apply(table.data[indices], (table,), backward, "embedding_lookup")


def conv1d_bank(x: Tensor, kernels: Sequence[Tensor], biases: Sequence[Tensor]) -> Tensor:
    """Valid 1-D convolutions over the sequence axis, max-pooled over time.

    x is [seq_len, embed_dim] or [batch, seq_len, embed_dim]; each kernel is
    [width, embed_dim, filters] with a [filters] bias. Returns the pooled
    features of all widths concatenated: [total_filters] or [batch, total_filters].
    """
    if len(kernels) != len(biases):
        raise ShapeMismatch("conv1d_bank: one bias per kernel required")
    unbatched = x.ndim == 2
    data = x.data[None] if unbatched else x.data
    if data.ndim != 3:
        raise ShapeMismatch(f"conv1d_bank: expected 2-D or 3-D input, got {x.shape}")
    batch, seq_len, embed_dim = data.shape

    pooled = []
    caches = []
    for kernel, bias in zip(kernels, biases):
        width, kernel_dim, filters = kernel.shape
        if kernel_dim != embed_dim or bias.shape != (filters,):
            raise ShapeMismatch(f"conv1d_bank: kernel {kernel.shape} / bias {bias.shape} vs input {x.shape}")
        if seq_len < width:
            raise ShapeMismatch(f"conv1d_bank: sequence length {seq_len} shorter than width {width}")
        windows = np.lib.stride_tricks.sliding_window_view(data, width, axis=1)  # [B, P, E, w]
        positions = windows.shape[1]
        windows = windows.transpose(0, 1, 3, 2).reshape(batch, positions, width * embed_dim)
        flat_kernel = kernel.data.reshape(width * embed_dim, filters)
        activations = windows @ flat_kernel + bias.data  # [B, P, F]
        argmax = activations.argmax(axis=1)  # [B, F]
        pooled.append(np.take_along_axis(activations, argmax[:, None, :], axis=1)[:, 0, :])
        caches.append((windows, flat_kernel, argmax, width, positions))

    out = np.concatenate(pooled, axis=-1)
    if unbatched:
        out = out[0]

    def backward(g):
        g = g[None] if unbatched else g
        grad_x = np.zeros_like(data)
        kernel_grads = []
        bias_grads = []
        offset = 0
        for (windows, flat_kernel, argmax, width, positions), kernel in zip(caches, kernels):
            filters = flat_kernel.shape[1]
            g_pool = g[:, offset:offset + filters]
            offset += filters
            g_act = np.zeros((batch, positions, filters), dtype=g.dtype)
            np.put_along_axis(g_act, argmax[:, None, :], g_pool[:, None, :], axis=1)
            kernel_grads.append(
                (windows.reshape(-1, width * embed_dim).T @ g_act.reshape(-1, filters)).reshape(kernel.shape)
            )
            bias_grads.append(g_pool.sum(axis=0))
            g_windows = (g_act @ flat_kernel.T).reshape(batch, positions, width, embed_dim)
            for j in range(width):
                grad_x[:, j:j + positions, :] += g_windows[:, :, j, :]
        grad_x = grad_x[0] if unbatched else grad_x
        return (grad_x, *kernel_grads, *bias_grads)

    return apply(out, (x, *kernels, *biases), backward, "conv1d_bank")


def lstm_cell_step(
    x: Tensor, h: Tensor, c: Tensor, params: Sequence[Tensor]
) -> Tuple[Tensor, Tensor]:
    """One LSTM step; params are (w_x [in, 4u], w_h [u, 4u], bias [4u]), gate order i, f, g, o"""
    w_x, w_h, bias = params
    units = h.shape[-1]
    if (
        w_x.shape != (x.shape[-1], 4 * units)
        or w_h.shape != (units, 4 * units)
        or bias.shape != (4 * units,)
        or c.shape != h.shape
    ):
        raise ShapeMismatch(
            f"lstm_cell_step: x {x.shape}, h {h.shape}, c {c.shape}, "
            f"w_x {w_x.shape}, w_h {w_h.shape}, bias {bias.shape}"
        )

    gates = x.data @ w_x.data + h.data @ w_h.data + bias.data
    i = _sigmoid(gates[..., :units])
    f = _sigmoid(gates[..., units:2 * units])
    g = np.tanh(gates[..., 2 * units:3 * units])
    o = _sigmoid(gates[..., 3 * units:])
    c_new = f * c.data + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c

    def backward(grad_h, grad_c):
        dc = grad_c + grad_h * o * (1.0 - tanh_c * tanh_c)
        d_gates = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c.data * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                grad_h * tanh_c * o * (1.0 - o),
            ],
            axis=-1,
        )
        flat = d_gates.reshape(-1, 4 * units)
        return (
            d_gates @ w_x.data.T,
            d_gates @ w_h.data.T,
            dc * f,
            x.data.reshape(-1, x.shape[-1]).T @ flat,
            h.data.reshape(-1, units).T @ flat,
            flat.sum(axis=0),
        )

    h_out, c_out = apply_multi((h_new, c_new), (x, h, c, w_x, w_h, bias), backward, "lstm_cell_step")
    return h_out, c_out


# Losses

def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(
    logits: Tensor, targets: Union[int, np.ndarray], weights: Optional[np.ndarray] = None
) -> Tensor:
    """Sum of (weighted) negative log-probabilities of the targets; scalar"""
    targets = np.asarray(targets)
    vocab = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ShapeMismatch(f"targets shape {targets.shape} does not match logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise IndexOutOfRange(f"target index outside [0, {vocab})")
    w = np.ones(targets.shape, dtype=logits.data.dtype) if weights is None else np.asarray(weights, dtype=logits.data.dtype)

    log_probs = log_softmax(logits.data)
    picked = np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]
    loss = -(w * picked).sum()

    def backward(g):
        grad = np.exp(log_probs)
        np.put_along_axis(grad, targets[..., None], np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (grad * (g * w)[..., None],)

    return apply(np.asarray(loss, dtype=logits.data.dtype), (logits,), backward, "softmax_cross_entropy")


def kl_gaussian_to_standard(mu: Tensor, log_sigma: Tensor) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over all elements"""
    if mu.shape != log_sigma.shape:
        raise ShapeMismatch(f"mu {mu.shape} vs log_sigma {log_sigma.shape}")
    var = np.exp(2.0 * log_sigma.data)
    value = 0.5 * np.sum(mu.data ** 2 + var - 2.0 * log_sigma.data - 1.0)
    return apply(
        np.asarray(value, dtype=mu.data.dtype),
        (mu, log_sigma),
        lambda g: (g * mu.data, g * (var - 1.0)),
        "kl_gaussian_to_standard",
    )


# Initialisation

def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


def truncated_normal_init(rng: np.random.Generator, shape: Tuple[int, ...], std: float) -> np.ndarray:
    """Normal draws re-sampled until they fall within two standard deviations"""
    values = rng.normal(0.0, std, size=shape)
    outside = np.abs(values) > 2.0 * std
    while outside.any():
        values[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(values) > 2.0 * std
    return values.astype(DTYPE)


def xavier_uniform_init(rng: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    return uniform_init(rng, shape, float(np.sqrt(6.0 / (fan_in + fan_out))))


# Optimizer

@dataclass
class AdamState:
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def zero_grad(params: Sequence[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def adam_step(params: Sequence[Parameter], state: AdamState, learning_rate: float) -> None:
    """Bias-corrected Adam update applied in place"""
    for p in params:
        m = state.first_moment.get(p.name)
        if m is not None and m.shape != p.shape:
            raise StateShapeMismatch(f"Adam moments for {p.name!r} have shape {m.shape}, parameter {p.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p in params:
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        if p.name not in state.first_moment:
            state.first_moment[p.name] = np.zeros_like(p.data)
            state.second_moment[p.name] = np.zeros_like(p.data)
        m = state.first_moment[p.name]
        v = state.second_moment[p.name]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= (learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.data.dtype)


# Gradient checking

@dataclass
class GradCheckReport:
    max_relative_error: float
    tolerance: float
    errors: List[float]  # per checked tensor

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


# relative-error floor per working precision; smaller differences count as exact
GRADIENT_FLOORS = {np.dtype(np.float64): 1e-6, np.dtype(np.float32): 1e-3}


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    tolerance: float = 1e-3,
    eps: float = 1e-6,
    seed: int = 0,
    max_elements: Optional[int] = None,
    floor: Optional[float] = None,
) -> GradCheckReport:
    """Compare tape gradients of a random projection of fn() with central differences.

    The tape runs at the tensors' own precision; the central differences are
    taken on float64 copies so 32-bit rounding does not swamp a step of eps.
    """
    rng = np.random.default_rng(seed)
    sample = fn()
    working_dtype = sample.data.dtype
    if floor is None:
        floor = GRADIENT_FLOORS.get(np.dtype(working_dtype), 1e-6)
    projection = rng.standard_normal(sample.shape).astype(working_dtype)

    def objective() -> float:
        return float(np.sum(fn().data.astype(np.float64) * projection))

    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = sum_all(mul(fn(), Tensor(projection)))
    tape.backward(loss)

    working = [t.data for t in tensors]
    for t in tensors:
        t.data = t.data.astype(np.float64)
    errors = []
    try:
        for t in tensors:
            analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
            flat_indices = np.arange(t.size)
            if max_elements is not None and t.size > max_elements:
                flat_indices = rng.choice(t.size, size=max_elements, replace=False)
            worst = 0.0
            for flat in flat_indices:
                idx = np.unravel_index(flat, t.shape)
                original = t.data[idx].copy()
                t.data[idx] = original + eps
                upper = objective()
                t.data[idx] = original - eps
                lower = objective()
                t.data[idx] = original
                numeric = (upper - lower) / (2.0 * eps)
                a = float(analytic[idx])
                worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
            errors.append(worst)
    finally:
        for t, data in zip(tensors, working):
            t.data = data

    report = GradCheckReport(max_relative_error=max(errors, default=0.0), tolerance=tolerance, errors=errors)
    logger.debug(f"Gradient check max relative error {report.max_relative_error:.3e}")
    return report


def grad_check(
    op_under_test: Callable[..., Tensor],
    input_shapes: Sequence[Tuple[int, ...]],
    tolerance: float = 1e-3,
    seed: int = 0,
    eps: float = 1e-6,
    dtype=np.float64,
    floor: Optional[float] = None,
) -> GradCheckReport:
    """Gradient-check an op at randomly seeded inputs of the given shapes and dtype"""
    rng = np.random.default_rng(seed)
    inputs = [Tensor(rng.standard_normal(shape).astype(dtype), requires_grad=True) for shape in input_shapes]
    return check_gradients(
        lambda: op_under_test(*inputs), inputs, tolerance=tolerance, eps=eps, seed=seed + 1, floor=floor
    )
