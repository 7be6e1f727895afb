"""Dense-network kernel: parameter containers, layer forward/backward
passes, initialization, and a finite-difference gradient checker.

All layer math is dtype-preserving; training runs in float32 while the
gradient checker copies parameters to float64 for the central-difference
comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import GatedClipError, InvariantError
from .rng import derive_rng


@dataclass
class ParamTensor:
    """A named trainable array paired with its gradient buffer."""

    name: str
    values: np.ndarray
    grad: np.ndarray

    @property
    def size(self) -> int:
        return self.values.size


class ParameterSet:
    """Ordered collection of ParamTensors.

    Insertion order is fixed and defines both the optimizer-state alignment
    and the checkpoint layout, so it must not depend on anything but the
    architecture descriptor.
    """

    def __init__(self, tensors: Iterable[ParamTensor] = ()):
        self._tensors: dict[str, ParamTensor] = {}
        for t in tensors:
            self.add_tensor(t)

    def add(self, name: str, values: np.ndarray) -> ParamTensor:
        return self.add_tensor(ParamTensor(name, values, np.zeros_like(values)))

    def add_tensor(self, tensor: ParamTensor) -> ParamTensor:
        if tensor.name in self._tensors:
            raise InvariantError(f"duplicate parameter name {tensor.name!r}")
        if tensor.grad.shape != tensor.values.shape:
            raise InvariantError(f"{tensor.name}: grad shape != values shape")
        self._tensors[tensor.name] = tensor
        return tensor

    def __getitem__(self, name: str) -> ParamTensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[ParamTensor]:
        return iter(self._tensors.values())

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    @property
    def n_params(self) -> int:
        return sum(t.size for t in self)

    def zero_grad(self) -> None:
        for t in self:
            t.grad[...] = 0

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            ParamTensor(t.name, t.values.copy(), t.grad.copy()) for t in self
        )

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet(
            ParamTensor(t.name, t.values.astype(dtype), t.grad.astype(dtype))
            for t in self
        )


@dataclass
class DropoutMask:
    """Keep/drop pattern recorded by a train-mode dropout application."""

    mask: np.ndarray  # 1.0 where kept, 0.0 where dropped
    rate: float

    @property
    def scale(self) -> float:
        return 1.0 / (1.0 - self.rate) if self.rate > 0 else 1.0


def linear_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y[n] = W @ x[n] + b for a batch of rows."""
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ValueError(
            f"linear shape mismatch: x{x.shape} W{W.shape} b{b.shape}"
        )
    return x @ W.T + b


def linear_backward(
    grad_y: np.ndarray, x: np.ndarray, W: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a linear layer: (grad_x, grad_W, grad_b)."""
    if grad_y.shape != (x.shape[0], W.shape[0]):
        raise ValueError(
            f"linear backward shape mismatch: grad_y{grad_y.shape} x{x.shape} W{W.shape}"
        )
    grad_x = grad_y @ W
    grad_W = grad_y.T @ x
    grad_b = grad_y.sum(axis=0)
    return grad_x, grad_W, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_y: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Subgradient at exactly 0 is taken as 0.
    return grad_y * (x > 0)


def dropout_forward(
    x: np.ndarray,
    rate: float,
    mode: str,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, DropoutMask]:
    """Inverted dropout: kept elements are scaled by 1/(1-rate) at train
    time so eval mode is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x, DropoutMask(np.ones_like(x), 0.0)
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype)
    y = x * mask * x.dtype.type(1.0 / (1.0 - rate))
    return y, DropoutMask(mask, rate)


def dropout_backward(grad_y: np.ndarray, mask: DropoutMask) -> np.ndarray:
    return grad_y * mask.mask * grad_y.dtype.type(mask.scale)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function; saturates cleanly at large |x|."""
    x = np.asarray(x)
    z = np.exp(-np.abs(x))  # in (0, 1], never overflows
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


@dataclass(frozen=True)
class LayerSpec:
    """One linear layer in an architecture descriptor.

    ``feeds`` names the nonlinearity the output flows into ("relu",
    "sigmoid" or "linear") and selects the init scale.
    """

    weight: str
    bias: str
    fan_out: int
    fan_in: int
    feeds: str = "relu"


def init_params(arch: Sequence[LayerSpec], seed: int) -> ParameterSet:
    """He-scaled weights into ReLU, Xavier-scaled into sigmoid/linear
    outputs, zero biases. Deterministic in the seed; draws happen in
    descriptor order."""
    rng = derive_rng(seed, "init")
    params = ParameterSet()
    for layer in arch:
        if layer.feeds == "relu":
            std = np.sqrt(2.0 / layer.fan_in)
        elif layer.feeds in ("sigmoid", "linear"):
            std = np.sqrt(1.0 / layer.fan_in)
        else:
            raise ValueError(f"unknown activation target {layer.feeds!r}")
        W = (rng.standard_normal((layer.fan_out, layer.fan_in)) * std).astype(np.float32)
        params.add(layer.weight, W)
        params.add(layer.bias, np.zeros(layer.fan_out, dtype=np.float32))
    return params


def grad_check(
    loss_fn: Callable[[ParameterSet], float],
    params: ParameterSet,
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` must evaluate the loss for the given parameters and populate
    their grad buffers (a combined forward + backward). The check runs on a
    float64 copy of the parameters and returns the maximum relative error
    with denominator max(|analytic|, |numeric|, 1e-12).
    """
    p64 = params.astype(np.float64)
    p64.zero_grad()
    base = float(loss_fn(p64))
    if not np.isfinite(base):
        raise GatedClipError(f"grad_check: non-finite loss {base}")
    analytic = {t.name: t.grad.copy() for t in p64}

    worst = 0.0
    for tensor in p64:
        flat = tensor.values.reshape(-1)
        aflat = analytic[tensor.name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lo_hi = float(loss_fn(p64))
            flat[i] = orig - eps
            lo_lo = float(loss_fn(p64))
            flat[i] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * eps)
            denom = max(abs(aflat[i]), abs(numeric), 1e-12)
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst
