"""Parameter tensors and weight initialization."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError
from ..prng import Prng


class Tensor:
    """A dense float64 array with an optional gradient buffer.

    Used for trainable parameters; activations flowing through the network
    are plain numpy arrays.  ``grad`` always has the same shape as ``data``
    once backward has run.
    """

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray, grad: np.ndarray | None = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if grad is not None:
            grad = np.ascontiguousarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ValueError(
                    f"grad shape {grad.shape} != data shape {self.data.shape}"
                )
        self.grad = grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("tensor contains NaN or Inf")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def he_init(shape: tuple[int, ...], fan_in: int, rng: Prng) -> Tensor:
    """He-normal initialization: zero-mean Gaussian with variance 2/fan_in.

    Rank-1 shapes are biases and come back as exact zeros (the rng is not
    consumed for them).
    """
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    shape = tuple(int(d) for d in shape)
    if any(d <= 0 for d in shape):
        raise ValueError(f"dimensions must be positive, got {shape}")
    if len(shape) == 1:
        return Tensor(np.zeros(shape, dtype=np.float64))
    n = int(np.prod(shape))
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.fill_gaussian(n).reshape(shape) * std)
