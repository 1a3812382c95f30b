"""Invertible layers of one flow step.

Every layer maps a (t, d) frame matrix to a (t, d) frame matrix and reports
its log-determinant per frame, so the model can sum them into the exact
change-of-variables correction.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from diffcore import Tensor, no_grad, ops
from errors import ConditioningError, FlowError, ShapeError

logger = logging.getLogger(__name__)


class FlowLayer:
    name = "layer"

    def parameters(self) -> List[Tensor]:
        raise NotImplementedError

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
        raise NotImplementedError

    def inverse(self, y: np.ndarray, cond: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray, cond: Optional[np.ndarray] = None, reverse: bool = False) -> Tuple[np.ndarray, float]:
        """Apply the layer to a plain array; returns (output, total logdet).

        With reverse=True the inverse is applied and the logdet is the
        log-determinant of the inverse map.
        """
        x = np.asarray(x, dtype=np.float64)
        with no_grad():
            if not reverse:
                cond_tensor = None if cond is None else Tensor(cond)
                y, logdet = self.forward(Tensor(x), cond_tensor)
                return y.numpy(), float(logdet.data.sum())
            out = self.inverse(x, cond)
            _, logdet = self.forward(Tensor(out), None if cond is None else Tensor(cond))
            return out, -float(logdet.data.sum())


def _per_frame(value: Tensor, frames: int) -> Tensor:
    return ops.mul(Tensor(np.ones(frames)), value)


class ActNorm(FlowLayer):
    def __init__(self, channels: int, name: str = "actnorm"):
        self.name = name
        self.channels = channels
        self.scale = Tensor(np.ones(channels), requires_grad=True, name=f"{name}.scale")
        self.bias = Tensor(np.zeros(channels), requires_grad=True, name=f"{name}.bias")
        self.initialized = False

    def parameters(self) -> List[Tensor]:
        return [self.scale, self.bias]

    def set_parameters(self, scale, bias) -> None:
        scale = np.asarray(scale, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if scale.shape != (self.channels,) or bias.shape != (self.channels,):
            raise ShapeError(f"{self.name}: expected ({self.channels},) scale/bias, got {scale.shape} and {bias.shape}")
        self.scale.data = scale.copy()
        self.bias.data = bias.copy()
        self._check_scale()

    def _check_scale(self) -> None:
        if np.any(self.scale.data == 0):
            raise FlowError(f"{self.name}: zero scale makes the layer non-invertible")

    def initialize(self, frames: np.ndarray) -> None:
        """Data-dependent init: per-channel zero mean, unit std on `frames`."""
        frames = np.asarray(frames, dtype=np.float64)
        mean = frames.mean(axis=0)
        std = frames.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        self.scale.data = 1.0 / std
        self.bias.data = -mean / std
        self.initialized = True

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
        self._check_scale()
        y = ops.add(ops.mul(x, self.scale), self.bias)
        return y, _per_frame(ops.sum(ops.log_abs(self.scale)), x.shape[0])

    def inverse(self, y: np.ndarray, cond: Optional[np.ndarray] = None) -> np.ndarray:
        self._check_scale()
        return (np.asarray(y) - self.bias.data) / self.scale.data


class InvertibleLinear(FlowLayer):
    """Per-frame channel mixing W = P L (U + diag(sign * exp(log_diag))).

    P is a fixed permutation, L unit lower-triangular, U strictly upper
    triangular. |det W| comes from the diagonal factor alone.
    """

    def __init__(self, channels: int, name: str = "linear", matrix: Optional[np.ndarray] = None):
        self.name = name
        self.channels = channels
        if matrix is None:
            matrix = np.eye(channels)
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (channels, channels):
            raise ShapeError(f"{name}: expected a ({channels}, {channels}) matrix, got {matrix.shape}")
        permutation, lower, upper = scipy.linalg.lu(matrix)
        diagonal = np.diag(upper)
        if np.any(np.abs(diagonal) < 1e-12) or not np.all(np.isfinite(matrix)):
            raise FlowError(f"{name}: singular channel map (det W = 0)")

        self.permutation = permutation
        self.sign = np.sign(diagonal)
        self.lower_mask = np.tril(np.ones((channels, channels)), -1)
        self.upper_mask = np.triu(np.ones((channels, channels)), 1)
        self.lower = Tensor(np.tril(lower, -1), requires_grad=True, name=f"{name}.lower")
        self.upper = Tensor(np.triu(upper, 1), requires_grad=True, name=f"{name}.upper")
        self.log_diag = Tensor(np.log(np.abs(diagonal)), requires_grad=True, name=f"{name}.log_diag")

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, name: str = "linear") -> "InvertibleLinear":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix.shape[0], name=name, matrix=matrix)

    def parameters(self) -> List[Tensor]:
        return [self.lower, self.upper, self.log_diag]

    def weight_tensor(self) -> Tensor:
        eye = Tensor(np.eye(self.channels))
        lower = ops.add(ops.mul(self.lower, Tensor(self.lower_mask)), eye)
        diagonal = ops.mul(Tensor(self.sign), ops.exp(self.log_diag))
        upper = ops.add(ops.mul(self.upper, Tensor(self.upper_mask)), ops.mul(eye, diagonal))
        return ops.matmul(Tensor(self.permutation), ops.matmul(lower, upper))

    def weight(self) -> np.ndarray:
        with no_grad():
            return self.weight_tensor().numpy()

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
        y = ops.matmul(x, ops.transpose(self.weight_tensor()))
        return y, _per_frame(ops.sum(self.log_diag), x.shape[0])

    def inverse(self, y: np.ndarray, cond: Optional[np.ndarray] = None) -> np.ndarray:
        return np.linalg.solve(self.weight(), np.asarray(y).T).T


class AffineCoupling(FlowLayer):
    """Conditional affine coupling over channel halves.

    net(x_a, cond) -> (log_s, shift); y_b = exp(log_s) * x_b + shift, y_a = x_a.
    The net is conv(k) -> + cond projection -> tanh -> conv(k) with the last
    conv zero-initialized, so a fresh layer is the identity. log_s is soft
    clamped to (-clamp, clamp).
    """

    def __init__(self, channels: int, cond_channels: int, hidden_channels: int, kernel_size: int,
                 log_scale_clamp: float, swap: bool, name: str = "coupling",
                 rng: Optional[np.random.Generator] = None):
        if channels < 2 or channels % 2:
            raise ShapeError(f"{name}: channel count must be even and >= 2, got {channels}")
        if kernel_size % 2 != 1:
            raise ShapeError(f"{name}: kernel size must be odd, got {kernel_size}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.channels = channels
        self.half = channels // 2
        self.cond_channels = cond_channels
        self.hidden_channels = hidden_channels
        self.kernel_size = kernel_size
        self.log_scale_clamp = log_scale_clamp
        self.swap = swap

        fan_in = kernel_size * self.half
        self.in_weight = Tensor(rng.normal(0.0, 1.0 / np.sqrt(fan_in), (kernel_size, self.half, hidden_channels)),
                                requires_grad=True, name=f"{name}.in_weight")
        self.in_bias = Tensor(np.zeros(hidden_channels), requires_grad=True, name=f"{name}.in_bias")
        self.cond_weight = Tensor(rng.normal(0.0, 1.0 / np.sqrt(max(cond_channels, 1)), (cond_channels, hidden_channels)),
                                  requires_grad=True, name=f"{name}.cond_weight")
        self.out_weight = Tensor(np.zeros((kernel_size, hidden_channels, 2 * self.half)),
                                 requires_grad=True, name=f"{name}.out_weight")
        self.out_bias = Tensor(np.zeros(2 * self.half), requires_grad=True, name=f"{name}.out_bias")

    def parameters(self) -> List[Tensor]:
        return [self.in_weight, self.in_bias, self.cond_weight, self.out_weight, self.out_bias]

    def _check_cond(self, frames: int, cond_shape: Tuple[int, ...]) -> None:
        if len(cond_shape) != 2 or cond_shape[0] != frames or cond_shape[1] != self.cond_channels:
            raise ConditioningError(
                f"{self.name}: conditioning must be ({frames}, {self.cond_channels}), got {cond_shape}")

    def _bounds(self) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        first, second = (0, self.half), (self.half, self.channels)
        return (second, first) if self.swap else (first, second)

    def coupling_net(self, x_a: Tensor, cond: Tensor) -> Tuple[Tensor, Tensor]:
        hidden = ops.add(ops.conv1d(x_a, self.in_weight, self.in_bias), ops.matmul(cond, self.cond_weight))
        out = ops.conv1d(ops.tanh(hidden), self.out_weight, self.out_bias)
        raw = ops.slice_channels(out, 0, self.half)
        shift = ops.slice_channels(out, self.half, 2 * self.half)
        if self.log_scale_clamp > 0:
            raw = ops.scale(ops.tanh(ops.scale(raw, 1.0 / self.log_scale_clamp)), self.log_scale_clamp)
        return raw, shift

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
        if cond is None:
            raise ConditioningError(f"{self.name}: conditioning frames are required")
        self._check_cond(x.shape[0], cond.shape)
        (a_start, a_stop), (b_start, b_stop) = self._bounds()
        x_a = ops.slice_channels(x, a_start, a_stop)
        x_b = ops.slice_channels(x, b_start, b_stop)
        log_s, shift = self.coupling_net(x_a, cond)
        y_b = ops.add(ops.mul(ops.exp(log_s), x_b), shift)
        y = ops.concat_channels([y_b, x_a] if self.swap else [x_a, y_b])
        return y, ops.row_sum(log_s)

    def inverse(self, y: np.ndarray, cond: Optional[np.ndarray] = None) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if cond is None:
            raise ConditioningError(f"{self.name}: conditioning frames are required")
        cond = np.asarray(cond, dtype=np.float64)
        self._check_cond(y.shape[0], cond.shape)
        (a_start, a_stop), (b_start, b_stop) = self._bounds()
        y_a = y[:, a_start:a_stop]
        with no_grad():
            log_s, shift = self.coupling_net(Tensor(y_a), Tensor(cond))
        x = y.copy()
        x[:, b_start:b_stop] = (y[:, b_start:b_stop] - shift.data) * np.exp(-log_s.data)
        return x
