import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import (
    FLOW_STEPS, HIDDEN_CHANNELS, KERNEL_SIZE, LOG_SCALE_CLAMP, SEED,
)
from conditioning import ConditionSet, frame_condition_matrix
from diffcore import Tensor, no_grad, ops
from errors import FlowError, ShapeError
from .flow_layers import ActNorm, AffineCoupling, InvertibleLinear

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))

Condition = Union[ConditionSet, np.ndarray]


class FlowStep:
    def __init__(self, index: int, channels: int, cond_channels: int, hidden_channels: int,
                 kernel_size: int, log_scale_clamp: float, rng: np.random.Generator):
        prefix = f"step{index}"
        self.actnorm = ActNorm(channels, name=f"{prefix}.actnorm")
        self.linear = InvertibleLinear(channels, name=f"{prefix}.linear")
        # alternate which half is transformed
        self.coupling = AffineCoupling(channels, cond_channels, hidden_channels, kernel_size,
                                       log_scale_clamp, swap=bool(index % 2), name=f"{prefix}.coupling", rng=rng)

    @property
    def layers(self):
        return [self.actnorm, self.linear, self.coupling]

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x: Tensor, cond: Tensor) -> Tuple[Tensor, Tensor]:
        x, logdet_norm = self.actnorm.forward(x)
        x, logdet_mix = self.linear.forward(x)
        x, logdet_couple = self.coupling.forward(x, cond)
        return x, ops.add(ops.add(logdet_norm, logdet_mix), logdet_couple)

    def inverse(self, y: np.ndarray, cond: np.ndarray) -> np.ndarray:
        y = self.coupling.inverse(y, cond)
        y = self.linear.inverse(y)
        return self.actnorm.inverse(y)


class FlowModel:
    """Conditional normalizing flow m <-> z over (frames, mel_bins) matrices.

    K steps of actnorm -> invertible linear -> affine coupling. A freshly
    built model is the identity map.
    """

    def __init__(self, mel_bins: int, cond_channels: int, flow_steps: int = FLOW_STEPS,
                 hidden_channels: int = HIDDEN_CHANNELS, kernel_size: int = KERNEL_SIZE,
                 log_scale_clamp: float = LOG_SCALE_CLAMP, seed: int = SEED):
        if mel_bins < 2 or mel_bins % 2:
            raise ShapeError(f"mel_bins must be even and >= 2, got {mel_bins}")
        if cond_channels < 1:
            raise ShapeError(f"cond_channels must be >= 1, got {cond_channels}")
        if flow_steps < 1:
            raise FlowError(f"flow_steps must be >= 1, got {flow_steps}")
        self.mel_bins = mel_bins
        self.cond_channels = cond_channels
        self.flow_steps = flow_steps
        self.hidden_channels = hidden_channels
        self.kernel_size = kernel_size
        self.log_scale_clamp = log_scale_clamp
        self.seed = seed

        rng = np.random.default_rng(seed)
        self.steps = [
            FlowStep(i, mel_bins, cond_channels, hidden_channels, kernel_size, log_scale_clamp, rng)
            for i in range(flow_steps)
        ]

    def hyperparameters(self) -> Dict[str, float]:
        return {
            "mel_bins": self.mel_bins,
            "cond_channels": self.cond_channels,
            "flow_steps": self.flow_steps,
            "hidden_channels": self.hidden_channels,
            "kernel_size": self.kernel_size,
            "log_scale_clamp": self.log_scale_clamp,
            "seed": self.seed,
        }

    def parameters(self) -> List[Tensor]:
        return [p for step in self.steps for p in step.parameters()]

    def named_parameters(self) -> Dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}

    @property
    def actnorm_initialized(self) -> bool:
        return all(step.actnorm.initialized for step in self.steps)

    def _cond_matrix(self, cond: Condition, frames: int) -> np.ndarray:
        if isinstance(cond, ConditionSet):
            cond = frame_condition_matrix(cond)
        cond = np.asarray(cond, dtype=np.float64)
        if cond.ndim != 2 or cond.shape[0] != frames or cond.shape[1] != self.cond_channels:
            raise ShapeError(f"Conditioning must be ({frames}, {self.cond_channels}), got {cond.shape}")
        return cond

    def _check_frames(self, m: np.ndarray, label: str) -> np.ndarray:
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] != self.mel_bins:
            raise ShapeError(f"{label} must be (frames, {self.mel_bins}), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise FlowError(f"{label} contains non-finite values")
        return m

    def initialize_actnorm(self, batch: Sequence[Tuple[np.ndarray, Condition]]) -> None:
        """Data-dependent actnorm init, step by step, on one batch."""
        if not batch:
            raise ShapeError("Actnorm initialization needs at least one utterance")
        activations = []
        for mel, cond in batch:
            mel = self._check_frames(mel, "mel")
            activations.append((mel, self._cond_matrix(cond, mel.shape[0])))
        with no_grad():
            for step in self.steps:
                step.actnorm.initialize(np.concatenate([a for a, _ in activations], axis=0))
                activations = [(step.forward(Tensor(a), Tensor(c))[0].data, c) for a, c in activations]
        logger.info(f"Initialized actnorm statistics from {len(batch)} utterances")

    def forward_frames(self, m: np.ndarray, cond: Condition) -> Tuple[Tensor, Tensor]:
        """(z, per-frame logdet) with the graph recorded when enabled."""
        m = self._check_frames(m, "mel")
        cond_tensor = Tensor(self._cond_matrix(cond, m.shape[0]))
        x = Tensor(m)
        logdet = None
        for step in self.steps:
            x, step_logdet = step.forward(x, cond_tensor)
            logdet = step_logdet if logdet is None else ops.add(logdet, step_logdet)
        return x, logdet

    def forward(self, m: np.ndarray, cond: Condition) -> Tuple[Tensor, Tensor]:
        z, logdet = self.forward_frames(m, cond)
        return z, ops.sum(logdet)

    def inverse(self, z: np.ndarray, cond: Condition) -> np.ndarray:
        z = self._check_frames(z, "latent")
        cond = self._cond_matrix(cond, z.shape[0])
        x = z
        for step in reversed(self.steps):
            x = step.inverse(x, cond)
        if not np.all(np.isfinite(x)):
            raise FlowError("Inverse produced non-finite frames")
        return x

    def nll(self, m: np.ndarray, cond: Condition) -> Tensor:
        """Total negative log-likelihood of one utterance, in nats."""
        z, logdet = self.forward(m, cond)
        elements = z.data.size
        prior = ops.scale(ops.sum(ops.square(z)), 0.5)
        return ops.add_scalar(ops.sub(prior, logdet), 0.5 * elements * LOG_2PI)

    def nll_per_element(self, m: np.ndarray, cond: Condition) -> float:
        with no_grad():
            total = self.nll(m, cond)
        return total.item() / np.asarray(m).size

    def frame_log_likelihood(self, m: np.ndarray, cond: Condition) -> np.ndarray:
        """log p(m_t | cond) per frame; exact when the kernel size is 1."""
        with no_grad():
            z, logdet = self.forward_frames(m, cond)
        log_prior = -0.5 * (z.data ** 2).sum(axis=1) - 0.5 * self.mel_bins * LOG_2PI
        return log_prior + logdet.data

    def randomize(self, seed: int, scale: float = 0.1) -> "FlowModel":
        """Perturb every parameter so the model is no longer the identity.

        Weight matrices get `scale / sqrt(fan_in)` noise, with fan_in the
        product of all but the output axis, so a layer's output moves by
        about `scale` whatever its width.
        """
        rng = np.random.default_rng(seed)
        for step in self.steps:
            step.actnorm.scale.data = np.exp(scale * rng.standard_normal(self.mel_bins))
            step.actnorm.bias.data = scale * rng.standard_normal(self.mel_bins)
            step.actnorm.initialized = True
            for param in step.linear.parameters() + step.coupling.parameters():
                fan_in = int(np.prod(param.shape[:-1])) if len(param.shape) > 1 else 1
                param.data = param.data + scale / np.sqrt(fan_in) * rng.standard_normal(param.shape)
        return self

    def state_tensors(self) -> Dict[str, np.ndarray]:
        tensors = {name: param.data for name, param in self.named_parameters().items()}
        for step_index, step in enumerate(self.steps):
            tensors[f"step{step_index}.linear.permutation"] = step.linear.permutation
            tensors[f"step{step_index}.linear.sign"] = step.linear.sign
        return tensors

    def load_state(self, tensors: Dict[str, np.ndarray], actnorm_initialized: bool = True) -> None:
        named = self.named_parameters()
        missing = [name for name in named if name not in tensors]
        if missing:
            raise ShapeError(f"Checkpoint is missing flow parameters: {missing[:3]}")
        for name, param in named.items():
            value = np.asarray(tensors[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ShapeError(f"Parameter '{name}' has shape {value.shape}, expected {param.shape}")
            param.data = value.copy()
        for step_index, step in enumerate(self.steps):
            step.linear.permutation = np.asarray(tensors[f"step{step_index}.linear.permutation"], dtype=np.float64)
            step.linear.sign = np.asarray(tensors[f"step{step_index}.linear.sign"], dtype=np.float64)
            step.actnorm.initialized = actnorm_initialized
            step.actnorm.set_parameters(step.actnorm.scale.data, step.actnorm.bias.data)

    @classmethod
    def from_state(cls, hyperparameters: Dict[str, float], tensors: Dict[str, np.ndarray],
                   actnorm_initialized: bool = True) -> "FlowModel":
        model = cls(
            mel_bins=int(hyperparameters["mel_bins"]),
            cond_channels=int(hyperparameters["cond_channels"]),
            flow_steps=int(hyperparameters["flow_steps"]),
            hidden_channels=int(hyperparameters["hidden_channels"]),
            kernel_size=int(hyperparameters["kernel_size"]),
            log_scale_clamp=float(hyperparameters["log_scale_clamp"]),
            seed=int(hyperparameters.get("seed", SEED)),
        )
        model.load_state(tensors, actnorm_initialized)
        return model


def flow_forward(model: FlowModel, m: np.ndarray, cond: Condition) -> Tuple[np.ndarray, float]:
    with no_grad():
        z, logdet = model.forward(m, cond)
    return z.numpy(), logdet.item()


def flow_inverse(model: FlowModel, z: np.ndarray, cond: Condition) -> np.ndarray:
    return model.inverse(z, cond)


def nll(model: FlowModel, m: np.ndarray, cond: Condition) -> float:
    with no_grad():
        return model.nll(m, cond).item()
