import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, LEARNING_RATE
from errors import ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)


class AdamOptimizer:
    """Adaptive-moment SGD over named parameter tensors.

    Moments are keyed by parameter name so the state survives a
    checkpoint round trip.
    """

    def __init__(self, learning_rate: float = LEARNING_RATE, beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moments: Dict[str, np.ndarray] = {}
        self.second_moments: Dict[str, np.ndarray] = {}
        self.skipped_steps = 0

    def step(self, params: Sequence[Tensor], grads: Optional[Sequence[np.ndarray]] = None) -> bool:
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
        if len(grads) != len(params):
            raise ShapeError(f"Got {len(grads)} gradients for {len(params)} parameters")

        for param, grad in zip(params, grads):
            if grad.shape != param.shape:
                raise ShapeError(f"Gradient shape {grad.shape} does not match parameter '{param.name}' {param.shape}")
            if not np.all(np.isfinite(grad)):
                self.skipped_steps += 1
                logger.warning(f"Non-finite gradient for parameter '{param.name}', skipping optimizer step {self.step_count + 1}")
                return False

        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        for param, grad in zip(params, grads):
            key = param.name
            m = self.first_moments.get(key)
            v = self.second_moments.get(key)
            if m is None:
                m = np.zeros_like(param.data)
                v = np.zeros_like(param.data)
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.first_moments[key] = m
            self.second_moments[key] = v
            update = self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            param.data = param.data - update
        return True

    def state_tensors(self) -> Dict[str, np.ndarray]:
        tensors = {}
        for key, value in self.first_moments.items():
            tensors[f"m/{key}"] = value
        for key, value in self.second_moments.items():
            tensors[f"v/{key}"] = value
        return tensors

    def state_metadata(self) -> Dict[str, float]:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step_count": self.step_count,
        }

    def load_state(self, metadata: Dict[str, float], tensors: Dict[str, np.ndarray]) -> None:
        self.step_count = int(metadata.get("step_count", 0))
        self.first_moments = {k[2:]: np.array(v, dtype=np.float64) for k, v in tensors.items() if k.startswith("m/")}
        self.second_moments = {k[2:]: np.array(v, dtype=np.float64) for k, v in tensors.items() if k.startswith("v/")}

    @staticmethod
    def parameter_names(params: List[Tensor]) -> List[str]:
        names = [p.name for p in params]
        if None in names or len(set(names)) != len(names):
            raise ShapeError("Optimizer parameters need unique names")
        return names
