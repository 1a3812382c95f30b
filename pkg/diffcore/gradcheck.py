from typing import Callable, Dict, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad

GRADCHECK_STEP = 1e-4


def numerical_gradient(loss_fn: Callable[[], Tensor], param: Tensor, step: float = GRADCHECK_STEP) -> np.ndarray:
    """Central finite differences of a scalar loss with respect to `param`."""
    grad = np.zeros_like(param.data)
    with no_grad():
        for index in np.ndindex(*param.data.shape):
            original = param.data[index]
            param.data[index] = original + step
            upper = loss_fn().item()
            param.data[index] = original - step
            lower = loss_fn().item()
            param.data[index] = original
            grad[index] = (upper - lower) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def gradient_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = GRADCHECK_STEP) -> Dict[str, float]:
    """Compare reverse-mode gradients against central differences.

    Returns the relative error per parameter, keyed by name (or position).
    """
    for param in params:
        param.zero_grad()
    backward(loss_fn())
    errors = {}
    for index, param in enumerate(params):
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)
        numeric = numerical_gradient(loss_fn, param, step)
        errors[param.name or str(index)] = relative_error(analytic, numeric)
    return errors
