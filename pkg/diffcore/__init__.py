from .tensor import Tensor, Graph, backward, no_grad, as_tensor
from .optimizer import AdamOptimizer
from .gradcheck import gradient_check, numerical_gradient, relative_error
from . import ops

__all__ = [
    'Tensor', 'Graph', 'backward', 'no_grad', 'as_tensor',
    'AdamOptimizer', 'gradient_check', 'numerical_gradient', 'relative_error', 'ops',
]
