from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from errors import ShapeError

_RECORDING = [True]


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference paths)."""
    previous = _RECORDING[0]
    _RECORDING[0] = False
    try:
        yield
    finally:
        _RECORDING[0] = previous


def is_recording() -> bool:
    return _RECORDING[0]


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Row-major float64 array with an optional reverse-mode record.

    `data` is always a private copy, so mutating one tensor never alters a
    tensor recorded as its input.
    """

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64, copy=True)
        if self.data.size == 0:
            raise ShapeError(f"Tensor must have positive extents, got shape {self.data.shape}")
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self.parents: Tuple["Tensor", ...] = ()
        self.backward_fn: Optional[BackwardFn] = None
        self.op = "leaf"

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward_fn: BackwardFn, op: str) -> "Tensor":
        out = cls(data)
        if is_recording() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.parents = tuple(parents)
            out.backward_fn = backward_fn
            out.op = op
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __add__(self, other):
        from . import ops
        return ops.add(self, as_tensor(other))

    def __radd__(self, other):
        from . import ops
        return ops.add(as_tensor(other), self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, as_tensor(other))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(as_tensor(other), self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, as_tensor(other))

    def __rmul__(self, other):
        from . import ops
        return ops.mul(as_tensor(other), self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, as_tensor(other))


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Graph:
    """Directed acyclic record of the operations that produced `output`.

    Nodes are keyed by tensor identity; edges run from an input to the
    tensor computed from it.
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.dag = nx.DiGraph()
        self.tensors: Dict[int, Tensor] = {}
        self._trace(output)
        if not nx.is_directed_acyclic_graph(self.dag):
            raise ShapeError("Recorded computation is not acyclic")

    def _trace(self, output: Tensor) -> None:
        stack = [output]
        self.tensors[id(output)] = output
        self.dag.add_node(id(output))
        while stack:
            node = stack.pop()
            for parent in node.parents:
                if id(parent) not in self.tensors:
                    self.tensors[id(parent)] = parent
                    stack.append(parent)
                self.dag.add_edge(id(parent), id(node))

    def reverse_order(self) -> List[Tensor]:
        return [self.tensors[key] for key in reversed(list(nx.topological_sort(self.dag)))]

    def parameters(self) -> List[Tensor]:
        return [t for t in self.tensors.values() if t.is_leaf and t.requires_grad]

    def __len__(self) -> int:
        return self.dag.number_of_nodes()


def backward(output: Tensor, graph: Optional[Graph] = None) -> Dict[int, np.ndarray]:
    """Reverse-mode pass from a scalar output.

    Returns gradient buffers keyed by parameter identity and stores each
    leaf's gradient in its `.grad` (accumulating into existing buffers).
    """
    if output.data.size != 1:
        raise ShapeError(f"backward() needs a scalar output, got shape {output.shape}")
    if graph is None:
        graph = Graph(output)

    buffers: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for node in graph.reverse_order():
        upstream = buffers.get(id(node))
        if upstream is None or node.backward_fn is None:
            continue
        parent_grads = node.backward_fn(upstream)
        for parent, grad in zip(node.parents, parent_grads):
            if grad is None or not parent.requires_grad:
                continue
            if grad.shape != parent.shape:
                raise ShapeError(f"Gradient shape {grad.shape} does not match input shape {parent.shape} in op '{node.op}'")
            key = id(parent)
            if key in buffers:
                buffers[key] = buffers[key] + grad
            else:
                buffers[key] = grad

    leaf_grads = {}
    for param in graph.parameters():
        grad = buffers.get(id(param))
        if grad is None:
            grad = np.zeros_like(param.data)
        param.grad = grad.copy() if param.grad is None else param.grad + grad
        leaf_grads[id(param)] = grad
    return leaf_grads
