"""Dense float64 tensors that record a reverse-mode gradient graph."""

from __future__ import annotations

import itertools
import logging
from typing import Callable, Iterable, Sequence

import numpy as np

from strata.errors import UsageError, ValidationError

logger = logging.getLogger(__name__)

# Creation order doubles as a topological order: an op's output is always
# created after its operands.
_NODE_IDS = itertools.count()

_DEBUG_FINITE = False

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


def set_debug_finite(enabled: bool) -> None:
    """Check every op output for NaN/Inf when enabled."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(enabled)


def debug_finite() -> bool:
    return _DEBUG_FINITE


class Tensor:
    __slots__ = ('data', 'grad', 'requires_grad', 'node_id', 'name', '_parents', '_backward')

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str = '',
        _parents: tuple[Tensor, ...] = (),
        _backward: BackwardFn | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_NODE_IDS)
        self.name = name
        self._parents = _parents
        self._backward = _backward
        if _DEBUG_FINITE:
            assert_finite(self)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ''
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def zero_grad(self) -> None:
        self.grad = None


def parameter(data, name: str = '') -> Tensor:
    """A trainable leaf; the data is copied so callers keep their arrays."""
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else constant(value)


def result(data: np.ndarray, parents: Iterable[Tensor], backward: BackwardFn) -> Tensor:
    """Output of an op; links into the graph only when some operand needs gradients."""
    parents = tuple(parents)
    if not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)


def assert_finite(tensor: Tensor) -> None:
    if not np.all(np.isfinite(tensor.data)):
        raise ValidationError(f"non-finite values in tensor {tensor!r}")


class GradGraph:
    """Nodes reachable from a root that participate in differentiation, ordered by node id."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> GradGraph:
        seen: dict[int, Tensor] = {}
        stack = [root]
        while stack:
            node = stack.pop()
            if node.node_id in seen or not node.requires_grad:
                continue
            seen[node.node_id] = node
            stack.extend(node._parents)
        return cls([seen[key] for key in sorted(seen)])

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def leaves(self) -> list[Tensor]:
        return [node for node in self.nodes if node.is_leaf]


def backward(loss: Tensor) -> GradGraph:
    """Accumulate d(loss)/d(leaf) into ``grad`` of every reachable trainable leaf."""
    if loss.data.ndim != 0:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    graph = GradGraph.from_root(loss)
    if not graph.nodes:
        return graph

    pending: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        upstream = pending.pop(node.node_id, None)
        if upstream is None:
            continue
        if node.is_leaf:
            node.grad = upstream.copy() if node.grad is None else node.grad + upstream
            continue
        for parent, contribution in zip(node._parents, node._backward(upstream)):
            if contribution is None or not parent.requires_grad:
                continue
            previous = pending.get(parent.node_id)
            pending[parent.node_id] = (
                np.array(contribution, dtype=np.float64, copy=True)
                if previous is None else previous + contribution
            )
    return graph


def zero_grads(params: Iterable[Tensor]) -> None:
    for param in params:
        param.zero_grad()
