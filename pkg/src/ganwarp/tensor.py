"""Minimal reverse-mode autodiff over numpy arrays.

A ``Tape`` records every op whose output needs gradients, in execution
order. ``Tape.backward`` walks the records in reverse, so no explicit
topological sort is needed. Ops outside any active tape run as plain
numpy (inference mode).
"""

from __future__ import annotations

import numpy as np

_STACK: list["Tape"] = []


def active_tape():
    return _STACK[-1] if _STACK else None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # operator sugar; the heavy lifting lives in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


class Tape:
    """Context manager collecting op records for one backward pass."""

    __slots__ = ("_nodes",)

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        _STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _STACK.pop()
        assert popped is self
        return False

    def record(self, out, parents, bwd):
        self._nodes.append((out, parents, bwd))

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss):
        """Accumulate d(loss)/d(leaf) into .grad of every grad-enabled leaf."""
        if loss.data.ndim != 0:
            raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        produced = {id(out) for out, _, _ in self._nodes}
        for out, parents, bwd in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for parent, pg in zip(parents, bwd(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        # whatever is left belongs to leaves (never produced by a node)
        for out, parents, _ in self._nodes:
            for parent in parents:
                key = id(parent)
                if key in grads and key not in produced:
                    g = grads.pop(key)
                    parent.grad = g if parent.grad is None else parent.grad + g
        if id(loss) in grads and id(loss) not in produced:
            loss.grad = grads[id(loss)]


def record(out, parents, bwd):
    """Attach a backward rule if a tape is active and any parent needs grads."""
    needs = any(p.requires_grad for p in parents)
    out.requires_grad = needs
    tape = active_tape()
    if needs and tape is not None:
        tape.record(out, parents, bwd)
    return out
