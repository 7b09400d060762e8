"""Named trainable parameters, partitioned into the two optimization groups.

Model weights live in group ``"theta"``; architecture weights in group
``"alpha"``.  Every parameter is a leaf tensor with a pre-allocated zero
gradient, so a backward pass leaves unreachable parameters at exactly zero
and reachable ones with accumulated gradients.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

GROUPS = ("theta", "alpha")


class Parameter:
    """A named leaf tensor belonging to one optimization group."""

    __slots__ = ("name", "tensor", "group")

    def __init__(self, name, tensor, group):
        if group not in GROUPS:
            raise ValueError(f"unknown parameter group {group!r}")
        self.name = name
        self.tensor = tensor
        self.group = group
        tensor.requires_grad = True
        tensor.group = group
        tensor.zero_grad()

    @property
    def data(self):
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape}, group={self.group!r})"


class ParameterStore:
    """Name-unique registry of parameters for one model instance."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Parameter] = {}

    def add(self, name, data, group="theta"):
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        tensor = Tensor(np.asarray(data, dtype=self.dtype))
        param = Parameter(name, tensor, group)
        self._params[name] = param
        return tensor

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def group(self, group):
        return [p for p in self._params.values() if p.group == group]

    def zero_grad(self, group=None):
        for p in self._params.values():
            if group is None or p.group == group:
                p.tensor.zero_grad()

    def n_elements(self, group=None):
        return sum(p.data.size for p in self._params.values()
                   if group is None or p.group == group)

    def state_dict(self):
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state(self, state):
        """Overwrite parameter values in place from a name -> array mapping."""
        missing = [n for n in self._params if n not in state]
        if missing:
            raise KeyError(f"state is missing parameters: {missing}")
        for name, param in self._params.items():
            arr = np.asarray(state[name], dtype=self.dtype)
            if arr.shape != param.data.shape:
                raise ValueError(f"parameter {name!r}: stored shape {arr.shape} "
                                 f"!= model shape {param.data.shape}")
            param.tensor.data = arr.copy()
