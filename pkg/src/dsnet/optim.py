"""Parameter store and the Adam update with coupled L2 weight decay."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import ContractViolation, NonFiniteError
from .tensor import Tensor


class ParamStore:
    """Named trainable tensors plus Adam moment estimates.

    The step counter is shared by all parameters, so every :func:`adam_step`
    must update the full set.
    """

    def __init__(self, params: Mapping[str, Tensor] | None = None):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        for name, tensor in (params or {}).items():
            self.add(name, tensor)

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self.params:
            raise ContractViolation(f"duplicate parameter name {name!r}")
        tensor.name = name
        tensor.requires_grad = True
        self.params[name] = tensor
        self.m[name] = np.zeros(tensor.shape)
        self.v[name] = np.zeros(tensor.shape)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return self.params.items()

    def count(self) -> int:
        """Total number of scalar parameters."""
        return sum(t.size for t in self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]):
        missing = sorted(set(self.params) - set(state))
        extra = sorted(set(state) - set(self.params))
        if missing or extra:
            raise ContractViolation(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, arr in state.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != self.params[name].shape:
                raise ContractViolation(f"{name}: shape {arr.shape} != {self.params[name].shape}")
            self.params[name].data = np.ascontiguousarray(arr.copy())


def adam_step(
    store: ParamStore,
    grads: Mapping[str, Tensor | np.ndarray],
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update, in place.

    Weight decay is classic L2 folded into the gradient (``g + wd * theta``)
    before the moment updates, not the decoupled AdamW form.
    """
    missing = [name for name in store.params if name not in grads]
    if missing:
        raise ContractViolation(f"adam_step: no gradient for {missing}")
    prepared = {}
    for name, param in store.params.items():
        g = grads[name]
        g = np.asarray(g.data if isinstance(g, Tensor) else g, dtype=np.float64)
        if g.shape != param.shape:
            raise ContractViolation(f"adam_step: gradient for {name!r} has shape {g.shape}, parameter {param.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"adam_step: non-finite gradient for parameter {name!r}")
        prepared[name] = g

    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, param in store.params.items():
        g = prepared[name]
        if weight_decay:
            g = g + weight_decay * param.data
        m = store.m[name] = beta1 * store.m[name] + (1.0 - beta1) * g
        v = store.v[name] = beta2 * store.v[name] + (1.0 - beta2) * g * g
        param.data = param.data - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
