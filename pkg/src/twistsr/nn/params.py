from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor


class ParameterStore:
    """Ordered, uniquely named parameters plus Adam moment buffers."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.ascontiguousarray(value), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: t.shape for k, t in self._params.items()}

    def is_weight(self, name: str) -> bool:
        return name.endswith("weight")

    def weights(self) -> Iterator[tuple[str, Tensor]]:
        return ((k, t) for k, t in self._params.items() if self.is_weight(k))

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def astype(self, dtype) -> "ParameterStore":
        """Copy with every parameter cast to `dtype`; optimizer state is dropped."""
        out = ParameterStore()
        for k, t in self._params.items():
            out.add(k, t.data.astype(dtype))
        return out

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for k, t in self._params.items():
            out.add(k, t.data.copy())
        out.m = {k: v.copy() for k, v in self.m.items()}
        out.v = {k: v.copy() for k, v in self.v.items()}
        out.step = self.step
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise KeyError(f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, t in self._params.items():
            if arrays[k].shape != t.shape:
                raise ValueError(f"shape mismatch for {k}: {arrays[k].shape} vs {t.shape}")
            t.data = np.array(arrays[k], dtype=t.data.dtype, copy=True)

    def zero_(self) -> "ParameterStore":
        for t in self._params.values():
            t.data = np.zeros_like(t.data)
        return self
