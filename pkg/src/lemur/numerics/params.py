"""Named parameter registry, Adam, and a central-difference gradient checker."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tensor, no_grad


class ParamStore:
    """Flat ``name -> Tensor`` registry shared by every model component.

    Names are dotted paths (``doc_encoder.layers.0.attn.wq``). Iteration order
    is insertion order, which is fixed by model construction.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._params: dict[str, Tensor] = {}

    def _add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def normal(self, name: str, shape: tuple, std: float = 0.02) -> Tensor:
        return self._add(name, self.rng.normal(0.0, std, size=shape))

    def glorot(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return self._add(name, self.rng.uniform(-limit, limit, size=(fan_in, fan_out)))

    def zeros(self, name: str, shape: tuple) -> Tensor:
        return self._add(name, np.zeros(shape))

    def ones(self, name: str, shape: tuple) -> Tensor:
        return self._add(name, np.ones(shape))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def num_values(self) -> int:
        return sum(p.size for p in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray], prefixes: Iterable[str] | None = None) -> list[str]:
        """Copy matching arrays in place; returns the names loaded.

        ``prefixes`` restricts loading to parameters whose name starts with one
        of them (used for partial warm starts).
        """
        loaded = []
        prefixes = tuple(prefixes) if prefixes is not None else None
        for name, p in self._params.items():
            if prefixes is not None and not name.startswith(prefixes):
                continue
            if name not in state:
                raise KeyError(f"checkpoint is missing parameter {name!r}")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name!r}: {arr.shape} vs {p.shape}")
            p.data[...] = arr
            loaded.append(name)
        return loaded


class Adam:
    def __init__(self, params: ParamStore, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"t": np.array(self.t)}
        for k in self.m:
            out[f"m/{k}"] = self.m[k].copy()
            out[f"v/{k}"] = self.v[k].copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.t = int(state["t"])
        for k in self.m:
            self.m[k][...] = state[f"m/{k}"]
            self.v[k][...] = state[f"v/{k}"]


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Iterable[Tensor],
    step: float = 1e-5,
    floor: float = 1e-12,
) -> float:
    """Max relative error between backprop and central differences.

    ``f`` must rebuild its graph from ``params`` on every call and return a
    scalar tensor. Relative error per coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.

    Central differences carry roughly ``eps * |f| / step`` of roundoff, so
    coordinates with gradients near that size cannot be resolved to a tight
    relative tolerance; raise ``floor`` accordingly for large graphs.
    """
    if not 1e-7 < step < 1e-3:
        raise ValueError("step must lie in (1e-7, 1e-3)")
    if floor <= 0:
        raise ValueError("floor must be positive")
    params = list(params)
    for p in params:
        p.grad = None
    out = f()
    if not np.isfinite(out.data).all():
        raise FloatingPointError("f is not finite at the base point")
    out.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + step
                fp = float(f().data)
                flat[i] = orig - step
                fm = float(f().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError("f is not finite at a probe point")
            numeric = (fp - fm) / (2.0 * step)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
