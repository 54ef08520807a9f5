"""Parameter storage, initialisation, and the layers built on the engine."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class ParameterStore:
    """Named parameters in insertion order, each owned by one module."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._owner: dict[str, str] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def owner(self, name: str) -> str:
        return self._owner[name]

    def add(self, name: str, value: np.ndarray, owner: str | None = None) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered by {self._owner[name]!r}")
        p = ad.parameter(np.array(value, dtype=np.float64), name=name)
        self._params[name] = p
        self._owner[name] = owner or name.split(".")[0]
        return p

    def num_values(self, prefix: str = "") -> int:
        return int(sum(p.value.size for n, p in self._params.items() if n.startswith(prefix)))

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grads(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict(
            (n, np.zeros_like(p.value) if p.grad is None else p.grad) for n, p in self._params.items()
        )

    def values(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.value) for n, p in self._params.items())

    def load(self, values: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(values)
        extra = set(values) - set(self._params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for n, p in self._params.items():
            v = np.asarray(values[n], dtype=np.float64)
            if v.shape != p.value.shape:
                raise ValueError(f"{n}: shape {v.shape} != {p.value.shape}")
            p.value = v.copy()

    def flat(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self._params.values()])


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


class Linear:
    def __init__(self, store: ParameterStore, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = store.add(f"{name}.weight", uniform_init(rng, (n_in, n_out), n_in))
        self.bias = store.add(f"{name}.bias", uniform_init(rng, (n_out,), n_in))
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x) -> Tensor:
        return ad.affine(x, self.weight, self.bias)


@dataclass
class LSTMLayer:
    w_ih: Tensor
    w_hh: Tensor
    bias: Tensor

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[0]


def make_lstm_layer(store: ParameterStore, name: str, n_in: int, hidden: int,
                    rng: np.random.Generator) -> LSTMLayer:
    w_ih = uniform_init(rng, (n_in, 4 * hidden), n_in)
    w_hh = uniform_init(rng, (hidden, 4 * hidden), hidden)
    bias = uniform_init(rng, (4 * hidden,), n_in + hidden)
    bias[hidden:2 * hidden] = 1.0
    return LSTMLayer(store.add(f"{name}.w_ih", w_ih), store.add(f"{name}.w_hh", w_hh),
                     store.add(f"{name}.bias", bias))


def cell_step(state: tuple, x, layer: LSTMLayer) -> tuple[tuple[Tensor, Tensor], Tensor]:
    """One LSTM step composed from elementwise primitives.

    ``state`` is ``(c, h)``; returns ``((c', h'), h')``. Slower than
    :class:`LSTMStack` but built from independently differentiated ops, so
    it doubles as a reference for the compiled recurrence.
    """
    c, h = ad.tensor(state[0]), ad.tensor(state[1])
    x = ad.tensor(x)
    H = layer.hidden
    if x.shape[-1] != layer.input_size or h.shape[-1] != H or c.shape[-1] != H:
        raise ValueError("cell_step dimension mismatch")
    z = ad.affine(x, layer.w_ih, layer.bias) + ad.matmul(h, layer.w_hh)
    i = ad.sigmoid(z[0:H])
    f = ad.sigmoid(z[H:2 * H])
    g = ad.tanh(z[2 * H:3 * H])
    o = ad.sigmoid(z[3 * H:4 * H])
    c_new = f * c + i * g
    h_new = o * ad.tanh(c_new)
    return (c_new, h_new), h_new


class LSTMStack:
    """Stacked LSTM layers run over a whole sequence at once.

    Each layer's input projection is one matrix product; the recurrence is
    the compiled kernel. ``steps`` counts recurrent steps of the bottom
    layer across calls, for structural checks.
    """

    def __init__(self, store: ParameterStore, name: str, n_in: int, hidden: int, layers: int,
                 rng: np.random.Generator):
        self.name = name
        self.layers = [make_lstm_layer(store, f"{name}.l{k}", n_in if k == 0 else hidden, hidden, rng)
                       for k in range(layers)]
        self.hidden = hidden
        self.input_size = n_in
        self.steps = 0
        self.resets = 0

    def __call__(self, x, resets=None) -> Tensor:
        x = ad.tensor(x)
        if x.shape[-1] != self.input_size:
            raise ValueError(f"{self.name}: input size {x.shape[-1]} != {self.input_size}")
        n = x.shape[0]
        self.steps += n
        if resets is not None:
            self.resets += int(np.count_nonzero(resets))
        out = x
        for layer in self.layers:
            xw = ad.affine(out, layer.w_ih, layer.bias)
            out = ad.lstm_recurrence(xw, layer.w_hh, resets)
        return out

    def run_stateful(self, x: np.ndarray, state: list[tuple[np.ndarray, np.ndarray]] | None):
        """Inference-only forward that threads (h, c) per layer between calls."""
        from ._kernels import lstm_forward

        x = np.asarray(x, dtype=np.float64)
        if state is None:
            state = [(np.zeros(self.hidden), np.zeros(self.hidden)) for _ in self.layers]
        self.steps += x.shape[0]
        new_state = []
        out = x
        no_reset = np.zeros(x.shape[0], dtype=np.bool_)
        for layer, (h, c) in zip(self.layers, state):
            xw = np.ascontiguousarray(out @ layer.w_ih.value + layer.bias.value)
            hs, cs, _ = lstm_forward(xw, np.ascontiguousarray(layer.w_hh.value), no_reset, h, c)
            new_state.append((hs[-1].copy(), cs[-1].copy()))
            out = hs
        return out, new_state

    def num_params(self) -> int:
        return int(sum(l.w_ih.value.size + l.w_hh.value.size + l.bias.value.size for l in self.layers))
