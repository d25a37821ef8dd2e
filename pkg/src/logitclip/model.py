"""Fully connected classifier with a linear output layer (raw logits)."""

from __future__ import annotations

import json

import numpy as np

from logitclip.errors import ConfigError, DimensionError
from logitclip.fileio import atomic_write_text
from logitclip.numerics import Rng

ACTIVATIONS = ("relu", "relu6")


class MlpModel:
    """Weights are stored as ``(fan_out, fan_in)`` matrices.

    ``forward`` and ``backward`` accept one sample ``(d,)`` or a batch
    ``(N, d)``. For a batch, ``backward`` returns the gradient of the *sum*
    of per-sample objectives; scale ``upstream`` to get a mean.
    """

    def __init__(self, widths, activation="relu", weights=None, biases=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ConfigError(f"need at least input and output widths >= 1, got {widths}")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")
        self.widths = widths
        self.activation = activation
        if weights is None:
            weights = [np.zeros((o, i)) for i, o in zip(widths[:-1], widths[1:])]
        if biases is None:
            biases = [np.zeros(o) for o in widths[1:]]
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for w, b, i, o in zip(self.weights, self.biases, widths[:-1], widths[1:]):
            if w.shape != (o, i) or b.shape != (o,):
                raise DimensionError(f"parameter shapes {w.shape}/{b.shape} do not chain for {i}->{o}")

    @classmethod
    def init(cls, widths, activation="relu", rng: Rng | None = None):
        """He initialization: ``W ~ N(0, 2 / fan_in)``, zero biases."""
        model = cls(widths, activation)
        g = (rng or Rng(0)).gen
        model.weights = [g.normal(0.0, np.sqrt(2.0 / i), size=(o, i)) for i, o in zip(model.widths[:-1], model.widths[1:])]
        return model

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self):
        return sum(p.size for p in self.params)

    def copy(self):
        return MlpModel(self.widths, self.activation, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def _act(self, a):
        if self.activation == "relu6":
            return np.clip(a, 0.0, 6.0)
        return np.maximum(a, 0.0)

    def _act_grad(self, a):
        if self.activation == "relu6":
            return (a > 0) & (a < 6)
        return a > 0

    def forward(self, x, cache=False):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.widths[0]:
            raise DimensionError(f"expected {self.widths[0]} input features, got {x.shape[-1]}")
        h = x
        acts, masks = [x], []
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w.T + b
            if l == last:
                h = a
            else:
                h = self._act(a)
                if cache:
                    acts.append(h)
                    masks.append(self._act_grad(a))
        return (h, (acts, masks)) if cache else h

    def backward(self, x, upstream, cache=None):
        """Parameter gradients as ``[dW0, db0, dW1, db1, ...]``."""
        if cache is None:
            _, cache = self.forward(x, cache=True)
        acts, masks = cache
        g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if g.shape[-1] != self.widths[-1]:
            raise DimensionError(f"upstream gradient must have length {self.widths[-1]}")
        grads = [None] * (2 * len(self.weights))
        for l in range(len(self.weights) - 1, -1, -1):
            grads[2 * l] = g.T @ np.atleast_2d(acts[l])
            grads[2 * l + 1] = g.sum(axis=0)
            if l:
                g = (g @ self.weights[l]) * masks[l - 1]
        return grads

    def to_dict(self):
        return {
            "widths": self.widths,
            "activation": self.activation,
            "layers": [
                {"weight": w.ravel().tolist(), "bias": b.tolist()} for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d):
        widths = d["widths"]
        ws, bs = [], []
        for layer, i, o in zip(d["layers"], widths[:-1], widths[1:]):
            ws.append(np.array(layer["weight"], dtype=np.float64).reshape(o, i))
            bs.append(np.array(layer["bias"], dtype=np.float64))
        return cls(widths, d.get("activation", "relu"), ws, bs)

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
