"""Small dense networks on the reverse-mode tape, with JSON checkpoints.

The checkpoint layout is shared by every network in the package:
``{"layer_sizes": [...], "weights": [per-layer row-major flat list],
"biases": [per-layer list]}``. Activations are not stored; they are fixed
by whichever wrapper class owns the network.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ContractViolation

ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")


def _activate(t: Tensor, name: str) -> Tensor:
    if name == "relu":
        return t.relu()
    if name == "tanh":
        return t.tanh()
    if name == "sigmoid":
        return t.sigmoid()
    if name == "linear":
        return t
    raise ContractViolation(f"unknown activation {name!r}")


class Mlp:
    """Fully connected network with one activation for hidden layers
    and one for the output layer.

    Weights start at ``N(0, sqrt(2/fan_in))`` for relu hidden units and
    ``N(0, sqrt(1/fan_in))`` otherwise; biases start at zero.
    """

    def __init__(self, layer_sizes, hidden_activation: str,
                 output_activation: str,
                 rng: np.random.Generator | None = None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ContractViolation("layer_sizes needs >= 2 positive entries")
        if hidden_activation not in ACTIVATIONS or \
                output_activation not in ACTIVATIONS:
            raise ContractViolation(f"activations must be one of {ACTIVATIONS}")
        self.layer_sizes = sizes
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt((2.0 if hidden_activation == "relu" else 1.0)
                            / fan_in)
            self.weights.append(Tensor(rng.normal(0.0, scale,
                                                  size=(fan_in, fan_out)),
                                       requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))

    def params(self) -> list[Tensor]:
        return [*self.weights, *self.biases]

    def forward(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            h = _activate(h, self.output_activation if i == last
                          else self.hidden_activation)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Forward pass off the tape, for evaluation-only callers."""
        return self.forward(Tensor(np.atleast_2d(x))).data

    # -- serialization -------------------------------------------------------

    def to_checkpoint(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [[float(v) for v in W.data.ravel()]
                        for W in self.weights],
            "biases": [[float(v) for v in b.data] for b in self.biases],
        }

    @classmethod
    def from_checkpoint(cls, doc: dict, hidden_activation: str,
                        output_activation: str) -> "Mlp":
        try:
            sizes = [int(s) for s in doc["layer_sizes"]]
            net = cls(sizes, hidden_activation, output_activation)
            if len(doc["weights"]) != len(net.weights) or \
                    len(doc["biases"]) != len(net.biases):
                raise ContractViolation("checkpoint layer count mismatch")
            for W, flat in zip(net.weights, doc["weights"]):
                arr = np.array(flat, dtype=np.float64)
                if arr.size != W.data.size:
                    raise ContractViolation("checkpoint weight size mismatch")
                W.data = arr.reshape(W.data.shape)
            for b, vals in zip(net.biases, doc["biases"]):
                arr = np.array(vals, dtype=np.float64)
                if arr.shape != b.data.shape:
                    raise ContractViolation("checkpoint bias size mismatch")
                b.data = arr
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractViolation(f"malformed network checkpoint: {exc}") \
                from exc
        if not all(np.all(np.isfinite(p.data)) for p in net.params()):
            raise ContractViolation("checkpoint parameters must be finite")
        return net
