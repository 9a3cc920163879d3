"""Fully connected ReLU networks: evaluation, serialization, interval bounds.

A network is a chain of affine layers; every hidden layer is followed by a
ReLU, the final layer is affine.  Interval propagation pushes a box through
the same chain with sign-dependent bound switching in the affine layers and
max(0, .) on both endpoints at the ReLUs, yielding a sound over-approximation
of the image of the box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from milp_safeguard.sets import Hypercube


@dataclass(frozen=True)
class Interval:
    """Scalar interval [lo, hi], lo <= hi, finite."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError(f"non-finite interval [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"inverted interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class LayerParams:
    """One affine layer: weights (n_out x n_in), bias (n_out)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=float))
        b = np.atleast_1d(np.asarray(self.bias, dtype=float))
        if W.ndim != 2 or b.ndim != 1:
            raise ValueError("weights must be a matrix and bias a vector")
        if W.shape[0] != b.shape[0]:
            raise ValueError(
                f"weight rows ({W.shape[0]}) != bias length ({b.shape[0]})"
            )
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite layer parameters")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class ReluNetwork:
    """Chain of LayerParams; hidden activations ReLU, last layer affine."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, cur in zip(layers, layers[1:]):
            if cur.in_dim != prev.out_dim:
                raise ValueError(
                    f"layer dimension chain broken: {prev.out_dim} -> {cur.in_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layers) - 1


@dataclass(frozen=True)
class LayerBounds:
    """Per-layer interval bounds from a propagated input box.

    preact[i] bounds the affine output of layer i (i = 0 .. L-1, in network
    order); postact[i] bounds the ReLU image for hidden layers only.  The
    last preact entry bounds the network output.
    """

    preact: tuple
    postact: tuple

    def preact_arrays(self, i: int):
        lo = np.array([iv.lo for iv in self.preact[i]])
        hi = np.array([iv.hi for iv in self.preact[i]])
        return lo, hi

    def output_box(self) -> Hypercube:
        lo, hi = self.preact_arrays(len(self.preact) - 1)
        return Hypercube(lo, hi)


def forward(net: ReluNetwork, z0) -> np.ndarray:
    """Evaluate the network at z0."""
    z = np.asarray(z0, dtype=float)
    if z.shape != (net.input_dim,):
        raise ValueError(f"input shape {z.shape} != ({net.input_dim},)")
    for layer in net.layers[:-1]:
        z = np.maximum(0.0, layer.weights @ z + layer.bias)
    last = net.layers[-1]
    return last.weights @ z + last.bias


def forward_batch(net: ReluNetwork, Z) -> np.ndarray:
    """Evaluate the network at a batch of inputs, shape (n, input_dim)."""
    H = np.asarray(Z, dtype=float)
    if H.ndim != 2 or H.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {H.shape} != (n, {net.input_dim})")
    for layer in net.layers[:-1]:
        H = np.maximum(0.0, H @ layer.weights.T + layer.bias)
    last = net.layers[-1]
    return H @ last.weights.T + last.bias


def relu_interval(x: Interval) -> Interval:
    """[max(0, lo), max(0, hi)] — exact image of ReLU on an interval."""
    return Interval(max(0.0, x.lo), max(0.0, x.hi))


def linear_bounds(W: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Array form of the sign-switch bounds for an affine map.

    Positive weights take the like endpoint, negative weights the opposite
    one; exact for boxes.
    """
    Wp = np.maximum(W, 0.0)
    Wn = np.minimum(W, 0.0)
    out_lo = Wp @ lo + Wn @ hi + b
    out_hi = Wp @ hi + Wn @ lo + b
    return out_lo, out_hi


def _to_intervals(lo: np.ndarray, hi: np.ndarray):
    return tuple(Interval(float(a), float(b)) for a, b in zip(lo, hi))


def linear_interval(layer: LayerParams, box) -> tuple:
    """Propagate a vector of Intervals through one affine layer."""
    box = tuple(box)
    if len(box) != layer.in_dim:
        raise ValueError(f"box length {len(box)} != layer input dim {layer.in_dim}")
    lo = np.array([iv.lo for iv in box])
    hi = np.array([iv.hi for iv in box])
    out_lo, out_hi = linear_bounds(layer.weights, layer.bias, lo, hi)
    return _to_intervals(out_lo, out_hi)


def interval_forward(net: ReluNetwork, input_box) -> LayerBounds:
    """Propagate an input box through the whole network.

    Returns sound bounds: forward(net, z) lies in the final preact box for
    every z in the input box.
    """
    box = tuple(input_box)
    if len(box) != net.input_dim:
        raise ValueError(f"box length {len(box)} != input dim {net.input_dim}")
    lo = np.array([iv.lo for iv in box])
    hi = np.array([iv.hi for iv in box])
    preact = []
    postact = []
    for layer in net.layers[:-1]:
        lo, hi = linear_bounds(layer.weights, layer.bias, lo, hi)
        preact.append(_to_intervals(lo, hi))
        lo = np.maximum(0.0, lo)
        hi = np.maximum(0.0, hi)
        postact.append(_to_intervals(lo, hi))
    last = net.layers[-1]
    lo, hi = linear_bounds(last.weights, last.bias, lo, hi)
    preact.append(_to_intervals(lo, hi))
    return LayerBounds(preact=tuple(preact), postact=tuple(postact))


def output_bounds(net: ReluNetwork, lo: np.ndarray, hi: np.ndarray):
    """Output box of the network over an input box, arrays in and out.

    Same interval semantics as interval_forward, without materializing the
    per-layer Interval tuples; use when only the final box is needed.
    """
    for layer in net.layers[:-1]:
        lo, hi = linear_bounds(layer.weights, layer.bias, lo, hi)
        lo = np.maximum(0.0, lo)
        hi = np.maximum(0.0, hi)
    last = net.layers[-1]
    return linear_bounds(last.weights, last.bias, lo, hi)


def box_to_intervals(h: Hypercube) -> tuple:
    return _to_intervals(h.lo, h.hi)


def preactivation_bounds(net: ReluNetwork, X: Hypercube, U: Hypercube) -> LayerBounds:
    """Global neuron bounds over the full X x U input domain.

    These are the constant tightening data the MILP encoder bakes into its
    constraints.
    """
    if X.dim + U.dim != net.input_dim:
        raise ValueError(
            f"X dim {X.dim} + U dim {U.dim} != network input dim {net.input_dim}"
        )
    return interval_forward(net, box_to_intervals(X.concat(U)))


def save_network(net: ReluNetwork, path=None) -> bytes:
    """Serialize to the network file format (JSON, full-precision reals).

    Returns the encoded bytes; also writes them to path when given.
    """
    doc = {
        "layers": [
            {"weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
            for layer in net.layers
        ]
    }
    data = json.dumps(doc, indent=1).encode("utf-8")
    if path is not None:
        with open(path, "wb") as f:
            f.write(data)
    return data


def load_network(source) -> ReluNetwork:
    """Parse the network file format (bytes or a file path).

    Rejects malformed or non-finite nets.
    """
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as f:
            data = f.read()
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed network file: {exc}") from exc
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ValueError("network file missing top-level 'layers' key")
    raw_layers = doc["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ValueError("network file needs a non-empty 'layers' array")
    layers = []
    for k, entry in enumerate(raw_layers):
        if not isinstance(entry, dict) or "weights" not in entry or "bias" not in entry:
            raise ValueError(f"layer {k} missing 'weights' or 'bias'")
        layers.append(LayerParams(np.array(entry["weights"], dtype=float),
                                  np.array(entry["bias"], dtype=float)))
    return ReluNetwork(tuple(layers))


def build_identity_sum_network(X: Hypercube, U: Hypercube) -> ReluNetwork:
    """One-hidden-layer net computing x + u exactly on X x U.

    Construction: shift every input up by c so all hidden pre-activations
    are strictly positive over the domain (the ReLUs are then identities),
    and undo the shift in the output bias:

        out = [I I] . ReLU([[I,0],[0,I]] z0 + c 1) - 2c 1.
    """
    if X.dim != 2 or U.dim != 2:
        raise ValueError("identity-sum network is defined for 2-D state/control")
    min_lo = float(min(X.lo.min(), U.lo.min()))
    c = max(50.0, 1.0 - min_lo)
    n = X.dim + U.dim
    hidden = LayerParams(np.eye(n), c * np.ones(n))
    out = LayerParams(np.hstack([np.eye(X.dim), np.eye(X.dim)]),
                      -2.0 * c * np.ones(X.dim))
    return ReluNetwork((hidden, out))
