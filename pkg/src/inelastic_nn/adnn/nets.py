"""Dense networks, LSTM cells and sign-constrained variants on top of ``core``.

All parameters of a model live in one flat vector.  A network only knows
its offset into that vector; ``materialize`` turns the slice into weight
matrices once per evaluation so repeated calls (one per time step for the
recurrent models) reuse the same graph nodes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import core as ad

ACTIVATIONS = {
    "tanh": ad.tanh,
    "relu": ad.relu,
    "softplus": ad.softplus,
    "identity": ad.identity,
}
WEIGHT_MODES = ("free", "nonneg_all", "nonneg_output")
BIAS_MODES = ("free", "nonneg")


class ConfigError(ValueError):
    """Inconsistent network or architecture configuration."""


def softplus_inv(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


@dataclass
class NetSpec:
    """Layer widths from input to output, one activation per hidden layer.

    ``weight_mode``: ``nonneg_all`` makes every weight non-negative (input
    convex network), ``nonneg_output`` only the output layer.  ``bias_mode``
    ``nonneg`` constrains the output-layer bias.  The output layer is linear.
    """

    widths: list
    activations: list = field(default_factory=list)
    weight_mode: str = "free"
    bias_mode: str = "free"

    def __post_init__(self):
        self.widths = [int(w) for w in self.widths]
        self.activations = list(self.activations)
        self.validate()

    def validate(self):
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ConfigError(f"invalid widths {self.widths}")
        if len(self.activations) != len(self.widths) - 2:
            raise ConfigError(
                f"{len(self.widths) - 2} hidden layers need as many activations, "
                f"got {self.activations}"
            )
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"unknown weight mode {self.weight_mode!r}")
        if self.bias_mode not in BIAS_MODES:
            raise ConfigError(f"unknown bias mode {self.bias_mode!r}")
        if self.weight_mode != "free" and any(a != "softplus" for a in self.activations):
            # convexity / positivity needs convex, non-decreasing, twice
            # differentiable activations
            raise ConfigError(f"{self.weight_mode} networks require softplus activations")

    @property
    def n_in(self):
        return self.widths[0]

    @property
    def n_out(self):
        return self.widths[-1]

    @property
    def n_params(self):
        return sum(a * b + b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def to_dict(self):
        return {
            "widths": self.widths,
            "activations": self.activations,
            "weight_mode": self.weight_mode,
            "bias_mode": self.bias_mode,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Dense:
    """A feedforward network occupying ``theta[offset:offset + n_params]``."""

    def __init__(self, spec: NetSpec, offset=0):
        self.spec = spec
        self.offset = offset
        self.n_params = spec.n_params

    def _nonneg_weight(self, layer):
        n_layers = len(self.spec.widths) - 1
        mode = self.spec.weight_mode
        return mode == "nonneg_all" or (mode == "nonneg_output" and layer == n_layers - 1)

    def _nonneg_bias(self, layer):
        return self.spec.bias_mode == "nonneg" and layer == len(self.spec.widths) - 2

    def init(self, rng, theta):
        """Glorot-uniform pre-weights, zero pre-biases, written into ``theta``."""
        pos = self.offset
        for n_in, n_out in zip(self.spec.widths[:-1], self.spec.widths[1:]):
            lim = np.sqrt(6.0 / (n_in + n_out))
            theta[pos:pos + n_in * n_out] = rng.uniform(-lim, lim, n_in * n_out)
            pos += n_in * n_out
            theta[pos:pos + n_out] = 0.0
            pos += n_out

    def materialize(self, theta):
        """List of (W, b) for each layer; W has shape (n_in, n_out)."""
        layers = []
        pos = self.offset
        for k, (n_in, n_out) in enumerate(zip(self.spec.widths[:-1], self.spec.widths[1:])):
            w = ad.reshape(ad.getitem(theta, slice(pos, pos + n_in * n_out)), (n_in, n_out))
            pos += n_in * n_out
            b = ad.reshape(ad.getitem(theta, slice(pos, pos + n_out)), (1, n_out))
            pos += n_out
            if self._nonneg_weight(k):
                w = ad.softplus(w)
            if self._nonneg_bias(k):
                b = ad.softplus(b)
            layers.append((w, b))
        return layers

    def set_layer(self, theta, layer, w, b):
        """Write physical weights (inverting the reparameterization)."""
        pos = self.offset
        for k, (n_in, n_out) in enumerate(zip(self.spec.widths[:-1], self.spec.widths[1:])):
            if k == layer:
                w = np.asarray(w, dtype=float).reshape(n_in, n_out)
                b = np.asarray(b, dtype=float).reshape(n_out)
                if self._nonneg_weight(k):
                    w = softplus_inv(w)
                if self._nonneg_bias(k):
                    b = softplus_inv(b)
                theta[pos:pos + n_in * n_out] = w.ravel()
                theta[pos + n_in * n_out:pos + n_in * n_out + n_out] = b
                return
            pos += n_in * n_out + n_out
        raise ConfigError(f"layer {layer} out of range")

    def apply(self, layers, x):
        """Evaluate on a batch ``x`` of shape (B, n_in) -> (B, n_out)."""
        if ad._shape(x)[-1] != self.spec.n_in:
            raise ConfigError(f"input width {ad._shape(x)[-1]} != {self.spec.n_in}")
        h = x
        for k, (w, b) in enumerate(layers):
            h = h @ w + b
            if k < len(layers) - 1:
                h = ACTIVATIONS[self.spec.activations[k]](h)
        return h

    def __call__(self, theta, x):
        return self.apply(self.materialize(theta), x)


def fnn_forward(spec: NetSpec, theta, x):
    """Evaluate a network whose parameters are the whole of ``theta``."""
    x = x if isinstance(x, ad.Node) else np.atleast_2d(np.asarray(x, dtype=float))
    return Dense(spec)(theta, x)


def icnn_forward(spec: NetSpec, theta, x):
    """Scalar network output that is convex in ``x``."""
    if spec.weight_mode != "nonneg_all" or spec.n_out != 1:
        raise ConfigError("convex network needs weight_mode nonneg_all and one output")
    return fnn_forward(spec, theta, x)


def positive_net_forward(spec: NetSpec, theta, x):
    """Scalar network output that is non-negative for every input."""
    if spec.weight_mode != "nonneg_output" or spec.bias_mode != "nonneg" or spec.n_out != 1:
        raise ConfigError("positive network needs nonneg_output weights and nonneg bias")
    return fnn_forward(spec, theta, x)


@dataclass
class LstmSpec:
    n_in: int
    n_cell: int

    def __post_init__(self):
        if self.n_in < 1 or self.n_cell < 1:
            raise ConfigError(f"invalid LSTM sizes {self.n_in}, {self.n_cell}")

    @property
    def n_params(self):
        return (self.n_in + self.n_cell) * 4 * self.n_cell + 4 * self.n_cell

    def to_dict(self):
        return {"n_in": self.n_in, "n_cell": self.n_cell}


class Lstm:
    """LSTM cell; gate blocks ordered input, forget, candidate, output."""

    def __init__(self, spec: LstmSpec, offset=0):
        self.spec = spec
        self.offset = offset
        self.n_params = spec.n_params

    def init(self, rng, theta):
        nw = (self.spec.n_in + self.spec.n_cell) * 4 * self.spec.n_cell
        lim = np.sqrt(6.0 / (self.spec.n_in + 5 * self.spec.n_cell))
        theta[self.offset:self.offset + nw] = rng.uniform(-lim, lim, nw)
        theta[self.offset + nw:self.offset + self.n_params] = 0.0

    def materialize(self, theta):
        nc = self.spec.n_cell
        nrow = self.spec.n_in + nc
        nw = nrow * 4 * nc
        w = ad.reshape(ad.getitem(theta, slice(self.offset, self.offset + nw)), (nrow, 4 * nc))
        b = ad.reshape(
            ad.getitem(theta, slice(self.offset + nw, self.offset + self.n_params)), (1, 4 * nc)
        )
        return w, b

    def zero_state(self, batch):
        z = np.zeros((batch, self.spec.n_cell))
        return z, z.copy()

    def step(self, wb, h, c, x):
        if ad._shape(x)[-1] != self.spec.n_in:
            raise ConfigError(f"LSTM input width {ad._shape(x)[-1]} != {self.spec.n_in}")
        w, b = wb
        nc = self.spec.n_cell
        z = ad.concatenate([x, h], axis=1) @ w + b
        i = ad.sigmoid(z[:, 0:nc])
        f = ad.sigmoid(z[:, nc:2 * nc])
        g = ad.tanh(z[:, 2 * nc:3 * nc])
        o = ad.sigmoid(z[:, 3 * nc:4 * nc])
        c_new = f * c + i * g
        h_new = o * ad.tanh(c_new)
        return h_new, c_new


def lstm_step(spec: LstmSpec, theta, state, x):
    """One cell update for a batch; ``state`` is (h, c), returns the new pair."""
    cell = Lstm(spec)
    x = x if isinstance(x, ad.Node) else np.atleast_2d(np.asarray(x, dtype=float))
    h, c = state
    return cell.step(cell.materialize(theta), h, c, x)


class ParamPack:
    """Assigns consecutive offsets to named blocks sharing one flat vector."""

    def __init__(self):
        self.blocks = {}
        self.size = 0

    def add(self, name, block_cls, spec):
        block = block_cls(spec, self.size)
        self.blocks[name] = block
        self.size += block.n_params
        return block

    def block_slice(self, name):
        b = self.blocks[name]
        return slice(b.offset, b.offset + b.n_params)

    def init(self, rng):
        theta = np.zeros(self.size)
        for b in self.blocks.values():
            b.init(rng, theta)
        return theta


def save_checkpoint(path, header: dict, theta):
    payload = {"header": header, "theta": [float(v) for v in np.asarray(theta).ravel()]}
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=1)


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    return payload["header"], np.asarray(payload["theta"], dtype=float)
