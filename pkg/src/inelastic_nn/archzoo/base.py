"""Shared plumbing for the network constitutive models."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .. import adnn as nn
from ..adnn import core as ad
from ..datagen import DatasetError, ScalingSet, apply_scaling, fit_scaling

KINDS = (
    "fnn_sigma",
    "rnn_sigma",
    "fnn_xipsi",
    "rnn_xipsi",
    "fnn_psiphi",
    "fnn_psiphistar",
    "fnn_psiphixi",
)


@dataclass
class ArchConfig:
    """Architecture choice, sub-network layout and loss weights.

    ``nets`` maps a sub-network name to a NetSpec dict (hidden width and
    activation are read from it; input and output widths are filled in by
    the model).  ``weights`` holds the loss-term weights by term name.
    """

    kind: str
    nets: dict = field(default_factory=dict)
    n_pt: int = 1
    n_cell: int = 0
    n_xi: int = 0
    weights: dict = field(default_factory=dict)
    rate_dependent: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise nn.ConfigError(f"unknown architecture {self.kind!r}; valid: {', '.join(KINDS)}")
        for k, w in self.weights.items():
            if w < 0:
                raise nn.ConfigError(f"loss weight {k} must be non-negative")

    def to_dict(self):
        return {
            "kind": self.kind,
            "nets": self.nets,
            "n_pt": self.n_pt,
            "n_cell": self.n_cell,
            "n_xi": self.n_xi,
            "weights": self.weights,
            "rate_dependent": self.rate_dependent,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def hidden_spec(cfg: ArchConfig, name, n_in, n_out, **modes):
    """NetSpec for sub-network ``name`` with one or more hidden layers."""
    d = cfg.nets[name]
    hidden = list(d["hidden"])
    acts = list(d["activations"])
    return nn.NetSpec([n_in] + hidden + [n_out], acts, **modes)


@dataclass
class PredictionTrace:
    t: np.ndarray
    eps: np.ndarray
    sig: np.ndarray
    psi: np.ndarray = None
    diss: np.ndarray = None
    xi: np.ndarray = None
    nr_iters: np.ndarray = None
    converged: np.ndarray = None

    def columns(self):
        n = len(self.t)
        nan = np.full(n, np.nan)
        cols = {
            "t": self.t,
            "eps": self.eps,
            "sig_hat": self.sig,
            "psi_hat": nan if self.psi is None else self.psi,
            "diss_hat": nan if self.diss is None else self.diss,
        }
        if self.xi is not None:
            for j in range(self.xi.shape[1]):
                cols[f"xi_hat{j + 1}"] = self.xi[:, j]
        cols["nr_iters"] = np.zeros(n, dtype=int) if self.nr_iters is None else self.nr_iters
        return cols

    def to_csv(self, fname):
        cols = self.columns()
        with open(fname, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(cols))
            for i in range(len(self.t)):
                row = []
                for k, v in cols.items():
                    row.append(str(int(v[i])) if k == "nr_iters" else repr(float(v[i])))
                w.writerow(row)


def mae(pred, target):
    return ad.mean(ad.abs_(pred - target))


def col(x):
    """(B,) -> (B, 1) for arrays and nodes."""
    return ad.reshape(x, (-1, 1))


class Model:
    """Base class: parameter layout, scaling, loss and rollout hooks."""

    kind = None
    offsets = False  # black-box models map strain/stress/dt onto [-1, 1]
    needs_xi = False
    phases = (None,)

    def __init__(self, config: ArchConfig, scaling: ScalingSet, n_xi_data=0):
        self.config = config
        self.scaling = scaling
        self.n_xi_data = n_xi_data
        self.pack = nn.ParamPack()
        self.build()

    # hooks ---------------------------------------------------------------
    def build(self):
        raise NotImplementedError

    def prepare(self, seqs):
        raise NotImplementedError

    def loss_terms(self, theta, data, phase=None):
        """dict term -> (weight, scalar node); total = sum weight * value."""
        raise NotImplementedError

    def predict(self, theta, path):
        raise NotImplementedError

    def trainable(self, phase=None):
        """Slice of theta optimised in ``phase`` (None: everything)."""
        return slice(0, self.pack.size)

    # ---------------------------------------------------------------------
    @classmethod
    def from_data(cls, config, seqs):
        if cls.needs_xi and any(s.n_xi == 0 for s in seqs):
            raise DatasetError(f"{config.kind} requires internal-variable columns")
        sc = fit_scaling(seqs, offsets=cls.offsets)
        return cls(config, sc, seqs[0].n_xi)

    def init_theta(self, seed=0):
        return self.pack.init(np.random.default_rng(np.random.SeedSequence([seed, 1])))

    def loss(self, theta, data, phase=None):
        terms = self.loss_terms(theta, data, phase)
        total = None
        for w, v in terms.values():
            if w == 0.0:
                continue
            total = w * v if total is None else total + w * v
        return total, terms

    def scaled(self, seqs):
        return [apply_scaling(self.scaling, s) for s in seqs]

    @property
    def n_params(self):
        return self.pack.size
