"""The network constitutive models and their checkpoints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..adnn import load_checkpoint, save_checkpoint
from ..datagen import ScalingSet
from .base import KINDS, ArchConfig, Model, PredictionTrace, mae
from .blackbox import FnnSigma, RnnSigma
from .newton import NewtonError, solve_batched
from .strongform import FnnPsiPhi, FnnPsiPhiStar, FnnPsiPhiXi
from .weakform import FnnXiPsi, RnnXiPsi

MODELS = {
    cls.kind: cls
    for cls in (FnnSigma, RnnSigma, FnnXiPsi, RnnXiPsi, FnnPsiPhi, FnnPsiPhiStar, FnnPsiPhiXi)
}


def model_class(kind):
    return MODELS[kind]


def build_model(config: ArchConfig, seqs) -> Model:
    """Model with scaling fitted to the (physical) training sequences."""
    return MODELS[config.kind].from_data(config, seqs)


@dataclass
class TrainedModel:
    model: Model
    theta: np.ndarray
    log: dict = field(default_factory=dict)
    seed: int = 0

    def predict(self, path, **kw):
        return self.model.predict(self.theta, path, **kw)

    def save(self, fname):
        header = {
            "config": self.model.config.to_dict(),
            "scaling": self.model.scaling.to_dict(),
            "n_xi_data": self.model.n_xi_data,
            "seed": self.seed,
            "log": self.log,
            "nets": {k: b.spec.to_dict() for k, b in self.model.pack.blocks.items()},
        }
        save_checkpoint(fname, header, self.theta)

    @classmethod
    def load(cls, fname):
        header, theta = load_checkpoint(fname)
        cfg = ArchConfig.from_dict(header["config"])
        model = MODELS[cfg.kind](cfg, ScalingSet.from_dict(header["scaling"]), header["n_xi_data"])
        if model.n_params != len(theta):
            raise ValueError("checkpoint parameter count does not match its configuration")
        return cls(model, theta, header.get("log", {}), header.get("seed", 0))


__all__ = [
    "ArchConfig",
    "KINDS",
    "MODELS",
    "Model",
    "NewtonError",
    "PredictionTrace",
    "TrainedModel",
    "build_model",
    "mae",
    "model_class",
    "solve_batched",
]
