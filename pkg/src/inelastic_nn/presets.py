"""Default architecture settings per material."""

from __future__ import annotations

from .archzoo import KINDS, ArchConfig
from .refmat import get_material


def _net(width, act):
    return {"hidden": [width], "activations": [act]}


def _visco(material):
    return material.startswith("V")


def default_config(material, kind, **over) -> ArchConfig:
    mat = get_material(material)
    visco = _visco(material)
    rd = mat.rate_dependent
    if kind == "fnn_sigma":
        n_pt = over.pop("n_pt", 1)
        width = {"V1": 15, "V2": 25}.get(material, 15)
        cfg = ArchConfig(kind, {"sig": _net(width, "tanh" if visco else "relu")}, n_pt=n_pt, rate_dependent=rd)
    elif kind == "rnn_sigma":
        nc, width = {"V1": (6, 10), "V2": (10, 10), "P1": (10, 10), "P2": (12, 20)}[material]
        cfg = ArchConfig(kind, {"head": _net(width, "tanh" if visco else "relu")}, n_cell=nc, rate_dependent=rd)
    elif kind == "fnn_xipsi":
        cfg = ArchConfig(
            kind,
            {"xi": _net(15, "tanh" if visco else "relu"), "psi": _net(15, "tanh")},
            weights={"sig": 1.0, "psi": 0.0, "diss": 1.0},
            rate_dependent=rd,
        )
    elif kind == "rnn_xipsi":
        nc, nx, wx, wp = {
            "V1": (6, 1, 10, 10),
            "V2": (6, 2, 10, 10),
            "P1": (10, 1, 10, 10),
            "P2": (12, 3, 15, 20),
        }[material]
        cfg = ArchConfig(
            kind,
            {"xi": _net(wx, "tanh" if visco else "relu"), "psi": _net(wp, "tanh")},
            n_cell=nc,
            n_xi=nx,
            weights={"sig": 1.0, "diss": 5.0},
            rate_dependent=rd,
        )
    elif kind in ("fnn_psiphi", "fnn_psiphistar", "fnn_psiphixi"):
        nets = {"con": _net(20, "softplus"), "pos": _net(20, "softplus"), "psi": _net(15, "tanh")}
        if kind == "fnn_psiphi":
            weights = {"sig": 1.0, "biot": 0.3}
            n_xi = 0
        elif kind == "fnn_psiphistar":
            weights = {"sig": 1.0, "xidot": 1.0}
            n_xi = 0
        else:
            nets["aux"] = _net(40 if visco else 75, "tanh")
            weights = {"sig": 10.0, "biot": 1.0, "xi_abs": 1.0}
            n_xi = 1
        cfg = ArchConfig(kind, nets, n_xi=n_xi, weights=weights, rate_dependent=rd)
    else:
        raise ValueError(f"unknown architecture {kind!r}; valid: {', '.join(KINDS)}")
    for k, v in over.items():
        if k == "weights":
            cfg.weights.update(v)
        elif k == "nets":
            cfg.nets.update(v)
        else:
            setattr(cfg, k, v)
    return cfg


def preset_name(material, kind, n_pt=1):
    name = f"{material.lower()}-{kind.replace('_', '-')}"
    return name + (f"-npt{n_pt}" if kind == "fnn_sigma" and n_pt != 1 else "")


def data_kind(kind):
    """Training data each architecture uses."""
    return "spline" if kind == "fnn_psiphixi" else "random-walk"


def n_train_sequences(kind):
    """Sequences taken from the start of the database (1000 tuples for feedforward kinds)."""
    return 100 if kind.startswith("rnn") else 10
