"""End-to-end pipelines: data, training, validation and figure bundles."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import datagen, presets, refmat, trainer
from .archzoo import ArchConfig, KINDS, TrainedModel, build_model

VALIDATION_PATHS = ("A", "B")

# optimizer defaults per architecture, tuned at desk scale
OPTIM_DEFAULTS = {
    "fnn_sigma": dict(method="adam+bfgs", lr=3e-3, max_iter=10000, refine_frac=0.8),
    "rnn_sigma": dict(method="adam+bfgs", lr=3e-3, max_iter=10000, refine_frac=0.5),
    "fnn_xipsi": dict(method="adam+bfgs", lr=3e-3, max_iter=10000, refine_frac=0.8),
    "rnn_xipsi": dict(method="adam+bfgs", lr=3e-3, max_iter=10000, refine_frac=0.5),
    "fnn_psiphi": dict(method="adam+bfgs", lr=3e-3, max_iter=10000, refine_frac=0.8),
    "fnn_psiphistar": dict(method="adam+bfgs", lr=3e-3, max_iter=10000, refine_frac=0.8),
    "fnn_psiphixi": dict(method="adam+bfgs", lr=3e-3, max_iter=10000, refine_frac=0.8),
}


@dataclass
class ExperimentConfig:
    material: str
    kind: str
    n_pt: int = 1
    seed: int = 0
    data: str = ""  # "random-walk" or "spline"; empty picks the architecture default
    n_seq: int = 0  # sequences taken from the database; 0 picks the default
    data_seed: int = 0
    dataset: str = ""  # CSV file to train on instead of generating data
    arch: dict = field(default_factory=dict)  # ArchConfig overrides
    optim: dict = field(default_factory=dict)  # OptimConfig overrides

    def __post_init__(self):
        refmat.get_material(self.material)
        if self.kind not in KINDS:
            raise ValueError(f"unknown architecture {self.kind!r}; valid: {', '.join(KINDS)}")
        self.data = self.data or presets.data_kind(self.kind)
        if self.data not in ("random-walk", "spline"):
            raise ValueError(f"unknown data kind {self.data!r}; valid: random-walk, spline")
        if self.kind == "fnn_psiphixi" and self.data != "spline":
            raise ValueError("fnn_psiphixi trains on the smooth spline path only")
        self.n_seq = self.n_seq or (1 if self.data == "spline" else presets.n_train_sequences(self.kind))

    @property
    def name(self):
        return presets.preset_name(self.material, self.kind, self.n_pt)

    def arch_config(self) -> ArchConfig:
        over = dict(self.arch)
        if self.kind == "fnn_sigma":
            over.setdefault("n_pt", self.n_pt)
        return presets.default_config(self.material, self.kind, **over)

    def optim_config(self) -> trainer.OptimConfig:
        d = dict(OPTIM_DEFAULTS[self.kind])
        d.update(self.optim)
        d["seed"] = self.seed
        return trainer.OptimConfig(**d)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown experiment fields: {', '.join(sorted(extra))}")
        return cls(**d)

    def digest(self):
        """Short hash of everything that determines the trained weights."""
        blob = json.dumps(
            {"exp": self.to_dict(), "arch": self.arch_config().to_dict(), "optim": asdict(self.optim_config())},
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def parse_preset(name):
    """'v2-fnn-sigma-npt2' -> ExperimentConfig."""
    parts = name.lower().split("-")
    n_pt = 1
    if parts[-1].startswith("npt"):
        n_pt = int(parts.pop()[3:])
    material = parts[0].upper()
    kind = "_".join(parts[1:])
    return ExperimentConfig(material, kind, n_pt=n_pt)


def training_data(exp: ExperimentConfig):
    if exp.dataset:
        seqs = datagen.read_dataset(exp.dataset)
        return seqs if exp.data == "spline" else seqs[: exp.n_seq]
    if exp.data == "spline":
        return [datagen.gen_spline_path(exp.material, seed=exp.data_seed)]
    return datagen.standard_dataset(exp.material, n_seq=exp.n_seq, seed=exp.data_seed)


def run_training(exp: ExperimentConfig):
    """Train one experiment; returns (TrainedModel, {phase: TrainReport})."""
    seqs = training_data(exp)
    model = build_model(exp.arch_config(), seqs)
    theta, reports = trainer.train(model, seqs, exp.optim_config())
    log = {k: r.to_dict() for k, r in reports.items()}
    log["experiment"] = exp.to_dict()
    return TrainedModel(model, theta, log, exp.seed), reports


def final_loss(reports):
    """Loss of the last training phase (the stress-bearing one)."""
    return list(reports.values())[-1]


def cached_training(exp: ExperimentConfig, cache_dir=None):
    """Train, or load a checkpoint written earlier for the same digest."""
    if cache_dir is None:
        return run_training(exp)
    os.makedirs(cache_dir, exist_ok=True)
    fname = os.path.join(cache_dir, f"{exp.name}-s{exp.seed}-{exp.digest()}.json")
    if os.path.exists(fname):
        tm = TrainedModel.load(fname)
        reports = {k: trainer.TrainReport(**v) for k, v in tm.log.items() if k != "experiment"}
        return tm, reports
    tm, reports = run_training(exp)
    tm.save(fname)
    return tm, reports


# --- validation ---------------------------------------------------------------


def validation_path(label):
    a, b = datagen.build_validation_paths()
    try:
        return {"A": a, "B": b}[label.upper()]
    except KeyError:
        raise ValueError(f"unknown validation path {label!r}; valid: A, B") from None


def high_rate_steps(path, dt_max=0.005):
    """Rows entered by an increment no longer than ``dt_max``."""
    dt = path.dt
    # dt comes from differencing t, so allow for rounding
    return np.flatnonzero((dt > 0) & (dt <= dt_max * (1 + 1e-9)))


def predict(tm: TrainedModel, path):
    if tm.model.kind.startswith("fnn_psiphi"):
        return tm.predict(path, strict=False)
    return tm.predict(path)


def path_metrics(trace, ref, path, diss_scale=None):
    """Stress errors against the reference and dissipation-sign flags.

    ``diss_scale`` is the model's dissipation scale, so negative rates are
    judged in scaled units.
    """
    err = np.abs(trace.sig - ref["sig"])
    rng = float(np.ptp(ref["sig"]))
    n = len(path) - 1
    out = {
        "n_steps": n,
        "stress_mae": float(err.mean()),
        "stress_mae_pct": float(100 * err.mean() / rng),
        "stress_max_err": float(err.max()),
        "stress_max_err_pct": float(100 * err.max() / rng),
        "stress_range": rng,
    }
    fast = high_rate_steps(path)
    if len(fast):
        out["high_rate_max_err_pct"] = float(100 * err[fast].max() / rng)
    out.update(dissipation_flags(trace, path, scale=diss_scale))
    if trace.converged is not None:
        out["nonconverged_steps"] = int((~trace.converged[1:]).sum())
    return out


def dissipation_flags(trace, path, tol=1e-10, scale=None):
    """Steps (rows >= 1) whose predicted dissipation rate is negative.

    ``scale`` converts the physical rate into the units the tolerance is
    stated in; by default the largest |dissipation| of the trace is used.
    """
    if trace.diss is None:
        return {"diss_available": False}
    d = np.asarray(trace.diss[1:], dtype=float)
    s = scale if scale is not None else max(float(np.max(np.abs(d))), 1e-300)
    neg = np.flatnonzero(d / s < -tol) + 1
    eps = np.asarray(path.eps)
    return {
        "diss_available": True,
        "neg_diss_steps": [int(i) for i in neg],
        "neg_diss_frac": float(len(neg) / max(len(d), 1)),
        "neg_diss_max_abs_strain": float(np.max(np.abs(eps[neg]))) if len(neg) else 0.0,
    }


def reference(material, path):
    return refmat.simulate(refmat.get_material(material), path.t, path.eps)


def validate(tm: TrainedModel, material, label, out_dir=None, tag=None):
    """Roll out ``tm`` on validation path ``label``; optional trace/metric files."""
    path = validation_path(label)
    ref = reference(material, path)
    trace = predict(tm, path)
    metrics = path_metrics(trace, ref, path, diss_scale=tm.model.scaling.s.get("diss"))
    metrics["path"] = label.upper()
    metrics["material"] = material
    metrics["kind"] = tm.model.kind
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        tag = tag or f"{tm.model.kind}-{material}"
        write_joined_trace(os.path.join(out_dir, f"{tag}-path{label.upper()}.csv"), trace, ref)
        write_json(os.path.join(out_dir, f"{tag}-path{label.upper()}-metrics.json"), metrics)
    return metrics, trace


TRACE_REF_COLUMNS = ("sig_ref", "psi_ref", "diss_ref")


def write_joined_trace(fname, trace, ref):
    cols = trace.columns()
    ref_cols = {"sig_ref": ref["sig"], "psi_ref": ref["psi"], "diss_ref": ref["diss"]}
    names = ["t", "eps"] + list(TRACE_REF_COLUMNS) + [k for k in cols if k not in ("t", "eps")]
    with open(fname, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(len(trace.t)):
            row = []
            for k in names:
                v = ref_cols[k][i] if k in ref_cols else cols[k][i]
                row.append(str(int(v)) if k == "nr_iters" else repr(float(v)))
            w.writerow(row)


def read_trace(fname):
    """Read a joined trace and check its schema; returns {column: array}."""
    with open(fname, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    required = ["t", "eps", *TRACE_REF_COLUMNS, "sig_hat", "psi_hat", "diss_hat"]
    missing = [c for c in required if c not in head]
    if missing or head[-1] != "nr_iters":
        raise ValueError(f"trace {fname} has a bad header (missing {missing})")
    data = {k: np.array([float(r[j]) for r in body]) for j, k in enumerate(head)}
    if len(body) == 0 or np.any(np.diff(data["t"]) <= 0):
        raise ValueError(f"trace {fname} has non-increasing time stamps")
    return data


def write_json(fname, obj):
    with open(fname, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# --- figure bundles -----------------------------------------------------------

_ALL_MATS = ("V1", "V2", "P1", "P2")


def _grid(kind):
    return [(m, kind, 1) for m in _ALL_MATS]


_PATH_B_MODELS = [("V1", k, 1) for k in KINDS]

FIGURES = {
    "fig9": ([("V1", "fnn_sigma", 1), ("V2", "fnn_sigma", 1), ("V2", "fnn_sigma", 2), ("P1", "fnn_sigma", 1), ("P2", "fnn_sigma", 1)], "A"),
    "fig10": (_grid("rnn_sigma"), "A"),
    "fig11": (_grid("fnn_xipsi"), "A"),
    "fig12": (_grid("rnn_xipsi"), "A"),
    "fig13": (_grid("fnn_psiphi"), "A"),
    "fig14": (_grid("fnn_psiphistar"), "A"),
    "fig15": (_grid("fnn_psiphixi"), "A"),
    # path B for the V1 models: stress, free energy and dissipation views of one run
    "fig16": (_PATH_B_MODELS, "B"),
    "fig17": (_PATH_B_MODELS, "B"),
    "fig18": (_PATH_B_MODELS, "B"),
}


def reproduce(figure, out_dir, seed=0, cache_dir=None, log=print):
    """Train (or reuse) the models of one figure and write their traces.

    Returns {model tag: metrics}.  ``figure='all'`` runs every bundle and
    reuses models shared between bundles.
    """
    if figure == "all":
        cache_dir = cache_dir or os.path.join(out_dir, "models")
        return {f: reproduce(f, out_dir, seed, cache_dir, log) for f in FIGURES}
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}; valid: {', '.join(FIGURES)}, all")
    entries, label = FIGURES[figure]
    fig_dir = os.path.join(out_dir, figure)
    results = {}
    for material, kind, n_pt in entries:
        exp = ExperimentConfig(material, kind, n_pt=n_pt, seed=seed)
        tm, reports = cached_training(exp, cache_dir)
        metrics, _ = validate(tm, material, label, fig_dir, tag=exp.name)
        metrics["train_loss"] = final_loss(reports).total
        metrics["train_components"] = final_loss(reports).components
        results[exp.name] = metrics
        log(f"{figure} {exp.name}: loss {metrics['train_loss']:.2e}, "
            f"stress MAE {metrics['stress_mae']:.3g} MPa ({metrics['stress_mae_pct']:.2f} %)")
    write_json(os.path.join(fig_dir, "metrics.json"), results)
    return results

