"""Training data, validation paths and normalization.

Sequences always start with the zero state in row 0; ``dt[n]`` is the
backward increment t[n] - t[n-1] with ``dt[0] = 0``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.interpolate import CubicSpline

from . import refmat
from .refmat import StrainPath


class DatasetError(ValueError):
    pass


@dataclass
class RandomWalkConfig:
    s_deps: float = 0.0025
    eps_max: float = 0.02
    dt_min: float = 0.02
    dt_max: float = 0.1
    n_steps: int = 100
    n_seq: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.dt_min < self.dt_max:
            raise ValueError("need 0 < dt_min < dt_max")
        if self.s_deps < 0 or self.n_steps < 1 or self.n_seq < 1:
            raise ValueError("invalid random-walk configuration")


@dataclass
class Sequence:
    t: np.ndarray
    dt: np.ndarray
    eps: np.ndarray
    sig: np.ndarray
    xi: np.ndarray  # (rows, n_xi)
    psi: np.ndarray
    diss: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def n_xi(self):
        return self.xi.shape[1]

    @property
    def path(self):
        return StrainPath(self.t, self.eps)

    def copy(self):
        return Sequence(**{k: np.array(v, copy=True) for k, v in self.__dict__.items()})


def respond(material, path: StrainPath) -> Sequence:
    """Attach the reference material response to a strain path."""
    params = refmat.get_material(material) if isinstance(material, str) else material
    tr = refmat.simulate(params, path.t, path.eps)
    return Sequence(path.t, path.dt, tr["eps"], tr["sig"], tr["xi"], tr["psi"], tr["diss"])


def random_walk_path(cfg: RandomWalkConfig, index: int) -> StrainPath:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    t = np.zeros(cfg.n_steps + 1)
    eps = np.zeros(cfg.n_steps + 1)
    for n in range(cfg.n_steps):
        t[n + 1] = t[n] + rng.uniform(cfg.dt_min, cfg.dt_max)
        for _ in range(10_000):
            de = rng.normal(0.0, cfg.s_deps) if cfg.s_deps > 0 else 0.0
            if abs(eps[n] + de) <= cfg.eps_max:
                break
        else:
            raise ValueError("strain increment resampling exceeded 10^4 draws")
        eps[n + 1] = eps[n] + de
    return StrainPath(t, eps)


def gen_random_walk(cfg: RandomWalkConfig, material):
    return [respond(material, random_walk_path(cfg, i)) for i in range(cfg.n_seq)]


# knots (t [s], strain [-]) for the smooth training path: one large and one small lobe
SPLINE_KNOTS = (
    (0.0, 0.0),
    (1.5, 0.010),
    (3.5, 0.019),
    (5.5, 0.0),
    (7.5, -0.019),
    (9.0, -0.008),
    (10.5, 0.007),
    (12.0, -0.005),
    (13.5, 0.0),
    (15.0, 0.0),
)


def strain_spline(knots=SPLINE_KNOTS):
    """eps(t) along the natural cubic spline through ``knots``, held constant
    beyond the last knot."""
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 2 or len(knots) < 2:
        raise ValueError("a spline path needs at least 2 knots")
    if np.any(np.diff(knots[:, 0]) <= 0):
        raise ValueError("knot times must be strictly increasing")
    cs = CubicSpline(knots[:, 0], knots[:, 1], bc_type="natural")
    t_end = knots[-1, 0]
    return lambda t: cs(np.minimum(t, t_end))


def spline_path(knots=SPLINE_KNOTS, dt_min=0.01, dt_max=0.02, n=900, seed=0) -> StrainPath:
    """The spline through ``knots`` sampled at ``n`` random steps."""
    spline = strain_spline(knots)
    knots = np.asarray(knots, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    t = np.concatenate([[knots[0, 0]], knots[0, 0] + np.cumsum(rng.uniform(dt_min, dt_max, n))])
    eps = spline(t)
    eps[0] = 0.0 if knots[0, 1] == 0.0 else eps[0]
    return StrainPath(t, eps)


def gen_spline_path(material, knots=SPLINE_KNOTS, dt_min=0.01, dt_max=0.02, n=900, seed=0):
    return respond(material, spline_path(knots, dt_min, dt_max, n, seed))


# --- validation paths ------------------------------------------------------

PATH_A_WAYPOINTS = (
    (0.0, 0.0),
    (2.0, 0.018),
    (3.5, 0.003),
    (4.5, 0.010),
    (6.5, -0.016),
    (8.0, -0.004),
    (9.0, -0.010),
    (10.0, 0.0),
)


def _piecewise(waypoints, dt):
    wp = np.asarray(waypoints, dtype=float)
    n = int(round((wp[-1, 0] - wp[0, 0]) / dt))
    t = wp[0, 0] + dt * np.arange(n + 1)
    return t, np.interp(t, wp[:, 0], wp[:, 1])


def build_path_a():
    t, eps = _piecewise(PATH_A_WAYPOINTS, 0.05)
    return StrainPath(t, eps)


def build_path_b():
    """Extrapolation path: larger strains, a fast cycle, long and short steps."""
    segs_t, segs_e = [], []
    t, e = _piecewise(((0, 0), (1, 0.015), (2, 0.010), (3, 0.030), (4, 0.010), (5, 0)), 0.05)
    segs_t.append(t)
    segs_e.append(e)
    # 16 steps of 5 ms at 62.5 %/s: up to 2.5 % and back
    k = np.arange(1, 17)
    segs_t.append(5.0 + 0.005 * k)
    segs_e.append(0.025 - np.abs(8 - k) * 0.003125)
    # realign to the 50 ms grid, then hold zero strain until 6 s
    th = np.concatenate([[5.10], 5.10 + 0.05 * np.arange(1, 19)])
    segs_t.append(th)
    segs_e.append(np.zeros_like(th))
    t1 = 6.0 + 0.125 * np.arange(1, 9)
    segs_t.append(t1)
    segs_e.append(-0.015 * (t1 - 6.0))
    t2 = 7.0 + 0.2 * np.arange(1, 6)
    segs_t.append(t2)
    segs_e.append(-0.015 * (8.0 - t2))
    t3 = 8.0 + 0.05 * np.arange(1, 41)
    segs_t.append(t3)
    segs_e.append(0.03 * (t3 - 8.0))
    t = np.round(np.concatenate(segs_t), 10)
    eps = np.concatenate(segs_e)
    eps[np.abs(eps) < 1e-15] = 0.0
    return StrainPath(t, eps)


def write_path(path_obj: StrainPath, fname):
    with open(fname, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "eps"])
        for t, e in zip(path_obj.t, path_obj.eps):
            w.writerow([repr(float(t)), repr(float(e))])


def read_path(fname) -> StrainPath:
    data = np.loadtxt(fname, delimiter=",", skiprows=1, ndmin=2)
    return StrainPath(data[:, 0], data[:, 1])


def build_validation_paths():
    """(interpolation path A, extrapolation path B) from the shipped fixtures."""
    root = resources.files("inelastic_nn") / "fixtures" / "paths"
    with resources.as_file(root / "path_a.csv") as fa, resources.as_file(root / "path_b.csv") as fb:
        return read_path(fa), read_path(fb)


def inside_training_hull(path_obj: StrainPath, cfg: RandomWalkConfig = RandomWalkConfig()):
    dt = np.diff(path_obj.t)
    return bool(
        np.all(np.abs(path_obj.eps) <= cfg.eps_max + 1e-15)
        and np.all(dt >= cfg.dt_min - 1e-12)
        and np.all(dt <= cfg.dt_max + 1e-12)
    )


# --- normalization -----------------------------------------------------------

INDEPENDENT = ("eps", "dt", "psi")


@dataclass
class ScalingSet:
    """f_scaled = (f - m[q]) / s[q] for every quantity q."""

    m: dict = field(default_factory=dict)
    s: dict = field(default_factory=dict)

    def fwd(self, q, x):
        return (np.asarray(x, dtype=float) - self.m.get(q, 0.0)) / self.s[q]

    def inv(self, q, x):
        return np.asarray(x, dtype=float) * self.s[q] + self.m.get(q, 0.0)

    def to_dict(self):
        return {"m": dict(self.m), "s": dict(self.s)}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["m"]), dict(d["s"]))

    def save(self, fname):
        with open(fname, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, fname):
        with open(fname) as fh:
            return cls.from_dict(json.load(fh))


def _extrema(seqs, attr, skip_first=False):
    vals = np.concatenate([np.ravel(getattr(s, attr)[1:] if skip_first else getattr(s, attr)) for s in seqs])
    return float(vals.min()), float(vals.max())


def fit_scaling(seqs, offsets=False) -> ScalingSet:
    """Scaling factors from data extrema.

    Without offsets the independent quantities (strain, time increment,
    free energy) are divided by their largest magnitude and every other
    factor follows from them, so that derivative relations between scaled
    quantities keep their physical form.  With ``offsets`` strain, stress and
    time increment are each mapped onto [-1, 1] (used by the black-box
    models that never differentiate a potential).
    """
    sc = ScalingSet()
    lims = {
        "eps": _extrema(seqs, "eps"),
        "dt": _extrema(seqs, "dt", skip_first=True),
        "psi": _extrema(seqs, "psi"),
        "sig": _extrema(seqs, "sig"),
        "t": _extrema(seqs, "t"),
    }
    for q in INDEPENDENT + ("sig", "t"):
        lo, hi = lims[q]
        if not hi > lo:
            raise DatasetError(f"degenerate scale for {q}: min = max = {lo}")
    for q in INDEPENDENT + ("t",):
        lo, hi = lims[q]
        sc.s[q] = max(abs(lo), abs(hi))
        sc.m[q] = 0.0
    s_eps, s_dt, s_psi = sc.s["eps"], sc.s["dt"], sc.s["psi"]
    sc.s["sig"] = s_psi / s_eps
    sc.s["xi"] = s_eps
    sc.s["tau"] = s_psi / s_eps
    sc.s["phi"] = s_psi / s_dt
    sc.s["phistar"] = s_psi / s_dt
    sc.s["diss"] = s_psi / s_dt
    sc.s["xidot"] = s_eps / s_dt
    for q in ("sig", "xi", "tau", "phi", "phistar", "diss", "xidot"):
        sc.m[q] = 0.0
    if offsets:
        for q in ("eps", "sig", "dt"):
            lo, hi = lims[q]
            sc.m[q] = 0.5 * (hi + lo)
            sc.s[q] = 0.5 * (hi - lo)
    return sc


def apply_scaling(sc: ScalingSet, seq: Sequence) -> Sequence:
    dt = sc.fwd("dt", seq.dt)
    dt[0] = 0.0 if sc.m.get("dt", 0.0) == 0.0 else dt[0]
    return Sequence(
        t=sc.fwd("t", seq.t),
        dt=dt,
        eps=sc.fwd("eps", seq.eps),
        sig=sc.fwd("sig", seq.sig),
        xi=sc.fwd("xi", seq.xi),
        psi=sc.fwd("psi", seq.psi),
        diss=sc.fwd("diss", seq.diss),
    )


def invert_scaling(sc: ScalingSet, seq: Sequence) -> Sequence:
    dt = sc.inv("dt", seq.dt)
    dt[0] = 0.0 if sc.m.get("dt", 0.0) == 0.0 else dt[0]
    return Sequence(
        t=sc.inv("t", seq.t),
        dt=dt,
        eps=sc.inv("eps", seq.eps),
        sig=sc.inv("sig", seq.sig),
        xi=sc.inv("xi", seq.xi),
        psi=sc.inv("psi", seq.psi),
        diss=sc.inv("diss", seq.diss),
    )


# --- tuples for feedforward models ----------------------------------------------


@dataclass
class TupleSet:
    """Sliding-window samples; history column j holds step n - j.

    ``hist_dt[:, j]`` is the increment from step n - j to n - j + 1.
    """

    eps_new: np.ndarray
    sig_new: np.ndarray
    xi_new: np.ndarray
    psi_new: np.ndarray
    hist_eps: np.ndarray
    hist_sig: np.ndarray
    hist_dt: np.ndarray
    hist_xi: np.ndarray  # (B, n_xi), step n only
    skipped: int = 0

    def __len__(self):
        return len(self.eps_new)

    @property
    def dt(self):
        return self.hist_dt[:, 0]


def to_fnn_tuples(seqs, npt=1) -> TupleSet:
    if npt < 1:
        raise ValueError("need at least one history step")
    cols = {k: [] for k in ("eps_new", "sig_new", "xi_new", "psi_new", "he", "hs", "hd", "hx")}
    skipped = 0
    for s in seqs:
        rows = len(s)
        if rows < npt + 1:
            skipped += 1
            continue
        tgt = np.arange(npt, rows)
        lag = tgt[:, None] - 1 - np.arange(npt)[None, :]
        cols["eps_new"].append(s.eps[tgt])
        cols["sig_new"].append(s.sig[tgt])
        cols["xi_new"].append(s.xi[tgt])
        cols["psi_new"].append(s.psi[tgt])
        cols["he"].append(s.eps[lag])
        cols["hs"].append(s.sig[lag])
        cols["hd"].append(s.dt[lag + 1])
        cols["hx"].append(s.xi[tgt - 1])
    if not cols["eps_new"]:
        raise DatasetError("no sequence is long enough for the requested history")
    cat = {k: np.concatenate(v, axis=0) for k, v in cols.items()}
    return TupleSet(
        cat["eps_new"], cat["sig_new"], cat["xi_new"], cat["psi_new"],
        cat["he"], cat["hs"], cat["hd"], cat["hx"], skipped,
    )


# --- file formats --------------------------------------------------------------


def write_dataset(fname, seqs):
    k = seqs[0].n_xi
    with open(fname, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seq", "step", "t", "dt", "eps", "sig"] + [f"xi{j + 1}" for j in range(k)] + ["psi", "diss"])
        for i, s in enumerate(seqs):
            for n in range(len(s)):
                w.writerow(
                    [i, n]
                    + [repr(float(v)) for v in (s.t[n], s.dt[n], s.eps[n], s.sig[n])]
                    + [repr(float(v)) for v in s.xi[n]]
                    + [repr(float(s.psi[n])), repr(float(s.diss[n]))]
                )


def read_dataset(fname):
    with open(fname) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(fname, delimiter=",", skiprows=1, ndmin=2)
    xi_cols = [j for j, h in enumerate(header) if h.startswith("xi")]
    idx = {h: j for j, h in enumerate(header)}
    for req in ("seq", "step", "t", "dt", "eps", "sig", "psi", "diss"):
        if req not in idx:
            raise DatasetError(f"dataset column {req!r} missing")
    seqs = []
    for sid in np.unique(data[:, idx["seq"]]):
        d = data[data[:, idx["seq"]] == sid]
        d = d[np.argsort(d[:, idx["step"]])]
        seqs.append(
            Sequence(
                d[:, idx["t"]], d[:, idx["dt"]], d[:, idx["eps"]], d[:, idx["sig"]],
                d[:, xi_cols].reshape(len(d), len(xi_cols)), d[:, idx["psi"]], d[:, idx["diss"]],
            )
        )
    return seqs


def standard_dataset(material, n_seq=10, seed=0):
    """Random-walk training data with the default walk parameters."""
    cfg = RandomWalkConfig(n_seq=n_seq, seed=seed)
    return gen_random_walk(cfg, material)
