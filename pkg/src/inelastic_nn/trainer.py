"""Full-batch training with gradient verification."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .adnn import core as ad


class TrainingError(RuntimeError):
    def __init__(self, msg, theta=None, iteration=None):
        super().__init__(msg)
        self.theta = theta
        self.iteration = iteration


@dataclass
class OptimConfig:
    # "adam", or Adam followed by a quasi-Newton stage on the last
    # ``refine_frac`` of the budget: "adam+bfgs" (dense BFGS) or "adam+lbfgs"
    method: str = "adam"
    lr: float = 1e-3
    max_iter: int = 5000
    tol: float = 1e-8  # relative best-loss change over ``window`` iterations
    window: int = 100
    plateau: int = 200
    decay: float = 0.5
    refine_frac: float = 0.1
    min_decays: int = 4  # plateau decays required before early stopping
    max_restarts: int = 50  # quasi-Newton restarts after line-search failure
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1 or not self.tol > 0:
            raise ValueError("need max_iter >= 1 and tol > 0")
        if self.method not in ("adam", "adam+bfgs", "adam+lbfgs"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class TrainReport:
    total: float
    components: dict
    weights: dict
    iterations: int
    wall_time: float
    stop_reason: str
    history: list = field(default_factory=list)  # one row per loss evaluation: (eval, total, components...)
    grad_check: dict = None
    detail: str = ""

    def weighted_sum(self):
        return sum(self.weights[k] * v for k, v in self.components.items() if self.weights[k] != 0.0)

    def to_dict(self, with_history=False):
        d = asdict(self)
        if not with_history:
            d.pop("history")
        return d

    def save(self, fname):
        with open(fname, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    def save_history(self, fname):
        names = list(self.components)
        with open(fname, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eval", "total"] + names)
            for row in self.history:
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def value_and_grad(loss_fn, theta):
    """loss_fn(theta Node) -> (total node, terms); returns floats and gradient."""
    tn = ad.variable(theta)
    total, terms = loss_fn(tn)
    g = ad.grad(total, tn)
    comps = {k: float(ad.value_of(v)) for k, (_, v) in terms.items()}
    weights = {k: float(w) for k, (w, _) in terms.items()}
    return float(ad.value_of(total)), g, comps, weights


def minimize(loss_fn, theta0, cfg: OptimConfig = OptimConfig()):
    """Adam on the full batch with plateau decay and best-iterate retention.

    ``loss_fn`` maps a parameter Node to (total loss node, terms dict).
    Returns (best theta, TrainReport).
    """
    t_start = time.perf_counter()
    theta = np.array(theta0, dtype=float, copy=True)
    n_adam = cfg.max_iter
    if cfg.method != "adam":
        n_adam = max(1, int(round(cfg.max_iter * (1.0 - cfg.refine_frac))))
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr = cfg.lr
    best = (np.inf, theta.copy(), None, None)
    best_trace = []
    history = []
    since_improve = 0
    n_decays = 0
    reason = "max_iter"
    detail = ""
    it = 0
    for it in range(1, n_adam + 1):
        f, g, comps, weights = value_and_grad(loss_fn, theta)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            raise TrainingError(f"non-finite loss or gradient at iteration {it}", theta.copy(), it)
        history.append([it, f] + list(comps.values()))
        if f < best[0]:
            best = (f, theta.copy(), comps, weights)
            since_improve = 0
        else:
            since_improve += 1
        best_trace.append(best[0])
        if since_improve >= cfg.plateau:
            lr *= cfg.decay
            n_decays += 1
            since_improve = 0
        if n_decays >= cfg.min_decays and len(best_trace) > cfg.window:
            old = best_trace[-cfg.window - 1]
            if old - best[0] <= cfg.tol * abs(best[0]):
                reason = "converged"
                break
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**it)
        vh = v / (1 - b2**it)
        theta = theta - lr * mh / (np.sqrt(vh) + eps)
    n_done = it
    if cfg.method != "adam" and reason != "converged":
        n_left = cfg.max_iter - n_done
        if n_left > 0:

            def fg(x):
                f, g, comps, weights = value_and_grad(loss_fn, x)
                history.append([len(history) + 1, f] + list(comps.values()))
                if not (np.isfinite(f) and np.all(np.isfinite(g))):
                    # let the line search back off instead of aborting
                    return np.inf, np.zeros_like(g)
                return f, g

            # a line search that fails on a kink of the MAE ends a run early;
            # restart with a fresh Hessian while the budget lasts and the
            # restart still makes relative progress
            restarts = 0
            while n_left > 0:
                if cfg.method == "adam+bfgs":
                    opts = {"maxiter": n_left, "gtol": 0.0}
                    qn = "BFGS"
                else:
                    opts = {"maxiter": n_left, "maxfun": 2 * n_left, "maxcor": 50, "ftol": 0.0, "gtol": 0.0}
                    qn = "L-BFGS-B"
                f_start = best[0]
                res = scipy_minimize(fg, best[1], jac=True, method=qn, options=opts)
                f, _, comps, weights = value_and_grad(loss_fn, res.x)
                if np.isfinite(f) and f < best[0]:
                    best = (f, np.array(res.x), comps, weights)
                used = max(1, int(getattr(res, "nit", 1)))
                n_done += used
                n_left -= used
                detail = str(res.message)
                if f_start - best[0] <= cfg.tol * abs(best[0]) or restarts >= cfg.max_restarts:
                    break
                restarts += 1
            reason = "refined"
            detail = f"{detail} ({restarts} restarts)"
    f_best, theta_best, comps, weights = best
    report = TrainReport(
        total=float(f_best),
        components=comps,
        weights=weights,
        iterations=n_done,
        wall_time=time.perf_counter() - t_start,
        stop_reason=reason,
        history=history,
        detail=detail,
    )
    return theta_best, report


def train(model, seqs, cfg: OptimConfig = OptimConfig(), theta0=None, phase_cfgs=None):
    """Run every training phase of ``model``; returns (theta, {phase: report})."""
    data = model.prepare(seqs)
    theta = model.init_theta(cfg.seed) if theta0 is None else np.array(theta0, dtype=float)
    reports = {}
    for phase in model.phases:
        sl = model.trainable(phase)
        pcfg = (phase_cfgs or {}).get(phase, cfg)
        loss_fn = phase_loss(model, data, phase, theta.copy())
        sub, rep = minimize(loss_fn, theta[sl], pcfg)
        theta[sl] = sub
        reports["all" if phase is None else f"phase{phase}"] = rep
    return theta, reports


def phase_loss(model, data, phase, base):
    """Loss of ``phase`` as a function of its trainable block only; the rest
    of the parameters stay at ``base``."""
    sl = model.trainable(phase)
    rest = _masked(base, sl)

    def loss_fn(sub):
        full = ad.scatter(sub, sl, base.shape) + rest
        return model.loss(full, data, phase)

    return loss_fn


def _masked(base, sl):
    out = base.copy()
    out[sl] = 0.0
    return out


# --- gradient verification -----------------------------------------------------


def _fd_directional(f, x, d, h):
    """Richardson-extrapolated central difference of f along d, plus the
    two raw estimates used for kink detection."""
    c1 = (f(x + h * d) - f(x - h * d)) / (2 * h)
    c2 = (f(x + 0.5 * h * d) - f(x - 0.5 * h * d)) / h
    return (4 * c2 - c1) / 3, c1, c2


def grad_check(loss_fn, theta, samples=20, rng=None, h=1e-4, rtol=1e-5, floor=1e-6, pass_frac=0.95):
    """Compare the AD gradient to central differences on random coordinates.

    A sample whose two difference estimates disagree far beyond the
    expected truncation error straddles a kink (relu, |.|); it is flagged
    and replaced by another coordinate.  Passes if at least ``pass_frac``
    of the accepted samples meet ``rtol``.
    """
    rng = np.random.default_rng(0) if rng is None else rng

    def f(x):
        total, _ = loss_fn(x)
        return float(ad.value_of(total))

    _, g, _, _ = value_and_grad(loss_fn, theta)
    errs, kinks, tried = [], 0, 0
    n = len(theta)
    while len(errs) < samples and tried < 20 * samples:
        tried += 1
        i = int(rng.integers(n))
        e = np.zeros(n)
        e[i] = 1.0
        fd, c1, c2 = _fd_directional(f, theta, e, h)
        if abs(c1 - c2) > 1e-3 * max(abs(c2), floor):
            kinks += 1
            continue
        errs.append(abs(fd - g[i]) / max(abs(fd), abs(g[i]), floor))
    errs = np.array(errs)
    ok = bool(len(errs) > 0 and np.mean(errs < rtol) >= pass_frac)
    return {
        "passed": ok,
        "samples": int(len(errs)),
        "kinks_excluded": int(kinks),
        "max_rel_err": float(errs.max()) if len(errs) else float("nan"),
        "frac_within": float(np.mean(errs < rtol)) if len(errs) else 0.0,
    }


def hvp_check(loss_fn, theta, rng=None, h=1e-4, floor=1e-6):
    """Hessian-vector product by double AD against differences of the AD
    gradient along a random direction; returns the relative error."""
    rng = np.random.default_rng(0) if rng is None else rng
    d = rng.standard_normal(len(theta))
    d /= np.linalg.norm(d)
    tn = ad.variable(theta)
    total, _ = loss_fn(tn)
    g = ad.grad(total, tn, create_graph=True)
    hv = ad.grad(ad.sum_(g * d), tn)

    def gfun(x):
        return value_and_grad(loss_fn, x)[1]

    c1 = (gfun(theta + h * d) - gfun(theta - h * d)) / (2 * h)
    c2 = (gfun(theta + 0.5 * h * d) - gfun(theta - 0.5 * h * d)) / h
    fd = (4 * c2 - c1) / 3
    scale = max(np.linalg.norm(fd), np.linalg.norm(hv), floor)
    return float(np.linalg.norm(fd - hv) / scale), float(np.linalg.norm(c1 - c2) / scale)
