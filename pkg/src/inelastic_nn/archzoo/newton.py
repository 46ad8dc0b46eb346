"""Batched damped Newton-Raphson for small per-item nonlinear systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NewtonError(RuntimeError):
    def __init__(self, msg, step=None, residual=None):
        super().__init__(msg)
        self.step = step
        self.residual = residual


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: np.ndarray
    iters: np.ndarray
    converged: np.ndarray


def solve_batched(fun, x0, tol=1e-8, maxit=50, max_halvings=8):
    """Solve fun(x) = 0 independently for every row of ``x`` (B, N).

    ``fun(x, with_jac)`` returns the residual (B, N) and, when requested, the
    Jacobian (B, N, N).  A row is converged once max |r| < tol.  A full
    Newton step that does not reduce the residual norm is halved up to
    ``max_halvings`` times; the last trial is accepted regardless so that
    the iteration can continue.
    """
    x = np.array(x0, dtype=float, copy=True)
    B = x.shape[0]
    iters = np.zeros(B, dtype=int)
    r, J = fun(x, True)
    rn = np.max(np.abs(r), axis=1)
    done = rn < tol
    for _ in range(maxit):
        act = ~done
        if not act.any():
            break
        try:
            dx = np.linalg.solve(J[act], r[act][..., None])[..., 0]
        except np.linalg.LinAlgError:
            dx = np.stack([np.linalg.lstsq(Jb, rb, rcond=None)[0] for Jb, rb in zip(J[act], r[act])])
        if not np.all(np.isfinite(dx)):
            bad = ~np.isfinite(dx).all(axis=1)
            dx[bad] = 0.0
        xa, ra = x[act], rn[act]
        lam = np.ones(len(xa))
        pending = np.ones(len(xa), dtype=bool)
        trial = xa.copy()
        for h in range(max_halvings + 1):
            trial[pending] = xa[pending] - lam[pending, None] * dx[pending]
            rt, _ = fun(_embed(x, act, trial), False)
            rt_n = np.max(np.abs(rt[act]), axis=1)
            better = (rt_n < ra) | (rt_n < tol)
            pending &= ~better
            pending &= np.isfinite(rt_n) | (h == max_halvings)
            if not pending.any() or h == max_halvings:
                break
            lam[pending] *= 0.5
        blown = ~np.isfinite(rt_n)
        trial[blown] = xa[blown]
        x[act] = trial
        iters[act] += 1
        r, J = fun(x, True)
        rn = np.max(np.abs(r), axis=1)
        done = done | (rn < tol)
    return NewtonResult(x, r, iters, rn < tol)


def _embed(x, mask, rows):
    out = x.copy()
    out[mask] = rows
    return out
