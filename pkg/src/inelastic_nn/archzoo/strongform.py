"""Models whose structure guarantees non-negative dissipation.

A normalized free energy and a normalized convex (dual) dissipation
potential define the internal-variable evolution.  At prediction time the
rates are found per step by Newton iteration on the stationarity condition;
the dissipation rate is the product of the potential-side force and the
rate, which a convex potential with zero slope at the origin keeps
non-negative.
"""

from __future__ import annotations

import numpy as np

from .. import adnn as nn
from ..adnn import core as ad
from ..datagen import DatasetError
from .base import Model, PredictionTrace, hidden_spec, mae
from .newton import NewtonError, solve_batched
from .potentials import DissipationPotential, FreeEnergy

NR_TOL = 1e-8
NR_MAXIT = 50


def transitions(seqs):
    """Rows n >= 1 of every scaled sequence with the preceding state."""
    eps, xi, xi_prev, dt, sig = [], [], [], [], []
    for s in seqs:
        eps.append(s.eps[1:])
        xi.append(s.xi[1:])
        xi_prev.append(s.xi[:-1])
        dt.append(s.dt[1:])
        sig.append(s.sig[1:])
    cat = np.concatenate
    return {
        "eps": cat(eps)[:, None],
        "xi": cat(xi),
        "xi_prev": cat(xi_prev),
        "dt": cat(dt)[:, None],
        "sig": cat(sig)[:, None],
    }


class FnnPsiPhi(Model):
    """Free energy plus dissipation potential in the internal-variable rates."""

    kind = "fnn_psiphi"
    needs_xi = True
    dual = False

    def _n_xi(self):
        return self.n_xi_data

    def build(self):
        n = self._n_xi()
        self.n_xi = n
        cfg = self.config
        psi = self.pack.add("psi", nn.Dense, hidden_spec(cfg, "psi", 1 + n, 1))
        con = self.pack.add(
            "con", nn.Dense, hidden_spec(cfg, "con", n, 1, weight_mode="nonneg_all")
        )
        pos = self.pack.add(
            "pos",
            nn.Dense,
            hidden_spec(cfg, "pos", 1 + n, 1, weight_mode="nonneg_output", bias_mode="nonneg"),
        )
        self.psi = FreeEnergy(psi)
        self.phi = DissipationPotential(con, pos)

    def prepare(self, seqs):
        d = transitions(self.scaled(seqs))
        d["xidot"] = (d["xi"] - d["xi_prev"]) / d["dt"]
        return d

    # potentials ----------------------------------------------------------
    def energy(self, bound_psi, eps, xi, create_graph):
        """psi, sigma, tau for batches; derivatives w.r.t. the inputs only."""
        if isinstance(xi, ad.Node):
            x = ad.concatenate([eps, xi], axis=1)
        else:
            x = ad.variable(np.concatenate([eps, xi], axis=1))
        psi = self.psi.value(bound_psi, x)
        g = ad.grad(ad.sum_(psi), x, create_graph=create_graph)
        return psi, g[:, 0:1], -g[:, 1:], x

    def loss_terms(self, theta, data, phase=None):
        w = self.config.weights
        bp = self.psi.bind(theta)
        bd = self.phi.bind(theta)
        _, sig, tau, _ = self.energy(bp, data["eps"], data["xi"], True)
        state = np.concatenate([data["eps"], data["xi"]], axis=1)
        tau_hat = self.phi.slope(bd, data["xidot"], state)
        return {
            "sig": (w.get("sig", 1.0), mae(sig, data["sig"])),
            "biot": (w.get("biot", 0.3), mae(tau, tau_hat)),
        }

    # prediction ------------------------------------------------------------
    def step_residual(self, bound, eps, xi_prev, dt, rate, with_jac):
        """Residual of the stationarity condition for trial ``rate``.

        Returns (r, J, extras) with r (B, N), J (B, N, N) or None, and the
        stress, free energy, force and dissipation at the trial state.
        """
        bp, bd = bound
        xd = ad.variable(rate)
        xi = xi_prev + dt * xd
        psi, sig, tau, x = self.energy(bp, eps, xi, create_graph=with_jac)
        tau_hat = self.phi.slope(bd, xd, x, create_graph=with_jac)
        r = tau - tau_hat
        diss = ad.sum_(ad.value_of(tau_hat) * rate, axis=1)
        J = self._jacobian(r, xd) if with_jac else None
        extras = {"sig": ad.value_of(sig), "psi": ad.value_of(psi), "tau": ad.value_of(tau), "diss": ad.value_of(diss)}
        return ad.value_of(r), J, extras

    def _jacobian(self, r, xd):
        n = ad._shape(r)[1]
        rows = [ad.grad(ad.sum_(r[:, a]), xd) for a in range(n)]
        return np.stack(rows, axis=1)

    def rollout(self, theta, eps, dt, tol=NR_TOL, maxit=NR_MAXIT, strict=True):
        """Newton rollout for P paths at once on scaled arrays (P, R)."""
        theta = ad.value_of(theta)
        bound = (self.psi.bind(theta), self.phi.bind(theta))
        P, R = eps.shape
        n = self.n_xi
        xi = np.zeros((P, R, n))
        out = {k: np.zeros((P, R)) for k in ("sig", "psi", "diss")}
        iters = np.zeros((P, R), dtype=int)
        conv = np.ones((P, R), dtype=bool)
        rate = np.zeros((P, n))
        for k in range(1, R):
            e = eps[:, k:k + 1]
            d = dt[:, k:k + 1]
            xp = xi[:, k - 1]

            def fun(x, with_jac):
                r, J, _ = self.step_residual(bound, e, xp, d, x, with_jac)
                return r, J

            res = solve_batched(fun, rate, tol=tol, maxit=maxit)
            if strict and not res.converged.all():
                bad = int(np.argmin(res.converged))
                raise NewtonError(
                    f"Newton iteration failed at step {k} (path {bad}), "
                    f"residual {np.max(np.abs(res.residual[bad])):.3e}",
                    step=k,
                    residual=res.residual[bad],
                )
            rate = res.x
            _, _, ex = self.step_residual(bound, e, xp, d, rate, False)
            xi[:, k] = xp + d * rate
            out["sig"][:, k] = ex["sig"][:, 0]
            out["psi"][:, k] = ex["psi"][:, 0]
            out["diss"][:, k] = ex["diss"]
            iters[:, k] = res.iters
            conv[:, k] = res.converged
        return {"xi": xi, "iters": iters, "converged": conv, **out}

    def predict(self, theta, path, tol=NR_TOL, maxit=NR_MAXIT, strict=True):
        sc = self.scaling
        eps = sc.fwd("eps", path.eps)[None]
        dt = sc.fwd("dt", path.dt)[None]
        o = self.rollout(theta, eps, dt, tol, maxit, strict)
        return PredictionTrace(
            path.t,
            path.eps,
            sc.inv("sig", o["sig"][0]),
            sc.inv("psi", o["psi"][0]),
            sc.inv("diss", o["diss"][0]),
            sc.inv("xi", o["xi"][0]),
            o["iters"][0],
            o["converged"][0],
        )


class FnnPsiPhiStar(FnnPsiPhi):
    """Free energy plus dual dissipation potential in the internal forces."""

    kind = "fnn_psiphistar"
    dual = True

    def loss_terms(self, theta, data, phase=None):
        w = self.config.weights
        bp = self.psi.bind(theta)
        bd = self.phi.bind(theta)
        _, sig, tau, x = self.energy(bp, data["eps"], data["xi"], True)
        state = np.concatenate([data["eps"], data["xi"]], axis=1)
        rate_hat = self.phi.slope(bd, tau, state)
        return {
            "sig": (w.get("sig", 1.0), mae(sig, data["sig"])),
            "xidot": (w.get("xidot", 1.0), mae(rate_hat, data["xidot"])),
        }

    def step_residual(self, bound, eps, xi_prev, dt, rate, with_jac):
        bp, bd = bound
        xd = ad.variable(rate)
        xi = xi_prev + dt * xd
        psi, sig, tau, x = self.energy(bp, eps, xi, create_graph=with_jac)
        rate_hat = self.phi.slope(bd, tau, x, create_graph=with_jac)
        r = xd - rate_hat if with_jac else rate - ad.value_of(rate_hat)
        diss = np.sum(ad.value_of(tau) * ad.value_of(rate_hat), axis=1)
        J = self._jacobian(r, xd) if with_jac else None
        extras = {"sig": ad.value_of(sig), "psi": ad.value_of(psi), "tau": ad.value_of(tau), "diss": diss}
        return ad.value_of(r), J, extras


class FnnPsiPhiXi(FnnPsiPhi):
    """FnnPsiPhi trained without internal-variable data.

    An auxiliary net of time supplies one internal variable during training
    and is discarded afterwards.
    """

    kind = "fnn_psiphixi"
    needs_xi = False

    def _n_xi(self):
        return self.config.n_xi or 1

    def build(self):
        super().build()
        self.aux = self.pack.add("aux", nn.Dense, hidden_spec(self.config, "aux", 1, self.n_xi))

    def prepare(self, seqs):
        if len(seqs) != 1:
            raise DatasetError("the auxiliary internal-variable net needs exactly one smooth sequence")
        s = self.scaled(seqs)[0]
        return {"t": s.t[:, None], "eps": s.eps[1:, None], "dt": s.dt[1:, None], "sig": s.sig[1:, None]}

    def aux_xi(self, theta, t):
        layers = self.aux.materialize(theta)
        raw = self.aux.apply(layers, t)
        return raw - self.aux.apply(layers, np.zeros((1, 1)))

    def loss_terms(self, theta, data, phase=None):
        w = self.config.weights
        xi_all = self.aux_xi(theta, data["t"])
        R = ad._shape(xi_all)[0]
        xi = xi_all[1:R]
        xidot = (xi - xi_all[0:R - 1]) / data["dt"]
        bp = self.psi.bind(theta)
        bd = self.phi.bind(theta)
        _, sig, tau, x = self.energy(bp, data["eps"], xi, True)
        tau_hat = self.phi.slope(bd, xidot, x)
        return {
            "sig": (w.get("sig", 10.0), mae(sig, data["sig"])),
            "biot": (w.get("biot", 1.0), mae(tau, tau_hat)),
            "xi_abs": (w.get("xi_abs", 1.0), ad.mean(ad.sum_(ad.abs_(xi), axis=1))),
        }
