"""Models trained to respect non-negative dissipation through a penalty.

Both predict internal variables with one network and the free energy with
another; stress is the strain derivative of the free energy and the
dissipation rate follows from a backward difference of the internal
variables.
"""

from __future__ import annotations

import numpy as np

from .. import adnn as nn
from ..adnn import core as ad
from ..datagen import to_fnn_tuples
from .base import Model, PredictionTrace, hidden_spec, mae
from .blackbox import stack_sequences


def _energy_derivatives(net, theta, x, create_graph):
    """psi and d psi / d x for a batch of inputs x = [eps, xi...].

    Differentiation is with respect to the network input only, so any
    dependence of ``x`` on the parameters is held fixed.
    """
    if not isinstance(x, ad.Node):
        x = ad.variable(x)
    psi = net(theta, x)
    g = ad.grad(ad.sum_(psi), x, create_graph=create_graph)
    return psi, g


class FnnXiPsi(Model):
    """Feedforward internal-variable predictor followed by a free-energy net.

    Trained in two phases: phase 1 fits the internal-variable net alone,
    phase 2 fits the free-energy net with the first net frozen.
    """

    kind = "fnn_xipsi"
    needs_xi = True
    phases = (1, 2)

    def build(self):
        n = self.n_xi_data
        self.n_xi = n
        n_in = 3 + (1 if self.config.rate_dependent else 0) + n
        self.xi_net = self.pack.add("xi", nn.Dense, hidden_spec(self.config, "xi", n_in, n))
        self.psi_net = self.pack.add("psi", nn.Dense, hidden_spec(self.config, "psi", 1 + n, 1))

    def trainable(self, phase=None):
        if phase == 1:
            return self.pack.block_slice("xi")
        if phase == 2:
            return self.pack.block_slice("psi")
        return slice(0, self.pack.size)

    def _xi_features(self, eps_new, eps, sig, dt, xi):
        cols = [eps_new[:, None], eps[:, None], sig[:, None]]
        if self.config.rate_dependent:
            cols.append(dt[:, None])
        cols.append(xi)
        return np.concatenate(cols, axis=1)

    def prepare(self, seqs):
        tup = to_fnn_tuples(self.scaled(seqs), 1)
        return {
            "x_xi": self._xi_features(
                tup.eps_new, tup.hist_eps[:, 0], tup.hist_sig[:, 0], tup.dt, tup.hist_xi
            ),
            "eps_new": tup.eps_new[:, None],
            "xi_new": tup.xi_new,
            "xi_old": tup.hist_xi,
            "dt": tup.dt[:, None],
            "sig": tup.sig_new[:, None],
            "psi": tup.psi_new[:, None],
        }

    def loss_terms(self, theta, data, phase=None):
        w = self.config.weights
        if phase == 1:
            xi_hat = self.xi_net(theta, data["x_xi"])
            return {"xi": (1.0, mae(xi_hat, data["xi_new"]))}
        # the internal-variable net is frozen: its output enters as data
        xi_hat = ad.value_of(self.xi_net(ad.value_of(theta), data["x_xi"]))
        x = np.concatenate([data["eps_new"], xi_hat], axis=1)
        psi, g = _energy_derivatives(self.psi_net, theta, x, create_graph=True)
        sig = g[:, 0:1]
        dpsi_dxi = g[:, 1:]
        diss = -ad.sum_(dpsi_dxi * ((xi_hat - data["xi_old"]) / data["dt"]), axis=1)
        return {
            "sig": (w.get("sig", 1.0), mae(sig, data["sig"])),
            "psi": (w.get("psi", 0.0), mae(psi, data["psi"])),
            "diss": (w.get("diss", 1.0), ad.sum_(ad.relu(-diss))),
        }

    def predict(self, theta, path):
        sc = self.scaling
        theta = ad.value_of(theta)
        eps = sc.fwd("eps", path.eps)
        dt = sc.fwd("dt", path.dt)
        R, n = len(path), self.n_xi
        xi = np.zeros((R, n))
        sig = np.zeros(R)
        psi = np.zeros(R)
        diss = np.zeros(R)
        xl = self.xi_net.materialize(theta)
        pl = self.psi_net.materialize(theta)
        for k in range(R - 1):
            xf = self._xi_features(eps[k + 1:k + 2], eps[k:k + 1], sig[k:k + 1], dt[k + 1:k + 2], xi[k:k + 1])
            xi[k + 1] = self.xi_net.apply(xl, xf)[0]
            x = ad.variable(np.concatenate([[eps[k + 1]], xi[k + 1]])[None])
            p = self.psi_net.apply(pl, x)
            g = ad.grad(ad.sum_(p), x)
            psi[k + 1] = float(ad.value_of(p)[0, 0])
            sig[k + 1] = g[0, 0]
            diss[k + 1] = -float(np.dot(g[0, 1:], xi[k + 1] - xi[k])) / dt[k + 1]
        if R > 0:
            x0 = ad.variable(np.zeros((1, 1 + n)))
            psi[0] = float(ad.value_of(self.psi_net.apply(pl, x0))[0, 0])
        return PredictionTrace(
            path.t, path.eps, sc.inv("sig", sig), sc.inv("psi", psi), sc.inv("diss", diss), sc.inv("xi", xi)
        )


class RnnXiPsi(Model):
    """LSTM feeding a learned internal-variable head and a free-energy net."""

    kind = "rnn_xipsi"

    def build(self):
        n_in = 2 if self.config.rate_dependent else 1
        nc, nx = self.config.n_cell, self.config.n_xi
        self.n_xi = nx
        self.cell = self.pack.add("cell", nn.Lstm, nn.LstmSpec(n_in, nc))
        self.xi_net = self.pack.add("xi", nn.Dense, hidden_spec(self.config, "xi", nc, nx))
        self.psi_net = self.pack.add("psi", nn.Dense, hidden_spec(self.config, "psi", 1 + nx, 1))

    def _inputs(self, eps, dt, n):
        if self.config.rate_dependent:
            return np.stack([eps[:, n], dt[:, n]], axis=1)
        return eps[:, n:n + 1]

    def prepare(self, seqs):
        return stack_sequences(self.scaled(seqs))

    def _forward(self, theta, eps, dt, create_graph):
        S, R = eps.shape
        wb = self.cell.materialize(theta)
        h, c = self.cell.zero_state(S)
        hs = []
        for n in range(1, R):
            h, c = self.cell.step(wb, h, c, self._inputs(eps, dt, n))
            hs.append(h)
        hs = ad.concatenate(hs, axis=0)
        xl = self.xi_net.materialize(theta)
        xi = self.xi_net.apply(xl, hs)  # ((R-1)S, nx), step-major
        xi0 = self.xi_net.apply(xl, np.zeros((1, self.config.n_cell)))
        e = eps[:, 1:].T.reshape(-1, 1)
        d = dt[:, 1:].T.reshape(-1, 1)
        if isinstance(xi, ad.Node):
            x = ad.concatenate([e, xi], axis=1)
        else:
            x = ad.variable(np.concatenate([e, xi], axis=1))
        psi = self.psi_net(theta, x)
        g = ad.grad(ad.sum_(psi), x, create_graph=create_graph)
        xi_prev = ad.concatenate([ad.broadcast_to(xi0, (S, self.n_xi)), xi[: (R - 2) * S]], axis=0)
        diss = -ad.sum_(g[:, 1:] * ((xi - xi_prev) / d), axis=1)
        return {"xi": xi, "xi0": xi0, "psi": psi, "sig": g[:, 0:1], "diss": diss}

    def loss_terms(self, theta, data, phase=None):
        w = self.config.weights
        out = self._forward(theta, data["eps"], data["dt"], create_graph=True)
        sig_t = data["sig"][:, 1:].T.reshape(-1, 1)
        terms = {
            "sig": (w.get("sig", 1.0), mae(out["sig"], sig_t)),
            "diss": (w.get("diss", 5.0), ad.mean(ad.relu(-out["diss"]))),
        }
        if w.get("psi", 0.0) > 0:
            terms["psi"] = (w["psi"], mae(out["psi"], data["psi"][:, 1:].T.reshape(-1, 1)))
        n_av = min(self.n_xi, data["xi"].shape[2])
        if w.get("xi", 0.0) > 0 and n_av > 0:
            xt = np.transpose(data["xi"][:, 1:, :n_av], (1, 0, 2)).reshape(-1, n_av)
            terms["xi"] = (w["xi"], mae(out["xi"][:, :n_av], xt))
        return terms

    def predict(self, theta, path):
        sc = self.scaling
        theta = ad.value_of(theta)
        eps = sc.fwd("eps", path.eps)[None]
        dt = sc.fwd("dt", path.dt)[None]
        out = self._forward(theta, eps, dt, create_graph=False)
        xi = np.concatenate([ad.value_of(out["xi0"]), ad.value_of(out["xi"])], axis=0)
        sig = np.concatenate([[0.0], np.ravel(out["sig"])])
        psi_body = np.ravel(ad.value_of(out["psi"]))
        x0 = np.concatenate([[[0.0]], ad.value_of(out["xi0"])], axis=1)
        psi0 = float(self.psi_net(theta, x0)[0, 0])
        psi = np.concatenate([[psi0], psi_body])
        diss = np.concatenate([[0.0], np.ravel(ad.value_of(out["diss"]))])
        return PredictionTrace(
            path.t, path.eps, sc.inv("sig", sig), sc.inv("psi", psi), sc.inv("diss", diss), sc.inv("xi", xi)
        )
