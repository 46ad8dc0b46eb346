"""Black-box models: stress predicted directly from strain history."""

from __future__ import annotations

import numpy as np

from .. import adnn as nn
from ..adnn import core as ad
from ..datagen import DatasetError, to_fnn_tuples
from .base import Model, PredictionTrace, hidden_spec, mae


def stack_sequences(seqs):
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise DatasetError("recurrent training needs sequences of equal length")
    return {
        "eps": np.stack([s.eps for s in seqs]),
        "dt": np.stack([s.dt for s in seqs]),
        "sig": np.stack([s.sig for s in seqs]),
        "xi": np.stack([s.xi for s in seqs]),
        "psi": np.stack([s.psi for s in seqs]),
    }


class FnnSigma(Model):
    """Feedforward map from the new strain and N_pt previous states to the new stress."""

    kind = "fnn_sigma"
    offsets = True

    def build(self):
        per_step = 3 if self.config.rate_dependent else 2
        self.n_in = 1 + self.config.n_pt * per_step
        self.net = self.pack.add("sig", nn.Dense, hidden_spec(self.config, "sig", self.n_in, 1))

    def _features(self, eps_new, he, hs, hd):
        cols = [eps_new[:, None]]
        for j in range(self.config.n_pt):
            cols += [he[:, j:j + 1], hs[:, j:j + 1]]
            if self.config.rate_dependent:
                cols.append(hd[:, j:j + 1])
        return np.concatenate(cols, axis=1)

    def prepare(self, seqs):
        tup = to_fnn_tuples(self.scaled(seqs), self.config.n_pt)
        return {
            "x": self._features(tup.eps_new, tup.hist_eps, tup.hist_sig, tup.hist_dt),
            "sig": tup.sig_new[:, None],
        }

    def loss_terms(self, theta, data, phase=None):
        return {"sig": (1.0, mae(self.net(theta, data["x"]), data["sig"]))}

    def predict(self, theta, path):
        sc = self.scaling
        eps = sc.fwd("eps", path.eps)
        dt = sc.fwd("dt", path.dt)
        e0, s0 = float(sc.fwd("eps", 0.0)), float(sc.fwd("sig", 0.0))
        layers = self.net.materialize(theta)
        npt = self.config.n_pt
        sig = np.empty(len(path))
        sig[0] = s0
        for n in range(len(path) - 1):
            ms = n - np.arange(npt)
            valid = ms >= 0
            he = np.where(valid, eps[np.maximum(ms, 0)], e0)
            hs = np.where(valid, sig[np.maximum(ms, 0)], s0)
            hd = np.where(valid, dt[np.maximum(ms, 0) + 1], dt[1])
            x = self._features(np.array([eps[n + 1]]), he[None], hs[None], hd[None])
            sig[n + 1] = float(self.net.apply(layers, x)[0, 0])
        return PredictionTrace(path.t, path.eps, sc.inv("sig", sig))


class RnnSigma(Model):
    """LSTM over (strain, time increment) with a dense stress head."""

    kind = "rnn_sigma"
    offsets = True

    def build(self):
        n_in = 2 if self.config.rate_dependent else 1
        nc = self.config.n_cell
        self.cell = self.pack.add("cell", nn.Lstm, nn.LstmSpec(n_in, nc))
        self.head = self.pack.add("head", nn.Dense, hidden_spec(self.config, "head", nc, 1))

    def _inputs(self, eps, dt, n):
        if self.config.rate_dependent:
            return np.stack([eps[:, n], dt[:, n]], axis=1)
        return eps[:, n:n + 1]

    def prepare(self, seqs):
        d = stack_sequences(self.scaled(seqs))
        return {"eps": d["eps"], "dt": d["dt"], "sig": d["sig"]}

    def hidden_states(self, theta, eps, dt):
        """Hidden states of rows 1..R-1 stacked step-major: ((R-1)*S, Nc)."""
        wb = self.cell.materialize(theta)
        h, c = self.cell.zero_state(eps.shape[0])
        hs = []
        for n in range(1, eps.shape[1]):
            h, c = self.cell.step(wb, h, c, self._inputs(eps, dt, n))
            hs.append(h)
        return ad.concatenate(hs, axis=0)

    def loss_terms(self, theta, data, phase=None):
        hs = self.hidden_states(theta, data["eps"], data["dt"])
        pred = self.head(theta, hs)
        target = data["sig"][:, 1:].T.reshape(-1, 1)
        return {"sig": (1.0, mae(pred, target))}

    def predict(self, theta, path):
        sc = self.scaling
        eps = sc.fwd("eps", path.eps)[None]
        dt = sc.fwd("dt", path.dt)[None]
        hs = self.hidden_states(theta, eps, dt)
        sig = np.concatenate([[float(sc.fwd("sig", 0.0))], np.ravel(self.head(theta, hs))])
        return PredictionTrace(path.t, path.eps, sc.inv("sig", sig))
