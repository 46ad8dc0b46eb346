"""Independent reference computations used to check ``refmat``.

Nothing here calls into ``refmat``'s integrators: the explicit fine-step
integrator and the closed forms are written from the governing equations
directly so the two routes can disagree if either is wrong.
"""

from __future__ import annotations

import math

import numpy as np


def linear_maxwell_step(E, branches, eps_new, xi_old, dt):
    """One implicit-Euler step of a linear generalized Maxwell model.

    ``branches`` holds (E_a, eta_a) pairs.  Returns (stress, new viscous strains).
    """
    xi = []
    for (Ea, eta), x0 in zip(branches, xi_old):
        k = dt * Ea / eta
        xi.append((x0 + k * eps_new) / (1.0 + k))
    sig = E * eps_new + sum(Ea * (eps_new - x) for (Ea, _), x in zip(branches, xi))
    return sig, np.array(xi)


def radial_return_from_zero(E, sig_y0, H, H_iso, eps_new):
    """Stress, plastic multiplier and plastic strain for one step from the virgin state."""
    s_tr = E * eps_new
    f_tr = abs(s_tr) - sig_y0
    if f_tr <= 0:
        return s_tr, 0.0, 0.0
    dlam = f_tr / (E + H + H_iso)
    eps_pl = dlam * math.copysign(1.0, s_tr)
    return E * (eps_new - eps_pl), dlam, eps_pl


def plastic_tangent(E, H, H_iso):
    return E * (H + H_iso) / (E + H + H_iso)


def maxwell_relaxation(E, branches, eps0, t):
    """Stress under a strain step held from t=0 for linear branches (E_a, eta_a)."""
    return E * eps0 + sum(Ea * eps0 * np.exp(-t * Ea / eta) for Ea, eta in branches)


def explicit_maxwell(E, branches, t, eps, h):
    """Forward-Euler integration of a generalized Maxwell model.

    ``branches`` holds (E_a, eta_hat_a, a_a, b_a).  The strain is linearly
    interpolated between the samples (t, eps) and each interval is cut into
    substeps no longer than ``h``.  Returns the stress at every sample.
    """
    t = np.asarray(t, dtype=float)
    eps = np.asarray(eps, dtype=float)
    xi = [0.0] * len(branches)
    out = np.zeros(len(t))
    out[0] = E * eps[0] + sum(br[0] * eps[0] for br in branches)
    for n in range(1, len(t)):
        m = max(1, int(math.ceil((t[n] - t[n - 1]) / h - 1e-9)))
        dh = (t[n] - t[n - 1]) / m
        de = (eps[n] - eps[n - 1]) / m
        e = eps[n - 1]
        for _ in range(m):
            for k, (Ea, eta_hat, a, b) in enumerate(branches):
                s = Ea * (e - xi[k])
                eta = eta_hat * math.exp(a * abs(s) ** b) if a != 0.0 else eta_hat
                xi[k] += dh * s / eta
            e += de
        out[n] = E * eps[n] + sum(br[0] * (eps[n] - xi[k]) for k, br in enumerate(branches))
    return out


def observed_order(errors):
    """log2 ratios of successive errors under step halving."""
    errors = np.asarray(errors, dtype=float)
    return np.log2(errors[:-1] / errors[1:])
