"""Normalized free-energy and dissipation-potential networks.

Both potentials are corrected so that the unloaded state is stress free:
the free energy loses its value and slope at the origin, the dissipation
potential loses its value and slope at zero rate.  The corrections are
exact for any weights.
"""

from __future__ import annotations

import numpy as np

from .. import adnn as nn
from ..adnn import core as ad


class FreeEnergy:
    """psi(eps, xi) from a dense net over the columns [eps, xi_1..xi_N]."""

    def __init__(self, net: nn.Dense):
        self.net = net

    def bind(self, theta):
        """Materialize weights and the origin correction for ``theta``."""
        layers = self.net.materialize(theta)
        x0 = ad.variable(np.zeros((1, self.net.spec.n_in)))
        p0 = self.net.apply(layers, x0)
        g0 = ad.grad(ad.sum_(p0), x0, create_graph=isinstance(theta, ad.Node))
        if not isinstance(theta, ad.Node):
            g0 = ad.value_of(g0)
            p0 = ad.value_of(p0)
        return layers, p0, g0

    def value(self, bound, x):
        layers, p0, g0 = bound
        raw = self.net.apply(layers, x)
        # p0 (1,1), g0 (1, n_in): subtract value and linear term at the origin
        return raw - p0 - ad.sum_(x * g0, axis=1, keepdims=True)

    def raw(self, bound, x):
        return self.net.apply(bound[0], x)


class DissipationPotential:
    """phi(rate; eps, xi) = phi_pos(eps, xi) * [phi_con(rate) - phi_con(0) - grad phi_con(0) . rate].

    ``con`` must be an input convex net over the rate columns, ``pos`` a
    positive net over [eps, xi].  The same class builds the dual potential
    when the rate is replaced by the internal force.
    """

    def __init__(self, con: nn.Dense, pos: nn.Dense):
        if con.spec.weight_mode != "nonneg_all" or con.spec.n_out != 1:
            raise nn.ConfigError("convex part needs nonneg_all weights and a scalar output")
        if (
            pos.spec.weight_mode != "nonneg_output"
            or pos.spec.bias_mode != "nonneg"
            or pos.spec.n_out != 1
        ):
            raise nn.ConfigError("positive part needs nonneg_output weights and nonneg bias")
        self.con = con
        self.pos = pos

    def bind(self, theta):
        lc = self.con.materialize(theta)
        lp = self.pos.materialize(theta)
        z0 = ad.variable(np.zeros((1, self.con.spec.n_in)))
        c0 = self.con.apply(lc, z0)
        g0 = ad.grad(ad.sum_(c0), z0, create_graph=isinstance(theta, ad.Node))
        if not isinstance(theta, ad.Node):
            g0 = ad.value_of(g0)
            c0 = ad.value_of(c0)
        return lc, lp, c0, g0

    def convex_part(self, bound, z):
        lc, _, c0, g0 = bound
        return self.con.apply(lc, z) - c0 - ad.sum_(z * g0, axis=1, keepdims=True)

    def positive_part(self, bound, state):
        return self.pos.apply(bound[1], state)

    def value(self, bound, z, state):
        return self.positive_part(bound, state) * self.convex_part(bound, z)

    def slope(self, bound, z, state, create_graph=True):
        """d phi / d z for a batch, traced when ``create_graph``.

        Uses d/dz [phi_con(z) - grad phi_con(0) . z] scaled by the positive
        factor, which is the exact derivative of ``value``.
        """
        lc, _, _, g0 = bound
        if isinstance(z, ad.Node):
            zz = z
        else:
            zz = ad.variable(z)
        c = self.con.apply(lc, zz)
        gz = ad.grad(ad.sum_(c), zz, create_graph=create_graph)
        return self.positive_part(bound, state) * (gz - g0)
