"""Analytic 1D reference materials: generalized Maxwell viscoelasticity and
rate-independent elastoplasticity with linear kinematic/isotropic hardening.

Stresses, energies and moduli are in MPa, times in s.  The nonlinear
viscosity is evaluated with the overstress in MPa.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GPA = 1000.0  # MPa per GPa


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=None, step=None):
        super().__init__(msg)
        self.residual = residual
        self.step = step


@dataclass(frozen=True)
class Branch:
    """Maxwell branch; viscosity eta_hat * exp(a * |sigma_ov|^b)."""

    E: float
    eta_hat: float
    a: float = 0.0
    b: float = 1.0

    @property
    def nonlinear(self):
        return self.a != 0.0

    def viscosity(self, s):
        if not self.nonlinear:
            return self.eta_hat
        return self.eta_hat * np.exp(self.a * abs(s) ** self.b)


@dataclass(frozen=True)
class ViscoParams:
    E: float
    branches: tuple

    def __post_init__(self):
        if self.E <= 0 or not self.branches:
            raise ValueError("need E > 0 and at least one branch")
        for br in self.branches:
            if br.E <= 0 or br.eta_hat <= 0:
                raise ValueError(f"invalid branch {br}")

    @property
    def n_xi(self):
        return len(self.branches)

    rate_dependent = True


@dataclass(frozen=True)
class PlastParams:
    E: float
    sig_y0: float
    H: float = 0.0
    H_iso: float = 0.0

    def __post_init__(self):
        if self.E <= 0 or self.sig_y0 <= 0 or self.H < 0 or self.H_iso < 0:
            raise ValueError(f"invalid plasticity parameters {self}")

    @property
    def n_xi(self):
        # plastic strain, kinematic variable, and the isotropic one if it matters
        return 3 if self.H_iso > 0 else 2

    rate_dependent = False


MATERIALS = {
    "V1": ViscoParams(1 * GPA, (Branch(10 * GPA, 200 * GPA, a=-0.7, b=0.1),)),
    "V2": ViscoParams(1 * GPA, (Branch(10 * GPA, 10 * GPA), Branch(20 * GPA, 5 * GPA))),
    "P1": PlastParams(20 * GPA, 100.0, H=10 * GPA),
    "P2": PlastParams(20 * GPA, 100.0, H=3 * GPA, H_iso=3 * GPA),
}


def get_material(label):
    try:
        return MATERIALS[label]
    except KeyError:
        raise ValueError(
            f"unknown material {label!r}; valid labels: {', '.join(MATERIALS)}"
        ) from None


@dataclass
class MaterialState:
    t: float = 0.0
    eps: float = 0.0
    sig: float = 0.0
    xi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    psi: float = 0.0
    diss: float = 0.0
    tau: np.ndarray = field(default_factory=lambda: np.zeros(0))


def zero_state(params):
    n = params.n_xi
    return MaterialState(xi=np.zeros(n), tau=np.zeros(n))


@dataclass
class StrainPath:
    """Time stamps and strains; row 0 is the (zero) initial state."""

    t: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.eps = np.asarray(self.eps, dtype=float)
        if self.t.shape != self.eps.shape or self.t.ndim != 1 or len(self.t) < 1:
            raise ValueError("t and eps must be 1D arrays of equal non-zero length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("time stamps must be strictly increasing")

    @property
    def dt(self):
        """Backward increments, 0 for the initial row."""
        return np.concatenate([[0.0], np.diff(self.t)])

    def __len__(self):
        return len(self.t)


# --- viscoelasticity -------------------------------------------------------


def _solve_overstress(br: Branch, s_tr, k, maxit=100, rtol=1e-12):
    """Solve s + k*s/eta(s) = s_tr for the end-of-step overstress.

    ``k = E_alpha * dt``.  The residual is monotone; Newton steps are
    safeguarded by a shrinking bracket with bisection fallback.
    """
    if s_tr == 0.0:
        return 0.0, 0
    if not br.nonlinear:
        return s_tr / (1.0 + k / br.eta_hat), 0

    def res(s):
        return s + k * s / br.viscosity(s) - s_tr

    def dres(s):
        u = abs(s) ** br.b
        return 1.0 + k * np.exp(-br.a * u) * (1.0 - br.a * br.b * u) / br.eta_hat

    cands = (s_tr / (1.0 + k / br.eta_hat), s_tr / (1.0 + k / br.viscosity(s_tr)))
    lo, hi = min(cands), max(cands)
    if res(lo) > 0 or res(hi) < 0:
        lo, hi = min(0.0, s_tr), max(0.0, s_tr)
    scale = abs(s_tr)
    s = cands[1]
    r = res(s)
    for it in range(1, maxit + 1):
        if abs(r) <= rtol * scale:
            return s, it - 1
        if r > 0:
            hi = s
        else:
            lo = s
        s_new = s - r / dres(s)
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        r_new = res(s_new)
        if abs(r_new) > abs(r) and hi - lo > 0:
            # damping: fall back to a bisection step
            s_new = 0.5 * (lo + hi)
            r_new = res(s_new)
        s, r = s_new, r_new
    if abs(r) <= rtol * scale:
        return s, maxit
    raise ConvergenceError(
        f"overstress solve did not converge, residual {r:.3e}", residual=r
    )


def step_visco(params: ViscoParams, state: MaterialState, eps_new, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    xi_old = np.asarray(state.xi, dtype=float)
    xi = np.empty_like(xi_old)
    tau = np.empty_like(xi_old)
    for k, br in enumerate(params.branches):
        s_tr = br.E * (eps_new - xi_old[k])
        s, _ = _solve_overstress(br, s_tr, br.E * dt)
        # eps_vi from the overstress keeps the update exact for both branch kinds
        xi[k] = eps_new - s / br.E
        tau[k] = s
    sig = params.E * eps_new + float(np.sum(tau))
    psi = 0.5 * params.E * eps_new**2 + sum(
        0.5 * br.E * (eps_new - xi[k]) ** 2 for k, br in enumerate(params.branches)
    )
    diss = float(np.sum(tau * (xi - xi_old))) / dt
    return MaterialState(state.t + dt, float(eps_new), float(sig), xi, float(psi), diss, tau)


# --- elastoplasticity --------------------------------------------------------


def step_plast(params: PlastParams, state: MaterialState, eps_new, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    E, H, Hi = params.E, params.H, params.H_iso
    xi_old = np.asarray(state.xi, dtype=float)
    ep, al = xi_old[0], xi_old[1]
    ali = xi_old[2] if len(xi_old) > 2 else 0.0

    sig_tr = E * (eps_new - ep)
    back = -H * al
    drag = -Hi * ali
    f_tr = abs(sig_tr + back) - (params.sig_y0 - drag)
    if f_tr > 0.0:
        dlam = f_tr / (E + H + Hi)
        sgn = np.sign(sig_tr + back)
        ep, al, ali = ep + dlam * sgn, al + dlam * sgn, ali + dlam
    xi = np.array([ep, al, ali][: len(xi_old)])
    sig = E * (eps_new - ep)
    back, drag = -H * al, -Hi * ali
    tau = np.array([sig, back, drag][: len(xi_old)])
    psi = 0.5 * E * (eps_new - ep) ** 2 + 0.5 * H * al**2 + 0.5 * Hi * ali**2
    dxi = xi - xi_old
    diss = float(np.dot(tau, dxi)) / dt
    return MaterialState(state.t + dt, float(eps_new), float(sig), xi, float(psi), diss, tau)


def yield_function(params: PlastParams, state: MaterialState):
    al = state.xi[1]
    ali = state.xi[2] if len(state.xi) > 2 else 0.0
    return abs(state.sig - params.H * al) - (params.sig_y0 + params.H_iso * ali)


def step(params, state, eps_new, dt):
    if isinstance(params, ViscoParams):
        return step_visco(params, state, eps_new, dt)
    return step_plast(params, state, eps_new, dt)


def simulate_path(params, path: StrainPath):
    """Fold the step update over ``path`` from the zero state.

    Returns the list of states, one per row of the path (row 0 is the
    initial state; its strain must be zero).
    """
    if len(path) == 0:
        raise ValueError("empty path")
    state = zero_state(params)
    state.t = float(path.t[0])
    if path.eps[0] != 0.0:
        state = step(params, state, path.eps[0], 1.0)
        state.t, state.diss = float(path.t[0]), 0.0
    trace = [state]
    for n in range(1, len(path)):
        try:
            state = step(params, state, path.eps[n], path.t[n] - path.t[n - 1])
        except ConvergenceError as exc:
            raise ConvergenceError(f"step {n}: {exc}", exc.residual, step=n) from exc
        state.t = float(path.t[n])
        trace.append(state)
    return trace


def trace_arrays(trace):
    """Stack a state trace into a dict of arrays."""
    return {
        "t": np.array([s.t for s in trace]),
        "eps": np.array([s.eps for s in trace]),
        "sig": np.array([s.sig for s in trace]),
        "xi": np.array([s.xi for s in trace]),
        "psi": np.array([s.psi for s in trace]),
        "diss": np.array([s.diss for s in trace]),
        "tau": np.array([s.tau for s in trace]),
    }


def free_energy(params, eps, xi):
    """Free energy at fixed strain and internal variables."""
    xi = np.asarray(xi, dtype=float)
    if isinstance(params, ViscoParams):
        return 0.5 * params.E * eps**2 + sum(
            0.5 * br.E * (eps - xi[k]) ** 2 for k, br in enumerate(params.branches)
        )
    ali = xi[2] if len(xi) > 2 else 0.0
    return (
        0.5 * params.E * (eps - xi[0]) ** 2
        + 0.5 * params.H * xi[1] ** 2
        + 0.5 * params.H_iso * ali**2
    )


def simulate(params, t, eps):
    return trace_arrays(simulate_path(params, StrainPath(t, eps)))


__all__ = [
    "Branch",
    "ConvergenceError",
    "MATERIALS",
    "MaterialState",
    "PlastParams",
    "StrainPath",
    "ViscoParams",
    "free_energy",
    "get_material",
    "simulate",
    "simulate_path",
    "step",
    "step_plast",
    "step_visco",
    "trace_arrays",
    "yield_function",
    "zero_state",
]
