"""Independent reference models used only by the tests.

``DiscreteBathModel`` evolves impurity + a handful of bath levels exactly in
the joint Fock space.  Its bath correlation is a finite sum of undamped
exponentials, so a hierarchy with ``L = J`` reproduces it to round-off.
"""

import numpy as np
from scipy import integrate
from scipy.linalg import expm

from deom.bath import DissipatonMode, ModeTable
from deom.model import build_fock_operators


def fermi(x):
    return 0.5 * (1 - np.tanh(0.5 * x))


class DiscreteBathModel:
    """``levels[alpha]`` is a list of ``(energy, hopping)``; every lead couples to every orbital."""

    def __init__(self, H_sys, n_orb, levels, betas, mus):
        self.n_orb = n_orb
        self.levels = levels
        self.betas, self.mus = betas, mus
        self.sys_ops = build_fock_operators(n_orb)
        slots = [(a, u, k) for a, lv in enumerate(levels) for u in range(n_orb) for k in range(len(lv))]
        self.slots = slots
        n_bath = len(slots)
        full = build_fock_operators(n_orb + n_bath)
        self.full = full
        self.db = 2**n_bath
        ds = 2**n_orb
        a = full.annihilators
        c = {s: a[n_orb + i] for i, s in enumerate(slots)}
        H = np.kron(H_sys, np.eye(self.db))
        self.F = {}
        for (al, u, k), ck in c.items():
            e, t = levels[al][k]
            H = H + e * ck.conj().T @ ck
            self.F[(al, u)] = self.F.get((al, u), 0) + t * ck
        for (al, u), F in self.F.items():
            au = a[u]
            H = H + au.conj().T @ F + F.conj().T @ au
        self.H = H
        # grand-canonical bath state, product over independent levels
        bops = build_fock_operators(n_bath)
        K = sum((levels[al][k][0] - mus[al]) * betas[al] * bops.number(i) for i, (al, u, k) in enumerate(slots))
        rb = expm(-K)
        self.rho_bath = rb / np.trace(rb)
        self.ds = ds

    def mode_table(self):
        modes = []
        for al, lv in enumerate(self.levels):
            for u in range(self.n_orb):
                for k, (e, t) in enumerate(lv):
                    f = fermi(self.betas[al] * (e - self.mus[al]))
                    modes.append(DissipatonMode(al, u, +1, t * t * f, -1j * e, k, f"lead{al}"))
                    modes.append(DissipatonMode(al, u, -1, t * t * (1 - f), 1j * e, k, f"lead{al}"))
        return ModeTable(modes, labels=[f"lead{al}" for al in range(len(self.levels))], require_decay=False)

    def initial(self, rho_sys):
        return np.kron(rho_sys, self.rho_bath)

    def evolve(self, rho, t):
        U = expm(-1j * self.H * t)
        return U @ rho @ U.conj().T

    def reduce(self, rho):
        return np.einsum("iaja->ij", rho.reshape(self.ds, self.db, self.ds, self.db))

    def embed(self, op_sys):
        return np.kron(op_sys, np.eye(self.db))

    def current(self, alpha):
        out = 0
        for u in range(self.n_orb):
            au = self.full.a(u)
            F = self.F[(alpha, u)]
            out = out - 1j * (au.conj().T @ F - F.conj().T @ au)
        return out


def lorentz_self_energy(delta, W, mu, w):
    return delta * W / (w - mu + 1j * W)


def resonant_level_gf(eps, leads, w):
    """Retarded GF of a single level; ``leads`` is a list of ``(delta, W, mu)``."""
    w = np.asarray(w, dtype=float)
    return 1.0 / (w - eps - sum(lorentz_self_energy(d, W, mu, w) for d, W, mu in leads))


def resonant_level_spectral(eps, leads, w):
    return -resonant_level_gf(eps, leads, w).imag / np.pi


def _lorentz(d, W, mu, w):
    return d * W**2 / ((w - mu) ** 2 + W**2)


def _band_points(eps, leads, betas):
    pts = {eps}
    for (d, W, mu), b in zip(leads, betas):
        pts.update({mu, mu - 10 / b, mu + 10 / b, mu - W, mu + W})
    return sorted(pts)


def _wide_quad(f, pts):
    lo, hi = pts[0], pts[-1]
    val = integrate.quad(f, lo, hi, points=pts[1:-1], limit=2000, epsabs=1e-13, epsrel=1e-12)[0]
    val += integrate.quad(f, -np.inf, lo, limit=500, epsabs=1e-13)[0]
    val += integrate.quad(f, hi, np.inf, limit=500, epsabs=1e-13)[0]
    return val


def resonant_level_occupation(eps, leads, betas):
    def f(w):
        g = abs(resonant_level_gf(eps, leads, w)) ** 2
        return g * sum(_lorentz(d, W, mu, w) * fermi(b * (w - mu)) for (d, W, mu), b in zip(leads, betas)) / np.pi
    return _wide_quad(f, _band_points(eps, leads, betas))


def landauer_current(eps, leads, betas):
    """Particle current out of lead 0 for a two-lead resonant level."""
    (dL, WL, muL), (dR, WR, muR) = leads
    bL, bR = betas

    def f(w):
        T = 4 * _lorentz(dL, WL, muL, w) * _lorentz(dR, WR, muR, w) * abs(resonant_level_gf(eps, leads, w)) ** 2
        return T * (fermi(bL * (w - muL)) - fermi(bR * (w - muR))) / (2 * np.pi)
    return _wide_quad(f, _band_points(eps, leads, betas))
