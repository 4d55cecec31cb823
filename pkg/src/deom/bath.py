"""Lorentzian reservoirs and their exponential-series decomposition.

The bath correlation of channel ``sigma`` (``+1``: ``<F^dag(t) F>``, ``-1``:
``<F(t) F^dag>``) is written as ``sum_k eta_k exp(-gamma_k t)``.  Two
backends produce the series:

``"pade"``
    Residue calculus on the Lorentzian pole plus a Pade spectrum
    decomposition of the Fermi function.  All rates are real at ``mu = 0``.
``"prony"``
    Matrix-pencil fit of the sampled correlation.  Rates come in complex
    conjugate pairs.

Both backends give channel ``-sigma`` the complex-conjugate rates of channel
``sigma`` in the same order, which is what pairs mode ``j`` with its
conjugate ``j-bar`` in the hierarchy.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import FitError, QuadratureError

FIT_POINTS = 2000
DEFAULT_TOL = 0.02
MAX_TERMS = 40


@dataclass(frozen=True)
class LorentzBath:
    delta: float = 1.0
    W: float = 10.0
    beta: float = 10.0
    mu: float = 0.0
    alpha_label: str = "L"
    coupled_orbitals: tuple = (0,)

    def __post_init__(self):
        if not (self.delta > 0 and self.W > 0 and self.beta > 0):
            raise ValueError(
                f"bath {self.alpha_label!r}: delta, W and beta must be positive "
                f"(got {self.delta}, {self.W}, {self.beta})")
        object.__setattr__(self, "coupled_orbitals", tuple(int(u) for u in self.coupled_orbitals))

    def at_equilibrium(self):
        return LorentzBath(self.delta, self.W, self.beta, 0.0, self.alpha_label, self.coupled_orbitals)


def spectral_density(bath, omega):
    omega = np.asarray(omega, dtype=float)
    return bath.delta * bath.W**2 / (omega**2 + bath.W**2)


def fermi(x):
    """``1 / (1 + exp(x))`` without overflow."""
    return 0.5 * (1.0 - np.tanh(0.5 * np.asarray(x, dtype=float)))


# ---------------------------------------------------------------- quadrature

def _shifted_pole_tail(t, A, c):
    """``int_A^inf exp(i w t) / (w - c) dw`` for ``t > 0`` and ``c`` off the real axis."""
    z = -1j * t * (A - c)
    if abs(z) <= 40.0:
        return np.exp(1j * c * t) * special.exp1(z)
    # asymptotic series of E1 with the exponential factor cancelled analytically
    s, term = 0j, 1.0 / z
    for k in range(1, 40):
        s += term
        term *= -k / z
        if abs(term) < 1e-17 * abs(s):
            break
    return np.exp(1j * A * t) * s


def _lorentz_tail(t, A, W):
    """``int_A^inf exp(i w t) W^2 / (w^2 + W^2) dw``."""
    if t == 0.0:
        return W * (np.pi / 2 - np.arctan(A / W)) + 0j
    return W / 2j * (_shifted_pole_tail(t, A, 1j * W) - _shifted_pole_tail(t, A, -1j * W))


@lru_cache(maxsize=64)
def _equilibrium_correlation(delta, W, beta, times):
    """``(1/pi) int J(v) f(beta v) exp(i v t) dv`` on the whole real line.

    ``[-A, A]`` is integrated adaptively for all times at once.  Outside it
    ``g(v) + g(-v) = J(v)/pi`` exactly, which leaves a closed-form Lorentzian
    tail plus a Fermi-suppressed remainder, so ``A`` only has to cover the
    thermal window.
    """
    bath = LorentzBath(delta, W, beta)
    t = np.asarray(times, dtype=float)
    A = min(40.0 * W, 40.0 / beta)
    tol = 1e-10 * delta * W

    def g(v):
        return spectral_density(bath, v) * fermi(beta * v) / np.pi

    c = min(20.0 / beta, A / 4)
    cuts = sorted({x for x in (-A, -W, -c, 0.0, c, W, A) if abs(x) <= A})
    out = np.zeros(len(t), dtype=complex)
    err = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, e = integrate.quad_vec(lambda v: g(v) * np.exp(1j * v * t), a, b,
                                    epsabs=tol / len(cuts), epsrel=1e-10, limit=20000)
        out += val
        err += e
    out += delta / np.pi * np.conj([_lorentz_tail(ti, A, W) for ti in t])
    if beta * A < 700:
        # sin-weighted remainder carrying the Fermi tail beyond A
        b_end = A + 60.0 / beta
        val, e = integrate.quad_vec(lambda v: g(v) * np.sin(v * t), A, b_end,
                                    epsabs=tol / len(cuts), epsrel=1e-10, limit=20000)
        out += 2j * val
        err += e
    if not np.all(np.isfinite(out)) or err > 1e3 * tol:
        raise QuadratureError("quadrature did not reach its tolerance", residual=err)
    out.setflags(write=False)
    return out


def reference_correlation(bath, sigma, t):
    """Bath correlation of channel ``sigma`` by direct quadrature.

    Evaluates ``(1/pi) int J(w - mu) exp(i sigma w t) / (1 + exp(sigma beta (w - mu))) dw``.
    Since ``J`` is even, the ``mu = 0`` value is the same for both signs and
    the chemical potential enters as the phase ``exp(i sigma mu t)``.
    """
    if sigma not in (1, -1):
        raise ValueError("sigma must be +1 or -1")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("reference_correlation needs t >= 0")
    base = _equilibrium_correlation(bath.delta, bath.W, bath.beta, tuple(t.tolist()))
    return base * np.exp(1j * sigma * bath.mu * t)


def fit_grid(bath, n_points=FIT_POINTS):
    """Uniform time grid covering the bandwidth and thermal decay scales."""
    t_max = 10.0 / min(bath.W, np.pi / bath.beta)
    return np.linspace(0.0, t_max, n_points)


# ---------------------------------------------------------------------- Pade

@lru_cache(maxsize=32)
def pade_fermi_poles(n_poles):
    """Poles ``xi`` and residues ``kappa`` of the [N-1/N] Pade Fermi function.

    ``1/(1+e^x) ~ 1/2 - sum_p 2 kappa_p x / (x^2 + xi_p^2)``.
    """
    if n_poles < 0:
        raise ValueError("n_poles must be non-negative")
    if n_poles == 0:
        return np.zeros(0), np.zeros(0)
    N = n_poles
    b = 2.0 * np.arange(1, 2 * N + 2) - 1.0
    off = 1.0 / np.sqrt(b[: 2 * N - 1] * b[1 : 2 * N])
    ev = np.linalg.eigvalsh(np.diag(off, 1) + np.diag(off, -1))
    xi = np.sort(2.0 / ev[ev > 0])
    if N > 1:
        off_t = 1.0 / np.sqrt(b[1 : 2 * N - 1] * b[2 : 2 * N])
        ev_t = np.linalg.eigvalsh(np.diag(off_t, 1) + np.diag(off_t, -1))
        # the odd-sized matrix has one zero eigenvalue; keep the N-1 positive ones
        zeta = 2.0 / np.sort(ev_t)[::-1][: N - 1]
    else:
        zeta = np.zeros(0)
    kappa = np.empty(N)
    for j in range(N):
        num = np.prod(zeta**2 - xi[j] ** 2)
        den = np.prod(np.delete(xi, j) ** 2 - xi[j] ** 2)
        kappa[j] = 0.5 * N * b[N] * num / den
    return xi, kappa


def fermi_pade(x, n_poles):
    xi, kappa = pade_fermi_poles(n_poles)
    x = np.asarray(x, dtype=complex)
    out = 0.5 + 0j * x
    for s, k in zip(xi, kappa):
        out = out - 2.0 * k * x / (x**2 + s**2)
    return out


def _pade_series(bath, K):
    n = K - 1
    xi, kappa = pade_fermi_poles(n)
    d, W, beta = bath.delta, bath.W, bath.beta
    eta = [d * W * complex(fermi_pade(1j * beta * W, n))]
    gamma = [complex(W)]
    for s, k in zip(xi, kappa):
        y = s / beta
        eta.append(-2j * k / beta * d * W**2 / (W**2 - y**2))
        gamma.append(complex(y))
    return np.array(eta), np.array(gamma)


# --------------------------------------------------------------------- Prony

def prony_fit(t, y, n_terms, conjugate_closed=False):
    """Matrix-pencil fit ``y(t) ~ sum_k eta_k exp(-gamma_k t)`` on a uniform grid.

    With ``conjugate_closed`` the real and imaginary parts share one pencil,
    so the rates come in complex-conjugate pairs (a single complex
    exponential then costs two terms).  Growing terms are discarded.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=complex)
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
        raise FitError("prony_fit needs a uniform grid")
    n = len(t)
    P = n // 3
    if n_terms > P:
        raise FitError(f"{n_terms} terms need more than {n} samples")
    cols = np.lib.stride_tricks.sliding_window_view
    if conjugate_closed:
        H = np.vstack([cols(y.real, P + 1), cols(y.imag, P + 1)])
    else:
        H = cols(y, P + 1)
    _, _, vh = np.linalg.svd(H, full_matrices=False)
    V = vh[:n_terms].T
    pencil = np.linalg.lstsq(V[:-1], V[1:], rcond=None)[0]
    z = np.linalg.eigvals(pencil)
    z = z[np.abs(z) < 1.0]
    if len(z) == 0:
        raise FitError("matrix pencil found no decaying terms", achieved_error=np.inf)
    gamma = -np.log(z.astype(complex)) / dt
    order = np.lexsort((gamma.imag, gamma.real))
    gamma = gamma[order]
    eta = _amplitudes(t - t[0], y, gamma)
    return eta, gamma


def _amplitudes(t, y, gamma):
    basis = np.exp(-np.outer(t, gamma))
    return np.linalg.lstsq(basis, y, rcond=None)[0]


def _prony_series(bath, K, sigma):
    base = bath.at_equilibrium()
    t = fit_grid(base)
    ref_plus = reference_correlation(base, +1, t)
    _, gamma = prony_fit(t, ref_plus, K, conjugate_closed=True)
    if sigma < 0:
        gamma = gamma.conj()
    eta = _amplitudes(t, reference_correlation(base, sigma, t), gamma)
    return eta, gamma


# ------------------------------------------------------------- decomposition

def reconstruct(eta, gamma, t):
    t = np.asarray(t, dtype=float)
    return np.exp(-np.multiply.outer(t, np.asarray(gamma))) @ np.asarray(eta)


def decomposition_error(bath, sigma, eta, gamma, t=None):
    """Relative sup-norm error of a series against the quadrature oracle."""
    if t is None:
        t = fit_grid(bath)
    ref = reference_correlation(bath, sigma, t)
    return float(np.max(np.abs(reconstruct(eta, gamma, t) - ref)) / np.max(np.abs(ref)))


def _series(bath, sigma, K, method):
    if method == "pade":
        eta, gamma = _pade_series(bath.at_equilibrium(), K)
    elif method == "prony":
        eta, gamma = _prony_series(bath, K, sigma)
    else:
        raise ValueError(f"unknown decomposition method {method!r}")
    return eta, gamma - 1j * sigma * bath.mu


def decompose_correlation(bath, sigma, K=None, tol=None, method="pade"):
    """Exponential series ``(eta, gamma)`` for one correlation channel.

    With ``K`` only, returns ``K`` terms.  With ``tol`` only, uses the
    smallest ``K`` whose sup-norm error is below ``tol``.  With both, ``K``
    terms are checked against ``tol``.
    """
    if K is None and tol is None:
        tol = DEFAULT_TOL
    if K is not None and K < 1:
        raise ValueError("K must be >= 1")
    if tol is not None and not 0 < tol <= 0.1:
        raise ValueError("tol must lie in (0, 0.1]")
    if K is not None:
        eta, gamma = _series(bath, sigma, K, method)
        if tol is not None:
            err = decomposition_error(bath, sigma, eta, gamma)
            if err > tol:
                raise FitError(f"K={K} reaches error {err:.3g} > tol {tol}", achieved_error=err)
        return eta, gamma
    best = np.inf
    for k in range(1, MAX_TERMS + 1):
        try:
            eta, gamma = _series(bath, sigma, k, method)
        except FitError:
            continue
        err = decomposition_error(bath, sigma, eta, gamma)
        best = min(best, err)
        if err <= tol:
            return eta, gamma
    raise FitError(f"no K <= {MAX_TERMS} reaches tol {tol}", achieved_error=best)


def shift_modes(modes, mu):
    """Move a ``mu = 0`` decomposition to chemical potential ``mu``.

    Accepts ``DissipatonMode`` objects or ``(sigma, eta, gamma)`` triples.
    """
    out = []
    for m in modes:
        if isinstance(m, DissipatonMode):
            out.append(DissipatonMode(m.alpha, m.u, m.sigma, m.eta, m.gamma - 1j * m.sigma * mu, m.k, m.label))
        else:
            sigma, eta, gamma = m
            out.append((sigma, eta, gamma - 1j * sigma * mu))
    return out


# ---------------------------------------------------------------- mode table

@dataclass(frozen=True)
class DissipatonMode:
    alpha: int
    u: int
    sigma: int
    eta: complex
    gamma: complex
    k: int
    label: str = ""

    @property
    def channel(self):
        return (self.alpha, self.u, self.sigma)


class ModeTable:
    """Ordered dissipaton modes; the order is the hierarchy's global mode order."""

    def __init__(self, modes, K_per_channel=None, labels=None, require_decay=True):
        modes = sorted(modes, key=lambda m: (m.alpha, m.u, m.sigma, m.k))
        self.modes = tuple(modes)
        self.K_per_channel = K_per_channel
        self.labels = tuple(labels) if labels is not None else tuple(
            dict.fromkeys(m.label for m in self.modes))
        key = {(m.alpha, m.u, m.sigma, m.k): j for j, m in enumerate(self.modes)}
        if len(key) != len(self.modes):
            raise ValueError("duplicate dissipaton modes")
        conj = []
        for m in self.modes:
            try:
                conj.append(key[(m.alpha, m.u, -m.sigma, m.k)])
            except KeyError:
                raise ValueError(f"mode {m} has no conjugate partner") from None
        self.conjugate = np.array(conj, dtype=np.intp)
        for m in self.modes if require_decay else ():
            if not m.gamma.real > 0:
                raise ValueError(f"mode {m} does not decay")

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, j):
        return self.modes[j]

    @property
    def eta(self):
        return np.array([m.eta for m in self.modes])

    @property
    def gamma(self):
        return np.array([m.gamma for m in self.modes])

    @property
    def sigma(self):
        return np.array([m.sigma for m in self.modes])

    def alpha_index(self, alpha):
        if isinstance(alpha, str):
            return self.labels.index(alpha)
        return int(alpha)

    def of_reservoir(self, alpha):
        a = self.alpha_index(alpha)
        return [j for j, m in enumerate(self.modes) if m.alpha == a]


def build_mode_table(baths, K=None, tol=None, method="pade"):
    """Decompose every (reservoir, orbital, sign) channel and order the modes."""
    modes = []
    per_channel = set()
    for a, bath in enumerate(baths):
        for sigma in (-1, 1):
            eta, gamma = decompose_correlation(bath, sigma, K=K, tol=tol, method=method)
            per_channel.add(len(eta))
            for u in bath.coupled_orbitals:
                for k, (e, g) in enumerate(zip(eta, gamma)):
                    modes.append(DissipatonMode(a, u, sigma, complex(e), complex(g), k, bath.alpha_label))
    kpc = per_channel.pop() if len(per_channel) == 1 else None
    return ModeTable(modes, kpc, [b.alpha_label for b in baths])


_CSV_FIELDS = ["alpha", "u", "sigma", "k", "re_eta", "im_eta", "re_gamma", "im_gamma"]


def write_mode_table(table, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(_CSV_FIELDS)
    for m in table:
        w.writerow([m.label or m.alpha, m.u, m.sigma, m.k,
                    f"{m.eta.real:.17g}", f"{m.eta.imag:.17g}",
                    f"{m.gamma.real:.17g}", f"{m.gamma.imag:.17g}"])


def read_mode_table(fh):
    rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != set(_CSV_FIELDS):
        raise ValueError(f"mode table CSV needs columns {_CSV_FIELDS}")
    labels = list(dict.fromkeys(r["alpha"] for r in rows))
    modes = [DissipatonMode(labels.index(r["alpha"]), int(r["u"]), int(r["sigma"]),
                            complex(float(r["re_eta"]), float(r["im_eta"])),
                            complex(float(r["re_gamma"]), float(r["im_gamma"])),
                            int(r["k"]), r["alpha"]) for r in rows]
    ks = {}
    for m in modes:
        ks.setdefault(m.channel, 0)
        ks[m.channel] += 1
    kpc = set(ks.values())
    return ModeTable(modes, kpc.pop() if len(kpc) == 1 else None, labels)


def mode_table_to_csv(table):
    buf = io.StringIO()
    write_mode_table(table, buf)
    return buf.getvalue()
