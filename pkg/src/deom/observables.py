"""Spectral functions, currents and current-noise spectra from a converged hierarchy.

All frequency-domain quantities are built from the one-sided transform

    C_AB(w) = (1/pi) int_0^inf exp(i w t) <A(t) B(0)> dt,

obtained from one linear solve per (seed operator, frequency).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, GridError, ShapeError
from .hierarchy import DEOMGenerator, HierarchyIndex, HierarchyState
from .solvers import SolverConfig, solve_frequency_response, solve_steady_state

KINDS = ("impurity_A", "noise_S", "noise_dSdw")


# --------------------------------------------------------------------- table

@dataclass
class SpectrumTable:
    omegas: np.ndarray
    values: np.ndarray
    kind: str
    labels: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        vals = np.asarray(self.values)
        if np.iscomplexobj(vals) and not np.any(vals.imag):
            vals = vals.real
        self.values = vals
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.omegas.ndim != 1 or self.values.shape != self.omegas.shape:
            raise ShapeError("omegas and values must be 1-d of equal length")
        if len(self.omegas) > 1 and np.any(np.diff(self.omegas) <= 0):
            raise GridError("frequency grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrum contains non-finite values")

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    def to_csv(self, fh=None):
        own = fh is None
        fh = io.StringIO() if own else fh
        params = ";".join(f"{k}={v}" for k, v in self.params.items())
        labels = "|".join(str(x) for x in self.labels)
        fh.write(f"# kind={self.kind}, labels={labels}, params={params}\n")
        w = csv.writer(fh, lineterminator="\n")
        if self.is_complex:
            w.writerow(["omega", "value", "value_imag"])
            for x, v in zip(self.omegas, self.values):
                w.writerow([f"{x:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])
        else:
            w.writerow(["omega", "value"])
            for x, v in zip(self.omegas, self.values):
                w.writerow([f"{x:.17g}", f"{v:.17g}"])
        return fh.getvalue() if own else None

    @classmethod
    def from_csv(cls, fh):
        if isinstance(fh, str):
            fh = io.StringIO(fh)
        head = fh.readline()
        if not head.startswith("# "):
            raise ValueError("missing '# kind=...' header")
        meta = {}
        for part in head[2:].strip().split(", "):
            k, _, v = part.partition("=")
            meta[k] = v
        params = dict(p.split("=", 1) for p in meta.get("params", "").split(";") if p)
        labels = tuple(x for x in meta.get("labels", "").split("|") if x)
        rows = list(csv.reader(fh))
        cols = rows[0]
        data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(cols))
        vals = data[:, 1] + 1j * data[:, 2] if len(cols) == 3 else data[:, 1]
        return cls(data[:, 0], vals, meta["kind"], labels, params)


def default_omega_grid(U, delta=1.0, n_points=400):
    """Uniform grid on ``[-2U, 2U]`` merged with step ``delta/20`` on ``[-2 delta, 2 delta]``."""
    half = max(2.0 * abs(U), 2.0 * delta)
    coarse = np.linspace(-half, half, n_points)
    fine = np.arange(-40, 41) * (delta / 20.0)
    return np.unique(np.round(np.concatenate([coarse, fine]), 12))


# ------------------------------------------------------------------ system

@dataclass
class SteadySystem:
    """A generator together with its converged steady state."""

    generator: DEOMGenerator
    state: HierarchyState
    config: SolverConfig = field(default_factory=SolverConfig)

    @property
    def ops(self):
        return self.generator.ops

    @property
    def modes(self):
        return self.generator.modes


def solve_system(H, ops, mode_table, L, config=SolverConfig(), max_count=None):
    kw = {} if max_count is None else {"max_count": max_count}
    g = DEOMGenerator(H, ops, mode_table, L, **kw)
    return SteadySystem(g, solve_steady_state(g, config), config)


def operator_parity(B, ops):
    """0 if ``B`` conserves fermion parity, 1 if it flips it."""
    P = ops.parity
    even = B * (P[:, None] == P[None, :])
    odd = B - even
    if not np.any(odd):
        return 0
    if not np.any(even):
        return 1
    raise ShapeError("operator mixes even and odd fermion parity")


def seed_correlation_rhs(state, B, side="left", ops=None, parity=None):
    """Hierarchy image of ``B rho`` (``side='left'``) or ``rho B`` (``'right'``).

    For odd ``B`` the left product carries ``(-1)^n`` on tier-``n`` DDOs.
    """
    B = np.asarray(B, dtype=complex)
    if parity is None:
        if ops is None:
            raise ValueError("need ops or parity to classify B")
        parity = operator_parity(B, ops)
    X = state.blocks
    if side == "left":
        out = B[None] @ X
        if parity:
            out *= np.where(state.layout.tier % 2 == 0, 1.0, -1.0)[:, None, None]
    elif side == "right":
        out = X @ B[None]
    else:
        raise ValueError("side must be 'left' or 'right'")
    return state.like(out)


def _solve_grid(system, seed, parity, omegas, extract, label=""):
    """Solve on ``omegas`` (in ascending order, warm-started) and keep ``extract(X)`` only."""
    g = system.generator.with_parity(parity)
    steady = system.state if parity == 0 else None
    omegas = np.asarray(omegas, dtype=float)
    order = np.argsort(omegas)
    out = [None] * len(omegas)
    prev = None
    for i in order:
        r = solve_frequency_response(g, seed, float(omegas[i]), system.config, steady, prev, label)
        prev = r.X
        out[i] = extract(r.X)
    return np.array(out)


def _root_trace(O):
    O = np.asarray(O)
    return lambda X: np.trace(O @ X.root) / np.pi


def correlation_function(system, A, B, omegas, side="left"):
    """``C_AB(w)`` on a grid (``side='right'`` gives ``(1/pi) int e^{iwt} <B A(t)>``)."""
    parity = operator_parity(np.asarray(B), system.ops)
    seed = seed_correlation_rhs(system.state, B, side, parity=parity)
    return _solve_grid(system, seed, parity, omegas, _root_trace(A), "B")


def impurity_spectral_function(system, u, v=None, omegas=None):
    """``A_uv(w)``; real for ``u == v``, Hermitian in ``(u, v)`` otherwise."""
    v = u if v is None else v
    ops = system.ops
    omegas = np.asarray(omegas, dtype=float)
    C = lambda A, B, w: correlation_function(system, A, B, w)
    if u == v:
        val = C(ops.a(u), ops.adag(u), omegas).real + C(ops.adag(u), ops.a(u), -omegas).real
    else:
        val = 0.5 * (C(ops.a(u), ops.adag(v), omegas) + np.conj(C(ops.a(v), ops.adag(u), omegas))
                     + C(ops.adag(v), ops.a(u), -omegas) + np.conj(C(ops.adag(u), ops.a(v), -omegas)))
    params = {"u": u, "v": v, "L": system.generator.L, "J": len(system.modes)}
    return SpectrumTable(omegas, val, "impurity_A", (u, v), params)


# ------------------------------------------------------------------ currents

def _tier_one(state, j):
    return state.blocks[state.layout.slot(HierarchyIndex(1 << j, 1))]


def current_expectation(blocks_state, modes, ops, alpha):
    """``Tr[I_alpha X]`` from the tier-1 DDOs of ``X`` (complex in general)."""
    a = modes.alpha_index(alpha)
    total = 0j
    for j in modes.of_reservoir(a):
        m = modes[j]
        total += 1j * m.sigma * np.trace(ops.op(m.u, -m.sigma) @ _tier_one(blocks_state, j))
    return total


def steady_current(system, alpha):
    """Particle current flowing out of reservoir ``alpha`` into the impurity."""
    return float(current_expectation(system.state, system.modes, system.ops, alpha).real)


def apply_current(system, X, alpha):
    """Hierarchy image of ``I_alpha X`` for an even-parity hierarchy vector ``X``."""
    g = system.generator
    modes = g.modes.of_reservoir(g.modes.alpha_index(alpha))
    blocks = X.blocks if isinstance(X, HierarchyState) else X
    out = -1j * (g.coupling_left(blocks, modes, +1) - g.coupling_left(blocks, modes, -1))
    return system.state.like(out)


def current_fluctuation_seed(system, alpha):
    I = steady_current(system, alpha)
    seed = apply_current(system, system.state, alpha)
    return seed.like(seed.blocks - I * system.state.blocks), I


def noise_correlations(system, alphas, omegas):
    """``C_{dI_a, dI_b}(w)`` for all pairs; returns ``{(a, b): array}``."""
    omegas = np.asarray(omegas, dtype=float)
    means = {a: steady_current(system, a) for a in alphas}

    def extract(X):
        tr = np.trace(X.root)
        return [(current_expectation(X, system.modes, system.ops, a) - means[a] * tr) / np.pi for a in alphas]

    out = {}
    for b in alphas:
        seed, _ = current_fluctuation_seed(system, b)
        vals = _solve_grid(system, seed, 0, omegas, extract, f"dI_{b}")
        for i, a in enumerate(alphas):
            out[(a, b)] = vals[:, i]
    return out


def noise_spectrum(system, alpha, beta_=None, omegas=None):
    """Symmetrized current-fluctuation spectrum ``S_{alpha beta}(w)``."""
    b = alpha if beta_ is None else beta_
    omegas = np.asarray(omegas, dtype=float)
    n = len(omegas)
    both = np.concatenate([omegas, -omegas])
    C = noise_correlations(system, list(dict.fromkeys([alpha, b])), both)
    cab, cba = C[(alpha, b)], C[(b, alpha)]
    val = 0.5 * (cab[:n] + np.conj(cba[:n]) + cba[n:] + np.conj(cab[n:]))
    if alpha == b:
        val = val.real
    return SpectrumTable(omegas, val, "noise_S", (alpha, b), {"L": system.generator.L})


def total_noise(S_LL, S_RR, S_LR, a=0.5, b=0.5):
    """``a^2 S_LL + b^2 S_RR - 2ab Re S_LR`` on a shared grid."""
    for t in (S_RR, S_LR):
        if t.omegas.shape != S_LL.omegas.shape or not np.array_equal(t.omegas, S_LL.omegas):
            raise AlignmentError("noise tables are on different frequency grids")
    val = a * a * np.real(S_LL.values) + b * b * np.real(S_RR.values) - 2 * a * b * np.real(S_LR.values)
    return SpectrumTable(S_LL.omegas.copy(), val, "noise_S", ("total",), {"a": a, "b": b})


def spectrum_derivative(table):
    """``dS/dw`` by central differences (one-sided at the ends) on a uniform grid."""
    w = table.omegas
    if len(w) < 2:
        raise GridError("need at least two frequencies")
    h = np.diff(w)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise GridError("derivative needs a uniform grid; resample the spectrum first")
    d = np.gradient(table.values, h[0], edge_order=1)
    return SpectrumTable(w.copy(), d, "noise_dSdw", table.labels, dict(table.params))
