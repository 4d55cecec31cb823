"""Small shared builders for the test suite."""

import numpy as np
from scipy import integrate

from deom import (DqdParameters, LorentzBath, SolverConfig, build_dqd_hamiltonian, build_fock_operators,
                  build_mode_table, build_single_dot_hamiltonian, solve_system)
from deom.observables import seed_correlation_rhs
from deom.solvers import propagate

DIRECT = SolverConfig(method="direct", tol=1e-10)


def spinless_dot(eps=0.0, leads=((1.0, 10.0, 10.0, 0.0),), K=4, tol=None, L=3, method="pade", config=DIRECT):
    """``leads`` holds ``(delta, W, beta, mu)`` tuples, named L, R, ..."""
    ops = build_fock_operators(1)
    H = build_single_dot_hamiltonian(eps, 0.0, ops)
    baths = [LorentzBath(d, W, b, mu, "LRABCD"[i], (0,)) for i, (d, W, b, mu) in enumerate(leads)]
    mt = build_mode_table(baths, K=K, tol=tol, method=method)
    return solve_system(H, ops, mt, L, config)


def spin_dot(eps=-2.0, U=4.0, leads=((1.0, 10.0, 10.0, 0.0),), K=3, L=3, method="pade", config=DIRECT):
    ops = build_fock_operators(2)
    H = build_single_dot_hamiltonian(eps, U, ops)
    baths = [LorentzBath(d, W, b, mu, "LRABCD"[i], (0, 1)) for i, (d, W, b, mu) in enumerate(leads)]
    mt = build_mode_table(baths, K=K, method=method)
    return solve_system(H, ops, mt, L, config)


def dqd(U=4.0, U_C=4.0, N=1, T_C=0.0, mu=0.0, W=10.0, beta=5.0, K=2, L=2, method="pade", config=DIRECT):
    ops = build_fock_operators(4)
    H = build_dqd_hamiltonian(DqdParameters.from_scheme(U, U_C, N, T_C), ops)
    baths = [LorentzBath(1.0, W, beta, mu, "L", (0, 1)), LorentzBath(1.0, W, beta, -mu, "R", (2, 3))]
    return solve_system(H, ops, build_mode_table(baths, K=K, method=method), L, config)


def sinh_grid(scale, half_width, n):
    """Grid dense near 0 and sparse in the tails, for sum-rule integrals."""
    x = np.linspace(-np.arcsinh(half_width / scale), np.arcsinh(half_width / scale), n)
    return scale * np.sinh(x)


def time_correlation(system, A, B, t_final, dt=0.01, every=5, seed=None, parity=None):
    """``Tr[A X(t)]`` with ``X(0)`` the hierarchy image of ``B rho`` (or ``seed``), by RK4."""
    if seed is None:
        seed = seed_correlation_rhs(system.state, B, ops=system.ops)
        parity = 1 if parity is None else parity
    g = system.generator.with_parity(parity)
    n = int(round(t_final / (dt * every)))
    X = seed
    ts, cs = [0.0], [np.trace(A @ X.root)]
    for i in range(n):
        X = propagate(X, g, dt, every)
        ts.append((i + 1) * dt * every)
        cs.append(np.trace(A @ X.root))
    return np.array(ts), np.array(cs)


def half_fourier(ts, cs, omega):
    """``(1/pi) int_0^T e^{i w t} c(t) dt`` by Simpson's rule."""
    return integrate.simpson(np.exp(1j * omega * ts) * cs, x=ts) / np.pi
