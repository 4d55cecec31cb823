"""Hierarchy against brute-force evolution of impurity plus discrete bath levels.

A discrete bath has an undamped exponential correlation, so with ``L = J``
the hierarchy is exact and agreement is at round-off level.
"""

import numpy as np
import pytest
from scipy.sparse.linalg import expm_multiply

from deom import DEOMGenerator, HierarchyState, build_single_dot_hamiltonian
from deom.model import build_fock_operators
from deom.observables import SteadySystem, apply_current, current_expectation, seed_correlation_rhs
from oracles import DiscreteBathModel

TOL = 1e-9


def _evolve(g, X, t, parity=None):
    G = g.to_sparse(parity)
    v = expm_multiply(G * t, X.blocks.ravel())
    return X.like(v.reshape(X.blocks.shape))


@pytest.fixture(scope="module", params=["spinless_two_leads", "interacting_spin"])
def setup(request):
    if request.param == "spinless_two_leads":
        ops = build_fock_operators(1)
        H = build_single_dot_hamiltonian(0.3, 0.0, ops)
        levels = [[(-0.7, 0.5), (1.1, 0.4)], [(0.4, 0.6)]]
        model = DiscreteBathModel(H, 1, levels, [2.0, 0.7], [0.5, -0.3])
        rho0 = np.diag([0.3, 0.7]).astype(complex)
    else:
        ops = build_fock_operators(2)
        H = build_single_dot_hamiltonian(-0.8, 1.7, ops)
        H = H + 0.2 * (ops.adag(0) @ ops.a(1) + ops.adag(1) @ ops.a(0))
        levels = [[(0.6, 0.5)], [(-0.4, 0.45)]]
        model = DiscreteBathModel(H, 2, levels, [1.5, 3.0], [0.4, -0.2])
        rho0 = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
    mt = model.mode_table()
    g = DEOMGenerator(H, ops, mt, len(mt))
    X0 = HierarchyState.from_root(g.layout, rho0, mt)
    return model, ops, g, X0, rho0


def test_reduced_density_matrix(setup):
    model, ops, g, X0, rho0 = setup
    for t in (0.5, 2.0, 5.0):
        exact = model.reduce(model.evolve(model.initial(rho0), t))
        assert np.abs(_evolve(g, X0, t).root - exact).max() < TOL


@pytest.mark.parametrize("side", ["left", "right"])
def test_odd_correlators(setup, side):
    model, ops, g, X0, rho0 = setup
    t1, tau = 1.3, 2.1
    rho_t1 = model.evolve(model.initial(rho0), t1)
    X1 = _evolve(g, X0, t1)
    for u in range(model.n_orb):
        for A, B in ((ops.a(u), ops.adag(u)), (ops.adag(u), ops.a(u)), (ops.a(0), ops.adag(u))):
            Bf, Af = model.embed(B), model.embed(A)
            seeded = Bf @ rho_t1 if side == "left" else rho_t1 @ Bf
            exact = np.trace(Af @ model.evolve(seeded, tau))
            seed = seed_correlation_rhs(X1, B, side, parity=1)
            got = np.trace(A @ _evolve(g, seed, tau, parity=1).root)
            assert abs(got - exact) < TOL


def test_even_correlator(setup):
    model, ops, g, X0, rho0 = setup
    t1, tau = 0.9, 1.7
    rho_t1 = model.evolve(model.initial(rho0), t1)
    X1 = _evolve(g, X0, t1)
    n = ops.number(0)
    exact = np.trace(model.embed(n) @ model.evolve(model.embed(n) @ rho_t1, tau))
    got = np.trace(n @ _evolve(g, seed_correlation_rhs(X1, n, "left", parity=0), tau).root)
    assert abs(got - exact) < TOL


def test_currents(setup):
    model, ops, g, X0, rho0 = setup
    for t in (0.7, 3.0):
        rho = model.evolve(model.initial(rho0), t)
        X = _evolve(g, X0, t)
        for a in range(len(model.levels)):
            exact = np.trace(model.current(a) @ rho)
            got = current_expectation(X, g.modes, ops, f"lead{a}")
            assert abs(got - exact) < TOL


def test_current_current_correlations(setup):
    model, ops, g, X0, rho0 = setup
    t1, tau = 1.1, 1.6
    rho = model.evolve(model.initial(rho0), t1)
    X1 = _evolve(g, X0, t1)
    system = SteadySystem(g, X1)
    leads = range(len(model.levels))
    for a in leads:
        for b in leads:
            exact = np.trace(model.current(a) @ model.evolve(model.current(b) @ rho, tau))
            seed = apply_current(system, X1, f"lead{b}")
            got = current_expectation(_evolve(g, seed, tau), g.modes, ops, f"lead{a}")
            assert abs(got - exact) < TOL
