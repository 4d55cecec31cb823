"""Impurity Fock space, fermionic operators and quantum-dot Hamiltonians.

Orbitals are spin-orbitals ordered site-major then spin: ``(1up, 1dn, 2up,
2dn, ...)``.  Orbital ``u`` is the ``u``-th tensor factor of the Jordan-Wigner
construction, so in a basis index the most significant bit is orbital 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ShapeError, SizeError

MAX_ORBITALS = 8


def orbital_index(site, spin):
    """Global orbital index of (site, spin); sites and spins count from 0."""
    return 2 * site + spin


@dataclass(frozen=True, eq=False)
class FockOperatorSet:
    n_orbitals: int
    annihilators: tuple

    @property
    def dim(self):
        return 2**self.n_orbitals

    def a(self, u):
        return self.annihilators[u]

    def adag(self, u):
        return self.annihilators[u].conj().T

    def op(self, u, sigma):
        """``a_u^sigma``: creation for sigma=+1, annihilation for sigma=-1."""
        return self.adag(u) if sigma > 0 else self.a(u)

    def number(self, u):
        return self.adag(u) @ self.a(u)

    @cached_property
    def total_number(self):
        return sum(self.number(u) for u in range(self.n_orbitals))

    @cached_property
    def parity(self):
        """Diagonal of the fermion parity operator, +1 even / -1 odd."""
        occ = np.array([bin(i).count("1") for i in range(self.dim)])
        return (-1) ** occ

    @cached_property
    def _perm_tables(self):
        return {(u, s): _single_entry_tables(self.op(u, s))
                for u in range(self.n_orbitals) for s in (+1, -1)}

    def tables(self, u, sigma):
        """Row/column gather tables for ``a_u^sigma``.

        Every JW operator has at most one non-zero per row and per column, so
        ``(op @ X)[i] = lval[i] * X[lcol[i]]`` and
        ``(X @ op)[:, c] = X[:, rrow[c]] * rval[c]``.
        """
        return self._perm_tables[(u, sigma)]


def _single_entry_tables(m):
    d = m.shape[0]
    lcol = np.zeros(d, dtype=np.intp)
    lval = np.zeros(d, dtype=complex)
    rrow = np.zeros(d, dtype=np.intp)
    rval = np.zeros(d, dtype=complex)
    rows, cols = np.nonzero(m)
    lcol[rows] = cols
    lval[rows] = m[rows, cols]
    rrow[cols] = rows
    rval[cols] = m[rows, cols]
    return lcol, lval, rrow, rval


def build_fock_operators(n_orbitals):
    """Jordan-Wigner annihilators for ``n_orbitals`` spin-orbitals."""
    if not 1 <= n_orbitals <= MAX_ORBITALS:
        raise SizeError(f"n_orbitals must lie in [1, {MAX_ORBITALS}], got {n_orbitals}")
    low = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    eye = np.eye(2, dtype=complex)
    ops = []
    for u in range(n_orbitals):
        m = np.ones((1, 1), dtype=complex)
        for v in range(n_orbitals):
            m = np.kron(m, z if v < u else (low if v == u else eye))
        m.setflags(write=False)
        ops.append(m)
    return FockOperatorSet(n_orbitals, tuple(ops))


def epsilon_from_scheme(U, U_C, N):
    """On-site energy that places the dots at filling ``N + 1``."""
    return -(U + 2 * N * U_C) / 2


@dataclass(frozen=True)
class DqdParameters:
    eps1: float = 0.0
    eps2: float = 0.0
    U: float = 0.0
    U_C: float = 0.0
    T_C: float = 0.0
    N: int = 1

    @classmethod
    def from_scheme(cls, U, U_C, N=1, T_C=0.0):
        eps = epsilon_from_scheme(U, U_C, N)
        return cls(eps1=eps, eps2=eps, U=U, U_C=U_C, T_C=T_C, N=N)


def build_dqd_hamiltonian(p: DqdParameters, ops: FockOperatorSet):
    if ops.n_orbitals != 4:
        raise ShapeError(f"double dot needs 4 spin-orbitals, got {ops.n_orbitals}")
    n = [ops.number(u) for u in range(4)]
    n1 = n[0] + n[1]
    n2 = n[2] + n[3]
    H = p.eps1 * n1 + p.eps2 * n2
    H = H + p.U * (n[0] @ n[1] + n[2] @ n[3]) + p.U_C * (n1 @ n2)
    for s in (0, 1):
        u1, u2 = orbital_index(0, s), orbital_index(1, s)
        hop = ops.adag(u1) @ ops.a(u2)
        H = H + p.T_C * (hop + hop.conj().T)
    return H


def build_single_dot_hamiltonian(eps, U, ops: FockOperatorSet):
    """Anderson impurity: ``eps (n_up + n_dn) + U n_up n_dn``; 1 orbital means spinless."""
    if ops.n_orbitals == 1:
        if U:
            raise ShapeError("a spinless level carries no Hubbard term")
        return eps * ops.number(0)
    if ops.n_orbitals != 2:
        raise ShapeError(f"single dot needs 1 or 2 spin-orbitals, got {ops.n_orbitals}")
    nu, nd = ops.number(0), ops.number(1)
    return eps * (nu + nd) + U * (nu @ nd)
