"""Truncated dissipaton hierarchy: index space, states and the generator.

A dissipaton density operator (DDO) is labelled by the set of occupied
fermionic modes, stored as a bit mask (bit ``j`` <-> mode ``j`` of the
``ModeTable``).  Slots are ordered by tier, then lexicographically by the
sorted tuple of occupied modes.  The root (empty set) is slot 0.

Sign convention for a mode ``j`` coupling DDO ``n`` (tier ``n``) to its
neighbours, with ``p`` the fermionic parity of the operand (0 for density
operators, 1 for ``B rho`` with ``B`` odd)::

    up   (n -> n + j):  (-1)^(n - #{k in n: k < j})
                        * [a^{-s} X + (-1)^(n+1+p) X a^{-s}]
    down (n -> n - j):  (-1)^(n - #{k in n: k <= j})
                        * [eta_j a^{s} X - (-1)^(n-1+p) conj(eta_jbar) X a^{s}]

each multiplied by ``-i``, where ``s`` is the mode's sign.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import CapacityError, ShapeError, SingularityError

DEFAULT_MAX_DDOS = 2_000_000
MAX_MODES = 64


def ddo_count(J, L):
    """Number of DDOs with at most ``L`` of ``J`` modes occupied, root included."""
    return sum(math.comb(J, l) for l in range(min(J, L) + 1))


@dataclass(frozen=True)
class HierarchyIndex:
    bits: int
    tier: int

    @classmethod
    def from_modes(cls, modes):
        bits = 0
        for j in modes:
            bits |= 1 << j
        return cls(bits, bin(bits).count("1"))

    @property
    def modes(self):
        return tuple(j for j in range(self.bits.bit_length()) if self.bits >> j & 1)


def theta(index, j):
    """Occupied modes up to and including ``j``."""
    bits = index.bits if isinstance(index, HierarchyIndex) else int(index)
    return bin(bits & ((1 << (j + 1)) - 1)).count("1")


def _check_capacity(J, L, max_count):
    if J < 1 or L < 0:
        raise ValueError("need J >= 1 and L >= 0")
    count = ddo_count(J, L)
    if max_count is not None and count > max_count:
        raise CapacityError(f"{count} DDOs for J={J}, L={L} exceed the budget of {max_count}", count=count)
    if J > MAX_MODES:
        raise CapacityError(f"J={J} exceeds the {MAX_MODES}-mode bit-mask limit", count=count)
    return count


def enumerate_indices(J, L, max_count=DEFAULT_MAX_DDOS):
    _check_capacity(J, L, max_count)
    out = [HierarchyIndex(0, 0)]
    for l in range(1, min(J, L) + 1):
        out.extend(HierarchyIndex.from_modes(c) for c in itertools.combinations(range(J), l))
    return out


def _popcount(x):
    return np.bitwise_count(x).astype(np.int64)


class HierarchyLayout:
    """Slot bookkeeping and per-mode neighbour tables for one ``(J, L)``."""

    def __init__(self, J, L, max_count=DEFAULT_MAX_DDOS):
        self.count = _check_capacity(J, L, max_count)
        self.J, self.L = J, L
        bits = [0]
        for l in range(1, min(J, L) + 1):
            bits.extend(sum(1 << j for j in c) for c in itertools.combinations(range(J), l))
        self.bits = np.array(bits, dtype=np.uint64)
        self.tier = _popcount(self.bits)
        self._order = np.argsort(self.bits)
        self._sorted = self.bits[self._order]
        self.up = []
        self.down = []
        one = np.uint64(1)
        for j in range(J):
            bj = one << np.uint64(j)
            below = _popcount(self.bits & (bj - one))
            has = (self.bits & bj) != 0
            src = np.nonzero(~has & (self.tier < L))[0]
            dst = self.lookup(self.bits[src] | bj)
            n = self.tier[src]
            self.up.append((src, dst, np.where((n - below[src]) % 2 == 0, 1.0, -1.0)))
            src = np.nonzero(has)[0]
            dst = self.lookup(self.bits[src] & ~bj)
            n = self.tier[src]
            self.down.append((src, dst, np.where((n - below[src] - 1) % 2 == 0, 1.0, -1.0)))

    def __len__(self):
        return self.count

    def lookup(self, bits):
        """Slots of the given bit masks (all must be present)."""
        bits = np.asarray(bits, dtype=np.uint64)
        pos = np.searchsorted(self._sorted, bits)
        pos = np.minimum(pos, self.count - 1)
        if np.any(self._sorted[pos] != bits):
            raise KeyError("bit mask outside the truncated hierarchy")
        return self._order[pos]

    def slot(self, index):
        bits = index.bits if isinstance(index, HierarchyIndex) else int(index)
        return int(self.lookup(np.array([bits], dtype=np.uint64))[0])

    def index(self, slot):
        return HierarchyIndex(int(self.bits[slot]), int(self.tier[slot]))

    def tier_slice(self, n):
        lo = ddo_count(self.J, n - 1) if n > 0 else 0
        return slice(lo, ddo_count(self.J, n))


class HierarchyState:
    """All DDO blocks of one hierarchy vector, stored as ``(count, dim, dim)``."""

    def __init__(self, layout, blocks, mode_table=None):
        blocks = np.asarray(blocks, dtype=complex)
        if blocks.ndim != 3 or blocks.shape[0] != layout.count or blocks.shape[1] != blocks.shape[2]:
            raise ShapeError(f"blocks of shape {blocks.shape} do not fit {layout.count} DDOs")
        self.layout = layout
        self.blocks = blocks
        self.mode_table = mode_table

    @classmethod
    def zeros(cls, layout, dim, mode_table=None):
        return cls(layout, np.zeros((layout.count, dim, dim), dtype=complex), mode_table)

    @classmethod
    def from_root(cls, layout, rho, mode_table=None):
        st = cls.zeros(layout, rho.shape[0], mode_table)
        st.blocks[0] = rho
        return st

    @property
    def L(self):
        return self.layout.L

    @property
    def dim(self):
        return self.blocks.shape[1]

    @property
    def root(self):
        return self.blocks[0]

    def block(self, modes):
        return self.blocks[self.layout.slot(HierarchyIndex.from_modes(modes))]

    def copy(self):
        return HierarchyState(self.layout, self.blocks.copy(), self.mode_table)

    def norm(self):
        return float(np.linalg.norm(self.blocks))

    def like(self, blocks):
        return HierarchyState(self.layout, blocks, self.mode_table)

    def save(self, fh):
        write_snapshot(self, fh)


_HEADER = struct.Struct("<qqqq")


def write_snapshot(state, fh):
    """Header ``(J, L, dim, count)`` as little-endian int64, then the blocks as ``<c16``."""
    lay = state.layout
    fh.write(_HEADER.pack(lay.J, lay.L, state.dim, lay.count))
    fh.write(np.ascontiguousarray(state.blocks, dtype="<c16").tobytes())


def read_snapshot(fh, mode_table=None, max_count=DEFAULT_MAX_DDOS):
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ShapeError("truncated snapshot header")
    J, L, dim, count = _HEADER.unpack(head)
    layout = HierarchyLayout(J, L, max_count)
    if layout.count != count:
        raise ShapeError(f"snapshot claims {count} DDOs, layout has {layout.count}")
    raw = fh.read(16 * count * dim * dim)
    if len(raw) != 16 * count * dim * dim:
        raise ShapeError("truncated snapshot body")
    blocks = np.frombuffer(raw, dtype="<c16").astype(complex).reshape(count, dim, dim)
    return HierarchyState(layout, blocks, mode_table)


def _left(tab, X):
    lcol, lval, _, _ = tab
    return X[:, lcol, :] * lval[None, :, None]


def _right(tab, X):
    _, _, rrow, rval = tab
    return X[:, :, rrow] * rval[None, None, :]


class DEOMGenerator:
    """Linear map ``d/dt`` of the hierarchy for a fixed system and mode table.

    ``parity`` selects the sector: 0 for density-operator-like states, 1 for
    states seeded by an odd operator.
    """

    def __init__(self, H, ops, mode_table, L, parity=0, layout=None, max_count=DEFAULT_MAX_DDOS):
        H = np.asarray(H, dtype=complex)
        if H.shape != (ops.dim, ops.dim):
            raise ShapeError(f"H has shape {H.shape}, Fock space has dim {ops.dim}")
        for m in mode_table:
            if not 0 <= m.u < ops.n_orbitals:
                raise ShapeError(f"mode couples to orbital {m.u}, system has {ops.n_orbitals}")
        self.H = H
        self.ops = ops
        self.modes = mode_table
        self.parity = parity
        self.layout = layout if layout is not None else HierarchyLayout(len(mode_table), L, max_count)
        if self.layout.J != len(mode_table):
            raise ShapeError("layout and mode table disagree on J")
        self.L = self.layout.L
        self.dim = ops.dim
        gam = mode_table.gamma
        self.gamma_sum = np.zeros(self.layout.count, dtype=complex)
        one = np.uint64(1)
        for j in range(len(mode_table)):
            self.gamma_sum += np.where(self.layout.bits & (one << np.uint64(j)), gam[j], 0)
        self.E, self.V = np.linalg.eigh(H)
        self._tier_sign = np.where(self.layout.tier % 2 == 0, 1.0, -1.0)

    def with_parity(self, parity):
        g = object.__new__(DEOMGenerator)
        g.__dict__.update(self.__dict__)
        g.parity = parity
        return g

    @property
    def shape(self):
        n = self.layout.count * self.dim**2
        return (n, n)

    def _check(self, X):
        if X.shape != (self.layout.count, self.dim, self.dim):
            raise ShapeError(f"state of shape {X.shape} does not match generator")

    # -- pieces -----------------------------------------------------------
    def diagonal(self, X):
        return -1j * (self.H @ X - X @ self.H) - self.gamma_sum[:, None, None] * X

    def off_diagonal(self, X, parity=None):
        p = self.parity if parity is None else parity
        out = np.zeros_like(X)
        ts = self._tier_sign
        for j, m in enumerate(self.modes):
            src, dst, sgn = self.layout.up[j]
            if len(src):
                tab = self.ops.tables(m.u, -m.sigma)
                Y = X[dst]
                # (-1)^(n+1+p) on the right action
                rs = -ts[src] * (-1) ** p
                out[src] += (-1j * sgn)[:, None, None] * (_left(tab, Y) + rs[:, None, None] * _right(tab, Y))
            src, dst, sgn = self.layout.down[j]
            if len(src):
                tab = self.ops.tables(m.u, m.sigma)
                Y = X[dst]
                eb = np.conj(self.modes[self.modes.conjugate[j]].eta)
                # -(-1)^(n-1+p) = (-1)^(n+p)
                rs = ts[src] * (-1) ** p
                out[src] += (-1j * sgn)[:, None, None] * (
                    m.eta * _left(tab, Y) + (rs * eb)[:, None, None] * _right(tab, Y))
        return out

    def apply(self, X, parity=None):
        X = X.blocks if isinstance(X, HierarchyState) else X
        self._check(X)
        return self.diagonal(X) + self.off_diagonal(X, parity)

    __call__ = apply

    def coupling_left(self, X, modes, op_sign):
        """Left action of the coupling terms of ``modes`` whose system operator is ``a^op_sign``.

        Summed over all orbitals, ``op_sign=+1`` is the hierarchy image of
        ``sum a^dag F rho`` and ``op_sign=-1`` of ``sum F^dag a rho``.
        """
        out = np.zeros_like(X)
        for j in modes:
            m = self.modes[j]
            if -m.sigma == op_sign:
                src, dst, sgn = self.layout.up[j]
                if len(src):
                    out[src] += sgn[:, None, None] * _left(self.ops.tables(m.u, -m.sigma), X[dst])
            else:
                src, dst, sgn = self.layout.down[j]
                if len(src):
                    out[src] += (m.eta * sgn)[:, None, None] * _left(self.ops.tables(m.u, m.sigma), X[dst])
        return out

    # -- block inverse ----------------------------------------------------
    def diagonal_solve(self, R, shift):
        """Solve ``(i[H, .] + gamma_n + shift) Y = R`` block by block in the eigenbasis of ``H``."""
        V = self.V
        denom = 1j * (self.E[:, None] - self.E[None, :])[None] + (self.gamma_sum + shift)[:, None, None]
        if np.min(np.abs(denom)) < 1e-13 * max(1.0, np.max(np.abs(self.E))):
            raise SingularityError("shift hits an undamped resonance of the block diagonal")
        Rt = V.conj().T @ R @ V
        return V @ (Rt / denom) @ V.conj().T

    # -- matrix forms -----------------------------------------------------
    def to_sparse(self, parity=None):
        """CSR matrix of the generator on row-major vectorised blocks."""
        p = self.parity if parity is None else parity
        d = self.dim
        n = self.layout.count
        I = sparse.identity(d, dtype=complex, format="csr")
        LS = -1j * (sparse.kron(self.H, I) - sparse.kron(I, self.H.T))
        G = sparse.kron(sparse.identity(n, format="csr"), LS, format="csr")
        G = G - sparse.kron(sparse.diags(self.gamma_sum), sparse.identity(d * d), format="csr")
        ts = self._tier_sign
        parts = [G]
        for j, m in enumerate(self.modes):
            for kind in ("up", "down"):
                src, dst, sgn = (self.layout.up if kind == "up" else self.layout.down)[j]
                if not len(src):
                    continue
                s = m.sigma if kind == "down" else -m.sigma
                A = sparse.csr_matrix(self.ops.op(m.u, s))
                rs = (-ts[src] if kind == "up" else ts[src]) * (-1) ** p
                if kind == "up":
                    lc, rc = -1j * sgn, -1j * sgn * rs
                else:
                    eb = np.conj(self.modes[self.modes.conjugate[j]].eta)
                    lc, rc = -1j * sgn * m.eta, -1j * sgn * rs * eb
                PL = sparse.csr_matrix((lc, (src, dst)), shape=(n, n))
                PR = sparse.csr_matrix((rc, (src, dst)), shape=(n, n))
                parts.append(sparse.kron(PL, sparse.kron(A, I), format="csr"))
                parts.append(sparse.kron(PR, sparse.kron(I, A.T), format="csr"))
        return sum(parts[1:], parts[0]).tocsr()

    def trace_vector(self):
        """Row vector ``t`` with ``t . vec(X) = Tr X_root``."""
        t = np.zeros(self.layout.count * self.dim**2, dtype=complex)
        t[: self.dim**2] = np.eye(self.dim).ravel()
        return t
