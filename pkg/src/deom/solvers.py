"""Time propagation, steady states and frequency-domain solves.

Three routes solve every linear problem:

``"iterative"``
    Damped block-Jacobi sweep.  Adding ``Omega X`` to both sides of
    ``(D - i w) X - O X = b`` (``D`` block diagonal, ``O`` tier coupling)
    gives ``X <- (D - i w + Omega)^-1 (b + Omega X + O X)``.
``"gmres"``
    Restarted GMRES with the block-diagonal inverse as preconditioner.
``"direct"``
    Sparse LU of the assembled generator; only for small hierarchies.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import ConvergenceError, InstabilityError, ShapeError, SingularityError
from .hierarchy import HierarchyState

log = logging.getLogger(__name__)

METHODS = ("iterative", "gmres", "direct")


@dataclass(frozen=True)
class SolverConfig:
    omega_damp: float | None = None
    tol: float = 1e-8
    max_iter: int = 20000
    dt: float = 0.01
    t_final: float = 50.0
    method: str = "gmres"
    restart: int = 60

    def __post_init__(self):
        if self.omega_damp is not None and self.omega_damp < 0:
            raise ValueError("omega_damp must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")


def default_damping(generator):
    """Sum of the ``L`` largest decay rates: the stiffest diagonal at tier ``L``."""
    rates = np.sort(generator.modes.gamma.real)[::-1]
    omega = float(np.sum(rates[: generator.L]))
    return omega if omega > 0 else 1.0


def _damping(generator, config):
    return default_damping(generator) if config.omega_damp is None else config.omega_damp


def _blocks(x):
    return x.blocks if isinstance(x, HierarchyState) else np.asarray(x)


def _state(generator, blocks, like=None):
    mt = like.mode_table if isinstance(like, HierarchyState) else generator.modes
    return HierarchyState(generator.layout, blocks, mt)


def block_change(new, old):
    """Largest relative change of any DDO block.

    Blocks that are negligible against the largest one use that largest norm
    as their scale, so numerically zero blocks cannot stall convergence.
    """
    dn = np.linalg.norm(new - old, axis=(1, 2))
    nn = np.linalg.norm(new, axis=(1, 2))
    floor = 1e-12 * max(nn.max(), 1e-300)
    return float(np.max(dn / np.maximum(nn, floor)))


# ---------------------------------------------------------------- propagation

def propagate(state, generator, dt, n_steps, parity=None):
    """Classic fourth-order Runge-Kutta steps of ``dX/dt = G X``."""
    X = _blocks(state).astype(complex, copy=True)
    if X.shape != (generator.layout.count, generator.dim, generator.dim):
        raise ShapeError("state does not match the generator")
    scale = max(np.linalg.norm(X), 1e-300)
    f = lambda Y: generator.apply(Y, parity)
    for step in range(n_steps):
        k1 = f(X)
        k2 = f(X + 0.5 * dt * k1)
        k3 = f(X + 0.5 * dt * k2)
        k4 = f(X + dt * k3)
        X = X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if step % 16 == 0 or step == n_steps - 1:
            nrm = np.linalg.norm(X)
            if not np.isfinite(nrm) or nrm > 1e6 * scale:
                raise InstabilityError(f"state norm grew to {nrm:.3g} at step {step}; reduce dt (now {dt})")
    return _state(generator, X, state)


# --------------------------------------------------------------- steady state

def thermal_root(H, beta):
    E, V = np.linalg.eigh(H)
    w = np.exp(-beta * (E - E.min()))
    return (V * (w / w.sum())) @ V.conj().T


def _initial_root(generator):
    return np.eye(generator.dim, dtype=complex) / generator.dim


def _normalize(X):
    tr = np.trace(X[0])
    if abs(tr) < 1e-300:
        raise ConvergenceError("root trace vanished during iteration")
    return X / tr


def steady_residual(generator, X):
    X = _blocks(X)
    return float(np.linalg.norm(generator.apply(X, 0)) / max(np.linalg.norm(X), 1e-300))


def solve_steady_state(generator, config=SolverConfig(), initial=None):
    """Unit-trace fixed point of the even-sector generator.

    Returns a ``HierarchyState`` with ``info`` holding the method, iteration
    count and residual history.
    """
    g = generator.with_parity(0)
    X0 = _blocks(initial) if initial is not None else None
    if config.method == "iterative":
        X, hist = _steady_jacobi(g, config, X0)
    elif config.method == "gmres":
        X, hist = _steady_krylov(g, config, X0)
    else:
        X, hist = _steady_direct(g), []
    res = steady_residual(g, X)
    hist = hist or [res]
    if res > config.tol:
        raise ConvergenceError(f"steady state residual {res:.3g} above tol {config.tol}", hist)
    st = _state(g, X)
    st.info = {"method": config.method, "iterations": len(hist), "residual": res, "history": hist}
    log.info("steady state: method=%s iterations=%d residual=%.3e", config.method, len(hist), res)
    return st


def _steady_jacobi(g, config, X0):
    omega = _damping(g, config)
    if X0 is None:
        X = np.zeros((g.layout.count, g.dim, g.dim), dtype=complex)
        X[0] = _initial_root(g)
    else:
        X = X0.astype(complex, copy=True)
    X = _normalize(X)
    hist = []
    for it in range(config.max_iter):
        X_new = _normalize(g.diagonal_solve(omega * X + g.off_diagonal(X, 0), omega))
        change = block_change(X_new, X)
        X = X_new
        hist.append(change)
        if it % 200 == 0:
            log.debug("jacobi iter=%d change=%.3e", it, change)
        if change < config.tol * 1e-2 or (change < config.tol and steady_residual(g, X) < config.tol):
            return X, hist
    raise ConvergenceError(f"damped iteration did not converge in {config.max_iter} sweeps", hist)


def _precond_shift(g):
    rates = g.modes.gamma.real
    return float(np.min(rates)) if len(rates) else 1.0


def _steady_krylov(g, config, X0):
    n = g.layout.count * g.dim**2
    shape = (g.layout.count, g.dim, g.dim)
    t = g.trace_vector()

    def mv(x):
        X = x.reshape(shape)
        return g.apply(X, 0).ravel() - t * (t @ x)

    s0 = _precond_shift(g)
    A = spla.LinearOperator((n, n), matvec=mv, dtype=complex)
    M = spla.LinearOperator((n, n), matvec=lambda r: -g.diagonal_solve(r.reshape(shape), s0).ravel(), dtype=complex)
    x0 = None
    if X0 is not None:
        x0 = _normalize(X0.astype(complex)).ravel()
    else:
        Xi = np.zeros(shape, dtype=complex)
        Xi[0] = _initial_root(g)
        x0 = Xi.ravel()
    x, hist = _gmres(A, -t, x0, M, config)
    return _normalize(x.reshape(shape)), hist


def _rank_one(u, v_root, n):
    """Sparse ``u t^T`` where ``t`` is ``v_root`` on the root block and zero elsewhere."""
    cols = np.nonzero(v_root)[0]
    rows = np.nonzero(u)[0]
    data = np.multiply.outer(u[rows], v_root[cols]).ravel()
    return sparse.csr_matrix((data, (np.repeat(rows, len(cols)), np.tile(cols, len(rows)))), shape=(n, n))


def _sparse_solve(A, b):
    # minimum degree on A^T + A keeps the LU fill far below the default COLAMD here
    try:
        return spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(b)
    except RuntimeError as e:
        raise SingularityError(f"sparse factorization failed: {e}") from None


def _steady_direct(g):
    t = g.trace_vector()
    G = g.to_sparse(0)
    x = _sparse_solve(G - _rank_one(t, t[: g.dim**2], G.shape[0]), -t)
    return _normalize(x.reshape(g.layout.count, g.dim, g.dim))


def _gmres(A, b, x0, M, config):
    hist = []
    bn = max(np.linalg.norm(b), 1e-300)

    def cb(r):
        hist.append(float(r))

    # gmres's internal tolerance is on the preconditioned residual; tighten
    # and then verify the true residual
    x = x0
    for attempt in range(4):
        x, info = spla.gmres(A, b, x0=x, M=M, rtol=config.tol * 1e-2, atol=0.0, restart=config.restart,
                             maxiter=max(1, config.max_iter // config.restart), callback=cb,
                             callback_type="pr_norm")
        true = np.linalg.norm(A @ x - b) / bn
        if true < config.tol:
            hist.append(true)
            return x, hist
        if info > 0 and attempt == 3:
            break
    raise ConvergenceError(f"GMRES stalled at relative residual {true:.3g}", hist + [true])


# ----------------------------------------------------------------- frequency

@dataclass
class FrequencyResponse:
    omega: float
    X: HierarchyState
    rhs_label: str = ""
    residual: float = 0.0
    iterations: int = 0
    method: str = ""
    history: list = field(default_factory=list)


def _freq_operator(g, omega, steady):
    """``x -> (-G - i w) x``, deflated by the steady state in the even sector."""
    shape = (g.layout.count, g.dim, g.dim)
    deflate = steady is not None and g.parity == 0
    if deflate:
        xs = _blocks(steady).ravel()
        t = g.trace_vector()

    def mv(x):
        y = -g.apply(x.reshape(shape)).ravel() - 1j * omega * x
        if deflate:
            y = y + xs * (t @ x)
        return y

    return mv


def frequency_residual(generator, X, rhs, omega, steady=None):
    mv = _freq_operator(generator, omega, steady)
    b = _blocks(rhs).ravel()
    return float(np.linalg.norm(mv(_blocks(X).ravel()) - b) / max(np.linalg.norm(b), 1e-300))


def solve_frequency_response(generator, rhs, omega, config=SolverConfig(), steady=None, x0=None, label=""):
    """Solve ``(-G - i w) X = rhs`` for one frequency.

    ``generator`` must already be in the parity sector of ``rhs``.  In the
    even sector pass ``steady`` so the zero mode is projected out, which keeps
    ``w = 0`` regular for traceless seeds.
    """
    g = generator
    b = _blocks(rhs)
    shape = (g.layout.count, g.dim, g.dim)
    if b.shape != shape:
        raise ShapeError("rhs does not match the generator")
    if not np.any(b):
        return FrequencyResponse(omega, _state(g, np.zeros(shape, dtype=complex), rhs), label, 0.0, 0, config.method)
    deflate = steady is not None and g.parity == 0
    if deflate:
        xs = _blocks(steady)
        t_root = np.eye(g.dim).ravel()
    if config.method == "iterative":
        Om = _damping(g, config)
        X = np.zeros(shape, dtype=complex) if x0 is None else _blocks(x0).astype(complex, copy=True)
        hist = []
        for it in range(config.max_iter):
            R = b + Om * X + g.off_diagonal(X)
            if deflate:
                R = R - xs * (t_root @ X[0].ravel())
            X_new = g.diagonal_solve(R, Om - 1j * omega)
            change = block_change(X_new, X)
            X = X_new
            hist.append(change)
            if change < config.tol * 1e-2:
                break
        else:
            raise ConvergenceError(f"damped frequency iteration did not converge at w={omega}", hist)
    elif config.method == "gmres":
        n = g.layout.count * g.dim**2
        A = spla.LinearOperator((n, n), matvec=_freq_operator(g, omega, steady), dtype=complex)
        s0 = _precond_shift(g)
        M = spla.LinearOperator(
            (n, n), matvec=lambda r: g.diagonal_solve(r.reshape(shape), s0 - 1j * omega).ravel(), dtype=complex)
        start = np.zeros(n, dtype=complex) if x0 is None else _blocks(x0).ravel()
        x, hist = _gmres(A, b.ravel(), start, M, config)
        X = x.reshape(shape)
    else:
        G = g.to_sparse()
        Aop = -G - 1j * omega * sparse.identity(G.shape[0], format="csr")
        if deflate:
            Aop = Aop + _rank_one(xs.ravel(), np.eye(g.dim).ravel(), G.shape[0])
        X = _sparse_solve(Aop, b.ravel()).reshape(shape)
        hist = []
    res = frequency_residual(g, X, b, omega, steady)
    if res > max(config.tol, 1e-12) * 10:
        raise ConvergenceError(f"frequency solve residual {res:.3g} at w={omega}", hist + [res])
    log.info("frequency solve: w=%.6g method=%s iterations=%d residual=%.3e", omega, config.method, len(hist), res)
    return FrequencyResponse(omega, _state(g, X, rhs), label, res, len(hist), config.method, hist)


def solve_frequency_sweep(generator, rhs, omegas, config=SolverConfig(), steady=None, label=""):
    """Solve at each frequency in order, warm-starting from the previous one."""
    out = []
    prev = None
    for w in omegas:
        r = solve_frequency_response(generator, rhs, float(w), config, steady, prev, label)
        prev = r.X
        out.append(r)
    return out


def write_residual_history(history, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["iteration", "residual"])
    for i, r in enumerate(history):
        w.writerow([i, f"{r:.6e}"])
