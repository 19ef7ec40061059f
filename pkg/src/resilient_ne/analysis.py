"""Numerical checks of the convergence argument on recorded weight matrices.

Stacked vectors are ordered agent-major: entry ``i * n + c`` is agent ``i``'s
value for profile component ``c``. A recorded weight matrix is kept in the
compact ``(N, n, N)`` form produced by the protocol (``rows[i, c, j]`` is the
weight agent ``i`` puts on agent ``j``'s value of component ``c``) and only
expanded to the dense ``Nn x Nn`` matrix here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NotConverged, RowSumViolation, ShapeMismatch


def assemble_wbar(rows) -> np.ndarray:
    """Dense stacked weight matrix from per-agent weight rows."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 3 or rows.shape[0] != rows.shape[2]:
        raise ShapeMismatch(f"expected (N, n, N) rows, got {rows.shape}")
    N, n, _ = rows.shape
    sums = rows.sum(axis=2)
    if np.max(np.abs(sums - 1.0)) > 1e-10:
        i, c = np.unravel_index(np.argmax(np.abs(sums - 1.0)), sums.shape)
        raise RowSumViolation(f"row of agent {i}, component {c} sums to {sums[i, c]!r}")
    W = np.zeros((N, n, N, n))
    cs = np.arange(n)
    W[:, cs, :, cs] = rows.transpose(1, 0, 2)
    return W.reshape(N * n, N * n)


class Projection:
    """Projection onto the consensus subspace that keeps each owner's own value.

    ``A v = 1_N ⊗ (R v)`` where ``R`` picks agent ``o(c)``'s entry for
    component ``c``. It is idempotent, fixes consensus vectors, has unit
    infinity norm and spectral norm ``sqrt(N)``.
    """

    def __init__(self, owner, num_agents: int):
        self.owner = np.asarray(owner)
        self.N = num_agents
        self.n = self.owner.size

    def own_values(self, v) -> np.ndarray:
        """R v."""
        V = np.asarray(v, dtype=float).reshape(self.N, self.n)
        return V[self.owner, np.arange(self.n)]

    def apply(self, v) -> np.ndarray:
        return np.tile(self.own_values(v), self.N)

    def matrix(self) -> np.ndarray:
        N, n = self.N, self.n
        R = np.zeros((n, N * n))
        R[np.arange(n), self.owner * n + np.arange(n)] = 1.0
        return np.kron(np.ones((N, 1)), R)

    def selector(self) -> np.ndarray:
        N, n = self.N, self.n
        R = np.zeros((n, N * n))
        R[np.arange(n), self.owner * n + np.arange(n)] = 1.0
        return R


def transition_product(ws) -> np.ndarray:
    """``W[-1] @ ... @ W[0]`` (newest on the left)."""
    ws = list(ws)
    if not ws:
        raise ShapeMismatch("transition product of an empty sequence")
    out = np.asarray(ws[0], dtype=float)
    for w in ws[1:]:
        w = np.asarray(w, dtype=float)
        if w.shape != out.shape:
            raise ShapeMismatch(f"cannot multiply {w.shape} by {out.shape}")
        out = w @ out
    return out


def compute_pbar(N: int, eta: float):
    """``(C, pbar)`` with C = 1 - (eta/2)^(N-1), pbar = 4N / (1 - C^(2/(N-1)))."""
    if N < 2:
        raise DomainError("the bound needs at least two agents")
    if not 0 < eta <= 1:
        raise DomainError("eta must lie in (0, 1]")
    delta = (eta / 2.0) ** (N - 1)
    C = 1.0 - delta
    # 1 - C^(2/(N-1)) loses all precision for tiny delta when formed directly
    denom = -math.expm1(2.0 / (N - 1) * math.log1p(-delta))
    return C, 4.0 * N / denom


def step_size_matrix(alpha, mu, L, pbar) -> np.ndarray:
    m11 = 2 * alpha * mu - pbar * alpha**2 * L**2
    m12 = -alpha * pbar * L * (1 + alpha * L)
    m22 = 1 - 2 * alpha * (pbar - 1) * L - pbar * alpha**2 * L**2
    return np.array([[m11, m12], [m12, m22]])


def step_size_test(alpha, mu, L, pbar):
    """Build the 2x2 certificate matrix and test it by leading principal minors."""
    if min(alpha, mu, L, pbar) <= 0:
        raise DomainError("alpha, mu, L and pbar must all be positive")
    M = step_size_matrix(alpha, mu, L, pbar)
    pd = bool(M[0, 0] > 0 and M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] > 0)
    return M, pd


def _is_pd(alpha, mu, L, pbar) -> bool:
    M = step_size_matrix(alpha, mu, L, pbar)
    return bool(M[0, 0] > 0 and M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] > 0)


def max_feasible_alpha(mu, L, pbar, rtol: float = 1e-10) -> float:
    """Upper end of the step-size interval (0, a) on which the certificate is positive definite."""
    if min(mu, L, pbar) <= 0:
        raise DomainError("mu, L and pbar must be positive")
    hi = 2 * mu / (pbar * L**2)   # M11 <= 0 from here on
    lo = hi
    while not _is_pd(lo, mu, L, pbar):
        lo *= 0.5
        if lo == 0.0:
            return 0.0
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        if _is_pd(mid, mu, L, pbar):
            lo = mid
        else:
            hi = mid
    return lo


def lyapunov_value(v, P, x_star, proj: Projection) -> float:
    """``|v - A v|_P^2 + |A v - 1 ⊗ x*|^2``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    Av = proj.apply(v)
    e = v - Av
    d = Av - np.tile(np.asarray(x_star, dtype=float), proj.N)
    return float(e @ P @ e + d @ d)


@dataclass
class LyapunovSequence:
    P: list
    horizon: list
    tail: list = field(default_factory=list)


def finite_horizon_P(ws, proj: Projection, tol: float = 1e-6, horizon: int = None,
                     max_horizon: int = 100_000) -> LyapunovSequence:
    """Truncated Lyapunov matrices for the switching sequence ``ws``.

    ``P[k] = sum_s B_s' B_s`` with ``B_0 = I - A`` and ``B_{s+1} = W[k+s] B_s``,
    the sequence extended past its end by repeating the last matrix. Returns
    ``len(ws) + 1`` matrices. Each sum stops at the first term whose norm is
    below ``tol * 1e-3`` (or at ``horizon`` terms when given); the first
    omitted term is exactly the recursion residual, so a tail above ``tol``
    raises :class:`NotConverged`. The stopping test uses the Frobenius norm,
    an upper bound on the spectral norm that is much cheaper to evaluate.
    """
    ws = [np.asarray(w, dtype=float) for w in ws]
    if not ws:
        raise ShapeMismatch("need at least one weight matrix")
    dim = ws[0].shape[0]
    I_A = np.eye(dim) - proj.matrix()
    Ps, horizons, tails = [], [], []
    K = len(ws)
    for k in range(K + 1):
        B = I_A.copy()
        P = B.T @ B
        s = 0
        while True:
            B = ws[min(k + s, K - 1)] @ B
            s += 1
            term = B.T @ B
            if horizon is not None:
                if s > horizon:
                    break
            elif np.linalg.norm(term) <= tol * 1e-3 or s > max_horizon:
                break
            P += term
        size = np.linalg.norm(term, 2)
        if size > tol:
            raise NotConverged(f"P[{k}]: tail term {size:.3e} exceeds {tol:.1e} after {s} steps")
        Ps.append(0.5 * (P + P.T))
        horizons.append(s)
        tails.append(size)
    return LyapunovSequence(Ps, horizons, tails)


def recursion_residuals(ws, Ps, proj: Projection) -> np.ndarray:
    """Spectral norm of ``W[k]' P[k+1] W[k] - P[k] + (I-A)'(I-A)`` for each recorded k."""
    dim = Ps[0].shape[0]
    I_A = np.eye(dim) - proj.matrix()
    Q = I_A.T @ I_A
    return np.array([np.linalg.norm(W.T @ Ps[k + 1] @ W - Ps[k] + Q, 2)
                     for k, W in enumerate(ws)])


def contraction_norms(ws, proj: Projection, N: int, r_max: int = 5) -> np.ndarray:
    """``out[r-1, k] = |Φ(k + r(N-1), k) - A|_inf`` for every window that fits in ``ws``."""
    A = proj.matrix()
    span = N - 1
    K = len(ws)
    out = np.full((r_max, K), np.nan)
    for k in range(K):
        Phi = np.asarray(ws[k], dtype=float)
        last = k
        for r in range(1, r_max + 1):
            target = k + r * span
            if target >= K:
                break
            while last < target:
                last += 1
                Phi = ws[last] @ Phi
            out[r - 1, k] = np.abs(Phi - A).sum(axis=1).max()
    return out


def check_wbar_properties(W: np.ndarray, proj: Projection) -> dict:
    """Deviation of one stacked matrix from each structural identity."""
    A = proj.matrix()
    R = proj.selector()
    return {
        "row_sum": float(np.max(np.abs(W.sum(axis=1) - 1.0))),
        "min_entry": float(W.min()),
        "AW_minus_A": float(np.abs(A @ W - A).max()),
        "WA_minus_A": float(np.abs(W @ A - A).max()),
        "RW_minus_R": float(np.abs(R @ W - R).max()),
    }


def format_report(sections) -> str:
    """Render ``[(title, {key: value} | (header, rows))]`` as key-value blocks and tables."""
    out = []
    for title, body in sections:
        out.append(f"[{title}]")
        if isinstance(body, dict):
            width = max((len(k) for k in body), default=0)
            for k, v in body.items():
                out.append(f"{k.ljust(width)} = {_fmt(v)}")
        else:
            header, rows = body
            cells = [list(header)] + [[_fmt(v) for v in row] for row in rows]
            widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
            for r in cells:
                out.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        out.append("")
    return "\n".join(out)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    return str(v)
