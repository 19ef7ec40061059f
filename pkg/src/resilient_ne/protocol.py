"""Truthful agent behaviour: trimmed filtering with observation override, then a gradient step.

Beliefs are flat arrays of length ``n``. An inbox maps sender index to the
received message (also length ``n``). ``observed`` is a boolean mask over the
``n`` components; where it is set, the filter is bypassed and the true action
is used.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numba
import numpy as np

from .errors import AssumptionViolation, DimensionMismatch, NonFiniteInput
from .game import GameSpec, eval_partial_gradient


@dataclass(frozen=True)
class FilterConfig:
    D: int = 0
    eta: float = 1.0
    weight_rule: str = "uniform"

    def __post_init__(self):
        if self.D < 0:
            raise ValueError("D must be nonnegative")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.weight_rule != "uniform":
            raise ValueError(f"unsupported weight rule {self.weight_rule!r}")


def derived_eta(max_in_degree: int) -> float:
    """Smallest uniform weight any agent can place: one over (in-degree + self)."""
    return 1.0 / (max_in_degree + 1)


def trim_component(own: float, received: list, D: int):
    """Trim one scalar component.

    ``received`` is a list of ``(sender, value)``. Returns the retained senders.
    Up to D values strictly above ``own`` are dropped, largest first, and up
    to D strictly below, smallest first; among equal values the lower sender
    index is dropped first. Values equal to ``own`` always survive.
    """
    above = sorted((p for p in received if p[1] > own), key=lambda p: (-p[1], p[0]))
    below = sorted((p for p in received if p[1] < own), key=lambda p: (p[1], p[0]))
    dropped = {s for s, _ in above[:D]} | {s for s, _ in below[:D]}
    return [s for s, _ in received if s not in dropped]


def prune_and_average(agent: int, own, inbox: Mapping[int, np.ndarray], observed_mask,
                      true_actions, cfg: FilterConfig):
    """Step 2 for one agent. Returns ``(v, retained)``.

    ``retained[c]`` is the tuple of retained senders (the agent itself is
    implicit) for an unobserved component and ``None`` for an observed one.
    """
    own = np.asarray(own, dtype=float)
    n = own.size
    observed_mask = np.asarray(observed_mask, dtype=bool)
    true_actions = np.asarray(true_actions, dtype=float)
    if observed_mask.shape != (n,) or true_actions.shape != (n,):
        raise DimensionMismatch("observation mask and true actions must match the belief length")
    if len(inbox) < 2 * cfg.D + 1:
        raise AssumptionViolation(
            f"agent {agent} received {len(inbox)} messages, needs at least {2 * cfg.D + 1}")
    senders = sorted(inbox)
    msgs = {}
    for s in senders:
        m = np.asarray(inbox[s], dtype=float)
        if m.shape != (n,):
            raise DimensionMismatch(f"message from {s} has shape {m.shape}")
        msgs[s] = m

    v = np.empty(n)
    retained = []
    for c in range(n):
        if observed_mask[c]:
            v[c] = true_actions[c]
            retained.append(None)
            continue
        keep = trim_component(own[c], [(s, msgs[s][c]) for s in senders], cfg.D)
        v[c] = (sum(msgs[s][c] for s in keep) + own[c]) / (len(keep) + 1)
        retained.append(tuple(keep))
    return v, retained


def gradient_update(agent: int, v, game: GameSpec, alpha: float) -> np.ndarray:
    """Step 3: move only the agent's own block against its partial gradient."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("intermediate estimate contains NaN or Inf")
    out = v.copy()
    blk = game.block(agent)
    out[blk] = v[blk] - alpha * eval_partial_gradient(game, agent, v)
    return out


def pack_outgoing(x_next, out_neighbors) -> dict:
    """Step 4: a truthful agent sends its new belief, unchanged, to every out-neighbour."""
    x_next = np.asarray(x_next, dtype=float)
    return {j: x_next.copy() for j in sorted(out_neighbors)}


def reconstruct_weight_row(agent: int, retained, observed_mask, owner, num_agents: int) -> np.ndarray:
    """Agent's rows of the stacked weight matrix as an ``(n, N)`` array.

    Entry ``[c, j]`` is the weight agent ``agent`` puts on agent ``j``'s value
    of component ``c``. Observed components select the owner's true action.
    """
    owner = np.asarray(owner)
    n = owner.size
    row = np.zeros((n, num_agents))
    for c in range(n):
        if observed_mask[c]:
            row[c, owner[c]] = 1.0
            continue
        keep = retained[c]
        w = 1.0 / (len(keep) + 1)
        row[c, agent] = w
        for j in keep:
            row[c, j] = w
    return row


def truthful_equivalent_row(agent: int, row: np.ndarray, own, inbox: Mapping[int, np.ndarray],
                            genuine, observed_mask) -> np.ndarray:
    """Rewrite weights on non-genuine messages onto genuine senders.

    A retained non-genuine value lies between the agent's own value and some
    genuine message on the same side (otherwise it would have been trimmed),
    so its weight splits between those two in the convex proportions that
    reproduce the value. ``genuine`` is the set of senders whose message equals
    their actual belief.
    """
    row = row.copy()
    own = np.asarray(own, dtype=float)
    genuine = set(genuine)
    for c in np.flatnonzero(~np.asarray(observed_mask, dtype=bool)):
        o = own[c]
        for j in np.flatnonzero(row[c]):
            if j == agent or j in genuine:
                continue
            w = row[c, j]
            y = inbox[j][c]
            row[c, j] = 0.0
            if y == o:
                row[c, agent] += w
                continue
            if y > o:
                side = [(inbox[t][c], t) for t in genuine if t in inbox and inbox[t][c] >= y]
                pick = min(side) if side else None
            else:
                side = [(-inbox[t][c], t) for t in genuine if t in inbox and inbox[t][c] <= y]
                pick = min(side) if side else None
            if pick is None:
                raise AssumptionViolation(
                    f"agent {agent}, component {c}: retained value {y} is outside the truthful hull")
            t = pick[1]
            lam = (y - o) / (inbox[t][c] - o)
            row[c, agent] += w * (1.0 - lam)
            row[c, t] += w * lam
    return row


def batch_prune_and_average(X: np.ndarray, Y: np.ndarray, valid: np.ndarray, D: int):
    """Vectorised Step 2 (without observation override) for every agent at once.

    ``X`` is ``(N, n)`` own beliefs, ``Y`` is ``(N, K, n)`` received messages
    padded to ``K`` slots ordered by ascending sender index, ``valid`` is
    ``(N, K)``. Returns ``(V, retained)`` with ``retained`` of shape ``(N, K, n)``.
    Ties follow the same rule as :func:`trim_component`, since ``argmax``
    returns the first (lowest-sender) slot among equal values.
    """
    own = X[:, None, :]
    live = valid[:, :, None]
    above = live & (Y > own)
    below = live & (Y < own)
    removed = np.zeros(Y.shape, dtype=bool)
    if D > 0 and Y.shape[1] > 0:
        ii, cc = np.indices((Y.shape[0], Y.shape[2]))
        for _ in range(D):
            cand = above & ~removed
            idx = np.argmax(np.where(cand, Y, -np.inf), axis=1)
            removed[ii, idx, cc] |= cand.any(axis=1)
            cand = below & ~removed
            idx = np.argmin(np.where(cand, Y, np.inf), axis=1)
            removed[ii, idx, cc] |= cand.any(axis=1)
    retained = live & ~removed
    total = np.where(retained, Y, 0.0).sum(axis=1) + X
    V = total / (retained.sum(axis=1) + 1)
    return V, retained



@numba.njit(cache=True)
def _filtered_average_kernel(X, Y, valid, D, out):
    N, K, n = Y.shape
    top = np.empty((n, max(D, 1)))
    bottom = np.empty((n, max(D, 1)))
    n_top = np.empty(n, dtype=np.int64)
    n_bottom = np.empty(n, dtype=np.int64)
    count = np.empty(n, dtype=np.int64)
    total = np.empty(n)
    for i in range(N):
        n_top[:] = 0
        n_bottom[:] = 0
        count[:] = 0
        total[:] = 0.0
        for s in range(K):
            if not valid[i, s]:
                continue
            for c in range(n):
                y = Y[i, s, c]
                o = X[i, c]
                total[c] += y
                count[c] += 1
                if D == 0 or y == o:
                    continue
                # insertion into the running D most extreme values on each side
                if y > o:
                    p = min(n_top[c], D)
                    while p > 0 and top[c, p - 1] < y:
                        if p < D:
                            top[c, p] = top[c, p - 1]
                        p -= 1
                    if p < D:
                        top[c, p] = y
                    if n_top[c] < D:
                        n_top[c] += 1
                else:
                    p = min(n_bottom[c], D)
                    while p > 0 and bottom[c, p - 1] > y:
                        if p < D:
                            bottom[c, p] = bottom[c, p - 1]
                        p -= 1
                    if p < D:
                        bottom[c, p] = y
                    if n_bottom[c] < D:
                        n_bottom[c] += 1
        for c in range(n):
            t = total[c]
            for p in range(n_top[c]):
                t -= top[c, p]
            for p in range(n_bottom[c]):
                t -= bottom[c, p]
            out[i, c] = (t + X[i, c]) / (count[c] - n_top[c] - n_bottom[c] + 1)


def batch_filtered_average(X: np.ndarray, Y: np.ndarray, valid: np.ndarray, D: int) -> np.ndarray:
    """Estimates of :func:`batch_prune_and_average` without the retained sets.

    One pass over each inbox keeps a running sum plus the ``D`` largest values
    above and ``D`` smallest below the agent's own value, then subtracts those.
    Results agree with the mask-based version up to summation order.
    """
    out = np.empty(X.shape)
    _filtered_average_kernel(np.ascontiguousarray(X, dtype=float),
                             np.ascontiguousarray(Y, dtype=float),
                             np.ascontiguousarray(valid, dtype=np.bool_), int(D), out)
    return out
