"""Games, their pseudo-gradients, and the centralized Nash equilibrium oracle.

Action profiles are flat float64 arrays of length ``n = sum(dims)``; agent
``i`` owns the contiguous slice ``game.block(i)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    NonFiniteInput,
    NotStronglyMonotone,
    SingularGame,
    UnsupportedGame,
)


@dataclass(frozen=True)
class SensorNetwork:
    """Robot-formation cost: stay near the target on average, keep offsets to neighbours.

    ``cost_edges[e] = (i, j)`` puts ``0.5 * |x_i - x_j - offsets[e]|^2`` into
    agent ``i``'s cost (``j`` is a cost in-neighbour of ``i``).
    """

    target: np.ndarray
    cost_edges: tuple
    offsets: np.ndarray

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float).reshape(-1)
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1, target.size)
        edges = tuple((int(i), int(j)) for i, j in self.cost_edges)
        if len(edges) != offsets.shape[0]:
            raise DimensionMismatch("one offset per cost edge is required")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "cost_edges", edges)


@dataclass(frozen=True)
class QuadraticAffine:
    """Game with affine pseudo-gradient ``F(x) = G x + b``.

    Agent ``i``'s cost is ``0.5 x_i' G_ii x_i + x_i' (sum_{j != i} G_ij x_j + b_i)``,
    which needs every diagonal block ``G_ii`` to be symmetric.
    """

    G: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "G", np.asarray(self.G, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))


@dataclass(frozen=True)
class Custom:
    """Black-box game. Callbacks take ``(agent, x)`` with ``x`` the full profile."""

    cost: Callable[[int, np.ndarray], float]
    gradient: Callable[[int, np.ndarray], np.ndarray]


CostKind = Union[SensorNetwork, QuadraticAffine, Custom]


@dataclass(frozen=True)
class GameSpec:
    num_agents: int
    dims: tuple
    kind: CostKind
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _owner: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if self.num_agents < 1:
            raise DimensionMismatch("a game needs at least one agent")
        if len(dims) != self.num_agents or any(d < 1 for d in dims):
            raise DimensionMismatch("dims must list one positive dimension per agent")
        starts = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        owner = np.repeat(np.arange(self.num_agents), dims)
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_owner", owner)
        self._validate_kind()

    def _validate_kind(self):
        kind, n, N = self.kind, self.n, self.num_agents
        if isinstance(kind, SensorNetwork):
            d = kind.target.size
            if any(k != d for k in self.dims):
                raise DimensionMismatch(f"sensor-network agents must all have dimension {d}")
            for i, j in kind.cost_edges:
                if not (0 <= i < N and 0 <= j < N) or i == j:
                    raise DimensionMismatch(f"invalid cost edge ({i}, {j})")
        elif isinstance(kind, QuadraticAffine):
            if kind.G.shape != (n, n) or kind.b.shape != (n,):
                raise DimensionMismatch(f"G must be {n}x{n} and b length {n}")
            for i in range(N):
                blk = kind.G[self.block(i), self.block(i)]
                if not np.allclose(blk, blk.T, rtol=0, atol=1e-12):
                    raise DimensionMismatch(f"diagonal block of agent {i} is not symmetric")

    @property
    def n(self) -> int:
        return int(self._starts[-1])

    @property
    def owner(self) -> np.ndarray:
        """Agent owning each component of the profile."""
        return self._owner

    def block(self, agent: int) -> slice:
        return slice(self._starts[agent], self._starts[agent + 1])

    @property
    def is_affine(self) -> bool:
        return not isinstance(self.kind, Custom)


def sensor_network_game(positions, cost_edges, target=(0.0, 0.0)) -> GameSpec:
    """Sensor game whose offsets are the relative layout positions ``p_i - p_j``."""
    positions = np.asarray(positions, dtype=float)
    offsets = np.array([positions[i] - positions[j] for i, j in cost_edges]).reshape(
        -1, positions.shape[1]
    )
    kind = SensorNetwork(np.asarray(target, dtype=float), tuple(cost_edges), offsets)
    return GameSpec(len(positions), (positions.shape[1],) * len(positions), kind)


def _check_profile(game: GameSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (game.n,):
        raise DimensionMismatch(f"profile must have length {game.n}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("profile contains NaN or Inf")
    return x


def _check_agent(game: GameSpec, agent: int):
    if not 0 <= agent < game.num_agents:
        raise IndexError(f"agent {agent} out of range")


def eval_cost(game: GameSpec, agent: int, x) -> float:
    """J_i(x_i, x_-i)."""
    _check_agent(game, agent)
    x = _check_profile(game, x)
    kind = game.kind
    if isinstance(kind, SensorNetwork):
        pos = x.reshape(game.num_agents, -1)
        gap = pos.mean(axis=0) - kind.target
        total = 0.5 * gap @ gap
        for (i, j), d in zip(kind.cost_edges, kind.offsets):
            if i == agent:
                r = pos[i] - pos[j] - d
                total += 0.5 * r @ r
        return float(total)
    if isinstance(kind, QuadraticAffine):
        blk = game.block(agent)
        xi = x[blk]
        rows = kind.G[blk]
        cross = rows @ x - rows[:, blk] @ xi
        return float(0.5 * xi @ rows[:, blk] @ xi + xi @ (cross + kind.b[blk]))
    return float(kind.cost(agent, x))


def eval_partial_gradient(game: GameSpec, agent: int, x) -> np.ndarray:
    """Partial gradient of J_i with respect to the agent's own action."""
    _check_agent(game, agent)
    x = _check_profile(game, x)
    kind = game.kind
    if isinstance(kind, SensorNetwork):
        N = game.num_agents
        pos = x.reshape(N, -1)
        g = (pos.mean(axis=0) - kind.target) / N
        for (i, j), d in zip(kind.cost_edges, kind.offsets):
            if i == agent:
                g = g + (pos[i] - pos[j] - d)
        return g
    if isinstance(kind, QuadraticAffine):
        blk = game.block(agent)
        return kind.G[blk] @ x + kind.b[blk]
    g = np.asarray(kind.gradient(agent, x), dtype=float).reshape(-1)
    if g.size != game.dims[agent]:
        raise DimensionMismatch(f"custom gradient for agent {agent} has wrong size")
    return g


def affine_form(game: GameSpec):
    """Return ``(G, b)`` with ``F(x) = G x + b``; raises for custom games."""
    kind = game.kind
    if isinstance(kind, QuadraticAffine):
        return kind.G.copy(), kind.b.copy()
    if isinstance(kind, SensorNetwork):
        N, d = game.num_agents, kind.target.size
        eye = np.eye(d)
        G = np.kron(np.full((N, N), 1.0 / N**2), eye)
        b = np.tile(-kind.target / N, N)
        for (i, j), off in zip(kind.cost_edges, kind.offsets):
            G[i * d:(i + 1) * d, i * d:(i + 1) * d] += eye
            G[i * d:(i + 1) * d, j * d:(j + 1) * d] -= eye
            b[i * d:(i + 1) * d] -= off
        return G, b
    raise UnsupportedGame("custom games have no affine pseudo-gradient")


def pseudo_gradient(game: GameSpec, x) -> np.ndarray:
    """F(x) = col(dJ_i/dx_i)."""
    x = _check_profile(game, x)
    if game.is_affine:
        G, b = affine_form(game)
        return G @ x + b
    return np.concatenate([eval_partial_gradient(game, i, x) for i in range(game.num_agents)])


def solve_ne_oracle(game: GameSpec) -> np.ndarray:
    """Centralized NE: the zero of the affine pseudo-gradient."""
    G, b = affine_form(game)
    if np.linalg.cond(G) > 1e12:
        raise SingularGame("pseudo-gradient matrix is numerically singular")
    x = np.linalg.solve(G, -b)
    # one refinement pass keeps the residual near machine precision at n ~ 200
    x -= np.linalg.solve(G, G @ x + b)
    return x


def estimate_constants(game: GameSpec):
    """Strong-monotonicity and Lipschitz constants ``(mu, L)`` of F."""
    G, _ = affine_form(game)
    mu = float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])
    L = float(np.linalg.norm(G, 2))
    if mu <= 0:
        raise NotStronglyMonotone(f"smallest eigenvalue of sym(G) is {mu:.3e}")
    return mu, L


class GradientKernel:
    """Evaluates every agent's own-block gradient at its own belief, in one shot.

    ``V`` has shape ``(N, n)``; row ``i`` is agent ``i``'s belief. The result has
    length ``n`` with component ``c`` equal to ``dJ_{o(c)}/dx_c`` at ``V[o(c)]``.
    """

    def __init__(self, game: GameSpec):
        self.game = game
        self._affine = affine_form(game) if game.is_affine else None

    def __call__(self, V: np.ndarray) -> np.ndarray:
        game = self.game
        if self._affine is not None:
            G, b = self._affine
            return np.einsum("cj,cj->c", G, V[game.owner]) + b
        return np.concatenate(
            [eval_partial_gradient(game, i, V[i]) for i in range(game.num_agents)]
        )

    def agent(self, i: int, v: np.ndarray) -> np.ndarray:
        if self._affine is not None:
            G, b = self._affine
            blk = self.game.block(i)
            return G[blk] @ v + b[blk]
        return eval_partial_gradient(self.game, i, v)
