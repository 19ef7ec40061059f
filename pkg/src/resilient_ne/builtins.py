"""Builders for the shipped scenario files.

The JSON files under ``scenarios/`` are generated from these functions with
``python -m resilient_ne.builtins`` and committed, so every shipped number can
be re-derived from a file.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .adversary import GaussianNoise, SelfishDeceiver
from .engine import InitSpec, ScenarioConfig
from .game import GameSpec, QuadraticAffine, sensor_network_game, solve_ne_oracle
from .graphs import DirectedGraph
from .scenario import dumps

# undirected pairs of the seven-node counterexample, 0-based
COUNTEREXAMPLE_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3),
                        (3, 4), (3, 5), (3, 6), (4, 5), (4, 6), (5, 6)]
COUNTEREXAMPLE_LIE = 5.0

GRID24_ADVERSARIES = (0, 3, 18)
SENSOR96_ADVERSARIES = (0, 11, 12, 18, 30, 35, 72, 77, 83, 84, 90, 95)


def grid_positions(cols: int, rows: int) -> np.ndarray:
    """Unit-spaced layout, node ``r * cols + c`` at ``(c, r)``."""
    return np.array([(c, r) for r in range(rows) for c in range(cols)], dtype=float)


def grid_cost_edges(cols: int, rows: int) -> list:
    """Four-neighbour lattice, both directions."""
    pos = grid_positions(cols, rows)
    N = len(pos)
    return [(i, j) for i in range(N) for j in range(N)
            if np.abs(pos[i] - pos[j]).sum() == 1]


def baseline_noadv_8() -> ScenarioConfig:
    N = 8
    G = np.diag([2.0, 2.5, 3.0, 2.2, 2.8, 2.4, 2.6, 3.2])
    for i in range(N):
        G[i, (i + 1) % N] = 0.5
        G[i, (i - 1) % N] = -0.3
        G[i, (i + 3) % N] = 0.2
    b = np.array([1.0, -2.0, 0.5, 3.0, -1.5, 2.0, -0.5, 1.0])
    game = GameSpec(N, (1,) * N, QuadraticAffine(G, b))
    # directed ring plus a few chords: strongly connected, nobody observed
    gc = DirectedGraph(N, [((i + 1) % N, i) for i in range(N)]
                       + [((i + 3) % N, i) for i in range(0, N, 2)])
    go = DirectedGraph(N, [])
    return ScenarioConfig(game, gc, go, D=0, alpha=0.1, seed=20240101, max_iters=10_000,
                          tol=1e-8, init=InitSpec("gaussian", 1.0), name="baseline-noadv-8")


def counterexample_game() -> GameSpec:
    N = 7
    G = 2.0 * np.eye(N)
    for i, j in COUNTEREXAMPLE_PAIRS:
        G[i, j] = G[j, i] = 0.1
    # agents 0, 1, 2 care about agent 6, so a wrong belief moves their actions
    G[[0, 1, 2], 6] = 0.4
    b = np.array([1.0, -1.0, 0.5, 0.0, -0.5, 1.5, -2.0])
    return GameSpec(N, (1,) * N, QuadraticAffine(G, b))


def counterexample_7(lie: float = COUNTEREXAMPLE_LIE) -> ScenarioConfig:
    """Agent 3 lies about agent 6's action to agents 0, 1, 2, which cannot see agent 6.

    Beliefs start at the equilibrium except that agents 0, 1 and 2 already
    hold the lie. Every message they receive about agent 6 then agrees with
    their own value, so nothing is trimmed and the lie persists.
    """
    game = counterexample_game()
    g = DirectedGraph.from_undirected(7, COUNTEREXAMPLE_PAIRS)
    x_star = solve_ne_oracle(game)
    X0 = np.tile(x_star, (7, 1))
    X0[[0, 1, 2], 6] += lie
    return ScenarioConfig(game, g, g, adversaries={3: SelfishDeceiver(lie, target=6)}, D=1,
                          alpha=0.1, seed=7, max_iters=2_000, tol=1e-8,
                          init=InitSpec("explicit", vector=tuple(map(tuple, X0.tolist()))),
                          name="counterexample-7")


def grid_24_adv3() -> ScenarioConfig:
    """6 x 4 lattice: king-move communication, observers exactly two steps away.

    Nobody observes its own cost neighbours, so those actions have to be
    estimated from (possibly corrupted) messages.
    """
    cols, rows = 6, 4
    pos = grid_positions(cols, rows)
    game = sensor_network_game(pos, grid_cost_edges(cols, rows), target=pos.mean(axis=0))
    gc = DirectedGraph.grid(cols, rows, 1)
    near = set(gc.edges)
    go = DirectedGraph(cols * rows, [e for e in DirectedGraph.grid(cols, rows, 2).edges
                                     if e not in near])
    adv = {a: GaussianNoise(1.0) for a in GRID24_ADVERSARIES}
    return ScenarioConfig(game, gc, go, adversaries=adv, D=1, alpha=0.1, seed=24,
                          max_iters=20_000, tol=1e-6, init=InitSpec("gaussian", 1.0),
                          name="grid-24-adv3")


def sensor_96_analog() -> ScenarioConfig:
    """12 x 8 robot formation; both graphs link agents within infinity-distance 2."""
    cols, rows = 12, 8
    pos = grid_positions(cols, rows)
    game = sensor_network_game(pos, grid_cost_edges(cols, rows), target=(0.0, 0.0))
    g = DirectedGraph.grid(cols, rows, 2)
    adv = {a: GaussianNoise(1.0) for a in SENSOR96_ADVERSARIES}
    return ScenarioConfig(game, g, g, adversaries=adv, D=2, alpha=1 / 40, seed=96,
                          max_iters=50_000, tol=1e-4, init=InitSpec("gaussian", 1.0),
                          name="sensor-96-analog")


BUILDERS = {
    "baseline-noadv-8": baseline_noadv_8,
    "counterexample-7": counterexample_7,
    "grid-24-adv3": grid_24_adv3,
    "sensor-96-analog": sensor_96_analog,
}


def write_builtin_files(directory=None):
    directory = Path(directory or Path(__file__).parent / "scenarios")
    directory.mkdir(parents=True, exist_ok=True)
    for name, build in BUILDERS.items():
        (directory / f"{name}.json").write_text(dumps(build()))


if __name__ == "__main__":
    write_builtin_files(sys.argv[1] if len(sys.argv) > 1 else None)
