"""Small scenarios shared by several test modules."""
import numpy as np

from resilient_ne.adversary import GaussianNoise
from resilient_ne.engine import InitSpec, ScenarioConfig
from resilient_ne.game import GameSpec, QuadraticAffine, sensor_network_game
from resilient_ne.graphs import DirectedGraph


def small_grid_config(seed=5, max_iters=60, record=True) -> ScenarioConfig:
    """Eight scalar agents on a 4 x 2 grid, one noisy adversary, D = 1.

    Messages travel two grid steps, observations one (king moves), which makes
    every node 3-information robust.
    """
    cols, rows = 4, 2
    pos = np.array([[c + 0.5 * r] for r in range(rows) for c in range(cols)])
    cost = [(i, j) for i in range(8) for j in range(8)
            if i != j and abs(i % 4 - j % 4) + abs(i // 4 - j // 4) == 1]
    game = sensor_network_game(pos, cost, target=[1.0])
    gc = DirectedGraph.grid(cols, rows, 2)
    go = DirectedGraph.grid(cols, rows, 1)
    return ScenarioConfig(game, gc, go, adversaries={5: GaussianNoise(1.0)}, D=1, alpha=0.1,
                          seed=seed, max_iters=max_iters, tol=1e-12, record_weights=record,
                          init=InitSpec("gaussian", 1.0))


def two_agent_config(seed=0, alpha=0.1, max_iters=10_000, tol=1e-14, record=True):
    """Two scalar agents that message each other and observe only themselves."""
    game = GameSpec(2, (1, 1), QuadraticAffine([[2.0, 0.5], [0.5, 2.0]], [1.0, -2.0]))
    gc = DirectedGraph(2, [(0, 1), (1, 0)])
    go = DirectedGraph(2, [])
    return ScenarioConfig(game, gc, go, D=0, alpha=alpha, seed=seed, max_iters=max_iters,
                          tol=tol, record_weights=record, init=InitSpec("gaussian", 1.0))
