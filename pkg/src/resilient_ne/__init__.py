"""Distributed Nash equilibrium seeking that tolerates adversarial agents.

Truthful agents trim extreme received estimates, override what they observe
directly, and take a gradient step on their own action.
"""
from .engine import ExitStatus, InitSpec, Metrics, RunResult, ScenarioConfig, SimState, run, step_round
from .game import (
    Custom,
    GameSpec,
    QuadraticAffine,
    SensorNetwork,
    eval_cost,
    eval_partial_gradient,
    sensor_network_game,
    solve_ne_oracle,
)
from .graphs import DirectedGraph, check_assumptions, is_information_robust, rooted_after_removal
from .protocol import FilterConfig, prune_and_average
from .scenario import load_scenario

__all__ = [
    "Custom", "DirectedGraph", "ExitStatus", "FilterConfig", "GameSpec", "InitSpec", "Metrics",
    "QuadraticAffine", "RunResult", "ScenarioConfig", "SensorNetwork", "SimState",
    "check_assumptions", "eval_cost", "eval_partial_gradient", "is_information_robust",
    "load_scenario", "prune_and_average", "rooted_after_removal", "run", "sensor_network_game",
    "solve_ne_oracle", "step_round",
]
