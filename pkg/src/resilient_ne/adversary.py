"""Adversarial agents (what they believe, what they send) and attacks on links in flight."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import DimensionMismatch, NoTruthfulNeighbors, UnknownEdge
from .game import GameSpec
from .protocol import gradient_update

# substream tags; keep stable, they are part of the reproducibility contract
TAG_INIT = 0
TAG_AGENT = 1
TAG_ATTACK = 2


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; independent of call order."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, key)])


# -- agent policies ------------------------------------------------------------

@dataclass(frozen=True)
class Honest:
    """Sends its belief unchanged (useful for turning an adversary off)."""


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class ConstantSignal:
    c: object = 0.0


@dataclass(frozen=True)
class UniformRandom:
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("lo must not exceed hi")


@dataclass(frozen=True)
class Silent:
    pass


@dataclass(frozen=True)
class SelfishDeceiver:
    """Reports its honest belief with one agent's block shifted by ``offset``.

    ``target=None`` means the sender's own action.
    """

    offset: object = 1.0
    target: Optional[int] = None


POLICIES = {
    "honest": Honest,
    "gaussian_noise": GaussianNoise,
    "constant_signal": ConstantSignal,
    "uniform_random": UniformRandom,
    "silent": Silent,
    "selfish_deceiver": SelfishDeceiver,
}


def corrupt_outgoing(policy, honest, rng: np.random.Generator, *, game: GameSpec = None,
                     sender: int = None, count: int = None):
    """What an adversary actually transmits in place of ``honest``.

    Returns ``None`` for a silent sender. With ``count`` set, returns a
    ``(count, n)`` array of messages for ``count`` receivers (drawn in receiver
    order from ``rng``).
    """
    honest = np.asarray(honest, dtype=float)
    n = honest.size
    shape = (n,) if count is None else (count, n)
    if isinstance(policy, Silent):
        return None
    if isinstance(policy, Honest):
        out = np.broadcast_to(honest, shape).copy()
    elif isinstance(policy, GaussianNoise):
        out = honest + policy.sigma * rng.standard_normal(shape)
    elif isinstance(policy, ConstantSignal):
        out = np.broadcast_to(np.asarray(policy.c, dtype=float), shape).copy()
    elif isinstance(policy, UniformRandom):
        out = rng.uniform(policy.lo, policy.hi, size=shape)
    elif isinstance(policy, SelfishDeceiver):
        target = sender if policy.target is None else policy.target
        if game is None or target is None:
            raise ValueError("SelfishDeceiver needs the game and the sender index")
        out = np.broadcast_to(honest, shape).copy()
        out[..., game.block(target)] += np.asarray(policy.offset, dtype=float)
    else:
        raise TypeError(f"unknown policy {policy!r}")
    return out


def adversary_update(agent: int, own, truthful_inbox: Mapping[int, np.ndarray], observed_mask,
                     true_actions, game: GameSpec, alpha: float) -> np.ndarray:
    """Adversary's own belief update: average truthful messages, override observations, descend."""
    if not truthful_inbox:
        raise NoTruthfulNeighbors(f"adversary {agent} has no truthful in-neighbours")
    msgs = np.array([truthful_inbox[s] for s in sorted(truthful_inbox)], dtype=float)
    v = msgs.mean(axis=0)
    observed_mask = np.asarray(observed_mask, dtype=bool)
    v = np.where(observed_mask, np.asarray(true_actions, dtype=float), v)
    return gradient_update(agent, v, game, alpha)


# -- channel attacks -------------------------------------------------------------

@dataclass(frozen=True)
class DropLink:
    edge: tuple
    probability: float = 1.0

    def __post_init__(self):
        if not 0 <= self.probability <= 1:
            raise ValueError("probability must lie in [0, 1]")
        object.__setattr__(self, "edge", tuple(int(v) for v in self.edge))


@dataclass(frozen=True)
class Jam:
    edges: tuple
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(tuple(int(v) for v in e) for e in self.edges))


@dataclass(frozen=True)
class ManInTheMiddle:
    """Replaces ``y`` with ``scale @ y + shift`` (``scale`` may be a scalar)."""

    edge: tuple
    scale: object = -1.0
    shift: object = 0.0

    def __post_init__(self):
        object.__setattr__(self, "edge", tuple(int(v) for v in self.edge))


ATTACKS = {"drop_link": DropLink, "jam": Jam, "man_in_the_middle": ManInTheMiddle}


def attack_edges(attack) -> tuple:
    return attack.edges if isinstance(attack, Jam) else (attack.edge,)


@dataclass
class MessageBatch:
    """Messages of one round keyed by ``(receiver, sender)``; absent keys were not delivered."""

    round: int
    entries: dict
    edges: frozenset = field(default_factory=frozenset)

    def copy(self) -> "MessageBatch":
        return MessageBatch(self.round, {k: v.copy() for k, v in self.entries.items()}, self.edges)


def apply_channel_attacks(batch: MessageBatch, attacks, seed: int) -> MessageBatch:
    """Apply attacks in declaration order; attack ``a`` draws from substream ``(round, a)``."""
    out = batch.copy()
    for a, attack in enumerate(attacks):
        for e in attack_edges(attack):
            if e not in batch.edges:
                raise UnknownEdge(f"attack {a} targets {e[0]} <- {e[1]}, not a communication edge")
        rng = substream(seed, TAG_ATTACK, batch.round, a)
        if isinstance(attack, DropLink):
            if rng.random() < attack.probability:
                out.entries.pop(attack.edge, None)
        elif isinstance(attack, Jam):
            for e in attack.edges:
                if e in out.entries:
                    y = out.entries[e]
                    out.entries[e] = y + attack.sigma * rng.standard_normal(y.shape)
        elif isinstance(attack, ManInTheMiddle):
            y = out.entries.get(attack.edge)
            if y is not None:
                scale = np.asarray(attack.scale, dtype=float)
                moved = scale @ y if scale.ndim == 2 else scale * y
                if moved.shape != y.shape:
                    raise DimensionMismatch("man-in-the-middle transform changes the message size")
                out.entries[attack.edge] = moved + np.asarray(attack.shift, dtype=float)
        else:
            raise TypeError(f"unknown attack {attack!r}")
    return out
