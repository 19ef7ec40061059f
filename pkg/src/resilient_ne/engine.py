"""Synchronous round execution: snapshot, send, corrupt, filter, update."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .adversary import (
    TAG_AGENT,
    Honest,
    TAG_INIT,
    MessageBatch,
    apply_channel_attacks,
    attack_edges,
    corrupt_outgoing,
    substream,
)
from .errors import (
    AssumptionViolation,
    DimensionMismatch,
    NoTruthfulNeighbors,
    ResilientNEError,
    RoundError,
    ValidationError,
)
from .game import GameSpec, GradientKernel, pseudo_gradient, solve_ne_oracle
from .graphs import DirectedGraph, check_assumptions
from .protocol import (
    batch_filtered_average,
    batch_prune_and_average,
    derived_eta,
    reconstruct_weight_row,
    truthful_equivalent_row,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InitSpec:
    kind: str = "gaussian"  # "zeros" | "gaussian" | "explicit"
    sigma: float = 1.0
    vector: Optional[tuple] = None


@dataclass
class ScenarioConfig:
    game: GameSpec
    gc: DirectedGraph
    go: DirectedGraph
    adversaries: dict = field(default_factory=dict)
    channel_attacks: list = field(default_factory=list)
    D: int = 0
    eta: Optional[float] = None
    alpha: float = 0.1
    seed: int = 0
    init: InitSpec = field(default_factory=InitSpec)
    max_iters: int = 10_000
    tol: float = 1e-8
    record_weights: bool = False
    name: str = ""

    def __post_init__(self):
        # every agent observes its own action; nobody messages itself
        self.go = self.go.with_self_loops()
        self.gc = self.gc.without_self_loops()
        self.adversaries = {int(a): p for a, p in self.adversaries.items()}
        self.channel_attacks = list(self.channel_attacks)
        self.validate()

    def validate(self):
        N = self.game.num_agents
        if self.gc.num_nodes != N or self.go.num_nodes != N:
            raise ValidationError(f"graphs must have {N} nodes", "graphs")
        for a in self.adversaries:
            if not 0 <= a < N:
                raise ValidationError(f"adversary index {a} out of range", "adversaries")
        if len(self.adversaries) == N:
            raise ValidationError("at least one agent must be truthful", "adversaries")
        if not self.alpha > 0:
            raise ValidationError("must be positive", "run.alpha")
        if not self.tol > 0:
            raise ValidationError("must be positive", "run.tol")
        if self.D < 0:
            raise ValidationError("must be nonnegative", "filter.D")
        if self.max_iters < 0:
            raise ValidationError("must be nonnegative", "run.max_iters")
        edges = set(self.gc.edges)
        for k, att in enumerate(self.channel_attacks):
            for e in attack_edges(att):
                if e not in edges:
                    raise ValidationError(f"{e[0]} <- {e[1]} is not a communication edge",
                                          f"attacks[{k}]")
        if self.eta is not None and not 0 < self.eta <= self.derived_eta * (1 + 1e-12):
            raise ValidationError(
                f"eta={self.eta} must lie in (0, 1/(max in-degree + 1)] = (0, {self.derived_eta}]",
                "filter.eta")
        if self.init.kind not in ("zeros", "gaussian", "explicit"):
            raise ValidationError(f"unknown init kind {self.init.kind!r}", "run.init")
        if self.init.kind == "explicit":
            vec = np.asarray(self.init.vector, dtype=float)
            if vec.shape not in ((self.game.n,), (N, self.game.n)):
                raise ValidationError(
                    f"explicit init needs length {self.game.n} or shape ({N}, {self.game.n})",
                    "run.init.vector")

    @property
    def derived_eta(self) -> float:
        return derived_eta(max(self.gc.in_degree(i) for i in range(self.gc.num_nodes)))

    @property
    def effective_eta(self) -> float:
        return self.derived_eta if self.eta is None else self.eta

    @property
    def active_adversaries(self) -> dict:
        """Adversaries that actually deviate; an ``Honest`` entry behaves exactly like a truthful agent."""
        return {a: p for a, p in self.adversaries.items() if not isinstance(p, Honest)}

    @property
    def truthful(self) -> list:
        return [i for i in range(self.game.num_agents) if i not in self.active_adversaries]


class ExitStatus(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    ERROR = "Error"


@dataclass
class SimState:
    """Beliefs of every agent after ``round`` completed rounds (row i is agent i's belief)."""

    round: int
    X: np.ndarray


@dataclass
class RoundRecord:
    round: int
    V: np.ndarray
    flags: int
    rows: Optional[np.ndarray] = None


@dataclass
class Metrics:
    """Per-round metrics; entry ``k`` describes the state after ``k`` rounds."""

    dist_to_ne: list = field(default_factory=list)
    consensus_err: list = field(default_factory=list)
    assumption_flags: list = field(default_factory=list)

    def append(self, dist, cons, flags):
        self.dist_to_ne.append(float(dist))
        self.consensus_err.append(float(cons))
        self.assumption_flags.append(int(flags))

    def __len__(self):
        return len(self.dist_to_ne)


@dataclass
class RunResult:
    exit: ExitStatus
    rounds: int
    metrics: Metrics
    final: SimState
    x_star: Optional[np.ndarray]
    states: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    error: Optional[BaseException] = None

    @property
    def actions(self) -> np.ndarray:
        X = self.final.X
        return X[self._owner, np.arange(X.shape[1])]

    _owner: np.ndarray = field(default=None, repr=False)

    def summary(self) -> dict:
        m = self.metrics
        out = {
            "exit": self.exit.value,
            "rounds": self.rounds,
            "final_dist_to_ne": m.dist_to_ne[-1] if m else None,
            "final_consensus_err": m.consensus_err[-1] if m else None,
            "assumption_flags": int(sum(m.assumption_flags)),
        }
        if self.error is not None:
            out["error"] = f"{type(self.error).__name__}: {self.error}"
        return out


class Simulator:
    """Precomputed inbox layout and kernels for one scenario.

    Inboxes are padded to ``K`` slots ordered by ascending sender index, so the
    trimmed filter can run on every agent at once.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = cfg = config
        game = cfg.game
        self.N, self.n = N, n = game.num_agents, game.n
        self.owner = game.owner
        self.cols = np.arange(n)
        senders = [list(cfg.gc.in_neighbors(i)) for i in range(N)]
        K = max((len(s) for s in senders), default=0)
        self.K = K
        self.S = np.zeros((N, K), dtype=int)
        self.valid0 = np.zeros((N, K), dtype=bool)
        self.slot = {}
        for i, ss in enumerate(senders):
            for s, j in enumerate(ss):
                self.S[i, s] = j
                self.valid0[i, s] = True
                self.slot[(i, j)] = s
        self.is_adv = np.zeros(N, dtype=bool)
        self.adversaries = cfg.active_adversaries
        self.is_adv[list(self.adversaries)] = True
        self.truthful_sender = self.valid0 & ~self.is_adv[self.S]
        self.adv_rows = np.flatnonzero(self.is_adv)
        self.truthful_rows = np.flatnonzero(~self.is_adv)
        # slots where adversary a's messages arrive, in receiver order
        self.adv_slots = {}
        for a in sorted(self.adversaries):
            recv = [(i, self.slot[(i, a)]) for i in cfg.gc.out_neighbors(a)]
            self.adv_slots[a] = (np.array([r for r, _ in recv], dtype=int),
                                 np.array([s for _, s in recv], dtype=int))
        self.attacked = sorted({e for att in cfg.channel_attacks for e in attack_edges(att)})
        self.gc_edges = frozenset(cfg.gc.edges)
        self.obs_mask = np.zeros((N, n), dtype=bool)
        for i in range(N):
            seen = np.zeros(N, dtype=bool)
            seen[list(cfg.go.in_neighbors(i))] = True
            self.obs_mask[i] = seen[self.owner]
        self.kernel = GradientKernel(game)
        self.x_star = solve_ne_oracle(game) if game.is_affine else None
        self.min_inbox = 2 * cfg.D + 1

    # -- state ----------------------------------------------------------------

    def initial_state(self) -> SimState:
        cfg, N, n = self.config, self.N, self.n
        if cfg.init.kind == "zeros":
            X = np.zeros((N, n))
        elif cfg.init.kind == "gaussian":
            X = cfg.init.sigma * substream(cfg.seed, TAG_INIT).standard_normal((N, n))
        else:
            vec = np.asarray(cfg.init.vector, dtype=float)
            X = np.broadcast_to(vec, (N, n)).copy()
        return SimState(0, X)

    def actions(self, X: np.ndarray) -> np.ndarray:
        return X[self.owner, self.cols]

    def measure(self, X: np.ndarray):
        """``(dist_to_ne, consensus_err)``; the distance is NaN for games without an oracle."""
        x = self.actions(X)
        cons = float(np.sqrt(((X - x) ** 2).sum(axis=1)).max())
        if self.x_star is None:
            return float("nan"), cons
        return float(np.linalg.norm(x - self.x_star)), cons

    # -- one round --------------------------------------------------------------

    def step(self, state: SimState, record: bool = False):
        """Run one synchronous round; returns ``(next_state, RoundRecord)``."""
        try:
            return self._step(state, record)
        except RoundError:
            raise
        except ResilientNEError as exc:
            raise RoundError(state.round, exc) from exc

    def _step(self, state: SimState, record: bool):
        cfg, k = self.config, state.round
        X = state.X
        if X.shape != (self.N, self.n):
            raise DimensionMismatch(f"state must have shape ({self.N}, {self.n})")
        xtrue = self.actions(X)

        # send: truthful agents forward their beliefs unchanged
        Y = X[self.S]
        valid = self.valid0.copy()
        for a, policy in self.adversaries.items():
            rows, slots = self.adv_slots[a]
            if rows.size == 0:
                continue
            msgs = corrupt_outgoing(policy, X[a], substream(cfg.seed, TAG_AGENT, k, a),
                                    game=cfg.game, sender=a, count=rows.size)
            if msgs is None:
                valid[rows, slots] = False
            else:
                Y[rows, slots] = msgs

        if self.attacked:
            entries = {}
            for i, j in self.attacked:
                s = self.slot[(i, j)]
                if valid[i, s]:
                    entries[(i, j)] = Y[i, s].copy()
            out = apply_channel_attacks(MessageBatch(k, entries, self.gc_edges),
                                        cfg.channel_attacks, cfg.seed)
            for i, j in self.attacked:
                s = self.slot[(i, j)]
                if (i, j) in out.entries:
                    Y[i, s] = out.entries[(i, j)]
                else:
                    valid[i, s] = False

        # a non-finite message is treated as not delivered
        bad = valid & ~np.isfinite(Y).all(axis=2)
        if bad.any():
            valid &= ~bad

        if record:
            V, retained = batch_prune_and_average(X, Y, valid, cfg.D)
        else:
            retained = None
            V = batch_filtered_average(X, Y, valid, cfg.D)
        counts = valid.sum(axis=1)
        short = ~self.is_adv & (counts < self.min_inbox)
        flags = int(short.sum())
        if flags:
            V[short] = X[short]
            log.debug("round %d: %d agents below the %d-message threshold", k, flags,
                      self.min_inbox)

        if self.adv_rows.size:
            m = (valid & self.truthful_sender)[self.adv_rows]
            num = m.sum(axis=1)
            if (num == 0).any():
                a = int(self.adv_rows[np.argmax(num == 0)])
                raise NoTruthfulNeighbors(f"adversary {a} received no truthful messages")
            Ya = Y[self.adv_rows]
            V[self.adv_rows] = (Ya * m[:, :, None]).sum(axis=1) / num[:, None]

        V = np.where(self.obs_mask, xtrue, V)
        if not np.isfinite(V).all():
            raise DimensionMismatch("intermediate estimate became non-finite")

        Xn = V.copy()
        Xn[self.owner, self.cols] -= cfg.alpha * self.kernel(V)

        rows = None
        if record:
            rows = self._weight_rows(X, Y, valid, retained, short)
            check = np.einsum("icj,jc->ic", rows, X)
            scale = 1.0 + np.abs(X).max()
            if np.abs(check - V).max() > 1e-9 * scale:
                raise AssumptionViolation(
                    f"recorded weights do not reproduce the filtered estimates "
                    f"(gap {np.abs(check - V).max():.3e})")
        return SimState(k + 1, Xn), RoundRecord(k, V, flags, rows)

    def _weight_rows(self, X, Y, valid, retained, short) -> np.ndarray:
        """Weights on actual beliefs for every agent, shape ``(N, n, N)``.

        Weight placed on a corrupted message is moved onto genuine senders so
        that each row acts on the stacked belief vector itself.
        """
        N, n, S = self.N, self.n, self.S
        rows = np.zeros((N, n, N))
        for i in range(N):
            obs = self.obs_mask[i]
            live = np.flatnonzero(valid[i])
            if self.is_adv[i]:
                senders = [S[i, s] for s in live if self.truthful_sender[i, s]]
                for s in live:
                    if self.truthful_sender[i, s] and not np.array_equal(Y[i, s], X[S[i, s]]):
                        raise AssumptionViolation(
                            f"message {i} <- {S[i, s]} from a truthful sender was altered")
                row = np.zeros((n, N))
                row[:, senders] = 1.0 / len(senders)
                row[obs] = 0.0
                row[obs, self.owner[obs]] = 1.0
                rows[i] = row
                continue
            if short[i]:
                row = np.zeros((n, N))
                row[:, i] = 1.0
                row[obs] = 0.0
                row[obs, self.owner[obs]] = 1.0
                rows[i] = row
                continue
            kept = [tuple(int(S[i, s]) for s in np.flatnonzero(retained[i, :, c]))
                    for c in range(n)]
            row = reconstruct_weight_row(i, kept, obs, self.owner, N)
            inbox = {int(S[i, s]): Y[i, s] for s in live}
            genuine = {int(S[i, s]) for s in live
                       if self.truthful_sender[i, s] and np.array_equal(Y[i, s], X[S[i, s]])}
            rows[i] = truthful_equivalent_row(i, row, X[i], inbox, genuine, obs)
        return rows


def step_round(state: SimState, config: ScenarioConfig, simulator: Simulator = None):
    """One synchronous round. Randomness comes from substreams of ``config.seed``."""
    sim = simulator or Simulator(config)
    return sim.step(state, record=config.record_weights)


def run(config: ScenarioConfig, *, strict: bool = False, resume: SimState = None,
        record_states: bool = False, checkpoint_path=None, checkpoint_every: int = 0,
        check_mode: str = "closure") -> RunResult:
    """Iterate until both distance and consensus error are within ``tol``, or ``max_iters``.

    Games without an oracle equilibrium use ``|F(x)|`` in place of the distance.
    With ``record_weights`` set, ``weights[k]`` holds the compact weight rows of
    round ``k`` and ``estimates[k]`` the filtered estimates it produced.
    """
    report = check_assumptions(config.gc, config.go, sorted(config.active_adversaries), config.D,
                               mode=check_mode)
    if not report.holds:
        failed = ", ".join(sorted(report.witness))
        if strict:
            raise AssumptionViolation(f"graph assumptions fail: {failed}")
        log.warning("graph assumptions fail (%s); running anyway", failed)

    sim = Simulator(config)
    state = resume if resume is not None else sim.initial_state()
    metrics = Metrics()
    states = [state.X.copy()] if record_states else []
    weights, estimates = [], []

    def done(X) -> bool:
        dist, cons = sim.measure(X)
        if sim.x_star is None:
            dist = float(np.linalg.norm(pseudo_gradient(config.game, sim.actions(X))))
        return dist <= config.tol and cons <= config.tol

    metrics.append(*sim.measure(state.X), 0)
    status, error = ExitStatus.MAX_ITERS, None
    if done(state.X):
        status = ExitStatus.CONVERGED
    else:
        while state.round < config.max_iters:
            try:
                state, rec = sim.step(state, record=config.record_weights)
            except RoundError as exc:
                log.error("%s", exc)
                status, error = ExitStatus.ERROR, exc
                break
            metrics.append(*sim.measure(state.X), rec.flags)
            if record_states:
                states.append(state.X.copy())
            if config.record_weights:
                weights.append(rec.rows)
                estimates.append(rec.V)
            if checkpoint_path and checkpoint_every and state.round % checkpoint_every == 0:
                save_checkpoint(checkpoint_path, state, config.seed)
            if done(state.X):
                status = ExitStatus.CONVERGED
                break
    result = RunResult(status, state.round, metrics, state, sim.x_star, states, weights,
                       estimates, error)
    result._owner = sim.owner
    return result


# -- persistence ---------------------------------------------------------------

def save_checkpoint(path, state: SimState, seed: int):
    """Binary round-state checkpoint. Beliefs and the round index fully determine the future."""
    np.savez(path, X=state.X, round=state.round, seed=np.uint64(seed & 0xFFFFFFFFFFFFFFFF))


def load_checkpoint(path, seed: int = None) -> SimState:
    with np.load(path) as data:
        if seed is not None and int(data["seed"]) != (seed & 0xFFFFFFFFFFFFFFFF):
            raise ValidationError("checkpoint was written with a different seed", "run.seed")
        return SimState(int(data["round"]), data["X"].copy())


def write_metrics_csv(path, metrics: Metrics, final_X: np.ndarray = None, owner=None):
    """Rows ``(round, agent, metric_name, value)``; network-wide metrics use agent -1.

    With ``final_X`` given, the last round also gets each agent's belief error
    ``|x^i - x|`` against the true profile.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "agent", "metric_name", "value"])
        for k in range(len(metrics)):
            w.writerow([k, -1, "dist_to_ne", repr(metrics.dist_to_ne[k])])
            w.writerow([k, -1, "consensus_err", repr(metrics.consensus_err[k])])
            w.writerow([k, -1, "assumption_flags", metrics.assumption_flags[k]])
        if final_X is not None:
            x = final_X[owner, np.arange(final_X.shape[1])]
            last = len(metrics) - 1
            for i, e in enumerate(np.linalg.norm(final_X - x, axis=1)):
                w.writerow([last, i, "belief_err", repr(float(e))])


def write_beliefs_csv(path, X: np.ndarray):
    """Per-component belief dump: ``(agent, component, value)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agent", "component", "value"])
        for i in range(X.shape[0]):
            for c in range(X.shape[1]):
                w.writerow([i, c, repr(float(X[i, c]))])


def write_summary(path, result: RunResult, extra: dict = None):
    data = result.summary()
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2) + "\n")
