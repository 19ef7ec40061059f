"""Scenario files: JSON documents describing one game, graph pair, adversary set and run.

Agent indices are 0-based. Edges are ``[receiver, sender]`` pairs, matching
the ``i <- j`` convention of :class:`~resilient_ne.graphs.DirectedGraph`.
"""
from __future__ import annotations

import copy
import dataclasses
import json
from importlib import resources
from pathlib import Path

import numpy as np

from . import adversary as adv
from .engine import InitSpec, ScenarioConfig
from .errors import ParseError, ValidationError
from .game import GameSpec, QuadraticAffine, SensorNetwork
from .graphs import DirectedGraph

TOP_KEYS = {"name", "description", "game", "graphs", "filter", "adversaries", "attacks", "run"}
REQUIRED_TOP = ("game", "graphs", "filter", "run")
GAME_KEYS = {
    "quadratic_affine": ({"type", "dims", "G", "b"}, ("dims", "G", "b")),
    "sensor_network": ({"type", "num_agents", "positions", "cost_edges", "target", "offsets"},
                       ("cost_edges",)),
}
GRAPH_KEYS = {"num_nodes", "communication", "observation"}
FILTER_KEYS = {"D", "eta"}
RUN_KEYS = {"alpha", "seed", "max_iters", "tol", "init", "record_weights"}
INIT_KEYS = {"kind", "sigma", "vector"}
RUN_DEFAULTS = {"seed": 0, "max_iters": 10_000, "tol": 1e-8, "record_weights": False}

_POLICY_NAMES = {cls: name for name, cls in adv.POLICIES.items()}
_ATTACK_NAMES = {cls: name for name, cls in adv.ATTACKS.items()}


# -- helpers -------------------------------------------------------------------

def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ParseError("required field is missing", f"{path}.{key}" if path else key)
    return obj[key]


def _object(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ValidationError("expected an object", path)
    return value


def _known(obj: dict, allowed, path: str):
    extra = sorted(set(obj) - set(allowed))
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ValidationError("unknown key", where)


def _number(value, path: str, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError("expected a number", path)
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ValidationError("expected an integer", path)
        return int(value)
    return float(value)


def _array(value, path: str, ndim=None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("expected a numeric array", path) from None
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-dimensional array", path)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("contains NaN or Inf", path)
    return arr


def _edges(value, path: str):
    if not isinstance(value, list):
        raise ValidationError("expected a list of [receiver, sender] pairs", path)
    out = []
    for k, e in enumerate(value):
        if not (isinstance(e, list) and len(e) == 2):
            raise ValidationError("expected a [receiver, sender] pair", f"{path}[{k}]")
        out.append((_number(e[0], f"{path}[{k}]", True), _number(e[1], f"{path}[{k}]", True)))
    return out


def _tolist(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return [_tolist(x) for x in v]
    return v


# -- parsing -------------------------------------------------------------------

def loads(text: str) -> dict:
    """Decode JSON, reporting the line of a syntax error."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ParseError("a scenario must be a JSON object")
    return data


def parse_game(spec: dict) -> GameSpec:
    spec = _object(spec, "game")
    kind = _require(spec, "type", "game")
    if kind not in GAME_KEYS:
        raise ValidationError(f"unknown game type {kind!r}", "game.type")
    allowed, required = GAME_KEYS[kind]
    _known(spec, allowed, "game")
    for key in required:
        _require(spec, key, "game")
    try:
        if kind == "quadratic_affine":
            dims = [_number(d, "game.dims", True) for d in spec["dims"]]
            G = _array(spec["G"], "game.G", 2)
            b = _array(spec["b"], "game.b", 1)
            return GameSpec(len(dims), tuple(dims), QuadraticAffine(G, b))
        edges = _edges(spec["cost_edges"], "game.cost_edges")
        if "offsets" in spec:
            # layout given directly as per-edge offsets
            if "positions" in spec:
                raise ValidationError("give either positions or offsets, not both", "game")
            num = _number(_require(spec, "num_agents", "game"), "game.num_agents", True)
            offsets = _array(spec["offsets"], "game.offsets", 2)
            dim = offsets.shape[1]
        else:
            pos = _array(_require(spec, "positions", "game"), "game.positions", 2)
            num, dim = pos.shape
            if "num_agents" in spec and spec["num_agents"] != num:
                raise ValidationError("disagrees with the number of positions", "game.num_agents")
            offsets = np.array([pos[i] - pos[j] for i, j in edges]).reshape(-1, dim)
        target = _array(spec.get("target", [0.0] * dim), "game.target", 1)
        kind_obj = SensorNetwork(target, tuple(edges), offsets)
        return GameSpec(num, (dim,) * num, kind_obj)
    except ValidationError:
        raise
    except (ValueError, IndexError) as exc:
        raise ValidationError(str(exc), "game") from None


def _policy(spec, path):
    spec = _object(spec, path)
    name = _require(spec, "policy", path)
    if name not in adv.POLICIES:
        raise ValidationError(f"unknown policy {name!r}", f"{path}.policy")
    cls = adv.POLICIES[name]
    params = {k: v for k, v in spec.items() if k not in ("agent", "policy")}
    names = {f.name for f in dataclasses.fields(cls)}
    _known(params, names, path)
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), path) from None


def _attack(spec, path):
    spec = _object(spec, path)
    name = _require(spec, "type", path)
    if name not in adv.ATTACKS:
        raise ValidationError(f"unknown attack {name!r}", f"{path}.type")
    cls = adv.ATTACKS[name]
    params = {k: v for k, v in spec.items() if k != "type"}
    _known(params, {f.name for f in dataclasses.fields(cls)}, path)
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), path) from None


def parse_scenario(data: dict) -> ScenarioConfig:
    """Validate a decoded scenario document and build the run configuration."""
    data = _object(data, "")
    _known(data, TOP_KEYS, "")
    for key in REQUIRED_TOP:
        _require(data, key, "")
    game = parse_game(data["game"])
    N = game.num_agents

    graphs = _object(data["graphs"], "graphs")
    _known(graphs, GRAPH_KEYS, "graphs")
    num = _number(graphs.get("num_nodes", N), "graphs.num_nodes", True)
    if num != N:
        raise ValidationError(f"game has {N} agents but graphs have {num} nodes",
                              "graphs.num_nodes")
    try:
        gc = DirectedGraph(N, _edges(_require(graphs, "communication", "graphs"),
                                     "graphs.communication"))
        go = DirectedGraph(N, _edges(_require(graphs, "observation", "graphs"),
                                     "graphs.observation"))
    except ValueError as exc:
        raise ValidationError(str(exc), "graphs") from None

    filt = _object(data["filter"], "filter")
    _known(filt, FILTER_KEYS, "filter")
    D = _number(_require(filt, "D", "filter"), "filter.D", True)
    eta = filt.get("eta")
    eta = None if eta is None else _number(eta, "filter.eta")

    adversaries = {}
    raw_adv = data.get("adversaries", [])
    if not isinstance(raw_adv, list):
        raise ValidationError("expected a list", "adversaries")
    for k, spec in enumerate(raw_adv):
        path = f"adversaries[{k}]"
        agent = _number(_require(_object(spec, path), "agent", path), f"{path}.agent", True)
        if agent in adversaries:
            raise ValidationError(f"agent {agent} listed twice", path)
        adversaries[agent] = _policy(spec, path)

    raw_att = data.get("attacks", [])
    if not isinstance(raw_att, list):
        raise ValidationError("expected a list", "attacks")
    attacks = [_attack(spec, f"attacks[{k}]") for k, spec in enumerate(raw_att)]

    run = _object(data["run"], "run")
    _known(run, RUN_KEYS, "run")
    alpha = _number(_require(run, "alpha", "run"), "run.alpha")
    seed = _number(run.get("seed", RUN_DEFAULTS["seed"]), "run.seed", True)
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer", "run.seed")
    max_iters = _number(run.get("max_iters", RUN_DEFAULTS["max_iters"]), "run.max_iters", True)
    tol = _number(run.get("tol", RUN_DEFAULTS["tol"]), "run.tol")
    record = run.get("record_weights", False)
    if not isinstance(record, bool):
        raise ValidationError("expected true or false", "run.record_weights")
    init_spec = _object(run.get("init", {"kind": "gaussian", "sigma": 1.0}), "run.init")
    _known(init_spec, INIT_KEYS, "run.init")
    kind = _require(init_spec, "kind", "run.init")
    vector = init_spec.get("vector")
    if kind == "explicit":
        vector = _tolist(_array(_require(init_spec, "vector", "run.init"), "run.init.vector"))
    init = InitSpec(kind, _number(init_spec.get("sigma", 1.0), "run.init.sigma"),
                    None if vector is None else _freeze(vector))

    return ScenarioConfig(
        game=game, gc=gc, go=go, adversaries=adversaries, channel_attacks=attacks, D=D,
        eta=eta, alpha=alpha, seed=seed, init=init, max_iters=max_iters, tol=tol,
        record_weights=record, name=str(data.get("name", "")),
    )


def _freeze(v):
    return tuple(_freeze(x) for x in v) if isinstance(v, list) else v


# -- serialization -----------------------------------------------------------

def _params(obj) -> dict:
    return {f.name: _tolist(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def to_dict(config: ScenarioConfig) -> dict:
    """Canonical document: every default spelled out, edges sorted, self-loops implicit."""
    game = config.game
    kind = game.kind
    if isinstance(kind, QuadraticAffine):
        gdoc = {"type": "quadratic_affine", "dims": list(game.dims), "G": kind.G.tolist(),
                "b": kind.b.tolist()}
    elif isinstance(kind, SensorNetwork):
        gdoc = {"type": "sensor_network", "num_agents": game.num_agents,
                "cost_edges": [list(e) for e in kind.cost_edges],
                "target": kind.target.tolist(), "offsets": kind.offsets.tolist()}
    else:
        raise ValidationError("custom games cannot be written to a scenario file", "game")
    go = config.go.without_self_loops()
    init = {"kind": config.init.kind, "sigma": float(config.init.sigma)}
    if config.init.vector is not None:
        init["vector"] = _tolist(config.init.vector)
    return {
        "name": config.name,
        "game": gdoc,
        "graphs": {"num_nodes": game.num_agents,
                   "communication": [list(e) for e in config.gc.edges],
                   "observation": [list(e) for e in go.edges]},
        "filter": {"D": config.D, "eta": config.eta},
        "adversaries": [{"agent": a, "policy": _POLICY_NAMES[type(p)], **_params(p)}
                        for a, p in sorted(config.adversaries.items())],
        "attacks": [{"type": _ATTACK_NAMES[type(a)], **_params(a)}
                    for a in config.channel_attacks],
        "run": {"alpha": config.alpha, "seed": config.seed, "max_iters": config.max_iters,
                "tol": config.tol, "init": init, "record_weights": config.record_weights},
    }


def dumps(config: ScenarioConfig) -> str:
    return json.dumps(to_dict(config), indent=1, sort_keys=True) + "\n"


# -- overrides -----------------------------------------------------------------

def _literal(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.path=value`` assignments (values are JSON literals) to a raw document."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ParseError(f"override {item!r} is not of the form key=value")
        path, value = item.split("=", 1)
        keys = path.strip().split(".")
        node = data
        for depth, key in enumerate(keys[:-1]):
            node = _descend(node, key, ".".join(keys[:depth + 1]))
        last = keys[-1]
        if isinstance(node, list):
            node[_index(node, last, path)] = _literal(value)
        elif isinstance(node, dict):
            node[last] = _literal(value)
        else:
            raise ValidationError("cannot assign inside a scalar", path)
    return data


def _index(node: list, key: str, path: str) -> int:
    try:
        k = int(key)
        node[k]
    except (ValueError, IndexError):
        raise ValidationError("list index out of range", path) from None
    return k


def _descend(node, key, path):
    if isinstance(node, list):
        return node[_index(node, key, path)]
    if isinstance(node, dict):
        return node.setdefault(key, {})
    raise ValidationError("cannot descend into a scalar", path)


# -- files and builtins --------------------------------------------------------

def builtin_names() -> list:
    pkg = resources.files(__package__) / "scenarios"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def read_document(ref: str) -> dict:
    """Load a scenario document from a path or a builtin name."""
    path = Path(ref)
    if path.exists():
        return loads(path.read_text())
    res = resources.files(__package__) / "scenarios" / f"{ref}.json"
    if res.is_file():
        return loads(res.read_text())
    raise ParseError(f"no scenario file or builtin named {ref!r}")


def load_scenario(ref: str, overrides=None) -> ScenarioConfig:
    return parse_scenario(apply_overrides(read_document(ref), overrides))
