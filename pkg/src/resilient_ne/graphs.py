"""Directed graphs and the robustness checkers used by the resilient protocol.

Edges follow the ``e_ij`` convention: the pair ``(i, j)`` is an edge *from*
``j`` *to* ``i``, i.e. ``j`` is an in-neighbour of ``i``.

Each property has an exact closure-based checker (polynomial time) and a
brute-force enumerator that follows the definition literally. The
enumerators refuse to run past a fixed budget rather than sample silently.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import TooLarge

MAX_EXHAUSTIVE_NODES = 25
MAX_REMOVAL_PATTERNS = 10**7
_CHUNK = 1 << 16


@dataclass(frozen=True)
class DirectedGraph:
    num_nodes: int
    edges: tuple = ()

    def __post_init__(self):
        n = int(self.num_nodes)
        edges = sorted({(int(i), int(j)) for i, j in self.edges})
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge {i} <- {j} references a node outside 0..{n - 1}")
        object.__setattr__(self, "num_nodes", n)
        object.__setattr__(self, "edges", tuple(edges))
        ins = [[] for _ in range(n)]
        for i, j in edges:
            ins[i].append(j)
        object.__setattr__(self, "_in", tuple(tuple(a) for a in ins))

    def in_neighbors(self, i: int) -> tuple:
        return self._in[i]

    def out_neighbors(self, j: int) -> tuple:
        return tuple(i for i, s in self.edges if s == j)

    def in_degree(self, i: int, *, self_loops: bool = False) -> int:
        return sum(1 for j in self._in[i] if self_loops or j != i)

    def in_masks(self) -> list:
        """Bitmask of in-neighbours per node (bit ``j`` set iff ``j -> i``)."""
        return [sum(1 << j for j in nb) for nb in self._in]

    def with_self_loops(self) -> "DirectedGraph":
        return DirectedGraph(self.num_nodes, self.edges + tuple((i, i) for i in range(self.num_nodes)))

    def without_self_loops(self) -> "DirectedGraph":
        return DirectedGraph(self.num_nodes, tuple(e for e in self.edges if e[0] != e[1]))

    def union(self, other: "DirectedGraph") -> "DirectedGraph":
        if other.num_nodes != self.num_nodes:
            raise ValueError("graphs have different node counts")
        return DirectedGraph(self.num_nodes, self.edges + other.edges)

    def has_all_self_loops(self) -> bool:
        return all(i in self._in[i] for i in range(self.num_nodes))

    @classmethod
    def from_undirected(cls, num_nodes: int, pairs: Iterable) -> "DirectedGraph":
        edges = []
        for a, b in pairs:
            edges += [(a, b), (b, a)]
        return cls(num_nodes, edges)

    @classmethod
    def complete(cls, num_nodes: int, self_loops: bool = False) -> "DirectedGraph":
        return cls(num_nodes, [(i, j) for i in range(num_nodes) for j in range(num_nodes)
                               if self_loops or i != j])

    @classmethod
    def grid(cls, cols: int, rows: int, radius: int = 1, metric: str = "inf") -> "DirectedGraph":
        """Grid graph on ``cols x rows`` points, node ``r * cols + c``; links within ``radius``."""
        pts = [(c, r) for r in range(rows) for c in range(cols)]
        edges = []
        for a, (ca, ra) in enumerate(pts):
            for b, (cb, rb) in enumerate(pts):
                if a == b:
                    continue
                dc, dr = abs(ca - cb), abs(ra - rb)
                dist = max(dc, dr) if metric == "inf" else dc + dr
                if dist <= radius:
                    edges.append((a, b))
        return cls(cols * rows, edges)

    # -- edge-list text format -------------------------------------------------

    def to_edgelist(self) -> str:
        lines = [f"nodes {self.num_nodes}"]
        lines += [f"{i} <- {j}" for i, j in self.edges]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text: str) -> "DirectedGraph":
        num_nodes = None
        edges = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("nodes"):
                parts = line.split()
                if len(parts) != 2 or num_nodes is not None:
                    raise ValueError(f"line {lineno}: malformed node-count header")
                num_nodes = int(parts[1])
                continue
            if "<-" not in line:
                raise ValueError(f"line {lineno}: expected 'i <- j'")
            left, right = line.split("<-")
            edges.append((int(left), int(right)))
        if num_nodes is None:
            raise ValueError("missing 'nodes N' header")
        return cls(num_nodes, edges)


@dataclass
class RobustnessReport:
    property: str
    holds: bool
    witness: object = None
    clauses: list = field(default_factory=list)

    def __bool__(self):
        return self.holds


def _mask_to_set(mask: int) -> frozenset:
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


def _set_to_mask(nodes) -> int:
    m = 0
    for v in nodes:
        m |= 1 << int(v)
    return m


def locality_number(g: DirectedGraph, S) -> int:
    """Smallest r such that S is r-local: max over i outside S of |N_i^in ∩ S|."""
    S = set(S)
    if not S:
        return 0
    return max((sum(1 for j in g.in_neighbors(i) if j in S)
                for i in range(g.num_nodes) if i not in S), default=0)


def observation_base(go: DirectedGraph, node: int) -> frozenset:
    """Closed out-observation set of ``node``: itself plus every agent observing it."""
    return frozenset(go.out_neighbors(node)) | {node}


def _check_pair(gc: DirectedGraph, go: DirectedGraph):
    if gc.num_nodes != go.num_nodes:
        raise ValueError("communication and observation graphs differ in size")


def _closure(start: int, in_c: list, r: int, in_o: list | None = None) -> int:
    reached = start
    changed = True
    n = len(in_c)
    while changed:
        changed = False
        for j in range(n):
            if reached >> j & 1:
                continue
            if (in_o is not None and in_o[j] & reached) or (in_c[j] & reached).bit_count() >= r:
                reached |= 1 << j
                changed = True
    return reached


def is_information_robust(gc: DirectedGraph, go: DirectedGraph, node: int, r: int,
                          mode: str = "closure", trials: int = 10_000, seed: int = 0
                          ) -> RobustnessReport:
    """Every S ⊇ base (S ≠ all nodes) must have an outside j with >= r comm in-edges from S.

    ``mode``: ``"closure"`` (exact, grows the base greedily), ``"exhaustive"``
    (enumerates every superset, N <= 25) or ``"sampled"`` (random supersets;
    can only certify failure).
    """
    _check_pair(gc, go)
    N = gc.num_nodes
    base = _set_to_mask(observation_base(go, node))
    full = (1 << N) - 1
    in_c = [m & ~(1 << i) for i, m in enumerate(gc.in_masks())]
    if mode == "closure":
        reached = _closure(base, in_c, r)
        if reached == full:
            return RobustnessReport("InfoRobust", True)
        return RobustnessReport("InfoRobust", False, witness=_mask_to_set(reached))
    if mode == "exhaustive":
        if N > MAX_EXHAUSTIVE_NODES:
            raise TooLarge(f"exhaustive subset scan needs N <= {MAX_EXHAUSTIVE_NODES}, got {N}")
        witness = _scan_supersets(base, in_c, r, N)
        return RobustnessReport("InfoRobust", witness is None, witness=witness)
    if mode == "sampled":
        rng = np.random.default_rng(seed)
        free = [v for v in range(N) if not base >> v & 1]
        for _ in range(trials):
            pick = rng.random(len(free)) < rng.random()
            S = base | _set_to_mask(v for v, p in zip(free, pick) if p)
            if S == full:
                continue
            if not _has_expander(S, in_c, r, N):
                return RobustnessReport("InfoRobust", False, witness=_mask_to_set(S))
        return RobustnessReport("InfoRobust", True, witness=f"no counterexample in {trials} trials")
    raise ValueError(f"unknown mode {mode!r}")


def _has_expander(S: int, in_c: list, r: int, N: int) -> bool:
    return any(not S >> j & 1 and (in_c[j] & S).bit_count() >= r for j in range(N))


def _scan_supersets(base: int, in_c: list, r: int, N: int):
    free = np.array([v for v in range(N) if not base >> v & 1], dtype=np.int64)
    total = 1 << len(free)
    masks = np.array(in_c, dtype=np.int64)
    # the all-ones subset is S = N, which the definition excludes
    for lo in range(0, total - 1, _CHUNK):
        t = np.arange(lo, min(lo + _CHUNK, total - 1), dtype=np.int64)
        S = np.full(t.shape, base, dtype=np.int64)
        for b, v in enumerate(free):
            S |= ((t >> b) & 1) << v
        ok = np.zeros(t.shape, dtype=bool)
        for j in range(N):
            outside = ((S >> j) & 1) == 0
            ok |= outside & (np.bitwise_count(S & masks[j]) >= r)
        bad = np.flatnonzero(~ok)
        if bad.size:
            return _mask_to_set(int(S[bad[0]]))
    return None


def removal_pattern_count(gc: DirectedGraph, r: int) -> int:
    k = max(r - 1, 0)
    total = 1
    for i in range(gc.num_nodes):
        d = gc.in_degree(i)
        total *= math.comb(d, min(k, d))
    return total


def rooted_after_removal(gc: DirectedGraph, go: DirectedGraph, root: int, r: int,
                         mode: str = "exhaustive", trials: int = 10_000, seed: int = 0
                         ) -> RobustnessReport:
    """Is (remaining comm edges ∪ observation edges) rooted at ``root`` after
    every node drops r-1 of its communication in-edges?

    The witness for a failure is ``(removed, unreached)`` where ``removed``
    maps node -> dropped in-neighbours.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    _check_pair(gc, go)
    N = gc.num_nodes
    in_c = [m & ~(1 << i) for i, m in enumerate(gc.in_masks())]
    in_o = [m & ~(1 << i) for i, m in enumerate(go.in_masks())]
    full = (1 << N) - 1
    k = r - 1

    if mode == "closure":
        reached = _closure(1 << root, in_c, r, in_o)
        if reached == full:
            return RobustnessReport("Rooted", True)
        removed = {j: tuple(sorted(_mask_to_set(in_c[j] & reached)))
                   for j in range(N) if not reached >> j & 1 and in_c[j] & reached}
        return RobustnessReport("Rooted", False, witness=(removed, _mask_to_set(full & ~reached)))

    choices = []
    for j in range(N):
        senders = tuple(v for v in gc.in_neighbors(j) if v != j)
        choices.append(list(itertools.combinations(senders, min(k, len(senders)))))
    if mode == "exhaustive":
        count = removal_pattern_count(gc, r)
        if count > MAX_REMOVAL_PATTERNS:
            raise TooLarge(f"{count} removal patterns exceed the budget of {MAX_REMOVAL_PATTERNS}")
        patterns = itertools.product(*choices)
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        patterns = (tuple(c[rng.integers(len(c))] for c in choices) for _ in range(trials))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    for pattern in patterns:
        masks = [(in_c[j] & ~_set_to_mask(pattern[j])) | in_o[j] for j in range(N)]
        reached = _reach(root, masks)
        if reached != full:
            removed = {j: tuple(p) for j, p in enumerate(pattern) if p}
            return RobustnessReport("Rooted", False, witness=(removed, _mask_to_set(full & ~reached)))
    if mode == "sampled":
        return RobustnessReport("Rooted", True, witness=f"no counterexample in {trials} trials")
    return RobustnessReport("Rooted", True)


def _reach(root: int, in_masks: list) -> int:
    reached = 1 << root
    changed = True
    while changed:
        changed = False
        for j, m in enumerate(in_masks):
            if not reached >> j & 1 and m & reached:
                reached |= 1 << j
                changed = True
    return reached


def check_assumptions(gc: DirectedGraph, go: DirectedGraph, adversaries, D: int,
                      mode: str = "closure") -> RobustnessReport:
    """Adversary set D-local, truthful in-degree >= 2D+1, every node (2D+1)-information robust."""
    if D < 0:
        raise ValueError("D must be nonnegative")
    _check_pair(gc, go)
    adversaries = set(adversaries)
    N = gc.num_nodes
    r = 2 * D + 1
    clauses = []

    loc = locality_number(gc, adversaries)
    worst = None
    if loc > D:
        worst = [i for i in range(N) if i not in adversaries
                 and sum(1 for j in gc.in_neighbors(i) if j in adversaries) > D]
    clauses.append(("locality", loc <= D, {"locality_number": loc, "violating_nodes": worst}))

    short = {i: gc.in_degree(i) for i in range(N)
             if i not in adversaries and gc.in_degree(i) < r}
    clauses.append(("in_degree", not short, {"required": r, "violating_nodes": short or None}))

    failing = {}
    for m in range(N):
        rep = is_information_robust(gc, go, m, r, mode=mode)
        if not rep.holds:
            failing[m] = sorted(rep.witness) if isinstance(rep.witness, frozenset) else rep.witness
    clauses.append(("information_robust", not failing, {"r": r, "violating_nodes": failing or None}))

    holds = all(ok for _, ok, _ in clauses)
    witness = None if holds else {name: detail for name, ok, detail in clauses if not ok}
    return RobustnessReport("Assumptions", holds, witness=witness, clauses=clauses)


# -- vectorised closure kernels over batches of small graphs --------------------

def info_robust_closure_batch(in_c: np.ndarray, base: np.ndarray, r: int) -> np.ndarray:
    """Batch version of the closure check. ``in_c`` is ``(B, N)`` in-masks without self bits."""
    in_c = np.asarray(in_c, dtype=np.int64)
    B, N = in_c.shape
    reached = np.broadcast_to(np.asarray(base, dtype=np.int64), (B,)).copy()
    for _ in range(N):
        for j in range(N):
            grow = (((reached >> j) & 1) == 0) & (np.bitwise_count(in_c[:, j] & reached) >= r)
            reached |= grow.astype(np.int64) << j
    return reached == (1 << N) - 1


def rooted_closure_batch(in_c: np.ndarray, in_o: np.ndarray, root: int, r: int) -> np.ndarray:
    in_c = np.asarray(in_c, dtype=np.int64)
    in_o = np.asarray(in_o, dtype=np.int64)
    B, N = in_c.shape
    reached = np.full(B, 1 << root, dtype=np.int64)
    for _ in range(N):
        for j in range(N):
            hit = (np.bitwise_count(in_c[:, j] & reached) >= r) | ((in_o[:, j] & reached) != 0)
            reached |= (hit & (((reached >> j) & 1) == 0)).astype(np.int64) << j
    return reached == (1 << N) - 1
