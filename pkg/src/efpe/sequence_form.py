"""Sequence-form bilinear saddle-point problem ``min_x max_y <x, A y>``.

``A`` is the negated P1 payoff matrix, so P1 is the minimiser and the game
value to P1 is ``-min_x max_y <x, A y>``. The P1-payoff matrix itself is kept
as ``payoff``.

Terminals reached before a player's first decision belong to that player's
empty sequence. Every point of a treeplex puts total mass 1 on each root
simplex, so such entries are folded onto the sequences of one root simplex
(the first) without changing ``<x, A y>`` anywhere on the polytopes.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .game import GameTree, Player
from .treeplex import SimplexSpec, StructuralError, Treeplex, build_treeplex


class TraversalCounter:
    """Counts matrix-vector products (one product = one tree traversal)."""

    def __init__(self) -> None:
        self._count = 0
        self._lock = threading.Lock()

    def add(self, k: int = 1) -> None:
        with self._lock:
            self._count += k

    @property
    def count(self) -> int:
        return self._count


@dataclass
class SequenceFormProblem:
    payoff: sp.csr_matrix  # P1 payoff, rows = P1 sequences, cols = P2 sequences
    X: Treeplex
    Y: Treeplex
    game: GameTree | None = None
    traversal_cost: int = 0
    # (infoset rows, opponent sequences incl. empty at column 0) chance reach
    reach: tuple[sp.csr_matrix, sp.csr_matrix] | None = None
    # per-player: infoset label -> simplex id, and simplex id -> member nodes
    simplex_of: tuple[dict, dict] = field(default_factory=lambda: ({}, {}))
    nodes_of: tuple[list, list] = field(default_factory=lambda: ([], []))
    # (P1, P2) sequences on the path to each decision node; 1-based, 0 = empty
    node_seq: dict[int, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.A = (-self.payoff).tocsr()
        self.At = self.A.T.tocsr()
        for m in (self.A, self.At):
            m.sum_duplicates()
            m.sort_indices()

    def treeplex(self, player: int) -> Treeplex:
        return self.X if player == 0 else self.Y


def _matvec(m: sp.csr_matrix, v: np.ndarray) -> np.ndarray:
    return _kernels.csr_matvec(m.indptr, m.indices, m.data, np.ascontiguousarray(v), np.empty(m.shape[0]))


def apply_A(p: SequenceFormProblem, y, counter: TraversalCounter | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (p.Y.n,):
        raise ValueError(f"y has shape {y.shape}, expected ({p.Y.n},)")
    if counter is not None:
        counter.add()
    return _matvec(p.A, y)


def apply_At(p: SequenceFormProblem, x, counter: TraversalCounter | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.X.n,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.X.n},)")
    if counter is not None:
        counter.add()
    return _matvec(p.At, x)


def matrix_norm(p: SequenceFormProblem) -> float:
    """``max |A_ij|``: the operator norm from l1 to l-infinity."""
    return float(np.abs(p.A.data).max()) if p.A.nnz else 0.0


def sequence_form(g: GameTree) -> SequenceFormProblem:
    """Assemble treeplexes and payoff matrix from a perfect-recall game."""
    specs: list[list[SimplexSpec]] = [[], []]
    n_seq = [0, 0]
    simplex_of: tuple[dict, dict] = ({}, {})
    parent_of: tuple[dict, dict] = ({}, {})
    nodes_of: tuple[list, list] = ([], [])
    entries: dict[tuple[int, int], float] = defaultdict(float)
    reach_entries: tuple[dict, dict] = (defaultdict(float), defaultdict(float))
    node_seq: dict[int, tuple[int, int]] = {}
    first_seq: tuple[list, list] = ([], [])

    # sequence ids here are 1-based; 0 is the empty sequence
    stack = [(g.root, 0, 0, 1.0)]
    while stack:
        k, s1, s2, chance = stack.pop()
        nd = g.nodes[k]
        if nd.player == Player.TERMINAL:
            if nd.payoff != 0.0:
                entries[(s1, s2)] += nd.payoff * chance
            continue
        if nd.player == Player.CHANCE:
            for pr, c in reversed(list(zip(nd.probs, nd.children))):
                if pr > 0.0:
                    stack.append((c, s1, s2, chance * pr))
            continue
        p = int(nd.player)
        own = (s1, s2)[p]
        h = nd.infoset
        if h not in simplex_of[p]:
            j = len(specs[p])
            simplex_of[p][h] = j
            parent_of[p][h] = own
            specs[p].append(SimplexSpec(len(nd.actions), None if own == 0 else own - 1, label=h))
            nodes_of[p].append([])
            first_seq[p].append(n_seq[p] + 1)
            n_seq[p] += len(nd.actions)
        elif parent_of[p][h] != own:
            raise StructuralError(f"perfect recall violated at infoset {h!r}")
        j = simplex_of[p][h]
        nodes_of[p][j].append(k)
        node_seq[k] = (s1, s2)
        reach_entries[p][(j, (s2, s1)[p])] += chance
        first = first_seq[p][j]
        for a, c in reversed(list(enumerate(nd.children))):
            seq = first + a
            stack.append((c, seq, s2, chance) if p == 0 else (c, s1, seq, chance))

    # ids were handed out in creation order, which is already topological
    X = build_treeplex(specs[0])
    Y = build_treeplex(specs[1])
    for t, p in ((X, 0), (Y, 1)):
        if t.n == 0:
            raise StructuralError(f"player {p + 1} has no decisions")

    rows, cols, vals = [], [], []
    root_x = range(X.start[X.roots[0]], X.start[X.roots[0]] + X.size[X.roots[0]])
    root_y = range(Y.start[Y.roots[0]], Y.start[Y.roots[0]] + Y.size[Y.roots[0]])
    for (s1, s2), v in entries.items():
        rs = root_x if s1 == 0 else [s1 - 1]
        cs = root_y if s2 == 0 else [s2 - 1]
        for r in rs:
            for c in cs:
                rows.append(r)
                cols.append(c)
                vals.append(v)
    payoff = sp.coo_matrix((vals, (rows, cols)), shape=(X.n, Y.n)).tocsr()
    payoff.sum_duplicates()
    payoff.sort_indices()

    reach = []
    for p, t in ((0, X), (1, Y)):
        opp_n = (Y, X)[p].n + 1
        keys = list(reach_entries[p].items())
        reach.append(sp.coo_matrix(
            ([v for _, v in keys], ([j for (j, _), _ in keys], [s for (_, s), _ in keys])),
            shape=(t.num_simplexes, opp_n)).tocsr())

    return SequenceFormProblem(
        payoff=payoff, X=X, Y=Y, game=g, traversal_cost=len(g),
        reach=(reach[0], reach[1]), simplex_of=simplex_of, nodes_of=nodes_of,
        node_seq=node_seq,
    )


def expected_value(p: SequenceFormProblem, x, y) -> float:
    """Expected payoff to P1 of sequence-form profile ``(x, y)``."""
    return float(np.asarray(x) @ (p.payoff @ np.asarray(y)))
