"""Two-player zero-sum extensive-form game trees and generators."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable

import numpy as np

from .treeplex import StructuralError

CHANCE_TOL = 1e-12


class Player(IntEnum):
    P1 = 0
    P2 = 1
    CHANCE = 2
    TERMINAL = 3


@dataclass
class Node:
    player: Player
    infoset: str | None = None
    actions: tuple[str, ...] = ()
    children: list[int] = field(default_factory=list)
    probs: tuple[float, ...] | None = None
    payoff: float = 0.0  # to P1; P2 receives the negation


class GameTree:
    """Flat node list; node 0 is the root."""

    def __init__(self, name: str = "game"):
        self.name = name
        self.nodes: list[Node] = []

    def add(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> int:
        return 0

    def infosets(self, player: Player) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for k, nd in enumerate(self.nodes):
            if nd.player == player:
                out.setdefault(nd.infoset, []).append(k)
        return out

    def validate(self) -> None:
        for k, nd in enumerate(self.nodes):
            if nd.player == Player.TERMINAL:
                continue
            if not nd.children or len(nd.children) != len(nd.actions):
                raise StructuralError(f"node {k} has no actions or mismatched children")
            if nd.player == Player.CHANCE:
                if nd.probs is None or len(nd.probs) != len(nd.children):
                    raise StructuralError(f"chance node {k} lacks probabilities")
                if abs(sum(nd.probs) - 1.0) > CHANCE_TOL or min(nd.probs) < 0:
                    raise StructuralError(f"chance node {k} probabilities do not sum to 1")
        for player in (Player.P1, Player.P2):
            for h, members in self.infosets(player).items():
                acts = {self.nodes[k].actions for k in members}
                if len(acts) != 1:
                    raise StructuralError(f"infoset {h!r} has inconsistent action sets")


def _terminal(tree: GameTree, payoff: float) -> int:
    return tree.add(Node(Player.TERMINAL, payoff=float(payoff)))


def build_matrix_game(matrix, name: str = "matrix") -> GameTree:
    """Simultaneous-move matrix game: P1 picks a row, P2 (not observing) a
    column. Entries are payoffs to P1."""
    matrix = np.asarray(matrix, dtype=float)
    tree = GameTree(name)
    rows, cols = matrix.shape
    root = tree.add(Node(Player.P1, "P1", tuple(f"r{i}" for i in range(rows))))
    for i in range(rows):
        nd = tree.add(Node(Player.P2, "P2", tuple(f"c{j}" for j in range(cols))))
        tree.nodes[root].children.append(nd)
        for j in range(cols):
            tree.nodes[nd].children.append(_terminal(tree, matrix[i, j]))
    return tree


def build_matching_pennies() -> GameTree:
    return build_matrix_game([[1.0, -1.0], [-1.0, 1.0]], name="matching_pennies")


def build_fig1_zero_sum() -> GameTree:
    """P1 chooses x (game ends, P1 gets 1) or y; then P2 chooses x (P1 gets
    -5) or y (0)."""
    tree = GameTree("fig1")
    root = tree.add(Node(Player.P1, "P1", ("x", "y")))
    t_x = _terminal(tree, 1.0)
    p2 = tree.add(Node(Player.P2, "P2", ("x", "y")))
    tree.nodes[root].children = [t_x, p2]
    tree.nodes[p2].children = [_terminal(tree, -5.0), _terminal(tree, 0.0)]
    return tree


# --- poker ------------------------------------------------------------------


@dataclass(frozen=True)
class _Betting:
    """One fixed-limit betting round from the state after the round opened."""

    bet: float
    max_raises: int


def _betting_round(
    tree: GameTree,
    rules: _Betting,
    contrib: list[float],
    key: Callable[[int, str], str],
    on_close: Callable[[list[float], str], int],
    on_fold: Callable[[int, list[float]], int],
) -> int:
    """Build a betting round. ``key(player, history)`` names infosets;
    ``on_close`` continues after check-check or a call; ``on_fold`` builds the
    terminal when ``player`` folds."""

    def node(history: str, to_act: int, raises: int, contrib: list[float]) -> int:
        facing = contrib[1 - to_act] > contrib[to_act]
        if facing:
            actions = ["f", "c"] + (["r"] if raises < rules.max_raises else [])
        else:
            actions = ["k", "b"] if raises < rules.max_raises else ["k"]
        nid = tree.add(Node(Player(to_act), key(to_act, history), tuple(actions)))
        kids = []
        for a in actions:
            h = history + a
            if a == "f":
                kids.append(on_fold(to_act, contrib))
            elif a == "c":
                c = list(contrib)
                c[to_act] = c[1 - to_act]
                kids.append(on_close(c, h))
            elif a == "k":
                if history.endswith("k"):
                    kids.append(on_close(list(contrib), h))
                else:
                    kids.append(node(h, 1 - to_act, raises, contrib))
            else:  # "b" or "r"
                c = list(contrib)
                c[to_act] = c[1 - to_act] + rules.bet
                kids.append(node(h, 1 - to_act, raises + 1, c))
        tree.nodes[nid].children = kids
        return nid

    return node("", 0, 0, contrib)


def _fold_payoff(tree: GameTree, folder: int, contrib: list[float]) -> int:
    # the folder loses what they put in
    return _terminal(tree, -contrib[0] if folder == 0 else contrib[1])


def build_kuhn() -> GameTree:
    """Three-card Kuhn poker: ante 1, one bet of size 1, no raises."""
    tree = GameTree("kuhn")
    cards = "JQK"
    deals = list(itertools.permutations(range(3), 2))
    root = tree.add(Node(Player.CHANCE, actions=tuple(f"{cards[a]}{cards[b]}" for a, b in deals),
                         probs=tuple([1.0 / len(deals)] * len(deals))))
    rules = _Betting(bet=1.0, max_raises=1)
    kids = []
    for c1, c2 in deals:
        def close(contrib, _h, c1=c1, c2=c2):
            pot_share = contrib[1] if c1 > c2 else -contrib[0]
            return _terminal(tree, pot_share)

        def key(p, h, c1=c1, c2=c2):
            return f"P{p + 1}:{cards[(c1, c2)[p]]}:{h}"

        kids.append(_betting_round(tree, rules, [1.0, 1.0], key, close,
                                   lambda f, c: _fold_payoff(tree, f, c)))
    tree.nodes[root].children = kids
    tree.validate()
    return tree


def leduc_showdown(p1: int, p2: int, board: int) -> int:
    """+1 if P1 wins, -1 if P2 wins, 0 on a split. Arguments are ranks."""
    if p1 == board and p2 != board:
        return 1
    if p2 == board and p1 != board:
        return -1
    return int(np.sign(p1 - p2))


def build_leduc(ranks: int = 3, bets: tuple[float, float] = (2.0, 4.0), max_raises: int = 2) -> GameTree:
    """Leduc hold'em with ``ranks`` ranks in two suits.

    Ante 1 each, one private card each, a fixed-limit betting round, one
    community card, a second betting round, then showdown (pair with the
    board wins, else the higher private card, equal ranks split).
    """
    if ranks < 2:
        raise ValueError("Leduc needs at least 2 ranks")
    tree = GameTree(f"leduc{ranks}")
    deck = [r for r in range(ranks) for _ in range(2)]  # card id -> rank
    n = len(deck)
    deals = [(a, b) for a in range(n) for b in range(n) if a != b]
    root = tree.add(Node(Player.CHANCE, actions=tuple(f"{a},{b}" for a, b in deals),
                         probs=tuple([1.0 / len(deals)] * len(deals))))
    r1 = _Betting(bets[0], max_raises)
    r2 = _Betting(bets[1], max_raises)
    fold = lambda f, c: _fold_payoff(tree, f, c)  # noqa: E731
    kids = []
    for a, b in deals:
        ra, rb = deck[a], deck[b]

        def key1(p, h, ra=ra, rb=rb):
            return f"P{p + 1}:{(ra, rb)[p]}::{h}"

        def after_round1(contrib, hist1, a=a, b=b, ra=ra, rb=rb):
            rest = [c for c in range(n) if c not in (a, b)]
            chance = tree.add(Node(Player.CHANCE, actions=tuple(str(c) for c in rest),
                                   probs=tuple([1.0 / len(rest)] * len(rest))))
            subs = []
            for c in rest:
                rc = deck[c]

                def key2(p, h, rc=rc):
                    return f"P{p + 1}:{(ra, rb)[p]}:{rc}:{hist1}/{h}"

                def showdown(contrib2, _h, rc=rc):
                    w = leduc_showdown(ra, rb, rc)
                    return _terminal(tree, contrib2[1] if w > 0 else (-contrib2[0] if w < 0 else 0.0))

                subs.append(_betting_round(tree, r2, contrib, key2, showdown, fold))
            tree.nodes[chance].children = subs
            return chance

        kids.append(_betting_round(tree, r1, [1.0, 1.0], key1, after_round1, fold))
    tree.nodes[root].children = kids
    tree.validate()
    return tree


GAMES: dict[str, Callable[[], GameTree]] = {
    "kuhn": build_kuhn,
    "leduc2": lambda: build_leduc(2),
    "leduc3": lambda: build_leduc(3),
    "leduc5": lambda: build_leduc(5),
    "matching_pennies": build_matching_pennies,
    "fig1": build_fig1_zero_sum,
}


def make_game(name: str) -> GameTree:
    try:
        return GAMES[name]()
    except KeyError:
        raise ValueError(f"unknown game {name!r}; choose from {sorted(GAMES)}") from None


def expected_payoff(tree: GameTree, sigma1: dict, sigma2: dict) -> float:
    """Expected payoff to P1 by direct tree walk. ``sigma`` maps infoset
    labels to action-probability sequences."""
    sigmas = (sigma1, sigma2)

    def walk(k: int) -> float:
        nd = tree.nodes[k]
        if nd.player == Player.TERMINAL:
            return nd.payoff
        probs = nd.probs if nd.player == Player.CHANCE else sigmas[nd.player][nd.infoset]
        return sum(p * walk(c) for p, c in zip(probs, nd.children) if p != 0.0)

    return walk(tree.root)


def count_stats(tree: GameTree) -> dict[str, int]:
    stats = {"nodes": len(tree), "terminals": 0, "chance": 0}
    for nd in tree.nodes:
        if nd.player == Player.TERMINAL:
            stats["terminals"] += 1
        elif nd.player == Player.CHANCE:
            stats["chance"] += 1
    for p in (Player.P1, Player.P2):
        isets = tree.infosets(p)
        stats[f"infosets_p{p + 1}"] = len(isets)
        stats[f"sequences_p{p + 1}"] = sum(len(tree.nodes[m[0]].actions) for m in isets.values())
    return stats
