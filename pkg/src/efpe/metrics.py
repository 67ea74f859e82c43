"""Convergence and refinement metrics for sequence-form profiles."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .game import Player
from .sequence_form import SequenceFormProblem, TraversalCounter, apply_A, apply_At
from .treeplex import best_response, best_values, sequence_to_behavioral, strategy_values, validate_point

FEAS_TOL_MSG = "profile is not a valid sequence-form strategy"


@dataclass
class InfosetRegret:
    label: str
    reach: float  # opponent x chance reach mass
    regret: float
    fallback: bool = False  # zero reach: uniform node weights were used


@dataclass
class ProfileMetrics:
    traversals: int
    nash_gap: float
    max_infoset_regret: float
    table: list[InfosetRegret] = field(default_factory=list)


def saddle_gap(p: SequenceFormProblem, x, y, xi: float = 0.0, *, Ay=None, Atx=None,
               counter: TraversalCounter | None = None) -> float:
    """``max_{Y^xi} <x, A y'> - min_{X^xi} <x', A y>``."""
    Ay = apply_A(p, y, counter) if Ay is None else Ay
    Atx = apply_At(p, x, counter) if Atx is None else Atx
    best_y, _ = best_response(p.Y, Atx, xi)
    best_x, _ = best_response(p.X, -Ay, xi)
    return best_y + best_x


def nash_gap(p: SequenceFormProblem, x, y, *, Ay=None, Atx=None,
             counter: TraversalCounter | None = None) -> float:
    """Sum of both players' best-response improvements in the unperturbed
    game."""
    if not (validate_point(p.X, x) and validate_point(p.Y, y)):
        raise ValueError(FEAS_TOL_MSG)
    return saddle_gap(p, x, y, 0.0, Ay=Ay, Atx=Atx, counter=counter)


def _opponent_full(q: np.ndarray) -> np.ndarray:
    # prepend the empty sequence
    return np.concatenate([[1.0], q])


def infoset_regrets(p: SequenceFormProblem, x, y, player: int, *, Ay=None, Atx=None) -> list[InfosetRegret]:
    """Regret at every infoset of ``player`` when it is reached for sure,
    with Bayes node beliefs and a best response throughout its subtree."""
    t = p.treeplex(player)
    own = np.asarray(x if player == 0 else y, dtype=float)
    opp = np.asarray(y if player == 0 else x, dtype=float)
    # counterfactual utility per own sequence, payoff to ``player``
    if player == 0:
        g = -(p.A @ opp) if Ay is None else -Ay
    else:
        g = p.At @ opp if Atx is None else Atx
    b, _ = sequence_to_behavioral(t, own)
    cur = strategy_values(t, g, b)
    best = best_values(t, g)
    reach = p.reach[player] @ _opponent_full(opp)

    table = []
    zero = []
    for j in range(t.num_simplexes):
        if reach[j] > 0.0:
            r = (best[j] - cur[j]) / reach[j]
            table.append(InfosetRegret(t.labels[j], float(reach[j]), float(r)))
        else:
            table.append(None)
            zero.append(j)
    if zero:
        for j, r in zip(zero, _fallback_regrets(p, own, opp, player, zero)):
            table[j] = InfosetRegret(t.labels[j], 0.0, r, fallback=True)
    return table


def _fallback_regrets(p: SequenceFormProblem, own, opp, player: int, simplexes: list[int]) -> list[float]:
    """Regrets at zero-reach infosets with uniform node weights.

    Walks the subtree below each node of the infoset, accumulating the
    counterfactual utility of each own sequence with the opponent and chance
    reach reset to ``1 / |infoset|`` at the infoset.
    """
    g_tree = p.game
    t = p.treeplex(player)
    opp_t = p.treeplex(1 - player)
    opp_b, _ = sequence_to_behavioral(opp_t, opp)
    own_b, _ = sequence_to_behavioral(t, own)
    sign = 1.0 if player == 0 else -1.0
    out = []
    for j in simplexes:
        nodes = p.nodes_of[player][j]
        util = np.zeros(t.n)
        w0 = 1.0 / len(nodes)
        stack = [(k, w0, p.node_seq[k][player] - 1) for k in nodes]
        while stack:
            k, w, seq = stack.pop()
            nd = g_tree.nodes[k]
            if nd.player == Player.TERMINAL:
                if seq >= 0:
                    util[seq] += w * sign * nd.payoff
                continue
            if nd.player == Player.CHANCE:
                stack.extend((c, w * pr, seq) for pr, c in zip(nd.probs, nd.children))
                continue
            jj = p.simplex_of[int(nd.player)][nd.infoset]
            tp = t if nd.player == player else opp_t
            first = tp.start[jj]
            for a, c in enumerate(nd.children):
                if nd.player == player:
                    stack.append((c, w, first + a))
                else:
                    pr = opp_b[first + a]
                    if pr > 0.0:
                        stack.append((c, w * pr, seq))
        members = t.subtree(j)
        mask = np.zeros(t.n, dtype=bool)
        for m in members:
            mask[t.start[m]: t.start[m] + t.size[m]] = True
        util = np.where(mask, util, 0.0)
        cur = strategy_values(t, util, own_b)[j]
        best = best_values(t, util)[j]
        out.append(float(best - cur))
    return out


def infoset_max_regret(p: SequenceFormProblem, x, y, player: int | None = None, **kw) -> tuple[float, list[InfosetRegret]]:
    """Largest per-infoset regret (over one player, or both if ``None``)."""
    players = (0, 1) if player is None else (player,)
    table = [row for pl in players for row in infoset_regrets(p, x, y, pl, **kw)]
    return max(r.regret for r in table), table


def profile_metrics(p: SequenceFormProblem, x, y, traversals: int, *, Ay=None, Atx=None) -> ProfileMetrics:
    Ay = p.A @ y if Ay is None else Ay
    Atx = p.At @ x if Atx is None else Atx
    gap = nash_gap(p, x, y, Ay=Ay, Atx=Atx)
    worst, table = infoset_max_regret(p, x, y, Ay=Ay, Atx=Atx)
    return ProfileMetrics(traversals, gap, worst, table)


def regret_table_csv(table: list[InfosetRegret]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["infoset", "reach", "regret", "fallback"])
    for r in table:
        w.writerow([r.label, repr(r.reach), repr(r.regret), int(r.fallback)])
    return buf.getvalue()
