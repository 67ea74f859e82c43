"""CFR+ baseline: regret-matching+, alternating updates, linear averaging.

Counterfactual values come from one sparse product per player update, which
is the sequence-form equivalent of one tree traversal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sequence_form import SequenceFormProblem, TraversalCounter, apply_A, apply_At
from . import _kernels
from .treeplex import Treeplex, behavioral_to_sequence


def regret_matching_plus(t: Treeplex, regrets: np.ndarray) -> np.ndarray:
    """Behavioral strategy proportional to positive regrets (uniform where
    all are zero)."""
    return _kernels.regret_matching_plus(np.ascontiguousarray(regrets, dtype=float),
                                         t.start, t.size, np.empty(t.n))


def _update_regrets(t: Treeplex, regrets: np.ndarray, b: np.ndarray, g: np.ndarray) -> None:
    _kernels.cfr_plus_update(regrets, b, g, t.start, t.size, t.parent)


@dataclass
class CfrState:
    regrets: tuple[np.ndarray, np.ndarray]
    avg_num: tuple[np.ndarray, np.ndarray]  # t-weighted sequence-form sums
    t: int = 0


class CfrPlus:
    def __init__(self, p: SequenceFormProblem, counter: TraversalCounter | None = None):
        self.p = p
        self.counter = counter if counter is not None else TraversalCounter()
        self.state = CfrState(
            regrets=(np.zeros(p.X.n), np.zeros(p.Y.n)),
            avg_num=(np.zeros(p.X.n), np.zeros(p.Y.n)),
        )

    def current(self, player: int) -> tuple[np.ndarray, np.ndarray]:
        t = self.p.treeplex(player)
        b = regret_matching_plus(t, self.state.regrets[player])
        return b, _kernels.to_sequence(b, t.start, t.size, t.parent, np.empty(t.n))

    def iterate(self) -> CfrState:
        s = self.state
        s.t += 1
        p = self.p

        _, y = self.current(1)
        b1, x = self.current(0)
        # P1 maximises payoff = -A
        _update_regrets(p.X, s.regrets[0], b1, -apply_A(p, y, self.counter))
        s.avg_num[0][:] += s.t * x

        b2, y = self.current(1)
        _, x = self.current(0)
        _update_regrets(p.Y, s.regrets[1], b2, apply_At(p, x, self.counter))
        s.avg_num[1][:] += s.t * y
        return s

    def average_profile(self) -> tuple[np.ndarray, np.ndarray]:
        if self.state.t < 1:
            raise ValueError("no iterations run yet")
        out = []
        for player in (0, 1):
            t = self.p.treeplex(player)
            num = self.state.avg_num[player]
            # local normalisation; unvisited infosets fall back to uniform
            sums = np.add.reduceat(num, t.start)[t.seq_simplex]
            with np.errstate(invalid="ignore", divide="ignore"):
                b = np.where(sums > 0.0, num / sums, 1.0 / t.size[t.seq_simplex])
            out.append(behavioral_to_sequence(t, b))
        return out[0], out[1]


def cfr_plus_iterate(cfr: CfrPlus) -> CfrState:
    return cfr.iterate()


def average_profile(cfr: CfrPlus) -> tuple[np.ndarray, np.ndarray]:
    return cfr.average_profile()
