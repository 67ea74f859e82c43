"""Experiment harness: weight-scale tuning and CSV convergence traces."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .cfr import CfrPlus
from .egt import EGT, ExcessiveGapViolation
from .game import GAMES, make_game
from .metrics import infoset_max_regret, nash_gap, saddle_gap
from .sequence_form import SequenceFormProblem, TraversalCounter, sequence_form
from .smoothing import WeightScheme, check_xi, compute_weights

GAMMA_CANDIDATES = (1.0, 0.1, 0.05, 0.01, 0.005)
TUNE_ITERATIONS = 20
ALGORITHMS = ("egt", "cfr+")
COLUMNS = ["iteration", "traversals", "nash_gap", "max_infoset_regret",
           "saddle_gap_perturbed", "mu1", "mu2"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    game: str = "kuhn"
    algo: str = "egt"
    xi: float = 0.0
    scheme: str = "convergence"
    gamma: float | None = None  # None = tune
    budget: int = 10_000  # tree traversals
    cadence: float = 1.25  # geometric spacing of trace points, in iterations
    out: str | None = None
    seed: int = 0
    check_gap: bool = True

    def validate(self) -> None:
        if self.game not in GAMES:
            raise ConfigError(f"unknown game {self.game!r} (known: {', '.join(sorted(GAMES))})")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algo!r} (known: {', '.join(ALGORITHMS)})")
        try:
            WeightScheme(self.scheme)
        except ValueError:
            raise ConfigError(f"unknown weight scheme {self.scheme!r}") from None
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if self.cadence <= 1.0:
            raise ConfigError("cadence must be > 1")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError("gamma must be > 0")


def tune_weight_scale(p: SequenceFormProblem, scheme: str | WeightScheme = "convergence",
                      candidates=GAMMA_CANDIDATES, iterations: int = TUNE_ITERATIONS) -> float:
    """Candidate ``gamma`` with the smallest Nash gap after ``iterations``
    EGT steps at ``xi = 0``; ties go to the larger ``gamma``.

    A candidate whose run breaks the excessive gap condition is skipped.
    """
    wx, wy = compute_weights(p.X, scheme), compute_weights(p.Y, scheme)
    best = None
    for g in sorted(candidates, reverse=True):
        e = EGT(p, wx.scaled(g), wy.scaled(g), 0.0)
        try:
            s = e.init()
            for _ in range(iterations):
                s = e.step(s)
        except ExcessiveGapViolation:
            continue
        gap = nash_gap(p, s.x, s.y, Ay=s.Ay, Atx=s.Atx)
        if best is None or gap < best[0]:
            best = (gap, g)
    if best is None:
        raise ExcessiveGapViolation("every gamma candidate violated the excessive gap condition")
    return best[1]


def trace_points(budget_iters: int, cadence: float) -> list[int]:
    """Geometrically spaced iteration numbers in ``[1, budget_iters]``,
    always including the last."""
    pts = {budget_iters}
    v = 1.0
    while v < budget_iters:
        pts.add(int(math.floor(v)))
        v *= cadence
    return sorted(pts)


@dataclass
class TraceRow:
    iteration: int
    traversals: int
    nash_gap: float
    max_infoset_regret: float
    saddle_gap_perturbed: float
    mu1: float | None = None
    mu2: float | None = None

    def cells(self) -> list[str]:
        out = []
        for k in COLUMNS:
            v = getattr(self, k)
            out.append("" if v is None else (str(v) if isinstance(v, int) else repr(float(v))))
        return out


@dataclass
class RunResult:
    config: RunConfig
    gamma: float | None
    rows: list[TraceRow]
    final_profile: tuple[np.ndarray, np.ndarray]
    profiles: list[tuple[np.ndarray, np.ndarray]] | None = None

    def to_csv(self, timestamp: str | None = None) -> str:
        buf = io.StringIO()
        cfg = self.config
        meta = {
            "game": cfg.game, "algo": cfg.algo, "xi": repr(cfg.xi),
            "gamma": "" if self.gamma is None else repr(self.gamma),
            "scheme": cfg.scheme if cfg.algo == "egt" else "",
            "budget": str(cfg.budget), "seed": str(cfg.seed),
        }
        for k, v in meta.items():
            buf.write(f"# {k}={v}\n")
        if timestamp is None:
            timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        buf.write(f"# timestamp={timestamp}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()


def _measure(p, x, y, xi, Ay=None, Atx=None) -> tuple[float, float, float]:
    Ay = p.A @ y if Ay is None else Ay
    Atx = p.At @ x if Atx is None else Atx
    gap = nash_gap(p, x, y, Ay=Ay, Atx=Atx)
    reg, _ = infoset_max_regret(p, x, y, Ay=Ay, Atx=Atx)
    pert = saddle_gap(p, x, y, xi, Ay=Ay, Atx=Atx)
    return gap, reg, pert


def run(cfg: RunConfig, p: SequenceFormProblem | None = None, keep_profiles: bool = False) -> RunResult:
    """Run one configuration and return its trace (no file written)."""
    cfg.validate()
    if p is None:
        p = sequence_form(make_game(cfg.game))
    # metrics are not charged to the budget
    counter = TraversalCounter()
    rows: list[TraceRow] = []
    profiles = [] if keep_profiles else None

    if cfg.algo == "cfr+":
        if cfg.xi != 0.0:
            raise ConfigError("cfr+ solves the unperturbed game; use xi=0")
        iters = max(1, cfg.budget // 2)
        marks = set(trace_points(iters, cfg.cadence))
        solver = CfrPlus(p, counter)
        for k in range(1, iters + 1):
            solver.iterate()
            if k in marks:
                x, y = solver.average_profile()
                rows.append(TraceRow(k, counter.count, *_measure(p, x, y, 0.0)))
                if profiles is not None:
                    profiles.append((x, y))
        return RunResult(cfg, None, rows, (x, y), profiles)

    check_xi(p.X, cfg.xi)
    check_xi(p.Y, cfg.xi)
    gamma = cfg.gamma if cfg.gamma is not None else tune_weight_scale(p, cfg.scheme)
    wx = compute_weights(p.X, cfg.scheme, gamma)
    wy = compute_weights(p.Y, cfg.scheme, gamma)
    solver = EGT(p, wx, wy, cfg.xi, check_gap=cfg.check_gap, counter=counter)
    s = solver.init()
    iters = max(1, (cfg.budget - counter.count) // 3)
    marks = set(trace_points(iters, cfg.cadence))
    for k in range(1, iters + 1):
        s = solver.step(s)
        if k in marks:
            rows.append(TraceRow(k, counter.count, *_measure(p, s.x, s.y, cfg.xi, s.Ay, s.Atx),
                                 mu1=s.mu1, mu2=s.mu2))
            if profiles is not None:
                profiles.append((s.x, s.y))
    return RunResult(cfg, gamma, rows, (s.x, s.y), profiles)


def run_experiment(cfg: RunConfig, timestamp: str | None = None) -> Path | str:
    """Run ``cfg`` and write its CSV trace to ``cfg.out`` (returns the path),
    or return the CSV text when no output path is set."""
    text = run(cfg).to_csv(timestamp)
    if cfg.out is None:
        return text
    path = Path(cfg.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
