"""Excessive gap technique for ``min_{x in X^xi} max_{y in Y^xi} <x, A y>``.

Smoothed functions use prox-normalised DGFs (minimum value 0)::

    f(x)   = max_y <x, A y> - mu2 * dY(y)
    phi(y) = min_x <x, A y> + mu1 * dX(x)

and the invariant ``f(x) <= phi(y)`` (excessive gap condition) is checked
after every step.

Each prox step ``argmax <grad d(x_breve) - s * v, x> - d(x)`` is computed
from the dual vector that produced ``x_breve`` instead of ``grad d(x_breve)``:
both differ by a vector orthogonal to the treeplex's affine hull, so the
maximiser is the same, and no logarithm of an underflowed coordinate is ever
taken.

Products with ``A`` and ``A^T`` of the iterates are carried along by
linearity; every step costs three matrix-vector products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .sequence_form import SequenceFormProblem, TraversalCounter, apply_A, apply_At, matrix_norm
from .smoothing import (
    DgfWeights,
    Smoother,
    entropy_diameter_bound,
    strong_convexity_l1,
)

GAP_TOL = 1e-7


class ExcessiveGapViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class EgtState:
    x: np.ndarray
    y: np.ndarray
    mu1: float
    mu2: float
    k: int
    Ay: np.ndarray  # A @ y
    Atx: np.ndarray  # A.T @ x


def lipschitz_mu_init(p: SequenceFormProblem, phi_x: float, phi_y: float) -> tuple[float, float]:
    """``mu1 = mu2 = ||A|| / sqrt(phi_x phi_y)`` (1 for a zero matrix)."""
    norm = matrix_norm(p)
    if norm == 0.0:
        return 1.0, 1.0
    mu = norm / math.sqrt(phi_x * phi_y)
    return mu, mu


def smoothed_values(p: SequenceFormProblem, sx: Smoother, sy: Smoother, s: EgtState) -> tuple[float, float]:
    """``(f_mu2(x), phi_mu1(y))``."""
    f = sy.prox_value(s.Atx, s.mu2)
    phi = -sx.prox_value(-s.Ay, s.mu1)
    return f, phi


class EGT:
    """EGT over a sequence-form problem with perturbed dilated entropy.

    ``weights_*`` carry the DGF scale ``gamma``; ``moduli`` are the strong
    convexity moduli used for the initial smoothing. By default they are the
    l1 moduli of the *unscaled* weights, so ``gamma`` shrinks the effective
    smoothing (``gamma = 1`` is the theory-sound setting).
    """

    def __init__(
        self,
        p: SequenceFormProblem,
        weights_x: DgfWeights,
        weights_y: DgfWeights,
        xi: float = 0.0,
        *,
        moduli: tuple[float, float] | None = None,
        check_gap: bool = True,
        counter: TraversalCounter | None = None,
        smoothers: tuple[Smoother, Smoother] | None = None,
    ):
        self.p = p
        self.xi = xi
        if smoothers is None:
            smoothers = (Smoother(p.X, weights_x, xi), Smoother(p.Y, weights_y, xi))
        self.sx, self.sy = smoothers
        if moduli is None:
            moduli = (
                strong_convexity_l1(p.X, weights_x.scaled(1.0)),
                strong_convexity_l1(p.Y, weights_y.scaled(1.0)),
            )
        self.moduli = moduli
        self.check_gap = check_gap
        self.counter = counter if counter is not None else TraversalCounter()

    def _A(self, y):
        return apply_A(self.p, y, self.counter)

    def _At(self, x):
        return apply_At(self.p, x, self.counter)

    def init(self) -> EgtState:
        mu1, mu2 = lipschitz_mu_init(self.p, *self.moduli)
        x_bar = self.sx.center
        _, y0 = self.sy.best_response(self._At(x_bar), mu2)
        Ay0 = self._A(y0)
        # grad dX(x_bar) is orthogonal to the affine hull at the prox centre
        _, x0 = self.sx.best_response(-Ay0 / mu1, 1.0)
        state = EgtState(x0, y0, mu1, mu2, 0, Ay0, self._At(x0))
        self._check(state, "initialisation")
        return state

    def _check(self, s: EgtState, where: str) -> None:
        if not self.check_gap:
            return
        f, phi = smoothed_values(self.p, self.sx, self.sy, s)
        if f > phi + GAP_TOL * max(1.0, abs(f), abs(phi)):
            raise ExcessiveGapViolation(
                f"excessive gap condition fails after {where}: f={f!r} > phi={phi!r}")

    def step(self, s: EgtState, focus: Literal["x", "y"] | None = None) -> EgtState:
        if focus is None:
            focus = "x" if s.k % 2 == 0 else "y"
        tau = 2.0 / (s.k + 3)
        if focus == "x":
            new = self._shrink_x(s, tau)
        else:
            new = self._shrink_y(s, tau)
        self._check(new, f"step {s.k} ({focus})")
        return new

    def _shrink_x(self, s: EgtState, tau: float) -> EgtState:
        dual = -s.Ay / s.mu1
        _, x_br = self.sx.best_response(dual, 1.0)
        Atx_hat = (1 - tau) * s.Atx + tau * self._At(x_br)
        _, y_hat = self.sy.best_response(Atx_hat / s.mu2, 1.0)
        Ay_hat = self._A(y_hat)
        _, x_tilde = self.sx.best_response(dual - tau / ((1 - tau) * s.mu1) * Ay_hat, 1.0)
        x_new = (1 - tau) * s.x + tau * x_tilde
        return EgtState(
            x=x_new,
            y=(1 - tau) * s.y + tau * y_hat,
            mu1=(1 - tau) * s.mu1,
            mu2=s.mu2,
            k=s.k + 1,
            Ay=(1 - tau) * s.Ay + tau * Ay_hat,
            Atx=(1 - tau) * s.Atx + tau * self._At(x_tilde),
        )

    def _shrink_y(self, s: EgtState, tau: float) -> EgtState:
        dual = s.Atx / s.mu2
        _, y_br = self.sy.best_response(dual, 1.0)
        Ay_hat = (1 - tau) * s.Ay + tau * self._A(y_br)
        _, x_hat = self.sx.best_response(-Ay_hat / s.mu1, 1.0)
        Atx_hat = self._At(x_hat)
        _, y_tilde = self.sy.best_response(dual + tau / ((1 - tau) * s.mu2) * Atx_hat, 1.0)
        y_new = (1 - tau) * s.y + tau * y_tilde
        return EgtState(
            x=(1 - tau) * s.x + tau * x_hat,
            y=y_new,
            mu1=s.mu1,
            mu2=(1 - tau) * s.mu2,
            k=s.k + 1,
            Ay=(1 - tau) * s.Ay + tau * self._A(y_tilde),
            Atx=(1 - tau) * s.Atx + tau * Atx_hat,
        )


def theoretical_gap_bound(p: SequenceFormProblem, T: int) -> float:
    """``4 ||A|| / (T+1) * sqrt(Omega_X Omega_Y / (phi_X phi_Y))`` with the
    entropy-diameter estimate of ``Omega / phi``."""
    return 4.0 * matrix_norm(p) / (T + 1) * math.sqrt(
        entropy_diameter_bound(p.X) * entropy_diameter_bound(p.Y))


def iteration_bound(p: SequenceFormProblem, eps: float) -> float:
    """Iterations sufficient for an ``eps``-accurate solution."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    X, Y = p.X, p.Y
    m = max(X.max_simplex_size, Y.max_simplex_size)
    return (matrix_norm(p) * math.sqrt(X.max_l1**2 * 2.0 ** (X.depth_q + 2)
                                       * Y.max_l1**2 * 2.0 ** (Y.depth_q + 2)) * math.log(m)) / eps
