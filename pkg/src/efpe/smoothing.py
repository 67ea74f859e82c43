"""Dilated entropy distance-generating function over xi-perturbed treeplexes.

Each simplex ``j`` contributes ``beta_j * q_p * h(phi(q^j / q_p))`` where
``h`` is the negative entropy and ``phi(u) = (u - xi) / (1 - n_j xi)`` maps
the perturbed simplex onto the standard one. Weights are ``gamma * beta_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp, softmax

from . import _kernels
from .treeplex import ROOT, Treeplex, _parent_mass, subtree_max_l1_cutoff


class InfeasiblePerturbation(ValueError):
    pass


class DomainError(ValueError):
    """Point on (or outside) the boundary where the DGF is not smooth."""


class WeightScheme(str, Enum):
    RECURRENCE = "recurrence"
    CONVERGENCE = "convergence"


@dataclass(frozen=True)
class DgfWeights:
    beta: np.ndarray  # raw per-simplex weights, before gamma
    scheme: WeightScheme
    gamma: float = 1.0
    alpha: np.ndarray | None = None  # recurrence values, RECURRENCE only

    @property
    def effective(self) -> np.ndarray:
        return self.gamma * self.beta

    def scaled(self, gamma: float) -> "DgfWeights":
        if gamma <= 0:
            raise ValueError("gamma must be > 0")
        return DgfWeights(self.beta, self.scheme, gamma, self.alpha)

    def dumps(self) -> str:
        lines = [f"# scheme={self.scheme.value} gamma={self.gamma!r}"]
        lines += [f"{j} {float(b)!r}" for j, b in enumerate(self.beta)]
        return "\n".join(lines) + "\n"


def check_xi(t: Treeplex, xi: float) -> None:
    if xi < 0:
        raise InfeasiblePerturbation(f"xi={xi} is negative")
    if t.num_simplexes and xi * t.max_simplex_size >= 1.0:
        raise InfeasiblePerturbation(
            f"xi={xi} leaves no room on a simplex of size {t.max_simplex_size} (need n*xi < 1)")


# --- single simplex ---------------------------------------------------------


def perturb_map(q, xi: float) -> np.ndarray:
    """``Delta_n^xi -> Delta_n``."""
    q = np.asarray(q, dtype=float)
    c = 1.0 - len(q) * xi
    if c <= 0:
        raise InfeasiblePerturbation(f"n*xi = {len(q) * xi} >= 1")
    return (q - xi) / c


def unperturb_map(q, xi: float) -> np.ndarray:
    """``Delta_n -> Delta_n^xi``."""
    q = np.asarray(q, dtype=float)
    c = 1.0 - len(q) * xi
    if c <= 0:
        raise InfeasiblePerturbation(f"n*xi = {len(q) * xi} >= 1")
    return c * q + xi


def entropy_value(q) -> float:
    q = np.asarray(q, dtype=float)
    pos = q > 0
    return float(np.sum(q[pos] * np.log(q[pos])))


def entropy_grad(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if (q <= 0).any():
        raise DomainError("entropy gradient undefined at a zero coordinate")
    return 1.0 + np.log(q)


def perturbed_simplex_conjugate(g, xi: float) -> tuple[float, np.ndarray]:
    """Value and argmax of ``<g, q> - h(phi(q))`` over ``Delta_n^xi``."""
    g = np.asarray(g, dtype=float)
    c = 1.0 - len(g) * xi
    if c <= 0:
        raise InfeasiblePerturbation(f"n*xi = {len(g) * xi} >= 1")
    value = float(logsumexp(c * g)) + xi * float(g.sum())
    return value, c * softmax(c * g) + xi


# --- weights ----------------------------------------------------------------


def compute_weights(t: Treeplex, scheme: WeightScheme | str = WeightScheme.RECURRENCE,
                    gamma: float = 1.0) -> DgfWeights:
    scheme = WeightScheme(scheme)
    m = t.num_simplexes
    beta = np.zeros(m)
    if scheme is WeightScheme.RECURRENCE:
        alpha = np.zeros(m)
        # children have larger ids
        for j in reversed(range(m)):
            best = 0.0
            for i in t._range(j):
                s = sum(alpha[k] * beta[k] / (beta[k] - alpha[k]) for k in t.children[i])
                best = max(best, s)
            alpha[j] = 1.0 + best
            beta[j] = alpha[j] if t.parent[j] == ROOT else 2.0 * alpha[j]
        return DgfWeights(beta, scheme, gamma, alpha)
    for j in range(m):
        d = int(t.depth[j])
        beta[j] = 2.0 + sum(2.0**r * (subtree_max_l1_cutoff(t, j, r) - 1.0) for r in range(1, d + 1))
    return DgfWeights(beta, scheme, gamma)


def strong_convexity_l1(t: Treeplex, w: DgfWeights) -> float:
    """l1 strong-convexity modulus of the dilated entropy with weights ``w``:
    ``gamma / M_Q`` for both schemes."""
    return w.gamma / t.max_l1


def entropy_diameter_bound(t: Treeplex) -> float:
    """Upper bound ``M_Q^2 2^(d_Q+2) log m`` on diameter over modulus."""
    m = t.max_simplex_size
    return t.max_l1**2 * 2.0 ** (t.depth_q + 2) * math.log(m) if m > 1 else 0.0


# --- treeplex DGF -----------------------------------------------------------


def _local(t: Treeplex, q: np.ndarray, xi: float):
    pm = _parent_mass(q, t.seq_parent)
    c = 1.0 - t.size[t.seq_simplex] * xi
    return pm, c


def treeplex_dgf_value(t: Treeplex, q, w: DgfWeights, xi: float = 0.0) -> float:
    q = np.asarray(q, dtype=float)
    pm, c = _local(t, q, xi)
    if (pm <= 0).any():
        raise DomainError("parent mass must be positive")
    u = (q / pm - xi) / c
    if (u < 0).any():
        raise DomainError("point outside the perturbed treeplex")
    ent = np.where(u > 0, u * np.log(np.where(u > 0, u, 1.0)), 0.0)
    return float(np.sum(w.effective[t.seq_simplex] * pm * ent))


def treeplex_dgf_grad(t: Treeplex, q, w: DgfWeights, xi: float = 0.0) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    pm, c = _local(t, q, xi)
    if (q - xi * pm <= 0).any() or (pm <= 0).any():
        raise DomainError("gradient requires a point strictly inside the perturbed treeplex")
    beta = w.effective[t.seq_simplex]
    u = q / pm
    phi = (u - xi) / c
    logphi = np.log(phi)
    grad = beta * (1.0 + logphi) / c
    # derivative through the parent mass
    through_parent = beta * (phi * logphi - u * (1.0 + logphi) / c)
    nonroot = t.seq_parent != ROOT
    np.add.at(grad, t.seq_parent[nonroot], through_parent[nonroot])
    return grad


def hessian_quadratic(t: Treeplex, q, h, w: DgfWeights, xi: float = 0.0) -> float:
    """``h^T (Hessian of the DGF at q) h`` in closed form."""
    q = np.asarray(q, dtype=float)
    h = np.asarray(h, dtype=float)
    pm, c = _local(t, q, xi)
    gap = q - xi * pm
    if (gap <= 0).any() or (pm <= 0).any():
        raise DomainError("Hessian requires a point strictly inside the perturbed treeplex")
    beta = w.effective[t.seq_simplex]
    hp = np.where(t.seq_parent == ROOT, 0.0, h[np.maximum(t.seq_parent, 0)])
    inner = h**2 / q + hp**2 * q / pm**2 - 2.0 * h * hp / pm
    return float(np.sum(beta * q * inner / (c * gap)))


def smoothed_best_response(t: Treeplex, g, w: DgfWeights, xi: float, mu: float) -> tuple[float, np.ndarray]:
    """``max_{q in Q^xi} <g, q> - mu * d(q)`` and its maximiser."""
    if mu <= 0:
        raise ValueError("mu must be > 0")
    g = np.ascontiguousarray(g, dtype=float)
    if g.shape != (t.n,):
        raise ValueError(f"gradient has shape {g.shape}, treeplex dimension is {t.n}")
    q = np.empty(t.n)
    value = _kernels.smoothed_br(g, t.start, t.size, t.parent, np.ascontiguousarray(w.effective),
                                 float(xi), float(mu), q)
    return float(value), q


class Smoother:
    """Bundles a treeplex, weights and xi for the solver."""

    def __init__(self, t: Treeplex, w: DgfWeights, xi: float = 0.0):
        check_xi(t, xi)
        self.t = t
        self.w = w
        self.xi = xi
        self._beta = np.ascontiguousarray(w.effective)
        self.center_value, self.center = self.best_response(np.zeros(t.n), 1.0)

    def best_response(self, g, mu: float) -> tuple[float, np.ndarray]:
        if mu <= 0:
            raise ValueError("mu must be > 0")
        t = self.t
        q = np.empty(t.n)
        value = _kernels.smoothed_br(np.ascontiguousarray(g, dtype=float), t.start, t.size, t.parent,
                                     self._beta, float(self.xi), float(mu), q)
        return float(value), q

    def prox_value(self, g, mu: float) -> float:
        """``max <g,q> - mu (d(q) - min d)``."""
        v, _ = self.best_response(g, mu)
        return v - mu * self.center_value
