"""Treeplex (sequence-form polytope) structure and the linear/structural
operations on it.

A treeplex over ``n`` sequences is a forest of simplexes. Simplex ``j`` owns
a contiguous block of sequence indices and hangs below a parent sequence
``parent[j]`` (``ROOT`` = -1 means the parent mass is fixed to 1). Points are
plain float arrays of length ``n``.

Most operations walk the forest level by level; every level is processed with
vectorised segment reductions, so the per-call Python overhead is
proportional to the depth of the forest rather than to its size.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

ROOT = -1

SUM_TOL = 1e-9
BOUND_TOL = 1e-12


class StructuralError(ValueError):
    """Malformed treeplex or game structure."""


@dataclass(frozen=True)
class SimplexSpec:
    """Descriptor used to build a treeplex.

    ``parent`` is the global index of the branching sequence (``None`` for a
    root simplex). ``start`` fixes the first sequence index; when omitted the
    simplexes are laid out consecutively in the given order.
    """

    size: int
    parent: int | None = None
    start: int | None = None
    label: str | None = None


@dataclass(frozen=True)
class SimplexInfo:
    id: int
    start: int
    size: int
    parent: int
    children: tuple[tuple[int, ...], ...]
    depth: int
    branchings: int
    label: str | None = None

    @property
    def indices(self) -> range:
        return range(self.start, self.start + self.size)

    @property
    def is_root(self) -> bool:
        return self.parent == ROOT


@dataclass(frozen=True)
class _Level:
    """A batch of simplexes processed together."""

    simplexes: np.ndarray  # simplex ids
    idx: np.ndarray  # concatenated sequence indices
    offsets: np.ndarray  # segment starts into idx
    owner: np.ndarray  # for each entry of idx, the local simplex position
    parents: np.ndarray  # parent sequence per simplex (ROOT allowed)
    sizes: np.ndarray


class Treeplex:
    """Immutable treeplex. Build with :func:`build_treeplex`."""

    def __init__(self, n, start, size, parent, labels=None):
        self.n = int(n)
        self.start = np.asarray(start, dtype=np.int64)
        self.size = np.asarray(size, dtype=np.int64)
        self.parent = np.asarray(parent, dtype=np.int64)
        self.labels = list(labels) if labels is not None else [None] * len(self.start)
        for arr in (self.start, self.size, self.parent):
            arr.setflags(write=False)

        m = len(self.start)
        self.seq_simplex = np.empty(self.n, dtype=np.int64)
        for j in range(m):
            self.seq_simplex[self.start[j] : self.start[j] + self.size[j]] = j
        self.seq_parent = self.parent[self.seq_simplex]
        self.seq_simplex.setflags(write=False)
        self.seq_parent.setflags(write=False)

        children: list[list[int]] = [[] for _ in range(self.n)]
        for j in range(m):
            if self.parent[j] != ROOT:
                children[self.parent[j]].append(j)
        self.children = tuple(tuple(c) for c in children)

        self.branchings = np.zeros(m, dtype=np.int64)
        for j in range(m):
            if self.parent[j] != ROOT:
                self.branchings[j] = self.branchings[self.seq_simplex[self.parent[j]]] + 1
        self.depth = np.zeros(m, dtype=np.int64)
        for j in reversed(range(m)):
            kids = [k for i in self._range(j) for k in self.children[i]]
            if kids:
                self.depth[j] = 1 + max(self.depth[k] for k in kids)
        roots = [j for j in range(m) if self.parent[j] == ROOT]
        self.depth_q = int(max((self.depth[j] for j in roots), default=0))
        self.roots = np.asarray(roots, dtype=np.int64)

    def _range(self, j: int) -> range:
        return range(int(self.start[j]), int(self.start[j] + self.size[j]))

    @property
    def num_simplexes(self) -> int:
        return len(self.start)

    @property
    def max_simplex_size(self) -> int:
        return int(self.size.max()) if len(self.size) else 0

    @cached_property
    def simplexes(self) -> tuple[SimplexInfo, ...]:
        return tuple(
            SimplexInfo(
                id=j,
                start=int(self.start[j]),
                size=int(self.size[j]),
                parent=int(self.parent[j]),
                children=tuple(self.children[i] for i in self._range(j)),
                depth=int(self.depth[j]),
                branchings=int(self.branchings[j]),
                label=self.labels[j],
            )
            for j in range(self.num_simplexes)
        )

    def subtree(self, j: int) -> list[int]:
        """Simplex ids of the treeplex rooted at ``j`` (``j`` first)."""
        out = [j]
        stack = [j]
        while stack:
            k = stack.pop()
            for i in self._range(k):
                for c in self.children[i]:
                    out.append(c)
                    stack.append(c)
        return out

    def _make_levels(self, key: np.ndarray) -> tuple[_Level, ...]:
        levels = []
        for value in np.unique(key):
            ids = np.flatnonzero(key == value)
            sizes = self.size[ids]
            idx = np.concatenate([np.arange(self.start[j], self.start[j] + self.size[j]) for j in ids])
            offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
            owner = np.repeat(np.arange(len(ids)), sizes)
            levels.append(_Level(ids, idx, offsets, owner, self.parent[ids], sizes))
        return tuple(levels)

    @cached_property
    def bottom_up(self) -> tuple[_Level, ...]:
        """Levels ordered leaves first (grouped by ``d_j``)."""
        return self._make_levels(self.depth)

    @cached_property
    def top_down(self) -> tuple[_Level, ...]:
        """Levels ordered roots first (grouped by ``b_Q^j``)."""
        return self._make_levels(self.branchings)

    @cached_property
    def max_l1(self) -> float:
        return max_l1(self)

    def __repr__(self) -> str:
        return f"Treeplex(n={self.n}, simplexes={self.num_simplexes}, depth={self.depth_q})"


def build_treeplex(specs: Sequence[SimplexSpec | tuple]) -> Treeplex:
    """Build and validate a treeplex from simplex descriptors.

    Descriptors may be :class:`SimplexSpec` or ``(size, parent)`` /
    ``(size, parent, start)`` tuples. Simplex ids are reassigned in
    topological order (parents before children).
    """
    specs = [s if isinstance(s, SimplexSpec) else SimplexSpec(*s) for s in specs]
    if not specs:
        return Treeplex(0, [], [], [])
    if any(s.size < 1 for s in specs):
        raise StructuralError("simplex sizes must be >= 1")

    explicit = [s.start is not None for s in specs]
    if any(explicit) and not all(explicit):
        raise StructuralError("either all or none of the descriptors may fix a start index")
    starts = []
    pos = 0
    for s in specs:
        starts.append(s.start if s.start is not None else pos)
        pos += s.size
    n = sum(s.size for s in specs)

    owner = np.full(n, -1, dtype=np.int64)
    for k, (s, st) in enumerate(zip(specs, starts)):
        if st < 0 or st + s.size > n:
            raise StructuralError(f"simplex {k} index range [{st}, {st + s.size}) outside 0..{n - 1}")
        block = owner[st : st + s.size]
        if (block != -1).any():
            raise StructuralError(f"simplex {k} overlaps another simplex's index range")
        block[:] = k

    parent_simplex = []
    for k, s in enumerate(specs):
        if s.parent is None or s.parent == ROOT:
            parent_simplex.append(None)
            continue
        if not 0 <= s.parent < n:
            raise StructuralError(f"simplex {k} has parent sequence {s.parent} outside 0..{n - 1}")
        parent_simplex.append(int(owner[s.parent]))

    # stable topological order (Kahn, smallest descriptor first); a cycle
    # leaves some simplex unplaced
    indegree = [0 if ps is None else 1 for ps in parent_simplex]
    kids: list[list[int]] = [[] for _ in specs]
    for k, ps in enumerate(parent_simplex):
        if ps is not None:
            kids[ps].append(k)
    ready = [k for k in range(len(specs)) if indegree[k] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        k = heapq.heappop(ready)
        order.append(k)
        for c in kids[k]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(ready, c)
    if len(order) < len(specs):
        bad = sorted(set(range(len(specs))) - set(order))
        raise StructuralError(f"cycle in branching links involving simplexes {bad}")

    return Treeplex(
        n,
        [starts[k] for k in order],
        [specs[k].size for k in order],
        [ROOT if parent_simplex[k] is None else specs[k].parent for k in order],
        [specs[k].label for k in order],
    )


def _parent_mass(q: np.ndarray, parents: np.ndarray) -> np.ndarray:
    return np.where(parents == ROOT, 1.0, q[np.maximum(parents, 0)])


def validate_point(t: Treeplex, q, xi: float = 0.0) -> bool:
    """Whether ``q`` lies in the ``xi``-perturbed treeplex."""
    q = np.asarray(q, dtype=float)
    if q.shape != (t.n,):
        raise ValueError(f"point has shape {q.shape}, treeplex dimension is {t.n}")
    if t.n == 0:
        return True
    if not np.all(np.isfinite(q)) or (q < 0).any():
        return False
    sums = np.add.reduceat(q, t.start) if t.num_simplexes else np.zeros(0)
    pm = _parent_mass(q, t.parent)
    if np.abs(sums - pm).max() > SUM_TOL:
        return False
    lower = xi * _parent_mass(q, t.seq_parent)
    return bool((q >= lower - BOUND_TOL).all())


def max_l1(t: Treeplex) -> float:
    """``max ||q||_1`` over the treeplex, exact by bottom-up DP."""
    return max_l1_cutoff(t, None)


def _cutoff_values(t: Treeplex, r: int | None, relative_to: np.ndarray | None = None) -> np.ndarray:
    value = np.zeros(t.num_simplexes)
    for j in reversed(range(t.num_simplexes)):
        b = t.branchings[j] if relative_to is None else t.branchings[j] - relative_to[j]
        if r is not None and b > r:
            continue
        best = 0.0
        for i in t._range(j):
            best = max(best, sum(value[k] for k in t.children[i]))
        value[j] = 1.0 + best
    return value


def max_l1_cutoff(t: Treeplex, r: int | None) -> float:
    """``M_{Q,r}``: max l1 mass counting only simplexes with at most ``r``
    branching operations above them. ``r=None`` means no cutoff."""
    if r is not None and r < 0:
        raise ValueError("r must be >= 0")
    value = _cutoff_values(t, r)
    return float(value[t.roots].sum())


def subtree_max_l1_cutoff(t: Treeplex, j: int, r: int) -> float:
    """``M_{Q_j,r}`` for the treeplex rooted at simplex ``j``."""
    members = t.subtree(j)
    rel = np.zeros(t.num_simplexes, dtype=np.int64)
    rel[members] = t.branchings[j]
    mask = np.zeros(t.num_simplexes, dtype=bool)
    mask[members] = True
    value = _cutoff_values(t, r, relative_to=np.where(mask, rel, -(10**9)))
    return float(value[j])


# --- linear operations over the treeplex -----------------------------------


def behavioral_to_sequence(t: Treeplex, b: np.ndarray) -> np.ndarray:
    """Push a behavioral strategy (per-sequence local probabilities) to
    sequence form."""
    q = np.empty(t.n)
    for lv in t.top_down:
        pm = _parent_mass(q, lv.parents)
        q[lv.idx] = b[lv.idx] * pm[lv.owner]
    return q


def sequence_to_behavioral(t: Treeplex, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local action probabilities; simplexes with zero parent mass fall back
    to uniform. Returns ``(b, undefined_mask_per_simplex)``."""
    q = np.asarray(q, dtype=float)
    b = np.empty(t.n)
    pm = _parent_mass(q, t.parent)
    undefined = pm <= 0.0
    sizes = t.size.astype(float)
    pm_seq = pm[t.seq_simplex]
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(undefined[t.seq_simplex], 1.0 / sizes[t.seq_simplex], q / pm_seq)
    return b, undefined


def uniform_point(t: Treeplex) -> np.ndarray:
    return behavioral_to_sequence(t, 1.0 / t.size[t.seq_simplex].astype(float))


def best_response(t: Treeplex, g: np.ndarray, xi: float = 0.0) -> tuple[float, np.ndarray]:
    """Maximise ``<g, q>`` over the ``xi``-perturbed treeplex.

    Returns the optimal value and a maximising vertex of ``Q^xi``
    (every non-chosen action gets exactly ``xi`` of its parent's mass).
    """
    g = np.array(g, dtype=float, copy=True)
    b = np.empty(t.n)
    total = 0.0
    for lv in t.bottom_up:
        u = g[lv.idx]
        best = np.maximum.reduceat(u, lv.offsets)
        scale = 1.0 - lv.sizes * xi
        value = scale * best + xi * np.add.reduceat(u, lv.offsets)
        # argmax per segment: first position attaining the max
        pos = np.flatnonzero(u == best[lv.owner])
        first_pos = np.full(len(lv.simplexes), len(u))
        np.minimum.at(first_pos, lv.owner[pos], pos)
        local = np.full(len(u), xi)
        local[first_pos] += scale
        b[lv.idx] = local
        nonroot = lv.parents != ROOT
        np.add.at(g, lv.parents[nonroot], value[nonroot])
        total += value[~nonroot].sum()
    return float(total), behavioral_to_sequence(t, b)


def strategy_values(t: Treeplex, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-simplex value of following behavioral ``b`` below each simplex,
    with ``g`` the per-sequence immediate (counterfactual) payoffs."""
    g = np.array(g, dtype=float, copy=True)
    value = np.zeros(t.num_simplexes)
    for lv in t.bottom_up:
        v = np.add.reduceat(b[lv.idx] * g[lv.idx], lv.offsets)
        value[lv.simplexes] = v
        nonroot = lv.parents != ROOT
        np.add.at(g, lv.parents[nonroot], v[nonroot])
    return value


def best_values(t: Treeplex, g: np.ndarray) -> np.ndarray:
    """Per-simplex value of best-responding below each simplex."""
    g = np.array(g, dtype=float, copy=True)
    value = np.zeros(t.num_simplexes)
    for lv in t.bottom_up:
        v = np.maximum.reduceat(g[lv.idx], lv.offsets)
        value[lv.simplexes] = v
        nonroot = lv.parents != ROOT
        np.add.at(g, lv.parents[nonroot], v[nonroot])
    return value


def enumerate_vertices(t: Treeplex) -> Iterable[np.ndarray]:
    """All pure strategies (vertices) of the unperturbed treeplex.

    Exponential; meant for small treeplexes and tests.
    """

    def expand(active: list[int]):
        # active: simplexes that must choose an action
        if not active:
            yield []
            return
        j, rest = active[0], active[1:]
        for i in t._range(j):
            for tail in expand(list(t.children[i]) + rest):
                yield [i] + tail

    for chosen in expand(list(t.roots)):
        q = np.zeros(t.n)
        q[chosen] = 1.0
        yield q


# --- text format -------------------------------------------------------------


def dumps(t: Treeplex) -> str:
    """Line format: header ``n <n>``, then ``j parent size children`` per
    simplex where children is ``seq:k,seq:k`` (or ``-``)."""
    if t.num_simplexes and not (np.diff(t.start) == t.size[:-1]).all():
        raise StructuralError("text format needs simplex ranges laid out in id order")
    lines = [f"n {t.n}"]
    for s in t.simplexes:
        kids = [f"{i}:{k}" for i, ks in zip(s.indices, s.children) for k in ks]
        lines.append(f"{s.id} {s.parent} {s.size} {','.join(kids) or '-'}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Treeplex:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0][0] != "n":
        raise StructuralError("missing 'n <dim>' header")
    n = int(rows[0][1])
    specs = []
    declared = {}
    for row in rows[1:]:
        j, parent, size, kids = int(row[0]), int(row[1]), int(row[2]), row[3]
        specs.append((j, SimplexSpec(size, None if parent == ROOT else parent)))
        if kids != "-":
            for item in kids.split(","):
                i, k = item.split(":")
                declared[int(k)] = int(i)
    specs.sort(key=lambda p: p[0])
    t = build_treeplex([s for _, s in specs])
    if t.n != n:
        raise StructuralError(f"header says n={n} but simplexes cover {t.n}")
    for k, i in declared.items():
        if t.parent[k] != i:
            raise StructuralError(f"child list disagrees with parent of simplex {k}")
    return t
