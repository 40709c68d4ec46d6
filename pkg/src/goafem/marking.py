"""Marking strategies on edges.

* :func:`mark_maximum` -- modified maximum criterion over tails.
* :func:`mark_goafem_maximum` -- the goal-oriented combination of two
  maximum-criterion sets with balanced cardinalities.
* :func:`mark_doerfler` and :func:`mark_goal_doerfler` -- bulk chasing and
  its goal-oriented variants ``MS``, ``FPZ`` and ``BET``.

Marked sets are returned as sorted ``int64`` arrays of edge ids.
"""
import heapq
import math

import numpy as np

__all__ = [
    "EmptyMesh",
    "TailCache",
    "mark_maximum",
    "mark_goafem_maximum",
    "mark_doerfler",
    "mark_goal_doerfler",
    "marking_ratio",
    "GOAL_VARIANTS",
]

GOAL_VARIANTS = ("MS", "FPZ", "BET")
_RTOL = 1e-12


class EmptyMesh(ValueError):
    pass


def _squares(mu):
    return np.asarray(getattr(mu, "values", mu), dtype=float)


class TailCache:
    """Tails of all edges of ``mesh`` together with their indicator sums."""

    def __init__(self, mesh, mu):
        self.mesh = mesh
        self.values = _squares(mu)
        self.indptr, self.indices = mesh.tail_table()
        self.sums = mesh.tail_sums(self.values)

    def tail(self, edge):
        return self.indices[self.indptr[edge]:self.indptr[edge + 1]]

    def union_sum(self, edges):
        """Indicator sum over tail(edges)."""
        if len(edges) == 0:
            return 0.0
        parts = [self.tail(e) for e in edges]
        return float(self.values[np.unique(np.concatenate(parts))].sum())


def _check_theta(theta):
    if not 0 < theta <= 1:
        raise ValueError(f"marking parameter must lie in (0, 1], got {theta}")


def _uncovered(t, mu2, covered):
    return sum(mu2[x] for x in t if not covered[x])


def mark_maximum(mesh, mu, theta, squared=True, cache=None, pick="greedy"):
    """Modified maximum criterion.

    Edges are picked from the set ``U`` of edges not yet covered by the tail
    of an earlier pick.  A picked edge ``E`` is marked when the part of its
    tail not already in ``tail(marked)`` carries enough of the indicator:
    ``m^2 >= theta * M^2`` with ``M^2 = max_E mu(tail(E))^2``.  With
    ``squared=False`` the comparison is ``m >= theta * M`` instead.

    Parameters
    ----------
    mesh : Mesh
    mu : IndicatorField or array_like
        Squared indicators per edge.
    theta : float in (0, 1]
    pick : {"greedy", "index"}
        ``"greedy"`` always picks the edge of ``U`` with the largest current
        ``m`` (ties by edge id); ``"index"`` picks in ascending edge id.
    """
    _check_theta(theta)
    if mesh.n_edges == 0:
        raise EmptyMesh("mesh has no edges")
    if pick not in ("greedy", "index"):
        raise ValueError(f"pick must be 'greedy' or 'index', got {pick!r}")
    cache = TailCache(mesh, mu) if cache is None else cache
    M2 = float(cache.sums.max())
    if M2 <= 0:
        return np.array([0], dtype=np.int64)
    bar = (theta if squared else theta * theta) * M2 * (1 - _RTOL)
    mu2 = cache.values.tolist()
    indptr = cache.indptr.tolist()
    indices = cache.indices.tolist()
    covered = bytearray(mesh.n_edges)
    marked = []
    if pick == "index":
        open_ = bytearray(b"\x01") * mesh.n_edges
        for e in range(mesh.n_edges):
            if not open_[e]:
                continue
            t = indices[indptr[e]:indptr[e + 1]]
            for x in t:
                open_[x] = 0
            if _uncovered(t, mu2, covered) >= bar:
                marked.append(e)
                for x in t:
                    covered[x] = 1
        return np.array(marked, dtype=np.int64)

    # Uncovered tail sums only shrink, so a lazy max-heap suffices; once the
    # largest current value fails the test, every remaining pick fails too.
    done = bytearray(mesh.n_edges)
    heap = [(-s, e) for e, s in enumerate(cache.sums.tolist()) if s >= bar]
    heapq.heapify(heap)
    while heap:
        neg, e = heapq.heappop(heap)
        if done[e]:
            continue
        t = indices[indptr[e]:indptr[e + 1]]
        m2 = _uncovered(t, mu2, covered)
        if m2 < -neg:
            if m2 >= bar:
                heapq.heappush(heap, (-m2, e))
            continue
        marked.append(e)
        for x in t:
            covered[x] = 1
            done[x] = 1
    return np.array(sorted(marked), dtype=np.int64)


def marking_ratio(mesh, mu, marks, cache=None):
    """``mu(tail(marks))^2 / (#marks * max_E mu(tail(E))^2)``.

    The marked set satisfies the marking axiom with constant ``C`` iff this
    ratio is at least ``C``.
    """
    cache = TailCache(mesh, mu) if cache is None else cache
    marks = np.asarray(marks, dtype=np.int64)
    M2 = float(cache.sums.max())
    if len(marks) == 0:
        return 0.0
    if M2 <= 0:
        return math.inf
    return cache.union_sum(marks) / (len(marks) * M2)


def mark_goafem_maximum(mesh, eta, eta_star, theta, c_min=1.0, squared=True, details=False):
    """Goal-oriented modified maximum criterion.

    Both sides are marked with :func:`mark_maximum`; the smaller set (primal
    on ties) is kept whole and joined with the ``n`` edges of the larger set
    having the largest tail sums, ``n = min(#larger, max(1, floor(c_min * #smaller)))``.

    With ``details=True`` a dict with the intermediate sets is returned too.
    """
    if c_min <= 0:
        raise ValueError("c_min must be positive")
    cp = TailCache(mesh, eta)
    cd = TailCache(mesh, eta_star)
    primal = mark_maximum(mesh, eta, theta, squared, cp)
    dual = mark_maximum(mesh, eta_star, theta, squared, cd)
    if len(primal) <= len(dual):
        m_min, m_max, c_max, side = primal, dual, cd, "primal"
    else:
        m_min, m_max, c_max, side = dual, primal, cp, "dual"
    n = min(len(m_max), max(1, math.floor(c_min * len(m_min))))
    order = np.lexsort((m_max, -c_max.sums[m_max]))
    subset = np.sort(m_max[order[:n]])
    marks = np.union1d(m_min, subset)
    if not details:
        return marks
    return marks, dict(primal=primal, dual=dual, min_set=m_min, max_set=m_max,
                       max_subset=subset, min_side=side, n=n)


def _doerfler_order(mu2):
    return np.lexsort((np.arange(len(mu2)), -mu2))


def _doerfler_count(mu2, order, theta):
    sorted_mu2 = mu2[order]
    csum = np.cumsum(sorted_mu2)
    total = csum[-1]
    if total <= 0:
        return 1
    if theta >= 1:
        return int(np.count_nonzero(sorted_mu2 > 0))
    return int(np.searchsorted(csum, theta * total * (1 - _RTOL))) + 1


def mark_doerfler(mu, theta):
    """Minimal set with ``mu(marked)^2 >= theta * mu(all)^2``.

    Edges are taken by decreasing indicator (ties by edge id).  If all
    indicators vanish the first edge is returned.
    """
    _check_theta(theta)
    mu2 = _squares(mu)
    if len(mu2) == 0:
        raise EmptyMesh("no edges")
    order = _doerfler_order(mu2)
    return np.sort(order[:_doerfler_count(mu2, order, theta)])


def mark_goal_doerfler(eta, eta_star, theta, variant):
    """Goal-oriented bulk chasing: ``MS``, ``FPZ`` or ``BET``."""
    _check_theta(theta)
    variant = variant.upper()
    e2, d2 = _squares(eta), _squares(eta_star)
    if variant == "BET":
        return mark_doerfler(e2 * d2.sum() + e2.sum() * d2, theta)
    if variant not in GOAL_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {GOAL_VARIANTS}")
    op, od = _doerfler_order(e2), _doerfler_order(d2)
    np_, nd = _doerfler_count(e2, op, theta), _doerfler_count(d2, od, theta)
    if variant == "MS":
        return np.sort(op[:np_]) if np_ <= nd else np.sort(od[:nd])
    n = min(np_, nd)
    return np.union1d(op[:n], od[:n])
