"""Conforming triangle meshes and edge-based newest vertex bisection (NVB).

Storage convention: a triangle is an ordered triple ``(a, b, c)`` whose
*reference edge* is ``{a, b}``.  Bisection of the reference edge with
midpoint ``m`` produces the children ``(c, a, m)`` and ``(b, c, m)``, so each
child inherits one non-reference edge of its parent as reference edge.

Local edge ``k`` of a triangle ``t`` joins ``t[k]`` and ``t[(k + 1) % 3]``;
local edge 0 is therefore always the reference edge.

Edges are identified by their index in the lexicographically sorted list of
sorted endpoint pairs.  Edge ids are rebuilt for every mesh; the
:class:`Lineage` returned by :func:`refine` maps coarse edges to fine ones.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "MeshError",
    "NonConforming",
    "DegenerateTriangle",
    "BadIndex",
    "InvalidEdge",
    "NonTerminating",
    "RecursionOverflow",
    "Mesh",
    "Lineage",
    "build_mesh",
    "check_admissibility",
    "tail",
    "refine",
    "uniform_refine",
    "shape_constant",
    "read_mesh",
    "write_mesh",
]

_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class MeshError(ValueError):
    """Base class for invalid mesh input."""


class NonConforming(MeshError):
    """Hanging vertex or an edge shared by more than two triangles."""


class DegenerateTriangle(MeshError):
    """Triangle with zero area."""


class BadIndex(MeshError, IndexError):
    """Triangle refers to a vertex that does not exist."""


class InvalidEdge(MeshError, IndexError):
    """Edge id outside the edge table of the mesh."""


class NonTerminating(MeshError):
    """Refinement recursion revisits an edge: the mesh is not admissible."""


RecursionOverflow = NonTerminating


class Mesh:
    """Immutable conforming triangulation.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    triangles : array_like, shape (nt, 3)
        Counter-clockwise vertex triples, reference edge first.
    region : array_like, shape (nt,), optional
        Id of the initial-mesh ancestor of every triangle.
    level : array_like, shape (nt,), optional
        Bisection generation of every triangle.

    Use :func:`build_mesh` for user input; the constructor does not validate.
    """

    def __init__(self, vertices, triangles, region=None, level=None):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        nt = len(self.triangles)
        self.region = (np.arange(nt) if region is None
                       else np.array(region, dtype=np.int64).reshape(nt))
        self.level = (np.zeros(nt, dtype=np.int64) if level is None
                      else np.array(level, dtype=np.int64).reshape(nt))
        for arr in (self.vertices, self.triangles, self.region, self.level):
            arr.setflags(write=False)
        self._cache = {}
        self._build_edges()

    def _build_edges(self):
        nv = len(self.vertices)
        nt = len(self.triangles)
        local = self.triangles[:, _LOCAL_EDGES]
        pairs = np.sort(local, axis=2)
        keys = (pairs[..., 0] * nv + pairs[..., 1]).ravel()
        uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise NonConforming("edge shared by more than two triangles")
        self.edges = np.column_stack([uniq // nv, uniq % nv])
        self.tri_edges = inv.reshape(nt, 3)
        order = np.argsort(inv, kind="stable")
        start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        edge_tris = np.full((len(uniq), 2), -1, dtype=np.int64)
        edge_tris[:, 0] = order[start] // 3
        two = counts == 2
        edge_tris[two, 1] = order[start[two] + 1] // 3
        self.edge_tris = edge_tris
        self.boundary = counts == 1
        for arr in (self.edges, self.tri_edges, self.edge_tris, self.boundary):
            arr.setflags(write=False)

    # -- sizes -----------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def __repr__(self):
        return (f"Mesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles}, "
                f"n_edges={self.n_edges})")

    # -- geometry --------------------------------------------------------
    @cached_property
    def areas(self):
        """Unsigned triangle areas |T|."""
        return np.abs(self.signed_areas)

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def reference_edges(self):
        """Edge id of the reference edge of every triangle."""
        return self.tri_edges[:, 0]

    @cached_property
    def boundary_vertices(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary].ravel()] = True
        return mask

    def edge_id(self, a, b):
        """Id of the edge joining vertices ``a`` and ``b``."""
        a, b = min(a, b), max(a, b)
        nv = self.n_vertices
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        k = np.searchsorted(keys, a * nv + b)
        if k == len(keys) or keys[k] != a * nv + b:
            raise InvalidEdge(f"no edge between vertices {a} and {b}")
        return int(k)

    # -- tails -----------------------------------------------------------
    @cached_property
    def successors(self):
        """For every edge, the reference edges of adjacent triangles in which
        the edge is *not* the reference edge (-1 padded, shape (ne, 2))."""
        succ = np.full((self.n_edges, 2), -1, dtype=np.int64)
        ref = self.reference_edges
        ids = np.arange(self.n_edges)
        for k in range(2):
            t = self.edge_tris[:, k]
            ok = t >= 0
            r = np.where(ok, ref[np.maximum(t, 0)], -1)
            ok &= r != ids
            succ[ok, k] = r[ok]
        # compact so that column 0 holds the first valid entry
        swap = (succ[:, 0] < 0) & (succ[:, 1] >= 0)
        succ[swap] = succ[swap][:, ::-1]
        succ.setflags(write=False)
        return succ

    @cached_property
    def _tail_table(self):
        """All tails in compressed row form ``(indptr, indices)``.

        Every successor is the reference edge of some triangle and hence has
        at most one successor itself, so a tail is the edge plus at most two
        deterministic chains.
        """
        ne = self.n_edges
        succ = self.successors
        nxt = np.where(succ[:, 1] < 0, succ[:, 0], -1)
        chains = [np.arange(ne)]
        cur = chains[0]
        for _ in range(ne + 1):
            cur = np.where(cur >= 0, nxt[np.maximum(cur, 0)], -1)
            if not np.any(cur >= 0):
                break
            chains.append(cur)
        else:
            raise NonTerminating("tail recursion exceeds the number of edges")
        path = np.column_stack(chains)  # path[e] = e, nxt(e), nxt(nxt(e)), ...
        two = succ[:, 1] >= 0
        rows = np.full((ne, 1 + 2 * path.shape[1]), -1, dtype=np.int64)
        rows[:, 0] = np.arange(ne)
        rows[~two, 1:path.shape[1]] = path[~two, 1:]
        rows[two, 1:1 + path.shape[1]] = path[succ[two, 0]]
        rows[two, 1 + path.shape[1]:] = path[succ[two, 1]]
        rows.sort(axis=1)
        keep = rows >= 0
        keep[:, 1:] &= rows[:, 1:] != rows[:, :-1]
        indptr = np.concatenate([[0], np.cumsum(keep.sum(axis=1))])
        indices = rows[keep]
        indptr.setflags(write=False)
        indices.setflags(write=False)
        return indptr, indices

    def tail_table(self):
        """Compressed row table of all tails: ``tail(E) = indices[indptr[E]:indptr[E+1]]``."""
        return self._tail_table

    def tail_sums(self, values):
        """Sum of ``values`` over tail(E) for every edge E."""
        indptr, indices = self._tail_table
        return np.add.reduceat(np.asarray(values, dtype=float)[indices], indptr[:-1])


@dataclass(frozen=True)
class Lineage:
    """Correspondence between a coarse mesh and its refinement.

    Attributes
    ----------
    parent : ndarray, shape (nt_fine,)
        Coarse triangle containing each fine triangle.
    edge_image : ndarray, shape (ne_coarse,)
        Fine id of every surviving coarse edge, -1 if bisected.
    edge_midpoint : ndarray, shape (ne_coarse,)
        Fine vertex id of the midpoint of every bisected edge, -1 otherwise.
    edge_children : ndarray, shape (ne_coarse, 2)
        Fine ids of the halves (lower endpoint first), -1 if not bisected.
    """
    coarse: Mesh
    fine: Mesh
    parent: np.ndarray
    edge_image: np.ndarray
    edge_midpoint: np.ndarray
    edge_children: np.ndarray

    @property
    def bisected(self):
        """Sorted ids of coarse edges that were bisected."""
        return np.flatnonzero(self.edge_midpoint >= 0)


def build_mesh(vertices, triangles, regions=None):
    """Validate user input and return a :class:`Mesh`.

    Clockwise triangles are reoriented by swapping their first two vertices,
    which keeps the reference edge and the bisection children unchanged.

    Raises
    ------
    BadIndex, DegenerateTriangle, NonConforming
    """
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    t = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if len(v) < 3:
        raise MeshError("a mesh needs at least three vertices")
    if len(t) == 0:
        raise MeshError("a mesh needs at least one triangle")
    if t.min() < 0 or t.max() >= len(v):
        raise BadIndex("triangle refers to a nonexistent vertex")
    if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        raise DegenerateTriangle("triangle with repeated vertex")
    p = v[t]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    flip = area < 0
    t[flip, 0], t[flip, 1] = t[flip, 1].copy(), t[flip, 0].copy()
    scale = np.maximum(np.einsum("ij,ij->i", d1, d1), np.einsum("ij,ij->i", d2, d2))
    if np.any(np.abs(area) <= 1e-14 * scale):
        raise DegenerateTriangle("triangle with non-positive area")
    regions = np.arange(len(t)) if regions is None else np.asarray(regions, dtype=np.int64)
    if regions.shape != (len(t),):
        raise MeshError("one region id per triangle required")
    mesh = Mesh(v, t, regions)
    _check_hanging_vertices(mesh)
    return mesh


def _check_hanging_vertices(mesh, chunk=2048):
    used = np.unique(mesh.triangles)
    pts = mesh.vertices[used]
    be = mesh.edges[mesh.boundary]
    for lo in range(0, len(be), chunk):
        e = be[lo:lo + chunk]
        a = mesh.vertices[e[:, 0]][:, None, :]
        d = mesh.vertices[e[:, 1]][:, None, :] - a
        r = pts[None, :, :] - a
        cross = d[..., 0] * r[..., 1] - d[..., 1] * r[..., 0]
        dd = np.einsum("ijk,ijk->ij", d, d)
        s = np.einsum("ijk,ijk->ij", d, r) / dd
        on = (np.abs(cross) <= 1e-12 * dd) & (s > 1e-12) & (s < 1 - 1e-12)
        if np.any(on):
            raise NonConforming("hanging vertex on a boundary edge")


def check_admissibility(mesh):
    """True iff every interior edge is the reference edge of both or neither
    of its two triangles."""
    interior = ~mesh.boundary
    ids = np.flatnonzero(interior)
    t0, t1 = mesh.edge_tris[interior].T
    ref = mesh.reference_edges
    return bool(np.all((ref[t0] == ids) == (ref[t1] == ids)))


def _check_edge(mesh, edge):
    edge = int(edge)
    if not 0 <= edge < mesh.n_edges:
        raise InvalidEdge(f"edge {edge} not in mesh with {mesh.n_edges} edges")
    return edge


def tail(mesh, edge):
    """Edges bisected when ``edge`` is refined conformingly (sorted ids).

    Follows the recursion ``tail(E) = {E} ∪ tail(ref(T))`` over the triangles
    ``T ⊃ E`` with ``E != ref(T)`` using an explicit stack.

    Raises
    ------
    InvalidEdge
    NonTerminating
        If the recursion returns to an edge on its own path.
    """
    edge = _check_edge(mesh, edge)
    succ = mesh.successors
    done = set()
    on_path = set()
    stack = [(edge, False)]
    while stack:
        e, leaving = stack.pop()
        if leaving:
            on_path.discard(e)
            done.add(e)
            continue
        if e in done:
            continue
        if e in on_path:
            raise NonTerminating(f"tail recursion cycles through edge {e}")
        if len(on_path) > mesh.n_edges:
            raise NonTerminating("tail recursion deeper than the number of edges")
        on_path.add(e)
        stack.append((e, True))
        for s in succ[e]:
            if s >= 0:
                if s in on_path:
                    raise NonTerminating(f"tail recursion cycles through edge {s}")
                stack.append((int(s), False))
    return np.array(sorted(done), dtype=np.int64)


def _closure(mesh, marked):
    """Smallest superset of ``marked`` closed under taking successors."""
    ref = mesh.reference_edges
    for _ in range(mesh.n_edges + 1):
        hit = marked[mesh.tri_edges].any(axis=1)
        new = marked.copy()
        new[ref[hit]] = True
        if np.array_equal(new, marked):
            return marked
        marked = new
    raise RecursionOverflow("mark closure did not terminate")


def refine(mesh, marks):
    """Coarsest NVB refinement bisecting every edge in ``marks``.

    Returns
    -------
    fine : Mesh
    lineage : Lineage

    Raises
    ------
    InvalidEdge
    """
    marks = np.unique(np.asarray(marks, dtype=np.int64).ravel())
    if marks.size and (marks[0] < 0 or marks[-1] >= mesh.n_edges):
        raise InvalidEdge("marked edge id out of range")
    marked = np.zeros(mesh.n_edges, dtype=bool)
    marked[marks] = True
    marked = _closure(mesh, marked)

    nv = mesh.n_vertices
    bis = np.flatnonzero(marked)
    mid = np.full(mesh.n_edges, -1, dtype=np.int64)
    mid[bis] = nv + np.arange(len(bis))
    ends = mesh.edges[bis]
    new_vertices = np.vstack([mesh.vertices,
                              0.5 * (mesh.vertices[ends[:, 0]] + mesh.vertices[ends[:, 1]])])

    t = mesh.triangles
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    m0 = mid[mesh.tri_edges[:, 0]]
    m1 = mid[mesh.tri_edges[:, 1]]  # on {b, c}
    m2 = mid[mesh.tri_edges[:, 2]]  # on {c, a}
    r0, r1, r2 = m0 >= 0, m1 >= 0, m2 >= 0

    parts = []  # (parent ids, child rank, triples, level increment)

    def add(sel, rank, tri, inc):
        ids = np.flatnonzero(sel)
        parts.append((ids, np.full(len(ids), rank), tri[:, ids].T, np.full(len(ids), inc)))

    add(~r0, 0, np.array([a, b, c]), 0)
    # (c, a, m): kept when {c, a} unmarked, else split into (m, c, m2), (a, m, m2)
    add(r0 & ~r2, 0, np.array([c, a, m0]), 1)
    add(r0 & r2, 0, np.array([m0, c, m2]), 2)
    add(r0 & r2, 1, np.array([a, m0, m2]), 2)
    # (b, c, m): kept when {b, c} unmarked, else split into (m, b, m1), (c, m, m1)
    add(r0 & ~r1, 2, np.array([b, c, m0]), 1)
    add(r0 & r1, 2, np.array([m0, b, m1]), 2)
    add(r0 & r1, 3, np.array([c, m0, m1]), 2)

    parent = np.concatenate([q[0] for q in parts])
    rank = np.concatenate([q[1] for q in parts])
    tris = np.vstack([q[2] for q in parts])
    inc = np.concatenate([q[3] for q in parts])
    order = np.lexsort((rank, parent))
    parent, tris, inc = parent[order], tris[order], inc[order]
    fine = Mesh(new_vertices, tris, mesh.region[parent], mesh.level[parent] + inc)

    # edge correspondence
    nvf = fine.n_vertices
    fkeys = fine.edges[:, 0] * nvf + fine.edges[:, 1]

    def lookup(p, q):
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        return np.searchsorted(fkeys, lo * nvf + hi)

    image = np.full(mesh.n_edges, -1, dtype=np.int64)
    keep = ~marked
    image[keep] = lookup(mesh.edges[keep, 0], mesh.edges[keep, 1])
    children = np.full((mesh.n_edges, 2), -1, dtype=np.int64)
    children[bis, 0] = lookup(ends[:, 0], mid[bis])
    children[bis, 1] = lookup(mid[bis], ends[:, 1])
    for arr in (parent, image, mid, children):
        arr.setflags(write=False)
    return fine, Lineage(mesh, fine, parent, image, mid, children)


def uniform_refine(mesh, times=1):
    """Bisect every edge ``times`` times; returns the mesh and the lineages."""
    lineages = []
    for _ in range(times):
        mesh, lin = refine(mesh, np.arange(mesh.n_edges))
        lineages.append(lin)
    return mesh, lineages


def shape_constant(mesh):
    """max over triangles of diam(T)^2 / |T|."""
    p = mesh.vertices[mesh.triangles]
    d = p[:, _LOCAL_EDGES[:, 1]] - p[:, _LOCAL_EDGES[:, 0]]
    diam2 = np.einsum("tkj,tkj->tk", d, d).max(axis=1)
    return float(np.max(diam2 / mesh.areas))


def write_mesh(mesh, path):
    """Write ``v x y`` and ``t i j k region`` lines (0-based indices)."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for x, y in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r}\n")
        for (i, j, k), r in zip(mesh.triangles.tolist(), mesh.region.tolist()):
            fh.write(f"t {i} {j} {k} {r}\n")


def read_mesh(path):
    """Read the text format written by :func:`write_mesh`."""
    verts, tris, regs = [], [], []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v" and len(parts) == 3:
                verts.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "t" and len(parts) in (4, 5):
                tris.append(tuple(int(q) for q in parts[1:4]))
                regs.append(int(parts[4]) if len(parts) == 5 else len(regs))
            else:
                raise MeshError(f"{path}:{lineno}: cannot parse {line.strip()!r}")
    return build_mesh(verts, tris, regs)
