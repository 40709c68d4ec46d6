"""Lagrange P1/P2 finite elements: assembly, solution, energies, transfer.

Degrees of freedom are ordered vertices first, then (for p = 2) edge
midpoints in edge-table order.  All vectors stored in a
:class:`DiscreteSolution` cover every Lagrange node; boundary entries are 0.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problem import MAX_DEGREE
from .quadrature import triangle_rule

__all__ = [
    "FEMError",
    "UnsupportedDegree",
    "NotSPD",
    "NoConvergence",
    "SpaceMismatch",
    "LineageMismatch",
    "LinearSystem",
    "DiscreteSolution",
    "dof_layout",
    "lagrange_nodes",
    "assemble_system",
    "stiffness_matrix",
    "load_vector",
    "solve",
    "pcg",
    "energy_inner",
    "energy_norm",
    "prolongate",
    "evaluate_goal",
    "dirichlet_energy",
    "barycentric_gradients",
    "basis",
    "basis_gradients",
    "point_values",
    "point_gradients",
]

DIRECT_LIMIT = 400_000


class FEMError(Exception):
    pass


class UnsupportedDegree(FEMError, ValueError):
    pass


class NotSPD(FEMError, np.linalg.LinAlgError):
    pass


class NoConvergence(FEMError, RuntimeError):
    pass


class SpaceMismatch(FEMError, ValueError):
    pass


class LineageMismatch(FEMError, ValueError):
    pass


def _check_degree(p):
    if p not in (1, 2):
        raise UnsupportedDegree(f"polynomial degree {p} not supported (use 1 or 2)")


# -- local basis -------------------------------------------------------------

def barycentric_gradients(mesh):
    """Gradients of the barycentric coordinates, shape (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    twice = 2.0 * mesh.signed_areas
    g = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        d = p[:, k] - p[:, j]
        g[:, i, 0] = -d[:, 1] / twice
        g[:, i, 1] = d[:, 0] / twice
    return g


def basis(p, lam):
    """Nodal basis values at barycentric points ``lam`` (..., 3) -> (..., nloc)."""
    if p == 1:
        return np.array(lam, dtype=float, copy=True)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=-1)


def basis_gradients(p, lam, glam):
    """Physical gradients of the nodal basis.

    ``lam`` has shape (..., 3) and ``glam`` (..., 3, 2) with broadcastable
    leading dimensions; the result has shape (..., nloc, 2).
    """
    if p == 1:
        return np.broadcast_to(glam, np.broadcast_shapes(lam.shape[:-1], glam.shape[:-2]) + (3, 2))
    lam = lam[..., :, None]
    g = [(4 * lam[..., i, :] - 1) * glam[..., i, :] for i in range(3)]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        g.append(4 * (lam[..., j, :] * glam[..., i, :] + lam[..., i, :] * glam[..., j, :]))
    return np.stack(g, axis=-2)


def basis_hessian_trace(p, glam, A):
    """tr(A · Hess phi_i) per triangle, shape (nt, nloc); zero for p = 1."""
    if p == 1:
        return np.zeros(glam.shape[:1] + (3,))
    Ag = np.einsum("tab,tib->tia", A, glam)
    gAg = np.einsum("tia,tja->tij", glam, Ag)  # ∇λi·A∇λj
    out = [4 * gAg[:, i, i] for i in range(3)]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        out.append(8 * gAg[:, i, j])
    return np.stack(out, axis=1)


# -- degrees of freedom -------------------------------------------------------

def dof_layout(mesh, p):
    """Return ``(tri_dofs, ndof, boundary_mask)`` for degree ``p``."""
    _check_degree(p)
    key = ("dofs", p)
    if key not in mesh._cache:
        nv = mesh.n_vertices
        if p == 1:
            tri_dofs = mesh.triangles
            ndof = nv
            bnd = mesh.boundary_vertices.copy()
        else:
            tri_dofs = np.hstack([mesh.triangles, nv + mesh.tri_edges])
            ndof = nv + mesh.n_edges
            bnd = np.concatenate([mesh.boundary_vertices, mesh.boundary])
        bnd.setflags(write=False)
        mesh._cache[key] = (tri_dofs, ndof, bnd)
    return mesh._cache[key]


def lagrange_nodes(mesh, p):
    """Coordinates of all Lagrange nodes in dof order."""
    _check_degree(p)
    if p == 1:
        return mesh.vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    return np.vstack([mesh.vertices, mids])


# -- assembly -----------------------------------------------------------------

@dataclass(eq=False)
class LinearSystem:
    """Galerkin system restricted to the free (interior) dofs.

    ``K`` is the full stiffness matrix (all dofs); ``K_free`` its restriction.
    ``F`` and ``G`` are the full primal and dual load vectors.
    """
    mesh: object
    problem: object
    p: int
    K: sp.csr_matrix
    F: np.ndarray
    G: np.ndarray
    free: np.ndarray
    _factor: object = field(default=None, repr=False)

    @property
    def ndof(self):
        return len(self.F)

    @property
    def n_free(self):
        return len(self.free)

    @property
    def K_free(self):
        if "K_free" not in self.__dict__:
            self.__dict__["K_free"] = self.K[self.free][:, self.free].tocsc()
        return self.__dict__["K_free"]

    def rhs(self, side):
        if side == "primal":
            return self.F[self.free]
        if side == "dual":
            return self.G[self.free]
        raise ValueError(f"side must be 'primal' or 'dual', got {side!r}")


def stiffness_matrix(mesh, problem, p):
    """Full stiffness matrix ``K_ij = a(phi_j, phi_i)`` (cached on the mesh)."""
    _check_degree(p)
    key = ("K", p, id(problem))
    if key not in mesh._cache:
        tri_dofs, ndof, _ = dof_layout(mesh, p)
        glam = barycentric_gradients(mesh)
        A = problem.diffusion(mesh)
        lam, w = triangle_rule(2 * p - 2)
        G = basis_gradients(p, lam[None], glam[:, None])  # (nt, nq, nloc, 2)
        AG = np.einsum("tab,tqjb->tqja", A, G)
        Kloc = np.einsum("q,tqia,tqja->tij", w, G, AG) * mesh.areas[:, None, None]
        Kloc = 0.5 * (Kloc + Kloc.transpose(0, 2, 1))
        n = tri_dofs.shape[1]
        rows = np.repeat(tri_dofs, n, axis=1).ravel()
        cols = np.tile(tri_dofs, (1, n)).ravel()
        K = sp.coo_matrix((Kloc.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
        K.sort_indices()
        mesh._cache[key] = (problem, K)
    return mesh._cache[key][1]


def _quad_points(mesh, lam):
    """Physical quadrature points (nt, nq, 2)."""
    p = mesh.vertices[mesh.triangles]
    return np.einsum("qk,tkd->tqd", lam, p)


def load_vector(mesh, problem, p, side):
    """Full load vector ``∫ f phi_i - fvec · grad phi_i`` for a side."""
    _check_degree(p)
    s, vec, _ = problem.side_fields(side)
    tri_dofs, ndof, _ = dof_layout(mesh, p)
    lam, w = triangle_rule(p + MAX_DEGREE if problem.polynomial else 2 * p + 6)
    x = _quad_points(mesh, lam)
    reg = mesh.region[:, None]
    fv = problem.evaluate(s, reg, x[..., 0], x[..., 1])  # (nt, nq)
    Fv = problem.evaluate(vec, reg, x[..., 0], x[..., 1])  # (nt, nq, 2)
    phi = basis(p, lam)  # (nq, nloc)
    glam = barycentric_gradients(mesh)
    G = basis_gradients(p, lam[None], glam[:, None])
    loc = (np.einsum("q,tq,qi->ti", w, fv, phi)
           - np.einsum("q,tqa,tqia->ti", w, Fv, G)) * mesh.areas[:, None]
    return np.bincount(tri_dofs.ravel(), weights=loc.ravel(), minlength=ndof)


def assemble_system(mesh, problem, p):
    """Stiffness matrix and primal/dual loads on ``mesh`` for degree ``p``."""
    _check_degree(p)
    K = stiffness_matrix(mesh, problem, p)
    F = load_vector(mesh, problem, p, "primal")
    G = F if problem.dual_is_primal else load_vector(mesh, problem, p, "dual")
    _, _, bnd = dof_layout(mesh, p)
    return LinearSystem(mesh, problem, p, K, F, G, np.flatnonzero(~bnd))


# -- linear solvers -----------------------------------------------------------

def pcg(K, b, rtol=1e-12, maxiter=None):
    """Jacobi-preconditioned conjugate gradients.

    Raises
    ------
    NotSPD
        On a non-positive curvature direction.
    NoConvergence
        If ``maxiter`` iterations do not reach ``rtol``.
    """
    n = len(b)
    if n == 0:
        return np.zeros(0)
    d = K.diagonal()
    if np.any(d <= 0):
        raise NotSPD("non-positive diagonal entry")
    maxiter = 10 * n if maxiter is None else maxiter
    x = np.zeros(n)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x
    z = r / d
    q = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        Kq = K @ q
        curv = q @ Kq
        if curv <= 0:
            raise NotSPD("conjugate gradients met non-positive curvature")
        alpha = rz / curv
        x += alpha * q
        r -= alpha * Kq
        if np.linalg.norm(r) <= rtol * bnorm:
            return x
        z = r / d
        rz_new = r @ z
        q = z + (rz_new / rz) * q
        rz = rz_new
    raise NoConvergence(f"pcg did not converge in {maxiter} iterations")


def solve(system, side="primal"):
    """Solve the Galerkin system for one side; returns free-dof coefficients.

    A sparse direct factorisation (reused across sides) is the default;
    systems beyond ``DIRECT_LIMIT`` unknowns use :func:`pcg`.
    """
    b = system.rhs(side)
    if system.n_free == 0:
        return np.zeros(0)
    K = system.K_free
    if system.n_free > DIRECT_LIMIT:
        return pcg(K, b)
    if system._factor is None:
        if np.any(K.diagonal() <= 0):
            raise NotSPD("non-positive diagonal entry")
        try:
            system._factor = spla.splu(K, permc_spec="MMD_AT_PLUS_A",
                                       options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise NotSPD(str(exc)) from exc
    x = system._factor.solve(b)
    if not np.all(np.isfinite(x)):
        raise NotSPD("factorisation produced non-finite values")
    return x


# -- discrete functions -------------------------------------------------------

@dataclass(eq=False)
class DiscreteSolution:
    """Element of S^p_0 on ``mesh`` given by its Lagrange coefficients."""
    mesh: object
    p: int
    coefficients: np.ndarray
    side: str = "primal"
    problem: object = None

    def __post_init__(self):
        _check_degree(self.p)
        _, ndof, bnd = dof_layout(self.mesh, self.p)
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (ndof,):
            raise SpaceMismatch(f"expected {ndof} coefficients, got {c.shape}")
        if np.any(c[bnd] != 0):
            raise ValueError("coefficients at boundary nodes must vanish")
        self.coefficients = c

    @classmethod
    def from_free(cls, system, x, side="primal"):
        c = np.zeros(system.ndof)
        c[system.free] = x
        return cls(system.mesh, system.p, c, side, system.problem)

    @classmethod
    def zero(cls, mesh, p, side="primal", problem=None):
        return cls(mesh, p, np.zeros(dof_layout(mesh, p)[1]), side, problem)

    def __add__(self, other):
        _same_space(self, other)
        return DiscreteSolution(self.mesh, self.p, self.coefficients + other.coefficients,
                                self.side, self.problem)

    def __sub__(self, other):
        _same_space(self, other)
        return DiscreteSolution(self.mesh, self.p, self.coefficients - other.coefficients,
                                self.side, self.problem)

    def __mul__(self, scalar):
        return DiscreteSolution(self.mesh, self.p, scalar * self.coefficients,
                                self.side, self.problem)

    __rmul__ = __mul__

    def local_coefficients(self):
        tri_dofs, _, _ = dof_layout(self.mesh, self.p)
        return self.coefficients[tri_dofs]


def _same_space(v, w):
    if v.mesh is not w.mesh or v.p != w.p:
        raise SpaceMismatch("functions live on different meshes or degrees")


def _barycentric_of(mesh, tris, points):
    """Barycentric coordinates of ``points`` (..., 2) w.r.t. triangles ``tris``."""
    p = mesh.vertices[mesh.triangles[tris]]  # (..., 3, 2)
    d1 = p[..., 1, :] - p[..., 0, :]
    d2 = p[..., 2, :] - p[..., 0, :]
    r = points - p[..., 0, :]
    det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
    l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
    return np.stack([1 - l1 - l2, l1, l2], axis=-1)


def point_values(v, tris, points):
    """Values of ``v`` at ``points`` lying in triangles ``tris``."""
    lam = _barycentric_of(v.mesh, tris, points)
    coef = v.local_coefficients()[tris]
    return np.einsum("...i,...i->...", basis(v.p, lam), coef)


def point_gradients(v, tris, points):
    """Gradients of ``v`` at ``points`` lying in triangles ``tris``."""
    lam = _barycentric_of(v.mesh, tris, points)
    glam = barycentric_gradients(v.mesh)[tris]
    coef = v.local_coefficients()[tris]
    return np.einsum("...ia,...i->...a", basis_gradients(v.p, lam, glam), coef)


def _stiffness_for(v):
    if v.problem is None:
        raise ValueError("energy needs the problem's diffusion matrix")
    return stiffness_matrix(v.mesh, v.problem, v.p)


def energy_inner(v, w):
    """Energy inner product ``a(v, w) = ∫ A grad v · grad w``."""
    _same_space(v, w)
    return float(v.coefficients @ (_stiffness_for(v) @ w.coefficients))


def energy_norm(v):
    return float(np.sqrt(max(energy_inner(v, v), 0.0)))


def prolongate(solution, fine_mesh, lineage):
    """Represent ``solution`` exactly on the refinement ``fine_mesh``."""
    if lineage.coarse is not solution.mesh or lineage.fine is not fine_mesh:
        raise LineageMismatch("lineage does not connect these meshes")
    p = solution.p
    tri_dofs, ndof, bnd = dof_layout(fine_mesh, p)
    nodes = lagrange_nodes(fine_mesh, p)
    # every fine node is evaluated inside the parent of one fine triangle holding it
    owner = np.zeros(ndof, dtype=np.int64)
    owner[tri_dofs.ravel()] = np.repeat(np.arange(fine_mesh.n_triangles), tri_dofs.shape[1])
    parent = lineage.parent[owner]
    c = point_values(solution, parent, nodes)
    c[bnd] = 0.0
    return DiscreteSolution(fine_mesh, p, c, solution.side, solution.problem)


def evaluate_goal(spec, u_h):
    """Goal ``G(u_h) = ∫ g u_h - gvec · grad u_h`` by element quadrature."""
    return _functional(spec, u_h, "dual")


def _functional(spec, v, side):
    mesh, p = v.mesh, v.p
    s, vec, _ = spec.side_fields(side)
    lam, w = triangle_rule(p + MAX_DEGREE if spec.polynomial else 2 * p + 6)
    x = _quad_points(mesh, lam)
    reg = mesh.region[:, None]
    fv = spec.evaluate(s, reg, x[..., 0], x[..., 1])
    Fv = spec.evaluate(vec, reg, x[..., 0], x[..., 1])
    coef = v.local_coefficients()
    val = basis(p, lam) @ coef.T  # (nq, nt)
    glam = barycentric_gradients(mesh)
    grad = np.einsum("tqia,ti->tqa", basis_gradients(p, lam[None], glam[:, None]), coef)
    integrand = fv * val.T - np.einsum("tqa,tqa->tq", Fv, grad)
    return float(np.sum((integrand @ w) * mesh.areas))


def dirichlet_energy(spec, u_h, side=None):
    """``½ a(u_h, u_h) - F(u_h)`` (``G`` instead of ``F`` on the dual side)."""
    side = u_h.side if side is None else side
    mesh, p = u_h.mesh, u_h.p
    K = stiffness_matrix(mesh, spec, p)
    load = load_vector(mesh, spec, p, side)
    c = u_h.coefficients
    return float(0.5 * (c @ (K @ c)) - load @ c)
