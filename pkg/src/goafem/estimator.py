"""Edge-based residual indicators, data resolution terms and oscillations.

All fields store *squared* local contributions; subset sums are plain sums.

For an edge ``E`` with reduced patch ``T_red(E)`` (the one or two triangles
having ``E`` as a side)::

    eta(E)^2 = |E| ||[(A grad u_h + fvec)·n]||^2_E
               + sum_{T in T_red(E)} |T| ||f + div(A grad u_h + fvec)||^2_T

Jumps are only taken across interior edges.  The element terms::

    rho(T)^2 = |T| ||(1 - P_T)(f + div fvec)||^2_T
               + sum_{E ⊂ ∂T interior} |T|^(1/2) ||(1 - P_E)[fvec·n]||^2_E

use L2 projections ``P_T`` onto degree ``p - 2`` (the zero space for p = 1)
and ``P_E`` onto degree ``p - 1``; ``osc`` uses degree ``p - 1`` for ``P_T``.
"""
from dataclasses import dataclass

import numpy as np

from .fem import (barycentric_gradients, basis_gradients, basis_hessian_trace,
                  point_gradients)
from .problem import MAX_DEGREE
from .quadrature import gauss_interval, triangle_rule

__all__ = [
    "SideMismatch",
    "IndicatorField",
    "ElementField",
    "edge_indicators",
    "data_resolution",
    "oscillation",
]


class SideMismatch(ValueError):
    pass


@dataclass(eq=False)
class IndicatorField:
    """Squared per-edge indicators on one mesh."""
    values: np.ndarray
    mesh: object
    side: str = "primal"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_edges,):
            raise ValueError("one indicator per edge required")
        if np.any(self.values < 0):
            raise ValueError("squared indicators must be nonnegative")

    def total(self):
        return float(self.values.sum())

    def subset(self, edges):
        return float(self.values[np.asarray(edges, dtype=np.int64)].sum())

    def tail_sums(self):
        """Sum over tail(E) for every edge E."""
        return self.mesh.tail_sums(self.values)


@dataclass(eq=False)
class ElementField:
    """Squared per-triangle values on one mesh."""
    values: np.ndarray
    mesh: object
    side: str = "primal"

    def total(self):
        return float(self.values.sum())

    def subset(self, triangles):
        return float(self.values[np.asarray(triangles, dtype=np.int64)].sum())


def _quad_degree(problem, p):
    return 2 * max(p, MAX_DEGREE) if problem.polynomial else 2 * p + 8


def _volume_data(mesh, problem, side, lam):
    """f + div fvec at the quadrature points, shape (nt, nq)."""
    s, _, div = problem.side_fields(side)
    p = mesh.vertices[mesh.triangles]
    x = np.einsum("qk,tkd->tqd", lam, p)
    reg = mesh.region[:, None]
    return (problem.evaluate(s, reg, x[..., 0], x[..., 1])
            + problem.evaluate(div, reg, x[..., 0], x[..., 1]))


def _edge_geometry(mesh, edges, s):
    """Points on ``edges`` at parameters ``s`` and unit normals."""
    a = mesh.vertices[mesh.edges[edges, 0]]
    b = mesh.vertices[mesh.edges[edges, 1]]
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    d = (b - a) / mesh.edge_lengths[edges, None]
    normal = np.column_stack([d[:, 1], -d[:, 0]])
    return pts, normal


def _flux_jump(mesh, problem, side, edges, pts, normal, u_h=None):
    """[(A grad u_h + fvec)·n] between the two triangles of interior ``edges``."""
    _, vec, _ = problem.side_fields(side)
    jump = np.zeros(pts.shape[:2])
    for k, sign in ((0, 1.0), (1, -1.0)):
        t = mesh.edge_tris[edges, k]
        tq = np.broadcast_to(t[:, None], pts.shape[:2])
        flux = problem.evaluate(vec, mesh.region[tq], pts[..., 0], pts[..., 1])
        if u_h is not None:
            grad = point_gradients(u_h, tq, pts)
            A = problem.diffusion(mesh)[t]
            flux = flux + np.einsum("eab,eqb->eqa", A, grad)
        jump += sign * np.einsum("eqa,ea->eq", flux, normal)
    return jump


def edge_indicators(mesh, problem, u_h, p=None, side=None):
    """Squared residual indicators eta(E)^2 (or eta*(E)^2 on the dual side)."""
    if u_h.mesh is not mesh:
        raise ValueError("solution does not live on this mesh")
    p = u_h.p if p is None else p
    if p != u_h.p:
        raise ValueError("degree does not match the solution")
    side = u_h.side if side is None else side
    if side != u_h.side:
        raise SideMismatch(f"solution is {u_h.side}, indicators requested for {side}")
    qdeg = _quad_degree(problem, p)

    # element residual f + div fvec + div(A grad u_h); the last term is constant
    lam, w = triangle_rule(qdeg)
    res = _volume_data(mesh, problem, side, lam)
    if p > 1:
        glam = barycentric_gradients(mesh)
        A = problem.diffusion(mesh)
        res = res + np.einsum("ti,ti->t", basis_hessian_trace(p, glam, A),
                              u_h.local_coefficients())[:, None]
    vol = mesh.areas * ((res**2) @ w) * mesh.areas  # |T| * ||R||^2_T
    eta2 = np.bincount(mesh.tri_edges.ravel(), weights=np.repeat(vol, 3),
                       minlength=mesh.n_edges)

    interior = np.flatnonzero(~mesh.boundary)
    if len(interior):
        s, ws = gauss_interval(qdeg)
        pts, normal = _edge_geometry(mesh, interior, s)
        jump = _flux_jump(mesh, problem, side, interior, pts, normal, u_h)
        h = mesh.edge_lengths[interior]
        eta2[interior] += h * h * ((jump**2) @ ws)
    return IndicatorField(eta2, mesh, side)


def _monomials_tri(lam, degree):
    """Monomials xi^i eta^j (i + j <= degree) in reference coordinates."""
    xi, eta = lam[..., 1], lam[..., 2]
    cols = [xi**i * eta**j for i in range(degree + 1) for j in range(degree + 1 - i)]
    return np.stack(cols, axis=-1)


def _project_residual(values, phi, w):
    """values - L2 projection onto span(phi) using reference weights ``w``.

    ``values`` is (n, nq), ``phi`` (nq, m).  The mass matrix scales with the
    cell measure, which cancels in the projection.
    """
    if phi.shape[1] == 0:
        return values
    M = phi.T @ (w[:, None] * phi)
    b = (values * w) @ phi
    coef = np.linalg.solve(M, b.T).T
    return values - coef @ phi.T


def _element_terms(mesh, problem, side, p, volume_degree):
    qdeg = _quad_degree(problem, p)
    lam, w = triangle_rule(qdeg)
    data = _volume_data(mesh, problem, side, lam)
    phi = (_monomials_tri(lam, volume_degree) if volume_degree >= 0
           else np.zeros((len(w), 0)))
    r = _project_residual(data, phi, w)
    vals = mesh.areas * mesh.areas * ((r**2) @ w)

    interior = np.flatnonzero(~mesh.boundary)
    if len(interior):
        s, ws = gauss_interval(qdeg)
        pts, normal = _edge_geometry(mesh, interior, s)
        jump = _flux_jump(mesh, problem, side, interior, pts, normal)
        psi = np.stack([s**k for k in range(p)], axis=-1)
        r = _project_residual(jump, psi, ws)
        edge_sq = mesh.edge_lengths[interior] * ((r**2) @ ws)
        for k in range(2):
            t = mesh.edge_tris[interior, k]
            vals += np.bincount(t, weights=np.sqrt(mesh.areas[t]) * edge_sq,
                                minlength=mesh.n_triangles)
    return ElementField(vals, mesh, side)


def data_resolution(mesh, problem, side="primal", p=1):
    """Squared data resolution terms rho(T)^2."""
    return _element_terms(mesh, problem, side, p, p - 2)


def oscillation(mesh, problem, side="primal", p=1):
    """Squared data oscillations osc(T)^2."""
    return _element_terms(mesh, problem, side, p, p - 1)
