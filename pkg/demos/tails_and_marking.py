"""Tails of edges under newest vertex bisection, and the maximum criterion.

Bisecting one edge may force bisections elsewhere to keep the mesh
conforming.  The tail of an edge is exactly that set; it is computed here
both recursively and by actually refining, and the modified maximum
criterion then marks edges whose tails carry a large share of the
indicator.
"""
import numpy as np

from goafem import build_mesh, mark_maximum, marking_ratio, refine, tail, uniform_refine

vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
triangles = np.array([[0, 1, 2], [2, 3, 0]])
mesh, _ = uniform_refine(build_mesh(vertices, triangles), 2)
rng = np.random.default_rng(0)
for _ in range(3):
    marks = rng.choice(mesh.n_edges, size=3, replace=False)
    mesh, _ = refine(mesh, marks)
print(f"mesh with {mesh.n_triangles} triangles and {mesh.n_edges} edges")

sizes = np.array([len(tail(mesh, e)) for e in range(mesh.n_edges)])
print(f"tail sizes: min {sizes.min()}, max {sizes.max()}, mean {sizes.mean():.2f}")
e = int(sizes.argmax())
_, lineage = refine(mesh, [e])
print(f"edge {e}: tail {tail(mesh, e).tolist()}")
print(f"        bisected by refine: {lineage.bisected.tolist()}")

mu = rng.random(mesh.n_edges) ** 4
for theta in (1.0, 0.5, 0.1):
    marks = mark_maximum(mesh, mu, theta)
    print(f"theta={theta:3.1f}: {len(marks):3d} marks, ratio {marking_ratio(mesh, mu, marks):.3f}")
