"""Region-wise PDE data and the built-in benchmark problems.

A problem couples an initial mesh with data for every initial triangle
(region): a constant SPD diffusion matrix ``A``, loads ``f`` and ``fvec`` with
the divergence ``div_fvec`` of ``fvec``, and the goal data ``g``, ``gvec``,
``div_gvec``.  The primal problem reads ``-div(A grad u) = f + div fvec`` and
the goal functional is ``G(v) = ∫ g v - gvec · grad v``.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import build_mesh, read_mesh

__all__ = [
    "Poly",
    "RegionData",
    "ProblemSpec",
    "UnknownName",
    "UnknownRegion",
    "UnknownField",
    "builtin_problem",
    "eval_data",
    "load_problem",
    "BUILTIN_PROBLEMS",
    "MAX_DEGREE",
]

MAX_DEGREE = 4
SCALAR_FIELDS = ("f", "div_fvec", "g", "div_gvec")
VECTOR_FIELDS = ("fvec", "gvec")
FIELDS = ("A",) + SCALAR_FIELDS + VECTOR_FIELDS


class UnknownName(KeyError):
    pass


class UnknownRegion(KeyError):
    pass


class UnknownField(KeyError):
    pass


class Poly:
    """Bivariate polynomial ``sum c[i, j] x**i y**j`` of total degree <= 4."""

    __slots__ = ("coef",)

    def __init__(self, coef):
        c = np.zeros((MAX_DEGREE + 1, MAX_DEGREE + 1))
        coef = np.atleast_2d(np.asarray(coef, dtype=float))
        if coef.shape[0] > MAX_DEGREE + 1 or coef.shape[1] > MAX_DEGREE + 1:
            raise ValueError("polynomial degree exceeds 4")
        c[:coef.shape[0], :coef.shape[1]] = coef
        i, j = np.indices(c.shape)
        if np.any(c[i + j > MAX_DEGREE] != 0):
            raise ValueError("polynomial degree exceeds 4")
        c.setflags(write=False)
        self.coef = c

    @classmethod
    def constant(cls, value):
        return cls([[value]])

    @classmethod
    def from_terms(cls, terms):
        """Build from ``{(i, j): c}`` or an iterable of ``(i, j, c)``."""
        items = terms.items() if isinstance(terms, dict) else (((i, j), c) for i, j, c in terms)
        c = np.zeros((MAX_DEGREE + 1, MAX_DEGREE + 1))
        for (i, j), v in items:
            if i + j > MAX_DEGREE or i < 0 or j < 0:
                raise ValueError(f"monomial x^{i} y^{j} not allowed")
            c[i, j] += v
        return cls(c)

    @property
    def degree(self):
        i, j = np.nonzero(self.coef)
        return int((i + j).max()) if len(i) else 0

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        # Horner in x with inner Horner in y
        for i in range(MAX_DEGREE, -1, -1):
            row = np.zeros_like(out)
            for j in range(MAX_DEGREE - i, -1, -1):
                row = row * y + self.coef[i, j]
            out = out * x + row
        return out

    def dx(self):
        c = np.zeros_like(self.coef)
        c[:-1, :] = self.coef[1:, :] * np.arange(1, MAX_DEGREE + 1)[:, None]
        return Poly(c)

    def dy(self):
        c = np.zeros_like(self.coef)
        c[:, :-1] = self.coef[:, 1:] * np.arange(1, MAX_DEGREE + 1)[None, :]
        return Poly(c)

    def __add__(self, other):
        return Poly(self.coef + other.coef)

    def __eq__(self, other):
        return isinstance(other, Poly) and np.array_equal(self.coef, other.coef)

    def __hash__(self):
        return hash(self.coef.tobytes())

    def __repr__(self):
        terms = [f"{c!r}*x^{i}*y^{j}" for (i, j), c in np.ndenumerate(self.coef) if c]
        return f"Poly({' + '.join(terms) or '0'})"


ZERO = Poly.constant(0.0)


def _is_poly_field(v):
    return isinstance(v, Poly)


def _check_divergence(vec, div, name):
    if all(_is_poly_field(c) for c in vec) and _is_poly_field(div):
        exact = vec[0].dx() + vec[1].dy()
        if not np.allclose(exact.coef, div.coef, rtol=0, atol=1e-13 * (1 + np.abs(exact.coef).max())):
            raise ValueError(f"{name} is not the divergence of its vector field")


@dataclass(frozen=True, eq=False)
class RegionData:
    """Data on one region.  Scalar fields are :class:`Poly` instances or
    vectorised callables ``(x, y) -> array``; vector fields are pairs."""
    A: np.ndarray = field(default_factory=lambda: np.eye(2))
    f: object = ZERO
    fvec: tuple = (ZERO, ZERO)
    div_fvec: object = ZERO
    g: object = ZERO
    gvec: tuple = (ZERO, ZERO)
    div_gvec: object = ZERO

    def __post_init__(self):
        A = np.array(self.A, dtype=float).reshape(2, 2)
        if not np.array_equal(A, A.T):
            raise ValueError("diffusion matrix must be symmetric")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("diffusion matrix must be positive definite")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "fvec", tuple(self.fvec))
        object.__setattr__(self, "gvec", tuple(self.gvec))
        _check_divergence(self.fvec, self.div_fvec, "div_fvec")
        _check_divergence(self.gvec, self.div_gvec, "div_gvec")

    @property
    def polynomial(self):
        """True when every load field is a polynomial (quadrature is exact)."""
        scal = [self.f, self.div_fvec, self.g, self.div_gvec, *self.fvec, *self.gvec]
        return all(_is_poly_field(s) for s in scal)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Problem data tied to the regions (initial triangles) of ``mesh``.

    ``dual_is_primal`` marks problems whose goal data equal the load data,
    so that the dual solve can be skipped.
    """
    name: str
    mesh: object
    regions: dict
    dual_is_primal: bool = False
    exact_solution: object = None
    exact_gradient: object = None

    def __post_init__(self):
        missing = set(np.unique(self.mesh.region).tolist()) - set(self.regions)
        if missing:
            raise UnknownRegion(f"no data for regions {sorted(missing)}")

    def data(self, region):
        try:
            return self.regions[int(region)]
        except KeyError:
            raise UnknownRegion(region) from None

    @property
    def polynomial(self):
        return all(r.polynomial for r in self.regions.values())

    def side_fields(self, side):
        """Names of (volume load, flux load, flux divergence) for a side."""
        if side == "primal":
            return "f", "fvec", "div_fvec"
        if side == "dual":
            return "g", "gvec", "div_gvec"
        raise ValueError(f"side must be 'primal' or 'dual', got {side!r}")

    def evaluate(self, name, regions, x, y):
        """Evaluate a field at points ``(x, y)`` lying in ``regions``.

        ``regions``, ``x`` and ``y`` broadcast to a common shape ``S``; the
        result has shape ``S`` (scalars), ``S + (2,)`` (vectors) or
        ``S + (2, 2)`` (``A``).
        """
        if name not in FIELDS:
            raise UnknownField(name)
        regions, x, y = np.broadcast_arrays(np.asarray(regions), np.asarray(x, float),
                                            np.asarray(y, float))
        shape = regions.shape
        tail_shape = {"A": (2, 2)}.get(name, (2,) if name in VECTOR_FIELDS else ())
        out = np.zeros(shape + tail_shape)
        for r in np.unique(regions):
            sel = regions == r
            d = self.data(r)
            val = getattr(d, name)
            if name == "A":
                out[sel] = val
            elif name in VECTOR_FIELDS:
                out[sel, 0] = val[0](x[sel], y[sel])
                out[sel, 1] = val[1](x[sel], y[sel])
            else:
                out[sel] = val(x[sel], y[sel])
        return out

    def diffusion(self, mesh):
        """Per-triangle diffusion matrices, shape (nt, 2, 2)."""
        uniq, inv = np.unique(mesh.region, return_inverse=True)
        mats = np.array([self.data(r).A for r in uniq])
        return mats[inv]


def eval_data(spec, region, point, field):
    """Evaluate one field of ``spec`` at a single point of ``region``."""
    if field not in FIELDS:
        raise UnknownField(field)
    d = spec.data(region)
    x, y = float(point[0]), float(point[1])
    val = getattr(d, field)
    if field == "A":
        return val.copy()
    if field in VECTOR_FIELDS:
        return np.array([float(val[0](x, y)), float(val[1](x, y))])
    return float(val(x, y))


# -- built-in problems -----------------------------------------------------

def _zshape():
    # 7 congruent right isosceles triangles around the re-entrant corner; the
    # hypotenuses (reference edges) are the diagonals through the origin.
    v = [(0, 0), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
    t = [(0, 2, 1), (2, 0, 3), (0, 4, 3), (4, 0, 5), (6, 0, 7), (0, 8, 7), (8, 0, 1)]
    mesh = build_mesh(v, t)
    one = RegionData(f=Poly.constant(1.0), g=Poly.constant(1.0))
    return ProblemSpec("zshape", mesh, {r: one for r in range(mesh.n_triangles)},
                       dual_is_primal=True)


def _goal_square():
    # 2x2 squares, each halved along its anti-diagonal; the hypotenuses lie on
    # x1 + x2 in {1/2, 1, 3/2} and are the reference edges of both halves.
    v = [(i / 2, j / 2) for j in range(3) for i in range(3)]

    def vid(i, j):
        return 3 * j + i

    t = []
    for j in range(2):
        for i in range(2):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            t.append((b, d, a))  # lower-left half
            t.append((d, b, c))  # upper-right half
    mesh = build_mesh(v, t)
    one, zero = Poly.constant(1.0), ZERO
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    s = centroids.sum(axis=1)
    regions = {}
    for r in range(mesh.n_triangles):
        fvec = (one, zero) if s[r] <= 0.5 else (zero, zero)
        gvec = (one, zero) if s[r] >= 1.5 else (zero, zero)
        regions[r] = RegionData(fvec=fvec, gvec=gvec)
    return ProblemSpec("goal_square", mesh, regions)


def _smooth_square():
    pi = math.pi

    def f(x, y):
        return 2 * pi**2 * np.sin(pi * x) * np.sin(pi * y)

    def u(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def grad_u(x, y):
        return np.stack([pi * np.cos(pi * x) * np.sin(pi * y),
                         pi * np.sin(pi * x) * np.cos(pi * y)], axis=-1)

    mesh = build_mesh([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 2, 1), (2, 0, 3)])
    data = RegionData(f=f, g=f)
    return ProblemSpec("smooth_square", mesh, {0: data, 1: data}, dual_is_primal=True,
                       exact_solution=u, exact_gradient=grad_u)


_BUILTINS = {"zshape": _zshape, "goal_square": _goal_square, "smooth_square": _smooth_square}
BUILTIN_PROBLEMS = tuple(_BUILTINS)


def builtin_problem(name):
    """Return ``(mesh, spec)`` for one of :data:`BUILTIN_PROBLEMS`."""
    try:
        spec = _BUILTINS[name]()
    except KeyError:
        raise UnknownName(f"unknown problem {name!r}; choose from {BUILTIN_PROBLEMS}") from None
    return spec.mesh, spec


# -- problem files ---------------------------------------------------------

def _poly_from_json(obj):
    if obj is None:
        return ZERO
    if isinstance(obj, (int, float)):
        return Poly.constant(obj)
    return Poly.from_terms(obj)


def load_problem(path, mesh=None):
    """Load a problem file (JSON).

    Layout::

        {"name": "...", "mesh": "relative/path.mesh",
         "default": {<block>}, "regions": {"<id>": {<block>}, ...}}

    where a block has optional keys ``A`` (2x2 list), ``f``, ``g`` (number or
    list of ``[i, j, c]`` monomial terms), ``fvec``, ``gvec`` (pairs of such
    polynomials) and ``div_fvec``, ``div_gvec``.  Missing divergences are
    derived from the vector fields; given ones are checked.
    """
    import os

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if mesh is None:
        mesh = read_mesh(os.path.join(os.path.dirname(os.path.abspath(path)), doc["mesh"]))
    default = doc.get("default", {})
    blocks = {int(k): v for k, v in doc.get("regions", {}).items()}

    def make(block):
        kw = {}
        if "A" in block:
            kw["A"] = block["A"]
        for side, (s, vec, div) in {"p": ("f", "fvec", "div_fvec"),
                                    "d": ("g", "gvec", "div_gvec")}.items():
            kw[s] = _poly_from_json(block.get(s))
            pair = tuple(_poly_from_json(c) for c in block.get(vec, [None, None]))
            kw[vec] = pair
            kw[div] = (_poly_from_json(block[div]) if div in block
                       else pair[0].dx() + pair[1].dy())
        return RegionData(**kw)

    regions = {}
    for r in np.unique(mesh.region).tolist():
        block = dict(default)
        block.update(blocks.get(r, {}))
        regions[r] = make(block)
    return ProblemSpec(doc.get("name", "custom"), mesh, regions,
                       dual_is_primal=bool(doc.get("dual_is_primal", False)))
