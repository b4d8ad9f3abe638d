"""Simplicial complexes in one and two dimensions and their DEC operators.

Vertices carry the compartments.  The circumcentric dual supplies the
compartment volumes (``star0``) and the dual-edge/primal-edge ratios
(``star1``); together with the signed incidence matrix ``d`` these give the
diffusion Laplacian ``(d x I)^T (star1 x I) R_d (d x I)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateCell,
    DimensionMismatch,
    InconsistentOrientation,
    NonManifold,
    NotWellCentered,
    ValidationError,
)

WELL_CENTERED_TOL = 1e-9
_DEGENERATE_RTOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """Oriented pure simplicial complex of dimension 1 or 2.

    ``edges`` are sorted lexicographically and oriented from the lower to
    the higher vertex index.  ``boundary`` lists boundary vertices in
    ascending order.
    """

    dimension: int
    vertices: np.ndarray  # (N, n)
    cells: np.ndarray  # (n_cells, n + 1)
    edges: np.ndarray  # (N_e, 2)
    boundary: np.ndarray  # (N_b,)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def n_boundary(self):
        return self.boundary.shape[0]

    def cell_measures(self):
        if self.dimension == 1:
            p = self.vertices[self.cells]
            return np.abs(p[:, 1, 0] - p[:, 0, 0])
        p = self.vertices[self.cells]
        a, b = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def volume(self):
        return float(np.sum(self.cell_measures()))

    def n_components(self):
        d = exterior_derivative_0(self)
        adj = abs(d.T) @ abs(d)
        return connected_components(adj, directed=False)[0]


def _cell_edges(cell):
    # oriented boundary edges of a triangle (a, b, c): ab, bc, ca
    return [(cell[0], cell[1]), (cell[1], cell[2]), (cell[2], cell[0])]


def build_complex(vertices, cells) -> SimplicialComplex:
    """Validate a mesh and derive its edges and boundary.

    Raises
    ------
    NonManifold
        An edge lies in three or more triangles, a vertex in three or more
        segments, or two triangles touch only at a vertex.
    InconsistentOrientation
        Adjacent cells induce the same orientation on a shared face.
    DegenerateCell
        A cell has (numerically) zero measure or a repeated vertex.
    """
    V = np.asarray(vertices, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.ndim != 2 or V.shape[1] not in (1, 2):
        raise ValidationError(f"vertex coordinates must be N x 1 or N x 2, got shape {V.shape}")
    if not np.all(np.isfinite(V)):
        raise ValidationError("vertex coordinates must be finite")
    n = V.shape[1]
    N = V.shape[0]
    C = np.asarray(cells)
    if C.size == 0:
        raise ValidationError("mesh has no cells")
    if C.ndim != 2 or C.shape[1] != n + 1:
        raise ValidationError(f"cells of a {n}-dimensional mesh need {n + 1} vertex indices")
    if np.any(C != np.round(C)):
        raise ValidationError("cell indices must be integers")
    C = C.astype(np.int64)
    if C.min() < 0 or C.max() >= N:
        raise ValidationError(f"cell index out of range [0, {N})")
    seen = set()
    for k, cell in enumerate(C.tolist()):
        if len(set(cell)) != len(cell):
            raise DegenerateCell(f"cell {k} repeats a vertex: {cell}")
        key = frozenset(cell)
        if key in seen:
            raise ValidationError(f"duplicate cell {k}: {cell}")
        seen.add(key)

    scale = float(np.max(np.ptp(V, axis=0))) or 1.0

    if n == 1:
        lengths = np.abs(V[C[:, 1], 0] - V[C[:, 0], 0])
        bad = np.flatnonzero(lengths <= _DEGENERATE_RTOL * scale)
        if bad.size:
            raise DegenerateCell(f"segment {int(bad[0])} has zero length")
        heads = np.bincount(C[:, 1], minlength=N)
        tails = np.bincount(C[:, 0], minlength=N)
        deg = heads + tails
        if np.any(deg > 2):
            raise NonManifold(f"vertex {int(np.argmax(deg))} belongs to more than two segments")
        if np.any(heads > 1) or np.any(tails > 1):
            v = int(np.flatnonzero((heads > 1) | (tails > 1))[0])
            raise InconsistentOrientation(f"segments meeting at vertex {v} are not coherently oriented")
        edges = np.sort(C, axis=1)
        edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
        boundary = np.flatnonzero(deg == 1)
    else:
        p = V[C]
        a, b = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        area = 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        bad = np.flatnonzero(area <= _DEGENERATE_RTOL * scale**2)
        if bad.size:
            raise DegenerateCell(f"triangle {int(bad[0])} has zero area")
        oriented: dict = {}
        for k, cell in enumerate(C.tolist()):
            for e in _cell_edges(cell):
                oriented.setdefault(tuple(sorted(e)), []).append((k, e))
        for key, uses in oriented.items():
            if len(uses) > 2:
                raise NonManifold(f"edge {key} belongs to {len(uses)} triangles")
            if len(uses) == 2 and uses[0][1] == uses[1][1]:
                raise InconsistentOrientation(
                    f"triangles {uses[0][0]} and {uses[1][0]} induce the same orientation on edge {key}"
                )
        # pinch points: the triangles around each vertex must be edge-connected
        star: dict = {}
        for k, cell in enumerate(C.tolist()):
            for v in cell:
                star.setdefault(v, []).append(k)
        for v, tris in star.items():
            if len(tris) == 1:
                continue
            link = {}
            for key, uses in oriented.items():
                if v in key and len(uses) == 2:
                    t0, t1 = uses[0][0], uses[1][0]
                    link.setdefault(t0, set()).add(t1)
                    link.setdefault(t1, set()).add(t0)
            reached, todo = {tris[0]}, [tris[0]]
            while todo:
                for nb in link.get(todo.pop(), ()):
                    if nb not in reached:
                        reached.add(nb)
                        todo.append(nb)
            if len(reached) != len(tris):
                raise NonManifold(f"vertex {v} is a pinch point joining separate fans of triangles")
        edges = np.array(sorted(oriented), dtype=np.int64)
        bverts = {v for key, uses in oriented.items() if len(uses) == 1 for v in key}
        boundary = np.array(sorted(bverts), dtype=np.int64)

    used = np.zeros(N, dtype=bool)
    used[C.ravel()] = True
    if not used.all():
        raise ValidationError(f"vertex {int(np.flatnonzero(~used)[0])} belongs to no cell")

    return SimplicialComplex(
        dimension=n,
        vertices=_frozen(V),
        cells=_frozen(C, np.int64),
        edges=_frozen(edges.reshape(-1, 2), np.int64),
        boundary=_frozen(boundary, np.int64),
    )


def _circumcenter_barycentric(p):
    """Barycentric coordinates of the circumcenters of triangles ``p`` (k, 3, 2)."""
    a2 = np.sum((p[:, 1] - p[:, 2]) ** 2, axis=1)
    b2 = np.sum((p[:, 2] - p[:, 0]) ** 2, axis=1)
    c2 = np.sum((p[:, 0] - p[:, 1]) ** 2, axis=1)
    w = np.stack([a2 * (b2 + c2 - a2), b2 * (c2 + a2 - b2), c2 * (a2 + b2 - c2)], axis=1)
    return w / w.sum(axis=1, keepdims=True)


def circumcenters(K: SimplicialComplex) -> np.ndarray:
    p = K.vertices[K.cells]
    if K.dimension == 1:
        return p.mean(axis=1)
    return np.einsum("ki,kij->kj", _circumcenter_barycentric(p), p)


def is_well_centered(K: SimplicialComplex, tol: float = WELL_CENTERED_TOL) -> bool:
    """True when every triangle contains its circumcenter with barycentric margin >= tol."""
    if K.dimension == 1:
        return True
    lam = _circumcenter_barycentric(K.vertices[K.cells])
    return bool(np.all(lam >= tol))


@dataclass(frozen=True, eq=False)
class DualComplex:
    circumcenters: np.ndarray
    vertex_volumes: np.ndarray  # |*v_k|, n-volume of each dual cell
    edge_volumes: np.ndarray  # |*sigma_k|, (n-1)-volume of each dual edge
    boundary_edges: np.ndarray  # indices into K.edges lying on the boundary
    boundary_vertices: np.ndarray


def circumcentric_dual(K: SimplicialComplex, tol: float = WELL_CENTERED_TOL) -> DualComplex:
    if not is_well_centered(K, tol):
        lam = _circumcenter_barycentric(K.vertices[K.cells])
        k = int(np.argmin(lam.min(axis=1)))
        raise NotWellCentered(
            f"triangle {k} {K.cells[k].tolist()} has circumcenter margin {lam[k].min():.3e} < {tol:.1e}"
        )
    N, Ne = K.n_vertices, K.n_edges
    cc = circumcenters(K)
    edge_index = {tuple(e): i for i, e in enumerate(K.edges.tolist())}
    vvol = np.zeros(N)
    evol = np.zeros(Ne)
    count = np.zeros(Ne, dtype=int)

    if K.dimension == 1:
        for cell in K.cells.tolist():
            h = abs(K.vertices[cell[1], 0] - K.vertices[cell[0], 0])
            vvol[cell[0]] += 0.5 * h
            vvol[cell[1]] += 0.5 * h
            i = edge_index[tuple(sorted(cell))]
            evol[i] = 1.0  # dual of an edge is a point
            count[i] += 1
    else:
        for k, cell in enumerate(K.cells.tolist()):
            c = cc[k]
            for u, v in combinations(cell, 2):
                pu, pv = K.vertices[u], K.vertices[v]
                t = pv - pu
                length = np.hypot(*t)
                # circumcenter projects onto the edge midpoint
                dist = abs(t[0] * (c[1] - pu[1]) - t[1] * (c[0] - pu[0])) / length
                i = edge_index[(min(u, v), max(u, v))]
                evol[i] += dist
                count[i] += 1
                # two right triangles of the corner kites at u and at v
                tri = 0.25 * length * dist
                vvol[u] += tri
                vvol[v] += tri
    bedges = np.flatnonzero(count == 1) if K.dimension == 2 else np.zeros(0, dtype=np.int64)
    return DualComplex(
        circumcenters=_frozen(cc),
        vertex_volumes=_frozen(vvol),
        edge_volumes=_frozen(evol),
        boundary_edges=_frozen(bedges, np.int64),
        boundary_vertices=_frozen(K.boundary, np.int64),
    )


def hodge_star_0(K: SimplicialComplex, dual: DualComplex) -> np.ndarray:
    """Diagonal of star0: dual cell volume over |v| = 1."""
    return dual.vertex_volumes.copy()


def hodge_star_1(K: SimplicialComplex, dual: DualComplex) -> np.ndarray:
    e = K.vertices[K.edges[:, 1]] - K.vertices[K.edges[:, 0]]
    return dual.edge_volumes / np.linalg.norm(e, axis=1)


def exterior_derivative_0(K: SimplicialComplex) -> sp.csr_matrix:
    """Signed incidence ``d`` (N_e x N) with ``(d u)_e = u_head - u_tail``."""
    Ne = K.n_edges
    rows = np.repeat(np.arange(Ne), 2)
    cols = K.edges.ravel()
    vals = np.tile([-1.0, 1.0], Ne)
    return sp.csr_matrix((vals, (rows, cols)), shape=(Ne, K.n_vertices))


def trace_operator(K: SimplicialComplex) -> sp.csr_matrix:
    Nb = K.n_boundary
    return sp.csr_matrix(
        (np.ones(Nb), (np.arange(Nb), K.boundary)), shape=(Nb, K.n_vertices)
    )


@dataclass(frozen=True, eq=False)
class Operators:
    star0: np.ndarray
    star1: np.ndarray
    d: sp.csr_matrix
    tr: sp.csr_matrix

    @property
    def n_vertices(self):
        return self.star0.shape[0]

    @property
    def n_edges(self):
        return self.star1.shape[0]


def operators(K: SimplicialComplex, dual: DualComplex | None = None) -> Operators:
    if dual is None:
        dual = circumcentric_dual(K)
    return Operators(
        star0=_frozen(hodge_star_0(K, dual)),
        star1=_frozen(hodge_star_1(K, dual)),
        d=exterior_derivative_0(K),
        tr=trace_operator(K),
    )


def laplacian(K: SimplicialComplex, ops: Operators, R_d, m: int | None = None) -> sp.csr_matrix:
    """Assemble ``(d x I_m)^T (star1 x I_m) R_d (d x I_m)``.

    ``R_d`` is the diagonal of the energy-diffusion matrix, length ``m * N_e``
    in edge-major order (entry ``e * m + i`` belongs to species i on edge e).
    The state ordering is compartment-major, matching the Kronecker layout.
    The result is exactly symmetric.
    """
    R = np.asarray(R_d, dtype=float).reshape(-1)
    Ne = ops.n_edges
    if m is None:
        if R.size % Ne:
            raise DimensionMismatch(f"R_d has length {R.size}, not a multiple of N_e = {Ne}")
        m = R.size // Ne
    if R.size != m * Ne:
        raise DimensionMismatch(f"R_d has length {R.size}, expected m * N_e = {m * Ne}")
    if ops.d.shape != (Ne, K.n_vertices):
        raise DimensionMismatch("operators do not match the complex")
    if np.any(~(R >= 0)):
        raise ValidationError("R_d must be nonnegative")
    Dk = sp.kron(ops.d, sp.identity(m), format="csr")
    W = sp.diags(np.repeat(ops.star1, m) * R)
    L = (Dk.T @ W @ Dk).tocsr()
    L = ((L + L.T) * 0.5).tocsr()
    L.sum_duplicates()
    L.sort_indices()
    return L


def replicate_diffusion(diffusion, n_edges: int) -> np.ndarray:
    """Constant-per-species R_d diagonal in edge-major order."""
    return np.tile(np.asarray(diffusion, dtype=float), n_edges)


# -- generators ---------------------------------------------------------------


def interval(n_v: int, length: float = 1.0) -> SimplicialComplex:
    """Uniform 1-D chain with ``n_v`` vertices on ``[0, length]``."""
    if n_v < 2:
        raise ValidationError("interval needs at least two vertices")
    x = np.linspace(0.0, length, n_v)
    cells = np.column_stack([np.arange(n_v - 1), np.arange(1, n_v)])
    return build_complex(x, cells)


def fig1(side: float = 1.0) -> SimplicialComplex:
    """Two equilateral triangles sharing an edge: four compartments."""
    h = side * np.sqrt(3.0) / 2
    V = [[0.0, 0.0], [side, 0.0], [0.5 * side, h], [1.5 * side, h]]
    return build_complex(V, [[0, 1, 2], [1, 3, 2]])


def equilateral_strip(rows: int, cols: int, side: float = 1.0) -> SimplicialComplex:
    """Band of equilateral triangles with ``rows + 1`` vertex rows of ``cols`` vertices."""
    if rows < 1 or cols < 2:
        raise ValidationError("equilateral_strip needs rows >= 1 and cols >= 2")
    h = side * np.sqrt(3.0) / 2
    V = []
    for r in range(rows + 1):
        off = 0.5 * side if r % 2 else 0.0
        V.extend([i * side + off, r * h] for i in range(cols))
    cells = []
    for r in range(rows):
        lo, up = r * cols, (r + 1) * cols
        for i in range(cols - 1):
            if r % 2 == 0:
                cells.append([lo + i, lo + i + 1, up + i])
                cells.append([lo + i + 1, up + i + 1, up + i])
            else:
                cells.append([lo + i, up + i + 1, up + i])
                cells.append([lo + i, lo + i + 1, up + i + 1])
    return build_complex(V, cells)


GENERATORS = {"interval": interval, "fig1": fig1, "equilateral_strip": equilateral_strip}
