"""Tensor-product Q_s finite elements on axis-aligned boxes.

All global matrices are built as Kronecker products of 1D matrices, which is
exact for uniform tensor grids. DoFs are numbered lexicographically with the
x index running fastest; vector fields are stored component-block-wise
(all u_x, all u_y, ... then all v_x, ...).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache, reduce

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError


@dataclass(frozen=True)
class SpatialMesh:
    dim: int
    extents: tuple[tuple[float, float], ...]
    cells_per_axis: tuple[int, ...]
    degree: int = 1

    @property
    def nodes_per_axis(self) -> tuple[int, ...]:
        return tuple(c * self.degree + 1 for c in self.cells_per_axis)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.nodes_per_axis))

    @property
    def cell_sizes(self) -> tuple[float, ...]:
        return tuple((b - a) / c for (a, b), c in zip(self.extents, self.cells_per_axis))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        a, b = self.extents[axis]
        return np.linspace(a, b, self.nodes_per_axis[axis])

    def coordinates(self) -> np.ndarray:
        """(n_nodes, dim) array of node coordinates in DoF order."""
        axes = [self.axis_coordinates(d) for d in range(self.dim)]
        grids = np.meshgrid(*axes[::-1], indexing="ij")
        return np.stack([g.ravel() for g in grids[::-1]], axis=1)

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.extents]))


def build_mesh(dim, extents, cells_per_axis, s=1) -> SpatialMesh:
    if dim not in (1, 2, 3):
        raise ConfigurationError(f"dim must be 1, 2 or 3, got {dim}")
    extents = tuple((float(a), float(b)) for a, b in extents)
    if isinstance(cells_per_axis, (int, np.integer)):
        cells_per_axis = (int(cells_per_axis),) * dim
    cells_per_axis = tuple(int(c) for c in cells_per_axis)
    if len(extents) != dim or len(cells_per_axis) != dim:
        raise ConfigurationError("extents and cells_per_axis must have one entry per axis")
    if any(c < 1 for c in cells_per_axis):
        raise ConfigurationError(f"cells_per_axis must be positive, got {cells_per_axis}")
    if any(not b > a for a, b in extents):
        raise ConfigurationError(f"degenerate or inverted extents {extents}")
    if int(s) < 1:
        raise ConfigurationError(f"element degree must be >= 1, got {s}")
    return SpatialMesh(dim, extents, cells_per_axis, int(s))


# --- 1D reference element ----------------------------------------------------


def _lagrange_1d(nodes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the Lagrange polynomials on ``nodes`` at ``x``.

    Returns arrays of shape (len(x), len(nodes)).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = len(nodes)
    val = np.ones((len(x), p))
    der = np.zeros((len(x), p))
    for i in range(p):
        others = [nodes[j] for j in range(p) if j != i]
        denom = np.prod([nodes[i] - o for o in others])
        terms = np.stack([x - o for o in others], axis=1) if others else np.ones((len(x), 0))
        val[:, i] = np.prod(terms, axis=1) / denom
        d = np.zeros(len(x))
        for k in range(len(others)):
            d += np.prod(np.delete(terms, k, axis=1), axis=1)
        der[:, i] = d / denom
    return val, der


@dataclass(frozen=True)
class _Reference1D:
    degree: int
    nodes: np.ndarray
    qpoints: np.ndarray
    qweights: np.ndarray
    phi: np.ndarray  # (nq, s+1)
    dphi: np.ndarray  # (nq, s+1)


@lru_cache(maxsize=None)
def _reference(s: int) -> _Reference1D:
    nodes = np.linspace(0.0, 1.0, s + 1)
    xg, wg = np.polynomial.legendre.leggauss(s + 1)
    q = 0.5 * (xg + 1.0)
    w = 0.5 * wg
    phi, dphi = _lagrange_1d(nodes, q)
    return _Reference1D(s, nodes, q, w, phi, dphi)


def _assemble_1d(n_cells: int, h: float, s: int, local: np.ndarray) -> sp.csr_matrix:
    n = n_cells * s + 1
    loc = np.arange(s + 1)
    rows, cols, vals = [], [], []
    for c in range(n_cells):
        idx = c * s + loc
        rows.append(np.repeat(idx, s + 1))
        cols.append(np.tile(idx, s + 1))
        vals.append(local.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def _matrices_1d(n_cells: int, h: float, s: int) -> dict[str, sp.csr_matrix]:
    """1D mass, stiffness and mixed matrices.

    ``D[i, j] = int phi_i phi_j'`` (derivative on the trial function).
    """
    ref = _reference(s)
    w = ref.qweights
    mass = h * (ref.phi.T * w) @ ref.phi
    stiff = (ref.dphi.T * w) @ ref.dphi / h
    mixed = (ref.phi.T * w) @ ref.dphi
    return {
        "M": _assemble_1d(n_cells, h, s, mass),
        "S": _assemble_1d(n_cells, h, s, stiff),
        "D": _assemble_1d(n_cells, h, s, mixed),
    }


def _kron_axes(factors: list[sp.spmatrix]) -> sp.csr_matrix:
    """Kronecker product over axes given in x, y, z order (x fastest)."""
    return reduce(lambda acc, f: sp.kron(f, acc, format="csr"), factors[1:], factors[0].tocsr())


def _axis_factors(mesh: SpatialMesh) -> list[dict[str, sp.csr_matrix]]:
    return [
        _matrices_1d(c, h, mesh.degree) for c, h in zip(mesh.cells_per_axis, mesh.cell_sizes)
    ]


def mass_matrix(mesh: SpatialMesh) -> sp.csr_matrix:
    f = _axis_factors(mesh)
    return _kron_axes([a["M"] for a in f])


def laplace_matrix(mesh: SpatialMesh) -> sp.csr_matrix:
    f = _axis_factors(mesh)
    terms = []
    for d in range(mesh.dim):
        terms.append(_kron_axes([f[c]["S"] if c == d else f[c]["M"] for c in range(mesh.dim)]))
    return reduce(lambda a, b: a + b, terms).tocsr()


def derivative_gram(mesh: SpatialMesh, a: int, b: int, factors=None) -> sp.csr_matrix:
    """``P[i, j] = int d_a phi_j * d_b phi_i`` (trial derivative a, test derivative b)."""
    f = factors or _axis_factors(mesh)
    parts = []
    for c in range(mesh.dim):
        if c == a and c == b:
            parts.append(f[c]["S"])
        elif c == a:
            parts.append(f[c]["D"])
        elif c == b:
            parts.append(f[c]["D"].T.tocsr())
        else:
            parts.append(f[c]["M"])
    return _kron_axes(parts)


# --- operators ---------------------------------------------------------------


@dataclass(frozen=True)
class SpatialOperators:
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    dirichlet_mask: np.ndarray
    components: int = 1
    raw_mass: sp.csr_matrix | None = field(default=None, repr=False)
    raw_stiffness: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.mass.shape[0]


@dataclass(frozen=True)
class ElastoMaterial:
    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError(f"Lame parameter mu must be positive, got {self.mu}")
        if not self.lam > -2.0 / 3.0 * self.mu:
            raise ConfigurationError(f"Lame parameter lambda must exceed -2/3 mu, got {self.lam}")


def boundary_mask(mesh: SpatialMesh, faces=None) -> np.ndarray:
    """Nodes on the given faces; ``faces`` is a list of (axis, side) with side 0/1.

    ``None`` selects the whole boundary.
    """
    if faces is None:
        faces = [(d, side) for d in range(mesh.dim) for side in (0, 1)]
    idx = np.indices(mesh.nodes_per_axis[::-1]).reshape(mesh.dim, -1)[::-1]
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    for axis, side in faces:
        last = mesh.nodes_per_axis[axis] - 1
        mask |= idx[axis] == (0 if side == 0 else last)
    return mask


def apply_dirichlet(matrix: sp.spmatrix, mask: np.ndarray, diagonal: float = 1.0) -> sp.csr_matrix:
    """Symmetric elimination: constrained rows/columns zeroed, ``diagonal`` on the diagonal."""
    keep = sp.diags((~mask).astype(float))
    out = keep @ matrix @ keep
    out = out + sp.diags(mask.astype(float) * diagonal)
    out = sp.csr_matrix(out)
    out.eliminate_zeros()
    return out


def assemble_heat_operators(mesh: SpatialMesh, dirichlet: bool = True) -> SpatialOperators:
    m = mass_matrix(mesh)
    k = laplace_matrix(mesh)
    mask = boundary_mask(mesh) if dirichlet else np.zeros(mesh.n_nodes, dtype=bool)
    return SpatialOperators(
        apply_dirichlet(m, mask), apply_dirichlet(k, mask), mask, 1, raw_mass=m, raw_stiffness=k
    )


def elasticity_matrix(mesh: SpatialMesh, material: ElastoMaterial) -> sp.csr_matrix:
    """Block matrix of ``(sigma(u), grad phi)`` over the d displacement components."""
    d = mesh.dim
    f = _axis_factors(mesh)
    lap = laplace_matrix(mesh)
    grams = {(a, b): derivative_gram(mesh, a, b, f) for a in range(d) for b in range(d)}
    blocks = [[None] * d for _ in range(d)]
    for a in range(d):  # test component
        for b in range(d):  # trial component
            blk = material.mu * grams[(a, b)] + material.lam * grams[(b, a)]
            if a == b:
                blk = blk + material.mu * lap
            blocks[a][b] = blk
    return sp.bmat(blocks, format="csr")


def assemble_elasto_operators(
    mesh: SpatialMesh, material: ElastoMaterial, clamped_faces=((0, 0),)
) -> SpatialOperators:
    """First-order (u, v) system matrices.

    ``mass`` couples (v, phi^u) + (u, phi^v); ``stiffness`` holds the elastic
    block for the u-equations and -(v, phi^v) for the kinematic equations.
    """
    d = mesh.dim
    scalar_mass = mass_matrix(mesh)
    vec_mass = sp.block_diag([scalar_mass] * d, format="csr")
    elast = elasticity_matrix(mesh, material)
    zero = sp.csr_matrix(vec_mass.shape)
    m = sp.bmat([[zero, vec_mass], [vec_mass, zero]], format="csr")
    k = sp.bmat([[elast, zero], [zero, -vec_mass]], format="csr")
    node_mask = boundary_mask(mesh, list(clamped_faces))
    mask = np.tile(node_mask, 2 * d)
    return SpatialOperators(
        apply_dirichlet(m, mask),
        apply_dirichlet(k, mask),
        mask,
        2 * d,
        raw_mass=m,
        raw_stiffness=k,
    )


# --- quadrature-based assembly of functionals --------------------------------


def _lexicographic(ranges) -> np.ndarray:
    """All index tuples of the given per-axis ranges, x index fastest."""
    grids = np.meshgrid(*ranges[::-1], indexing="ij")
    return np.stack([g.ravel() for g in grids[::-1]], axis=1)


@lru_cache(maxsize=None)
def _tensor_reference(dim: int, s: int):
    ref = _reference(s)
    qidx = _lexicographic([np.arange(len(ref.qpoints))] * dim)
    lidx = _lexicographic([np.arange(s + 1)] * dim)
    qref = ref.qpoints[qidx]
    weights = np.prod(ref.qweights[qidx], axis=1)
    shape = np.prod(ref.phi[qidx[:, None, :], lidx[None, :, :]], axis=2)  # (nq, nloc)
    return qref, weights, shape, lidx


@lru_cache(maxsize=8)
def _mesh_quadrature(mesh: SpatialMesh):
    """Quadrature points and global node ids of every cell, cells in x-fastest order."""
    s = mesh.degree
    h = np.array(mesh.cell_sizes)
    origin = np.array([a for a, _ in mesh.extents])
    cells = _lexicographic([np.arange(c) for c in mesh.cells_per_axis])
    qref, weights, shape, lidx = _tensor_reference(mesh.dim, s)
    points = origin + (cells[:, None, :] + qref[None, :, :]) * h
    strides = np.cumprod((1,) + mesh.nodes_per_axis[:-1])
    gnodes = ((cells[:, None, :] * s + lidx[None, :, :]) * strides).sum(axis=2)
    return points, weights * np.prod(h), shape, gnodes


def _cell_quadrature(mesh: SpatialMesh, lo=None, hi=None):
    """Quadrature data restricted to the cells intersecting the box [lo, hi].

    Returns (points (nc, nq, dim), weights (nq,) scaled by cell volume,
    local shape values (nq, nloc), global node ids (nc, nloc)).
    """
    points, weights, shape, gnodes = _mesh_quadrature(mesh)
    if lo is None:
        return points, weights, shape, gnodes
    ids = None
    stride = 1
    for ax in range(mesh.dim):
        nc = mesh.cells_per_axis[ax]
        a0, h = mesh.extents[ax][0], mesh.cell_sizes[ax]
        c0 = min(max(int(np.floor((lo[ax] - a0) / h)) - 1, 0), nc)
        c1 = min(max(int(np.ceil((hi[ax] - a0) / h)) + 1, 0), nc)
        if c1 <= c0:
            return None
        rng = np.arange(c0, c1) * stride
        ids = rng if ids is None else (ids[None, :] + rng[:, None]).ravel()
        stride *= nc
    if mesh.dim == 1:
        sl = slice(ids[0], ids[-1] + 1)
        return points[sl], weights, shape, gnodes[sl]
    return points[ids], weights, shape, gnodes[ids]


def integrate_against_basis(mesh: SpatialMesh, func, lo=None, hi=None):
    """Sparse load ``int func(x) phi_i dx`` over cells touching [lo, hi].

    Returns (indices, values) with unique, sorted indices.
    """
    data = _cell_quadrature(mesh, lo, hi)
    if data is None:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    points, weights, shape, gnodes = data
    fvals = func(points)  # (nc, nq)
    local = (fvals * weights) @ shape  # (nc, nloc)
    flat = gnodes.ravel()
    base = flat.min()
    touched = np.bincount(flat - base) > 0
    summed = np.bincount(flat - base, weights=local.ravel())
    idx = np.flatnonzero(touched)
    return idx + base, summed[idx]


def indicator_integral(mesh: SpatialMesh, lo, hi) -> np.ndarray:
    """``int_box phi_i dx`` with the characteristic function sampled at quadrature points."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def chi(x):
        return np.all((x >= lo) & (x <= hi), axis=-1).astype(float)

    idx, vals = integrate_against_basis(mesh, chi, lo, hi)
    out = np.zeros(mesh.n_nodes)
    out[idx] = vals
    return out


def face_integral_vector(mesh: SpatialMesh, axis: int, side: int) -> np.ndarray:
    """``int_face phi_i ds`` for the face {x_axis = lo/hi}."""
    parts = []
    for c in range(mesh.dim):
        n_nodes = mesh.nodes_per_axis[c]
        if c == axis:
            v = np.zeros(n_nodes)
            v[0 if side == 0 else -1] = 1.0
        else:
            f = _matrices_1d(mesh.cells_per_axis[c], mesh.cell_sizes[c], mesh.degree)
            v = np.asarray(f["M"].sum(axis=0)).ravel()
        parts.append(v)
    return reduce(lambda acc, v: np.kron(v, acc), parts[1:], parts[0])


def face_gradient_functional(mesh: SpatialMesh, face_axis: int, side: int, deriv_axis: int):
    """Vector g with ``g . u = int_face d_{deriv_axis} u ds`` for a scalar Q_s field."""
    ref = _reference(mesh.degree)
    s = mesh.degree
    parts = []
    for c in range(mesh.dim):
        n_nodes = mesh.nodes_per_axis[c]
        h = mesh.cell_sizes[c]
        nc = mesh.cells_per_axis[c]
        if c == face_axis:
            v = np.zeros(n_nodes)
            x = np.array([0.0 if side == 0 else 1.0])
            vals, ders = _lagrange_1d(ref.nodes, x)
            if c == deriv_axis:
                loc = ders[0] / h
            else:
                loc = vals[0]
            start = 0 if side == 0 else (nc - 1) * s
            v[start : start + s + 1] = loc
        elif c == deriv_axis:
            # int phi_i' dx along the axis = phi_i(b) - phi_i(a)
            v = np.zeros(n_nodes)
            v[0] = -1.0
            v[-1] = 1.0
        else:
            f = _matrices_1d(nc, h, s)
            v = np.asarray(f["M"].sum(axis=0)).ravel()
        parts.append(v)
    return reduce(lambda acc, v: np.kron(v, acc), parts[1:], parts[0])


# --- sources ------------------------------------------------------------------

SOURCE_IDS = ("none", "moving_1d", "rotating_2d", "beam_traction_3d")


def moving_1d_amplitude_center(t: float) -> tuple[float, float]:
    if t <= 1.0:
        return 0.2, 0.4 * t + 0.1
    if t <= 2.0:
        return -0.5, 0.4 * t + 0.1
    if t <= 3.0:
        return 1.0, 0.9 - 0.4 * (t - 2.0)
    return -0.75, 0.9 - 0.4 * (t - 2.0)


def rotating_2d_center(t: float) -> np.ndarray:
    return np.array(
        [0.5 + 0.25 * np.cos(2 * np.pi * t), 0.5 + 0.25 * np.sin(2 * np.pi * t)]
    )


def beam_traction_amplitude(t: float, f_max=0.5, t1=5.0, t2=6.0) -> float:
    if t <= t1:
        return f_max * t / t1
    if t <= t2:
        return f_max * (1.0 - (t - t1) / (t2 - t1))
    return 0.0


class SourceAssembler:
    """Sparse spatial load vectors ``int f(t, x) phi_i dx`` for the built-in sources.

    Time intervals of the piecewise sources are treated as half-open on the
    left, so a quadrature time exactly at a switching point never occurs for
    interior Gauss points.
    """

    def __init__(self, mesh: SpatialMesh, source_id: str, dirichlet_mask=None, components=1):
        if source_id not in SOURCE_IDS:
            raise ConfigurationError(f"unknown source_id {source_id!r}")
        self.mesh = mesh
        self.source_id = source_id
        self.components = components
        self.n = mesh.n_nodes * components
        self.mask = dirichlet_mask
        self._beam = None
        if source_id == "beam_traction_3d":
            if mesh.dim != 3 or components != 2 * mesh.dim:
                raise ConfigurationError("beam_traction_3d needs a 3D (u, v) vector field")
            top = face_integral_vector(mesh, mesh.dim - 1, 1)
            vec = np.zeros(self.n)
            # vertical displacement component of the u-block
            offset = (mesh.dim - 1) * mesh.n_nodes
            vec[offset : offset + mesh.n_nodes] = top
            if dirichlet_mask is not None:
                vec[dirichlet_mask] = 0.0
            idx = np.flatnonzero(vec)
            self._beam = (idx, vec[idx])

    def sparse(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        mesh = self.mesh
        if self.source_id == "none":
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        if self.source_id == "moving_1d":
            amp, center = moving_1d_amplitude_center(t)
            lo, hi = center - 0.05, center + 0.05

            def f(x):
                return amp * ((x[..., 0] >= lo) & (x[..., 0] <= hi))

            idx, vals = integrate_against_basis(mesh, f, [lo], [hi])
        elif self.source_id == "rotating_2d":
            p = rotating_2d_center(t)
            r = 0.125
            amp = np.sin(4 * np.pi * t)

            def f(x):
                return amp * (((x[..., 0] - p[0]) ** 2 + (x[..., 1] - p[1]) ** 2) < r * r)

            idx, vals = integrate_against_basis(mesh, f, p - r, p + r)
        else:
            idx, base = self._beam
            return idx, beam_traction_amplitude(t) * base
        if self.mask is not None and len(idx):
            keep = ~self.mask[idx]
            idx, vals = idx[keep], vals[keep]
        return idx, vals

    def dense(self, t: float) -> np.ndarray:
        out = np.zeros(self.n)
        idx, vals = self.sparse(t)
        out[idx] = vals
        return out


def assemble_source(mesh: SpatialMesh, source_id: str, t: float, dirichlet_mask=None, components=1):
    return SourceAssembler(mesh, source_id, dirichlet_mask, components).dense(t)
