"""Full-order slab systems, primal/dual slab solves and goal functionals.

Slab vectors are arrays of shape (r+1, n): one spatial vector per temporal
node, which matches the time-major ordering of ``kron(C_k, M_h)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError
from .spatial_fem import (
    SourceAssembler,
    SpatialMesh,
    SpatialOperators,
    face_gradient_functional,
    indicator_integral,
)
from .temporal_dg import (
    TemporalBasis,
    TemporalGrid,
    TemporalMatrices,
    load_quadrature,
    temporal_matrices,
)


@dataclass
class SlabSystem:
    spatial: SpatialOperators
    temporal: TemporalMatrices
    left: np.ndarray  # basis values at tau = 0
    right: np.ndarray  # basis values at tau = 1
    A: sp.csc_matrix
    B: sp.csr_matrix
    transposed: bool = False
    _lu: object = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.spatial.n

    @property
    def n_time(self) -> int:
        return self.temporal.M.shape[0]

    def factorize(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.A.tocsc())
            except RuntimeError as exc:
                raise NumericalError(f"slab matrix factorization failed: {exc}") from exc
        return self._lu

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``A x = rhs`` (or ``A^T x = rhs`` for a dual system); rhs is (r+1, n)."""
        lu = self.factorize()
        x = lu.solve(np.ascontiguousarray(rhs.ravel()), trans="T" if self.transposed else "N")
        if not np.all(np.isfinite(x)):
            raise NumericalError("non-finite slab solution")
        return x.reshape(rhs.shape)

    def apply_A(self, U: np.ndarray) -> np.ndarray:
        mat = self.A.T if self.transposed else self.A
        return (mat @ U.ravel()).reshape(U.shape)

    def apply_B(self, U_prev: np.ndarray) -> np.ndarray:
        """``B U_prev`` for the primal; ``B^T Z_next`` for a dual system."""
        mass = self.spatial.mass
        if not self.transposed:
            trace = self.right @ U_prev
            return -np.outer(self.left, mass @ trace)
        trace = self.left @ U_prev
        return -np.outer(self.right, mass.T @ trace)


def build_primal_system(spatial: SpatialOperators, temporal: TemporalMatrices, basis: TemporalBasis):
    """``A = C_k (x) M_h + M_k (x) K_h``, ``B = -D_k (x) M_h``.

    With the jump-augmented C_k this is also the elastodynamics form
    ``C_k (x) M_h + M_k (x) K_h + D_k^1 (x) M_h``.
    """
    if spatial.mass.shape != spatial.stiffness.shape:
        raise ValueError("spatial operator dimensions differ")
    if temporal.M.shape != temporal.C.shape:
        raise ValueError("temporal matrix dimensions differ")
    a = sp.kron(temporal.C, spatial.mass) + sp.kron(temporal.M, spatial.stiffness)
    b = -sp.kron(temporal.D, spatial.mass)
    left = basis.values([0.0])[0]
    right = basis.values([1.0])[0]
    return SlabSystem(spatial, temporal, left, right, a.tocsc(), b.tocsr())


def build_dual_system(system: SlabSystem) -> SlabSystem:
    """Transposed slab system; shares the factorization with the primal."""
    return SlabSystem(
        system.spatial,
        system.temporal,
        system.left,
        system.right,
        system.A,
        system.B,
        transposed=not system.transposed,
        _lu=system._lu,
    )


def solve_primal_slab(system: SlabSystem, U_prev: np.ndarray, F: np.ndarray) -> np.ndarray:
    return system.solve(F - system.apply_B(U_prev))


def solve_dual_slab(dual: SlabSystem, Z_next: np.ndarray | None, J: np.ndarray) -> np.ndarray:
    rhs = J if Z_next is None else J - dual.apply_B(Z_next)
    return dual.solve(rhs)


def slab_residual(system: SlabSystem, U: np.ndarray, U_prev: np.ndarray, F: np.ndarray):
    """``F - A U - B U_prev`` for the primal system."""
    return F - system.apply_A(U) - system.apply_B(U_prev)


# --- goal functionals --------------------------------------------------------


class GoalKind(str, Enum):
    MEAN_VALUE_SUBDOMAIN = "mean_value_subdomain"
    SQUARED_L2 = "squared_l2"
    BOUNDARY_STRESS = "boundary_stress"


@dataclass
class GoalFunctional:
    """Time-averaged goal ``J(u) = 1/T int_0^T J_1(u(t)) dt``.

    Linear kinds are represented by a spatial vector ``weights`` with
    ``J_1(u) = weights . u``.
    """

    kind: GoalKind
    T: float
    weights: np.ndarray | None = None
    mass: sp.spmatrix | None = None
    mask: np.ndarray | None = None

    @property
    def linear(self) -> bool:
        return self.kind is not GoalKind.SQUARED_L2

    def slab_rhs(self, temporal: TemporalMatrices, U_lin: np.ndarray | None = None) -> np.ndarray:
        """Derivative of the slab-restricted goal as a slab vector (r+1, n)."""
        if self.linear:
            row = temporal.M.sum(axis=1)  # int_{I_m} phi_i dt
            return np.outer(row, self.weights) / self.T
        if U_lin is None:
            raise ConfigurationError("squared_l2 goal needs a linearization state")
        out = 2.0 / self.T * temporal.M @ (self.mass @ U_lin.T).T
        if self.mask is not None:
            out[:, self.mask] = 0.0
        return out

    def slab_value(self, temporal: TemporalMatrices, U: np.ndarray) -> float:
        if self.linear:
            row = temporal.M.sum(axis=1)
            return float(row @ (U @ self.weights)) / self.T
        mu = (self.mass @ U.T).T
        return float(np.sum(temporal.M * (U @ mu.T))) / self.T


def mean_value_goal(mesh: SpatialMesh, T: float, lo, hi, mask=None) -> GoalFunctional:
    w = indicator_integral(mesh, lo, hi)
    if mask is not None:
        w = np.where(mask, 0.0, w)
    return GoalFunctional(GoalKind.MEAN_VALUE_SUBDOMAIN, T, weights=w, mask=mask)


def squared_l2_goal(spatial: SpatialOperators, T: float) -> GoalFunctional:
    mass = spatial.raw_mass if spatial.raw_mass is not None else spatial.mass
    return GoalFunctional(GoalKind.SQUARED_L2, T, mass=mass, mask=spatial.dirichlet_mask)


def boundary_stress_weights(mesh: SpatialMesh, mu: float, lam: float, component: int,
                            face=(0, 0)) -> np.ndarray:
    """Vector w on the (u, v) unknowns with ``w . U = int_face (sigma(u) n)_component ds``."""
    d = mesh.dim
    axis, side = face
    normal = -1.0 if side == 0 else 1.0
    nn = mesh.n_nodes
    g = [face_gradient_functional(mesh, axis, side, a) for a in range(d)]
    w = np.zeros(2 * d * nn)

    def add(comp, vec):
        w[comp * nn : (comp + 1) * nn] += vec

    c = component
    # (sigma n)_c = n_axis * sigma_{c, axis}
    add(c, normal * mu * g[axis])
    add(axis, normal * mu * g[c])
    if c == axis:
        for a in range(d):
            add(a, normal * lam * g[a])
    return w


def boundary_stress_goal(mesh, T, mu, lam, component=2, face=(0, 0), mask=None) -> GoalFunctional:
    w = boundary_stress_weights(mesh, mu, lam, component, face)
    if mask is not None:
        w = np.where(mask, 0.0, w)
    return GoalFunctional(GoalKind.BOUNDARY_STRESS, T, weights=w, mask=mask)


def assemble_goal_rhs(goal: GoalFunctional, temporal: TemporalMatrices, linearization_state=None):
    return goal.slab_rhs(temporal, linearization_state)


def evaluate_goal(goal: GoalFunctional, temporal: TemporalMatrices, solutions) -> tuple[float, np.ndarray]:
    """Total and per-slab goal values of a trajectory (iterable of slab arrays)."""
    values = np.array([goal.slab_value(temporal, U) for U in solutions])
    return float(values.sum()), values


# --- full-order model ---------------------------------------------------------


class FullOrderModel:
    """Everything needed to march the full-order primal and dual problems."""

    def __init__(
        self,
        mesh: SpatialMesh,
        spatial: SpatialOperators,
        basis: TemporalBasis,
        grid: TemporalGrid,
        source: SourceAssembler,
        goal: GoalFunctional,
        u0: np.ndarray | None = None,
    ):
        self.mesh = mesh
        self.spatial = spatial
        self.basis = basis
        self.grid = grid
        self.temporal = temporal_matrices_for(basis, grid)
        self.system = build_primal_system(spatial, self.temporal, basis)
        self.dual = build_dual_system(self.system)
        self.source = source
        self.goal = goal
        self.n = spatial.n
        self.n_time = basis.n_dofs
        u0 = np.zeros(self.n) if u0 is None else np.asarray(u0, dtype=float)
        self.initial_trace = np.tile(u0, (self.n_time, 1))
        self.load_times, self.load_weights = load_quadrature(basis, grid.k)
        self.solve_count = {"primal": 0, "dual": 0}

    def factorize(self):
        self.system.factorize()
        self.dual._lu = self.system._lu

    def quadrature_times(self, m: int) -> np.ndarray:
        t0, _ = self.grid.slab(m)
        return t0 + self.grid.k * self.load_times

    def load_sparse(self, m: int):
        """Per quadrature time: (indices, values) of the spatial source."""
        return [self.source.sparse(t) for t in self.quadrature_times(m)]

    def load_matrix(self, m: int) -> sp.csr_matrix:
        """Spatial loads at the slab's quadrature times as rows of a sparse matrix."""
        rows, cols, vals = [], [], []
        for q, (idx, v) in enumerate(self.load_sparse(m)):
            rows.append(np.full(len(idx), q))
            cols.append(idx)
            vals.append(v)
        shape = (len(self.load_times), self.n)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
        )

    def load(self, m: int) -> np.ndarray:
        """Slab load vector, shape (r+1, n)."""
        return np.asarray((self.load_matrix(m).T @ self.load_weights).T)

    def solve_primal(self, m: int, U_prev: np.ndarray | None) -> np.ndarray:
        U_prev = self.initial_trace if U_prev is None else U_prev
        self.factorize()
        self.solve_count["primal"] += 1
        return solve_primal_slab(self.system, U_prev, self.load(m))

    def goal_rhs(self, U_lin: np.ndarray | None = None) -> np.ndarray:
        return self.goal.slab_rhs(self.temporal, U_lin)

    def solve_dual(self, m: int, Z_next: np.ndarray | None, U_lin: np.ndarray | None = None):
        self.factorize()
        self.solve_count["dual"] += 1
        return solve_dual_slab(self.dual, Z_next, self.goal_rhs(U_lin))

    def goal_value(self, U: np.ndarray) -> float:
        return self.goal.slab_value(self.temporal, U)

    def residual(self, m: int, U: np.ndarray, U_prev: np.ndarray | None) -> np.ndarray:
        U_prev = self.initial_trace if U_prev is None else U_prev
        return slab_residual(self.system, U, U_prev, self.load(m))

    def run_primal(self, store: bool = False, callback=None):
        """March the primal problem over all slabs.

        Returns per-slab goal values and, if ``store``, the list of slab solutions.
        """
        values = np.zeros(self.grid.n_slabs)
        kept = [] if store else None
        U_prev = None
        for m in range(self.grid.n_slabs):
            U = self.solve_primal(m, U_prev)
            values[m] = self.goal_value(U)
            if store:
                kept.append(U)
            if callback is not None:
                callback(m, U)
            U_prev = U
        return values, kept

    def run_dual(self, primal=None):
        """March the dual problem backwards; nonlinear goals linearize at ``primal``."""
        out = [None] * self.grid.n_slabs
        Z_next = None
        for m in reversed(range(self.grid.n_slabs)):
            U_lin = None if primal is None or self.goal.linear else primal[m]
            Z = self.solve_dual(m, Z_next, U_lin)
            out[m] = Z
            Z_next = Z
        return out


def temporal_matrices_for(basis: TemporalBasis, grid: TemporalGrid) -> TemporalMatrices:
    return temporal_matrices(basis, grid.k)


def monolithic_solve(fom: FullOrderModel) -> list[np.ndarray]:
    """Solve the block-bidiagonal system over all slabs at once (testing aid)."""
    M = fom.grid.n_slabs
    A, B = fom.system.A, fom.system.B
    blocks = [[None] * M for _ in range(M)]
    for m in range(M):
        blocks[m][m] = A
        if m > 0:
            blocks[m][m - 1] = B
    big = sp.bmat(blocks, format="csc")
    rhs = np.concatenate([fom.load(m).ravel() for m in range(M)])
    rhs[: A.shape[0]] -= (B @ fom.initial_trace.ravel())
    x = spla.spsolve(big, rhs)
    size = fom.n_time * fom.n
    return [x[m * size : (m + 1) * size].reshape(fom.n_time, fom.n) for m in range(M)]


# --- binary snapshot dump ------------------------------------------------------

SNAPSHOT_HEADER = np.dtype([("n", "<i8"), ("r", "<i8"), ("m", "<i8")])


def write_snapshot(fh, m: int, U: np.ndarray) -> None:
    """Append one slab record: header (n, r, m) as little-endian int64, then
    the (r+1)*n coefficients as little-endian float64 in time-major order."""
    n_time, n = U.shape
    np.array([(n, n_time - 1, m)], dtype=SNAPSHOT_HEADER).tofile(fh)
    np.ascontiguousarray(U, dtype="<f8").tofile(fh)


def read_snapshots(path) -> dict[int, np.ndarray]:
    out = {}
    with open(path, "rb") as fh:
        while True:
            head = np.fromfile(fh, dtype=SNAPSHOT_HEADER, count=1)
            if len(head) == 0:
                break
            n, r, m = (int(head[0][key]) for key in ("n", "r", "m"))
            data = np.fromfile(fh, dtype="<f8", count=(r + 1) * n)
            out[m] = data.reshape(r + 1, n)
    return out
