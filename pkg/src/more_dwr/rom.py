"""Galerkin-reduced slab systems for the primal and dual problems.

Spatial factors are projected once per basis update and re-tensored with the
small temporal matrices, so every reduced slab solve is a dense
``(r+1)N x (r+1)N`` problem whose cost does not depend on n.

Incoming data from the previous slab enters through its mass-weighted trace:
for a full trace ``w`` the primal needs ``Z_p^T M w`` and the estimator needs
``Z_d^T M w``. Within a sweep, where ``w = Z_p a``, these reduce to
``M_p a`` and ``M_dp a``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError
from .slab_solver import GoalFunctional, GoalKind
from .spatial_fem import SpatialOperators
from .temporal_dg import TemporalMatrices


def _project(matrix, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    return left.T @ (matrix @ right)


@dataclass
class ReducedSlabSolution:
    """Reduced coefficients of one slab, shape (r+1, N)."""

    m: int
    coeffs: np.ndarray


@dataclass
class ReducedOperators:
    temporal: TemporalMatrices
    left: np.ndarray
    right: np.ndarray
    Zp: np.ndarray
    Zd: np.ndarray
    mass: object  # full spatial mass, kept for projecting full traces
    M_p: np.ndarray
    K_p: np.ndarray
    M_d: np.ndarray
    K_d: np.ndarray
    M_dp: np.ndarray
    K_dp: np.ndarray
    A_p: np.ndarray
    A_d: np.ndarray
    goal_p: np.ndarray | None = None  # linear goal weights projected on Z_p
    goal_d: np.ndarray | None = None  # linear goal weights projected on Z_d
    goal_mass_pp: np.ndarray | None = None  # squared goal: Z_p^T M Z_p
    goal_mass_dp: np.ndarray | None = None  # squared goal derivative: Z_d^T M_masked Z_p
    _lu_p: tuple | None = field(default=None, repr=False)
    _lu_d: tuple | None = field(default=None, repr=False)

    @property
    def Np(self) -> int:
        return self.Zp.shape[1]

    @property
    def Nd(self) -> int:
        return self.Zd.shape[1]

    @property
    def n_time(self) -> int:
        return self.temporal.M.shape[0]

    # -- incoming traces -----------------------------------------------------

    def incoming_from_full(self, trace: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mass-weighted projections of a full spatial trace onto both bases."""
        mw = self.mass @ trace
        return self.Zp.T @ mw, self.Zd.T @ mw

    def incoming_from_reduced(self, U_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Same as ``incoming_from_full`` for the trace of a reduced primal slab."""
        a = self.right @ U_prev
        return self.M_p @ a, self.M_dp @ a

    def dual_incoming(self, Z_next: np.ndarray) -> np.ndarray:
        """Mass-weighted left trace of the next reduced dual slab."""
        return self.M_d.T @ (self.left @ Z_next)

    # -- solves ----------------------------------------------------------------

    def solve_primal(self, F_p: np.ndarray, incoming_p: np.ndarray | None) -> np.ndarray:
        """Solve ``A_N u = F_N - B_N u_prev``; ``incoming_p`` is ``Z_p^T M w``."""
        if self.Np == 0:
            return np.zeros((self.n_time, 0))
        rhs = F_p if incoming_p is None else F_p + np.outer(self.left, incoming_p)
        if self._lu_p is None:
            self._lu_p = _factor(self.A_p)
        x = sla.lu_solve(self._lu_p, rhs.ravel(), check_finite=False)
        return _checked(x).reshape(self.n_time, self.Np)

    def solve_dual(self, J_d: np.ndarray, incoming_d: np.ndarray | None) -> np.ndarray:
        """Solve ``A_N^T z = J_N - B_N^T z_next``; ``incoming_d`` from ``dual_incoming``."""
        if self.Nd == 0:
            return np.zeros((self.n_time, 0))
        rhs = J_d if incoming_d is None else J_d + np.outer(self.right, incoming_d)
        if self._lu_d is None:
            self._lu_d = _factor(self.A_d)
        x = sla.lu_solve(self._lu_d, rhs.ravel(), trans=1, check_finite=False)
        return _checked(x).reshape(self.n_time, self.Nd)

    # -- goal ----------------------------------------------------------------------

    def goal_value(self, goal: GoalFunctional, u: np.ndarray) -> float:
        tm = self.temporal
        if goal.linear:
            return float(tm.M.sum(axis=1) @ (u @ self.goal_p)) / goal.T
        return float(np.sum(tm.M * (u @ self.goal_mass_pp @ u.T))) / goal.T

    def goal_rhs(self, goal: GoalFunctional, u: np.ndarray | None) -> np.ndarray:
        """Dual right-hand side projected on Z_d; nonlinear goals linearize at ``u``."""
        tm = self.temporal
        if goal.linear:
            return np.outer(tm.M.sum(axis=1), self.goal_d) / goal.T
        return 2.0 / goal.T * tm.M @ (u @ self.goal_mass_dp.T)

    # -- estimator -----------------------------------------------------------------

    def cross_residual(self, F_d: np.ndarray, u: np.ndarray, incoming_d: np.ndarray | None):
        """``Z_d^T (F - A Z_p u - B w)`` as an (r+1, N_d) array."""
        tm = self.temporal
        res = F_d - tm.C @ u @ self.M_dp.T - tm.M @ u @ self.K_dp.T
        if incoming_d is not None:
            res = res + np.outer(self.left, incoming_d)
        return res

    def estimate(self, F_d, u, incoming_d, z) -> float:
        """Slab error estimate: the reduced dual applied to the primal residual."""
        if self.Nd == 0:
            return 0.0
        return float(np.sum(z * self.cross_residual(F_d, u, incoming_d)))


def _factor(A: np.ndarray):
    with warnings.catch_warnings():
        # singularity is reported below as a NumericalError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(A, check_finite=False)
    diag = np.abs(np.diag(lu[0]))
    if diag.size and (not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * diag.max()):
        raise NumericalError("reduced slab matrix is singular; the basis is degenerate")
    return lu


def _checked(x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite reduced solution")
    return x


def _tensor(temporal: TemporalMatrices, M: np.ndarray, K: np.ndarray) -> np.ndarray:
    return np.kron(temporal.C, M) + np.kron(temporal.M, K)


def reduce_operators(spatial: SpatialOperators, temporal: TemporalMatrices, Zp: np.ndarray,
                     Zd: np.ndarray, left: np.ndarray, right: np.ndarray,
                     goal: GoalFunctional | None = None) -> ReducedOperators:
    """Project the spatial factors on the primal/dual bases and re-tensor them."""
    n = spatial.n
    if Zp.shape[0] != n or Zd.shape[0] != n:
        raise ValueError(f"basis row count does not match spatial dimension {n}")
    M, K = spatial.mass, spatial.stiffness
    MZp, KZp = M @ Zp, K @ Zp
    M_p, K_p = Zp.T @ MZp, Zp.T @ KZp
    M_dp, K_dp = Zd.T @ MZp, Zd.T @ KZp
    M_d, K_d = _project(M, Zd, Zd), _project(K, Zd, Zd)
    ops = ReducedOperators(
        temporal=temporal, left=left, right=right, Zp=Zp, Zd=Zd, mass=M,
        M_p=M_p, K_p=K_p, M_d=M_d, K_d=K_d, M_dp=M_dp, K_dp=K_dp,
        A_p=_tensor(temporal, M_p, K_p), A_d=_tensor(temporal, M_d, K_d),
    )
    if goal is not None:
        if goal.linear:
            ops.goal_p = Zp.T @ goal.weights
            ops.goal_d = Zd.T @ goal.weights
        elif goal.kind is GoalKind.SQUARED_L2:
            GZp = goal.mass @ Zp
            ops.goal_mass_pp = Zp.T @ GZp
            masked = GZp.copy()
            if goal.mask is not None:
                masked[goal.mask] = 0.0
            ops.goal_mass_dp = Zd.T @ masked
    return ops


def reduce_load(Z: np.ndarray, load_matrix, weights: np.ndarray) -> np.ndarray:
    """``Z^T F`` of a slab load.

    ``load_matrix`` holds the spatial loads at the temporal quadrature times as
    sparse rows and ``weights`` is the (nq, r+1) temporal load-weight matrix.
    """
    return weights.T @ np.asarray(load_matrix @ Z)


def prolongate(coeffs: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Full slab coefficients ``Z u_N`` per temporal DoF, shape (r+1, n)."""
    return np.asarray(coeffs) @ Z.T


def restrict(U: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Euclidean projection coefficients ``Z^T U`` per temporal DoF."""
    return np.asarray(U) @ Z
