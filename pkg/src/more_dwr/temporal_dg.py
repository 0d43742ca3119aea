"""dG(r) temporal basis on the reference interval (0, 1) and slab matrices."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.polynomial import legendre

from .errors import ConfigurationError


class NodeFamily(str, Enum):
    GAUSS_LEGENDRE = "gauss_legendre"
    GAUSS_LOBATTO = "gauss_lobatto"


def gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights mapped to (0, 1)."""
    x, w = legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_lobatto_nodes(npts: int) -> np.ndarray:
    if npts < 2:
        raise ConfigurationError("Gauss-Lobatto needs at least two points")
    interior = legendre.Legendre.basis(npts - 1).deriv().roots()
    x = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    return 0.5 * (x + 1.0)


@dataclass(frozen=True)
class TemporalGrid:
    t_start: float
    t_end: float
    n_slabs: int

    def __post_init__(self):
        if self.n_slabs < 1 or not self.t_end > self.t_start:
            raise ConfigurationError("time grid needs M >= 1 and T_end > T_start")

    @property
    def k(self) -> float:
        return (self.t_end - self.t_start) / self.n_slabs

    def slab(self, m: int) -> tuple[float, float]:
        """Interval (t_{m-1}, t_m) for the 0-based slab index ``m``."""
        return self.t_start + m * self.k, self.t_start + (m + 1) * self.k

    @property
    def slabs(self) -> list[tuple[float, float]]:
        return [self.slab(m) for m in range(self.n_slabs)]

    def midpoints(self) -> np.ndarray:
        return self.t_start + (np.arange(self.n_slabs) + 0.5) * self.k


class TemporalBasis:
    """Lagrange polynomials on r+1 nodes of the chosen family in [0, 1]."""

    def __init__(self, r: int, family: NodeFamily | str = NodeFamily.GAUSS_LOBATTO):
        family = NodeFamily(family)
        if r < 0:
            raise ConfigurationError(f"temporal degree must be >= 0, got {r}")
        if family is NodeFamily.GAUSS_LOBATTO and r < 1:
            raise ConfigurationError("Gauss-Lobatto dG(r) needs r >= 1")
        self.r = r
        self.family = family
        if family is NodeFamily.GAUSS_LEGENDRE:
            self.nodes = gauss_legendre(r + 1)[0]
        else:
            self.nodes = gauss_lobatto_nodes(r + 1)
        # monomial coefficients of each Lagrange polynomial via the Vandermonde inverse
        vander = np.vander(self.nodes, r + 1, increasing=True)
        self._coeffs = np.linalg.inv(vander)  # column i = coefficients of L_i

    @property
    def n_dofs(self) -> int:
        return self.r + 1

    def values(self, tau) -> np.ndarray:
        """L_i(tau) with shape (len(tau), r+1)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        powers = np.vander(tau, self.r + 1, increasing=True)
        return powers @ self._coeffs

    def derivatives(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        exps = np.arange(self.r + 1)
        powers = np.zeros((len(tau), self.r + 1))
        for p in exps[1:]:
            powers[:, p] = p * tau ** (p - 1)
        return powers @ self._coeffs

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Internal Gauss-Legendre rule with r+2 points (exact to degree 2r+3)."""
        return gauss_legendre(self.r + 2)

    def integrals(self) -> np.ndarray:
        """int_0^1 L_i dt."""
        q, w = self.quadrature()
        return w @ self.values(q)


@dataclass(frozen=True)
class TemporalMatrices:
    """Slab matrices for step size k.

    ``C`` includes the jump term at the left end; ``C_nojump + D1 == C``.
    ``D`` (== D2) couples the previous slab's right trace into this slab.
    """

    M: np.ndarray
    C: np.ndarray
    D: np.ndarray
    C_nojump: np.ndarray
    D1: np.ndarray
    k: float

    @property
    def D2(self) -> np.ndarray:
        return self.D


def temporal_matrices(basis: TemporalBasis, k: float) -> TemporalMatrices:
    if not k > 0:
        raise ConfigurationError(f"time step must be positive, got {k}")
    q, w = basis.quadrature()
    phi = basis.values(q)
    dphi = basis.derivatives(q)
    mass = (phi.T * w) @ phi
    # C_nojump[i, j] = int phi_j' phi_i
    c_nojump = (phi.T * w) @ dphi
    left = basis.values([0.0])[0]
    right = basis.values([1.0])[0]
    d1 = np.outer(left, left)
    d2 = np.outer(left, right)
    return TemporalMatrices(
        M=k * mass, C=c_nojump + d1, D=d2, C_nojump=c_nojump, D1=d1, k=float(k)
    )


def temporal_matrices_split(basis: TemporalBasis, k: float):
    tm = temporal_matrices(basis, k)
    return tm.M, tm.C_nojump, tm.D1, tm.D


def evaluate_in_time(coeffs, basis: TemporalBasis, tau) -> np.ndarray:
    """sum_i coeffs[i] L_i(tau); ``coeffs`` has shape (r+1, n)."""
    return basis.values([tau])[0] @ np.asarray(coeffs)


def load_quadrature(basis: TemporalBasis, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Reference quadrature times and the (nq, r+1) weight matrix ``k w_q L_i(tau_q)``.

    The slab load is ``F_i = sum_q W[q, i] f(t_{m-1} + k tau_q)``.
    """
    q, w = basis.quadrature()
    return q, k * w[:, None] * basis.values(q)
