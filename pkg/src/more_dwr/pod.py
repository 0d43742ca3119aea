"""Proper orthogonal decomposition: batch bases and incremental rank-b updates.

The energy criterion compares retained squared singular values against the
running total of all snapshot energy ever absorbed, so truncation in earlier
updates is not forgotten.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError

RANK_RTOL = 1e-14
TOL_ORTH = 1e-10
_ENERGY_SLACK = 4.0 * np.finfo(float).eps


@dataclass
class ReducedBasis:
    """Orthonormal columns ``Z`` with their singular values ``sigma``."""

    Z: np.ndarray
    sigma: np.ndarray
    eps: float
    total_energy: float = 0.0

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def N(self) -> int:
        return self.Z.shape[1]

    @property
    def retained_energy(self) -> float:
        """Fraction of all absorbed snapshot energy kept by the basis."""
        if self.total_energy <= 0.0:
            return 1.0
        return float(np.sum(self.sigma**2) / self.total_energy)

    @classmethod
    def empty(cls, n: int, eps: float) -> "ReducedBasis":
        _check_eps(eps)
        return cls(np.zeros((n, 0)), np.zeros(0), float(eps), 0.0)

    def orthonormality_error(self) -> float:
        if self.N == 0:
            return 0.0
        return float(np.max(np.abs(self.Z.T @ self.Z - np.eye(self.N))))


def _check_eps(eps: float) -> None:
    if not 0.0 < eps <= 1.0:
        raise ConfigurationError(f"energy threshold eps must lie in (0, 1], got {eps}")


def truncation_rank(sigma: np.ndarray, eps: float, total_energy: float) -> int:
    """Smallest N with ``sum(sigma[:N]**2) >= eps * total_energy``.

    ``sigma`` must already be free of numerically zero values. If even all
    values fall short (possible once energy has been discarded earlier), all
    of them are kept.
    """
    if len(sigma) == 0 or total_energy <= 0.0:
        return 0
    cum = np.cumsum(sigma**2)
    target = eps * total_energy * (1.0 - _ENERGY_SLACK)
    hits = np.nonzero(cum >= target)[0]
    return int(hits[0]) + 1 if len(hits) else len(sigma)


def _numerical_rank(sigma: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if len(sigma) == 0 or sigma[0] <= 0.0:
        return 0
    return int(np.sum(sigma > rtol * sigma[0]))


def _select_method(n: int, q: int) -> str:
    ratio = q / n
    if 0.1 <= ratio <= 10.0:
        return "svd"
    return "eig_left" if ratio > 10.0 else "eig_right"


def pod_batch(Y, eps: float, method: str | None = None) -> ReducedBasis:
    """POD basis of the snapshot matrix ``Y`` (n x q).

    ``method`` is ``"svd"``, ``"eig_left"`` (eigenpairs of Y Y^T, for n << q)
    or ``"eig_right"`` (eigenpairs of Y^T Y, for q << n); by default it is
    chosen from the aspect ratio.
    """
    _check_eps(eps)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, q = Y.shape
    if q < 1:
        raise ConfigurationError("pod_batch needs at least one snapshot")
    energy = float(np.sum(Y * Y))
    if energy == 0.0:
        return ReducedBasis(np.zeros((n, 0)), np.zeros(0), float(eps), 0.0)
    method = method or _select_method(n, q)
    if method == "svd":
        U, s, _ = np.linalg.svd(Y, full_matrices=False)
        rank = _numerical_rank(s)
    elif method == "eig_left":
        lam, V = np.linalg.eigh(Y @ Y.T)
        order = np.argsort(lam)[::-1]
        lam, U = np.clip(lam[order], 0.0, None), V[:, order]
        s = np.sqrt(lam)
        # eigenvalues carry absolute noise of order eps_machine * lambda_1
        rank = min(_numerical_rank(s), int(np.sum(lam > n * np.finfo(float).eps * lam[0])))
    elif method == "eig_right":
        lam, V = np.linalg.eigh(Y.T @ Y)
        order = np.argsort(lam)[::-1]
        lam, V = np.clip(lam[order], 0.0, None), V[:, order]
        s = np.sqrt(lam)
        rank = min(_numerical_rank(s), int(np.sum(lam > q * np.finfo(float).eps * lam[0])))
        U = (Y @ V[:, :rank]) / s[:rank]
        # dividing by small singular values amplifies round-off; restore orthonormality
        Q, R = np.linalg.qr(U)
        U = Q * np.sign(np.diag(R))
    else:
        raise ConfigurationError(f"unknown POD method {method!r}")
    s = s[:rank]
    N = truncation_rank(s, eps, energy)
    return ReducedBasis(np.ascontiguousarray(U[:, :N]), s[:N].copy(), float(eps), energy)


def ipod_update(basis: ReducedBasis, bunch, eps: float | None = None,
                tol_orth: float = TOL_ORTH) -> ReducedBasis:
    """Absorb the snapshot columns ``bunch`` (n x b) into ``basis``.

    Additive rank-b SVD modification; right singular vectors are not tracked.
    An empty basis is initialized from ``pod_batch`` of the bunch.
    """
    eps = basis.eps if eps is None else float(eps)
    _check_eps(eps)
    B = np.asarray(bunch, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != basis.n:
        raise ConfigurationError(
            f"bunch column length {B.shape[0]} does not match basis dimension {basis.n}"
        )
    if basis.N == 0:
        fresh = pod_batch(B, eps)
        fresh.total_energy += basis.total_energy
        if fresh.total_energy > 0.0 and fresh.N:
            N = truncation_rank(fresh.sigma, eps, fresh.total_energy)
            fresh.Z, fresh.sigma = fresh.Z[:, :N], fresh.sigma[:N]
        return fresh
    bunch_energy = float(np.sum(B * B))
    if bunch_energy == 0.0:
        return ReducedBasis(basis.Z.copy(), basis.sigma.copy(), eps, basis.total_energy)
    Z = basis.Z
    H = Z.T @ B
    P = B - Z @ H
    # second Gram-Schmidt pass keeps P orthogonal to Z in floating point
    H2 = Z.T @ P
    P -= Z @ H2
    H += H2
    QP, RP = np.linalg.qr(P)
    N, b = basis.N, B.shape[1]
    F = np.zeros((N + b, N + b))
    F[:N, :N] = np.diag(basis.sigma)
    F[:N, N:] = H
    F[N:, N:] = RP
    Q = np.hstack([Z, QP])
    if abs(float(Q[:, 0] @ Q[:, -1])) > tol_orth:
        Q, R = np.linalg.qr(Q)
        F = R @ F
    Up, s, _ = sla.svd(F, lapack_driver="gesdd")
    total = basis.total_energy + bunch_energy
    rank = _numerical_rank(s)
    Nt = truncation_rank(s[:rank], eps, total)
    Znew = Q @ Up[:, :Nt]
    return ReducedBasis(np.ascontiguousarray(Znew), s[:Nt].copy(), eps, total)


# --- binary basis file ---------------------------------------------------------


def save_basis(basis: ReducedBasis, path) -> None:
    """Write ``n`` and ``N`` (little-endian int64), then Z in column-major order,
    sigma, then two trailing values total_energy and eps (all little-endian float64).
    """
    with open(path, "wb") as fh:
        np.array([basis.n, basis.N], dtype="<i8").tofile(fh)
        np.asarray(basis.Z, dtype="<f8").ravel(order="F").tofile(fh)
        np.asarray(basis.sigma, dtype="<f8").tofile(fh)
        np.array([basis.total_energy, basis.eps], dtype="<f8").tofile(fh)


def load_basis(path) -> ReducedBasis:
    with open(path, "rb") as fh:
        n, N = (int(v) for v in np.fromfile(fh, dtype="<i8", count=2))
        Z = np.fromfile(fh, dtype="<f8", count=n * N).reshape((n, N), order="F")
        sigma = np.fromfile(fh, dtype="<f8", count=N)
        tail = np.fromfile(fh, dtype="<f8", count=2)
    if len(sigma) != N or len(tail) != 2:
        raise ValueError(f"truncated basis file {path}")
    return ReducedBasis(np.ascontiguousarray(Z), sigma, float(tail[1]), float(tail[0]))
