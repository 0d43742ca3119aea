"""Dual-weighted residual estimates on slabs, effectivity and confusion cases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rom import ReducedOperators

#: returned by :func:`effectivity` when the true error vanishes
EFFECTIVITY_UNDEFINED = None

#: confusion cases, most severe first
CASE_UNDERESTIMATE = 1  # true error above tol, estimate below
CASE_OVERESTIMATE = 2  # true error below tol, estimate above
CASE_BOTH_ABOVE = 3
CASE_BOTH_BELOW = 4

_GUARD_RTOL = 1e-14


@dataclass
class SlabErrorEstimate:
    m: int
    eta: float
    eta_rel: float
    goal_rom: float
    true_error: float | None = None
    true_error_rel: float | None = None
    case: int | None = None


def estimate_slab(red_ops: ReducedOperators, u_m: np.ndarray, incoming_d, z_m: np.ndarray,
                  F_d_m: np.ndarray) -> float:
    """``z^T (F - A u - B u_prev)`` evaluated entirely in reduced coordinates.

    ``incoming_d`` is the dual-basis projection ``Z_d^T M w`` of the incoming
    primal trace (``None`` for zero), see :class:`ReducedOperators`.
    """
    return red_ops.estimate(F_d_m, u_m, incoming_d, z_m)


def full_space_estimate(system, Z_m: np.ndarray, U_m: np.ndarray, U_prev: np.ndarray,
                        F_m: np.ndarray) -> float:
    """The same estimate with full-space vectors (oracle for the reduced evaluation)."""
    res = F_m - system.apply_A(U_m) - system.apply_B(U_prev)
    return float(np.sum(Z_m * res))


def relative_estimate(eta: float, goal_slab: float, fallback_scale: float,
                      total_scale: float = 0.0) -> float:
    """``eta / (J_slab + eta)``, with ``fallback_scale`` used as denominator when
    that sum is numerically zero relative to ``1 + total_scale``."""
    denom = goal_slab + eta
    if abs(denom) < _GUARD_RTOL * (1.0 + abs(total_scale)):
        denom = fallback_scale
    if denom == 0.0:
        return 0.0 if eta == 0.0 else float(np.sign(eta)) * np.inf
    return eta / denom


def error_identity_check(fom, u_fom, u_rom, z_fom) -> tuple[float, float]:
    """Both sides of the discrete error identity for linear problems and goals.

    ``u_fom``, ``u_rom`` and ``z_fom`` are lists of full slab arrays; returns
    ``(J(u_fom) - J(u_rom), sum_m eta_m)`` with the FOM dual as weights.
    """
    lhs = sum(fom.goal_value(U) for U in u_fom) - sum(fom.goal_value(U) for U in u_rom)
    rhs = 0.0
    prev = fom.initial_trace
    for m, (U, Z) in enumerate(zip(u_rom, z_fom)):
        rhs += full_space_estimate(fom.system, Z, U, prev, fom.load(m))
        prev = U
    return float(lhs), float(rhs)


def effectivity(J_fom: float, J_rom: float, eta_total: float):
    """``|eta / (J_fom - J_rom)|``; :data:`EFFECTIVITY_UNDEFINED` if the true error is zero."""
    err = J_fom - J_rom
    if err == 0.0:
        return EFFECTIVITY_UNDEFINED
    return abs(eta_total / err)


def classify(true_err_rel: float, est_rel: float, tol: float) -> int:
    """Confusion case of one slab; a value counts as exceeding ``tol`` only if strictly larger."""
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    err_above = abs(true_err_rel) > tol
    est_above = abs(est_rel) > tol
    if err_above and not est_above:
        return CASE_UNDERESTIMATE
    if est_above and not err_above:
        return CASE_OVERESTIMATE
    return CASE_BOTH_ABOVE if err_above else CASE_BOTH_BELOW
