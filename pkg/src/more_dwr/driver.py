"""Adaptive incremental ROM with slabwise DWR control (MORe DWR loop).

Time is split into K parent-slabs of L slabs each. On every parent-slab the
reduced primal problem is swept forward and the reduced dual backward, the
slab estimates are formed, and while the worst relative estimate exceeds
``tol`` the worst slab is solved with the full-order model and both POD
bases absorb its temporal snapshots.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dwr_estimator import (
    classify,
    effectivity,
    relative_estimate,
)
from .errors import ConfigurationError
from .pod import ReducedBasis, ipod_update
from .rom import ReducedOperators, prolongate, reduce_load, reduce_operators
from .slab_solver import FullOrderModel

log = logging.getLogger(__name__)


@dataclass
class DriverConfig:
    tol: float = 0.01
    eps_primal: float = 1.0 - 1e-8
    eps_dual: float = 1.0 - 1e-8
    K: int = 1
    L: int = 1
    max_enrichments_per_parent_slab: int | None = None
    validation: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        for name in ("eps_primal", "eps_dual"):
            eps = getattr(self, name)
            if not 0.0 < eps <= 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1], got {eps}")
        if self.K < 1 or self.L < 1:
            raise ConfigurationError(f"K and L must be positive, got K={self.K}, L={self.L}")
        cap = self.max_enrichments_per_parent_slab
        if cap is not None and cap < 1:
            raise ConfigurationError(f"enrichment cap must be >= 1, got {cap}")

    def enrichment_cap(self, r: int) -> int:
        if self.max_enrichments_per_parent_slab is not None:
            return self.max_enrichments_per_parent_slab
        return 2 * (r + 1) * self.L


@dataclass
class ParentSlab:
    k: int
    slabs: range
    load_matrices: list = field(default_factory=list, repr=False)
    F_p: list = field(default_factory=list, repr=False)
    F_d: list = field(default_factory=list, repr=False)
    incoming: np.ndarray | None = None  # full primal trace entering the parent-slab
    enrichments: int = 0
    eta_max: float = np.inf
    capped: bool = False


@dataclass
class RunReport:
    t_mid: np.ndarray
    goal_rom: np.ndarray
    eta: np.ndarray
    eta_rel: np.ndarray
    n_primal: np.ndarray
    n_dual: np.ndarray
    J_rom: float
    fom_solves: int
    enrichments: list
    tol: float
    wall_rom: float
    goal_fom: np.ndarray | None = None
    true_rel: np.ndarray | None = None
    cases: np.ndarray | None = None
    J_fom: float | None = None
    wall_fom: float | None = None
    warnings: list = field(default_factory=list)

    @property
    def M(self) -> int:
        return len(self.t_mid)

    @property
    def eta_total(self) -> float:
        return float(np.sum(self.eta))

    @property
    def final_basis_sizes(self) -> tuple[int, int]:
        return int(self.n_primal[-1]), int(self.n_dual[-1])

    @property
    def relative_error(self) -> float | None:
        if self.J_fom is None:
            return None
        return abs(self.J_fom - self.J_rom) / abs(self.J_fom) if self.J_fom else float("inf")

    @property
    def effectivity(self):
        if self.J_fom is None:
            return None
        return effectivity(self.J_fom, self.J_rom, self.eta_total)

    @property
    def confusion(self) -> dict[int, int] | None:
        if self.cases is None:
            return None
        return {c: int(np.sum(self.cases == c)) for c in (1, 2, 3, 4)}

    @property
    def speedup(self) -> float | None:
        if self.wall_fom is None or self.wall_rom <= 0:
            return None
        return self.wall_fom / self.wall_rom


class MoreDwrDriver:
    """State of one adaptive run over a :class:`FullOrderModel`."""

    def __init__(self, fom: FullOrderModel, config: DriverConfig, progress=None):
        M = fom.grid.n_slabs
        if config.K * config.L != M:
            raise ConfigurationError(f"K*L = {config.K * config.L} must equal M = {M}")
        self.fom = fom
        self.config = config
        self.progress = progress
        self.r = fom.basis.r
        # first-order elastodynamics: u and v share one spatial basis
        self.blocks = 2 if fom.spatial.components > 1 else 1
        if fom.n % self.blocks:
            raise ConfigurationError("field size is not divisible into (u, v) blocks")
        n_block = fom.n // self.blocks
        self.primal = ReducedBasis.empty(n_block, config.eps_primal)
        self.dual = ReducedBasis.empty(n_block, config.eps_dual)
        self.red: ReducedOperators | None = None
        self.goal_rom = np.zeros(M)
        self.eta = np.zeros(M)
        self.eta_rel = np.zeros(M)
        self.n_primal = np.zeros(M, dtype=int)
        self.n_dual = np.zeros(M, dtype=int)
        self.enrichments: list[tuple[int, int]] = []
        self.warnings: list[str] = []
        self._abs_goal_sum = 0.0
        self._goal_sum = 0.0
        self._slabs_done = 0

    # -- helpers -----------------------------------------------------------------

    def _emit(self, **event):
        if self.progress is not None:
            self.progress(event)

    def _expand(self, Z: np.ndarray) -> np.ndarray:
        """Full-field basis ``diag(Z, ..., Z)`` over the (u, v) blocks."""
        if self.blocks == 1:
            return Z
        return np.kron(np.eye(self.blocks), Z)

    def _snapshots(self, U: np.ndarray) -> np.ndarray:
        """Snapshot columns of one slab: every temporal DoF, and every block."""
        n_time = U.shape[0]
        return U.reshape(n_time * self.blocks, -1).T

    def _rebuild(self):
        fom = self.fom
        self.red = reduce_operators(
            fom.spatial, fom.temporal, self._expand(self.primal.Z), self._expand(self.dual.Z),
            fom.system.left, fom.system.right, fom.goal,
        )

    def _reduced_loads(self, load_matrix):
        W = self.fom.load_weights
        return reduce_load(self.red.Zp, load_matrix, W), reduce_load(self.red.Zd, load_matrix, W)

    def _refresh_parent(self, ps: ParentSlab):
        pairs = [self._reduced_loads(s) for s in ps.load_matrices]
        ps.F_p = [p for p, _ in pairs]
        ps.F_d = [d for _, d in pairs]

    def _trace_slab(self, trace: np.ndarray) -> np.ndarray:
        """A constant-in-time slab whose right trace equals ``trace``."""
        return np.tile(trace, (self.fom.n_time, 1))

    def _fallback_scale(self, current: np.ndarray) -> float:
        count = self._slabs_done + len(current)
        return (self._abs_goal_sum + float(np.sum(np.abs(current)))) / max(count, 1)

    # -- algorithm -------------------------------------------------------------------

    def bootstrap(self):
        """FOM primal and dual solve on the first slab, then initialize both bases."""
        fom = self.fom
        U = fom.solve_primal(0, None)
        Z = fom.solve_dual(0, None, None if fom.goal.linear else U)
        self.primal = ipod_update(self.primal, self._snapshots(U))
        self.dual = ipod_update(self.dual, self._snapshots(Z))
        self._rebuild()
        self._emit(event="bootstrap", n_primal=self.primal.N, n_dual=self.dual.N)

    def _sweeps(self, ps: ParentSlab):
        red, goal = self.red, self.fom.goal
        L = len(ps.slabs)
        u, inc_d = [None] * L, [None] * L
        inc_p, inc_d[0] = red.incoming_from_full(ps.incoming)
        for l in range(L):
            if l > 0:
                inc_p, inc_d[l] = red.incoming_from_reduced(u[l - 1])
            u[l] = red.solve_primal(ps.F_p[l], inc_p)
        z = [None] * L
        incoming = None
        for l in reversed(range(L)):
            z[l] = red.solve_dual(red.goal_rhs(goal, u[l]), incoming)
            incoming = red.dual_incoming(z[l])
        eta = np.array([red.estimate(ps.F_d[l], u[l], inc_d[l], z[l]) for l in range(L)])
        goal_vals = np.array([red.goal_value(goal, u[l]) for l in range(L)])
        return u, z, eta, goal_vals

    def _relative(self, eta: np.ndarray, goal_vals: np.ndarray) -> np.ndarray:
        scale = self._fallback_scale(goal_vals)
        total = abs(self._goal_sum + float(np.sum(goal_vals)))
        return np.array([relative_estimate(e, g, scale, total) for e, g in zip(eta, goal_vals)])

    def _enrich(self, ps: ParentSlab, l_max: int, u, z):
        fom, red = self.fom, self.red
        m = ps.slabs[l_max]
        if l_max > 0:
            U_prev = prolongate(u[l_max - 1], red.Zp)
        else:
            U_prev = self._trace_slab(ps.incoming)
        U = fom.solve_primal(m, U_prev)
        Z_next = prolongate(z[l_max + 1], red.Zd) if l_max + 1 < len(ps.slabs) else None
        U_lin = None if fom.goal.linear else prolongate(u[l_max], red.Zp)
        Z = fom.solve_dual(m, Z_next, U_lin)
        self.primal = ipod_update(self.primal, self._snapshots(U))
        self.dual = ipod_update(self.dual, self._snapshots(Z))
        self._rebuild()
        self._refresh_parent(ps)
        ps.enrichments += 1
        self.enrichments.append((ps.k, m))

    def run_parent_slab(self, k: int, incoming: np.ndarray) -> np.ndarray:
        """Adaptive loop on parent-slab ``k``; returns the outgoing full primal trace."""
        fom, cfg = self.fom, self.config
        ps = ParentSlab(k, range(k * cfg.L, (k + 1) * cfg.L), incoming=incoming)
        ps.load_matrices = [fom.load_matrix(m) for m in ps.slabs]
        self._refresh_parent(ps)
        cap = cfg.enrichment_cap(self.r)
        while True:
            u, z, eta, goal_vals = self._sweeps(ps)
            rel = self._relative(eta, goal_vals)
            l_max = int(np.argmax(np.abs(rel)))
            ps.eta_max = float(np.abs(rel[l_max]))
            if ps.eta_max <= cfg.tol:
                break
            if ps.enrichments >= cap:
                ps.capped = True
                msg = f"parent-slab {k}: enrichment cap {cap} reached with eta_max={ps.eta_max:.3e}"
                log.warning(msg)
                self.warnings.append(msg)
                break
            self._emit(event="enrich", parent_slab=k, slab=ps.slabs[l_max], eta_max=ps.eta_max)
            self._enrich(ps, l_max, u, z)
        sl = slice(ps.slabs.start, ps.slabs.stop)
        self.goal_rom[sl] = goal_vals
        self.eta[sl] = eta
        self.eta_rel[sl] = rel
        self.n_primal[sl] = self.primal.N
        self.n_dual[sl] = self.dual.N
        self._abs_goal_sum += float(np.sum(np.abs(goal_vals)))
        self._goal_sum += float(np.sum(goal_vals))
        self._slabs_done += len(goal_vals)
        self._emit(
            event="parent_slab", parent_slab=k, eta_max=ps.eta_max, enrichments=ps.enrichments,
            n_primal=self.primal.N, n_dual=self.dual.N, capped=ps.capped,
        )
        return self.red.Zp @ (self.red.right @ u[-1])

    def run_adaptive(self):
        self.bootstrap()
        trace = self.fom.initial_trace[0]
        for k in range(self.config.K):
            trace = self.run_parent_slab(k, trace)

    def validation_loop(self):
        """Reduced primal forward and reduced dual backward over all slabs with the
        frozen final bases; overwrites the per-slab goal values and estimates."""
        fom, red, goal = self.fom, self.red, self.fom.goal
        M = fom.grid.n_slabs
        u, F_d, inc_d = [None] * M, [None] * M, [None] * M
        inc_p, inc_d[0] = red.incoming_from_full(fom.initial_trace[0])
        for m in range(M):
            F_p, F_d[m] = self._reduced_loads(fom.load_matrix(m))
            if m > 0:
                inc_p, inc_d[m] = red.incoming_from_reduced(u[m - 1])
            u[m] = red.solve_primal(F_p, inc_p)
        z_next = None
        for m in reversed(range(M)):
            incoming = None if z_next is None else red.dual_incoming(z_next)
            z = red.solve_dual(red.goal_rhs(goal, u[m]), incoming)
            self.eta[m] = red.estimate(F_d[m], u[m], inc_d[m], z)
            z_next = z
        self.goal_rom = np.array([red.goal_value(goal, u[m]) for m in range(M)])
        scale = float(np.mean(np.abs(self.goal_rom)))
        total = abs(float(np.sum(self.goal_rom)))
        self.eta_rel = np.array(
            [relative_estimate(e, g, scale, total) for e, g in zip(self.eta, self.goal_rom)]
        )
        self._emit(event="validation", J_rom=float(np.sum(self.goal_rom)), eta=float(np.sum(self.eta)))
        return u

    def report(self, wall_rom: float) -> RunReport:
        fom = self.fom
        return RunReport(
            t_mid=fom.grid.midpoints(),
            goal_rom=self.goal_rom.copy(),
            eta=self.eta.copy(),
            eta_rel=self.eta_rel.copy(),
            n_primal=self.n_primal.copy(),
            n_dual=self.n_dual.copy(),
            J_rom=float(np.sum(self.goal_rom)),
            fom_solves=fom.solve_count["primal"] + fom.solve_count["dual"],
            enrichments=list(self.enrichments),
            tol=self.config.tol,
            wall_rom=wall_rom,
            warnings=list(self.warnings),
        )


def fom_reference(fom: FullOrderModel) -> tuple[np.ndarray, float]:
    """Per-slab FOM goal values and the wall time of the full primal march."""
    start = time.perf_counter()
    values, _ = fom.run_primal()
    return values, time.perf_counter() - start


def attach_reference(report: RunReport, goal_fom: np.ndarray, wall_fom: float) -> RunReport:
    """Fill the true-error fields of ``report`` from a FOM reference trajectory."""
    report.goal_fom = np.asarray(goal_fom, dtype=float)
    report.J_fom = float(np.sum(goal_fom))
    report.wall_fom = wall_fom
    err = report.goal_fom - report.goal_rom
    scale = float(np.mean(np.abs(report.goal_rom)))
    total = abs(report.J_rom)
    report.true_rel = np.array(
        [relative_estimate(e, g, scale, total) for e, g in zip(err, report.goal_rom)]
    )
    report.cases = np.array(
        [classify(t, e, report.tol) for t, e in zip(report.true_rel, report.eta_rel)], dtype=int
    )
    return report


def run_full(fom_factory, config: DriverConfig, verify: bool = False, progress=None) -> RunReport:
    """Bootstrap, adaptive parent-slab loop, optional validation and FOM reference.

    ``fom_factory`` returns a fresh :class:`FullOrderModel`; the reference run
    uses its own instance so its factorization is timed too.
    """
    fom = fom_factory()
    driver = MoreDwrDriver(fom, config, progress)
    start = time.perf_counter()
    driver.run_adaptive()
    wall_rom = time.perf_counter() - start
    if config.validation:
        driver.validation_loop()
    report = driver.report(wall_rom)
    if verify:
        goal_fom, wall_fom = fom_reference(fom_factory())
        attach_reference(report, goal_fom, wall_fom)
        if progress is not None:
            progress({"event": "reference", "J_fom": report.J_fom, "wall_fom": wall_fom})
    return report
