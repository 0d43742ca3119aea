"""Experiment configuration, presets, CSV output and the command-line entry point.

Configurations are nested JSON objects whose sections mirror the dataclasses
below. Unknown keys are rejected with their dotted path; so are missing
required keys.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .driver import DriverConfig, RunReport, run_full
from .errors import ConfigurationError, NumericalError
from .slab_solver import (
    FullOrderModel,
    boundary_stress_goal,
    mean_value_goal,
    squared_l2_goal,
)
from .spatial_fem import (
    ElastoMaterial,
    SourceAssembler,
    assemble_elasto_operators,
    assemble_heat_operators,
    build_mesh,
)
from .temporal_dg import NodeFamily, TemporalBasis, TemporalGrid

EQUATIONS = ("heat", "elastodynamics")
MODES = ("adaptive", "verification")
GOAL_KINDS = ("mean_value_subdomain", "squared_l2", "boundary_stress")
THREADS_ENV = "MORE_DWR_THREADS"
CSV_FLOAT = "{:.16e}"  # 17 significant digits


@dataclass
class MeshConfig:
    dim: int
    extents: list
    cells: list
    degree: int = 1


@dataclass
class TimeConfig:
    T_end: float
    M: int
    r: int
    family: str = "gauss_legendre"
    T_start: float = 0.0


@dataclass
class GoalConfig:
    kind: str
    lo: list | None = None
    hi: list | None = None
    component: int = 2
    face: list = field(default_factory=lambda: [0, 0])
    time_average: bool = True  # divide the time integral by T_end - T_start


@dataclass
class MaterialConfig:
    mu: float
    lam: float


@dataclass
class RomConfig:
    tol: float
    eps_primal: float
    eps_dual: float
    K: int
    L: int
    max_enrichments: int | None = None
    validation: bool = True


@dataclass
class ExperimentConfig:
    name: str
    equation: str
    mesh: MeshConfig
    time: TimeConfig
    source: str
    goal: GoalConfig
    rom: RomConfig
    material: MaterialConfig | None = None
    mode: str = "adaptive"
    output: str = "results"

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ConfigurationError(f"equation: expected one of {EQUATIONS}, got {self.equation!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.goal.kind not in GOAL_KINDS:
            raise ConfigurationError(f"goal.kind: expected one of {GOAL_KINDS}, got {self.goal.kind!r}")
        if self.equation == "elastodynamics" and self.material is None:
            raise ConfigurationError("material: required for elastodynamics")
        if self.rom.K * self.rom.L != self.time.M:
            raise ConfigurationError(
                f"rom: K*L = {self.rom.K * self.rom.L} must equal time.M = {self.time.M}"
            )
        if self.goal.kind == "mean_value_subdomain" and (self.goal.lo is None or self.goal.hi is None):
            raise ConfigurationError("goal: mean_value_subdomain needs 'lo' and 'hi'")
        NodeFamily(self.time.family)
        self.driver_config()  # validates tol / eps / K / L

    def driver_config(self) -> DriverConfig:
        rom = self.rom
        return DriverConfig(
            tol=rom.tol, eps_primal=rom.eps_primal, eps_dual=rom.eps_dual, K=rom.K, L=rom.L,
            max_enrichments_per_parent_slab=rom.max_enrichments, validation=rom.validation,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "mesh": MeshConfig,
    "time": TimeConfig,
    "goal": GoalConfig,
    "rom": RomConfig,
    "material": MaterialConfig,
}


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigurationError(f"{path + '.' if path else ''}{key}: unknown key")
    kwargs = {}
    for name, f in known.items():
        where = f"{path + '.' if path else ''}{name}"
        if name not in data:
            required = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
            if required:
                raise ConfigurationError(f"{where}: missing required key '{name}'")
            continue
        value = data[name]
        if name in _SECTIONS and cls is ExperimentConfig and value is not None:
            value = _build(_SECTIONS[name], value, where)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path + ': ' if path else ''}{exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path or 'config'}: {exc}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON configuration; built-in preset names also resolve."""
    p = Path(path)
    if not p.exists():
        preset = _preset_path(p.stem)
        if preset is None:
            raise ConfigurationError(f"configuration file not found: {path}")
        text = preset.read_text()
    else:
        text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)


def write_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def _preset_path(name: str):
    res = resources.files("more_dwr") / "presets" / f"{name}.json"
    return res if res.is_file() else None


def list_presets() -> list[str]:
    folder = resources.files("more_dwr") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ExperimentConfig:
    res = _preset_path(name)
    if res is None:
        raise ConfigurationError(f"unknown preset {name!r}; available: {list_presets()}")
    return config_from_dict(json.loads(res.read_text()))


# --- problem construction ----------------------------------------------------


def build_fom(config: ExperimentConfig) -> FullOrderModel:
    mc, tc, gc = config.mesh, config.time, config.goal
    mesh = build_mesh(mc.dim, mc.extents, mc.cells, mc.degree)
    basis = TemporalBasis(tc.r, tc.family)
    grid = TemporalGrid(tc.T_start, tc.T_end, tc.M)
    T = tc.T_end - tc.T_start if gc.time_average else 1.0
    if config.equation == "heat":
        spatial = assemble_heat_operators(mesh)
        components = 1
    else:
        material = ElastoMaterial(config.material.mu, config.material.lam)
        spatial = assemble_elasto_operators(mesh, material)
        components = 2 * mesh.dim
    mask = spatial.dirichlet_mask
    source = SourceAssembler(mesh, config.source, mask, components)
    if gc.kind == "mean_value_subdomain":
        if config.equation != "heat":
            raise ConfigurationError("goal.kind: mean_value_subdomain needs a scalar field")
        goal = mean_value_goal(mesh, T, gc.lo, gc.hi, mask)
    elif gc.kind == "squared_l2":
        goal = squared_l2_goal(spatial, T)
    else:
        if config.equation != "elastodynamics":
            raise ConfigurationError("goal.kind: boundary_stress needs elastodynamics")
        goal = boundary_stress_goal(
            mesh, T, config.material.mu, config.material.lam, gc.component, tuple(gc.face), mask
        )
    return FullOrderModel(mesh, spatial, basis, grid, source, goal)


def run_experiment(config: ExperimentConfig, progress=None) -> RunReport:
    verify = config.mode == "verification"
    return run_full(lambda: build_fom(config), config.driver_config(), verify, progress)


# --- CSV output -----------------------------------------------------------------

GOAL_HEADER = ["t", "J_slab_fom", "J_slab_rom"]
ERROR_HEADER = ["t", "eta_rel", "true_rel", "tol"]
BASIS_HEADER = ["t", "N_primal", "N_dual"]
SUMMARY_HEADER = [
    "J_fom", "J_rom", "relative_error", "eta_total", "speedup", "fom_solves",
    "N_primal", "N_dual", "case1", "case2", "case3", "case4", "effectivity",
    "wall_rom", "wall_fom",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if not np.isfinite(value):
        return "nan" if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return CSV_FLOAT.format(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_traces(report: RunReport, directory) -> dict[str, Path]:
    """Write goal.csv, error.csv, basis.csv and summary.csv; empty cells mark
    quantities that need the FOM reference (or an undefined effectivity)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    M = report.M
    fom_goal = report.goal_fom if report.goal_fom is not None else [None] * M
    true_rel = report.true_rel if report.true_rel is not None else [None] * M
    paths = {name: out / f"{name}.csv" for name in ("goal", "error", "basis", "summary")}
    _write_csv(paths["goal"], GOAL_HEADER, zip(report.t_mid, fom_goal, report.goal_rom))
    _write_csv(
        paths["error"], ERROR_HEADER,
        zip(report.t_mid, report.eta_rel, true_rel, [report.tol] * M),
    )
    _write_csv(paths["basis"], BASIS_HEADER, zip(report.t_mid, report.n_primal, report.n_dual))
    conf = report.confusion or {c: None for c in (1, 2, 3, 4)}
    n_p, n_d = report.final_basis_sizes
    _write_csv(paths["summary"], SUMMARY_HEADER, [[
        report.J_fom, report.J_rom, report.relative_error, report.eta_total, report.speedup,
        report.fom_solves, n_p, n_d, conf[1], conf[2], conf[3], conf[4], report.effectivity,
        report.wall_rom, report.wall_fom,
    ]])
    return paths


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --- command line ---------------------------------------------------------------


def _progress_printer(stream):
    def emit(event: dict):
        stream.write(json.dumps(event, default=float) + "\n")
        stream.flush()

    return emit


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    data = config.to_dict()
    if args.tol is not None:
        data["rom"]["tol"] = args.tol
    if args.eps is not None:
        data["rom"]["eps_primal"] = data["rom"]["eps_dual"] = args.eps
    if getattr(args, "mode", None) is not None:
        data["mode"] = args.mode
    if args.out is not None:
        data["output"] = args.out
    return config_from_dict(data)


def _thread_count(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return None


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="more-dwr", description="Adaptive incremental POD ROM with DWR error control."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "adaptive run with the configured mode"),
        ("verify", "adaptive run plus FOM reference, true errors and effectivity"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="JSON configuration file or preset name")
        p.add_argument("--tol", type=float, help="relative estimator tolerance")
        p.add_argument("--eps", type=float, help="POD energy threshold for both bases")
        if name == "run":
            p.add_argument("--mode", choices=MODES, help="override the configured mode")
        p.add_argument("--out", help="output directory for the CSV files")
        p.add_argument("--threads", type=int, help=f"BLAS threads (fallback: ${THREADS_ENV})")
    sub.add_parser("presets", help="list the built-in experiment presets")
    return parser


def _summary_line(report: RunReport) -> str:
    parts = [f"J_rom={report.J_rom:.6e}", f"fom_solves={report.fom_solves}",
             "bases={}|{}".format(*report.final_basis_sizes), f"wall_rom={report.wall_rom:.2f}s"]
    if report.J_fom is not None:
        eff = report.effectivity
        parts += [f"J_fom={report.J_fom:.6e}", f"rel_err={report.relative_error:.4e}",
                  "effectivity=" + ("undefined" if eff is None else f"{eff:.4f}"),
                  f"speedup={report.speedup:.2f}",
                  "confusion=" + "/".join(str(v) for v in report.confusion.values())]
    return " ".join(parts)


def cli_main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "presets":
        for name in list_presets():
            cfg = load_preset(name)
            print(f"{name}\t{cfg.equation} dim={cfg.mesh.dim} M={cfg.time.M} "
                  f"K={cfg.rom.K} L={cfg.rom.L} r={cfg.time.r} tol={cfg.rom.tol}")
        return 0
    try:
        config = _apply_overrides(load_config(args.config), args)
        if args.command == "verify":
            config.mode = "verification"
        threads = _thread_count(args)
        progress = _progress_printer(sys.stderr)
        start = time.perf_counter()
        if threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                report = run_experiment(config, progress)
        else:
            report = run_experiment(config, progress)
        paths = write_traces(report, config.output)
        progress({"event": "done", "wall": time.perf_counter() - start,
                  "output": str(paths["summary"].parent)})
        print(_summary_line(report))
        return 0
    except (ConfigurationError, NumericalError, OSError) as exc:
        print(f"more-dwr: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
