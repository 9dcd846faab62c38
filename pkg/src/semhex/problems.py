"""Problem drivers: Poisson benchmark, backward-Euler heat run, manufactured solution."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .coarse import CoarseCorrection, TwoScale
from .fine import WEIGHTINGS, FineSchwarz
from .geometry import compute_factors, node_coordinates
from .gll import GllBasis
from .krylov import PcgConfig, PcgResult, pcg
from .mesh import FAMILIES, HexMesh, IndexMaps, build_index_maps, generate_box_mesh, parse_dirichlet_tags, refine_uniform, scatter
from .meshio import export_field, read_mesh
from .operator import VARIANTS, SemOperator, load_vector

log = logging.getLogger(__name__)

PRECONDITIONERS = ("two_scale", "fine_only", "coarse_only", "none")


class ConfigError(ValueError):
    pass


class SolveError(RuntimeError):
    """A solve that did not converge; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class MeshConfig:
    family: str = "uniform"
    k: int = 8
    shape: Optional[tuple] = None  # overrides k for box meshes
    lengths: tuple = (1.0, 1.0, 1.0)
    file: Optional[str] = None
    refine: int = 0
    amplitude: float = 0.1
    perturbation: float = 0.25
    seed: int = 0

    def validate(self):
        if self.file is None:
            if self.family not in FAMILIES:
                raise ConfigError(f"mesh family must be one of {FAMILIES}")
            if self.shape is None and self.k < 1:
                raise ConfigError("mesh k must be >= 1")
            if self.shape is not None and (len(self.shape) != 3 or min(self.shape) < 1):
                raise ConfigError("mesh shape needs three positive counts")
            if len(self.lengths) != 3 or min(self.lengths) <= 0:
                raise ConfigError("mesh lengths must be three positive numbers")
        if self.refine < 0:
            raise ConfigError("refine must be >= 0")


@dataclass
class HeatConfig:
    dt: float = 0.04
    steps: int = 70
    rho: float = 7000.0
    cp: float = 0.8
    Q: float = 1000.0
    radius: float = 0.05
    initial: float = 0.0
    start: Optional[tuple] = None  # default: one end of the longest bounding-box axis
    end: Optional[tuple] = None

    def validate(self):
        if self.dt <= 0 or self.steps < 1:
            raise ConfigError("heat needs dt > 0 and steps >= 1")
        if self.rho <= 0 or self.cp <= 0 or self.radius <= 0:
            raise ConfigError("heat needs rho, cp and radius > 0")


@dataclass
class OutputConfig:
    report: Optional[str] = None
    history: Optional[str] = None
    vtk: Optional[str] = None
    vtk_mode: str = "conforming"
    deterministic: bool = True  # leave wall-clock timings out of the JSON report


@dataclass
class ProblemConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    order: int = 3
    kappa: float = 1.0
    c: float = 0.0
    source: float = 1.0
    dirichlet: Union[str, list, None] = "all"
    solver: PcgConfig = field(default_factory=PcgConfig)
    preconditioner: str = "two_scale"
    overlap_weighting: str = "multiplicity"
    coarse_solver: str = "auto"
    variant: str = "stored"
    precision: str = "double"
    concurrent: bool = False
    workers: int = 1
    heat: Optional[HeatConfig] = None
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "ProblemConfig":
        self.mesh.validate()
        if not 1 <= self.order <= 16:
            raise ConfigError("order must lie in 1..16")
        if self.kappa <= 0 or self.c < 0:
            raise ConfigError("need kappa > 0 and c >= 0")
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigError(f"preconditioner must be one of {PRECONDITIONERS}")
        if self.overlap_weighting not in WEIGHTINGS:
            raise ConfigError(f"overlap_weighting must be one of {WEIGHTINGS}")
        if self.coarse_solver not in ("auto", "direct", "amg"):
            raise ConfigError("coarse_solver must be auto, direct or amg")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.precision not in ("double", "single"):
            raise ConfigError("precision must be double or single")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.output.vtk_mode not in ("conforming", "element"):
            raise ConfigError("vtk_mode must be conforming or element")
        try:
            parse_dirichlet_tags(self.dirichlet)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad dirichlet specification: {exc}") from None
        if self.heat is not None:
            self.heat.validate()
            if self.c not in (0.0, 1.0 / self.heat.dt):
                raise ConfigError("heat runs set c = 1/dt; leave c at 0 or give exactly 1/dt")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        data = dict(data)
        sub = {
            "mesh": MeshConfig,
            "solver": PcgConfig,
            "heat": HeatConfig,
            "output": OutputConfig,
        }
        kw = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in names:
                raise ConfigError(f"unknown config key {key!r}")
            if key in sub and value is not None:
                inner = {f.name for f in dataclasses.fields(sub[key])}
                bad = set(value) - inner
                if bad:
                    raise ConfigError(f"unknown keys in [{key}]: {sorted(bad)}")
                value = {k: tuple(v) if isinstance(v, list) and k != "dirichlet" else v for k, v in value.items()}
                try:
                    value = sub[key](**value)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
            kw[key] = value
        return cls(**kw).validate()

    @classmethod
    def from_toml(cls, path) -> "ProblemConfig":
        import tomli

        with open(path, "rb") as fh:
            try:
                data = tomli.load(fh)
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SolveReport:
    problem: str
    config: dict
    mesh: dict
    iterations: int
    converged: bool
    residual_norms: list
    zr: list
    counters: list = field(default_factory=list)
    coarse: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    steps: list = field(default_factory=list)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iterations"

    def to_dict(self, deterministic: bool = True) -> dict:
        d = dataclasses.asdict(self)
        d["status"] = self.status
        if deterministic:
            d.pop("timings")
            for c in d["counters"]:
                c.pop("wall_seconds", None)
            for s in d["steps"]:
                s.pop("seconds", None)
        return d

    def to_json(self, deterministic: bool = True) -> str:
        return json.dumps(_jsonable(self.to_dict(deterministic)), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


# ---------------------------------------------------------------------------
# assembly


def make_mesh(cfg: MeshConfig) -> HexMesh:
    if cfg.file is not None:
        mesh = read_mesh(cfg.file)
    else:
        shape = tuple(cfg.shape) if cfg.shape is not None else (cfg.k,) * 3
        mesh = generate_box_mesh(shape, cfg.lengths, cfg.family, cfg.amplitude, cfg.perturbation, cfg.seed)
    for _ in range(cfg.refine):
        mesh = refine_uniform(mesh)
    return mesh


@dataclass
class Discretization:
    """Everything a solve needs, built once per (mesh, order, kappa, c)."""

    mesh: HexMesh
    basis: GllBasis
    maps: IndexMaps
    operator: SemOperator
    fine: Optional[FineSchwarz]
    coarse: Optional[CoarseCorrection]
    precond: Optional[Callable]
    setup_seconds: float

    @property
    def mass_local(self) -> np.ndarray:
        return self.operator.factors.mass

    def counters(self) -> list:
        out = [self.operator.counters_report().to_dict()]
        if self.fine is not None:
            out.append(self.fine.counters_report().to_dict())
        return out

    def close(self):
        if isinstance(self.precond, TwoScale):
            self.precond.close()


def discretize(mesh: HexMesh, cfg: ProblemConfig, c: Optional[float] = None) -> Discretization:
    t0 = time.perf_counter()
    c = cfg.c if c is None else c
    basis = GllBasis.build(cfg.order)
    maps = build_index_maps(mesh, cfg.order, parse_dirichlet_tags(cfg.dirichlet))
    factors = compute_factors(mesh, basis)
    dtype = np.float32 if cfg.precision == "single" else np.float64
    op = SemOperator(mesh, basis, maps, cfg.kappa, c, variant=cfg.variant, dtype=dtype, workers=cfg.workers, factors=factors)
    fine = coarse = None
    mode = cfg.preconditioner
    if mode in ("two_scale", "fine_only"):
        fine = FineSchwarz(mesh, basis, maps, cfg.kappa, c, weighting=cfg.overlap_weighting)
    if mode in ("two_scale", "coarse_only"):
        coarse = CoarseCorrection(mesh, basis, maps, cfg.kappa, c, mass_local=factors.mass, solver=cfg.coarse_solver)
    precond = None if mode == "none" else TwoScale(coarse, fine, concurrent=cfg.concurrent)
    return Discretization(mesh, basis, maps, op, fine, coarse, precond, time.perf_counter() - t0)


def _mesh_info(d: Discretization) -> dict:
    return {
        "num_elements": d.mesh.num_elements,
        "num_vertices": d.mesh.num_vertices,
        "order": d.basis.order,
        "num_nodes": d.maps.n_global,
        "num_dirichlet": int(d.maps.dirichlet_mask.sum()),
    }


def _source_local(d: Discretization, source) -> np.ndarray:
    if callable(source):
        X = node_coordinates(d.mesh, d.basis)
        return source(X[..., 0], X[..., 1], X[..., 2])
    return np.full(d.mass_local.shape, float(source))


def _write_outputs(cfg: ProblemConfig, d: Discretization, report: SolveReport, result: Optional[PcgResult], u) -> None:
    out = cfg.output
    if out.report:
        with open(out.report, "w") as fh:
            fh.write(report.to_json(out.deterministic))
    if out.history and result is not None:
        result.write_csv(out.history)
    if out.vtk and u is not None:
        export_field(out.vtk, d.mesh, d.basis, d.maps, {"u": u}, mode=out.vtk_mode)


# ---------------------------------------------------------------------------
# drivers


def solve_poisson(cfg: ProblemConfig, mesh: Optional[HexMesh] = None, source=None, write: bool = True):
    """Solve ``c u - div(kappa grad u) = s`` with homogeneous Dirichlet data.

    Returns ``(report, u, discretization)``.
    """
    cfg.validate()
    mesh = make_mesh(cfg.mesh) if mesh is None else mesh
    d = discretize(mesh, cfg)
    try:
        b = load_vector(d.maps, d.mass_local, _source_local(d, cfg.source if source is None else source))
        t0 = time.perf_counter()
        res = pcg(d.operator, d.precond, b, cfg.solver)
        solve_seconds = time.perf_counter() - t0
    finally:
        d.close()
    report = SolveReport(
        problem="poisson",
        config=cfg.to_dict(),
        mesh=_mesh_info(d),
        iterations=res.iterations,
        converged=res.converged,
        residual_norms=res.residual_norms,
        zr=res.zr,
        counters=d.counters(),
        coarse=d.coarse.stats if d.coarse is not None else {},
        timings={"setup": d.setup_seconds, "solve": solve_seconds},
    )
    if write:
        _write_outputs(cfg, d, report, res, res.u)
    return report, res.u, d


def source_path(mesh: HexMesh, heat: HeatConfig):
    """Straight-line trajectory ``t -> centre`` over the run duration."""
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    mid = 0.5 * (lo + hi)
    axis = int(np.argmax(hi - lo))
    start = np.array(heat.start, float) if heat.start is not None else mid.copy()
    end = np.array(heat.end, float) if heat.end is not None else mid.copy()
    if heat.start is None:
        start[axis] = lo[axis] + heat.radius
    if heat.end is None:
        end[axis] = hi[axis] - heat.radius
    duration = heat.dt * heat.steps

    def centre(t: float) -> np.ndarray:
        return start + (end - start) * min(max(t / duration, 0.0), 1.0)

    return centre


def solve_heat(cfg: ProblemConfig, mesh: Optional[HexMesh] = None, write: bool = True, stop_on_failure: bool = True):
    """Backward Euler for ``u_t = div(kappa grad u) + Q/(rho c_p) chi_ball(t)``.

    Every step solves ``u/dt - div(kappa grad u) = u_old/dt + Q/(rho c_p) chi``
    warm-started from ``u_old``. Returns ``(report, u, discretization)``.
    """
    cfg.validate()
    heat = cfg.heat or HeatConfig()
    mesh = make_mesh(cfg.mesh) if mesh is None else mesh
    d = discretize(mesh, cfg, c=1.0 / heat.dt)
    X = node_coordinates(d.mesh, d.basis)
    m = d.operator.lumped_mass
    interior = ~d.maps.dirichlet_mask
    u = np.where(interior, heat.initial, 0.0)
    centre = source_path(mesh, heat)
    amp = heat.Q / (heat.rho * heat.cp)
    steps, last, converged, total_its = [], None, True, 0
    t_start = time.perf_counter()
    try:
        for step in range(1, heat.steps + 1):
            t0 = time.perf_counter()
            x0 = centre((step - 0.5) * heat.dt)
            chi = (np.sum((X - x0) ** 2, axis=-1) <= heat.radius**2).astype(np.float64)
            s_local = scatter(u, d.maps) / heat.dt + amp * chi
            b = load_vector(d.maps, d.mass_local, s_local)
            last = pcg(d.operator, d.precond, b, cfg.solver, x0=u)
            total_its += last.iterations
            u = last.u
            steps.append(
                {
                    "step": step,
                    "time": step * heat.dt,
                    "iterations": last.iterations,
                    "converged": last.converged,
                    "final_residual": last.residual_norms[-1],
                    "mean": float(m @ u / m.sum()),
                    "l2": float(np.sqrt(m @ (u * u))),
                    "max": float(u.max()),
                    "seconds": time.perf_counter() - t0,
                }
            )
            log.info("heat step %d: %d iterations, mean %.6g", step, last.iterations, steps[-1]["mean"])
            if not last.converged:
                converged = False
                if stop_on_failure:
                    break
    finally:
        d.close()
    report = SolveReport(
        problem="heat",
        config=cfg.to_dict(),
        mesh=_mesh_info(d),
        iterations=total_its,
        converged=converged,
        residual_norms=last.residual_norms if last else [],
        zr=last.zr if last else [],
        counters=d.counters(),
        coarse=d.coarse.stats if d.coarse is not None else {},
        timings={"setup": d.setup_seconds, "total": time.perf_counter() - t_start},
        steps=steps,
    )
    if write:
        _write_outputs(cfg, d, report, last, u)
    if not converged and stop_on_failure:
        raise SolveError(f"heat step {len(steps)} did not converge", report)
    return report, u, d


def manufactured(x, y, z):
    return np.sin(np.pi * x) * np.sin(np.pi * y) * np.sin(np.pi * z)


def mms_convergence(orders=range(1, 7), k: int = 4, rel_tolerance: float = 1e-13, family: str = "uniform"):
    """Discrete L2 error of ``u* = sin(pi x) sin(pi y) sin(pi z)`` against n.

    Returns a list of dicts ``{order, num_nodes, error, iterations}`` where
    ``error = sqrt(sum m_N (u - u*)^2)``.
    """
    rows = []
    mesh = generate_box_mesh((k, k, k), family=family)
    for n in orders:
        cfg = ProblemConfig(
            mesh=MeshConfig(family=family, k=k),
            order=n,
            solver=PcgConfig(rel_tolerance=rel_tolerance, max_iterations=2000, record_history=False),
        )
        report, u, d = solve_poisson(cfg, mesh, source=lambda x, y, z: 3 * np.pi**2 * manufactured(x, y, z), write=False)
        exact = exact_nodal(d, manufactured)
        m = d.operator.lumped_mass
        err = float(np.sqrt(m @ (u - exact) ** 2))
        rows.append({"order": n, "num_nodes": d.maps.n_global, "error": err, "iterations": report.iterations})
    return rows


def exact_nodal(d: Discretization, fn) -> np.ndarray:
    """Nodal interpolant of ``fn(x, y, z)`` as a global vector."""
    X = node_coordinates(d.mesh, d.basis)
    vals = np.empty(d.maps.n_global)
    vals[d.maps.l2g.ravel()] = fn(X[..., 0], X[..., 1], X[..., 2]).ravel()
    return vals
