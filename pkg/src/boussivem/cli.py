"""Benchmark experiment drivers and the command-line entry point.

Three canned experiments are provided: a manufactured-solution refinement
sweep on the square with a closed-form exact solution (example1), natural
convection in a differentially heated unit-square cavity (example2), and a
shell-and-tube configuration on a disk with four circular holes (example3).
The first emits a CSV rate table; the other two have no exact solution and
export their converged fields. A run is described by an ExperimentConfig,
which round-trips losslessly through a TOML file.

Example 1 solves the plain system (no dimensionless scaling); examples 2, 3
and custom runs solve the Rayleigh/Prandtl-scaled form, whose momentum
equation carries 2*Pr*mu(phi) in the constitutive law and Ra*Pr in the
buoyancy term.
"""

import argparse
import json
import os
import sys

import numpy as np
import sympy as sp

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python < 3.11
    import tomli as tomllib

from .assembly import Assembler, GlobalDofMap, export_matrix_market
from .coefficients import Coefficients, ProblemData, TemperatureCoefficient
from .exceptions import BoussivemError, ConfigError, NoConvergence
from .manufactured import trig_square_solution
from .mesh import DiskWithHoles, MeshFamily, Rectangle, generate
from .postprocess import (RateTable, boundary_flux, compute_errors,
                          export_vtk, max_velocity, write_rate_csv)
from .solver import (SolverConfig, newton_solve, picard_solve,
                     picard_warm_start)

_EXPERIMENTS = ("example1", "example2", "example3", "custom")
_FAMILIES = ("UniformQuad", "DistortedQuad", "Hexagonal", "NonConvex")

_X, _Y = sp.symbols("x y", real=True)

EXAMPLE2_PHI_D = "(1 - cos(2*pi*x)) * (1 - y) / 2"


def _expression_fn(text):
    """Vectorized callable (points -> values) from an expression in x, y."""
    try:
        expr = sp.sympify(text, locals={"x": _X, "y": _Y})
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc}") from exc
    extra = expr.free_symbols - {_X, _Y}
    if extra:
        raise ConfigError(f"expression {text!r} uses unknown symbols {extra}")
    fn = sp.lambdify((_X, _Y), expr, modules="numpy")

    def evaluate(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = fn(pts[:, 0], pts[:, 1])
        return np.broadcast_to(np.asarray(vals, dtype=float),
                               (pts.shape[0],)).copy()

    return evaluate


class ExperimentConfig:
    """Validated description of one run: experiment, mesh ladder, physics.

    Coefficient laws are restricted to the whitelist enforced by
    TemperatureCoefficient (constants and exp(a*phi)), which keeps their
    derivatives exact for the Newton path. phi_d is an expression in x, y
    for the Dirichlet temperature; the empty string selects the
    experiment's built-in data.
    """

    def __init__(self, experiment="example1", family="UniformQuad",
                 resolutions=(8, 16, 32, 64), degree=0, mu=None, kappa=None,
                 g=(0.0, 1.0), ra=1.0, pr=1.0, phi_d="", solver=None,
                 output_dir="."):
        if experiment not in _EXPERIMENTS:
            raise ConfigError(f"experiment {experiment!r} not in "
                              f"{_EXPERIMENTS}")
        if family not in _FAMILIES:
            raise ConfigError(f"family {family!r} not in {_FAMILIES}")
        resolutions = [int(n) for n in resolutions]
        if not resolutions:
            raise ConfigError("resolutions list is empty")
        if any(n <= 0 for n in resolutions):
            raise ConfigError("resolutions must be positive")
        if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
            raise ConfigError("resolutions must be strictly increasing")
        if int(degree) not in (0, 1):
            raise ConfigError("degree must be 0 or 1")
        if not float(ra) > 0 or not float(pr) > 0:
            raise ConfigError("Ra and Pr must be positive")
        self.experiment = experiment
        self.family = family
        self.resolutions = resolutions
        self.degree = int(degree)
        self.mu = mu if mu is not None else TemperatureCoefficient("const")
        self.kappa = (kappa if kappa is not None
                      else TemperatureCoefficient("const"))
        self.g = (float(g[0]), float(g[1]))
        self.ra = float(ra)
        self.pr = float(pr)
        self.phi_d = str(phi_d)
        self.solver = solver if solver is not None else SolverConfig()
        self.output_dir = str(output_dir)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "family": self.family,
            "resolutions": list(self.resolutions),
            "degree": self.degree,
            "g": list(self.g),
            "ra": self.ra,
            "pr": self.pr,
            "phi_d": self.phi_d,
            "output_dir": self.output_dir,
            "solver": {
                "mode": self.solver.mode,
                "tolerance": self.solver.tolerance,
                "max_iterations": self.solver.max_iterations,
                "initial": self.solver.initial,
                "damping": self.solver.damping,
            },
            "mu": self.mu.to_dict(),
            "kappa": self.kappa.to_dict(),
        }

    def __eq__(self, other):
        return (isinstance(other, ExperimentConfig)
                and self.to_dict() == other.to_dict())

    def __repr__(self):
        return (f"ExperimentConfig({self.experiment!r}, {self.family!r}, "
                f"n={self.resolutions}, r={self.degree})")

    def to_toml(self):
        """TOML document that from_toml parses back to an equal config."""
        d = self.to_dict()

        def scalar(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, str):
                return json.dumps(v)
            if isinstance(v, float):
                return repr(v)
            return str(v)

        lines = []
        for key in ("experiment", "family", "resolutions", "degree", "g",
                    "ra", "pr", "phi_d", "output_dir"):
            v = d[key]
            if isinstance(v, list):
                lines.append(f"{key} = [{', '.join(scalar(x) for x in v)}]")
            else:
                lines.append(f"{key} = {scalar(v)}")
        for table in ("solver", "mu", "kappa"):
            lines.append("")
            lines.append(f"[{table}]")
            for k, v in d[table].items():
                lines.append(f"{k} = {scalar(v)}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_toml())

    @classmethod
    def from_dict(cls, d):
        known = {"experiment", "family", "resolutions", "degree", "g", "ra",
                 "pr", "phi_d", "output_dir", "solver", "mu", "kappa"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kwargs = {k: d[k] for k in known & set(d)
                  if k not in ("solver", "mu", "kappa")}
        if "solver" in d:
            kwargs["solver"] = SolverConfig(**d["solver"])
        if "mu" in d:
            kwargs["mu"] = TemperatureCoefficient.from_dict(d["mu"])
        if "kappa" in d:
            kwargs["kappa"] = TemperatureCoefficient.from_dict(d["kappa"])
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path):
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        return cls.from_dict(data)


def example1_config(family="UniformQuad", degree=0,
                    resolutions=(8, 16, 32, 64), output_dir="."):
    """Manufactured smooth solution on (-1,1)^2, plain (unscaled) system."""
    return ExperimentConfig(
        experiment="example1", family=family, resolutions=resolutions,
        degree=degree, mu=TemperatureCoefficient("exp", a=-0.25),
        kappa=TemperatureCoefficient("exp", a=0.25), g=(0.0, 1.0),
        output_dir=output_dir)


def example2_config(family="UniformQuad", degree=0, resolutions=(32,),
                    output_dir=".", ra=4000.0, pr=0.5):
    """Heated-cavity natural convection on the unit square.

    At this Rayleigh number the plain fixed-point iteration needs
    eighty-odd sweeps, so the preset uses Newton started from one
    fixed-point sweep, which lands in well under ten steps.
    """
    return ExperimentConfig(
        experiment="example2", family=family, resolutions=resolutions,
        degree=degree, mu=TemperatureCoefficient("exp", a=-1.0),
        kappa=TemperatureCoefficient("exp", a=1.0), g=(0.0, 1.0),
        ra=ra, pr=pr, phi_d=EXAMPLE2_PHI_D,
        solver=SolverConfig(mode="newton", tolerance=1e-6,
                            max_iterations=25),
        output_dir=output_dir)


def example3_config(degree=0, resolutions=(28,), output_dir=".",
                    ra=100.0, pr=1.0):
    """Shell-and-tube configuration: hot tubes inside a cooled disk."""
    return ExperimentConfig(
        experiment="example3", family="Hexagonal", resolutions=resolutions,
        degree=degree, mu=TemperatureCoefficient("exp", a=-1.0),
        kappa=TemperatureCoefficient("exp", a=1.0), g=(0.0, 1.0),
        ra=ra, pr=pr, output_dir=output_dir)


def _solve(mesh, problem, config):
    """Run the configured nonlinear iteration on one mesh."""
    sc = config.solver
    if sc.mode == "newton":
        assembler = Assembler(mesh, GlobalDofMap(mesh, config.degree),
                              problem)
        warm = picard_warm_start(assembler, sweeps=1)
        cfg = SolverConfig(mode="newton", tolerance=sc.tolerance,
                           max_iterations=sc.max_iterations,
                           initial="given", damping=sc.damping)
        return newton_solve(mesh, problem, cfg, assembler=assembler,
                            initial_state=warm)
    return picard_solve(mesh, problem, sc, degree=config.degree)


def _export_level(solution, trace, stem, export_vtk_flag, export_systems,
                  export_trace):
    if export_vtk_flag or export_systems or export_trace:
        os.makedirs(os.path.dirname(stem) or ".", exist_ok=True)
    if export_vtk_flag:
        export_vtk(solution, stem + ".vtk")
    if export_trace:
        with open(stem + "_trace.json", "w", encoding="utf-8") as fh:
            fh.write(trace.to_json())
    if export_systems:
        asm = solution.assembler
        export_matrix_market(asm.flow_system(solution.u, solution.phi),
                             stem + "_flow.mtx")
        export_matrix_market(asm.heat_system(solution.u, solution.phi),
                             stem + "_heat.mtx")


def run_example1(config, export_vtk_flag=False, export_systems=False,
                 export_trace=False, log=print):
    """Refinement sweep against the closed-form solution; returns RateTable.

    Solves the plain system with the configured coefficient laws (the
    forcing terms are rederived symbolically, so changing mu/kappa/g keeps
    the sweep consistent) and writes the rate table CSV.
    """
    exact = trig_square_solution(
        Coefficients(config.mu, config.kappa, g=config.g))
    problem = exact.problem_data()
    domain = Rectangle(-1.0, -1.0, 1.0, 1.0)
    reports = []
    for n in config.resolutions:
        mesh = generate(MeshFamily(config.family, n=n), domain)
        solution, trace = _solve(mesh, problem, config)
        report = compute_errors(solution, exact)
        reports.append(report)
        log(f"example1 {config.family} r={config.degree} n={n}: "
            f"h={report.h:.4e} iterations={trace.n_iterations}")
        stem = os.path.join(config.output_dir,
                            f"example1_{config.family}_r{config.degree}_n{n}")
        _export_level(solution, trace, stem, export_vtk_flag, export_systems,
                      export_trace)
    table = RateTable(reports)
    os.makedirs(config.output_dir, exist_ok=True)
    csv_path = os.path.join(config.output_dir,
                            f"example1_{config.family}_r{config.degree}.csv")
    write_rate_csv(table, csv_path)
    log(f"example1 rate table -> {csv_path}")
    return table


def run_example2(config, export_systems=False, log=print):
    """Heated-cavity convection; exports fields, returns (solution, trace).

    The cavity is the unit square with no-slip velocity everywhere and the
    configured Dirichlet temperature profile (hot bump on the lower wall by
    default). With several resolutions configured, each is solved in turn
    and exported; the finest result is returned.
    """
    coeffs = Coefficients(config.mu, config.kappa, g=config.g,
                          viscous_scale=2.0 * config.pr,
                          buoyancy_scale=config.ra * config.pr)
    phi_d = _expression_fn(config.phi_d or EXAMPLE2_PHI_D)
    problem = ProblemData(coeffs, phi_D=phi_d)
    domain = Rectangle(0.0, 0.0, 1.0, 1.0)
    last = None
    for n in config.resolutions:
        mesh = generate(MeshFamily(config.family, n=n), domain)
        solution, trace = _solve(mesh, problem, config)
        stem = os.path.join(config.output_dir,
                            f"example2_{config.family}_r{config.degree}_n{n}")
        _export_level(solution, trace, stem, True, export_systems, True)
        log(f"example2 n={n}: iterations={trace.n_iterations}, "
            f"max|u|={max_velocity(solution):.6g} -> {stem}.vtk")
        last = (solution, trace)
    return last


def _holes_first_phi_d(domain, hot=1.0, cold=-0.01):
    """Dirichlet temperature for the disk-with-holes geometry.

    Points on a hole boundary (within twice the hole radius of a hole
    centre) are held at the hot value; the outer shell is slightly cooled.
    """
    centers = np.asarray(domain.hole_centers, dtype=float)
    cut = 2.0 * domain.hole_radius

    def phi_d(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        near_hole = (d2.min(axis=1) <= cut ** 2)
        return np.where(near_hole, hot, cold)

    return phi_d


def run_example3(config, export_systems=False, log=print):
    """Shell-and-tube configuration; exports fields, returns (solution, trace).

    Four hot tubes (phi = 1) sit inside a disk whose outer boundary is held
    slightly below the reference temperature (phi = -0.01); the flow is
    driven purely by buoyancy. Only the hexagonal family meshes this
    geometry. The per-edge energy-flux balance of the converged pseudoheat
    is logged as a conservation check.
    """
    if config.family != "Hexagonal":
        raise ConfigError("the disk-with-holes geometry requires the "
                          "Hexagonal family")
    domain = DiskWithHoles()
    coeffs = Coefficients(config.mu, config.kappa, g=config.g,
                          viscous_scale=2.0 * config.pr,
                          buoyancy_scale=config.ra * config.pr)
    if config.phi_d:
        phi_d = _expression_fn(config.phi_d)
    else:
        phi_d = _holes_first_phi_d(domain)
    problem = ProblemData(coeffs, phi_D=phi_d)
    last = None
    for n in config.resolutions:
        mesh = generate(MeshFamily("Hexagonal", n=n), domain)
        solution, trace = _solve(mesh, problem, config)
        total, per_edge = boundary_flux(solution)
        gross = sum(abs(f) for f in per_edge.values())
        stem = os.path.join(config.output_dir,
                            f"example3_r{config.degree}_n{n}")
        _export_level(solution, trace, stem, True, export_systems, True)
        log(f"example3 n={n}: cells={mesh.n_cells}, "
            f"iterations={trace.n_iterations}, flux balance "
            f"{total:.3e} of {gross:.3e} gross -> {stem}.vtk")
        last = (solution, trace)
    return last


def run_custom(config, export_vtk_flag=True, export_systems=False,
               export_trace=True, log=print):
    """Configured direct run on the unit square (scaled system, no exact
    solution): Dirichlet temperature from the phi_d expression, no body
    sources beyond buoyancy."""
    coeffs = Coefficients(config.mu, config.kappa, g=config.g,
                          viscous_scale=2.0 * config.pr,
                          buoyancy_scale=config.ra * config.pr)
    phi_d = _expression_fn(config.phi_d) if config.phi_d else None
    problem = ProblemData(coeffs, phi_D=phi_d)
    domain = Rectangle(0.0, 0.0, 1.0, 1.0)
    last = None
    for n in config.resolutions:
        mesh = generate(MeshFamily(config.family, n=n), domain)
        solution, trace = _solve(mesh, problem, config)
        stem = os.path.join(config.output_dir,
                            f"custom_{config.family}_r{config.degree}_n{n}")
        _export_level(solution, trace, stem, export_vtk_flag, export_systems,
                      export_trace)
        log(f"custom n={n}: iterations={trace.n_iterations}")
        last = (solution, trace)
    return last


_RUNNERS = {"example1": run_example1, "example2": run_example2,
            "example3": run_example3, "custom": run_custom}


def run_config(config, export_vtk_flag=False, export_systems=False,
               export_trace=False, log=print):
    """Dispatch a config to its experiment runner."""
    if config.output_dir and not os.path.isdir(config.output_dir):
        os.makedirs(config.output_dir, exist_ok=True)
    if config.experiment == "example1":
        return run_example1(config, export_vtk_flag, export_systems,
                            export_trace, log=log)
    if config.experiment == "example2":
        return run_example2(config, export_systems, log=log)
    if config.experiment == "example3":
        return run_example3(config, export_systems, log=log)
    return run_custom(config, export_vtk_flag or True, export_systems,
                      export_trace or True, log=log)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="boussivem",
        description="Mixed virtual element solver for the stationary "
                    "Boussinesq system on polygonal meshes.")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run the experiment described by a "
                                         "TOML config file")
    solve.add_argument("--config", required=True, help="path to a TOML "
                       "experiment configuration")
    _add_export_flags(solve)

    sweep = sub.add_parser("sweep", help="mesh-refinement sweep for one of "
                                         "the three benchmark examples")
    sweep.add_argument("--example", required=True, choices=("1", "2", "3"))
    sweep.add_argument("--family", default=None,
                       help=f"mesh family, one of {_FAMILIES}")
    sweep.add_argument("--degree", type=int, default=0, choices=(0, 1))
    sweep.add_argument("--levels", default=None,
                       help="comma-separated resolutions, e.g. 8,16,32")
    sweep.add_argument("--output-dir", default=".")
    _add_export_flags(sweep)
    return parser


def _add_export_flags(sub):
    sub.add_argument("--export-vtk", action="store_true",
                     help="write legacy-VTK cell-data fields per level")
    sub.add_argument("--export-systems", action="store_true",
                     help="write the final flow/heat systems in MatrixMarket "
                          "format")
    sub.add_argument("--trace", action="store_true",
                     help="write the nonlinear iteration trace as JSON")


def _sweep_config(args):
    levels = None
    if args.levels:
        try:
            levels = [int(tok) for tok in args.levels.split(",") if tok]
        except ValueError as exc:
            raise ConfigError(f"bad --levels {args.levels!r}") from exc
    if args.example == "1":
        cfg = example1_config(family=args.family or "UniformQuad",
                              degree=args.degree,
                              resolutions=levels or (8, 16, 32, 64),
                              output_dir=args.output_dir)
    elif args.example == "2":
        cfg = example2_config(family=args.family or "UniformQuad",
                              degree=args.degree,
                              resolutions=levels or (32,),
                              output_dir=args.output_dir)
    else:
        if args.family not in (None, "Hexagonal"):
            raise ConfigError("example 3 runs on the Hexagonal family only")
        cfg = example3_config(degree=args.degree, resolutions=levels or (28,),
                              output_dir=args.output_dir)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            config = ExperimentConfig.from_toml(args.config)
        else:
            config = _sweep_config(args)
        run_config(config, export_vtk_flag=args.export_vtk,
                   export_systems=args.export_systems,
                   export_trace=args.trace)
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.trace is not None:
            print(f"trace: {exc.trace.to_json()}", file=sys.stderr)
        return 1
    except BoussivemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
