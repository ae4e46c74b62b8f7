"""Command-line front end of fracvar.

Every subcommand validates its inputs and output paths first, computes,
writes the requested files and prints 'key=value' lines with
17-significant-digit floats to stdout. Exit codes: 0 on success, 1 on
invalid input (including usage errors), 2 on numerical failure
(non-finite values, or a solve ending Infeasible or MaxIters).
Existing output files are replaced only once the computation has
succeeded; a run that exits 1 or 2 leaves them as they were.

Subcommands:

    * fracdiff - Jumarie derivative of a function of x on [a,b].
    * partial - fractional partial derivative of a function of x, y.
    * integrate - fractional volume integral.
    * line-integrate - fractional line integral over the boundary.
    * green-check - members of Green's fractional formula.
    * el-residual - Euler-Lagrange residual of a problem at a field.
    * natbc-check - natural boundary condition residuals.
    * gateaux-check - directional derivative against the gradient and
      the Euler-Lagrange pairing.
    * convexity - sampled convexity of H in (u, v, w).
    * solve, solve-free - fixed and free boundary solves.

Built-in problems ('--problem'): 'manufactured', 'dirichlet-quadratic'
and 'linear-g', see fracvar.functions.variational.catalog_problem. A
'--spec file.json' with the keys 'lagrangian', 'constraint' (catalog
Lagrangian names, 'constraint' may be null), 'K' and 'psi' (flat list
over the boundary nodes in row-major order, or null) replaces it.

Defaults can be read from a JSON file given with '--config'; its keys
are the long flag names with dashes replaced by underscores. Flags given
on the command line win.
"""

import argparse
import json
import sys
from dataclasses import dataclass, fields
from typing import List, Optional

import numpy as np

from fracvar.functions import fracops, solver, variational
from fracvar.functions.expressions import compile_expression
from fracvar.functions.fields import (
    Field2D,
    FractionalOrder,
    check_field_path,
    load_field,
    make_grid,
    sample,
    sample_1d,
    save_field,
)
from fracvar.functions.utils import file_rewrite_handling

GREEN_CASES = ("poly", "quadratic", "symmetric", "const")
_ALIASES = {"lambda": "lam"}
_SPEC_KEYS = {"lagrangian", "constraint", "K", "psi"}


@dataclass(frozen=True)
class RunConfig:
    """Settings of one CLI run, one field per long flag."""

    alpha: Optional[float] = None
    a: float = 0.0
    b: float = 1.0
    c: float = 0.0
    d: float = 1.0
    nx: int = 33
    ny: int = 33
    n: int = 129
    fn: Optional[str] = None
    axis: str = "x"
    problem: str = "manufactured"
    spec: Optional[str] = None
    field: Optional[str] = None
    out: Optional[str] = None
    report: Optional[str] = None
    case: str = "poly"
    h: Optional[str] = None
    k: Optional[str] = None
    eta: Optional[str] = None
    which: str = "J"
    eps: Optional[float] = None
    lambda0: float = 1.0
    lam: float = 0.0
    samples: int = 1000
    seed: int = 0
    radius: float = 10.0
    max_outer_iters: int = 50
    max_inner_iters: int = 500
    grad_tol: float = 1e-8
    constraint_tol: float = 1e-8
    nat_bc_tol: float = 1e-4
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e10
    init: str = "auto"
    verbose: bool = False
    rewrite: bool = True

    def __post_init__(self):
        for item in fields(self):
            value = getattr(self, item.name)
            if value is None:
                continue
            kind = item.default
            if isinstance(kind, bool) or item.name in ("verbose", "rewrite"):
                if not isinstance(value, bool):
                    raise TypeError(f"'{item.name}' should be boolean")
            elif isinstance(kind, int):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise TypeError(f"'{item.name}' should be an integer")
            elif isinstance(kind, float) or item.name in ("alpha", "eps"):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError(f"'{item.name}' should be a number")
                object.__setattr__(self, item.name, float(value))
            elif not isinstance(value, str):
                raise TypeError(f"'{item.name}' should be a string")
        if self.axis not in ("x", "y"):
            raise ValueError(f"'axis' should be 'x' or 'y', got '{self.axis}'.")
        if self.which not in ("J", "G"):
            raise ValueError(f"'which' should be 'J' or 'G', got '{self.which}'.")
        if self.case not in GREEN_CASES:
            raise ValueError(
                f"'case' should be one of {', '.join(GREEN_CASES)}, got "
                f"'{self.case}'."
            )

    @classmethod
    def from_sources(cls, args: argparse.Namespace) -> "RunConfig":
        """Merge the '--config' file with the explicitly given flags."""
        values = {}
        if getattr(args, "config", None):
            values.update(load_config(args.config))
        for item in fields(cls):
            flag = getattr(args, item.name, None)
            if flag is not None:
                values[item.name] = flag
        return cls(**values)


def load_config(path: str) -> dict:
    """Read a JSON config file into RunConfig keyword arguments.

    Raises
    ------
    FileNotFoundError
        Raised if the file does not exist.
    ValueError
        Raised if the content is not an object or holds unknown keys.
    """
    try:
        with open(path) as file:
            content = json.load(file)
    except FileNotFoundError:
        raise FileNotFoundError(f"No config file found at '{path}'.")
    if not isinstance(content, dict):
        raise ValueError("The config file should hold a JSON object.")

    known = {item.name for item in fields(RunConfig)}
    values = {}
    for key, value in content.items():
        name = _ALIASES.get(key, key)
        if name not in known:
            raise ValueError(f"Unknown config key '{key}'.")
        values[name] = value

    return values


def _format(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _emit(**pairs) -> None:
    for key, value in pairs.items():
        print(f"{key}={_format(value)}")


def _order(cfg: RunConfig) -> FractionalOrder:
    if cfg.alpha is None:
        raise ValueError("'alpha' is required.")
    return FractionalOrder(cfg.alpha)


def _grid(cfg: RunConfig):
    return make_grid(cfg.a, cfg.b, cfg.c, cfg.d, cfg.nx, cfg.ny)


def _function(text: Optional[str], name: str, one_dimensional: bool = False):
    if text is None:
        raise ValueError(f"'{name}' is required.")
    expression = compile_expression(text)
    if one_dimensional and "y" in expression.variables:
        raise ValueError(f"'{name}' should depend on x only.")
    return expression


def _check_outputs(
    cfg: RunConfig,
    out: Optional[str] = None,
    report: Optional[str] = None,
    one_dimensional: bool = False,
) -> None:
    """Refuse unwritable outputs before computing; existing files stay."""
    if out is not None:
        check_field_path(out, one_dimensional)
    if not cfg.rewrite:
        for path in (out, report):
            if path is not None:
                file_rewrite_handling(path, False)


def _write_field(cfg: RunConfig, item, path: Optional[str]) -> None:
    if path is not None:
        file_rewrite_handling(path, cfg.rewrite)
        save_field(item, path)


def _bump(grid):
    """x(1-x)y(1-y) rescaled to the grid rectangle."""

    def eta(x, y):
        s = (x - grid.a) / (grid.b - grid.a)
        t = (y - grid.c) / (grid.d - grid.c)
        return s * (1 - s) * t * (1 - t)

    return eta


def _load_spec(path: str, grid, order, free_boundary: bool):
    try:
        with open(path) as file:
            content = json.load(file)
    except FileNotFoundError:
        raise FileNotFoundError(f"No problem spec found at '{path}'.")
    if not isinstance(content, dict):
        raise ValueError("The problem spec should hold a JSON object.")
    unknown = set(content) - _SPEC_KEYS
    if unknown:
        raise ValueError(f"Unknown problem spec keys {sorted(unknown)}.")
    if "lagrangian" not in content:
        raise ValueError("The problem spec needs a 'lagrangian'.")

    f = variational.catalog_lagrangian(content["lagrangian"], grid, order)
    constraint = content.get("constraint")
    g = (
        variational.catalog_lagrangian(constraint, grid, order)
        if constraint is not None
        else None
    )
    psi = content.get("psi")
    if free_boundary and psi is not None:
        raise ValueError("A free-boundary problem takes no 'psi'.")

    return variational.IsoperimetricProblem(
        grid, order, f, g, float(content.get("K", 0.0)), psi
    )


def _problem(cfg: RunConfig, free_boundary: bool = False):
    grid, order = _grid(cfg), _order(cfg)
    if cfg.spec is not None:
        return _load_spec(cfg.spec, grid, order, free_boundary)
    return variational.catalog_problem(cfg.problem, grid, order, free_boundary)


def _state_field(cfg: RunConfig, p) -> Field2D:
    if cfg.field is None:
        return solver.initial_guess(p, solver.SolveOptions(init=cfg.init))
    return load_field(cfg.field, p.grid)


def _solve_options(cfg: RunConfig) -> solver.SolveOptions:
    return solver.SolveOptions(
        max_outer_iters=cfg.max_outer_iters,
        max_inner_iters=cfg.max_inner_iters,
        grad_tol=cfg.grad_tol,
        constraint_tol=cfg.constraint_tol,
        nat_bc_tol=cfg.nat_bc_tol,
        penalty_init=cfg.penalty_init,
        penalty_growth=cfg.penalty_growth,
        penalty_max=cfg.penalty_max,
        seed=cfg.seed,
        init=cfg.init,
        verbose=cfg.verbose,
    )


def run_fracdiff(cfg: RunConfig) -> int:
    order = _order(cfg)
    fn = _function(cfg.fn, "fn", one_dimensional=True)
    _check_outputs(cfg, cfg.out, one_dimensional=True)
    f = sample_1d(fn, cfg.a, cfg.b, cfg.n)

    derivative = fracops.jumarie_derivative(f, order)
    _write_field(cfg, derivative, cfg.out)
    _emit(
        value_at_b=derivative.values[-1],
        max_abs=float(np.max(np.abs(derivative.values))),
    )
    return 0


def run_partial(cfg: RunConfig) -> int:
    order, grid = _order(cfg), _grid(cfg)
    fn = _function(cfg.fn, "fn")
    _check_outputs(cfg, cfg.out)
    u = sample(fn, grid)

    derivative = fracops.partial_frac(u, cfg.axis, order)
    _write_field(cfg, derivative, cfg.out)
    _emit(axis=cfg.axis, max_abs=derivative.max_abs())
    return 0


def run_integrate(cfg: RunConfig) -> int:
    order, grid = _order(cfg), _grid(cfg)
    u = sample(_function(cfg.fn, "fn"), grid)
    _emit(volume_integral=fracops.volume_integral(u, order))
    return 0


def run_line_integrate(cfg: RunConfig) -> int:
    order, grid = _order(cfg), _grid(cfg)
    u = sample(_function(cfg.fn, "fn"), grid)
    first = fracops.line_integral_x(u, order)
    second = fracops.line_integral_y(u, order)
    _emit(line_integral_x=first, line_integral_y=second, line_integral=first + second)
    return 0


def run_green_check(cfg: RunConfig) -> int:
    order, grid = _order(cfg), _grid(cfg)

    def one(x, y):
        return 1.0

    h, k, eta = {
        "poly": (lambda x, y: x, lambda x, y: y**2, _bump(grid)),
        "quadratic": (lambda x, y: x**2, lambda x, y: 0.0, _bump(grid)),
        "symmetric": (one, one, _bump(grid)),
        "const": (one, one, one),
    }[cfg.case]
    if cfg.h is not None:
        h = _function(cfg.h, "h")
    if cfg.k is not None:
        k = _function(cfg.k, "k")
    if cfg.eta is not None:
        eta = _function(cfg.eta, "eta")

    report = fracops.green_residual(
        sample(h, grid), sample(k, grid), sample(eta, grid), order
    )
    _emit(**report.to_dict())
    return 0


def run_el_residual(cfg: RunConfig) -> int:
    p = _problem(cfg)
    m = variational.MultiplierPair(cfg.lambda0, cfg.lam)
    u = _state_field(cfg, p)
    _check_outputs(cfg, cfg.out)

    residual = variational.el_residual(p, u, m)
    _write_field(cfg, residual, cfg.out)
    interior = residual.values[p.grid.interior_mask()]
    _emit(
        el_residual_max=float(np.max(np.abs(interior))) if interior.size else 0.0,
        el_residual_max_all=residual.max_abs(),
    )
    return 0


def run_natbc_check(cfg: RunConfig) -> int:
    p = _problem(cfg, free_boundary=True)
    m = variational.MultiplierPair(cfg.lambda0, cfg.lam)
    u = _state_field(cfg, p)

    edges = variational.natural_bc_residuals(p, u, m)
    _emit(
        at_x_a_max=float(np.max(np.abs(edges.at_x_a))),
        at_x_b_max=float(np.max(np.abs(edges.at_x_b))),
        at_y_c_max=float(np.max(np.abs(edges.at_y_c))),
        at_y_d_max=float(np.max(np.abs(edges.at_y_d))),
        nat_bc_residual_max=edges.max_abs(),
    )
    return 0


def run_gateaux_check(cfg: RunConfig) -> int:
    p = _problem(cfg)
    u = _state_field(cfg, p)
    direction = _bump(p.grid) if cfg.eta is None else _function(cfg.eta, "eta")
    eta = sample(direction, p.grid)
    which = variational.Functional(cfg.which)

    value = variational.gateaux_derivative(p, which, u, eta, cfg.eps)
    gradient = solver.discrete_gradient(p, which, u)
    if which is variational.Functional.J:
        m = variational.MultiplierPair(1.0, 0.0)
    else:
        m = variational.MultiplierPair(0.0, 1.0)
    residual = variational.el_residual(p, u, m)
    _emit(
        gateaux=value,
        gradient_pairing=float(np.sum(gradient.values * eta.values)),
        el_pairing=fracops.volume_integral(residual * eta, p.order),
    )
    return 0


def run_convexity(cfg: RunConfig) -> int:
    p = _problem(cfg)
    m = variational.MultiplierPair(cfg.lambda0, cfg.lam)
    verdict = variational.convexity_probe(
        p, m, cfg.samples, cfg.seed, radius=cfg.radius
    )
    witness = (
        None
        if verdict.witness is None
        else ",".join(_format(c) for c in verdict.witness)
    )
    _emit(
        verdict=verdict.status.value,
        min_eigenvalue=verdict.min_eigenvalue,
        witness=witness,
    )
    return 0


def _run_solve(cfg: RunConfig, free_boundary: bool) -> int:
    p = _problem(cfg, free_boundary=free_boundary)
    opts = _solve_options(cfg)
    _check_outputs(cfg, cfg.out, cfg.report)

    if free_boundary:
        report = solver.solve_free_boundary(p, opts)
    else:
        report = solver.solve_fixed_boundary(p, opts)
    summary = report.to_dict()
    summary.pop("field")
    _emit(**summary)
    failed = (solver.SolveStatus.INFEASIBLE, solver.SolveStatus.MAX_ITERS)
    if report.status in failed:
        return 2

    _write_field(cfg, report.u, cfg.out)
    if cfg.report is not None:
        file_rewrite_handling(cfg.report, cfg.rewrite)
        solver.save_report(report, cfg.report, cfg.out)
    return 0


def run_solve(cfg: RunConfig) -> int:
    return _run_solve(cfg, free_boundary=False)


def run_solve_free(cfg: RunConfig) -> int:
    return _run_solve(cfg, free_boundary=True)


class _ArgumentParser(argparse.ArgumentParser):
    """Parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_grid(parser) -> None:
    for name in ("a", "b", "c", "d"):
        parser.add_argument(f"--{name}", type=float, default=None)
    parser.add_argument("--nx", type=int, default=None)
    parser.add_argument("--ny", type=int, default=None)


def _add_problem(parser) -> None:
    _add_grid(parser)
    parser.add_argument(
        "--problem",
        default=None,
        help=f"Built-in problem: {', '.join(variational.PROBLEMS)}.",
    )
    parser.add_argument("--spec", default=None, help="Problem spec JSON file.")


def _add_state(parser) -> None:
    parser.add_argument(
        "--field",
        default=None,
        help="Field file of u; the initial guess of a solve by default.",
    )
    parser.add_argument("--init", choices=solver.INITS, default=None)


def _add_multipliers(parser) -> None:
    parser.add_argument("--lambda0", type=float, default=None)
    parser.add_argument("--lambda", dest="lam", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--alpha", type=float, default=None,
                        help="Fractional order in (0, 1).")
    common.add_argument("--config", default=None, help="JSON defaults file.")
    common.add_argument("--no-rewrite", dest="rewrite", action="store_false",
                        default=None, help="Refuse to overwrite outputs.")

    parser = _ArgumentParser(
        prog="fracvar",
        description="Fractional calculus of variations on rectangles.",
        allow_abbrev=False,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler, help: str):
        sub = commands.add_parser(
            name, parents=[common], help=help, allow_abbrev=False
        )
        sub.set_defaults(handler=handler)
        return sub

    sub = command("fracdiff", run_fracdiff, "Jumarie derivative on [a,b].")
    sub.add_argument("--fn", default=None)
    sub.add_argument("--a", type=float, default=None)
    sub.add_argument("--b", type=float, default=None)
    sub.add_argument("--n", type=int, default=None)
    sub.add_argument("--out", default=None)

    sub = command("partial", run_partial, "Fractional partial derivative.")
    _add_grid(sub)
    sub.add_argument("--fn", default=None)
    sub.add_argument("--axis", choices=("x", "y"), default=None)
    sub.add_argument("--out", default=None)

    for name, handler, text in (
        ("integrate", run_integrate, "Fractional volume integral."),
        ("line-integrate", run_line_integrate, "Fractional line integral."),
    ):
        sub = command(name, handler, text)
        _add_grid(sub)
        sub.add_argument("--fn", default=None)

    sub = command("green-check", run_green_check, "Green's fractional formula.")
    _add_grid(sub)
    sub.add_argument("--case", choices=GREEN_CASES, default=None)
    for name in ("h", "k", "eta"):
        sub.add_argument(f"--{name}", default=None)

    sub = command("el-residual", run_el_residual, "Euler-Lagrange residual.")
    _add_problem(sub)
    _add_state(sub)
    _add_multipliers(sub)
    sub.add_argument("--out", default=None)

    sub = command("natbc-check", run_natbc_check, "Natural boundary conditions.")
    _add_problem(sub)
    _add_state(sub)
    _add_multipliers(sub)

    sub = command("gateaux-check", run_gateaux_check, "Gateaux derivative.")
    _add_problem(sub)
    _add_state(sub)
    sub.add_argument("--which", choices=("J", "G"), default=None)
    sub.add_argument("--eta", default=None)
    sub.add_argument("--eps", type=float, default=None)

    sub = command("convexity", run_convexity, "Sampled convexity of H.")
    _add_problem(sub)
    _add_multipliers(sub)
    sub.add_argument("--samples", type=int, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--radius", type=float, default=None)

    for name, handler, text in (
        ("solve", run_solve, "Fixed-boundary solve."),
        ("solve-free", run_solve_free, "Free-boundary solve."),
    ):
        sub = command(name, handler, text)
        _add_problem(sub)
        sub.add_argument("--init", choices=solver.INITS, default=None)
        sub.add_argument("--out", default=None)
        sub.add_argument("--report", default=None)
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--verbose", action="store_true", default=None)
        for option, kind in (
            ("max-outer-iters", int),
            ("max-inner-iters", int),
            ("grad-tol", float),
            ("constraint-tol", float),
            ("nat-bc-tol", float),
            ("penalty-init", float),
            ("penalty-growth", float),
            ("penalty-max", float),
        ):
            sub.add_argument(f"--{option}", type=kind, default=None)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run the command line and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return error.code if isinstance(error.code, int) else 1

    try:
        cfg = RunConfig.from_sources(args)
        return args.handler(cfg)
    except (TypeError, ValueError, FileNotFoundError, FileExistsError) as error:
        print(f"fracvar: error: {error}", file=sys.stderr)
        return 1
    except FloatingPointError as error:
        print(f"fracvar: numerical failure: {error}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
