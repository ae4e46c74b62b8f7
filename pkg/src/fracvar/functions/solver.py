"""Module for solving fractional isoperimetric problems.

The problem is discretized first and optimized afterwards: the nodal
values of u are the unknowns, J and G are their weighted sums, and the
exact gradient of both is assembled with the transposes of the discrete
fractional partial derivatives. The constraint is handled by an
augmented-Lagrangian outer loop around SciPy's L-BFGS-B.

This file can also be imported as a module and contains the following
functions:

    * discrete_gradient - exact gradient of the discrete J or G with
    respect to the nodal values of u.

    * initial_guess - starting field of a solve.

    * solve_fixed_boundary - minimize J subject to G = K with the
    boundary values fixed to psi.

    * solve_free_boundary - minimize J subject to G = K with all nodal
    values free.

    * verify_sufficiency - compare J at a solution with J at random
    admissible perturbations of it.

    * save_report - write a SolveReport as JSON.

"""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional
from warnings import warn

import numpy as np
from scipy.optimize import minimize, newton
from tqdm import tqdm

from fracvar.functions.fields import Field2D
from fracvar.functions.fracops import Axis, partial_frac_transpose
from fracvar.functions.variational import (
    Functional,
    IsoperimetricProblem,
    MultiplierPair,
    el_residual,
    eval_constraint,
    eval_J,
    evaluate,
    natural_bc_residuals,
    nodal_state,
    quadrature_field,
)

ABNORMAL_GRADIENT = 1e-10
INITS = ("auto", "zero", "boundary")


class SolveStatus(Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    ABNORMAL = "Abnormal"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolveOptions:
    """Options of the augmented-Lagrangian solver.

    Parameters
    ----------
    max_outer_iters : int
        Multiplier updates. The default is 50.
    max_inner_iters : int
        L-BFGS-B iterations per outer iteration. The default is 500.
    grad_tol : float
        Bound on ||grad J + lambda grad G|| over the unknowns. The
        default is 1e-8.
    constraint_tol : float
        Bound on |G - K|. The default is 1e-8.
    nat_bc_tol : float
        Bound on the natural boundary condition residuals a free-boundary
        solve must meet to be Converged. The default is 1e-4.
    penalty_init : float
        Initial penalty rho. The default is 10.
    penalty_growth : float
        Factor applied to rho when the violation does not shrink by a
        factor of 4. The default is 10.
    penalty_max : float
        Cap on rho. The default is 1e10.
    seed : int
        Seed of any random choice. The default is 0.
    init : str
        'auto', 'zero' or 'boundary'. The default is 'auto'.
    verbose : bool
        Show a progress bar over the outer iterations. The default is
        False.
    record_trace : bool
        Keep the augmented-Lagrangian value after every inner iteration.
        The default is False.
    """

    max_outer_iters: int = 50
    max_inner_iters: int = 500
    grad_tol: float = 1e-8
    constraint_tol: float = 1e-8
    nat_bc_tol: float = 1e-4
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e10
    seed: int = 0
    init: str = "auto"
    verbose: bool = False
    record_trace: bool = False

    def __post_init__(self):
        for name in ("max_outer_iters", "max_inner_iters", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"'{name}' should be an integer.")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("Iteration budgets should be positive.")
        for name in (
            "grad_tol", "constraint_tol", "nat_bc_tol", "penalty_init"
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"'{name}' should be positive.")
        if not self.penalty_growth > 1:
            raise ValueError("'penalty_growth' should exceed 1.")
        if not self.penalty_max >= self.penalty_init:
            raise ValueError("'penalty_max' should not be below 'penalty_init'.")
        if self.init not in INITS:
            raise ValueError(
                f"'init' should be one of {', '.join(INITS)}, got '{self.init}'."
            )
        for name in ("verbose", "record_trace"):
            if not isinstance(getattr(self, name), bool):
                raise TypeError(f"'{name}' should be boolean")


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Result of a solve.

    'nat_bc_residual_max' is None for fixed-boundary solves. 'trace'
    holds one tuple of augmented-Lagrangian values per outer iteration
    when the trace was requested.
    """

    u: Field2D
    multipliers: MultiplierPair
    objective: float
    constraint_violation: float
    el_residual_max: float
    status: SolveStatus
    iterations: int
    stationarity: float
    nat_bc_residual_max: Optional[float] = None
    trace: tuple = field(default=(), repr=False)

    def to_dict(self, field_path: Optional[str] = None) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "lambda0": self.multipliers.lambda0,
            "lambda": self.multipliers.lam,
            "constraint_violation": self.constraint_violation,
            "el_residual_max": self.el_residual_max,
            "nat_bc_residual_max": self.nat_bc_residual_max,
            "iterations": self.iterations,
            "stationarity": self.stationarity,
            "field": field_path,
        }


def save_report(
    report: SolveReport, path: str, field_path: Optional[str] = None
) -> None:
    """Write the report as JSON with sorted keys."""
    with open(path, "w") as file:
        json.dump(report.to_dict(field_path), file, sort_keys=True, indent=2)
        file.write("\n")


def discrete_gradient(
    p: IsoperimetricProblem, which: Functional, u: Field2D
) -> Field2D:
    """Exact gradient of the discrete J or G.

    With W the nodal weights of volume_integral and P_x, P_y the
    discrete partial derivatives, the gradient of
    sum(W * f(x, y, u, P_x u, P_y u)) is
    W*d3f + P_x^T(W*d4f) + P_y^T(W*d5f).

    Parameters
    ----------
    p : IsoperimetricProblem
        The problem.
    which : Functional
        Functional.J or Functional.G.
    u : Field2D
        Point of evaluation.

    Returns
    -------
    Field2D
        The gradient; zero for G of an unconstrained problem.
    """
    which = Functional(which)
    state = nodal_state(p, u)
    if which is Functional.G and p.g is None:
        return Field2D(p.grid, np.zeros(p.grid.shape))
    spec = p.f if which is Functional.J else p.g
    weights = quadrature_field(p)

    d3 = evaluate(spec.d3, state, "d3 of the integrand")
    d4 = evaluate(spec.d4, state, "d4 of the integrand")
    d5 = evaluate(spec.d5, state, "d5 of the integrand")
    gradient = (
        weights * d3
        + partial_frac_transpose(Field2D(p.grid, weights * d4), Axis.X, p.order).values
        + partial_frac_transpose(Field2D(p.grid, weights * d5), Axis.Y, p.order).values
    )

    return Field2D(p.grid, gradient)


def _coons_patch(p: IsoperimetricProblem) -> np.ndarray:
    """Bilinearly blended interpolant of the boundary values psi."""
    grid = p.grid
    edges = np.zeros(grid.shape)
    edges[grid.boundary_mask()] = p.psi
    s = ((grid.x - grid.a) / (grid.b - grid.a))[:, None]
    t = ((grid.y - grid.c) / (grid.d - grid.c))[None, :]
    left, right = edges[0, :][None, :], edges[-1, :][None, :]
    bottom, top = edges[:, 0][:, None], edges[:, -1][:, None]

    patch = (
        (1 - s) * left
        + s * right
        + (1 - t) * bottom
        + t * top
        - (1 - s) * (1 - t) * edges[0, 0]
        - s * (1 - t) * edges[-1, 0]
        - (1 - s) * t * edges[0, -1]
        - s * t * edges[-1, -1]
    )
    patch[grid.boundary_mask()] = p.psi

    return patch


def initial_guess(p: IsoperimetricProblem, opts: SolveOptions) -> Field2D:
    """Starting field of a solve.

    'boundary' is the bilinearly blended interpolant of psi, 'zero' the
    zero field (with psi on the boundary when psi is given), and 'auto'
    is 'boundary' for fixed and 'zero' for free boundaries.

    Raises
    ------
    ValueError
        Raised for 'boundary' on a free-boundary problem.
    """
    init = opts.init
    if init == "auto":
        init = "zero" if p.free_boundary else "boundary"
    if init == "boundary":
        if p.free_boundary:
            raise ValueError("'boundary' init needs boundary values psi.")
        return Field2D(p.grid, _coons_patch(p))
    values = np.zeros(p.grid.shape)
    if not p.free_boundary:
        values[p.grid.boundary_mask()] = p.psi

    return Field2D(p.grid, values)


class _Evaluator:
    """J, G and their gradients on the unknowns, with the last result kept."""

    def __init__(self, p: IsoperimetricProblem, base: Field2D, mask: np.ndarray):
        self.p = p
        self.base = base.values.copy()
        self.mask = mask
        self._key = None
        self._value = None

    def field(self, z: np.ndarray) -> Field2D:
        values = self.base.copy()
        values[self.mask] = z
        return Field2D(self.p.grid, values)

    def __call__(self, z: np.ndarray) -> tuple:
        key = z.tobytes()
        if key != self._key:
            u = self.field(z)
            J = eval_J(self.p, u)
            gJ = discrete_gradient(self.p, Functional.J, u).values[self.mask]
            if self.p.constrained:
                c = eval_constraint(self.p, u) - self.p.K
                gG = discrete_gradient(self.p, Functional.G, u).values[self.mask]
            else:
                c, gG = 0.0, np.zeros_like(gJ)
            if not (np.isfinite(J) and np.isfinite(c)):
                raise FloatingPointError(
                    "Objective or constraint became non-finite during the solve."
                )
            self._key = key
            self._value = (J, gJ, c, gG)
        return self._value


def _solve(p: IsoperimetricProblem, opts: SolveOptions) -> SolveReport:
    if not isinstance(opts, SolveOptions):
        raise TypeError("'opts' should be a SolveOptions.")
    mask = (
        np.ones(p.grid.shape, dtype=bool)
        if p.free_boundary
        else p.grid.interior_mask()
    )
    start = initial_guess(p, opts)
    evaluator = _Evaluator(p, start, mask)
    z = start.values[mask].copy()

    lam, rho = 0.0, opts.penalty_init
    previous = np.inf
    capped = False
    status = SolveStatus.MAX_ITERS
    trace = []
    iterations = 0

    def augmented(z: np.ndarray) -> tuple:
        J, gJ, c, gG = evaluator(z)
        value = J + lam * c + 0.5 * rho * c**2

        return value, gJ + (lam + rho * c) * gG

    progress = tqdm(
        range(1, opts.max_outer_iters + 1),
        desc="Augmented Lagrangian",
        disable=not opts.verbose,
    )
    for iterations in progress:
        inner = [augmented(z)[0]] if opts.record_trace else None

        def record(xk: np.ndarray) -> None:
            if inner is not None:
                inner.append(augmented(xk)[0])

        result = minimize(
            augmented,
            z,
            jac=True,
            method="L-BFGS-B",
            callback=record,
            options={
                "maxiter": opts.max_inner_iters,
                "ftol": 0.0,
                "gtol": opts.grad_tol,
            },
        )
        z = result.x
        J, gJ, c, gG = evaluator(z)
        if p.constrained:
            lam += rho * c
        violation = abs(c)
        stationarity = float(np.max(np.abs(gJ + lam * gG)))
        if inner is not None:
            trace.append(tuple(inner))
        progress.set_postfix(objective=J, violation=violation, rho=rho)

        done = (
            violation <= opts.constraint_tol and stationarity <= opts.grad_tol
        )
        if done and p.free_boundary:
            edges = natural_bc_residuals(
                p, evaluator.field(z), MultiplierPair(1.0, lam)
            )
            done = edges.max_abs() <= opts.nat_bc_tol
        if done:
            status = SolveStatus.CONVERGED
            break
        if p.constrained and violation > 0.25 * previous:
            rho = rho * opts.penalty_growth
            if rho >= opts.penalty_max:
                rho = opts.penalty_max
                if not capped:
                    warn(
                        f"Penalty reached its cap {opts.penalty_max:g}.",
                        RuntimeWarning,
                    )
                capped = True
        previous = violation
    progress.close()

    if status is not SolveStatus.CONVERGED and violation > opts.constraint_tol:
        status = SolveStatus.INFEASIBLE

    multipliers = MultiplierPair(1.0, lam)
    if p.constrained and np.max(np.abs(gG)) <= ABNORMAL_GRADIENT:
        status = SolveStatus.ABNORMAL
        multipliers = MultiplierPair(0.0, 1.0)

    u = evaluator.field(z)
    residual = el_residual(p, u, multipliers).values[p.grid.interior_mask()]
    nat_bc = None
    if p.free_boundary:
        nat_bc = natural_bc_residuals(p, u, multipliers).max_abs()

    return SolveReport(
        u=u,
        multipliers=multipliers,
        objective=float(J),
        constraint_violation=float(violation),
        el_residual_max=float(np.max(np.abs(residual))) if residual.size else 0.0,
        status=status,
        iterations=iterations,
        stationarity=stationarity,
        nat_bc_residual_max=nat_bc,
        trace=tuple(trace),
    )


def solve_fixed_boundary(
    p: IsoperimetricProblem, opts: Optional[SolveOptions] = None
) -> SolveReport:
    """Minimize J subject to G = K and u = psi on the boundary.

    Interior nodes are the unknowns. Each outer iteration minimizes
    J + lambda*(G-K) + rho/2*(G-K)^2 with L-BFGS-B, then updates
    lambda <- lambda + rho*(G-K) and grows rho when |G-K| did not shrink
    by a factor of 4.

    Parameters
    ----------
    p : IsoperimetricProblem
        Problem with boundary values psi.
    opts : SolveOptions, optional
        Solver options. The default is SolveOptions().

    Returns
    -------
    SolveReport
        Converged, Infeasible (|G-K| above tolerance), MaxIters, or
        Abnormal when the constraint gradient vanishes at the result,
        in which case the multipliers are (0, 1).

    Raises
    ------
    ValueError
        Raised if the problem has no boundary values.
    FloatingPointError
        Raised if J or G becomes non-finite.
    """
    if not isinstance(p, IsoperimetricProblem):
        raise TypeError("'p' should be an IsoperimetricProblem.")
    if p.free_boundary:
        raise ValueError(
            "The problem has no boundary values; use solve_free_boundary."
        )
    return _solve(p, opts if opts is not None else SolveOptions())


def solve_free_boundary(
    p: IsoperimetricProblem, opts: Optional[SolveOptions] = None
) -> SolveReport:
    """Minimize J subject to G = K with every nodal value unknown.

    As solve_fixed_boundary; the report additionally holds the largest
    natural boundary condition residual, and Converged also requires it
    to be at most opts.nat_bc_tol.

    Raises
    ------
    ValueError
        Raised if the problem prescribes boundary values.
    """
    if not isinstance(p, IsoperimetricProblem):
        raise TypeError("'p' should be an IsoperimetricProblem.")
    if not p.free_boundary:
        raise ValueError(
            "The problem prescribes boundary values; use solve_fixed_boundary."
        )
    return _solve(p, opts if opts is not None else SolveOptions())


def verify_sufficiency(
    p: IsoperimetricProblem,
    u: Field2D,
    draws: int = 20,
    seed: int = 0,
    scale: float = 1e-2,
) -> float:
    """Smallest J[u_hat] - J[u] over random admissible perturbations.

    Each perturbation is a normal random field times 'scale', zero on
    the boundary unless the boundary is free. It is then moved along
    the constraint gradient by Newton steps until G[u_hat] = K.
    Perturbations for which that fails are skipped with a warning.

    Parameters
    ----------
    p : IsoperimetricProblem
        The problem.
    u : Field2D
        The candidate minimizer.
    draws : int, optional
        Number of perturbations. The default is 20.
    seed : int, optional
        Seed of the generator. The default is 0.
    scale : float, optional
        Standard deviation of the perturbation. The default is 1e-2.

    Returns
    -------
    float
        min over draws of J[u_hat] - J[u].

    Raises
    ------
    ValueError
        Raised if no perturbation can be moved back onto G = K.
    """
    if draws < 1:
        raise ValueError(f"'draws' should be positive, got {draws}.")
    rng = np.random.default_rng(seed)
    mask = (
        np.ones(p.grid.shape, dtype=bool)
        if p.free_boundary
        else p.grid.interior_mask()
    )
    base = eval_J(p, u)

    differences = []
    for _ in range(draws):
        noise = np.zeros(p.grid.shape)
        noise[mask] = rng.normal(scale=scale, size=int(mask.sum()))
        candidate = Field2D(p.grid, u.values + noise)
        if p.constrained:
            candidate = _restore_constraint(p, candidate, mask)
            if candidate is None:
                continue
        differences.append(eval_J(p, candidate) - base)

    if not differences:
        raise ValueError(
            "No perturbation could be moved back onto G = K: the constraint "
            "gradient vanishes or Newton's method failed."
        )
    if len(differences) < draws:
        warn(
            f"{draws - len(differences)} of {draws} perturbations could not "
            "be moved back onto G = K and were skipped.",
            RuntimeWarning,
        )

    return float(min(differences))


def _restore_constraint(
    p: IsoperimetricProblem, candidate: Field2D, mask: np.ndarray
) -> Optional[Field2D]:
    """Move 'candidate' along grad G until G = K; None if that fails."""
    direction = np.where(
        mask, discrete_gradient(p, Functional.G, candidate).values, 0.0
    )
    peak = float(np.max(np.abs(direction)))
    if peak == 0.0:
        return None
    direction = Field2D(p.grid, direction / peak)

    def violation(t: float) -> float:
        return eval_constraint(p, candidate + t * direction) - p.K

    def slope(t: float) -> float:
        gradient = discrete_gradient(p, Functional.G, candidate + t * direction)
        return float(np.sum(gradient.values * direction.values))

    try:
        t = newton(violation, 0.0, fprime=slope, tol=1e-14, maxiter=50)
    except RuntimeError:
        return None
    if not abs(violation(t)) <= 1e-10 * max(1.0, abs(p.K)):
        return None

    return candidate + t * direction
