"""Module with fractional isoperimetric problems and their optimality data.

A problem asks to minimize the functional J[u] = I(f(x, y, u, v, w)),
v and w being the fractional partial derivatives of u along x and y and
I the fractional volume integral, subject to the isoperimetric
constraint G[u] = I(g(x, y, u, v, w)) = K and, optionally, to fixed
boundary values u = psi on the boundary of the rectangle.

With H = lambda0 * f + lambda * g the Euler-Lagrange equation reads
d3H - D_x d4H - D_y d5H = 0, and without boundary values the natural
boundary conditions ask d4H to vanish on the x-edges and d5H on the
y-edges.

This file can also be imported as a module and contains the following
functions:

    * eval_J - value of the functional J at a field u.

    * eval_constraint - value of the constraint functional G at u.

    * eval_H, eval_dH3, eval_dH4, eval_dH5 - H = lambda0*f + lambda*g
    and its partials with respect to u, v and w at a point.

    * el_residual - nodal residual of the Euler-Lagrange equation.

    * natural_bc_residuals - d4H and d5H sampled on the four edges.

    * gateaux_derivative - central-difference directional derivative of
    J or G.

    * convexity_probe - sampled check that H is convex in (u, v, w).

    * audit_partials - finite-difference audit of the partials supplied
    with a LagrangianSpec.

    * catalog_lagrangian - named built-in integrands.

    * catalog_problem - named built-in problems.

"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from fracvar.functions.fields import Field2D, FractionalOrder, Grid2D, sample
from fracvar.functions.fracops import (
    Axis,
    partial_frac,
    quadrature_weights,
    volume_integral,
)

PointFunction = Callable[..., np.ndarray]

LAGRANGIANS = (
    "dirichlet-quadratic",
    "dirichlet-energy",
    "linear-g",
    "manufactured",
)
PROBLEMS = ("manufactured", "dirichlet-quadratic", "linear-g")


class Functional(Enum):
    J = "J"
    G = "G"


@dataclass(frozen=True)
class LagrangianSpec:
    """Integrand f(x, y, u, v, w) with its partials d3, d4, d5.

    All four functions take numpy arrays (or floats) and must be
    vectorized; scalar results are broadcast.
    """

    value: PointFunction
    d3: PointFunction
    d4: PointFunction
    d5: PointFunction
    name: str = "custom"

    def __post_init__(self):
        for part in ("value", "d3", "d4", "d5"):
            if not callable(getattr(self, part)):
                raise TypeError(f"'{part}' should be callable.")


@dataclass(frozen=True)
class MultiplierPair:
    """Nonzero pair (lambda0, lambda) of Lagrange multipliers."""

    lambda0: float
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lambda0", float(self.lambda0))
        object.__setattr__(self, "lam", float(self.lam))
        if self.lambda0 == 0.0 and self.lam == 0.0:
            raise ValueError("Multipliers should not both be zero.")


@dataclass(frozen=True, eq=False)
class IsoperimetricProblem:
    """Fractional isoperimetric problem on a rectangle.

    Parameters
    ----------
    grid : Grid2D
        Grid of the rectangle.
    order : FractionalOrder
        Order alpha of all operators.
    f : LagrangianSpec
        Integrand of J.
    g : LagrangianSpec | None
        Integrand of the constraint; None for an unconstrained problem.
    K : float
        Constraint level.
    psi : np.ndarray | None
        Boundary values in row-major node order, or None when the
        boundary is free.
    """

    grid: Grid2D
    order: FractionalOrder
    f: LagrangianSpec
    g: Optional[LagrangianSpec] = None
    K: float = 0.0
    psi: Optional[np.ndarray] = None

    def __post_init__(self):
        if not isinstance(self.grid, Grid2D):
            raise TypeError("'grid' should be a Grid2D.")
        if not isinstance(self.order, FractionalOrder):
            raise TypeError("'order' should be a FractionalOrder.")
        if not isinstance(self.f, LagrangianSpec):
            raise TypeError("'f' should be a LagrangianSpec.")
        if self.g is not None and not isinstance(self.g, LagrangianSpec):
            raise TypeError("'g' should be a LagrangianSpec or None.")
        if not np.isfinite(self.K):
            raise ValueError("'K' should be finite.")
        object.__setattr__(self, "K", float(self.K))
        if self.psi is not None:
            psi = np.array(self.psi, dtype=float).ravel()
            if psi.size != self.grid.boundary_size:
                raise ValueError(
                    f"'psi' should hold {self.grid.boundary_size} boundary "
                    f"values, got {psi.size}."
                )
            if not np.all(np.isfinite(psi)):
                raise ValueError("'psi' holds non-finite entries.")
            psi.setflags(write=False)
            object.__setattr__(self, "psi", psi)

    @property
    def constrained(self) -> bool:
        return self.g is not None

    @property
    def free_boundary(self) -> bool:
        return self.psi is None


@dataclass(frozen=True, eq=False)
class EdgeResiduals:
    """d4H on the edges x = a, x = b and d5H on the edges y = c, y = d."""

    at_x_a: np.ndarray
    at_x_b: np.ndarray
    at_y_c: np.ndarray
    at_y_d: np.ndarray

    def max_abs(self) -> float:
        return float(
            max(
                np.max(np.abs(edge))
                for edge in (self.at_x_a, self.at_x_b, self.at_y_c, self.at_y_d)
            )
        )


class Convexity(Enum):
    CONVEX_ON_SAMPLES = "ConvexOnSamples"
    NOT_CONVEX = "NotConvex"


@dataclass(frozen=True)
class ConvexityVerdict:
    """Outcome of convexity_probe.

    'witness' is the first sampled point (x, y, u, v, w) whose Hessian
    has an eigenvalue below the threshold, None when there is none.
    """

    status: Convexity
    witness: Optional[tuple]
    min_eigenvalue: float

    @property
    def convex(self) -> bool:
        return self.status is Convexity.CONVEX_ON_SAMPLES


def _check_problem(p: IsoperimetricProblem) -> None:
    if not isinstance(p, IsoperimetricProblem):
        raise TypeError("'p' should be an IsoperimetricProblem.")


def _check_on_grid(p: IsoperimetricProblem, u: Field2D, name: str = "u"):
    if not isinstance(u, Field2D):
        raise TypeError(f"'{name}' should be a Field2D.")
    if u.grid != p.grid:
        raise ValueError(f"'{name}' does not live on the problem grid.")


def nodal_state(p: IsoperimetricProblem, u: Field2D) -> tuple:
    """Arrays (x, y, u, v, w) at every node, v and w from partial_frac."""
    _check_on_grid(p, u)
    X, Y = p.grid.mesh()
    V = partial_frac(u, Axis.X, p.order).values
    W = partial_frac(u, Axis.Y, p.order).values

    return X, Y, u.values, V, W


def evaluate(fn: PointFunction, state: tuple, what: str) -> np.ndarray:
    """Evaluate a point function on the nodal state.

    Raises
    ------
    FloatingPointError
        Raised if the function is not finite at some node.
    """
    shape = np.shape(state[0])
    with np.errstate(all="ignore"):
        values = np.broadcast_to(np.asarray(fn(*state), dtype=float), shape)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"Non-finite {what} at some grid node.")

    return values


def _integral(p: IsoperimetricProblem, fn: PointFunction, state, what):
    values = evaluate(fn, state, what)
    return volume_integral(Field2D(p.grid, values), p.order)


def eval_J(p: IsoperimetricProblem, u: Field2D) -> float:
    """Fractional volume integral of f(x, y, u, D_x u, D_y u).

    Parameters
    ----------
    p : IsoperimetricProblem
        The problem.
    u : Field2D
        Field on the problem grid.

    Returns
    -------
    float
        J[u].

    Raises
    ------
    FloatingPointError
        Raised if the integrand is not finite at some node.
    """
    _check_problem(p)
    return _integral(p, p.f.value, nodal_state(p, u), "integrand of J")


def eval_constraint(p: IsoperimetricProblem, u: Field2D) -> float:
    """Fractional volume integral of g(x, y, u, D_x u, D_y u).

    Returns 0 for an unconstrained problem.
    """
    _check_problem(p)
    if p.g is None:
        _check_on_grid(p, u)
        return 0.0
    return _integral(p, p.g.value, nodal_state(p, u), "constraint integrand")


def _combine(p, m: MultiplierPair, part: str, args: tuple):
    if not isinstance(m, MultiplierPair):
        raise TypeError("'m' should be a MultiplierPair.")
    with np.errstate(all="ignore"):
        value = m.lambda0 * np.asarray(getattr(p.f, part)(*args), dtype=float)
        if p.g is not None and m.lam != 0.0:
            value = value + m.lam * np.asarray(
                getattr(p.g, part)(*args), dtype=float
            )
    if np.ndim(value) == 0:
        return float(value)
    return value


def eval_H(p: IsoperimetricProblem, m: MultiplierPair, x, y, u, v, w):
    """H = lambda0 * f + lambda * g at a point (or arrays of points)."""
    return _combine(p, m, "value", (x, y, u, v, w))


def eval_dH3(p: IsoperimetricProblem, m: MultiplierPair, x, y, u, v, w):
    return _combine(p, m, "d3", (x, y, u, v, w))


def eval_dH4(p: IsoperimetricProblem, m: MultiplierPair, x, y, u, v, w):
    return _combine(p, m, "d4", (x, y, u, v, w))


def eval_dH5(p: IsoperimetricProblem, m: MultiplierPair, x, y, u, v, w):
    return _combine(p, m, "d5", (x, y, u, v, w))


def _nodal_partials(p, u: Field2D, m: MultiplierPair) -> tuple:
    state = nodal_state(p, u)
    return tuple(
        evaluate(
            lambda *args, fn=fn: fn(p, m, *args), state, f"{name} of H"
        )
        for name, fn in (
            ("d3", eval_dH3),
            ("d4", eval_dH4),
            ("d5", eval_dH5),
        )
    )


def el_residual(
    p: IsoperimetricProblem, u: Field2D, m: MultiplierPair
) -> Field2D:
    """Nodal residual of the fractional Euler-Lagrange equation.

    Parameters
    ----------
    p : IsoperimetricProblem
        The problem.
    u : Field2D
        Candidate field.
    m : MultiplierPair
        Multipliers of H.

    Returns
    -------
    Field2D
        d3H{u} - D_x(d4H{u}) - D_y(d5H{u}) at every node.
    """
    _check_problem(p)
    A, B, C = _nodal_partials(p, u, m)
    dB = partial_frac(Field2D(p.grid, B), Axis.X, p.order).values
    dC = partial_frac(Field2D(p.grid, C), Axis.Y, p.order).values

    return Field2D(p.grid, A - dB - dC)


def natural_bc_residuals(
    p: IsoperimetricProblem, u: Field2D, m: MultiplierPair
) -> EdgeResiduals:
    """Samples of d4H{u} on x = a, x = b and of d5H{u} on y = c, y = d."""
    _check_problem(p)
    _, B, C = _nodal_partials(p, u, m)

    return EdgeResiduals(
        at_x_a=B[0, :].copy(),
        at_x_b=B[-1, :].copy(),
        at_y_c=C[:, 0].copy(),
        at_y_d=C[:, -1].copy(),
    )


def gateaux_derivative(
    p: IsoperimetricProblem,
    which: Functional,
    u: Field2D,
    eta: Field2D,
    eps: Optional[float] = None,
) -> float:
    """Central-difference directional derivative of J or G.

    Parameters
    ----------
    p : IsoperimetricProblem
        The problem.
    which : Functional
        Functional.J or Functional.G.
    u : Field2D
        Base point.
    eta : Field2D
        Direction.
    eps : float, optional
        Step. The default is 1e-5 * (1 + max|u|).

    Returns
    -------
    float
        [Phi(u + eps*eta) - Phi(u - eps*eta)] / (2*eps).
    """
    _check_problem(p)
    _check_on_grid(p, u)
    _check_on_grid(p, eta, "eta")
    functional = {Functional.J: eval_J, Functional.G: eval_constraint}[
        Functional(which)
    ]
    if eps is None:
        eps = 1e-5 * (1.0 + u.max_abs())
    if not eps > 0:
        raise ValueError(f"'eps' should be positive, got {eps}.")

    forward = functional(p, u + eps * eta)
    backward = functional(p, u - eps * eta)

    return (forward - backward) / (2.0 * eps)


def _sample_points(grid: Grid2D, count: int, radius: float, rng) -> np.ndarray:
    low = np.array([grid.a, grid.c, -radius, -radius, -radius])
    high = np.array([grid.b, grid.d, radius, radius, radius])
    return rng.uniform(low, high, size=(count, 5))


def convexity_probe(
    p: IsoperimetricProblem,
    m: MultiplierPair,
    sample_count: int,
    seed: int,
    radius: float = 10.0,
    step: float = 1e-3,
    threshold: float = -1e-6,
) -> ConvexityVerdict:
    """Check on random points that H is convex in (u, v, w).

    Points are drawn from the grid rectangle times [-radius, radius]^3
    with numpy's default generator seeded by 'seed'. At each point the
    3x3 Hessian of H in (u, v, w) is formed by central differences and
    its smallest eigenvalue compared with 'threshold'.

    Parameters
    ----------
    p : IsoperimetricProblem
        The problem.
    m : MultiplierPair
        Multipliers of H.
    sample_count : int
        Number of points, at least 1.
    seed : int
        Seed of the generator.
    radius : float, optional
        Half-width of the (u, v, w) box. The default is 10.
    step : float, optional
        Finite-difference step. The default is 1e-3.
    threshold : float, optional
        Lowest accepted eigenvalue. The default is -1e-6.

    Returns
    -------
    ConvexityVerdict
        ConvexOnSamples, or NotConvex with the first violating point.
    """
    _check_problem(p)
    if sample_count < 1:
        raise ValueError(f"'sample_count' should be positive, got {sample_count}.")
    if not radius > 0 or not step > 0:
        raise ValueError("'radius' and 'step' should be positive.")

    rng = np.random.default_rng(seed)
    points = _sample_points(p.grid, sample_count, radius, rng)

    def H(shift: np.ndarray) -> np.ndarray:
        z = points + shift
        return np.broadcast_to(
            np.asarray(eval_H(p, m, *z.T), dtype=float), (sample_count,)
        )

    basis = np.eye(5)[2:] * step
    center = H(np.zeros(5))
    hessian = np.empty((sample_count, 3, 3))
    for i in range(3):
        hessian[:, i, i] = (H(basis[i]) - 2.0 * center + H(-basis[i])) / step**2
        for j in range(i + 1, 3):
            mixed = (
                H(basis[i] + basis[j])
                - H(basis[i] - basis[j])
                - H(-basis[i] + basis[j])
                + H(-basis[i] - basis[j])
            ) / (4.0 * step**2)
            hessian[:, i, j] = mixed
            hessian[:, j, i] = mixed

    lowest = np.linalg.eigvalsh(hessian)[:, 0]
    violating = np.flatnonzero(lowest < threshold)
    if violating.size:
        first = violating[0]
        return ConvexityVerdict(
            status=Convexity.NOT_CONVEX,
            witness=tuple(float(c) for c in points[first]),
            min_eigenvalue=float(lowest[first]),
        )

    return ConvexityVerdict(
        status=Convexity.CONVEX_ON_SAMPLES,
        witness=None,
        min_eigenvalue=float(np.min(lowest)),
    )


def audit_partials(
    spec: LagrangianSpec,
    sample_count: int = 100,
    seed: int = 0,
    bounds: tuple = (0.0, 1.0, 0.0, 1.0),
    radius: float = 10.0,
) -> float:
    """Compare the partials of a LagrangianSpec with finite differences.

    Parameters
    ----------
    spec : LagrangianSpec
        The integrand and its partials.
    sample_count : int, optional
        Number of random points. The default is 100.
    seed : int, optional
        Seed of the generator. The default is 0.
    bounds : tuple, optional
        (a, b, c, d) of the sampled rectangle. The default is the unit
        square.
    radius : float, optional
        Half-width of the (u, v, w) box. The default is 10.

    Returns
    -------
    float
        Largest |analytic - central difference| / max(1, |analytic|)
        over all points and the three partials.
    """
    if not isinstance(spec, LagrangianSpec):
        raise TypeError("'spec' should be a LagrangianSpec.")
    grid = Grid2D(*bounds, 2, 2)
    rng = np.random.default_rng(seed)
    points = _sample_points(grid, sample_count, radius, rng)

    worst = 0.0
    for index, part in zip((2, 3, 4), (spec.d3, spec.d4, spec.d5)):
        step = 1e-6 * (1.0 + np.abs(points[:, index]))
        forward, backward = points.copy(), points.copy()
        forward[:, index] += step
        backward[:, index] -= step
        numeric = (spec.value(*forward.T) - spec.value(*backward.T)) / (2 * step)
        analytic = np.broadcast_to(
            np.asarray(part(*points.T), dtype=float), (sample_count,)
        )
        scaled = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
        worst = max(worst, float(np.max(scaled)))

    return worst


def _zero(x, y, u, v, w):
    return 0.0 * u


def _one(x, y, u, v, w):
    return 0.0 * u + 1.0


def manufactured_reference(grid: Grid2D) -> Field2D:
    """Field u*(x, y) = x*y the manufactured problems are built from."""
    return sample(lambda x, y: x * y, grid)


def catalog_lagrangian(
    name: str, grid: Grid2D, order: FractionalOrder
) -> LagrangianSpec:
    """Built-in integrand by name.

    'dirichlet-quadratic' is v^2 + w^2 + u^2, 'dirichlet-energy' is
    v^2 + w^2, 'linear-g' is u, and 'manufactured' is
    (v - p0)^2 + (w - q0)^2 with p0, q0 the sampled fractional partials
    of u* = x*y, interpolated piecewise-linearly between nodes.

    Raises
    ------
    ValueError
        Raised if the name is unknown.
    """
    if name == "dirichlet-quadratic":
        return LagrangianSpec(
            value=lambda x, y, u, v, w: v**2 + w**2 + u**2,
            d3=lambda x, y, u, v, w: 2.0 * u,
            d4=lambda x, y, u, v, w: 2.0 * v,
            d5=lambda x, y, u, v, w: 2.0 * w,
            name=name,
        )
    if name == "dirichlet-energy":
        return LagrangianSpec(
            value=lambda x, y, u, v, w: v**2 + w**2,
            d3=_zero,
            d4=lambda x, y, u, v, w: 2.0 * v,
            d5=lambda x, y, u, v, w: 2.0 * w,
            name=name,
        )
    if name == "linear-g":
        return LagrangianSpec(value=lambda x, y, u, v, w: u, d3=_one,
                              d4=_zero, d5=_zero, name=name)
    if name == "manufactured":
        reference = manufactured_reference(grid)
        p0 = RegularGridInterpolator(
            (grid.x, grid.y),
            partial_frac(reference, Axis.X, order).values,
            bounds_error=False,
            fill_value=None,
        )
        q0 = RegularGridInterpolator(
            (grid.x, grid.y),
            partial_frac(reference, Axis.Y, order).values,
            bounds_error=False,
            fill_value=None,
        )

        def at(table, x, y):
            x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
            return table(np.stack((x, y), axis=-1))

        return LagrangianSpec(
            value=lambda x, y, u, v, w: (v - at(p0, x, y)) ** 2
            + (w - at(q0, x, y)) ** 2,
            d3=_zero,
            d4=lambda x, y, u, v, w: 2.0 * (v - at(p0, x, y)),
            d5=lambda x, y, u, v, w: 2.0 * (w - at(q0, x, y)),
            name=name,
        )
    raise ValueError(
        f"Unknown Lagrangian '{name}'; choose from {', '.join(LAGRANGIANS)}."
    )


def catalog_problem(
    name: str,
    grid: Grid2D,
    order: FractionalOrder,
    free_boundary: bool = False,
) -> IsoperimetricProblem:
    """Built-in problem by name.

    'manufactured': f manufactured from u* = x*y, g = u, K = G[u*],
    psi = trace of u*. 'dirichlet-quadratic': f = v^2 + w^2 + u^2,
    g = u, K = I(1), psi = 1. 'linear-g': f = v^2 + w^2, g = u,
    K = I(1)/2, psi = 0. With 'free_boundary' the same problem is
    returned without psi.

    Raises
    ------
    ValueError
        Raised if the name is unknown.
    """
    if not isinstance(free_boundary, bool):
        raise TypeError("'free_boundary' should be boolean")
    g = catalog_lagrangian("linear-g", grid, order)
    unit = volume_integral(sample(lambda x, y: 1.0, grid), order)

    if name == "manufactured":
        f = catalog_lagrangian("manufactured", grid, order)
        reference = manufactured_reference(grid)
        constraint = IsoperimetricProblem(grid, order, f, g)
        K = eval_constraint(constraint, reference)
        psi = reference.trace()
    elif name == "dirichlet-quadratic":
        f = catalog_lagrangian("dirichlet-quadratic", grid, order)
        K = unit
        psi = np.ones(grid.boundary_size)
    elif name == "linear-g":
        f = catalog_lagrangian("dirichlet-energy", grid, order)
        K = 0.5 * unit
        psi = np.zeros(grid.boundary_size)
    else:
        raise ValueError(
            f"Unknown problem '{name}'; choose from {', '.join(PROBLEMS)}."
        )

    return IsoperimetricProblem(
        grid, order, f, g, K, None if free_boundary else psi
    )


def quadrature_field(p: IsoperimetricProblem) -> np.ndarray:
    """alpha^2 * wx[i] * wy[j], the weight of every node in J and G."""
    return p.order.alpha**2 * quadrature_weights(p.grid, p.order).outer()
