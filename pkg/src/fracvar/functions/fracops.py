"""Module of discrete modified Riemann-Liouville (Jumarie) operators.

The Jumarie derivative of order alpha of a continuous function f on
[a,b] is discretized with the L1 scheme: the derivative is applied
analytically to the piecewise-linear interpolant of f(t) - f(a), which
gives closed-form history weights. Fractional volume and line integrals
carry the singular weights (b-x)^(alpha-1), (d-y)^(alpha-1) and are
computed by product integration, i.e. the weight is integrated exactly
against the piecewise-linear (bilinear) interpolant of the integrand.

This file can also be imported as a module and contains the following
functions:

    * jumarie_derivative - L1 approximation of the Jumarie derivative of
    a 1D field.

    * partial_frac - fractional partial derivative of a 2D field along
    the x or y axis.

    * partial_frac_transpose - exact transpose of the linear map applied
    by partial_frac.

    * singular_weights - product-integration weights of the singular
    weight (L-s)^(alpha-1) on a uniform grid of one axis.

    * quadrature_weights - the pair of axis weights of a Grid2D.

    * volume_integral - fractional volume integral of a 2D field.

    * line_integral_x, line_integral_y, line_integral - the two members
    of the fractional line integral over the boundary of the rectangle
    and their sum.

    * green_residual - the three members of Green's fractional formula
    and the signed defect of the identity.

    * power_rule_oracle - exact Jumarie derivative of (t-a)^beta.

    * jumarie_quadrature - brute-force evaluation of the Jumarie
    derivative by adaptive quadrature, used to validate the oracles.

    * refinement_study - evaluate a quantity on a ladder of grid sizes
    and fit the empirical order of convergence.

"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad
from scipy.linalg import toeplitz
from scipy.special import gamma
from tqdm import tqdm

from fracvar.functions.fields import Field1D, Field2D, FractionalOrder, Grid2D
from fracvar.functions.utils import convergence_order, thread_count


class Axis(Enum):
    X = "x"
    Y = "y"


def _check_order(order: FractionalOrder) -> float:
    if not isinstance(order, FractionalOrder):
        raise TypeError("'order' should be a FractionalOrder.")
    return order.alpha


def _check_field(item: Field2D, name: str) -> Field2D:
    if not isinstance(item, Field2D):
        raise TypeError(f"'{name}' should be a Field2D.")
    return item


def _as_axis(axis: Union[Axis, str]) -> Axis:
    try:
        return Axis(axis)
    except ValueError:
        raise ValueError(f"'axis' should be 'x' or 'y', got '{axis}'.")


@lru_cache(maxsize=64)
def _history_matrix(n: int, h: float, alpha: float) -> np.ndarray:
    """L1 history matrix acting on the increments of a line.

    Row j holds h^(-alpha)/Gamma(2-alpha) * b_(j-k-1) in column k < j,
    b_m = (m+1)^(1-alpha) - m^(1-alpha). Row 0 is zero.
    """
    m = np.arange(n - 1, dtype=float)
    b = (m + 1.0) ** (1.0 - alpha) - m ** (1.0 - alpha)
    column = np.concatenate(([0.0], b)) * (h ** (-alpha) / gamma(2.0 - alpha))
    matrix = toeplitz(column, np.zeros(n - 1))
    matrix.setflags(write=False)

    return matrix


def _forward_line(matrix: np.ndarray, line: np.ndarray) -> np.ndarray:
    return matrix @ np.diff(line)


def _transpose_line(matrix: np.ndarray, line: np.ndarray) -> np.ndarray:
    history = matrix.T @ line
    return -np.diff(np.concatenate(([0.0], history, [0.0])))


def _apply_lines(apply: Callable, matrix: np.ndarray, lines: np.ndarray):
    """Apply a line operator to every row of 'lines'.

    Each row is processed on its own, so the result does not depend on
    the number of worker threads.
    """
    threads = min(thread_count(), lines.shape[0])
    if threads == 1:
        rows = [apply(matrix, line) for line in lines]
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            rows = list(executor.map(lambda line: apply(matrix, line), lines))

    return np.vstack(rows)


def _apply_axis(u: Field2D, axis: Axis, alpha: float, apply: Callable):
    grid = u.grid
    if axis is Axis.X:
        matrix = _history_matrix(grid.nx, grid.hx, alpha)
        return _apply_lines(apply, matrix, u.values.T).T
    matrix = _history_matrix(grid.ny, grid.hy, alpha)
    return _apply_lines(apply, matrix, u.values)


def jumarie_derivative(f: Field1D, order: FractionalOrder) -> Field1D:
    """L1 approximation of the Jumarie derivative.

    g[j] = 1/Gamma(2-alpha) * sum_{k<j} (f[k+1]-f[k])/h *
    ((x_j-x_k)^(1-alpha) - (x_j-x_{k+1})^(1-alpha)), g[0] = 0.

    Parameters
    ----------
    f : Field1D
        Samples of f on a uniform grid of [a,b].
    order : FractionalOrder
        Order alpha.

    Returns
    -------
    Field1D
        Approximation of f^(alpha) at the same nodes. Constants map to
        the exact zero field.
    """
    alpha = _check_order(order)
    if not isinstance(f, Field1D):
        raise TypeError("'f' should be a Field1D.")
    matrix = _history_matrix(f.n, f.h, alpha)

    return Field1D(f.a, f.b, f.n, _forward_line(matrix, f.values))


def partial_frac(
    u: Field2D, axis: Union[Axis, str], order: FractionalOrder
) -> Field2D:
    """Fractional partial derivative along one axis.

    Applies jumarie_derivative to every grid line of the chosen axis,
    holding the other coordinate fixed, with lower limit a (axis X) or
    c (axis Y). Lines are independent and are evaluated on up to
    'FRACVAR_THREADS' threads.

    Parameters
    ----------
    u : Field2D
        The field.
    axis : Axis | str
        Axis.X ('x') or Axis.Y ('y').
    order : FractionalOrder
        Order alpha.

    Returns
    -------
    Field2D
        The derivative field on the grid of u.
    """
    alpha = _check_order(order)
    _check_field(u, "u")
    axis = _as_axis(axis)

    return Field2D(u.grid, _apply_axis(u, axis, alpha, _forward_line))


def partial_frac_transpose(
    z: Field2D, axis: Union[Axis, str], order: FractionalOrder
) -> Field2D:
    """Transpose of the partial_frac map.

    With P the linear map u -> partial_frac(u, axis, order) on nodal
    values, returns P^T z, so that sum(P(u) * z) == sum(u * P^T(z)).
    """
    alpha = _check_order(order)
    _check_field(z, "z")
    axis = _as_axis(axis)

    return Field2D(z.grid, _apply_axis(z, axis, alpha, _transpose_line))


@dataclass(frozen=True, eq=False)
class QuadratureWeights:
    """Product-integration weights of the two singular axis weights.

    sum_i wx[i] * phi(x_i) equals the integral of phi(x)(b-x)^(alpha-1)
    over [a,b] when phi is the piecewise-linear interpolant of its
    nodal samples, and analogously for wy on [c,d].
    """

    wx: np.ndarray
    wy: np.ndarray
    alpha: float

    def outer(self) -> np.ndarray:
        """Weight of every grid node, wx[i] * wy[j]."""
        return np.outer(self.wx, self.wy)


def singular_weights(n: int, length: float, order: FractionalOrder):
    """Weights of the integral of phi(x)(L-x)^(alpha-1) over [0, L].

    With s = L - x the node x_i sits at s = (n-1-i)h. On each interval
    [m h, (m+1) h] of s the weight s^(alpha-1) is integrated exactly
    against the linear interpolant of phi.

    Parameters
    ----------
    n : int
        Node count, at least 2.
    length : float
        Interval length L > 0.
    order : FractionalOrder
        Order alpha.

    Returns
    -------
    np.ndarray
        Nonnegative weights, one per node, summing to L^alpha / alpha.
    """
    alpha = _check_order(order)
    if n < 2:
        raise ValueError(f"'n' should be at least 2, got {n}.")
    if not length > 0:
        raise ValueError(f"'length' should be positive, got {length}.")
    h = length / (n - 1)
    m = np.arange(n - 1, dtype=float)
    moment0 = ((m + 1.0) ** alpha - m**alpha) / alpha
    moment1 = ((m + 1.0) ** (alpha + 1.0) - m ** (alpha + 1.0)) / (alpha + 1.0)

    weights = np.zeros(n)
    weights[:-1] += (m + 1.0) * moment0 - moment1
    weights[1:] += moment1 - m * moment0
    weights *= h**alpha

    # index by x, not by the distance s from the right end
    weights = weights[::-1].copy()
    weights.setflags(write=False)

    return weights


def quadrature_weights(grid: Grid2D, order: FractionalOrder):
    """QuadratureWeights of a grid for the order alpha."""
    if not isinstance(grid, Grid2D):
        raise TypeError("'grid' should be a Grid2D.")
    return QuadratureWeights(
        wx=singular_weights(grid.nx, grid.b - grid.a, order),
        wy=singular_weights(grid.ny, grid.d - grid.c, order),
        alpha=order.alpha,
    )


def _weighted_sum(values: np.ndarray, weights: QuadratureWeights) -> float:
    return float(weights.wx @ values @ weights.wy)


def volume_integral(f: Field2D, order: FractionalOrder) -> float:
    """Fractional volume integral over the rectangle of the grid.

    Returns alpha^2 * sum_ij wx[i] wy[j] f[i, j], the product integration
    of the bilinear interpolant of f against (b-x)^(alpha-1)(d-y)^(alpha-1).
    """
    alpha = _check_order(order)
    _check_field(f, "f")
    weights = quadrature_weights(f.grid, order)

    return alpha**2 * _weighted_sum(f.values, weights)


def line_integral_x(f: Field2D, order: FractionalOrder) -> float:
    """alpha * integral over [a,b] of [f(t,c) - f(t,d)](b-t)^(alpha-1)."""
    alpha = _check_order(order)
    _check_field(f, "f")
    grid = f.grid
    wx = singular_weights(grid.nx, grid.b - grid.a, order)

    return alpha * float(wx @ (f.values[:, 0] - f.values[:, -1]))


def line_integral_y(f: Field2D, order: FractionalOrder) -> float:
    """alpha * integral over [c,d] of [f(b,t) - f(a,t)](d-t)^(alpha-1)."""
    alpha = _check_order(order)
    _check_field(f, "f")
    grid = f.grid
    wy = singular_weights(grid.ny, grid.d - grid.c, order)

    return alpha * float(wy @ (f.values[-1, :] - f.values[0, :]))


def line_integral(f: Field2D, order: FractionalOrder) -> float:
    """Fractional line integral over the boundary of the rectangle.

    Parameters
    ----------
    f : Field2D
        The integrand.
    order : FractionalOrder
        Order alpha.

    Returns
    -------
    float
        line_integral_x(f) + line_integral_y(f).
    """
    return line_integral_x(f, order) + line_integral_y(f, order)


@dataclass(frozen=True)
class GreenReport:
    """Members of Green's fractional formula lhs = rhs_volume + rhs_boundary."""

    lhs: float
    rhs_volume: float
    rhs_boundary: float

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs_volume - self.rhs_boundary

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs_volume": self.rhs_volume,
            "rhs_boundary": self.rhs_boundary,
            "residual": self.residual,
        }


def green_residual(
    h: Field2D, k: Field2D, eta: Field2D, order: FractionalOrder
) -> GreenReport:
    """Evaluate the members of Green's fractional formula.

    lhs = weighted sum of h * D_x eta - k * D_y eta,
    rhs_volume = -(weighted sum of (D_x h - D_y k) * eta),
    rhs_boundary = Gamma(1+alpha) * (line_integral_x(h*eta) +
    line_integral_y(k*eta)), where the weighted sums use the
    QuadratureWeights of the grid and D_x, D_y are partial_frac.

    Parameters
    ----------
    h, k, eta : Field2D
        Fields on one grid.
    order : FractionalOrder
        Order alpha.

    Returns
    -------
    GreenReport
        The three members; 'residual' is the signed defect.

    Raises
    ------
    ValueError
        Raised if the fields live on different grids.
    """
    alpha = _check_order(order)
    for name, item in (("h", h), ("k", k), ("eta", eta)):
        _check_field(item, name)
    if not (h.grid == k.grid == eta.grid):
        raise ValueError("Fields live on different grids.")
    weights = quadrature_weights(h.grid, order)

    dx_eta = partial_frac(eta, Axis.X, order).values
    dy_eta = partial_frac(eta, Axis.Y, order).values
    dx_h = partial_frac(h, Axis.X, order).values
    dy_k = partial_frac(k, Axis.Y, order).values

    lhs = _weighted_sum(h.values * dx_eta - k.values * dy_eta, weights)
    rhs_volume = -_weighted_sum((dx_h - dy_k) * eta.values, weights)
    rhs_boundary = gamma(1.0 + alpha) * (
        line_integral_x(h * eta, order) + line_integral_y(k * eta, order)
    )

    return GreenReport(lhs, rhs_volume, float(rhs_boundary))


def power_rule_oracle(
    beta: float, order: FractionalOrder, a: float, x: float
) -> float:
    """Exact Jumarie derivative of (t-a)^beta at x.

    Parameters
    ----------
    beta : float
        Exponent, beta > 0.
    order : FractionalOrder
        Order alpha.
    a : float
        Lower limit.
    x : float
        Evaluation point, x >= a.

    Returns
    -------
    float
        Gamma(beta+1)/Gamma(beta-alpha+1) * (x-a)^(beta-alpha); 0 at
        x = a when beta > alpha.

    Raises
    ------
    ValueError
        Raised if beta <= 0, if x < a, or if x = a and beta <= alpha
        (the limit is not a finite zero there).
    """
    alpha = _check_order(order)
    if not beta > 0:
        raise ValueError(f"'beta' should be positive, got {beta}.")
    if x < a:
        raise ValueError(f"'x' should not lie below a={a}, got {x}.")
    if x == a:
        if beta <= alpha:
            raise ValueError(
                "The derivative of (t-a)^beta has no finite zero limit at "
                f"t = a for beta={beta} <= alpha={alpha}."
            )
        return 0.0

    return float(
        gamma(beta + 1.0) / gamma(beta - alpha + 1.0) * (x - a) ** (beta - alpha)
    )


def jumarie_quadrature(
    fn: Callable[[float], float],
    order: FractionalOrder,
    a: float,
    x: float,
    step: Optional[float] = None,
) -> float:
    """Brute-force Jumarie derivative of a point function at x.

    Evaluates F(s) = integral over [a,s] of (s-t)^(-alpha)(fn(t)-fn(a))
    by adaptive quadrature with the algebraic weight and returns
    (F(x+step) - F(x-step)) / (2 step) / Gamma(1-alpha).

    Parameters
    ----------
    fn : Callable[[float], float]
        Scalar function of one variable, defined on [a, x+step].
    order : FractionalOrder
        Order alpha.
    a : float
        Lower limit.
    x : float
        Evaluation point, x > a.
    step : float, optional
        Step of the outer central difference. The default is
        1e-3 * (x - a).

    Returns
    -------
    float
        Approximation of the derivative at x.
    """
    alpha = _check_order(order)
    if not x > a:
        raise ValueError(f"'x' should lie above a={a}, got {x}.")
    if step is None:
        step = 1e-3 * (x - a)
    if not 0 < step < x - a:
        raise ValueError(f"'step' should lie in (0, x-a), got {step}.")
    f_a = fn(a)

    def history(s: float) -> float:
        value, _ = quad(
            lambda t: fn(t) - f_a,
            a,
            s,
            weight="alg",
            wvar=(0.0, -alpha),
            epsabs=1e-14,
            epsrel=1e-13,
            limit=200,
        )
        return value

    difference = (history(x + step) - history(x - step)) / (2.0 * step)

    return float(difference / gamma(1.0 - alpha))


@dataclass(frozen=True)
class RefinementStudy:
    """Values of a quantity on a ladder of grid sizes."""

    sizes: tuple
    values: tuple
    errors: tuple
    order: float


def refinement_study(
    make_value: Callable[[int], float],
    sizes: Sequence[int],
    exact: Optional[float] = None,
    verbose: bool = False,
) -> RefinementStudy:
    """Evaluate a quantity on several grids and fit its order.

    Parameters
    ----------
    make_value : Callable[[int], float]
        Quantity computed on a grid with the given node count.
    sizes : Sequence[int]
        Increasing node counts, the step of each grid is 1/(n-1).
    exact : float, optional
        Limit value. If given, the errors are |value - exact| on every
        grid; otherwise the differences of consecutive values are used,
        attributed to the coarser grid. The default is None.
    verbose : bool, optional
        Show a progress bar over the grid sizes. The default is False.

    Returns
    -------
    RefinementStudy
        Sizes, values, errors and the fitted empirical order.

    Raises
    ------
    ValueError
        Raised if the sizes are not increasing or there are too few of
        them to fit an order.
    """
    sizes = [int(n) for n in sizes]
    minimum = 2 if exact is not None else 3
    if len(sizes) < minimum:
        raise ValueError(f"At least {minimum} grid sizes are needed.")
    if any(n1 <= n0 for n0, n1 in zip(sizes, sizes[1:])):
        raise ValueError("'sizes' should be strictly increasing.")

    values = [
        float(make_value(n))
        for n in tqdm(sizes, desc="Refinement", disable=not verbose)
    ]

    steps = np.array([1.0 / (n - 1) for n in sizes])
    if exact is not None:
        errors = np.abs(np.asarray(values) - exact)
    else:
        errors = np.abs(np.diff(values))
        steps = steps[:-1]

    return RefinementStudy(
        sizes=tuple(sizes),
        values=tuple(values),
        errors=tuple(float(e) for e in errors),
        order=convergence_order(steps, errors),
    )
