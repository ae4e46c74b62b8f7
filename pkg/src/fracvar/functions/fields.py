"""Module with grids and sampled fields.

Uniform tensor grids on the rectangle R = [a,b]x[c,d], real-valued
fields sampled at the grid nodes, field arithmetic, the
||.||_{1,inf} norm used to define local minimizers, and reading/writing
fields as '.csv', '.json' or '.feather' files.

Fields are immutable: every operation returns a new field, and the
underlying arrays are flagged read-only.

This file can also be imported as a module and contains the following
functions:

    * make_grid - build a uniform tensor grid on [a,b]x[c,d].

    * sample - sample a point function (x, y) -> value at the nodes
    of a grid.

    * sample_1d - sample a function of one variable at the nodes of a
    uniform grid on [a,b].

    * norm_1_inf - grid version of max|u| + max|D_x u| + max|D_y u|.

    * check_field_path - check that a field can be written to a path
    before anything is computed.

    * save_field - write a field to '.csv', '.json' or '.feather',
    chosen by the file suffix.

    * load_field - read a field written by save_field.

"""

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd
from pyarrow import feather as ft

FLOAT_FORMAT = "%.17g"
FIELD_SUFFIXES = (".csv", ".json", ".feather")


@dataclass(frozen=True)
class FractionalOrder:
    """Order alpha of all fractional operators, 0 < alpha < 1.

    Parameters
    ----------
    alpha : float
        The fractional order.
    """

    alpha: float

    def __post_init__(self):
        if isinstance(self.alpha, bool) or not isinstance(
            self.alpha, (int, float, np.floating)
        ):
            raise TypeError("'alpha' should be a real number.")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ValueError(
                f"'alpha' should lie in (0, 1), got {self.alpha}."
            )
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor grid on the rectangle [a,b]x[c,d].

    Node (i, j) sits at (a + i*hx, c + j*hy) with hx = (b-a)/(nx-1) and
    hy = (d-c)/(ny-1), 0 <= i < nx, 0 <= j < ny.

    Parameters
    ----------
    a, b : float
        Bounds of the x-axis, a < b.
    c, d : float
        Bounds of the y-axis, c < d.
    nx, ny : int
        Node counts per axis, at least 2 each.
    """

    a: float
    b: float
    c: float
    d: float
    nx: int
    ny: int

    def __post_init__(self):
        for name in ("nx", "ny"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(
                value, (int, np.integer)
            ):
                raise TypeError(f"'{name}' should be an integer.")
            object.__setattr__(self, name, int(value))
        for name in ("a", "b", "c", "d"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"'{name}' should be finite.")
            object.__setattr__(self, name, value)
        if not self.a < self.b:
            raise ValueError(f"Expected a < b, got a={self.a}, b={self.b}.")
        if not self.c < self.d:
            raise ValueError(f"Expected c < d, got c={self.c}, d={self.d}.")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(
                f"Node counts should be at least 2, got nx={self.nx}, "
                f"ny={self.ny}."
            )

    @property
    def hx(self) -> float:
        return (self.b - self.a) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.d - self.c) / (self.ny - 1)

    @property
    def shape(self) -> tuple:
        return (self.nx, self.ny)

    @property
    def x(self) -> np.ndarray:
        """Node coordinates along x."""
        return self.a + np.arange(self.nx) * self.hx

    @property
    def y(self) -> np.ndarray:
        """Node coordinates along y."""
        return self.c + np.arange(self.ny) * self.hy

    def node(self, i: int, j: int) -> tuple:
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise IndexError(f"Node ({i}, {j}) is outside the grid.")
        return (self.a + i * self.hx, self.c + j * self.hy)

    def mesh(self) -> tuple:
        """Node coordinate arrays X, Y of shape (nx, ny)."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = True
        mask[-1, :] = True
        mask[:, 0] = True
        mask[:, -1] = True
        return mask

    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask()

    @property
    def boundary_size(self) -> int:
        return 2 * self.nx + 2 * self.ny - 4

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "d": self.d,
            "nx": self.nx,
            "ny": self.ny,
        }


def _frozen_array(values, shape: tuple, name: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.shape != shape:
        raise ValueError(
            f"'{name}' should have shape {shape}, got {array.shape}."
        )
    if not np.all(np.isfinite(array)):
        raise ValueError(f"'{name}' holds non-finite entries.")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Field2D:
    """Real-valued samples of a function at the nodes of a Grid2D.

    Parameters
    ----------
    grid : Grid2D
        The grid the samples live on.
    values : array-like
        Samples of shape (nx, ny), values[i, j] at node (i, j).
    """

    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not isinstance(self.grid, Grid2D):
            raise TypeError("'grid' should be a Grid2D.")
        object.__setattr__(
            self, "values", _frozen_array(self.values, self.grid.shape, "values")
        )

    def _check_grid(self, other: "Field2D") -> None:
        if self.grid != other.grid:
            raise ValueError("Fields live on different grids.")

    def _combine(self, other, op) -> "Field2D":
        if isinstance(other, Field2D):
            self._check_grid(other)
            return Field2D(self.grid, op(self.values, other.values))
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Field2D(self.grid, op(self.values, float(other)))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda p, q: np.subtract(q, p))

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return Field2D(self.grid, -self.values)

    def __eq__(self, other):
        if not isinstance(other, Field2D):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(
            self.values, other.values
        )

    __hash__ = None

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def trace(self) -> np.ndarray:
        """Values at the boundary nodes, in row-major node order."""
        return self.values[self.grid.boundary_mask()].copy()

    def with_trace(self, psi: np.ndarray) -> "Field2D":
        """Copy of the field with its boundary values replaced by psi."""
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (self.grid.boundary_size,):
            raise ValueError(
                f"'psi' should hold {self.grid.boundary_size} boundary "
                f"values, got {psi.size}."
            )
        values = self.values.copy()
        values[self.grid.boundary_mask()] = psi
        return Field2D(self.grid, values)

    def to_frame(self) -> pd.DataFrame:
        """Table with columns x, y, value, rows in y-fastest order."""
        X, Y = self.grid.mesh()
        return pd.DataFrame(
            {
                "x": X.ravel(),
                "y": Y.ravel(),
                "value": self.values.ravel(),
            }
        )

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "values": [float(v) for v in self.values.ravel()],
        }


@dataclass(frozen=True, eq=False)
class Field1D:
    """Samples of a function of one variable on a uniform grid of [a,b].

    Parameters
    ----------
    a, b : float
        Interval bounds, a < b.
    n : int
        Node count, at least 2.
    values : array-like
        Samples at the nodes a + k*h, h = (b-a)/(n-1).
    """

    a: float
    b: float
    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(
            self.n, (int, np.integer)
        ):
            raise TypeError("'n' should be an integer.")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not self.a < self.b:
            raise ValueError(f"Expected a < b, got a={self.a}, b={self.b}.")
        if self.n < 2:
            raise ValueError(f"'n' should be at least 2, got {self.n}.")
        object.__setattr__(
            self, "values", _frozen_array(self.values, (self.n,), "values")
        )

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return self.a + np.arange(self.n) * self.h

    def __eq__(self, other):
        if not isinstance(other, Field1D):
            return NotImplemented
        return (self.a, self.b, self.n) == (
            other.a,
            other.b,
            other.n,
        ) and np.array_equal(self.values, other.values)

    __hash__ = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.x, "value": self.values})


def make_grid(
    a: float, b: float, c: float, d: float, nx: int, ny: int
) -> Grid2D:
    """Build the uniform tensor grid on [a,b]x[c,d].

    Parameters
    ----------
    a, b, c, d : float
        Rectangle bounds, a < b and c < d.
    nx, ny : int
        Node counts per axis, at least 2.

    Returns
    -------
    Grid2D
        The grid.

    Raises
    ------
    TypeError
        Raised if the node counts are not integers.
    ValueError
        Raised if the bounds are not ordered or the node counts are
        below 2.
    """
    return Grid2D(a, b, c, d, nx, ny)


def _checked_samples(values, shape: tuple, where: str) -> np.ndarray:
    values = np.broadcast_to(np.asarray(values, dtype=float), shape)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise ValueError(
            f"Function returned a non-finite value at {where} node "
            f"{tuple(int(k) for k in bad)}."
        )
    return values


def sample(fn: Callable, grid: Grid2D) -> Field2D:
    """Sample a point function at the nodes of a grid.

    Parameters
    ----------
    fn : Callable
        Function (x, y) -> value. It is called once with the node
        coordinate arrays of shape (nx, ny); scalar results are
        broadcast to all nodes.
    grid : Grid2D
        The grid.

    Returns
    -------
    Field2D
        Field with values[i, j] = fn(node(i, j)).

    Raises
    ------
    ValueError
        Raised if fn returns a non-finite value at any node.
    """
    if not isinstance(grid, Grid2D):
        raise TypeError("'grid' should be a Grid2D.")
    X, Y = grid.mesh()
    with np.errstate(all="ignore"):
        values = fn(X, Y)

    return Field2D(grid, _checked_samples(values, grid.shape, "grid"))


def sample_1d(fn: Callable, a: float, b: float, n: int) -> Field1D:
    """Sample a function of one variable on a uniform grid of [a,b].

    Parameters
    ----------
    fn : Callable
        Function x -> value, called once with the node array.
    a, b : float
        Interval bounds.
    n : int
        Node count.

    Returns
    -------
    Field1D
        The sampled field.
    """
    template = Field1D(a, b, n, np.zeros(n))
    with np.errstate(all="ignore"):
        values = fn(template.x)

    return Field1D(a, b, n, _checked_samples(values, (n,), "1D"))


def norm_1_inf(u: Field2D, dux: Field2D, duy: Field2D) -> float:
    """Grid version of the ||u||_{1,inf} norm.

    Parameters
    ----------
    u : Field2D
        The field.
    dux, duy : Field2D
        Its fractional partial derivatives along x and y.

    Returns
    -------
    float
        max|u| + max|dux| + max|duy| over all nodes.

    Raises
    ------
    ValueError
        Raised if the fields live on different grids.
    """
    for name, item in (("u", u), ("dux", dux), ("duy", duy)):
        if not isinstance(item, Field2D):
            raise TypeError(f"'{name}' should be a Field2D.")
    if not (u.grid == dux.grid == duy.grid):
        raise ValueError("Fields live on different grids.")

    return u.max_abs() + dux.max_abs() + duy.max_abs()


def _axis_end(nodes: np.ndarray) -> float:
    """Upper bound of the uniform axis whose node coordinates are 'nodes'.

    The last node a + (n-1)*h can sit a few ulps away from the bound it
    was built from; the shortest bound that rebuilds 'nodes' bit for bit
    is returned, or the last node if no nearby bound does.
    """
    start, last, n = float(nodes[0]), float(nodes[-1]), nodes.size
    if n < 2:
        return last
    candidates = [float(f"{last:.15g}"), last]
    below = above = last
    for _ in range(16):
        below = float(np.nextafter(below, -np.inf))
        above = float(np.nextafter(above, np.inf))
        candidates += [below, above]
    for end in candidates:
        if end > start and np.array_equal(
            start + np.arange(n) * ((end - start) / (n - 1)), nodes
        ):
            return end
    return last


def _matches(nodes: np.ndarray, expected: np.ndarray, step: float) -> bool:
    return nodes.shape == expected.shape and np.allclose(
        nodes, expected, rtol=0.0, atol=1e-9 * step
    )


def _resolve_grid(
    xs: np.ndarray, ys: np.ndarray, grid: Optional[Grid2D], path: str
) -> Grid2D:
    if grid is None:
        return Grid2D(
            xs[0], _axis_end(xs), ys[0], _axis_end(ys), xs.size, ys.size
        )
    if not (_matches(xs, grid.x, grid.hx) and _matches(ys, grid.y, grid.hy)):
        raise ValueError(f"Field in '{path}' does not match the grid.")
    return grid


def _field_from_frame(
    frame: pd.DataFrame, grid: Optional[Grid2D], path: str
) -> Field2D:
    missing = {"x", "y", "value"} - set(frame.columns)
    if missing:
        raise ValueError(f"Field table lacks columns {sorted(missing)}.")
    xs = np.unique(frame["x"].to_numpy(dtype=float))
    ys = np.unique(frame["y"].to_numpy(dtype=float))
    if xs.size * ys.size != len(frame):
        raise ValueError("Field table is not a full tensor grid.")
    grid = _resolve_grid(xs, ys, grid, path)
    ordered = frame.sort_values(["x", "y"], kind="mergesort")
    values = ordered["value"].to_numpy(dtype=float).reshape(grid.shape)

    return Field2D(grid, values)


def check_field_path(path: str, one_dimensional: bool = False) -> str:
    """Check that save_field can write a field to 'path'.

    Parameters
    ----------
    path : str
        Output path.
    one_dimensional : bool, optional
        Check for a Field1D, which only '.csv' files hold. The default
        is False.

    Returns
    -------
    str
        The lower-case suffix.

    Raises
    ------
    ValueError
        Raised if the suffix is not recognized, or is not '.csv' for a
        Field1D.
    """
    suffix = os.path.splitext(path)[1].lower()
    allowed = (".csv",) if one_dimensional else FIELD_SUFFIXES
    if suffix not in allowed:
        kind = "Field1D" if one_dimensional else "Field2D"
        raise ValueError(
            f"Cannot write {kind} to '{suffix}' files; use "
            f"{', '.join(repr(item) for item in allowed)}."
        )

    return suffix


def save_field(item: Union[Field2D, Field1D], path: str) -> None:
    """Write a field to disk, format chosen by the suffix.

    '.csv' writes the header 'x,y,value' ('x,value' for Field1D) with
    17-significant-digit floats, rows in y-fastest order; '.json' writes
    {"grid": {...}, "values": [...]}; '.feather' writes the same table
    as the '.csv' file through pyarrow.

    Parameters
    ----------
    item : Field2D | Field1D
        The field.
    path : str
        Output path.

    Raises
    ------
    ValueError
        Raised if the suffix is not recognized, or for '.json' and
        '.feather' with a Field1D.
    """
    suffix = check_field_path(path, isinstance(item, Field1D))
    if suffix == ".csv":
        item.to_frame().to_csv(
            path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )
    elif suffix == ".json":
        with open(path, "w") as file:
            json.dump(item.to_dict(), file)
            file.write("\n")
    else:
        ft.write_feather(item.to_frame(), path)


def load_field(
    path: str, grid: Optional[Grid2D] = None
) -> Union[Field2D, Field1D]:
    """Read a field written by save_field.

    Without 'grid' the grid is rebuilt from the stored coordinates.
    With it, the stored coordinates are checked against the nodes of
    'grid' and the field is returned on 'grid' itself.

    Parameters
    ----------
    path : str
        Path to a '.csv', '.json' or '.feather' file.
    grid : Grid2D, optional
        Expected grid of a Field2D. The default is None.

    Returns
    -------
    Field2D | Field1D
        Field1D for two-column '.csv' files, Field2D otherwise.

    Raises
    ------
    FileNotFoundError
        Raised if the file does not exist.
    ValueError
        Raised if the suffix is not recognized, the content is not a
        full tensor grid, or it does not match 'grid'.
    """
    if grid is not None and not isinstance(grid, Grid2D):
        raise TypeError("'grid' should be a Grid2D.")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"No field file found at '{path}'.")
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".csv":
        frame = pd.read_csv(path, float_precision="round_trip")
        if list(frame.columns) == ["x", "value"]:
            if grid is not None:
                raise ValueError(
                    f"'{path}' holds a Field1D, expected a field on a grid."
                )
            xs = frame["x"].to_numpy(dtype=float)
            return Field1D(
                xs[0], _axis_end(xs), len(xs), frame["value"].to_numpy(dtype=float)
            )
        return _field_from_frame(frame, grid, path)
    if suffix == ".json":
        with open(path) as file:
            content = json.load(file)
        stored = Grid2D(**content["grid"])
        values = np.asarray(content["values"], dtype=float)
        if values.size != stored.nx * stored.ny:
            raise ValueError("JSON field has the wrong number of values.")
        if grid is not None:
            stored = _resolve_grid(stored.x, stored.y, grid, path)
        return Field2D(stored, values.reshape(stored.shape))
    if suffix == ".feather":
        return _field_from_frame(ft.read_feather(path), grid, path)
    raise ValueError(
        f"Unknown field file type '{suffix}'; use '.csv', '.json' or "
        "'.feather'."
    )
