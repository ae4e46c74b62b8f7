"""Module of utility functions.

This module provides a set of functions used in other fracvar modules,
covering tasks such as reading the thread cap from the environment,
guarding output files against accidental overwriting, and fitting the
empirical order of convergence of a refinement study.

This file can also be imported as a module and contains the following
functions:

    * thread_count - number of worker threads allowed for the
    line-by-line evaluation of fractional partial derivatives, read
    from the 'FRACVAR_THREADS' environment variable.

    * file_rewrite_handling - based on the file name given and the
    boolean parameter 'rewrite', handles the file overwriting based on
    its existence. Introduced for clearer code and modularity.

    * convergence_order - fit a straight line to log(error) against
    log(step) and return its slope, the empirical order of convergence.

    * relative_error - elementwise relative error with an absolute
    floor for values close to zero.

"""

import os
from typing import Sequence

import numpy as np
from lmfit.models import LinearModel

THREADS_VARIABLE = "FRACVAR_THREADS"


def thread_count() -> int:
    """Return the cap on internal parallelism.

    Returns
    -------
    int
        Value of the 'FRACVAR_THREADS' environment variable, or 1 if
        the variable is not set.

    Raises
    ------
    ValueError
        Raised if the variable is set to anything other than a positive
        integer.
    """
    raw = os.environ.get(THREADS_VARIABLE)
    if raw is None or raw.strip() == "":
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(
            f"'{THREADS_VARIABLE}' should be a positive integer, got '{raw}'."
        )
    if threads < 1:
        raise ValueError(
            f"'{THREADS_VARIABLE}' should be a positive integer, got '{raw}'."
        )

    return threads


def file_rewrite_handling(file: str, rewrite: bool) -> None:
    """Handle file rewriting based on the 'rewrite' parameter.

    The function checks if the specified output file exists. If it
    exists and 'rewrite' is True, the file is deleted so that it can be
    written anew. If 'rewrite' is False and the file exists, an error is
    raised before any computation starts, so no output is produced.

    Parameters
    ----------
    file : str
        The file path to check for existence and potentially rewrite.
    rewrite : bool
        If True, an existing file is deleted. If False and the file
        already exists, an error is raised.

    Raises
    ------
    TypeError
        Raised if 'rewrite' is not boolean.
    FileExistsError
        Raised if 'rewrite' is False and the file already exists.

    Returns
    -------
    None
    """
    if not isinstance(rewrite, bool):
        raise TypeError("'rewrite' should be boolean")

    if os.path.isfile(file):
        if rewrite is True:
            os.remove(file)
        else:
            raise FileExistsError(
                f"File '{file}' already exists and 'rewrite' is set to "
                "'False'."
            )


def convergence_order(
    steps: Sequence[float], errors: Sequence[float]
) -> float:
    """Fit the empirical order of convergence.

    Fits log(error) = order * log(step) + intercept with a linear
    model. For three grids of halving step this is the least-squares
    version of the three-grid Richardson estimate.

    Parameters
    ----------
    steps : Sequence[float]
        Grid steps, at least two, all positive.
    errors : Sequence[float]
        Error measured on each grid, all positive.

    Returns
    -------
    float
        Fitted slope, i.e. the empirical order.

    Raises
    ------
    ValueError
        Raised if fewer than two points are given or if any step or
        error is not positive.
    """
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if steps.shape != errors.shape or steps.size < 2:
        raise ValueError(
            "'steps' and 'errors' should have the same length, at least 2."
        )
    if np.any(steps <= 0) or np.any(errors <= 0):
        raise ValueError("Steps and errors should be positive.")

    log_steps = np.log(steps)
    log_errors = np.log(errors)

    model = LinearModel()
    params = model.guess(log_errors, x=log_steps)
    result = model.fit(log_errors, params, x=log_steps)

    return float(result.params["slope"].value)


def relative_error(
    computed: np.ndarray, exact: np.ndarray, floor: float = 1e-300
) -> np.ndarray:
    """Elementwise relative error.

    Parameters
    ----------
    computed : np.ndarray
        Computed values.
    exact : np.ndarray
        Reference values.
    floor : float, optional
        Lower bound of the denominator. The default is 1e-300.

    Returns
    -------
    np.ndarray
        |computed - exact| / max(|exact|, floor).
    """
    computed = np.asarray(computed, dtype=float)
    exact = np.asarray(exact, dtype=float)

    return np.abs(computed - exact) / np.maximum(np.abs(exact), floor)
