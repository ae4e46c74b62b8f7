import json
import os
import shutil
import tempfile
import unittest

import numpy as np

from fracvar.functions.fields import Field2D, FractionalOrder, make_grid, sample
from fracvar.functions.fracops import volume_integral
from fracvar.functions.solver import (
    SolveOptions,
    SolveStatus,
    discrete_gradient,
    initial_guess,
    save_report,
    solve_fixed_boundary,
    solve_free_boundary,
    verify_sufficiency,
)
from fracvar.functions.variational import (
    Functional,
    IsoperimetricProblem,
    LagrangianSpec,
    MultiplierPair,
    catalog_lagrangian,
    catalog_problem,
    convexity_probe,
    gateaux_derivative,
    manufactured_reference,
    natural_bc_residuals,
    quadrature_field,
)


def _zero(x, y, u, v, w):
    return 0.0 * u


ENERGY = LagrangianSpec(
    value=lambda x, y, u, v, w: v**2 + w**2,
    d3=_zero,
    d4=lambda x, y, u, v, w: 2 * v,
    d5=lambda x, y, u, v, w: 2 * w,
)
SHIFTED_ENERGY = LagrangianSpec(
    value=lambda x, y, u, v, w: v**2 + w**2 + (u - 1) ** 2,
    d3=lambda x, y, u, v, w: 2 * (u - 1),
    d4=lambda x, y, u, v, w: 2 * v,
    d5=lambda x, y, u, v, w: 2 * w,
)
# G >= I(1) > 0 for every field, so G = 0 cannot be met
SHIFTED_SQUARE = LagrangianSpec(
    value=lambda x, y, u, v, w: u**2 + 1,
    d3=lambda x, y, u, v, w: 2 * u,
    d4=_zero,
    d5=_zero,
)


class TestDiscreteGradient(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.grid = make_grid(0, 1, 0, 1, 17, 17)
        self.order = FractionalOrder(0.5)
        self.rng = np.random.default_rng(31)

    def test_a_linear_constraint_positive(self):
        p = catalog_problem("linear-g", self.grid, self.order)
        u = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        gradient = discrete_gradient(p, Functional.G, u)
        np.testing.assert_array_equal(gradient.values, quadrature_field(p))

    def test_b_state_free_positive(self):
        f = LagrangianSpec(lambda x, y, u, v, w: x + y + 0 * u, _zero, _zero, _zero)
        p = IsoperimetricProblem(self.grid, self.order, f)
        u = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        self.assertEqual(discrete_gradient(p, Functional.J, u).max_abs(), 0.0)
        self.assertEqual(discrete_gradient(p, Functional.G, u).max_abs(), 0.0)

    def test_c_directional_positive(self):
        g = catalog_lagrangian("linear-g", self.grid, self.order)
        for name in ("dirichlet-quadratic", "dirichlet-energy", "manufactured"):
            f = catalog_lagrangian(name, self.grid, self.order)
            p = IsoperimetricProblem(self.grid, self.order, f, g)
            for _ in range(20):
                u = Field2D(self.grid, 0.1 * self.rng.normal(size=self.grid.shape))
                v = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
                for which in (Functional.J, Functional.G):
                    with self.subTest(name=name, which=which):
                        numeric = gateaux_derivative(p, which, u, v, eps=1e-6)
                        pairing = np.sum(
                            discrete_gradient(p, which, u).values * v.values
                        )
                        self.assertLessEqual(
                            abs(numeric - pairing), max(1e-6, 1e-4 * abs(numeric))
                        )


class TestInitialGuess(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.grid = make_grid(0, 1, 0, 1, 9, 9)
        self.order = FractionalOrder(0.5)

    def test_a_boundary_blend_positive(self):
        p = catalog_problem("manufactured", self.grid, self.order)
        guess = initial_guess(p, SolveOptions(init="boundary"))
        np.testing.assert_allclose(
            guess.values, manufactured_reference(self.grid).values, atol=1e-15
        )
        auto = initial_guess(p, SolveOptions())
        np.testing.assert_array_equal(auto.values, guess.values)

    def test_b_zero_positive(self):
        p = catalog_problem("dirichlet-quadratic", self.grid, self.order)
        guess = initial_guess(p, SolveOptions(init="zero"))
        np.testing.assert_array_equal(guess.trace(), p.psi)
        self.assertEqual(np.abs(guess.values[self.grid.interior_mask()]).max(), 0.0)

    def test_c_boundary_negative(self):
        p = catalog_problem("linear-g", self.grid, self.order, free_boundary=True)
        with self.assertRaises(ValueError):
            initial_guess(p, SolveOptions(init="boundary"))
        self.assertEqual(initial_guess(p, SolveOptions()).max_abs(), 0.0)


class TestSolveOptions(unittest.TestCase):
    def test_a_defaults_positive(self):
        opts = SolveOptions()
        self.assertEqual(opts.max_outer_iters, 50)
        self.assertEqual(opts.max_inner_iters, 500)
        self.assertEqual(opts.grad_tol, 1e-8)
        self.assertEqual(opts.constraint_tol, 1e-8)
        self.assertEqual(opts.nat_bc_tol, 1e-4)
        self.assertEqual(opts.penalty_init, 10.0)
        self.assertEqual(opts.penalty_growth, 10.0)

    def test_b_options_negative(self):
        with self.assertRaises(ValueError):
            SolveOptions(init="random")
        with self.assertRaises(ValueError):
            SolveOptions(max_outer_iters=0)
        with self.assertRaises(TypeError):
            SolveOptions(max_inner_iters=1.5)
        with self.assertRaises(ValueError):
            SolveOptions(penalty_growth=1.0)
        with self.assertRaises(ValueError):
            SolveOptions(grad_tol=0.0)
        with self.assertRaises(ValueError):
            SolveOptions(penalty_init=100.0, penalty_max=10.0)
        with self.assertRaises(TypeError):
            SolveOptions(verbose="yes")


class TestSolveFixedBoundary(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.order = FractionalOrder(0.5)
        self.grid = make_grid(0, 1, 0, 1, 9, 9)

    def test_a_manufactured_positive(self):
        # The boundary blend of x*y is x*y itself, so start from zero
        grid = make_grid(0, 1, 0, 1, 33, 33)
        p = catalog_problem("manufactured", grid, self.order)
        report = solve_fixed_boundary(
            p, SolveOptions(init="zero", record_trace=True)
        )
        inner = report.trace[0]
        self.assertGreaterEqual(len(inner), 2)
        self.assertLess(inner[-1], inner[0])
        self.assertIs(report.status, SolveStatus.CONVERGED)
        self.assertLessEqual(report.objective, 1e-6)
        self.assertLessEqual(report.constraint_violation, 1e-8)
        self.assertLessEqual(report.el_residual_max, 1e-3)
        self.assertIsNone(report.nat_bc_residual_max)
        error = (report.u - manufactured_reference(grid)).max_abs()
        self.assertLessEqual(error, 1e-2)

    def test_b_manufactured_zero_init_positive(self):
        p = catalog_problem("manufactured", self.grid, self.order)
        report = solve_fixed_boundary(p, SolveOptions(init="zero"))
        self.assertIs(report.status, SolveStatus.CONVERGED)
        self.assertLessEqual(report.constraint_violation, 1e-8)
        self.assertLessEqual(report.stationarity, 1e-8)
        error = (report.u - manufactured_reference(self.grid)).max_abs()
        self.assertLessEqual(error, 1e-3)
        np.testing.assert_array_equal(report.u.trace(), p.psi)

    def test_c_unconstrained_positive(self):
        f = catalog_lagrangian("manufactured", self.grid, self.order)
        reference = manufactured_reference(self.grid)
        p = IsoperimetricProblem(self.grid, self.order, f, psi=reference.trace())
        report = solve_fixed_boundary(p)
        self.assertIs(report.status, SolveStatus.CONVERGED)
        self.assertEqual(report.multipliers, MultiplierPair(1.0, 0.0))
        self.assertEqual(report.constraint_violation, 0.0)

    def test_d_infeasible_negative(self):
        p = IsoperimetricProblem(
            self.grid,
            self.order,
            ENERGY,
            SHIFTED_SQUARE,
            0.0,
            np.ones(self.grid.boundary_size),
        )
        report = solve_fixed_boundary(p, SolveOptions(max_outer_iters=3))
        self.assertIs(report.status, SolveStatus.INFEASIBLE)
        self.assertGreaterEqual(report.constraint_violation, 1.0 - 1e-9)

    def test_e_penalty_cap_warning(self):
        p = IsoperimetricProblem(
            self.grid,
            self.order,
            ENERGY,
            SHIFTED_SQUARE,
            0.0,
            np.ones(self.grid.boundary_size),
        )
        opts = SolveOptions(max_outer_iters=3, penalty_init=10.0, penalty_max=10.0)
        with self.assertWarns(RuntimeWarning):
            solve_fixed_boundary(p, opts)

    def test_f_abnormal_positive(self):
        g = LagrangianSpec(
            lambda x, y, u, v, w: u**2,
            lambda x, y, u, v, w: 2 * u,
            _zero,
            _zero,
        )
        p = IsoperimetricProblem(
            self.grid, self.order, ENERGY, g, 0.0, np.zeros(self.grid.boundary_size)
        )
        report = solve_fixed_boundary(p)
        self.assertIs(report.status, SolveStatus.ABNORMAL)
        self.assertEqual(report.multipliers, MultiplierPair(0.0, 1.0))
        self.assertEqual(report.u.max_abs(), 0.0)

    def test_g_non_finite_negative(self):
        f = LagrangianSpec(
            lambda x, y, u, v, w: 1.0 / u,
            lambda x, y, u, v, w: -1.0 / u**2,
            _zero,
            _zero,
        )
        p = IsoperimetricProblem(
            self.grid, self.order, f, psi=np.zeros(self.grid.boundary_size)
        )
        with self.assertRaises(FloatingPointError):
            solve_fixed_boundary(p)

    def test_h_free_problem_negative(self):
        p = catalog_problem("linear-g", self.grid, self.order, free_boundary=True)
        with self.assertRaises(ValueError):
            solve_fixed_boundary(p)

    def test_i_deterministic(self):
        p = catalog_problem("dirichlet-quadratic", self.grid, self.order)
        first = solve_fixed_boundary(p, SolveOptions(init="zero"))
        second = solve_fixed_boundary(p, SolveOptions(init="zero"))
        self.assertEqual(first.u, second.u)
        self.assertEqual(first.multipliers, second.multipliers)
        self.assertEqual(first.iterations, second.iterations)


class TestSolveFreeBoundary(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.order = FractionalOrder(0.5)
        self.grid = make_grid(0, 1, 0, 1, 9, 9)
        self.fine = make_grid(0, 1, 0, 1, 33, 33)

    def assert_edges(self, p, report, bound):
        edges = natural_bc_residuals(p, report.u, report.multipliers)
        for name in ("at_x_a", "at_x_b", "at_y_c", "at_y_d"):
            with self.subTest(edge=name):
                edge = getattr(edges, name)
                self.assertLessEqual(float(np.max(np.abs(edge))), bound)
        self.assertLessEqual(report.nat_bc_residual_max, bound)

    def test_a_quadratic_positive(self):
        # The minimizer is u = 1 with lambda = -2
        p = catalog_problem(
            "dirichlet-quadratic", self.fine, self.order, free_boundary=True
        )
        report = solve_free_boundary(p)
        self.assertIs(report.status, SolveStatus.CONVERGED)
        np.testing.assert_allclose(report.u.values, 1.0, atol=1e-4)
        self.assertAlmostEqual(report.multipliers.lam, -2.0, delta=1e-3)
        self.assertEqual(report.multipliers.lambda0, 1.0)
        self.assertLessEqual(report.el_residual_max, 1e-4)
        self.assert_edges(p, report, 1e-4)

    def test_b_unconstrained_positive(self):
        p = IsoperimetricProblem(self.fine, self.order, SHIFTED_ENERGY)
        report = solve_free_boundary(p)
        self.assertIs(report.status, SolveStatus.CONVERGED)
        self.assertEqual(report.multipliers.lam, 0.0)
        np.testing.assert_allclose(report.u.values, 1.0, atol=1e-4)
        self.assertLessEqual(report.el_residual_max, 1e-4)
        self.assert_edges(p, report, 1e-4)

    def test_c_inactive_constraint_positive(self):
        # u = 1 already meets G = I(1), so the multiplier vanishes
        unit = volume_integral(sample(lambda x, y: 1.0, self.fine), self.order)
        g = catalog_lagrangian("linear-g", self.fine, self.order)
        p = IsoperimetricProblem(self.fine, self.order, SHIFTED_ENERGY, g, unit)
        report = solve_free_boundary(p)
        self.assertIs(report.status, SolveStatus.CONVERGED)
        self.assertLessEqual(abs(report.multipliers.lam), 1e-5)
        np.testing.assert_allclose(report.u.values, 1.0, atol=1e-4)
        self.assertLessEqual(report.constraint_violation, 1e-8)
        self.assert_edges(p, report, 1e-4)

    def test_d_trace_monotone(self):
        p = catalog_problem(
            "dirichlet-quadratic", self.grid, self.order, free_boundary=True
        )
        report = solve_free_boundary(p, SolveOptions(record_trace=True))
        self.assertEqual(len(report.trace), report.iterations)
        for values in report.trace:
            steps = np.diff(values)
            self.assertTrue(np.all(steps <= 1e-12 * np.abs(values[:-1]) + 1e-15))
        self.assertEqual(solve_free_boundary(p).trace, ())

    def test_e_fixed_problem_negative(self):
        p = catalog_problem("linear-g", self.grid, self.order)
        with self.assertRaises(ValueError):
            solve_free_boundary(p)

    def test_f_edge_tolerance_negative(self):
        p = catalog_problem(
            "dirichlet-quadratic", self.grid, self.order, free_boundary=True
        )
        reference = solve_free_boundary(p)
        self.assertIs(reference.status, SolveStatus.CONVERGED)
        self.assertGreater(reference.nat_bc_residual_max, 0.0)

        opts = SolveOptions(
            nat_bc_tol=1e-300, max_outer_iters=reference.iterations + 1
        )
        report = solve_free_boundary(p, opts)
        self.assertIs(report.status, SolveStatus.MAX_ITERS)
        self.assertEqual(report.iterations, reference.iterations + 1)
        with self.assertRaises(ValueError):
            SolveOptions(nat_bc_tol=0.0)


class TestSufficiency(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.grid = make_grid(0, 1, 0, 1, 9, 9)
        self.order = FractionalOrder(0.5)

    def test_a_manufactured_minimum(self):
        p = catalog_problem("manufactured", self.grid, self.order)
        report = solve_fixed_boundary(p)
        self.assertGreaterEqual(verify_sufficiency(p, report.u), -1e-6)
        verdict = convexity_probe(p, report.multipliers, 100, 0)
        self.assertTrue(verdict.convex)

    def test_b_draws_negative(self):
        p = catalog_problem("manufactured", self.grid, self.order)
        with self.assertRaises(ValueError):
            verify_sufficiency(p, manufactured_reference(self.grid), draws=0)

    def test_c_flat_constraint_negative(self):
        # G does not depend on u, so no perturbation can be moved back
        g = LagrangianSpec(lambda x, y, u, v, w: x + 0 * u, _zero, _zero, _zero)
        p = IsoperimetricProblem(
            self.grid, self.order, ENERGY, g, 0.25, np.zeros(self.grid.boundary_size)
        )
        u = Field2D(self.grid, np.zeros(self.grid.shape))
        with self.assertRaisesRegex(ValueError, "G = K"):
            verify_sufficiency(p, u, draws=3)


class TestSaveReport(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.directory = tempfile.mkdtemp()
        grid = make_grid(0, 1, 0, 1, 9, 9)
        p = catalog_problem("manufactured", grid, FractionalOrder(0.5))
        self.report = solve_fixed_boundary(p)

    def test_a_json_positive(self):
        path = os.path.join(self.directory, "report.json")
        save_report(self.report, path, "u.csv")
        with open(path) as file:
            text = file.read()
        data = json.loads(text)
        self.assertEqual(list(data), sorted(data))
        self.assertEqual(data["status"], "Converged")
        self.assertEqual(data["field"], "u.csv")
        self.assertIsNone(data["nat_bc_residual_max"])
        self.assertEqual(data["lambda0"], 1.0)

    def tearDown(self):
        shutil.rmtree(self.directory)


if __name__ == "__main__":
    unittest.main()
