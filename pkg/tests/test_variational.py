import unittest

import numpy as np

from fracvar.functions.fields import Field2D, FractionalOrder, make_grid, sample
from fracvar.functions.fracops import volume_integral
from fracvar.functions.variational import (
    Convexity,
    Functional,
    IsoperimetricProblem,
    LagrangianSpec,
    MultiplierPair,
    audit_partials,
    catalog_lagrangian,
    catalog_problem,
    convexity_probe,
    el_residual,
    eval_constraint,
    eval_dH4,
    eval_H,
    eval_J,
    gateaux_derivative,
    manufactured_reference,
    natural_bc_residuals,
)


def spec(value, d3=None, d4=None, d5=None):
    zero = lambda x, y, u, v, w: 0.0 * u  # noqa: E731
    return LagrangianSpec(value, d3 or zero, d4 or zero, d5 or zero)


ONE = spec(lambda x, y, u, v, w: 0.0 * u + 1.0)
U = spec(lambda x, y, u, v, w: u, d3=lambda x, y, u, v, w: 0.0 * u + 1.0)
ENERGY = spec(
    lambda x, y, u, v, w: v**2 + w**2,
    d4=lambda x, y, u, v, w: 2 * v,
    d5=lambda x, y, u, v, w: 2 * w,
)


class TestProblemTypes(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.grid = make_grid(0, 1, 0, 1, 5, 5)
        self.order = FractionalOrder(0.5)

    def test_a_multipliers_negative(self):
        with self.assertRaises(ValueError):
            MultiplierPair(0, 0)
        self.assertEqual(MultiplierPair(0, 2).lam, 2.0)

    def test_b_problem_negative(self):
        with self.assertRaises(ValueError):
            IsoperimetricProblem(self.grid, self.order, ENERGY, U, 1.0, np.zeros(15))
        with self.assertRaises(ValueError):
            IsoperimetricProblem(self.grid, self.order, ENERGY, U, np.inf)
        with self.assertRaises(TypeError):
            IsoperimetricProblem(self.grid, 0.5, ENERGY, U)
        with self.assertRaises(TypeError):
            LagrangianSpec(1.0, None, None, None)

    def test_c_problem_positive(self):
        p = IsoperimetricProblem(self.grid, self.order, ENERGY, U, 1.0, np.zeros(16))
        self.assertTrue(p.constrained)
        self.assertFalse(p.free_boundary)
        self.assertFalse(p.psi.flags.writeable)


class TestFunctionals(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.grid = make_grid(0, 1, 0, 1, 17, 17)
        self.wide = make_grid(0, 2, 0, 1, 17, 9)
        self.order = FractionalOrder(0.5)
        self.zero = sample(lambda x, y: 0.0, self.grid)
        self.one = sample(lambda x, y: 1.0, self.grid)

    def test_a_eval_J_positive(self):
        p = IsoperimetricProblem(self.grid, self.order, ONE)
        self.assertAlmostEqual(eval_J(p, self.zero), 1.0, places=12)
        p = IsoperimetricProblem(self.grid, self.order, U)
        self.assertEqual(eval_J(p, self.zero), 0.0)

    def test_b_manufactured_zero(self):
        p = catalog_problem("manufactured", self.grid, self.order)
        self.assertLessEqual(eval_J(p, manufactured_reference(self.grid)), 1e-20)

    def test_c_eval_constraint_positive(self):
        p = IsoperimetricProblem(self.grid, self.order, ENERGY, U)
        self.assertAlmostEqual(eval_constraint(p, self.one), 1.0, places=12)
        self.assertEqual(eval_constraint(p, self.zero), 0.0)
        p = IsoperimetricProblem(self.wide, self.order, ENERGY, ONE)
        u = sample(lambda x, y: x, self.wide)
        self.assertAlmostEqual(eval_constraint(p, u), np.sqrt(2), places=12)
        p = IsoperimetricProblem(self.grid, self.order, ENERGY)
        self.assertEqual(eval_constraint(p, self.one), 0.0)

    def test_d_non_finite_negative(self):
        bad = spec(lambda x, y, u, v, w: 1.0 / u)
        p = IsoperimetricProblem(self.grid, self.order, bad)
        with self.assertRaises(FloatingPointError):
            eval_J(p, self.zero)

    def test_e_grid_negative(self):
        p = IsoperimetricProblem(self.grid, self.order, ONE)
        with self.assertRaises(ValueError):
            eval_J(p, sample(lambda x, y: 0.0, self.wide))


class TestHamiltonian(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        grid = make_grid(0, 1, 0, 1, 3, 3)
        order = FractionalOrder(0.5)
        self.p = IsoperimetricProblem(grid, order, ENERGY, U)
        squares = spec(
            lambda x, y, u, v, w: w**2, d5=lambda x, y, u, v, w: 2 * w
        )
        self.q = IsoperimetricProblem(
            grid,
            order,
            spec(lambda x, y, u, v, w: v**2, d4=lambda x, y, u, v, w: 2 * v),
            squares,
        )

    def test_a_H_examples(self):
        point = (0.2, 0.3, 3.0, 2.0, 3.0)
        self.assertEqual(eval_H(self.p, MultiplierPair(1, 0), *point), 13.0)
        self.assertEqual(eval_H(self.p, MultiplierPair(0, 2), *point), 6.0)
        self.assertEqual(eval_H(self.q, MultiplierPair(1, 1), *point), 13.0)

    def test_b_dH_examples(self):
        point = (0.2, 0.3, 3.0, 2.0, 3.0)
        self.assertEqual(eval_dH4(self.q, MultiplierPair(1, 1), *point), 4.0)


class TestResiduals(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.grid = make_grid(0, 1, 0, 1, 17, 17)
        self.order = FractionalOrder(0.5)
        self.rng = np.random.default_rng(23)
        self.normal = MultiplierPair(1, 0)

    def test_a_el_constant_positive(self):
        p = IsoperimetricProblem(self.grid, self.order, ENERGY)
        u = sample(lambda x, y: 4.0, self.grid)
        self.assertEqual(el_residual(p, u, self.normal).max_abs(), 0.0)

    def test_b_el_linear_positive(self):
        p = IsoperimetricProblem(self.grid, self.order, U)
        u = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        self.assertTrue(np.all(el_residual(p, u, self.normal).values == 1.0))

    def test_c_el_manufactured_positive(self):
        p = catalog_problem("manufactured", self.grid, self.order)
        u = manufactured_reference(self.grid)
        self.assertLessEqual(el_residual(p, u, self.normal).max_abs(), 1e-12)

    def test_d_el_linear_in_multipliers(self):
        p = catalog_problem("dirichlet-quadratic", self.grid, self.order)
        u = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        first = el_residual(p, u, MultiplierPair(1, 0)).values
        second = el_residual(p, u, MultiplierPair(0, 1)).values
        combined = el_residual(p, u, MultiplierPair(2.5, -1.5)).values
        np.testing.assert_allclose(
            combined,
            2.5 * first - 1.5 * second,
            rtol=0,
            atol=1e-12 * np.max(np.abs(combined)),
        )

    def test_e_natural_bc_positive(self):
        u = sample(lambda x, y: -2.0, self.grid)
        p = IsoperimetricProblem(
            self.grid,
            self.order,
            spec(lambda x, y, u, v, w: v**2, d4=lambda x, y, u, v, w: 2 * v),
        )
        self.assertEqual(natural_bc_residuals(p, u, self.normal).max_abs(), 0.0)

        p = IsoperimetricProblem(
            self.grid,
            self.order,
            spec(lambda x, y, u, v, w: v - 7, d4=lambda x, y, u, v, w: 1.0),
        )
        random = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        edges = natural_bc_residuals(p, random, self.normal)
        self.assertTrue(np.all(edges.at_x_a == 1.0))
        self.assertEqual(edges.at_x_a.shape, (17,))
        self.assertTrue(np.all(edges.at_y_d == 0.0))

    def test_f_natural_bc_state_free(self):
        # d4 and d5 vanish identically, so every edge residual is zero
        p = IsoperimetricProblem(
            self.grid,
            self.order,
            spec(
                lambda x, y, u, v, w: np.exp(u),
                d3=lambda x, y, u, v, w: np.exp(u),
            ),
        )
        u = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        self.assertEqual(natural_bc_residuals(p, u, self.normal).max_abs(), 0.0)


class TestGateaux(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.grid = make_grid(0, 1, 0, 1, 65, 65)
        self.order = FractionalOrder(0.5)
        self.rng = np.random.default_rng(29)

    def test_a_state_free_positive(self):
        p = IsoperimetricProblem(
            self.grid, self.order, spec(lambda x, y, u, v, w: 1 + x * y + 0 * u)
        )
        u = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        eta = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        self.assertEqual(gateaux_derivative(p, Functional.J, u, eta), 0.0)

    def test_b_linear_constraint_positive(self):
        p = IsoperimetricProblem(self.grid, self.order, ENERGY, U)
        u = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        eta = Field2D(self.grid, self.rng.normal(size=self.grid.shape))
        value = gateaux_derivative(p, Functional.G, u, eta)
        expected = volume_integral(eta, self.order)
        self.assertLessEqual(abs(value - expected), 1e-8 * (1 + abs(expected)))

    def test_c_euler_lagrange_consistency(self):
        # Integrands whose d4 does not depend on x and d5 not on y
        x_bump = lambda x, y: x * (1 - x) * y * (1 - y)  # noqa: E731
        for _ in range(10):
            c1 = self.rng.uniform(20, 40)
            c2 = self.rng.uniform(-0.5, 0.5)
            c3 = self.rng.uniform(-0.25, 0.25)
            k1, k2, k3 = self.rng.uniform(0.5, 3, size=3)
            f = LagrangianSpec(
                value=lambda x, y, u, v, w: c1 * np.exp(u) * (1 + x * y)
                + c2 * np.cos(y) * v
                + c3 * (1 + x) * w,
                d3=lambda x, y, u, v, w: c1 * np.exp(u) * (1 + x * y),
                d4=lambda x, y, u, v, w: c2 * np.cos(y) + 0 * v,
                d5=lambda x, y, u, v, w: c3 * (1 + x) + 0 * w,
            )
            p = IsoperimetricProblem(self.grid, self.order, f)
            u = sample(
                lambda x, y: 0.2 * (np.sin(k1 * x) + np.cos(k2 * y)), self.grid
            )
            eta = sample(
                lambda x, y: x_bump(x, y) * (1 + 0.3 * np.sin(k3 * (x + y))),
                self.grid,
            )
            value = gateaux_derivative(p, Functional.J, u, eta)
            pairing = volume_integral(
                el_residual(p, u, MultiplierPair(1, 0)) * eta, self.order
            )
            self.assertLessEqual(
                abs(value - pairing), max(1e-6, 1e-2 * abs(value))
            )

    def test_d_eps_negative(self):
        p = IsoperimetricProblem(self.grid, self.order, ENERGY)
        u = sample(lambda x, y: 0.0, self.grid)
        with self.assertRaises(ValueError):
            gateaux_derivative(p, Functional.J, u, u, eps=0.0)


class TestConvexity(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.grid = make_grid(0, 1, 0, 1, 9, 9)
        self.order = FractionalOrder(0.5)

    def test_a_convex_positive(self):
        p = IsoperimetricProblem(self.grid, self.order, ENERGY, U)
        verdict = convexity_probe(p, MultiplierPair(1, 1), 200, 0)
        self.assertIs(verdict.status, Convexity.CONVEX_ON_SAMPLES)
        self.assertIsNone(verdict.witness)

    def test_b_concave_negative(self):
        p = IsoperimetricProblem(
            self.grid,
            self.order,
            spec(lambda x, y, u, v, w: -(u**2), d3=lambda x, y, u, v, w: -2 * u),
        )
        verdict = convexity_probe(p, MultiplierPair(1, 0), 50, 1)
        self.assertIs(verdict.status, Convexity.NOT_CONVEX)
        self.assertEqual(len(verdict.witness), 5)
        x, y, u, v, w = verdict.witness
        self.assertTrue(0 <= x <= 1 and 0 <= y <= 1)
        self.assertTrue(max(abs(u), abs(v), abs(w)) <= 10)
        self.assertAlmostEqual(verdict.min_eigenvalue, -2.0, places=4)

    def test_c_indefinite_negative(self):
        p = IsoperimetricProblem(
            self.grid,
            self.order,
            spec(
                lambda x, y, u, v, w: u * v,
                d3=lambda x, y, u, v, w: v,
                d4=lambda x, y, u, v, w: u,
            ),
        )
        verdict = convexity_probe(p, MultiplierPair(1, 0), 20, 2)
        self.assertIs(verdict.status, Convexity.NOT_CONVEX)
        self.assertAlmostEqual(verdict.min_eigenvalue, -1.0, places=4)

    def test_d_deterministic(self):
        p = catalog_problem("manufactured", self.grid, self.order)
        first = convexity_probe(p, MultiplierPair(1, 0.5), 100, 42)
        second = convexity_probe(p, MultiplierPair(1, 0.5), 100, 42)
        self.assertEqual(first, second)
        self.assertTrue(first.convex)


class TestCatalog(unittest.TestCase):
    def setUp(self):
        # Set up test variables
        self.grid = make_grid(0, 1, 0, 1, 17, 17)
        self.order = FractionalOrder(0.5)

    def test_a_audit_positive(self):
        for name in (
            "dirichlet-quadratic",
            "dirichlet-energy",
            "linear-g",
            "manufactured",
        ):
            with self.subTest(name=name):
                lagrangian = catalog_lagrangian(name, self.grid, self.order)
                self.assertLessEqual(audit_partials(lagrangian, 100, 0), 1e-5)

    def test_b_audit_negative(self):
        wrong = spec(lambda x, y, u, v, w: u**2, d3=lambda x, y, u, v, w: 3 * u)
        self.assertGreater(audit_partials(wrong), 1e-2)

    def test_c_problems_positive(self):
        p = catalog_problem("manufactured", self.grid, self.order)
        reference = manufactured_reference(self.grid)
        np.testing.assert_array_equal(p.psi, reference.trace())
        self.assertEqual(p.K, eval_constraint(p, reference))

        p = catalog_problem("dirichlet-quadratic", self.grid, self.order)
        self.assertAlmostEqual(p.K, 1.0, places=12)
        self.assertTrue(np.all(p.psi == 1.0))

        p = catalog_problem("linear-g", self.grid, self.order, free_boundary=True)
        self.assertAlmostEqual(p.K, 0.5, places=12)
        self.assertTrue(p.free_boundary)

    def test_d_unknown_negative(self):
        with self.assertRaises(ValueError):
            catalog_problem("unknown", self.grid, self.order)
        with self.assertRaises(ValueError):
            catalog_lagrangian("unknown", self.grid, self.order)


if __name__ == "__main__":
    unittest.main()
