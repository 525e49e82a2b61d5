import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from stancu_nno.kernel import ActivationKernel, eval_kernel_1d
from stancu_nno.operator import (
    AnalyticSource,
    DomainBox,
    OperatorSpec,
    ResolutionError,
    SampleCoverageError,
    SampledSource,
    StancuParams,
    boundedness_constant,
    evaluate,
    evaluate_grid,
    index_set,
    node_bounds,
    node_shift_constant,
    perturbed_node,
)

import oracles

UNIT = DomainBox.cube(1)
SQUARE = DomainBox.cube(2)
PAIRS = [StancuParams(0, 0), StancuParams(0.5, 0.5), StancuParams(1, 2)]


def kink(s):
    return np.abs(s - 0.5) + np.sin(6 * np.pi * s)


def kink_scalar(s):
    return abs(s - 0.5) + math.sin(6 * math.pi * s)


class TestDomainAndParams:
    def test_domain_validation(self):
        with pytest.raises(ValueError):
            DomainBox((1.0,), (0.0,))
        with pytest.raises(ValueError):
            DomainBox((0.0, 0.0), (1.0,))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            StancuParams(2, 1)
        with pytest.raises(ValueError):
            StancuParams(-0.1, 1)
        assert StancuParams().is_classical


class TestIndexSet:
    def test_unit_interval(self):
        idx = index_set(UNIT, 10)
        assert idx.ranges == ((0, 10),)
        assert len(idx) == 11

    def test_fractional_endpoints(self):
        assert index_set(DomainBox((0.15,), (0.95,)), 10).ranges == ((2, 9),)

    def test_endpoints_on_the_lattice(self):
        # 10 * 0.7 is 7.000000000000001 in floating point
        assert index_set(DomainBox((0.3,), (0.7,)), 10).ranges == ((3, 7),)

    def test_product_cardinality(self):
        idx = index_set(SQUARE, 5)
        assert idx.cardinality == 36
        assert len(list(idx)) == 36

    def test_empty_range_is_an_error(self):
        with pytest.raises(ResolutionError):
            index_set(DomainBox((0.11,), (0.19,)), 10)

    @given(st.integers(1, 500), st.integers(-50, 50), st.integers(1, 100))
    def test_against_fraction_arithmetic(self, n, a_num, width):
        a, b = a_num / 10, (a_num + width) / 10
        assume(math.ceil(Fraction(a_num, 10) * n) <= math.floor(Fraction(a_num + width, 10) * n))
        lo, hi = index_set(DomainBox((a,), (b,)), n).ranges[0]
        assert lo == math.ceil(Fraction(a_num, 10) * n)
        assert hi == math.floor(Fraction(a_num + width, 10) * n)


class TestNodes:
    def test_classical(self):
        assert perturbed_node(25, 50, StancuParams(0, 0)) == 0.5

    def test_half_half(self):
        assert perturbed_node(25, 50, StancuParams(0.5, 0.5)) == pytest.approx(float(Fraction(51, 101)), abs=1e-16)

    def test_pulled_inside(self):
        assert perturbed_node(50, 50, StancuParams(1, 2)) == pytest.approx(51 / 52, abs=1e-16)

    def test_vector(self):
        np.testing.assert_allclose(perturbed_node([0, 10], 10, StancuParams(1, 2)), [1 / 12, 11 / 12])

    def test_bounds_example(self):
        lo, hi = node_bounds(UNIT, 100, StancuParams(0.5, 1))
        assert lo[0] == 0.0
        assert hi[0] == pytest.approx(1 + 1 / 101, abs=1e-15)

    def test_bounds_without_perturbation(self):
        lo, hi = node_bounds(UNIT, 37, StancuParams(0, 0))
        assert (lo[0], hi[0]) == (0.0, 1.0)

    def test_bounds_negative_lower(self):
        p = StancuParams(0, 2)
        lo, hi = node_bounds(DomainBox((-1.0,), (1.0,)), 10, p)
        assert lo[0] == pytest.approx(-1 + 1 / 6, abs=1e-15)
        nodes = perturbed_node(index_set(DomainBox((-1.0,), (1.0,)), 10).axis(0), 10, p)
        assert nodes.min() >= lo[0]
        assert nodes.min() >= -1

    def test_bounds_negative_upper(self):
        # With b < 0 the node (nb + beta)/(n + beta) exceeds b + beta/(n + beta).
        box = DomainBox((-2.0,), (-1.0,))
        p = StancuParams(1, 1)
        n = 10
        nodes = perturbed_node(index_set(box, n).axis(0), n, p)
        assert nodes.max() > -1 + 1 / (n + 1)
        lo, hi = node_bounds(box, n, p)
        assert lo[0] <= nodes.min() and nodes.max() <= hi[0]

    @pytest.mark.parametrize("box", [UNIT, DomainBox((-1.0,), (1.0,)), DomainBox((0.15,), (0.95,)), DomainBox((-2.0,), (-0.5,))])
    @pytest.mark.parametrize("p", PAIRS)
    def test_enclosure_exhaustive(self, box, p):
        for n in range(1, 201):
            try:
                idx = index_set(box, n)
            except ResolutionError:
                continue
            nodes = perturbed_node(idx.axis(0), n, p)
            lo, hi = node_bounds(box, n, p)
            assert lo[0] <= nodes.min() and nodes.max() <= hi[0], n

    @pytest.mark.parametrize("n", [10, 100, 1000])
    @pytest.mark.parametrize("p", PAIRS)
    def test_shift_is_order_one_over_n(self, n, p):
        for box in (UNIT, DomainBox((-1.0,), (1.0,))):
            k = index_set(box, n).axis(0)
            shift = np.abs(perturbed_node(k, n, p) - k / n)
            assert shift.max() <= node_shift_constant(box, p) / n * (1 + 1e-12)


class TestEvaluate:
    @pytest.mark.parametrize("p", PAIRS)
    @pytest.mark.parametrize("n", [3, 10, 50, 200])
    def test_constant_preserved(self, p, n):
        spec = OperatorSpec(UNIT, n, p, lambda s: np.full_like(s, 7.3))
        vals = evaluate_grid(spec, np.linspace(0, 1, 101))
        np.testing.assert_allclose(vals, 7.3, rtol=0, atol=1e-12)

    def test_classical_matches_oracle(self):
        spec = OperatorSpec(UNIT, 50, StancuParams(0, 0), kink)
        expected = oracles.classical_operator(kink_scalar, 0.0, 1.0, 50, 0.5)
        assert evaluate(spec, 0.5) == pytest.approx(expected, abs=1e-12)

    def test_two_dimensional_oracle(self):
        spec = OperatorSpec(SQUARE, 5, StancuParams(1, 2), lambda a, b: a + b)
        expected = oracles.stancu_operator(lambda a, b: a + b, (0, 0), (1, 1), 5, 1, 2, (0.5, 0.5))
        assert evaluate(spec, [0.5, 0.5]) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("p", PAIRS)
    def test_one_dimensional_against_exhaustive_sum(self, p):
        rng = np.random.default_rng(3)
        for n in (1, 2, 5, 10):
            spec = OperatorSpec(UNIT, n, p, kink)
            for s in rng.uniform(0, 1, 10):
                expected = oracles.stancu_operator(kink_scalar, (0,), (1,), n, p.alpha, p.beta, (s,))
                assert evaluate(spec, s) == pytest.approx(expected, abs=1e-12)

    def test_three_dimensions(self):
        box = DomainBox((0, -1, 0.5), (1, 1, 1.5))
        f = lambda x, y, z: x * y + np.cos(z)
        spec = OperatorSpec(box, 3, StancuParams(0.5, 1), f)
        s = (0.3, -0.2, 0.9)
        expected = oracles.stancu_operator(lambda x, y, z: x * y + math.cos(z), box.lower, box.upper, 3, 0.5, 1, s)
        assert evaluate(spec, s) == pytest.approx(expected, abs=1e-12)

    def test_outside_domain(self):
        spec = OperatorSpec(UNIT, 10, StancuParams(), kink)
        with pytest.raises(ValueError, match="outside"):
            evaluate(spec, 1.2)

    def test_kernel_dimension_mismatch(self):
        with pytest.raises(ValueError):
            OperatorSpec(SQUARE, 5, StancuParams(), lambda a, b: a, ActivationKernel(dimension=1))

    def test_denominator_floor(self):
        # Lowest denominator sits where a single node is nearby.
        spec = OperatorSpec(DomainBox((0.15,), (0.95,)), 10, StancuParams(), kink)
        lo, hi = spec.indices.ranges[0]
        s = np.linspace(0.15, 0.95, 501)
        den = eval_kernel_1d(spec.kernel, 10 * s[:, None] - np.arange(lo, hi + 1)).sum(axis=1)
        assert den.min() >= eval_kernel_1d(spec.kernel, 1.0)

    def test_untruncated_kernel_agrees(self):
        f = kink
        a = OperatorSpec(UNIT, 300, StancuParams(0.5, 1), f)
        b = OperatorSpec(UNIT, 300, StancuParams(0.5, 1), f, ActivationKernel(truncation=None))
        g = np.linspace(0, 1, 301)
        np.testing.assert_allclose(evaluate_grid(a, g), evaluate_grid(b, g), rtol=0, atol=1e-14)


class TestEvaluateGrid:
    def test_single_point(self):
        spec = OperatorSpec(UNIT, 20, StancuParams(0.5, 0.5), kink)
        assert evaluate_grid(spec, [0.3])[0] == evaluate(spec, 0.3)

    def test_pointwise_equals_evaluate_bitwise(self):
        spec = OperatorSpec(UNIT, 40, StancuParams(1, 2), kink)
        grid = np.linspace(0, 1, 57)
        vals = evaluate_grid(spec, grid)
        assert all(v == evaluate(spec, s) for v, s in zip(vals, grid))

    def test_constant_on_dense_grid(self):
        spec = OperatorSpec(UNIT, 100, StancuParams(1, 2), lambda s: np.full_like(s, -2.5))
        np.testing.assert_allclose(evaluate_grid(spec, np.linspace(0, 1, 1000)), -2.5, atol=1e-12, rtol=0)

    def test_deterministic_and_block_independent(self):
        spec = OperatorSpec(UNIT, 500, StancuParams(0.5, 0.5), kink)
        grid = np.linspace(0, 1, 2001)
        a = evaluate_grid(spec, grid)
        b = evaluate_grid(spec, grid)
        c = evaluate_grid(spec, grid, threads=4, block=97)
        assert a.tobytes() == b.tobytes() == c.tobytes()

    def test_threads_from_environment(self, monkeypatch):
        monkeypatch.setenv("STANCU_NNO_THREADS", "3")
        spec = OperatorSpec(SQUARE, 6, StancuParams(0.5, 1), lambda x, y: x * y)
        grid = SQUARE.grid(30)
        par = evaluate_grid(spec, grid, block=50)
        monkeypatch.setenv("STANCU_NNO_THREADS", "1")
        assert par.tobytes() == evaluate_grid(spec, grid).tobytes()


class TestSources:
    def test_clamped_extension(self):
        # The node 2/12 lies left of 0.2, where sqrt(s - 0.2) is undefined.
        f = lambda s: np.sqrt(s - 0.2)
        box = DomainBox((0.2,), (0.8,))
        spec = OperatorSpec(box, 10, StancuParams(0, 2), AnalyticSource(f))
        assert perturbed_node(2, 10, StancuParams(0, 2)) < 0.2
        assert np.isfinite(spec.node_values()).all()
        assert np.isfinite(evaluate(spec, 0.2))

    def test_direct_extension_rejects_nonfinite(self):
        f = lambda s: np.sqrt(s)
        spec = OperatorSpec(DomainBox((0.0,), (1.0,)), 10, StancuParams(0, 0), AnalyticSource(f, "direct"))
        assert evaluate(spec, 0.5) > 0  # nodes inside K, direct is fine
        spec = OperatorSpec(DomainBox((0.0,), (1.0,)), 10, StancuParams(0, 2), AnalyticSource(lambda s: np.sqrt(0.5 - s), "direct"))
        with pytest.raises(ValueError):
            evaluate(spec, 0.5)

    def test_clamp_equals_projection(self):
        f = lambda s: s**2
        p = StancuParams(1, 2)
        spec = OperatorSpec(DomainBox((0.2,), (0.8,)), 10, p, AnalyticSource(f, "clamp"))
        k = spec.indices.axis(0)
        nodes = np.clip(perturbed_node(k, 10, p), 0.2, 0.8)
        np.testing.assert_allclose(spec.node_values(), nodes**2)

    def test_sampled_source_ignores_perturbation(self):
        y = np.random.default_rng(0).normal(size=21)
        grid = np.linspace(0, 1, 50)
        vals = [evaluate_grid(OperatorSpec(UNIT, 20, p, SampledSource(y, 0, 20)), grid) for p in PAIRS]
        assert vals[0].tobytes() == vals[1].tobytes() == vals[2].tobytes()

    def test_sampled_equals_analytic_at_classical_nodes(self):
        n = 30
        y = kink(np.arange(n + 1) / n)
        grid = np.linspace(0, 1, 77)
        sampled = evaluate_grid(OperatorSpec(UNIT, n, StancuParams(), SampledSource(y, 0, n)), grid)
        analytic = evaluate_grid(OperatorSpec(UNIT, n, StancuParams(), kink), grid)
        np.testing.assert_allclose(sampled, analytic, rtol=0, atol=1e-15)

    def test_sampled_two_dimensional_with_offset(self):
        box = DomainBox((-1.0, 0.0), (1.0, 1.0))
        n = 4
        f = lambda a, b: a - 2 * b
        ka = np.arange(-4, 5)
        kb = np.arange(0, 5)
        y = f(ka[:, None] / n, kb[None, :] / n)
        sampled = OperatorSpec(box, n, StancuParams(), SampledSource(y, (-4, 0), n))
        analytic = OperatorSpec(box, n, StancuParams(), f)
        pt = [0.1, 0.7]
        assert evaluate(sampled, pt) == pytest.approx(evaluate(analytic, pt), abs=1e-14)

    def test_sampled_missing_index(self):
        spec = OperatorSpec(UNIT, 20, StancuParams(), SampledSource(np.zeros(20), 0, 20))
        with pytest.raises(SampleCoverageError):
            evaluate(spec, 0.5)

    def test_sampled_wrong_resolution(self):
        spec = OperatorSpec(UNIT, 20, StancuParams(), SampledSource(np.zeros(31), 0, 30))
        with pytest.raises(SampleCoverageError):
            evaluate(spec, 0.5)

    def test_linear_node_rule_uses_perturbed_nodes(self):
        n = 50
        y = kink(np.arange(n + 1) / n)
        p = StancuParams(0.5, 0.5)
        spec = OperatorSpec(UNIT, n, p, SampledSource(y, 0, n, node_rule="linear"))
        expected = np.interp(perturbed_node(np.arange(n + 1), n, p), np.arange(n + 1) / n, y)
        np.testing.assert_allclose(spec.node_values(), expected)


class TestBoundedness:
    def test_constant_one_dimension(self):
        assert boundedness_constant(ActivationKernel()) == pytest.approx(5.252141141997325, abs=1e-10)

    def test_constant_two_dimensions(self):
        c1 = boundedness_constant(ActivationKernel())
        assert boundedness_constant(ActivationKernel(dimension=2)) == pytest.approx(c1**2, rel=1e-14)

    def test_constant_function_well_inside_bound(self):
        c = 3.0
        spec = OperatorSpec(UNIT, 10, StancuParams(0.5, 1), lambda s: np.full_like(s, c))
        val = evaluate(spec, 0.4)
        assert abs(val) == pytest.approx(c)
        assert abs(val) <= c * boundedness_constant(spec.kernel)

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(1, 120),
        st.sampled_from(PAIRS),
        st.floats(0, 1),
        st.floats(-3, 3),
        st.floats(0.5, 20),
    )
    def test_bound_holds(self, n, p, s, amp, freq):
        f = lambda x: amp * np.sin(freq * x) + 0.3 * x**2
        spec = OperatorSpec(UNIT, n, p, f)
        sup = np.max(np.abs(spec.node_values()))
        assert abs(evaluate(spec, s)) <= boundedness_constant(spec.kernel) * sup + 1e-12
