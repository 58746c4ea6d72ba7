"""Tests for the nested-cylinder physics and point-cloud geometry."""

import math
from dataclasses import replace

import numpy as np
import pytest
from django.test import SimpleTestCase

from metagen.core.errors import DomainError, ShapeMismatchError
from metagen.core.services.domain import (
    COMPONENT_SLICES,
    N_POINTS,
    SYSTEM_SIZE,
    Circle,
    Condition,
    ConditionNormalizer,
    ParamsBatch,
    PointCloudSystem,
    SystemParams,
    annulus_mass,
    component_slices,
    equilibrium_mass,
    estimate_batch,
    estimate_params,
    render_batch,
    render_circle,
    render_system,
)

PARAMS = SystemParams(r_ext1=60.0, r_int1=40.0, r_ext2=40.0, r_int2=20.0, d1=2.0, d2=3.0)


class EquilibriumMassTest(SimpleTestCase):
    def test_matches_the_balance_equation(self):
        expected = math.pi * ((60**2 - 40**2) * 2.0 + (40**2 - 20**2) * 3.0) * 30.0 / 70.0

        assert equilibrium_mass(PARAMS, 70.0, 30.0) == pytest.approx(expected, rel=1e-12)

    def test_balanced_system_has_zero_residual(self):
        m_cube = equilibrium_mass(PARAMS, 25.0, 75.0)

        assert annulus_mass(PARAMS) * 75.0 - m_cube * 25.0 == pytest.approx(0.0, abs=1e-6)

    def test_rejects_non_positive_lever_arms(self):
        with pytest.raises(DomainError) as excinfo:
            equilibrium_mass(PARAMS, 0.0, 100.0)
        assert excinfo.value.quantity == "x"

        with pytest.raises(DomainError):
            equilibrium_mass(PARAMS, 50.0, -1.0)

    def test_rejects_inverted_cylinder(self):
        inverted = SystemParams(30.0, 40.0, 40.0, 20.0, 1.0, 1.0)

        with pytest.raises(DomainError):
            equilibrium_mass(inverted, 50.0, 50.0)

    def test_annulus_mass_works_on_batches(self):
        batch = ParamsBatch.from_params([PARAMS, PARAMS])

        np.testing.assert_allclose(annulus_mass(batch), [annulus_mass(PARAMS)] * 2)


class RenderTest(SimpleTestCase):
    def test_circle_points_lie_on_the_radius_at_fixed_angles(self):
        circle = render_circle(7.5)

        assert len(circle) == N_POINTS
        np.testing.assert_allclose(np.linalg.norm(circle.points, axis=1), 7.5)
        np.testing.assert_allclose(circle.points[0], [7.5, 0.0])

    def test_render_then_estimate_recovers_the_parameters(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            params = SystemParams(*rng.uniform(1.0, 100.0, size=6))
            recovered = estimate_params(render_system(params))
            np.testing.assert_allclose(recovered.as_tuple(), params.as_tuple(), rtol=1e-9)

    def test_batch_render_matches_single_render(self):
        batch = ParamsBatch.from_params([PARAMS])

        np.testing.assert_allclose(render_batch(batch)[0], render_system(PARAMS).flatten())

    def test_batch_estimate_inverts_batch_render(self):
        rng = np.random.default_rng(4)
        matrix = rng.uniform(1.0, 100.0, size=(500, 6))

        recovered = estimate_batch(render_batch(ParamsBatch.from_matrix(matrix)))

        np.testing.assert_allclose(recovered.as_matrix(), matrix, rtol=1e-9)

    def test_flat_layout_round_trips_through_point_clouds(self):
        flat = render_system(PARAMS).flatten()

        assert flat.shape == (SYSTEM_SIZE,)
        np.testing.assert_array_equal(PointCloudSystem.from_flat(flat).flatten(), flat)

    def test_from_flat_rejects_wrong_length(self):
        with pytest.raises(ShapeMismatchError):
            PointCloudSystem.from_flat(np.zeros(SYSTEM_SIZE - 1))

    def test_render_rejects_non_positive_radius_and_tiny_circles(self):
        with pytest.raises(DomainError):
            render_circle(0.0)
        with pytest.raises(DomainError):
            render_circle(1.0, n=2)

    def test_component_slices_tile_the_system(self):
        parts = list(COMPONENT_SLICES.values())

        assert parts[0].start == 0
        assert parts[-1].stop == SYSTEM_SIZE
        assert all(a.stop == b.start for a, b in zip(parts, parts[1:], strict=False))
        assert component_slices(8)["density2"] == slice(80, 96)


class ConditionNormalizerTest(SimpleTestCase):
    def test_standardizes_log_mass_and_scales_arms(self):
        m_cube = np.array([10.0, 100.0, 1000.0])
        normalizer = ConditionNormalizer.fit(m_cube)

        out = normalizer.transform(np.array([10.0, 50.0, 90.0]), np.array([90.0, 50.0, 10.0]), m_cube)

        np.testing.assert_allclose(out[:, 0], [0.1, 0.5, 0.9])
        assert out[:, 2].mean() == pytest.approx(0.0, abs=1e-12)
        assert out[:, 2].std() == pytest.approx(1.0)

    def test_constant_mass_does_not_divide_by_zero(self):
        normalizer = ConditionNormalizer.fit(np.array([5.0, 5.0]))

        assert normalizer.log_mass_std == 1.0

    def test_non_positive_mass_is_a_domain_error(self):
        normalizer = ConditionNormalizer.fit(np.array([1.0, 10.0]))

        with pytest.raises(DomainError):
            normalizer.transform(np.array([1.0]), np.array([99.0]), np.array([0.0]))

    def test_normalize_fills_the_condition(self):
        normalizer = ConditionNormalizer(log_mass_mean=0.0, log_mass_std=1.0)

        cond = normalizer.normalize(Condition(20.0, 80.0, math.e))

        assert cond.normalized == pytest.approx((0.2, 0.8, 1.0))


class EquilibriumMassMonotonicityTest(SimpleTestCase):
    def test_outer_radii_raise_and_inner_radii_lower_the_mass(self):
        base = equilibrium_mass(PARAMS, 50.0, 50.0)
        for name, direction in (("r_ext1", 1), ("r_int1", -1), ("r_ext2", 1), ("r_int2", -1)):
            for step in (0.5, 5.0):
                moved = replace(PARAMS, **{name: getattr(PARAMS, name) + step})

                assert math.copysign(1, equilibrium_mass(moved, 50.0, 50.0) - base) == direction, (name, step)

    def test_densities_raise_the_mass(self):
        base = equilibrium_mass(PARAMS, 50.0, 50.0)

        assert equilibrium_mass(replace(PARAMS, d1=PARAMS.d1 + 1.0), 50.0, 50.0) > base
        assert equilibrium_mass(replace(PARAMS, d2=PARAMS.d2 + 1.0), 50.0, 50.0) > base


class EstimateParamsTest(SimpleTestCase):
    def test_point_order_does_not_change_the_estimate(self):
        rng = np.random.default_rng(8)
        system = render_system(PARAMS)
        shuffled = [Circle(rng.permutation(circle.points)) for circle in system.circles()]
        pc = PointCloudSystem((shuffled[0], shuffled[1]), (shuffled[2], shuffled[3]), shuffled[4], shuffled[5])

        np.testing.assert_allclose(estimate_params(pc).as_tuple(), PARAMS.as_tuple(), rtol=1e-12)

    def test_radial_noise_moves_the_estimate_by_at_most_its_bound(self):
        rng = np.random.default_rng(9)
        bound = 0.3
        system = render_system(PARAMS)
        noisy = []
        for circle in system.circles():
            norms = np.linalg.norm(circle.points, axis=1, keepdims=True)
            noise = rng.uniform(-bound, bound, size=norms.shape)
            noisy.append(Circle(circle.points * (norms + noise) / norms))
        pc = PointCloudSystem((noisy[0], noisy[1]), (noisy[2], noisy[3]), noisy[4], noisy[5])

        estimate = np.array(estimate_params(pc).as_tuple())

        assert np.all(np.abs(estimate - np.array(PARAMS.as_tuple())) <= bound + 1e-12)
