import numpy as np
import pytest

from pfc.exceptions import RelationError
from pfc.graph import diameter
from pfc.relations import (MonotoneRelation, ConvexIntegralFn,
                           relation_from_agent, legendre_transform,
                           SteadyStateProblem, solve_network_steady_state,
                           opp_objective, ofp_objective, duality_gap,
                           steady_state_flows, true_m, distance_to_formation,
                           output_box, sensitivity_matrix, formation_error,
                           grad_F, descent_direction,
                           finite_difference_grad_F)
from pfc.systems import integrator_agent, lti_agent, vehicle_agent

from .conftest import lti_pair, vehicle_cycle


def test_lti_relation():
    relation, potential = relation_from_agent(lti_agent(2.0))

    assert relation.k_inv(1.5) == pytest.approx(3.0)
    assert potential.conjugate(1.5) == pytest.approx(2.25)
    assert relation.zero_input_output() == pytest.approx(0.0, abs=1e-12)


def test_integrator_relation_is_zero():
    relation, potential = relation_from_agent(integrator_agent())

    assert relation.is_zero()
    assert relation.k_inv(7.0) == pytest.approx(0.0)
    assert potential.conjugate(-3.0) == pytest.approx(0.0, abs=1e-12)


def test_vehicle_relation():
    relation, potential = relation_from_agent(vehicle_agent(1.0, 0.0))

    assert relation.k_inv(2.0) == pytest.approx(4.0)
    assert potential.conjugate(2.0) == pytest.approx(8.0 / 3.0, rel=1e-6)
    assert relation.k(4.0) == pytest.approx(2.0, abs=1e-9)
    assert np.isnan(relation.k(1e5))
    assert relation.is_monotone()


def test_vehicle_fenchel_identity():
    relation, potential = relation_from_agent(vehicle_agent(0.7, 1.2))
    rng = np.random.default_rng(0)

    for u in rng.uniform(-5.0, 5.0, 5):
        assert abs(potential.fenchel_residual(u)) < 1e-5

    assert potential.input_domain == relation.input_range


def test_non_monotone_samples():
    with pytest.raises(RelationError, match="non-monotone"):
        MonotoneRelation([0.0, 1.0, 2.0], [0.0, 2.0, 1.0])
    with pytest.raises(RelationError, match="non-monotone"):
        MonotoneRelation([0.0, 1.0, 0.5], [0.0, 1.0, 2.0])


def test_interpolated_relation():
    y = np.linspace(-2.0, 2.0, 41)
    relation = MonotoneRelation(y ** 3 + y, y)

    assert not relation.closed_form
    assert relation.k_inv(1.0) == pytest.approx(2.0, rel=1e-3)
    assert relation.k(2.0) == pytest.approx(1.0, rel=1e-3)
    assert ConvexIntegralFn(relation).y0 == pytest.approx(0.0, abs=1e-12)


def test_legendre_transform():
    assert legendre_transform(lambda u: 0.5 * u ** 2, 3.0) == \
        pytest.approx(4.5)
    assert legendre_transform(np.abs, 0.5) == pytest.approx(0.0, abs=1e-9)

    with pytest.raises(RelationError, match="domain too small"):
        legendre_transform(np.abs, 1.5)


def test_legendre_matches_spline_conjugate():
    _, potential = relation_from_agent(vehicle_agent(1.0, 0.0))

    value = legendre_transform(potential, 2.0, domain=(-10.0, 10.0), grid=41)

    assert value == pytest.approx(potential.conjugate(2.0), abs=1e-5)


def test_true_m():
    relation, _ = relation_from_agent(lti_agent(1.0))

    assert true_m(relation, 1.0) == pytest.approx(0.5)


def test_integrators_reach_formation(two_integrators):
    for a in (0.1, 1.0, 25.0):
        p = SteadyStateProblem.from_network(two_integrators, a)
        y = solve_network_steady_state(p)

        assert (p.E.T @ y)[0] == pytest.approx(1.0, abs=1e-10)
        assert y.mean() == pytest.approx(0.0, abs=1e-12)
        # K* vanishes, so the potential objective is min Gamma
        assert opp_objective(p, y, p.E.T @ y) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 49.5])
def test_two_lti_steady_state(two_lti, alpha):
    p = SteadyStateProblem.from_network(two_lti, alpha)
    y = solve_network_steady_state(p)

    assert (p.E.T @ y)[0] == pytest.approx(2 * alpha / (1 + 2 * alpha))
    np.testing.assert_allclose(y[0], -y[1], atol=1e-12)


def test_distance_decreases_with_gain(two_lti):
    p = SteadyStateProblem.from_network(two_lti, 1.0)
    dist = [distance_to_formation(q, solve_network_steady_state(q), [1.0])
            for q in (p.with_gains(a) for a in (1, 10, 100, 1000))]

    assert np.all(np.diff(dist) < 0)
    assert dist[-1] == pytest.approx(1.0 / 2001.0)


def test_duality_gap(two_lti):
    p = SteadyStateProblem.from_network(two_lti, 1.0)
    y = solve_network_steady_state(p)
    flows = steady_state_flows(p, y)

    assert abs(duality_gap(p, y, p.E.T @ y, flows.u, flows.mu)) < 1e-6

    y_off = y + np.array([0.1, 0.0])
    off = steady_state_flows(p, y_off)
    assert duality_gap(p, y_off, p.E.T @ y_off, off.u, off.mu) > 1e-6


def test_objective_constraints(two_lti):
    p = SteadyStateProblem.from_network(two_lti, 1.0)

    with pytest.raises(RelationError):
        opp_objective(p, np.zeros(2), np.ones(1))
    with pytest.raises(RelationError):
        ofp_objective(p, np.ones(2), np.zeros(1))


def test_problem_rejects_bad_gains(two_lti):
    with pytest.raises(RelationError):
        SteadyStateProblem.from_network(two_lti, 0.0)


def test_sensitivity_two_lti(two_lti):
    p = SteadyStateProblem.from_network(two_lti, 1.0)
    sens = sensitivity_matrix(p, solve_network_steady_state(p))

    np.testing.assert_allclose(sens.matrix, np.array([[2, 1], [1, 2]]) / 3,
                               rtol=1e-8)
    assert sens.min_eigenvalue == pytest.approx(1.0 / 3.0)


def test_sensitivity_integrators_singular(two_integrators):
    p = SteadyStateProblem.from_network(two_integrators, 1.0)

    with pytest.raises(RelationError, match="positivity"):
        sensitivity_matrix(p, solve_network_steady_state(p))


def test_sensitivity_vehicles(vehicles):
    p = SteadyStateProblem.from_network(vehicles, 2.0)
    X = sensitivity_matrix(p, solve_network_steady_state(p)).matrix

    np.testing.assert_allclose(X, X.T)
    assert np.linalg.eigvalsh(X).min() > 0


def test_gradient_two_lti(two_lti):
    alpha = 1.0
    p = SteadyStateProblem.from_network(two_lti, alpha)

    assert formation_error(p, [1.0]) == pytest.approx(1.0 / 9.0)
    assert grad_F(p, [1.0])[0] == pytest.approx(-4.0 / (1 + 2 * alpha) ** 3)
    assert finite_difference_grad_F(p, [1.0])[0] == \
        pytest.approx(-4.0 / 27.0, rel=1e-6)
    np.testing.assert_allclose(descent_direction(p, [1.0]), [1.0])


def test_gradient_vanishes_at_formation():
    p = SteadyStateProblem.from_network(lti_pair(zeta_star=0.0), 3.0)

    np.testing.assert_allclose(descent_direction(p, [0.0]), [0.0])
    np.testing.assert_allclose(grad_F(p, [0.0]), [0.0], atol=1e-12)


def test_descent_on_vehicles():
    network = vehicle_cycle(5, seed=4)
    zeta_star = network.controller.zeta_star
    rng = np.random.default_rng(4)
    p = SteadyStateProblem.from_network(network, 1.0)

    for a in rng.uniform(0.2, 5.0, (3, network.num_edges)):
        q = p.with_gains(a)
        y = solve_network_steady_state(q)
        g = grad_F(q, zeta_star, y)
        g_fd = finite_difference_grad_F(q, zeta_star, y)

        assert descent_direction(q, zeta_star, y) @ g < 0
        assert np.linalg.norm(g - g_fd) <= 1e-4 * np.linalg.norm(g_fd)


def test_output_box(vehicles):
    p = SteadyStateProblem.from_network(vehicles, 1.0)
    y = solve_network_steady_state(p)
    zeta_star = vehicles.controller.zeta_star
    lo, hi = output_box(p, zeta_star, distance_to_formation(p, y, zeta_star),
                        diameter(vehicles.graph))

    assert lo <= y.min() and y.max() <= hi
