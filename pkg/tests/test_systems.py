import numpy as np
import pytest

from pfc.exceptions import ModelError
from pfc.graph import path_graph
from pfc.systems import (ControlAffineAgent, LtiAgent, AgentStack, Network,
                         PassivationWrapper,
                         StaticController, IntegratorController,
                         check_meip_control_affine, passivize, make_agent,
                         make_controller, random_vehicle_agents,
                         vehicle_agent, integrator_agent, lti_agent,
                         polynomial_agent, linear_decay, unit, identity,
                         agent_dynamics, agent_output, CONTROLLER_FAMILIES)


@pytest.fixture
def unstable_agent():
    # x' = x + u, y = x
    return ControlAffineAgent(linear_decay, unit, identity, {"a": -1.0},
                              h_inv=identity, name="unstable")


def test_vehicle_dynamics():
    agent = vehicle_agent(c_d=2.0, w=0.5)

    assert agent.dynamics(1.0, 0.0) == pytest.approx(-1.5)
    assert agent.dynamics(-1.0, 1.0) == pytest.approx(3.5)
    assert agent.steady_state_input(1.0) == pytest.approx(1.5)
    assert agent.output(3.0) == pytest.approx(3.0)
    assert agent_dynamics(agent, 1.0, 0.0) == agent.dynamics(1.0, 0.0)
    assert agent_output(agent, 3.0) == agent.output(3.0)


def test_meip_certificates(unstable_agent):
    for agent in (integrator_agent(), vehicle_agent(0.3, -1.0),
                  lti_agent(2.0)):
        assert check_meip_control_affine(agent).passed

    verdict = check_meip_control_affine(unstable_agent)
    assert not verdict.passed
    assert verdict.reason == "f/g not ascending"


def test_meip_rejects_flat_output():
    agent = polynomial_agent([0.0, 1.0], [0.0, 0.0, 0.0, 1.0])
    # h(x) = x^3 has a flat point at the origin but stays ascending
    assert check_meip_control_affine(agent).passed

    flat = polynomial_agent([0.0, 1.0], [1.0])
    assert check_meip_control_affine(flat).reason == "h not ascending"


def test_meip_explicit_threshold():
    # bounded maps reach the half-width of the default domain but not 1e3
    agent = ControlAffineAgent(lambda x: 55.0 * np.tanh(x), unit,
                               lambda x: 55.0 * np.tanh(x / 10.0))

    assert check_meip_control_affine(agent).passed
    verdict = check_meip_control_affine(agent, divergence_threshold=1e3)
    assert not verdict.passed
    assert verdict.reason == "no divergence at domain endpoints"


def test_ufunc_model_functions():
    agent = ControlAffineAgent(np.tanh, unit, np.tanh)

    assert agent.dynamics(0.5, 1.0) == pytest.approx(1.0 - np.tanh(0.5))
    assert agent.output(0.5) == pytest.approx(np.tanh(0.5))
    assert agent.steady_state_input(0.5) == pytest.approx(np.tanh(0.5))
    # tanh saturates in floating point on the default domain
    assert check_meip_control_affine(agent).reason == "h not ascending"


def test_passivation(unstable_agent):
    agent = passivize(unstable_agent, shortage=1.0, margin=0.5)

    assert agent.nu == pytest.approx(1.5)
    assert check_meip_control_affine(agent).passed
    # x' = x + (u - 1.5 x)
    assert agent.dynamics(2.0, 1.0) == pytest.approx(0.0)

    with pytest.raises(ModelError):
        passivize(unstable_agent, shortage=1.0, margin=0.0)


def test_passivation_of_integrator():
    # s = 0 and margin 0.1 give the relation k_inv(y) = 0.1 y
    agent = passivize(integrator_agent(), shortage=0.0, margin=0.1)

    assert agent.nu == pytest.approx(0.1)
    assert agent.steady_state_input(2.0) == pytest.approx(0.2)
    assert agent.dynamics(2.0, 0.0) == pytest.approx(-0.2)
    assert check_meip_control_affine(agent).passed


def test_passivation_gain_must_exceed_shortage(unstable_agent):
    with pytest.raises(ModelError, match="must exceed"):
        PassivationWrapper(unstable_agent, nu=1.0, shortage=1.0)
    with pytest.raises(ModelError, match="must exceed"):
        PassivationWrapper(unstable_agent, nu=0.5, shortage=1.0)
    with pytest.raises(ModelError, match="nonnegative"):
        passivize(unstable_agent, shortage=-0.1, margin=1.0)


def test_lti_slope():
    agent = LtiAgent.from_slope(3.0, time_constant=0.5)

    assert agent.slope == pytest.approx(3.0)
    y = 0.7
    assert agent.steady_state_input(agent.inverse_output(y)) == \
        pytest.approx(3.0 * y)

    with pytest.raises(ModelError):
        LtiAgent.from_slope(-1.0)


def test_stack_matches_agents(unstable_agent):
    rng = np.random.default_rng(3)
    agents = random_vehicle_agents(4, rng) + [lti_agent(0.5),
                                              passivize(unstable_agent, 1, 1),
                                              integrator_agent()]
    stack = AgentStack(agents)
    x = rng.normal(size=len(agents))
    u = rng.normal(size=len(agents))

    expected = [a.dynamics(xi, ui) for a, xi, ui in zip(agents, x, u)]
    np.testing.assert_allclose(stack.dynamics(x, u), expected)
    np.testing.assert_allclose(stack.output(x), [a.output(xi) for a, xi in
                                                 zip(agents, x)])
    assert len(stack.groups) == 4


def test_random_vehicles_seeded():
    a = random_vehicle_agents(30, np.random.default_rng(7))
    b = random_vehicle_agents(30, np.random.default_rng(7))

    assert [v.params["c_d"] for v in a] == [v.params["c_d"] for v in b]
    assert all(0.1 <= v.params["c_d"] <= 10.0 for v in a)
    assert all(-2.0 <= v.w <= 2.0 for v in a)


def test_make_agent_errors():
    with pytest.raises(ModelError):
        make_agent("rocket")
    with pytest.raises(ModelError):
        make_agent("vehicle_drag", mass=1.0)
    with pytest.raises(ModelError):
        make_agent("vehicle_drag", c_d=-1.0)


@pytest.mark.parametrize("family", CONTROLLER_FAMILIES)
def test_controller_potentials(family):
    ctrl = StaticController(family, np.array([0.5, -1.0]), gain=2.0)
    zeta = np.array([1.3, -0.2])
    h = 1e-6

    np.testing.assert_allclose(ctrl.potential(ctrl.zeta_star), 0.0)
    np.testing.assert_allclose(ctrl.gamma(ctrl.zeta_star), 0.0)
    num = (ctrl.potential(zeta + h) - ctrl.potential(zeta - h)) / (2 * h)
    np.testing.assert_allclose(num, ctrl.gamma(zeta), rtol=1e-6)
    num = (ctrl.gamma(zeta + h) - ctrl.gamma(zeta - h)) / (2 * h)
    np.testing.assert_allclose(num, ctrl.dgamma(zeta), rtol=1e-6)

    # Fenchel equality at mu = gamma(zeta)
    mu = ctrl.gamma(zeta)
    np.testing.assert_allclose(ctrl.potential(zeta) + ctrl.conjugate(mu),
                               zeta * mu, atol=1e-9)


def test_tanh_conjugate_domain():
    ctrl = StaticController("tanh", np.zeros(1), gain=1.0)

    assert np.isinf(ctrl.conjugate(np.array([1.5]))[0])


def test_controller_errors():
    with pytest.raises(ModelError):
        StaticController("sigmoid", np.zeros(1))
    with pytest.raises(ModelError):
        StaticController("proportional", np.zeros(1), gain=0.0)


def test_integrator_controller():
    ctrl = make_controller("integrator", np.zeros(3))

    assert isinstance(ctrl, IntegratorController)
    assert ctrl.is_dynamic and ctrl.num_edges == 3


def test_network_shape_checks():
    g = path_graph(3)

    with pytest.raises(ModelError):
        Network(g, [integrator_agent()] * 2, make_controller(
            "proportional", np.zeros(2)))
    with pytest.raises(ModelError):
        Network(g, [integrator_agent()] * 3, make_controller(
            "proportional", np.zeros(3)))
