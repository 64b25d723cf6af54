import numpy as np
import pandas as pd
import pytest

from pfc.exceptions import ConvergenceError, SynthesisError
from pfc.graph import cycle_graph, path_graph, incidence_matrix
from pfc.simulation import (rk4_step, Trajectory, integrate_network,
                            detect_convergence, run_to_convergence,
                            integrator_oscillation, run_experiments,
                            closed_loop_experiment)
from pfc.systems import (ControlAffineAgent, Network, integrator_agent,
                         lti_agent, vehicle_agent, make_controller,
                         linear_decay, unit, identity)

from .conftest import lti_pair


def test_rk4_order():
    errors = []
    for dt in (0.1, 0.05, 0.025, 0.0125):
        x, t = np.array([1.0]), 0.0
        for _ in range(int(round(1.0 / dt))):
            x = rk4_step(lambda t, x: -x, t, x, dt)
            t += dt
        errors.append(abs(x[0] - np.exp(-1.0)))

    slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(slopes >= 3.5)


def test_integrator_controller_oscillates():
    g = cycle_graph(3)
    E = incidence_matrix(g)
    network = Network(g, [integrator_agent() for _ in range(3)],
                      make_controller("integrator", np.zeros(3)))
    x0 = np.random.default_rng(1).normal(size=3)

    traj = integrate_network(network, 1.0, x0, t_max=20.0, dt=1e-2, stride=1)
    expected = integrator_oscillation(E, x0, np.zeros(3), traj.t)

    assert np.abs(traj.zeta - expected).max() <= 1e-3
    assert not detect_convergence(traj, window=1.0, tol=1e-4).converged
    # disagreement keeps its amplitude
    late = traj.t >= 10.0
    assert np.abs(traj.zeta[late]).max() > 0.5 * np.abs(traj.zeta).max()


def test_single_agent_runs_open_loop():
    network = Network(path_graph(1), [lti_agent(1.0)],
                      make_controller("proportional", np.zeros(0)))
    traj = integrate_network(network, np.zeros(0) + 1.0, [1.0], t_max=2.0,
                             dt=1e-2)

    assert traj.x[-1, 0] == pytest.approx(np.exp(-2.0), rel=1e-8)
    assert traj.zeta.shape == (len(traj), 0)


def test_two_lti_reaches_steady_state():
    network = lti_pair()
    traj, conv = run_to_convergence(network, 49.5, np.zeros(2), t_max=50.0)

    assert conv.converged
    assert (network.E.T @ conv.y_ss)[0] == pytest.approx(0.99, abs=1e-3)
    assert traj.t[-1] < 50.0


def test_recording_stride():
    traj = integrate_network(lti_pair(), 1.0, np.zeros(2), t_max=1.0,
                             dt=1e-2, stride=10)

    np.testing.assert_allclose(traj.t, np.linspace(0.0, 1.0, 11))


def test_blow_up():
    unstable = ControlAffineAgent(linear_decay, unit, identity, {"a": -1.0},
                                  h_inv=identity)
    network = Network(path_graph(1), [unstable],
                      make_controller("proportional", np.zeros(0)))

    with pytest.raises(ConvergenceError, match="blow-up"):
        with np.errstate(all="ignore"):
            integrate_network(network, 1.0, [1.0], t_max=1000.0, dt=0.5)


def test_constant_trajectory_converges():
    t = np.linspace(0.0, 2.0, 21)
    ones = np.ones((21, 2))
    traj = Trajectory(t, ones, 3 * ones, 0 * ones, np.zeros((21, 1)),
                      np.zeros((21, 1)), 0 * ones)

    conv = detect_convergence(traj, window=1.0, tol=1e-6)
    assert conv.converged
    np.testing.assert_allclose(conv.y_ss, [3.0, 3.0])

    short = Trajectory(t[:3], ones[:3], ones[:3], ones[:3],
                       np.zeros((3, 1)), np.zeros((3, 1)), 0 * ones[:3])
    assert not detect_convergence(short, window=1.0, tol=1e-6).converged


def test_trajectory_frame():
    traj = integrate_network(lti_pair(), 1.0, np.zeros(2), t_max=0.1,
                             dt=1e-2)
    df = traj.to_frame()

    assert isinstance(df, pd.DataFrame)
    assert list(df.columns) == ["t", "x_0", "x_1", "y_0", "y_1", "u_0",
                                "u_1", "zeta_0", "mu_0"]


def test_lti_experiment():
    rec = closed_loop_experiment(lti_agent(1.0), 1.0, 2.0)

    assert rec.converged
    assert rec.y_ss == pytest.approx(1.0, abs=1e-5)
    assert rec.u_ss == pytest.approx(1.0, abs=1e-5)


def test_experiment_at_zero_input_output():
    rec = closed_loop_experiment(vehicle_agent(1.0, 1.0), 3.0, 1.0)

    assert rec.y_ss == pytest.approx(1.0, abs=1e-5)
    assert rec.u_ss == pytest.approx(0.0, abs=1e-4)


def test_small_gain_experiment_saturates_input():
    rec = closed_loop_experiment(vehicle_agent(1.0, 0.0), 0.01, 100.0)

    assert rec.converged
    assert rec.u_ss == pytest.approx(1.0, abs=0.02)


def test_experiments_batched_and_parallel():
    agents = [vehicle_agent(c, w) for c, w in
              [(0.5, 1.0), (2.0, -1.0), (1.0, 0.0), (4.0, 0.5)]]
    refs = [1.0, -2.0, 3.0, 0.0]

    serial = run_experiments(agents, 1.0, refs, t_max=100.0)
    parallel = run_experiments(agents, 1.0, refs, t_max=100.0, n_jobs=2,
                               chunksize=2, agent_ids=[10, 11, 12, 13])

    assert [r.agent for r in parallel] == [10, 11, 12, 13]
    np.testing.assert_allclose([r.y_ss for r in serial],
                               [r.y_ss for r in parallel], atol=1e-6)


def test_experiment_gain_must_be_positive():
    with pytest.raises(SynthesisError):
        run_experiments([lti_agent()], 0.0, [1.0])
