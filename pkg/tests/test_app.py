import json

import numpy as np
import pytest

from pfc.app.app import main, build_parser, overrides_from_args
from pfc.app.scenario import parse_scenario, scenario_from_dict
from pfc.exceptions import GraphError, ScenarioError

from .conftest import read_csv

TWO_AGENTS = {
    "graph": {"family": "path", "size": 2},
    "agents": [{"model": "lti_first_order"}, {"model": "integrator"}],
}


def test_bundled_case_study():
    scenario = parse_scenario("case_study")

    assert scenario.seed == 7
    assert scenario.graph.num_vertices == 30
    assert scenario.graph.num_edges == 30
    assert scenario.epsilon == pytest.approx(0.2)
    assert len(scenario.agents) == 30
    np.testing.assert_allclose(scenario.y_star, 1.5)


def test_minimal_scenario_defaults():
    scenario = scenario_from_dict(TWO_AGENTS)
    config = scenario.effective_config()

    assert config["synthesis"]["h"] == 2.0
    assert config["sim"]["dt"] == pytest.approx(1e-3)
    np.testing.assert_allclose(scenario.zeta_star, [0.0])
    np.testing.assert_allclose(scenario.alpha, [1.0])


def test_random_agents_follow_seed():
    data = {"seed": 3, "graph": {"family": "cycle", "size": 5},
            "agents": {"model": "vehicle_drag"}}

    a = scenario_from_dict(data).agents
    b = scenario_from_dict(data).agents
    c = scenario_from_dict(data, {"seed": 4}).agents

    assert [v.params["c_d"] for v in a] == [v.params["c_d"] for v in b]
    assert [v.params["c_d"] for v in a] != [v.params["c_d"] for v in c]


def test_cycle_vector_rejected():
    data = {"graph": {"family": "cycle", "size": 3},
            "agents": [{"model": "integrator"}] * 3,
            "goal": {"zeta_star": [1.0, 1.0, 1.0]}}

    with pytest.raises(GraphError) as e:
        scenario_from_dict(data)
    assert e.value.field == "goal.zeta_star"


@pytest.mark.parametrize("patch, field", [
    ({"sim": {"stepsize": 1.0}}, "sim.stepsize"),
    ({"goal": {"epsilon": -1.0}}, "goal.epsilon"),
    ({"agents": [{"model": "rocket"}, {"model": "integrator"}]},
     "agents[0].model"),
    ({"synthesis": {"m_mode": "max"}}, "synthesis.m_mode"),
    ({"extra": 1}, "extra"),
])
def test_schema_errors_name_field(patch, field):
    with pytest.raises(ScenarioError) as e:
        scenario_from_dict(dict(TWO_AGENTS, **patch))

    assert e.value.field == field
    assert str(e.value).startswith(field)


def test_config_hash():
    a = scenario_from_dict(TWO_AGENTS)
    b = scenario_from_dict(TWO_AGENTS, {"sim.dt": 1e-3})
    c = scenario_from_dict(TWO_AGENTS, {"sim.dt": 2e-3})

    assert len(a.config_hash()) == 12
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()


def test_cli_overrides():
    args = build_parser().parse_args(["synthesize", "--m-mode", "per-edge",
                                      "--h", "0.5", "--seed", "9"])
    overrides = overrides_from_args(args)

    assert overrides["synthesis.m_mode"] == "per_edge"
    assert overrides["synthesis.h"] == 0.5
    assert overrides["seed"] == 9
    assert overrides["sim.dt"] is None


def test_verify_two_lti(tmp_path):
    assert main(["verify", "--scenario", "two_lti", "--out",
                 str(tmp_path)]) == 0

    df = read_csv(tmp_path / "verify.csv")
    assert df["passed"].all()
    assert set(df["check"]) == {"oracle_vs_simulation", "duality_gap",
                                "fenchel_residual", "gradient_fd",
                                "descent_direction", "boundedness",
                                "meip_certificate"}
    assert (tmp_path / "effective_config.json").exists()


def test_csv_header(tmp_path):
    main(["simulate", "--scenario", "two_lti", "--out", str(tmp_path)])

    scenario = parse_scenario("two_lti")
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header == f"# pfc seed=0 rng=PCG64 " \
                     f"config_hash={scenario.config_hash()}"


def test_simulate_is_deterministic(tmp_path):
    runs = []
    for k in range(2):
        out = tmp_path / str(k)
        # alpha = 1 leaves the edge at 2/3, outside epsilon = 0.1
        assert main(["simulate", "--scenario", "two_lti", "--out",
                     str(out)]) == 1
        runs.append((out / "trajectory.csv").read_bytes())

    assert runs[0] == runs[1]


def test_synthesize_two_lti(tmp_path):
    assert main(["synthesize", "--scenario", "two_lti", "--estimator",
                 "lti", "--out", str(tmp_path)]) == 0

    df = read_csv(tmp_path / "synthesis.csv")
    assert set(df["m_mode"]) == {"euclidean", "per_edge"}
    row = df[df["selected"]].iloc[0]
    assert row["m_mode"] == "per_edge"
    assert row["alpha"] == pytest.approx(50.0, rel=1e-4)
    assert row["distance"] <= 0.1


def test_iterate_two_lti(tmp_path):
    assert main(["iterate", "--scenario", "two_lti", "--out",
                 str(tmp_path)]) == 0

    df = read_csv(tmp_path / "iterations.csv")
    assert np.all(np.diff(df["epsilon_j"]) < 0)
    assert df["epsilon_j"].iloc[-1] <= 0.1

    # every logged distance matches the logged gain: 1 / (1 + 2 a)
    np.testing.assert_allclose(df["epsilon_j"], 1.0 / (1.0 + 2.0 * df["a_0"]),
                               rtol=0, atol=1e-9)
    np.testing.assert_allclose(df["F"], df["epsilon_j"] ** 2, atol=1e-9)


def test_ramp_two_lti(tmp_path):
    assert main(["ramp", "--scenario", "two_lti", "--steady-state",
                 "oracle", "--out", str(tmp_path)]) == 0

    df = read_csv(tmp_path / "ramp.csv")
    assert list(df["passed"]) == [False, True]


def test_experiment_two_lti(tmp_path):
    assert main(["experiment", "--scenario", "two_lti", "--out",
                 str(tmp_path)]) == 0

    df = read_csv(tmp_path / "experiments.csv")
    assert len(df) == 6
    assert df["converged"].all()


def test_error_json(tmp_path):
    code = main(["verify", "--scenario", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path)])

    assert code == ScenarioError.exit_code
    payload = json.loads((tmp_path / "error.json").read_text())
    assert payload["error"] == "invalid_scenario"
    assert payload["command"] == "verify"


@pytest.mark.parametrize("agents, field", [
    ([{"model": "custom_polynomial",
       "params": {"f": ["fast", 1.0], "h": [0.0, 1.0]}},
      {"model": "integrator"}], "agents[0].params.f[0]"),
    ({"model": "vehicle_drag", "c_d_range": [1.0]}, "agents.c_d_range"),
    ({"model": "vehicle_drag", "speed": 1.0}, "agents.speed"),
    ([{"model": "lti_first_order", "params": "fast"},
      {"model": "integrator"}], "agents[0].params"),
    ([{"model": "lti_first_order", "params": {"s": [1.0, 2.0]}},
      {"model": "integrator"}], "agents[0].params"),
    ([{"model": "integrator", "passivate": 0.1},
      {"model": "integrator"}], "agents[0].passivate"),
])
def test_malformed_agents_write_error_json(tmp_path, agents, field):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"graph": {"family": "path", "size": 2},
                                "agents": agents}))

    code = main(["verify", "--scenario", str(path), "--out",
                 str(tmp_path)])

    assert code == ScenarioError.exit_code
    payload = json.loads((tmp_path / "error.json").read_text())
    assert payload["error"] == "invalid_scenario"
    assert payload["field"] == field
