"""JSON scenario files: topology, agents, controllers, formation goal and
the simulation / synthesis settings of a run.

Every section is filled from the defaults below; `Scenario.effective_config`
returns the fully-defaulted dictionary that is echoed next to every output.

"""
import copy
import hashlib
import json
import logging
import pathlib

import numpy as np

from ..exceptions import ScenarioError, ModelError, GraphError, \
    SynthesisError
from ..graph import make_graph, incidence_matrix, check_edge_vector
from ..simulation import EXPERIMENT_DEFAULTS, NETWORK_DEFAULTS
from ..synthesis import SYNTHESIS_DEFAULTS, ESTIMATORS, M_MODES, \
    target_outputs
from ..systems import (Network, make_agent, make_controller, passivize,
                       random_vehicle_agents, AGENT_MODELS,
                       CONTROLLER_FAMILIES)

logger = logging.getLogger(__name__)

RNG_NAME = "PCG64"

SCENARIO_DIR = pathlib.Path(__file__).parent / "scenarios"

GRAPH_DEFAULTS = {
    "family": None,
    "size": None,
    "edges": None,
    "num_vertices": None,
}

RANDOM_AGENT_DEFAULTS = {
    "model": "vehicle_drag",
    "count": None,
    "c_d_range": [0.1, 10.0],
    "w_range": [-2.0, 2.0],
}

CONTROLLER_DEFAULTS = {
    "family": "proportional",
    "gain": 1.0,
}

GOAL_DEFAULTS = {
    "zeta_star": 0.0,
    "epsilon": 0.2,
    "y_star": None,
}

SIM_DEFAULTS = dict(NETWORK_DEFAULTS, alpha=1.0, x0=0.0)

SCENARIO_DEFAULTS = {
    "name": "scenario",
    "seed": 0,
    "graph": GRAPH_DEFAULTS,
    "agents": [],
    "controller": CONTROLLER_DEFAULTS,
    "goal": GOAL_DEFAULTS,
    "sim": SIM_DEFAULTS,
    "experiment": EXPERIMENT_DEFAULTS,
    "synthesis": SYNTHESIS_DEFAULTS,
}


#
# Validation helpers
#
def _number(value, field, positive=False, nonnegative=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"expected a number, got {value!r}", field=field)
    if not np.isfinite(value):
        raise ScenarioError("must be finite", field=field)
    if positive and value <= 0:
        raise ScenarioError(f"must be positive, got {value}", field=field)
    if nonnegative and value < 0:
        raise ScenarioError(f"must be nonnegative, got {value}", field=field)
    return value


def _integer(value, field, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"expected an integer, got {value!r}", field=field)
    if minimum is not None and value < minimum:
        raise ScenarioError(f"must be at least {minimum}, got {value}",
                            field=field)
    return value


def _vector(value, size, field):
    """Scalar (broadcast) or list of `size` numbers."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(size, float(_number(value, field)))
    if not isinstance(value, list):
        raise ScenarioError(f"expected a number or a list, got {value!r}",
                            field=field)
    if len(value) != size:
        raise ScenarioError(f"expected {size} entries, got {len(value)}",
                            field=field)
    return np.array([_number(v, f"{field}[{k}]") for k, v in
                     enumerate(value)], dtype=float)


def _range(value, field, positive=False):
    """[lo, hi] pair of numbers with lo <= hi."""
    if not isinstance(value, list) or len(value) != 2:
        raise ScenarioError(f"expected a [lo, hi] pair, got {value!r}",
                            field=field)
    lo, hi = [_number(v, f"{field}[{k}]", positive=positive)
              for k, v in enumerate(value)]
    if lo > hi:
        raise ScenarioError(f"lower end {lo} exceeds upper end {hi}",
                            field=field)
    return lo, hi


def _choice(value, choices, field):
    if value not in choices:
        raise ScenarioError(f"{value!r} is not one of {', '.join(choices)}",
                            field=field)
    return value


def _section(data, name, defaults):
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ScenarioError("expected an object", field=name)

    unknown = set(raw) - set(defaults)
    if unknown:
        key = sorted(unknown)[0]
        raise ScenarioError("unknown key", field=f"{name}.{key}")

    return dict(copy.deepcopy(defaults), **copy.deepcopy(raw))


def _set_path(data, path, value):
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


#
# Scenario
#
class Scenario:
    """A validated scenario with every default filled in.

    Attributes
    ----------
    graph : UndirectedGraph
    agents : list
    controller : StaticController or IntegratorController
    zeta_star, y_star : np.array
    epsilon : float
    sim, experiment, synthesis : dict

    """

    def __init__(self, config, source=None):
        self.source = source
        self._config = config

        self.name = config["name"]
        self.seed = config["seed"]
        self.sim = config["sim"]
        self.experiment = config["experiment"]
        self.synthesis = config["synthesis"]

        instance_seq, run_seq = np.random.SeedSequence(self.seed).spawn(2)
        self._run_seq = run_seq

        self.graph = self._build_graph(config["graph"])
        self.E = incidence_matrix(self.graph)
        self.agents = self._build_agents(config["agents"],
                                         np.random.Generator(
                                             np.random.PCG64(instance_seq)))
        self._build_goal(config["goal"], config["controller"])
        self._check_settings()

    def _build_graph(self, spec):
        try:
            if spec["family"] is None:
                edges = spec["edges"]
                if not isinstance(edges, list):
                    raise ScenarioError("either graph.family or graph.edges "
                                        "is required", field="graph")
                return make_graph(edges=[tuple(e) for e in edges],
                                  num_vertices=spec["num_vertices"])
            return make_graph(spec["family"],
                              _integer(spec["size"], "graph.size", 1))
        except GraphError as e:
            e.field = e.field or "graph"
            raise

    def _build_agents(self, spec, rng):
        n = self.graph.num_vertices

        if isinstance(spec, dict):
            unknown = set(spec) - set(RANDOM_AGENT_DEFAULTS)
            if unknown:
                raise ScenarioError("unknown key",
                                    field=f"agents.{sorted(unknown)[0]}")
            random = dict(RANDOM_AGENT_DEFAULTS, **spec)
            count = n if random["count"] is None else \
                _integer(random["count"], "agents.count", 1)
            if count != n:
                raise ScenarioError(f"{count} agents for {n} graph vertices",
                                    field="agents.count")
            _choice(random["model"], ("vehicle_drag",), "agents.model")
            lo, hi = _range(random["c_d_range"], "agents.c_d_range",
                            positive=True)
            w_lo, w_hi = _range(random["w_range"], "agents.w_range")
            return random_vehicle_agents(n, rng, (lo, hi), (w_lo, w_hi))

        if not isinstance(spec, list) or len(spec) != n:
            raise ScenarioError(f"expected a list of {n} agent specs or a "
                                f"random-family object", field="agents")

        return [self._build_agent(item, f"agents[{i}]")
                for i, item in enumerate(spec)]

    def _build_agent(self, item, field):
        if not isinstance(item, dict) or "model" not in item:
            raise ScenarioError("expected an object with a model",
                                field=field)
        unknown = set(item) - {"model", "params", "passivate"}
        if unknown:
            raise ScenarioError("unknown key",
                                field=f"{field}.{sorted(unknown)[0]}")
        _choice(item["model"], list(AGENT_MODELS), f"{field}.model")

        params = item.get("params", {})
        if not isinstance(params, dict):
            raise ScenarioError("expected an object", field=f"{field}.params")
        for k, v in params.items():
            if isinstance(v, list):
                for j, c in enumerate(v):
                    _number(c, f"{field}.params.{k}[{j}]")
            else:
                _number(v, f"{field}.params.{k}")

        try:
            agent = make_agent(item["model"], **params)
        except ModelError as e:
            raise ScenarioError(e.message, field=f"{field}.params")

        if "passivate" not in item:
            return agent

        pv = item["passivate"]
        if not isinstance(pv, dict):
            raise ScenarioError("expected an object",
                                field=f"{field}.passivate")
        unknown = set(pv) - {"shortage", "margin"}
        if unknown:
            key = sorted(unknown)[0]
            raise ScenarioError("unknown key",
                                field=f"{field}.passivate.{key}")
        try:
            return passivize(agent,
                             _number(pv.get("shortage", 0.0),
                                     f"{field}.passivate.shortage"),
                             _number(pv.get("margin", 0.1),
                                     f"{field}.passivate.margin"))
        except ModelError as e:
            raise ScenarioError(e.message, field=f"{field}.passivate")

    def _build_goal(self, goal, controller):
        m = self.graph.num_edges

        self.epsilon = _number(goal["epsilon"], "goal.epsilon", positive=True)
        self.zeta_star = check_edge_vector(
            self.E, _vector(goal["zeta_star"], m, "goal.zeta_star"),
            name="goal.zeta_star")

        family = _choice(controller["family"],
                         list(CONTROLLER_FAMILIES) + ["integrator"],
                         "controller.family")
        gain = _number(controller["gain"], "controller.gain", positive=True)
        self.controller = make_controller(family, self.zeta_star, gain)

        y_star = goal["y_star"]
        if y_star is not None:
            y_star = _vector(y_star, self.graph.num_vertices, "goal.y_star")
        try:
            self.y_star = target_outputs(self.E, self.zeta_star, y_star)
        except SynthesisError as e:
            raise ScenarioError(e.message, field="goal.y_star")

    def _check_settings(self):
        for section in ("sim", "experiment"):
            for key in ("dt", "t_max", "window", "tol"):
                _number(getattr(self, section)[key], f"{section}.{key}",
                        positive=True)
        _integer(self.sim["stride"], "sim.stride", 1)

        s = self.synthesis
        for key in ("beta_small", "beta_large", "beta_refine", "far_factor",
                    "h"):
            _number(s[key], f"synthesis.{key}", positive=True)
        _integer(s["max_iter"], "synthesis.max_iter", 0)
        _integer(s["max_escalations"], "synthesis.max_escalations", 0)
        _integer(s["n_measurements"], "synthesis.n_measurements", 3)
        _choice(s["estimator"], ESTIMATORS, "synthesis.estimator")
        _choice(s["m_mode"], M_MODES, "synthesis.m_mode")
        _choice(s["steady_state"], ("oracle", "simulate"),
                "synthesis.steady_state")
        _choice(s["spacing"], ("random", "equal"), "synthesis.spacing")
        if not isinstance(s["alpha_schedule"], list) or \
                not s["alpha_schedule"]:
            raise ScenarioError("expected a nonempty list",
                                field="synthesis.alpha_schedule")
        for k, v in enumerate(s["alpha_schedule"]):
            _number(v, f"synthesis.alpha_schedule[{k}]", positive=True)
        if not isinstance(s["backtrack"], bool):
            raise ScenarioError(f"expected true or false, got "
                                f"{s['backtrack']!r}",
                                field="synthesis.backtrack")
        self.a0 = _vector(s["a0"], self.graph.num_edges, "synthesis.a0")
        if np.any(self.a0 <= 0):
            raise ScenarioError("gains must be positive", field="synthesis.a0")
        self.alpha = _vector(self.sim["alpha"], self.graph.num_edges,
                             "sim.alpha")
        if np.any(self.alpha <= 0):
            raise ScenarioError("gains must be positive", field="sim.alpha")
        self.x0 = _vector(self.sim["x0"], self.graph.num_vertices, "sim.x0")

    def network(self):
        return Network(self.graph, self.agents, self.controller)

    @property
    def sim_params(self):
        """Keyword arguments for `run_to_convergence`."""
        return {k: v for k, v in self.sim.items() if k not in ("alpha", "x0")}

    def rng(self):
        """Generator for run-time randomness (refinement references)."""
        return np.random.Generator(np.random.PCG64(self._run_seq))

    def effective_config(self):
        return copy.deepcopy(self._config)

    def config_hash(self):
        text = json.dumps(self._config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def __repr__(self):
        return f"Scenario(name={self.name!r}, seed={self.seed}, " \
               f"agents={len(self.agents)}, edges={self.graph.num_edges})"


def scenario_from_dict(data, overrides=None, source=None):
    """Fill defaults, apply dotted-path `overrides` (CLI flags) and
    validate."""
    if not isinstance(data, dict):
        raise ScenarioError("a scenario must be a JSON object")

    data = copy.deepcopy(data)
    for path, value in (overrides or {}).items():
        if value is not None:
            _set_path(data, path, value)

    unknown = set(data) - set(SCENARIO_DEFAULTS)
    if unknown:
        raise ScenarioError("unknown key", field=sorted(unknown)[0])

    config = {
        "name": data.get("name", SCENARIO_DEFAULTS["name"]),
        "seed": _integer(data.get("seed", SCENARIO_DEFAULTS["seed"]), "seed",
                         0),
        "agents": copy.deepcopy(data.get("agents", [])),
    }

    for name in ("graph", "controller", "goal", "sim", "experiment",
                 "synthesis"):
        config[name] = _section(data, name, SCENARIO_DEFAULTS[name])

    if isinstance(config["agents"], dict):
        config["agents"] = dict(RANDOM_AGENT_DEFAULTS, **config["agents"])

    return Scenario(config, source)


def parse_scenario(path, overrides=None):
    """Load and validate a JSON scenario file.

    Parameters
    ----------
    path : str or pathlib.Path
        A file path, or the name of a bundled scenario ("case_study").
    overrides : dict, optional
        Dotted-path values taking precedence over the file, e.g.
        ``{"sim.dt": 1e-3}``.

    Returns
    -------
    Scenario

    """
    path = pathlib.Path(path)

    if not path.exists() and (SCENARIO_DIR / f"{path.name}.json").exists():
        path = SCENARIO_DIR / f"{path.name}.json"

    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(f"scenario file {str(path)!r} not found")
    except json.JSONDecodeError as e:
        raise ScenarioError(f"invalid JSON: {e}")

    scenario = scenario_from_dict(data, overrides, str(path))

    logger.info("loaded %r from %s (config hash %s)", scenario, path,
                scenario.config_hash())

    return scenario
