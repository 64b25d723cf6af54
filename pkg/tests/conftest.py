import numpy as np
import pandas as pd
import pytest

from pfc.graph import path_graph, cycle_graph, incidence_matrix
from pfc.systems import (Network, integrator_agent, lti_agent,
                         random_vehicle_agents, make_controller)


def lti_pair(zeta_star=1.0, s=1.0, gain=1.0):
    """Two LTI agents with slope `s` on a single edge."""
    return Network(path_graph(2), [lti_agent(s), lti_agent(s)],
                   make_controller("proportional", np.array([zeta_star]),
                                   gain))


def integrator_pair(zeta_star=1.0):
    return Network(path_graph(2), [integrator_agent(), integrator_agent()],
                   make_controller("proportional", np.array([zeta_star])))


def vehicle_cycle(n, seed, zeta_star=None, gain=1.0):
    """Random vehicles on a cycle; `zeta_star` defaults to the relative
    outputs of a seeded random potential."""
    rng = np.random.default_rng(seed)
    g = cycle_graph(n)
    agents = random_vehicle_agents(n, rng)
    if zeta_star is None:
        zeta_star = incidence_matrix(g).T @ rng.normal(size=n)
    return Network(g, agents, make_controller("proportional", zeta_star,
                                              gain))


@pytest.fixture
def two_lti():
    return lti_pair()


@pytest.fixture
def two_integrators():
    return integrator_pair()


@pytest.fixture
def vehicles():
    return vehicle_cycle(4, seed=11)


def read_csv(path):
    """Load a result CSV, skipping the provenance comment row."""
    return pd.read_csv(path, comment="#")
