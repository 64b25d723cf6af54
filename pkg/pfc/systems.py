"""Agent and edge-controller models of a diffusively coupled network.

Agents are SISO and control-affine,

    x' = -f(x) + g(x) u + w,    y = h(x),

with `f`, `g`, `h` plain module-level functions of the form ``fn(x, **params)``
so that agents sharing a model form can be evaluated in a single numpy call
with stacked parameters (see `AgentStack`).

"""
import logging

from collections import namedtuple

import numpy as np

from .exceptions import ModelError
from .graph import incidence_matrix

logger = logging.getLogger(__name__)

# default sampling domain / grid of the MEIP check and relation extraction
MEIP_DOMAIN = (-50.0, 50.0)
MEIP_GRID = 2001

# strictness tolerance for an ascending output map
ASCENDING_TOL = 1e-12

CONTROLLER_FAMILIES = ("proportional", "tanh", "cubic")

MeipVerdict = namedtuple("MeipVerdict", ["passed", "reason"])


#
# Model functions
#
def zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def unit(x):
    return np.ones_like(np.asarray(x, dtype=float))


def identity(x):
    return np.asarray(x, dtype=float) * 1.0


def constant(x, b):
    return np.ones_like(np.asarray(x, dtype=float)) * b


def linear(x, c):
    return c * np.asarray(x, dtype=float)


def linear_decay(x, a):
    return a * np.asarray(x, dtype=float)


def linear_inverse(y, c):
    return np.asarray(y, dtype=float) / c


def quadratic_drag(x, c_d):
    """Aerodynamic drag c_d |x| x."""
    x = np.asarray(x, dtype=float)
    return c_d * np.abs(x) * x


def polynomial(x, coeffs):
    """Evaluate sum_k coeffs[k] x^k; `coeffs` may carry a leading stack axis."""
    x = np.asarray(x, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    powers = np.arange(coeffs.shape[-1])
    return np.sum(coeffs * x[..., None] ** powers, axis=-1)


#
# Agents
#
class ControlAffineAgent:
    """Control-affine SISO agent x' = -f(x) + g(x) u + w, y = h(x).

    Parameters
    ----------
    f, g, h : callable
        Model functions called as ``fn(x, **params)``. Only the keyword
        arguments a function accepts are passed on (see `_call`).
    params : dict, optional
        Model parameters; scalars for a single agent or arrays for a stack.
    w : float or np.array
        Constant exogenous input.
    h_inv : callable, optional
        Closed-form inverse of `h`, ``h_inv(y, **params)``; when absent the
        steady-state relation is interpolated from samples.
    name : str, optional

    """

    def __init__(self, f, g, h, params=None, w=0.0, h_inv=None, name=None):
        self.f = f
        self.g = g
        self.h = h
        self.h_inv = h_inv
        self.params = dict(params or {})
        self.w = w
        self.name = name or "control_affine"

    def _call(self, fn, x):
        code = getattr(fn, "__code__", None)
        if code is None:
            # ufuncs and builtins take no model parameters
            return fn(x)
        names = code.co_varnames[1:code.co_argcount]
        return fn(x, **{k: self.params[k] for k in names})

    def drift(self, x):
        return self._call(self.f, x)

    def input_gain(self, x):
        return self._call(self.g, x)

    def dynamics(self, x, u):
        x = np.asarray(x, dtype=float)
        return -self.drift(x) + self.input_gain(x) * u + self.w

    def output(self, x):
        return self._call(self.h, x)

    def steady_state_input(self, sigma):
        """Constant input holding the agent at state `sigma`,
        (f(sigma) - w) / g(sigma)."""
        return (self.drift(sigma) - self.w) / self.input_gain(sigma)

    def inverse_output(self, y):
        if self.h_inv is None:
            return None
        return self._call(self.h_inv, y)

    def has_closed_form(self):
        return self.h_inv is not None

    def stack_key(self):
        shapes = tuple((k, np.shape(v)) for k, v in sorted(self.params.items()))
        return (type(self).__name__, self.f, self.g, self.h, self.h_inv,
                shapes)

    def stacked(self, agents):
        """Return one agent of this model form whose parameters are the
        stacked parameters of `agents`."""
        params = {k: np.array([a.params[k] for a in agents])
                  for k in self.params}
        w = np.array([a.w for a in agents], dtype=float)
        return ControlAffineAgent(self.f, self.g, self.h, params, w,
                                  self.h_inv, self.name)

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, " \
               f"params={self.params}, w={self.w})"


class LtiAgent(ControlAffineAgent):
    """Stable first-order LTI agent x' = -a x + b u, y = c x with
    steady-state relation k^-1(y) = s y, s = a / (b c).

    """

    def __init__(self, a, b, c, name=None):
        if min(np.min(a), np.min(b), np.min(c)) <= 0:
            raise ModelError(f"LTI agent needs a, b, c > 0, got "
                             f"a={a}, b={b}, c={c}")
        super().__init__(linear_decay, constant, linear,
                         {"a": a, "b": b, "c": c}, 0.0, linear_inverse,
                         name or "lti_first_order")

    @property
    def slope(self):
        p = self.params
        return p["a"] / (p["b"] * p["c"])

    @classmethod
    def from_slope(cls, s, time_constant=1.0):
        if s <= 0:
            raise ModelError(f"LTI slope must be positive, got {s}")
        return cls(1.0 / time_constant, 1.0 / time_constant, 1.0 / s)

    def stacked(self, agents):
        p = {k: np.array([a.params[k] for a in agents]) for k in self.params}
        return LtiAgent(p["a"], p["b"], p["c"], self.name)


class PassivationWrapper:
    """Output-feedback passivation of a passivity-short agent: the inner
    agent sees u_ext - nu y.

    """

    def __init__(self, inner, nu, shortage):
        if np.any(np.asarray(shortage) < 0):
            raise ModelError(f"passivity shortage must be nonnegative, got "
                             f"{shortage}")
        if np.any(np.asarray(nu) <= shortage):
            raise ModelError(f"feedback gain nu={nu} must exceed the "
                             f"shortage s={shortage}")
        self.inner = inner
        self.nu = nu
        self.shortage = shortage
        self.name = f"passivated_{inner.name}"

    def input_gain(self, x):
        return self.inner.input_gain(x)

    def dynamics(self, x, u):
        return self.inner.dynamics(x, u - self.nu * self.inner.output(x))

    def output(self, x):
        return self.inner.output(x)

    def steady_state_input(self, sigma):
        return self.inner.steady_state_input(sigma) + \
            self.nu * self.inner.output(sigma)

    def inverse_output(self, y):
        return self.inner.inverse_output(y)

    def has_closed_form(self):
        return self.inner.has_closed_form()

    def stack_key(self):
        return ("PassivationWrapper", self.inner.stack_key())

    def stacked(self, agents):
        inner = self.inner.stacked([a.inner for a in agents])
        nu = np.array([a.nu for a in agents], dtype=float)
        shortage = np.array([a.shortage for a in agents], dtype=float)
        return PassivationWrapper(inner, nu, shortage)

    def __repr__(self):
        return f"PassivationWrapper({self.inner!r}, nu={self.nu})"


def agent_dynamics(agent, x, u):
    return agent.dynamics(x, u)


def agent_output(agent, x):
    return agent.output(x)


class AgentStack:
    """Vectorised evaluation of a heterogeneous list of agents. Agents with
    the same `stack_key` are evaluated together in one numpy call.

    """

    def __init__(self, agents):
        self.agents = list(agents)
        groups = {}

        for i, agent in enumerate(self.agents):
            groups.setdefault(agent.stack_key(), []).append(i)

        self.groups = [(np.array(idx),
                        self.agents[idx[0]].stacked(
                            [self.agents[i] for i in idx]))
                       for idx in groups.values()]

        logger.debug("stacked %d agents into %d model groups",
                     len(self.agents), len(self.groups))

    def __len__(self):
        return len(self.agents)

    def _map(self, method, *arrays):
        out = np.empty(len(self.agents))
        for idx, agent in self.groups:
            out[idx] = getattr(agent, method)(*(a[idx] for a in arrays))
        return out

    def dynamics(self, x, u):
        return self._map("dynamics", np.asarray(x, dtype=float),
                         np.asarray(u, dtype=float))

    def output(self, x):
        return self._map("output", np.asarray(x, dtype=float))

    def steady_state_input(self, sigma):
        return self._map("steady_state_input", np.asarray(sigma, dtype=float))

    def has_closed_form(self):
        return all(agent.has_closed_form() for _, agent in self.groups)

    def inverse_output(self, y):
        if not self.has_closed_form():
            return None
        return self._map("inverse_output", np.asarray(y, dtype=float))

    def steady_state_x(self, y):
        """State of each agent producing output `y` (closed forms only)."""
        return self.inverse_output(y)


#
# MEIP certification
#
def check_meip_control_affine(agent, domain=MEIP_DOMAIN, grid=MEIP_GRID,
                              divergence_threshold=None):
    """Sampled certificate that a control-affine agent is MEIP: g > 0,
    (f - w)/g nondecreasing, h strictly increasing, and at least one of the
    two maps reaching the divergence threshold at both domain endpoints.
    The threshold defaults to the half-width of `domain`.

    The endpoint test stands in for the limit condition and is heuristic;
    a pass certifies the sampled domain only.

    Returns
    -------
    MeipVerdict

    """
    lo, hi = domain
    assert np.isfinite(lo) and np.isfinite(hi) and lo < hi
    assert grid >= 2

    sigma = np.linspace(lo, hi, int(grid))

    with np.errstate(all="ignore"):
        g = agent.input_gain(sigma)
        ratio = agent.steady_state_input(sigma)
        h = agent.output(sigma)

    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(ratio)) and
            np.all(np.isfinite(h))):
        return MeipVerdict(False, "non-finite")

    if np.any(g <= 0):
        return MeipVerdict(False, "g not positive")

    scale = max(1.0, np.abs(ratio).max())

    if np.any(np.diff(ratio) < -ASCENDING_TOL * scale):
        return MeipVerdict(False, "f/g not ascending")

    if np.any(np.diff(h) <= ASCENDING_TOL):
        return MeipVerdict(False, "h not ascending")

    level = (hi - lo) / 2.0 if divergence_threshold is None \
        else divergence_threshold

    def diverges(v):
        return abs(v[0]) >= level and abs(v[-1]) >= level

    if not (diverges(ratio) or diverges(h)):
        return MeipVerdict(False, "no divergence at domain endpoints")

    return MeipVerdict(True, None)


def passivize(agent, shortage, margin):
    """Wrap a passivity-short agent with output feedback nu = shortage +
    margin."""
    if shortage < 0:
        raise ModelError(f"passivity shortage must be nonnegative, got "
                         f"{shortage}")
    if margin <= 0:
        raise ModelError(f"passivation margin must be positive, got {margin}")

    return PassivationWrapper(agent, shortage + margin, shortage)


#
# Agent registry
#
def integrator_agent():
    return ControlAffineAgent(zero, unit, identity, h_inv=identity,
                              name="integrator")


def vehicle_agent(c_d=1.0, w=0.0):
    """Vehicle velocity model x' = -c_d |x| x + u + w."""
    if c_d <= 0:
        raise ModelError(f"drag coefficient must be positive, got {c_d}")
    return ControlAffineAgent(quadratic_drag, unit, identity, {"c_d": c_d},
                              w, identity, "vehicle_drag")


def lti_agent(s=1.0, time_constant=1.0):
    return LtiAgent.from_slope(s, time_constant)


def polynomial_agent(f, h, w=0.0):
    """Agent with polynomial drift and output maps (coefficients in
    ascending powers) and unit input gain."""
    f, h = list(f), list(h)
    if not f or not h:
        raise ModelError("custom_polynomial needs nonempty coefficient lists")

    params = {"coeffs": np.asarray(f, dtype=float),
              "h_coeffs": np.asarray(h, dtype=float)}

    return ControlAffineAgent(polynomial, unit, _polynomial_output, params,
                              w, None, "custom_polynomial")


def _polynomial_output(x, h_coeffs):
    return polynomial(x, h_coeffs)


AGENT_MODELS = {
    "integrator": integrator_agent,
    "vehicle_drag": vehicle_agent,
    "lti_first_order": lti_agent,
    "custom_polynomial": polynomial_agent,
}


def make_agent(model, **params):
    try:
        builder = AGENT_MODELS[model]
    except KeyError:
        raise ModelError(f"unknown agent model {model!r}, expected one of "
                         f"{', '.join(AGENT_MODELS)}")
    try:
        return builder(**params)
    except (TypeError, ValueError) as e:
        raise ModelError(f"bad parameters for {model!r}: {e}")


def random_vehicle_agents(count, rng, c_d_range=(0.1, 10.0),
                          w_range=(-2.0, 2.0)):
    """Draw `count` vehicles with log-uniform drag and uniform exogenous
    force."""
    lo, hi = c_d_range
    assert 0 < lo <= hi

    c_d = np.exp(rng.uniform(np.log(lo), np.log(hi), count))
    w = rng.uniform(w_range[0], w_range[1], count)

    return [vehicle_agent(float(c), float(v)) for c, v in zip(c_d, w)]


#
# Edge controllers
#
class StaticController:
    """Static edge controllers mu_e = gain_e psi(zeta_e - zeta*_e), vectorised
    over the edges. `potential` is the integral function Gamma_e with
    Gamma_e(zeta*_e) = 0 and `conjugate` its Legendre transform.

    Parameters
    ----------
    family : str
        "proportional", "tanh" or "cubic".
    zeta_star : np.array
    gain : float or np.array

    """

    is_dynamic = False

    def __init__(self, family, zeta_star, gain=1.0):
        if family not in CONTROLLER_FAMILIES:
            raise ModelError(f"unknown controller family {family!r}, expected "
                             f"one of {', '.join(CONTROLLER_FAMILIES)}")
        if np.any(np.asarray(gain) <= 0):
            raise ModelError(f"controller gain must be positive, got {gain}")

        self.family = family
        self.zeta_star = np.asarray(zeta_star, dtype=float)
        self.gain = gain

    @property
    def num_edges(self):
        return self.zeta_star.size

    def gamma(self, zeta):
        d = np.asarray(zeta, dtype=float) - self.zeta_star
        k = self.gain

        if self.family == "proportional":
            return k * d
        elif self.family == "tanh":
            return k * np.tanh(d)
        return k * (d + d ** 3)

    def dgamma(self, zeta):
        d = np.asarray(zeta, dtype=float) - self.zeta_star
        k = self.gain

        if self.family == "proportional":
            return k * np.ones_like(d)
        elif self.family == "tanh":
            return k / np.cosh(d) ** 2
        return k * (1.0 + 3.0 * d ** 2)

    def potential(self, zeta):
        d = np.asarray(zeta, dtype=float) - self.zeta_star
        k = self.gain

        if self.family == "proportional":
            return 0.5 * k * d ** 2
        elif self.family == "tanh":
            return k * (np.logaddexp(d, -d) - np.log(2.0))
        return k * (0.5 * d ** 2 + 0.25 * d ** 4)

    def conjugate(self, mu):
        """Gamma_e^*(mu_e); +inf outside the range of a saturating family."""
        mu = np.asarray(mu, dtype=float)
        k = self.gain

        if self.family == "proportional":
            return mu ** 2 / (2.0 * k) + self.zeta_star * mu
        elif self.family == "tanh":
            r = mu / k
            with np.errstate(all="ignore"):
                val = k * (r * np.arctanh(r) + 0.5 * np.log1p(-r ** 2))
            val = np.where(np.abs(r) < 1.0, val, np.inf)
            return val + self.zeta_star * mu

        # real root of d + d^3 = mu / k
        t = mu / k
        q = np.sqrt(t ** 2 / 4.0 + 1.0 / 27.0)
        d = np.cbrt(t / 2.0 + q) + np.cbrt(t / 2.0 - q)
        return mu * (self.zeta_star + d) - k * (0.5 * d ** 2 + 0.25 * d ** 4)

    def scaled(self, alpha):
        return StaticController(self.family, self.zeta_star, self.gain * alpha)

    def __repr__(self):
        return f"StaticController(family={self.family!r}, gain={self.gain})"


class IntegratorController:
    """Dynamic edge controllers eta_e' = zeta_e, mu_e = eta_e."""

    is_dynamic = True

    def __init__(self, num_edges):
        self._num_edges = int(num_edges)

    @property
    def num_edges(self):
        return self._num_edges

    def state_derivative(self, eta, zeta):
        return np.asarray(zeta, dtype=float)

    def output(self, eta, zeta=None):
        return np.asarray(eta, dtype=float)


def make_controller(family, zeta_star, gain=1.0):
    if family == "integrator":
        return IntegratorController(np.size(zeta_star))
    return StaticController(family, zeta_star, gain)


#
# Network bundle
#
class Network:
    """A graph, its agents (one per vertex) and the edge controllers."""

    def __init__(self, graph, agents, controller):
        agents = list(agents)

        if len(agents) != graph.num_vertices:
            raise ModelError(f"{len(agents)} agents for a graph with "
                             f"{graph.num_vertices} vertices")
        if controller.num_edges != graph.num_edges:
            raise ModelError(f"controller covers {controller.num_edges} "
                             f"edges, the graph has {graph.num_edges}")

        self.graph = graph
        self.agents = agents
        self.controller = controller
        self.E = incidence_matrix(graph)
        self.stack = AgentStack(agents)

    @property
    def num_agents(self):
        return self.graph.num_vertices

    @property
    def num_edges(self):
        return self.graph.num_edges

    def with_controller(self, controller):
        return Network(self.graph, self.agents, controller)

    def __repr__(self):
        return f"Network({self.graph!r}, controller={self.controller!r})"
