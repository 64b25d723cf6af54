"""Steady-state relations, their convex potentials, and the network
optimisation problems whose minimisers are the closed-loop steady states.

A network with agents k_i and edge controllers gamma_e scaled by gains a_e
settles at the minimiser of

    Phi(y) = sum_i K*_i(y_i) + sum_e a_e Gamma_e((E^T y)_e),

whose stationarity condition is 0 = k^-1(y) + E diag(a) gamma(E^T y).

"""
import logging

from collections import namedtuple

import numpy as np

from scipy import linalg
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.optimize import brentq, minimize_scalar

from .exceptions import RelationError, ConvergenceError
from .systems import AgentStack, MEIP_DOMAIN, MEIP_GRID

logger = logging.getLogger(__name__)

# sample monotonicity tolerance (relative to the sample scale)
MONOTONE_TOL = 1e-10

# input-range tolerance of the primal potential
RANGE_TOL = 1e-9

LEGENDRE_DOMAIN = (-50.0, 50.0)
LEGENDRE_GRID = 401

SOLVER_TOL = 1e-8
SOLVER_MAX_ITER = 200

# below this |gamma_e(f_e)| the descent direction entry is zero
DEAD_ZONE = 1e-12

Sensitivity = namedtuple("Sensitivity", ["matrix", "min_eigenvalue"])
Flows = namedtuple("Flows", ["u", "mu"])


def fd_step(y):
    return 1e-5 * np.maximum(1.0, np.abs(y))


def central_difference(fn, y):
    y = np.asarray(y, dtype=float)
    h = fd_step(y)
    return (fn(y + h) - fn(y - h)) / (2.0 * h)


#
# Relations
#
class MonotoneRelation:
    """Single-valued monotone steady-state relation of an agent, sampled
    along the agent's state so that u = k^-1(y) at every sample.

    When the agent's output map has a closed-form inverse, k^-1 is evaluated
    exactly and the samples only support the spline used for K*; otherwise
    k^-1 is a monotone (PCHIP) interpolation of the samples.

    Parameters
    ----------
    u : np.array
        Steady-state inputs, nondecreasing.
    y : np.array
        Steady-state outputs, strictly increasing.
    agent : optional
        The agent the samples were taken from.

    """

    def __init__(self, u, y, agent=None):
        u = np.asarray(u, dtype=float)
        y = np.asarray(y, dtype=float)
        assert u.shape == y.shape and u.ndim == 1

        if len(u) < 2:
            raise RelationError("a relation needs at least two samples")

        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise RelationError("non-finite relation samples")

        scale = max(1.0, np.abs(u).max())
        du = np.diff(u)
        dy = np.diff(y)

        if np.any(dy <= 0):
            k = int(np.argmax(dy <= 0))
            raise RelationError(f"non-monotone samples: output not strictly "
                                f"increasing at sample {k} "
                                f"(y={y[k]:.6g} -> {y[k + 1]:.6g})")
        if np.any(du < -MONOTONE_TOL * scale):
            k = int(np.argmax(du < -MONOTONE_TOL * scale))
            raise RelationError(f"non-monotone samples: input decreases at "
                                f"sample {k} (u={u[k]:.6g} -> {u[k + 1]:.6g})")

        self.u = np.maximum.accumulate(u)
        self.y = y
        self.agent = agent

        if self.closed_form:
            self.spline = CubicHermiteSpline(y, self.u, self.dk_inv(y))
        else:
            self.spline = PchipInterpolator(y, self.u)

        self._dspline = self.spline.derivative()

    @property
    def closed_form(self):
        return self.agent is not None and self.agent.has_closed_form()

    @property
    def input_range(self):
        return self.u[0], self.u[-1]

    @property
    def output_range(self):
        return self.y[0], self.y[-1]

    def is_zero(self):
        return bool(np.all(np.abs(self.u) <= MONOTONE_TOL))

    def _exact_k_inv(self, y):
        agent = self.agent
        return agent.steady_state_input(agent.inverse_output(y))

    def k_inv(self, y):
        if self.closed_form:
            return self._exact_k_inv(y)
        return self.spline(y)

    def dk_inv(self, y):
        if self.closed_form:
            return central_difference(self._exact_k_inv, y)
        return self._dspline(y)

    def k(self, u):
        """Forward map input -> output; the midpoint of a flat stretch of
        the relation and NaN outside the sampled input range."""
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        us, ys = self.u, self.y

        lo = np.searchsorted(us, u, side="left")
        hi = np.searchsorted(us, u, side="right")

        out = np.full(u.shape, np.nan)

        flat = hi > lo
        out[flat] = 0.5 * (ys[lo[flat]] + ys[hi[flat] - 1])

        inner = ~flat & (lo > 0) & (lo < len(us))
        j = lo[inner]
        t = (u[inner] - us[j - 1]) / (us[j] - us[j - 1])
        out[inner] = ys[j - 1] + t * (ys[j] - ys[j - 1])

        if self.closed_form:
            for m, jj in zip(np.flatnonzero(inner), j):
                out[m] = self._refine(u[m], ys[jj - 1], ys[jj], out[m])

        return out[0] if scalar else out

    def _refine(self, u, y_lo, y_hi, guess):
        f_lo = float(self._exact_k_inv(y_lo)) - u
        f_hi = float(self._exact_k_inv(y_hi)) - u

        if f_lo * f_hi > 0:
            return guess

        return brentq(lambda v: float(self._exact_k_inv(v)) - u, y_lo, y_hi,
                      xtol=1e-14)

    def zero_input_output(self):
        y0 = self.k(0.0)

        if not np.isfinite(y0):
            raise RelationError("relation does not reach zero input on the "
                                "sampled domain")

        return float(y0)

    def is_monotone(self, tol=MONOTONE_TOL):
        """Check the sampled pairs sorted by input have nondecreasing
        outputs."""
        order = np.argsort(self.u, kind="stable")
        return bool(np.all(np.diff(self.y[order]) >= -tol))


class ConvexIntegralFn:
    """Integral function K of a monotone relation (dK = k) and its
    conjugate K* (dK* = k^-1), anchored so that K*(y0) = 0 at the
    zero-input output y0 = k(0), hence K(0) = 0.

    """

    def __init__(self, relation):
        self.relation = relation
        self.y0 = relation.zero_input_output()
        self._anti = relation.spline.antiderivative()
        self._offset = float(self._anti(self.y0))

    @property
    def subgradient(self):
        return self.relation

    @property
    def input_domain(self):
        return self.relation.input_range

    def conjugate(self, y):
        return self._anti(y) - self._offset

    def _primal(self, u):
        lo, hi = self.relation.input_range
        if u < lo - RANGE_TOL or u > hi + RANGE_TOL:
            return np.inf
        u = min(max(u, lo), hi)
        if u == 0.0:
            return 0.0
        val, _ = quad(self.relation.k, 0.0, u, epsabs=1e-12, epsrel=1e-12,
                      limit=200)
        return val

    def primal(self, u):
        """K(u) = int_0^u k(v) dv, +inf outside the relation's input
        range."""
        u = np.asarray(u, dtype=float)
        if u.ndim == 0:
            return self._primal(float(u))
        return np.array([self._primal(v) for v in u.ravel()]).reshape(u.shape)

    __call__ = primal

    def fenchel_residual(self, u):
        """K(u) + K*(k(u)) - u k(u), zero at every relation point."""
        y = self.relation.k(u)
        return self.primal(u) + self.conjugate(y) - u * y


def relation_from_agent(agent, domain=MEIP_DOMAIN, grid=MEIP_GRID):
    """Extract the steady-state relation of an agent along a state grid.

    Returns
    -------
    (MonotoneRelation, ConvexIntegralFn)

    """
    sigma = np.linspace(domain[0], domain[1], int(grid))

    with np.errstate(all="ignore"):
        u = agent.steady_state_input(sigma)
        y = agent.output(sigma)

    relation = MonotoneRelation(u, y, agent=agent)

    return relation, ConvexIntegralFn(relation)


def legendre_transform(fn, point, domain=None, grid=LEGENDRE_GRID):
    """Numerical conjugate sup_u {point u - fn(u)} by a grid scan refined
    with a bounded scalar search.

    Parameters
    ----------
    fn : ConvexIntegralFn or callable
        Convex function of one variable; vectorised callables are
        evaluated on the whole grid at once.
    point : float
    domain : (float, float), optional
        Search interval; defaults to the input range of a
        `ConvexIntegralFn`, else `LEGENDRE_DOMAIN`.
    grid : int

    Returns
    -------
    float

    """
    if domain is None:
        domain = fn.input_domain if isinstance(fn, ConvexIntegralFn) \
            else LEGENDRE_DOMAIN

    lo, hi = domain
    u = np.linspace(lo, hi, int(grid))

    with np.errstate(all="ignore"):
        vals = point * u - np.asarray(fn(u), dtype=float)

    vals = np.where(np.isnan(vals), -np.inf, vals)
    idx = int(np.argmax(vals))

    if not np.isfinite(vals[idx]):
        raise RelationError(f"conjugate undefined at {point}: function is "
                            f"infinite on the whole domain")
    if idx == 0 or idx == len(u) - 1:
        raise RelationError(f"domain too small: supremum at {point} is "
                            f"attained at the boundary u={u[idx]:.6g}")

    res = minimize_scalar(lambda v: -(point * v - float(fn(v))),
                          bounds=(u[idx - 1], u[idx + 1]), method="bounded",
                          options={"xatol": 1e-10 * max(1.0, abs(u[idx]))})

    return max(-float(res.fun), float(vals[idx]))


#
# Network potentials
#
class AgentPotentials:
    """Relations and potentials of every agent of a network, evaluated as
    vectors over the agents."""

    def __init__(self, agents, domain=MEIP_DOMAIN, grid=MEIP_GRID):
        self.agents = list(agents)
        self.stack = AgentStack(self.agents)
        pairs = [relation_from_agent(a, domain, grid) for a in self.agents]
        self.relations = [r for r, _ in pairs]
        self.potentials = [p for _, p in pairs]
        self._closed_form = self.stack.has_closed_form()
        self._y0 = np.array([p.y0 for p in self.potentials])

        logger.debug("extracted %d agent relations on [%g, %g] (%s)",
                     len(self.agents), domain[0], domain[1],
                     "closed form" if self._closed_form else "interpolated")

    def __len__(self):
        return len(self.agents)

    def _exact_k_inv(self, y):
        return self.stack.steady_state_input(self.stack.inverse_output(y))

    def k_inv(self, y):
        y = np.asarray(y, dtype=float)
        if self._closed_form:
            return self._exact_k_inv(y)
        return np.array([r.k_inv(v) for r, v in zip(self.relations, y)])

    def dk_inv(self, y):
        y = np.asarray(y, dtype=float)
        if self._closed_form:
            return central_difference(self._exact_k_inv, y)
        return np.array([r.dk_inv(v) for r, v in zip(self.relations, y)])

    def conjugate(self, y):
        return np.array([p.conjugate(v) for p, v in zip(self.potentials, y)])

    def primal(self, u):
        return np.array([p.primal(v) for p, v in zip(self.potentials, u)])

    def zero_input_outputs(self):
        return self._y0.copy()

    def is_zero(self):
        return all(r.is_zero() for r in self.relations)


class SteadyStateProblem:
    """The steady-state (optimal potential) problem of a network with edge
    gains `a`.

    Parameters
    ----------
    E : np.array
        Incidence matrix.
    a : np.array
        Positive edge gains.
    agents : AgentPotentials
    controller : StaticController

    """

    def __init__(self, E, a, agents, controller):
        E = np.asarray(E, dtype=float)
        a = np.broadcast_to(np.asarray(a, dtype=float), (E.shape[1],)).copy()

        if controller.is_dynamic:
            raise RelationError("steady-state problems need static edge "
                                "controllers")
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise RelationError(f"edge gains must be positive and finite, "
                                f"got min {a.min() if a.size else 0:g}")
        assert len(agents) == E.shape[0]

        self.E = E
        self.a = a
        self.agents = agents
        self.controller = controller

    @classmethod
    def from_network(cls, network, a, domain=MEIP_DOMAIN, grid=MEIP_GRID):
        return cls(network.E, a, AgentPotentials(network.agents, domain, grid),
                   network.controller)

    def with_gains(self, a):
        return SteadyStateProblem(self.E, a, self.agents, self.controller)

    @property
    def num_agents(self):
        return self.E.shape[0]

    def objective(self, y):
        zeta = self.E.T @ y
        return float(np.sum(self.agents.conjugate(y)) +
                     np.sum(self.a * self.controller.potential(zeta)))

    def residual(self, y):
        zeta = self.E.T @ y
        return self.agents.k_inv(y) + \
            self.E @ (self.a * self.controller.gamma(zeta))

    def hessian(self, y):
        zeta = self.E.T @ y
        return np.diag(self.agents.dk_inv(y)) + \
            (self.E * (self.a * self.controller.dgamma(zeta))) @ self.E.T


def solve_network_steady_state(p, y0=None, tol=SOLVER_TOL,
                               max_iter=SOLVER_MAX_ITER):
    """Minimise the network objective by damped Newton steps with Armijo
    backtracking. When every agent relation is identically zero the
    minimiser is only fixed up to a consensus shift and mean(y) is pinned
    to zero.

    Returns
    -------
    np.array
        Steady-state agent outputs y.

    """
    n = p.num_agents
    pin = p.agents.is_zero()

    if y0 is None:
        y = np.zeros(n) if pin else p.agents.zero_input_outputs()
    else:
        y = np.array(y0, dtype=float)

    if pin:
        y = y - y.mean()

    J = np.ones((n, n)) / n
    r = p.residual(y)
    stalled = 0

    for it in range(max_iter):
        r_norm = np.abs(r).max() if n else 0.0

        if r_norm < tol or (stalled >= 3 and r_norm < SOLVER_TOL):
            logger.debug("steady state after %d Newton steps (residual "
                         "%.3e)", it, r_norm)
            return y

        H = p.hessian(y)
        if pin:
            H = H + J

        try:
            d = linalg.solve(H, -r, assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            d = np.linalg.lstsq(H, -r, rcond=None)[0]

        if pin:
            d = d - d.mean()

        phi = p.objective(y)
        slope = float(r @ d)
        t = 1.0

        while t > 1e-12:
            y_new = y + t * d
            r_new = p.residual(y_new)
            if p.objective(y_new) <= phi + 1e-4 * t * slope or \
                    np.abs(r_new).max() < r_norm:
                break
            t *= 0.5
        else:
            # rounding floor
            if r_norm < SOLVER_TOL:
                return y
            break

        stalled = stalled + 1 if np.abs(r_new).max() > 0.5 * r_norm else 0
        y, r = y_new, r_new

        logger.debug("newton step %d: residual %.3e, step %.3g", it,
                     np.abs(r).max(), t)

    r_norm = float(np.abs(r).max())

    if r_norm < max(tol, SOLVER_TOL):
        return y

    raise ConvergenceError(f"steady-state solver did not converge after "
                           f"{max_iter} iterations (residual {r_norm:.3e})",
                           residual=r_norm)


#
# Optimal potential / optimal flow problems
#
def _check_constraint(lhs, rhs, what):
    err = np.abs(lhs - rhs).max() if np.size(lhs) else 0.0
    scale = max(1.0, np.abs(rhs).max() if np.size(rhs) else 0.0)

    if err > 1e-9 * scale:
        raise RelationError(f"constraint {what} violated by {err:.3e}")


def opp_objective(p, y, zeta):
    """Optimal potential objective sum K*(y) + sum a_e Gamma_e(zeta_e),
    subject to zeta = E^T y."""
    y = np.asarray(y, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    _check_constraint(zeta, p.E.T @ y, "zeta = E^T y")

    return float(np.sum(p.agents.conjugate(y)) +
                 np.sum(p.a * p.controller.potential(zeta)))


def ofp_objective(p, u, mu):
    """Optimal flow objective sum K(u) + sum a_e Gamma*_e(mu_e / a_e),
    subject to u = -E mu (mu is the applied, gain-scaled edge flow)."""
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    _check_constraint(u, -p.E @ mu, "u = -E mu")

    return float(np.sum(p.agents.primal(u)) +
                 np.sum(p.a * p.controller.conjugate(mu / p.a)))


def duality_gap(p, y, zeta, u, mu):
    """OPP + OFP - (u^T y + mu^T zeta); nonnegative, zero at a steady
    state."""
    return opp_objective(p, y, zeta) + ofp_objective(p, u, mu) - \
        float(np.dot(u, y) + np.dot(mu, zeta))


def steady_state_flows(p, y):
    """Edge flows mu = a gamma(E^T y) and agent inputs u = -E mu produced by
    the outputs `y`."""
    mu = p.a * p.controller.gamma(p.E.T @ np.asarray(y, dtype=float))
    return Flows(-p.E @ mu, mu)


def true_m(relation, y_star):
    """int_{y0}^{y*} k^-1(s) ds by adaptive quadrature."""
    y0 = relation.zero_input_output()
    val, _ = quad(lambda s: float(relation.k_inv(s)), y0, float(y_star),
                  epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


def distance_to_formation(p, y, zeta_star):
    return float(np.linalg.norm(p.E.T @ np.asarray(y, dtype=float) -
                                np.asarray(zeta_star, dtype=float)))


def output_box(p, zeta_star, C, diam):
    """Box containing every steady-state output y whose relative outputs
    satisfy ||E^T y - zeta*|| <= C.

    Parameters
    ----------
    p : SteadyStateProblem
    zeta_star : np.array
    C : float
    diam : int
        Diameter of the graph.

    Returns
    -------
    (float, float)

    """
    z = p.agents.zero_input_outputs()
    omega = (C + np.linalg.norm(zeta_star)) * diam
    return float(z.min() - omega - 1.0), float(z.max() + omega + 1.0)


#
# Sensitivity and gradient of the formation error
#
def sensitivity_matrix(p, y):
    """X(y) = [diag(dk^-1(y)) + E diag(a dgamma(E^T y)) E^T]^-1.

    Returns
    -------
    Sensitivity

    """
    inner = p.hessian(np.asarray(y, dtype=float))
    inner = 0.5 * (inner + inner.T)
    eig = linalg.eigvalsh(inner)

    if eig[0] <= 1e-12 * max(1.0, eig[-1]):
        raise RelationError(f"sensitivity positivity conditions violated: "
                            f"singular inner matrix (min eigenvalue "
                            f"{eig[0]:.3e})")

    X = linalg.inv(inner)
    X = 0.5 * (X + X.T)

    return Sensitivity(X, float(1.0 / eig[-1]))


def formation_error(p, zeta_star, y=None):
    """F(a) = ||E^T y(a) - zeta*||^2."""
    if y is None:
        y = solve_network_steady_state(p)
    return distance_to_formation(p, y, zeta_star) ** 2


def grad_F(p, zeta_star, y=None):
    """Gradient of F with respect to the edge gains,
    -2 diag(gamma(f)) E^T X(y) E (f - zeta*) with f = E^T y(a)."""
    if y is None:
        y = solve_network_steady_state(p)

    zeta_star = np.asarray(zeta_star, dtype=float)
    f = p.E.T @ y
    X = sensitivity_matrix(p, y).matrix

    return -2.0 * p.controller.gamma(f) * \
        (p.E.T @ (X @ (p.E @ (f - zeta_star))))


def descent_direction(p, zeta_star, y=None):
    """v_e = (f_e - zeta*_e) / gamma_e(f_e), zero where gamma_e(f_e)
    vanishes."""
    if y is None:
        y = solve_network_steady_state(p)

    zeta_star = np.asarray(zeta_star, dtype=float)
    f = p.E.T @ y
    g = p.controller.gamma(f)
    live = np.abs(g) > DEAD_ZONE
    v = np.zeros_like(f)
    v[live] = (f[live] - zeta_star[live]) / g[live]

    return v


def finite_difference_grad_F(p, zeta_star, y=None, eps=1e-4, tol=1e-12):
    """Centred finite-difference gradient of F with respect to the gains,
    with relative step `eps` per gain and tightly solved steady states."""
    if y is None:
        y = solve_network_steady_state(p, tol=tol)

    a0 = p.a
    grad = np.zeros_like(a0)

    logger.debug("finite-difference gradient over %d gains", a0.size)

    for e in range(a0.size):
        h = eps * max(1.0, a0[e])
        a = a0.copy()

        a[e] = a0[e] + h
        q = p.with_gains(a)
        fplus = formation_error(q, zeta_star,
                                solve_network_steady_state(q, y0=y, tol=tol))

        a[e] = a0[e] - h
        q = p.with_gains(a)
        fminus = formation_error(q, zeta_star,
                                 solve_network_steady_state(q, y0=y, tol=tol))

        grad[e] = (fplus - fminus) / (2 * h)

    return grad
