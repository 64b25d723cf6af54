"""Data-driven synthesis of edge gains that bring the relative outputs of a
network to within epsilon of a formation zeta*.

Uniform gain: bound m = sum_i K*_i(y*_i) - K*_i(y_i0) from closed-loop
experiments on the agents, bound M from below by the controller potential on
the epsilon-sphere around zeta*, and use alpha = m / M.

Multi-gain: iterate a <- a + h v with the descent direction v of the
formation error computed from steady-state measurements only.

"""
import logging

from collections import namedtuple

import numpy as np
import pandas as pd

from scipy import linalg
from scipy.optimize import minimize
from toolz.itertoolz import sliding_window
from tqdm.auto import tqdm

from .exceptions import SynthesisError
from .graph import diameter, min_norm_potential, check_edge_vector
from .relations import (SteadyStateProblem, solve_network_steady_state,
                        descent_direction, distance_to_formation, output_box,
                        true_m, relation_from_agent)
from .simulation import run_experiments, run_to_convergence, NETWORK_DEFAULTS
from .systems import Network, integrator_agent

logger = logging.getLogger(__name__)

SYNTHESIS_DEFAULTS = {
    "beta_small": 0.01,
    "beta_large": 1.0,
    "beta_refine": 10.0,
    "far_factor": 10.0,
    "max_escalations": 8,
    "n_measurements": 3,
    "spacing": "random",
    "estimator": "algorithm1",
    "m_mode": "per_edge",
    "h": 2.0,
    "a0": 0.1,
    "max_iter": 200,
    "steady_state": "oracle",
    "backtrack": False,
    "alpha_schedule": [1.0, 10.0, 100.0, 1000.0],
}

ESTIMATORS = ("algorithm1", "chain", "lti", "oracle")
M_MODES = ("euclidean", "per_edge")

# tolerance of the zero-input test and of the monotonicity checks
PAIR_TOL = 1e-9

SteadyStatePair = namedtuple("SteadyStatePair", ["u", "y"])

Bracket = namedtuple("Bracket", ["m_hat", "y0", "u_star"])

RampStep = namedtuple("RampStep", ["alpha", "distance", "passed"])


def pairs_from_records(records):
    return [SteadyStatePair(r.u_ss, r.y_ss) for r in records]


#
# Single-agent bounds on m_i
#
def estimate_mi_two_point(pair_star, pair_zero, tol=PAIR_TOL):
    """u* (y* - y0) from the pair at the target output and a zero-input
    pair."""
    if abs(pair_zero.u) > tol:
        raise SynthesisError(f"second pair must have zero input, got "
                             f"u={pair_zero.u:.6g}")
    return pair_star.u * (pair_star.y - pair_zero.y)


def algorithm1_bounds(pairs, y_star):
    """Bracket the zero-input output y0 and the target input u* from three
    measured pairs and bound m_i by the worst bracket corner.

    Parameters
    ----------
    pairs : list of SteadyStatePair
        Exactly three pairs.
    y_star : float

    Returns
    -------
    Bracket
        The bound and the (lo, hi) brackets of y0 and u*.

    """
    assert len(pairs) == 3

    U = np.sort(np.array([p.u for p in pairs], dtype=float), kind="stable")
    Y = np.sort(np.array([p.y for p in pairs], dtype=float), kind="stable")

    if not (U[0] <= PAIR_TOL and U[2] >= -PAIR_TOL):
        raise SynthesisError("measurements inconsistent: inputs do not "
                             "bracket zero")
    if not (Y[0] <= y_star <= Y[2]):
        raise SynthesisError(f"measurements inconsistent: outputs "
                             f"[{Y[0]:.6g}, {Y[2]:.6g}] do not bracket "
                             f"y*={y_star:.6g}")

    y0 = (Y[0], Y[1]) if U[1] > 0 else (Y[1], Y[2])
    u_star = (U[0], U[1]) if Y[1] > y_star else (U[1], U[2])

    m_hat = max(w * (y_star - v) for w in u_star for v in y0)

    return Bracket(float(m_hat), y0, u_star)


def _chain_standard(U, Y, y_star):
    below = np.flatnonzero((U <= PAIR_TOL) & (Y <= y_star))
    above = np.flatnonzero(Y >= y_star)

    if not len(below) or not len(above):
        return None

    k0, top = below[-1], above[0]

    if U[top] < -PAIR_TOL:
        return None
    if top <= k0:
        # y* itself is a zero-input output
        return 0.0

    chain = range(k0, top)
    bound = sum(U[k] * (Y[k] - Y[j]) for j, k in sliding_window(2, chain))

    return float(bound + U[top] * (y_star - Y[top - 1]))


def estimate_mi_chain(pairs, y_star, tol=PAIR_TOL):
    """Upper bound on m_i from a chain of steady-state pairs bracketing the
    zero-input output and y*, sum_k U_k (Y_k - Y_{k-1}) + U_top (y* - Y_r).

    The pairs are sorted by output and must be consistent with a monotone
    relation. Targets below the zero-input output are handled by mirroring
    (u, y, y*) -> (-u, -y, -y*), which leaves m_i unchanged. When the data
    fit both orientations the larger bound is returned.

    """
    if len(pairs) < 2:
        raise SynthesisError("inconsistent measurements: at least two pairs "
                             "are needed")

    U = np.array([p.u for p in pairs], dtype=float)
    Y = np.array([p.y for p in pairs], dtype=float)
    order = np.argsort(Y, kind="stable")
    U, Y = U[order], Y[order]

    if np.any(np.diff(U) < -tol * max(1.0, np.abs(U).max())):
        raise SynthesisError("inconsistent measurements: inputs decrease "
                             "along increasing outputs")

    # when y* and the zero-input output share a bracket both orientations
    # apply and either may hold
    bounds = [b for b in (_chain_standard(U, Y, y_star),
                          _chain_standard(-U[::-1], -Y[::-1], -y_star))
              if b is not None]

    if not bounds:
        raise SynthesisError(f"inconsistent measurements: pairs do not "
                             f"bracket the zero-input output and "
                             f"y*={y_star:.6g}")

    return max(bounds)


def estimate_mi_lti(pair, y_star):
    """Exact m_i = (y*)^2 u / (2 y) of an LTI agent from one pair."""
    u, y = pair

    if u == 0 and y == 0:
        return 0.0
    if u == 0 or y == 0:
        raise SynthesisError(f"pair (u={u:.6g}, y={y:.6g}) cannot come from "
                             f"an LTI relation through the origin")

    return y_star ** 2 * u / (2.0 * y)


#
# Experiments
#
def algorithm1_experiments(agents, y_star, beta_small=None, beta_large=None,
                           far_factor=None, max_escalations=None,
                           sim_params=None, n_jobs=1):
    """Run the three bracketing experiments of every agent: u = -beta (y -
    y_ref) with a small gain and y_ref = +/- 1 / beta, then a unit gain with a
    reference far on the side of y* away from the first output.

    Returns
    -------
    list of list of ExperimentRecord
        Three records per agent (escalated third experiments replace the
        earlier attempt).

    """
    d = SYNTHESIS_DEFAULTS
    beta_small = d["beta_small"] if beta_small is None else beta_small
    beta_large = d["beta_large"] if beta_large is None else beta_large
    far_factor = d["far_factor"] if far_factor is None else far_factor
    max_escalations = d["max_escalations"] if max_escalations is None \
        else max_escalations
    sim_params = sim_params or {}

    agents = list(agents)
    n = len(agents)
    y_star = np.broadcast_to(np.asarray(y_star, dtype=float), (n,))
    ids = list(range(n))

    first = run_experiments(agents + agents, beta_small,
                            np.r_[np.full(n, 1.0 / beta_small),
                                  np.full(n, -1.0 / beta_small)],
                            agent_ids=ids + ids, n_jobs=n_jobs, **sim_params)
    plus, minus = first[:n], first[n:]

    upward = np.array([r.y_ss < ys for r, ys in zip(plus, y_star)])
    offset = far_factor * np.maximum(1.0, np.abs(y_star))
    third = [None] * n
    pending = np.arange(n)

    for attempt in range(max_escalations + 1):
        refs = y_star[pending] + np.where(upward[pending], 1.0, -1.0) * \
            offset[pending]
        recs = run_experiments([agents[i] for i in pending], beta_large,
                               refs, agent_ids=list(pending), n_jobs=n_jobs,
                               **sim_params)

        missed = []
        for i, r in zip(pending, recs):
            third[i] = r
            beyond = r.y_ss >= y_star[i] if upward[i] else \
                r.y_ss <= y_star[i]
            if r.converged and not beyond:
                missed.append(i)

        if not missed:
            break

        if attempt < max_escalations:
            logger.warning("third experiment of %d agents did not pass "
                           "y*, doubling the reference offset", len(missed))
        pending = np.array(missed)
        offset[pending] *= 2.0

    out = [[plus[i], minus[i], third[i]] for i in range(n)]

    for i, recs in enumerate(out):
        if not all(r.converged for r in recs):
            raise SynthesisError(f"experiment for agent {i} did not converge "
                                 f"within t_max")

    return out


def algorithm1_estimate_mi(agent, y_star, beta_small=None, sim_params=None):
    """Upper bound on m_i of one agent from three closed-loop experiments.

    Returns
    -------
    (Bracket, list of ExperimentRecord)

    """
    records = algorithm1_experiments([agent], [y_star], beta_small,
                                     sim_params=sim_params)[0]
    return algorithm1_bounds(pairs_from_records(records), y_star), records


def refined_references(lo, hi, count, rng=None, spacing="random"):
    """Reference outputs for the extra refinement experiments on [lo, hi];
    random draws from one generator keep smaller sets nested in larger
    ones."""
    if count <= 0:
        return np.zeros(0)
    if spacing == "random":
        if rng is None:
            raise SynthesisError("random refinement references need a "
                                 "generator")
        return rng.uniform(lo, hi, count)
    elif spacing == "equal":
        return np.linspace(lo, hi, count + 2)[1:-1]
    raise NotImplementedError(spacing)


def _chain_interval(pairs, y_star):
    """Smallest interval between measured outputs that holds y* and the
    bracket of the zero-input output."""
    Y = np.array([p.y for p in pairs])
    U = np.array([p.u for p in pairs])

    below = Y[U <= PAIR_TOL]
    above = Y[U >= -PAIR_TOL]
    y0_lo = below.max() if len(below) else Y.min()
    y0_hi = above.min() if len(above) else Y.max()

    lo = Y[Y <= min(y_star, y0_lo)]
    hi = Y[Y >= max(y_star, y0_hi)]

    return (lo.max() if len(lo) else Y.min()), \
        (hi.min() if len(hi) else Y.max())


def refined_experiments(agents, y_star, base_pairs, n_extra, rng=None,
                        spacing="random", beta=None, sim_params=None,
                        n_jobs=1):
    """Run `n_extra` additional experiments per agent with references
    spread over the interval bracketed by the agent's base pairs.

    Returns
    -------
    list of list of SteadyStatePair
        Extra pairs of each agent, in reference draw order.

    """
    beta = SYNTHESIS_DEFAULTS["beta_refine"] if beta is None else beta
    agents = list(agents)
    n = len(agents)

    if n_extra <= 0:
        return [[] for _ in range(n)]

    # one child generator per agent keeps the draws of every agent nested
    # across measurement counts
    if rng is not None:
        rngs = [np.random.default_rng(s)
                for s in rng.integers(0, 2 ** 63, n, dtype=np.uint64)]
    else:
        rngs = [None] * n

    refs, owners = [], []
    for i in range(n):
        lo, hi = _chain_interval(base_pairs[i], y_star[i])
        refs.append(refined_references(lo, hi, n_extra, rngs[i], spacing))
        owners.extend([i] * n_extra)

    records = run_experiments([agents[i] for i in owners], beta,
                              np.concatenate(refs), agent_ids=owners,
                              n_jobs=n_jobs, **(sim_params or {}))

    bad = [r.agent for r in records if not r.converged]
    if bad:
        raise SynthesisError(f"refinement experiment for agent {bad[0]} did "
                             f"not converge within t_max")

    extra = [[] for _ in range(n)]
    for r in records:
        extra[r.agent].append(SteadyStatePair(r.u_ss, r.y_ss))

    return extra


def refined_estimate_mi(agent, y_star, n_measurements, base_pairs=None,
                        rng=None, spacing="random", beta=None,
                        sim_params=None):
    """Chain bound on m_i from the three bracketing experiments plus
    `n_measurements - 3` refinement experiments."""
    if base_pairs is None:
        records = algorithm1_experiments([agent], [y_star],
                                         sim_params=sim_params)[0]
        base_pairs = pairs_from_records(records)

    extra = refined_experiments([agent], [y_star], [base_pairs],
                                n_measurements - 3, rng, spacing, beta,
                                sim_params)[0]
    pairs = list(base_pairs) + extra

    return estimate_mi_chain(pairs, y_star), pairs


#
# Network-level estimates
#
class EstimateReport:
    """Per-agent bounds m_i, their sum, M in both modes and the resulting
    uniform gains.

    """

    def __init__(self, agents, M, estimator, m_mode):
        self.agents = agents
        self.M = dict(M)
        self.estimator = estimator
        self.m_mode = m_mode

    @property
    def m_hat(self):
        return float(self.agents["m_hat"].sum())

    @property
    def alphas(self):
        return {mode: uniform_gain(self.m_hat, M) for mode, M in
                self.M.items()}

    @property
    def alpha(self):
        return self.alphas[self.m_mode]

    def to_frame(self):
        return pd.DataFrame([{"m_hat": self.m_hat, "M": M,
                              "alpha": uniform_gain(self.m_hat, M),
                              "m_mode": mode, "estimator": self.estimator}
                             for mode, M in self.M.items()])


def _bracket_row(i, m_hat, bracket=None, n_pairs=0):
    row = {"agent": i, "m_hat": m_hat, "n_pairs": n_pairs,
           "y0_lo": np.nan, "y0_hi": np.nan, "u_lo": np.nan, "u_hi": np.nan}
    if bracket is not None:
        row.update(y0_lo=bracket.y0[0], y0_hi=bracket.y0[1],
                   u_lo=bracket.u_star[0], u_hi=bracket.u_star[1])
    return row


def estimate_m(network, y_star, estimator="algorithm1", n_measurements=3,
               rng=None, spacing="random", sim_params=None, n_jobs=1,
               base_records=None, **kwargs):
    """Per-agent upper bounds on m_i.

    Parameters
    ----------
    network : Network
    y_star : np.array
        Target agent outputs with E^T y* = zeta*.
    estimator : str
        "algorithm1" (three experiments), "chain" (three plus
        `n_measurements - 3` refinement experiments), "lti" (one experiment,
        exact for LTI agents) or "oracle" (quadrature of the true relation).
    base_records : list of list of ExperimentRecord, optional
        Bracketing experiments already run (`algorithm1_experiments`).

    Returns
    -------
    pd.DataFrame
        One row per agent: agent, m_hat, n_pairs and the Algorithm-1
        brackets (NaN when not applicable).

    """
    agents = network.agents
    n = len(agents)
    y_star = np.asarray(y_star, dtype=float)
    rows = []

    if estimator in ("algorithm1", "chain"):
        records = base_records or algorithm1_experiments(
            agents, y_star, sim_params=sim_params, n_jobs=n_jobs, **kwargs)
        base = [pairs_from_records(r) for r in records]
        brackets = [algorithm1_bounds(p, ys) for p, ys in zip(base, y_star)]

        if estimator == "algorithm1" or n_measurements <= 3:
            rows = [_bracket_row(i, b.m_hat, b, 3)
                    for i, b in enumerate(brackets)]
        else:
            extra = refined_experiments(agents, y_star, base,
                                        n_measurements - 3, rng, spacing,
                                        sim_params=sim_params, n_jobs=n_jobs)
            rows = [_bracket_row(i, estimate_mi_chain(base[i] + extra[i],
                                                      y_star[i]),
                                 brackets[i], len(base[i]) + len(extra[i]))
                    for i in range(n)]

    elif estimator == "lti":
        refs = np.where(y_star != 0, y_star, 1.0)
        records = run_experiments(agents, 1.0, refs, n_jobs=n_jobs,
                                  **(sim_params or {}))
        for i, r in enumerate(records):
            if not r.converged:
                raise SynthesisError(f"experiment for agent {i} did not "
                                     f"converge within t_max")
            pair = SteadyStatePair(r.u_ss, r.y_ss)
            rows.append(_bracket_row(i, estimate_mi_lti(pair, y_star[i]),
                                     n_pairs=1))

    elif estimator == "oracle":
        for i, agent in enumerate(agents):
            relation, _ = relation_from_agent(agent)
            rows.append(_bracket_row(i, true_m(relation, y_star[i])))

    else:
        raise NotImplementedError(estimator)

    df = pd.DataFrame(rows)

    logger.info("estimated m = %.6g over %d agents (%s)", df["m_hat"].sum(),
                n, estimator)

    return df


def compute_M(controller, zeta_star, epsilon, E, mode="euclidean"):
    """Lower bound of Gamma(zeta) - Gamma(zeta*) on the epsilon-sphere
    around zeta* (euclidean) or its edge-wise counterpart (per_edge)."""
    assert epsilon > 0
    zeta_star = np.asarray(zeta_star, dtype=float)
    base = float(np.sum(controller.potential(zeta_star)))

    if mode == "per_edge":
        up = controller.potential(zeta_star + epsilon)
        down = controller.potential(zeta_star - epsilon)
        return float(np.sum(np.minimum(up, down))) - base

    elif mode != "euclidean":
        raise NotImplementedError(mode)

    B = linalg.orth(np.asarray(E, dtype=float).T)
    r = B.shape[1]

    if r == 0:
        raise SynthesisError("the epsilon-sphere does not meet Im(E^T) "
                             "(graph without edges)")

    def fun(theta):
        nrm = np.linalg.norm(theta)
        dirn = theta / nrm
        zeta = zeta_star + epsilon * (B @ dirn)
        val = float(np.sum(controller.potential(zeta)))
        g = epsilon * (B.T @ controller.gamma(zeta))
        jac = (g - dirn * (dirn @ g)) / nrm
        return val, jac

    starts = np.vstack([np.eye(r), -np.eye(r)])
    best = np.inf

    for s in starts:
        res = minimize(fun, s, jac=True, method="BFGS")
        best = min(best, float(res.fun))

    return best - base


def uniform_gain(m_hat, M):
    if M <= 0:
        raise SynthesisError(f"M must be positive, got {M:.6g}")
    return m_hat / M


def target_outputs(E, zeta_star, y_star=None):
    """y* with E^T y* = zeta* (minimum-norm unless given)."""
    zeta_star = check_edge_vector(E, zeta_star)
    if y_star is None:
        return min_norm_potential(E, zeta_star)

    y_star = np.asarray(y_star, dtype=float)
    if np.abs(np.asarray(E).T @ y_star - zeta_star).max() > 1e-8:
        raise SynthesisError("y* does not realise the formation: "
                             "E^T y* != zeta*", field="goal.y_star")
    return y_star


def algorithm2_uniform_gain(network, zeta_star, epsilon, y_star=None,
                            estimator="algorithm1", m_mode="per_edge",
                            **kwargs):
    """Uniform gain alpha = m_hat / M for practical formation control.

    Returns
    -------
    (float, EstimateReport, np.array)
        alpha (in `m_mode`), the report and the gain vector alpha 1.

    """
    y_star = target_outputs(network.E, zeta_star, y_star)
    agents = estimate_m(network, y_star, estimator, **kwargs)
    M = {mode: compute_M(network.controller, zeta_star, epsilon, network.E,
                         mode) for mode in M_MODES}

    report = EstimateReport(agents, M, estimator, m_mode)
    alpha = report.alpha

    logger.info("uniform gain alpha = %.6g (m = %.6g, M = %.6g, %s)", alpha,
                report.m_hat, M[m_mode], m_mode)

    return alpha, report, np.full(network.num_edges, alpha)


#
# Iterative multi-gain synthesis
#
class IterationLog:
    """Append-only trace of the gain iteration."""

    def __init__(self):
        self.rows = []
        self.halted = False

    def __len__(self):
        return len(self.rows)

    def append(self, j, a, F, distance, v):
        self.rows.append({"j": j, "a": np.array(a), "F": F,
                          "distance": distance, "v": np.array(v),
                          "a_norm": float(np.linalg.norm(a))})

    @property
    def distances(self):
        return np.array([r["distance"] for r in self.rows])

    def to_frame(self):
        rows = []
        for r in self.rows:
            row = {"j": r["j"], "a_norm": r["a_norm"], "F": r["F"],
                   "epsilon_j": r["distance"]}
            row.update({f"a_{e}": v for e, v in enumerate(r["a"])})
            rows.append(row)
        return pd.DataFrame(rows)


class SteadyStateSource:
    """Steady states of a network for given gains, either from the convex
    oracle or from simulation to convergence."""

    def __init__(self, network, mode="oracle", problem=None, sim_params=None):
        if mode not in ("oracle", "simulate"):
            raise NotImplementedError(mode)

        self.network = network
        self.mode = mode
        self.problem = problem or SteadyStateProblem.from_network(network, 1.0)
        self.sim_params = dict(NETWORK_DEFAULTS, **(sim_params or {}))
        self._y = None

    def __call__(self, a):
        p = self.problem.with_gains(a)

        if self.mode == "oracle":
            y = solve_network_steady_state(p, y0=self._y)
        else:
            x0 = np.zeros(self.network.num_agents) if self._y is None \
                else self.network.stack.steady_state_x(self._y)
            if x0 is None:
                x0 = np.zeros(self.network.num_agents)
            _, conv = run_to_convergence(self.network, p.a, x0,
                                         **self.sim_params)
            if not conv.converged:
                raise SynthesisError("closed loop did not converge within "
                                     "t_max")
            y = conv.y_ss

        self._y = y

        return p, y


def algorithm3_iterate(network, zeta_star, epsilon, h=None, a0=None,
                       max_iter=None, steady_state="oracle", sim_params=None,
                       problem=None, backtrack=False, show_progress=False):
    """Gain iteration a <- a + h v until ||E^T y(a) - zeta*|| <= epsilon.

    Parameters
    ----------
    network : Network
    zeta_star : np.array
    epsilon : float
    h : float, optional
        Step size.
    a0 : float or np.array, optional
        Initial gains.
    max_iter : int, optional
        Maximum number of gain updates.
    steady_state : str, optional
        "oracle" or "simulate".
    backtrack : bool, optional
        Halve the step until the formation error decreases.
    show_progress : bool, optional

    Returns
    -------
    (np.array, IterationLog)

    """
    d = SYNTHESIS_DEFAULTS
    h = d["h"] if h is None else h
    a0 = d["a0"] if a0 is None else a0
    max_iter = d["max_iter"] if max_iter is None else max_iter

    assert h > 0
    zeta_star = check_edge_vector(network.E, zeta_star)
    a = np.broadcast_to(np.asarray(a0, dtype=float),
                        (network.num_edges,)).copy()

    if np.any(a <= 0):
        raise SynthesisError("initial gains must be positive", field="a0")

    source = SteadyStateSource(network, steady_state, problem, sim_params)
    log = IterationLog()
    diam = diameter(network.graph)
    box = None

    p, y = source(a)
    pbar = tqdm(total=max_iter, desc="gain iteration",
                disable=not show_progress)

    for j in range(max_iter + 1):
        dist = distance_to_formation(p, y, zeta_star)
        v = descent_direction(p, zeta_star, y)
        log.append(j, a, dist ** 2, dist, v)

        logger.debug("iteration %d: |a| = %.6g, distance = %.6g", j,
                     np.linalg.norm(a), dist)

        if box is None:
            box = output_box(p, zeta_star, dist, diam)
        elif y.min() < box[0] or y.max() > box[1]:
            logger.warning("steady state at iteration %d left the output "
                           "box [%.6g, %.6g]", j, *box)

        if dist <= epsilon:
            log.halted = True
            break

        if j == max_iter:
            break

        step = h
        while True:
            a_new = a + step * v
            if np.any(a_new <= 0):
                raise SynthesisError(f"step size too large: gain "
                                     f"{int(np.argmin(a_new))} driven to "
                                     f"{a_new.min():.6g} at iteration {j}")
            p_new, y_new = source(a_new)
            if not backtrack or step < 1e-8 or \
                    distance_to_formation(p_new, y_new, zeta_star) < dist:
                break
            step *= 0.5

        a, p, y = a_new, p_new, y_new
        pbar.update(1)

    pbar.close()

    if log.halted:
        logger.info("gain iteration halted after %d updates, |a| = %.6g, "
                    "distance = %.6g", len(log) - 1, np.linalg.norm(a), dist)
    else:
        logger.warning("gain iteration stopped at max_iter=%d with distance "
                       "%.6g > %.6g", max_iter, dist, epsilon)

    return a, log


def slow_ramp(network, zeta_star, epsilon, alpha_schedule=None,
              steady_state="simulate", sim_params=None, problem=None,
              show_progress=False):
    """Raise a uniform gain along `alpha_schedule` until the steady state
    meets the formation goal; only the pass/fail outcome of each run is
    used.

    Returns
    -------
    (float, list of RampStep)

    """
    schedule = np.asarray(SYNTHESIS_DEFAULTS["alpha_schedule"]
                          if alpha_schedule is None else alpha_schedule,
                          dtype=float)

    if np.any(schedule <= 0) or np.any(np.diff(schedule) <= 0):
        raise SynthesisError("alpha schedule must be positive and strictly "
                             "increasing", field="synthesis.alpha_schedule")

    zeta_star = check_edge_vector(network.E, zeta_star)
    source = SteadyStateSource(network, steady_state, problem, sim_params)
    steps = []

    for alpha in tqdm(schedule, desc="slow ramp", disable=not show_progress):
        p, y = source(np.full(network.num_edges, alpha))
        dist = distance_to_formation(p, y, zeta_star)
        steps.append(RampStep(float(alpha), dist, dist <= epsilon))

        logger.info("ramp alpha = %.6g: distance = %.6g", alpha, dist)

        if dist <= epsilon:
            return float(alpha), steps

    err = SynthesisError(f"alpha schedule exhausted: last distance "
                         f"{steps[-1].distance:.6g} > epsilon={epsilon:.6g}")
    err.steps = steps
    raise err


def integrator_reference(network, a):
    """Steady relative outputs E^T y of the same network with every agent
    replaced by an integrator."""
    twin = Network(network.graph, [integrator_agent()
                                   for _ in range(network.num_agents)],
                   network.controller)
    p = SteadyStateProblem.from_network(twin, a)
    return twin.E.T @ solve_network_steady_state(p)
