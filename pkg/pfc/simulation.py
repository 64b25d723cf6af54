import logging

from collections import namedtuple

import numpy as np
import pandas as pd

from joblib import Parallel, delayed
from toolz.itertoolz import partition_all

from .exceptions import ConvergenceError, SynthesisError
from .graph import laplacian_spectrum
from .systems import AgentStack

logger = logging.getLogger(__name__)

# closed-loop experiment defaults
EXPERIMENT_DEFAULTS = {
    "dt": 1e-2,
    "t_max": 1000.0,
    "window": 1.0,
    "tol": 1e-6,
}

# network run defaults
NETWORK_DEFAULTS = {
    "dt": 1e-3,
    "t_max": 200.0,
    "window": 1.0,
    "tol": 1e-4,
    "stride": 10,
}

NetworkState = namedtuple("NetworkState", ["t", "x", "eta"])

ExperimentRecord = namedtuple("ExperimentRecord",
    ["agent", "beta", "y_ref", "u_ss", "y_ss", "converged", "t_end"])

Convergence = namedtuple("Convergence", ["converged", "y_ss", "u_ss"])


def rk4_step(fn, t, x, dt):
    """One classical 4th order Runge-Kutta step of x' = fn(t, x)."""
    K1 = dt * fn(t, x)
    K2 = dt * fn(t + dt / 2, x + K1 / 2)
    K3 = dt * fn(t + dt / 2, x + K2 / 2)
    K4 = dt * fn(t + dt, x + K3)

    return x + (K1 + 2 * K2 + 2 * K3 + K4) / 6


class Trajectory:
    """Sampled closed-loop trajectory of a network. Derived signals (y, zeta,
    mu, u, xdot) are recomputed from the recorded states."""

    def __init__(self, t, x, y, u, zeta, mu, xdot, eta=None):
        self.t = np.asarray(t)
        self.x = np.asarray(x)
        self.y = np.asarray(y)
        self.u = np.asarray(u)
        self.zeta = np.asarray(zeta)
        self.mu = np.asarray(mu)
        self.xdot = np.asarray(xdot)
        self.eta = np.zeros((len(self.t), 0)) if eta is None \
            else np.asarray(eta)

    def __len__(self):
        return len(self.t)

    @property
    def final_state(self):
        return NetworkState(float(self.t[-1]), self.x[-1].copy(),
                            self.eta[-1].copy())

    @classmethod
    def concat(cls, parts):
        """Join consecutive trajectories, dropping each part's first sample
        (the previous part's last)."""
        parts = list(parts)
        head, tail = parts[0], parts[1:]

        def cat(name):
            return np.concatenate([getattr(head, name)] +
                                  [getattr(p, name)[1:] for p in tail])

        return cls(*(cat(k) for k in
                     ("t", "x", "y", "u", "zeta", "mu", "xdot", "eta")))

    def to_frame(self):
        """
        Returns
        -------
        pd.DataFrame
            One row per sample: t, x_i, y_i, u_i, zeta_e, mu_e (eta_e).

        """
        cols = {"t": self.t}

        for name in ("x", "y", "u", "zeta", "mu", "eta"):
            arr = getattr(self, name)
            for k in range(arr.shape[1]):
                cols[f"{name}_{k}"] = arr[:, k]

        return pd.DataFrame(cols)


#
# Network integration
#
def _closed_loop(network, a):
    E = network.E
    stack = network.stack
    ctrl = network.controller
    n = network.num_agents

    def signals(z):
        x, eta = z[:n], z[n:]
        y = stack.output(x)
        zeta = E.T @ y
        mu = ctrl.output(eta, zeta) if ctrl.is_dynamic else ctrl.gamma(zeta)
        u = -E @ (a * mu)
        return x, eta, y, zeta, mu, u

    def fn(t, z):
        x, eta, y, zeta, mu, u = signals(z)
        xdot = stack.dynamics(x, u)
        if ctrl.is_dynamic:
            return np.concatenate([xdot, ctrl.state_derivative(eta, zeta)])
        return xdot

    return fn, signals


def integrate_network(network, a, x0, t_max, dt, stride=10, eta0=None,
                      t0=0.0):
    """Fixed-step RK4 simulation of the closed loop u = -E diag(a) mu,
    zeta = E^T y.

    Parameters
    ----------
    network : Network
    a : float or np.array
        Positive edge gains.
    x0 : np.array
        Initial agent states.
    t_max : float
        Duration of the run.
    dt : float
    stride : int, optional
        Record every `stride` steps (the first and last steps are always
        recorded).
    eta0 : np.array, optional
        Initial controller states of a dynamic controller.
    t0 : float, optional

    Returns
    -------
    Trajectory

    """
    assert dt > 0 and stride >= 1

    m = network.num_edges
    a = np.broadcast_to(np.asarray(a, dtype=float), (m,))
    assert np.all(a > 0), "edge gains must be positive"

    x0 = np.asarray(x0, dtype=float)
    assert x0.shape == (network.num_agents,)

    if network.controller.is_dynamic:
        eta0 = np.zeros(m) if eta0 is None else np.asarray(eta0, dtype=float)
        z = np.concatenate([x0, eta0])
    else:
        z = x0.copy()

    fn, signals = _closed_loop(network, a)
    steps = int(round(t_max / dt))

    records = []

    def record(t, z):
        x, eta, y, zeta, mu, u = signals(z)
        xdot = fn(t, z)[:network.num_agents]
        records.append((t, x, y, u, zeta, mu, xdot, eta))

    record(t0, z)

    for k in range(1, steps + 1):
        t = t0 + (k - 1) * dt
        z = rk4_step(fn, t, z, dt)

        if not np.all(np.isfinite(z)):
            raise ConvergenceError(f"blow-up at t={t + dt:.6g}")

        if k % stride == 0 or k == steps:
            record(t0 + k * dt, z)

    cols = list(zip(*records))

    return Trajectory(*(np.array(c) for c in cols))


def detect_convergence(traj, window, tol):
    """Converged iff the outputs vary by less than `tol` over the trailing
    `window` and ||x'||_inf < tol at the last sample.

    Returns
    -------
    Convergence
        Trailing-window averages of y and u when converged.

    """
    t = traj.t

    if len(t) < 2 or t[-1] - t[0] < window - 1e-9:
        return Convergence(False, None, None)

    tail = t >= t[-1] - window - 1e-12
    y = traj.y[tail]
    variation = (y.max(axis=0) - y.min(axis=0)).max() if y.size else 0.0
    xdot = np.abs(traj.xdot[-1]).max() if traj.xdot.size else 0.0

    if not (variation < tol and xdot < tol):
        return Convergence(False, None, None)

    return Convergence(True, y.mean(axis=0), traj.u[tail].mean(axis=0))


def run_to_convergence(network, a, x0, dt=NETWORK_DEFAULTS["dt"],
                       t_max=NETWORK_DEFAULTS["t_max"],
                       window=NETWORK_DEFAULTS["window"],
                       tol=NETWORK_DEFAULTS["tol"],
                       stride=NETWORK_DEFAULTS["stride"], eta0=None):
    """Integrate window by window until the trailing window is converged or
    `t_max` is reached.

    Returns
    -------
    (Trajectory, Convergence)

    """
    parts = []
    state = NetworkState(0.0, np.asarray(x0, dtype=float), eta0)
    conv = Convergence(False, None, None)

    while state.t < t_max - 1e-12:
        span = min(window, t_max - state.t)
        part = integrate_network(network, a, state.x, span, dt, stride,
                                 state.eta, state.t)
        parts.append(part)
        state = part.final_state

        conv = detect_convergence(part, window, tol)
        if conv.converged:
            break

    traj = Trajectory.concat(parts)

    if conv.converged:
        logger.debug("network converged at t=%.3f", traj.t[-1])
    else:
        logger.warning("network did not converge within t_max=%g", t_max)

    return traj, conv


def integrator_oscillation(E, x0, eta0, t, a=1.0):
    """Closed-form relative outputs zeta(t) = E^T x(t) of integrator agents
    coupled by integrator controllers, x'' = -E diag(a) E^T x.

    Returns
    -------
    np.array
        Shape (len(t), num_edges).

    """
    E = np.asarray(E, dtype=float)
    a = np.broadcast_to(np.asarray(a, dtype=float), (E.shape[1],))
    t = np.asarray(t, dtype=float)

    lam, V = laplacian_spectrum(E, a)
    lam = np.clip(lam, 0.0, None)

    c = V.T @ np.asarray(x0, dtype=float)
    d = V.T @ (-E @ (a * np.asarray(eta0, dtype=float)))
    w = np.sqrt(lam)

    live = w > 1e-9
    coef = np.where(live[None, :],
                    c * np.cos(np.outer(t, w)) +
                    d / np.where(live, w, 1.0) * np.sin(np.outer(t, w)),
                    c + np.outer(t, d))

    return (coef @ V.T) @ E


#
# Closed-loop experiments
#
def _run_experiment_batch(agents, betas, y_refs, x0, dt, t_max, window, tol):
    stack = AgentStack(agents)
    n = len(agents)

    betas = np.asarray(betas, dtype=float)
    y_refs = np.asarray(y_refs, dtype=float)
    x = np.asarray(x0, dtype=float).copy()

    def fn(t, x):
        y = stack.output(x)
        return stack.dynamics(x, -betas * (y - y_refs))

    steps = max(1, int(round(window / dt)))
    done = np.zeros(n, dtype=bool)
    y_ss = np.full(n, np.nan)
    t_end = np.full(n, np.nan)
    t = 0.0

    with np.errstate(all="ignore"):
        while t < t_max - 1e-12 and not done.all():
            y = stack.output(x)
            y_min, y_max, y_sum = y.copy(), y.copy(), y.copy()

            for _ in range(steps):
                x = rk4_step(fn, t, x, dt)
                t += dt
                y = stack.output(x)
                y_min = np.fmin(y_min, y)
                y_max = np.fmax(y_max, y)
                y_sum += y

            xdot = np.abs(fn(t, x))
            ok = ~done & (y_max - y_min < tol) & (xdot < tol)

            y_ss[ok] = y_sum[ok] / (steps + 1)
            t_end[ok] = t
            done |= ok

        left = ~done
        y_ss[left] = stack.output(x)[left]
        t_end[left] = t

    u_ss = -betas * (y_ss - y_refs)

    return [ExperimentRecord(None, float(betas[i]), float(y_refs[i]),
                             float(u_ss[i]), float(y_ss[i]), bool(done[i]),
                             float(t_end[i]))
            for i in range(n)]


def run_experiments(agents, betas, y_refs, x0=None,
                    dt=EXPERIMENT_DEFAULTS["dt"],
                    t_max=EXPERIMENT_DEFAULTS["t_max"],
                    window=EXPERIMENT_DEFAULTS["window"],
                    tol=EXPERIMENT_DEFAULTS["tol"],
                    n_jobs=1, chunksize=None, agent_ids=None):
    """Run one closed-loop experiment u = -beta (y - y_ref) per agent. All
    experiments are integrated together; each record is frozen at its
    agent's first converged window.

    Parameters
    ----------
    agents : list
    betas, y_refs : array-like
        One feedback gain / reference per agent.
    x0 : array-like, optional
        Initial states (zeros by default).
    n_jobs : int, optional
        joblib workers; batches of `chunksize` agents run in parallel.
    agent_ids : list of int, optional
        Ids written to the records (positions by default).

    Returns
    -------
    list of ExperimentRecord

    """
    agents = list(agents)
    n = len(agents)

    betas = np.broadcast_to(np.asarray(betas, dtype=float), (n,))
    y_refs = np.broadcast_to(np.asarray(y_refs, dtype=float), (n,))
    x0 = np.zeros(n) if x0 is None else \
        np.broadcast_to(np.asarray(x0, dtype=float), (n,))
    agent_ids = list(range(n)) if agent_ids is None else list(agent_ids)

    if np.any(betas <= 0):
        raise SynthesisError("experiment feedback gains must be positive")

    if chunksize is None:
        chunksize = n if n_jobs == 1 else max(1, int(np.ceil(n / 8)))

    chunks = list(partition_all(chunksize, range(n)))

    def job(idx):
        idx = list(idx)
        return _run_experiment_batch([agents[i] for i in idx], betas[idx],
                                     y_refs[idx], x0[idx], dt, t_max, window,
                                     tol)

    if n_jobs == 1 or len(chunks) == 1:
        results = [job(idx) for idx in chunks]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(job)(idx) for idx in chunks)

    records = [r._replace(agent=agent_ids[i])
               for i, r in zip(range(n), (r for rs in results for r in rs))]

    failed = sum(not r.converged for r in records)
    if failed:
        logger.warning("%d of %d experiments did not converge within "
                       "t_max=%g", failed, n, t_max)

    return records


def closed_loop_experiment(agent, beta, y_ref, x0=0.0, **sim_params):
    """Single-agent closed-loop experiment u = -beta (y - y_ref)."""
    return run_experiments([agent], [beta], [y_ref], [x0], **sim_params)[0]
