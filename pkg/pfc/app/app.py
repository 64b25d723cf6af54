# vim: set fdm=indent:
'''
Practical formation control: scenario-driven simulation and gain synthesis
for diffusively coupled networks.

USAGE:
    pfc COMMAND --scenario PATH [--out DIR] [--seed N] [options]

COMMANDS:
    simulate        closed-loop run with the scenario gains -> trajectory.csv
    experiment      three bracketing experiments per agent -> experiments.csv
    estimate-m      per-agent bounds on m_i -> estimate.csv
    synthesize      uniform gain alpha = m / M -> estimate.csv, synthesis.csv
    iterate         iterative multi-gain synthesis -> iterations.csv
    ramp            slowly increased uniform gain -> ramp.csv
    case-study      experiments, synthesis, closed loop and iteration
    verify          oracle, simulation, gradient and MEIP checks -> verify.csv

OPTIONS:
    --scenario PATH             JSON scenario file or bundled scenario name
    --out DIR                   output directory (default: ./out)
    --seed N                    override the scenario seed
    --m-mode MODE               euclidean | per-edge
    --steady-state MODE         oracle | simulate
    --dt DT, --t-max T          network simulation step / horizon
    --h H, --max-iter N         gain iteration step size / iteration cap
    --n-jobs N                  parallel experiment batches (joblib)
    --log-level LEVEL           DEBUG, INFO, WARNING, ...
    --progress                  show progress bars

Exit status is 0 when the goal (or every verification check) is met, 1 when
the run finished without meeting it, and the error's exit code otherwise
(an error.json is written to the output directory).

'''
import sys
import json
import time
import pathlib
import argparse
import logging

from collections import namedtuple

import numpy as np

from humanfriendly import format_timespan

from ..exceptions import PfcError, RelationError, SynthesisError
from ..graph import diameter
from ..relations import (SteadyStateProblem, solve_network_steady_state,
                         steady_state_flows, duality_gap, grad_F,
                         finite_difference_grad_F, descent_direction,
                         distance_to_formation, output_box)
from ..simulation import run_to_convergence
from ..systems import check_meip_control_affine
from ..synthesis import (algorithm1_experiments, algorithm2_uniform_gain,
                         algorithm3_iterate, estimate_m, slow_ramp,
                         SteadyStateSource)
from .scenario import parse_scenario
from .outputs import (write_csv, write_json, write_error, experiments_frame,
                      ramp_frame, verify_frame)

logger = logging.getLogger(__name__)

RunOptions = namedtuple("RunOptions", ["n_jobs", "show_progress"])

VERIFY_THRESHOLDS = {
    "oracle_vs_simulation": 1e-3,
    "duality_gap": 1e-6,
    "fenchel_residual": 1e-5,
    "gradient_fd": 1e-4,
    "descent_direction": 0.0,
    "boundedness": 0.0,
    "meip_certificate": 0,
}


def _experiment_kwargs(scenario):
    s = scenario.synthesis
    return {k: s[k] for k in ("beta_small", "beta_large", "far_factor",
                              "max_escalations")}


def _estimate_kwargs(scenario, opts):
    s = scenario.synthesis
    return dict(_experiment_kwargs(scenario),
                n_measurements=s["n_measurements"], rng=scenario.rng(),
                spacing=s["spacing"], sim_params=scenario.experiment,
                n_jobs=opts.n_jobs)


def _closed_loop(scenario, network, gains):
    """Simulated closed loop with `gains`; returns (trajectory, distance)."""
    traj, conv = run_to_convergence(network, gains, scenario.x0,
                                    **scenario.sim_params)
    if not conv.converged:
        return traj, np.inf
    return traj, float(np.linalg.norm(network.E.T @ conv.y_ss -
                                      scenario.zeta_star))


#
# Commands
#
def cmd_simulate(scenario, out_dir, opts):
    network = scenario.network()
    traj, dist = _closed_loop(scenario, network, scenario.alpha)

    write_csv(traj.to_frame(), out_dir, "trajectory.csv", scenario)
    logger.info("steady-state distance to formation: %.6g (epsilon=%g)",
                dist, scenario.epsilon)

    return dist <= scenario.epsilon


def cmd_experiment(scenario, out_dir, opts):
    records = algorithm1_experiments(scenario.agents, scenario.y_star,
                                     sim_params=scenario.experiment,
                                     n_jobs=opts.n_jobs,
                                     **_experiment_kwargs(scenario))
    flat = [r for recs in records for r in recs]
    write_csv(experiments_frame(flat), out_dir, "experiments.csv", scenario)

    return all(r.converged for r in flat)


def cmd_estimate_m(scenario, out_dir, opts):
    df = estimate_m(scenario.network(), scenario.y_star,
                    scenario.synthesis["estimator"],
                    **_estimate_kwargs(scenario, opts))
    write_csv(df, out_dir, "estimate.csv", scenario)

    return True


def _synthesize(scenario, out_dir, opts, network, **kwargs):
    s = scenario.synthesis
    alpha, report, gains = algorithm2_uniform_gain(
        network, scenario.zeta_star, scenario.epsilon, scenario.y_star,
        s["estimator"], s["m_mode"], **kwargs)

    write_csv(report.agents, out_dir, "estimate.csv", scenario)

    return alpha, report, gains


def _write_synthesis(scenario, out_dir, report, dist):
    df = report.to_frame()
    df["selected"] = df["m_mode"] == report.m_mode
    df["distance"] = np.where(df["selected"], dist, np.nan)
    write_csv(df, out_dir, "synthesis.csv", scenario)


def cmd_synthesize(scenario, out_dir, opts):
    network = scenario.network()
    alpha, report, gains = _synthesize(scenario, out_dir, opts, network,
                                       **_estimate_kwargs(scenario, opts))

    source = SteadyStateSource(network, scenario.synthesis["steady_state"],
                               sim_params=scenario.sim_params)
    p, y = source(gains)
    dist = distance_to_formation(p, y, scenario.zeta_star)
    _write_synthesis(scenario, out_dir, report, dist)

    logger.info("alpha = %.6g reaches distance %.6g (epsilon=%g)", alpha,
                dist, scenario.epsilon)

    return dist <= scenario.epsilon


def _iterate(scenario, network, opts):
    s = scenario.synthesis
    return algorithm3_iterate(network, scenario.zeta_star, scenario.epsilon,
                              s["h"], scenario.a0, s["max_iter"],
                              s["steady_state"], scenario.sim_params,
                              backtrack=s["backtrack"],
                              show_progress=opts.show_progress)


def cmd_iterate(scenario, out_dir, opts):
    _, log = _iterate(scenario, scenario.network(), opts)
    write_csv(log.to_frame(), out_dir, "iterations.csv", scenario)

    return log.halted


def cmd_ramp(scenario, out_dir, opts):
    s = scenario.synthesis

    try:
        alpha, steps = slow_ramp(scenario.network(), scenario.zeta_star,
                                 scenario.epsilon, s["alpha_schedule"],
                                 s["steady_state"], scenario.sim_params,
                                 show_progress=opts.show_progress)
    except SynthesisError as e:
        if hasattr(e, "steps"):
            write_csv(ramp_frame(e.steps), out_dir, "ramp.csv", scenario)
        raise

    write_csv(ramp_frame(steps), out_dir, "ramp.csv", scenario)

    return True


def cmd_case_study(scenario, out_dir, opts):
    network = scenario.network()

    records = algorithm1_experiments(scenario.agents, scenario.y_star,
                                     sim_params=scenario.experiment,
                                     n_jobs=opts.n_jobs,
                                     **_experiment_kwargs(scenario))
    write_csv(experiments_frame([r for recs in records for r in recs]),
              out_dir, "experiments.csv", scenario)

    alpha, report, gains = _synthesize(scenario, out_dir, opts, network,
                                       base_records=records,
                                       **_estimate_kwargs(scenario, opts))

    traj, dist = _closed_loop(scenario, network, gains)
    write_csv(traj.to_frame(), out_dir, "trajectory.csv", scenario)
    _write_synthesis(scenario, out_dir, report, dist)

    logger.info("uniform gain %.6g: closed-loop distance %.6g", alpha, dist)

    _, log = _iterate(scenario, network, opts)
    write_csv(log.to_frame(), out_dir, "iterations.csv", scenario)

    return dist <= scenario.epsilon


def _fenchel_check(problem):
    worst = 0.0

    for potential in problem.agents.potentials:
        relation = potential.relation
        if relation.is_zero():
            continue
        ys = potential.y0 + np.linspace(-1.0, 1.0, 5)
        lo, hi = relation.output_range
        ys = ys[(ys > lo) & (ys < hi)]
        for u in relation.k_inv(ys):
            worst = max(worst, abs(potential.fenchel_residual(float(u))))

    return worst


def cmd_verify(scenario, out_dir, opts):
    network = scenario.network()
    zeta_star = scenario.zeta_star
    a = scenario.alpha
    checks = []

    def add(name, value, passed=None):
        thresh = VERIFY_THRESHOLDS[name]
        if passed is None:
            passed = bool(value <= thresh)
        checks.append((name, float(value), thresh, passed))
        logger.info("check %s: %.3e (threshold %g) %s", name, value, thresh,
                    "passed" if passed else "FAILED")

    p = SteadyStateProblem.from_network(network, a)
    y = solve_network_steady_state(p)

    _, conv = run_to_convergence(network, a, scenario.x0,
                                 **scenario.sim_params)
    if conv.converged:
        y_sim = conv.y_ss
        if p.agents.is_zero():
            y_sim = y_sim - y_sim.mean()
        add("oracle_vs_simulation", np.abs(y_sim - y).max())
    else:
        add("oracle_vs_simulation", np.inf)

    flows = steady_state_flows(p, y)
    add("duality_gap", abs(duality_gap(p, y, p.E.T @ y, flows.u, flows.mu)))
    add("fenchel_residual", _fenchel_check(p))

    try:
        g = grad_F(p, zeta_star, y)
        g_fd = finite_difference_grad_F(p, zeta_star, y)
        scale = max(np.linalg.norm(g_fd), 1e-12)
        add("gradient_fd", np.linalg.norm(g - g_fd) / scale)
        v = descent_direction(p, zeta_star, y)
        add("descent_direction", float(v @ g))
    except RelationError as e:
        logging.error(e)
        add("gradient_fd", np.nan, passed=False)
        add("descent_direction", np.nan, passed=False)

    dist = distance_to_formation(p, y, zeta_star)
    lo, hi = output_box(p, zeta_star, dist, diameter(network.graph))
    add("boundedness", max(0.0, lo - y.min(), y.max() - hi))

    failed = 0
    for i, agent in enumerate(network.agents):
        verdict = check_meip_control_affine(agent)
        if not verdict.passed:
            logger.warning("agent %d not certified MEIP: %s", i,
                           verdict.reason)
            failed += 1
    add("meip_certificate", failed)

    write_csv(verify_frame(checks), out_dir, "verify.csv", scenario)

    return all(c[-1] for c in checks)


COMMANDS = {
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "estimate-m": cmd_estimate_m,
    "synthesize": cmd_synthesize,
    "iterate": cmd_iterate,
    "ramp": cmd_ramp,
    "case-study": cmd_case_study,
    "verify": cmd_verify,
}


def run_subcommand(cmd, scenario, out_dir, n_jobs=1, show_progress=False):
    """Run one command on a parsed scenario, writing its outputs to
    `out_dir`.

    Returns
    -------
    int
        Process exit status.

    """
    if cmd not in COMMANDS:
        raise NotImplementedError(cmd)

    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    opts = RunOptions(n_jobs, show_progress)

    t_start = time.time()

    try:
        write_json(scenario.effective_config(), out_dir,
                   "effective_config.json")
        passed = COMMANDS[cmd](scenario, out_dir, opts)
    except PfcError as e:
        payload = write_error(out_dir, e, cmd, scenario.seed)
        logging.error(e)
        print(json.dumps(payload), file=sys.stderr)
        return e.exit_code

    logger.info("%s completed in %s", cmd,
                format_timespan(time.time() - t_start))

    return 0 if passed else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pfc", description="Practical formation control toolkit")

    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--scenario", type=str, default=None,
        help="JSON scenario file or bundled scenario name")
    parser.add_argument("--out", type=str, default="out",
        help="output directory")
    parser.add_argument("--seed", type=int, default=None,
        help="override the scenario seed")
    parser.add_argument("--m-mode", choices=("euclidean", "per-edge"),
        default=None)
    parser.add_argument("--steady-state", choices=("oracle", "simulate"),
        default=None)
    parser.add_argument("--estimator", type=str, default=None)
    parser.add_argument("--n-measurements", type=int, default=None)
    parser.add_argument("--dt", type=float, default=None)
    parser.add_argument("--t-max", type=float, default=None)
    parser.add_argument("--h", type=float, default=None)
    parser.add_argument("--max-iter", type=int, default=None)
    parser.add_argument("--n-jobs", type=int, default=1)
    parser.add_argument("--log-level", type=str, default="INFO")
    parser.add_argument("--progress", action="store_true")

    return parser


def overrides_from_args(args):
    m_mode = args.m_mode.replace("-", "_") if args.m_mode else None

    return {
        "seed": args.seed,
        "synthesis.m_mode": m_mode,
        "synthesis.steady_state": args.steady_state,
        "synthesis.estimator": args.estimator,
        "synthesis.n_measurements": args.n_measurements,
        "synthesis.h": args.h,
        "synthesis.max_iter": args.max_iter,
        "sim.dt": args.dt,
        "sim.t_max": args.t_max,
    }


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    scenario_path = args.scenario
    if scenario_path is None:
        if args.command != "case-study":
            parser.error("--scenario is required")
        scenario_path = "case_study"

    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        scenario = parse_scenario(scenario_path, overrides_from_args(args))
    except PfcError as e:
        payload = write_error(out_dir, e, args.command, args.seed)
        logging.error(e)
        print(json.dumps(payload), file=sys.stderr)
        return e.exit_code

    return run_subcommand(args.command, scenario, out_dir, args.n_jobs,
                          args.progress)


if __name__ == "__main__":
    sys.exit(main())
