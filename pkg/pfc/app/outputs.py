"""CSV / JSON emission. Every CSV starts with a comment row carrying the
seed, the generator and the effective config hash of the run."""
import json
import logging
import pathlib

import numpy as np
import pandas as pd

from .scenario import RNG_NAME

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def header_line(scenario):
    return f"# pfc seed={scenario.seed} rng={RNG_NAME} " \
           f"config_hash={scenario.config_hash()}\n"


def write_csv(df, out_dir, name, scenario):
    path = pathlib.Path(out_dir) / name

    with open(path, "w", newline="") as f:
        f.write(header_line(scenario))
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT)

    logger.info("wrote %s (%d rows)", path, len(df))

    return path


def write_json(obj, out_dir, name):
    path = pathlib.Path(out_dir) / name

    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")

    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_error(out_dir, err, command, seed):
    """Machine-readable error report; returns the written dictionary."""
    payload = dict(err.to_dict(), command=command, seed=seed)
    write_json(payload, out_dir, "error.json")
    return payload


#
# Frames
#
def experiments_frame(records):
    return pd.DataFrame([{"agent": r.agent, "beta": r.beta,
                          "y_ref": r.y_ref, "u_ss": r.u_ss, "y_ss": r.y_ss,
                          "converged": r.converged, "t_end": r.t_end}
                         for r in records])


def ramp_frame(steps):
    return pd.DataFrame([s._asdict() for s in steps],
                        columns=["alpha", "distance", "passed"])


def verify_frame(checks):
    return pd.DataFrame(checks,
                        columns=["check", "value", "threshold", "passed"])
