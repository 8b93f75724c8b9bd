"""Batch command line front end.

Settings come from an optional flat ``key = value`` file (``--config``) and
``--key value`` flags; flags win. Exit codes: 0 ok, 1 usage/config, 2 data,
3 numerical failure. Errors are reported as one JSON object on stderr.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import io
from .errors import ConfigError, FMVMAError, InvalidArgumentError
from .pipeline import METHODS, build_candidates, weigh
from .simulation import SimulationConfig, evaluate_splits, run_replications

OUTPUT_ENV = "FMVMA_OUTPUT_DIR"
COMMANDS = ("screen", "fit", "average", "predict", "simulate", "evaluate")


def _choice(*options):
    def parse(text):
        for o in options:
            if text.lower() == o.lower():
                return o
        raise ValueError(f"expected one of {', '.join(options)}")
    return parse


def _opt_int(text):
    return None if str(text).lower() in ("", "none", "auto") else int(text)


def _methods(text):
    items = [m.strip() for m in str(text).split(",") if m.strip()]
    bad = [m for m in items if m not in METHODS]
    if bad or not items:
        raise ValueError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    return tuple(items)


_SIM = SimulationConfig()

# key -> (parser, default)
KEYS = {
    "input": (str, None),
    "new_data": (str, None),
    "transform": (_choice("log", "identity"), "log"),
    "d_n": (int, 100),
    "k": (int, 10),
    "max_slices": (_opt_int, None),
    "screening": (_choice("FMV", "SIS", "FKS"), "FMV"),
    "constraint": (_choice("box", "simplex", "both"), "box"),
    "mallows.tol": (float, 1e-10),
    "mallows.max_sweeps": (int, 100_000),
    "output_dir": (str, None),
    "seed": (int, 0),
    "threads": (int, None),
    "n": (int, _SIM.n),
    "p": (int, _SIM.p),
    "s": (int, _SIM.s),
    "stride": (int, _SIM.stride),
    "rho": (float, _SIM.rho),
    "sigma_eps": (float, _SIM.sigma_eps),
    "coef_sd": (float, _SIM.coef_sd),
    "censor_l": (float, _SIM.censor_l),
    "replications": (int, _SIM.replications),
    "methods": (_methods, tuple(METHODS)),
    "train_size": (int, 50),
    "splits": (int, 200),
}
ALIASES = {"K": "k", "output-dir": "output_dir", "new-data": "new_data"}


def _canonical(key):
    key = key.strip()
    return ALIASES.get(key, key)


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}",
                          operation="read_config_file", datum=str(path)) from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'",
                              operation="read_config_file", datum=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        out[_canonical(key)] = value
    return out


def resolve_config(file_values, flag_values):
    """Merge file and flag settings over the defaults and parse every value."""
    raw = dict(file_values)
    raw.update({k: v for k, v in flag_values.items() if v is not None})
    unknown = sorted(k for k in raw if k not in KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration key {unknown[0]!r}",
                          operation="resolve_config", datum=unknown[0])
    cfg = {}
    for key, (parse, default) in KEYS.items():
        if key in raw:
            value = raw[key]
            try:
                cfg[key] = parse(value) if isinstance(value, str) else value
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})",
                                  operation="resolve_config", datum=key) from None
        else:
            cfg[key] = default
    if cfg["output_dir"] is None:
        cfg["output_dir"] = os.environ.get(OUTPUT_ENV, "fmvma-out")
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message, operation="parse_args")


def build_parser():
    parser = _Parser(prog="fmvma", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key = value settings file")
    parser.add_argument("-v", "--verbose", action="store_true")
    for key in KEYS:
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        parser.add_argument(*flags, dest=key, default=None, metavar="VALUE")
    parser.add_argument("--K", dest="k", default=None, help=argparse.SUPPRESS)
    return parser


# -- commands ---------------------------------------------------------------

def _require(cfg, key, command):
    if not cfg[key]:
        raise ConfigError(f"command {command!r} needs '{key}'",
                          operation=command, datum=key)
    return cfg[key]


def _load(cfg, command):
    return io.read_survival_csv(_require(cfg, "input", command), cfg["transform"])


def _candidates(cfg, data):
    return build_candidates(data, cfg["screening"], cfg["d_n"], cfg["k"],
                            cfg["max_slices"], threads=cfg["threads"])


def _out(cfg, name):
    return os.path.join(cfg["output_dir"], name)


def cmd_screen(cfg):
    data, _ = _load(cfg, "screen")
    from .pipeline import SCREENERS
    if cfg["screening"] == "SIS":
        res = SCREENERS["SIS"](data)
    else:
        res = SCREENERS[cfg["screening"]](data, max_slices=cfg["max_slices"],
                                          threads=cfg["threads"])
    rows = ((rank, int(j), res.utilities[j], res.method)
            for rank, j in enumerate(res.order, start=1))
    return {_out(cfg, "ranking.csv"):
            io.csv_text(["rank", "covariate_index", "utility", "method"], rows)}


def cmd_fit(cfg):
    data, _ = _load(cfg, "fit")
    cands = _candidates(cfg, data)
    rows = ((f.model_id, j, b) for f in cands.fits for j, b in zip(f.index_set, f.beta))
    return {_out(cfg, "coefficients.csv"):
            io.csv_text(["model_id", "covariate_index", "coefficient"], rows)}


def _constraints(cfg):
    return ("box", "simplex") if cfg["constraint"] == "both" else (cfg["constraint"],)


RULE = {"box": "MCV2", "simplex": "MCV1"}


def cmd_average(cfg):
    data, _ = _load(cfg, "average")
    cands = _candidates(cfg, data)
    files, summary = {}, {}
    for c in _constraints(cfg):
        avg = weigh(cands, data, RULE[c], cfg["mallows.tol"], cfg["mallows.max_sweeps"])
        sol = avg.solution
        rows = ((f.model_id, w, sol.criterion_value) for f, w in zip(cands.fits, sol.omega))
        files[_out(cfg, f"weights_{c}.csv")] = io.csv_text(
            ["model_id", "omega", "criterion_value"], rows)
        summary[c] = {"criterion_value": sol.criterion_value,
                      "kkt_residual": sol.kkt_residual,
                      "omega": sol.omega}
    files[_out(cfg, "average.json")] = io.json_text(summary)
    return files


def cmd_predict(cfg):
    data, names = _load(cfg, "predict")
    if cfg["constraint"] == "both":
        raise ConfigError("predict needs a single constraint (box or simplex)",
                          operation="predict", datum="constraint")
    x_new = io.read_covariates(_require(cfg, "new_data", "predict"), names)
    cands = _candidates(cfg, data)
    avg = weigh(cands, data, RULE[cfg["constraint"]], cfg["mallows.tol"],
                cfg["mallows.max_sweeps"])
    pred = avg.predict(x_new)
    rows = ((i, v) for i, v in enumerate(pred, start=1))
    return {_out(cfg, "predictions.csv"): io.csv_text(["row", "prediction"], rows)}


def _sim_config(cfg):
    keys = ("n", "p", "s", "stride", "rho", "sigma_eps", "coef_sd", "censor_l",
            "d_n", "k", "seed", "replications", "max_slices")
    return SimulationConfig(**{k: cfg[k] for k in keys})


def cmd_simulate(cfg):
    sim = _sim_config(cfg)
    summary = run_replications(sim, cfg["methods"], threads=cfg["threads"],
                               tol=cfg["mallows.tol"], max_sweeps=cfg["mallows.max_sweeps"])
    rows = ((m, r, v) for m, r, v in summary.rows())
    return {
        _out(cfg, "simulation.csv"): io.csv_text(["method", "replication", "metric"], rows),
        _out(cfg, "simulation.json"): io.json_text(summary.to_json()),
    }


def cmd_evaluate(cfg):
    data, _ = _load(cfg, "evaluate")
    values, failures = evaluate_splits(
        data, cfg["methods"], cfg["train_size"], cfg["splits"], cfg["seed"],
        cfg["d_n"], cfg["k"], cfg["max_slices"], cfg["mallows.tol"],
        cfg["mallows.max_sweeps"])
    rows = ((m, b + 1, v) for m in values for b, v in enumerate(values[m]))
    quant = {}
    for m, v in values.items():
        ok = v[~np.isnan(v)]
        qs = np.quantile(ok, [0, .25, .5, .75, 1]).tolist() if ok.size else [None] * 5
        quant[m] = dict(zip(("min", "q1", "median", "q3", "max"), qs),
                        completed=int(ok.size), failed=len(failures.get(m, [])))
    report = {
        "quantiles": quant,
        "failures": {m: [{"split": b + 1, "reason": why} for b, why in f]
                     for m, f in failures.items()},
        "config": {k: cfg[k] for k in ("train_size", "splits", "seed", "d_n", "k",
                                        "max_slices", "transform")},
        "n": data.n, "p": data.p,
    }
    return {
        _out(cfg, "evaluation.csv"): io.csv_text(["method", "split", "waspe"], rows),
        _out(cfg, "evaluation.json"): io.json_text(report),
    }


HANDLERS = {
    "screen": cmd_screen, "fit": cmd_fit, "average": cmd_average,
    "predict": cmd_predict, "simulate": cmd_simulate, "evaluate": cmd_evaluate,
}


def run_command(cfg, command):
    """Run ``command`` with a resolved config; returns the written paths."""
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}", operation="run_command",
                          datum=command)
    files = HANDLERS[command](cfg)
    io.write_artifacts(files)
    return sorted(files)


def _report(err, command):
    d = err.to_dict() if isinstance(err, FMVMAError) else {
        "error": type(err).__name__, "module": "fmvma", "operation": None,
        "datum": None, "message": str(err)}
    d["command"] = command
    print(json.dumps(d, default=str), file=sys.stderr)


def main(argv=None):
    command = None
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        try:
            args = build_parser().parse_args(argv)
        except ConfigError as err:
            err.datum = " ".join(argv)
            raise
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        file_values = read_config_file(args.config) if args.config else {}
        flags = {k: getattr(args, k) for k in KEYS}
        cfg = resolve_config(file_values, flags)
        for path in run_command(cfg, command):
            print(path)
        return 0
    except FMVMAError as err:
        _report(err, command)
        return err.exit_code
    except (InvalidArgumentError, ValueError) as err:
        _report(err, command)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as err:
        _report(err, command)
        return 3


if __name__ == "__main__":
    sys.exit(main())
