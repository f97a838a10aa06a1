"""Command-line pipeline: config file in, JSON/CSV results out.

Config schema (JSON):

    {
      "flow":        {"name": "shear|cellular|abc", "params": {...}},
      "integration": {"step": 1e-3, "T": 200.0, "W": 20.0,
                      "qr_every": 10, "merge_tol": 0.05,
                      "burn_in": null, "window_factor": null},
      "ensemble":    {"size": 64, "seed": 20260822},
      "tasks":       [{"kind": "spectrum_B"},
                      {"kind": "spectrum_X"},
                      {"kind": "spectrum_BXm", "m": [1, 2]},
                      {"kind": "mane", "lambda": [0.0], "N": 10,
                       "ratio_threshold": 0.1, "grid_size": 8},
                      {"kind": "euler_ess", "m": 1, "t": 1.0}],
      "output_dir":  "."
    }

Every section except "flow" and "tasks" is optional; defaults are
resolved and echoed into the outputs.  Repeated runs with the same
config and seed write byte-identical files: reductions are ordered,
floats serialize via repr, and nothing records wall time or thread
count (--threads only changes how trajectory batches are sliced).

Exit codes: 0 success, 2 config validation, 3 integration blow-up,
4 conditioning failure.  Failures print a machine-readable error JSON
to stdout and, when the output directory is known, write error.json.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .cocycle import amplitude_cocycle, product, restricted, scalar_stretch
from .errors import ConditioningError, InputError, IntegrationError
from .flows import FLOW_CATALOG, make_flow
from .spectrum import (_window_plan, algebraic_rate_floor, build_ensemble,
                       connectedness_threshold, essential_spectrum_annulus,
                       mane_search_bilateral, sacker_sell_estimate)

_CSV_HEADER = "seed,channel,window_start,rate"
# per-channel window cap in CSV output; longer series are strided
_CSV_MAX_WINDOWS = 2000

_INTEGRATION_DEFAULTS = {
    "step": 1e-3, "T": 200.0, "W": 20.0, "qr_every": 10, "merge_tol": 0.05,
    "burn_in": None, "window_factor": None,
}
_ENSEMBLE_DEFAULTS = {"size": 64, "seed": 20260822}
_TASK_KINDS = ("spectrum_B", "spectrum_X", "spectrum_BXm", "mane",
               "euler_ess")


class ConfigError(Exception):
    """Validation failure tied to one config field."""

    def __init__(self, field, message):
        super().__init__(message)
        self.field = field


def _num(cfg, path, key, default=None, required=False, integer=False):
    field = f"{path}.{key}" if path else key
    if key not in cfg or cfg[key] is None:
        if required:
            raise ConfigError(field, "required field is missing")
        return default
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(field, f"expected a number, got {v!r}")
    if integer:
        if int(v) != v:
            raise ConfigError(field, f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _check_keys(d, allowed, path):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k,
                              "unknown config key")


def _validate_task(i, task):
    path = f"tasks[{i}]"
    if not isinstance(task, dict):
        raise ConfigError(path, "task must be an object")
    kind = task.get("kind")
    if kind not in _TASK_KINDS:
        raise ConfigError(f"{path}.kind",
                          f"unknown task kind {kind!r}; one of {_TASK_KINDS}")
    out = {"kind": kind}
    if kind in ("spectrum_B", "spectrum_X"):
        _check_keys(task, ("kind",), path)
    elif kind == "spectrum_BXm":
        _check_keys(task, ("kind", "m"), path)
        ms = task.get("m")
        if not isinstance(ms, list) or not ms:
            raise ConfigError(f"{path}.m", "expected a non-empty list")
        vals = []
        for j, v in enumerate(ms):
            if isinstance(v, bool) or not isinstance(v, (int, float)) \
                    or not math.isfinite(v):
                raise ConfigError(f"{path}.m[{j}]", f"expected a finite "
                                  f"number, got {v!r}")
            vals.append(float(v))
        out["m"] = vals
    elif kind == "mane":
        _check_keys(task, ("kind", "lambda", "N", "ratio_threshold",
                           "grid_size"), path)
        lams = task.get("lambda")
        if not isinstance(lams, list) or not lams:
            raise ConfigError(f"{path}.lambda", "expected a non-empty list")
        vals = []
        for j, v in enumerate(lams):
            if isinstance(v, bool) or not isinstance(v, (int, float)) \
                    or not math.isfinite(v):
                raise ConfigError(f"{path}.lambda[{j}]", f"expected a finite "
                                  f"number, got {v!r}")
            vals.append(float(v))
        out["lambda"] = vals
        out["N"] = _num(task, path, "N", required=True, integer=True)
        if out["N"] < 4:
            raise ConfigError(f"{path}.N", "horizon N must be at least 4")
        out["ratio_threshold"] = _num(task, path, "ratio_threshold",
                                      default=0.1)
        if not (0.0 < out["ratio_threshold"] <= 1.0):
            raise ConfigError(f"{path}.ratio_threshold",
                              "must lie in (0, 1]")
        out["grid_size"] = _num(task, path, "grid_size", default=8,
                                integer=True)
        if out["grid_size"] < 1:
            raise ConfigError(f"{path}.grid_size", "must be positive")
    elif kind == "euler_ess":
        _check_keys(task, ("kind", "m", "t"), path)
        out["m"] = _num(task, path, "m", required=True)
        if out["m"] == 0.0 or not math.isfinite(out["m"]):
            raise ConfigError(f"{path}.m",
                              "exponent m must be nonzero (the essential-"
                              "spectrum identity is claimed for m != 0)")
        out["t"] = _num(task, path, "t", required=True)
        if out["t"] <= 0.0 or not math.isfinite(out["t"]):
            raise ConfigError(f"{path}.t", "time t must be positive")
    return out


def validate_config(raw):
    """Resolve defaults and check every invariant; returns the
    normalized effective config.  Raises ConfigError naming the field."""
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be a JSON object")
    _check_keys(raw, ("flow", "integration", "ensemble", "tasks",
                      "output_dir"), "")

    flow_raw = raw.get("flow")
    if not isinstance(flow_raw, dict):
        raise ConfigError("flow", "required section is missing")
    _check_keys(flow_raw, ("name", "params"), "flow")
    name = flow_raw.get("name")
    if name not in FLOW_CATALOG:
        raise ConfigError(
            "flow.name", f"unknown flow {name!r}; catalog: "
            f"{sorted(FLOW_CATALOG)}")
    params = flow_raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("flow.params", "expected an object")
    try:
        make_flow(name, **params)
    except TypeError as e:
        raise ConfigError("flow.params", str(e)) from None
    except InputError as e:
        raise ConfigError("flow.params", str(e)) from None

    integ_raw = raw.get("integration", {})
    if not isinstance(integ_raw, dict):
        raise ConfigError("integration", "expected an object")
    _check_keys(integ_raw, tuple(_INTEGRATION_DEFAULTS), "integration")
    integ = {}
    for key, dv in _INTEGRATION_DEFAULTS.items():
        integer = key in ("qr_every", "window_factor")
        integ[key] = _num(integ_raw, "integration", key, default=dv,
                          integer=integer)
    for key in ("step", "T", "W"):
        if integ[key] is None or integ[key] <= 0:
            raise ConfigError(f"integration.{key}", "must be positive")
    if integ["qr_every"] < 1:
        raise ConfigError("integration.qr_every", "must be at least 1")
    if integ["merge_tol"] < 0:
        raise ConfigError("integration.merge_tol", "must be nonnegative")
    if integ["burn_in"] is not None and integ["burn_in"] < 0:
        raise ConfigError("integration.burn_in", "must be nonnegative")
    if integ["window_factor"] is not None and integ["window_factor"] < 1:
        raise ConfigError("integration.window_factor", "must be positive")
    try:
        _window_plan(integ["T"], integ["W"], integ["step"],
                     integ["qr_every"], integ["burn_in"],
                     integ["window_factor"])
    except InputError as e:
        raise ConfigError("integration", str(e)) from None

    ens_raw = raw.get("ensemble", {})
    if not isinstance(ens_raw, dict):
        raise ConfigError("ensemble", "expected an object")
    _check_keys(ens_raw, tuple(_ENSEMBLE_DEFAULTS), "ensemble")
    ens = {
        "size": _num(ens_raw, "ensemble", "size",
                     default=_ENSEMBLE_DEFAULTS["size"], integer=True),
        "seed": _num(ens_raw, "ensemble", "seed",
                     default=_ENSEMBLE_DEFAULTS["seed"], integer=True),
    }
    if ens["size"] < 1:
        raise ConfigError("ensemble.size", "must be positive")
    if ens["seed"] < 0:
        raise ConfigError("ensemble.seed", "must be nonnegative")

    tasks_raw = raw.get("tasks")
    if not isinstance(tasks_raw, list) or not tasks_raw:
        raise ConfigError("tasks", "required non-empty list of tasks")
    tasks = [_validate_task(i, t) for i, t in enumerate(tasks_raw)]

    out_dir = raw.get("output_dir", ".")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output_dir", "expected a non-empty string")

    return {
        "flow": {"name": name, "params": dict(params)},
        "integration": integ,
        "ensemble": ens,
        "tasks": tasks,
        "output_dir": out_dir,
    }


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, rows, n_windows):
    """Windowed-rate table; long window series are strided to keep the
    file bounded while staying deterministic."""
    stride = max(1, int(math.ceil(n_windows / _CSV_MAX_WINDOWS)))
    rows = rows.reshape(-1, n_windows, 4)[:, ::stride, :].reshape(-1, 4)
    lines = [_CSV_HEADER]
    for seed, chan, start, rate in rows:
        lines.append(f"{int(seed)},{int(chan)},{start!r},{float(rate)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

class _Pipeline:
    """Shared state for one run: flow, ensemble, cached spectra."""

    def __init__(self, cfg, out_dir, threads):
        self.cfg = cfg
        self.out_dir = out_dir
        self.threads = threads
        self.flow = make_flow(cfg["flow"]["name"], **cfg["flow"]["params"])
        integ = cfg["integration"]
        self.ensemble = build_ensemble(
            self.flow, cfg["ensemble"]["size"], cfg["ensemble"]["seed"],
            T=integ["T"], W=integ["W"], step=integ["step"],
            qr_every=integ["qr_every"], burn_in=integ["burn_in"],
            window_factor=integ["window_factor"])
        self._cache = {}
        self.written = []

    def _handle(self, key):
        if key == "B":
            return restricted(amplitude_cocycle(self.flow))
        if key == "B_full":
            return amplitude_cocycle(self.flow)
        if key == "X":
            return scalar_stretch(self.flow, 1.0)
        kind, m = key
        return product(restricted(amplitude_cocycle(self.flow)),
                       scalar_stretch(self.flow, m))

    def spectrum(self, key):
        """(estimate, window-rate rows) for the named cocycle, cached."""
        if key not in self._cache:
            integ = self.cfg["integration"]
            est, rows = sacker_sell_estimate(
                self._handle(key), self.ensemble, integ["T"], integ["W"],
                step=integ["step"], merge_tol=integ["merge_tol"],
                qr_every=integ["qr_every"], burn_in=integ["burn_in"],
                window_factor=integ["window_factor"], threads=self.threads,
                return_samples=True)
            self._cache[key] = (est, rows)
        return self._cache[key]

    def emit_json(self, fname, payload):
        path = os.path.join(self.out_dir, fname)
        _write_json(path, payload)
        self.written.append(path)

    def emit_csv(self, fname, rows, est):
        n_win = int(rows.shape[0]
                    // (est.params["ensemble_size"]
                        * max(1, rows[:, 1].max() + 1)))
        path = os.path.join(self.out_dir, fname)
        _write_csv(path, rows, n_win)
        self.written.append(path)

    def _base_payload(self):
        return {
            "flow": self.cfg["flow"],
            "ensemble": self.cfg["ensemble"],
        }

    def run_spectrum_task(self, key, task_kind, name, extra=None):
        est, rows = self.spectrum(key)
        payload = self._base_payload()
        payload.update({
            "task": task_kind,
            "name": name,
            "intervals": est.intervals,
            "samples": est.samples,
            "params": est.params,
        })
        if extra:
            payload.update(extra)
        if key == "B":
            full, _ = self.spectrum("B_full")
            payload["full_intervals"] = full.intervals
        self.emit_json(f"spectrum_{name}.json", payload)
        self.emit_csv(f"samples_{name}.csv", rows, est)

    def run_mane_task(self, task):
        integ = self.cfg["integration"]
        grid = build_ensemble(
            self.flow, task["grid_size"], self.cfg["ensemble"]["seed"],
            T=integ["T"], W=integ["W"], step=integ["step"],
            qr_every=integ["qr_every"], burn_in=integ["burn_in"],
            window_factor=integ["window_factor"])
        handle = self._handle("B")
        for lam in task["lambda"]:
            rep = mane_search_bilateral(handle, lam, grid, task["N"],
                                        step=integ["step"],
                                        ratio_threshold=task["ratio_threshold"])
            cert = rep.primal if rep.primal is not None else rep.adjoint
            payload = self._base_payload()
            payload.update({
                "task": "mane",
                "lambda": lam,
                "N": task["N"],
                "ratio_threshold": task["ratio_threshold"],
                "grid_size": task["grid_size"],
                "found": rep.found,
                "side": rep.side,
                "certificate": None if cert is None else {
                    "theta": {"x": cert.theta.x, "eta": cert.theta.eta,
                              "s": cert.theta.s},
                    "x0": cert.x0,
                    "c": cert.c,
                    "C": cert.C,
                    "profile": cert.profile,
                },
            })
            self.emit_json(f"mane_{lam:g}.json", payload)

    def run_euler_ess_task(self, task):
        m, t = task["m"], task["t"]
        est_B, _ = self.spectrum("B")
        est_full, _ = self.spectrum("B_full")
        est_X, _ = self.spectrum("X")
        est_m, _ = self.spectrum(("BX", m))
        lam_min, lam_max = est_X.hull()
        floor = algebraic_rate_floor(self.flow,
                                     est_B.params["effective_window"])
        trivial = est_B.diameter() <= floor
        if trivial:
            m_star = 0.0
        elif lam_max > lam_min:
            m_star = connectedness_threshold(est_B, lam_max, lam_min)
        else:
            m_star = None
        claimed = m_star is not None and abs(m) >= m_star
        annuli = essential_spectrum_annulus(est_m, t)
        payload = self._base_payload()
        payload.update({
            "task": "euler_ess",
            "m": m,
            "t": t,
            "sigma_B": est_B.intervals,
            "sigma_B_full": est_full.intervals,
            "sigma_X": est_X.intervals,
            "sigma_BXm": est_m.intervals,
            "lambda_max": lam_max,
            "lambda_min": lam_min,
            "m_star": m_star,
            "resolution_floor": floor,
            "sigma_B_below_floor": trivial,
            "identity_claimed": claimed,
            "annuli": annuli,
            "outer_hull": [min(a for a, _ in annuli),
                           max(b for _, b in annuli)],
            "params": est_B.params,
        })
        self.emit_json("euler_ess.json", payload)

    def run(self):
        for task in self.cfg["tasks"]:
            kind = task["kind"]
            if kind == "spectrum_B":
                self.run_spectrum_task("B", kind, "B")
            elif kind == "spectrum_X":
                self.run_spectrum_task("X", kind, "X")
            elif kind == "spectrum_BXm":
                for m in task["m"]:
                    self.run_spectrum_task(("BX", m), kind, f"BX{m:g}",
                                           extra={"m": m})
            elif kind == "mane":
                self.run_mane_task(task)
            else:
                self.run_euler_ess_task(task)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _error_payload(code, kind, message, field=None):
    err = {"code": code, "kind": kind, "message": str(message)}
    if field is not None:
        err["field"] = field
    return {"error": err}


def _emit_error(payload, out_dir=None):
    print(json.dumps(payload, indent=2, sort_keys=True))
    if out_dir is not None:
        try:
            _write_json(os.path.join(out_dir, "error.json"), payload)
        except OSError:
            pass


def _load(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(
            "", f"config parse error at line {e.lineno}, column {e.colno}: "
            f"{e.msg}") from None


def _resolve_threads(arg):
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("DYSPEC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(
                "", f"DYSPEC_THREADS must be an integer, got {env!r}"
            ) from None
    return 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="dyspec",
        description="Dynamical-spectrum pipelines for transport cocycles "
                    "over steady torus flows.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute the tasks in a config file")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None,
                       help="overrides config output_dir")
    p_run.add_argument("--seed", type=int, default=None,
                       help="overrides config ensemble.seed")
    p_run.add_argument("--threads", type=int, default=None,
                       help="trajectory batch parallelism (results are "
                            "independent of this; DYSPEC_THREADS works too)")
    p_val = sub.add_parser("validate",
                           help="check a config file without running")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    try:
        cfg = validate_config(_load(args.config))
    except ConfigError as e:
        _emit_error(_error_payload(2, "validation", e, e.field or None))
        return 2

    if args.command == "validate":
        print("OK")
        print(json.dumps(_jsonable(cfg), indent=2, sort_keys=True))
        return 0

    try:
        threads = _resolve_threads(args.threads)
    except ConfigError as e:
        _emit_error(_error_payload(2, "validation", e))
        return 2
    if args.seed is not None:
        if args.seed < 0:
            _emit_error(_error_payload(2, "validation",
                                       "--seed must be nonnegative"))
            return 2
        cfg["ensemble"]["seed"] = args.seed
    out_dir = args.output_dir if args.output_dir else cfg["output_dir"]
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        _emit_error(_error_payload(2, "validation",
                                   f"cannot create output dir: {e}"))
        return 2

    try:
        pipe = _Pipeline(cfg, out_dir, threads)
        pipe.run()
    except InputError as e:
        _emit_error(_error_payload(2, "validation", e), out_dir)
        return 2
    except IntegrationError as e:
        _emit_error(_error_payload(3, "integration", e), out_dir)
        return 3
    except ConditioningError as e:
        _emit_error(_error_payload(4, "conditioning", e), out_dir)
        return 4
    for path in pipe.written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
