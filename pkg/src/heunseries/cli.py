"""Command-line interface.

Every command resolves its flags (optionally overridden by ``--spec
file.json``) into a flat job spec, runs it, and writes either CSV rows
``z,re,im[,order,err_est]`` preceded by a ``# spec:`` comment line, or a JSON
object ``{"spec", "rows", "diagnostics"}``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import nullcontext

import numpy as np

from .errors import InputError, NumericalError
from .heun import (
    HeunParams,
    InitialData,
    MeshConfig,
    _validate,
    coefficients,
    evaluate,
    evaluation_grid,
    kernel_K1,
    kernel_K2,
    series,
)
from .oracle import OdeProblem, SolverConfig, residual, solve
from .teukolsky import (
    BranchChoice,
    TeukolskyInput,
    asymptotics_horizon,
    asymptotics_infinity,
    evaluate_radial,
    fit_loglog_slope,
    prefactor,
    reduce,
)
from .volterra import discrete_residual, resolve_second_kind

ROW_COMMANDS = ("eval", "series", "volterra", "oracle", "teukolsky-eval")
JSON_COMMANDS = ("residual", "teukolsky-map", "asym")
COMMANDS = ROW_COMMANDS + JSON_COMMANDS

# spec key -> (type, default); None default means required
_HEUN_KEYS = {
    "class": (str, None),
    "params": (dict, None),
}
_INIT_KEYS = {"z0": (float, None), "h0": (complex, None), "dh0": (complex, None)}
_RANGE_KEYS = {"from": (float, None), "to": (float, None), "points": (int, 200)}
_MESH_KEYS = {"panel_order": (int, 12), "mesh_width": (float, 6.0), "max_width": (float, 0.5)}
_TEUK_KEYS = {"mass": (float, 1.0), "a": (float, None), "s": (float, None), "m": (int, None),
              "omega": (complex, None), "alm": (complex, None), "branch": (int, 7)}
_TOL_KEYS = {"rel_tol": (float, 1e-12), "abs_tol": (float, 1e-14)}

_SCHEMA = {
    "eval": {**_HEUN_KEYS, **_INIT_KEYS, **_RANGE_KEYS, "method": (str, "direct"),
             "order": (int, 0), "tol": (float, 0.0), **_MESH_KEYS},
    "series": {**_HEUN_KEYS, **_INIT_KEYS, **_RANGE_KEYS, "orders": (list, None), **_MESH_KEYS},
    "volterra": {**_HEUN_KEYS, "z0": (float, None), "from": (float, None), "to": (float, None),
                 "kernel": (str, "K1"), **_MESH_KEYS},
    "oracle": {**_HEUN_KEYS, **_INIT_KEYS, **_RANGE_KEYS, **_TOL_KEYS},
    "residual": {**_HEUN_KEYS, "input": (str, None)},
    "teukolsky-map": {**_TEUK_KEYS},
    "teukolsky-eval": {**_TEUK_KEYS, **_INIT_KEYS, **_RANGE_KEYS, "method": (str, "direct"),
                       "order": (int, 0), **_MESH_KEYS},
    "asym": {**_TEUK_KEYS, "fit": (bool, False), "from": (float, 50.0), "to": (float, 200.0),
             "points": (int, 60), "z0": (float, 2.0), "window": (float, 0.25), **_MESH_KEYS},
}


# ----------------------------------------------------------------------------
# value formatting


def parse_complex(v) -> complex:
    """Accept numbers, ``"re,im"`` strings, ``[re, im]`` lists and Python
    complex literals."""
    if isinstance(v, bool):
        raise InputError("booleans are not numbers")
    if isinstance(v, (int, float, complex)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        t = v.strip()
        if "," in t:
            re_, im_ = t.split(",", 1)
            return complex(float(re_), float(im_))
        try:
            return complex(float(t))
        except ValueError:
            return complex(t.replace(" ", ""))
    raise InputError(f"cannot read a complex number from {v!r}")


def fmt(x: float) -> str:
    return "%.17g" % x


def fmt_complex(z) -> str:
    z = complex(z)
    return f"{fmt(z.real)},{fmt(z.imag)}"


def _jsonable(v):
    if isinstance(v, (complex, np.complexfloating)):
        return fmt_complex(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _coerce(key, typ, v):
    try:
        if typ is complex:
            return parse_complex(v)
        if typ is float:
            if isinstance(v, bool):
                raise ValueError
            return float(v)
        if typ is int:
            if isinstance(v, bool) or float(v) != int(float(v)):
                raise ValueError
            return int(float(v))
        if typ is bool:
            if isinstance(v, str):
                return v.lower() in ("1", "true", "yes")
            return bool(v)
        if typ is dict:
            if isinstance(v, str):
                v = json.loads(v)
            if not isinstance(v, dict):
                raise ValueError
            return {str(k): parse_complex(x) for k, x in v.items()}
        if typ is list:
            if isinstance(v, str):
                v = [x for x in v.split(",") if x.strip()]
            return [int(float(x)) for x in v]
        return str(v)
    except (ValueError, TypeError, json.JSONDecodeError):
        raise InputError(f"invalid value for {key}: {v!r}") from None


def resolve_spec(command: str, given: dict) -> dict:
    """Fill defaults, coerce types and reject unknown or missing keys."""
    if command not in _SCHEMA:
        raise InputError(f"unknown command {command!r}")
    schema = _SCHEMA[command]
    extra = set(given) - set(schema) - {"command", "format", "output"}
    if extra:
        raise InputError(f"unexpected keys for {command}: {sorted(extra)}")
    spec = {"command": command}
    for key, (typ, default) in schema.items():
        if key in given and given[key] is not None:
            spec[key] = _coerce(key, typ, given[key])
        elif default is None:
            raise InputError(f"missing required setting {key!r} for {command}")
        else:
            spec[key] = default
    fmt_default = "csv" if command in ROW_COMMANDS else "json"
    spec["format"] = str(given.get("format") or fmt_default)
    if spec["format"] not in ("csv", "json"):
        raise InputError("format must be csv or json")
    if command in JSON_COMMANDS and spec["format"] != "json":
        raise InputError(f"{command} writes JSON only")
    if "points" in spec and spec["points"] < 2:
        raise InputError("points must be >= 2")
    if "from" in spec and "to" in spec and not spec["from"] < spec["to"]:
        raise InputError("range must satisfy from < to")
    if command == "eval":
        if spec["method"] not in ("direct", "neumann"):
            raise InputError("method must be direct or neumann")
        if spec["method"] == "neumann" and spec["order"] < 1 and spec["tol"] <= 0:
            raise InputError("neumann needs order >= 1 (or a positive tol)")
    if command == "teukolsky-eval" and spec["method"] == "neumann" and spec["order"] < 1:
        raise InputError("neumann needs order >= 1")
    return spec


def spec_to_json(spec: dict) -> dict:
    out = {}
    for k, v in spec.items():
        if k == "params":
            out[k] = {pk: pv.real if pv.imag == 0 else fmt_complex(pv) for pk, pv in v.items()}
        else:
            out[k] = _jsonable(v)
    return out


# ----------------------------------------------------------------------------
# command implementations


def _params(spec):
    return HeunParams.from_mapping(spec["class"], spec["params"])


def _init(spec):
    return InitialData(spec["z0"], spec["h0"], spec["dh0"])


def _zs(spec):
    return np.linspace(spec["from"], spec["to"], spec["points"])


def _mesh(spec):
    return MeshConfig(order=spec["panel_order"], width=spec["mesh_width"],
                      max_width=spec["max_width"])


def _cmd_eval(spec):
    tol = spec["tol"] if spec["tol"] > 0 else None
    order = spec["order"] if spec["order"] >= 1 else None
    ev = evaluate(_params(spec), _init(spec), _zs(spec), method=spec["method"], order=order,
                  tol=tol, mesh=_mesh(spec))
    o = "" if ev.order is None else ev.order
    rows = [{"z": z, "re": h.real, "im": h.imag, "order": o, "err_est": e} for z, h, e in ev.rows()]
    return rows, ["z", "re", "im", "order", "err_est"], ev.diagnostics


def _cmd_series(spec):
    res = series(_params(spec), _init(spec), _zs(spec), orders=spec["orders"], mesh=_mesh(spec))
    rows = []
    for k, m in enumerate(res.orders):
        for z, h, e in zip(res.z, res.H[k], res.err_est[k]):
            rows.append({"z": z, "re": h.real, "im": h.imag, "order": m, "err_est": e})
    return rows, ["z", "re", "im", "order", "err_est"], res.diagnostics


def _cmd_volterra(spec):
    p = _params(spec)
    grid, anchor = evaluation_grid(p, spec["z0"], spec["from"], spec["to"], _mesh(spec))
    which = spec["kernel"].upper()
    if which == "K1":
        k = kernel_K1(p, grid, anchor=anchor)
    elif which == "K2":
        k = kernel_K2(p, grid, anchor=anchor)
    else:
        raise InputError("kernel must be K1 or K2")
    G = resolve_second_kind(k)
    rows = [{"z": z, "re": g.real, "im": g.imag} for z, g in zip(grid.nodes, G)]
    diag = {"nodes": len(grid), "discrete_residual": discrete_residual(k, G)}
    return rows, ["z", "re", "im"], diag


def _cmd_oracle(spec):
    p = _params(spec)
    c = coefficients(p)
    init = _init(spec)
    zs, _ = _validate(p, init, _zs(spec))
    prob = OdeProblem(c.B1, c.B2, init.z0, init.H0, init.dH0)
    y = solve(prob, zs, SolverConfig(rel_tol=spec["rel_tol"], abs_tol=spec["abs_tol"]))
    rows = [{"z": z, "re": v.real, "im": v.imag} for z, v in zip(zs, y[:, 0])]
    return rows, ["z", "re", "im"], {}


def _read_samples(path):
    data = []
    with open(path, encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if header is None:
                header = cells
                continue
            rec = dict(zip(header, cells))
            data.append((float(rec["z"]), complex(float(rec["re"]), float(rec["im"]))))
    if header is None or not {"z", "re", "im"} <= set(header):
        raise InputError("input CSV needs z,re,im columns")
    return data


def _cmd_residual(spec):
    p = _params(spec)
    c = coefficients(p)
    samples = _read_samples(spec["input"])
    prob = OdeProblem(c.B1, c.B2, samples[0][0], samples[0][1], 0)
    r = residual(prob, samples)
    return {"residual": r, "samples": len(samples)}


def _teuk_input(spec):
    return TeukolskyInput(spec["mass"], spec["a"], spec["s"], spec["m"], spec["omega"], spec["alm"])


def _cmd_teuk_map(spec):
    red = reduce(_teuk_input(spec), BranchChoice.from_index(spec["branch"]))
    d = red.as_dict()
    hp = red.heun_params()
    d["heun_params"] = {"gamma": hp.gamma, "delta": hp.delta, "epsilon": hp.epsilon,
                        "alpha": hp.alpha, "q": hp.q}
    return d


def _cmd_teuk_eval(spec):
    inp = _teuk_input(spec)
    order = spec["order"] if spec["order"] >= 1 else None
    sol = evaluate_radial(inp, BranchChoice.from_index(spec["branch"]), _init(spec), _zs(spec),
                          method=spec["method"], order=order, mesh=_mesh(spec))
    o = "" if order is None else order
    err = sol.err_est * np.abs(prefactor(sol.reduction, sol.z))
    rows = [{"z": z, "re": R.real, "im": R.imag, "order": o, "err_est": e}
            for z, R, e in zip(sol.z, sol.R, err)]
    return rows, ["z", "re", "im", "order", "err_est"], {}


def _cmd_asym(spec):
    red = reduce(_teuk_input(spec), BranchChoice.from_index(spec["branch"]))
    out = {"infinity": asymptotics_infinity(red), "horizon": asymptotics_horizon(red)}
    if spec["fit"]:
        zs = np.geomspace(spec["from"], spec["to"], spec["points"])
        mesh = MeshConfig(order=spec["panel_order"], width=spec["mesh_width"],
                          max_width=max(spec["max_width"], 4.0))
        ev = evaluate(red.heun_params(), InitialData(spec["z0"], 1, 1), zs, mesh=mesh)
        out["fit"] = {"loglog_slope": fit_loglog_slope(zs, ev.H, spec["window"]),
                      "linear_rate": float(np.polyfit(zs, np.log(np.abs(ev.H)), 1)[0])}
    return out


_ROW_IMPL = {"eval": _cmd_eval, "series": _cmd_series, "volterra": _cmd_volterra,
             "oracle": _cmd_oracle, "teukolsky-eval": _cmd_teuk_eval}
_JSON_IMPL = {"residual": _cmd_residual, "teukolsky-map": _cmd_teuk_map, "asym": _cmd_asym}


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return fmt(float(v))


def render(spec: dict, rows, columns, diagnostics) -> str:
    """Serialize a result; deterministic for fixed inputs."""
    sj = spec_to_json({k: v for k, v in spec.items() if k != "output"})
    if spec["format"] == "json":
        payload = {"spec": sj, "rows": [_jsonable({c: r[c] for c in columns}) for r in rows]
                   if columns else rows, "diagnostics": _jsonable(diagnostics)}
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"
    lines = ["# spec: " + json.dumps(sj, sort_keys=True, separators=(",", ":")),
             ",".join(columns)]
    for r in rows:
        lines.append(",".join(_cell(r[c]) for c in columns))
    return "\n".join(lines) + "\n"


def run(spec: dict) -> tuple[int, str]:
    """Run a resolved spec; returns (exit code, output text or message)."""
    cmd = spec["command"]
    try:
        if cmd in _ROW_IMPL:
            rows, cols, diag = _ROW_IMPL[cmd](spec)
            return 0, render(spec, rows, cols, diag)
        payload = _JSON_IMPL[cmd](spec)
        return 0, render(spec, [], None, payload)
    except InputError as exc:
        return 2, f"error: {exc}"
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError, OverflowError) as exc:
        return 3, f"numerical failure: {exc}"
    except (ValueError, KeyError, TypeError, OSError) as exc:
        return 2, f"error: {exc}"


# ----------------------------------------------------------------------------
# argument parsing


def _add_common(sp):
    sp.add_argument("--spec", help="JSON job spec; its values supersede flags")
    sp.add_argument("--format", choices=("csv", "json"))
    sp.add_argument("--output", "-o", help="write to this path instead of stdout")


def _add_heun(sp, init=True, rng=True):
    sp.add_argument("--class", dest="class")
    sp.add_argument("--params", help="JSON object of class parameters")
    if init:
        sp.add_argument("--z0")
        sp.add_argument("--h0")
        sp.add_argument("--dh0")
    if rng:
        sp.add_argument("--from", dest="from")
        sp.add_argument("--to")
        sp.add_argument("--points")


def _add_mesh(sp):
    sp.add_argument("--panel-order", dest="panel_order")
    sp.add_argument("--mesh-width", dest="mesh_width")
    sp.add_argument("--max-width", dest="max_width")


def _add_teuk(sp):
    for name in ("mass", "a", "s", "m", "omega", "alm", "branch"):
        sp.add_argument(f"--{name}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heunseries",
                                 description="Heun functions from resolvent kernel series.",
                                 argument_default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)
    kw = {"argument_default": argparse.SUPPRESS}

    sp = sub.add_parser("eval", help="evaluate H on a range", **kw)
    _add_heun(sp)
    sp.add_argument("--method", choices=("direct", "neumann", "volterra_direct"))
    sp.add_argument("--order")
    sp.add_argument("--tol")
    _add_mesh(sp)
    _add_common(sp)

    sp = sub.add_parser("series", help="Neumann approximants, one row per (z, order)", **kw)
    _add_heun(sp)
    sp.add_argument("--orders", help="comma-separated orders")
    _add_mesh(sp)
    _add_common(sp)

    sp = sub.add_parser("volterra", help="resolvent column on the grid", **kw)
    _add_heun(sp, init=False, rng=False)
    sp.add_argument("--z0")
    sp.add_argument("--from", dest="from")
    sp.add_argument("--to")
    sp.add_argument("--kernel", choices=("K1", "K2", "k1", "k2"))
    _add_mesh(sp)
    _add_common(sp)

    sp = sub.add_parser("oracle", help="reference ODE solution", **kw)
    _add_heun(sp)
    sp.add_argument("--rel-tol", dest="rel_tol")
    sp.add_argument("--abs-tol", dest="abs_tol")
    _add_common(sp)

    sp = sub.add_parser("residual", help="ODE residual of sampled values", **kw)
    _add_heun(sp, init=False, rng=False)
    sp.add_argument("--input", help="CSV with z,re,im columns")
    _add_common(sp)

    sp = sub.add_parser("teukolsky-map", help="confluent Heun parameters of a radial problem", **kw)
    _add_teuk(sp)
    _add_common(sp)

    sp = sub.add_parser("teukolsky-eval", help="radial function on ]1, inf[ in z", **kw)
    _add_teuk(sp)
    sp.add_argument("--z0")
    sp.add_argument("--h0")
    sp.add_argument("--dh0")
    sp.add_argument("--from", dest="from")
    sp.add_argument("--to")
    sp.add_argument("--points")
    sp.add_argument("--method", choices=("direct", "neumann"))
    sp.add_argument("--order")
    _add_mesh(sp)
    _add_common(sp)

    sp = sub.add_parser("asym", help="asymptotic models (and optional slope fit)", **kw)
    _add_teuk(sp)
    sp.add_argument("--fit", action="store_true")
    sp.add_argument("--from", dest="from")
    sp.add_argument("--to")
    sp.add_argument("--points")
    sp.add_argument("--z0")
    sp.add_argument("--window")
    _add_mesh(sp)
    _add_common(sp)
    return ap


def _thread_limit():
    n = os.environ.get("HEUN_THREADS")
    if not n:
        return nullcontext()
    try:
        n = max(1, int(n))
    except ValueError:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    ap = build_parser()
    ns = vars(ap.parse_args(argv))
    command = ns.pop("command")
    spec_path = ns.pop("spec", None)
    given = dict(ns)
    if given.get("method") == "volterra_direct":
        given["method"] = "direct"
    if "kernel" in given:
        given["kernel"] = given["kernel"].upper()
    if spec_path:
        try:
            with open(spec_path, encoding="utf-8") as fh:
                file_spec = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read spec file: {exc}", file=sys.stderr)
            return 2
        if not isinstance(file_spec, dict):
            print("error: spec file must hold a JSON object", file=sys.stderr)
            return 2
        if file_spec.get("command", command) != command:
            print("error: spec file is for a different command", file=sys.stderr)
            return 2
        given.update(file_spec)
    output = given.pop("output", None)
    try:
        spec = resolve_spec(command, given)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    with _thread_limit():
        code, text = run(spec)
    if code != 0:
        print(text, file=sys.stderr)
        return code
    if output:
        with open(output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
