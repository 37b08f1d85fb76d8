"""Command-line front end: one subcommand per sweep family, CSV output.

Parameters resolve in three layers: built-in defaults, then a TOML config
file (``--config``), then command-line flags.  Grids are comma-separated on
the command line and arrays in TOML.  With ``--out`` a CSV and a sidecar
``<out>.json`` with the resolved configuration are written; the sidecar can
be fed back through ``--config`` to reproduce the CSV.

Exit codes: 0 ok, 2 configuration error, 3 infeasible constraint, 4 I/O.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, multiserver, qmux_eg, qmux_rsp, scanstats
from .core import InfeasibleError, QmuxError, tomllib

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4

# ---------------------------------------------------------------------------
# parameter schemas: name -> (kind, default, help)
# kinds: int, float, str, ints, floats, bool

_HUB_GRID = {
    "alpha2": ("floats", [0.05, 0.1, 0.2, 0.3, 0.4, 0.5], "|alpha|^2 grid (<= alpha2_max)"),
    "n_o": ("ints", [100, 300, 1000, 3000, 10000, 100000, 1000000], "idle cutoff grid"),
    "xi2": ("floats", [0.01], "server-server bright-state grid (single_click_eg only)"),
    "N": ("int", 100000, "rounds per grid point"),
    "preset": ("str", "standard_hub", "bundled hub preset"),
    "recompute_cutoff": ("bool", True, "re-solve the baseline cutoff from F_min"),
}

SCHEMAS = {
    "window": {
        "w": ("ints", [5], "window length(s)"),
        "s": ("ints", [2], "required successes"),
        "p": ("floats", [1e-3], "success probability grid"),
        "max_states": ("int", scanstats.DEFAULT_MAX_STATES, "state-space limit"),
    },
    "limits": {
        "M": ("ints", [1, 2, 3, 4], "multiplexing factors"),
        "s": ("ints", [2], "qubits"),
        "w": ("int", 4, "window length"),
        "p": ("floats", [1e-3], "success probability grid"),
    },
    "eg-curve": {
        "M": ("ints", [1, 5], "memories at node A"),
        "eta_a": ("float", 0.1, "efficiency A -> station"),
        "eta_b": ("float", 0.1, "efficiency B -> station"),
        "xi_a2": ("floats", list(np.geomspace(1e-4, 0.5, 41)), "bright-state grid at A"),
    },
    "eg-gain": {
        "eta_a": ("float", 0.1, "efficiency A -> station"),
        "eta_b": ("float", 0.1, "efficiency B -> station"),
        "fmin": ("float", 0.95, "fidelity floor"),
        "m_max": ("int", 30, "largest M"),
    },
    "rsp-curve": {
        "M": ("ints", [1, 5], "client devices"),
        "eta_c": ("float", 1.0, "client efficiency"),
        "eta_s": ("float", 0.1, "server efficiency"),
        "gamma": ("floats", list(np.geomspace(1e-4, 0.5, 41)), "eta_c |alpha|^2 grid"),
        "demand": ("str", "single_user_all_devices", "demand model"),
        "alpha2_max": ("float", 0.5, "amplitude cap (<= 0 disables)"),
    },
    "rsp-gain": {
        "eta_c": ("float", 1e-3, "client efficiency"),
        "eta_s": ("float", 0.9, "server efficiency"),
        "fmin": ("float", 1.0 - 1e-6, "fidelity floor"),
        "m_max": ("int", 30, "largest M"),
        "demand": ("str", "single_user_all_devices", "demand model"),
        "alpha2_max": ("float", 0.5, "amplitude cap (<= 0 disables)"),
    },
    "ms-curve": {
        "M": ("ints", [2, 3, 4], "servers"),
        "s": ("int", 2, "qubits"),
        "fmin": ("floats", [0.8, 0.85, 0.9, 0.95], "fidelity floors"),
        **_HUB_GRID,
    },
    "ms-gain": {
        "M": ("ints", [2, 3, 4], "servers"),
        "s": ("ints", [2, 3], "qubits"),
        "fmin": ("float", 0.9, "fidelity floor"),
        **_HUB_GRID,
    },
    "ms-sample": {
        "M": ("int", 2, "servers"),
        "s": ("int", 2, "qubits"),
        "p_sc": ("float", 1e-3, "server-client success probability"),
        "p_ss": ("float", 0.3, "server-server success probability"),
        "n_e": ("int", 1000, "active cutoff"),
        "n_o": ("int", 100, "idle cutoff"),
        "N": ("int", 100000, "rounds"),
        "fmin": ("float", 0.0, "fidelity floor for the F* gate"),
        "strategy": ("str", "multiplex", "try_and_commit or multiplex"),
        "tau_e": ("float", 300e-9, "attempt duration [s]"),
        "tau_ce": ("float", 20e-3, "active coherence time [s]"),
        "tau_co": ("float", 2.8, "idle coherence time [s]"),
        "f0_sc": ("float", 1.0, "intrinsic RSP fidelity"),
        "f0_ss": ("float", 1.0, "intrinsic EG fidelity"),
    },
}

STOCHASTIC = {"ms-curve", "ms-gain", "ms-sample"}


class ConfigError(QmuxError):
    pass


@dataclass
class SweepSpec:
    target: str
    params: dict
    output_path: str | None = None
    seed: int = 0
    threads: int = 0
    hub: dict = field(default_factory=dict)


def _coerce(name: str, kind: str, value):
    try:
        if kind in ("ints", "floats"):
            if isinstance(value, str):
                items = [v for v in value.split(",") if v.strip()]
            elif isinstance(value, (list, tuple)):
                items = list(value)
            else:
                items = [value]
            if not items:
                raise ConfigError(f"{name}: empty grid")
            cast = int if kind == "ints" else float
            out = []
            for v in items:
                if isinstance(v, bool):
                    raise ValueError(v)
                x = cast(float(v)) if cast is int and not isinstance(v, int) else cast(v)
                if cast is int and float(v) != x:
                    raise ValueError(v)
                out.append(x)
            return out
        if kind == "int":
            if isinstance(value, bool):
                raise ValueError(value)
            x = int(float(value)) if isinstance(value, str) else int(value)
            if float(value) != x:
                raise ValueError(value)
            return x
        if kind == "float":
            if isinstance(value, bool):
                raise ValueError(value)
            x = float(value)
            if not math.isfinite(x):
                raise ValueError(value)
            return x
        if kind == "bool":
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("1", "true", "yes"):
                return True
            if str(value).lower() in ("0", "false", "no"):
                return False
            raise ValueError(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot read {value!r} as {kind}") from exc


def parse_config(path: str | os.PathLike, target: str | None = None) -> SweepSpec:
    """Read a TOML config (or a sidecar JSON) into a :class:`SweepSpec`.

    Top-level keys ``target``, ``seed``, ``threads``, ``out`` and the
    target's parameters are accepted; a ``[hub]`` table overrides preset
    fields for the ``ms-*`` targets.  Unknown keys are rejected.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        flat = dict(data.get("params", {}))
        for key in ("target", "seed", "threads", "hub"):
            if key in data:
                flat[key] = data[key]
    else:
        try:
            flat = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    file_target = flat.pop("target", None)
    target = target or file_target
    if target is None:
        raise ConfigError("config does not name a target")
    if file_target is not None and file_target != target:
        raise ConfigError(f"config target {file_target!r} does not match {target!r}")
    if target not in SCHEMAS:
        raise ConfigError(f"unknown target {target!r}")
    spec = SweepSpec(target, {})
    if "seed" in flat:
        spec.seed = _coerce("seed", "int", flat.pop("seed"))
    if "threads" in flat:
        spec.threads = _coerce("threads", "int", flat.pop("threads"))
    if "out" in flat:
        spec.output_path = str(flat.pop("out"))
    hub = flat.pop("hub", {})
    if hub and not target.startswith("ms-"):
        raise ConfigError(f"[hub] is only valid for ms-* targets, not {target!r}")
    if not isinstance(hub, dict):
        raise ConfigError("hub must be a table")
    spec.hub = dict(hub)
    schema = SCHEMAS[target]
    unknown = sorted(set(flat) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) for {target}: {', '.join(unknown)}")
    for key, value in flat.items():
        spec.params[key] = _coerce(key, schema[key][0], value)
    return spec


def _resolve(target: str, file_spec: SweepSpec | None, args) -> SweepSpec:
    schema = SCHEMAS[target]
    params = {k: v[1] for k, v in schema.items()}
    spec = SweepSpec(target, params)
    if file_spec is not None:
        params.update(file_spec.params)
        spec.seed, spec.threads, spec.output_path = (
            file_spec.seed,
            file_spec.threads,
            file_spec.output_path,
        )
        spec.hub = file_spec.hub
    for key, (kind, _, _) in schema.items():
        value = getattr(args, key, None)
        if value is not None:
            params[key] = _coerce(key, kind, value)
    for key, (kind, _, _) in schema.items():
        params[key] = _coerce(key, kind, params[key])
    if args.seed is not None:
        spec.seed = _coerce("seed", "int", args.seed)
    if args.threads is not None:
        spec.threads = _coerce("threads", "int", args.threads)
    elif file_spec is None or not file_spec.threads:
        env = os.environ.get("QMUX_THREADS")
        if env:
            spec.threads = _coerce("QMUX_THREADS", "int", env)
    if args.out is not None:
        spec.output_path = args.out
    multiserver.validate_seed(spec.seed)
    if spec.threads < 0:
        raise ConfigError("threads: must be >= 0")
    return spec


# ---------------------------------------------------------------------------
# sweeps: each returns (columns, rows)


def _sweep_window(p, spec):
    rows = []
    for w in p["w"]:
        for s in p["s"]:
            for prob in p["p"]:
                ws = scanstats.WindowSpec(w, s, prob)
                ex = scanstats.expected_attempts_exact(ws, p["max_states"])
                asym = scanstats.expected_attempts_low_p(ws).expected_attempts
                rows.append([w, s, prob, ex.expected_attempts, asym, ex.n_states])
    return ["w", "s", "p", "exact", "asymptotic_low_p", "n_states"], rows


def _sweep_limits(p, spec):
    rows = []
    w = p["w"]
    for M in p["M"]:
        for s in p["s"]:
            for prob in p["p"]:
                single = scanstats.temporal_gain_single(prob, M).gain
                multi = scanstats.temporal_gain_s(prob, w, M, s)
                rows.append(
                    [
                        M,
                        s,
                        w,
                        prob,
                        single,
                        multi.gain,
                        multi.classical_bound,
                        scanstats.classical_bound_s(M, s),
                        scanstats.classical_bound_s(M, s, large_window=True),
                    ]
                )
    cols = [
        "M",
        "s",
        "w",
        "p",
        "gain_single",
        "gain_s_upper",
        "gain_s_small_p_limit",
        "classical_bound",
        "classical_bound_large_window",
    ]
    return cols, rows


def _sweep_eg_curve(p, spec):
    rows = []
    for M in p["M"]:
        for pt in qmux_eg.eg_curve(M, p["eta_a"], p["eta_b"], p["xi_a2"]):
            q = pt.params
            rows.append([M, q["xi_A2"], q["xi_B2"], pt.rate, pt.fidelity, int(q["xi_B2_saturated"])])
    return ["M", "xi_A2", "xi_B2", "rate", "fidelity", "xi_B2_saturated"], rows


def _parallel_map(fn, items, threads):
    workers = multiserver.resolve_threads(threads)
    if workers == 1 or len(items) == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _sweep_eg_gain(p, spec):
    Ms = list(range(1, p["m_max"] + 1))
    if not Ms:
        raise ConfigError("m_max: must be >= 1")
    reports = _parallel_map(
        lambda M: qmux_eg.eg_gain(M, p["eta_a"], p["eta_b"], p["fmin"]), Ms, spec.threads
    )
    rows = [
        [M, g.gain, g.classical_bound, qmux_eg.symmetric_gain_limit(M), g.rate_multiplexed, g.rate_baseline]
        for M, g in zip(Ms, reports)
    ]
    return ["M", "gain", "bound", "symmetric_limit", "rate_multiplexed", "rate_baseline"], rows


def _cap(value):
    return None if value <= 0 else value


def _sweep_rsp_curve(p, spec):
    rows = []
    for M in p["M"]:
        points = qmux_rsp.rsp_rate_fidelity_sweep(
            M, p["eta_c"], p["eta_s"], p["gamma"], p["demand"], _cap(p["alpha2_max"])
        )
        for pt in points:
            q = pt.params
            rows.append(
                [
                    M,
                    q["gamma"],
                    q["xi2"],
                    pt.rate,
                    pt.fidelity,
                    q["baseline_rate"],
                    q["baseline_fidelity"],
                    int(bool(q.get("large_drop", False))),
                ]
            )
    cols = ["M", "gamma", "xi2", "rate", "fidelity", "baseline_rate", "baseline_fidelity", "large_drop"]
    return cols, rows


def _sweep_rsp_gain(p, spec):
    Ms = list(range(1, p["m_max"] + 1))
    if not Ms:
        raise ConfigError("m_max: must be >= 1")
    reports = _parallel_map(
        lambda M: qmux_rsp.rsp_gain(
            M, p["eta_c"], p["eta_s"], p["fmin"], p["demand"], _cap(p["alpha2_max"])
        ),
        Ms,
        spec.threads,
    )
    rows = [
        [
            M,
            g.gain,
            qmux_rsp.high_fidelity_gain(M, p["eta_s"], p["demand"]),
            qmux_rsp.gain_limit(p["eta_s"]),
            g.classical_bound,
            g.rate_multiplexed,
            g.rate_baseline,
        ]
        for M, g in zip(Ms, reports)
    ]
    cols = ["M", "gain", "high_fidelity_gain", "large_M_limit", "bound", "rate_multiplexed", "rate_baseline"]
    return cols, rows


def _preset(p, spec):
    base = multiserver.load_preset(p["preset"])
    if not spec.hub:
        return base
    merged = {f: getattr(base, f) for f in base.__dataclass_fields__}
    unknown = sorted(set(spec.hub) - set(merged))
    if unknown:
        raise ConfigError(f"unknown key(s) in [hub]: {', '.join(unknown)}")
    merged.update(spec.hub)
    return multiserver.preset_from_mapping(merged)


def _grid(p, preset):
    xi = tuple(p["xi2"]) if preset.ss_model == "single_click_eg" else (None,)
    return multiserver.HubGrid(tuple(p["alpha2"]), tuple(p["n_o"]), xi)


def _sweep_ms_curve(p, spec):
    preset = _preset(p, spec)
    grid = _grid(p, preset)
    rows = []
    for M in p["M"]:
        for F in p["fmin"]:
            res = multiserver.optimize_hub(
                M, p["s"], F, grid, p["N"], spec.seed, preset, threads=spec.threads
            )
            b = res.params
            rows.append(
                [
                    M,
                    p["s"],
                    F,
                    res.best.rate,
                    res.best.stderr_rate,
                    res.best.rate / preset.tau_e,
                    b["alpha2"],
                    b["n_o"],
                    b["F_star"],
                    int(res.saturated),
                ]
            )
    cols = ["M", "s", "F_min", "rate", "stderr_rate", "rate_hz", "alpha2", "n_o", "F_star", "saturated"]
    return cols, rows


def _sweep_ms_gain(p, spec):
    preset = _preset(p, spec)
    grid = _grid(p, preset)
    rows = []
    for s in p["s"]:
        base = multiserver.baseline_rate(
            s, p["fmin"], grid, p["N"], spec.seed, preset, p["recompute_cutoff"], spec.threads
        )
        rows.append([1, s, 1.0, 1.0, 1.0, base.best.rate, base.best.rate, base.best.stderr_rate])
        for M in p["M"]:
            if M < s:
                continue
            mux = multiserver.optimize_hub(M, s, p["fmin"], grid, p["N"], spec.seed, preset, threads=spec.threads)
            gain = mux.best.rate / base.best.rate
            bound = float(M**s)
            rows.append([M, s, gain, bound, gain / bound, mux.best.rate, base.best.rate, mux.best.stderr_rate])
    cols = ["M", "s", "gain", "classical_bound", "gain_over_bound", "rate_multiplexed", "rate_baseline", "stderr_multiplexed"]
    return cols, rows


def _sweep_ms_sample(p, spec):
    hub = multiserver.HubConfig(
        M=p["M"],
        s=p["s"],
        P_sc=p["p_sc"],
        P_ss=p["p_ss"],
        n_e=p["n_e"],
        n_o=p["n_o"],
        tau_e=p["tau_e"],
        tau_ce=p["tau_ce"],
        tau_co=p["tau_co"],
        F0_sc=p["f0_sc"],
        F0_ss=p["f0_ss"],
    )
    cfg = multiserver.SamplerConfig(hub, p["N"], spec.seed, p["fmin"], p["strategy"])
    res = multiserver.run_sampler(cfg, spec.threads)
    if res.gated:
        raise InfeasibleError(
            f"worst-case fidelity {res.worst_case_fidelity:.12g} is below F_min={p['fmin']}",
            constraint="worst-case fidelity F* >= F_min",
        )
    analytic = math.nan
    if hub.s == 2:
        ref = hub
        if cfg.strategy is multiserver.Strategy.TRY_AND_COMMIT:
            # the sampler stores under a single cutoff min(n_o, n_e)
            cut = min(hub.n_o, hub.n_e)
            ref = hub.replace(n_e=cut, n_o=cut)
        analytic = multiserver.analytic_rate_s2(ref, cfg.strategy)
    row = [
        hub.M,
        hub.s,
        p["strategy"],
        res.p_succ,
        res.mean_attempts,
        res.rate,
        res.stderr_rate,
        res.rate / hub.tau_e,
        analytic,
        res.worst_case_fidelity,
    ]
    cols = ["M", "s", "strategy", "p_succ", "mean_attempts", "rate", "stderr_rate", "rate_hz", "analytic_rate", "F_star"]
    return cols, [row]


SWEEPS = {
    "window": _sweep_window,
    "limits": _sweep_limits,
    "eg-curve": _sweep_eg_curve,
    "eg-gain": _sweep_eg_gain,
    "rsp-curve": _sweep_rsp_curve,
    "rsp-gain": _sweep_rsp_gain,
    "ms-curve": _sweep_ms_curve,
    "ms-gain": _sweep_ms_gain,
    "ms-sample": _sweep_ms_sample,
}


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _canonical(spec: SweepSpec) -> dict:
    out = {"target": spec.target, "seed": spec.seed, "params": spec.params}
    if spec.hub:
        out["hub"] = spec.hub
    return out


def config_hash(spec: SweepSpec) -> str:
    blob = json.dumps(_canonical(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def render_csv(spec: SweepSpec, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# qmux {__version__}\n")
    buf.write(f"# target: {spec.target}\n")
    buf.write(f"# config_sha256: {config_hash(spec)}\n")
    if spec.target in STOCHASTIC:
        buf.write(f"# seed: {spec.seed}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue()


def run_sweep(spec: SweepSpec) -> int:
    """Run one sweep and write its outputs; returns the exit status."""
    start = time.perf_counter()
    columns, rows = SWEEPS[spec.target](spec.params, spec)
    text = render_csv(spec, columns, rows)
    if spec.output_path is None:
        sys.stdout.write(text)
        return EXIT_OK
    out = Path(spec.output_path)
    out.write_text(text)
    meta = dict(_canonical(spec))
    meta.update(
        version=__version__,
        threads=spec.threads,
        config_sha256=config_hash(spec),
        columns=list(columns),
        wall_time_s=time.perf_counter() - start,
    )
    Path(str(out) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmux", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qmux {__version__}")
    sub = parser.add_subparsers(dest="target", required=True, metavar="SUBCOMMAND")
    for target, schema in SCHEMAS.items():
        sp = sub.add_parser(target, help=f"{target} sweep")
        sp.add_argument("--config", help="TOML config or sidecar JSON")
        sp.add_argument("--out", help="CSV path (stdout when omitted)")
        sp.add_argument("--seed", help="unsigned 64-bit seed")
        sp.add_argument("--threads", help="worker threads, 0 = auto (env QMUX_THREADS)")
        seen = set()
        for name, (kind, default, help_text) in schema.items():
            flag = _flag(name)
            if flag in seen:
                continue
            seen.add(flag)
            shown = default if not isinstance(default, list) or len(default) <= 8 else "grid"
            sp.add_argument(flag, dest=name, default=None, help=f"{help_text} (default {shown})")
        if target == "eg-gain":
            sp.add_argument("--eta", dest="eta", default=None, help="sets eta_a = eta_b")
        if target == "eg-curve":
            sp.add_argument("--eta", dest="eta", default=None, help="sets eta_a = eta_b")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "eta", None) is not None:
            if args.eta_a is None:
                args.eta_a = args.eta
            if args.eta_b is None:
                args.eta_b = args.eta
        file_spec = parse_config(args.config, args.target) if args.config else None
        spec = _resolve(args.target, file_spec, args)
    except (ConfigError, ValueError) as exc:
        print(f"qmux: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"qmux: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run_sweep(spec)
    except InfeasibleError as exc:
        where = f" [{exc.constraint}]" if exc.constraint else ""
        print(f"qmux: infeasible{where}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"qmux: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, QmuxError) as exc:
        print(f"qmux: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
