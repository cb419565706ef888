"""Command-line runner: ``pdlab <command> [options]``.

Parameters resolve as CLI flag > config file (``key = value`` lines) > default.
The resolved configuration is echoed on stderr and embedded in every output
file together with the seed and package version. Outputs never contain
timings or thread counts, so reruns are byte-identical.

Exit codes: 0 success, 1 failed acceptance check, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Any, Callable

import numpy as np

from . import __version__
from .core import (Params, PdlabError, SimplexError, chunk_sizes, default_eps, env_seed,
                   make_rng, parallel_map)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(PdlabError, ValueError):
    pass


def _bool(raw: str) -> bool:
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _int(raw: str) -> int:
    x = float(raw)
    if x != int(x):
        raise ValueError(f"not an integer: {raw!r}")
    return int(x)


def _opt_float(raw):
    return None if raw is None or str(raw).strip().lower() in ("", "none", "auto") else float(raw)


# name -> (parser, default, help)
_MODEL = {"theta": (float, 1.0, "theta > -alpha"), "alpha": (float, 0.5, "0 <= alpha < 1")}
SCHEMAS: dict[str, dict[str, tuple[Callable, Any, str]]] = {
    "sample-gem": {**_MODEL,
                   "trunc": (float, 1e-10, "stop once the unbroken mass is below this"),
                   "draws": (_int, 1, "independent draws"),
                   "ranked": (_bool, False, "rank the weights (PD instead of GEM)"),
                   "cap": (_int, 10**7, "maximum number of sticks per draw")},
    "sample-urn": {**_MODEL,
                   "n": (_int, 1000, "sample size"),
                   "replicates": (_int, 1, "independent urn runs")},
    "run-particle": {**_MODEL,
                     "n": (_int, 100, "number of particles"),
                     "t": (float, 1.0, "horizon in units of n^2 steps"),
                     "record_dt": (float, 0.1, "recording interval"),
                     "init": (str, "monomorphic", "monomorphic or urn")},
    "run-kchain": {**_MODEL,
                   "n": (_int, 1000, "number of particles"),
                   "t": (float, 1.0, "rescaled horizon"),
                   "variant": (str, "markovized", "markovized or exact"),
                   "s0": (float, 0.5, "rescaled initial diversity (markovized)"),
                   "points": (_int, 11, "number of recorded times"),
                   "replicates": (_int, 1, "independent chains"),
                   "init": (str, "urn", "initial particle system (exact): urn or monomorphic")},
    "run-sde": {**_MODEL,
                "s0": (float, 0.5, "initial value"),
                "t": (float, 1.0, "horizon"),
                "dt": (float, 1e-4, "Euler step"),
                "paths": (_int, 100, "number of paths"),
                "method": (str, "euler", "euler or exact")},
    "run-wf": {**_MODEL,
               "n": (_int, 10, "number of types"),
               "eps": (_opt_float, None, "floor; default n^-eps_exponent"),
               "eps_exponent": (float, 1.1, "exponent of the default floor schedule"),
               "dt": (float, 1e-4, "Euler step"),
               "horizon": (float, 1.0, "simulated time"),
               "record_dt": (float, 0.1, "recording interval"),
               "relabel": (_bool, True, "label types by decreasing frequency at each step")},
    "check": {**_MODEL, "profile": (str, "desk", "smoke, fast or desk")},
    "all-checks": {"profile": (str, "desk", "smoke, fast or desk")},
}
_COMMON = {"seed": (_int, None, "64-bit seed (default: $PDLAB_SEED or 0)"),
           "format": (str, "csv", "csv or json")}


# -- config resolution ---------------------------------------------------------

def read_config_file(path: str) -> dict[str, str]:
    """``key = value`` per line; blank lines and ``#`` comments are ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def resolve_config(command: str, cli: dict[str, Any], file_values: dict[str, str]) -> dict[str, Any]:
    schema = {**SCHEMAS[command], **_COMMON}
    unknown = sorted(set(file_values) - set(schema) - {"threads", "out"})
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
    resolved = {}
    for key, (parse, default, _) in schema.items():
        raw = cli.get(key)
        if raw is None:
            raw = file_values.get(key)
        try:
            resolved[key] = default if raw is None else parse(raw)
        except ValueError as err:
            raise ConfigError(f"{key}: {err}") from None
    if resolved["seed"] is None:
        resolved["seed"] = env_seed(0)
    if not 0 <= resolved["seed"] < 2**64:
        raise ConfigError(f"seed must satisfy 0 <= seed < 2^64, got {resolved['seed']}")
    if resolved["format"] not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {resolved['format']!r}")
    _validate(command, resolved)
    return resolved


def _need(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _validate(command: str, c: dict):
    if "theta" in c:
        Params(c["theta"], c["alpha"])
    for key in ("n", "draws", "replicates", "paths", "points", "cap"):
        if key in c:
            _need(c[key] >= 1, f"{key} must be >= 1, got {c[key]}")
    for key in ("t", "horizon"):
        if key in c:
            _need(c[key] >= 0, f"{key} must be >= 0, got {c[key]}")
    for key in ("dt", "record_dt"):
        if key in c:
            _need(c[key] > 0, f"{key} must be > 0, got {c[key]}")
    if command == "sample-gem":
        _need(0 < c["trunc"] < 1, f"trunc must lie in (0, 1), got {c['trunc']}")
    if command in ("run-particle", "run-kchain", "run-wf"):
        _need(c["n"] >= 2, f"n must be >= 2, got {c['n']}")
    if command == "run-particle" or (command == "run-kchain" and c["variant"] == "exact"):
        _need(c["init"] in ("monomorphic", "urn"), f"init must be monomorphic or urn, got {c['init']!r}")
    if command == "run-kchain":
        _need(c["variant"] in ("markovized", "exact"), f"variant must be markovized or exact, got {c['variant']!r}")
        _need(c["s0"] >= 0, f"s0 must be >= 0, got {c['s0']}")
    if command == "run-sde":
        _need(c["s0"] >= 0, f"s0 must be >= 0, got {c['s0']}")
        _need(c["method"] in ("euler", "exact"), f"method must be euler or exact, got {c['method']!r}")
        if c["method"] == "exact":
            _need(c["theta"] > 0 and c["alpha"] > 0,
                  "the exact transition needs theta > 0 and alpha > 0; use method = euler")
    if command == "run-wf":
        from .wf_diffusion import WfConfig
        WfConfig(c["n"], Params(c["theta"], c["alpha"]), eps=_wf_eps(c), dt=c["dt"], relabel=c["relabel"])
    if command in ("check", "all-checks"):
        from .acceptance import PROFILES
        _need(c["profile"] in PROFILES, f"profile must be one of {sorted(PROFILES)}, got {c['profile']!r}")


def _wf_eps(c: dict) -> float:
    return c["eps"] if c["eps"] is not None else default_eps(c["n"], c["eps_exponent"])


# -- output ----------------------------------------------------------------------

def _meta(config: dict) -> dict:
    return {"config": config, "seed": config["seed"], "version": __version__}


def render(columns: list[str], rows: list[list], config: dict) -> str:
    if config["format"] == "json":
        data = [dict(zip(columns, row)) for row in rows]
        return json.dumps({"meta": _meta(config), "data": data}, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write(f"# pdlab {__version__}\n")
    buf.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def render_report(results, seed: int, profile: str, fmt: str = "json") -> str:
    config = {"command": "all-checks", "profile": profile, "seed": seed, "format": fmt}
    rows = [[r.id, r.name, r.passed, json.dumps(r.details, sort_keys=True)] for r in results]
    if fmt == "json":
        data = [r.as_dict() for r in results]
        return json.dumps({"meta": _meta(config), "data": data}, sort_keys=True, indent=1) + "\n"
    return render(["id", "name", "passed", "details"], rows, config)


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# -- commands --------------------------------------------------------------------

def _replicated(total: int, chunk: int, seed: int, threads, fn):
    """fn(rng, size) over fixed chunks; chunk c draws from stream c."""
    parts = parallel_map(lambda item: fn(make_rng(seed, item[0]), item[1]),
                         enumerate(chunk_sizes(total, chunk)), threads)
    return [row for part in parts for row in part]


def cmd_sample_gem(c, threads):
    from .core import order_map
    from .samplers import sample_gem

    p = Params(c["theta"], c["alpha"])

    def work(rng, size):
        rows = []
        for _ in range(size):
            g = sample_gem(p, c["trunc"], rng, c["cap"])
            w = order_map(g.weights).z if c["ranked"] else g.weights
            rows.append((w, g.residual))
        return [rows]

    draws = [d for part in _replicated(c["draws"], 64, c["seed"], threads, work) for d in part]
    rows = [[d, i + 1, float(x), float(res)] for d, (w, res) in enumerate(draws) for i, x in enumerate(w)]
    return ["draw", "index", "weight", "residual"], rows


def cmd_sample_urn(c, threads):
    from .samplers import urn_run

    p = Params(c["theta"], c["alpha"])

    def work(rng, size):
        return [(s.K, s.M1) for s in (urn_run(p, c["n"], rng) for _ in range(size))]

    rows = [[r, k, m1] for r, (k, m1) in enumerate(_replicated(c["replicates"], 64, c["seed"], threads, work))]
    return ["replicate", "K", "M1"], rows


def cmd_run_particle(c, threads):
    from .chains import particle_run_rescaled

    p = Params(c["theta"], c["alpha"])
    rec = particle_run_rescaled(p, c["n"], c["t"], c["record_dt"], make_rng(c["seed"], 0), init=c["init"])
    rows = [[float(t), len(z), i + 1, float(x)] for t, z in zip(rec.times, rec.values)
            for i, x in enumerate(z.z)]
    return ["time", "K", "rank", "frequency"], rows


def cmd_run_kchain(c, threads):
    from .chains import k_run_rescaled

    p = Params(c["theta"], c["alpha"])

    def work(rng, size):
        out = []
        for _ in range(size):
            rec = k_run_rescaled(p, c["n"], c["t"], c["variant"], rng, s0=c["s0"],
                                 points=c["points"], init=c["init"])
            out.append(list(zip(rec.times.tolist(), np.asarray(rec.values).tolist())))
        return out

    paths = _replicated(c["replicates"], 16, c["seed"], threads, work)
    rows = [[r, t, v] for r, path in enumerate(paths) for t, v in path]
    return ["replicate", "time", "k_scaled"], rows


def cmd_run_sde(c, threads):
    from .diversity_sde import euler_paths, exact_transition_many

    p = Params(c["theta"], c["alpha"])
    if c["method"] == "exact":
        def work(rng, size):
            x = exact_transition_many(np.full(size, c["s0"]), p, c["t"], rng)
            return [(float(v), float("nan"), False) for v in x]
    else:
        def work(rng, size):
            b = euler_paths(c["s0"], p, c["dt"], c["t"], size, rng)
            return list(zip(b.terminal.tolist(), b.minimum.tolist(), b.absorbed.tolist()))

    ends = _replicated(c["paths"], 250, c["seed"], threads, work)
    rows = [[i, s, m, bool(a)] for i, (s, m, a) in enumerate(ends)]
    return ["path", "s_end", "minimum", "absorbed"], rows


def cmd_run_wf(c, threads):
    from .wf_diffusion import WfConfig, wf_run

    cfg = WfConfig(c["n"], Params(c["theta"], c["alpha"]), eps=_wf_eps(c), dt=c["dt"], relabel=c["relabel"])
    rec = wf_run(cfg, c["horizon"], c["record_dt"], make_rng(c["seed"], 0))
    rows = [[float(t), i + 1, float(x)] for t, z in zip(rec.times, rec.values) for i, x in enumerate(z.z)]
    return ["time", "rank", "frequency"], rows


COMMANDS = {
    "sample-gem": cmd_sample_gem,
    "sample-urn": cmd_sample_urn,
    "run-particle": cmd_run_particle,
    "run-kchain": cmd_run_kchain,
    "run-sde": cmd_run_sde,
    "run-wf": cmd_run_wf,
}


def _run_checks(command: str, check_id: str | None, c: dict, threads, out) -> int:
    from . import acceptance

    if command == "check" and check_id == "boundary-class":
        from .diversity_sde import classify_boundary
        report = classify_boundary(Params(c["theta"], c["alpha"]))
        print(report.at_zero)
        if out is not None:
            rows = [[report.at_zero, report.at_infinity, report.recurrence]]
            _emit(render(["at_zero", "at_infinity", "recurrence"], rows, c), out)
        return EXIT_OK

    def show(res):
        print(res.line(), flush=True)

    if command == "check":
        try:
            cid = acceptance.resolve_check(check_id)
        except KeyError as err:
            raise ConfigError(str(err.args[0])) from None
        results = [acceptance.run_check(cid, c["seed"], c["profile"], threads)]
        show(results[0])
    else:
        results = acceptance.run_all(c["seed"], c["profile"], threads, progress=show)
    if out is not None:
        _emit(render_report(results, c["seed"], c["profile"], c["format"]), out)
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pdlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name)
        if name == "check":
            sp.add_argument("check_id", help="criterion number or slug, or boundary-class")
        sp.add_argument("--config", help="key = value file; CLI flags take precedence")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        sp.add_argument("--out", default=None, help="output path (default: stdout)")
        for key, (_, default, help_) in {**schema, **_COMMON}.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                            help=f"{help_} (default: {default})")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        file_values = read_config_file(args.config) if args.config else {}
        config = resolve_config(command, vars(args), file_values)
        config = {"command": command, **config}
        threads = args.threads if args.threads is not None else _opt_int(file_values.get("threads"))
        out = args.out if args.out is not None else file_values.get("out")
        print("# resolved config: " + json.dumps(config, sort_keys=True), file=sys.stderr)
        if command in ("check", "all-checks"):
            return _run_checks(command, getattr(args, "check_id", None), config, threads, out)
        columns, rows = COMMANDS[command](config, threads)
        _emit(render(columns, rows, config), out)
        return EXIT_OK
    except (ConfigError, SimplexError, ValueError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


def _opt_int(raw):
    return None if raw is None else _int(raw)


if __name__ == "__main__":
    sys.exit(main())
