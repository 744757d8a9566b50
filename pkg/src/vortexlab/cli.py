"""Command-line front end.

Every option can come from a TOML file (``--config``) or a flag; flags win.
Outputs carry a digest of the effective configuration and the seed.
Exit status: 0 ok, 2 configuration error, 3 non-convergence, 4 failed check.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, ConvergenceError, DomainError, PreconditionError, \
    PropertyCheckError, VortexlabError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("vortexlab")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_PROPERTY = 0, 2, 3, 4


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


# name, TOML path, type, default, help
OPTIONS = [
    ("N", "params.N", int, 4, "ambient dimension (>= 2)"),
    ("eps", "params.eps", float, 0.1, "core size epsilon"),
    ("eta", "params.eta", float, 1.0, "out-of-plane penalty eta"),
    ("lam", "params.lam", float, 0.0, "lambda of the biharmonic functional"),
    ("p", "params.p", float, 1.5, "exponent of the L^p constraint, 1 <= p < 2"),
    ("d", "params.d", float, 1.0, "radius of the L^p constraint"),
    ("W", "potentials.W.kind", str, "half-square", "potential W: zero, half-square, square, polynomial"),
    ("W_coeffs", "potentials.W.coeffs", _floats, None, "coefficients of a polynomial W (t^0, t^1, ...)"),
    ("Wt", "potentials.Wt.kind", str, "linear", "potential W~: zero, linear, half-square, square, polynomial"),
    ("Wt_coeffs", "potentials.Wt.coeffs", _floats, None, "coefficients of a polynomial W~"),
    ("points", "grid.points", int, None, "radial grid points (default depends on the command)"),
    ("kmax", "grid.kmax", int, 3, "highest zonal degree in descent runs"),
    ("eps_values", "phase.eps", _floats, None, "comma-separated eps lattice"),
    ("eta_values", "phase.eta", _floats, None, "comma-separated eta lattice"),
    ("check", "forms.check", str, "prop24", "forms check: prop24, chain, hardy-rellich, counterexample"),
    ("samples", "forms.samples", int, 100, "random fields per dimension in property checks"),
    ("model", "minimize.model", str, "extended", "profile/minimize model: gl, extended, mm, biharmonic"),
    ("maxiter", "tolerances.maxiter", int, 4000, "iteration cap for descent"),
    ("gtol", "tolerances.gtol", float, 1e-8, "relative preconditioned-gradient tolerance"),
    ("init_file", "io.init_file", str, None, "JSON start for minimize (configuration or field)"),
    ("field_file", "io.field_file", str, None, "JSON field for symmetrize"),
    ("out", "io.out", str, None, "output file (stdout when omitted)"),
    ("history", "io.history", str, None, "CSV file for the descent history"),
    ("only", "report.only", str, None, "comma-separated subset of report criteria"),
    ("seed", "seed", int, 0, "random seed, recorded in every output"),
]
OUTPUT_KEYS = {"out", "history"}
COMMANDS = {
    "profile": ("radial profile on a grid (CSV r,f,g,residual_f,residual_g)",
                ["N", "eps", "eta", "W", "W_coeffs", "Wt", "Wt_coeffs", "points", "model", "out"]),
    "phase": ("escape phase diagram (CSV eps,eta,ell,tag)",
              ["N", "W", "W_coeffs", "Wt", "Wt_coeffs", "points", "eps_values", "eta_values", "out"]),
    "spectrum": ("ell(eps), T spectrum and onset values (JSON)",
                 ["N", "eps", "eta", "W", "W_coeffs", "Wt", "Wt_coeffs", "points", "out"]),
    "forms": ("quadratic-form property checks (JSON)",
              ["N", "eps", "eta", "W", "W_coeffs", "Wt", "Wt_coeffs", "points", "check", "samples",
               "out"]),
    "symmetrize": ("gradient symmetrization of a field and its checks (JSON field)",
                   ["N", "points", "field_file", "out"]),
    "minimize": ("descent on the zonal energies (JSON result, CSV history)",
                 ["N", "eps", "eta", "lam", "p", "d", "W", "W_coeffs", "Wt", "Wt_coeffs", "points",
                  "kmax", "model", "maxiter", "gtol", "init_file", "out", "history"]),
    "report": ("run acceptance criteria 1-11 (JSON summary)", ["only", "out"]),
    "schema": ("write the configuration schema (JSON)", ["out"]),
}
_BY_NAME = {o[0]: o for o in OPTIONS}


# ---- configuration ---------------------------------------------------------------------


def _lookup(table, path):
    node = table
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def _known_paths(table, prefix=""):
    for k, v in table.items():
        path = f"{prefix}{k}"
        if isinstance(v, dict) and not any(o[1] == path for o in OPTIONS):
            yield from _known_paths(v, path + ".")
        else:
            yield path


def load_config(path):
    try:
        with open(path, "rb") as fh:
            table = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    known = {o[1] for o in OPTIONS}
    unknown = [p for p in _known_paths(table) if p not in known]
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return table


def resolve(command, args):
    """Effective settings: flag, else file, else default; validated."""
    table = load_config(args.config) if args.config else {}
    cfg = {}
    for name in COMMANDS[command][1] + ["seed"]:
        _, path, conv, default, _ = _BY_NAME[name]
        val = getattr(args, name, None)
        if val is None:
            val = _lookup(table, path)
        if val is None:
            val = default
        if val is not None:
            try:
                val = conv(val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {name}: {val!r}") from exc
        cfg[name] = val
    _validate(cfg)
    return cfg


def _validate(cfg):
    if "N" in cfg and (cfg["N"] is None or cfg["N"] < 2):
        raise ConfigError(f"dimension must be an integer >= 2, got {cfg.get('N')!r}")
    for key in ("eps", "eta", "gtol", "d"):
        if key in cfg and cfg[key] is not None and not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("points", "samples", "maxiter", "kmax"):
        if key in cfg and cfg[key] is not None and cfg[key] < 1:
            raise ConfigError(f"{key} must be positive")
    if cfg.get("seed") is not None and cfg["seed"] < 0:
        raise ConfigError("seed must be non-negative")


def digest(cfg):
    body = {k: v for k, v in cfg.items() if k not in OUTPUT_KEYS}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def schema():
    return {"format": "TOML; flags override file values",
            "keys": [{"flag": "--" + n.replace("_", "-"), "toml": path,
                      "type": {int: "integer", float: "number", str: "string"}.get(conv, "list of numbers"),
                      "default": default, "help": text}
                     for n, path, conv, default, text in OPTIONS],
            "commands": {c: {"help": h, "keys": keys} for c, (h, keys) in COMMANDS.items()},
            "exit_codes": {"0": "ok", "2": "configuration error", "3": "solver non-convergence",
                           "4": "property-check failure"}}


# ---- output -------------------------------------------------------------------------------


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def write_csv(path, header, rows, cfg):
    """RFC-4180 CSV; a trailing comment line carries the config digest and seed."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    buf.write(f"# config_digest={digest(cfg)} seed={cfg['seed']}\r\n")
    _write_text(path, buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path, payload, cfg):
    body = {"config_digest": digest(cfg), "seed": cfg["seed"], "config": cfg}
    body.update(payload)
    _write_text(path, json.dumps(_jsonable(body), sort_keys=True, indent=1) + "\n")


# ---- commands -------------------------------------------------------------------------------


def _potentials(cfg):
    from .potentials import make_W, make_Wt

    W = make_W(cfg["W"], cfg.get("W_coeffs")) if "W" in cfg else None
    Wt = make_Wt(cfg["Wt"], cfg.get("Wt_coeffs")) if "Wt" in cfg else None
    return W, Wt


def _grid(cfg, default):
    from .numerics import RadialGrid

    return RadialGrid(cfg["N"], cfg.get("points") or default)


def cmd_profile(cfg):
    from .profiles import solve_extended_profile, solve_gl_profile, solve_mm_profile

    W, Wt = _potentials(cfg)
    grid = _grid(cfg, 600)
    model = cfg["model"]
    if model == "gl":
        prof = solve_gl_profile(cfg["N"], cfg["eps"], W, grid)
    elif model == "extended":
        prof = solve_extended_profile(cfg["N"], cfg["eps"], cfg["eta"], W, Wt, grid)
    elif model == "mm":
        prof = solve_mm_profile(cfg["N"], cfg["eta"], Wt, grid)
    else:
        raise ConfigError(f"profile model must be gl, extended or mm, not {model!r}")
    write_csv(cfg["out"], ["r", "f", "g", "residual_f", "residual_g"], prof.to_rows(), cfg)
    log.info("branch %s, energy %.12g", prof.branch, prof.energy)
    return EXIT_OK


def cmd_phase(cfg):
    from .spectral import phase_diagram

    W, Wt = _potentials(cfg)
    eps = cfg["eps_values"] or list(np.geomspace(0.05, 0.5, 5))
    eta = cfg["eta_values"] or list(np.geomspace(0.1, 1.6, 5))
    pd = phase_diagram(cfg["N"], W, Wt, eps, eta, _grid(cfg, 600))
    write_csv(cfg["out"], ["eps", "eta", "ell", "tag"], pd.rows(), cfg)
    log.info("eps0: %s", pd.eps0.to_dict())
    bad = pd.check_invariants()
    if pd.errors:
        raise ConvergenceError(f"linearization failed at eps = {sorted(pd.errors)}")
    if bad:
        raise PropertyCheckError("; ".join(bad))
    return EXIT_OK


def cmd_spectrum(cfg):
    from .profiles import solve_extended_profile
    from .spectral import classify_from_ell, ell_of_eps, eta0_from_ell, find_eps0, \
        t_operator_spectrum

    W, Wt = _potentials(cfg)
    grid = _grid(cfg, 600)
    N, eps, eta = cfg["N"], cfg["eps"], cfg["eta"]
    ell = ell_of_eps(N, eps, W, grid)
    prof = solve_extended_profile(N, eps, eta, W, Wt, grid)
    sp = t_operator_spectrum(prof, W, Wt)
    out = {"ell": ell, "tag": classify_from_ell(ell, eta, Wt), "branch": prof.branch,
           "eta0": eta0_from_ell(ell, Wt) if ell < 0 else None, "T": sp.to_dict(),
           "eps0": find_eps0(N, W, grid).to_dict()}
    write_json(cfg["out"], {"spectrum": out}, cfg)
    return EXIT_OK


def cmd_forms(cfg):
    from .fields import random_mode_field
    from .forms import estimate_chain, f_eps_negativity, find_counterexample, \
        hardy_rellich_ratio, quadratic_form_F
    from .profiles import solve_extended_profile

    W, Wt = _potentials(cfg)
    N, check = cfg["N"], cfg["check"]
    rng = np.random.default_rng(cfg["seed"])
    failed = False
    if check == "counterexample":
        cex = find_counterexample(N)
        neg = f_eps_negativity(N, cex, W=W)
        out = {"counterexample": cex.to_dict(), "negativity": neg}
        failed = not neg["negative"]
    else:
        grid = _grid(cfg, 600)
        prof = solve_extended_profile(N, cfg["eps"], cfg["eta"], W, Wt, grid) \
            if check in ("prop24", "chain") else None
        per_mode = {}
        samples = []
        for _ in range(cfg["samples"]):
            v = random_mode_field(N, grid, rng, degrees=(0, 1, 2, 3))
            if check == "prop24":
                F = quadratic_form_F(v, prof, W=W)
                rel = F.margin / F.scale
                samples.append({"margin": F.margin, "scale": F.scale, "relative": rel})
                for k, a, b, c in zip(F.degrees, F.I, F.II, F.III):
                    m = per_mode.setdefault(k, {"I": math.inf, "II": math.inf, "III": math.inf})
                    for key, val in (("I", a), ("II", b), ("III", c)):
                        m[key] = min(m[key], val / F.scale)
                failed |= rel < -1e-8
            elif check == "chain":
                scale = quadratic_form_F(v, prof, W=W).scale
                for entry in estimate_chain(v, prof, W=W):
                    m = per_mode.setdefault(entry["k"], {"I": math.inf, "II": math.inf,
                                                         "III": math.inf})
                    for key in ("I", "II", "III"):
                        lhs, rhs = entry[key]
                        m[key] = min(m[key], (lhs - rhs) / scale)
                        failed |= (lhs - rhs) < -1e-8 * scale
            elif check == "hardy-rellich":
                r = hardy_rellich_ratio(N, v)
                samples.append(r)
                failed |= not r["ok"]
            else:
                raise ConfigError(f"unknown forms check {check!r}")
        out = {"check": check, "per_mode_min_relative": per_mode, "samples": samples}
        if check == "prop24" and N < 4:
            out["note"] = "the Hardy-type bound is proven only for N >= 4"
            failed = False
    write_json(cfg["out"], {"forms": out}, cfg)
    return EXIT_PROPERTY if failed else EXIT_OK


def cmd_symmetrize(cfg):
    from .fields import CLAMPED, ModeField, random_mode_field
    from .symmetrize import check_delta_decrease, slice_gradient_check, symmetrize_gradient

    if cfg["field_file"]:
        try:
            with open(cfg["field_file"]) as fh:
                field = ModeField.from_json(fh.read())
        except FileNotFoundError as exc:
            raise ConfigError(f"field file not found: {cfg['field_file']}") from exc
    else:
        grid = _grid(cfg, 400)
        field = random_mode_field(cfg["N"], grid, np.random.default_rng(cfg["seed"]),
                                  boundary=CLAMPED)
    sym = symmetrize_gradient(field)
    sl = slice_gradient_check(field)
    checks = {"slice_error": sl["max_error"]}
    try:
        dd = check_delta_decrease(field)
        checks.update({"laplacian_gap": dd["gap"], "gap_bound": dd["bound"], "ok": dd["ok"]})
    except PreconditionError as exc:
        checks["laplacian_check"] = str(exc)
    log.info("checks: %s", checks)
    payload = sym.to_dict()
    payload["checks"] = checks
    write_json(cfg["out"], payload, cfg)
    return EXIT_OK if sl["ok"] and checks.get("ok", True) else EXIT_PROPERTY


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def cmd_minimize(cfg):
    from .energy import ZonalConfig, ZonalDiscretization, minimize_biharmonic_J, \
        minimize_extended, minimize_mm, witness_init
    from .fields import ModeField

    W, Wt = _potentials(cfg)
    N, model = cfg["N"], cfg["model"]
    rng = np.random.default_rng(cfg["seed"])
    if model == "biharmonic":
        init = None
        grid = None
        if cfg["init_file"]:
            f = ModeField.from_dict(_read_json(cfg["init_file"]))
            grid = f.grid
            init = np.zeros((cfg["kmax"] + 1, grid.M + 1))
            for k, d1 in zip(f.degrees, f.d1):
                if k <= cfg["kmax"]:
                    init[k] = d1
        res = minimize_biharmonic_J(N, cfg["p"], cfg["lam"], cfg["d"],
                                    grid=grid or _grid(cfg, 240), kmax=cfg["kmax"], init=init,
                                    rng=rng, maxiter=cfg["maxiter"])
        i = res.info
        symmetric = (i["nonradial_mass"] <= 1e-5 and i["sign_definite"] and i["monotone"]
                     and i["el_residual"] <= 1e-4)
        payload = {"result": {"field": res.config.to_dict(), "info": i,
                              "converged": res.converged, "reason": res.reason}}
        assert_symmetry = N >= 5
    else:
        if cfg["init_file"]:
            init = ZonalConfig.from_dict(_read_json(cfg["init_file"]))
        else:
            disc = ZonalDiscretization(N, _grid(cfg, 200), kmax=cfg["kmax"])
            init = witness_init(disc, cfg["eps"], W, seed=cfg["seed"])
        if model == "extended":
            res = minimize_extended(init, cfg["eps"], cfg["eta"], W, Wt, maxiter=cfg["maxiter"],
                                    gtol=cfg["gtol"])
        elif model == "mm":
            res = minimize_mm(init, cfg["eta"], Wt, maxiter=min(cfg["maxiter"], 2000),
                              gtol=cfg["gtol"])
        else:
            raise ConfigError(f"minimize model must be extended, mm or biharmonic, not {model!r}")
        symmetric = res.info["nonradial_mass"] <= 1e-5
        payload = {"result": {"configuration": res.config.to_dict(), "info": res.info,
                              "converged": res.converged, "reason": res.reason}}
        assert_symmetry = 4 <= N <= 6
    payload["result"]["symmetry_asserted"] = assert_symmetry
    payload["result"]["radial"] = symmetric
    write_json(cfg["out"], payload, cfg)
    if cfg["history"]:
        write_csv(cfg["history"], ["iter", "energy", "grad_norm", "nonradial_mass"],
                  res.history, cfg)
    if not res.converged:
        raise ConvergenceError(f"descent stopped ({res.reason}) above tolerance")
    if assert_symmetry and not symmetric:
        raise PropertyCheckError("minimizer is not radial")
    return EXIT_OK


def cmd_report(cfg):
    from .acceptance import run_report, summary_json

    only = [int(x) for x in str(cfg["only"]).split(",")] if cfg["only"] else None

    def progress(r):
        print(r.line(), file=sys.stderr, flush=True)

    _, summary = run_report(cfg["seed"], only=only, progress=progress)
    summary["config_digest"] = digest(cfg)
    _write_text(cfg["out"], summary_json(summary))
    return EXIT_OK if summary["all_passed"] else EXIT_PROPERTY


def cmd_schema(cfg):
    _write_text(cfg["out"], json.dumps(schema(), indent=1) + "\n")
    return EXIT_OK


HANDLERS = {"profile": cmd_profile, "phase": cmd_phase, "spectrum": cmd_spectrum,
            "forms": cmd_forms, "symmetrize": cmd_symmetrize, "minimize": cmd_minimize,
            "report": cmd_report, "schema": cmd_schema}


# ---- entry point ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="vortexlab", description=__doc__.split("\n")[0],
                                epilog="exit status: 0 ok, 2 config, 3 non-convergence, "
                                       "4 property failure")
    p.add_argument("--version", action="version", version=f"vortexlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (text, keys) in COMMANDS.items():
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", help="TOML file with the same keys (see `vortexlab schema`)")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        for key in keys + ["seed"]:
            _, path, conv, default, helptext = _BY_NAME[key]
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                            type=str if conv is _floats else conv,
                            help=f"{helptext} [toml: {path}; default: {default}]")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args.command, args)
        return HANDLERS[args.command](cfg)
    except (ConfigError, PreconditionError, DomainError) as exc:
        print(f"vortexlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"vortexlab: no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except PropertyCheckError as exc:
        print(f"vortexlab: check failed: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except VortexlabError as exc:
        print(f"vortexlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"vortexlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
