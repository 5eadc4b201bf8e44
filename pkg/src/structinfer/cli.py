"""Command-line entry point: ``structinfer VERB [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver
non-convergence (outputs are still written, with flags). Every error prints
one line ``structinfer: error code=<n> kind=<kind> msg=<text>`` on stderr.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import norms as _norms
from .errors import DataError, NotAllowedError, SingularMatrixError, StructInferError
from .inference import desparsify, group_region, pointwise_ci, write_regions
from .norms import NormSpec
from .precision import PrecisionCache, fit_precision
from .simharness import (
    MAIN_MULTIPLIERS,
    NODE_MULTIPLIERS,
    Framework,
    SimulationConfig,
    compare_frameworks,
    locate_lambdas,
    run_scenario,
    write_comparison,
    write_diagnostics,
    write_raw_log,
    write_results,
    write_sweep,
)
from .solvers import Dataset, SolverOptions, fit_penalized

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NONCONVERGED = 3

VERBS = ("fit", "desparsify", "ci", "simulate", "compare", "normtool")
HARNESS_KEYS = ("lambda_main_base", "lambda_node_base", "r_pilot", "scenarios")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(x):
    # adding 0.0 maps -0.0 to 0.0
    return f"{float(x) + 0.0:.15g}"


def _emit_error(code, kind, msg):
    msg = " ".join(str(msg).split())
    print(f"structinfer: error code={code} kind={kind} msg={msg}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# configuration


def parse_value(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


def apply_overrides(config, pairs):
    """Apply ``key=value`` overrides; dotted keys address nested objects."""
    config = dict(config)
    for pair in pairs or ():
        if "=" not in pair:
            raise UsageError(f"override {pair!r} is not key=value")
        key, text = pair.split("=", 1)
        parts = key.strip().split(".")
        node = config
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
            node[part] = child = dict(child)
            node = child
        node[parts[-1]] = parse_value(text)
    return config


def load_config(path, overrides=None):
    if path is None:
        config = {}
    else:
        if not os.path.isfile(path):
            raise UsageError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                config = json.load(fh)
        except ValueError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError("config must be a JSON object")
    return apply_overrides(config, overrides)


def resolve_threads(value):
    """--threads, else STRUCTINFER_THREADS, else 1; 0 means all CPUs."""
    if value is None:
        env = os.environ.get("STRUCTINFER_THREADS")
        if env is None or env.strip() == "":
            return 1
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"STRUCTINFER_THREADS={env!r} is not an integer") from None
    if value < 0:
        raise UsageError("--threads must be non-negative")
    return value or (os.cpu_count() or 1)


def _norm_from(config, p):
    spec = config.get("norm", "l1")
    if isinstance(spec, dict):
        norm = NormSpec.from_dict(spec)
    else:
        norm = _simple_norm(str(spec), p)
    if norm.p != p:
        raise DataError(f"norm dimension {norm.p} does not match {p} columns")
    return norm


def _simple_norm(kind, p):
    kind = _norms.NormKind.parse(kind)
    if kind is _norms.NormKind.L1:
        return NormSpec.l1(p)
    if kind is _norms.NormKind.WEDGE:
        return NormSpec.wedge(p)
    if kind is _norms.NormKind.LORENTZ:
        return NormSpec.lorentz(p)
    raise DataError(f"norm kind {kind.value} needs a full JSON specification")


def _solver_opts(config):
    return SolverOptions.from_dict(config.get("solver", {}))


def _out_dir(path):
    path = path or "."
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")
    return path


def _data(args, config):
    path = args.data or config.get("data")
    if path is None:
        raise UsageError("a dataset is required (--data or config key 'data')")
    if not os.path.isfile(path):
        raise UsageError(f"data file not found: {path}")
    return Dataset.from_csv(path)


def _target_sets(config, p):
    """Target sets from config ``sets``: "pointwise" or a list of index lists."""
    sets = config.get("sets", "pointwise")
    if sets == "pointwise":
        return [[j] for j in range(p)]
    if not isinstance(sets, list) or not sets:
        raise DataError("'sets' must be \"pointwise\" or a non-empty list of index lists")
    out = []
    for s in sets:
        s = [s] if isinstance(s, int) else list(s)
        idx = _norms.as_index_set(s, p)
        out.append(idx.tolist())
    return out


# ---------------------------------------------------------------------------
# verbs


def cmd_fit(args, config):
    data = _data(args, config)
    if data.Y is None:
        raise DataError("dataset has no response column 'y'")
    norm = _norm_from(config, data.p)
    lam = config.get("lambda")
    if lam is None:
        raise DataError("config needs 'lambda'")
    fit = fit_penalized(data, norm, float(lam), _solver_opts(config))
    out = _out_dir(args.out)
    record = fit.to_dict()
    record["norm"] = norm.to_dict()
    with open(os.path.join(out, "fit.json"), "w") as fh:
        json.dump(record, fh, indent=1)
        fh.write("\n")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def _desparsified(args, config):
    data = _data(args, config)
    if data.Y is None:
        raise DataError("dataset has no response column 'y'")
    norm = _norm_from(config, data.p)
    lam = config.get("lambda")
    lam_node = config.get("lambda_node")
    if lam is None or lam_node is None:
        raise DataError("config needs 'lambda' and 'lambda_node'")
    opts = _solver_opts(config)
    framework = Framework.parse(config.get("framework", "gauge"))
    sigma = config.get("sigma")
    fit = fit_penalized(data, norm, float(lam), opts)
    converged = fit.converged
    estimates = []
    for J in _target_sets(config, data.p):
        prec = fit_precision(data, J, norm, framework, float(lam_node), opts)
        converged = converged and prec.converged
        estimates.append((J, desparsify(data, fit, prec, sigma=sigma), prec))
    return estimates, converged


def cmd_desparsify(args, config):
    estimates, converged = _desparsified(args, config)
    out = _out_dir(args.out)
    with open(os.path.join(out, "desparsified.csv"), "w") as fh:
        fh.write("set_id,J,b,M,sigma_hat,sigma_mode,kkt_gap,converged,advisory\n")
        for k, (J, est, prec) in enumerate(estimates):
            fh.write(",".join([
                str(k),
                ";".join(str(j) for j in J),
                ";".join(fmt(b) for b in est.b_J),
                ";".join(fmt(m) for m in np.ravel(est.M)),
                fmt(est.sigma_hat),
                est.sigma_mode.value,
                fmt(prec.kkt_gap),
                str(int(prec.converged)),
                prec.advisory.replace(",", ";"),
            ]) + "\n")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_ci(args, config):
    alpha = float(config.get("alpha", 0.05))
    estimates, converged = _desparsified(args, config)
    regions = []
    for k, (J, est, _) in enumerate(estimates):
        region = pointwise_ci(est, alpha) if len(J) == 1 else group_region(est, alpha)
        regions.append((k, region))
    out = _out_dir(args.out)
    write_regions(os.path.join(out, "regions.csv"), regions)
    return EXIT_OK if converged else EXIT_NONCONVERGED


def _sim_config(config, args):
    cfg_keys = {k: v for k, v in config.items() if k not in HARNESS_KEYS}
    if args.seed is not None:
        cfg_keys["seed"] = args.seed
    cfg_keys["threads"] = resolve_threads(args.threads)
    return SimulationConfig.from_dict(cfg_keys)


def _bases(config, cfg):
    main_base = config.get("lambda_main_base")
    node_base = config.get("lambda_node_base")
    if cfg.lambda_main is None and main_base is None:
        raise DataError("lambda_main is 'auto' but lambda_main_base is missing")
    if cfg.lambda_node is None and node_base is None:
        raise DataError("lambda_node is 'auto' but lambda_node_base is missing")
    return main_base, node_base


def _scenarios(config):
    """Per-scenario config dicts: the base with each ``scenarios`` entry merged."""
    base = {k: v for k, v in config.items() if k != "scenarios"}
    items = config.get("scenarios") or [{}]
    if not isinstance(items, list):
        raise DataError("'scenarios' must be a list of objects")
    out = []
    for item in items:
        if not isinstance(item, dict):
            raise DataError("'scenarios' must be a list of objects")
        merged = dict(base)
        merged.update(item)
        out.append(merged)
    return out


def _choose(cfg, config, cache, frameworks):
    """Fill in missing penalty levels; returns (lambda_main, node dict, choice).

    A fixed level is kept as the only candidate; a missing one is searched
    over the built-in multiplier grid times its base.
    """
    main_base, node_base = _bases(config, cfg)
    if cfg.lambda_main is not None and cfg.lambda_node is not None:
        return cfg.lambda_main, {fw: cfg.lambda_node for fw in frameworks}, None
    fixed_main = cfg.lambda_main is not None
    fixed_node = cfg.lambda_node is not None
    choice = locate_lambdas(
        cfg,
        cfg.lambda_main if fixed_main else main_base,
        cfg.lambda_node if fixed_node else node_base,
        r_pilot=int(config.get("r_pilot", 20)),
        frameworks=frameworks,
        cache=cache,
        main_multipliers=(1.0,) if fixed_main else MAIN_MULTIPLIERS,
        node_multipliers=(1.0,) if fixed_node else NODE_MULTIPLIERS,
    )
    return choice.lambda_main, choice.lambda_node, choice


def _summary_line(res):
    s = res.summary()
    return " ".join(f"{k}={fmt(v) if isinstance(v, float) else v}" for k, v in s.items())


def cmd_simulate(args, config):
    out = _out_dir(args.out)
    cache = PrecisionCache()
    results = []
    choices = []
    for scen in _scenarios(config):
        cfg = _sim_config(scen, args)
        lam_main, lam_node, choice = _choose(cfg, scen, cache, (cfg.framework,))
        cfg = replace(cfg, lambda_main=lam_main, lambda_node=lam_node[cfg.framework])
        res = run_scenario(cfg, cache=cache)
        results.append(res)
        if choice is not None:
            choices.append((cfg.s0, choice))
        print(_summary_line(res))
    _write_all(out, results, choices)
    ok = all(not r.failed_reps and not r.failed_cells for r in results)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_compare(args, config):
    out = _out_dir(args.out)
    cache = PrecisionCache()
    results = []
    reports = []
    choices = []
    frameworks = (Framework.GAUGE, Framework.OMEGA)
    for scen in _scenarios(config):
        scen = dict(scen)
        scen.pop("framework", None)
        cfg = _sim_config(scen, args)
        lam_main, lam_node, choice = _choose(cfg, scen, cache, frameworks)
        base = replace(cfg, lambda_main=lam_main)
        report = compare_frameworks(
            replace(base, framework=Framework.GAUGE, lambda_node=lam_node[Framework.GAUGE]),
            replace(base, framework=Framework.OMEGA, lambda_node=lam_node[Framework.OMEGA]),
            cache=cache,
        )
        reports.append(report)
        results.extend([report.gauge, report.omega])
        if choice is not None:
            choices.append((cfg.s0, choice))
        print(_summary_line(report.gauge))
        print(_summary_line(report.omega))
        print(f"s0={cfg.s0} active_length_ratio={fmt(report.active_length_ratio)}")
    _write_all(out, results, choices)
    write_comparison(os.path.join(out, "comparison.csv"), reports)
    ok = all(not r.failed_reps and not r.failed_cells for r in results)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def _write_all(out, results, choices):
    write_results(os.path.join(out, "results.csv"), results)
    write_raw_log(os.path.join(out, "raw_log.csv"), results)
    write_diagnostics(os.path.join(out, "diagnostics.csv"), results)
    if choices:
        path = os.path.join(out, "lambda_sweep.csv")
        for k, (s0, choice) in enumerate(choices):
            write_sweep(path, s0, choice, append=k > 0)


def _vector(text, name):
    if text is None:
        raise UsageError(f"--{name} is required")
    try:
        vals = [float(t) for t in text.split(",") if t.strip() != ""]
    except ValueError:
        raise DataError(f"--{name} must be comma-separated numbers") from None
    if not vals:
        raise DataError(f"--{name} is empty")
    return np.array(vals)


def _normtool_norm(args, p):
    if args.norm_json:
        return NormSpec.from_json(args.norm_json)
    kind = _norms.NormKind.parse(args.kind)
    weights = _vector(args.weights, "weights") if args.weights else None
    if kind is _norms.NormKind.L1:
        return NormSpec.l1(p, weights if weights is not None else 1.0)
    if kind is _norms.NormKind.SLOPE:
        if weights is None:
            raise UsageError("slope needs --weights")
        return NormSpec.slope(weights)
    if kind is _norms.NormKind.WEDGE:
        return NormSpec.wedge(p)
    if kind is _norms.NormKind.LORENTZ:
        return NormSpec.lorentz(p)
    groups = json.loads(args.groups) if args.groups else None
    if kind in (_norms.NormKind.GROUP_LASSO, _norms.NormKind.GROUP_WEDGE):
        if groups is None:
            raise UsageError(f"{kind.value} needs --groups (JSON list of index lists)")
        if kind is _norms.NormKind.GROUP_WEDGE:
            return NormSpec.group_wedge(groups)
        return NormSpec.group_lasso(groups, weights if weights is not None else None)
    protected = [int(t) for t in args.protected.split(",")] if args.protected else None
    if protected is None:
        raise UsageError("generalized_lorentz needs --protected")
    return NormSpec.generalized_lorentz(p, protected)


def cmd_normtool(args, config):
    op = args.op
    if op == "dual":
        vec = _vector(args.z if args.z is not None else args.beta, "z")
    else:
        vec = _vector(args.beta, "beta")
    norm = _normtool_norm(args, vec.size)
    if op == "eval":
        print(fmt(norm.evaluate(vec)))
    elif op == "prox":
        t = float(args.t if args.t is not None else 1.0)
        print(",".join(fmt(v) for v in norm.prox(vec, t)))
    elif op == "dual":
        val, exact = norm.dual(vec, full_output=True)
        print(fmt(val) if exact else f"{fmt(val)} approximate")
    elif op == "gauge":
        g = _norms.gauge_of(norm)
        print(fmt(g.evaluate(vec)))
        print(g.to_json())
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "desparsify": cmd_desparsify,
    "ci": cmd_ci,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "normtool": cmd_normtool,
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (repeatable, dotted keys allowed)")
    common.add_argument("--seed", type=int, help="random seed (64-bit)")
    common.add_argument("--threads", type=int, help="worker threads, 0 = all CPUs")

    parser = _Parser(prog="structinfer", description="Structured-sparsity inference toolkit.")
    sub = parser.add_subparsers(dest="verb", parser_class=_Parser)
    for verb in ("fit", "desparsify", "ci"):
        sp = sub.add_parser(verb, parents=[common])
        sp.add_argument("--data", help="CSV with header y,x1,...,xp")
    sub.add_parser("simulate", parents=[common])
    sub.add_parser("compare", parents=[common])
    nt = sub.add_parser("normtool", parents=[common])
    nt.add_argument("op", choices=("eval", "prox", "dual", "gauge"))
    nt.add_argument("--kind", default="l1")
    nt.add_argument("--beta", help="comma-separated vector")
    nt.add_argument("--z", help="comma-separated vector for dual")
    nt.add_argument("--t", type=float, help="prox step (default 1)")
    nt.add_argument("--weights", help="comma-separated weights")
    nt.add_argument("--groups", help="JSON list of index lists")
    nt.add_argument("--protected", help="comma-separated protected indices")
    nt.add_argument("--norm-json", dest="norm_json", help="full NormSpec as JSON")
    return parser


def dispatch(argv):
    """Run one command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verb is None:
            raise UsageError(f"a verb is required: {', '.join(VERBS)}")
        config = load_config(args.config, args.set)
        return COMMANDS[args.verb](args, config)
    except UsageError as exc:
        return _emit_error(EXIT_USAGE, "usage", exc)
    except (DataError, NotAllowedError) as exc:
        return _emit_error(EXIT_DATA, "data", exc)
    except SingularMatrixError as exc:
        return _emit_error(EXIT_DATA, "singular", f"{exc.matrix_name}: {exc}")
    except StructInferError as exc:
        return _emit_error(EXIT_DATA, "data", exc)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        return _emit_error(EXIT_DATA, "data", exc)


def main(argv=None):
    sys.exit(dispatch(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
