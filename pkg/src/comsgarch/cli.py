"""Command-line surface: simulate, fit, cv, forecast, analyze, ingest-fx.

Every run reads/writes the package's CSV and key=value formats, stamps its
outputs with the seed and a hash of the effective configuration, and exits
with 0 on success, 2 on validation errors, and 3 on numerical domain errors.
"""

import argparse
import sys

import numpy as np

from . import io
from .analysis import ensemble_weight, stability_experiment
from .core import volatility_path
from .crops import CropsConfig, CropsResult, run_crops
from .errors import DomainError, ValidationError
from .forecast import forecast as forecast_volatility
from .inference import InferenceConfig
from .simulate import SimConfig, balanced_params, perturb, simulate
from .tuning import CvConfig, run_cv
from .types import DiffSeries, ObservedSeries, PivotalWindow, StatePath, TransitionRates

GAP_SPREAD_EXACT_SWITCH = 10.0


def _parse_floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise ValidationError(f"cannot parse {text!r} as a comma-separated float list")


def _derived_seed(seed, tag):
    return int(np.random.SeedSequence(seed, spawn_key=(tag,)).generate_state(1)[0])


def _uniform_rates(nu, eta):
    m = np.full((nu, nu), float(eta))
    np.fill_diagonal(m, 0.0)
    return TransitionRates(eta=m)


def _write_meta(out_path, command, settings):
    meta = {f"cfg_{k}": str(v) for k, v in sorted(settings.items())}
    meta["command"] = command
    meta["config_hash"] = io.config_hash(meta)
    io.write_keyvalues(out_path, meta)


def _resolve_rho(args, obs):
    if args.rho is not None:
        return args.rho
    spread = io.gap_spread(obs)
    if spread > GAP_SPREAD_EXACT_SWITCH:
        print(
            f"notice: max(dt)/median(dt) = {spread:.1f} > {GAP_SPREAD_EXACT_SWITCH:g}; "
            "using the exact increment variance",
            file=sys.stderr,
        )
        return "exact"
    return "approx"


def cmd_simulate(args):
    c = _parse_floats(args.c)
    nu = len(c)
    family = "cogarch" if nu == 1 else "comsgarch"
    params = balanced_params(args.zeta, c, family)
    rates = _uniform_rates(nu, args.eta)
    if args.n < 2:
        raise ValidationError("--n must be at least 2 (rows of the emitted series)")
    config = SimConfig(
        n=args.n - 1,
        zeta=args.zeta,
        balance=tuple(c),
        rates=rates,
        seed=args.seed,
        gap_mode=args.gap_mode,
        sigma2_0=args.sigma0,
    )
    obs, diff, path, vol = simulate(config, params)

    out_obs = obs
    if args.perturb_eps is not None and args.perturb_eps > 0:
        pdiff = perturb(
            diff, path, args.perturb_eps, args.perturb_mode, seed=_derived_seed(args.seed, 1)
        )
        out_obs = ObservedSeries(t=obs.t, G=obs.G[0] + np.concatenate(([0.0], np.cumsum(pdiff.Y))))
    io.write_series(args.out, out_obs)
    if args.truth_out:
        io.write_fit_table(args.truth_out, obs.t[1:], diff.Y, diff.dt, path.s, vol.sigma2)
    _write_meta(args.out + ".meta", "simulate", vars_for_meta(args))
    return 0


def cmd_fit(args):
    obs = io.read_series(args.series)
    rho = _resolve_rho(args, obs)
    icfg = InferenceConfig(pivotal=PivotalWindow(args.b), rho_mode=rho)
    ccfg = CropsConfig(
        iterations=args.iters,
        paths_per_iter=args.m,
        ni_rate=args.p,
        inference=icfg,
        seed=args.seed,
        freq_window=args.freq_window,
        early_stop=args.early_stop,
    )
    result = run_crops(obs, args.states, ccfg, sigma2_0=args.sigma0)

    io.write_fit_table(
        args.out + ".csv", obs.t[1:], np.diff(obs.G), np.diff(obs.t), result.path.s,
        result.volatility.sigma2,
    )
    mapping = io.params_to_mapping(result.params, result.rates, result.sigma2_0)
    mapping["rho_mode"] = rho
    mapping["b"] = args.b
    mapping["seed"] = args.seed
    io.write_keyvalues(args.out + ".params", mapping)

    _write_trace(args.out + ".trace.csv", result)
    _write_freq(args.out + ".freq.csv", obs, result)
    settings = vars_for_meta(args)
    settings["rho_effective"] = rho
    _write_meta(args.out + ".meta", "fit", settings)
    return 0


def _write_trace(path, result: CropsResult):
    nu = result.params.nu
    header = ["iteration", "objective", "kept"]
    for k in range(1, nu + 1):
        header += [f"alpha_{k}", f"beta_{k}", f"lam_{k}"]
    for j in range(1, nu + 1):
        for k in range(1, nu + 1):
            if j != k:
                header.append(f"eta_{j}_{k}")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for rec in result.trace:
            row = [str(rec.iteration), io.fmt(rec.objective), str(rec.kept)]
            for k in range(nu):
                row += [io.fmt(rec.params.alpha[k]), io.fmt(rec.params.beta[k]), io.fmt(rec.params.lam[k])]
            for j in range(1, nu + 1):
                for k in range(1, nu + 1):
                    if j != k:
                        row.append(io.fmt(rec.rates.eta[j - 1, k - 1]))
            fh.write(",".join(row) + "\n")


def _write_freq(path, obs, result: CropsResult):
    nu = result.state_freq.shape[1]
    header = ["t"] + [f"freq_{k}" for k in range(1, nu + 1)]
    cols = [obs.t[1:]] + [result.state_freq[:, k] for k in range(nu)]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(cols[0])):
            fh.write(",".join(io.fmt(col[i]) for col in cols) + "\n")


def cmd_cv(args):
    obs = io.read_series(args.series)
    rho = _resolve_rho(args, obs)
    icfg = InferenceConfig(pivotal=PivotalWindow(args.b), rho_mode=rho)
    base = CropsConfig(
        iterations=args.iters,
        paths_per_iter=args.m,
        ni_rate=0.0,
        inference=icfg,
        seed=args.seed,
        trace=False,
    )
    grid = tuple(_parse_floats(args.grid))
    report = run_cv(obs, args.states, CvConfig(crops=base, folds=args.folds, grid=grid, seed=args.seed))
    io.write_cv_table(args.out, report.grid, report.mean_mse, report.se)
    settings = vars_for_meta(args)
    settings["chosen_p"] = io.fmt(report.chosen_rate)
    settings["chosen_index"] = report.chosen_index
    settings["best_index"] = report.best_index
    settings["rho_effective"] = rho
    _write_meta(args.out + ".meta", "cv", settings)
    print(f"chosen p = {report.chosen_rate:g}")
    return 0


def _load_fit(prefix):
    mapping = io.read_keyvalues(prefix + ".params")
    params, rates, sigma2_0 = io.mapping_to_params(mapping)
    rho = mapping.get("rho_mode", "approx")
    t, Y, dt, state, _sigma2 = io.read_fit_table(prefix + ".csv")
    diff = DiffSeries(Y=Y, dt=dt)
    path = StatePath(s=state)
    vol = volatility_path(diff, path, params, sigma2_0, rho)
    nu = params.nu
    freq = np.zeros((diff.n, nu))
    freq[np.arange(diff.n), path.s - 1] = 1.0
    result = CropsResult(
        path=path, params=params, rates=rates, volatility=vol,
        state_freq=freq, trace=(), iterations_run=0,
    )
    return result, diff


def cmd_forecast(args):
    result, diff = _load_fit(args.fit)
    future_dt = _parse_floats(args.dt) if args.dt else None
    sigma_bar = forecast_volatility(
        result,
        future_dt=future_dt,
        horizon=args.h,
        history_dt=diff.dt,
        prune=args.prune,
    )
    io.write_forecast_table(args.out, sigma_bar)
    _write_meta(args.out + ".meta", "forecast", vars_for_meta(args))
    return 0


def cmd_analyze_ensemble(args):
    rows = []
    for k in range(args.b, args.k_max + 1):
        count, weight = ensemble_weight(k, args.b, args.p)
        rows.append((k, count, weight))
    if args.out:
        io.write_ensemble_table(args.out, rows)
        _write_meta(args.out + ".meta", "analyze-ensemble", vars_for_meta(args))
    else:
        print("k,count,weight")
        for k, count, weight in rows:
            print(f"{k},{count},{io.fmt(weight)}")
    return 0


def cmd_analyze_stability(args):
    result, diff = _load_fit(args.fit)
    res = stability_experiment(
        result.params,
        result.rates,
        result.path,
        diff,
        result.sigma2_0,
        eps=args.eps,
        reps=args.reps,
        seed=args.seed,
        ni_rate=args.p,
    )
    print(f"mean_shift_with_ni={io.fmt(res.mean_with_ni)}")
    print(f"mean_shift_without_ni={io.fmt(res.mean_without_ni)}")
    print(f"se_difference={io.fmt(res.se_difference)}")
    if args.out:
        io.write_keyvalues(
            args.out,
            {
                "mean_shift_with_ni": res.mean_with_ni,
                "mean_shift_without_ni": res.mean_without_ni,
                "se_difference": res.se_difference,
            },
        )
    return 0


def cmd_ingest_fx(args):
    obs, skipped = io.ingest_fx(
        args.raw,
        downsample_factor=args.downsample,
        time_unit=args.time_unit,
        tail=args.tail,
        log_price=not args.no_log,
    )
    io.write_series(args.out, obs)
    _write_meta(args.out + ".meta", "ingest-fx", vars_for_meta(args))
    print(f"wrote {obs.n_points} points; skipped {skipped} row(s)")
    spread = io.gap_spread(obs)
    if spread > GAP_SPREAD_EXACT_SWITCH:
        print(
            f"notice: gaps spread max/median = {spread:.1f}; fit with --rho exact "
            "(large calendar gaps make the first-order variance inaccurate)",
            file=sys.stderr,
        )
    return 0


def vars_for_meta(args):
    skip = {"func", "config"}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def _expand_config_args(argv, parser_flags):
    """Splice `--config FILE` key=value entries in as flags (explicit flags win)."""
    if "--config" not in argv:
        return argv
    pos = argv.index("--config")
    if pos + 1 >= len(argv):
        raise ValidationError("--config needs a file path")
    mapping = io.read_keyvalues(argv[pos + 1])
    rest = argv[:pos] + argv[pos + 2 :]
    extra = []
    for key, value in sorted(mapping.items()):
        flag = "--" + key.replace("_", "-")
        if flag not in parser_flags:
            raise ValidationError(f"config key {key!r} is not a known option")
        if parser_flags[flag]:  # boolean switch
            if value.lower() in ("1", "true", "yes"):
                extra.append(flag)
            elif value.lower() not in ("0", "false", "no"):
                raise ValidationError(f"config key {key!r} must be a boolean, got {value!r}")
        else:
            extra.extend([flag, value])
    # insert right after the subcommand so explicit flags override
    return rest[:1] + extra + rest[1:]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="comsgarch",
        description="Simulate, fit, tune, and forecast regime-switching volatility on irregular time grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate a synthetic series")
    ps.add_argument("--n", type=int, required=True, help="rows of the emitted series (points)")
    ps.add_argument("--zeta", type=float, required=True, help="gap rate; fixed gaps are 1/zeta")
    ps.add_argument("--c", required=True, help="balance constants, one per state (comma list)")
    ps.add_argument("--eta", type=float, default=0.1, help="uniform off-diagonal switching rate")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--gap-mode", choices=["fixed", "exponential"], default="fixed")
    ps.add_argument("--sigma0", type=float, default=None, help="starting variance level")
    ps.add_argument("--perturb-eps", type=float, default=None)
    ps.add_argument("--perturb-mode", choices=["global_sd", "per_state_sd"], default="global_sd")
    ps.add_argument("--truth-out", default=None, help="also write the generative truth table")
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_simulate)

    pf = sub.add_parser("fit", help="run the iterative fit on a series file")
    pf.add_argument("series")
    pf.add_argument("--states", type=int, required=True)
    pf.add_argument("--p", type=float, default=0.02, help="noise-injection rate")
    pf.add_argument("--m", type=int, default=6, help="candidate paths per iteration")
    pf.add_argument("--iters", type=int, default=1000)
    pf.add_argument("--b", type=int, default=20, help="pivotal window length")
    pf.add_argument("--rho", choices=["exact", "approx"], default=None,
                    help="increment variance form (default: auto by gap spread)")
    pf.add_argument("--seed", type=int, default=0)
    pf.add_argument("--sigma0", type=float, default=None)
    pf.add_argument("--freq-window", type=int, default=200)
    pf.add_argument("--early-stop", action="store_true")
    pf.add_argument("--out", required=True, help="output prefix")
    pf.set_defaults(func=cmd_fit)

    pc = sub.add_parser("cv", help="cross-validate the noise-injection rate")
    pc.add_argument("series")
    pc.add_argument("--states", type=int, required=True)
    pc.add_argument("--folds", type=int, default=5)
    pc.add_argument("--grid", required=True, help="ascending rate grid (comma list)")
    pc.add_argument("--m", type=int, default=6)
    pc.add_argument("--iters", type=int, default=200)
    pc.add_argument("--b", type=int, default=20)
    pc.add_argument("--rho", choices=["exact", "approx"], default=None)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", required=True)
    pc.set_defaults(func=cmd_cv)

    pp = sub.add_parser("forecast", help="multi-step volatility forecast from a fit prefix")
    pp.add_argument("fit", help="prefix used by the fit command")
    pp.add_argument("--h", type=int, default=None, help="horizon (median historical gap)")
    pp.add_argument("--dt", default=None, help="explicit future gaps (comma list)")
    pp.add_argument("--prune", action="store_true", help="drop negligible branches")
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=cmd_forecast)

    pa = sub.add_parser("analyze", help="ensemble combinatorics and stability checks")
    asub = pa.add_subparsers(dest="what", required=True)
    pae = asub.add_parser("ensemble", help="window-count and weight table")
    pae.add_argument("--b", type=int, default=20)
    pae.add_argument("--p", type=float, default=0.02)
    pae.add_argument("--k-max", type=int, default=40)
    pae.add_argument("--out", default=None)
    pae.set_defaults(func=cmd_analyze_ensemble)
    pas = asub.add_parser("stability", help="objective-shift experiment on a fitted run")
    pas.add_argument("--fit", required=True, help="fit output prefix")
    pas.add_argument("--eps", type=float, default=0.1)
    pas.add_argument("--reps", type=int, default=10000)
    pas.add_argument("--p", type=float, default=0.1)
    pas.add_argument("--seed", type=int, default=0)
    pas.add_argument("--out", default=None)
    pas.set_defaults(func=cmd_analyze_stability)

    pi = sub.add_parser("ingest-fx", help="prepare a minute-quote file for fitting")
    pi.add_argument("raw")
    pi.add_argument("--downsample", type=int, default=1)
    pi.add_argument("--time-unit", choices=["days", "raw"], default="days")
    pi.add_argument("--tail", type=int, default=None, help="keep only the last N points")
    pi.add_argument("--no-log", action="store_true", help="skip the log transform")
    pi.add_argument("--out", required=True)
    pi.set_defaults(func=cmd_ingest_fx)

    return parser


def _collect_flags(parser):
    """Map each '--flag' to whether it is a boolean switch, over all subparsers."""
    flags = {}
    for action in parser._subparsers._group_actions[0].choices.values():
        stack = [action]
        while stack:
            sp = stack.pop()
            for act in sp._actions:
                for opt in act.option_strings:
                    flags[opt] = isinstance(act, argparse._StoreTrueAction)
            if sp._subparsers is not None:
                stack.extend(sp._subparsers._group_actions[0].choices.values())
    return flags


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config_args(argv, _collect_flags(parser))
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DomainError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
