"""Command-line entry point: ``satrtd {solve|record|sample|run|analyze|report}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import plots
from .cnf import DimacsError, read_dimacs, save_dimacs
from .extension import (PoolFormatError, extension_stats, materialize, read_pool,
                        record_learned_clauses, sample_extension, write_extension)
from .harness import (BUDGET_UNITS, CONFLICTS, TIME, Campaign, CampaignError, CensoringPolicy,
                      append_record, job_seed, observations_csv, paired_baseline,
                      read_observations_csv, read_runlog, records_csv, run_campaign,
                      split_baseline, usable)
from .solver import SAT, UNSAT, DeletionPolicy, SolverConfig, Solver
from .survival import (DIP_THRESHOLD, CampaignResult, classify_effect_table, dip_statistic,
                       km_histogram, kaplan_meier)
from .weibull import (FitError, QQResult, WeibullFitter, mixture_from_params, qq_points,
                      select_components, tail_diagnostics)

log = logging.getLogger("satrtd")

EXIT_SAT, EXIT_UNSAT, EXIT_UNKNOWN = 10, 20, 0
EXIT_ERROR, EXIT_MISSING = 1, 2

DEFAULT_CENSOR_OFFSET = 10_000.0
DEFAULT_CENSOR_MEAN = 20_000.0


class MissingArtifact(Exception):
    def __init__(self, path, step):
        super().__init__(f"{path} not found; run `satrtd {step}` first")


def _require(path, step):
    if path is None or not Path(path).exists():
        raise MissingArtifact(path, step)
    return path


# -- configuration ------------------------------------------------------------------

def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment, keys may use dashes or underscores."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected `key = value`")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, cfg: dict):
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        if key not in known:
            parser.error(f"unknown config key {key!r} for this subcommand")
        action = known[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            # argparse runs string defaults through the option's type
            defaults[key] = value
    sub.set_defaults(**defaults)


def resolve_seed(seed):
    if seed is not None:
        return int(seed)
    env = os.environ.get("TOOL_SEED")
    return int(env) if env not in (None, "") else 0


def _solver_config(args) -> SolverConfig:
    return SolverConfig(deletion=DeletionPolicy.parse(args.policy), seed=args.seed,
                        minimize=not getattr(args, "no_minimize", False))


# -- subcommands ----------------------------------------------------------------------

def cmd_solve(args) -> int:
    try:
        f = read_dimacs(args.instance)
    except (OSError, DimacsError, UnicodeDecodeError) as exc:
        print(f"c error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Solver(f, _solver_config(args)).solve(max_conflicts=args.max_conflicts)
    st = out.stats
    if out.status == SAT:
        print("s SATISFIABLE")
        if args.print_model:
            print("v " + " ".join(str(v if out.model[v] else -v) for v in sorted(out.model)) + " 0")
    elif out.status == UNSAT:
        print("s UNSATISFIABLE")
    else:
        print("s UNKNOWN")
    print(f"c stats conflicts={st.conflicts} propagations={st.propagations} "
          f"decisions={st.decisions} restarts={st.restarts}")
    return {SAT: EXIT_SAT, UNSAT: EXIT_UNSAT}.get(out.status, EXIT_UNKNOWN)


def cmd_record(args) -> int:
    f = read_dimacs(_require(args.instance, "solve"))
    source = args.source_id or Path(args.instance).name
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    pool, out = record_learned_clauses(f, _solver_config(args), args.output, source,
                                       args.max_conflicts)
    print(f"c recorded {len(pool)} learned clauses ({out.status}, "
          f"{out.stats.conflicts} conflicts) to {args.output}")
    return 0


def cmd_sample(args) -> int:
    f = read_dimacs(_require(args.instance, "solve"))
    pool = read_pool(_require(args.pool, "record"))
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["index,seed,size,relative_increase,lbd_min,lbd_q25,lbd_median,lbd_q75,lbd_max,mean_width"]
    for j in range(args.count):
        seed = job_seed(args.seed, j)
        spec = sample_extension(pool, args.p, seed)
        write_extension(spec, outdir / f"ext_{j:04d}.txt")
        if args.materialize:
            save_dimacs(materialize(f, pool, spec), outdir / f"ext_{j:04d}.cnf",
                        [f"extension {j} of pool {pool.pool_id} p={args.p!r} seed={seed}"])
        d = extension_stats(f, pool, spec).as_dict()
        rows.append(",".join(str(v) if v is not None else "" for v in
                             [j, seed, d["size"], repr(d["relative_increase"]), d["lbd_min"],
                              d["lbd_q25"], d["lbd_median"], d["lbd_q75"], d["lbd_max"],
                              "" if d["mean_width"] is None else repr(d["mean_width"])]))
    (outdir / "extensions.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"c wrote {args.count} extension specs to {outdir}")
    return 0


def cmd_run(args) -> int:
    f = read_dimacs(_require(args.instance, "solve"))
    pool = read_pool(_require(args.pool, "record"))
    censoring = CensoringPolicy(args.censor_offset, args.censor_mean, args.censor_granularity,
                                seed=args.seed)
    c = Campaign(f, pool, args.p, args.n, _solver_config(args), censoring, args.budget_unit,
                 args.seed, args.instance_id or Path(args.instance).stem)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    records = run_campaign(c, args.workers, args.output)
    _, old = read_runlog(args.output)
    if split_baseline(old)[0] is None:
        append_record(args.output, paired_baseline(c))
    n_cen = sum(r.censored for r in records)
    n_err = len(records) - len(usable(records))
    print(f"c campaign {c.instance_id}: {len(records)} runs, {n_cen} censored, {n_err} errors, "
          f"{time.perf_counter() - t0:.1f}s")
    return 0


def _measures(header, baseline, jobs):
    """Measures in the effect table; wall-clock ones only when they are the budget unit."""
    recs = usable(jobs)
    cen = np.array([r.censored for r in recs], dtype=int)
    conf = np.array([float(r.conflicts) for r in recs])
    observed = {CONFLICTS: (conf, cen)}
    base = {CONFLICTS: float(baseline.conflicts)}
    if header["budget_unit"] == TIME:
        observed[TIME] = (np.array([r.observed for r in recs]), cen)
        base[TIME] = float(baseline.cpu_time)
    return base, observed


def cmd_analyze(args) -> int:
    header, records = read_runlog(_require(args.runlog, "run"))
    baseline, jobs = split_baseline(records)
    if baseline is None:
        raise CampaignError(f"{args.runlog} has no baseline record; rerun `satrtd run`")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write = lambda name, text: (out / name).write_text(text, encoding="utf-8")  # noqa: E731

    recs = usable(jobs)
    t = np.array([r.observed for r in recs])
    cen = np.array([r.censored for r in recs], dtype=int)
    write("records.csv", records_csv(jobs))
    write("observations.csv", observations_csv(t, cen))

    base, observed = _measures(header, baseline, jobs)
    measure = TIME if header["budget_unit"] == TIME else CONFLICTS
    table = classify_effect_table(
        [CampaignResult(header["instance_id"], baseline.status, base, observed)], measure)
    write("effect.csv", table.to_csv())

    curve = kaplan_meier(t, cen)
    write("km.csv", curve.to_csv())
    for name, log_scale in (("km_histogram.csv", False), ("km_histogram_log.csv", True)):
        h = km_histogram(curve, args.bins, log_scale)
        rows = ["lower,upper,mass"] + [f"{a!r},{b!r},{m!r}" for a, b, m in
                                       zip(h.edges[:-1].tolist(), h.edges[1:].tolist(),
                                           h.masses.tolist())]
        write(name, "\n".join(rows) + "\n")

    summary = {"instance_id": header["instance_id"], "status": baseline.status,
               "runs": len(jobs), "usable": len(recs), "censored": int(cen.sum()),
               "baseline": float(baseline.observed), "measure": measure}
    row = table.rows[0]
    key = "time" if measure == TIME else "confl"
    summary["Z"], summary["p"] = row[f"Z_{key}"], row[f"p_{key}"]
    summary["classification"] = next(
        (c for cell in table.by_censoring.values() for c, v in cell.items() if v), "EXCLUDED")

    events = t[cen == 0]
    if len(events) >= 3:
        dip = dip_statistic(events)
        summary["dip"] = dip
        summary["multimodal"] = bool(dip > DIP_THRESHOLD)
    else:
        summary["dip"], summary["multimodal"] = None, None

    try:
        mix = select_components(t, cen, args.max_components, args.n_init, args.seed)
        write("mixture.txt", mix.report())
        write("mixture.json", json.dumps({
            "weights": [float(w) for w in mix.weights_],
            "components": [[float(v) for v in c] for c in mix.components_],
            "loglik": float(mix.loglik_), "n_obs": mix.n_obs_,
            "bic_by_components": {str(k): float(v) for k, v in mix.bic_by_components_.items()},
        }, indent=2, sort_keys=True) + "\n")
        summary["components"], summary["long_tailed"] = mix.n_components_, bool(mix.long_tailed_)
    except (FitError, ValueError) as exc:
        write("mixture.txt", f"fit failed: {exc}\n")
        summary["components"], summary["long_tailed"] = None, None

    try:
        w3 = WeibullFitter(three_param=True).fit(t, cen)
        qq = qq_points(t, w3.ppf, cen)
        write("qq.csv", qq.to_csv())
        write("weibull3.json", json.dumps({"shape": w3.shape_, "scale": w3.scale_, "loc": w3.loc_,
                                           "at_boundary": w3.at_boundary_,
                                           "qq_correlation": qq.correlation},
                                          indent=2, sort_keys=True) + "\n")
        summary["qq_correlation"] = qq.correlation
    except (FitError, ValueError) as exc:
        log.warning("3-parameter fit skipped: %s", exc)
        summary["qq_correlation"] = None

    try:
        td = tail_diagnostics(curve)
        write("tails.csv", td.to_csv())
        for side, fit in (("left", td.left), ("right", td.right)):
            summary[f"{side}_slope"], summary[f"{side}_correlation"] = fit.slope, fit.correlation
    except ValueError as exc:
        log.warning("tail diagnostics skipped: %s", exc)

    write("summary.txt", "".join(f"{k} = {v!r}\n" for k, v in summary.items()))
    print(f"c {summary['instance_id']}: {summary['classification']} (Z={summary['Z']!r}), "
          f"dip={summary['dip']!r}, components={summary['components']}, "
          f"long_tailed={summary['long_tailed']}")
    return 0


def cmd_report(args) -> int:
    src = Path(_require(args.analysis, "analyze"))
    obs = _require(src / "observations.csv", "analyze")
    t, cen = read_observations_csv(obs)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    curve = kaplan_meier(t, cen)
    h = km_histogram(curve, args.bins, False)
    hl = km_histogram(curve, args.bins, True)
    figures = {
        "histogram.svg": plots.histogram_svg(h),
        "log-histogram.svg": plots.histogram_svg(hl),
        "cdf-loglog.svg": plots.cdf_loglog_svg(curve),
        "survival-loglog.svg": plots.survival_loglog_svg(curve),
        "tail-decay.svg": plots.tail_decay_svg(curve),
    }
    if (src / "mixture.json").exists():
        d = json.loads((src / "mixture.json").read_text(encoding="utf-8"))
        mix = mixture_from_params(d["weights"], d["components"], d["loglik"], d["n_obs"])
        figures["mixture-overlay.svg"] = plots.mixture_overlay_svg(hl, mix)
    if (src / "qq.csv").exists():
        arr = np.loadtxt(src / "qq.csv", delimiter=",", skiprows=1, ndmin=2)
        r = float(np.corrcoef(arr[:, 0], arr[:, 1])[0, 1])
        figures["qq.svg"] = plots.qq_svg(QQResult(arr[:, 0], arr[:, 1], r, int(cen.sum())))
    for name, svg in figures.items():
        plots.write_svg(svg, out / name)
    print(f"c wrote {len(figures)} plots to {out}")
    return 0


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (falls back to $TOOL_SEED, then 0)")
    common.add_argument("--config", metavar="FILE",
                        help="file of `key = value` lines overriding the flag defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--policy", choices=[p.value for p in DeletionPolicy], default="glucose",
                        help="learned-clause deletion policy")
    solver.add_argument("--no-minimize", action="store_true",
                        help="disable learned-clause minimization")

    p = argparse.ArgumentParser(prog="satrtd", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common, solver], help="solve a DIMACS instance")
    s.add_argument("instance")
    s.add_argument("--max-conflicts", type=int, default=None)
    s.add_argument("--print-model", action="store_true")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("record", parents=[common, solver], help="record the learned-clause pool")
    s.add_argument("instance")
    s.add_argument("-o", "--output", required=True, help="pool file (.gz allowed)")
    s.add_argument("--max-conflicts", type=int, default=None)
    s.add_argument("--source-id", default="")
    s.set_defaults(func=cmd_record)

    s = sub.add_parser("sample", parents=[common], help="draw extensions from a pool")
    s.add_argument("instance")
    s.add_argument("--pool", required=True)
    s.add_argument("--p", type=float, default=0.01, help="selection probability per clause")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--materialize", action="store_true", help="also write extended DIMACS files")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("run", parents=[common, solver], help="run a censored campaign")
    s.add_argument("instance")
    s.add_argument("--pool", required=True)
    s.add_argument("--p", type=float, default=0.01)
    s.add_argument("--n", type=int, default=200, help="number of extensions")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--budget-unit", choices=BUDGET_UNITS, default=CONFLICTS)
    s.add_argument("--censor-offset", type=float, default=DEFAULT_CENSOR_OFFSET)
    s.add_argument("--censor-mean", type=float, default=DEFAULT_CENSOR_MEAN,
                   help="mean of the geometric excess over the offset")
    s.add_argument("--censor-granularity", type=float, default=1.0)
    s.add_argument("--instance-id", default="")
    s.add_argument("-o", "--output", required=True, help="run log (JSON lines); resumed if present")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("analyze", parents=[common], help="statistics of a run log")
    s.add_argument("runlog")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.add_argument("--bins", type=int, default=30)
    s.add_argument("--max-components", type=int, default=3)
    s.add_argument("--n-init", type=int, default=5)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("report", parents=[common], help="render SVG plots of an analysis")
    s.add_argument("analysis", help="directory written by `analyze`")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.add_argument("--bins", type=int, default=30)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = read_config(args.config)
        except (OSError, ValueError) as exc:
            print(f"c error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(parser, sub, cfg)
        args = parser.parse_args(argv)
    args.seed = resolve_seed(args.seed)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingArtifact as exc:
        print(f"c error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (OSError, DimacsError, PoolFormatError, CampaignError, ValueError) as exc:
        print(f"c error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
