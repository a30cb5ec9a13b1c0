"""Command line front end.

Exit codes: 0 success, 1 failed check or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import xml.etree.ElementTree as ET
from pathlib import Path

from . import __version__
from .errors import TTPredictError
from .pipeline import METHODS, ConfigError, RunConfig, run_analysis

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_header(config: dict) -> str:
    return f"# config: {json.dumps(config, sort_keys=True)}\n# seed: {config['seed']}\n"


def _num(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# analyze


def _analysis_artifacts(res) -> dict:
    cfg = res.config
    conf = cfg.to_dict()
    head = _csv_header(conf)
    run = res.run
    files = {}
    ex = res.extras
    summary = {
        "version": __version__,
        "config": conf,
        "seed": cfg.seed,
        "method": cfg.method,
        "mode": run.mode,
        "horizon": run.horizon,
        "replicates": run.replicates,
        "data": res.data_summary,
        "summaries": [s.to_dict() for s in run.summaries],
        "missing_cells": run.missing,
        "retried_replicates": run.retried,
    }
    for key in ("positivity", "n_clipped", "ess", "ess_mode", "analytic"):
        if key in ex:
            summary[key] = ex[key]
    if "inclusion" in ex:
        summary["inclusion"] = ex["inclusion"]
    files["summary.json"] = _json(summary)

    lines = [head + "method,estimand,mean,median,sd,lo95,hi95"]
    for s in run.summaries:
        lines.append(",".join([cfg.method, s.label, _num(s.mean), _num(s.median), _num(s.sd), _num(s.lo95), _num(s.hi95)]))
    files["summary_table.csv"] = "\n".join(lines) + "\n"

    ate = [s for s in run.summaries if s.label == "ATE"]
    if ate:
        files["ate_density.csv"] = head + "method,replicate,theta\n" + "".join(
            f"{cfg.method},{j},{_num(v)}\n" for j, v in enumerate(ate[0].draws))

    cate = [s for s in run.summaries if s.label.startswith("CATE[")]
    if cate or run.missing:
        rows = []
        for s in cate:
            col, val = s.label[5:-1].split("=")
            rows.append((float(val), f"{col},{val},{_num(s.mean)},{_num(s.lo95)},{_num(s.hi95)},{run.replicates}"))
        for lab, n_bad in run.missing.items():
            col, val = lab[5:-1].split("=")
            rows.append((float(val), f"{col},{val},,,,{run.replicates - n_bad}"))
        rows.sort()
        files["cate.csv"] = head + "column,value,mean,lo95,hi95,replicates_defined\n" + "".join(r + "\n" for _, r in rows)

    if "inclusion" in ex:
        inc = ex["inclusion"]
        files["inclusion.csv"] = head + "column,proportion\n" + "".join(
            f"{k},{_num(v)}\n" for k, v in inc["proportions"].items())
    if "outcome_fit" in ex:
        from .trees import diagnostics_csv

        files["diagnostics.csv"] = head + diagnostics_csv(ex["outcome_fit"])
    if "weights" in ex:
        from .ipw import weights_csv

        # recover t from the weights: lambda1 > 0 exactly on treated rows
        w = ex["weights"]
        t = (w.lambda1 > 0).astype(int)
        files["weights.csv"] = head + weights_csv(t, ex["pi"], w)
    for tr in res.trials:
        files[f"trials/trial_{tr.replicate_id:04d}.csv"] = head + tr.to_csv()

    log = [
        f"ttpredict {__version__} analyze",
        f"config {json.dumps(conf, sort_keys=True)}",
        f"seed {cfg.seed}",
        f"eligible n {res.data_summary['n']} (treated {res.data_summary['n_treated']}, control {res.data_summary['n_control']})",
        f"dropped ineligible {res.data_summary['n_dropped_ineligible']}, missing {res.data_summary['n_dropped_missing']}",
    ]
    if "positivity" in ex:
        p = ex["positivity"]
        log.append(f"propensity range [{p['min']:.6g}, {p['max']:.6g}], outside [{p['eps']}, {1 - p['eps']}]: {p['n_violations']}")
        log.append(f"propensities clipped: {ex['n_clipped']}")
        for mode, e in ex["ess"].items():
            log.append(f"ess {mode}: treated {e['ess1']:.6g}, control {e['ess0']:.6g}, total {e['total']:.6g}")
    log.append(f"mode {run.mode}, horizon {run.horizon}, replicates {run.replicates}, retried {len(run.retried)}")
    for s in run.summaries:
        log.append(f"{s.label}: mean {s.mean:.6g} sd {s.sd:.6g} 95% [{s.lo95:.6g}, {s.hi95:.6g}]")
    files["run.log"] = "\n".join(log) + "\n"
    return files


def cmd_analyze(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    est = None
    if args.estimands is not None:
        est = tuple(e for e in args.estimands.split(",") if e.strip()) if args.estimands.strip() else ()
        if not est:
            raise ConfigError("estimand list is empty")
    cfg = cfg.with_overrides(method=args.method, seed=args.seed, replicates=args.replicates, horizon=args.horizon,
                             input=args.input, schema=args.schema, estimands=est, burn_in=args.burn_in,
                             draws=args.draws, dump_trials=args.dump_trials)
    out = Path(args.out or cfg.out or ".")
    res = run_analysis(cfg, threads=args.threads)
    for name, text in _analysis_artifacts(res).items():
        write_atomic(out / name, text)
    for s in res.run.summaries:
        if s.label in ("ATE", "ATT", "RR"):
            print(f"{cfg.method} {s.label}: mean {s.mean:.2f} sd {s.sd:.2f} 95% [{s.lo95:.2f}, {s.hi95:.2f}]")
    return EXIT_OK


# ---------------------------------------------------------------------------
# check


def junit_xml(suite: str, results) -> str:
    root = ET.Element("testsuite", name=suite, tests=str(len(results)),
                      failures=str(sum(not r.passed for r in results)))
    for r in results:
        case = ET.SubElement(root, "testcase", classname=f"ttpredict.{suite}", name=r.name)
        ET.SubElement(case, "system-out").text = f"status={r.status} value={r.value} {r.detail}".strip()
        if not r.passed:
            ET.SubElement(case, "failure", message=f"{r.name}: {r.status} (value {r.value})")
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def cmd_check(args) -> int:
    from .verify import suites

    seed = 0 if args.seed is None else args.seed
    if args.suite == "equivalence":
        spec = None
        if args.config:
            from .pipeline import ks_equivalence_spec, load_dataset

            cfg = RunConfig.load(args.config).with_overrides(seed=seed, method=args.method)
            spec = ks_equivalence_spec(load_dataset(cfg), cfg)
        reps = args.replicates or 2000
        n = len(spec.atoms) if spec is not None else 1000
        extra = (args.horizon - n) if args.horizon else 10_000
        if extra < 1:
            raise ConfigError("horizon must exceed the observed sample size")
        results = suites.equivalence_suite(seed, reps, extra, spec)
    elif args.suite == "contraction" and args.replicates:
        results = suites.contraction_suite(seed, reps=args.replicates)
    else:
        results = suites.run_suite(args.suite, seed)
    out = Path(args.out or ".")
    write_atomic(out / f"check_{args.suite}.xml", junit_xml(args.suite, results))
    write_atomic(out / f"check_{args.suite}.json",
                 _json({"suite": args.suite, "seed": seed, "results": [r.to_dict() for r in results]}))
    for r in results:
        print(f"{r.status:>26}  {r.name}  {r.value}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    from . import ipw
    from .verify import contraction as ctr

    conf = {"seed": 0, "reps_per_n": 200, "n_grid": [250, 1000, 4000], "dgp": {}}
    if args.config:
        user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if isinstance(user.get("config"), dict):
            user = user["config"]  # an artifact that embeds its config
        unknown = set(user) - set(conf)
        if unknown:
            raise ConfigError(f"unknown simulate config keys: {', '.join(sorted(unknown))}")
        conf.update(user)
    if args.seed is not None:
        conf["seed"] = args.seed
    if args.replicates:
        conf["reps_per_n"] = args.replicates
    try:
        dgp = ctr.ContinuousDGP(**conf["dgp"])
    except TypeError as e:
        raise ConfigError(f"bad dgp parameters: {e}") from None
    rows, summary = [], {"config": conf, "seed": conf["seed"], "modes": {}}
    for mode in ipw.ESS_MODES:
        r = ctr.contraction_experiment(dgp, conf["n_grid"], conf["reps_per_n"], mode, conf["seed"])
        rows += r
        summary["modes"][mode] = {"sd_ratios": ctr.sd_ratios(r), "rate_exponent": ctr.rate_exponent(r)}
    out = Path(args.out or ".")
    write_atomic(out / "contraction.csv", _csv_header(conf) + ctr.rows_csv(rows))
    write_atomic(out / "simulate.json", _json(summary))
    for mode, m in summary["modes"].items():
        print(f"{mode}: sd ratios {', '.join(f'{v:.3f}' for v in m['sd_ratios'])}; exponent {m['rate_exponent']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# summarize


def cmd_summarize(args) -> int:
    from .data import summarize, to_canonical_csv
    from .pipeline import load_dataset

    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg = cfg.with_overrides(input=args.input, schema=args.schema)
    ds = load_dataset(cfg)
    out = Path(args.out or ".")
    s = summarize(ds)
    write_atomic(out / "data_summary.json", _json({"config": {"input": cfg.input, "schema": cfg.schema}, **s}))
    write_atomic(out / "canonical.csv", to_canonical_csv(ds))
    print(f"n {s['n']} (treated {s['n_treated']}, control {s['n_control']}); mean outcome {s['mean_outcome']:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttpredict", description="Target-trial predictive resampling.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration (or an artifact embedding one)")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--replicates", type=int, help="number of replicates B")
        sp.add_argument("--horizon", type=int, help="trial size N")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
        sp.add_argument("--method", choices=METHODS)

    a = sub.add_parser("analyze", help="fit, resample and write summaries")
    common(a)
    a.add_argument("--input", help="observational CSV")
    a.add_argument("--schema", help="schema JSON (default: bundled birthweight schema)")
    a.add_argument("--estimands", help="comma list, e.g. ate,att,cate:mage:20-38")
    a.add_argument("--burn-in", type=int, dest="burn_in")
    a.add_argument("--draws", type=int)
    a.add_argument("--dump-trials", type=int, dest="dump_trials", help="write the first K imputed trials")
    a.set_defaults(fn=cmd_analyze)

    c = sub.add_parser("check", help="run an oracle suite")
    c.add_argument("suite", choices=("oracles", "martingale", "contraction", "equivalence"))
    common(c)
    c.set_defaults(fn=cmd_check)

    s = sub.add_parser("simulate", help="posterior contraction experiment")
    common(s)
    s.set_defaults(fn=cmd_simulate)

    m = sub.add_parser("summarize", help="ingest and summarise a dataset")
    common(m)
    m.add_argument("--input")
    m.add_argument("--schema")
    m.set_defaults(fn=cmd_summarize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    for name in ("seed", "replicates", "horizon", "threads"):
        v = getattr(args, name, None)
        if v is not None and (v < 0 or (name != "seed" and v < 1)):
            print(f"ttpredict: --{name} must be positive", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.fn(args)
    except (ConfigError, UsageError) as e:
        print(f"ttpredict: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TTPredictError, OSError, ValueError) as e:
        print(f"ttpredict: error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
