"""Command-line interface: ``pestov-lab check | convergence | flow``.

Exit codes: 0 when every check passes, 1 when any check fails (or a flow
leaves its chart), 2 for configuration errors and unsupported requests.
"""

import argparse
import csv
import os
import sys
import time

from . import report
from .config import CONVERGENCE_KINDS, SUITES, load_config
from .errors import ConfigError, DomainError, PestovLabError, UnsupportedModelError
from .manifold import ModelKind
from .suites import run_convergence, run_flow, run_suite

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(prog="pestov-lab", description="Numerical checks of frame-bundle identities.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML file of dotted configuration keys")
        p.add_argument("--model", choices=[k.value for k in ModelKind], help="metric model (model.kind)")
        p.add_argument("--dim", type=int, help="manifold dimension (model.dim)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory (output.dir)")
        p.add_argument("--workers", type=int, help="worker threads for Monte Carlo")

    check = sub.add_parser("check", help="run identity checks and write report.json and summary.csv")
    common(check)
    check.add_argument("--suite", choices=SUITES, help="which checks to run")
    check.add_argument("--count", type=int, help="Monte Carlo sample count (mc.count)")

    conv = sub.add_parser("convergence", help="convergence study over a ladder of steps or counts")
    common(conv)
    conv.add_argument("--kind", choices=CONVERGENCE_KINDS, help="fd, mc or integrator")
    conv.add_argument("--ladder", type=float, nargs="+", help="steps (fd, integrator) or sample counts (mc)")

    flow = sub.add_parser("flow", help="integrate a frame flow and write its trajectory as CSV")
    common(flow)
    flow.add_argument("--t", type=float, help="flow time (flow.t)")
    flow.add_argument("--dt", type=float, help="integrator step (flow.dt)")
    return parser


def _overrides(args):
    keys = {
        "model": "model.kind",
        "dim": "model.dim",
        "seed": "seed",
        "out": "output.dir",
        "workers": "workers",
        "suite": "suite",
        "count": "mc.count",
        "kind": "convergence.kind",
        "ladder": "convergence.ladder",
        "t": "flow.t",
        "dt": "flow.dt",
    }
    return {key: getattr(args, attr) for attr, key in keys.items() if hasattr(args, attr)}


def _outdir(cfg):
    path = cfg["output.dir"]
    os.makedirs(path, exist_ok=True)
    return path


def _check(cfg):
    started = time.time()
    checks = run_suite(cfg)
    rep = report.build_report(checks, cfg, started, time.time())
    out = _outdir(cfg)
    report.write_report(os.path.join(out, "report.json"), rep)
    report.write_summary(os.path.join(out, "summary.csv"), rep)
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name:<24} residual={c.residual:.3e} stderr={c.stderr:.3e} tol={c.tolerance:.1e}")
    s = rep["summary"]
    print(f"{s['passed']}/{s['total']} checks passed; report in {out}")
    return EXIT_OK if s["failed"] == 0 else EXIT_FAIL


def _convergence(cfg, expected):
    rows = run_convergence(cfg)
    path = os.path.join(_outdir(cfg), f"convergence_{cfg['convergence.kind']}.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rung", "h_or_count", "residual", "stderr", "slope"])
        writer.writerows(rows)
    slope = rows[-1][-1]
    print(f"fitted slope {slope:.3f} (expected {expected}); table in {path}")
    return EXIT_OK


_EXPECTED = {"fd": 2, "mc": -0.5, "integrator": 4}


def _flow(cfg):
    traj, footer, error = run_flow(cfg)
    n = cfg["model.dim"]
    path = os.path.join(_outdir(cfg), "flow.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["t", "chart_id"] + [f"x{i}" for i in range(n)]
        header += [f"a{i}{j}" for i in range(n) for j in range(n)]
        writer.writerow(header)
        for t, chart, x, a in zip(traj.t, traj.chart, traj.x, traj.a):
            writer.writerow([repr(float(t)), int(chart), *map(float, x), *map(float, a.reshape(-1))])
        for line in footer:
            fh.write(f"# {line}\n")
    print("\n".join(footer))
    print(f"trajectory in {path}")
    return EXIT_FAIL if error is not None else EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(_overrides(args))
        if args.command == "check":
            return _check(cfg)
        if args.command == "convergence":
            return _convergence(cfg, _EXPECTED[cfg["convergence.kind"]])
        return _flow(cfg)
    except ConfigError as exc:
        where = f" (line {exc.line})" if getattr(exc, "line", None) else ""
        print(f"configuration error{where}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UnsupportedModelError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PestovLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
