"""JSON and CSV report writers.

The JSON report has a deterministic body (records, summary, configuration and
default tolerances) and a ``provenance`` block with wall time and timestamps.
Only the provenance block changes between identical runs.
"""

import csv
import io
import json
import platform
import time
from importlib import metadata

import numpy as np

__all__ = ["SCHEMA_VERSION", "RECORD_FIELDS", "build_report", "write_report", "write_summary", "report_body", "version"]

SCHEMA_VERSION = 1
RECORD_FIELDS = ("check", "model", "n", "params", "testfn", "lhs", "rhs", "residual", "stderr", "tolerance", "pass")


def version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def build_report(checks, config, started, finished):
    records = [c.record() for c in checks]
    passed = sum(r["pass"] for r in records)
    return _plain(
        {
            "schema": SCHEMA_VERSION,
            "records": records,
            "summary": {"total": len(records), "passed": passed, "failed": len(records) - passed},
            "config": config.to_dict(),
            "defaults": {k: v for k, v in config.to_dict().items() if k.startswith("tolerance.")},
            "provenance": {
                "config_hash": config.digest(),
                "seed": config["seed"],
                "version": version(),
                "python": platform.python_version(),
                "numpy": np.__version__,
                "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
                "wall_time_s": round(finished - started, 3),
            },
        }
    )


def report_body(report):
    """The report without its provenance block (the part that must be reproducible)."""
    return {k: v for k, v in report.items() if k != "provenance"}


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_report(path, report):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(report))


def summary_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_FIELDS)
    for r in report["records"]:
        row = [json.dumps(r[k], sort_keys=True) if k == "params" else r[k] for k in RECORD_FIELDS]
        writer.writerow(row)
    return buf.getvalue()


def write_summary(path, report):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(summary_csv(report))
