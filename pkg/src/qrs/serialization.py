"""CSV and JSON writers for diagnostics rows and comparison tables.

Floats are written with 17 significant digits so that parsing a file gives
back bit-identical values.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os

SWEEP_HEADER = ["beta", "replicate", "ar", "ar_se", "log_z", "log_z_beta", "tvd", "tvd_se",
                "tvd_bound", "kl", "kl_se", "kl_to_base", "n_draws", "seed"]
_INT_FIELDS = {"replicate", "n_draws", "seed"}

AGGREGATE_METRICS = ["ar", "tvd", "tvd_bound", "kl", "log_z_beta"]

UNAVAILABLE = "unk"


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool,)):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    return "%.17g" % v


def parse_float(s: str):
    return None if s == "" else float(s)


def _write(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def sweep_record(row) -> dict:
    return {
        "beta": row.beta, "replicate": int(row.replicate), "ar": row.ar, "ar_se": row.ar_se,
        "log_z": row.log_z, "log_z_beta": row.log_z_beta, "tvd": row.tvd,
        "tvd_se": row.tvd_se, "tvd_bound": row.tvd_bound, "kl": row.kl, "kl_se": row.kl_se,
        "kl_to_base": row.kl_to_base, "n_draws": int(row.n_draws), "seed": int(row.seed),
    }


def sweep_csv(rows) -> str:
    recs = [sweep_record(r) for r in rows]
    return _write(SWEEP_HEADER, ([fmt(rec[k]) for k in SWEEP_HEADER] for rec in recs))


def sweep_json(rows) -> str:
    recs = [sweep_record(r) for r in rows]
    return json.dumps({"columns": SWEEP_HEADER,
                       "rows": [{k: _json_num(rec[k]) for k in SWEEP_HEADER} for rec in recs]},
                      indent=1) + "\n"


def _json_num(v):
    # JSON has no inf/nan; carry the decimal string instead
    if isinstance(v, float):
        return fmt(v)
    return v


def parse_sweep_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != SWEEP_HEADER:
        raise ValueError("not a sweep CSV")
    out = []
    for rec in reader:
        out.append({k: (int(v) if k in _INT_FIELDS else parse_float(v)) for k, v in rec.items()})
    return out


def aggregate_header():
    cols = ["beta"]
    for m in AGGREGATE_METRICS:
        cols += [m, f"{m}_sd"]
    return cols + ["replicates", "n_draws"]


def aggregate_csv(rows) -> str:
    """One line per β: replicate mean and sample sd of each metric."""
    import numpy as np

    by_beta = {}
    for r in rows:
        by_beta.setdefault(r.beta, []).append(r)
    lines = []
    for beta in sorted(by_beta):
        g = by_beta[beta]
        line = [fmt(beta)]
        for m in AGGREGATE_METRICS:
            v = np.array([getattr(r, m) for r in g], dtype=float)
            sd = float(v.std(ddof=1)) if v.size > 1 else math.nan
            line += [fmt(float(v.mean())), fmt(sd)]
        line += [str(len(g)), str(g[0].n_draws)]
        lines.append(line)
    return _write(aggregate_header(), lines)


def compare_header(moment_names):
    return (["method", "ar_proxy"] + [f"moment_{n}" for n in moment_names]
            + ["pct_unique", "lag1_autocorr", "tvd", "kl"])


def compare_csv(rows, moment_names) -> str:
    lines = []
    for r in rows:
        line = [r.method, fmt(r.ar_proxy)] + [fmt(r.moments[n]) for n in moment_names]
        line += [fmt(r.pct_unique), fmt(r.lag1_autocorr)]
        line += [UNAVAILABLE if r.tvd is None else fmt(r.tvd),
                 UNAVAILABLE if r.kl is None else fmt(r.kl)]
        lines.append(line)
    return _write(compare_header(moment_names), lines)


def table_csv(header, rows) -> str:
    return _write(header, ([fmt(v) if not isinstance(v, str) else v for v in r] for r in rows))


def write_text(path, text: str):
    """Write ``text`` to ``path`` in one go (creating parent directories)."""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
