"""Run configuration for ``qrs sweep``.

A config is a JSON object with ``schema_version`` 1 and four sections. Every
numeric value is a decimal string, so files diff cleanly and nothing depends
on a JSON parser's float handling::

    {
      "schema_version": 1,
      "target":   {"testbed": "poisson:11:10", "base_model": "none"},
      "proposal": {"kind": "default"},
      "sweep":    {"beta_grid": ["0.5", "1", "2", "4"], "n_draws": "1000000",
                   "replicates": "1", "seed": "0"},
      "output":   {"format": "csv", "path": "sweep.csv"}
    }

Instead of ``beta_grid`` the sweep section may give ``beta_min``,
``beta_max`` and ``n_points`` for a log-spaced grid (25 points by default).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

SCHEMA_VERSION = 1

_SCHEMA = {
    "target": {"testbed": True, "base_model": False},
    "proposal": {"kind": False},
    "sweep": {"beta_grid": False, "beta_min": False, "beta_max": False, "n_points": False,
              "n_draws": True, "replicates": False, "seed": False},
    "output": {"format": False, "path": False},
}
_REQUIRED_SECTIONS = ("target", "sweep")


class ConfigError(ValueError):
    """Schema violation; ``keys`` names the offending entries."""

    def __init__(self, keys, detail=""):
        self.keys = list(keys)
        msg = "config schema violation: " + ", ".join(self.keys)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass
class RunConfig:
    testbed: str
    base_model: str = "none"
    proposal_kind: str = "default"
    beta_grid: tuple = ()
    n_draws: int = 0
    replicates: int = 1
    seed: int = 0
    output_format: str = "csv"
    output_path: str | None = None


def _decimal(value, key, integer=False):
    if not isinstance(value, str):
        raise ConfigError([key], "numbers must be decimal strings")
    try:
        d = Decimal(value.strip())
    except InvalidOperation:
        raise ConfigError([key], f"not a decimal: {value!r}") from None
    if not d.is_finite():
        raise ConfigError([key], "must be finite")
    if integer:
        if d != d.to_integral_value():
            raise ConfigError([key], "must be an integer")
        return int(d)
    return float(d)


def parse_config(doc) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError(["<root>"], "expected an object")
    bad = [k for k in doc if k != "schema_version" and k not in _SCHEMA]
    for sec, fields in _SCHEMA.items():
        body = doc.get(sec)
        if body is None:
            continue
        if not isinstance(body, dict):
            bad.append(sec)
            continue
        bad += [f"{sec}.{k}" for k in body if k not in fields]
    missing = [s for s in _REQUIRED_SECTIONS if s not in doc]
    missing += [f"{sec}.{k}" for sec, fields in _SCHEMA.items() if sec in doc
                and isinstance(doc[sec], dict) for k, req in fields.items()
                if req and k not in doc[sec]]
    if "schema_version" not in doc:
        missing.append("schema_version")
    if bad or missing:
        detail = []
        if bad:
            detail.append("unknown: " + ", ".join(bad))
        if missing:
            detail.append("missing: " + ", ".join(missing))
        raise ConfigError(bad + missing, "; ".join(detail))
    if str(doc["schema_version"]) != str(SCHEMA_VERSION):
        raise ConfigError(["schema_version"], f"expected {SCHEMA_VERSION}")

    t, s = doc["target"], doc["sweep"]
    p, o = doc.get("proposal", {}), doc.get("output", {})
    cfg = RunConfig(testbed=t["testbed"])
    if not isinstance(cfg.testbed, str):
        raise ConfigError(["target.testbed"], "must be a string")
    cfg.base_model = t.get("base_model", "none")
    if cfg.base_model not in ("none", "base"):
        raise ConfigError(["target.base_model"], "expected 'none' or 'base'")
    cfg.proposal_kind = p.get("kind", "default")
    if cfg.proposal_kind not in ("default", "base", "projected"):
        raise ConfigError(["proposal.kind"], "expected 'default', 'base' or 'projected'")

    if "beta_grid" in s:
        if any(k in s for k in ("beta_min", "beta_max", "n_points")):
            raise ConfigError(["sweep.beta_grid"], "give a grid or a range, not both")
        if not isinstance(s["beta_grid"], list) or not s["beta_grid"]:
            raise ConfigError(["sweep.beta_grid"], "expected a nonempty list")
        grid = [_decimal(b, "sweep.beta_grid") for b in s["beta_grid"]]
    else:
        if "beta_min" not in s or "beta_max" not in s:
            raise ConfigError(["sweep.beta_grid"], "missing grid or range")
        lo = _decimal(s["beta_min"], "sweep.beta_min")
        hi = _decimal(s["beta_max"], "sweep.beta_max")
        n = _decimal(s.get("n_points", "25"), "sweep.n_points", integer=True)
        if not 0 < lo < hi or n < 2:
            raise ConfigError(["sweep.beta_min", "sweep.beta_max"], "need 0 < min < max")
        grid = [lo * (hi / lo) ** (i / (n - 1)) for i in range(n)]
    if any(b <= 0 or not math.isfinite(b) for b in grid):
        raise ConfigError(["sweep.beta_grid"], "betas must be positive")
    if any(b2 <= b1 for b1, b2 in zip(grid, grid[1:])):
        raise ConfigError(["sweep.beta_grid"], "grid must be strictly increasing")
    cfg.beta_grid = tuple(grid)
    cfg.n_draws = _decimal(s["n_draws"], "sweep.n_draws", integer=True)
    cfg.replicates = _decimal(s.get("replicates", "1"), "sweep.replicates", integer=True)
    cfg.seed = _decimal(s.get("seed", "0"), "sweep.seed", integer=True)
    if cfg.n_draws < 1:
        raise ConfigError(["sweep.n_draws"], "must be >= 1")
    if cfg.replicates < 1:
        raise ConfigError(["sweep.replicates"], "must be >= 1")
    cfg.output_format = o.get("format", "csv")
    if cfg.output_format not in ("csv", "json"):
        raise ConfigError(["output.format"], "expected 'csv' or 'json'")
    cfg.output_path = o.get("path")
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(["<document>"], f"invalid JSON: {e}") from None
    return parse_config(doc)
