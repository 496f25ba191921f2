"""Named testbeds, as addressed from the command line and config files.

Names:

``twopoint``
    the two-point running example.
``poisson:<lambda_p>:<lambda_q>``
    two Poissons, e.g. ``poisson:11:10``.
``categorical:<k>:<v>:<seed>:<law>``
    a seeded random table over ``v**k`` points; law is ``uniform-dirichlet``
    or ``heavy-tail``. An optional sixth field sets the hole fraction.
``constraint:<json-file>``
    a constraint EBM described by a JSON file (see :func:`load_constraint_spec`).
    ``constraint:toy`` is a built-in 6-position, 8-symbol instance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .estimators import MomentSpec
from .samplers import RandomWalkKernel, SingleSiteKernel
from .testbeds import (make_constraint_testbed, make_poisson_pair, make_random_categorical,
                       make_two_point, poisson_space)


class TestbedError(ValueError):
    """Unknown or malformed testbed name."""


@dataclass
class Testbed:
    name: str
    P: object
    q: object
    space: object = None            # oracle space, when one exists
    base: object = None             # normalized base model for KL-to-base
    kernel: object = None           # local MH kernel
    moments: list = field(default_factory=list)
    format_point: Callable = str
    statistic: Callable | None = None   # scalar summary for autocorrelation

    @property
    def enumerable(self):
        return self.space is not None


def _digits_formatter(decode):
    def fmt(x):
        return ",".join(str(int(d)) for d in np.atleast_1d(decode(x)))
    return fmt


def _num(s, kind, what):
    try:
        v = kind(s)
    except (TypeError, ValueError):
        raise TestbedError(f"bad {what} {s!r}") from None
    if kind is float and not math.isfinite(v):
        raise TestbedError(f"bad {what} {s!r}")
    return v


def load_constraint_spec(path):
    """Read a constraint testbed description.

    The file is a JSON object; numbers are decimal strings::

        {"k": "6", "v": "8", "seed": "0",
         "pointwise": [{"position": "0", "symbols": ["0", "1"]}],
         "exponential": [{"symbol": "3", "at_least": "2", "lambda": "1.5"}],
         "proposal": "base"}

    ``proposal`` is ``base`` or ``projected``.
    """
    with open(path) as fh:
        doc = json.load(fh)
    allowed = {"k", "v", "seed", "pointwise", "exponential", "proposal", "concentration"}
    extra = sorted(set(doc) - allowed)
    if extra:
        raise TestbedError(f"unknown keys in constraint spec: {', '.join(extra)}")
    kw = {}
    for key in ("k", "v", "seed"):
        if key in doc:
            kw[key] = _num(doc[key], int, key)
    if "concentration" in doc:
        kw["concentration"] = _num(doc["concentration"], float, "concentration")
    if "proposal" in doc:
        kw["proposal"] = doc["proposal"]
    if "pointwise" in doc:
        kw["pointwise"] = [(_num(c["position"], int, "position"),
                            [_num(s, int, "symbol") for s in c["symbols"]])
                           for c in doc["pointwise"]]
    if "exponential" in doc:
        kw["exponential"] = [(_num(c["symbol"], int, "symbol"),
                              _num(c["at_least"], int, "at_least"),
                              _num(c["lambda"], float, "lambda"))
                             for c in doc["exponential"]]
    return kw


def resolve(name: str, proposal: str | None = None) -> Testbed:
    """Build the testbed for ``name``; ``proposal`` overrides the constraint
    proposal kind (``base`` or ``projected``)."""
    kind, _, rest = name.partition(":")
    parts = rest.split(":") if rest else []
    if kind == "twopoint" and not parts:
        tp = make_two_point()
        return Testbed(name, tp.target, tp.proposal, tp.space, base=tp.proposal,
                       kernel=SingleSiteKernel(1, 2),
                       moments=[MomentSpec("x", lambda x: np.asarray(x, dtype=float))])
    if kind == "poisson" and len(parts) == 2:
        lp, lq = (_num(p, float, "Poisson rate") for p in parts)
        if lp <= 0 or lq <= 0:
            raise TestbedError("Poisson rates must be positive")
        P, q = make_poisson_pair(lp, lq)
        return Testbed(name, P, q, poisson_space(lp), base=q, kernel=RandomWalkKernel(),
                       moments=[MomentSpec("x", lambda x: np.asarray(x, dtype=float))])
    if kind == "categorical" and len(parts) in (4, 5):
        k, v, seed = (_num(p, int, "categorical field") for p in parts[:3])
        holes = _num(parts[4], float, "hole fraction") if len(parts) == 5 else 0.0
        try:
            cat = make_random_categorical(k, v, seed, parts[3], holes=holes)
        except ValueError as e:
            raise TestbedError(str(e)) from None
        return Testbed(name, cat.target, cat.proposal, cat.space, base=cat.proposal,
                       kernel=SingleSiteKernel(k, v),
                       moments=[MomentSpec("x0", lambda x, c=cat: cat.decode(x)[..., 0]
                                           .astype(float))],
                       format_point=_digits_formatter(cat.decode) if k > 1 else str)
    if kind == "constraint" and len(parts) >= 1:
        path = rest
        kw = {} if path == "toy" else load_constraint_spec(path)
        if proposal is not None:
            kw["proposal"] = proposal
        try:
            tb = make_constraint_testbed(**kw)
        except ValueError as e:
            raise TestbedError(str(e)) from None
        space = tb.space if tb.size <= 10_000 else None
        feats = tb.features

        def stat(x, _f=feats):
            return sum(np.asarray(f(x), dtype=float) for f in _f) + tb.decode(x)[..., -1]

        return Testbed(name, tb.target, tb.proposal, space, base=tb.base,
                       kernel=SingleSiteKernel(tb.k, tb.v),
                       moments=[MomentSpec(f.__name__, f) for f in feats],
                       format_point=_digits_formatter(tb.decode), statistic=stat)
    raise TestbedError(f"unknown testbed {name!r}")
