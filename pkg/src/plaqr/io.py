"""CSV ingestion and JSON/CSV serialization of fits and reports."""

import csv
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .fit import FitResult
from .splines import CenteredComponents, SplineBasis, eval_components

log = logging.getLogger(__name__)

MISSING = {"", "na", "nan", "null", "none"}
GRID_POINTS = 101


class ParseError(ValueError):
    """Malformed input file; the message names the row and column."""


class DegenerateColumnError(ValueError):
    """A nonlinear column is constant and cannot be rescaled to [0, 1]."""


@dataclass(frozen=True)
class Rescale:
    """Affine map ``z = (x - lo) / (hi - lo)`` applied to a nonlinear column."""

    lo: float
    hi: float

    def forward(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)

    def inverse(self, z):
        return self.lo + np.asarray(z, dtype=float) * (self.hi - self.lo)


@dataclass(frozen=True, eq=False)
class Dataset:
    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    response: str
    linear: tuple
    nonlinear: tuple
    rescale: tuple          # one Rescale per nonlinear column
    n_dropped: int = 0


def _split_names(names):
    if names is None:
        return ()
    if isinstance(names, str):
        names = names.split(",")
    return tuple(n.strip() for n in names if n.strip())


def load_csv(path, response, linear=(), nonlinear=()):
    """Read a comma-separated file with a header row.

    Rows with a missing cell in any used column are dropped (count logged
    and returned).  Nonlinear columns are min-max rescaled to ``[0, 1]``.
    """
    linear, nonlinear = _split_names(linear), _split_names(nonlinear)
    roles = (response,) + linear + nonlinear
    if len(set(roles)) != len(roles):
        raise ValueError("column roles must be disjoint")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        missing = [c for c in roles if c not in header]
        if missing:
            raise ParseError(f"{path}: columns not in header: {', '.join(missing)}")
        idx = [header.index(c) for c in roles]
        rows, dropped = [], 0
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < len(header):
                rec = rec + [""] * (len(header) - len(rec))
            cells = [rec[i].strip() for i in idx]
            if any(c.lower() in MISSING for c in cells):
                dropped += 1
                continue
            vals = []
            for name, cell in zip(roles, cells):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: row {lineno}, column {name!r}: "
                                     f"cannot parse {cell!r} as a number") from None
            rows.append(vals)
    if dropped:
        log.warning("%s: dropped %d row(s) with missing values", path, dropped)
    if not rows:
        raise ParseError(f"{path}: no complete rows")
    data = np.array(rows)
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite values")
    k = len(linear)
    Zraw = data[:, 1 + k:]
    rescale = []
    for j, name in enumerate(nonlinear):
        lo, hi = Zraw[:, j].min(), Zraw[:, j].max()
        if not hi > lo:
            raise DegenerateColumnError(f"nonlinear column {name!r} is constant")
        rescale.append(Rescale(float(lo), float(hi)))
    Z = np.column_stack([r.forward(Zraw[:, j]) for j, r in enumerate(rescale)]) if rescale \
        else np.zeros((data.shape[0], 0))
    return Dataset(data[:, 0], data[:, 1:1 + k], np.clip(Z, 0.0, 1.0), response, linear,
                   nonlinear, tuple(rescale), dropped)


def _clean(obj):
    """JSON-safe copy: arrays to lists, numpy scalars to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj):
    """Deterministic JSON text (sorted keys, shortest round-trip floats)."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def write_csv(rows, path, columns=None):
    """Write a list of dicts as a comma-separated table with a header row."""
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _fmt(v):
    v = _clean(v)
    if v is None:
        return ""
    if isinstance(v, list):
        return " ".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def g_grid(fit, rescale=(), names=(), n_points=GRID_POINTS):
    """Centered components on a uniform grid of ``[0, 1]`` per coordinate."""
    t = np.linspace(0.0, 1.0, n_points)
    out = {}
    d = len(fit.bases)
    vals = eval_components(fit.xi, fit.bases, fit.g.means, np.tile(t[:, None], (1, d))) if d else None
    for j in range(d):
        name = names[j] if j < len(names) else f"z{j + 1}"
        entry = {"z": t, "g": vals[:, j]}
        if j < len(rescale):
            entry["original"] = rescale[j].inverse(t)
        out[name] = entry
    return out


def fit_to_dict(fit, linear_names=None, nonlinear_names=(), rescale=()):
    """Plain-data form of a :class:`~plaqr.fit.FitResult`."""
    p = fit.beta.size
    linear_names = list(linear_names or [f"x{j + 1}" for j in range(p)])
    kkt = None
    if fit.kkt_report is not None:
        r = fit.kkt_report
        kkt = {"ok": r["ok"], "violations": [linear_names[j] for j in r["violations"]],
               "spline_ok": bool(np.all(r["spline_ok"]))}
    return {
        "tau": fit.tau,
        "lambda": fit.lam,
        "beta": fit.beta,
        "linear": linear_names,
        "active_set": [linear_names[j] for j in fit.active_set],
        "xi": fit.xi,
        "intercept": fit.g.intercept,
        "g_means": fit.g.means,
        "bases": [{"order": b.order, "internal_knots": b.internal_knots} for b in fit.bases],
        "g_grid": g_grid(fit, rescale, nonlinear_names),
        "objective": fit.objective,
        "check_loss": fit.check_loss_total,
        "n_interpolated": fit.n_interpolated,
        "lla_iterations": fit.lla_iterations,
        "converged": fit.converged,
        "status": fit.status,
        "kkt": kkt,
    }


def fit_from_dict(d):
    """Rebuild a :class:`~plaqr.fit.FitResult` good for prediction and ``g_at``."""
    bases = tuple(SplineBasis(b["order"], tuple(b["internal_knots"])) for b in d["bases"])
    beta = np.array(d["beta"], dtype=float)
    g = CenteredComponents(float(d["intercept"]), np.zeros((0, len(bases))),
                           np.array(d["g_means"], dtype=float))
    return FitResult(beta=beta, xi=np.array(d["xi"], dtype=float), g=g,
                     residuals=np.zeros(0), objective=d.get("objective"), tau=d["tau"],
                     lam=d.get("lambda"), lla_iterations=d.get("lla_iterations", 0),
                     converged=d.get("converged", True), status=d.get("status", "optimal"),
                     n_interpolated=d.get("n_interpolated", 0), bases=bases)


def load_fit(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return fit_from_dict(d.get("fit", d))
