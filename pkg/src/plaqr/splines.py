"""Normalized B-spline bases on [0, 1] and the additive spline design."""

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when a covariate value falls outside [0, 1]."""


class DegenerateKnotsError(ValueError):
    """Raised when quantile knots cannot be placed from the data."""


_EDGE_TOL = 1e-12


def _check_unit(values, what="value"):
    values = np.asarray(values, dtype=float)
    if values.size and (np.any(~np.isfinite(values))
                        or values.min() < -_EDGE_TOL
                        or values.max() > 1 + _EDGE_TOL):
        raise DomainError(f"{what} must lie in [0, 1]")
    return np.clip(values, 0.0, 1.0)


@dataclass(frozen=True)
class SplineBasis:
    """Clamped B-spline basis of a given order (degree + 1) on [0, 1].

    Boundary knots 0 and 1 are repeated ``order`` times so the basis is a
    partition of unity on the closed interval.
    """

    order: int
    internal_knots: tuple = ()
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError("order must be a positive integer")
        internal = tuple(float(k) for k in self.internal_knots)
        if any(not 0.0 < k < 1.0 for k in internal):
            raise DomainError("internal knots must lie strictly inside (0, 1)")
        if any(b < a for a, b in zip(internal, internal[1:])):
            raise ValueError("internal knots must be nondecreasing")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "internal_knots", internal)
        full = np.r_[np.zeros(self.order), internal, np.ones(self.order)]
        full.setflags(write=False)
        object.__setattr__(self, "knots", full)

    @property
    def k_n(self):
        return len(self.internal_knots)

    @property
    def degree(self):
        return self.order - 1

    @property
    def n_basis(self):
        return self.k_n + self.order

    def __call__(self, t):
        return eval_basis(self, t)


def make_basis(order=4, k_n=0, knot_rule="uniform", data_column=None):
    """Build a :class:`SplineBasis` with ``k_n`` internal knots.

    ``knot_rule="uniform"`` spaces knots at ``j / (k_n + 1)``;
    ``"sample_quantile"`` puts them at the matching empirical quantiles of
    ``data_column`` (linear interpolation between order statistics).
    """
    if k_n < 0:
        raise ValueError("k_n must be nonnegative")
    if knot_rule == "uniform":
        knots = np.arange(1, k_n + 1) / (k_n + 1)
    elif knot_rule == "sample_quantile":
        if data_column is None:
            raise ValueError("sample_quantile knots need data_column")
        data = _check_unit(data_column, "data_column")
        if k_n == 0:
            knots = np.empty(0)
        else:
            if k_n > np.unique(data).size:
                raise DegenerateKnotsError(
                    f"k_n={k_n} exceeds the {np.unique(data).size} distinct data values")
            knots = np.quantile(data, np.arange(1, k_n + 1) / (k_n + 1))
            if knots[0] <= 0.0 or knots[-1] >= 1.0:
                raise DegenerateKnotsError("quantile knots fall on the boundary")
    else:
        raise ValueError(f"unknown knot_rule {knot_rule!r}")
    return SplineBasis(order, tuple(knots))


def eval_basis(basis, t):
    """Evaluate all basis functions at ``t`` by the de Boor-Cox recurrence.

    Scalar ``t`` gives a vector of length ``n_basis``; an array gives one row
    per point.
    """
    scalar = np.ndim(t) == 0
    t = _check_unit(np.atleast_1d(t), "t")
    knots = basis.knots
    k = basis.order
    # span index s with knots[s] <= t < knots[s+1]; t == 1 uses the last span
    span = np.searchsorted(knots, t, side="right") - 1
    span = np.clip(span, k - 1, len(knots) - k - 1)

    # values[:, r] holds B_{span-deg+r, deg} while building up the degree
    values = np.zeros((t.size, k))
    values[:, 0] = 1.0
    rows = np.arange(t.size)
    for deg in range(1, k):
        new = np.zeros_like(values)
        for r in range(deg + 1):
            i = span - deg + r
            if r > 0:
                lo, hi = knots[i], knots[i + deg]
                denom = hi - lo
                safe = np.where(denom > 0, denom, 1.0)
                new[:, r] += np.where(denom > 0, (t - lo) / safe, 0.0) * values[:, r - 1]
            if r < deg:
                lo, hi = knots[i + 1], knots[i + deg + 1]
                denom = hi - lo
                safe = np.where(denom > 0, denom, 1.0)
                new[:, r] += np.where(denom > 0, (hi - t) / safe, 0.0) * values[:, r]
        values = new

    out = np.zeros((t.size, basis.n_basis))
    cols = span[:, None] - (k - 1) + np.arange(k)
    out[rows[:, None], cols] = values
    return out[0] if scalar else out


@dataclass(frozen=True)
class AdditiveDesign:
    """Rows ``(1, pi(z_i1)', ..., pi(z_id)')`` for every observation."""

    matrix: np.ndarray
    bases: tuple

    @property
    def n_obs(self):
        return self.matrix.shape[0]

    @property
    def d(self):
        return len(self.bases)

    @property
    def n_basis(self):
        return self.bases[0].n_basis if self.bases else 0

    @property
    def L_n(self):
        return self.matrix.shape[1]

    def block(self, j):
        """Column slice of the j-th nonlinear coordinate (0-based)."""
        start = 1 + j * self.n_basis
        return slice(start, start + self.n_basis)


def build_design(bases, Z):
    """Assemble the additive design for covariates ``Z`` (n x d, in [0, 1])."""
    bases = tuple(bases)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None] if bases else Z.reshape(-1, 0)
    if Z.shape[1] != len(bases):
        raise ValueError(f"Z has {Z.shape[1]} columns but {len(bases)} bases were given")
    if len({b.n_basis for b in bases}) > 1:
        raise ValueError("all coordinates must use the same number of basis functions")
    Z = _check_unit(Z, "Z")
    blocks = [np.ones((Z.shape[0], 1))]
    blocks += [eval_basis(b, Z[:, j]) for j, b in enumerate(bases)]
    matrix = np.hstack(blocks)
    matrix.setflags(write=False)
    return AdditiveDesign(matrix, bases)


@dataclass(frozen=True)
class CenteredComponents:
    """Centered additive components of a spline fit at the data points.

    ``intercept + components.sum(axis=1)`` reproduces ``Pi(z_i)' xi``;
    ``means`` are the subtracted column means, kept so the components can be
    evaluated at new points with the same centering.
    """

    intercept: float
    components: np.ndarray
    means: np.ndarray


def center_g(xi, design):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (design.L_n,):
        raise ValueError(f"xi must have length {design.L_n}")
    comps = np.empty((design.n_obs, design.d))
    for j in range(design.d):
        sl = design.block(j)
        comps[:, j] = design.matrix[:, sl] @ xi[sl]
    means = comps.mean(axis=0) if design.n_obs else np.zeros(design.d)
    comps -= means
    return CenteredComponents(float(xi[0] + means.sum()), comps, means)


def eval_components(xi, bases, means, Z):
    """Evaluate centered components at new points ``Z`` (n x d)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    nb = bases[0].n_basis if bases else 0
    out = np.empty((Z.shape[0], len(bases)))
    for j, b in enumerate(bases):
        coef = xi[1 + j * nb: 1 + (j + 1) * nb]
        out[:, j] = eval_basis(b, Z[:, j]) @ coef - means[j]
    return out
