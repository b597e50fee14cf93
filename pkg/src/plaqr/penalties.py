"""SCAD, MCP and LASSO penalties and their convex-difference parts.

Each penalty splits as ``p(|b|) = lam * |b| - L(b)`` with ``L`` convex and
differentiable, which is what the local optimality check works with.
"""

from dataclasses import dataclass

import numpy as np

SCAD = "scad"
MCP = "mcp"
LASSO = "lasso"

DEFAULT_A = {SCAD: 3.7, MCP: 3.0, LASSO: None}


@dataclass(frozen=True)
class PenaltySpec:
    family: str = SCAD
    lam: float = 0.0
    a: float = None

    def __post_init__(self):
        family = self.family.lower()
        if family not in DEFAULT_A:
            raise ValueError(f"unknown penalty family {self.family!r}")
        a = DEFAULT_A[family] if self.a is None else float(self.a)
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if family == SCAD and not a > 2:
            raise ValueError("SCAD needs a > 2")
        if family == MCP and not a > 1:
            raise ValueError("MCP needs a > 1")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "a", a)

    def with_lambda(self, lam):
        return PenaltySpec(self.family, lam, self.a)


def penalty(spec, beta):
    """``p_lambda(|beta|)``, elementwise."""
    b = np.abs(np.asarray(beta, dtype=float))
    lam, a = spec.lam, spec.a
    if spec.family == LASSO:
        out = lam * b
    elif spec.family == SCAD:
        out = np.where(
            b < lam, lam * b,
            np.where(b <= a * lam, (a * lam * b - (b**2 + lam**2) / 2) / (a - 1),
                     (a + 1) * lam**2 / 2))
    else:
        out = np.where(b < a * lam, lam * (b - b**2 / (2 * a * lam if lam > 0 else 1.0)),
                       a * lam**2 / 2)
    return out if out.ndim else float(out)


def penalty_deriv(spec, beta_abs):
    """``p'_lambda`` at ``|beta|``; branch points take the left-hand value."""
    b = np.abs(np.asarray(beta_abs, dtype=float))
    lam, a = spec.lam, spec.a
    if spec.family == LASSO:
        out = np.full_like(b, lam)
    elif spec.family == SCAD:
        out = np.where(b <= lam, lam,
                       np.where(b <= a * lam, (a * lam - b) / (a - 1), 0.0))
    else:
        out = np.where(b <= a * lam, lam - b / a, 0.0)
    out = np.clip(out, 0.0, lam)
    return out if out.ndim else float(out)


def concave_part(spec, beta):
    """``L(beta) = lam * |beta| - p_lambda(|beta|)``, from its closed form."""
    beta = np.asarray(beta, dtype=float)
    b = np.abs(beta)
    lam, a = spec.lam, spec.a
    if spec.family == LASSO:
        out = np.zeros_like(b)
    elif spec.family == SCAD:
        out = np.where(
            b < lam, 0.0,
            np.where(b <= a * lam, (b**2 - 2 * lam * b + lam**2) / (2 * (a - 1)),
                     lam * b - (a + 1) * lam**2 / 2))
    else:
        out = np.where(b < a * lam, b**2 / (2 * a), lam * b - a * lam**2 / 2)
    return out if out.ndim else float(out)


def concave_part_deriv(spec, beta):
    """Derivative of :func:`concave_part`; continuous everywhere."""
    beta = np.asarray(beta, dtype=float)
    b, s = np.abs(beta), np.sign(beta)
    lam, a = spec.lam, spec.a
    if spec.family == LASSO:
        out = np.zeros_like(b)
    elif spec.family == SCAD:
        out = np.where(b < lam, 0.0,
                       np.where(b <= a * lam, (beta - lam * s) / (a - 1), lam * s))
    else:
        out = np.where(b < a * lam, beta / a, lam * s)
    return out if out.ndim else float(out)
