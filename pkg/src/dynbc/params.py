"""Exponent bookkeeping for the half-space problem with a dynamic boundary law.

The continuous problem couples an interior power nonlinearity ``u|u|^(p1-1)``
with a boundary power nonlinearity ``u|u|^(p2-1)`` through the balance
``p1 = 2*p2 - 1``.  The solver iterates in a family of Morrey spaces,
and the whole scheme is controlled by two integrability exponents
``(q1, q2)`` that must satisfy a closed list of strict inequalities.
This module holds the parameter types, derives the dependent exponents,
evaluates the inequality list with explicit margins, and searches for an
admissible ``(q1, q2)`` pair by interval reduction.

Derived quantities, with ``d = n`` the half-space dimension and ``mu`` the
Morrey weight:

* ``q0  = (n - mu) * (p1 - 1) / 2``      critical interior exponent,
* ``qt0 = (n - 1 - mu) * (p1 - 1) / 2``  critical trace exponent,
* ``alpha = 2/(p1-1) - (n-mu)/q1``       interior time weight,
* ``beta  = 1/(p2-1) - (n-1-mu)/q2``     trace time weight,

plus the four auxiliary ratios ``l_bnd = q2/p2``, ``l_int = q1/p1``,
``l1 = (n-mu)*q1 / (n-mu+2*q1)`` and ``l2 = q0/p1`` that must all exceed 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProblemParams",
    "ExponentSet",
    "ConstraintResult",
    "AdmissibilityReport",
    "CONSTRAINT_NAMES",
    "derive_exponents",
    "check_admissible",
    "find_admissible",
    "scan_admissible",
    "DEFAULT_SLACK",
]

DEFAULT_SLACK = 1e-9

# Relative tolerance for the p1 = 2*p2 - 1 tie.
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ProblemParams:
    """Problem data: dimension and the two nonlinearity powers.

    Construction enforces the structural requirements: integer ``n >= 3``,
    powers above 1, the tie ``p1 = 2*p2 - 1`` to 1e-12 relative, and
    ``mu`` in ``[0, n-2)``.  The remaining admissibility conditions
    (criticality of ``p1``, existence of ``(q1, q2)``) are reported by
    :func:`check_admissible`, not raised here, so that out-of-range draws
    can still be examined and reported.
    """

    n: int
    p1: float
    p2: float
    mu: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise ValueError(f"n must be an integer >= 3, got {self.n!r}")
        if self.n < 3:
            raise ValueError(f"n must be >= 3, got {self.n}")
        if not (self.p2 > 1.0 and math.isfinite(self.p2)):
            raise ValueError(f"p2 must be finite and > 1, got {self.p2}")
        if not math.isfinite(self.p1):
            raise ValueError(f"p1 must be finite, got {self.p1}")
        tie = 2.0 * self.p2 - 1.0
        if abs(self.p1 - tie) > _TIE_RTOL * max(1.0, abs(self.p1)):
            raise ValueError(
                f"p1 must equal 2*p2 - 1 (got p1={self.p1}, 2*p2-1={tie})"
            )
        if not (0.0 <= self.mu < self.n - 2):
            raise ValueError(
                f"mu must lie in [0, n-2) = [0, {self.n - 2}), got {self.mu}"
            )

    @property
    def critical_p1(self) -> float:
        """Lower threshold (n-mu)/(n-mu-2) that p1 must exceed."""
        return (self.n - self.mu) / (self.n - self.mu - 2.0)


@dataclass(frozen=True)
class ExponentSet:
    """Derived exponents for a given (params, q1, q2) triple."""

    q1: float
    q2: float
    q0: float
    qt0: float
    alpha: float
    beta: float
    l_bnd: float
    l_int: float
    l1: float
    l2: float

    def as_dict(self) -> dict:
        return {
            "q1": self.q1,
            "q2": self.q2,
            "q0": self.q0,
            "qt0": self.qt0,
            "alpha": self.alpha,
            "beta": self.beta,
            "l_bnd": self.l_bnd,
            "l_int": self.l_int,
            "l1": self.l1,
            "l2": self.l2,
        }


def derive_exponents(params: ProblemParams, q1: float, q2: float) -> ExponentSet:
    """Compute all dependent exponents; no admissibility is enforced here."""
    if not (q1 > 0 and q2 > 0):
        raise ValueError(f"q1 and q2 must be positive, got {q1}, {q2}")
    n, p1, p2, mu = params.n, params.p1, params.p2, params.mu
    q0 = (n - mu) * (p1 - 1.0) / 2.0
    qt0 = (n - 1.0 - mu) * (p1 - 1.0) / 2.0
    alpha = 2.0 / (p1 - 1.0) - (n - mu) / q1
    beta = 1.0 / (p2 - 1.0) - (n - 1.0 - mu) / q2
    return ExponentSet(
        q1=q1,
        q2=q2,
        q0=q0,
        qt0=qt0,
        alpha=alpha,
        beta=beta,
        l_bnd=q2 / p2,
        l_int=q1 / p1,
        l1=(n - mu) * q1 / ((n - mu) + 2.0 * q1),
        l2=q0 / p1,
    )


CONSTRAINT_NAMES = (
    "0 < alpha < beta*p2 < 1",
    "0 < beta < alpha*p1 < 1",
    "p1 < q1",
    "p2 < q2",
    "q2/p2 > 1",
    "q1/p1 > 1",
    "(n-mu)*q1/(n-mu+2*q1) > 1",
    "p1 > (n-mu)/(n-mu-2)",
    "alpha < n - 1 - 1/q1",
    "beta < n - 1",
    "0 <= mu < n-2",
    "qt0 > 1",
    "p1 = 2*p2 - 1",
)


@dataclass(frozen=True)
class ConstraintResult:
    """Single named constraint with its margin.

    ``margin`` is the distance to the nearest violated/active boundary;
    a strict inequality is accepted when ``margin > slack``.
    """

    name: str
    ok: bool
    margin: float

    def as_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "margin": self.margin}


@dataclass(frozen=True)
class AdmissibilityReport:
    params: ProblemParams
    exponents: ExponentSet
    results: tuple
    admissible: bool
    slack: float

    def failed(self) -> tuple:
        return tuple(r for r in self.results if not r.ok)

    def as_dict(self) -> dict:
        return {
            "params": {
                "n": self.params.n,
                "p1": self.params.p1,
                "p2": self.params.p2,
                "mu": self.params.mu,
            },
            "exponents": self.exponents.as_dict(),
            "constraints": [r.as_dict() for r in self.results],
            "admissible": self.admissible,
            "slack": self.slack,
        }


def check_admissible(
    params: ProblemParams, q1: float, q2: float, slack: float = DEFAULT_SLACK
) -> AdmissibilityReport:
    """Evaluate the 13 named admissibility constraints with margins.

    Strict inequalities hold only with margin > slack, guarding against
    boundary false-positives from rounding.
    """
    n, p1, p2, mu = params.n, params.p1, params.p2, params.mu
    e = derive_exponents(params, q1, q2)
    a, b = e.alpha, e.beta

    def strict(name: str, margin: float) -> ConstraintResult:
        return ConstraintResult(name, bool(margin > slack), float(margin))

    tie_dev = abs(p1 - (2.0 * p2 - 1.0))
    tie_tol = _TIE_RTOL * max(1.0, abs(p1))

    results = (
        strict(CONSTRAINT_NAMES[0], min(a, b * p2 - a, 1.0 - b * p2)),
        strict(CONSTRAINT_NAMES[1], min(b, a * p1 - b, 1.0 - a * p1)),
        strict(CONSTRAINT_NAMES[2], q1 - p1),
        strict(CONSTRAINT_NAMES[3], q2 - p2),
        strict(CONSTRAINT_NAMES[4], e.l_bnd - 1.0),
        strict(CONSTRAINT_NAMES[5], e.l_int - 1.0),
        strict(CONSTRAINT_NAMES[6], e.l1 - 1.0),
        strict(CONSTRAINT_NAMES[7], e.l2 - 1.0),
        strict(CONSTRAINT_NAMES[8], (n - 1.0 - 1.0 / q1) - a),
        strict(CONSTRAINT_NAMES[9], (n - 1.0) - b),
        # mu >= 0 is non-strict; mu < n-2 is strict.
        ConstraintResult(
            CONSTRAINT_NAMES[10],
            bool(mu >= 0.0 and (n - 2.0) - mu > slack),
            float(min(mu, (n - 2.0) - mu)),
        ),
        strict(CONSTRAINT_NAMES[11], e.qt0 - 1.0),
        ConstraintResult(CONSTRAINT_NAMES[12], bool(tie_dev <= tie_tol), float(tie_tol - tie_dev)),
    )
    return AdmissibilityReport(
        params=params,
        exponents=e,
        results=results,
        admissible=all(r.ok for r in results),
        slack=slack,
    )


def _q2_interval(params: ProblemParams, alpha: float) -> tuple:
    """Open interval for r = 1/q2 given alpha, from the q2-side constraints.

    beta(r) = b0 - (n-1-mu)*r is decreasing in r, so every bound on beta
    maps to a bound on r.  Returns (r_lo, r_hi); empty when r_lo >= r_hi.
    """
    n, p1, p2, mu = params.n, params.p1, params.p2, params.mu
    b0 = 1.0 / (p2 - 1.0)
    w = n - 1.0 - mu  # > 1 since mu < n-2
    # Upper bounds on r: q2 > p2; beta > 0; beta > alpha/p2.
    r_hi = min(1.0 / p2, b0 / w, (b0 - alpha / p2) / w)
    # Lower bounds on r: beta < alpha*p1; beta*p2 < 1; beta < n-1.
    r_lo = max(0.0, (b0 - alpha * p1) / w, (b0 - 1.0 / p2) / w, (b0 - (n - 1.0)) / w)
    return r_lo, r_hi


def find_admissible(
    params: ProblemParams,
    slack: float = DEFAULT_SLACK,
    samples: int = 4096,
) -> tuple | None:
    """Search for an admissible (q1, q2) pair, or None when none exists.

    The constraints are monotone in s = 1/q1 and r = 1/q2 separately, so
    the q1-side conditions cut an open s-interval; the joint conditions
    are screened on a fine s-sample, and the midpoints are taken as
    geometric means of the surviving interval endpoints.
    """
    n, p1, mu = params.n, params.p1, params.mu
    # Parameter-only gates.
    e0 = derive_exponents(params, max(p1, 2.0) * 2.0, max(params.p2, 2.0) * 2.0)
    if not (e0.qt0 > 1.0 + slack):
        return None
    if not (e0.l2 > 1.0 + slack / max(1.0, p1)):
        return None  # p1 <= (n-mu)/(n-mu-2): no q1 can fix this

    a0 = 2.0 / (p1 - 1.0)
    q0 = e0.q0
    # s-interval from the q1-only constraints (s = 1/q1).
    s_hi = 1.0 / max(p1, q0, (n - mu) / (n - mu - 2.0))
    q1_max = (n - mu) * p1 * (p1 - 1.0) / (p1 + 1.0)  # from alpha*p1 < 1
    s_lo = 1.0 / q1_max
    # alpha < n-1-1/q1  <=>  s > (a0 - (n-1)) / (n-mu-1).
    s_lo = max(s_lo, (a0 - (n - 1.0)) / (n - mu - 1.0), 0.0)
    if not (s_lo < s_hi):
        return None

    ss = np.linspace(s_lo, s_hi, samples + 2)[1:-1]
    alphas = a0 - (n - mu) * ss
    feas = np.zeros(ss.shape, dtype=bool)
    for i, al in enumerate(alphas):
        r_lo, r_hi = _q2_interval(params, al)
        feas[i] = r_hi - r_lo > 2.0 * slack
    if not feas.any():
        return None
    idx = np.nonzero(feas)[0]
    s1, s2 = ss[idx[0]], ss[idx[-1]]
    s_star = math.sqrt(s1 * s2)
    q1 = 1.0 / s_star
    alpha = a0 - (n - mu) * s_star
    r_lo, r_hi = _q2_interval(params, alpha)
    if r_lo <= 0.0:
        r_lo = r_hi * 1e-3  # geometric midpoint needs a positive endpoint
    r_star = math.sqrt(r_lo * r_hi)
    q2 = 1.0 / r_star
    report = check_admissible(params, q1, q2, slack=slack)
    if not report.admissible:
        return None
    return q1, q2


def scan_admissible(
    params: ProblemParams,
    q_lo: float = 1.01,
    q_hi: float = 100.0,
    step: float = 0.01,
    slack: float = DEFAULT_SLACK,
) -> tuple | None:
    """Brute-force grid scan oracle over (q1, q2).

    Re-derives every constraint from the raw formulas (independent of
    check_admissible) and returns the first admissible grid pair, or None.
    The q1-only mask prunes rows; rows that survive are tested against the
    full q2 axis, so the scan semantics match the dumb double loop.
    """
    n, p1, p2, mu = params.n, params.p1, params.p2, params.mu
    # Parameter-only gates, straight from the formulas.
    if not (0.0 <= mu < n - 2.0 - slack):
        return None
    if abs(p1 - (2.0 * p2 - 1.0)) > _TIE_RTOL * max(1.0, abs(p1)):
        return None
    if not ((n - 1.0 - mu) * (p1 - 1.0) / 2.0 > 1.0 + slack):  # qt0 > 1
        return None
    if not ((n - mu) * (p1 - 1.0) / 2.0 / p1 > 1.0 + slack):  # l2 = q0/p1 > 1
        return None

    qs = np.arange(q_lo, q_hi + step * 0.5, step)
    beta = 1.0 / (p2 - 1.0) - (n - 1.0 - mu) / qs
    ok2 = (
        (qs - p2 > slack)
        & (qs / p2 - 1.0 > slack)
        & (beta > slack)
        & (1.0 - beta * p2 > slack)
        & ((n - 1.0) - beta > slack)
    )
    if not ok2.any():
        return None
    alpha_all = 2.0 / (p1 - 1.0) - (n - mu) / qs
    ok1 = (
        (qs - p1 > slack)
        & (qs / p1 - 1.0 > slack)
        & (alpha_all > slack)
        & (1.0 - alpha_all * p1 > slack)
        & ((n - mu) * qs / ((n - mu) + 2.0 * qs) - 1.0 > slack)
        & ((n - mu) * (p1 - 1.0) / 2.0 / p1 - 1.0 > slack)
        & ((n - 1.0 - 1.0 / qs) - alpha_all > slack)
    )
    beta_ok = beta[ok2]
    q2_ok = qs[ok2]
    for i in np.nonzero(ok1)[0]:
        al = alpha_all[i]
        joint = (beta_ok * p2 - al > slack) & (al * p1 - beta_ok > slack)
        if joint.any():
            j = int(np.argmax(joint))
            return float(qs[i]), float(q2_ok[j])
    return None
