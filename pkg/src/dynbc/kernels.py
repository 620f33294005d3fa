r"""Closed-form kernels for the half-space integral formulation.

Everything in the solver is built from two kernels on the upper half-space
``R^n_+ = {x = (x', x_n): x_n > 0}``, ``n >= 3``:

* the Poisson kernel of the half-space, evaluated at a shifted height,

  ``P(z, h) = c_n * h / (h^2 + |z|^2)^(n/2)``,  ``c_n = Gamma(n/2) / pi^(n/2)``,

  which integrates to exactly 1 over the tangential hyperplane for every
  ``h > 0``; and

* the Dirichlet Green kernel of the half-space,

  ``G(x, y) = cbar_n * (|x - y|^(2-n) - |x - ybar|^(2-n))``,

  with ``ybar = (y', -y_n)`` the reflected source and
  ``cbar_n = c_n / (2 (n - 2))``.  ``G`` vanishes on the boundary, is
  positive inside, homogeneous of degree ``2 - n``, and is dominated by its
  first term.

The subtraction in ``G`` is catastrophic when ``x_n`` and ``y_n`` are both
small, so the implementation uses the factored form

  ``G = cbar_n * |x - y|^(2-n) * (1 - (1 + e)^-(n-2))``,
  ``e = |x - ybar|/|x - y| - 1 = 4 x_n y_n / (|x-y| (|x-y| + |x-ybar|))``,

where the second expression for ``e`` is exact (difference of squares) and
cancellation-free, and the parenthesis switches to its first-order expansion
``(n-2) * e`` for ``e < 1e-4``.  Since ``e`` is scale-invariant the branch is
stable under dilations and homogeneity is preserved bitwise across it.

The module also provides the exact height antiderivative of ``P`` (used by
the memory operators for per-time-cell product quadrature), the kernel mass
inside a tangential ball (used for truncation accounting), the constant
``ctilde(n, q)`` of the tangential L^q bound, and randomized probes for the
two kernel bounds used by the contraction argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dynbc.reports import ProbeReport

__all__ = [
    "KernelConstants",
    "poisson",
    "poisson_r2",
    "poisson_sym",
    "poisson_mass_in_ball",
    "poisson_height_integral",
    "green",
    "green_r2",
    "riesz_kernel",
    "ctilde",
    "poisson_lq_xn_norm",
    "kernel_bound_probe",
    "elementary_bound_probe",
    "gauss_nodes",
]

_GREEN_EXPANSION_CUT = 1e-4


@dataclass(frozen=True)
class KernelConstants:
    """Dimension-dependent constants, computed once."""

    n: int
    c_n: float
    cbar_n: float
    sphere_area_tan: float  # area of S^(n-2), the unit sphere in R^(n-1)

    @classmethod
    def for_dim(cls, n: int) -> "KernelConstants":
        if n < 3:
            raise ValueError(f"n must be >= 3, got {n}")
        c_n = math.gamma(n / 2.0) / math.pi ** (n / 2.0)
        cbar_n = c_n / (2.0 * (n - 2.0))
        area = 2.0 * math.pi ** ((n - 1.0) / 2.0) / math.gamma((n - 1.0) / 2.0)
        return cls(n=n, c_n=c_n, cbar_n=cbar_n, sphere_area_tan=area)


def gauss_nodes(a: float, b: float, count: int) -> tuple:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(count)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def poisson_r2(r2, h, n: int, c_n: float | None = None):
    """P as a function of squared tangential offset r2 and height h > 0."""
    if c_n is None:
        c_n = KernelConstants.for_dim(n).c_n
    r2 = np.asarray(r2, dtype=float)
    h = np.asarray(h, dtype=float)
    q = h * h + r2
    if n == 3:  # hot path: q^(3/2) via sqrt, ~5x faster than pow
        return c_n * h / (q * np.sqrt(q))
    return c_n * h / q ** (n / 2.0)


def poisson(zp, h, n: int):
    """P(z', h) for tangential offsets zp with shape (..., n-1)."""
    zp = np.asarray(zp, dtype=float)
    r2 = np.sum(zp * zp, axis=-1)
    return poisson_r2(r2, h, n)


def poisson_sym(zp, xn, t, n: int):
    """Even extension in the normal variable: height t + |x_n|."""
    xn = np.asarray(xn, dtype=float)
    return poisson(zp, t + np.abs(xn), n)


def poisson_mass_in_ball(h, radius, n: int, quad_nodes: int = 96):
    """Kernel mass inside the tangential ball of given radius.

    Equals ``c_n * area(S^(n-2)) * int_0^Theta sin(theta)^(n-2) dtheta`` with
    ``Theta = atan(radius / h)``; closed form for n = 3, Gauss quadrature
    otherwise.  The complement (tail mass) is ``1 -`` this value.
    """
    h = np.asarray(h, dtype=float)
    radius = np.asarray(radius, dtype=float)
    if n == 3:
        return 1.0 - h / np.sqrt(h * h + radius * radius)
    consts = KernelConstants.for_dim(n)
    theta = np.arctan2(radius, h)
    flat = np.broadcast_arrays(theta, h)[0].ravel()
    out = np.empty(flat.shape)
    for i, th in enumerate(flat):
        x, w = gauss_nodes(0.0, float(th), quad_nodes)
        out[i] = np.sum(np.sin(x) ** (n - 2) * w)
    out *= consts.c_n * consts.sphere_area_tan
    return out.reshape(np.broadcast(theta, h).shape)


def poisson_mass_in_square(h, half_side: float, n: int, quad_nodes: int = 64):
    """Kernel mass over the square tangential cell [-a, a]^2 (n = 3 only).

    Polar reduction: the radial integral of P r dr is the disk mass, so the
    square mass is the angular average of the disk mass at the square's edge
    radius a/cos(theta), eightfold symmetric.
    """
    if n != 3:
        raise ValueError("square-cell mass implemented for n = 3")
    h = np.asarray(h, dtype=float)
    th, w = gauss_nodes(0.0, math.pi / 4.0, quad_nodes)
    edge = half_side / np.cos(th)
    vals = poisson_mass_in_ball(h[..., None], edge, 3)
    return (4.0 / math.pi) * np.sum(vals * w, axis=-1)


def poisson_square_height_integral(h_lo, h_hi, half_side: float, n: int, quad_nodes: int = 64):
    """Square-cell mass of the kernel, integrated exactly in height (n = 3).

    Uses the height antiderivative of the disk mass, h - sqrt(h^2 + R^2),
    inside the same eightfold polar reduction as poisson_mass_in_square.
    """
    if n != 3:
        raise ValueError("square-cell height integral implemented for n = 3")
    h_lo = np.asarray(h_lo, dtype=float)
    h_hi = np.asarray(h_hi, dtype=float)
    th, w = gauss_nodes(0.0, math.pi / 4.0, quad_nodes)
    edge2 = (half_side / np.cos(th)) ** 2
    anti_hi = h_hi[..., None] - np.sqrt(h_hi[..., None] ** 2 + edge2)
    anti_lo = h_lo[..., None] - np.sqrt(h_lo[..., None] ** 2 + edge2)
    return (4.0 / math.pi) * np.sum((anti_hi - anti_lo) * w, axis=-1)


def poisson_height_integral(r2, h_lo, h_hi, n: int, c_n: float | None = None):
    """Exact integral of P(z, h) dh over [h_lo, h_hi] at fixed offset.

    The antiderivative of ``c_n h (h^2+r^2)^(-n/2)`` in h is
    ``-c_n/(n-2) * (h^2+r^2)^(-(n-2)/2)``, valid for every n >= 3.
    At r2 = 0 and h_lo = 0 the value is infinite; callers replace that
    offset cell by a cell average.
    """
    if c_n is None:
        c_n = KernelConstants.for_dim(n).c_n
    r2 = np.asarray(r2, dtype=float)
    h_lo = np.asarray(h_lo, dtype=float)
    h_hi = np.asarray(h_hi, dtype=float)
    with np.errstate(divide="ignore"):
        if n == 3:
            lo = 1.0 / np.sqrt(h_lo * h_lo + r2)
            hi = 1.0 / np.sqrt(h_hi * h_hi + r2)
        else:
            s = (n - 2.0) / 2.0
            lo = (h_lo * h_lo + r2) ** -s
            hi = (h_hi * h_hi + r2) ** -s
    return c_n / (n - 2.0) * (lo - hi)


def _green_factor(e, n: int):
    """1 - (1 + e)^-(n-2), with the first-order branch below the cut."""
    e = np.asarray(e, dtype=float)
    small = e < _GREEN_EXPANSION_CUT
    with np.errstate(invalid="ignore"):
        full = 1.0 - (1.0 + e) ** (-(n - 2.0))
    return np.where(small, (n - 2.0) * e, full)


def green_r2(r2, xn, yn, n: int, cbar_n: float | None = None):
    """G for tangential offset squared r2 and heights xn, yn >= 0."""
    if cbar_n is None:
        cbar_n = KernelConstants.for_dim(n).cbar_n
    r2 = np.asarray(r2, dtype=float)
    xn = np.asarray(xn, dtype=float)
    yn = np.asarray(yn, dtype=float)
    dn = xn - yn
    sn = xn + yn
    d2 = r2 + dn * dn
    dt2 = r2 + sn * sn
    d = np.sqrt(d2)
    dt = np.sqrt(dt2)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = 4.0 * xn * yn / (d * (d + dt))
        base = cbar_n * d ** (2.0 - n)
        out = base * _green_factor(e, n)
    # The boundary rows are exactly zero: e == 0 there, and 0 * inf from a
    # coincident-point evaluation stays inf, which callers must exclude.
    return np.where((xn == 0.0) | (yn == 0.0), 0.0, out)


def green(x, y, n: int):
    """G(x, y) for points with shape (..., n); last component is the height."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zp = x[..., :-1] - y[..., :-1]
    r2 = np.sum(zp * zp, axis=-1)
    return green_r2(r2, x[..., -1], y[..., -1], n)


def riesz_kernel(x, gamma: float, d: int):
    """|x|^(gamma - d) on R^d, the Riesz potential kernel of order gamma."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    with np.errstate(divide="ignore"):
        return r ** (gamma - d)


def ctilde(n: int, q: float, quad_nodes: int = 200) -> float:
    """Constant of the tangential L^q bound.

    ``ctilde = c_n * (int_0^(pi/2) cos(r)^((n-1)q - 2) dr)^(1/q)``; requires
    ``(n-1) q > 1`` so the exponent exceeds -1.
    """
    m = (n - 1.0) * q - 2.0
    if m <= -1.0:
        raise ValueError(f"need (n-1)*q > 1, got n={n}, q={q}")
    x, w = gauss_nodes(0.0, math.pi / 2.0, quad_nodes)
    integral = float(np.sum(np.cos(x) ** m * w))
    return KernelConstants.for_dim(n).c_n * integral ** (1.0 / q)


def poisson_lq_xn_norm(r: float, t: float, n: int, q: float, quad_nodes: int = 200) -> float:
    """Oracle for ``(int_0^inf P(z, xn + t)^q dxn)^(1/q)`` at |z| = r.

    Independent quadrature route: substitute ``u = xn + t`` and then
    ``u = r tan(theta)``, which turns the integral into a smooth
    trigonometric one on a bounded interval.  Closed form at r = 0.
    """
    c_n = KernelConstants.for_dim(n).c_n
    if r == 0.0:
        expo = q * (n - 1.0) - 1.0  # decay u^(q - nq), integrate from t
        return (c_n**q * t ** (-expo) / expo) ** (1.0 / q)
    th0 = math.atan2(t, r)
    x, w = gauss_nodes(th0, math.pi / 2.0, quad_nodes)
    integrand = np.sin(x) ** q * np.cos(x) ** ((n - 1.0) * q - 2.0)
    integral = float(np.sum(integrand * w)) * r ** (1.0 + q - n * q)
    return (c_n**q * integral) ** (1.0 / q)


def kernel_bound_probe(
    n: int,
    q: float,
    trials: int = 200,
    seed: int = 0,
    tolerance: float = 1.0 + 1e-6,
) -> tuple:
    """Randomized probes of the two kernel bounds.

    Returns (lq_report, pointwise_report).  The first checks

      ``||P(z, xn+t)||_{L^q(dxn)} <= ctilde * t^(-theta*k) * |z|^(-(1-theta)*k)``

    with ``k = n - 1 - 1/q``, the second checks

      ``P(z, xn+yn+t) <= c_n * t^(-theta(n-1)) * |(z, xn-yn)|^(-(1-theta)(n-1))``,

    both over log-uniform random inputs and random interpolation weights
    theta in [0, 1].
    """
    consts = KernelConstants.for_dim(n)
    rng = np.random.default_rng(seed)
    k = n - 1.0 - 1.0 / q
    ct = ctilde(n, q)

    ratios = np.empty(trials)
    for i in range(trials):
        r = 10.0 ** rng.uniform(-2, 2)
        t = 10.0 ** rng.uniform(-2, 2)
        theta = rng.uniform(0.0, 1.0)
        lhs = poisson_lq_xn_norm(r, t, n, q)
        rhs = ct * t ** (-theta * k) * r ** (-(1.0 - theta) * k)
        ratios[i] = lhs / rhs
    i_max = int(np.argmax(ratios))
    lq_report = ProbeReport(
        name=f"poisson-lq-xn-bound-n{n}-q{q:g}",
        trials=trials,
        max_ratio=float(ratios[i_max]),
        argmax_input_id=i_max,
        tolerance=tolerance,
        passed=bool(ratios[i_max] <= tolerance),
    )

    m = max(trials, 1000)
    r = 10.0 ** rng.uniform(-2, 2, size=m)
    t = 10.0 ** rng.uniform(-2, 2, size=m)
    xn = 10.0 ** rng.uniform(-2, 2, size=m)
    yn = 10.0 ** rng.uniform(-2, 2, size=m)
    theta = rng.uniform(0.0, 1.0, size=m)
    lhs = poisson_r2(r * r, xn + yn + t, n, consts.c_n)
    dist = np.sqrt(r * r + (xn - yn) ** 2)
    rhs = consts.c_n * t ** (-theta * (n - 1.0)) * dist ** (-(1.0 - theta) * (n - 1.0))
    pratios = lhs / rhs
    j_max = int(np.argmax(pratios))
    pw_report = ProbeReport(
        name=f"poisson-pointwise-bound-n{n}",
        trials=m,
        max_ratio=float(pratios[j_max]),
        argmax_input_id=j_max,
        tolerance=tolerance,
        passed=bool(pratios[j_max] <= tolerance),
    )
    return lq_report, pw_report


def elementary_bound_probe(
    trials: int = 100000, seed: int = 0, tolerance: float = 1.0 + 1e-12
) -> ProbeReport:
    """Probe of ``(a^2+b^2)^-q <= (a^(2 theta) a... b^(2(1-theta)))^-q``.

    The inequality is the weighted AM-GM ``a^2 + b^2 >= a^(2 theta) *
    b^(2 (1-theta))`` raised to a negative power; it underlies every kernel
    interpolation bound above.
    """
    rng = np.random.default_rng(seed)
    a = 10.0 ** rng.uniform(-3, 3, size=trials)
    b = 10.0 ** rng.uniform(-3, 3, size=trials)
    q = rng.uniform(0.1, 5.0, size=trials)
    theta = rng.uniform(0.0, 1.0, size=trials)
    lhs = (a * a + b * b) ** -q
    rhs = (a ** (2.0 * theta) * b ** (2.0 * (1.0 - theta))) ** -q
    ratios = lhs / rhs
    i_max = int(np.argmax(ratios))
    return ProbeReport(
        name="elementary-interpolation-bound",
        trials=trials,
        max_ratio=float(ratios[i_max]),
        argmax_input_id=i_max,
        tolerance=tolerance,
        passed=bool(ratios[i_max] <= tolerance),
    )
