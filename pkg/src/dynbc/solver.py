"""Time-weighted norm, Picard map, fixed-point iteration, and contraction probes.

The solution map is iterated from the boundary-data term; convergence is
measured in the three-component time-weighted norm

    sup_t ||u(t)||        (interior, exponent q0)
  + sup_t t^alpha ||u(t)||  (interior, exponent q1)
  + sup_t t^beta ||u0(t)||  (trace, exponent q2)

with all sups over the time grid.  Smallness is an experimental knob: the
iteration measures its own contraction ratio instead of assuming one from
analytic constants.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .fields import BoundaryField, Field, trace
from .morrey import MorreyPolicy, MorreySpec, _estimate_on_grid
from .params import ExponentSet, ProblemParams
from .reports import ProbeReport

__all__ = [
    "SolverConfig",
    "SolutionRecord",
    "XNorm",
    "DivergenceError",
    "odd_power",
    "x_norm",
    "picard_map",
    "picard_solve",
    "fixed_point_residual",
    "contraction_probe",
    "iteration_rows",
]

_NORM_POLICY = MorreyPolicy(stride=4)


class DivergenceError(RuntimeError):
    """Raised when an iterate stops being finite; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SolverConfig:
    """Iteration knobs; epsilon is the ball-radius surrogate used by probes."""

    epsilon: float = 0.25
    max_iters: int = 40
    tol: float = 1e-8
    relaxation: float = 1.0
    residual_floor: float = 1e-14
    divergence_cap: float = 1e30
    ratio_fail_limit: int = 3
    norm_policy: MorreyPolicy = _NORM_POLICY

    def __post_init__(self) -> None:
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError("relaxation must lie in (0, 1]")


@dataclass(frozen=True)
class XNorm:
    """Three-component time-weighted norm with its per-time breakdown."""

    components: tuple
    per_time: np.ndarray  # (3, m_t) weighted estimates at each time node

    @property
    def total(self) -> float:
        return float(sum(self.components))


@dataclass
class SolutionRecord:
    """Outcome of a Picard run: the iterate, its trace, and diagnostics."""

    u: Field
    u0: np.ndarray
    x_components: tuple
    residuals: list
    ratios: list
    norm_history: list
    increment_mins: list
    iterations: int
    converged: bool
    status: str
    timings: list = field(default_factory=list)

    @property
    def x_total(self) -> float:
        return float(sum(self.x_components))


def odd_power(values: np.ndarray, p: float) -> np.ndarray:
    """The odd nonlinearity v |v|^(p-1), sign-preserving for any real p >= 1."""
    return np.sign(values) * np.abs(values) ** p


def _norm_specs(params: ProblemParams, exps: ExponentSet) -> tuple:
    n, mu = params.n, params.mu
    return (
        MorreySpec(q=exps.q0, mu=mu, d=n, domain="half-space"),
        MorreySpec(q=exps.q1, mu=mu, d=n, domain="half-space"),
        MorreySpec(q=exps.q2, mu=mu, d=n - 1, domain="boundary"),
    )


def x_norm(
    u: Field | SolutionRecord,
    params: ProblemParams,
    exps: ExponentSet,
    policy: MorreyPolicy | None = None,
    u0: np.ndarray | None = None,
) -> XNorm:
    """Three-component norm of a space-time field over the time grid.

    The trace history defaults to the field's boundary plane.  Weights t^alpha
    and t^beta make the second and third components scale-invariant under the
    problem's dilation group.
    """
    if isinstance(u, SolutionRecord):
        u0 = u.u0 if u0 is None else u0
        u = u.u
    if u0 is None:
        u0 = trace(u)
    policy = policy or _NORM_POLICY
    spec0, spec1, spec2 = _norm_specs(params, exps)
    grid, tgrid = u.grid, u.tgrid
    t = tgrid.nodes
    per_time = np.zeros((3, tgrid.m_t))
    for i in range(tgrid.m_t):
        vals = u.values[i].ravel()
        per_time[0, i] = _estimate_on_grid(grid, vals, spec0, policy, boundary=False).value
        per_time[1, i] = (
            t[i] ** exps.alpha
            * _estimate_on_grid(grid, vals, spec1, policy, boundary=False).value
        )
        per_time[2, i] = (
            t[i] ** exps.beta
            * _estimate_on_grid(grid, u0[i].ravel(), spec2, policy, boundary=True).value
        )
    return XNorm(components=tuple(float(c) for c in per_time.max(axis=1)), per_time=per_time)


def picard_map(
    ws: ops.Workspace,
    u: Field | SolutionRecord,
    phi: BoundaryField,
    params: ProblemParams,
    exps: ExponentSet,
) -> Field:
    """One application of the solution map at every time node.

    Output = boundary-data term + boundary memory of the trace nonlinearity
    + interior memory and Green potential of the interior nonlinearity.  The
    output inherits the data's tangential far field (the nonlinear terms
    decay faster).
    """
    if isinstance(u, SolutionRecord):
        u = u.u
    p1, p2 = params.p1, params.p2
    g_hist = odd_power(trace(u), p2)
    g_far = phi.far_field.powered(p2) if phi.far_field is not None else None
    f_nl = Field(ws.grid, ws.tgrid, odd_power(u.values, p1))
    out = ops.poisson_extension(ws, phi).values
    out = out + ops.boundary_memory(ws, g_hist, far=g_far).values
    out = out + ops.interior_memory(ws, f_nl).values
    out = out + ops.green_potential(ws, f_nl).values
    if not np.all(np.isfinite(out)):
        raise DivergenceError(
            "non-finite iterate",
            {"bad_nodes": int(np.size(out) - np.isfinite(out).sum())},
        )
    return Field(ws.grid, ws.tgrid, out, trace_far_field=phi.far_field)


def _nonlinear_increment(
    ws: ops.Workspace, u: Field, v: Field, params: ProblemParams
) -> Field:
    """Map difference with the shared data term cancelled exactly."""
    p1, p2 = params.p1, params.p2
    dg = odd_power(trace(u), p2) - odd_power(trace(v), p2)
    df = Field(ws.grid, ws.tgrid, odd_power(u.values, p1) - odd_power(v.values, p1))
    out = ops.boundary_memory(ws, dg).values
    out = out + ops.interior_memory(ws, df).values
    out = out + ops.green_potential(ws, df).values
    return Field(ws.grid, ws.tgrid, out)


def picard_solve(
    ws: ops.Workspace,
    phi: BoundaryField,
    params: ProblemParams,
    exps: ExponentSet,
    cfg: SolverConfig | None = None,
    initial: Field | None = None,
) -> SolutionRecord:
    """Fixed-point iteration from the boundary-data term.

    Stops on relative residual < tol (converged), on ratio_fail_limit
    consecutive contraction ratios >= 1 (no-contraction), on a non-finite or
    capped iterate (diverged), or on max_iters.  iterations counts map
    applications, the initial iterate included.
    """
    cfg = cfg or SolverConfig()
    policy = cfg.norm_policy
    timings: list[float] = []
    t0 = time.perf_counter()
    u_prev = initial if initial is not None else ops.poisson_extension(ws, phi)
    timings.append(time.perf_counter() - t0)
    prev_norm = x_norm(u_prev, params, exps, policy)
    residuals: list[float] = []
    ratios: list[float] = []
    norm_history: list[tuple] = [prev_norm.components]
    increment_mins: list[float] = []
    inc_norms: list[float] = []
    status, converged = "max-iters", False
    iterations = 1
    for _ in range(cfg.max_iters):
        t0 = time.perf_counter()
        try:
            mapped = picard_map(ws, u_prev, phi, params, exps)
        except DivergenceError:
            status, converged = "diverged", False
            break
        if cfg.relaxation < 1.0:
            mapped = Field(
                ws.grid,
                ws.tgrid,
                (1.0 - cfg.relaxation) * u_prev.values + cfg.relaxation * mapped.values,
                trace_far_field=mapped.trace_far_field,
            )
        iterations += 1
        diff = Field(ws.grid, ws.tgrid, mapped.values - u_prev.values)
        inc = x_norm(diff, params, exps, policy).total
        increment_mins.append(float((mapped.values - u_prev.values).min()))
        residual = inc / max(prev_norm.total, cfg.residual_floor)
        residuals.append(residual)
        if inc_norms:
            ratios.append(inc / max(inc_norms[-1], cfg.residual_floor))
        inc_norms.append(inc)
        u_prev = mapped
        prev_norm = x_norm(u_prev, params, exps, policy)
        norm_history.append(prev_norm.components)
        timings.append(time.perf_counter() - t0)
        if not math.isfinite(prev_norm.total) or prev_norm.total > cfg.divergence_cap:
            status, converged = "diverged", False
            break
        if residual < cfg.tol:
            status, converged = "converged", True
            break
        fails = 0
        for r in reversed(ratios):
            if r >= 1.0:
                fails += 1
            else:
                break
        if fails >= cfg.ratio_fail_limit:
            status, converged = "no-contraction", False
            break
    return SolutionRecord(
        u=u_prev,
        u0=trace(u_prev).copy(),
        x_components=prev_norm.components,
        residuals=residuals,
        ratios=ratios,
        norm_history=norm_history,
        increment_mins=increment_mins,
        iterations=iterations,
        converged=converged,
        status=status,
        timings=timings,
    )


def fixed_point_residual(
    ws: ops.Workspace,
    record: SolutionRecord,
    phi: BoundaryField,
    params: ProblemParams,
    exps: ExponentSet,
    policy: MorreyPolicy | None = None,
) -> float:
    """Relative defect ||u - map(u)|| / max(||u||, floor) by one extra map."""
    mapped = picard_map(ws, record.u, phi, params, exps)
    diff = Field(ws.grid, ws.tgrid, mapped.values - record.u.values)
    num = x_norm(diff, params, exps, policy).total
    den = max(x_norm(record.u, params, exps, policy).total, 1e-14)
    return num / den


def _random_ball_field(
    ws: ops.Workspace,
    params: ProblemParams,
    exps: ExponentSet,
    rng: np.random.Generator,
    target: float,
    policy: MorreyPolicy,
) -> Field:
    grid, tgrid = ws.grid, ws.tgrid
    pts = grid.points
    vals = np.zeros(pts.shape[0])
    for k in range(int(rng.integers(1, 4))):
        # first bump sits on the boundary so every probe field carries
        # trace content and the boundary nonlinearity stays dominant
        xn_c = 0.0 if k == 0 else rng.uniform(0.0, 0.5 * grid.depth)
        c = np.concatenate(
            [
                rng.uniform(-0.4 * grid.half_width, 0.4 * grid.half_width, grid.tan_dim),
                [xn_c],
            ]
        )
        width = math.exp(rng.uniform(math.log(0.5), math.log(1.5)))
        amp = rng.uniform(0.3, 1.0) * (1.0 if rng.uniform() < 0.7 else -1.0)
        vals += amp * np.exp(-0.5 * np.sum((pts - c) ** 2, axis=1) / width**2)
    decay = (1.0 + tgrid.nodes / tgrid.nodes[0]) ** -rng.uniform(0.1, 0.5)
    raw = decay[:, None] * vals[None, :]
    fld = Field(grid, tgrid, raw.reshape((tgrid.m_t,) + grid.shape))
    nrm = x_norm(fld, params, exps, policy).total
    return Field(grid, tgrid, fld.values * (target / max(nrm, 1e-300)))


def contraction_probe(
    ws: ops.Workspace,
    params: ProblemParams,
    exps: ExponentSet,
    cfg: SolverConfig | None = None,
    pairs: int = 6,
    seed: int = 0,
) -> ProbeReport:
    """Empirical Lipschitz ratio of the map's nonlinear part on a small ball.

    Reports max ||map(u) - map(v)|| / ||u - v|| over seeded pairs with norms
    at most 2*epsilon, then repeats at epsilon/2; the ratio must fall by
    about 2^-(p2 - 1) (the dominant boundary nonlinearity), asserted within
    a factor of 2.
    """
    cfg = cfg or SolverConfig()
    policy = cfg.norm_policy

    def max_ratio_at(eps: float) -> tuple:
        rng = np.random.default_rng(seed)
        worst, arg = 0.0, -1
        for i in range(pairs):
            tu = rng.uniform(0.5 * eps, 2.0 * eps)
            tv = rng.uniform(0.5 * eps, 2.0 * eps)
            u = _random_ball_field(ws, params, exps, rng, tu, policy)
            v = _random_ball_field(ws, params, exps, rng, tv, policy)
            dv = x_norm(
                Field(ws.grid, ws.tgrid, u.values - v.values), params, exps, policy
            ).total
            if dv <= 0.0:
                continue
            dphi = x_norm(
                _nonlinear_increment(ws, u, v, params), params, exps, policy
            ).total
            ratio = dphi / dv
            if ratio > worst:
                worst, arg = ratio, i
        return worst, arg

    full, arg_full = max_ratio_at(cfg.epsilon)
    half, _ = max_ratio_at(0.5 * cfg.epsilon)
    expected = 2.0 ** -(params.p2 - 1.0)
    scaling = half / full if full > 0.0 else 0.0
    scaling_ok = expected / 2.0 <= scaling <= expected * 2.0 if full > 0.0 else True
    return ProbeReport(
        name="picard-contraction",
        trials=pairs,
        max_ratio=float(full),
        argmax_input_id=arg_full,
        tolerance=1.0,
        passed=bool(full < 1.0 and scaling_ok),
        details={
            "epsilon": cfg.epsilon,
            "max_ratio_half_epsilon": float(half),
            "epsilon_scaling": float(scaling),
            "expected_scaling": expected,
        },
    )


def iteration_rows(record: SolutionRecord, timings: bool = False) -> list:
    """CSV rows of the iteration log; wall time column zeroed unless asked."""
    rows = ["iter,residual,ratio,xnorm_interior,xnorm_weighted,xnorm_trace,wall_s"]
    for k, res in enumerate(record.residuals):
        ratio = record.ratios[k - 1] if k >= 1 else float("nan")
        c0, c1, c2 = record.norm_history[min(k + 1, len(record.norm_history) - 1)]
        wall = record.timings[k + 1] if timings and k + 1 < len(record.timings) else 0.0
        rows.append(
            f"{k + 2},{res:.12e},{ratio:.12e},{c0:.12e},{c1:.12e},{c2:.12e},{wall:.3f}"
        )
    return rows
