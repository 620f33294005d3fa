"""Batch experiment runner: every module behind one reproducible interface.

One JSON config file fixes the problem parameters, grids, data recipe,
solver knobs, verifier tolerances, probe sizes, and the RNG seed, so any
report can be regenerated byte-for-byte from the config alone.  Subcommands:

    init          write the default (witness) config
    check-params  admissibility of the exponent system        exit 0 / 1
    solve         Picard iteration, field + CSV + JSON out    exit 0 / 2 / 3
    verify        qualitative checks on a stored solution     exit 0 / 1
    probe         seeded estimate probes (kernel to block)    exit 0 / 1

Exit code 1 marks infeasible parameters or failed checks, 2 a
non-contracting iteration, 3 divergence.  JSON outputs embed the resolved
config and the content hash of every input they depend on; wall-clock
columns are zeroed unless --timings is passed, keeping reruns
byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import morrey as mo
from . import verify as vf
from .fields import BoundaryField, HalfSpaceGrid, TimeGrid, read_field, trace, write_field, write_slice_csv
from .kernels import kernel_bound_probe
from .operators import OperatorConfig, Workspace
from .params import ProblemParams, check_admissible, derive_exponents, find_admissible
from .recipes import RECIPES, boundary_data
from .reports import canonical_json_bytes, content_hash, write_json
from .solver import (
    SolutionRecord,
    SolverConfig,
    contraction_probe,
    iteration_rows,
    picard_solve,
    x_norm,
)

__all__ = ["ExperimentConfig", "DEFAULT_CONFIG", "CliError", "main"]


DEFAULT_CONFIG: dict = {
    "problem": {"n": 3, "p1": 6.0, "p2": 3.5, "mu": 0.5},
    "exponents": {"mode": "fixed", "q1": 8.0, "q2": 6.0},
    "grid": {"half_width": 6.0, "m_tan": 24, "depth": 5.0, "m_nor": 11, "grading": 1.35},
    "time": {"t_min": 1e-2, "t_max": 1e2, "m_t": 13},
    "data": {"recipe": "homogeneous-power", "params": {"coef": 0.08, "power": 0.4}},
    "solver": {
        "epsilon": 0.25,
        "max_iters": 40,
        "tol": 1e-8,
        "relaxation": 1.0,
    },
    "verify": {
        "properties": [
            "self-similarity",
            "axial-symmetry",
            "positivity",
            "trace-convergence",
            "stability",
        ],
        "self_similarity_tolerance": 0.05,
        "quarter_turn_tolerance": 1e-10,
        "positivity_budget": 1e-8,
        "trace_tolerance": 0.05,
        "stability_perturbation": {"amplitude": 0.02, "width": 0.5, "center": [1.0, 0.5]},
    },
    "probe": {
        "kernel_trials": 200,
        "holder_trials": 100,
        "contraction_pairs": 3,
        "blocks": 5,
    },
    "seed": 0,
    "out_dir": "runs/default",
}

_REQUIRED_SECTIONS = (
    "problem",
    "exponents",
    "grid",
    "time",
    "data",
    "solver",
    "verify",
    "probe",
    "seed",
    "out_dir",
)

_TOLERANCE_KEYS = {
    "self-similarity": "self_similarity_tolerance",
    "axial-symmetry": "quarter_turn_tolerance",
    "positivity": "positivity_budget",
    "trace-convergence": "trace_tolerance",
    "stability": "stability_perturbation",
}


class CliError(RuntimeError):
    """Configuration or input problem; maps to exit code 1."""


class ExperimentConfig:
    """Validated experiment description with typed builders."""

    def __init__(self, raw: dict):
        for key in _REQUIRED_SECTIONS:
            if key not in raw:
                raise CliError(f"config is missing required section {key!r}")
        unknown = set(raw) - set(_REQUIRED_SECTIONS)
        if unknown:
            raise CliError(f"config has unknown sections {sorted(unknown)}")
        if not isinstance(raw["seed"], int) or raw["seed"] < 0:
            raise CliError("seed must be a nonnegative integer")
        if raw["data"].get("recipe") not in RECIPES:
            raise CliError(f"data.recipe must be one of {RECIPES}")
        for prop in raw["verify"].get("properties", ()):
            key = _TOLERANCE_KEYS.get(prop)
            if key is None:
                raise CliError(f"unknown verify property {prop!r}")
            if key not in raw["verify"]:
                raise CliError(f"verify.{key} must be explicit for property {prop!r}")
        self.raw = raw

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["out_dir"])

    def config_hash(self) -> str:
        return content_hash(canonical_json_bytes(self.raw))

    def problem(self) -> ProblemParams:
        p = self.raw["problem"]
        return ProblemParams(n=int(p["n"]), p1=float(p["p1"]), p2=float(p["p2"]), mu=float(p["mu"]))

    def exponents(self, params: ProblemParams):
        e = self.raw["exponents"]
        mode = e.get("mode", "fixed")
        if mode == "fixed":
            return float(e["q1"]), float(e["q2"])
        if mode == "auto":
            found = find_admissible(params)
            if found is None:
                raise CliError("no admissible exponent pair exists for these parameters")
            return found
        raise CliError(f"exponents.mode must be 'fixed' or 'auto', got {mode!r}")

    def grid(self) -> HalfSpaceGrid:
        g = self.raw["grid"]
        return HalfSpaceGrid(
            n=int(self.raw["problem"]["n"]),
            half_width=float(g["half_width"]),
            m_tan=int(g["m_tan"]),
            depth=float(g["depth"]),
            m_nor=int(g["m_nor"]),
            grading=float(g["grading"]),
        )

    def tgrid(self) -> TimeGrid:
        t = self.raw["time"]
        return TimeGrid(float(t["t_min"]), float(t["t_max"]), int(t["m_t"]))

    def workspace(self) -> Workspace:
        return Workspace(self.grid(), self.tgrid(), OperatorConfig())

    def data(self, grid: HalfSpaceGrid) -> BoundaryField:
        d = self.raw["data"]
        return boundary_data(grid, d["recipe"], d.get("params"), seed=self.seed)

    def solver_config(self) -> SolverConfig:
        s = self.raw["solver"]
        return SolverConfig(
            epsilon=float(s["epsilon"]),
            max_iters=int(s["max_iters"]),
            tol=float(s["tol"]),
            relaxation=float(s["relaxation"]),
        )


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raw = json.loads(json.dumps(DEFAULT_CONFIG))
    else:
        path = Path(args.config)
        if not path.exists():
            raise CliError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise CliError(f"config is not valid JSON: {err}") from err
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out_dir"] = args.out
    return ExperimentConfig(raw)


def _payload(cfg: ExperimentConfig, **extra) -> dict:
    out = {"config": cfg.raw, "config_hash": cfg.config_hash()}
    out.update(extra)
    return out


def _record_from_field(field) -> SolutionRecord:
    return SolutionRecord(
        u=field,
        u0=trace(field),
        x_components=(float("nan"),) * 3,
        residuals=[],
        ratios=[],
        norm_history=[],
        increment_mins=[],
        iterations=0,
        converged=True,
        status="loaded",
    )


def cmd_init(args) -> int:
    out = Path(args.out) if args.out else Path(DEFAULT_CONFIG["out_dir"])
    target = Path(args.config) if args.config else out / "config.json"
    target.parent.mkdir(parents=True, exist_ok=True)
    raw = json.loads(json.dumps(DEFAULT_CONFIG))
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out_dir"] = args.out
    write_json(target, raw)
    print(f"wrote default config to {target}")
    return 0


def cmd_check_params(cfg: ExperimentConfig, args) -> int:
    del args
    params = cfg.problem()
    q1, q2 = cfg.exponents(params)
    report = check_admissible(params, q1, q2)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "admissibility.json", _payload(cfg, report=report.as_dict()))
    print(f"admissible: {report.admissible} ({len(report.failed())} failed constraints)")
    return 0 if report.admissible else 1


def cmd_solve(cfg: ExperimentConfig, args) -> int:
    params = cfg.problem()
    q1, q2 = cfg.exponents(params)
    adm = check_admissible(params, q1, q2)
    if not adm.admissible:
        print("parameters are not admissible; run check-params for details", file=sys.stderr)
        return 1
    exps = derive_exponents(params, q1, q2)
    ws = cfg.workspace()
    phi = cfg.data(ws.grid)
    rec = picard_solve(ws, phi, params, exps, cfg=cfg.solver_config())
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "solution.field", rec.u)
    comment = f"config_hash {cfg.config_hash()}"
    write_slice_csv(out / "trace_final.csv", ws.grid, rec.u0[-1], comment=comment)
    rows = iteration_rows(rec, timings=args.timings)
    header = [
        "# config " + json.dumps(cfg.raw, sort_keys=True),
        "# config_hash " + cfg.config_hash(),
    ]
    (out / "iterations.csv").write_text("\n".join(header + rows) + "\n")
    write_json(
        out / "solve.json",
        _payload(
            cfg,
            status=rec.status,
            converged=rec.converged,
            iterations=rec.iterations,
            residuals=rec.residuals,
            ratios=rec.ratios,
            x_components=list(rec.x_components),
            norm_history=[list(c) for c in rec.norm_history],
            increment_mins=rec.increment_mins,
        ),
    )
    print(f"status: {rec.status} after {rec.iterations} iterations")
    if rec.status == "converged":
        return 0
    if rec.status == "diverged":
        return 3
    return 2


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    params = cfg.problem()
    q1, q2 = cfg.exponents(params)
    exps = derive_exponents(params, q1, q2)
    sol_path = Path(args.solution) if args.solution else cfg.out_dir / "solution.field"
    if not sol_path.exists():
        raise CliError(f"solution file not found: {sol_path} (run solve first)")
    sol_bytes = sol_path.read_bytes()
    field = read_field(sol_path)
    rec = _record_from_field(field)
    vcfg = cfg.raw["verify"]
    phi = cfg.data(field.grid)
    reports = {}
    ws = None
    for prop in vcfg["properties"]:
        if prop == "self-similarity":
            try:
                rep = vf.check_self_similarity(
                    rec, phi, params, tolerance=float(vcfg["self_similarity_tolerance"])
                )
            except ValueError as err:
                raise CliError(f"self-similarity precondition failed: {err}") from err
        elif prop == "axial-symmetry":
            rep = vf.check_axial_symmetry(
                rec, quarter_tolerance=float(vcfg["quarter_turn_tolerance"])
            )
        elif prop == "positivity":
            rep = vf.check_positivity(
                rec, phi=phi, budget_frac=float(vcfg["positivity_budget"]), seed=cfg.seed
            )
        elif prop == "trace-convergence":
            rep = vf.check_trace_convergence(
                rec, phi, params=params, exps=exps, tol=float(vcfg["trace_tolerance"])
            )
        elif prop == "stability":
            pert = vcfg["stability_perturbation"]
            a = boundary_data(
                field.grid,
                "gaussian-bump",
                {
                    "amplitude": pert["amplitude"],
                    "width": pert["width"],
                    "center": pert["center"],
                },
                seed=cfg.seed,
            )
            ws = ws or cfg.workspace()
            rep = vf.stability_experiment(ws, phi, a, params, exps, cfg=cfg.solver_config())
        reports[prop] = rep.as_dict()
    all_passed = all(r["pass"] for r in reports.values())
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(
        out / "verify.json",
        _payload(cfg, solution_hash=content_hash(sol_bytes), reports=reports, all_passed=all_passed),
    )
    for prop, rep in reports.items():
        print(f"{prop}: {'pass' if rep['pass'] else 'FAIL'} (defect {rep['defect']:.3e})")
    return 0 if all_passed else 1


def cmd_probe(cfg: ExperimentConfig, args) -> int:
    del args
    params = cfg.problem()
    q1, q2 = cfg.exponents(params)
    exps = derive_exponents(params, q1, q2)
    pcfg = cfg.raw["probe"]
    seed = cfg.seed
    ws = cfg.workspace()
    d = ws.grid.tan_dim

    lq_rep, pt_rep = kernel_bound_probe(
        params.n, exps.q1, trials=int(pcfg["kernel_trials"]), seed=seed
    )
    specs = (
        mo.MorreySpec(q=3.75, mu=0.5, d=d, domain="boundary"),
        mo.MorreySpec(q=7.5, mu=1.0, d=d, domain="boundary"),
        mo.MorreySpec(q=2.5, mu=2.0 / 3.0, d=d, domain="boundary"),
    )
    holder_rep = mo.holder_probe(
        specs, grid=ws.grid, trials=int(pcfg["holder_trials"]), seed=seed
    )
    # dilation stability needs a fine boundary lattice; independent of the
    # experiment grid by design
    rgrid = HalfSpaceGrid(half_width=6.0, m_tan=49, m_nor=2)
    rvals = np.exp(-0.5 * np.sum(rgrid.tan_points**2, axis=1) / 1.2**2)
    riesz_rep = mo.riesz_probe(
        BoundaryField(rgrid, rvals.reshape(rgrid.tan_shape)),
        (d - 0.5) * (1.0 / 2.0 - 1.0 / 6.0),
        mo.MorreySpec(q=2.0, mu=0.5, d=d, domain="boundary"),
        mo.MorreySpec(q=6.0, mu=0.5, d=d, domain="boundary"),
    )
    contraction_rep = contraction_probe(
        ws, params, exps, cfg=cfg.solver_config(), pairs=int(pcfg["contraction_pairs"]), seed=seed
    )
    block_rep = vf.block_approximate_identity(ws, n_blocks=int(pcfg["blocks"]), seed=seed)

    reports = {
        "kernel-lq-bound": lq_rep.as_dict(),
        "kernel-pointwise-bound": pt_rep.as_dict(),
        "morrey-product-inequality": holder_rep.as_dict(),
        "riesz-dilation-stability": riesz_rep.as_dict(),
        "picard-contraction": contraction_rep.as_dict(),
        "block-approximate-identity": block_rep.as_dict(),
    }
    all_passed = all(r["pass"] for r in reports.values())
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "probe.json", _payload(cfg, reports=reports, all_passed=all_passed))
    for name, rep in reports.items():
        print(f"{name}: {'pass' if rep['pass'] else 'FAIL'} (max ratio {rep['max_ratio']:.4f})")
    return 0 if all_passed else 1


def main(argv=None) -> int:
    # the layer is picked at the first compiled call, so this default is
    # still in time; workqueue is deterministic and needs no TBB probe
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    parser = argparse.ArgumentParser(
        prog="dynbc",
        description="integral-equation solver and property verifier for the "
        "half-space problem with a nonlinear dynamic boundary condition",
    )
    parser.add_argument("--config", help="path to the experiment config JSON")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="cap the compiled-kernel thread pool")
    parser.add_argument("--out", help="override the config output directory")
    parser.add_argument(
        "--timings",
        action="store_true",
        help="record wall-clock columns (breaks byte-identical reruns)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("init", help="write the default config")
    sub.add_parser("check-params", help="evaluate the admissibility constraints")
    sub.add_parser("solve", help="run the fixed-point iteration")
    p_verify = sub.add_parser("verify", help="check qualitative properties of a solution")
    p_verify.add_argument("--solution", help="path to a stored solution field")
    sub.add_parser("probe", help="run the seeded estimate probes")
    args = parser.parse_args(argv)

    if args.threads is not None:
        import numba

        numba.set_num_threads(max(1, args.threads))

    handlers = {
        "check-params": cmd_check_params,
        "solve": cmd_solve,
        "verify": cmd_verify,
        "probe": cmd_probe,
    }
    try:
        if args.command == "init":
            return cmd_init(args)
        cfg = _load_config(args)
        return handlers[args.command](cfg, args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
