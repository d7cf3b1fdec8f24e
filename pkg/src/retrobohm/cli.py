"""Command-line front end.

    retrobohm run SCENARIO.yaml [--out DIR] [--seed N] [--json]
    retrobohm check SCENARIO.yaml [--json]
    retrobohm list-checks [--module NAME] [--json]

Exit codes: 0 all checks passed, 1 a check failed, 2 the configuration could
not be parsed, 3 it failed validation, 4 the computation raised.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import dumps_json, write_columns, write_csv, write_json
from .checks import (check_averaging, check_factorization, check_generalized_momentum,
                     check_measurement_limit, check_source_term, format_checks, identity_suite,
                     list_checks, value_check)
from .config import ConfigParseError, ConfigValidationError, Scenario, load_scenario
from .currents import (BoundaryPair, ConditionalField, FinalFamily, StandardField, average_over_finals,
                       continuity_residual, epsilon_gaussian, family_overlaps, gaussian_overlap, j0_slice,
                       measurement_limit_profile, measurement_slice_oracle, momentum_family, position_family,
                       rest_density, standard_current)
from .entanglement import MeasurementGrid, measurement_limit_correlation
from .spacetime import CausalClass, classify
from .states import SCHRODINGER, GaussianPacket, QuadSpec
from .trajectories import Box, Trajectory, TrajectoryError, integrate_flowline

log = logging.getLogger("retrobohm")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3, 4
RNG_ALGORITHM = "PCG64"


@dataclass
class RunReport:
    scenario: str
    task: str
    checks: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    config_hash: str = ""
    seed: int = 0
    version: str = __version__
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self, wall_time: bool = False) -> dict:
        """Plain mapping; wall time is left out unless asked for, so the report file is reproducible."""
        d = {"scenario": self.scenario, "task": self.task, "version": self.version,
             "config_hash": self.config_hash, "rng": {"algorithm": RNG_ALGORITHM, "seed": self.seed},
             "passed": self.passed, "checks": [c.to_dict() for c in self.checks],
             "artifacts": list(self.artifacts), "summary": self.summary}
        if wall_time:
            d["wall_time"] = self.wall_time
        return d


CLASS_NAMES = {int(CausalClass.TIMELIKE): "timelike", int(CausalClass.NULL): "null",
               int(CausalClass.SPACELIKE): "spacelike"}


def _class_names(cls) -> list[str]:
    return [CLASS_NAMES[int(c)] for c in np.ravel(cls)]


# ---------------------------------------------------------------------------
# Task runners.  Each appends its checks, artifact names and summary entries to the report.

def _pair(sc: Scenario, task: dict) -> BoundaryPair:
    quad = QuadSpec(*task["overlap_quad"]) if task.get("overlap_quad") else None
    return BoundaryPair(sc.state(task["initial"]), sc.state(task["final"]), quad=quad,
                        floor=sc.numeric.overlap_floor)


def _field(sc: Scenario, task: dict):
    if task.get("final"):
        return ConditionalField(_pair(sc, task))
    return StandardField(sc.state(task["initial"]))


def _run_current_grid(sc: Scenario, task: dict, out: Path, rep: RunReport):
    fld = _field(sc, task)
    t, x = np.meshgrid(task["t"], task["x"], indexing="ij")
    j = fld.j(t, x)
    cont = continuity_residual(fld, t, x, sc.numeric.fd_step)
    cls = classify(j, sc.numeric.null_tol)
    if sc.outputs.csv:
        rep.artifacts.append(_columns(out, "current_grid.csv", {
            "t": t, "x": x, "j0": j[0], "j1": j[1], "rho0": rest_density(j), "class": _class_names(cls),
            "continuity": cont}))
    rep.summary.update(points=int(t.size), max_continuity=float(np.max(np.abs(cont))),
                       spacelike_points=int(np.sum(cls == CausalClass.SPACELIKE)),
                       negative_j0_points=int(np.sum(j[0] < 0)))


def _trajectory_csv(out: Path, name: str, traj: Trajectory) -> str:
    return _columns(out, name, {"lambda": traj.lam, "t": traj.t, "x": traj.x, "j0": traj.j0, "j1": traj.j1,
                                "rho0": traj.rho0, "tau": traj.tau, "class": _class_names(traj.cls)})


def _crossings_csv(out: Path, name: str, traj: Trajectory) -> str:
    rows = [(c.lam, c.t, c.x, c.tau, CLASS_NAMES[int(c.before)], CLASS_NAMES[int(c.after)], c.dtau_bracket,
             c.bracket) for c in traj.crossings]
    write_csv(out / name, ["lambda", "t", "x", "tau", "before", "after", "dtau_bracket", "bracket"], rows)
    return name


def _box(task):
    return Box(*task["box"]) if task.get("box") else None


def _trajectory_summary(traj: Trajectory) -> dict:
    return {"samples": len(traj), "class_sequence": [CLASS_NAMES[int(c)] for c in traj.class_sequence()],
            "crossings": len(traj.crossings), "reversals": [float(v) for v in traj.reversals],
            "tau_final": float(traj.tau[-1]), "end": [float(traj.t[-1]), float(traj.x[-1])]}


def _run_trajectory(sc: Scenario, task: dict, out: Path, rep: RunReport):
    fld = _field(sc, task)
    try:
        traj = integrate_flowline(fld, task["start"], task["span"], task["step"], sc.numeric.null_tol,
                                  box=_box(task))
    except TrajectoryError as exc:
        if sc.outputs.csv and exc.partial is not None:
            rep.artifacts.append(_trajectory_csv(out, "trajectory_partial.csv", exc.partial))
        raise
    if sc.outputs.csv:
        rep.artifacts.append(_trajectory_csv(out, "trajectory.csv", traj))
        rep.artifacts.append(_crossings_csv(out, "crossings.csv", traj))
    tol = sc.numeric.tolerances
    rep.checks += [check_generalized_momentum(traj, fld, tol), check_source_term(traj, tol)]
    rep.summary.update(_trajectory_summary(traj))


def _sampled_position_family(sc: Scenario, fam: dict) -> FinalFamily:
    """Outcome positions drawn uniformly, weighted by the trapezoid rule on the sorted sample."""
    rng = np.random.Generator(np.random.PCG64(int(sc.numeric.seed)))
    xs = np.sort(rng.uniform(fam["min"], fam["max"], fam["n"]))
    eps = sc.numeric.epsilon
    d = np.diff(xs)
    w = np.zeros_like(xs)
    w[:-1] += d / 2
    w[1:] += d / 2
    w /= eps * np.sqrt(8 * np.pi)
    members = [epsilon_gaussian(sc.model, xf, fam["t_f"], eps) for xf in xs]
    return FinalFamily(members, w, fam["t_f"], f"sampled position(eps={eps})")


def _run_averaging(sc: Scenario, task: dict, out: Path, rep: RunReport):
    psi = sc.state(task["initial"])
    fam = task["family"]
    if fam["type"] == "momentum":
        family = momentum_family(sc.model, np.linspace(fam["min"], fam["max"], fam["n"]), fam["t_f"])
    elif fam["sampled"]:
        family = _sampled_position_family(sc, fam)
    else:
        family = position_family(sc.model, np.linspace(fam["min"], fam["max"], fam["n"]), fam["t_f"],
                                 sc.numeric.epsilon)
    t, x = np.meshgrid(task["probes"]["t"], task["probes"]["x"], indexing="ij")
    res = check_averaging(psi, family, t, x, sc.numeric.tolerances)
    rep.checks.append(res)
    rep.summary.update(members=len(family), completeness_defect=res.detail["completeness_defect"])
    if sc.outputs.csv:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            avg = average_over_finals(psi, family, t, x, family_overlaps(psi, family)).j
        std = standard_current(psi, t, x)
        rep.artifacts.append(_columns(out, "averaging.csv", {
            "t": t, "x": x, "j0_avg": avg[0], "j1_avg": avg[1], "j0_std": std[0], "j1_std": std[1]}))


def _run_measurement(sc: Scenario, task: dict, out: Path, rep: RunReport):
    psi = sc.state(task["initial"])
    final = epsilon_gaussian(sc.model, task["x_f"], task["t_f"], sc.numeric.epsilon)
    closed_form = isinstance(psi, GaussianPacket) and sc.model.kind == SCHRODINGER
    ov = gaussian_overlap(final, psi, task["t_f"]) if closed_form else None
    pair = BoundaryPair(psi, final, overlap_fi=ov, t_slice=task["t_f"], floor=sc.numeric.overlap_floor)
    quad = None
    if task.get("slice") is not None:
        s = task["slice"]
        quad = QuadSpec(float(s[0]), float(s[-1]), int(s.size))
    prof = measurement_limit_profile(pair, task["times"], quad)
    tol = sc.numeric.tolerances
    if closed_form:
        rep.checks.append(check_measurement_limit(psi, final, quad, tol))
    before = [p for p in prof if p.t < task["t_f"]]
    if before:
        last = max(before, key=lambda p: p.t)
        rep.checks.append(value_check("measurement_mean", abs(last.mean - task["x_f"]), tol, t=last.t))
    rep.summary.update(profile=[p._asdict() for p in prof], overlap=[pair.overlap_fi.real, pair.overlap_fi.imag])
    if sc.outputs.csv:
        write_csv(out / "profile.csv", ["t", "mean", "variance", "min_j0", "integral"], [tuple(p) for p in prof])
        rep.artifacts.append("profile.csv")
        x, _, j0 = j0_slice(pair, task["t_f"], quad)
        cols = {"x": x, "j0": j0}
        if closed_form:
            cols["oracle"] = measurement_slice_oracle(psi, final, x)
        rep.artifacts.append(_columns(out, "slice.csv", cols))


def _run_correlation(sc: Scenario, task: dict, out: Path, rep: RunReport):
    state = sc.state(task["state"])
    eps = sc.numeric.epsilon
    lo, hi = task["outcomes"]["min"], task["outcomes"]["max"]
    n = int(round((hi - lo) / eps)) + 1
    g = np.linspace(lo, hi, n)
    grid = MeasurementGrid(g, g, task["t_f"], task["t_prime_f"], eps)
    reports = measurement_limit_correlation(state, grid, task["times"], task["probes"]["x"],
                                            task["probes"]["x_prime"])
    tol = sc.numeric.tolerances
    at_final = [r for r in reports if r.t == task["t_f"] and r.t_prime == task["t_prime_f"]]
    for r in at_final:
        rep.checks.append(value_check("correlation_recovery", r.linf_rel_error, tol, t=r.t, t_prime=r.t_prime))
    rep.checks.append(check_factorization(reports[0].factorization_defect, task["expect_entangled"], tol))
    rep.summary.update(epsilon=eps, outcomes_per_axis=n,
                       reports=[{k: v for k, v in r.to_dict().items() if not k.startswith(("rho", "x"))}
                                for r in reports])
    if sc.outputs.csv:
        cols = {k: [] for k in ("t", "t_prime", "x", "x_prime", "rho_model", "rho_qm")}
        for r in reports:
            X, XP = np.meshgrid(r.x, r.x_prime, indexing="ij")
            for k, v in (("t", np.full(X.size, r.t)), ("t_prime", np.full(X.size, r.t_prime)), ("x", X.ravel()),
                         ("x_prime", XP.ravel()), ("rho_model", r.rho_model.ravel()), ("rho_qm", r.rho_qm.ravel())):
                cols[k].append(v)
        rep.artifacts.append(_columns(out, "correlation.csv", {k: np.concatenate(v) for k, v in cols.items()}))


def _run_identity(sc: Scenario, task: dict, out: Path, rep: RunReport):
    pair = _pair(sc, task)
    t, x = np.meshgrid(task["probes"]["t"], task["probes"]["x"], indexing="ij")
    tr = task["trajectory"]
    results, traj = identity_suite(pair, t, x, tr["start"], tr["span"], tr["step"], task["steps"],
                                   sc.numeric.tolerances, task["slices"], _box(task))
    rep.checks += results
    rep.summary.update(trajectory=_trajectory_summary(traj))
    if sc.outputs.csv:
        rep.artifacts.append(_trajectory_csv(out, "trajectory.csv", traj))
        rep.artifacts.append(_crossings_csv(out, "crossings.csv", traj))
        rows = [(r.name, r.tag, r.residual, r.tolerance, "" if r.ratio is None else r.ratio,
                 "true" if r.passed else "false") for r in results]
        write_csv(out / "identities.csv", ["name", "tag", "residual", "tolerance", "ratio", "passed"], rows)
        rep.artifacts.append("identities.csv")


def _columns(out: Path, name: str, cols: dict) -> str:
    write_columns(out / name, cols)
    return name


RUNNERS = {
    "current_grid": _run_current_grid,
    "trajectory": _run_trajectory,
    "averaging_check": _run_averaging,
    "measurement_limit": _run_measurement,
    "correlation_pipeline": _run_correlation,
    "identity_suite": _run_identity,
}


def run(scenario: Scenario, out_dir=None, seed: int | None = None) -> RunReport:
    """Execute the scenario's task, write its artifacts and return the report."""
    if seed is not None:
        scenario.numeric.seed = int(seed)
    out = Path(out_dir if out_dir is not None else scenario.outputs.dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = RunReport(scenario.name, scenario.task["type"], config_hash=scenario.config_hash(),
                    seed=int(scenario.numeric.seed))
    start = time.perf_counter()
    RUNNERS[scenario.task["type"]](scenario, scenario.task, out, rep)
    rep.wall_time = time.perf_counter() - start
    if scenario.outputs.json:
        rep.artifacts.append("report.json")
        write_json(out / "report.json", rep.to_dict())
    return rep


# ---------------------------------------------------------------------------
# argparse front end

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="retrobohm",
                                description="Two-time conditional currents and flow lines in 1+1 dimensions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="scenario file (YAML)")
        sp.add_argument("--strict", dest="strict", action="store_true", default=True,
                        help="reject unknown configuration keys (default)")
        sp.add_argument("--no-strict", dest="strict", action="store_false", help="ignore unknown keys")
        sp.add_argument("--json", action="store_true", help="print the report as JSON")

    r = sub.add_parser("run", help="run a scenario and write its artifacts")
    common(r)
    r.add_argument("--out", help="output directory (overrides outputs.dir)")
    r.add_argument("--seed", type=int, help="seed for sampled final families (overrides numeric.seed)")
    c = sub.add_parser("check", help="validate a scenario file without running it")
    common(c)
    lc = sub.add_parser("list-checks", help="list the verifiable identities")
    lc.add_argument("--module", help="only checks belonging to this module")
    lc.add_argument("--json", action="store_true", help="print a JSON array")
    return p


def _print_report(rep: RunReport, as_json: bool):
    if as_json:
        sys.stdout.write(dumps_json(rep.to_dict(wall_time=True)))
        return
    print(f"scenario {rep.scenario} ({rep.task}), config {rep.config_hash[:12]}, {rep.wall_time:.2f} s")
    for c in rep.checks:
        ratio = "" if c.ratio is None else f"  ratio {c.ratio:.4f}"
        print(f"  {'PASS' if c.passed else 'FAIL'}  {c.name:<30} residual {c.residual:.3e}"
              f"  tol {c.tolerance:.1e}{ratio}")
    if rep.artifacts:
        print("  artifacts: " + ", ".join(rep.artifacts))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "list-checks":
        checks = list_checks(args.module)
        if args.json:
            sys.stdout.write(dumps_json([c.to_dict() for c in checks]))
        else:
            print(format_checks(checks))
        return EXIT_OK

    try:
        sc = load_scenario(args.config, strict=args.strict)
    except ConfigParseError as exc:
        log.error("parse error: %s", exc)
        return EXIT_PARSE
    except ConfigValidationError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_VALIDATION

    if args.command == "check":
        info = {"scenario": sc.name, "task": sc.task["type"], "model": sc.model.kind,
                "states": sc.state_specs, "config_hash": sc.config_hash()}
        if args.json:
            sys.stdout.write(dumps_json(info))
        else:
            print(f"{sc.name}: valid {sc.task['type']} scenario ({sc.model.kind}, {len(sc.states)} states)")
        return EXIT_OK

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = run(sc, args.out, args.seed)
    except Exception as exc:  # any failure inside the computation is a runtime error
        log.error("run failed: %s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME
    _print_report(rep, args.json)
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
