"""Config-driven experiment pipeline: solve, analyse, write artifacts, decide.

A run solves the configured grids coarse to fine (each solution prolonged as
the next Newton initial guess), runs the requested estimate suites on the
finest solution and writes deterministic artifacts.  Verdict thresholds come
from the config file only.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import harness
from .config import ExperimentConfig, load
from .errors import ConfigError, DivergenceError, MasharpError, TrivialBranchError
from .expression import Expression
from .geometry import EXTERIOR, build_grid, diameter
from .hessian import hadamard_report, hessian_field
from .oracle import oliker_prussner_solve
from .solver import GridField, ProblemSpec, SolveReport, solve_degenerate, solve_dirichlet

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SUITE = 1
EXIT_SCHEMA = 2
EXIT_SOLVER = 3

DEFAULT_OUT = "masharp_out"


# -- verdicts --------------------------------------------------------------


def _status(checks: dict) -> str:
    states = [c["status"] for c in checks.values()]
    if not states:
        return "inconclusive"
    if "fail" in states:
        return "fail"
    return "pass" if all(s == "pass" for s in states) else "inconclusive"


@dataclass
class RunVerdict:
    """Per-suite status with the numbers behind it, plus the exit code."""

    name: str
    suites: dict = field(default_factory=dict)  # suite -> {"status", "checks", "note"?}
    convergence: dict | None = None
    solver_ok: bool = True
    message: str = ""

    @property
    def passed(self) -> bool:
        conv_ok = self.convergence is None or self.convergence["status"] != "fail"
        return self.solver_ok and conv_ok and all(s["status"] == "pass" for s in self.suites.values())

    @property
    def exit_code(self) -> int:
        if not self.solver_ok:
            return EXIT_SOLVER
        return EXIT_OK if self.passed else EXIT_SUITE

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "suites": self.suites,
            "convergence": self.convergence,
            "solver_ok": self.solver_ok,
            "passed": self.passed,
            "exit_code": self.exit_code,
            "message": self.message,
        }

    def summary(self) -> str:
        lines = [f"experiment: {self.name}"]
        if self.message:
            lines.append(f"note: {self.message}")
        if self.convergence is not None:
            c = self.convergence
            errs = ", ".join(f"{e:.3e}" for e in c["errors"])
            lines.append(f"convergence  {c['status']:<12} errors [{errs}] order {_fmt(c.get('order'))}")
        for name, s in self.suites.items():
            lines.append(f"{name:<12} {s['status'].upper()}")
            for cname, chk in s["checks"].items():
                extra = ""
                if "value" in chk:
                    extra += f" value={_fmt(chk['value'])}"
                if "band" in chk:
                    extra += f" band={_fmt(chk['band'])}"
                if chk.get("note"):
                    extra += f" ({chk['note']})"
                lines.append(f"    {cname:<24} {chk['status']}{extra}")
            if s.get("note"):
                lines.append(f"    note: {s['note']}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (exit {self.exit_code})")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


# -- artifact writing ------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def atomic_write(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def table_text(header, rows) -> str:
    """CSV with a ``#``-prefixed header line and %.17g floats."""
    buf = io.StringIO()
    buf.write("# " + ",".join(header) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_table(path: Path, header, rows) -> None:
    atomic_write(path, table_text(header, rows))


def write_json(path: Path, obj) -> None:
    atomic_write(path, json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def solution_rows(u: GridField):
    grid = u.grid
    keep = np.flatnonzero(grid.label != EXTERIOR)
    x = grid.coords()[keep]
    head = [f"x{i + 1}" for i in range(grid.dim)] + ["u", "label"]
    rows = [list(xi) + [float(u.values[k]), int(grid.label[k])] for xi, k in zip(x, keep)]
    return head, rows


def hessian_rows(H):
    head, table = H.rows()
    return head, table.tolist()


# -- output directory ------------------------------------------------------


def output_dir(cfg: ExperimentConfig, override=None) -> Path:
    """--out, then the config's output.dir, then $MASHARP_OUT/<name>, then ./masharp_out/<name>."""
    if override:
        return Path(override)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    env = os.environ.get("MASHARP_OUT")
    return Path(env or DEFAULT_OUT) / cfg.name


# -- solving ---------------------------------------------------------------


@dataclass
class GridRun:
    n: int
    field: GridField
    report: SolveReport
    error: float | None = None
    warm_start: bool = False


class SolverFailure(MasharpError):
    def __init__(self, message: str, runs: list[GridRun]):
        super().__init__(message)
        self.runs = runs


def solve_sequence(cfg: ExperimentConfig) -> list[GridRun]:
    """Solve every grid in increasing order, warm-starting from the previous one."""
    spec = cfg.problem
    exact = Expression(cfg.exact) if cfg.exact else None
    runs: list[GridRun] = []
    prev = None
    for n in cfg.grid:
        grid = build_grid(spec.domain, n)
        init = None if prev is None else prev.prolong(grid)
        solve = solve_degenerate if spec.s != 0 else solve_dirichlet
        t0 = time.perf_counter()
        warm = init is not None
        try:
            u, rep = solve(spec, grid, cfg.solver, init)
            if warm and not rep.converged:
                # interpolation across cut cells can leave a nonconvex guess
                log.info("grid %d: warm start failed, retrying from the paraboloid", n)
                warm = False
                u, rep = solve(spec, grid, cfg.solver, None)
        except (DivergenceError, TrivialBranchError) as exc:
            raise SolverFailure(f"grid {n}: {exc}", runs) from None
        log.info("grid %d: converged=%s newton=%d outer=%d (%.1f s)", n, rep.converged, rep.newton_iterations, rep.outer_iterations, time.perf_counter() - t0)
        run = GridRun(n, u, rep, warm_start=warm)
        if exact is not None:
            idx = grid.interior_index
            run.error = float(np.abs(u.values[idx] - exact.evaluate(grid.coords()[idx])).max())
        runs.append(run)
        if not rep.converged:
            raise SolverFailure(f"grid {n}: Newton did not converge (residual {rep.residual:.3e})", runs)
        prev = u
    return runs


def convergence_record(cfg: ExperimentConfig, runs: list[GridRun]) -> dict | None:
    """Errors against the closed form and the least-squares observed order.

    Errors at or below the solver floor (10 newton_tolerance diam^2 / lambda)
    carry no order information and make the record inconclusive.
    """
    if cfg.exact is None:
        return None
    th = cfg.threshold("convergence")
    min_order = float(th.get("min_order", 0.7))
    spec = cfg.problem
    floor = 10.0 * cfg.solver.newton_tolerance * diameter(spec.domain) ** 2 / spec.lam
    errors = [r.error for r in runs]
    hs = [r.field.grid.spacing for r in runs]
    rec = {"errors": errors, "h": hs, "floor": floor, "min_order": min_order, "order": None}
    if len(runs) < 2:
        rec.update(status="inconclusive", note="a single grid has no order")
    elif max(errors) <= floor:
        rec.update(status="inconclusive", note="errors at the solver floor; the closed form is reproduced")
    else:
        order = float(np.polyfit(np.log(hs), np.log(np.maximum(errors, 1e-300)), 1)[0])
        rec["order"] = order
        rec["status"] = "pass" if order >= min_order else "fail"
    return rec


# -- suites ----------------------------------------------------------------


def _window(th):
    return tuple(th.get("window", harness.FIT_WINDOW))


def _degenerate_f(spec: ProblemSpec, cfg: ExperimentConfig, u: GridField, H):
    f = spec.f.evaluate(H.coords)
    if spec.s == 0:
        return f
    eps = cfg.solver.eps_floor * diameter(spec.domain) ** 2
    return f * np.maximum(np.abs(u.values[H.nodes]), eps) ** spec.s


def _oracle_suite(cfg: ExperimentConfig, th: dict) -> dict:
    spec = cfg.problem
    nodes = int(th.get("nodes", 9))
    rel_tol = float(th.get("rel_tol", 0.05))
    grid = build_grid(spec.domain, nodes)
    u, rep = solve_dirichlet(spec, grid, cfg.solver)
    x = grid.coords()[grid.interior_index]
    sol = oliker_prussner_solve(spec.domain, spec.f, x)
    fd = u.values[grid.interior_index]
    rel = float(np.abs(sol.values - fd).max() / np.abs(fd).max())
    checks = {"relative_difference": harness.Check("pass" if rel <= rel_tol else "fail", rel, rel_tol).to_dict()}
    detail = {
        "nodes_per_axis": nodes,
        "interior_nodes": int(len(x)),
        "finite_difference": fd.tolist(),
        "oracle": sol.values.tolist(),
        "sweeps": sol.sweeps,
        "lifts": sol.lifts,
        "max_mass_defect": sol.max_defect,
        "solver_converged": rep.converged,
    }
    return {"checks": checks, "detail": detail}


def run_suite(name: str, cfg: ExperimentConfig, u: GridField, H, report: SolveReport | None = None) -> dict:
    """One suite on the finest solution; returns {"checks", "detail"}."""
    spec = cfg.problem
    th = cfg.threshold(name)
    if name == "growth":
        res = harness.growth_suite(u, H, bands=th.get("bands"), window=_window(th), gamma=spec.gamma)
        return {"checks": res["checks"], "detail": res}
    if name == "pogorelov":
        hs = th.get("levels", spec.hs)
        res = harness.pogorelov_suite(u, H, hs=hs, ratio_band=float(th.get("ratio_band", 10.0)))
        return {"checks": res["checks"], "detail": res}
    if name == "integrability":
        res = harness.integrability_sweep(
            H,
            spec.deltas,
            hs=th.get("levels"),
            beta_threshold=float(th.get("beta_convergent", harness.BETA_CONVERGENT)),
            beta_divergent=float(th.get("beta_divergent", harness.BETA_DIVERGENT)),
        )
        checks = harness.integrability_checks(res, th.get("delta_star_band"), th.get("expect"))
        return {"checks": {k: v.to_dict() for k, v in checks.items()}, "detail": res}
    if name == "slicing":
        res = harness.slicing_suite(u, H, th.get("heights", [1 / 16, 1 / 8, 1 / 4]), spec.lam)
        checks = harness.slicing_checks(res, float(th.get("min_fraction", 0.5)))
        return {"checks": {k: v.to_dict() for k, v in checks.items()}, "detail": res}
    if name == "hadamard":
        rep = hadamard_report(H, _degenerate_f(spec, cfg, u, H), cfg.solver.newton_tolerance, spec.lam)
        checks = {"hadamard": harness.Check("pass" if rep.passed else "fail", rep.worst_violation, rep.tol).to_dict()}
        if th.get("det_match", True):
            checks["det_match"] = harness.Check(
                "pass" if rep.det_match_passed else "fail", rep.worst_det_residual, rep.det_match_threshold
            ).to_dict()
        return {"checks": checks, "detail": rep.to_dict()}
    if name == "degenerate":
        res = harness.degenerate_exponent_suite(
            u, H, spec.s, spec.mu1, spec.mu2, bands=th.get("bands"), window=_window(th), gamma=spec.gamma
        )
        checks = dict(res["checks"])
        if report is not None:
            cap = int(th.get("max_outer_iterations", cfg.solver.max_outer_iters))
            ok = report.converged and report.outer_iterations <= cap
            checks["outer_iterations"] = harness.Check("pass" if ok else "fail", report.outer_iterations, cap).to_dict()
            res["outer_iterations"] = report.outer_iterations
        return {"checks": checks, "detail": res}
    if name == "oracle_crosscheck":
        return _oracle_suite(cfg, th)
    raise ConfigError(f"unknown suite {name!r}")


# -- tables ----------------------------------------------------------------


def suite_tables(name: str, detail: dict) -> dict:
    """CSV tables (file name -> (header, rows)) for one suite's detail."""
    out = {}
    if name in ("growth", "degenerate"):
        out[f"{name}_fits.csv"] = (
            ["fit", "exponent", "ci95_halfwidth", "r2", "prefactor", "n_points"],
            [[k, f["exponent"], f["band"], f["r2"], f["prefactor"], f["n_points"]] for k, f in sorted(detail["fits"].items())],
        )
        if detail.get("layers"):
            keys = sorted(detail["layers"])
            out[f"{name}_layers.csv"] = (keys, list(zip(*(detail["layers"][k] for k in keys))))
        if detail.get("band_table"):
            out["growth_bands.csv"] = (["h", "sup_u", "sup_grad", "sup_hessian"], detail["band_table"])
    elif name == "integrability":
        rows = []
        for i, d in enumerate(detail["delta"]):
            for k, h in enumerate(detail["h"]):
                rows.append([d, h, detail["I"][i][k], detail["J"][i][k]])
        out["integrability.csv"] = (["delta", "h", "I", "J"], rows)
        out["integrability_beta.csv"] = (
            ["delta", "beta", "beta_band", "class"],
            [list(r) for r in zip(detail["delta"], detail["beta"], detail["beta_band"], detail["class"])],
        )
    elif name == "pogorelov":
        out["pogorelov.csv"] = (
            ["h", "P", "G", "R", "inclusion", "nodes"],
            [[r["h"], r["P"], r["G"], r["R"], r["inclusion"], r["nodes"]] for r in detail["table"]],
        )
    elif name == "slicing":
        keys = ["x_n", "threshold", "fraction", "nodes", "min_dnn", "median_dnn", "lower_bound", "bound_holds", "slope_difference", "slope_bound"]
        out["slicing.csv"] = (keys, [[r[k] for k in keys] for r in detail["reports"]])
    return out


def _convergence_rows(runs: list[GridRun]):
    head = ["nodes_per_axis", "h", "converged", "newton_iterations", "outer_iterations", "residual", "error"]
    rows = [
        [r.n, r.field.grid.spacing, r.report.converged, r.report.newton_iterations, r.report.outer_iterations, r.report.residual, r.error]
        for r in runs
    ]
    return head, rows


# -- entry points ----------------------------------------------------------


def _write_solution(out: Path, cfg: ExperimentConfig, u: GridField, H=None) -> None:
    if "csv" not in cfg.formats:
        return
    write_table(out / "solution.csv", *solution_rows(u))
    if H is not None:
        write_table(out / "hessian.csv", *hessian_rows(H))


def run_config(cfg: ExperimentConfig, out=None, solve_only: bool = False, echo=print) -> RunVerdict:
    """Execute an experiment and write its artifacts; see the module docstring."""
    out = output_dir(cfg, out)
    out.mkdir(parents=True, exist_ok=True)
    verdict = RunVerdict(cfg.name)
    report = {"name": cfg.name, "claim": cfg.claim, "config": cfg.raw, "grids": []}
    try:
        runs = solve_sequence(cfg)
    except SolverFailure as exc:
        runs = exc.runs
        verdict.solver_ok = False
        verdict.message = str(exc)
    report["grids"] = [{"nodes_per_axis": r.n, "error": r.error, "warm_start": r.warm_start, **r.report.to_dict()} for r in runs]
    if "csv" in cfg.formats and runs:
        write_table(out / "convergence.csv", *_convergence_rows(runs))
    if runs:
        verdict.convergence = convergence_record(cfg, runs) if verdict.solver_ok else None
        report["convergence"] = verdict.convergence
    if not verdict.solver_ok or solve_only:
        if runs:
            _write_solution(out, cfg, runs[-1].field)
        return _finish(out, cfg, verdict, report, echo)

    u = runs[-1].field
    H = hessian_field(u) if any(s != "oracle_crosscheck" for s in cfg.suites) else None
    _write_solution(out, cfg, u, H)
    report["suites"] = {}
    for name in cfg.suites:
        t0 = time.perf_counter()
        try:
            res = run_suite(name, cfg, u, H, runs[-1].report)
        except MasharpError as exc:
            verdict.suites[name] = {"status": "inconclusive", "checks": {}, "note": f"{type(exc).__name__}: {exc}"}
            report["suites"][name] = {"error": str(exc)}
            continue
        log.info("suite %s done (%.1f s)", name, time.perf_counter() - t0)
        verdict.suites[name] = {"status": _status(res["checks"]), "checks": res["checks"]}
        report["suites"][name] = res["detail"]
        if "csv" in cfg.formats:
            for fname, (head, rows) in suite_tables(name, res["detail"]).items():
                write_table(out / fname, head, rows)
    return _finish(out, cfg, verdict, report, echo)


def _finish(out: Path, cfg, verdict: RunVerdict, report: dict, echo) -> RunVerdict:
    report["verdict"] = verdict.to_dict()
    if "json" in cfg.formats:
        write_json(out / "report.json", report)
    text = verdict.summary()
    atomic_write(out / "verdict.txt", text)
    if echo is not None:
        echo(text.rstrip("\n"))
    return verdict


def run(config_path, out=None, solve_only: bool = False, echo=print) -> RunVerdict:
    """Load a config file (or preset name) and run it."""
    return run_config(resolve_config(config_path), out=out, solve_only=solve_only, echo=echo)


# -- presets ---------------------------------------------------------------


def _preset_files() -> dict:
    root = resources.files("masharp") / "presets"
    return {p.name[: -len(".json")]: p for p in root.iterdir() if p.name.endswith(".json")}


def list_presets() -> list[tuple[str, str]]:
    """(name, claim) for every shipped preset, sorted by name."""
    out = []
    for name, p in sorted(_preset_files().items()):
        doc = json.loads(p.read_text(encoding="utf-8"))
        out.append((name, doc.get("claim", "")))
    return out


def preset_path(name: str):
    files = _preset_files()
    if name not in files:
        raise ConfigError(f"no preset named {name!r}")
    return files[name]


def resolve_config(arg) -> ExperimentConfig:
    """A path to a config file, or the name of a shipped preset."""
    path = Path(arg)
    if not path.exists() and str(arg) in _preset_files():
        p = preset_path(str(arg))
        with resources.as_file(p) as real:
            return load(real)
    return load(path)
