"""Convergence and ratio studies with CSV output."""
from __future__ import annotations

import csv
import io
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from .manufactured import ExactSolution, compute_errors
from .mesh import make_initial_mesh, refine_uniform
from .solvers import DENSE_MAX, PcgConfig, RatioReport, extremal_generalized_eigs, pcg
from .spaces import FESpaces
from .system import FoslsSystem, GramSolver

CONVERGENCE_COLUMNS = ["level", "dofs", "eta", "err_u", "err_w", "err_pde", "err_p",
                       "iterations", "status"]
RATIO_COLUMNS = ["level", "mesh_size_label", "dofs", "lambda_max", "lambda_min", "ratio",
                 "method", "status"]
DOF_CONVENTION = ("unknowns of the combined space-time system after removing "
                  "the boundary-condition constrained coefficients")


class MemoryGuardError(RuntimeError):
    pass


@dataclass
class RunConfig:
    """Options of one study.

    ``max_dofs`` is the memory guard: a level whose system would exceed it
    is refused before anything is assembled.  ``dense_max`` is the largest
    system handed to the dense eigensolver.
    """

    domain: str = "square"
    bc: str = "slip"
    div_norm: str = "h1"
    bubbles: bool = True
    refinements: int = 2
    mode: str = "convergence"
    tol: float = 1e-10
    out: str | None = None
    verbose: bool = False
    nu: float = 1.0
    max_dofs: int = 2_000_000
    dense_max: int = DENSE_MAX
    max_iter: int = 50_000

    def __post_init__(self):
        choices = {"domain": ("square", "lshape"), "bc": ("slip", "noslip"),
                   "div_norm": ("h1", "l2"), "mode": ("convergence", "ratios", "both")}
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")
        if self.refinements < 0:
            raise ValueError("refinements must be non-negative")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


def _levels(config: RunConfig):
    """Yield ``(level, spaces)``, checking the memory guard on each level."""
    mesh = make_initial_mesh(config.domain)
    for level in range(config.refinements + 1):
        if level:
            mesh = refine_uniform(mesh)
        spaces = FESpaces(mesh, config.bc, config.bubbles)
        if spaces.n_dofs > config.max_dofs:
            raise MemoryGuardError(
                f"level {level} has {spaces.n_dofs} unknowns, above max_dofs={config.max_dofs}")
        yield level, spaces


def _log(config, msg):
    if config.verbose:
        print(msg, file=sys.stderr, flush=True)


def run_convergence(config: RunConfig) -> list[dict]:
    """Solve the manufactured problem on each level and record the errors."""
    sol = ExactSolution(config.nu)
    data = sol.problem_data()
    rows = []
    for level, spaces in _levels(config):
        t0 = time.perf_counter()
        system = FoslsSystem(spaces, config.nu, config.div_norm)
        rhs = system.assemble_rhs(data)
        res = pcg(system.apply_A, system.diag_A(), rhs,
                  PcgConfig(config.tol, config.max_iter, config.verbose))
        err = compute_errors(system, res.x, sol, data)
        row = {"level": level, "dofs": spaces.n_dofs, **err.as_dict(),
               "iterations": res.iterations,
               "status": "ok" if res.converged else "pcg-not-converged"}
        rows.append(row)
        _log(config, f"level {level} dofs {spaces.n_dofs} eta {err.eta:.4e} "
                     f"iterations {res.iterations} time {time.perf_counter() - t0:.1f}s")
    return rows


def ratio_report(system: FoslsSystem, level: int, dense_max: int = DENSE_MAX) -> RatioReport:
    n = system.spaces.n_dofs
    binv = GramSolver(system) if n > dense_max else None
    lmax, lmin, method = extremal_generalized_eigs(system.apply_A, system.apply_B, n,
                                                   binv, dense_max=dense_max)
    return RatioReport(level, n, lmax, lmin, method)


def run_ratios(config: RunConfig) -> list[dict]:
    """One stability ratio per level; eigensolver failures are flagged."""
    rows = []
    for level, spaces in _levels(config):
        system = FoslsSystem(spaces, config.nu, config.div_norm)
        row = {"level": level, "mesh_size_label": f"2^-{level}", "dofs": spaces.n_dofs}
        try:
            rep = ratio_report(system, level, config.dense_max)
            row.update(lambda_max=rep.lambda_max, lambda_min=rep.lambda_min,
                       ratio=rep.ratio, method=rep.method, status="ok")
        except (RuntimeError, np.linalg.LinAlgError) as exc:
            row.update(lambda_max=np.nan, lambda_min=np.nan, ratio=np.nan,
                       method="", status=f"eigensolver-failed: {exc}")
        rows.append(row)
        _log(config, f"level {level} dofs {spaces.n_dofs} ratio {row['ratio']:.6g}")
    return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else str(float(v))
    return str(v)


def format_csv(rows, columns, metadata=None) -> str:
    """CSV text with ``#`` metadata lines and floats in round-trip precision."""
    buf = io.StringIO()
    for key, val in (metadata or {}).items():
        buf.write(f"# {key}: {val}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    """Parse :func:`format_csv` output back into rows of floats and strings."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = []
    for rec in csv.DictReader(lines):
        row = {}
        for k, v in rec.items():
            try:
                row[k] = int(v)
            except ValueError:
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
        rows.append(row)
    return rows


def run(config: RunConfig) -> str:
    """Run the configured study and return the CSV text (also written to ``out``)."""
    meta = {k: v for k, v in asdict(config).items() if k not in ("out", "verbose")}
    meta["dof_convention"] = DOF_CONVENTION
    parts = []
    if config.mode in ("convergence", "both"):
        parts.append(format_csv(run_convergence(config), CONVERGENCE_COLUMNS,
                                {**meta, "study": "convergence"}))
    if config.mode in ("ratios", "both"):
        parts.append(format_csv(run_ratios(config), RATIO_COLUMNS,
                                {**meta, "study": "ratios"}))
    text = "\n".join(parts)
    if config.out:
        if config.mode == "both":
            stem = config.out[:-4] if config.out.endswith(".csv") else config.out
            for name, part in zip(("convergence", "ratios"), parts):
                with open(f"{stem}_{name}.csv", "w", encoding="utf-8") as fh:
                    fh.write(part)
        else:
            with open(config.out, "w", encoding="utf-8") as fh:
                fh.write(text)
    return text
