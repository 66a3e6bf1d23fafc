"""Batch entry point: JSON configs in, CSV/JSON/SVG artifacts plus a manifest out.

Exit codes: 0 success, 2 validation error, 3 solver/mesh failure.  Artifact
files (report.csv, fit.json, plot.svg, field.txt) are byte-deterministic for a
fixed config; manifest.json carries the wall time and is not.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import MeshQualityError, SolverError, ValidationError
from .experiments import (
    SweepResult,
    frechet_check,
    inclusion_sweep,
    nonexistence_threshold,
    one_phase_stability_sweep,
    sigma_sweep,
)
from .fem_core import dump_field, evaluate, normal_derivative, solve_two_phase
from .geometry import DomainSpec, InclusionSpec
from .meshgen import generate, refine
from .serrin_diagnostics import CSV_HEADER, EtaSpec, full_report

COMMANDS = ("solve", "diagnose", "sweep-sigma", "sweep-inclusion",
            "sweep-stability", "frechet-check", "verify-identity", "nonexistence")

# fitted metric pair (x, y) per sweep kind, used for plotting
FIT_AXES = {
    "stability": ("dev_Linf", "gap"),
    "sigma": ("abs_t", "delta_trace_Linf"),
    "frechet": ("abs_epsilon", "fd_error_L2"),
    "inclusion": ("area_D", "grad_w_boundary_Linf"),
}


def domain_to_dict(spec: DomainSpec) -> dict:
    d = {"kind": spec.kind, "center": list(spec.center),
         "boundary_samples": spec.boundary_samples}
    if spec.kind == "disk":
        d["radius"] = spec.radius
    elif spec.kind == "ellipse":
        d["a"], d["b"] = spec.a, spec.b
    else:
        d["r0"], d["eps"], d["k"] = spec.r0, spec.eps, spec.k
    return d


def domain_from_dict(d: dict) -> DomainSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ValidationError("domain.kind: required")
    allowed = {"kind", "center", "radius", "a", "b", "r0", "eps", "k",
               "boundary_samples"}
    unknown = set(d) - allowed
    if unknown:
        raise ValidationError(f"domain.{sorted(unknown)[0]}: unknown field")
    kwargs = dict(d)
    if "center" in kwargs:
        kwargs["center"] = tuple(float(v) for v in kwargs["center"])
    return DomainSpec(**kwargs)


def inclusion_to_dict(spec: InclusionSpec) -> dict:
    d = {"kind": spec.kind}
    if spec.kind != "none":
        d["center"] = list(spec.center)
        if spec.kind == "disk":
            d["radius"] = spec.radius
        else:
            d["a"], d["b"] = spec.a, spec.b
    return d


def inclusion_from_dict(d: dict) -> InclusionSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise ValidationError("inclusion.kind: required")
    unknown = set(d) - {"kind", "center", "radius", "a", "b"}
    if unknown:
        raise ValidationError(f"inclusion.{sorted(unknown)[0]}: unknown field")
    kwargs = dict(d)
    if "center" in kwargs:
        kwargs["center"] = tuple(float(v) for v in kwargs["center"])
    return InclusionSpec(**kwargs)


@dataclass
class RunConfig:
    command: str
    domain: Optional[DomainSpec] = None
    inclusion: InclusionSpec = field(default_factory=lambda: InclusionSpec("none"))
    sigma_c: float = 1.0
    target_h: float = 0.05
    refine_levels: int = 0
    t_values: Optional[list] = None
    t0: Optional[float] = None
    epsilon_values: Optional[list] = None
    inclusion_radii: Optional[list] = None
    family: Optional[list] = None
    eta: Optional[EtaSpec] = None
    fitted_C2: Optional[float] = None
    fitted_C3: Optional[float] = None
    window: int = 4
    output_dir: Optional[str] = None
    plot: bool = False
    name: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"command: unknown command {self.command!r}")
        if self.target_h is None or self.target_h <= 0:
            raise ValidationError("target_h: must be positive")
        needs_domain = self.command != "sweep-stability"
        if needs_domain and self.domain is None:
            raise ValidationError("domain: required")
        if self.command == "sweep-sigma" and not self.t_values:
            raise ValidationError("t_values: required for sweep-sigma")
        if self.command == "frechet-check":
            if self.t0 is None:
                raise ValidationError("t0: required for frechet-check")
            if not self.epsilon_values:
                raise ValidationError("epsilon_values: required for frechet-check")
        if self.command == "sweep-inclusion" and not self.inclusion_radii:
            raise ValidationError("inclusion_radii: required for sweep-inclusion")
        if self.command == "sweep-stability" and not self.family:
            raise ValidationError("family: required for sweep-stability")
        if self.command == "nonexistence":
            if self.fitted_C2 is None or self.fitted_C3 is None:
                raise ValidationError("fitted_C2/fitted_C3: required for nonexistence")


def config_to_dict(cfg: RunConfig) -> dict:
    d = {"command": cfg.command,
         "inclusion": inclusion_to_dict(cfg.inclusion),
         "sigma_c": cfg.sigma_c, "target_h": cfg.target_h,
         "refine_levels": cfg.refine_levels, "window": cfg.window,
         "plot": cfg.plot}
    if cfg.domain is not None:
        d["domain"] = domain_to_dict(cfg.domain)
    for key in ("t_values", "t0", "epsilon_values", "inclusion_radii",
                "fitted_C2", "fitted_C3", "output_dir", "name"):
        val = getattr(cfg, key)
        if val is not None:
            d[key] = val
    if cfg.family is not None:
        d["family"] = [domain_to_dict(s) for s in cfg.family]
    if cfg.eta is not None:
        d["eta"] = {"amplitude": cfg.eta.amplitude, "mode": cfg.eta.mode,
                    "phase": cfg.eta.phase}
    return d


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ValidationError("config: must be a JSON object")
    if "command" not in d:
        raise ValidationError("command: required")
    allowed = {"command", "domain", "inclusion", "sigma_c", "target_h",
               "refine_levels", "t_values", "t0", "epsilon_values",
               "inclusion_radii", "family", "eta", "fitted_C2", "fitted_C3",
               "window", "output_dir", "plot", "name"}
    unknown = set(d) - allowed
    if unknown:
        raise ValidationError(f"{sorted(unknown)[0]}: unknown field")
    kwargs = dict(d)
    if "domain" in kwargs:
        kwargs["domain"] = domain_from_dict(kwargs["domain"])
    if "inclusion" in kwargs:
        kwargs["inclusion"] = inclusion_from_dict(kwargs["inclusion"])
    if "family" in kwargs:
        kwargs["family"] = [domain_from_dict(s) for s in kwargs["family"]]
    if kwargs.get("eta") is not None:
        e = kwargs["eta"]
        unknown_eta = set(e) - {"amplitude", "mode", "phase"}
        if unknown_eta:
            raise ValidationError(f"eta.{sorted(unknown_eta)[0]}: unknown field")
        kwargs["eta"] = EtaSpec(float(e["amplitude"]), int(e.get("mode", 1)),
                                float(e.get("phase", 0.0)))
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config: invalid JSON: {exc}") from exc
    return config_from_dict(raw)


# -- artifact writers ---------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, (int, float, np.floating))
                              and not isinstance(v, bool) else str(v) for v in row))
            fh.write("\n")


def _fit_json(sweep: SweepResult) -> dict:
    d = {"kind": sweep.kind, "window": sweep.window, "status": sweep.status,
         "floors": sweep.floors, "excluded": list(map(bool, sweep.excluded)),
         "constants": sweep.constants, "h_max": sweep.h_max}
    if sweep.fit is not None:
        d["fit"] = {"slope": sweep.fit.slope, "intercept": sweep.fit.intercept,
                    "r_squared": sweep.fit.r_squared, "n_used": sweep.fit.n_used,
                    "used_indices": list(map(int, sweep.fit.used_indices))}
    else:
        d["fit"] = None
    return d


def sweep_xy(sweep: SweepResult):
    """(x, y, excluded) triples of the fitted metric pair for plotting."""
    xk, yk = FIT_AXES[sweep.kind]
    pts = []
    for row, ex in zip(sweep.rows, sweep.excluded):
        if xk == "abs_t":
            x = abs(row["t"])
        elif xk == "abs_epsilon":
            x = abs(row["epsilon"])
        else:
            x = row[xk]
        pts.append((x, row[yk], ex))
    return pts


def emit_plot(sweep: SweepResult, path) -> bool:
    """Standalone log-log SVG scatter with the fitted line and slope label.

    Byte-deterministic for a fixed sweep; returns False (no file) when fewer
    than 2 positive points remain.
    """
    pts = [(x, y, ex) for x, y, ex in sweep_xy(sweep) if x > 0 and y > 0]
    if len(pts) < 2:
        return False
    W, H, ML, MB, MT, MR = 640, 480, 70, 50, 30, 30
    lx = [math.log10(p[0]) for p in pts]
    ly = [math.log10(p[1]) for p in pts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    padx = 0.05 * max(x1 - x0, 1e-9)
    pady = 0.05 * max(y1 - y0, 1e-9)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def sx(v):
        return ML + (v - x0) / (x1 - x0) * (W - ML - MR)

    def sy(v):
        return H - MB - (v - y0) / (y1 - y0) * (H - MB - MT)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{ML}" y="20" font-family="monospace" font-size="14">'
             f'{sweep.kind} sweep (log-log)</text>']
    # decade ticks
    for d in range(math.floor(x0), math.ceil(x1) + 1):
        if x0 <= d <= x1:
            parts.append(f'<line x1="{sx(d):.2f}" y1="{H-MB}" x2="{sx(d):.2f}" '
                         f'y2="{MT}" stroke="#dddddd"/>')
            parts.append(f'<text x="{sx(d):.2f}" y="{H-MB+18}" font-family="monospace" '
                         f'font-size="11" text-anchor="middle">1e{d}</text>')
    for d in range(math.floor(y0), math.ceil(y1) + 1):
        if y0 <= d <= y1:
            parts.append(f'<line x1="{ML}" y1="{sy(d):.2f}" x2="{W-MR}" '
                         f'y2="{sy(d):.2f}" stroke="#dddddd"/>')
            parts.append(f'<text x="{ML-8}" y="{sy(d)+4:.2f}" font-family="monospace" '
                         f'font-size="11" text-anchor="end">1e{d}</text>')
    parts.append(f'<rect x="{ML}" y="{MT}" width="{W-ML-MR}" height="{H-MB-MT}" '
                 f'fill="none" stroke="black"/>')
    if sweep.fit is not None:
        ln10 = math.log(10.0)
        ya = (sweep.fit.intercept + sweep.fit.slope * x0 * ln10) / ln10
        yb = (sweep.fit.intercept + sweep.fit.slope * x1 * ln10) / ln10
        parts.append(f'<line x1="{sx(x0):.2f}" y1="{sy(ya):.2f}" x2="{sx(x1):.2f}" '
                     f'y2="{sy(yb):.2f}" stroke="#cc3333" stroke-width="1.5"/>')
        parts.append(f'<text x="{W-MR-10}" y="{MT+20}" font-family="monospace" '
                     f'font-size="13" text-anchor="end">slope={sweep.fit.slope:.2f}</text>')
    for x, y, ex in pts:
        fill = "#bbbbbb" if ex else "#3355cc"
        parts.append(f'<circle cx="{sx(math.log10(x)):.2f}" cy="{sy(math.log10(y)):.2f}" '
                     f'r="4" fill="{fill}"/>')
    parts.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
    return True


# -- command execution ---------------------------------------------------------


def _sweep_csv_rows(sweep: SweepResult, columns):
    rows = []
    for row, ex in zip(sweep.rows, sweep.excluded):
        rows.append([row[c] for c in columns] + ["excluded" if ex else "kept"])
    return rows


def _execute(cfg: RunConfig, outdir: Path, jobs: int) -> dict:
    inclusion = None if cfg.inclusion.is_none else cfg.inclusion
    summary = {}
    if cfg.command == "solve":
        mesh = generate(cfg.domain, inclusion, cfg.target_h)
        for _ in range(cfg.refine_levels):
            mesh = refine(mesh)
        u = solve_two_phase(mesh, cfg.sigma_c)
        tr = normal_derivative(mesh, u)
        center_val = evaluate(mesh, u, cfg.domain.center)
        flux = float(tr.values @ tr.weights)
        _write_csv(outdir / "report.csv",
                   "center_value,min_value,max_value,boundary_flux_total,h_max",
                   [[center_val, float(u.values.min()), float(u.values.max()),
                     flux, mesh.h_max]])
        with open(outdir / "field.txt", "w", newline="\n") as fh:
            dump_field(mesh, u, fh)
        summary["center_value"] = center_val
    elif cfg.command == "diagnose":
        rep = full_report(cfg.domain, inclusion, cfg.sigma_c, cfg.target_h,
                          eta=cfg.eta, refine_levels=cfg.refine_levels)
        with open(outdir / "report.csv", "w", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n" + rep.csv_row() + "\n")
        summary["gap"] = rep.gap
    elif cfg.command == "verify-identity":
        rep0 = full_report(cfg.domain, inclusion, cfg.sigma_c, cfg.target_h)
        rep1 = full_report(cfg.domain, inclusion, cfg.sigma_c, cfg.target_h,
                           refine_levels=1)
        ratio = rep0.FI_relative_gap / max(rep1.FI_relative_gap, 1e-300)
        _write_csv(outdir / "report.csv",
                   "level,h_max,FI_lhs,FI_rhs,FI_gap,gap_reduction",
                   [[0, rep0.h_max, rep0.FI_lhs, rep0.FI_rhs, rep0.FI_relative_gap, 1.0],
                    [1, rep1.h_max, rep1.FI_lhs, rep1.FI_rhs, rep1.FI_relative_gap, ratio]])
        summary["FI_gap"] = rep1.FI_relative_gap
    elif cfg.command == "nonexistence":
        th = nonexistence_threshold(cfg.domain, cfg.fitted_C2, cfg.fitted_C3,
                                    cfg.target_h)
        with open(outdir / "report.csv", "w", newline="\n") as fh:
            fh.write("gap,sigma_threshold,area_threshold,label\n")
            fh.write(f"{th.gap!r},{th.sigma_threshold!r},{th.area_threshold!r},"
                     f"{th.label}\n")
        summary["sigma_threshold"] = th.sigma_threshold
    else:
        sweep, columns = _run_sweep(cfg, inclusion, jobs)
        _write_csv(outdir / "report.csv", ",".join(columns) + ",status",
                   _sweep_csv_rows(sweep, columns))
        with open(outdir / "fit.json", "w", newline="\n") as fh:
            json.dump(_fit_json(sweep), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if cfg.plot:
            if not emit_plot(sweep, outdir / "plot.svg"):
                summary["plot"] = "skipped: fewer than 2 positive points"
        summary["status"] = sweep.status
        if sweep.fit is not None:
            summary["slope"] = sweep.fit.slope
    return summary


def _run_sweep(cfg: RunConfig, inclusion, jobs):
    if cfg.command == "sweep-sigma":
        sweep = sigma_sweep(cfg.domain, inclusion, cfg.t_values, cfg.target_h,
                            window=cfg.window, jobs=jobs)
        return sweep, ["t", "delta_trace_Linf", "dev_L2", "dev_Linf"]
    if cfg.command == "sweep-inclusion":
        sweep = inclusion_sweep(cfg.domain, cfg.sigma_c, cfg.inclusion_radii,
                                cfg.target_h, window=cfg.window, jobs=jobs)
        return sweep, ["radius", "area_D", "grad_w_boundary_Linf", "margin"]
    if cfg.command == "sweep-stability":
        sweep = one_phase_stability_sweep(cfg.family, cfg.target_h,
                                          window=cfg.window, jobs=jobs)
        return sweep, ["gap", "dev_L2", "dev_Linf"]
    sweep = frechet_check(cfg.domain, inclusion, cfg.t0, cfg.epsilon_values,
                          cfg.target_h, window=cfg.window, jobs=jobs)
    return sweep, ["epsilon", "fd_error_L2"]


def run(cfg: RunConfig, jobs: int = 1) -> int:
    """Execute one config; returns the process exit code."""
    root = os.environ.get("SERRIN_LAB_OUT") or cfg.output_dir or "outputs"
    outdir = Path(root) / (cfg.name or cfg.command)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {"config": config_to_dict(cfg), "version": __version__}
    t0 = time.perf_counter()
    try:
        summary = _execute(cfg, outdir, jobs)
    except ValidationError as exc:
        manifest.update(status="validation-error", error=str(exc))
        code = 2
    except (SolverError, MeshQualityError) as exc:
        manifest.update(status="solver-failure", error=str(exc))
        code = 3
    else:
        manifest.update(status="ok", summary=summary)
        code = 0
    manifest["wall_time_s"] = time.perf_counter() - t0
    with open(outdir / "manifest.json", "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="serrin-lab",
        description="two-phase Serrin laboratory: JSON config in, CSV/JSON/SVG out")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to a JSON run config")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="parallel sweep workers (default: all cores)")
    parser.add_argument("--plot", action="store_true",
                        help="emit plot.svg for sweep commands")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.command != args.command:
            raise ValidationError(
                f"command: config says {cfg.command!r}, CLI says {args.command!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.plot:
        cfg.plot = True
    code = run(cfg, jobs=args.jobs)
    if code != 0:
        print(f"error: see manifest.json (exit {code})", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
