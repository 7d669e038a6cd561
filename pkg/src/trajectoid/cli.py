"""Command line front end: ``trajectoid analyze|scan|solve|mesh|verify|gen|probe``.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 no solution.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import mesh_forge as mf
from .path_model import (
    DegeneratePathError,
    PathFormatError,
    PlanarPath,
    dump_path_csv,
    gen_fourier_random,
    gen_random_polyline,
    gen_v_path,
    gen_wedge_path,
    gen_zigzag,
    load_path_csv,
    turning_profile,
)
from .roll_verify import verify_solution, verify_trace_support
from .solver import DEFAULT_GRID, DEFAULT_SIGMA_RANGE, minimal_n, scan, solve_n, targets
from .svgplot import HLine, Plot, Series

EXIT_VERIFY = 1
EXIT_INPUT = 2
EXIT_NO_SOLUTION = 3


class CliFailure(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


# --- output helpers -----------------------------------------------------------


def dumps17(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json_str(str(k))}: {dumps17(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(dumps17(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps17(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return f"{x:.17g}"
    return _json_str(str(obj))


def _json_str(s: str) -> str:
    return json.dumps(s)


def _emit(text: str, out: str | None, name: str) -> Path | None:
    if out is None:
        click.echo(text, nl=False)
        return None
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    f = d / name
    f.write_text(text)
    return f


def _read_path(input_path: str) -> PlanarPath:
    try:
        data = Path(input_path).read_bytes()
    except OSError as e:
        raise CliFailure(f"cannot read {input_path}: {e.strerror}", EXIT_INPUT) from None
    try:
        return load_path_csv(data, Path(input_path).stem)
    except (PathFormatError, DegeneratePathError) as e:
        raise CliFailure(f"{input_path}: {e}", EXIT_INPUT) from None


def _sigma_range(smin: float, smax: float) -> tuple[float, float]:
    if not 0 < smin < smax:
        raise CliFailure("need 0 < --sigma-min < --sigma-max", EXIT_INPUT)
    return smin, smax


input_opt = click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False), help="Path CSV (x,y).")
out_opt = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory (stdout if omitted).")
smin_opt = click.option("--sigma-min", type=float, default=DEFAULT_SIGMA_RANGE[0], show_default=True)
smax_opt = click.option("--sigma-max", type=float, default=DEFAULT_SIGMA_RANGE[1], show_default=True)
grid_opt = click.option("--grid", type=click.IntRange(min=2), default=DEFAULT_GRID, show_default=True)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Design solids that roll along a periodic planar path."""


# --- analyze -------------------------------------------------------------------


@main.command()
@input_opt
@out_opt
def analyze(input_path, out):
    """Length, total turning and index of a path."""
    path = _read_path(input_path)
    try:
        prof = turning_profile(path)
    except DegeneratePathError as e:
        raise CliFailure(str(e), EXIT_INPUT) from None
    report = {
        "L": path.length,
        "delta_psi": prof.total_turning,
        "index": prof.index,
        "vertex_count": len(path),
        "displacement": path.displacement.tolist(),
    }
    _emit(dumps17(report) + "\n", out, "analyze.json")


# --- scan --------------------------------------------------------------------


def scan_plots(table, roots: list[tuple[float, float]], n_max: int, bound: float | None, title: str):
    phi = Plot(title=f"rotation angle: {title}", xlabel="sigma", ylabel="phi [rad]", ylim=(0.0, math.pi))
    phi.series.append(Series(table.sigma, table.phi, "phi(sigma)"))
    for n in range(2, n_max + 1):
        for k, t in targets(n):
            phi.hlines.append(HLine(t, f"2pi*{k}/{n}"))
    if bound is not None:
        phi.hlines.append(HLine(bound, "bound", color="#d62728", dash="8 3"))
    phi.markers.extend(roots)
    area_y = np.where(table.antipodal, np.nan, table.area_norm)
    area = Plot(title=f"normalized enclosed area: {title}", xlabel="sigma", ylabel="S / r^2 mod 2pi", ylim=(0.0, 2 * math.pi))
    area.series.append(Series(table.sigma, area_y, "area"))
    area.hlines.append(HLine(math.pi, "pi"))
    return phi.render(), area.render()


@main.command("scan")
@input_opt
@smin_opt
@smax_opt
@grid_opt
@click.option("--n-max", type=click.IntRange(min=1), default=2, show_default=True, help="Draw 2pi k/n levels and mark roots up to this n.")
@click.option("--bound", type=float, default=None, help="Overlay a horizontal bound line (e.g. 2*beta).")
@click.option("--out", type=click.Path(file_okay=False), default=".", show_default=True)
def scan_cmd(input_path, sigma_min, sigma_max, grid, n_max, bound, out):
    """Tabulate phi(sigma) and the enclosed area; write CSV and SVG plots."""
    path = _read_path(input_path)
    rng = _sigma_range(sigma_min, sigma_max)
    table = scan(path, rng[0], rng[1], grid)
    roots = []
    for n in range(1, n_max + 1):
        roots += [(s.sigma, s.target_angle) for s in solve_n(path, n, rng, grid, table=table)]
    phi_svg, area_svg = scan_plots(table, roots, n_max, bound, path.name)
    _emit(table.to_csv(), out, "scan.csv")
    _emit(phi_svg, out, "scan_phi.svg")
    _emit(area_svg, out, "scan_area.svg")
    click.echo(f"{len(table)} rows, {len(roots)} roots -> {out}", err=True)


# --- solve --------------------------------------------------------------------


@main.command()
@input_opt
@smin_opt
@smax_opt
@grid_opt
@click.option("--n", type=click.IntRange(min=1), default=None, help="Solve for this n.")
@click.option("--n-max", type=click.IntRange(min=1), default=12, show_default=True, help="Without --n: smallest n up to this.")
@out_opt
def solve(input_path, sigma_min, sigma_max, grid, n, n_max, out):
    """Find radii at which the path is an n-path."""
    path = _read_path(input_path)
    rng = _sigma_range(sigma_min, sigma_max)
    if n is not None:
        sols = solve_n(path, n, rng, grid)
        report = {"n": n, "sigma_range": list(rng), "solutions": [s.to_dict() for s in sols]}
    else:
        mn = minimal_n(path, rng, n_max, grid)
        sols = [] if mn.n is None else solve_n(path, mn.n, rng, grid)
        report = mn.to_dict()
        report["solutions"] = [s.to_dict() for s in sols]
    _emit(dumps17(report) + "\n", out, "solutions.json")
    if not sols:
        raise CliFailure("no solution in the sigma range", EXIT_NO_SOLUTION)


def _pick_solution(path, rng, grid, n, n_max, pick):
    if n is None:
        mn = minimal_n(path, rng, n_max, grid)
        if mn.n is None:
            raise CliFailure(f"no n <= {n_max} has a solution in the sigma range", EXIT_NO_SOLUTION)
        n = mn.n
    sols = solve_n(path, n, rng, grid)
    if not sols:
        raise CliFailure(f"no n={n} solution in the sigma range", EXIT_NO_SOLUTION)
    if pick >= len(sols):
        raise CliFailure(f"--pick {pick} out of range ({len(sols)} solutions)", EXIT_INPUT)
    return sols[pick]


# --- mesh ----------------------------------------------------------------------


mesh_opts = [
    click.option("--n", type=click.IntRange(min=1), default=None, help="Period count (default: smallest n found)."),
    click.option("--n-max", type=click.IntRange(min=1), default=12, show_default=True),
    click.option("--pick", type=click.IntRange(min=0), default=0, show_default=True, help="Solution index, by increasing sigma."),
    click.option("--shell-ratio", type=float, default=mf.DEFAULT_SHELL_RATIO, show_default=True, help="r_shell / r."),
    click.option("--subdiv", type=click.IntRange(1, 8), default=5, show_default=True),
    click.option("--max-cuts", type=click.IntRange(min=1), default=mf.DEFAULT_MAX_CUTS, show_default=True),
]


def _with(opts):
    def deco(f):
        for o in reversed(opts):
            f = o(f)
        return f

    return deco


def _check_shell(shell_ratio):
    if not shell_ratio > 1.0:
        raise CliFailure("--shell-ratio must exceed 1", EXIT_INPUT)


def _build(path, sol, shell_ratio, subdiv, max_cuts):
    trace, H = mf.trajectoid_trace(path, sol.radius, sol.n, max_cuts)
    solid = mf.carve(trace, shell_ratio * sol.radius, subdiv, max_cuts=max_cuts, one_period=H, periods=sol.n)
    return solid, trace


@main.command()
@input_opt
@smin_opt
@smax_opt
@grid_opt
@_with(mesh_opts)
@click.option("--cavity", type=float, default=0.0, show_default=True, help="Core cavity radius as a fraction of r (0: none).")
@click.option("--no-verify", is_flag=True, help="Write the STL even if support verification fails.")
@click.option("--obj", is_flag=True, help="Also write an OBJ file.")
@click.option("--out", type=click.Path(file_okay=False), default=".", show_default=True)
def mesh(input_path, sigma_min, sigma_max, grid, n, n_max, pick, shell_ratio, subdiv, max_cuts, cavity, no_verify, obj, out):
    """Carve the solid for a solution and write STL plus a JSON sidecar."""
    path = _read_path(input_path)
    rng = _sigma_range(sigma_min, sigma_max)
    _check_shell(shell_ratio)
    if not 0.0 <= cavity <= 1.0:
        raise CliFailure("--cavity must lie in [0, 1]", EXIT_INPUT)
    sol = _pick_solution(path, rng, grid, n, n_max, pick)
    solid, trace = _build(path, sol, shell_ratio, subdiv, max_cuts)
    extra = {"n": sol.n, "k": sol.k, "sigma": sol.sigma, "L": sol.path_length, "subdivisions": subdiv}
    if no_verify:
        extra["warning"] = "support verification skipped (--no-verify)"
    else:
        sup = verify_trace_support(solid, trace)
        extra["verification"] = {
            "passed": sup.passed,
            "max_support_deviation_rel": sup.max_deviation_rel,
            "min_off_trace_margin_rel": sup.min_margin_rel,
        }
        if not sup.passed:
            _emit(dumps17(extra) + "\n", out, "trajectoid.json")
            raise CliFailure("support verification failed; STL not written (use --no-verify to override)", EXIT_VERIFY)
    if cavity > 0:
        try:
            solid = mf.core_cavity(solid, cavity * sol.radius)
        except mf.CavityError as e:
            raise CliFailure(f"cavity: {e}", EXIT_INPUT) from None
        extra["cavity_volume"] = mf.cavity_volume(solid)
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "trajectoid.stl").write_bytes(mf.export_stl(solid))
    (d / "trace.csv").write_text(trace.to_csv())
    if obj:
        (d / "trajectoid.obj").write_text(mf.export_obj(solid))
    (d / "trajectoid.json").write_text(dumps17(mf.sidecar(solid, **extra)) + "\n")
    click.echo(f"n={sol.n} sigma={sol.sigma:.17g} cuts={len(solid.planes)} triangles={len(solid.faces)} -> {d}", err=True)


# --- verify ------------------------------------------------------------------


@main.command()
@input_opt
@smin_opt
@smax_opt
@grid_opt
@_with(mesh_opts)
@click.option("--periods", type=click.IntRange(min=1), default=None, help="Replay periods (default 2n).")
@click.option("--no-mesh", is_flag=True, help="Skip carving and the support check.")
@click.option("--out", type=click.Path(file_okay=False), default=".", show_default=True)
def verify(input_path, sigma_min, sigma_max, grid, n, n_max, pick, shell_ratio, subdiv, max_cuts, periods, no_mesh, out):
    """Holonomy, support and replay checks for a solution."""
    path = _read_path(input_path)
    rng = _sigma_range(sigma_min, sigma_max)
    _check_shell(shell_ratio)
    sol = _pick_solution(path, rng, grid, n, n_max, pick)
    solid = trace = None
    if not no_mesh:
        solid, trace = _build(path, sol, shell_ratio, subdiv, max_cuts)
    report = verify_solution(path, sol, solid, trace, periods)
    _emit(dumps17(report.to_dict()) + "\n", out, "report.json")
    _emit(report.replay.to_csv(), out, "replay.csv")
    click.echo(f"verification {'passed' if report.passed else 'FAILED'}", err=True)
    if not report.passed:
        sys.exit(EXIT_VERIFY)


# --- gen ------------------------------------------------------------------------


@main.command()
@click.argument("kind", type=click.Choice(["v", "wedge", "zigzag", "fourier", "polyline"]))
@click.option("--x", type=float, default=1.0, show_default=True)
@click.option("--y", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=math.pi / 4, show_default=True)
@click.option("--k", type=float, default=1 / math.sqrt(2), show_default=True)
@click.option("--alpha", type=float, default=3 * math.pi / 4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--segments", type=click.IntRange(min=1), default=6, show_default=True)
@click.option("--modes", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--scale", type=float, default=0.25, show_default=True)
@click.option("--input", "input_path", type=click.Path(dir_okay=False), default=None, help="wedge: piece W (default: random polyline).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output CSV file (stdout if omitted).")
def gen(kind, x, y, beta, k, alpha, seed, segments, modes, scale, input_path, out):
    """Generate a path: V, wedge, zigzag, random Fourier or random polyline."""
    try:
        if kind == "v":
            path = gen_v_path(x, y)
        elif kind == "wedge":
            w = _read_path(input_path) if input_path else gen_random_polyline(seed, segments)
            path = gen_wedge_path(w, beta)
        elif kind == "zigzag":
            path = gen_zigzag(k, alpha, beta)
        elif kind == "fourier":
            path = gen_fourier_random(seed, modes, scale)
        else:
            path = gen_random_polyline(seed, segments)
    except (ValueError, DegeneratePathError) as e:
        raise CliFailure(str(e), EXIT_INPUT) from None
    text = dump_path_csv(path)
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text)


# --- probe ------------------------------------------------------------------------


@main.command()
@click.option("--seeds", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="First seed.")
@smin_opt
@click.option("--sigma-max", type=float, default=4.0, show_default=True)
@grid_opt
@click.option("--wedges", type=click.IntRange(min=0), default=0, show_default=True, help="Also include this many small-beta wedge paths.")
@click.option("--wedge-beta", type=float, default=0.05, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def probe(seeds, seed, sigma_min, sigma_max, grid, wedges, wedge_beta, out):
    """Fraction of random paths that admit a two-period solution."""
    rng = _sigma_range(sigma_min, sigma_max)
    rows = ["kind,seed,found,count,first_sigma"]
    hits = total = 0
    cases = [("fourier", s, gen_fourier_random(s)) for s in range(seed, seed + seeds)]
    cases += [("wedge", s, gen_wedge_path(gen_random_polyline(s), wedge_beta)) for s in range(seed, seed + wedges)]
    for kind, s, path in cases:
        sols = solve_n(path, 2, rng, grid)
        total += 1
        hits += bool(sols)
        first = f"{sols[0].sigma:.17g}" if sols else ""
        rows.append(f"{kind},{s},{int(bool(sols))},{len(sols)},{first}")
    frac = hits / total
    rows.append(f"# fraction,{frac:.17g},{hits},{total}")
    _emit("\n".join(rows) + "\n", out, "probe.csv")
    click.echo(f"two-period solutions: {hits}/{total} = {frac:.4f}", err=True)


if __name__ == "__main__":
    main()
