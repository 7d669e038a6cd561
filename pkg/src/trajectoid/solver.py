"""Sweeps over the scaled inverse radius and n-path root finding.

``sigma = L / (2 pi r)``.  The holonomy angle ``phi(sigma)`` lives in
``[0, pi]``; an n-path solution is a sigma with ``phi = 2 pi k / n`` for some
``k`` coprime to ``n``, so that the holonomy raised to ``n`` is the identity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .path_model import PlanarPath
from .rolling_map import (
    DOWN,
    holonomy,
    holonomy_quats,
    quat_angle,
    quat_conj,
    quat_rotate,
    sigma_to_radius,
    sphere_trace,
)
from .spherical_geometry import enclosed_area, normalized_area_batch

__all__ = [
    "ScanTable",
    "Solution",
    "MinimalN",
    "DEFAULT_SIGMA_RANGE",
    "scan",
    "solve_n",
    "minimal_n",
    "targets",
    "rodrigues_angle",
    "wedge_axis_dot",
    "search_beta",
    "BetaSearch",
    "certify",
    "area_consistency",
]

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_SIGMA_RANGE = (0.05, 6.0)
DEFAULT_GRID = 2000
MAX_CELL_DPHI = 0.3
CERT_TOL = 1e-8
VERTICAL_TOL = 1e-8
CONSTANT_TOL = 1e-9
_MIN_CANDIDATE = 0.5


@dataclass(frozen=True)
class ScanTable:
    sigma: np.ndarray
    phi: np.ndarray
    area_norm: np.ndarray
    antipodal: np.ndarray
    vertical_axis: np.ndarray
    quats: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.sigma)

    def to_csv(self) -> str:
        rows = ["sigma,phi,area_norm,antipodal,vertical_axis"]
        for s, p, a, ap, v in zip(self.sigma, self.phi, self.area_norm, self.antipodal, self.vertical_axis):
            rows.append(f"{s:.17g},{p:.17g},{a:.17g},{int(ap)},{int(v)}")
        return "\n".join(rows) + "\n"


def _evaluate(path: PlanarPath, sigma: np.ndarray) -> ScanTable:
    radii = path.length / (TWO_PI * sigma)
    q = holonomy_quats(path, radii)
    phi = quat_angle(q)
    area, _, antipodal = normalized_area_batch(path, sigma, q)
    fixed = quat_rotate(quat_conj(q), DOWN)
    vertical = np.linalg.norm(fixed - DOWN, axis=-1) <= VERTICAL_TOL
    return ScanTable(sigma, phi, area, antipodal, vertical, q)


def scan(path: PlanarPath, sigma_min: float, sigma_max: float, samples: int) -> ScanTable:
    """Evaluate the holonomy angle and normalized area on a uniform grid."""
    if not 0 < sigma_min < sigma_max:
        raise ValueError("need 0 < sigma_min < sigma_max")
    if samples < 2:
        raise ValueError("need at least 2 samples")
    return _evaluate(path, np.linspace(sigma_min, sigma_max, samples))


def _refine(path: PlanarPath, table: ScanTable, max_dphi: float = MAX_CELL_DPHI, rounds: int = 12) -> ScanTable:
    """Insert midpoints in cells where phi jumps by more than ``max_dphi``."""
    for _ in range(rounds):
        jump = np.abs(np.diff(table.phi)) > max_dphi
        if not jump.any():
            break
        mids = 0.5 * (table.sigma[:-1][jump] + table.sigma[1:][jump])
        extra = _evaluate(path, mids)
        order = np.argsort(np.concatenate([table.sigma, extra.sigma]), kind="stable")

        def cat(a, b):
            return np.concatenate([a, b])[order]

        table = ScanTable(
            cat(table.sigma, extra.sigma),
            cat(table.phi, extra.phi),
            cat(table.area_norm, extra.area_norm),
            cat(table.antipodal, extra.antipodal),
            cat(table.vertical_axis, extra.vertical_axis),
            np.concatenate([table.quats, extra.quats])[order],
        )
    return table


@dataclass(frozen=True)
class Solution:
    n: int
    k: int
    sigma: float
    radius: float
    path_length: float
    residual_angle: float
    residual_identity: float
    area_norm: float
    area_check: float

    @property
    def target_angle(self) -> float:
        return TWO_PI * self.k / self.n if self.n > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "sigma": self.sigma,
            "r": self.radius,
            "L": self.path_length,
            "residual_angle": self.residual_angle,
            "residual_identity": self.residual_identity,
            "area_norm": None if math.isnan(self.area_norm) else self.area_norm,
            "area_check": None if math.isnan(self.area_check) else self.area_check,
        }


def targets(n: int) -> list[tuple[int, float]]:
    """Reduced fractions ``k/n`` with target angle ``2 pi k / n`` in (0, pi]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return [(0, 0.0)]
    return [(k, TWO_PI * k / n) for k in range(1, n // 2 + 1) if math.gcd(k, n) == 1]


def _quats_at(path: PlanarPath, sigma) -> np.ndarray:
    return holonomy_quats(path, path.length / (TWO_PI * np.asarray(sigma, dtype=float)))


def _bisect(path: PlanarPath, lo, hi, f_lo, target: float, rel_tol: float = 1e-12):
    """Vectorized bisection of ``g(sigma)`` on brackets with a sign change.

    ``g`` is ``phi - target`` for targets below pi and the raw quaternion
    scalar at pi, where ``phi`` touches its ceiling instead of crossing it.
    """
    lo, hi, f_lo = lo.copy(), hi.copy(), f_lo.copy()
    for _ in range(200):
        if np.all(hi - lo <= rel_tol * hi):
            break
        mid = 0.5 * (lo + hi)
        f_mid = _g(_quats_at(path, mid), target)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, f_mid, f_lo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def _g(q, target):
    if target >= math.pi:
        return q[..., 0]
    return quat_angle(q) - target


def _golden_min(path: PlanarPath, lo, hi, rel_tol: float = 1e-13):
    """Vectorized golden-section minimization of phi on each bracket."""
    inv = (math.sqrt(5) - 1) / 2
    a, b = lo.copy(), hi.copy()
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc = quat_angle(_quats_at(path, c))
    fd = quat_angle(_quats_at(path, d))
    for _ in range(200):
        if np.all(b - a <= rel_tol * b):
            break
        left = fc < fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        new_c = b - inv * (b - a)
        new_d = a + inv * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        probe = np.where(left, c_next, d_next)
        fp = quat_angle(_quats_at(path, probe))
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = c_next, d_next
    return 0.5 * (a + b)


def certify(path: PlanarPath, n: int, k: int, sigma: float) -> Solution:
    r = sigma_to_radius(path.length, sigma)
    rot = holonomy(path, r)
    phi = rot.angle
    target = TWO_PI * k / n if n > 1 else 0.0
    resid = (rot**n).distance_to_identity()
    trace = sphere_trace(path, r)
    area = enclosed_area(trace).normalized()
    if area.antipodal:
        area_val, check = math.nan, math.nan
    else:
        area_val = area.reduced
        check = area_consistency(trace, phi, area_val)
    return Solution(n, k, float(sigma), r, path.length, abs(phi - target), resid, area_val, check)


def area_consistency(trace, phi: float, area: float) -> float:
    """Mismatch of ``|cos(phi/2)|`` and ``|cos(d/2) cos(S/2)|``.

    ``d`` is the angular separation of the trace endpoints and ``S`` the
    normalized enclosed area.  The two agree for every radius; at n = 2
    (``phi = pi``) this forces ``S = pi`` mod ``2 pi``.
    """
    d = math.atan2(np.linalg.norm(np.cross(trace.start, trace.end)), float(trace.start @ trace.end))
    return abs(abs(math.cos(phi / 2)) - abs(math.cos(d / 2) * math.cos(area / 2)))


def _roots_from_table(path: PlanarPath, table: ScanTable, n: int) -> list[Solution]:
    sig = table.sigma
    found: list[tuple[int, float]] = []
    if n == 1:
        phi = table.phi
        if np.ptp(phi) <= CONSTANT_TOL and phi.max() <= CONSTANT_TOL:
            found.append((0, float(sig[0])))
        else:
            left = np.concatenate([[np.inf], phi[:-1]])
            right = np.concatenate([phi[1:], [np.inf]])
            idx = np.flatnonzero((phi <= left) & (phi <= right) & (phi < _MIN_CANDIDATE))
            if len(idx):
                lo = sig[np.maximum(idx - 1, 0)]
                hi = sig[np.minimum(idx + 1, len(sig) - 1)]
                for s in _golden_min(path, lo, hi):
                    found.append((0, float(s)))
    else:
        for k, target in targets(n):
            g = _g(table.quats, target)
            flip = (np.sign(g[:-1]) != np.sign(g[1:])) | (g[:-1] == 0)
            bad = table.antipodal[:-1] | table.antipodal[1:]
            if np.any(flip & bad):
                log.info("skipping %d bracket(s) next to antipodal rows", int(np.sum(flip & bad)))
            idx = np.flatnonzero(flip & ~bad)
            if len(idx) == 0:
                continue
            exact = g[idx] == 0
            roots = np.where(exact, sig[idx], 0.0)
            todo = ~exact
            if todo.any():
                roots[todo] = _bisect(path, sig[idx][todo], sig[idx + 1][todo], g[idx][todo], target)
            found.extend((k, float(s)) for s in roots)

    out = []
    for k, s in found:
        sol = certify(path, n, k, s)
        if sol.residual_identity <= CERT_TOL:
            out.append(sol)
        else:
            log.debug("rejected sigma=%.12g for n=%d: residual %.3g", s, n, sol.residual_identity)
    out.sort(key=lambda s: s.sigma)
    return _dedupe(out)


def _dedupe(sols: list[Solution]) -> list[Solution]:
    out: list[Solution] = []
    for s in sols:
        if out and out[-1].k == s.k and abs(out[-1].sigma - s.sigma) <= 1e-9 * s.sigma:
            continue
        out.append(s)
    return out


def solve_n(
    path: PlanarPath,
    n: int,
    sigma_range: tuple[float, float] = DEFAULT_SIGMA_RANGE,
    grid: int = DEFAULT_GRID,
    table: ScanTable | None = None,
) -> list[Solution]:
    """All certified n-path solutions in ``sigma_range``, by increasing sigma."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if table is None:
        table = scan(path, sigma_range[0], sigma_range[1], grid)
    table = _refine(path, table)
    return _roots_from_table(path, table, n)


@dataclass(frozen=True)
class MinimalN:
    n: int | None
    solution: Solution | None
    trace_constant: bool
    sigma_range: tuple[float, float]
    n_max: int
    empirical: bool = True

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "solution": None if self.solution is None else self.solution.to_dict(),
            "trace_constant": self.trace_constant,
            "sigma_range": list(self.sigma_range),
            "n_max": self.n_max,
            "classification": "empirical (bounded by sigma range and n_max)",
        }


def minimal_n(
    path: PlanarPath,
    sigma_range: tuple[float, float] = DEFAULT_SIGMA_RANGE,
    n_max: int = 12,
    grid: int = DEFAULT_GRID,
) -> MinimalN:
    """Smallest n <= n_max admitting a solution in range (ties: smallest sigma)."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    table = _refine(path, scan(path, sigma_range[0], sigma_range[1], grid))
    constant = bool(np.ptp(table.phi) <= CONSTANT_TOL)
    for n in range(1, n_max + 1):
        sols = _roots_from_table(path, table, n)
        if sols:
            return MinimalN(n, sols[0], constant, tuple(sigma_range), n_max)
    return MinimalN(None, None, constant, tuple(sigma_range), n_max)


def rodrigues_angle(beta, axis_dot):
    """Angle of ``B^-1 Bt`` where both turn by ``beta`` about axes with dot ``axis_dot``.

    Half-angle composition: ``cos(g/2) = cos(b/2)**2 + axis_dot * sin(b/2)**2``.
    The sine is formed as ``sqrt((1-c)(1+c))`` with ``1 - c`` taken in closed
    form, which keeps small angles accurate.  Accepts arrays.
    """
    dot = np.asarray(axis_dot, dtype=float)
    if np.any(np.abs(dot) > 1 + 1e-12):
        raise ValueError("|axis_dot| must be <= 1")
    dot = np.clip(dot, -1.0, 1.0)
    s2 = np.sin(np.asarray(beta, dtype=float) / 2) ** 2
    one_minus = (1.0 - dot) * s2
    c = 1.0 - one_minus
    sn = np.sqrt(np.maximum(0.0, one_minus * (1.0 + c)))
    g = 2.0 * np.arctan2(sn, np.abs(c))
    return float(g) if g.ndim == 0 else g


def wedge_axis_dot(w: PlanarPath, sigma: float, path_length: float | None = None) -> float:
    """``z . R(w) z`` at the radius fixed by ``sigma`` for the full wedge path.

    ``path_length`` defaults to ``2 L(w)``, the length of the wedge built
    from ``w``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    L = 2 * w.length if path_length is None else path_length
    rot = holonomy(w, sigma_to_radius(L, sigma))
    return float(rot.apply(np.array([0.0, 0.0, 1.0]))[2])


@dataclass(frozen=True)
class BetaSearch:
    n: int
    beta: float | None
    solution: Solution | None
    tried: int


def search_beta(
    family,
    n: int,
    sigma_range: tuple[float, float] = DEFAULT_SIGMA_RANGE,
    grid: int = DEFAULT_GRID,
    samples: int = 32,
) -> BetaSearch:
    """Find ``beta`` with ``family(beta)`` a minimal ``n``-path.

    ``family`` maps an angle to a wedge-type path whose holonomy angle is at
    most ``2 * beta``.  Inside ``(pi/n, pi/(n-1))`` no ``m < n`` is reachable,
    so only the level ``2 pi / n`` has to be hit.  Candidates are tried from
    the top of the interval down, where the bound leaves the most room.
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    lo, hi = math.pi / n, math.pi / (n - 1)
    betas = hi - (hi - lo) * (np.arange(1, samples + 1) / (samples + 1))
    for i, beta in enumerate(betas, start=1):
        path = family(float(beta))
        mn = minimal_n(path, sigma_range, n, grid)
        if mn.n == n:
            return BetaSearch(n, float(beta), mn.solution, i)
    return BetaSearch(n, None, None, samples)
