"""Source problems L u = u_+^q + sigma*lambda with zero boundary data, solved
by the monotone Green-potential iteration, plus the sufficiency threshold
sigma_0, the necessary-condition margin, and the dual (test-function) margin.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .grids import GridFunction
from .measures import MeasureData, discretize
from .absorption import SolveReport
from .operators import DiscreteOperator, adjoint, green_potential, solve_very_weak

__all__ = [
    "SourceConfig",
    "estimate_C0",
    "sigma_threshold",
    "sigma_threshold_scan",
    "theta_star",
    "solve_source",
    "necessary_check",
    "dual_condition_margin",
    "ball_measure_scaling_check",
]


@dataclass
class SourceConfig:
    q: float
    sigma: float
    iter_cap: int = 500
    blowup_factor: float = 1e6
    tol: float = 1e-9
    lin_tol: float = 1e-10

    def __post_init__(self):
        if self.q <= 1:
            raise DomainError("need q > 1")
        if self.sigma < 0:
            raise DomainError("need sigma >= 0")


def _potential_values(op: DiscreteOperator, lam, tol: float) -> np.ndarray:
    if np.isscalar(lam):
        lam = np.full(op.grid.interior_count, float(lam))
    return solve_very_weak(op, lam, None, tol=tol).values


def estimate_C0(op: DiscreteOperator, lam, q: float, lin_tol: float = 1e-10) -> float:
    """Max over interior nodes of G((G lam)^q) / G(lam), the constant carrying
    the sufficiency threshold for the source problem."""
    g1 = _potential_values(op, lam, lin_tol)
    g2 = solve_very_weak(op, np.abs(g1) ** q, None, tol=lin_tol).values
    keep = g1 > 1e-14
    if not np.any(keep):
        raise DomainError("Green potential of lambda vanishes on the grid")
    return float(np.max(g2[keep] / g1[keep]))


def sigma_threshold(q: float, C0: float) -> float:
    """Largest sigma with a certified supersolution theta * G(sigma lam):
    the optimum over theta > 1 of ((theta-1)/(C0 theta^q))^{1/(q-1)}, attained
    at theta = q/(q-1), giving sigma_0 = (q-1)/(q (q C0)^{1/(q-1)})."""
    if q <= 1 or C0 <= 0:
        raise DomainError("need q > 1 and C0 > 0")
    return (q - 1.0) / (q * (C0 * q) ** (1.0 / (q - 1.0)))


def sigma_threshold_scan(q: float, C0: float, count: int = 400001,
                         theta_max: float = 400.0) -> float:
    """Independent evaluation of the same threshold as the optimum over
    theta > 1 of ((theta-1)/(C0 theta^q))^{1/(q-1)}, refined by golden-section
    around the best scan point."""
    def val(theta):
        return ((theta - 1.0) / (C0 * theta ** q)) ** (1.0 / (q - 1.0))

    thetas = np.linspace(1.0 + 1e-9, theta_max, count)
    vals = val(thetas)
    k = int(np.argmax(vals))
    lo = thetas[max(k - 1, 0)]
    hi = thetas[min(k + 1, count - 1)]
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(200):
        if val(c) > val(d):
            b, d = d, c
            c = b - phi * (b - a)
        else:
            a, c = c, d
            d = a + phi * (b - a)
        if b - a < 1e-15 * max(1.0, b):
            break
    return float(val(0.5 * (a + b)))


def theta_star(q: float, C0: float, sigma: float) -> float:
    """Smallest theta >= 1 with theta - 1 = C0 sigma^{q-1} theta^q; finite for
    sigma <= sigma_threshold, certifying the supersolution theta * G(sigma lam)."""
    a = C0 * sigma ** (q - 1.0)
    f = lambda th: th - 1.0 - a * th ** q
    th_opt = q / (q - 1.0)
    if f(th_opt) < 0:
        raise DomainError("sigma above the certified threshold")
    return float(brentq(f, 1.0, th_opt, xtol=1e-14))


def solve_source(op: DiscreteOperator, q: float, sigma: float, lam,
                 opts: Optional[SourceConfig] = None):
    """Monotone iteration u_0 = 0, u_{m+1} = G(u_m^q) + G(sigma lam).

    Returns (GridFunction, SolveReport) with verdict Converged or Diverged
    (blow-up cap 1e6 (1 + sup G(sigma lam)))."""
    opts = opts or SourceConfig(q=q, sigma=sigma)
    grid = op.grid
    if sigma == 0.0:
        u = GridFunction(grid, np.zeros(grid.interior_count))
        return u, SolveReport(0, 0.0, [], "Converged")
    if isinstance(lam, MeasureData):
        lam_vals = discretize(lam, grid).values
    else:
        lam_vals = np.asarray(lam, dtype=float)
    if np.any(lam_vals < 0):
        raise DomainError("source measure must be nonnegative")
    base = solve_very_weak(op, sigma * lam_vals, None, tol=opts.lin_tol).values
    cap = opts.blowup_factor * (1.0 + float(np.max(base, initial=0.0)))
    u = np.zeros(grid.interior_count)
    it, res = 0, np.inf
    while it < opts.iter_cap:
        it += 1
        u_new = solve_very_weak(op, np.maximum(u, 0.0) ** q, None,
                                tol=opts.lin_tol).values + base
        res = float(np.max(u_new - u))  # increments are nonnegative
        u = u_new
        if float(np.max(u)) > cap:
            return GridFunction(grid, u), SolveReport(it, res, [], "Diverged")
        if res <= opts.tol * (1.0 + float(np.max(u))):
            return GridFunction(grid, u), SolveReport(it, res, [], "Converged")
    return GridFunction(grid, u), SolveReport(it, res, [], "Stalled")


def necessary_check(op: DiscreteOperator, lam, sigma: float, q: float,
                    lin_tol: float = 1e-10) -> float:
    """Margin of the necessary condition with C_1 = 1/(q-1):
    min over interior nodes of (1/(q-1)) G(sigma lam) - G((G(sigma lam))^q)."""
    if isinstance(lam, MeasureData):
        lam = discretize(lam, op.grid).values
    g1 = _potential_values(op, sigma * np.asarray(lam, dtype=float), lin_tol)
    g2 = solve_very_weak(op, np.abs(g1) ** q, None, tol=lin_tol).values
    return float(np.min(g1 / (q - 1.0) - g2))


def _random_bump_density(grid, rng):
    """Sum of three positive quartic bumps with centers well inside the domain."""
    pts = grid.points
    vals = np.zeros(len(pts))
    idx = rng.integers(0, len(pts), size=3)
    for i in idx:
        x0 = pts[i]
        eps = 0.1 + 0.2 * rng.random()
        amp = 0.5 + rng.random()
        d2 = np.sum((pts - x0) ** 2, axis=1) / eps ** 2
        vals += amp * np.clip(1.0 - d2, 0.0, None) ** 2
    return vals


def dual_condition_margin(op: DiscreteOperator, lam, q: float, sigma: float,
                          sample_count: int = 200, seed: int = 0,
                          lin_tol: float = 1e-10) -> float:
    """Sampled dual necessary condition: for xi = G_{L*}(h) with random
    nonnegative densities h, returns the min over samples of

        ((q-1)/q^{q'}) int (L* xi)^{q'} / xi^{q'-1} dx  -  sigma int xi dlam.

    A nonnegative value means no sampled violation.
    """
    qp = q / (q - 1.0)
    grid = op.grid
    if isinstance(lam, MeasureData):
        lam_vals = discretize(lam, grid).values
    else:
        lam_vals = np.asarray(lam, dtype=float)
    ast = adjoint(op)
    rng = np.random.default_rng(seed)
    cell = grid.cell_volume()
    worst = np.inf
    for _ in range(sample_count):
        h = _random_bump_density(grid, rng)
        xi = ast.solve_linear(h, tol=lin_tol)
        pos = h > 0
        energy = float(np.sum(h[pos] ** qp / np.maximum(xi[pos], 1e-300) ** (qp - 1.0))) * cell
        pairing = float(np.sum(xi * lam_vals)) * cell
        margin = (q - 1.0) / q ** qp * energy - sigma * pairing
        worst = min(worst, margin)
    return float(worst)


def ball_measure_scaling_check(lam: MeasureData, q: float, n: int, radii,
                               center=None, grid=None):
    """Table of lam(B_r(x0)) / r^{n - 2q'} over the probe radii (the log
    variant mass * ln(1/r)^{q'-1} exactly at the critical exponent).  Bounded
    ratios are consistent with solvability of the source problem."""
    qp = q / (q - 1.0)
    expo = n - 2.0 * qp
    center = np.zeros(lam.dim) if center is None else np.asarray(center, dtype=float)
    rows = []
    for r in radii:
        mass = 0.0
        for x0, w in lam.atoms:
            if np.linalg.norm(np.asarray(x0) - center) < r:
                mass += w
        if lam.density is not None or lam.bumps:
            if grid is None:
                raise DomainError("density measure needs a grid for ball masses")
            smooth = replace(lam, atoms=())  # atoms counted exactly above
            dens_vals = discretize(smooth, grid).values
            d = np.linalg.norm(grid.points - center, axis=1)
            mass += float(np.sum(dens_vals[d < r])) * grid.cell_volume()
        if abs(expo) < 1e-12:
            ratio = mass * np.log(1.0 / r) ** (qp - 1.0) if r < 1 else mass
        else:
            ratio = mass / r ** expo
        rows.append({"r": float(r), "mass": float(mass), "ratio": float(ratio)})
    return rows
