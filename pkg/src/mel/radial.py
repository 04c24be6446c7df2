"""Radial laboratory: explicit singular profiles, ODE shooting, isolated
singularity classification, conformal energy diagnostics, the spherical-cap
eigenproblem behind separable boundary singularities, and barrier constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BlowUp, DomainError, NoConvergence
from .grids import RadialGrid, sphere_area

__all__ = [
    "RadialProfile",
    "DichotomyClass",
    "ell_qn",
    "gamma_qn",
    "explicit_profile_residual",
    "shoot_radial",
    "classify_interior_singularity",
    "profile_flux_mass",
    "reduced_energy",
    "conformal_energy_drift",
    "CapProfile",
    "cap_lambda",
    "cap_eigenproblem",
    "cap_residual",
    "dirac_normalization",
    "boundary_separable_residual",
    "keller_osserman_constant",
    "keller_osserman_certificate",
]

BLOWUP_LIMIT = 1e12


def ell_qn(q: float, n: int) -> float:
    """Amplitude of the explicit singular absorption profile ell * r^{-2/(q-1)}.

    Defined for 1 < q < n/(n-2) (all q > 1 when n = 2).
    """
    if q <= 1:
        raise DomainError("need q > 1")
    inner = (2.0 / (q - 1.0)) * (2.0 * q / (q - 1.0) - n)
    if inner <= 0:
        raise DomainError(f"no singular absorption profile for q={q}, n={n}")
    return inner ** (1.0 / (q - 1.0))


def gamma_qn(q: float, n: int) -> float:
    """Amplitude of the explicit singular source profile gamma * r^{-2/(q-1)}.

    Defined for q > n/(n-2), n >= 3.
    """
    if q <= 1:
        raise DomainError("need q > 1")
    inner = (2.0 / (q - 1.0)) * (n - 2.0 * q / (q - 1.0))
    if inner <= 0:
        raise DomainError(f"no singular source profile for q={q}, n={n}")
    return inner ** (1.0 / (q - 1.0))


def _ode_sign(kind: str) -> float:
    # absorption: u'' + (n-1)/r u' = +|u|^{q-1}u ; source: ... = -|u|^{q-1}u
    if kind == "absorption":
        return 1.0
    if kind == "source":
        return -1.0
    raise DomainError(f"unknown radial kind {kind!r}")


def explicit_profile_residual(kind: str, q: float, n: int, r_values) -> float:
    """Max normalized residual of the closed-form singular profile, using
    analytic derivatives of A r^beta (pure floating-point evaluation)."""
    A = ell_qn(q, n) if kind == "absorption" else gamma_qn(q, n)
    sgn = _ode_sign(kind)
    beta = -2.0 / (q - 1.0)
    r = np.asarray(r_values, dtype=float)
    u = A * r ** beta
    upp = A * beta * (beta - 1.0) * r ** (beta - 2.0)
    up = A * beta * r ** (beta - 1.0)
    res = upp + (n - 1.0) / r * up - sgn * np.abs(u) ** (q - 1.0) * u
    return float(np.max(np.abs(res) / (1.0 + np.abs(u) ** q)))


@dataclass
class RadialProfile:
    grid: RadialGrid
    u: np.ndarray
    du: np.ndarray
    kind: str
    q: float

    @property
    def n(self) -> int:
        return self.grid.n


def shoot_radial(kind: str, q: float, n: int, r_start: float, u_start: float,
                 du_start: float, r_end: float, rtol: float = 1e-10,
                 samples: int = 600) -> RadialProfile:
    """Integrate u'' + ((n-1)/r) u' = +-|u|^{q-1} u between r_start and r_end
    (either direction) with an embedded RK45 pair.  Raises BlowUp when |u|
    exceeds 1e12 before the far end."""
    sgn = _ode_sign(kind)
    if r_start <= 0 or r_end <= 0 or r_start == r_end:
        raise DomainError("radii must be positive and distinct")

    def rhs(r, y):
        u, v = y
        return [v, -(n - 1.0) / r * v + sgn * np.abs(u) ** (q - 1.0) * u]

    def blow(r, y):
        return np.abs(y[0]) - BLOWUP_LIMIT

    blow.terminal = True
    sol = solve_ivp(rhs, (r_start, r_end), [u_start, du_start], method="RK45",
                    rtol=rtol, atol=1e-14, events=blow, dense_output=True)
    if sol.t_events[0].size:
        raise BlowUp(float(sol.t_events[0][0]), f"|u| reached {BLOWUP_LIMIT:g}")
    if not sol.success:
        raise NoConvergence(f"radial integration failed: {sol.message}")
    lo, hi = min(r_start, r_end), max(r_start, r_end)
    r = np.geomspace(lo, hi, samples)
    y = sol.sol(r)
    grid = RadialGrid(n=n, r=r, law="logarithmic")
    return RadialProfile(grid=grid, u=y[0], du=y[1], kind=kind, q=q)


@dataclass
class DichotomyClass:
    verdict: str  # Strong | Weak | Regular | Unclassified
    amplitude: Optional[float] = None  # ell for Strong, c for Weak
    mass: Optional[float] = None  # C_n * c for Weak
    slope: float = 0.0
    fit_residual: float = 0.0


def dirac_normalization(n: int) -> float:
    """C_n with -Delta(|x|^{2-n}) = C_n delta_0 (log kernel in n=2)."""
    if n == 2:
        return 2.0 * np.pi
    return (n - 2.0) * sphere_area(n)


def classify_interior_singularity(profile: RadialProfile, q: float, n: int,
                                  threshold: float = 0.05) -> DichotomyClass:
    """Classify the r -> 0 behavior of a positive radial profile.

    Fits a log-log slope over the last decade of radii (>= 50 nodes) and
    matches it against the strong exponent -2/(q-1), the weak exponent
    -(n-2) (a u / ln(1/r) fit in n=2), or boundedness.
    """
    r, u = profile.grid.r, profile.u
    r0 = r[0]
    window = r <= 10.0 * r0
    if np.count_nonzero(window) < 50:
        window = np.zeros_like(r, dtype=bool)
        window[:50] = True
    rw, uw = r[window], u[window]
    if np.any(uw <= 0):
        return DichotomyClass("Unclassified", slope=np.nan, fit_residual=np.inf)

    logr, logu = np.log(rw), np.log(uw)
    slope, intercept = np.polyfit(logr, logu, 1)
    fit_res = float(np.max(np.abs(logu - (slope * logr + intercept))))

    strong_exp = -2.0 / (q - 1.0)
    if abs(slope - strong_exp) <= threshold * abs(strong_exp):
        amp = float(np.exp(np.mean(logu - strong_exp * logr)))
        return DichotomyClass("Strong", amplitude=amp, slope=float(slope),
                              fit_residual=fit_res)
    if n >= 3:
        weak_exp = -(n - 2.0)
        if abs(slope - weak_exp) <= threshold * abs(weak_exp):
            # amplitude by extrapolating r^{n-2} u = c + b r to r = 0, which
            # removes the subleading constant that biases a plain mean
            amp = uw * rw ** (n - 2.0)
            b, c = np.polyfit(rw, amp, 1)
            return DichotomyClass("Weak", amplitude=float(c),
                                  mass=dirac_normalization(n) * float(c),
                                  slope=float(slope), fit_residual=fit_res)
    else:
        # n=2: u ~ c ln(1/r) gives a slowly vanishing log-log slope
        lninv = np.log(1.0 / rw)
        c, b = np.polyfit(lninv, uw, 1)
        rel = float(np.max(np.abs(uw - (c * lninv + b))) / np.max(uw))
        if c > 0 and rel <= threshold and c * lninv[0] > 0.5 * np.abs(b):
            return DichotomyClass("Weak", amplitude=float(c),
                                  mass=dirac_normalization(2) * float(c),
                                  slope=float(slope), fit_residual=rel)
    # bounded profile: flat slope and small spread
    spread = float(np.max(uw) / max(np.min(uw), 1e-300))
    if abs(slope) <= threshold and spread <= 1.5:
        return DichotomyClass("Regular", amplitude=float(np.mean(uw)),
                              slope=float(slope), fit_residual=fit_res)
    return DichotomyClass("Unclassified", slope=float(slope), fit_residual=fit_res)


def profile_flux_mass(profile: RadialProfile, r_probe: Optional[float] = None) -> float:
    """Outward flux -|S^{n-1}| r^{n-1} u'(r) of the profile near the origin,
    plus the absorption collected between the innermost radius and the probe
    (so the value estimates the Dirac mass carried at 0)."""
    n = profile.n
    r, u, du = profile.grid.r, profile.u, profile.du
    if r_probe is None:
        r_probe = r[0]
    k = int(np.argmin(np.abs(r - r_probe)))
    flux = -sphere_area(n) * r[k] ** (n - 1) * du[k]
    sgn = _ode_sign(profile.kind)
    sel = slice(0, k + 1)
    absorb = sgn * np.trapezoid(
        np.abs(u[sel]) ** (profile.q - 1.0) * u[sel] * sphere_area(n) * r[sel] ** (n - 1),
        r[sel])
    return float(flux + absorb)


def reduced_energy(w, wp, n: int):
    """Conserved energy of the conformal radial flow in the variables
    w(t) = r^{(n-2)/2} u(r), t = ln(1/r):

        E = w'^2 - ((n-2)^2/4) w^2 + ((n-2)/n) |w|^{2n/(n-2)}
    """
    w = np.asarray(w, dtype=float)
    wp = np.asarray(wp, dtype=float)
    return wp ** 2 - ((n - 2.0) ** 2 / 4.0) * w ** 2 \
        + ((n - 2.0) / n) * np.abs(w) ** (2.0 * n / (n - 2.0))


def conformal_energy_drift(n: int = 3, w0: float = 0.5, wp0: float = 0.0,
                           t_end: float = 10.0, rtol: float = 1e-12) -> float:
    """Max relative drift of the reduced energy along a shot trajectory of the
    conformal source equation (q = (n+2)/(n-2)), t in [0, t_end]."""
    q = (n + 2.0) / (n - 2.0)
    a = (n - 2.0) ** 2 / 4.0

    def rhs(t, y):
        w, v = y
        return [v, a * w - np.abs(w) ** (q - 1.0) * w]

    sol = solve_ivp(rhs, (0.0, t_end), [w0, wp0], method="RK45", rtol=rtol,
                    atol=1e-14, dense_output=True)
    t = np.linspace(0.0, t_end, 2000)
    w, v = sol.sol(t)
    e = reduced_energy(w, v, n)
    return float(np.max(np.abs(e - e[0])) / (1.0 + abs(e[0])))


def cap_lambda(q: float, n: int) -> float:
    """Separable eigenvalue Lambda_{q,n} = (2/(q-1))(2q/(q-1) - n)."""
    if q <= 1:
        raise DomainError("need q > 1")
    return (2.0 / (q - 1.0)) * (2.0 * q / (q - 1.0) - n)


@dataclass
class CapProfile:
    theta: np.ndarray
    omega: np.ndarray
    domega: np.ndarray
    pole_value: float
    q: float
    n: int
    lam: float
    _dense: object = field(default=None, repr=False)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.interp(theta, self.theta, self.omega)


def _cap_shoot(q: float, n: int, lam: float, s: float, theta0: float = 1e-3):
    """Integrate the cap ODE from the series start at the pole; returns the
    solve_ivp solution with a zero-crossing event."""
    def rhs(th, y):
        w, v = y
        return [v, -(n - 2.0) / np.tan(th) * v - lam * w + np.abs(w) ** (q - 1.0) * w]

    def crossing(th, y):
        return y[0]

    crossing.terminal = True
    w0 = s - (lam * s - s ** q) * theta0 ** 2 / (2.0 * (n - 1.0))
    v0 = -(lam * s - s ** q) * theta0 / (n - 1.0)
    return solve_ivp(rhs, (theta0, np.pi / 2.0), [w0, v0], method="DOP853",
                     rtol=1e-13, atol=1e-16, max_step=0.01,
                     events=crossing, dense_output=True)


def cap_eigenproblem(q: float, n: int, tol: float = 1e-12) -> Optional[CapProfile]:
    """Positive profile omega on (0, pi/2] with omega'(pole)=0, omega(equator)=0
    solving  omega'' + (n-2) cot(theta) omega' + Lambda omega - omega^q = 0.

    Exists iff Lambda_{q,n} > n-1, i.e. q < (n+1)/(n-1); returns None otherwise.
    Found by shooting on the pole value s with bisection.
    """
    lam = cap_lambda(q, n)
    if lam <= n - 1.0:
        return None
    s_hi = lam ** (1.0 / (q - 1.0))  # flat stationary profile: never crosses

    def crossing_angle(s):
        sol = _cap_shoot(q, n, lam, s)
        if sol.t_events[0].size:
            return float(sol.t_events[0][0]), sol
        return np.inf, sol

    lo, hi = 1e-8 * s_hi, s_hi * (1.0 - 1e-12)
    ang_lo, _ = crossing_angle(lo)
    if ang_lo >= np.pi / 2.0:
        raise NoConvergence("cap shooting: lower bracket does not cross")
    best = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        ang, sol = crossing_angle(mid)
        if ang < np.pi / 2.0:
            lo = mid
        else:
            hi = mid
            best = sol
        if hi - lo <= tol * s_hi:
            break
    else:
        raise NoConvergence("cap shooting bisection did not converge")
    if best is None:
        raise NoConvergence("cap shooting found no non-crossing shot")
    theta = np.linspace(best.t[0], np.pi / 2.0, 4000)
    w, v = best.sol(theta)
    w[-1] = max(w[-1], 0.0)
    return CapProfile(theta=theta, omega=w, domega=v, pole_value=0.5 * (lo + hi),
                      q=q, n=n, lam=lam, _dense=best.sol)


def cap_residual(cp: CapProfile, theta_min: float = 0.05, h: float = 5e-4) -> float:
    """Normalized ODE residual of the cap profile by fourth-order finite
    differences on a uniform resampling (independent of the integrator's own
    right-hand side); the residual is scaled by the local equation magnitude
    1 + Lambda |w| + |w|^q.

    Collocation stays a fixed margin inside (0, pi/2): at the equator zero of
    omega the term |w|^{q-1} w is not C^4 for fractional q, which would cap
    the achievable finite-difference order there.
    """
    th = np.arange(theta_min, np.pi / 2.0 - theta_min, h)
    cols = [cp._dense(th + k * h)[0] for k in (-2, -1, 0, 1, 2)]
    w = cols[2]
    d1 = (cols[0] - 8 * cols[1] + 8 * cols[3] - cols[4]) / (12 * h)
    d2 = (-cols[0] + 16 * cols[1] - 30 * cols[2]
          + 16 * cols[3] - cols[4]) / (12 * h ** 2)
    res = d2 + (cp.n - 2.0) / np.tan(th) * d1 + cp.lam * w - np.abs(w) ** (cp.q - 1.0) * w
    scale = 1.0 + cp.lam * np.abs(w) + np.abs(w) ** cp.q
    return float(np.max(np.abs(res) / scale))


def boundary_separable_residual(cp: CapProfile, q: float, h: float = 1.0 / 512.0,
                                r_window=(0.2, 0.5)) -> float:
    """Normalized PDE residual of u = r^{-2/(q-1)} omega(theta) in
    -Delta u + |u|^{q-1} u on a fine half-plane annulus patch (n = 2).

    theta is the angle from the interior normal; omega continues oddly across
    the equator so the five-point stencil is defined near the boundary.
    """
    beta = -2.0 / (q - 1.0)
    dense = cp._dense
    s, lam, n = cp.pole_value, cp.lam, cp.n

    def omega_at(th):
        flat = th.ravel()
        w = dense(np.clip(flat, cp.theta[0], np.pi / 2.0))[0]
        # series continuation below the integrator's start angle
        small = flat < cp.theta[0]
        w[small] = s - (lam * s - s ** q) * flat[small] ** 2 / (2.0 * (n - 1.0))
        return w.reshape(th.shape)

    def field_at(x, y):
        r = np.hypot(x, y)
        th = np.arctan2(np.abs(x), y)  # 0 at the pole (interior normal)
        amp = np.where(th <= np.pi / 2.0, 1.0, -1.0)
        tha = np.where(th <= np.pi / 2.0, th, np.pi - th)
        return amp * r ** beta * omega_at(tha)

    xs = np.arange(-r_window[1], r_window[1] + h, h)
    ys = np.arange(h, r_window[1] + 2 * h, h)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    U = field_at(X, Y)
    lap = np.full_like(U, np.nan)
    lap[1:-1, 1:-1] = (U[2:, 1:-1] + U[:-2, 1:-1] + U[1:-1, 2:] + U[1:-1, :-2]
                       - 4.0 * U[1:-1, 1:-1]) / h ** 2
    R = np.hypot(X, Y)
    TH = np.arctan2(np.abs(X), Y)
    mask = ((R >= r_window[0]) & (R <= r_window[1]) & (TH <= np.pi / 2 - 0.1)
            & ~np.isnan(lap))
    res = -lap[mask] + np.abs(U[mask]) ** (q - 1.0) * U[mask]
    # normalize by the separable magnitude of the nonlinear term at the same
    # radius (pointwise u^q degenerates where omega vanishes at the equator)
    scale = R[mask] ** (beta * q) * (1.0 + s ** q)
    return float(np.max(np.abs(res) / scale))


def keller_osserman_constant(q: float, n: int = 1) -> float:
    """Barrier amplitude C with v = C rho^{-2/(q-1)} a supersolution of the
    absorption power equation near the boundary (v'' + ((n-1)/rho)v' <= v^q);
    the 1-D value already absorbs the drift term, whose sign only helps."""
    if q <= 1:
        raise DomainError("need q > 1")
    return (2.0 * (q + 1.0) / (q - 1.0) ** 2) ** (1.0 / (q - 1.0))


def keller_osserman_certificate(q: float, n: int, samples: int = 1000) -> float:
    """Max of v'' + ((n-1)/rho) v' - v^q over sampled rho in (0,1]
    (nonpositive certifies the barrier)."""
    C = keller_osserman_constant(q, n)
    beta = -2.0 / (q - 1.0)
    rho = np.linspace(1e-6, 1.0, samples)
    v = C * rho ** beta
    vpp = C * beta * (beta - 1.0) * rho ** (beta - 2.0)
    vp = C * beta * rho ** (beta - 1.0)
    res = (vpp + (n - 1.0) / rho * vp - v ** q) / (1.0 + v ** q)
    return float(np.max(res))
