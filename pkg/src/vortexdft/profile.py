"""Degree-n vortex profile on the hyperbolic plane of curvature -1/2.

The profile rho_n solves

    (1/2) rho'' + (1/2) coth(r) rho' - n^2/(2 sinh^2 r) rho + rho - rho^3 = 0,
    rho(0) = 0,  rho(inf) = 1,

and is found by a shooting argument in the leading coefficient alpha of the
small-r series rho ~ alpha r^n.  Sub-critical alpha oscillate, super-critical
alpha blow up; bisection pins the separatrix a = alpha*.  Beyond a crossover
radius the sampled profile is continued with the two-term far-field
asymptotic 1 - 2 n^2 e^{-2r}, because the separatrix is a codimension-one
object and forward integration eventually drifts into the blow-up regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline


class ProfileError(RuntimeError):
    """Shooting or profile-invariant failure."""


@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing radial nodes on [r_min, r_max], r_min > 0."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("grid needs at least two nodes")
        if nodes[0] <= 0:
            raise ValueError("r_min must be positive")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @classmethod
    def uniform(cls, r_min: float, r_max: float, n: int) -> "RadialGrid":
        return cls(np.linspace(r_min, r_max, n))

    @classmethod
    def graded(cls, r_min: float, r_max: float, n: int, r_knee: float = 0.5) -> "RadialGrid":
        """Geometric spacing below r_knee, uniform above; good for r^{+-1/2} behavior."""
        n_geo = max(8, n // 8)
        geo = np.geomspace(r_min, r_knee, n_geo, endpoint=False)
        lin = np.linspace(r_knee, r_max, n - n_geo)
        return cls(np.concatenate([geo, lin]))


def vortex_rhs(r: float, u: float, du: float, n: int) -> float:
    """Second derivative u'' from the profile ODE (rearranged).

    u'' = -coth(r) u' + (n^2/sinh^2 r) u - 2u + 2u^3
    """
    if r <= 0:
        raise ValueError("r must be positive")
    sh = np.sinh(r)
    return -np.cosh(r) / sh * du + (n * n) / (sh * sh) * u - 2.0 * u + 2.0 * u**3


def series_init(alpha: float, n: int, r: float) -> tuple[float, float]:
    """Two-term small-r series v = alpha r^n + beta r^{n+2} and its derivative.

    beta = -alpha (n^2 + n + 6) / (12 (n+1)); the dropped term is O(r^{n+4}).
    """
    beta = -alpha * (n * n + n + 6.0) / (12.0 * (n + 1.0))
    v = alpha * r**n + beta * r ** (n + 2)
    dv = n * alpha * r ** (n - 1) + (n + 2) * beta * r ** (n + 1)
    return v, dv


_BLOWUP_MARGIN = 1e-6


def _shoot_ivp(alpha, n, r_cap, r_init=1e-6, rtol=1e-12, atol=1e-14, dense=False):
    v0, dv0 = series_init(alpha, n, r_init)

    def rhs(r, y):
        return [y[1], vortex_rhs(r, y[0], y[1], n)]

    def ev_turn(r, y):  # v' = 0 before reaching 1 -> oscillation
        return y[1]

    ev_turn.terminal = True
    ev_turn.direction = -1

    def ev_blow(r, y):  # v > 1 + margin while still rising -> blow-up
        return y[0] - (1.0 + _BLOWUP_MARGIN)

    ev_blow.terminal = True
    ev_blow.direction = 1

    sol = solve_ivp(
        rhs,
        (r_init, r_cap),
        [v0, dv0],
        method="DOP853",
        rtol=rtol,
        atol=atol,
        events=(ev_turn, ev_blow),
        dense_output=dense,
    )
    return sol


def shoot(alpha: float, n: int = 1, r_cap: float = 14.0) -> str:
    """Classify the shot at parameter alpha.

    Returns 'oscillates' (set A: v' vanishes with v < 1), 'blows_up'
    (set B: v crosses 1 while rising) or 'monotone_bounded' (set C).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if r_cap <= np.arcsinh(n / np.sqrt(2.0)):
        raise ValueError("r_cap too small for the shooting dichotomy")
    sol = _shoot_ivp(alpha, n, r_cap)
    if sol.status == 1:  # an event fired
        if sol.t_events[1].size:
            return "blows_up"
        if sol.t_events[0].size:
            # v' = 0 hit; blow-up event has priority if v already exceeded 1
            return "oscillates"
    if sol.status == 0:
        return "monotone_bounded"
    # integrator failure: only acceptable deep in the blow-up regime
    if sol.y[0, -1] > 1.0 + _BLOWUP_MARGIN:
        return "blows_up"
    raise ProfileError(f"integrator failed at r={sol.t[-1]:.4g} for alpha={alpha}")


def find_alpha(n: int = 1, tol: float = 1e-12, r_cap: float = 14.0,
               bracket: tuple[float, float] | None = None) -> float:
    """Bisection on the oscillation/blow-up boundary; returns the separatrix alpha*."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if bracket is None:
        lo = hi = None
        scan = []
        for a in np.geomspace(1e-3, 1e3, 25):
            cls = shoot(a, n, r_cap)
            scan.append((a, cls))
            if cls == "oscillates":
                lo = a
            elif lo is not None:
                hi = a
                break
        if lo is None or hi is None:
            raise ProfileError(f"no oscillation/blow-up bracket found; scan: {scan}")
    else:
        lo, hi = bracket
        if shoot(lo, n, r_cap) != "oscillates" or shoot(hi, n, r_cap) == "oscillates":
            raise ProfileError("supplied bracket does not straddle the separatrix")
    # bisect to the requested tolerance (floored near machine resolution)
    tol_eff = max(tol, 4.0 * np.finfo(float).eps * hi)
    while hi - lo > tol_eff:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if shoot(mid, n, r_cap) == "oscillates":
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class VortexProfile:
    """Sampled vortex profile with its shooting parameter and degree."""

    n: int
    alpha_star: float
    grid: RadialGrid
    rho: np.ndarray
    rho_prime: np.ndarray
    r_switch: float  # radius beyond which the far-field asymptotic is used

    def far_field(self, r):
        r = np.asarray(r, dtype=float)
        return 1.0 - 2.0 * self.n**2 * np.exp(-2.0 * r)

    def spline(self) -> CubicSpline:
        return CubicSpline(self.grid.nodes, self.rho)

    def residual(self) -> np.ndarray:
        """ODE residual from the stored samples.

        rho'' is obtained as the 5-point finite-difference derivative of the
        stored rho' (O(h^4) on nonuniform stencils), which also cross-checks
        the consistency of the (rho, rho') pair.  The first/last two nodes
        carry one-sided stencils and are excluded from interior statistics.
        """
        r = self.grid.nodes
        rho = self.rho
        d2 = fd_derivative(r, self.rho_prime)
        sh = np.sinh(r)
        return (
            0.5 * d2
            + 0.5 * np.cosh(r) / sh * self.rho_prime
            - self.n**2 / (2.0 * sh * sh) * rho
            + rho
            - rho**3
        )


def fd_derivative(x, y):
    """First derivative on a (possibly nonuniform) grid via local quartic fits."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    n = len(x)
    d1 = np.empty(n, dtype=y.dtype)
    target = np.array([0.0, 1.0, 0.0, 0.0, 0.0])
    for i in range(n):
        j0 = min(max(i - 2, 0), n - 5)
        xs = x[j0 : j0 + 5] - x[i]
        V = np.vander(xs, 5, increasing=True)
        w = np.linalg.solve(V.T, target)
        d1[i] = w @ y[j0 : j0 + 5]
    return d1


def build_profile(n: int = 1, grid: RadialGrid | None = None,
                  alpha_star: float | None = None,
                  r_switch_frac: float = 0.75) -> VortexProfile:
    """Integrate the separatrix and sample it on the grid.

    The integration runs from a series start to r_switch = r_switch_frac * r_max
    with the machine-precision alpha*, then hands off to the far-field
    asymptotic 1 - 2 n^2 e^{-2r}.  Monotonicity and 0 < rho < 1 are enforced;
    if forward drift violates them before r_switch, the handoff retreats.
    """
    if grid is None:
        grid = RadialGrid.graded(1e-3, 12.0, 4096)
    r_cap = max(14.0, grid.r_max + 2.0)
    if alpha_star is None:
        alpha_star = find_alpha(n, tol=1e-15, r_cap=r_cap)

    r_switch = r_switch_frac * grid.r_max
    nodes = grid.nodes
    inner = nodes[nodes <= r_switch]
    sol = _shoot_ivp(alpha_star, n, max(r_switch, inner[-1]), dense=True)
    if sol.status == -1 or sol.t[-1] < inner[-1]:
        raise ProfileError(f"profile integration stopped early at r={sol.t[-1]:.4g}")

    rho = np.empty_like(nodes)
    drho = np.empty_like(nodes)
    ni = len(inner)
    vals = sol.sol(inner)
    rho[:ni], drho[:ni] = vals[0], vals[1]
    outer = nodes[ni:]
    rho[ni:] = 1.0 - 2.0 * n**2 * np.exp(-2.0 * outer)
    drho[ni:] = 4.0 * n**2 * np.exp(-2.0 * outer)

    # blend the handoff over one unit so the sampled pair stays C^2-smooth
    blend = (nodes >= r_switch - 1.0) & (nodes <= r_switch)
    if np.any(blend):
        rb = nodes[blend]
        s = rb - (r_switch - 1.0)
        mix = 10.0 * s**3 - 15.0 * s**4 + 6.0 * s**5
        dmix = 30.0 * s**2 - 60.0 * s**3 + 30.0 * s**4
        vb = sol.sol(rb)
        asym = 1.0 - 2.0 * n**2 * np.exp(-2.0 * rb)
        dasym = 4.0 * n**2 * np.exp(-2.0 * rb)
        rho[blend] = (1.0 - mix) * vb[0] + mix * asym
        drho[blend] = (1.0 - mix) * vb[1] + mix * dasym + dmix * (asym - vb[0])

    bad = np.where((drho <= 0) | (rho <= 0) | (rho >= 1))[0]
    if bad.size:
        i = int(bad[0])
        if nodes[i] > 0.5 * grid.r_max:
            # forward drift near the handoff: retreat the switch and refill
            ni2 = int(np.searchsorted(nodes, nodes[i] - 1.0))
            outer2 = nodes[ni2:]
            rho[ni2:] = 1.0 - 2.0 * n**2 * np.exp(-2.0 * outer2)
            drho[ni2:] = 4.0 * n**2 * np.exp(-2.0 * outer2)
            r_switch = float(nodes[ni2 - 1])
            bad = np.where((drho <= 0) | (rho <= 0) | (rho >= 1))[0]
        if bad.size:
            i = int(bad[0])
            raise ProfileError(
                f"profile invariant violated at node r={nodes[i]:.6g} "
                f"(rho={rho[i]:.6g}, rho'={drho[i]:.6g})"
            )
    return VortexProfile(n=n, alpha_star=float(alpha_star), grid=grid,
                         rho=rho, rho_prime=drho, r_switch=float(min(r_switch, grid.r_max)))


# ---------------------------------------------------------------------------
# derived quantities: rho~ = sinh^{1/2} rho, its partner g, and the potentials


def aux_solutions(profile: VortexProfile):
    """(rho~, g) on the grid: the two zero-energy solutions of L1.

    rho~ = sinh^{1/2}(r) rho(r); g = 2 rho~ int_r^inf rho~^{-2} ds.  The tail
    integral I(r) solves I' = -rho~^{-2} and is integrated inward from
    I(r_max) = 2 e^{-R} + (2(1+4n^2)/3) e^{-3R} + O(e^{-5R}) (from
    rho~^{-2} = 2 e^{-s}(1 + (1+4n^2) e^{-2s} + ...)).
    """
    r = profile.grid.nodes
    sh = np.sinh(r)
    rho_t = np.sqrt(sh) * profile.rho
    drho_t = 0.5 * np.cosh(r) / np.sqrt(sh) * profile.rho + np.sqrt(sh) * profile.rho_prime

    pots = Potentials(profile)
    n = profile.n

    def inv2(rr):
        return 1.0 / (np.sinh(rr) * pots.rho(rr) ** 2)

    R = r[-1]
    tail = 2.0 * np.exp(-R) + (2.0 * (1.0 + 4.0 * n * n) / 3.0) * np.exp(-3.0 * R)
    sol = solve_ivp(
        lambda rr, y: [-inv2(rr)],
        (R, r[0]),
        [tail],
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
        dense_output=True,
    )
    if sol.status != 0:
        raise ProfileError("tail integral for g failed")
    integral = sol.sol(r)[0]
    integral[-1] = tail
    g = 2.0 * rho_t * integral
    dg = 2.0 * drho_t * integral - 2.0 / rho_t
    return rho_t, drho_t, g, dg


class Potentials:
    """GP potentials V1 = rho^2 - 1, V2 = 3(rho^2 - 1) with off-grid evaluation.

    Below the grid the small-r series of rho is used; above r_switch the
    far-field asymptotic.  ``zero()`` gives the free problem (V1 = V2 = 0).
    """

    def __init__(self, profile: VortexProfile | None):
        self.profile = profile
        if profile is not None:
            self._spline = CubicSpline(profile.grid.nodes, profile.rho)
            self._r_min = profile.grid.r_min
            self._r_max = profile.grid.r_max
            self._beta = -profile.alpha_star * (
                profile.n**2 + profile.n + 6.0
            ) / (12.0 * (profile.n + 1.0))

    @classmethod
    def zero(cls) -> "Potentials":
        return cls(None)

    @property
    def is_free(self) -> bool:
        return self.profile is None

    def rho(self, r):
        p = self.profile
        scalar = np.isscalar(r) or np.ndim(r) == 0
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        lo = r < self._r_min
        hi = r > self._r_max
        mid = ~(lo | hi)
        if np.any(mid):
            out[mid] = self._spline(r[mid])
        if np.any(lo):
            out[lo] = p.alpha_star * r[lo] ** p.n + self._beta * r[lo] ** (p.n + 2)
        if np.any(hi):
            out[hi] = 1.0 - 2.0 * p.n**2 * np.exp(-2.0 * r[hi])
        return out[0] if scalar else out

    def v1(self, r):
        if self.is_free:
            return np.zeros_like(np.asarray(r, dtype=float))
        return self.rho(r) ** 2 - 1.0

    def v2(self, r):
        if self.is_free:
            return np.zeros_like(np.asarray(r, dtype=float))
        return 3.0 * (self.rho(r) ** 2 - 1.0)

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        if self.is_free:
            h.update(b"free")
        else:
            h.update(np.ascontiguousarray(self.profile.grid.nodes).tobytes())
            h.update(np.ascontiguousarray(self.profile.rho).tobytes())
        return h.hexdigest()[:16]
