"""Solution branches of the first-order system equivalent to (iL - z)F = 0.

The 2-vector second-order system is

    phi'' = (3/(4 sinh^2 r) + 17/4 + 2 V2(r)) phi - 2iz psi
    psi'' = (3/(4 sinh^2 r) +  1/4 + 2 V1(r)) psi + 2iz phi.

Origin branches are seeded at r_init with the Frobenius data of the regular
(r^{3/2}) and singular (r^{-1/2}, with the resonant r^{3/2} log r term)
indicial exponents and integrated outward.  Infinity branches are seeded at
r_max with e^{ik_j r}(1, c_j) (or Hankel seeds h_+(k_j r)(1, c_j) in the
large-energy regime) and integrated inward; the decaying directions are
inward-dominant so this is the stability-preserving direction.

Integration uses a fixed-step classical RK4 vectorized over a batch of
spectral points: the coefficient functions depend only on r, so whole
lambda-sweeps integrate in one pass.  Recording radii are inserted as step
endpoints, so no dense-output interpolation is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import hankel1, hankel2

from .dispersion import SpectralPoint, boundary_roots, roots
from .profile import Potentials

# default seed radii / step sizes
R_INIT_DEFAULT = 1e-3
R_MAX_DEFAULT = 12.0
H_LIN_DEFAULT = 2e-3
GEO_KNEE = 0.4
GEO_RATIO = 1.01
LAMBDA0_DEFAULT = 10.0  # |xi| above which Hankel seeds are used

#: roundoff seeded into the inward-growing closed channel amplifies like
#: e^{beta (r_seed - r)}; keep the exponent below this budget.
BETA_DR_BUDGET = 40.0


def seed_radius(lam: float, r_eval_min: float, cap: float = R_MAX_DEFAULT) -> float:
    """Largest safe inward-seed radius for spectral point lam.

    Bounded so that beta(lam) * (r_seed - r_eval_min) <= BETA_DR_BUDGET;
    the price is a seed truncation error O(e^{-2 r_seed}).
    """
    from .dispersion import beta_decay

    return float(min(cap, r_eval_min + BETA_DR_BUDGET / beta_decay(lam)))


class SeedError(RuntimeError):
    """Asymptotic seed not valid at the requested radius."""


# ---------------------------------------------------------------------------
# right-hand side and coefficient helpers


def _coeffs(r, pots: Potentials):
    """(a_phi, a_psi) at radii r; centrifugal term included."""
    r = np.asarray(r, dtype=float)
    cf = 0.75 / np.sinh(r) ** 2
    return cf + 4.25 + 2.0 * pots.v2(r), cf + 0.25 + 2.0 * pots.v1(r)


def system_rhs(r, state, z, pots: Potentials):
    """First-order derivative of state = (phi, psi, phi', psi')."""
    if np.any(np.asarray(r) <= 0):
        raise ValueError("r must be positive")
    state = np.asarray(state, dtype=complex)
    a_phi, a_psi = _coeffs(r, pots)
    phi, psi, dphi, dpsi = state[..., 0], state[..., 1], state[..., 2], state[..., 3]
    tiz = 2j * z
    out = np.empty_like(state)
    out[..., 0] = dphi
    out[..., 1] = dpsi
    out[..., 2] = a_phi * phi - tiz * psi
    out[..., 3] = a_psi * psi + tiz * phi
    return out


def indicial_limits(pots: Potentials):
    """q_phi(0), q_psi(0): the regular parts of the coefficients at r = 0."""
    eps = 1e-8
    q_phi = 4.0 + 2.0 * float(np.asarray(pots.v2(eps)))
    q_psi = 0.0 + 2.0 * float(np.asarray(pots.v1(eps)))
    return q_phi, q_psi


# ---------------------------------------------------------------------------
# batched RK4


def _ascending_schedule(lo, hi, h_lin, knee=GEO_KNEE, ratio=GEO_RATIO):
    pts = [lo]
    r = lo
    top = min(knee, hi)
    while r < top:  # geometric steps below the knee resolve the 1/r^2 region
        r = min(r * ratio, top)
        pts.append(r)
    start = max(lo, top)
    if hi > start:
        n = max(2, int(np.ceil((hi - start) / h_lin)) + 1)
        pts.extend(np.linspace(start, hi, n)[1:])
    return np.array(pts)


def build_path(r_from, r_to, record_r, h_lin=H_LIN_DEFAULT):
    """Monotone step path from r_from to r_to with record_r as step endpoints."""
    lo, hi = (r_from, r_to) if r_from < r_to else (r_to, r_from)
    rec = np.asarray(record_r, dtype=float)
    if rec.size and (rec.min() < lo - 1e-12 or rec.max() > hi + 1e-12):
        raise ValueError("record radii outside the integration range")
    path = np.union1d(_ascending_schedule(lo, hi, h_lin), rec)
    if r_from > r_to:
        path = path[::-1]
    return path


def rk4_batch(path, y0, z_batch, pots: Potentials, record_idx, deflate=None):
    """Integrate the batch along path; return states at path[record_idx].

    y0: (m, 4) complex; z_batch: (m,) complex; returns (n_rec, m, 4).

    deflate = (targets, carriers, step_interval): after every step_interval
    steps, the state of column targets[j] is least-squares deflated against
    the state of column carriers[j].  Used for inward integration of the
    oscillatory branches, whose admixture of the inward-growing closed
    channel would otherwise amplify like e^{beta (r_seed - r)}; the deflated
    branch differs from the exact one by a multiple of the carrier solution,
    which every downstream Wronskian combination is invariant to.
    """
    path = np.asarray(path, dtype=float)
    mid = 0.5 * (path[:-1] + path[1:])
    a_phi_e, a_psi_e = _coeffs(path, pots)
    a_phi_m, a_psi_m = _coeffs(mid, pots)
    tiz = 2j * np.asarray(z_batch, dtype=complex)

    rec_at = np.zeros(len(path), dtype=np.int64) - 1
    for j, idx in enumerate(record_idx):
        rec_at[idx] = j
    out = np.empty((len(record_idx), *np.shape(y0)), dtype=complex)
    gammas = None
    if deflate is not None:
        targets, carriers, every = deflate
        targets = np.asarray(targets, dtype=np.int64)
        carriers = np.asarray(carriers, dtype=np.int64)
        # accumulated deflation coefficients at each record point: the exact
        # (undeflated) target solution is defl(r) + Gamma(r) * carrier(r)
        gam_cum = np.zeros(len(targets), dtype=complex)
        gammas = np.zeros((len(record_idx), len(targets)), dtype=complex)

    phi = np.array(y0[:, 0], dtype=complex)
    psi = np.array(y0[:, 1], dtype=complex)
    dphi = np.array(y0[:, 2], dtype=complex)
    dpsi = np.array(y0[:, 3], dtype=complex)

    def _store(j):
        out[j, :, 0] = phi
        out[j, :, 1] = psi
        out[j, :, 2] = dphi
        out[j, :, 3] = dpsi

    if rec_at[0] >= 0:
        _store(rec_at[0])
    for i in range(len(path) - 1):
        h = path[i + 1] - path[i]
        ae1, be1 = a_phi_e[i], a_psi_e[i]
        am, bm = a_phi_m[i], a_psi_m[i]
        ae2, be2 = a_phi_e[i + 1], a_psi_e[i + 1]
        # k1
        k1p, k1q = dphi, dpsi
        k1dp = ae1 * phi - tiz * psi
        k1dq = be1 * psi + tiz * phi
        # k2
        p = phi + 0.5 * h * k1p
        q = psi + 0.5 * h * k1q
        dp = dphi + 0.5 * h * k1dp
        dq = dpsi + 0.5 * h * k1dq
        k2p, k2q = dp, dq
        k2dp = am * p - tiz * q
        k2dq = bm * q + tiz * p
        # k3
        p = phi + 0.5 * h * k2p
        q = psi + 0.5 * h * k2q
        dp = dphi + 0.5 * h * k2dp
        dq = dpsi + 0.5 * h * k2dq
        k3p, k3q = dp, dq
        k3dp = am * p - tiz * q
        k3dq = bm * q + tiz * p
        # k4
        p = phi + h * k3p
        q = psi + h * k3q
        dp = dphi + h * k3dp
        dq = dpsi + h * k3dq
        k4p, k4q = dp, dq
        k4dp = ae2 * p - tiz * q
        k4dq = be2 * q + tiz * p
        c = h / 6.0
        phi = phi + c * (k1p + 2.0 * (k2p + k3p) + k4p)
        psi = psi + c * (k1q + 2.0 * (k2q + k3q) + k4q)
        dphi = dphi + c * (k1dp + 2.0 * (k2dp + k3dp) + k4dp)
        dpsi = dpsi + c * (k1dq + 2.0 * (k2dq + k3dq) + k4dq)
        if deflate is not None and (i + 1) % every == 0:
            yc = np.stack([phi[carriers], psi[carriers],
                           dphi[carriers], dpsi[carriers]])
            yt = np.stack([phi[targets], psi[targets],
                           dphi[targets], dpsi[targets]])
            gam = np.sum(np.conj(yc) * yt, axis=0) / np.sum(np.abs(yc) ** 2, axis=0)
            phi[targets] -= gam * yc[0]
            psi[targets] -= gam * yc[1]
            dphi[targets] -= gam * yc[2]
            dpsi[targets] -= gam * yc[3]
            gam_cum += gam
        j = rec_at[i + 1]
        if j >= 0:
            _store(j)
            if gammas is not None:
                gammas[j] = gam_cum
    return (out, gammas) if deflate is not None else out


# ---------------------------------------------------------------------------
# seeds


def origin_seed(kind, z, r0, pots: Potentials):
    """Frobenius seed state at r0 for the four origin branches.

    kind: 'phi1' (0, r^{3/2}), 'phi2' (r^{3/2}, r^{3/2}),
          'phi3' (r^{-1/2}, r^{-1/2}), 'phi4' (r^{-1/2}, 0).
    """
    q_phi, q_psi = indicial_limits(pots)
    tiz = 2j * z
    if kind in ("phi1", "phi2"):
        A, B = (0.0, 1.0) if kind == "phi1" else (1.0, 1.0)
        A2 = (q_phi * A - tiz * B) / 8.0
        B2 = (q_psi * B + tiz * A) / 8.0
        phi = A * r0**1.5 + A2 * r0**3.5
        psi = B * r0**1.5 + B2 * r0**3.5
        dphi = 1.5 * A * r0**0.5 + 3.5 * A2 * r0**2.5
        dpsi = 1.5 * B * r0**0.5 + 3.5 * B2 * r0**2.5
    elif kind in ("phi3", "phi4"):
        C, D = (1.0, 1.0) if kind == "phi3" else (1.0, 0.0)
        # exponent resonance: r^{-1/2} branch carries an r^{3/2} log r term
        aL = (q_phi * C - tiz * D) / 2.0
        bL = (q_psi * D + tiz * C) / 2.0
        lg = np.log(r0)
        phi = C * r0**-0.5 + aL * r0**1.5 * lg
        psi = D * r0**-0.5 + bL * r0**1.5 * lg
        dphi = -0.5 * C * r0**-1.5 + aL * (1.5 * r0**0.5 * lg + r0**0.5)
        dpsi = -0.5 * D * r0**-1.5 + bL * (1.5 * r0**0.5 * lg + r0**0.5)
    else:
        raise ValueError(f"unknown origin branch {kind!r}")
    return np.array([phi, psi, dphi, dpsi], dtype=complex)


def infinity_seed(kind, pt: SpectralPoint, r1, seed_type="exp"):
    """Seed state at r1 for the infinity branches, in stored normalization.

    Stored branch = canonical / scale with scale = e^{ik r1} (exp seeds) or
    h_+(k r1) (Hankel seeds), so the stored state at r1 is O(1).
    Returns (state, scale, k, c).
    """
    idx = {"psi1": 0, "psi2": 1, "psi3": 2, "psi4": 3}[kind]
    k = pt.k[idx]
    c = pt.c[idx % 2]
    if seed_type == "exp":
        state = np.array([1.0, c, 1j * k, 1j * k * c], dtype=complex)
        scale = np.exp(1j * k * r1)
    elif seed_type == "hankel":
        # psi1/psi2 ride h_+(k_j r); psi3/psi4 ride h_-(k_j r) at the same k_j
        kb = pt.k[idx % 2]
        x = kb * r1
        if abs(x) < 1.0:
            raise SeedError(f"|k r_max| = {abs(x):.3g} < 1: Hankel seed radius too small")
        hp, hm, dhp, dhm = hankel_pair(x)
        h, dh = (hp, dhp) if idx < 2 else (hm, dhm)
        ldh = kb * dh / h
        state = np.array([1.0, c, ldh, ldh * c], dtype=complex)
        scale = h
    else:
        raise ValueError(f"unknown seed type {seed_type!r}")
    return state, complex(scale), complex(k), complex(c)


# ---------------------------------------------------------------------------
# Hankel and free scalar solutions

_HP_PHASE = np.sqrt(np.pi / 2.0) * np.exp(3j * np.pi / 4.0)
_HM_PHASE = np.sqrt(np.pi / 2.0) * np.exp(-3j * np.pi / 4.0)


def hankel_pair(x):
    """Jost solutions (h+, h-, h+', h-') of -h'' + 3/(4x^2) h = h.

    Normalized so h+(x) ~ e^{ix}, h-(x) ~ e^{-ix} as x -> +inf; the Wronskian
    h+ h-' - h+' h- is -2i.  Valid in the closed upper half-plane.
    """
    x = np.asarray(x, dtype=complex)
    sq = np.sqrt(x)
    h1p, h1m = hankel1(1, x), hankel2(1, x)
    h0p, h0m = hankel1(0, x), hankel2(0, x)
    hp = _HP_PHASE * sq * h1p
    hm = _HM_PHASE * sq * h1m
    # d/dx [sqrt(x) H_1(x)] = sqrt(x) H_0(x) - H_1(x)/(2 sqrt(x))
    dhp = _HP_PHASE * (sq * h0p - h1p / (2.0 * sq))
    dhm = _HM_PHASE * (sq * h0m - h1m / (2.0 * sq))
    return hp, hm, dhp, dhm


#: c_phi fixes |mu0_13| / sqrt|z| -> 1 at large |z| (Euclidean Bessel Wronskian)
FREE_PHI0_NORM = np.sqrt(np.pi) / 8.0


def _rk4_scalar(path, y0, kk, pots: Potentials):
    """Scalar RK4 for -u'' + (3/4) sinh^{-2} u = k^2 u sampled along path."""
    path = np.asarray(path, dtype=float)
    mid = 0.5 * (path[:-1] + path[1:])
    qe = 0.75 / np.sinh(path) ** 2 - kk
    qm = 0.75 / np.sinh(mid) ** 2 - kk
    u, du = complex(y0[0]), complex(y0[1])
    out = np.empty((len(path), 2), dtype=complex)
    out[0] = (u, du)
    for i in range(len(path) - 1):
        h = path[i + 1] - path[i]
        k1u, k1d = du, qe[i] * u
        k2u = du + 0.5 * h * k1d
        k2d = qm[i] * (u + 0.5 * h * k1u)
        k3u = du + 0.5 * h * k2d
        k3d = qm[i] * (u + 0.5 * h * k2u)
        k4u = du + h * k3d
        k4d = qe[i + 1] * (u + h * k3u)
        u = u + h / 6.0 * (k1u + 2 * (k2u + k3u) + k4u)
        du = du + h / 6.0 * (k1d + 2 * (k2d + k3d) + k4d)
        out[i + 1] = (u, du)
    return out


def free_pair(k, r_grid, r_init=R_INIT_DEFAULT, r_max=None, h_lin=H_LIN_DEFAULT):
    """Scalar free solutions (phi0, psi0) of -u'' + (3/4) sinh^{-2} u = k^2 u.

    phi0 = (sqrt(pi)/8) k^{3/2} u with u ~ r^{3/2} at 0 (regular branch);
    psi0 ~ e^{ikr} at infinity (outgoing branch).  Sampled on r_grid; returns
    (phi0, dphi0, psi0, dpsi0).
    """
    k = complex(k)
    if k == 0:
        raise ValueError("k must be nonzero")
    r_grid = np.asarray(r_grid, dtype=float)
    if r_max is None:
        r_max = max(R_MAX_DEFAULT, r_grid.max())
    kk = k * k
    pots = Potentials.zero()

    # regular branch, outward
    path = build_path(min(r_init, r_grid.min()), r_grid.max(), r_grid, h_lin)
    idx = np.searchsorted(path, r_grid)
    r0 = path[0]
    c2 = (-0.25 - kk) / 8.0
    y0 = (r0**1.5 * (1.0 + c2 * r0**2), 1.5 * r0**0.5 + 3.5 * c2 * r0**2.5)
    reg = _rk4_scalar(path, y0, kk, pots)[idx]
    norm = FREE_PHI0_NORM * k**1.5
    phi0, dphi0 = norm * reg[:, 0], norm * reg[:, 1]

    # outgoing branch, inward, stored relative to e^{ik r_max}
    path_in = build_path(r_max, r_grid.min(), r_grid, h_lin)
    idx_in = np.searchsorted(-path_in, -r_grid)
    outgo = _rk4_scalar(path_in, (1.0, 1j * k), kk, pots)[idx_in]
    scale = np.exp(1j * k * r_max)
    psi0, dpsi0 = scale * outgo[:, 0], scale * outgo[:, 1]
    return phi0, dphi0, psi0, dpsi0


# ---------------------------------------------------------------------------
# single-point branch API


@dataclass
class SolutionBranch:
    """One solution branch sampled on a radial set, in stored normalization.

    ``scale`` maps stored to canonical values: canonical = scale * states.
    For origin branches scale = 1; for infinity branches scale is the seed
    function at r_max (e^{ik r_max} or h_+(k r_max)).
    """

    label: str
    side: str  # 'origin' | 'infinity'
    halfplane: str  # 'plus' | 'minus' | 'interior'
    z: complex
    r: np.ndarray
    states: np.ndarray  # (n, 4) complex
    scale: complex = 1.0 + 0j
    k_seed: complex = field(default=0j)
    seed_type: str = "series"

    def at(self, r_val):
        i = int(np.argmin(np.abs(self.r - r_val)))
        if not np.isclose(self.r[i], r_val, rtol=1e-9, atol=1e-12):
            raise KeyError(f"radius {r_val} not recorded on this branch")
        return self.states[i]

    def values(self):
        return self.states[:, :2]


def solve_origin(z, label, pots: Potentials, record_r, r_init=None,
                 h_lin=H_LIN_DEFAULT) -> SolutionBranch:
    """Integrate one origin branch outward, sampling at record_r."""
    record_r = np.sort(np.atleast_1d(np.asarray(record_r, dtype=float)))
    if r_init is None:
        r_init = min(R_INIT_DEFAULT, 0.1 / np.sqrt(1.0 + abs(z)), record_r[0])
    path = build_path(r_init, record_r[-1], record_r, h_lin)
    idx = np.searchsorted(path, record_r)
    y0 = origin_seed(label, z, path[0], pots)[None, :]
    states = rk4_batch(path, y0, np.array([z]), pots, idx)[:, 0, :]
    return SolutionBranch(label=label, side="origin", halfplane="interior",
                          z=complex(z), r=record_r, states=states)


def solve_infinity(z, label, side, pots: Potentials, record_r, r_max=R_MAX_DEFAULT,
                   seed_type="auto", lambda0=LAMBDA0_DEFAULT,
                   h_lin=H_LIN_DEFAULT) -> SolutionBranch:
    """Integrate one infinity branch inward from r_max, sampling at record_r.

    For real z on the spectrum, ``side`` selects the lambda +- i0 boundary
    roots; for interior z (Im z != 0) the analytic roots are used and the
    side tag is informational.
    """
    record_r = np.sort(np.atleast_1d(np.asarray(record_r, dtype=float)))
    zc = complex(z)
    if zc.imag == 0.0:
        pt = boundary_roots(zc.real, side)
    else:
        pt = roots(zc)
    from .dispersion import THRESHOLD

    xi = abs(abs(zc.real) - THRESHOLD) + abs(zc.imag)
    if seed_type == "auto":
        seed_type = "hankel" if xi > lambda0 else "exp"
    y0, scale, k, _ = infinity_seed(label, pt, r_max, seed_type)
    if record_r[-1] > r_max:
        raise SeedError("record radius beyond the seed radius r_max")
    path = build_path(r_max, record_r[0], record_r, h_lin)
    idx = np.searchsorted(-path, -record_r)  # positions of record_r in the descending path
    states = rk4_batch(path, y0[None, :], np.array([zc]), pots, idx)[:, 0, :]
    return SolutionBranch(label=label, side="infinity", halfplane=pt.side,
                          z=zc, r=record_r, states=states, scale=scale,
                          k_seed=k, seed_type=seed_type)


def branch_residual(branch: SolutionBranch, pots: Potentials):
    """Max relative residual of the 2nd-order system from the stored samples.

    Uses np.gradient of the stored first derivatives; needs a reasonably
    dense recording to be meaningful.
    """
    r = branch.r
    s = branch.states
    a_phi, a_psi = _coeffs(r, pots)
    tiz = 2j * branch.z
    res1 = np.gradient(s[:, 2], r) - (a_phi * s[:, 0] - tiz * s[:, 1])
    res2 = np.gradient(s[:, 3], r) - (a_psi * s[:, 1] + tiz * s[:, 0])
    scale = np.maximum(np.abs(a_phi * s[:, 0]) + np.abs(tiz * s[:, 1]), 1e-300)
    scale2 = np.maximum(np.abs(a_psi * s[:, 1]) + np.abs(tiz * s[:, 0]), 1e-300)
    inner = slice(2, -2) if len(r) > 8 else slice(None)
    return max(
        float(np.max(np.abs(res1[inner]) / scale[inner])),
        float(np.max(np.abs(res2[inner]) / scale2[inner])),
    )
