"""Wronskian tables connecting origin and infinity branches.

All Wronskians use the sigma_3 bilinear form

    W(f, g) = f^t s3 g' - (f')^t s3 g = f1 g1' - f2 g2' - f1' g1 + f2' g2,

which is constant in r for two solutions at the same z; the relative drift
across a ladder of evaluation radii is the primary numerical-health signal.

Branches are stored in seed normalization (see ode_engine); canonical values
carry the seed scales.  The spectral weight kappa/(d+ d-) is scale-free, so
the distorted-basis assembly works directly on stored quantities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ode_engine as oe
from .dispersion import THRESHOLD, beta_decay, boundary_roots
from .profile import Potentials

BRANCH_MISMATCH_TOL = 1e-9


class ConnectionError_(RuntimeError):
    """Connection-coefficient computation failed (possible embedded eigenvalue)."""


def wronskian_states(u, v):
    """sigma_3 Wronskian of state arrays (..., 4) -> (...)."""
    u = np.asarray(u)
    v = np.asarray(v)
    return (
        u[..., 0] * v[..., 2]
        - u[..., 1] * v[..., 3]
        - u[..., 2] * v[..., 0]
        + u[..., 3] * v[..., 1]
    )


def wronskian(f: "oe.SolutionBranch", g: "oe.SolutionBranch", r_eval):
    """Mean Wronskian over the evaluation radii and its max relative drift.

    Canonical normalization (branch scales applied).
    """
    if not np.isclose(abs(f.z - g.z), 0.0, atol=1e-12):
        raise ValueError(f"branches at different z: {f.z} vs {g.z}")
    vals = []
    for r in np.atleast_1d(r_eval):
        vals.append(wronskian_states(f.at(r), g.at(r)))
    vals = np.array(vals) * (f.scale * g.scale)
    mean = complex(vals.mean())
    scale = max(abs(mean), 1e-300)
    drift = float(np.max(np.abs(vals - mean)) / scale)
    return mean, drift


# ---------------------------------------------------------------------------
# threshold fundamental system (closed forms)

_BETA0 = 3.0 / np.sqrt(2.0)


def threshold_vectors(sign: str):
    """The four closed-form asymptotic solutions f_{j,inf}^{+-} at the threshold.

    Returns callables r -> state (phi, psi, phi', psi').
    """
    s = 1.0 if sign in ("+", "plus") else -1.0
    sq17 = np.sqrt(17.0)

    def f1(r):
        r = np.asarray(r, dtype=float)
        one = np.ones_like(r)
        return np.stack([one, -s * 1j * sq17 * one, 0 * one, 0 * one], axis=-1)

    def f2(r):
        r = np.asarray(r, dtype=float)
        e = np.exp(-_BETA0 * r)
        return np.stack([e, s * 1j / sq17 * e, -_BETA0 * e, -s * 1j * _BETA0 / sq17 * e], axis=-1)

    def f3(r):
        r = np.asarray(r, dtype=float)
        one = np.ones_like(r)
        return np.stack([r, -s * 1j * sq17 * r, one, -s * 1j * sq17 * one], axis=-1)

    def f4(r):
        r = np.asarray(r, dtype=float)
        e = np.exp(_BETA0 * r)
        return np.stack([e, s * 1j / sq17 * e, _BETA0 * e, s * 1j * _BETA0 / sq17 * e], axis=-1)

    return f1, f2, f3, f4


def threshold_system(sign: str = "+"):
    """Threshold vectors plus the two nonzero Wronskian inverses d1, d2.

    d1 = 1/W(f1, f3) = 1/18 and d2 = 1/W(f2, f4) = 17 sqrt(2)/108 exactly.
    """
    fs = threshold_vectors(sign)
    d1 = 1.0 / 18.0
    d2 = 17.0 * np.sqrt(2.0) / 108.0
    return fs, d1, d2


# ---------------------------------------------------------------------------
# evaluation ladder


def eval_ladder(lam: float, r_max: float = oe.R_MAX_DEFAULT, n: int = 5):
    """Geometric ladder of Wronskian evaluation radii for spectral point lam.

    The top radius follows the paper's overlap window: O(1) near the
    threshold, shrinking like 1/sqrt(|xi|) at large energies, and capped by
    16/beta(lambda) to keep the e^{beta r} cancellation in the products of
    origin branches below ~7 digits.
    """
    xi = abs(abs(lam) - THRESHOLD)
    beta = beta_decay(lam)
    r_hi = min(0.8 * r_max, 16.0 / beta, max(1.0, 1.6 / np.sqrt(max(xi, 1e-12))))
    return np.geomspace(r_hi / 5.0, r_hi, n)


# ---------------------------------------------------------------------------
# per-lambda connection data


@dataclass
class ConnectionData:
    """Connection coefficients at one real spectral point (canonical values)."""

    lam: float
    omega_plus: np.ndarray  # (4, 4) W(Psi_i^+, phi_j); growing rows may be nan
    omega_minus: np.ndarray
    mu: np.ndarray  # (4, 4) W(Psi_i^+, Psi_j^+)
    lambda_table: np.ndarray  # (4, 4) W(phi_i, phi_j)
    dplus: complex = 0j
    dminus: complex = 0j
    kappa: complex = 0j
    weight: complex = 0j  # kappa / (d+ d-)
    drift: float = 0.0  # worst relative Wronskian drift across the ladder
    r_eval: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def Dplus(self):
        return self.omega_plus[:2, :2].T  # D^+_{ij} = omega_{ij}; rows i = Psi index

    @property
    def Dminus(self):
        return self.omega_minus[:2, :2].T

    def to_dict(self):
        def c2l(x):
            x = complex(x)
            return [x.real, x.imag]

        def m2l(m):
            return [[c2l(v) for v in row] for row in m]

        return {
            "lambda": self.lam,
            "omega_plus": m2l(self.omega_plus),
            "omega_minus": m2l(self.omega_minus),
            "mu": m2l(self.mu),
            "lambda_table": m2l(self.lambda_table),
            "dplus": c2l(self.dplus),
            "dminus": c2l(self.dminus),
            "kappa": c2l(self.kappa),
            "weight": c2l(self.weight),
            "drift": self.drift,
            "r_eval": list(self.r_eval),
        }


_D_FLOOR = 1e-10


def _infinity_set(lam, pots, record_r, r_max, lambda0, h_lin, with_psi4):
    """Inward branches (psi1+, psi1-, psi2[, psi4]) at boundary point lam > 0.

    All solved in one batch with closed-channel deflation; returns stored
    states (n_branch, n_rec, 4), accumulated deflation coefficients
    Gamma (2, n_rec) for psi1+-/psi1-, and the seed scales.
    """
    from .dispersion import boundary_roots

    pp = boundary_roots(lam, "+")
    pm = boundary_roots(lam, "-")
    xi = abs(lam) - THRESHOLD
    seed_type = "hankel" if xi > lambda0 else "exp"
    labels = [("psi1", pp), ("psi1", pm), ("psi2", pp)]
    if with_psi4:
        labels.append(("psi4", pp))
    nb = len(labels)
    y0 = np.empty((nb, 4), dtype=complex)
    scales = np.empty(nb, dtype=complex)
    for b, (kind, pt) in enumerate(labels):
        y0[b], scales[b], _, _ = oe.infinity_seed(kind, pt, r_max, seed_type)
    record_r = np.sort(np.asarray(record_r, dtype=float))
    path = oe.build_path(r_max, record_r[0], record_r, h_lin)
    rec = np.searchsorted(-path, -record_r)
    targets = [0, 1, 3][: (3 if with_psi4 else 2)]
    every = max(1, int((2.0 / beta_decay(lam)) / h_lin))
    defl = (np.array(targets), np.full(len(targets), 2), every)
    S, gam = oe.rk4_batch(path, y0, np.full(nb, complex(lam)), pots, rec,
                          deflate=defl)
    return S.transpose(1, 0, 2), gam.T, scales, seed_type


def connect_point(lam: float, pots: Potentials, r_max: float = oe.R_MAX_DEFAULT,
                  lambda0: float = oe.LAMBDA0_DEFAULT, h_lin: float = oe.H_LIN_DEFAULT,
                  full_tables: bool = True, reflect_negative: bool = True) -> ConnectionData:
    """Compute the connection data at one spectral point by direct solves.

    For lam < 0 with reflect_negative=True the data is produced from the
    +|lam| solves through the sigma_3 symmetry (the production path);
    reflect_negative=False forces independent integration (used by the
    parity acceptance suite).
    """
    if abs(lam) <= THRESHOLD + 1e-8:
        raise ValueError("lambda too close to the threshold")
    if lam < 0 and reflect_negative:
        return _reflect_connection(
            connect_point(-lam, pots, r_max, lambda0, h_lin, full_tables, True)
        )
    sgn = 1.0 if lam > 0 else -1.0

    ladder = eval_ladder(lam, r_max)
    S, gam, scales, seed_type = _infinity_set(abs(lam) * sgn, pots, ladder,
                                              r_max, lambda0, h_lin,
                                              with_psi4=full_tables)
    phi = {j: oe.solve_origin(lam, f"phi{j}", pots, ladder, h_lin=h_lin)
           for j in ((1, 2, 3, 4) if full_tables else (1, 2))}

    # Per-radius Wronskian rows.  The deflated Psi1^+- trajectories differ
    # from the exact seeded branches by the recorded Gamma * Psi2; the
    # restored rows are Wronskians of fixed true solutions (constant in r),
    # while d^+-, kappa are computed from the deflated rows, on which the
    # modulo-Psi2 freedom cancels algebraically and conditioning is best.
    def raw_row(b, j):
        return wronskian_states(S[b], phi[j].states)

    def restored_row(b, j):
        w = raw_row(b, j)
        return w + gam[b] * raw_row(2, j) if b in (0, 1) else w

    ncols = 4 if full_tables else 2
    om_p = np.full((4, 4), np.nan, dtype=complex)
    om_m = np.full((4, 4), np.nan, dtype=complex)
    drifts = []

    def stat(v):
        mean = v.mean()
        return complex(mean), float(np.max(np.abs(v - mean)) / max(abs(mean), 1e-300))

    # omega_plus rows follow the Psi^+ order (Psi1^+, Psi2, Psi3 = Psi1^-, Psi4);
    # the Psi^- table swaps the reflected partners and shares Psi2, Psi4.
    branch_of_row = {0: 0, 1: 2, 2: 1, 3: 3}
    for row in range(4):
        b = branch_of_row[row]
        if b == 3 and not full_tables:
            continue
        for j in range(1, ncols + 1):
            val, dr = stat(scales[b] * restored_row(b, j))
            om_p[row, j - 1] = val
            if row <= 1 and j <= 2:
                drifts.append(dr)
    om_m[0], om_m[1], om_m[2], om_m[3] = om_p[2], om_p[1], om_p[0], om_p[3]

    # d^+- and kappa from per-radius invariant combinations (deflated rows)
    w11p, w12p = raw_row(0, 1), raw_row(0, 2)
    w11m, w12m = raw_row(1, 1), raw_row(1, 2)
    w21, w22 = raw_row(2, 1), raw_row(2, 2)
    dp, ddr1 = stat(scales[0] * scales[2] * (w11p * w22 - w12p * w21))
    dm, ddr2 = stat(scales[1] * scales[2] * (w11m * w22 - w12m * w21))
    kap, kdr = stat(scales[1] * scales[0] * wronskian_states(S[1], S[0]))
    drifts += [ddr1, ddr2, kdr]

    mu = np.full((4, 4), np.nan, dtype=complex)
    if full_tables:
        rows = [(0, scales[0]), (2, scales[2]), (1, scales[1]), (3, scales[3])]
        top = -1
        for a in range(4):
            for b in range(4):
                ia, sa = rows[a]
                ib, sb = rows[b]
                mu[a, b] = sa * sb * wronskian_states(S[ia, top], S[ib, top])

    lam_table = np.full((4, 4), np.nan, dtype=complex)
    if full_tables:
        for i in range(1, 5):
            for j in range(1, 5):
                lam_table[i - 1, j - 1] = wronskian_states(
                    phi[i].states[0], phi[j].states[0]
                )

    scale_d = abs(scales[0] * scales[2]) * float(
        np.mean(np.abs(w11p * w22) + np.abs(w12p * w21))
    )
    if min(abs(dp), abs(dm)) < _D_FLOOR * max(scale_d, 1e-300):
        raise ConnectionError_(
            f"|d| below floor at lambda={lam}: possible embedded eigenvalue"
        )
    return ConnectionData(
        lam=lam, omega_plus=om_p, omega_minus=om_m, mu=mu,
        lambda_table=lam_table, dplus=dp, dminus=dm,
        kappa=kap, weight=complex(kap / (dp * dm)),
        drift=float(max(drifts)), r_eval=ladder,
    )


def _reflect_connection(c: ConnectionData) -> ConnectionData:
    """Connection data at -lambda from +lambda via the sigma_3 symmetries.

    omega_{i1}^-( -lam) = -omega_{i1}^+(lam) pattern (lem:parity-of-omega-j):
    plus/minus tables swap, phi_1/phi_3 columns flip sign; kappa is odd.
    """
    col_sign = np.array([-1.0, 1.0, -1.0, 1.0])
    omega_p = c.omega_minus * col_sign
    omega_m = c.omega_plus * col_sign
    dplus = omega_p[0, 0] * omega_p[1, 1] - omega_p[0, 1] * omega_p[1, 0]
    dminus = omega_m[0, 0] * omega_m[1, 1] - omega_m[0, 1] * omega_m[1, 0]
    return ConnectionData(
        lam=-c.lam, omega_plus=omega_p, omega_minus=omega_m,
        mu=c.mu.copy(), lambda_table=c.lambda_table.copy(),
        dplus=complex(dplus), dminus=complex(dminus), kappa=complex(-c.kappa),
        weight=complex(-c.kappa / (dplus * dminus)),
        drift=c.drift, r_eval=c.r_eval,
    )


def connection_matrix(lam: float, side: str, pots: Potentials, **kw):
    """2x2 matrix D^{side}(lambda) of omega entries and its determinant."""
    c = connect_point(lam, pots, full_tables=False, **kw)
    if side in ("+", "plus"):
        mat, det = c.Dplus, c.dplus
    else:
        mat, det = c.Dminus, c.dminus
    cond = (abs(mat[0, 0] * mat[1, 1]) + abs(mat[0, 1] * mat[1, 0])) / abs(det)
    return mat, det, cond, c.drift


def kappa(lam: float, pots: Potentials, **kw) -> complex:
    """Spectral density kappa(lambda) = W(Psi1^-, Psi1^+); odd in lambda."""
    c = connect_point(lam, pots, full_tables=False, **kw)
    return c.kappa


def mu_table(lam: float, pots: Potentials, **kw) -> np.ndarray:
    """The table mu_{ij} = W(Psi_i, Psi_j) with Psi3 realized via reflection."""
    c = connect_point(lam, pots, full_tables=True, **kw)
    return c.mu
