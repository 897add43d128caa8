"""Quartic dispersion relation of the far-field system and its branch-tracked roots.

The fourth-order far-field equation factors through P(k, z) = k^4/4 + 9k^2/8
+ 17/64 - z^2.  The four roots k_1..k_4 are labelled by analytic continuation
from the spectral gap (-sqrt(17)/8, sqrt(17)/8), where they are explicit nested
square roots.  Generic quartic solvers permute the roots across the z-plane,
so the analytic labels are evaluated from those closed forms directly, with
the branch cuts of each factor managed by principal square roots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Spectral threshold: edge of the essential spectrum of the linearized operator.
THRESHOLD = np.sqrt(17.0) / 8.0

# Decay rate of the closed channel at the threshold, |k_2| there.
BETA_THRESHOLD = 3.0 / np.sqrt(2.0)

#: degenerate points of P where the four roots collide pairwise
DEGENERATE_Z = (THRESHOLD, -THRESHOLD, 1.5j, -1.5j)


class SpectralDomainError(ValueError):
    """z lies outside the domain where the requested root labels are defined."""


def dispersion_poly(k, z):
    """P(k, z) = k^4/4 + 9 k^2/8 + 17/64 - z^2."""
    k = np.asarray(k, dtype=complex)
    z = np.asarray(z, dtype=complex)
    return 0.25 * k**4 + 1.125 * k**2 + 17.0 / 64.0 - z**2


def in_omega(z, margin=0.0) -> bool:
    """Membership in Omega = C minus the four cuts emanating from the degenerate points."""
    z = complex(z)
    if abs(z.imag) <= margin and abs(z.real) >= THRESHOLD - margin:
        return False
    if abs(z.real) <= margin and abs(z.imag) >= 1.0 - margin:
        return False
    return True


def _sqrt_w(z):
    """Principal sqrt(1 + z^2); analytic off the cuts [i, i*inf), (-i*inf, -i]."""
    return np.sqrt(1.0 + z * z)


def _m(z):
    """m(z) = sqrt(9/8 + sqrt(1+z^2)), positive on the real axis."""
    return np.sqrt(1.125 + _sqrt_w(z))


def _g(z):
    """g(z) = sqrt(sqrt(17)/8 - z), cut along (sqrt(17)/8, +inf)."""
    return np.sqrt(THRESHOLD - z)


def _h(z):
    """h(z) = sqrt(sqrt(17)/8 + z), cut along (-inf, -sqrt(17)/8)."""
    return np.sqrt(THRESHOLD + z)


def k1_of_z(z):
    """Slow root k_1(z) = i sqrt(2) g(z) h(z) / m(z) on Omega."""
    z = np.asarray(z, dtype=complex)
    return 1j * np.sqrt(2.0) * _g(z) * _h(z) / _m(z)


def k2_of_z(z):
    """Fast root k_2(z) = i sqrt(2) m(z); analytic across the real axis."""
    z = np.asarray(z, dtype=complex)
    return 1j * np.sqrt(2.0) * _m(z)


def c_of(k, z):
    """Component ratio c(k, z) = -i (k^2/2 + 17/8) / z of the far-field eigenvector."""
    return -1j * (0.5 * np.asarray(k, dtype=complex) ** 2 + 17.0 / 8.0) / z


@dataclass
class SpectralPoint:
    """Dispersion data at one spectral point.

    ``side`` is 'upper'/'lower' for interior z and 'plus'/'minus' for
    boundary values lambda +- i0 on the essential spectrum.
    """

    z: complex
    side: str
    k: np.ndarray  # (k1, k2, k3, k4)
    c: np.ndarray  # (c1, c2)
    delta: complex = field(default=0j)
    alpha: complex = field(default=0j)
    D1: complex = field(default=0j)
    D2: complex = field(default=0j)

    @property
    def k1(self):
        return self.k[0]

    @property
    def k2(self):
        return self.k[1]

    @property
    def c1(self):
        return self.c[0]

    @property
    def c2(self):
        return self.c[1]

    def to_dict(self):
        d = {
            "z": [self.z.real, self.z.imag],
            "side": self.side,
            "k": [[v.real, v.imag] for v in self.k],
            "c": [[v.real, v.imag] for v in self.c],
        }
        for name in ("delta", "alpha", "D1", "D2"):
            v = getattr(self, name)
            d[name] = [v.real, v.imag]
        return d


def roots(z) -> SpectralPoint:
    """Branch-labelled roots at interior z in Omega.

    Raises SpectralDomainError on the cuts; boundary values on the spectrum
    are provided by :func:`boundary_roots`.
    """
    zc = complex(z)
    if not in_omega(zc):
        raise SpectralDomainError(
            f"z={zc} lies on a branch cut of Omega; use boundary_roots for the spectrum"
        )
    k1 = complex(k1_of_z(zc))
    k2 = complex(k2_of_z(zc))
    k = np.array([k1, k2, -k1, -k2])
    c = np.array([complex(c_of(k1, zc)), complex(c_of(k2, zc))])
    side = "upper" if zc.imag >= 0 else "lower"
    return prefactors(SpectralPoint(z=zc, side=side, k=k, c=c))


def boundary_roots(lam: float, sign: str) -> SpectralPoint:
    """Boundary limits k_j(lambda +- i0) on the essential spectrum |lambda| > sqrt(17)/8."""
    lam = float(lam)
    if abs(lam) <= THRESHOLD:
        raise SpectralDomainError(
            f"|lambda|={abs(lam):.6g} <= sqrt(17)/8; no boundary roots inside the gap"
        )
    if sign in ("+", "plus"):
        s = 1.0
        side = "plus"
    elif sign in ("-", "minus"):
        s = -1.0
        side = "minus"
    else:
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    w = np.sqrt(lam * lam + 1.0)
    k1_mag = np.sqrt(2.0) * np.sqrt(w - 1.125)
    k2 = 1j * np.sqrt(2.0) * np.sqrt(w + 1.125)
    # lemma limit table: sign of Re k1 flips with the half-plane and with sign(lambda)
    k1 = (s if lam > 0 else -s) * k1_mag + 0j
    k = np.array([k1, k2, -k1, -k2])
    c = np.array([complex(c_of(k1, lam)), complex(c_of(k2, lam))])
    return prefactors(SpectralPoint(z=complex(lam), side=side, k=k, c=c))


def prefactors(pt: SpectralPoint) -> SpectralPoint:
    """Fill the inverse-Wronskian prefactors delta, alpha, D1, D2."""
    pt.delta = complex(-2j * pt.k1 * (1.0 - pt.c1**2))
    pt.alpha = complex(-2j * pt.k2 * (1.0 - pt.c2**2))
    if pt.delta == 0 or pt.alpha == 0:
        raise SpectralDomainError(f"singular prefactor at z={pt.z}")
    pt.D1 = 1.0 / pt.delta
    pt.D2 = 1.0 / pt.alpha
    return pt


def beta_decay(lam: float) -> float:
    """|k_2| on the spectrum: decay rate of the closed channel at energy lambda."""
    return float(np.sqrt(2.0) * np.sqrt(np.sqrt(lam * lam + 1.0) + 1.125))
