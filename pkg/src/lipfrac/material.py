"""Constitutive model for brittle elastic damage.

Plane-strain isotropic elasticity with a tensile/compressive eigen split of
the strain tensor. Damage degrades only the tensile part of the stored
energy; the softening function shapes the dissipated energy. All quantities
are SI (Pa, kg/m^3, J/m^3, m).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class DegradationForm(enum.Enum):
    """Stiffness degradation function family (enum hook, one member for now)."""

    QUARTIC = "quartic"  # (1-d)^2 + 0.1 (1-d) d^3


class SofteningForm(enum.Enum):
    """Damage softening function family (enum hook, one member for now)."""

    QUADRATIC = "quadratic"  # 2 d + 3 d^2


def _check_damage_range(d) -> None:
    d = np.asarray(d)
    if d.size and (np.min(d) < 0.0 or np.max(d) > 1.0):
        raise ValueError(f"damage out of [0, 1]: min={np.min(d)}, max={np.max(d)}")


def degradation(d):
    """Stiffness multiplier on the tensile energy: 1 when intact, 0 when broken."""
    _check_damage_range(d)
    omd = 1.0 - np.asarray(d, dtype=float)
    d = np.asarray(d, dtype=float)
    return omd * omd + 0.1 * omd * d**3


def degradation_deriv(d):
    """Analytic derivative of :func:`degradation` (negative on [0, 1])."""
    _check_damage_range(d)
    d = np.asarray(d, dtype=float)
    return -2.0 * (1.0 - d) + 0.1 * (3.0 * d * d - 4.0 * d**3)


def softening(d):
    """Dissipation shape function; its value at 1 fixes the total energy per volume."""
    _check_damage_range(d)
    d = np.asarray(d, dtype=float)
    return 2.0 * d + 3.0 * d * d


def softening_deriv(d):
    """Analytic derivative of :func:`softening`; its value at 0 sets the threshold."""
    _check_damage_range(d)
    return 2.0 + 6.0 * np.asarray(d, dtype=float)


def lame_plane_strain(E: float, nu: float) -> tuple[float, float]:
    """Lame constants (lambda, mu) for plane strain from Young's modulus and Poisson ratio."""
    if E <= 0.0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {nu}")
    lam = E * nu / (1.0 + nu) / (1.0 - 2.0 * nu)
    mu = E / 2.0 / (1.0 + nu)
    return lam, mu


def yc_from_gc(gc: float, lc: float) -> float:
    """Critical volumetric energy from the fracture energy release rate (gc = 4 yc lc)."""
    if gc <= 0.0 or lc <= 0.0:
        raise ValueError("fracture energy and length scale must be positive")
    return gc / (4.0 * lc)


def gc_from_yc(yc: float, lc: float) -> float:
    """Inverse of :func:`yc_from_gc`."""
    return 4.0 * yc * lc


@dataclass(frozen=True)
class MaterialParams:
    """Material parameters with derived plane-strain Lame constants.

    Attributes
    ----------
    E, nu, rho : float
        Young's modulus [Pa], Poisson ratio, density [kg/m^3].
    yc : float
        Critical volumetric energy driving damage [J/m^3].
    lc : float
        Lipschitz regularizing length scale [m]; bounds the damage slope by 1/lc.
    """

    E: float
    nu: float
    rho: float
    yc: float
    lc: float
    g_form: DegradationForm = DegradationForm.QUARTIC
    h_form: SofteningForm = SofteningForm.QUADRATIC
    lam: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError(f"density must be positive, got {self.rho}")
        if self.yc <= 0.0:
            raise ValueError(f"critical energy must be positive, got {self.yc}")
        if self.lc <= 0.0:
            raise ValueError(f"length scale must be positive, got {self.lc}")
        lam, mu = lame_plane_strain(self.E, self.nu)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def from_fracture_energy(cls, E, nu, rho, gc, lc, **kw) -> "MaterialParams":
        """Build parameters with the critical energy derived from gc."""
        return cls(E=E, nu=nu, rho=rho, yc=yc_from_gc(gc, lc), lc=lc, **kw)


@dataclass(frozen=True)
class WaveSpeeds:
    """Dilatational, shear and Rayleigh wave speeds [m/s]."""

    c_d: float
    c_s: float
    c_R: float

    def __post_init__(self):
        if not self.c_d > self.c_s > self.c_R > 0.0:
            raise ValueError(
                f"wave speed ordering violated: c_d={self.c_d}, c_s={self.c_s}, c_R={self.c_R}"
            )


def wave_speeds(params: MaterialParams) -> WaveSpeeds:
    """Elastic wave speeds of the undamaged material."""
    c_d = math.sqrt((params.lam + 2.0 * params.mu) / params.rho)
    c_s = math.sqrt(params.mu / params.rho)
    c_r = (0.862 + 1.14 * params.nu) / (1.0 + params.nu) * c_s
    return WaveSpeeds(c_d=c_d, c_s=c_s, c_R=c_r)


@dataclass(frozen=True)
class Strain2D:
    """Symmetric small-strain tensor in 2D (tensor shear component, not engineering)."""

    exx: float
    eyy: float
    exy: float

    def trace(self) -> float:
        return self.exx + self.eyy

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.exx, self.exy], [self.exy, self.eyy]])

    def norm(self) -> float:
        return math.sqrt(self.exx**2 + self.eyy**2 + 2.0 * self.exy**2)


@dataclass(frozen=True)
class StrainSplit:
    """Tensile/compressive eigen split of a strain with its energy densities.

    ``tensile_energy`` and ``compressive_energy`` are the two halves of the
    stored energy density evaluated at zero damage; only the tensile half is
    degraded by damage.
    """

    eps_plus: Strain2D
    eps_minus: Strain2D
    tensile_energy: float
    compressive_energy: float


# Relative off-diagonal threshold below which a strain state is treated as
# isotropic (coalesced eigenvalues); any orthonormal eigenbasis then gives the
# same split.
_ISO_TOL = 1e-14


def split_batch(exx, eyy, exy, params: MaterialParams):
    """Eigen split of an array of strain tensors.

    Returns ``(pxx, pyy, pxy, e_plus, e_minus)`` where the first three are the
    components of the tensile part (the compressive part is the remainder) and
    the last two are the tensile/compressive energy densities at zero damage.
    """
    exx = np.asarray(exx, dtype=float)
    eyy = np.asarray(eyy, dtype=float)
    exy = np.asarray(exy, dtype=float)
    mean = 0.5 * (exx + eyy)
    dev = 0.5 * (exx - eyy)
    rad = np.hypot(dev, exy)
    ev1 = mean - rad
    ev2 = mean + rad

    p1 = np.maximum(ev1, 0.0)
    p2 = np.maximum(ev2, 0.0)
    m1 = np.minimum(ev1, 0.0)
    m2 = np.minimum(ev2, 0.0)

    nrm = np.sqrt(exx * exx + eyy * eyy + 2.0 * exy * exy)
    iso = rad <= _ISO_TOL * nrm
    safe_rad = np.where(rad > 0.0, rad, 1.0)

    # eps_plus = <ev1>+ P1 + <ev2>+ P2 with spectral projectors
    #   P2 = (I + (eps - mean I) / rad) / 2,  P1 = I - P2
    cos_term = np.where(iso, 0.0, dev / safe_rad)
    sin_term = np.where(iso, 0.0, exy / safe_rad)
    half_sum = 0.5 * (p1 + p2)
    half_diff = 0.5 * (p2 - p1)
    pxx = half_sum + half_diff * cos_term
    pyy = half_sum - half_diff * cos_term
    pxy = half_diff * sin_term

    tr_plus = np.maximum(ev1 + ev2, 0.0)
    tr_minus = np.minimum(ev1 + ev2, 0.0)
    e_plus = 0.5 * params.lam * tr_plus**2 + params.mu * (p1 * p1 + p2 * p2)
    e_minus = 0.5 * params.lam * tr_minus**2 + params.mu * (m1 * m1 + m2 * m2)
    return pxx, pyy, pxy, e_plus, e_minus


def eigen_split(eps: Strain2D, params: MaterialParams) -> StrainSplit:
    """Eigen split of a single strain tensor (see :func:`split_batch`)."""
    for c in (eps.exx, eps.eyy, eps.exy):
        if not math.isfinite(c):
            raise ValueError(f"non-finite strain component in {eps}")
    pxx, pyy, pxy, e_plus, e_minus = split_batch(
        np.array([eps.exx]), np.array([eps.eyy]), np.array([eps.exy]), params
    )
    plus = Strain2D(float(pxx[0]), float(pyy[0]), float(pxy[0]))
    minus = Strain2D(eps.exx - plus.exx, eps.eyy - plus.eyy, eps.exy - plus.exy)
    return StrainSplit(plus, minus, float(e_plus[0]), float(e_minus[0]))


def free_energy(split: StrainSplit, d: float, params: MaterialParams) -> float:
    """Stored energy density: degraded tensile part plus intact compressive part."""
    g = degradation(d)
    return float(g) * split.tensile_energy + split.compressive_energy


def driving_energy(split: StrainSplit, d: float, params: MaterialParams) -> float:
    """Energy release rate conjugate to damage (minus the damage derivative of the energy)."""
    return float(-degradation_deriv(d)) * split.tensile_energy


def stress(split: StrainSplit, d: float, params: MaterialParams) -> np.ndarray:
    """Cauchy stress tensor (2x2) for a split strain at damage ``d``.

    The tensile contribution is degraded, the compressive one is not; at
    ``d = 0`` this reduces to isotropic linear elasticity.
    """
    g = float(degradation(d))
    lam, mu = params.lam, params.mu
    # the volumetric term splits on the sign of the total trace, not on the
    # traces of the projected parts (they differ for mixed-sign eigenvalues)
    tr = split.eps_plus.trace() + split.eps_minus.trace()
    eye = np.eye(2)
    s_plus = lam * max(tr, 0.0) * eye + 2.0 * mu * split.eps_plus.as_matrix()
    s_minus = lam * min(tr, 0.0) * eye + 2.0 * mu * split.eps_minus.as_matrix()
    return g * s_plus + s_minus


def stress_batch(exx, eyy, exy, d, params: MaterialParams):
    """Vectorized stress components ``(sxx, syy, sxy)`` for arrays of strains and damage."""
    pxx, pyy, pxy, _, _ = split_batch(exx, eyy, exy, params)
    mxx = np.asarray(exx, dtype=float) - pxx
    myy = np.asarray(eyy, dtype=float) - pyy
    mxy = np.asarray(exy, dtype=float) - pxy
    g = degradation(d)
    lam, mu = params.lam, params.mu
    tr = np.asarray(exx, dtype=float) + np.asarray(eyy, dtype=float)
    tr_plus = np.maximum(tr, 0.0)
    tr_minus = np.minimum(tr, 0.0)
    sxx = g * (lam * tr_plus + 2.0 * mu * pxx) + (lam * tr_minus + 2.0 * mu * mxx)
    syy = g * (lam * tr_plus + 2.0 * mu * pyy) + (lam * tr_minus + 2.0 * mu * myy)
    sxy = g * (2.0 * mu * pxy) + 2.0 * mu * mxy
    return sxx, syy, sxy
