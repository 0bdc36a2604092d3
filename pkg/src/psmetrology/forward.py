"""Closed-form forward model of the post-selected meter.

Conventions used throughout:

* ``delta`` is the standard deviation of the position-space intensity of the
  initial meter, so the momentum intensity has ``sigma_k = 1/(2 delta)`` and the
  overlap of the two displaced packets is ``exp(-2 (g delta)^2)``.
* All public functions take the dimensionless coupling ``g_delta = g * delta``.
  In units of ``sigma_k`` the two packets sit at ``-/+ 2 g_delta``.
* The split detector boundary sits at ``-d0`` in the focal plane, i.e. at
  ``-d0 / delta_f`` in units of ``sigma_k``.

Every probability is assembled from three weighted sums over the noise
branches: ``s_a = sum w a^2`` (packet at ``-g``), ``s_b = sum w b^2`` (packet at
``+g``) and ``cross = sum 2 w a b`` (interference, centred at zero and damped by
the packet overlap). For the two standard post-selections these sums are
written in terms of the visibilities; custom post-selections use the branch
decomposition directly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import erfc

from .errors import DegeneratePostSelection
from .qcore import (
    ModeKind,
    NoiseModel,
    PolarizationState,
    PostSelectionMode,
    branch_amplitudes,
    make_state,
    noise_from_visibilities,
)

P_FLOOR = 1e-12
SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT2 = math.sqrt(2.0)


class LinearizationWarning(UserWarning):
    """The first-order split-detector model is used outside its range of validity."""


@dataclass(frozen=True)
class OpticalSetup:
    delta: float = 286e-6
    wavelength: float = 650e-9
    focal_length: float = 0.25
    nu0: float = 0.998
    nu_half: float = 0.966
    d0: float = 0.0

    def __post_init__(self):
        for name in ("delta", "wavelength", "focal_length"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        noise_from_visibilities(self.nu0, self.nu_half)
        if not abs(self.d0) < self.delta_f:
            raise ValueError(f"|d0| = {abs(self.d0):.3e} m is not below delta_f = {self.delta_f:.3e} m")

    @property
    def k0(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def sigma_k(self) -> float:
        return 1.0 / (2.0 * self.delta)

    @property
    def delta_f(self) -> float:
        return self.focal_length / (2.0 * self.k0 * self.delta)

    @cached_property
    def noise(self) -> NoiseModel:
        return noise_from_visibilities(self.nu0, self.nu_half)

    @property
    def boundary(self) -> float:
        """Split-detector boundary in units of sigma_k."""
        return -self.d0 / self.delta_f

    def with_perfect_visibility(self) -> "OpticalSetup":
        return OpticalSetup(self.delta, self.wavelength, self.focal_length, 1.0, 1.0, self.d0)


LAB_SETUP = OpticalSetup()
PERFECT_SETUP = LAB_SETUP.with_perfect_visibility()


@dataclass(frozen=True)
class Coefficients:
    s_a: float
    s_b: float
    cross: float
    p0: float  # p_f at g = 0
    q0: float  # 1 - p_f at g = 0, without cancellation

    @property
    def drift(self) -> float:
        """sum w (b^2 - a^2); the post-selected mean momentum is g * drift / p_f."""
        return self.s_b - self.s_a


@lru_cache(maxsize=4096)
def coefficients(theta_i: float, mode: PostSelectionMode, setup: OpticalSetup) -> Coefficients:
    if mode.kind is ModeKind.CUSTOM:
        decomp = branch_amplitudes(make_state(theta_i), mode, setup.noise)
        s_a, s_b, cross = decomp.coefficients()
        return Coefficients(s_a, s_b, cross, s_a + s_b + cross, 1.0 - (s_a + s_b + cross))
    c2, s2, cos = math.cos(theta_i) ** 2, math.sin(theta_i) ** 2, math.cos(theta_i)
    nu0, nuh = setup.nu0, setup.nu_half
    total = 0.5 * (1.0 + nu0 * c2)
    drift = -0.5 * (1.0 + nu0) * cos
    if mode.kind is ModeKind.SAME:
        cross = 0.5 * nuh * s2
        p0 = 0.5 * ((1.0 + nu0) * c2 + (1.0 + nuh) * s2)
        q0 = 0.5 * ((1.0 - nu0) * c2 + (1.0 - nuh) * s2)
    else:
        cross = -0.5 * nuh * s2
        p0 = 0.5 * ((1.0 + nu0) * c2 + (1.0 - nuh) * s2)
        q0 = 0.5 * ((1.0 - nu0) * c2 + (1.0 + nuh) * s2)
    return Coefficients(0.5 * (total - drift), 0.5 * (total + drift), cross, p0, q0)


def _overlap(g_delta):
    """exp(-2 x^2) and exp(-2 x^2) - 1 (the latter accurate for tiny x)."""
    return np.exp(-2.0 * np.square(g_delta)), np.expm1(-2.0 * np.square(g_delta))


def _pf_and_complement(co: Coefficients, g_delta):
    _, em1 = _overlap(g_delta)
    return co.p0 + co.cross * em1, co.q0 - co.cross * em1


def postselection_probability(
    g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup
) -> float:
    p, _ = _pf_and_complement(coefficients(theta_i, mode, setup), g_delta)
    return float(p)


def postselection_complement(
    g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup
) -> float:
    """1 - p_f, evaluated without cancellation near p_f = 1."""
    _, q = _pf_and_complement(coefficients(theta_i, mode, setup), g_delta)
    return float(q)


def _require_postselection(p_f: float):
    if not p_f >= P_FLOOR:
        raise DegeneratePostSelection(f"post-selection probability {p_f:.3e} below floor {P_FLOOR:g}")


def mean_momentum(
    g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup
) -> float:
    """Mean transverse momentum of the post-selected meter, in 1/m."""
    co = coefficients(theta_i, mode, setup)
    p_f, _ = _pf_and_complement(co, g_delta)
    _require_postselection(p_f)
    return float(g_delta / setup.delta * co.drift / p_f)


def focal_displacement(mean_k: float, setup: OpticalSetup) -> float:
    return setup.focal_length * mean_k / setup.k0 + setup.d0


def meter_k_density(k, g_delta, theta_i, mode, setup):
    """Probability density of the post-selected meter momentum (per 1/m).

    Weighted mixture over noise branches of ``|a phi(k + g) + b phi(k - g)|^2 / p_f``.
    """
    decomp = branch_amplitudes(make_state(theta_i), mode, setup.noise)
    p_f = decomp.postselection_probability(g_delta)
    _require_postselection(p_f)
    kappa = np.asarray(k, dtype=float) / setup.sigma_k
    amp = branch_wavefunctions(kappa, g_delta, decomp)[0]
    w = decomp.arrays()[0]
    dens = np.tensordot(w, amp**2, axes=1) / p_f
    return dens / setup.sigma_k


def branch_wavefunctions(kappa, g_delta, decomp):
    """Per-branch momentum amplitudes in units of sigma_k and their g_delta derivatives.

    The amplitude of a single packet is ``(2 pi)^(-1/4) exp(-kappa^2 / 4)``; its
    square is the standard normal density. Returns arrays of shape
    ``(n_branches,) + kappa.shape``.
    """
    kappa = np.asarray(kappa, dtype=float)
    shift = 2.0 * g_delta
    norm = (2.0 * math.pi) ** -0.25
    left = norm * np.exp(-0.25 * (kappa + shift) ** 2)
    right = norm * np.exp(-0.25 * (kappa - shift) ** 2)
    _, a, b = decomp.arrays()
    a = a.reshape((-1,) + (1,) * kappa.ndim)
    b = b.reshape((-1,) + (1,) * kappa.ndim)
    psi = a * left + b * right
    dpsi = -a * (kappa + shift) * left + b * (kappa - shift) * right
    return psi, dpsi


def _upper_tail(z):
    """P(Z > z) for a standard normal Z."""
    return 0.5 * erfc(z / SQRT2)


def _std_normal_pdf(z):
    return np.exp(-0.5 * np.square(z)) / SQRT_2PI


@dataclass(frozen=True)
class OutcomeModel:
    """Outcome probabilities (L, R, perp) and their derivatives w.r.t. g_delta.

    Fields are numpy scalars, or arrays when built from an array of couplings.
    """

    p_left: float
    p_right: float
    p_perp: float
    dp_left: float
    dp_right: float
    dp_perp: float

    @property
    def p_f(self) -> float:
        return self.p_left + self.p_right

    @property
    def dp_f(self) -> float:
        return self.dp_left + self.dp_right


def exact_outcomes(co: Coefficients, g_delta: float, boundary: float) -> OutcomeModel:
    """Half-plane probabilities from Gaussian tail integrals of the three terms."""
    s = 2.0 * g_delta
    ov, em1 = _overlap(g_delta)
    p_f = co.p0 + co.cross * em1
    q = co.q0 - co.cross * em1
    dp_f = -4.0 * g_delta * co.cross * ov
    # packet at mu contributes P(kappa > boundary) = upper_tail(boundary - mu)
    right = co.s_a * _upper_tail(boundary + s) + co.s_b * _upper_tail(boundary - s) + co.cross * ov * _upper_tail(boundary)
    left = co.s_a * _upper_tail(-boundary - s) + co.s_b * _upper_tail(s - boundary) + co.cross * ov * _upper_tail(-boundary)
    d_right = (
        -2.0 * co.s_a * _std_normal_pdf(boundary + s)
        + 2.0 * co.s_b * _std_normal_pdf(boundary - s)
        - 4.0 * g_delta * co.cross * ov * _upper_tail(boundary)
    )
    return OutcomeModel(left, right, q, dp_f - d_right, d_right, -dp_f)


def linearized_outcomes(co: Coefficients, g_delta: float, boundary: float) -> OutcomeModel:
    """First-order split-detector model ``P_R = [1/2 + d/(sqrt(2 pi) delta_f)] p_f``.

    With ``d / delta_f = 2 g_delta drift / p_f - boundary`` this is
    ``P_R = p_f / 2 + (2 g_delta drift - boundary p_f) / sqrt(2 pi)``.
    """
    ov, em1 = _overlap(g_delta)
    p_f = co.p0 + co.cross * em1
    q = co.q0 - co.cross * em1
    dp_f = -4.0 * g_delta * co.cross * ov
    right = 0.5 * p_f + (2.0 * g_delta * co.drift - boundary * p_f) / SQRT_2PI
    d_right = 0.5 * dp_f + (2.0 * co.drift - boundary * dp_f) / SQRT_2PI
    return OutcomeModel(p_f - right, right, q, dp_f - d_right, d_right, -dp_f)


def outcomes(co: Coefficients, g_delta, boundary: float, variant: str = "exact") -> OutcomeModel:
    if variant == "exact":
        return exact_outcomes(co, g_delta, boundary)
    if variant == "linearized":
        return linearized_outcomes(co, g_delta, boundary)
    raise ValueError(f"unknown likelihood variant {variant!r}")


def halfplane_probabilities(
    g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup
) -> tuple[float, float]:
    co = coefficients(theta_i, mode, setup)
    out = exact_outcomes(co, g_delta, setup.boundary)
    _require_postselection(out.p_f)
    return float(out.p_left), float(out.p_right)


def halfplane_probabilities_linearized(
    g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup
) -> tuple[float, float]:
    co = coefficients(theta_i, mode, setup)
    out = linearized_outcomes(co, g_delta, setup.boundary)
    _require_postselection(out.p_f)
    d_rel = 2.0 * g_delta * co.drift / out.p_f - setup.boundary
    if abs(d_rel) > 0.5:
        warnings.warn(
            f"|d|/delta_f = {abs(d_rel):.3f} exceeds 0.5; linearized split-detector model is unreliable",
            LinearizationWarning,
            stacklevel=2,
        )
    return float(out.p_left), float(out.p_right)


def split_imbalance(p_left: float, p_right: float) -> float:
    total = p_left + p_right
    if not total > 0:
        raise ValueError("split imbalance needs p_left + p_right > 0")
    return (p_right - p_left) / total


@dataclass(frozen=True)
class ForwardPoint:
    g: float
    g_delta: float
    p_f: float
    mean_k: float
    d: float
    p_left: float
    p_right: float


def forward_point(g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup) -> ForwardPoint:
    co = coefficients(theta_i, mode, setup)
    out = exact_outcomes(co, g_delta, setup.boundary)
    _require_postselection(out.p_f)
    mean_k = g_delta / setup.delta * co.drift / out.p_f
    return ForwardPoint(
        g=g_delta / setup.delta,
        g_delta=g_delta,
        p_f=float(out.p_f),
        mean_k=float(mean_k),
        d=float(focal_displacement(mean_k, setup)),
        p_left=float(out.p_left),
        p_right=float(out.p_right),
    )


__all__ = [
    "OpticalSetup",
    "LAB_SETUP",
    "PERFECT_SETUP",
    "ForwardPoint",
    "OutcomeModel",
    "PolarizationState",
    "coefficients",
    "postselection_probability",
    "postselection_complement",
    "mean_momentum",
    "focal_displacement",
    "meter_k_density",
    "halfplane_probabilities",
    "halfplane_probabilities_linearized",
    "split_imbalance",
    "forward_point",
]
