"""Fisher information of the post-selected measurement and Cramer-Rao bounds.

Everything is reported for the dimensionless parameter ``g_delta``, i.e. as
``F * delta^2``. The quantum Fisher information of the balanced Gaussian meter
is then 4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegeneratePostSelection
from .forward import (
    P_FLOOR,
    OpticalSetup,
    branch_wavefunctions,
    coefficients,
    exact_outcomes,
)
from .qcore import PostSelectionMode, branch_amplitudes, make_state

QUANTUM_FISHER = 4.0
_KAPPA_HALF_WIDTH = 14.0
_PANEL_NODES = 20
# p_f(0) or 1 - p_f(0) below this is rounding noise of an exact zero
_DEGENERATE = 1e-15


@dataclass(frozen=True)
class FisherBreakdown:
    f_postselection: float
    f_meter_conditional: float
    f_split_conditional: float
    p_f: float
    f_quantum: float = QUANTUM_FISHER
    meter_kind: str = "full_k"

    @property
    def f_total(self) -> float:
        return self.p_f * self.f_meter_conditional + self.f_postselection

    @property
    def f_total_split(self) -> float:
        return self.p_f * self.f_split_conditional + self.f_postselection

    @property
    def selected_total(self) -> float:
        return self.f_total if self.meter_kind == "full_k" else self.f_total_split


def fisher_postselection(g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup) -> float:
    """Fisher information of the binary post-selection outcome."""
    co = coefficients(theta_i, mode, setup)
    em1 = math.expm1(-2.0 * g_delta**2)
    p = co.p0 + co.cross * em1
    q = co.q0 - co.cross * em1
    dp = -4.0 * g_delta * co.cross * (1.0 + em1)
    if g_delta == 0.0:
        # p ~ p0 - 2 cross x^2 and dp ~ -4 cross x: (4 cross x)^2 / (+-2 cross x^2 * other)
        if co.p0 < _DEGENERATE and co.q0 > _DEGENERATE:
            return -8.0 * co.cross / co.q0
        if co.q0 < _DEGENERATE and co.p0 > _DEGENERATE:
            return 8.0 * co.cross / co.p0
    if p > 0.0 and q > 0.0:
        return dp * dp / (p * q)
    raise DegeneratePostSelection(f"p_f = {p:.3e} leaves no binary outcome to weigh")


def dpf_dg(g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup) -> float:
    co = coefficients(theta_i, mode, setup)
    return -4.0 * g_delta * co.cross * math.exp(-2.0 * g_delta**2)


@lru_cache(maxsize=8)
def _kappa_rule(lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    n_panels = int(math.ceil(hi - lo))
    t, wt = np.polynomial.legendre.leggauss(_PANEL_NODES)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * t).ravel(), (half[:, None] * wt).ravel()


def fisher_meter_conditional(
    g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup
) -> float:
    """Fisher information of an ideal momentum measurement on the post-selected meter.

    Uses the analytic g-derivative of each branch amplitude and composite
    Gauss-Legendre quadrature; the integrand is smooth, so the quadrature error
    sits at the level of rounding.
    """
    decomp = branch_amplitudes(make_state(theta_i), mode, setup.noise)
    w = decomp.arrays()[0]
    reach = math.ceil(_KAPPA_HALF_WIDTH + 2.0 * abs(g_delta))
    kappa, qw = _kappa_rule(-float(reach), float(reach))
    psi, dpsi = branch_wavefunctions(kappa, g_delta, decomp)
    rho = w @ psi**2
    drho = w @ (2.0 * psi * dpsi)
    p_f = float(rho @ qw)
    if not p_f >= P_FLOOR:
        raise DegeneratePostSelection(f"post-selection probability {p_f:.3e} below floor")
    rate = float(drho @ qw) / p_f
    num = (drho - rho * rate) ** 2
    integrand = np.divide(num, rho, out=np.zeros_like(rho), where=rho > 0)
    return float(integrand @ qw) / p_f


def fisher_split_conditional(
    g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup
) -> float:
    """Fisher information of the left/right outcome given successful post-selection."""
    out = exact_outcomes(coefficients(theta_i, mode, setup), g_delta, setup.boundary)
    p_f, dp_f = out.p_f, out.dp_f
    if not p_f >= P_FLOOR:
        raise DegeneratePostSelection(f"post-selection probability {p_f:.3e} below floor")
    q_r = out.p_right / p_f
    q_l = out.p_left / p_f
    if q_r <= 0.0 or q_l <= 0.0:
        raise DegeneratePostSelection("a conditional half-plane probability underflows")
    dq_r = (out.dp_right * p_f - out.p_right * dp_f) / p_f**2
    return dq_r * dq_r / (q_r * q_l)


def fisher_multinomial(g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup) -> float:
    """Classical Fisher information of the three exclusive outcomes {L, R, perp}."""
    co = coefficients(theta_i, mode, setup)
    out = exact_outcomes(co, g_delta, setup.boundary)
    total = 0.0
    for p, dp in ((out.p_left, out.dp_left), (out.p_right, out.dp_right)):
        if p > 0.0:
            total += dp * dp / p
        elif dp != 0.0:
            raise DegeneratePostSelection("half-plane outcome with zero probability but nonzero slope")
    if g_delta == 0.0 and co.q0 < _DEGENERATE:
        total += 8.0 * co.cross  # (4 cross x)^2 / (2 cross x^2)
    elif out.p_perp > 0.0:
        total += out.dp_perp**2 / out.p_perp
    elif out.dp_perp != 0.0:
        raise DegeneratePostSelection("perp outcome with zero probability but nonzero slope")
    return total


def fisher_total(
    g_delta: float,
    theta_i: float,
    mode: PostSelectionMode,
    setup: OpticalSetup,
    meter_kind: str = "full_k",
    *,
    check_identity: bool = True,
) -> FisherBreakdown:
    if meter_kind not in ("full_k", "split"):
        raise ValueError(f"meter_kind must be 'full_k' or 'split', got {meter_kind!r}")
    f_pf = fisher_postselection(g_delta, theta_i, mode, setup)
    f_m = fisher_meter_conditional(g_delta, theta_i, mode, setup)
    f_split = fisher_split_conditional(g_delta, theta_i, mode, setup)
    co = coefficients(theta_i, mode, setup)
    p_f = co.p0 + co.cross * math.expm1(-2.0 * g_delta**2)
    out = FisherBreakdown(f_pf, f_m, f_split, p_f, meter_kind=meter_kind)
    if check_identity:
        flat = fisher_multinomial(g_delta, theta_i, mode, setup)
        if abs(flat - out.f_total_split) > 1e-9 * max(abs(flat), 1e-12):
            raise ArithmeticError(
                f"decomposition identity violated: multinomial {flat!r} vs {out.f_total_split!r}"
            )
    return out


def quantum_fisher(setup: OpticalSetup | None = None) -> float:
    """4 <x^2> for the balanced meter, i.e. 4 in units of delta^-2."""
    return QUANTUM_FISHER


def crb(fisher_value: float, n_resources: float) -> float:
    """Cramer-Rao bound 1 / sqrt(n F) on the standard deviation of g_delta."""
    if not fisher_value > 0:
        raise ValueError(f"zero information: F = {fisher_value}")
    if n_resources < 1:
        raise ValueError(f"need at least one resource, got {n_resources}")
    return 1.0 / math.sqrt(n_resources * fisher_value)
