"""Polarization qubit states, post-selection choices, weak values and noise branches.

States are restricted to real superpositions ``cos(theta/2)|H> + sin(theta/2)|V>``.
Under the coupling ``exp(-i g sigma3 x)`` the H component is kicked by ``-g`` in
transverse momentum and the V component by ``+g``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

SIGMA3 = np.diag([1.0, -1.0])
TWO_PI = 2.0 * math.pi
_ORTHOGONAL = 1e-15


@dataclass(frozen=True)
class PolarizationState:
    """Linear polarization on the great circle of real superpositions.

    ``theta`` is kept in [0, 2pi); wrapping the half-angle flips the global sign
    of the vector, which is tracked in ``sign`` so that inner products between
    states built from unwrapped angles stay exact.
    """

    theta: float
    sign: int = 1

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValueError(f"theta must be finite, got {self.theta!r}")
        turns = math.floor(self.theta / TWO_PI)
        theta = self.theta - TWO_PI * turns
        if theta < 0.0:  # the quotient underflowed to -0
            theta, turns = theta + TWO_PI, turns - 1
        if theta >= TWO_PI:
            theta, turns = 0.0, turns + 1
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sign", self.sign * (-1 if turns % 2 else 1))

    @property
    def vector(self) -> np.ndarray:
        return self.sign * np.array([math.cos(self.theta / 2), math.sin(self.theta / 2)])

    def orthogonal(self) -> "PolarizationState":
        """Representative of the orthogonal state, with components (-sin, cos)."""
        return PolarizationState(self.theta + math.pi, self.sign)

    def overlap(self, other: "PolarizationState") -> float:
        return float(self.vector @ other.vector)


def make_state(theta: float) -> PolarizationState:
    return PolarizationState(float(theta))


class ModeKind(enum.Enum):
    SAME = "same"
    SIGMA3 = "sigma3"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PostSelectionMode:
    kind: ModeKind
    theta_f: float | None = None

    def __post_init__(self):
        if self.kind is ModeKind.CUSTOM and self.theta_f is None:
            raise ValueError("custom post-selection needs theta_f")

    @classmethod
    def custom(cls, theta_f: float) -> "PostSelectionMode":
        return cls(ModeKind.CUSTOM, float(theta_f))

    @classmethod
    def parse(cls, name: str) -> "PostSelectionMode":
        try:
            kind = ModeKind(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown post-selection mode {name!r}") from None
        if kind is ModeKind.CUSTOM:
            raise ValueError("custom modes cannot be parsed from a bare name")
        return cls(kind)

    @property
    def closed_form(self) -> bool:
        return self.kind is not ModeKind.CUSTOM

    @property
    def name(self) -> str:
        if self.kind is ModeKind.CUSTOM:
            return f"custom({self.theta_f:.17g})"
        return self.kind.value


SAME = PostSelectionMode(ModeKind.SAME)
SIGMA3_MODE = PostSelectionMode(ModeKind.SIGMA3)


def resolve_postselection(mode: PostSelectionMode, psi_i: PolarizationState) -> PolarizationState:
    if mode.kind is ModeKind.SAME:
        return psi_i
    if mode.kind is ModeKind.SIGMA3:
        # sigma3 (c, s) = (c, -s), i.e. theta_f = -theta_i
        return PolarizationState(-psi_i.theta, psi_i.sign)
    return PolarizationState(mode.theta_f)


def weak_value(psi_i: PolarizationState, psi_f: PolarizationState) -> float:
    """Weak value of sigma3; a signed infinity when the states are exactly orthogonal."""
    vi, vf = psi_i.vector, psi_f.vector
    num = float(vf @ SIGMA3 @ vi)
    den = float(vf @ vi)
    # below a few ulps the overlap is rounding noise of an exact zero
    if abs(den) <= _ORTHOGONAL:
        return math.copysign(math.inf, num) if num != 0.0 else math.nan
    return num / den


@dataclass(frozen=True)
class NoiseModel:
    """Depolarized preparation (weight ``epsilon``) followed by sigma3 dephasing of strength ``p_deph``."""

    epsilon: float = 0.0
    p_deph: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in [0, 1/2), got {self.epsilon}")
        if not 0.0 <= self.p_deph <= 1.0:
            raise ValueError(f"p_deph must lie in [0, 1], got {self.p_deph}")

    @property
    def visibilities(self) -> tuple[float, float]:
        nu0 = 1.0 - 2.0 * self.epsilon
        return nu0, nu0 * (1.0 - self.p_deph)

    def kraus(self) -> list[tuple[float, np.ndarray]]:
        """Kraus weights and their unitary factors: sqrt(1 - p/2) 1 and sqrt(p/2) sigma3."""
        return [(1.0 - self.p_deph / 2, np.eye(2)), (self.p_deph / 2, SIGMA3)]


def noise_from_visibilities(nu0: float, nu_half: float) -> NoiseModel:
    if not (math.isfinite(nu0) and 0.0 < nu0 <= 1.0):
        raise ValueError(f"nu0 = {nu0} outside (0, 1]")
    if not (math.isfinite(nu_half) and 0.0 < nu_half):
        raise ValueError(f"nu_half = {nu_half} must be positive")
    if nu_half > nu0:
        raise ValueError(f"nu_half = {nu_half} exceeds nu0 = {nu0}")
    return NoiseModel(epsilon=(1.0 - nu0) / 2.0, p_deph=1.0 - nu_half / nu0)


@dataclass(frozen=True)
class Branch:
    weight: float
    a: float  # amplitude on the -g displaced Gaussian (H path)
    b: float  # amplitude on the +g displaced Gaussian (V path)


@dataclass(frozen=True)
class BranchDecomposition:
    branches: tuple[Branch, ...] = field(default_factory=tuple)

    def __iter__(self):
        return iter(self.branches)

    def __len__(self):
        return len(self.branches)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.array([br.weight for br in self.branches])
        a = np.array([br.a for br in self.branches])
        b = np.array([br.b for br in self.branches])
        return w, a, b

    def coefficients(self) -> tuple[float, float, float]:
        """Weighted sums (sum w a^2, sum w b^2, sum 2 w a b)."""
        w, a, b = self.arrays()
        return float(w @ a**2), float(w @ b**2), float(2.0 * w @ (a * b))

    def postselection_probability(self, g_delta: float) -> float:
        s_a, s_b, cross = self.coefficients()
        return s_a + s_b + cross * math.exp(-2.0 * g_delta**2)


def branch_amplitudes(
    psi_i: PolarizationState, mode: PostSelectionMode, noise: NoiseModel
) -> BranchDecomposition:
    """Split the post-selected meter into pure two-Gaussian branches.

    Branches come from the prepared state (weight 1 - epsilon) or its orthogonal
    complement (weight epsilon), each passed through one of the two Kraus
    operators. Zero-weight branches are dropped.
    """
    vf = resolve_postselection(mode, psi_i).vector
    preps = [(1.0 - noise.epsilon, psi_i.vector), (noise.epsilon, psi_i.orthogonal().vector)]
    out = []
    for w_prep, c in preps:
        for w_k, op in noise.kraus():
            w = w_prep * w_k
            if w == 0.0:
                continue
            fk = vf @ op
            out.append(Branch(w, float(fk[0] * c[0]), float(fk[1] * c[1])))
    return BranchDecomposition(tuple(out))
