"""Brute-force reference for the forward model.

The meter is sampled on a position grid, the coupling is applied as an
elementwise phase, each noise branch is applied as an explicit 2x2 operator and
the post-selection as a projection. Momentum-space quantities come from a direct
discrete Fourier sum evaluated at Gauss-Legendre nodes on either side of the
detector boundary. Nothing here uses error functions, so it checks the closed
forms independently.

Lengths are in units of ``delta`` and momenta in units of ``sigma_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InadequateGrid
from .forward import OpticalSetup
from .qcore import PostSelectionMode, make_state, resolve_postselection

K_MAX = 18.0
PANEL_NODES = 16


@dataclass(frozen=True)
class GridSpec:
    n_points: int = 1024
    x_extent: float = 12.0

    def __post_init__(self):
        if self.n_points < 256:
            raise InadequateGrid(f"n_points = {self.n_points} < 256")
        if self.x_extent < 6.0:
            raise InadequateGrid(f"x_extent = {self.x_extent} delta < 6 delta")
        if self.spacing > 1.0 / 16.0:
            raise InadequateGrid(f"grid spacing {self.spacing:.4f} delta exceeds delta/16")

    @property
    def spacing(self) -> float:
        return 2.0 * self.x_extent / self.n_points

    def positions(self) -> np.ndarray:
        return -self.x_extent + self.spacing * np.arange(self.n_points)

    def doubled(self) -> "GridSpec":
        return GridSpec(2 * self.n_points, self.x_extent)


@dataclass(frozen=True)
class GridResult:
    p_f: float
    mean_k: float  # 1/m
    p_left: float
    p_right: float
    k_nodes: np.ndarray  # 1/m
    density: np.ndarray  # conditional momentum density, per 1/m


def _panel_nodes(lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    n_panels = max(1, int(math.ceil(hi - lo)))
    t, wt = np.polynomial.legendre.leggauss(PANEL_NODES)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * wt[None, :]).ravel()
    return nodes, weights


@lru_cache(maxsize=64)
def _fourier_setup(grid: GridSpec, boundary: float):
    xi = grid.positions()
    left_k, left_w = _panel_nodes(-K_MAX, boundary)
    right_k, right_w = _panel_nodes(boundary, K_MAX)
    kappa = np.concatenate([left_k, right_k])
    weights = np.concatenate([left_w, right_w])
    # G(kappa) = (4 pi)^(-1/2) sum_j chi(xi_j) exp(-i kappa xi_j / 2) dxi
    kernel = np.exp(-0.5j * np.outer(kappa, xi)) * (grid.spacing / math.sqrt(4.0 * math.pi))
    return xi, kappa, weights, len(left_k), kernel


def initial_meter(xi: np.ndarray) -> np.ndarray:
    return (2.0 * math.pi) ** -0.25 * np.exp(-0.25 * xi**2)


def coupled_field(c: np.ndarray, g_delta: float, xi: np.ndarray) -> np.ndarray:
    """Two-component field after exp(-i g sigma3 x) acting on (c_H, c_V) x meter."""
    phi = initial_meter(xi)
    field = np.outer(c, phi).astype(complex)
    field[0] *= np.exp(-1j * g_delta * xi)
    field[1] *= np.exp(1j * g_delta * xi)
    return field


def field_norm(field: np.ndarray, grid: GridSpec) -> float:
    return float(np.sum(np.abs(field) ** 2) * grid.spacing)


def _evaluate(g_delta, theta_i, mode, setup, grid) -> GridResult:
    psi_i = make_state(theta_i)
    vf = resolve_postselection(mode, psi_i).vector
    noise = setup.noise
    xi, kappa, weights, n_left, kernel = _fourier_setup(grid, setup.boundary)

    p_f = 0.0
    density = np.zeros_like(kappa)
    preps = [(1.0 - noise.epsilon, psi_i.vector), (noise.epsilon, psi_i.orthogonal().vector)]
    for w_prep, c in preps:
        if w_prep == 0.0:
            continue
        field = coupled_field(c, g_delta, xi)
        for w_k, op in noise.kraus():
            if w_k == 0.0:
                continue
            projected = vf @ (op @ field)
            p_f += w_prep * w_k * float(np.sum(np.abs(projected) ** 2) * grid.spacing)
            density += w_prep * w_k * np.abs(kernel @ projected) ** 2

    mass = density * weights
    p_left = float(np.sum(mass[:n_left]))
    p_right = float(np.sum(mass[n_left:]))
    total = p_left + p_right
    mean_kappa = float(np.sum(kappa * mass) / total) if total > 0 else math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = density / p_f / setup.sigma_k
    return GridResult(
        p_f=p_f,
        mean_k=mean_kappa * setup.sigma_k,
        p_left=p_left,
        p_right=p_right,
        k_nodes=kappa * setup.sigma_k,
        density=cond,
    )


def simulate_on_grid(
    g_delta: float,
    theta_i: float,
    mode: PostSelectionMode,
    setup: OpticalSetup,
    grid: GridSpec = GridSpec(),
    *,
    check_convergence: bool = False,
) -> GridResult:
    """Recompute p_f, the mean momentum and the half-plane masses on a grid.

    With ``check_convergence`` the computation is repeated on a grid with twice
    the points and :class:`InadequateGrid` is raised if any probability moves by
    more than 1e-9.
    """
    if abs(g_delta) * grid.spacing > 0.5:
        raise InadequateGrid("coupling phase changes by more than 0.5 rad per grid step")
    res = _evaluate(g_delta, theta_i, mode, setup, grid)
    if check_convergence:
        fine = _evaluate(g_delta, theta_i, mode, setup, grid.doubled())
        diffs = [abs(res.p_f - fine.p_f), abs(res.p_left - fine.p_left), abs(res.p_right - fine.p_right)]
        if max(diffs) > 1e-9:
            raise InadequateGrid(f"grid not converged, doubling moved results by {max(diffs):.2e}")
    return res
