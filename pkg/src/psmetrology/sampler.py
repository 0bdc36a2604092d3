"""Seeded photon-count generation.

Each trial sends a fixed number of photons through the setup. Every photon ends
in exactly one of three outcomes: post-selected and detected on the left half,
post-selected and detected on the right half, or rejected by the post-selection
(the orthogonal port). Probabilities always come from the exact half-plane
model.

Trial generators are PCG64 streams seeded by 64-bit integers that are derived
from a master seed through :class:`numpy.random.SeedSequence` spawn keys, so the
records do not depend on execution order or on the number of workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import OpticalSetup, coefficients, exact_outcomes
from .qcore import PostSelectionMode

RNG_ALGORITHM = "numpy.random.PCG64 seeded per trial from SeedSequence(master_seed, spawn_key)"


@dataclass(frozen=True)
class CountRecord:
    n_left: float
    n_right: float
    n_perp: float
    trial_seed: int | None = None

    def __post_init__(self):
        if min(self.n_left, self.n_right, self.n_perp) < 0:
            raise ValueError("photon counts must be nonnegative")

    @property
    def n_total(self) -> float:
        return self.n_left + self.n_right + self.n_perp

    @property
    def n_postselected(self) -> float:
        return self.n_left + self.n_right


def outcome_probabilities(g_delta: float, theta_i: float, mode: PostSelectionMode, setup: OpticalSetup) -> np.ndarray:
    out = exact_outcomes(coefficients(theta_i, mode, setup), g_delta, setup.boundary)
    probs = np.clip([out.p_left, out.p_right, out.p_perp], 0.0, None)
    return probs / probs.sum()


def derive_seed(master_seed: int, *key: int) -> int:
    """64-bit seed for the stream identified by ``key`` under ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_counts(
    g_delta: float,
    theta_i: float,
    mode: PostSelectionMode,
    setup: OpticalSetup,
    n_photons: int,
    seed: int,
) -> CountRecord:
    if n_photons < 1:
        raise ValueError("n_photons must be at least 1")
    probs = outcome_probabilities(g_delta, theta_i, mode, setup)
    rng = np.random.Generator(np.random.PCG64(seed))
    n_left, n_right, n_perp = rng.multinomial(int(n_photons), probs)
    return CountRecord(int(n_left), int(n_right), int(n_perp), trial_seed=int(seed))


def expected_counts(g_delta, theta_i, mode, setup, n_photons) -> CountRecord:
    """Noiseless (fractional) counts, for round-trip checks of the estimators."""
    out = exact_outcomes(coefficients(theta_i, mode, setup), g_delta, setup.boundary)
    return CountRecord(n_photons * out.p_left, n_photons * out.p_right, n_photons * out.p_perp)


def run_repetitions(
    g_delta: float,
    theta_i: float,
    mode: PostSelectionMode,
    setup: OpticalSetup,
    n_photons: int,
    n_reps: int,
    master_seed: int,
    stream: tuple[int, ...] = (),
) -> list[CountRecord]:
    """``n_reps`` independent records; trial ``i`` uses ``derive_seed(master_seed, *stream, i)``."""
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    return [
        sample_counts(g_delta, theta_i, mode, setup, n_photons, derive_seed(master_seed, *stream, i))
        for i in range(n_reps)
    ]
