import math

import numpy as np
import pytest

from psmetrology.forward import OpticalSetup
from psmetrology.qcore import SIGMA3


@pytest.fixture(scope="session")
def lab_setup():
    return OpticalSetup()


@pytest.fixture(scope="session")
def perfect_setup():
    return OpticalSetup().with_perfect_visibility()


def density_matrix_pf(g_delta, theta_i, theta_f_vec, nu0, nu_half):
    """Post-selection probability from an explicit 2x2 density-matrix calculation.

    Tracing out the meter after the coupling multiplies the H/V coherence by the
    packet overlap exp(-2 (g delta)^2); dephasing then acts as a Kraus channel.
    """
    eps = (1.0 - nu0) / 2.0
    p = 1.0 - nu_half / nu0
    v = np.array([math.cos(theta_i / 2), math.sin(theta_i / 2)])
    v_perp = np.array([-v[1], v[0]])
    rho = (1 - eps) * np.outer(v, v) + eps * np.outer(v_perp, v_perp)
    decay = math.exp(-2.0 * g_delta**2)
    rho = rho * np.array([[1.0, decay], [decay, 1.0]])
    rho = (1 - p / 2) * rho + (p / 2) * SIGMA3 @ rho @ SIGMA3
    return float(theta_f_vec @ rho @ theta_f_vec)
