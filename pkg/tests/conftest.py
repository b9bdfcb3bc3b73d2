import numpy as np
import pytest

from qbound import (bloch_equatorial, bloch_full, pure_qubit, pure_state_model)


@pytest.fixture(scope="session")
def all_models():
    return {
        "bloch_full": bloch_full(),
        "bloch_equatorial": bloch_equatorial(),
        "pure_qubit": pure_qubit(),
        "pure_dim_3": pure_state_model(3),
    }


def interior_points(model, n, rng, radius=0.6):
    """Random parameter points well inside the model domain."""
    p = model.num_params
    pts = []
    while len(pts) < n:
        x = rng.uniform(-1.0, 1.0, p)
        if np.linalg.norm(x) <= 1.0:
            pts.append(radius * x)
    return pts


def fd_jacobian(fn, theta, step=1e-6):
    theta = np.asarray(theta, dtype=float)
    cols = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        cols.append((np.asarray(fn(theta + e)) - np.asarray(fn(theta - e))) / (2 * step))
    return np.stack(cols, axis=-1)
