"""Shared fixtures: small canonical configs, channel helpers, grid oracle."""

import numpy as np
import pytest
from scipy.optimize import minimize

from cachebeam import CellModel, ChannelRealization, SystemConfig


@pytest.fixture
def example_config():
    # N=K=5, M=1: the running example configuration (t=1, 10 messages)
    return SystemConfig(num_files=5, num_users=5, cache_size=1)


@pytest.fixture
def cell():
    return CellModel()


def make_channel(h):
    """Wrap a raw complex matrix as a ChannelRealization (unit gains)."""
    h = np.asarray(h, dtype=complex)
    return ChannelRealization(
        distances_km=np.ones(h.shape[0]),
        gains=np.ones(h.shape[0]),
        h=h,
    )


def random_channel(rng, num_users, num_antennas, scale=1.0):
    """CN(0, scale^2) channel rows, as a ChannelRealization."""
    h = scale * (rng.standard_normal((num_users, num_antennas))
                 + 1j * rng.standard_normal((num_users, num_antennas))) / np.sqrt(2.0)
    return make_channel(h)


def grid_oracle_two_users(h, noise, gamma):
    """Independent reference optimum for one multicast message, two users, Nt=2.

    min over unit directions u of max_k noise_k*gamma/|h_k^H u|^2, via a dense
    (theta, phi) grid (the global phase of u is irrelevant, so u = (cos theta,
    sin theta e^{i phi}) covers all directions) refined by Nelder-Mead.
    """
    def power_of(theta, phi):
        u = np.array([np.cos(theta), np.sin(theta) * np.exp(1j * phi)])
        rx = np.abs(np.conj(h) @ u) ** 2
        rx = np.maximum(rx, 1e-300)
        return float(np.max(noise * gamma / rx))

    thetas = np.linspace(0.0, np.pi / 2.0, 181)
    phis = np.linspace(0.0, 2.0 * np.pi, 361)
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    U = np.stack([np.cos(tt), np.sin(tt) * np.exp(1j * pp)], axis=-1)
    rx = np.abs(np.tensordot(U, np.conj(h).T, axes=([2], [0]))) ** 2
    req = np.max(noise * gamma / np.maximum(rx, 1e-300), axis=-1)
    i, j = np.unravel_index(np.argmin(req), req.shape)
    res = minimize(lambda v: power_of(v[0], v[1]),
                   x0=[thetas[i], phis[j]], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400})
    return min(float(req[i, j]), float(res.fun))
