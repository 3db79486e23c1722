"""Shared fixtures; the expensive session fixtures back the acceptance suite."""

import numpy as np
import pytest

from quasiwave import fields, radon, asymptotic, wavesim
from oracles import GAUSSIAN_TAU0


@pytest.fixture(scope="session")
def gaussian_data():
    return fields.data_preset("gaussian")


@pytest.fixture(scope="session")
def gaussian_profile_small(gaussian_data):
    """Coarse-theta profile of the gaussian preset (radial, fast)."""
    return radon.friedlander_profile(
        gaussian_data, theta_grid=np.linspace(0.0, 2.0 * np.pi, 9))


@pytest.fixture(scope="session")
def gaussian_profile_reference(gaussian_data):
    """Reference-resolution profile (full theta grid); acceptance cases."""
    import time
    start = time.perf_counter()
    prof = radon.friedlander_profile(gaussian_data)
    prof.metadata["build_seconds"] = time.perf_counter() - start
    return prof


@pytest.fixture(scope="session")
def gaussian_prediction(gaussian_profile_small):
    return asymptotic.predict_lifespan(gaussian_profile_small)


@pytest.fixture(scope="session")
def synthetic_profile():
    return radon.profile_preset("sigma_gaussian")


@pytest.fixture(scope="session")
def modulated_profile():
    return radon.profile_preset("sigma_gaussian_modulated")


@pytest.fixture(scope="session")
def radial_study(gaussian_data):
    """The radial epsilon ladder at acceptance scale (minutes)."""
    return wavesim.scaling_study(gaussian_data, [0.4, 0.2, 0.1, 0.05],
                                 GAUSSIAN_TAU0, geometry_kind="radial",
                                 horizon_factor=1.7)


@pytest.fixture(scope="session")
def aniso_study():
    """2-D anisotropic ladder (annulus solver; tens of minutes)."""
    data = fields.data_preset("gaussian_aniso")
    tau0 = GAUSSIAN_TAU0 / 2.0
    return wavesim.scaling_study(data, [0.4, 0.2], tau0,
                                 geometry_kind="annulus", horizon_factor=1.7)
