"""
テスト用フィクスチャ
"""
import numpy as np
import pytest

from core.integer_family import IntegerSlice, LambdaSpec
from core.ode_family import OdeParams, OdeState, build_orbit, rigid_seed


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def spec_112():
    """λ = (1, 1, −1)"""
    return LambdaSpec((1, 1, -1))


@pytest.fixture
def shrinker_112(spec_112):
    """t = −1/2 のスライス（C = 1）"""
    return IntegerSlice.at_time(spec_112, -0.5)


@pytest.fixture(scope="session")
def rigid_orbit_32():
    """λ = (1, 1, −1)、m = (1, 1, −3) の剛体周期軌道"""
    params, state, period = rigid_seed((1.0, 1.0, -1.0), (1, 1, -3))
    return build_orbit(params, state, period)


@pytest.fixture(scope="session")
def rigid_orbit_21():
    """λ = (1, −2)、m = (1, −2) の剛体周期軌道"""
    params, state, period = rigid_seed((1.0, -2.0), (1, -2))
    return build_orbit(params, state, period)
