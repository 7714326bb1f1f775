import numpy as np
import pytest

from semvps import _accel
from semvps.camera import DESK_INTRINSICS
from semvps.scenes import SCENE_CENTER, asymmetric_scene, tiny_scene
from semvps.search import build_database

DESK_FACE = 128
DESK_ERP = (512, 256)


@pytest.fixture(params=["numba", "numpy"])
def accel(request):
    """Run the test once per kernel path."""
    saved = _accel.USE_NUMBA
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    _accel.USE_NUMBA = request.param == "numba"
    yield request.param
    _accel.USE_NUMBA = saved


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scene():
    return asymmetric_scene()


@pytest.fixture(scope="session")
def small_scene():
    return tiny_scene()


@pytest.fixture(scope="session")
def desk_db(scene):
    """ERP database of the asymmetric scene, 8 m around the centre, desk sizes."""
    return build_database(scene, SCENE_CENTER, 8.0, face_size=DESK_FACE, erp_width=DESK_ERP[0], erp_height=DESK_ERP[1])


@pytest.fixture(scope="session")
def desk_intr():
    return DESK_INTRINSICS
