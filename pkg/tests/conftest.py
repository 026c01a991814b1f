import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cortexforge.phantoms import icosphere, make_phantom
from cortexforge.volume import GridGeometry, LabelVolume, ScalarVolume


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def sphere_phantom_small():
    return make_phantom("sphere", radius=8.0, dims=(32, 32, 32))


@pytest.fixture(scope="session")
def concentric_phantom_small():
    return make_phantom("concentric", inner_radius=8.0, outer_radius=11.0, dims=(36, 36, 36))


@pytest.fixture(scope="session")
def unit_sphere_mesh():
    return icosphere(10.0, 3)


def make_mask(geometry_dims, fill):
    """Binary LabelVolume on a unit isotropic grid with fill(ii, jj, kk) -> bool."""
    geo = GridGeometry.isotropic(geometry_dims)
    ii, jj, kk = np.meshgrid(*(np.arange(d) for d in geometry_dims), indexing="ij")
    return LabelVolume(geo, fill(ii, jj, kk).astype(np.int32))
