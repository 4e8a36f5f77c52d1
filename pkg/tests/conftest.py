import math

import numpy as np
import pytest

import metaspec as ms

HALF_WAVE = 3e8 / 5.805e9 / 2


@pytest.fixture
def small_geometry():
    return ms.ArrayGeometry(4, 3, HALF_WAVE)


@pytest.fixture
def small_grid():
    return ms.SubcarrierGrid.from_center(5.805e9, 40e6, 32)


@pytest.fixture
def two_path_scene(small_geometry, small_grid):
    paths = [
        ms.Path(1.0 + 0.2j, 20e-9, math.radians(35), math.radians(40)),
        ms.Path(0.7 + 0.3j, 45e-9, math.radians(60), math.radians(70)),
    ]
    return ms.MultipathScene.static(small_geometry, small_grid, paths)


def random_pair(rng, k=12, l=6):
    """Random spectrum pair with strictly positive amplitudes."""
    return ms.SpectrumPair(rng.uniform(0.1, 2.0, (k, l)), rng.uniform(-4.0, 4.0, (k, l)))
