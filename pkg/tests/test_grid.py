import math

import numpy as np
import pytest

from amlattice.grid import SpatialGrid, embed, translate


def test_grid_invariants():
    g = SpatialGrid(64, 16)
    assert g.n_points == 1024
    assert g.dz * g.n_points == pytest.approx(g.z_max - g.z_min)
    assert g.z[g.site_index(3)] == pytest.approx(3 * math.pi)
    assert g.sites[0] == -32 and g.sites[-1] == 31


@pytest.mark.parametrize("n, pps", [(63, 16), (48, 16), (64, 8)])
def test_grid_rejects(n, pps):
    with pytest.raises(ValueError):
        SpatialGrid(n, pps)


def test_embed_and_translate():
    small, big = SpatialGrid(32, 16), SpatialGrid(128, 16)
    psi = np.exp(-small.z**2)
    out = embed(psi, small, big, shift_sites=2)
    assert np.argmax(np.abs(out)) == big.site_index(2)
    back = translate(out, big, -2)
    assert np.argmax(np.abs(back)) == big.site_index(0)
    with pytest.raises(ValueError):
        embed(psi, big, small)
