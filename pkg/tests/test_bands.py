import numpy as np
import pytest

from amlattice.bands import (
    BoxTooSmallError,
    NumericalError,
    band_weights,
    bloch_bands,
    central_equation,
    landau_zener_check,
    wannier_stark_ladder,
)
from amlattice.grid import SpatialGrid
from amlattice.units import reference_config


def test_free_particle_bands():
    spec = bloch_bands(0.0, n_bands=3, n_k=21)
    k = spec.k_samples
    np.testing.assert_allclose(spec.band(1), k**2, atol=1e-12)
    np.testing.assert_allclose(spec.band(2), (np.abs(k) - 2) ** 2, atol=1e-12)
    assert spec.band_gap == pytest.approx(0.0, abs=1e-12)


def test_weak_lattice_gap_is_half_depth():
    # first-order perturbation theory: gap at the zone edge = U0 / 2
    assert bloch_bands(0.01, n_k=3).band_gap == pytest.approx(0.005, rel=1e-3)


def test_central_equation_hermitian_and_symmetric():
    h = central_equation(8.0, 0.3, 11)
    assert np.allclose(h, h.T)
    e1 = np.linalg.eigvalsh(h)
    e2 = np.linalg.eigvalsh(central_equation(8.0, -0.3, 11))
    np.testing.assert_allclose(e1, e2, atol=1e-12)


def test_deep_lattice_gap_condition():
    lz = landau_zener_check(reference_config(11.2))
    assert lz["E_G_Er"] > 3.0
    assert lz["negligible"]


def test_band_width_decreases_with_depth():
    w = [bloch_bands(u, n_k=41).bandwidths[0] for u in (5.0, 10.0, 20.0)]
    assert w[0] > w[1] > w[2] > 0


def test_plane_wave_precondition():
    with pytest.raises(ValueError):
        bloch_bands(10.0, n_bands=2, n_planewaves=8)


def test_unconverged_raises():
    with pytest.raises(NumericalError):
        bloch_bands(45.0, n_bands=2, n_planewaves=9)


@pytest.mark.parametrize("depth, band", [(11.2, 1), (6.3, 2)])
def test_ladder_spacing_and_covariance(depth, band):
    lad = wannier_stark_ladder(reference_config(depth), band, box_sites=64 if band == 1 else 128)
    assert lad.spacing_deviation() < 1e-6
    assert lad.covariance_deviation() < 1e-4
    assert lad.gram_deviation() < 1e-10
    assert np.all(lad.band_purity > 0.99)
    n, psi = lad.central()
    dens = np.abs(psi) ** 2 * lad.grid.dz
    assert abs(dens @ (lad.grid.z / np.pi) - n) < 3


def test_ladder_box_too_small():
    with pytest.raises(BoxTooSmallError):
        wannier_stark_ladder(reference_config(6.3), 2, box_sites=32)


def test_band_weights_of_ladder_state():
    cfg = reference_config(11.2)
    lad = wannier_stark_ladder(cfg, 1)
    w = band_weights(lad.central()[1], cfg.depth, lad.grid, 3)
    assert w[0] > 0.999
