import numpy as np
import pytest
from scipy.stats import poisson

from spinmix import poisson_sectors, sector_basis, vacuum_probe


@pytest.mark.parametrize("M,dim", [(0, 1), (1, 1), (2, 2), (5, 3), (2000, 1001)])
def test_sector_dimensions(M, dim):
    b = sector_basis(M)
    assert b.dim == dim
    assert np.all(b.n0_values() >= 0)
    assert b.n0_values()[0] == M


def test_sector_rejects_negative():
    with pytest.raises(ValueError):
        sector_basis(-1)


def test_poisson_unit_mean_weights():
    pm = poisson_sectors(1.0, 1e-10)
    w = dict(zip(pm.totals.tolist(), pm.weights.tolist()))
    assert w[0] == pytest.approx(np.exp(-1.0), abs=1e-9)
    assert w[1] == pytest.approx(np.exp(-1.0), abs=1e-9)


def test_poisson_window_mass_and_extent():
    pm = poisson_sectors(50.0, 1e-10)
    # independent check: direct pmf summation over the window (allow a few
    # ulps of slack between the two accumulation orders)
    direct = poisson.pmf(pm.totals, 50.0).sum()
    assert direct >= 1 - 1.5e-10
    assert pm.retained_mass >= 1 - 1.0e-10
    assert pm.retained_mass == pytest.approx(direct, rel=1e-12)
    # window stays within roughly 50 +- 8 sqrt(50) (right tail is fatter)
    assert pm.totals.min() >= 50 - 8 * np.sqrt(50)
    assert pm.totals.max() <= 50 + 8 * np.sqrt(50)


@pytest.mark.parametrize("nbar", [0.3, 1.7, 12.0, 137.5])
def test_poisson_mode_at_floor_nbar(nbar):
    pm = poisson_sectors(nbar)
    assert pm.totals[np.argmax(pm.weights)] == int(np.floor(nbar))


def test_poisson_renormalized_to_one():
    for nbar in (0.5, 7.0, 300.0, 1000.0):
        pm = poisson_sectors(nbar)
        assert abs(pm.weights.sum() - 1.0) <= 1e-14
        assert np.all(pm.weights > 0)
        assert np.all(np.diff(pm.totals) == 1)


def test_poisson_small_nbar_window_starts_at_zero():
    pm = poisson_sectors(0.2, 1e-10)
    assert pm.totals[0] == 0


def test_poisson_rejects_bad_input():
    with pytest.raises(ValueError):
        poisson_sectors(0.0)
    with pytest.raises(ValueError):
        poisson_sectors(-3.0)
    with pytest.raises(ValueError):
        poisson_sectors(5.0, epsilon=0.0)
    with pytest.raises(ValueError):
        poisson_sectors(5.0, epsilon=1.5)


@pytest.mark.parametrize("M", [0, 3, 10])
def test_vacuum_probe(M):
    st = vacuum_probe(M)
    assert st.amp[0] == 1.0
    assert np.count_nonzero(st.amp) == 1
    assert st.norm() == pytest.approx(1.0, abs=1e-15)


def test_probe_sectors_all_valid():
    pm = poisson_sectors(30.0)
    for M, _ in pm:
        assert sector_basis(M).dim >= 1
        assert np.count_nonzero(vacuum_probe(M).amp) == 1


def test_state_amp_is_readonly():
    st = vacuum_probe(4)
    with pytest.raises(ValueError):
        st.amp[0] = 0.0
