import warnings

import numpy as np
import pytest

from unravel.grw import (born_density, build_grw_family, gaussian_wavepacket,
                         grw_localization_experiment, lattice_hamiltonian, lattice_sites,
                         pooled_chisquare, position_moments, tune_width)
from unravel.model import SHIFTED_M, validate_model


def test_operators_hermitian_positive_bounded():
    fam = build_grw_family(32, (0.0, 1.0), 16, 300.0)
    top = (300.0 / np.pi) ** 0.25 * np.sqrt(fam.delta)
    for op in fam.ops:
        np.testing.assert_array_equal(op, op.T)
        ev = np.linalg.eigvalsh(op)
        assert ev.min() >= 0 and ev.max() <= top + 1e-15
    assert fam.delta == pytest.approx(1 / 16)


def test_defect_decreases_under_refinement():
    a = tune_width(64, (0.0, 1.0), 64)
    defects = [build_grw_family(64, (0.0, 1.0), k, a).defect for k in (8, 16, 32, 64)]
    assert all(x > y for x, y in zip(defects, defects[1:]))


def test_completeness_contraction():
    fam = build_grw_family(64, (0.0, 1.0), 64, tune_width(64, (0.0, 1.0), 64))
    ev = np.linalg.eigvalsh(fam.completeness)
    assert ev.min() >= 0 and ev.max() <= 1 + fam.defect + 1e-12


def test_projector_limit():
    # a -> large with centres on the sites: L_a -> scale * |site_a><site_a|
    fam = build_grw_family(16, (0.0, 1.0), 16, 1e6)
    scale = (1e6 / np.pi) ** 0.25 * np.sqrt(fam.delta)
    np.testing.assert_allclose(fam.ops / scale, np.eye(16)[:, :, None] * np.eye(16)[:, None, :], atol=1e-12)


def test_degenerate_inputs():
    with pytest.raises(ValueError):
        build_grw_family(8, (1.0, 1.0), 4, 1.0)
    with pytest.raises(ValueError):
        build_grw_family(8, (0.0, 1.0), 1, 1.0)
    with pytest.raises(ValueError):
        build_grw_family(8, (0.0, 1.0), 4, -1.0)


def test_model_and_helpers():
    fam = build_grw_family(8, (0.0, 2.0), 8, 20.0, rate=4.0)
    m = fam.model(lattice_hamiltonian(8))
    assert m.convention == SHIFTED_M and validate_model(m).ok
    np.testing.assert_allclose(m.ops, 2.0 * fam.ops)
    np.testing.assert_allclose(lattice_sites(4, (0, 1)), [0.125, 0.375, 0.625, 0.875])
    h = lattice_hamiltonian(4, 0.5)
    assert h[0, 1] == -0.5 and h[0, 0] == 1.0 and h[0, 2] == 0
    psi = gaussian_wavepacket(lattice_sites(200, (0, 1)), 0.5, 0.05)
    mean, var = position_moments(lattice_sites(200, (0, 1)), psi)
    assert mean == pytest.approx(0.5) and var == pytest.approx(0.05**2, rel=1e-3)


def test_born_density_is_kernel_smoothed():
    fam = build_grw_family(32, (0.0, 1.0), 32, 500.0)
    psi = gaussian_wavepacket(fam.sites, 0.4, 0.1)
    p = born_density(fam, psi)
    kernel = np.exp(-500.0 * (fam.centers[:, None] - fam.sites[None, :]) ** 2)
    want = kernel @ np.abs(psi) ** 2
    np.testing.assert_allclose(p, want / want.sum(), rtol=1e-12)


def test_single_site_localizes_there():
    fam = build_grw_family(16, (0.0, 1.0), 16, 1e5)
    psi = np.zeros(16, complex)
    psi[5] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = grw_localization_experiment(fam, psi, 5.0, 300, seed=1)
    assert rep.n_jumped > 0 and np.all(rep.channels == 5)


def test_experiment_small():
    a = tune_width(32, (0.0, 1.0), 32)
    fam = build_grw_family(32, (0.0, 1.0), 32, a)
    psi = gaussian_wavepacket(fam.sites, 0.5, 0.15)
    rep = grw_localization_experiment(fam, psi, 6.0, 500, seed=3, dt=0.05)
    assert rep.variance_reduced >= 0.99
    assert rep.counts.sum() == rep.n_jumped


def test_warns_on_large_defect():
    fam = build_grw_family(32, (0.0, 1.0), 8, 50.0)
    assert fam.defect > 0.05
    psi = gaussian_wavepacket(fam.sites, 0.5, 0.15)
    with pytest.warns(RuntimeWarning, match="defect"):
        rep = grw_localization_experiment(fam, psi, 1.0, 5, seed=3, dt=0.05)
    assert rep.summary()["notes"]


def test_pooled_chisquare():
    rng = np.random.default_rng(0)
    p = np.array([0.5, 0.3, 0.15, 0.04, 0.01])
    counts = np.bincount(rng.choice(5, size=2000, p=p), minlength=5)
    stat, dof, pval = pooled_chisquare(counts, p)
    assert pval > 0.01 and dof == 4
    _, _, bad = pooled_chisquare(counts, p[::-1])
    assert bad < 1e-6
