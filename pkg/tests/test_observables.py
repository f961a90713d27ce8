import numpy as np
import pytest

from oracles import random_hermitian, random_operator, random_state
from unravel.model import SHIFTED_M, SIGMA_X, ModelError, ModelSpec, projector_model
from unravel.observables import (energy_memory_curve, ensemble_off_diagonal, expectation,
                                 jump_increment, observable_series, projected_energy_operator)
from unravel.pdp import simulate_exact


def random_jump_model(seed, d=3, n=2):
    rng = np.random.default_rng(seed)
    return ModelSpec(random_hermitian(rng, d), tuple((f"M{i}", random_operator(rng, d, 1.0))
                                                    for i in range(n)), SHIFTED_M)


@pytest.fixture(scope="module")
def random_records():
    m = random_jump_model(5)
    psi = random_state(np.random.default_rng(1), 3)
    return [simulate_exact(m, psi, 2.0, seed=3, dt=0.01, trajectory=i) for i in range(20)]


def test_identity_observable(random_records):
    s = observable_series(random_records, np.eye(3), "I")
    np.testing.assert_allclose(s.values, 1.0, atol=1e-12)
    assert s.jump_residual <= 1e-12 and np.all(s.stderr <= 1e-12)


def test_jump_increment_exact(random_records):
    O = random_hermitian(np.random.default_rng(9), 3)
    s = observable_series(random_records, O, "O")
    assert sum(len(r.events) for r in random_records) > 10
    assert s.jump_residual <= 1e-12
    assert s.drift_residual <= 1e-5
    assert s.checks["max_imag"] <= 1e-10


def test_jump_increment_formula():
    m = random_jump_model(2)
    rng = np.random.default_rng(4)
    psi, O = random_state(rng, 3), random_hermitian(rng, 3)
    M = m.ops[1]
    post = M @ psi / np.linalg.norm(M @ psi)
    want = np.vdot(post, O @ post) - np.vdot(psi, O @ psi)
    assert jump_increment(m, O, psi, 1) == pytest.approx(want, abs=1e-13)


def test_drift_residual_order(random_records):
    # halving dt divides the trapezoid residual by about 8
    m = random_records[0].model
    psi = random_records[0].states[0]
    O = random_hermitian(np.random.default_rng(9), 3)
    res = []
    for dt in (0.02, 0.01):
        recs = [simulate_exact(m, psi, 0.5, seed=11, dt=dt, trajectory=i, max_jumps=None) for i in range(3)]
        res.append(observable_series(recs, O).drift_residual)
    assert res[1] < res[0] / 4


def test_errors(random_records):
    with pytest.raises(ModelError):
        observable_series(random_records, np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], complex))
    other = simulate_exact(random_records[0].model, random_records[0].states[0], 1.0, seed=1, dt=0.05)
    with pytest.raises(ValueError):
        observable_series([random_records[0], other], np.eye(3))


def test_series_csv(tmp_path, random_records):
    s = observable_series(random_records, np.eye(3), "I", verify=False)
    s.to_csv(tmp_path / "o.csv")
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == "t,mean,stderr" and len(lines) == len(s.times) + 1


class TestEnergyMemory:
    def test_fixed_point(self):
        t = np.linspace(0, 3, 301)
        np.testing.assert_allclose(energy_memory_curve(np.full_like(t, 0.7), 0.7, t), 0.7, atol=1e-12)

    def test_zero_projected(self):
        t = np.linspace(0, 3, 301)
        np.testing.assert_allclose(energy_memory_curve(np.zeros_like(t), 1.3, t), 1.3 * np.exp(-t), atol=1e-15)

    def test_linear_input_exact(self):
        t = np.linspace(0, 2, 201)
        # <H'>_s = s solves to t - 1 + e^{-t} (1 + h0)
        want = t - 1 + np.exp(-t) * (1 + 0.5)
        np.testing.assert_allclose(energy_memory_curve(t, 0.5, t), want, atol=1e-13)

    def test_smooth_input_second_order(self):
        errs = []
        for n in (101, 201):
            t = np.linspace(0, 2, n)
            # <H'>_s = sin s solves to (sin t - cos t + e^{-t}) / 2 + h0 e^{-t}
            want = 0.5 * (np.sin(t) - np.cos(t) + np.exp(-t)) + 0.2 * np.exp(-t)
            errs.append(np.max(np.abs(energy_memory_curve(np.sin(t), 0.2, t) - want)))
        assert errs[1] < errs[0] / 3.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            energy_memory_curve(np.zeros(3), 0.0, np.linspace(0, 1, 4))

    def test_projected_operator(self):
        h = random_hermitian(np.random.default_rng(0), 3)
        np.testing.assert_allclose(projected_energy_operator(projector_model(h)), np.diag(np.diag(h)))

    def test_off_diagonal_hamiltonian_forgets(self):
        # H off-diagonal in the projector basis: <H'> = 0 and <H>_t = <H>_0 e^{-t}
        m = projector_model(SIGMA_X)
        psi = np.array([np.cos(0.3), np.sin(0.3)], complex)
        recs = [simulate_exact(m, psi, 2.0, seed=8, dt=0.02, trajectory=i, keep_knots=False, with_norm=False)
                for i in range(3000)]
        s = observable_series(recs, SIGMA_X, "H", verify=False)
        want = energy_memory_curve(np.zeros_like(s.times), expectation(SIGMA_X, psi)[0].real, s.times)
        for t in (0.5, 1.0, 2.0):
            k = int(round(t / 0.02))
            assert abs(s.mean[k] - want[k]) <= 4 * s.stderr[k]


def test_decoherence_of_coherences():
    w = 1.5
    m = projector_model(np.diag([0.0, w]))
    psi = np.array([np.sqrt(0.4), np.sqrt(0.6)], complex)
    n = 3000
    recs = [simulate_exact(m, psi, 2.0, seed=2, dt=0.02, trajectory=i, keep_knots=False, with_norm=False)
            for i in range(n)]
    mean, se = ensemble_off_diagonal(recs, 0, 1)
    t = recs[0].times
    want = np.sqrt(0.24) * np.exp(-t) * np.exp(1j * w * t)
    k = [25, 50, 100]
    assert np.all(np.abs(mean[k] - want[k]) <= 4 * np.sqrt(2) * se[k] + 1e-12)
