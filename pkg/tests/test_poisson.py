import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import DD_F1_TWO_JUMPS, DD_INVERSE_F1, DD_PRODUCT_F1_G1, doleans_walk
from unravel.poisson import (STATE_DEPENDENT, InadmissibleIntegrand, PoissonPath, SampledProcess,
                             StepProcess, check_doleans_sde, doleans_exp, doleans_exp_many,
                             doleans_exp_sum, doleans_inverse, doleans_product,
                             integrate_compensated, sample_unit_poisson, substream)

TWO = PoissonPath(1.0, ([0.3, 0.9],))
ONE = StepProcess.constant(1.0, 1.0)
ZERO = StepProcess.constant(0.0, 1.0)


# -- strategies -----------------------------------------------------------------

@st.composite
def step_and_path(draw, lo=-0.5, hi=3.0, horizon=2.0):
    n = draw(st.integers(1, 6))
    cuts = sorted(set(draw(st.lists(st.floats(0.01, horizon - 0.01), min_size=n - 1, max_size=n - 1))))
    bp = [0.0, *cuts, horizon]
    vals = draw(st.lists(st.floats(lo, hi), min_size=len(bp) - 1, max_size=len(bp) - 1))
    seed = draw(st.integers(0, 2**32 - 1))
    return StepProcess(bp, vals), sample_unit_poisson(1, horizon, seed)


def random_step(rng, horizon, lo, hi, pieces=5):
    bp = np.concatenate([[0.0], np.sort(rng.uniform(0, horizon, pieces - 1)), [horizon]])
    return StepProcess(bp, rng.uniform(lo, hi, pieces))


@pytest.fixture(scope="module")
def unit_counts():
    return np.array([len(sample_unit_poisson(1, 1.0, s).jumps[0]) for s in range(100_000)])


# -- paths ----------------------------------------------------------------------

class TestSampling:
    def test_deterministic(self):
        a, b = sample_unit_poisson(3, 5.0, 11, 4), sample_unit_poisson(3, 5.0, 11, 4)
        for x, y in zip(a.jumps, b.jumps):
            np.testing.assert_array_equal(x, y)

    def test_streams_differ(self):
        a = sample_unit_poisson(2, 50.0, 1, 0)
        b = sample_unit_poisson(2, 50.0, 1, 1)
        assert not np.array_equal(a.jumps[0], a.jumps[1])
        assert not np.array_equal(a.jumps[0], b.jumps[0])
        assert substream(1, 0, 0).random() != substream(1, 0, 1).random()

    def test_tiny_horizon(self):
        counts = np.array([sample_unit_poisson(1, 1e-4, s).count(0, 1e-4) for s in range(100_000)])
        mean, se = 1e-4, np.sqrt(1e-4 / len(counts))
        assert abs(counts.mean() - mean) <= 3 * se

    def test_mean_count(self):
        n = 10_000
        counts = np.array([len(sample_unit_poisson(1, 5.0, s).jumps[0]) for s in range(n)])
        assert abs(counts.mean() - 5.0) <= 3 * np.sqrt(5.0 / n)
        assert counts.var() == pytest.approx(5.0, rel=0.1)

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            sample_unit_poisson(1, 0.0, 0)


class TestPath:
    def test_json_round_trip(self):
        p = sample_unit_poisson(3, 4.0, 2)
        q = PoissonPath.from_json(p.to_json())
        assert q.horizon == p.horizon and q.rate_model == p.rate_model
        for x, y in zip(p.jumps, q.jumps):
            np.testing.assert_array_equal(x, y)
        assert set(p.to_dict()["jumps"]) == {"0", "1", "2"}

    @pytest.mark.parametrize("jumps", [[0.0, 0.5], [0.5, 0.4], [0.5, 0.5], [1.5]])
    def test_invalid(self, jumps):
        with pytest.raises(ValueError):
            PoissonPath(1.0, (jumps,))

    def test_events_sorted(self):
        p = PoissonPath(2.0, ([0.5, 1.5], [1.0]), STATE_DEPENDENT)
        assert p.events() == [(0.5, 0), (1.0, 1), (1.5, 0)]
        assert p.events(1.0) == [(0.5, 0), (1.0, 1)]
        assert p.count(0, 1.5) == 2


# -- stochastic integrals -----------------------------------------------------------

class TestCompensated:
    def test_examples(self):
        assert integrate_compensated(ONE, TWO, 0, 1.0) == pytest.approx(1.0)
        assert integrate_compensated(ZERO, TWO, 0, 1.0) == 0.0

    @given(st.floats(-5, 5), st.integers(0, 2**32 - 1))
    def test_constant(self, c, seed):
        p = sample_unit_poisson(1, 3.0, seed)
        got = integrate_compensated(StepProcess.constant(c, 3.0), p, 0, 2.0)
        assert got == pytest.approx(c * (p.count(0, 2.0) - 2.0), abs=1e-12)

    def test_predictable_value_at_jump(self):
        # jump exactly at a breakpoint uses the value of the interval ending there
        f = StepProcess([0.0, 0.5, 1.0], [2.0, 7.0])
        p = PoissonPath(1.0, ([0.5],))
        assert integrate_compensated(f, p, 0, 1.0) == pytest.approx(2.0 - (1.0 + 3.5))


class TestDoleansDade:
    def test_examples(self):
        assert doleans_exp(ONE, TWO, 0, 1.0) == pytest.approx(DD_F1_TWO_JUMPS, rel=1e-14)
        assert DD_F1_TWO_JUMPS == pytest.approx(1.47152, abs=1e-5)
        assert doleans_exp(ZERO, TWO, 0, 1.0) == 1.0
        assert doleans_exp(StepProcess.constant(0.7, 1.0), TWO, 0, 0.2) == pytest.approx(np.exp(-0.14))

    def test_left_limit(self):
        assert doleans_exp(ONE, TWO, 0, 0.9, left=True) == pytest.approx(2 * np.exp(-0.9))
        assert doleans_exp(ONE, TWO, 0, 0.9) == pytest.approx(4 * np.exp(-0.9))

    def test_product_examples(self):
        assert doleans_product(ONE, ZERO, TWO, 0, 1.0) == pytest.approx(DD_F1_TWO_JUMPS)
        assert doleans_product(ONE, ONE, TWO, 0, 1.0) == pytest.approx(DD_PRODUCT_F1_G1, rel=1e-14)
        assert DD_PRODUCT_F1_G1 == pytest.approx(DD_F1_TWO_JUMPS**2, rel=1e-14)

    def test_inverse_examples(self):
        assert doleans_inverse(ZERO, TWO, 0, 1.0) == 1.0
        inv = doleans_inverse(ONE, TWO, 0, 1.0)
        assert inv == pytest.approx(DD_INVERSE_F1, rel=1e-14)
        assert abs(inv * DD_F1_TWO_JUMPS - 1.0) <= 1e-10

    def test_inverse_inadmissible(self):
        with pytest.raises(InadmissibleIntegrand):
            doleans_inverse(StepProcess.constant(-1.0, 1.0), TWO, 0, 1.0)
        # a bad value away from any jump is fine
        f = StepProcess([0.0, 0.1, 1.0], [-3.0, 0.5])
        assert np.isfinite(doleans_inverse(f, TWO, 0, 1.0))

    @given(step_and_path(lo=-3.0, hi=3.0), st.floats(0.0, 2.0))
    def test_matches_event_walk(self, fp, t):
        f, p = fp
        want = doleans_walk(f.breakpoints, f.values, p.jumps[0].tolist(), t)
        assert doleans_exp(f, p, 0, t) == pytest.approx(want, rel=1e-10, abs=1e-300)

    @given(step_and_path(), step_and_path())
    def test_product_rule(self, fp, gp):
        (f, p), (g, _) = fp, gp
        for t in (0.7, 2.0):
            want = doleans_exp(f, p, 0, t) * doleans_exp(g, p, 0, t)
            assert doleans_product(f, g, p, 0, t) == pytest.approx(want, rel=1e-10)

    @given(step_and_path(lo=-0.5, hi=3.0))
    def test_inverse_rule(self, fp):
        f, p = fp
        assert doleans_exp(f, p, 0, 2.0) * doleans_inverse(f, p, 0, 2.0) == pytest.approx(1.0, abs=1e-10)

    @given(step_and_path(lo=-0.9, hi=3.0))
    def test_sde_pathwise(self, fp):
        f, p = fp
        chk = check_doleans_sde(f, p, 0)
        assert chk.jump_residual <= 1e-12
        assert chk.drift_residual <= 1e-10

    def test_complex_integrand(self):
        f = StepProcess([0.0, 0.5, 1.0], [0.3 + 0.2j, -0.1j])
        want = doleans_walk(f.breakpoints, f.values, [0.3, 0.9], 1.0)
        assert doleans_exp(f, TWO, 0, 1.0) == pytest.approx(want, rel=1e-13)

    def test_many_matches_scalar(self):
        rng = np.random.default_rng(3)
        f = random_step(rng, 3.0, -0.5, 2.0)
        p = sample_unit_poisson(1, 3.0, 5)
        ts = np.linspace(0, 3.0, 31)
        np.testing.assert_allclose(doleans_exp_many(f, p, 0, ts), [doleans_exp(f, p, 0, t) for t in ts],
                                   rtol=1e-13)

    def test_sum_over_channels(self):
        p = sample_unit_poisson(2, 2.0, 8)
        fs = [StepProcess.constant(0.5, 2.0), StepProcess.constant(-0.2, 2.0)]
        want = doleans_exp(fs[0], p, 0, 2.0) * doleans_exp(fs[1], p, 1, 2.0)
        assert doleans_exp_sum(fs, p, 2.0) == pytest.approx(want)
        with pytest.raises(ValueError):
            doleans_exp_sum(fs[:1], p, 2.0)

    @pytest.mark.parametrize("c", [-0.5, 0.5, 1.0])
    def test_martingale(self, c, unit_counts):
        n, t = len(unit_counts), 1.0
        counts = unit_counts
        vals = np.exp(-c * t) * (1 + c) ** counts
        assert abs(vals.mean() - 1.0) <= 4 * vals.std(ddof=1) / np.sqrt(n)


class TestSampledProcess:
    def test_smooth_integral(self):
        t = np.linspace(0, 2, 41)
        f = SampledProcess(t, np.sin(t))
        assert f.integral(2.0) == pytest.approx(1 - np.cos(2.0), abs=1e-7)
        np.testing.assert_allclose(f.integral(np.array([0.5, 1.3])), 1 - np.cos([0.5, 1.3]), atol=1e-7)

    def test_jump_and_left_limit(self):
        t = np.array([0.0, 0.25, 0.5, 0.5, 0.75, 1.0])
        v = np.array([1.0, 1.0, 1.0, 3.0, 3.0, 3.0])
        f = SampledProcess(t, v)
        assert f.left_limit(0.5) == 1.0
        assert f.integral(1.0) == pytest.approx(2.0)
        p = PoissonPath(1.0, ([0.5],))
        assert doleans_exp(f, p, 0, 1.0) == pytest.approx(np.exp(-2.0) * 2.0)

    def test_short_segments_trapezoid(self):
        f = SampledProcess([0.0, 1.0], [0.0, 2.0])
        assert f.integral(0.5) == pytest.approx(0.25)

    def test_validation(self):
        with pytest.raises(ValueError):
            SampledProcess([0.0, 1.0, 0.5], [1, 2, 3])
        with pytest.raises(ValueError):
            SampledProcess([0.0, 1.0], [1.0]).integral(0.5)
        with pytest.raises(ValueError):
            StepProcess([0.1, 1.0], [1.0])
