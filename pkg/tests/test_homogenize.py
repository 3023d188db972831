import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from roughmag import homogenize as hz
from roughmag import matops, ousim
from roughmag.errors import InsufficientData
from roughmag.ousim import GridPath, ModelParams

from conftest import example_M


def _brute_pvar(x, p):
    N = x.shape[0]
    best = 0.0
    for k in range(N - 1):
        for inner in itertools.combinations(range(1, N - 1), k):
            nodes = (0, *inner, N - 1)
            s = sum(np.linalg.norm(x[b] - x[a]) ** p for a, b in zip(nodes, nodes[1:]))
            best = max(best, s)
    return best ** (1 / p)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_p_variation_matches_partition_search(seed, p):
    x = np.random.default_rng(seed).standard_normal((8, 2))
    assert hz.p_variation(x, p) == pytest.approx(_brute_pvar(x, p), rel=1e-12)


def test_one_variation_is_p1():
    x = np.random.default_rng(0).standard_normal((50, 3))
    assert hz.p_variation(x, 1.0) == pytest.approx(hz.one_variation(x), rel=1e-12)


def test_p_variation_monotone_in_p():
    x = np.cumsum(np.random.default_rng(1).standard_normal((200, 2)), 0)
    v = hz.p_variations(x, [1.0, 1.5, 2.0, 3.0])
    assert np.all(np.diff(v) <= 1e-12)


def test_fit_slope_power_law():
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    slope, se = hz.fit_slope(eps, 3 * eps**0.37, 0.01 * eps**0.37)
    assert slope == pytest.approx(0.37, abs=1e-12)
    # relative SE 1/300 at every point gives SE = (1/300) / sqrt(sum (x - xbar)^2)
    x = np.log(eps)
    assert se == pytest.approx((1 / 300) / np.sqrt(((x - x.mean()) ** 2).sum()))


def test_decreasing_with_slack():
    assert hz.decreasing_with_slack([3, 2, 1], [0.1, 0.1, 0.1])
    assert hz.decreasing_with_slack([1.0, 1.05], [0.1, 0.1])
    assert not hz.decreasing_with_slack([1.0, 1.5], [0.1, 0.1])


def test_fine_steps():
    p = ModelParams.from_eps(example_M(1.0), 0.1)
    nf = hz.fine_steps(p, 64, 10.0)
    assert nf % 64 == 0
    assert 1.0 / nf <= 0.01 / (10 * np.linalg.norm(p.M, 2)) + 1e-15
    assert 1.0 / (nf - 64) > 0.01 / (10 * np.linalg.norm(p.M, 2))


def test_experiment_config_validation():
    p = ModelParams.from_eps(np.eye(2), 0.1)
    with pytest.raises(ValueError):
        hz.ExperimentConfig(p, eps_list=(0.1, 0.2))
    with pytest.raises(ValueError):
        hz.ExperimentConfig(p, alpha=0.5)
    with pytest.raises(ValueError):
        hz.ExperimentConfig(p, eps_list=())
    cfg = hz.ExperimentConfig(p)
    assert cfg.params_at(0.05).eps == pytest.approx(0.05)
    assert cfg.replace(seed=4).seed == 4


def test_report_csv_and_lookup():
    rep = hz.Report("x")
    rep.add(0.1, "a", 1 / 3, 0.01, 10)
    rep.add(0.05, "a", 0.25, 0.02, 10)
    assert rep.value("a", 0.05)["mean"] == 0.25
    lines = rep.to_csv().splitlines()
    assert lines[0] == "eps,statistic,mean,se,n"
    assert float(lines[1].split(",")[2]) == 1 / 3
    with pytest.raises(KeyError):
        rep.value("b")


@pytest.mark.parametrize("driver", [hz.SinusoidDriver(), hz.WeierstrassDriver(K=4),
                                    hz.FourierDriver(K=8), hz.LinearDriver((1.0, -2.0))])
def test_driver_derivatives(driver):
    t = np.linspace(0.1, 0.9, 7)
    h = 1e-6
    fd = (driver.value(t + h) - driver.value(t - h)) / (2 * h)
    assert np.allclose(driver.derivative(t), fd, rtol=1e-6, atol=1e-6)
    # values must not depend on which grid they are sampled on
    assert np.allclose(driver.value(t)[3], driver.value(np.array([0.5]))[0], atol=1e-14)


def test_fourier_energy_by_quadrature():
    d = hz.FourierDriver(K=6, decay=0.6)
    val, _ = quad(lambda s: (d.derivative(np.array([s])) ** 2).sum(), 0, 1, limit=200)
    assert d.energy() == pytest.approx(val, rel=1e-8)


def test_hinf_gain():
    assert hz.hinf_gain(np.diag([1.0, 3.0])) == pytest.approx(1.0, abs=1e-9)
    assert hz.hinf_gain(example_M(1.0)) == pytest.approx(math.sqrt(2), rel=1e-6)
    # M = I - a J: peak |w| / |1 + i (w - a)| at w = (1 + a^2) / a gives sqrt(1 + a^2)
    assert hz.hinf_gain(example_M(3.0)) == pytest.approx(math.sqrt(10), rel=1e-6)


def test_derivative_energy_against_riemann_sum():
    M, m = example_M(1.0), 0.05
    gamma, _ = hz.SinusoidDriver().sample(256)
    z = ousim.relaxation_defect(M, m, gamma)
    exact = hz.derivative_energy(M, m, gamma, z)
    # refine the piecewise-linear driver and sum |z'|^2 with z' = -M z / m + gamma'
    fine_t = np.linspace(0, 1, 256 * 64 + 1)
    g_fine = GridPath(fine_t, np.stack([np.interp(fine_t, gamma.times, gamma.values[:, i])
                                        for i in range(2)], -1))
    zf = ousim.relaxation_defect(M, m, g_fine)
    gdot = np.repeat(gamma.increments() * 256, 64, axis=0)
    zdot = -zf.values @ M.T / m
    zdot = 0.5 * (zdot[1:] + zdot[:-1]) + gdot
    riemann = (zdot**2).sum() / (256 * 64)
    assert exact == pytest.approx(riemann, rel=1e-3)


def test_linear_driver_one_variation_bound():
    M = example_M(1.0)
    v = np.array([1.0, 2.0])
    gamma, _ = hz.LinearDriver(tuple(v)).sample(4096)
    for m in (0.05, 0.01):
        z = ousim.relaxation_defect(M, m, gamma)
        assert hz.one_variation(z.values) <= m * np.linalg.norm(v) / 1.0 + 1e-12


def test_linear_driver_area_defect_is_first_order():
    rep = hz.smooth_driver_experiment(example_M(1.0), [0.04, 0.02, 0.01],
                                      driver=hz.LinearDriver((1.0, 2.0)), n_steps=4096)
    _, d, _ = rep.series("area_defect")
    assert np.all(np.abs(d[:-1] / d[1:] - 2) < 0.1)


def test_finite_energy_small_run():
    rep = hz.finite_energy_experiment(example_M(1.0), [0.1, 0.01], driver=hz.FourierDriver(K=8),
                                      n_steps=512)
    assert rep.details["hinf_gain"] == pytest.approx(math.sqrt(2), rel=1e-6)
    assert rep.criteria["var1_uniform_bound"] and rep.criteria["energy_within_gain_bound"]


def _cfg(**kw):
    p = ModelParams.from_eps(example_M(1.0), 0.3)
    base = dict(eps_list=(0.4, 0.3), n_paths=40, grid_steps=16, seed=1, resolution=4.0)
    base.update(kw)
    return hz.ExperimentConfig(p, **base)


def test_worker_count_does_not_change_results():
    cfg = _cfg(n_paths=300)
    a = hz.theorem_limit_experiment(cfg.replace(workers=1))
    b = hz.theorem_limit_experiment(cfg.replace(workers=2))
    assert a.to_csv() == b.to_csv()


def test_seed_changes_results():
    a = hz.theorem_limit_experiment(_cfg())
    b = hz.theorem_limit_experiment(_cfg(seed=2))
    assert a.to_csv() != b.to_csv()


def test_momentum_smoke():
    rep = hz.momentum_limit_experiment(_cfg())
    assert {"anti_area_within_3se", "hol1_decreasing", "hol2_decreasing"} == set(rep.criteria)
    assert rep.value("anti_area_01", 0.3)["n"] == 40


def test_rate_requires_ladder():
    with pytest.raises(ValueError):
        hz.rate_experiment(_cfg())
    with pytest.raises(InsufficientData):
        hz.rate_experiment(_cfg(eps_list=(0.8, 0.4, 0.2, 0.1), n_paths=1, resolution=1.0))


def test_ergodic_and_signature_smoke():
    rep = hz.ergodic_experiment(_cfg())
    assert len(rep.series("l2_norm")[0]) == 2
    mean, se, n = hz.empirical_expected_signature(_cfg(), 2)
    assert n == 40 and mean[0] == 1.0 and mean[2].shape == (2, 2)
    m, s, n = hz.x_correction_estimate(_cfg())
    assert np.allclose(m, -m.T)


def test_pure_area_shift():
    t = np.linspace(0, 2, 5)
    G = matops.area_correction_W(example_M(1.0))
    x, xx = hz._pure_area(t, G, 2).interval(0, 4)
    assert np.allclose(xx, 2 * G) and np.all(x == 0)
