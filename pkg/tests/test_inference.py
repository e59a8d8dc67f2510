import math

import numpy as np
import pytest

from dynpanel.dgp import design, simulate
from dynpanel.errors import EmptySample, InvalidSpec, ResampleDegenerate
from dynpanel.estimator import EstimationConfig, beta_terms, estimate, gamma_terms, maximize_beta_terms
from dynpanel.inference import (
    BootstrapConfig,
    classic_bootstrap,
    default_m,
    draw_counts,
    epsilon_rule,
    estimate_curvature,
    estimate_v1,
    estimate_v2,
    m_out_of_n_bootstrap,
    modified_objective_bootstrap,
    numerical_bootstrap,
    omega_beta_rule,
    omega_gamma_rule,
    quantile,
    quantile_index,
    run_bootstrap,
)
from dynpanel.optim import CircleSweep, LineSweep
from dynpanel.panel_data import PanelDataset


@pytest.fixture(scope="module")
def sample():
    data, tp = simulate(design(1), 5000, seed=11)
    return data, estimate(data), tp


def test_tuning_rules():
    assert epsilon_rule(5000) == pytest.approx(0.0291284, abs=5e-8)
    assert omega_gamma_rule(5000) == pytest.approx(0.545232, abs=5e-7)
    assert omega_beta_rule(5000, cap=None) == pytest.approx(5000 ** (-1 / 7) * math.log(5000))
    assert omega_beta_rule(5000) == 0.5
    assert default_m(5000) == 293


def test_quantile_examples():
    assert quantile([3, 1, 2], 0.5) == 2
    s = np.random.default_rng(0).standard_normal(199)
    assert quantile(s, 0.0) == s.min() and quantile(s, 1.0) == s.max()
    assert quantile_index(199, 0.975) == 195
    assert quantile(s, 0.975) == np.sort(s)[194]
    with pytest.raises(EmptySample):
        quantile([], 0.5)


def test_draw_counts():
    N = draw_counts(100, 37, seed=1, draw=4)
    assert N.sum() == 37 and N.shape == (100,)
    assert np.array_equal(N, draw_counts(100, 37, seed=1, draw=4))
    assert not np.array_equal(N, draw_counts(100, 37, seed=1, draw=5))


def test_v1_symmetry_and_zero():
    data, _ = simulate(design(3), 3000, seed=2)
    est = estimate(data)
    V = estimate_v1(data, est.params.beta, 0.3)
    assert np.array_equal(V, V.T)
    flat = PanelDataset(np.zeros((10, 5)), np.random.default_rng(0).standard_normal((10, 4, 3)))
    assert np.array_equal(estimate_v1(flat, est.params.beta, 0.3), np.zeros((3, 3)))
    assert estimate_v2(flat, est.params.beta, -0.5, 0.3, 0.2) == 0.0


def test_v2_bandwidth_rescaling(sample):
    data, est, _ = sample
    b, g, om = est.params.beta, est.params.gamma, 0.4
    for h in (0.05, 0.025):
        t = gamma_terms(data, b, h)
        f = [np.sum(t.w * (t.a + r * t.d > 0)) / data.n for r in (g + 2 * om, g, g - 2 * om)]
        assert estimate_v2(data, b, g, om, h) == pytest.approx((f[0] - 2 * f[1] + f[2]) / (4 * om**2), abs=1e-15)


def test_curvature_signs(sample):
    data, est, _ = sample
    cv = estimate_curvature(data, est)
    assert np.all(np.diag(cv.v1_hat) <= 0) and cv.v2_hat <= 0


def test_numerical_equals_classic_at_inverse_n(sample):
    data, est, _ = sample
    n = data.n
    cfg = BootstrapConfig(b_draws=30, seed=5)
    a = numerical_bootstrap(data, est, BootstrapConfig(b_draws=30, seed=5, epsilon=1.0 / n))
    c = classic_bootstrap(data, est, cfg)
    assert np.array_equal(a.beta_draws, c.beta_draws)
    assert np.array_equal(a.gamma_draws, c.gamma_draws)
    # same argmax on a shared candidate set, draw by draw, with the generic weight formula
    t = beta_terms(data)
    theta = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    B = np.column_stack([np.cos(theta), np.sin(theta)])
    S = (t.X @ B.T > 0)
    for j in range(30):
        N = draw_counts(n, n, 5, j)
        w_num = t.w * (1 + math.sqrt(n * (1.0 / n)) * (N[t.ind] - 1)) / n
        w_cls = t.w * N[t.ind] / n
        assert int(np.argmax(S.T @ w_num)) == int(np.argmax(S.T @ w_cls))


def test_classic_flag_and_percentile(sample):
    data, est, _ = sample
    r = classic_bootstrap(data, est, BootstrapConfig(b_draws=40, seed=1))
    assert any(f.startswith("inconsistent_method") for f in r.flags)
    assert r.gamma_lower == quantile(r.gamma_draws, 0.025)


def test_numerical_ci_formula(sample):
    data, est, _ = sample
    r = numerical_bootstrap(data, est, BootstrapConfig(b_draws=59, seed=2))
    s = (data.n * epsilon_rule(data.n)) ** (-1 / 3)
    g = est.params.gamma
    assert r.gamma_lower == pytest.approx(g - s * (quantile(r.gamma_draws, 0.975) - g), abs=1e-14)
    assert r.gamma_upper == pytest.approx(g - s * (quantile(r.gamma_draws, 0.025) - g), abs=1e-14)
    assert np.allclose(np.linalg.norm(r.beta_draws, axis=1), 1.0, atol=1e-12)
    assert r.beta_lower.shape == (2,)
    assert r.quantile_indices == (2, 58)


def test_modified_zero_variation_returns_estimate(sample):
    data, est, _ = sample
    cv = estimate_curvature(data, est)
    t = beta_terms(data)
    b, _ = maximize_beta_terms(t, np.zeros_like(t.w), 2, EstimationConfig(), (cv.v1_hat, est.params.beta))
    assert np.allclose(b, est.params.beta, atol=1e-9)
    gt = gamma_terms(data, est.params.beta, est.h_used)
    res = LineSweep(gt.a, gt.d, -3, 3).argmax(np.zeros_like(gt.w), (cv.v2_hat, est.params.gamma))
    assert res.point == pytest.approx(est.params.gamma, abs=1e-6)


def test_modified_reflection_contains_estimate(sample):
    data, est, _ = sample
    r = modified_objective_bootstrap(data, est, BootstrapConfig(b_draws=99, seed=4))
    g = est.params.gamma
    if quantile(r.gamma_draws, 0.025) <= g <= quantile(r.gamma_draws, 0.975):
        assert r.gamma_lower <= g <= r.gamma_upper
    assert "v1_hat" in r.tuning and r.tuning["omega_beta"] == 0.5


def test_mn_equals_classic_when_m_is_n(sample):
    data, est, _ = sample
    cfg = BootstrapConfig(b_draws=20, seed=3, m=data.n, mn_bandwidth="original")
    a = m_out_of_n_bootstrap(data, est, cfg)
    c = classic_bootstrap(data, est, BootstrapConfig(b_draws=20, seed=3))
    assert np.array_equal(a.beta_draws, c.beta_draws) and np.array_equal(a.gamma_draws, c.gamma_draws)
    assert a.tuning["scale_beta"] == 1.0 and a.tuning["scale_gamma"] == 1.0


def test_mn_default_uses_resample_bandwidth(sample):
    data, est, _ = sample
    r = m_out_of_n_bootstrap(data, est, BootstrapConfig(b_draws=50, seed=1))
    from dynpanel.estimator import bandwidth
    assert r.tuning["m"] == 293 and r.tuning["h_m"] == bandwidth(293)
    expected = ((293 * bandwidth(293)) / (data.n * est.h_used)) ** (1 / 3)
    assert r.tuning["scale_gamma"] == pytest.approx(expected)


def test_degenerate_resamples_abort():
    y = np.zeros((400, 5), dtype=int)
    y[:2] = (1, 0, 1, 1, 1)
    y[2:6] = (0, 0, 1, 1, 1)
    data = PanelDataset(y, np.random.default_rng(0).standard_normal((400, 4, 2)))
    ecfg = EstimationConfig(h=2.0)
    est = estimate(data, ecfg)
    with pytest.raises(ResampleDegenerate):
        run_bootstrap(data, est, BootstrapConfig(method="mn", m=20, b_draws=50), ecfg)


def test_bootstrap_worker_invariance(sample):
    data, est, _ = sample
    for method in ("numerical", "modified", "mn"):
        a = run_bootstrap(data, est, BootstrapConfig(method=method, b_draws=25, seed=9, workers=1))
        b = run_bootstrap(data, est, BootstrapConfig(method=method, b_draws=25, seed=9, workers=8))
        assert np.array_equal(a.beta_draws, b.beta_draws, equal_nan=True)
        assert np.array_equal(a.gamma_draws, b.gamma_draws, equal_nan=True)


def test_config_validation():
    with pytest.raises(InvalidSpec):
        BootstrapConfig(method="wild")
    with pytest.raises(InvalidSpec):
        BootstrapConfig(alpha=1.5)


def test_to_dict_draws(sample):
    data, est, _ = sample
    r = numerical_bootstrap(data, est, BootstrapConfig(b_draws=10))
    d = r.to_dict(draws=True)
    assert len(d["gamma_draws"]) == 10 and "beta_draws" in d
    assert "beta_draws" not in r.to_dict()


def test_k3_bootstrap_runs():
    data, _ = simulate(design(3), 3000, seed=6)
    est = estimate(data)
    r = numerical_bootstrap(data, est, BootstrapConfig(b_draws=10))
    assert r.beta_lower.shape == (3,) and np.all(r.beta_lower <= r.beta_upper)
