import numpy as np
import pytest

from handtutor.style import (
    COV_FLOOR,
    GmmModel,
    StyleDataset,
    StyleError,
    fit_gmm,
    gmr_condition,
    gmr_condition_grid,
    style_mean_curve,
)


def _line_dataset(n=120, noise=0.01, seed=0, writings=1):
    rng = np.random.default_rng(seed)
    t = np.tile(np.linspace(0.0, 1.0, n), writings)
    pts = np.column_stack([0.3 * t + 0.05, 0.1 - 0.2 * t])
    pts = pts + rng.normal(0, noise, size=pts.shape)
    return StyleDataset(t, pts, writings)


def analytic_conditional(mean3, cov3, t):
    """Closed-form conditional of one joint Gaussian (oracle)."""
    mu_t, mu_x = mean3[0], mean3[1:]
    s_tt = cov3[0, 0]
    s_xt = cov3[1:, 0]
    mean = mu_x + s_xt / s_tt * (t - mu_t)
    cov = cov3[1:, 1:] - np.outer(s_xt, s_xt) / s_tt
    return mean, cov


def test_single_component_matches_sample_moments():
    data = _line_dataset()
    model = fit_gmm(data, 1, seed=3)
    joint = data.joint
    assert np.allclose(model.means[0], joint.mean(axis=0), atol=1e-9)
    centered = joint - joint.mean(axis=0)
    expected = centered.T @ centered / len(joint)  # floor clamp inactive here
    assert np.allclose(model.covariances[0], expected, atol=1e-9)


def test_two_separated_clouds():
    rng = np.random.default_rng(1)
    a = rng.normal([0.2, 0.1, 0.1], 0.01, size=(150, 3))
    b = rng.normal([0.8, 0.3, -0.2], 0.01, size=(50, 3))
    data = StyleDataset(np.concatenate([a[:, 0], b[:, 0]]), np.vstack([a[:, 1:], b[:, 1:]]), 1)
    model = fit_gmm(data, 2, seed=5)
    order = np.argsort(model.means[:, 0])
    assert np.allclose(model.means[order[0]], a.mean(axis=0), atol=1e-3)
    assert np.allclose(model.means[order[1]], b.mean(axis=0), atol=1e-3)
    assert np.allclose(sorted(model.weights), [0.25, 0.75], atol=0.02)


def test_loglikelihood_monotone_and_component_count():
    rng = np.random.default_rng(4)
    t = np.tile(np.linspace(0, 2, 100), 3)
    pts = np.column_stack([np.sin(t), np.cos(2 * t)]) + rng.normal(0, 0.02, (300, 2))
    data = StyleDataset(t, pts, 3)
    model = fit_gmm(data, 8, seed=11)
    assert model.n_components == 8
    trace = model.metadata["log_likelihood_trace"]
    assert np.all(np.diff(trace) >= -1e-9)


def test_too_few_samples_error():
    data = _line_dataset(n=10)
    with pytest.raises(StyleError, match="too few"):
        fit_gmm(data, 4, seed=0)


def test_determinism():
    data = _line_dataset(seed=9)
    m1 = fit_gmm(data, 4, seed=21)
    m2 = fit_gmm(data, 4, seed=21)
    assert np.array_equal(m1.weights, m2.weights)
    assert np.array_equal(m1.means, m2.means)
    assert np.array_equal(m1.covariances, m2.covariances)


def test_gmr_single_component_is_analytic_conditional():
    data = _line_dataset()
    model = fit_gmm(data, 1, seed=3)
    for t in (0.0, 0.31, 0.77, 1.0):
        out = gmr_condition(model, t)
        mean, cov = analytic_conditional(model.means[0], model.covariances[0], t)
        assert np.allclose(out.mean, mean, atol=1e-9)
        assert np.allclose(out.covariance, cov, atol=1e-9)
        assert np.allclose(out.responsibilities, [1.0])


def test_gmr_symmetric_two_component_midpoint():
    cov = np.diag([0.01, 1e-4, 1e-4])
    t_star = 0.5
    model = GmmModel(
        weights=np.array([0.5, 0.5]),
        means=np.array([[t_star - 0.2, 0.1, 0.0], [t_star + 0.2, 0.3, 0.0]]),
        covariances=np.stack([cov, cov]),
    )
    out = gmr_condition(model, t_star)
    m1, _ = analytic_conditional(model.means[0], cov, t_star)
    m2, _ = analytic_conditional(model.means[1], cov, t_star)
    assert np.allclose(out.responsibilities, [0.5, 0.5], atol=1e-12)
    assert np.allclose(out.mean, (m1 + m2) / 2, atol=1e-9)


def test_gmr_far_query_responsibilities_normalized():
    data = _line_dataset()
    model = fit_gmm(data, 3, seed=2)
    out = gmr_condition(model, 1e4)
    assert np.isclose(out.responsibilities.sum(), 1.0, atol=1e-9)
    assert np.all(out.responsibilities >= 0)


def test_gmr_grid_psd_and_normalized():
    data = _line_dataset(noise=0.02, writings=2, n=80)
    model = fit_gmm(data, 5, seed=13)
    ts = np.linspace(-0.2, 1.2, 1000)
    mean, cov, resp = gmr_condition_grid(model, ts)
    assert np.allclose(resp.sum(axis=1), 1.0, atol=1e-9)
    eigs = np.linalg.eigvalsh(cov)
    assert eigs.min() >= -1e-12
    sym_err = np.abs(cov - np.transpose(cov, (0, 2, 1))).max()
    assert sym_err < 1e-15


def test_style_mean_curve_identical_writings():
    t = np.linspace(0, 1, 60)
    pts = np.column_stack([np.linspace(0.1, 0.3, 60), np.linspace(0.0, 0.2, 60)])
    from handtutor.corpus import WaypointSeq

    w = WaypointSeq(t, pts)
    data = StyleDataset.from_writings([w, w, w])
    model = fit_gmm(data, 4, seed=8)
    curve = style_mean_curve(model, t)
    assert np.max(np.abs(curve.points - pts)) < 1e-3


def test_style_mean_curve_three_translated_lines():
    t = np.linspace(0, 1, 50)
    base = np.column_stack([t * 0.2, np.zeros(50)])
    from handtutor.corpus import WaypointSeq

    writings = [WaypointSeq(t, base + [0.0, dy]) for dy in (-0.01, 0.0, 0.01)]
    data = StyleDataset.from_writings(writings)
    model = fit_gmm(data, 4, seed=8)
    curve = style_mean_curve(model, t)
    assert np.max(np.abs(curve.points - base)) < 1e-3


def test_fit_warm_start_resumes_from_given_model():
    data = _line_dataset(noise=0.02, writings=3, n=70, seed=6)
    cold = fit_gmm(data, 4, seed=17)
    warm = fit_gmm(data, 4, seed=17, init=cold)
    cold_trace = cold.metadata["log_likelihood_trace"]
    warm_trace = warm.metadata["log_likelihood_trace"]
    # resumed EM starts where the cold fit stopped and never regresses
    assert warm_trace[0] >= cold_trace[-1] - 1e-6
    assert warm_trace[-1] >= cold_trace[-1] - 1e-9


def test_collapsed_component_pruned_and_recorded():
    data = _line_dataset(noise=0.02, writings=2, n=60, seed=3)
    healthy = fit_gmm(data, 3, seed=5)
    # poison one component far outside the data: its responsibilities underflow
    poisoned = GmmModel(
        weights=healthy.weights,
        means=np.vstack([healthy.means[:2], [1e6, 1e6, 1e6]]),
        covariances=healthy.covariances,
    )
    model = fit_gmm(data, 3, seed=5, init=poisoned)
    assert model.n_components == 2
    assert model.metadata["pruned_components"] == 1
    assert model.metadata["requested_components"] == 3
