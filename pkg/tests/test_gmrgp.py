import numpy as np
import pytest

from handtutor.corpus import WaypointSeq
from handtutor.gmrgp import (
    GpNumericsError,
    TrajectoryPosterior,
    build_kernel,
    fuse_gaussians,
    generate_training_waypoints,
    gp_posterior,
)
from handtutor.style import GmmModel, StyleDataset, fit_gmm, gmr_condition_grid, style_mean_curve
from handtutor.viapoints import ViaPointSet


def _model(z=3, seed=0, spread=0.05):
    rng = np.random.default_rng(seed)
    t = np.tile(np.linspace(0, 1, 80), 3)
    pts = np.column_stack([np.sin(2 * t), 0.5 * np.cos(t)]) * 0.1
    pts = pts + rng.normal(0, spread * 0.1, size=pts.shape)
    return fit_gmm(StyleDataset(t, pts, 3), z, seed=seed)


def _kernel(model, ell=0.2, noise=1e-4):
    return build_kernel(model, np.full(model.n_components, ell), np.eye(2) * noise)


def _prior(model):
    return lambda tq: gmr_condition_grid(model, np.asarray(tq, dtype=float))[0]


def test_single_component_kernel_reduction():
    model = _model(z=1)
    kern = _kernel(model, ell=0.3)
    from handtutor.style import conditional_components

    *_, cond_cov = conditional_components(model)
    k_tt = kern(0.4, 0.4)
    assert np.allclose(k_tt, cond_cov[0], atol=1e-12)  # h == 1 for z=1
    k_far = kern(0.0, 0.9)
    expected = cond_cov[0] * np.exp(-(0.9**2) / (2 * 0.3**2))
    assert np.allclose(k_far, expected, atol=1e-12)


def test_kernel_symmetry():
    model = _model(z=4, seed=3)
    kern = _kernel(model)
    rng = np.random.default_rng(1)
    for _ in range(10):
        t1, t2 = rng.uniform(0, 1, 2)
        assert np.allclose(kern(t1, t2), kern(t2, t1).T, atol=1e-12)


def test_gram_psd():
    model = _model(z=4, seed=5)
    kern = _kernel(model)
    rng = np.random.default_rng(2)
    ts = rng.uniform(0, 1, 20)
    gram = kern.gram(ts, ts)
    assert np.allclose(gram, gram.T, atol=1e-10)
    eigs = np.linalg.eigvalsh((gram + gram.T) / 2)
    assert eigs.min() >= -1e-8


def test_zero_observations_returns_prior():
    model = _model(z=2, seed=7)
    kern = _kernel(model)
    ts = np.linspace(0, 1, 7)
    post = gp_posterior(_prior(model), kern, [], ts)
    prior_mean = _prior(model)(ts)
    assert np.allclose(post.means, prior_mean, atol=1e-12)
    for i, t in enumerate(ts):
        assert np.allclose(post.covariances[i], kern(t, t), atol=1e-12)


def test_single_observation_interpolation_limit():
    model = _model(z=2, seed=8)
    kern = build_kernel(model, [0.3, 0.3], np.eye(2) * 1e-12)
    obs_t = 0.5
    obs_y = np.array([0.07, -0.02])
    post = gp_posterior(_prior(model), kern, [(obs_t, obs_y)], [obs_t])
    assert np.allclose(post.means[0], obs_y, atol=1e-6)
    assert np.all(np.abs(post.covariances[0]) < 1e-6)


def dense_joint_oracle(prior_mean, kernel, observations, queries, obs_noise):
    """Assemble the full joint Gaussian and condition by block formula."""
    t_obs = np.array([o[0] for o in observations])
    y = np.vstack([o[1] for o in observations]).reshape(-1)
    k_oo = kernel.gram(t_obs, t_obs)
    for i in range(len(t_obs)):
        k_oo[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] += obs_noise
    k_qo = kernel.gram(queries, t_obs)
    k_qq = kernel.gram(queries, queries)
    mu_o = prior_mean(t_obs).reshape(-1)
    mu_q = prior_mean(queries).reshape(-1)
    inv = np.linalg.inv(k_oo)
    mean = mu_q + k_qo @ inv @ (y - mu_o)
    cov = k_qq - k_qo @ inv @ k_qo.T
    nq = len(queries)
    means = mean.reshape(nq, 2)
    covs = cov.reshape(nq, 2, nq, 2)[np.arange(nq), :, np.arange(nq), :]
    return means, covs


def test_posterior_matches_dense_oracle_randomized():
    rng = np.random.default_rng(42)
    model = _model(z=3, seed=11)
    failures = 0
    for trial in range(100):
        n_obs = int(rng.integers(1, 11))
        n_q = int(rng.integers(1, 21))
        noise = 10 ** rng.uniform(-6, -3)
        kern = build_kernel(model, np.full(model.n_components, rng.uniform(0.1, 0.5)), np.eye(2) * noise)
        t_obs = np.sort(rng.uniform(0, 1, n_obs))
        obs = [(t, rng.normal(0, 0.05, 2)) for t in t_obs]
        queries = np.sort(rng.uniform(0, 1, n_q))
        try:
            post = gp_posterior(_prior(model), kern, obs, queries)
        except GpNumericsError:
            failures += 1
            continue
        means, covs = dense_joint_oracle(_prior(model), kern, obs, queries, np.eye(2) * noise)
        assert np.allclose(post.means, means, atol=1e-8), trial
        assert np.allclose(post.covariances, covs, atol=1e-8), trial
    assert failures < 10


def test_posterior_variance_never_exceeds_prior():
    rng = np.random.default_rng(3)
    model = _model(z=3, seed=13)
    kern = _kernel(model, ell=0.25, noise=1e-5)
    obs = [(float(t), rng.normal(0, 0.03, 2)) for t in rng.uniform(0, 1, 6)]
    queries = np.linspace(0, 1, 25)
    post = gp_posterior(_prior(model), kern, obs, queries)
    for i, t in enumerate(queries):
        diff = kern(t, t) - post.covariances[i]
        assert np.linalg.eigvalsh((diff + diff.T) / 2).min() >= -1e-8


def test_adding_observation_shrinks_variance():
    rng = np.random.default_rng(9)
    model = _model(z=2, seed=15)
    kern = _kernel(model, ell=0.3, noise=1e-5)
    obs = [(0.3, np.array([0.05, 0.0]))]
    queries = np.linspace(0, 1, 15)
    post1 = gp_posterior(_prior(model), kern, obs, queries)
    post2 = gp_posterior(_prior(model), kern, obs + [(0.7, np.array([0.0, 0.04]))], queries)
    for i in range(len(queries)):
        diff = post1.covariances[i] - post2.covariances[i]
        assert np.linalg.eigvalsh((diff + diff.T) / 2).min() >= -1e-8


def test_ill_conditioned_gram_raises():
    model = _model(z=1, seed=2)
    kern = build_kernel(model, [0.5], np.zeros((2, 2)))
    obs = [(0.5, np.zeros(2)), (0.5 + 1e-13, np.zeros(2))]
    with pytest.raises(GpNumericsError, match="noise"):
        gp_posterior(_prior(model), kern, obs, np.linspace(0, 1, 4))


def _posterior(ts, means, covs):
    return TrajectoryPosterior(np.asarray(ts, float), np.asarray(means, float), np.asarray(covs, float))


def test_fuse_identical_halves_covariance_exactly():
    ts = np.linspace(0, 1, 5)
    means = np.random.default_rng(0).normal(size=(5, 2))
    covs = np.stack([np.diag([0.02, 0.03]) for _ in range(5)])
    a = _posterior(ts, means, covs)
    fused = fuse_gaussians(a, a)
    assert np.array_equal(fused.covariances, 0.5 * covs)
    assert np.array_equal(fused.means, means)


def test_fuse_uninformative_side_is_identity():
    ts = np.linspace(0, 1, 4)
    rng = np.random.default_rng(1)
    means_a = rng.normal(size=(4, 2))
    covs_a = np.stack([np.diag([0.01, 0.02]) for _ in range(4)])
    a = _posterior(ts, means_a, covs_a)
    b = _posterior(ts, rng.normal(size=(4, 2)), np.stack([np.eye(2) * 1e6] * 4))
    fused = fuse_gaussians(a, b)
    assert np.allclose(fused.means, means_a, atol=1e-6)
    assert np.allclose(fused.covariances, covs_a, atol=1e-6)


def test_fuse_matches_scalar_precision_weighting():
    rng = np.random.default_rng(5)
    for _ in range(20):
        va, vb = rng.uniform(0.001, 0.1, 2)
        ma, mb = rng.normal(0, 1, 2)
        a = _posterior([0.0, 1.0], [[ma, 0], [ma, 0]], [np.diag([va, va])] * 2)
        b = _posterior([0.0, 1.0], [[mb, 0], [mb, 0]], [np.diag([vb, vb])] * 2)
        fused = fuse_gaussians(a, b)
        v_expect = 1.0 / (1 / va + 1 / vb)
        m_expect = v_expect * (ma / va + mb / vb)
        assert np.allclose(fused.covariances[0][0, 0], v_expect, atol=1e-10)
        assert np.allclose(fused.means[0][0], m_expect, atol=1e-10)


def test_fuse_commutative_and_associative():
    rng = np.random.default_rng(7)
    def rand_post():
        means = rng.normal(size=(3, 2))
        covs = []
        for _ in range(3):
            m = rng.normal(size=(2, 2))
            covs.append(m @ m.T + 0.01 * np.eye(2))
        return _posterior([0, 0.5, 1.0], means, np.stack(covs))

    a, b, c = rand_post(), rand_post(), rand_post()
    ab = fuse_gaussians(a, b)
    ba = fuse_gaussians(b, a)
    assert np.allclose(ab.means, ba.means, atol=1e-8)
    assert np.allclose(ab.covariances, ba.covariances, atol=1e-8)
    abc1 = fuse_gaussians(fuse_gaussians(a, b), c)
    abc2 = fuse_gaussians(a, fuse_gaussians(b, c))
    assert np.allclose(abc1.means, abc2.means, atol=1e-6)
    assert np.allclose(abc1.covariances, abc2.covariances, atol=1e-8)


def test_fuse_mean_between_inputs_in_1d_projection():
    rng = np.random.default_rng(8)
    a = _posterior([0.0], [[0.2, 0.0]], [np.diag([0.01, 0.01])])
    b = _posterior([0.0], [[0.6, 0.0]], [np.diag([0.04, 0.04])])
    fused = fuse_gaussians(a, b)
    assert 0.2 <= fused.means[0][0] <= 0.6


def test_fuse_rejects_mismatched_timestamps():
    a = _posterior([0.0, 1.0], np.zeros((2, 2)), np.stack([np.eye(2) * 0.1] * 2))
    b = _posterior([0.0, 2.0], np.zeros((2, 2)), np.stack([np.eye(2) * 0.1] * 2))
    with pytest.raises(ValueError):
        fuse_gaussians(a, b)


def _stroke_setup(seed=0, n=60):
    """Consistent writings along a curve plus a via set on the same grid."""
    rng = np.random.default_rng(seed)
    ts = np.linspace(0, 1.2, n)
    base = np.column_stack([0.2 * np.sin(2 * ts) + 0.1, 0.15 * ts])
    writings = [
        WaypointSeq(ts, base + rng.normal(0, 0.004, size=base.shape)) for _ in range(3)
    ]
    data = StyleDataset.from_writings(writings)
    model = fit_gmm(data, 5, seed=seed)
    return ts, base, data, model


def _consistent_data(model, ts):
    """Learner dataset lying exactly on the style mean (consistent conditioning)."""
    mean_curve = style_mean_curve(model, ts).points
    return StyleDataset(np.tile(ts, 3), np.tile(mean_curve, (3, 1)), 3), mean_curve


def test_generate_via_on_style_mean_returns_style_mean():
    ts, base, data, model = _stroke_setup(seed=4)
    data_c, mean_curve = _consistent_data(model, ts)
    idx = np.array([0, 15, 30, 45, 59])
    via = ViaPointSet(ts[idx], mean_curve[idx], idx, 3)
    seq, post = generate_training_waypoints(model, via, data_c, ts)
    assert np.max(np.abs(seq.points - mean_curve)) < 1e-4


def test_generate_via_pulls_trajectory():
    # style variability must dominate the via noise for via-points to act as
    # near-hard anchors; use visibly scattered writings
    rng = np.random.default_rng(6)
    ts = np.linspace(0, 1.2, 60)
    base = np.column_stack([0.2 * np.sin(2 * ts) + 0.1, 0.15 * ts])
    writings = [WaypointSeq(ts, base + rng.normal(0, 0.02, size=base.shape)) for _ in range(3)]
    model = fit_gmm(StyleDataset.from_writings(writings), 5, seed=6)
    data_c, mean_curve = _consistent_data(model, ts)
    idx = np.array([0, 30, 59])
    via_points = mean_curve[idx].copy()
    via_points[1] += [0.05, 0.0]
    via = ViaPointSet(ts[idx], via_points, idx, 1)
    seq, post = generate_training_waypoints(model, via, data_c, ts, noise=np.eye(2) * 1e-2)
    assert np.linalg.norm(seq.points[30] - via_points[1]) < 1e-3
    assert np.linalg.norm(seq.points[0] - mean_curve[0]) < 5e-3


def test_generate_fast_path_matches_general_composition():
    ts, base, data, model = _stroke_setup(seed=9, n=40)
    mean_curve = style_mean_curve(model, ts).points
    idx = np.array([0, 20, 39])
    via = ViaPointSet(ts[idx], mean_curve[idx] + 0.01, idx, 1)
    fast_seq, fast_post = generate_training_waypoints(model, via, data, ts)

    # same inputs through the general gp_posterior + fuse composition
    from handtutor.gmrgp import VIA_NOISE, default_length_scales

    kern = build_kernel(model, default_length_scales(model, 1.2), np.eye(2) * 1e-4)
    uniq, inv, counts = np.unique(data.times, return_inverse=True, return_counts=True)
    sums = np.zeros((len(uniq), 2))
    np.add.at(sums, inv, data.points)
    collapsed = sums / counts[:, None]
    post_l = gp_posterior(_prior(model), kern, list(zip(uniq, collapsed)), ts, obs_counts=counts)
    post_v = gp_posterior(_prior(model), kern, list(zip(via.times, via.points)), ts,
                          obs_noise=np.eye(2) * VIA_NOISE)
    fused = fuse_gaussians(post_l, post_v)
    assert np.allclose(fast_seq.points, fused.means, atol=1e-8)
    assert np.allclose(fast_post.covariances, fused.covariances, atol=1e-8)

    # replicate collapsing is exact: uncollapsed conditioning agrees
    raw_obs = list(zip(data.times, data.points))
    post_raw = gp_posterior(_prior(model), kern, raw_obs, ts)
    fused_raw = fuse_gaussians(post_raw, post_v)
    assert np.allclose(fast_seq.points, fused_raw.means, atol=1e-7)
    assert np.allclose(fast_post.covariances, fused_raw.covariances, atol=1e-7)


def test_generate_sampling_is_seeded():
    ts, base, data, model = _stroke_setup(seed=12, n=30)
    mean_curve = style_mean_curve(model, ts).points
    idx = np.array([0, 15, 29])
    via = ViaPointSet(ts[idx], mean_curve[idx], idx, 1)
    s1, _ = generate_training_waypoints(model, via, data, ts, seed=5, sample=True)
    s2, _ = generate_training_waypoints(model, via, data, ts, seed=5, sample=True)
    s3, _ = generate_training_waypoints(model, via, data, ts, seed=6, sample=True)
    assert np.array_equal(s1.points, s2.points)
    assert not np.array_equal(s1.points, s3.points)
