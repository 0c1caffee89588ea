"""Teaching-trajectory generation with a style-derived multi-output GP.

The GP's prior mean is the style-model conditional mean and its matrix-valued
kernel mixes squared-exponential components through the style model's
responsibilities and per-component conditional covariances:

    k(t, t') = sum_z h_z(t) h_z(t') S_z exp(-(t - t')^2 / (2 l_z^2))

with S_z the 2x2 conditional covariance of component z. The generator
conditions this prior separately on the learner's recent waypoints and on the
reference via-points, then fuses the two per-time Gaussians by precision
weighting; the fused mean is the teaching trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.lapack import dpocon

from .corpus import WaypointSeq
from .style import GmmModel, _responsibilities, conditional_components, gmr_condition_grid
from .viapoints import ViaPointSet

__all__ = [
    "GmrGpKernel",
    "TrajectoryPosterior",
    "GpNumericsError",
    "build_kernel",
    "gp_posterior",
    "fuse_gaussians",
    "generate_training_waypoints",
]

COV_JITTER = 1e-6  # floor used when inverting per-time covariances for fusion
VIA_NOISE = 1e-6  # squared meters; via-points act as near-hard constraints
_COND_LIMIT = 1e12


class GpNumericsError(RuntimeError):
    """Gram matrix too ill-conditioned to factor reliably."""


@dataclass(frozen=True)
class GmrGpKernel:
    """Matrix-valued kernel derived from a fitted style model."""

    model: GmmModel
    length_scales: np.ndarray
    noise: np.ndarray  # 2x2 observation noise added per sample

    def __post_init__(self):
        ls = np.asarray(self.length_scales, dtype=float)
        if len(ls) != self.model.n_components or np.any(ls <= 0):
            raise ValueError("need one positive length-scale per mixture component")
        nz = np.asarray(self.noise, dtype=float)
        if nz.shape != (2, 2):
            raise ValueError("noise must be a 2x2 matrix")
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "noise", nz)

    def __call__(self, t: float, t_prime: float) -> np.ndarray:
        """Evaluate the 2x2 kernel block at one pair of times."""
        return self.gram(np.array([t]), np.array([t_prime]))[:2, :2]

    def gram(self, t1, t2) -> np.ndarray:
        """Dense Gram matrix over two time grids, shape (2 n1, 2 n2)."""
        t1 = np.asarray(t1, dtype=float).ravel()
        t2 = np.asarray(t2, dtype=float).ravel()
        h1 = _responsibilities(self.model, t1)  # (n1, Z)
        h2 = _responsibilities(self.model, t2)
        *_, cond_cov = conditional_components(self.model)
        dt = t1[:, None] - t2[None, :]
        scalar = np.empty((self.model.n_components, len(t1), len(t2)))
        for z, ell in enumerate(self.length_scales):
            scalar[z] = np.exp(-(dt * dt) / (2.0 * ell * ell)) * np.outer(h1[:, z], h2[:, z])
        blocks = np.einsum("znm,zde->ndme", scalar, cond_cov)
        return blocks.reshape(2 * len(t1), 2 * len(t2))


@dataclass(frozen=True)
class TrajectoryPosterior:
    """Per-time Gaussian over pen position along a timestamp grid."""

    timestamps: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.covariances, dtype=float)
        n = len(ts)
        if mu.shape != (n, 2) or cov.shape != (n, 2, 2):
            raise ValueError("posterior arrays have inconsistent shapes")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    def __len__(self) -> int:
        return len(self.timestamps)

    def mean_seq(self) -> WaypointSeq:
        return WaypointSeq(self.timestamps, self.means)

    def sample(self, seed: int) -> WaypointSeq:
        """Independent per-time draw from the posterior marginals."""
        rng = np.random.default_rng(seed)
        pts = np.empty_like(self.means)
        for i in range(len(self)):
            cov = self.covariances[i] + COV_JITTER * np.eye(2)
            pts[i] = rng.multivariate_normal(self.means[i], cov, method="cholesky")
        return WaypointSeq(self.timestamps, pts)


def build_kernel(model: GmmModel, length_scales, noise) -> GmrGpKernel:
    """Assemble the style-derived kernel; component covariances must be PSD."""
    *_, cond_cov = conditional_components(model)
    for z in range(model.n_components):
        if np.linalg.eigvalsh(cond_cov[z])[0] < -1e-10:
            raise ValueError(f"component {z} conditional covariance is not PSD")
    return GmrGpKernel(model, np.asarray(length_scales, dtype=float), np.asarray(noise, dtype=float))


def default_length_scales(model: GmmModel, duration: float) -> np.ndarray:
    return np.full(model.n_components, duration / model.n_components)


def _spd_solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve gram @ x = rhs via Cholesky; reject ill-conditioned systems."""
    try:
        factor = cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise GpNumericsError(f"Gram factorization failed ({exc}); increase observation noise") from None
    anorm = np.linalg.norm(gram, 1)
    rcond, info = dpocon(factor[0], anorm, uplo=b"L")
    if info != 0 or (rcond > 0 and 1.0 / rcond > _COND_LIMIT):
        raise GpNumericsError(
            f"Gram matrix condition estimate {1.0 / max(rcond, 1e-300):.2e} exceeds "
            f"{_COND_LIMIT:.0e}; increase observation noise"
        )
    return cho_solve(factor, rhs, check_finite=False)


def gp_posterior(
    prior_mean,
    kernel: GmrGpKernel,
    observations,
    queries,
    obs_noise: np.ndarray | None = None,
    obs_counts=None,
) -> TrajectoryPosterior:
    """Exact multi-output GP posterior at the query times.

    prior_mean maps a time grid to (n, 2) means. observations is a list of
    (t, (x, y)) pairs (or arrays); obs_noise overrides the kernel's per-sample
    noise. obs_counts marks replicated observations: an entry of c at index i
    means the observation is the average of c independent samples at the same
    time, so its noise is divided by c (exact collapsing of repeated inputs).
    """
    t_query = np.asarray(queries, dtype=float).ravel()
    mu_q = np.asarray(prior_mean(t_query), dtype=float)
    k_qq = kernel.gram(t_query, t_query)
    nq = len(t_query)

    idx = np.arange(nq)
    if len(observations) == 0:
        covs = k_qq.reshape(nq, 2, nq, 2)
        marg = covs[idx, :, idx, :]
        return TrajectoryPosterior(t_query, mu_q, marg)

    t_obs = np.asarray([o[0] for o in observations], dtype=float)
    y_obs = np.asarray([o[1] for o in observations], dtype=float)
    no = len(t_obs)

    noise = np.asarray(obs_noise if obs_noise is not None else kernel.noise, dtype=float)
    counts = np.ones(no) if obs_counts is None else np.asarray(obs_counts, dtype=float)

    gram = kernel.gram(t_obs, t_obs)
    for i in range(no):
        gram[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] += noise / counts[i]

    mu_o = np.asarray(prior_mean(t_obs), dtype=float)
    resid = (y_obs - mu_o).reshape(2 * no)

    k_qo = kernel.gram(t_query, t_obs)
    alpha = _spd_solve(gram, resid)
    v = _spd_solve(gram, k_qo.T)

    mean = mu_q + (k_qo @ alpha).reshape(nq, 2)
    cov_full = (k_qq - k_qo @ v).reshape(nq, 2, nq, 2)
    marg = cov_full[idx, :, idx, :]
    marg = (marg + np.transpose(marg, (0, 2, 1))) / 2.0
    return TrajectoryPosterior(t_query, mean, marg)


def _regularize_batch(covs: np.ndarray) -> np.ndarray:
    """Symmetrize (n,2,2) covariances and lift the smallest eigenvalue to the floor."""
    c = (covs + np.transpose(covs, (0, 2, 1))) / 2.0
    half_tr = (c[:, 0, 0] + c[:, 1, 1]) / 2.0
    radius = np.sqrt(((c[:, 0, 0] - c[:, 1, 1]) / 2.0) ** 2 + c[:, 0, 1] ** 2)
    eig_min = half_tr - radius
    bump = np.maximum(COV_JITTER - eig_min, 0.0)
    out = c.copy()
    out[:, 0, 0] += bump
    out[:, 1, 1] += bump
    return out


def _inv_batch(covs: np.ndarray) -> np.ndarray:
    det = covs[:, 0, 0] * covs[:, 1, 1] - covs[:, 0, 1] * covs[:, 1, 0]
    inv = np.empty_like(covs)
    inv[:, 0, 0] = covs[:, 1, 1]
    inv[:, 1, 1] = covs[:, 0, 0]
    inv[:, 0, 1] = -covs[:, 0, 1]
    inv[:, 1, 0] = -covs[:, 1, 0]
    return inv / det[:, None, None]


def fuse_gaussians(a: TrajectoryPosterior, b: TrajectoryPosterior) -> TrajectoryPosterior:
    """Per-time product of Gaussians (precision-weighted fusion)."""
    if len(a) != len(b) or not np.allclose(a.timestamps, b.timestamps, atol=1e-12):
        raise ValueError("posteriors must share identical timestamps")
    pa = _inv_batch(_regularize_batch(a.covariances))
    pb = _inv_batch(_regularize_batch(b.covariances))
    covs = _inv_batch(pa + pb)
    covs = (covs + np.transpose(covs, (0, 2, 1))) / 2.0
    rhs = np.einsum("nij,nj->ni", pa, a.means) + np.einsum("nij,nj->ni", pb, b.means)
    means = np.einsum("nij,nj->ni", covs, rhs)

    # identical inputs halve exactly (regularization-free algebraic shortcut)
    same = np.all(a.covariances == b.covariances, axis=(1, 2)) & np.all(
        a.means == b.means, axis=1
    )
    if np.any(same):
        covs[same] = 0.5 * a.covariances[same]
        means[same] = a.means[same]
    return TrajectoryPosterior(a.timestamps, means, covs)


def _marginals_from_whitened(k_qq_diag: np.ndarray, whitened: np.ndarray) -> np.ndarray:
    """Posterior 2x2 marginals k(t,t) - B^T B per time, from B = L^-1 K_oq."""
    b0 = whitened[:, 0::2]
    b1 = whitened[:, 1::2]
    covs = k_qq_diag.copy()
    covs[:, 0, 0] -= np.sum(b0 * b0, axis=0)
    covs[:, 1, 1] -= np.sum(b1 * b1, axis=0)
    cross = np.sum(b0 * b1, axis=0)
    covs[:, 0, 1] -= cross
    covs[:, 1, 0] -= cross
    return covs


def _grid_posteriors(kernel, style, ts, collapsed, counts, via, noise):
    """Both conditionals on a shared grid, reusing one Gram factorization each.

    Valid when learner observation times equal the grid and via times are grid
    points; algebraically identical to two gp_posterior calls.
    """
    from scipy.linalg import solve_triangular

    n = len(ts)
    idx = np.arange(n)
    mu, _, _ = gmr_condition_grid(style, ts)
    gram = kernel.gram(ts, ts)
    k_diag = gram.reshape(n, 2, n, 2)[idx, :, idx, :].copy()

    # learner-conditioned posterior (replicate-collapsed noise on the diagonal)
    a = gram.copy()
    av = a.reshape(n, 2, n, 2)
    av[idx, :, idx, :] += noise / counts[:, None, None]
    try:
        factor = cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise GpNumericsError(f"Gram factorization failed ({exc}); increase observation noise") from None
    resid = (collapsed - mu).reshape(2 * n)
    alpha = cho_solve(factor, resid, check_finite=False)
    mean_l = mu + (gram @ alpha).reshape(n, 2)
    whitened = solve_triangular(factor[0], gram, lower=True, check_finite=False)
    cov_l = _marginals_from_whitened(k_diag, whitened)
    post_l = TrajectoryPosterior(ts, mean_l, cov_l)

    # via-conditioned posterior from the same prior (small system)
    v_idx = np.searchsorted(ts, via.times)
    rows = np.repeat(2 * v_idx, 2) + np.tile([0, 1], len(v_idx))
    k_vv = gram[np.ix_(rows, rows)].copy()
    k_vv[np.arange(len(rows)), np.arange(len(rows))] += VIA_NOISE
    k_qv = gram[:, rows]
    try:
        factor_v = cho_factor(k_vv, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise GpNumericsError(f"via Gram factorization failed ({exc})") from None
    resid_v = (via.points - mu[v_idx]).reshape(-1)
    mean_v = mu + (k_qv @ cho_solve(factor_v, resid_v, check_finite=False)).reshape(n, 2)
    whitened_v = solve_triangular(factor_v[0], k_qv.T, lower=True, check_finite=False)
    cov_v = _marginals_from_whitened(k_diag, whitened_v)
    post_v = TrajectoryPosterior(ts, mean_v, cov_v)
    return post_l, post_v


def generate_training_waypoints(
    style: GmmModel,
    via: ViaPointSet,
    learner_data,
    timestamps,
    seed: int = 0,
    length_scales=None,
    noise: np.ndarray | None = None,
    sample: bool = False,
):
    """Produce teaching waypoints from the style prior, learner data, and via-points.

    Two posteriors from the same prior are fused: one conditioned on the
    learner's pooled waypoints (observation noise from the kernel), one on the
    via-points (near-zero noise). The fused mean is the returned trajectory;
    with sample=True a seeded per-time draw is returned instead.
    """
    ts = np.asarray(timestamps, dtype=float).ravel()
    if len(via) == 0:
        raise ValueError("via-point set must be non-empty")
    duration = float(max(ts[-1], learner_data.times.max()) - min(ts[0], learner_data.times.min()))
    if length_scales is None:
        length_scales = default_length_scales(style, max(duration, 1e-6))
    if noise is None:
        noise = np.eye(2) * 1e-4
    kernel = build_kernel(style, length_scales, noise)

    # Collapse replicated learner observations (same timestamp -> mean with noise/c).
    times = learner_data.times
    points = learner_data.points
    uniq, inverse, counts = np.unique(times, return_inverse=True, return_counts=True)
    sums = np.zeros((len(uniq), 2))
    np.add.at(sums, inverse, points)
    collapsed = sums / counts[:, None]

    on_grid = (
        len(uniq) == len(ts)
        and np.array_equal(uniq, ts)
        and np.all(np.isin(via.times, ts))
    )
    if on_grid:
        post_learner, post_via = _grid_posteriors(
            kernel, style, ts, collapsed, counts, via, np.asarray(noise, dtype=float)
        )
    else:
        def prior_mean(tq):
            mean, _, _ = gmr_condition_grid(style, np.asarray(tq, dtype=float))
            return mean

        learner_obs = list(zip(uniq, collapsed))
        post_learner = gp_posterior(prior_mean, kernel, learner_obs, ts, obs_counts=counts)
        via_obs = list(zip(via.times, via.points))
        post_via = gp_posterior(prior_mean, kernel, via_obs, ts, obs_noise=np.eye(2) * VIA_NOISE)

    fused = fuse_gaussians(post_learner, post_via)
    if sample:
        return fused.sample(seed), fused
    return fused.mean_seq(), fused
