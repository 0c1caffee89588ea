"""Writing-style encoding: Gaussian mixture over (time, point) and its conditionals.

A Z-component mixture is fit with EM to the joint 3-D samples (t, x, y) of a
learner's recent writings of one stroke. Conditioning the mixture on time
yields a per-instant Gaussian over pen position (mean curve plus variability)
and per-component responsibilities; these drive the trajectory generator's
prior mean and kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import WaypointSeq

__all__ = [
    "StyleDataset",
    "GmmModel",
    "GmrOutput",
    "StyleError",
    "fit_gmm",
    "gmr_condition",
    "gmr_condition_grid",
    "style_mean_curve",
    "conditional_components",
]

COV_FLOOR = 1e-6  # diagonal regularization, squared meters / squared seconds
_EM_TOL = 1e-6
_EM_MAX_ITER = 200


class StyleError(ValueError):
    """Invalid style dataset or mixture-fitting failure."""


@dataclass(frozen=True)
class StyleDataset:
    """Pooled (t, x, y) samples from the last L writings of one stroke."""

    times: np.ndarray
    points: np.ndarray
    source_iterations: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or len(t) != len(p):
            raise StyleError("dataset needs times (n,) and points (n, 2) of equal length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @classmethod
    def from_writings(cls, writings: list[WaypointSeq]) -> "StyleDataset":
        times = np.concatenate([w.timestamps for w in writings])
        points = np.vstack([w.points for w in writings])
        return cls(times, points, len(writings))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def joint(self) -> np.ndarray:
        return np.column_stack([self.times, self.points])


@dataclass(frozen=True)
class GmmModel:
    """Mixture over (t, x, y): weights h_z, means (Z,3), covariances (Z,3,3)."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.covariances, dtype=float)
        z = len(w)
        if mu.shape != (z, 3) or cov.shape != (z, 3, 3):
            raise StyleError("inconsistent mixture shapes")
        if not np.isclose(w.sum(), 1.0, atol=1e-9) or np.any(w <= 0):
            raise StyleError("weights must be positive and sum to 1")
        for k in range(z):
            if not np.allclose(cov[k], cov[k].T, atol=1e-12):
                raise StyleError(f"covariance {k} not symmetric")
            if np.linalg.eigvalsh(cov[k])[0] < COV_FLOOR * (1 - 1e-6):
                raise StyleError(f"covariance {k} below regularization floor")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    @property
    def n_components(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class GmrOutput:
    """Conditional at one time: mean (2,), covariance (2,2), responsibilities (Z,)."""

    mean: np.ndarray
    covariance: np.ndarray
    responsibilities: np.ndarray


def _log_gauss(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    chol = np.linalg.cholesky(cov)
    sol = np.linalg.solve(chol, (x - mean).T)
    maha = np.sum(sol * sol, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * np.log(2.0 * np.pi) + logdet + maha)


def _log_gauss_stack(x: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """Log-density of x (n,d) under every component at once; returns (n, Z).

    Specialized for d == 3 with an explicit symmetric inverse (hot path of EM);
    falls back to Cholesky otherwise.
    """
    d = x.shape[1]
    if d == 3:
        a, b, c = covs[:, 0, 0], covs[:, 0, 1], covs[:, 0, 2]
        e, f, g = covs[:, 1, 1], covs[:, 1, 2], covs[:, 2, 2]
        ca = e * g - f * f
        cb = c * f - b * g
        cc = b * f - c * e
        det = a * ca + b * cb + c * cc
        inv = np.empty_like(covs)
        inv[:, 0, 0] = ca
        inv[:, 0, 1] = inv[:, 1, 0] = cb
        inv[:, 0, 2] = inv[:, 2, 0] = cc
        inv[:, 1, 1] = a * g - c * c
        inv[:, 1, 2] = inv[:, 2, 1] = b * c - a * f
        inv[:, 2, 2] = a * e - b * b
        inv /= det[:, None, None]
        diff = x[None, :, :] - means[:, None, :]  # (Z, n, 3)
        maha = np.einsum("znd,zde,zne->zn", diff, inv, diff)
        logdet = np.log(det)
        return (-0.5 * (3 * np.log(2.0 * np.pi) + logdet[:, None] + maha)).T
    chols = np.linalg.cholesky(covs)  # (Z, d, d)
    diff = x[None, :, :] - means[:, None, :]  # (Z, n, d)
    sol = np.linalg.solve(chols, diff.transpose(0, 2, 1))  # (Z, d, n)
    maha = np.sum(sol * sol, axis=1)  # (Z, n)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chols, axis1=1, axis2=2)), axis=1)
    return (-0.5 * (d * np.log(2.0 * np.pi) + logdet[:, None] + maha)).T


def _kmeans_pp(data: np.ndarray, z: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding followed by a short Lloyd refinement."""
    n = len(data)
    centers = np.empty((z, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for k in range(1, z):
        total = d2.sum()
        if total <= 0:
            centers[k] = data[rng.integers(n)]
        else:
            centers[k] = data[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((data - centers[k]) ** 2, axis=1))
    for _ in range(10):
        dist = np.sum((data[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dist, axis=1)
        for k in range(z):
            mask = labels == k
            if mask.any():
                centers[k] = data[mask].mean(axis=0)
    return centers


def _em(data: np.ndarray, z: int, rng: np.random.Generator, init: "GmmModel | None" = None):
    n, d = data.shape
    floor = COV_FLOOR * np.eye(d)
    if init is not None and init.n_components == z:
        weights = init.weights.copy()
        means = init.means.copy()
        covs = init.covariances.copy()
    else:
        centers = _kmeans_pp(data, z, rng)
        dist = np.sum((data[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dist, axis=1)
        weights = np.empty(z)
        means = centers.copy()
        covs = np.empty((z, d, d))
        for k in range(z):
            mask = labels == k
            count = mask.sum()
            weights[k] = max(count, 1) / n
            pts = data[mask] if count > 1 else data
            diff = pts - pts.mean(axis=0)
            covs[k] = diff.T @ diff / max(len(pts) - 1, 1) + floor
            if count > 0:
                means[k] = data[mask].mean(axis=0)
        weights = weights / weights.sum()

    ll_trace = []
    prev_ll = -np.inf
    for _ in range(_EM_MAX_ITER):
        log_p = np.log(weights)[None, :] + _log_gauss_stack(data, means, covs)
        log_norm = np.logaddexp.reduce(log_p, axis=1)
        ll = float(np.sum(log_norm))
        ll_trace.append(ll)
        resp = np.exp(log_p - log_norm[:, None])

        nk = resp.sum(axis=0)
        if np.any(nk < 1e-10) or not np.isfinite(ll):
            return None, ll_trace  # signal pruning
        weights = nk / n
        means = (resp.T @ data) / nk[:, None]
        for k in range(z):
            diff = data - means[k]
            cov = (resp[:, k][:, None] * diff).T @ diff / nk[k]
            cov = (cov + cov.T) / 2.0
            # clamp (rather than always inflate) so the exact EM update, and
            # with it monotone log-likelihood, is preserved whenever the
            # floor is inactive
            eig_min = float(np.linalg.eigvalsh(cov)[0])
            if eig_min < COV_FLOOR:
                cov = cov + (COV_FLOOR - eig_min) * np.eye(d)
            covs[k] = cov

        if prev_ll > -np.inf and abs(ll - prev_ll) < _EM_TOL * max(abs(prev_ll), 1.0):
            break
        prev_ll = ll
    return (weights, means, covs), ll_trace


def fit_gmm(data: StyleDataset, z: int, seed: int, init: GmmModel | None = None) -> GmmModel:
    """Fit a z-component mixture to the joint samples with seeded EM.

    EM runs to convergence (relative log-likelihood change < 1e-6) or 200
    iterations; covariances carry a diagonal floor. init warm-starts EM from
    an earlier fit of the same component count (k-means++ otherwise). If a
    component collapses (vanishing responsibility mass), the fit is retried
    with z-1 components and the pruning is recorded in the model metadata.
    """
    if z < 1:
        raise StyleError(f"z must be >= 1, got {z}")
    n = len(data)
    if n < z * 4:
        raise StyleError(f"too few samples: {n} < {z * 4} (need 4 per component)")

    joint = data.joint
    pruned = 0
    zz = z
    while zz >= 1:
        rng = np.random.default_rng(seed)
        params, ll_trace = _em(joint, zz, rng, init=init if zz == z else None)
        if params is not None:
            weights, means, covs = params
            return GmmModel(
                weights,
                means,
                covs,
                metadata={
                    "seed": seed,
                    "requested_components": z,
                    "pruned_components": pruned,
                    "log_likelihood_trace": ll_trace,
                },
            )
        pruned += 1
        zz -= 1
    raise StyleError("EM failed for every component count down to 1")


def conditional_components(model: GmmModel):
    """Per-component linear-Gaussian conditionals of (x, y) given t.

    Returns (slopes (Z,2), intercept means at t=0 offsets handled by caller,
    conditional covariances (Z,2,2)); used by both GMR and the kernel builder.
    """
    mu_t = model.means[:, 0]
    mu_x = model.means[:, 1:]
    s_tt = model.covariances[:, 0, 0]
    s_xt = model.covariances[:, 1:, 0]
    gain = s_xt / s_tt[:, None]  # (Z, 2)
    cond_cov = model.covariances[:, 1:, 1:] - gain[:, :, None] * s_xt[:, None, :]
    cond_cov = (cond_cov + np.transpose(cond_cov, (0, 2, 1))) / 2.0
    return mu_t, mu_x, s_tt, gain, cond_cov


def _responsibilities(model: GmmModel, t: np.ndarray) -> np.ndarray:
    """h_z(t) over a time grid, normalized in log space. Shape (len(t), Z)."""
    mu_t, _, s_tt, _, _ = conditional_components(model)
    log_w = np.log(model.weights)
    diff = t[:, None] - mu_t[None, :]
    log_p = log_w[None, :] - 0.5 * (
        np.log(2.0 * np.pi * s_tt)[None, :] + diff * diff / s_tt[None, :]
    )
    log_norm = np.logaddexp.reduce(log_p, axis=1)
    return np.exp(log_p - log_norm[:, None])


def gmr_condition_grid(model: GmmModel, times: np.ndarray):
    """Vectorized GMR over a time grid.

    Returns (means (n,2), covariances (n,2,2), responsibilities (n,Z)).
    The mixture conditional covariance is moment-matched across components.
    """
    t = np.asarray(times, dtype=float).ravel()
    mu_t, mu_x, s_tt, gain, cond_cov = conditional_components(model)
    resp = _responsibilities(model, t)

    # Component conditional means at each t: (n, Z, 2)
    comp_mean = mu_x[None, :, :] + gain[None, :, :] * (t[:, None] - mu_t[None, :])[:, :, None]
    mean = np.einsum("nz,nzd->nd", resp, comp_mean)

    centered = comp_mean - mean[:, None, :]
    spread = np.einsum("nz,nzd,nze->nde", resp, centered, centered)
    cov = np.einsum("nz,zde->nde", resp, cond_cov) + spread
    cov = (cov + np.transpose(cov, (0, 2, 1))) / 2.0
    return mean, cov, resp


def gmr_condition(model: GmmModel, t: float) -> GmrOutput:
    """Condition the mixture on a single time."""
    mean, cov, resp = gmr_condition_grid(model, np.array([float(t)]))
    return GmrOutput(mean[0], cov[0], resp[0])


def style_mean_curve(model: GmmModel, timestamps) -> WaypointSeq:
    """The GMR mean evaluated along a timestamp grid."""
    ts = np.asarray(timestamps, dtype=float)
    mean, _, _ = gmr_condition_grid(model, ts)
    return WaypointSeq(ts, mean)
