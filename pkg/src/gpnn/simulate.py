"""Monte-Carlo verification of large-n neighbour-prediction limits.

Two equivalent sampling schemes are provided.  The efficient one exploits
locality: prediction at a test point only ever touches its m nearest
neighbours, so it suffices to sample each test point's (m+1)-dimensional
joint marginal instead of a full size-n synthetic response.  The expensive
scheme samples the full (n+1)-dimensional joint per test point and is kept as
a validity oracle for small n.

Per-point RNG streams are derived from (seed, point index) so parallel and
serial runs produce identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from . import gp, metrics, neighbors
from ._threads import single_threaded_blas
from .data import Dataset
from .kernels import KernelSpec, Theta, cross_vector, gram, gram_noise_free

_X_STREAM = 0
_POINT_STREAM = 1

FULL_JOINT_MAX_N = 500


@dataclass(frozen=True)
class SimConfig:
    n: int
    n_star: int
    m: int
    d: int
    gen_spec: KernelSpec
    gen_theta: Theta
    assumed: tuple[tuple[KernelSpec, Theta], ...]
    noise_dist: str = "gaussian"
    x_dist: str = "gaussian"
    seed: int = 0
    leaf_size: int = neighbors.DEFAULT_LEAF_SIZE

    def __post_init__(self) -> None:
        if self.n < self.m + 1:
            raise ValueError(f"need n >= m+1, got n={self.n}, m={self.m}")
        if min(self.n_star, self.m, self.d) < 1:
            raise ValueError("n_star, m and d must be positive")
        if self.noise_dist not in ("gaussian", "laplace"):
            raise ValueError(f"unknown noise_dist {self.noise_dist!r}")
        if self.x_dist != "gaussian":
            raise ValueError(f"unknown x_dist {self.x_dist!r}; inputs are drawn N(0, I/d)")
        if not self.assumed:
            raise ValueError("need at least one assumed (kernel, theta) pair")


@dataclass(frozen=True)
class SweepEntry:
    spec_hat: KernelSpec
    theta_hat: Theta
    report: metrics.MetricsReport
    se_mse: float
    se_nll: float
    se_cal: float


@dataclass(frozen=True)
class SweepResult:
    cfg: SimConfig
    scheme: str
    entries: list[SweepEntry] = field(default_factory=list)


def sample_mvn(cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw from N(0, cov) via the Cholesky factor (jitter ladder applies)."""
    L = gp.cholesky(np.asarray(cov, dtype=float)).lower
    return L @ rng.standard_normal(L.shape[0])


def _draw_inputs(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, _X_STREAM])
    scale = 1.0 / np.sqrt(cfg.d)
    X = rng.normal(0.0, scale, size=(cfg.n, cfg.d))
    X_star = rng.normal(0.0, scale, size=(cfg.n_star, cfg.d))
    return X, X_star


def _point_rng(cfg: SimConfig, i: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, _POINT_STREAM, i])


def _laplace_noise(rng: np.random.Generator, noise_var: float, size: int) -> np.ndarray:
    # scale b = sigma/sqrt(2) gives Var = 2 b^2 = noise_var
    return rng.laplace(0.0, np.sqrt(noise_var / 2.0), size=size)


def _phase_b(cfg: SimConfig, scheme: str, nbr_X, nbr_y, x_stars, y_stars) -> SweepResult:
    """Evaluate every assumed (kernel, theta) pair on the stored neighbourhoods."""
    result = SweepResult(cfg=cfg, scheme=scheme)
    n_star = cfg.n_star
    with single_threaded_blas():
        for spec_hat, theta_hat in cfg.assumed:
            mu = np.empty(n_star)
            var = np.empty(n_star)
            for i in range(n_star):
                pred = gp.predictive(theta_hat, spec_hat, nbr_X[i], nbr_y[i], x_stars[i])
                mu[i] = pred.mean
                var[i] = pred.variance
            e, l, z = metrics.pointwise_scores(mu, var, y_stars)
            report = metrics.evaluate_arrays(mu, var, y_stars)
            root = np.sqrt(n_star)
            result.entries.append(
                SweepEntry(
                    spec_hat=spec_hat,
                    theta_hat=theta_hat,
                    report=report,
                    se_mse=float(np.std(e) / root),
                    se_nll=float(np.std(l) / root),
                    se_cal=float(np.std(z) / root),
                )
            )
    return result


def run_marginal_sim(cfg: SimConfig) -> SweepResult:
    """Efficient scheme: sample each test point's (m+1)-point joint marginal.

    The joint gram over (neighbours, test point) carries noise on every
    diagonal entry and nowhere else, so the sampled test response is the noisy
    observable, consistent with the noise floor in the limiting MSE.
    """
    X, X_star = _draw_inputs(cfg)
    index = neighbors.build(X, leaf_size=cfg.leaf_size)
    nbr_idx, _ = index.query_batch(X_star, cfg.m)

    m = nbr_idx.shape[1]
    nbr_X = np.empty((cfg.n_star, m, cfg.d))
    nbr_y = np.empty((cfg.n_star, m))
    y_star = np.empty(cfg.n_star)
    with single_threaded_blas():
        for i in range(cfg.n_star):
            rng = _point_rng(cfg, i)
            U = np.vstack([X[nbr_idx[i]], X_star[i]])
            if cfg.noise_dist == "gaussian":
                y_all = sample_mvn(gram(cfg.gen_theta, cfg.gen_spec, U), rng)
            else:
                latent = sample_mvn(gram_noise_free(cfg.gen_theta, cfg.gen_spec, U), rng)
                y_all = latent + _laplace_noise(rng, cfg.gen_theta.noise_var, m + 1)
            nbr_X[i] = U[:m]
            nbr_y[i] = y_all[:m]
            y_star[i] = y_all[m]

    return _phase_b(cfg, "marginal", nbr_X, nbr_y, X_star, y_star)


def run_full_joint_sim(cfg: SimConfig) -> SweepResult:
    """Expensive validity oracle: sample the full (n+1)-dimensional joint per test point.

    The training gram is factored once and extended by one bordered row per
    test point, which is exactly the Cholesky factor of the bordered joint.
    """
    if cfg.n > FULL_JOINT_MAX_N:
        raise ValueError(f"full-joint scheme limited to n <= {FULL_JOINT_MAX_N}, got {cfg.n}")
    X, X_star = _draw_inputs(cfg)
    index = neighbors.build(X, leaf_size=cfg.leaf_size)
    nbr_idx, _ = index.query_batch(X_star, cfg.m)

    fused = cfg.noise_dist == "gaussian"
    if fused:
        K_X = gram(cfg.gen_theta, cfg.gen_spec, X)
        k_star_star = cfg.gen_theta.signal_var + cfg.gen_theta.noise_var
    else:
        K_X = gram_noise_free(cfg.gen_theta, cfg.gen_spec, X)
        k_star_star = cfg.gen_theta.signal_var
    chol = gp.cholesky(K_X)
    L = chol.lower

    m = nbr_idx.shape[1]
    nbr_X = np.empty((cfg.n_star, m, cfg.d))
    nbr_y = np.empty((cfg.n_star, m))
    y_star = np.empty(cfg.n_star)
    with single_threaded_blas():
        for i in range(cfg.n_star):
            rng = _point_rng(cfg, i)
            kstar = cross_vector(cfg.gen_theta, cfg.gen_spec, X, X_star[i])
            w = solve_triangular(L, kstar, lower=True)
            s2 = k_star_star + chol.jitter_used - float(w @ w)
            s = np.sqrt(max(s2, 1e-300))
            z = rng.standard_normal(cfg.n + 1)
            y_train = L @ z[: cfg.n]
            y_test = float(w @ z[: cfg.n] + s * z[cfg.n])
            if not fused:
                noise = _laplace_noise(rng, cfg.gen_theta.noise_var, cfg.n + 1)
                y_train = y_train + noise[: cfg.n]
                y_test += noise[cfg.n]
            nbr_X[i] = X[nbr_idx[i]]
            nbr_y[i] = y_train[nbr_idx[i]]
            y_star[i] = y_test

    return _phase_b(cfg, "full_joint", nbr_X, nbr_y, X_star, y_star)


def sweep_rows(result: SweepResult) -> list[dict]:
    """Long-format rows (one per metric per assumed pair) with limit reference values."""
    rows = []
    cfg = result.cfg
    for entry in result.entries:
        mse_lim, cal_lim, nll_lim = metrics.asymptotic_limits(
            cfg.gen_theta.noise_var, entry.theta_hat.noise_var, cfg.m
        )
        base = {
            "scheme": result.scheme,
            "n": cfg.n,
            "n_star": cfg.n_star,
            "m": cfg.m,
            "d": cfg.d,
            "kernel": str(cfg.gen_spec),
            "kernel_hat": str(entry.spec_hat),
            "lengthscale_hat": entry.theta_hat.lengthscale,
            "noise_var_hat": entry.theta_hat.noise_var,
            "signal_var_hat": entry.theta_hat.signal_var,
        }
        for name, value, se, lim in (
            ("mse", entry.report.mse, entry.se_mse, mse_lim),
            ("nll", entry.report.nll, entry.se_nll, nll_lim),
            ("cal", entry.report.cal, entry.se_cal, cal_lim),
        ):
            rows.append(base | {"metric": name, "value": value, "stderr": se, "limit": lim})
    return rows


def _default_coeff_path() -> Path:
    return Path(str(resources.files("gpnn.assets").joinpath("oakley_ohagan.csv")))


def load_oakley_ohagan_coeffs(coeff_file=None):
    """Parse the published 15-d benchmark coefficients (a1, a2, a3 vectors and M matrix)."""
    path = Path(coeff_file) if coeff_file is not None else _default_coeff_path()
    if not path.exists():
        raise FileNotFoundError(f"missing coefficient file: {path}")
    vectors: dict[str, list[float]] = {"a1": [], "a2": [], "a3": []}
    m_rows: list[list[float]] = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        label, *values = [tok.strip() for tok in line.split(",")]
        try:
            numbers = [float(v) for v in values]
        except ValueError as exc:
            raise ValueError(f"invalid coefficient file {path}: {exc}") from None
        if label in vectors:
            vectors[label] = numbers
        elif label == "M":
            m_rows.append(numbers)
        else:
            raise ValueError(f"invalid coefficient file {path}: unknown row label {label!r}")
    a1, a2, a3 = (np.array(vectors[k]) for k in ("a1", "a2", "a3"))
    M = np.array(m_rows)
    if a1.shape != (15,) or a2.shape != (15,) or a3.shape != (15,) or M.shape != (15, 15):
        raise ValueError(f"invalid coefficient file {path}: expected three 15-vectors and a 15x15 matrix")
    return a1, a2, a3, M


def gen_oakley_ohagan(n: int, noise_var: float, rng: np.random.Generator, coeff_file=None) -> Dataset:
    """Draw the 15-d benchmark: x ~ N(0, I), deterministic response plus Laplace noise."""
    a1, a2, a3, M = load_oakley_ohagan_coeffs(coeff_file)
    X = rng.standard_normal((n, 15))
    y = X @ a1 + np.sin(X) @ a2 + np.cos(X) @ a3 + np.einsum("ij,jk,ik->i", X, M, X)
    if noise_var > 0:
        y = y + _laplace_noise(rng, noise_var, n)
    note = f"oakley-ohagan n={n} noise_var={noise_var}"
    return Dataset(X=X, y=y, columns=[f"x{i}" for i in range(15)], provenance=note)


def gen_gp_dataset(
    n: int,
    d: int,
    spec: KernelSpec,
    theta: Theta,
    block_size: int,
    rng: np.random.Generator,
) -> Dataset:
    """Synthetic fixture: x ~ N(0, I/d); responses sampled jointly per independent block.

    Blocks are consecutive runs of ``block_size`` draws, each sampled from its
    full noisy gram; cross-block correlations are absent by construction.
    """
    if n < 1 or block_size < 1:
        raise ValueError("n and block_size must be positive")
    X = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n, d))
    y = np.empty(n)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        y[start:stop] = sample_mvn(gram(theta, spec, X[start:stop]), rng)
    note = f"gp-blocks n={n} d={d} kernel={spec} block={block_size}"
    return Dataset(X=X, y=y, columns=[f"x{i}" for i in range(d)], provenance=note)
