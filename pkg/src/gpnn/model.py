"""End-to-end pipeline: whiten, estimate hyperparameters, index neighbours,
recalibrate variances, and serve pointwise/batch predictive distributions.

A fitted model is immutable.  Persistence uses an explicit little-endian
binary layout (magic header, format version, dims, raw arrays, trailing
SHA-256) plus a plain-text metadata sidecar; the neighbour index is rebuilt
deterministically on load.
"""

from __future__ import annotations

import hashlib
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import gp, neighbors
from ._threads import single_threaded_blas
from .calibrate import DEFAULT_CALIBRATION_SIZE, rescale_theta, weak_calibration_factor
from .kernels import KernelFamily, KernelSpec, Theta
from .train import TrainConfig, estimate_theta

MAGIC = b"GPNN"
FORMAT_VERSION = 1

_CAL_STREAM = 2

_FAMILY_CODES = {KernelFamily.RBF: 0, KernelFamily.EXPONENTIAL: 1, KernelFamily.MATERN32: 2}
_CODE_FAMILIES = {v: k for k, v in _FAMILY_CODES.items()}


class CorruptModelFileError(Exception):
    pass


class ModelVersionError(Exception):
    pass


@dataclass(frozen=True)
class FitConfig:
    train: TrainConfig = TrainConfig()
    spec: KernelSpec = KernelSpec(KernelFamily.RBF)
    m: int = 400
    c: int = DEFAULT_CALIBRATION_SIZE
    calibrate: bool = True
    seed: int = 0
    leaf_size: int = neighbors.DEFAULT_LEAF_SIZE


@dataclass(frozen=True)
class GpnnModel:
    theta: Theta
    spec: KernelSpec
    m: int
    whitening: data_mod.WhiteningTransform
    index: neighbors.NeighbourIndex = field(repr=False)
    train_X: np.ndarray = field(repr=False)
    train_y: np.ndarray = field(repr=False)
    alpha: float = 1.0
    leaf_size: int = neighbors.DEFAULT_LEAF_SIZE

    @property
    def n(self) -> int:
        return self.train_X.shape[0]

    @property
    def d(self) -> int:
        return self.train_X.shape[1]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.setflags(write=False)
    return a


def _loo_predict(
    theta: Theta,
    spec: KernelSpec,
    index: neighbors.NeighbourIndex,
    Xw: np.ndarray,
    yw: np.ndarray,
    i: int,
    m: int,
) -> gp.PredictiveDistribution:
    """Prediction at training point i with its own index excluded from the neighbour set."""
    idx, _ = index.query(Xw[i], min(m + 1, index.n))
    idx = idx[idx != i][:m]
    return gp.predictive(theta, spec, Xw[idx], yw[idx], Xw[i])


def fit(X_raw: np.ndarray, y_raw: np.ndarray, cfg: FitConfig, timings: dict | None = None) -> GpnnModel:
    """Whiten, estimate, index and (optionally) calibrate; returns the frozen model."""
    X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
    y_raw = np.asarray(y_raw, dtype=float)
    if X_raw.shape[0] != y_raw.size:
        raise ValueError("X and y differ in length")
    if X_raw.shape[0] < 2:
        raise ValueError("need at least two training rows")

    ds = data_mod.Dataset(X=X_raw, y=y_raw)
    transform = data_mod.fit_whitening(ds)
    Xw, yw = data_mod.apply_whitening(transform, X_raw, y_raw)

    t0 = time.monotonic()
    theta_hat = estimate_theta(Xw, yw, cfg.spec, cfg.train)
    t1 = time.monotonic()
    index = neighbors.build(Xw, leaf_size=cfg.leaf_size)
    t2 = time.monotonic()

    alpha = 1.0
    theta_final = theta_hat
    if cfg.calibrate:
        n = Xw.shape[0]
        c_eff = min(cfg.c, n)
        rng = np.random.default_rng([cfg.seed, _CAL_STREAM])
        cal_idx = np.sort(rng.choice(n, size=c_eff, replace=False))
        mu = np.empty(c_eff)
        var = np.empty(c_eff)
        with single_threaded_blas():
            for j, i in enumerate(cal_idx):
                pred = _loo_predict(theta_hat, cfg.spec, index, Xw, yw, int(i), cfg.m)
                mu[j] = pred.mean
                var[j] = pred.variance
        alpha = weak_calibration_factor(yw[cal_idx], mu, var)
        theta_final = rescale_theta(theta_hat, alpha)
    t3 = time.monotonic()

    if timings is not None:
        timings["estimate_seconds"] = t1 - t0
        timings["index_seconds"] = t2 - t1
        timings["calibrate_seconds"] = (t3 - t2) if cfg.calibrate else 0.0

    return GpnnModel(
        theta=theta_final,
        spec=cfg.spec,
        m=cfg.m,
        whitening=transform,
        index=index,
        train_X=_freeze(Xw),
        train_y=_freeze(yw),
        alpha=alpha,
        leaf_size=cfg.leaf_size,
    )


def _predict_whitened(model: GpnnModel, xw: np.ndarray) -> gp.PredictiveDistribution:
    idx, _ = model.index.query(xw, min(model.m, model.n))
    return gp.predictive(model.theta, model.spec, model.train_X[idx], model.train_y[idx], xw)


def predict_point(model: GpnnModel, xstar_raw) -> gp.PredictiveDistribution:
    """Predictive distribution at one raw-space query point, in raw output units."""
    xw = data_mod.whiten_point(model.whitening, xstar_raw)
    pred = _predict_whitened(model, xw)
    mean, var = data_mod.denormalize_prediction(model.whitening, pred.mean, pred.variance)
    return gp.PredictiveDistribution(mean=mean, variance=var)


def predict_batch(
    model: GpnnModel,
    X_star_raw: np.ndarray,
    *,
    threads: int = 1,
    normalized: bool = False,
) -> list[gp.PredictiveDistribution]:
    """Per-point results identical to predict_point, in deterministic input order.

    With ``normalized=True`` the distributions are returned on the whitened
    output scale (the reporting convention for metrics).
    """
    X_star_raw = np.atleast_2d(np.asarray(X_star_raw, dtype=float))

    def one(x) -> gp.PredictiveDistribution:
        xw = data_mod.whiten_point(model.whitening, x)
        pred = _predict_whitened(model, xw)
        if normalized:
            return pred
        mean, var = data_mod.denormalize_prediction(model.whitening, pred.mean, pred.variance)
        return gp.PredictiveDistribution(mean=mean, variance=var)

    with single_threaded_blas():
        if threads <= 1 or X_star_raw.shape[0] < 2:
            return [one(x) for x in X_star_raw]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, X_star_raw))


def _pack_array(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def save(model: GpnnModel, path) -> None:
    """Write the model binary and its plain-text metadata sidecar."""
    path = Path(path)
    w = model.whitening
    header = struct.pack(
        "<4sIBIIQI",
        MAGIC,
        FORMAT_VERSION,
        _FAMILY_CODES[model.spec.family],
        model.m,
        model.leaf_size,
        model.n,
        model.d,
    )
    scalars = struct.pack(
        "<6d",
        model.theta.lengthscale,
        model.theta.noise_var,
        model.theta.signal_var,
        model.alpha,
        w.mu_y,
        w.sigma_y,
    )
    payload = (
        header
        + scalars
        + _pack_array(w.mu_x)
        + _pack_array(w.M_inv)
        + _pack_array(model.train_X)
        + _pack_array(model.train_y)
    )
    digest = hashlib.sha256(payload).digest()
    path.write_bytes(payload + digest)

    meta = Path(str(path) + ".meta")
    meta.write_text(
        f"format_version: {FORMAT_VERSION}\n"
        f"kernel: {model.spec}\n"
        f"m: {model.m}\n"
        f"leaf_size: {model.leaf_size}\n"
        f"n: {model.n}\n"
        f"d: {model.d}\n"
        f"lengthscale: {model.theta.lengthscale!r}\n"
        f"noise_var: {model.theta.noise_var!r}\n"
        f"signal_var: {model.theta.signal_var!r}\n"
        f"alpha: {model.alpha!r}\n"
    )


def load(path) -> GpnnModel:
    """Read a model binary, verify its checksum, and rebuild the neighbour index."""
    blob = Path(path).read_bytes()
    digest_size = hashlib.sha256().digest_size
    head_size = struct.calcsize("<4sIBIIQI")
    if len(blob) < head_size + digest_size:
        raise CorruptModelFileError(f"{path}: file too short to be a model")
    magic, version, fam_code, m, leaf_size, n, d = struct.unpack_from("<4sIBIIQI", blob, 0)
    if magic != MAGIC:
        raise CorruptModelFileError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"{path}: unsupported format version {version}")

    payload, digest = blob[:-digest_size], blob[-digest_size:]
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptModelFileError(f"{path}: checksum mismatch (truncated or corrupted)")

    offset = head_size
    lengthscale, noise_var, signal_var, alpha, mu_y, sigma_y = struct.unpack_from("<6d", payload, offset)
    offset += struct.calcsize("<6d")

    def take(count: int, shape) -> np.ndarray:
        nonlocal offset
        nbytes = count * 8
        if offset + nbytes > len(payload):
            raise CorruptModelFileError(f"{path}: array data out of bounds")
        a = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += nbytes
        return a.copy()

    mu_x = take(d, (d,))
    M_inv = take(d * d, (d, d))
    train_X = take(n * d, (n, d))
    train_y = take(n, (n,))
    if offset != len(payload):
        raise CorruptModelFileError(f"{path}: trailing bytes in payload")

    whitening = data_mod.WhiteningTransform(
        mu_y=mu_y, sigma_y=sigma_y, mu_x=mu_x, M_inv=M_inv, d=int(d)
    )
    index = neighbors.build(train_X, leaf_size=int(leaf_size))
    return GpnnModel(
        theta=Theta(lengthscale, noise_var, signal_var),
        spec=KernelSpec(_CODE_FAMILIES[fam_code]),
        m=int(m),
        whitening=whitening,
        index=index,
        train_X=_freeze(train_X),
        train_y=_freeze(train_y),
        alpha=float(alpha),
        leaf_size=int(leaf_size),
    )


def with_theta(model: GpnnModel, theta: Theta) -> GpnnModel:
    """Copy of the model with different hyperparameters (shares data and index)."""
    return replace(model, theta=theta)
