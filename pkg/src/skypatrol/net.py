"""Patrol network: shared conv trunk, mixture direction head, translation head.

Everything is plain numpy. Forward and backward passes are written out by
hand so the gradients can be checked against finite differences; weights
are stored as little-endian float32 and all math runs in float64.
"""

import base64
import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .dataset import DatasetError, config_hash
from .seeding import rng_for

N_COMPONENTS = 3
LOG_ROOT_2PI = 0.5 * math.log(2.0 * math.pi)


class NetError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class NetConfig:
    """Architecture description; every shape below derives from this."""

    input_width: int = 400
    input_height: int = 100
    pool: int = 5  # block-mean factor applied before the stem
    stem_channels: int = 8
    block_channels: int = 16
    dir_hidden: tuple = (64, 32)
    trans_hidden: tuple = (64,)
    dropout: float = 0.5

    def __post_init__(self):
        if self.input_width % self.pool or self.input_height % self.pool:
            raise NetError("pool factor must divide the input size")
        if not 0.0 <= self.dropout < 1.0:
            raise NetError("dropout rate must be in [0, 1)")

    def grid_shape(self):
        return self.input_height // self.pool, self.input_width // self.pool

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["dir_hidden"] = list(self.dir_hidden)
        d["trans_hidden"] = list(self.trans_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["dir_hidden"] = tuple(d["dir_hidden"])
        d["trans_hidden"] = tuple(d["trans_hidden"])
        return cls(**d)


def _conv_size(n: int, stride: int) -> int:
    # kernel 3 pad 1, and the 1x1 stride-matched skip, both give this
    return (n - 1) // stride + 1


def manifest(cfg: NetConfig):
    """Ordered {name: shape} map of every parameter tensor."""

    h, w = cfg.grid_shape()
    c0, c1 = cfg.stem_channels, cfg.block_channels
    h, w = _conv_size(h, 2), _conv_size(w, 2)
    shapes = {"stem.w": (c0, 1, 3, 3), "stem.b": (c0,)}
    shapes["trunk.c1.w"] = (c1, c0, 3, 3)
    shapes["trunk.c1.b"] = (c1,)
    shapes["trunk.c2.w"] = (c1, c1, 3, 3)
    shapes["trunk.c2.b"] = (c1,)
    shapes["trunk.skip.w"] = (c1, c0, 1, 1)
    shapes["trunk.skip.b"] = (c1,)
    h, w = _conv_size(h, 2), _conv_size(w, 2)
    flat = c1 * h * w
    for head in ("dir", "trans"):
        shapes[f"{head}.res.c1.w"] = (c1, c1, 3, 3)
        shapes[f"{head}.res.c1.b"] = (c1,)
        shapes[f"{head}.res.c2.w"] = (c1, c1, 3, 3)
        shapes[f"{head}.res.c2.b"] = (c1,)
    widths = [flat, *cfg.dir_hidden, 2 * N_COMPONENTS]
    for i in range(len(widths) - 1):
        shapes[f"dir.fc{i + 1}.w"] = (widths[i + 1], widths[i])
        shapes[f"dir.fc{i + 1}.b"] = (widths[i + 1],)
    widths = [flat, *cfg.trans_hidden, 1]
    for i in range(len(widths) - 1):
        shapes[f"trans.fc{i + 1}.w"] = (widths[i + 1], widths[i])
        shapes[f"trans.fc{i + 1}.b"] = (widths[i + 1],)
    return shapes


def init_weights(cfg: NetConfig, sigma: float = 0.1, seed: int = 0):
    params = {}
    for name, shape in manifest(cfg).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, np.float32)
            continue
        fan_in = int(np.prod(shape[1:]))
        bound = 1.0 / math.sqrt(fan_in)
        rng = rng_for(seed, "init", name)
        params[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return NetworkWeights(config=cfg, sigma=float(sigma), params=params)


@dataclasses.dataclass
class NetworkWeights:
    config: NetConfig
    sigma: float
    params: dict

    def __post_init__(self):
        if not self.sigma > 0:
            raise NetError("sigma must be positive")
        want = manifest(self.config)
        if set(self.params) != set(want):
            raise NetError("parameter set does not match the architecture")
        for name, shape in want.items():
            p = self.params[name]
            if tuple(p.shape) != tuple(shape):
                raise NetError(f"{name}: shape {p.shape} != {shape}")
            if not np.all(np.isfinite(p)):
                raise NetError(f"{name}: non-finite values")

    def copy(self):
        return NetworkWeights(self.config, self.sigma,
                              {k: v.copy() for k, v in self.params.items()})


@dataclasses.dataclass(frozen=True)
class GmmParams:
    phi: np.ndarray
    mu: np.ndarray
    sigma: float

    def __post_init__(self):
        phi, mu = np.asarray(self.phi, float), np.asarray(self.mu, float)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "mu", mu)
        if phi.shape != (N_COMPONENTS,) or mu.shape != (N_COMPONENTS,):
            raise NetError(f"expected {N_COMPONENTS} mixture components")
        if abs(float(phi.sum()) - 1.0) > 1e-9 or np.any(phi < 0):
            raise NetError("phi must lie on the probability simplex")
        if np.any(np.abs(mu) >= 1.0):
            raise NetError("component means must lie in (-1, 1)")
        if not self.sigma > 0:
            raise NetError("sigma must be positive")


@dataclasses.dataclass(frozen=True)
class Prediction:
    gmm: GmmParams
    t_hat: float


def gmm_pdf(gmm: GmmParams, x):
    """Mixture density at x (scalar or array)."""

    x = np.asarray(x, float)
    z = (x[..., None] - gmm.mu) / gmm.sigma
    comp = np.exp(-0.5 * z * z) / (gmm.sigma * math.sqrt(2.0 * math.pi))
    out = comp @ gmm.phi
    return float(out) if out.ndim == 0 else out


def _stack_gmms(gmms):
    phi = np.stack([np.asarray(g.phi, float) for g in gmms])
    mu = np.stack([np.asarray(g.mu, float) for g in gmms])
    sigma = float(gmms[0].sigma)
    return phi, mu, sigma


def _nll(phi, mu, sigma, x, mode):
    # log-sum-exp over component log densities; x is (B,)
    z = (x[:, None] - mu) / sigma
    logc = np.log(np.maximum(phi, 1e-300)) - 0.5 * z * z \
        - math.log(sigma) - LOG_ROOT_2PI
    top = logc.max(axis=1)
    ll = top + np.log(np.exp(logc - top[:, None]).sum(axis=1))
    total = -ll.sum()
    return total / len(x) if mode == "mean" else total


def nll_loss(gmms, labels, mode: str = "mean") -> float:
    if len(gmms) != len(labels):
        raise NetError("batch sizes differ")
    phi, mu, sigma = _stack_gmms(gmms)
    return float(_nll(phi, mu, sigma, np.asarray(labels, float), mode))


def mse_loss(t_hat, t, mode: str = "mean") -> float:
    t_hat, t = np.asarray(t_hat, float), np.asarray(t, float)
    if t_hat.shape != t.shape:
        raise NetError("batch sizes differ")
    r = t_hat - t
    total = float((r * r).sum())
    return total / len(t) if mode == "mean" else total


# -- layers ----------------------------------------------------------------

def _im2col(x, k, stride):
    b, c, h, w = x.shape
    pad = 1 if k == 3 else 0
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (B, C, Ho, Wo, k, k)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * k * k, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(dcols, x_shape, k, stride, ho, wo):
    b, c, h, w = x_shape
    pad = 1 if k == 3 else 0
    buf = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    d = dcols.reshape(b, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            buf[:, :, i:i + ho * stride:stride, j:j + wo * stride:stride] \
                += d[:, :, i, j]
    return buf[:, :, pad:pad + h, pad:pad + w] if pad else buf


def _conv_fwd(x, w, b, stride):
    f, c, k, _ = w.shape
    cols, ho, wo = _im2col(x, k, stride)
    y = (w.reshape(f, -1) @ cols).reshape(x.shape[0], f, ho, wo)
    y += b[None, :, None, None]
    return y, (x.shape, cols, w, stride, ho, wo)


def _conv_bwd(dy, cache):
    x_shape, cols, w, stride, ho, wo = cache
    f, c, k, _ = w.shape
    dyf = dy.reshape(dy.shape[0], f, -1)
    dw = np.einsum("bfn,bcn->fc", dyf, cols).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    dcols = w.reshape(f, -1).T @ dyf
    dx = _col2im(dcols, x_shape, k, stride, ho, wo)
    return dx, dw, db


def _fc_fwd(x, w, b):
    return x @ w.T + b, (x, w)


def _fc_bwd(dy, cache):
    x, w = cache
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def _relu(x):
    return np.maximum(x, 0.0)


def _block_fwd(p, prefix, x, stride, skip_name=None):
    """Pre-activation residual block; optional 1x1 projection skip."""

    h = _relu(x)
    c1, cc1 = _conv_fwd(h, p[f"{prefix}.c1.w"], p[f"{prefix}.c1.b"], stride)
    h2 = _relu(c1)
    c2, cc2 = _conv_fwd(h2, p[f"{prefix}.c2.w"], p[f"{prefix}.c2.b"], 1)
    if skip_name is None:
        y = c2 + x
        cs = None
    else:
        s, cs = _conv_fwd(h, p[skip_name + ".w"], p[skip_name + ".b"], stride)
        y = c2 + s
    return y, (x, c1, cc1, cc2, cs)


def _block_bwd(dy, cache, prefix, grads, skip_name=None):
    x, c1, cc1, cc2, cs = cache
    dh2, dw2, db2 = _conv_bwd(dy, cc2)
    grads[f"{prefix}.c2.w"] = dw2
    grads[f"{prefix}.c2.b"] = db2
    dc1 = dh2 * (c1 > 0)
    dh, dw1, db1 = _conv_bwd(dc1, cc1)
    grads[f"{prefix}.c1.w"] = dw1
    grads[f"{prefix}.c1.b"] = db1
    if skip_name is None:
        dx = dy.copy()
    else:
        dhs, dws, dbs = _conv_bwd(dy, cs)
        grads[skip_name + ".w"] = dws
        grads[skip_name + ".b"] = dbs
        dh = dh + dhs
        dx = np.zeros_like(x)
    dx += dh * (x > 0)
    return dx


def preprocess(raster: np.ndarray, cfg: NetConfig) -> np.ndarray:
    """uint8 frame -> pooled, centered float64 grid (1, H', W')."""

    if raster.shape != (cfg.input_height, cfg.input_width):
        raise NetError(f"raster shape {raster.shape} does not match config")
    p = cfg.pool
    x = raster.astype(np.float64) / 255.0 - 0.5
    h, w = cfg.grid_shape()
    x = x.reshape(h, p, w, p).mean(axis=(1, 3))
    return x[None]


def _forward_batch(p, cfg, x, train_mode, drop_rng, dropout):
    """x is (B, 1, H', W') float64; returns raw head outputs and caches."""

    s0, c_stem = _conv_fwd(x, p["stem.w"], p["stem.b"], 2)
    y, c_trunk = _block_fwd(p, "trunk", s0, 2, skip_name="trunk.skip")

    yd, c_dres = _block_fwd(p, "dir.res", y, 1)
    hd = _relu(yd).reshape(len(x), -1)
    acts_d, caches_d = [hd], []
    n_fc = len(cfg.dir_hidden) + 1
    for i in range(1, n_fc + 1):
        z, cc = _fc_fwd(acts_d[-1], p[f"dir.fc{i}.w"], p[f"dir.fc{i}.b"])
        caches_d.append(cc)
        acts_d.append(_relu(z) if i < n_fc else z)

    yt, c_tres = _block_fwd(p, "trans.res", y, 1)
    ht = _relu(yt).reshape(len(x), -1)
    acts_t, caches_t = [ht], []
    n_ft = len(cfg.trans_hidden) + 1
    mask = None
    for i in range(1, n_ft + 1):
        if i == n_ft and dropout > 0:
            a = acts_t[-1]
            if train_mode:
                mask = (drop_rng.random(a.shape) >= dropout) / (1.0 - dropout)
                a = a * mask
            acts_t[-1] = a
        z, cc = _fc_fwd(acts_t[-1], p[f"trans.fc{i}.w"], p[f"trans.fc{i}.b"])
        caches_t.append(cc)
        acts_t.append(_relu(z) if i < n_ft else z)

    cache = (x, c_stem, c_trunk, y, c_dres, yd, acts_d, caches_d,
             c_tres, yt, acts_t, caches_t, mask)
    return acts_d[-1], acts_t[-1][:, 0], cache


def _head_params(z_dir, u_trans):
    a, m = z_dir[:, :N_COMPONENTS], z_dir[:, N_COMPONENTS:]
    a = a - a.max(axis=1, keepdims=True)
    e = np.exp(a)
    phi = e / e.sum(axis=1, keepdims=True)
    mu = np.tanh(m)
    t_hat = np.tanh(u_trans)
    return phi, mu, t_hat


def forward(weights: NetworkWeights, raster: np.ndarray,
            train_mode: bool = False, seed: int = 0) -> Prediction:
    cfg = weights.config
    x = preprocess(raster, cfg)[None]
    p = {k: v.astype(np.float64) for k, v in weights.params.items()}
    rng = rng_for(seed, "dropout")
    z_dir, u, _ = _forward_batch(p, cfg, x, train_mode, rng, cfg.dropout)
    phi, mu, t_hat = _head_params(z_dir, u)
    # tanh is bounded but can round to +-1.0 in exact arithmetic
    mu = np.clip(mu, -1.0 + 1e-12, 1.0 - 1e-12)
    t = float(np.clip(t_hat[0], -1.0 + 1e-12, 1.0 - 1e-12))
    return Prediction(gmm=GmmParams(phi=phi[0], mu=mu[0], sigma=weights.sigma),
                      t_hat=t)


def predict_arrays(weights: NetworkWeights, x_batch):
    """Eval-mode batch forward: (phi, mu, t_hat) arrays for (B,1,H',W')."""

    p = {k: v.astype(np.float64) for k, v in weights.params.items()}
    rng = rng_for(0, "dropout")
    z_dir, u, _ = _forward_batch(p, weights.config, np.asarray(x_batch, float),
                                 False, rng, weights.config.dropout)
    phi, mu, t_hat = _head_params(z_dir, u)
    eps = 1e-12
    return phi, np.clip(mu, -1 + eps, 1 - eps), np.clip(t_hat, -1 + eps, 1 - eps)


def batch_losses(weights: NetworkWeights, x_batch, d_labels, t_labels,
                 mode: str = "mean"):
    """Eval-mode (nll, mse) over a preprocessed batch."""

    phi, mu, t_hat = predict_arrays(weights, x_batch)
    nll = float(_nll(phi, mu, weights.sigma, np.asarray(d_labels, float), mode))
    return nll, mse_loss(t_hat, np.asarray(t_labels, float), mode)


def loss_and_grads(weights: NetworkWeights, x_batch, d_labels, t_labels,
                   lam: float, mode: str = "mean", train_mode: bool = False,
                   seed: int = 0):
    """Combined loss lam*nll + (1-lam)*mse and exact parameter gradients.

    x_batch is (B, 1, H', W') preprocessed input. Returns
    (loss, {"nll","mse"}, grads dict).
    """

    cfg = weights.config
    p = {k: v.astype(np.float64) for k, v in weights.params.items()}
    d = np.asarray(d_labels, float)
    t = np.asarray(t_labels, float)
    b = len(x_batch)
    rng = rng_for(seed, "dropout")
    z_dir, u, cache = _forward_batch(p, cfg, np.asarray(x_batch, float),
                                     train_mode, rng, cfg.dropout)
    phi, mu, t_hat = _head_params(z_dir, u)
    sigma = weights.sigma

    nll = _nll(phi, mu, sigma, d, mode)
    mse = mse_loss(t_hat, t, mode)
    loss = lam * nll + (1.0 - lam) * mse
    scale = 1.0 / b if mode == "mean" else 1.0

    # responsibilities give the NLL gradient through softmax and tanh
    zc = (d[:, None] - mu) / sigma
    logc = np.log(np.maximum(phi, 1e-300)) - 0.5 * zc * zc \
        - math.log(sigma) - LOG_ROOT_2PI
    top = logc.max(axis=1, keepdims=True)
    w = np.exp(logc - top)
    resp = w / w.sum(axis=1, keepdims=True)
    da = lam * scale * (phi - resp)
    dm = lam * scale * (-resp * zc / sigma) * (1.0 - mu * mu)
    dz_dir = np.concatenate([da, dm], axis=1)
    du = (1.0 - lam) * scale * 2.0 * (t_hat - t) * (1.0 - t_hat * t_hat)

    (x, c_stem, c_trunk, y, c_dres, yd, acts_d, caches_d,
     c_tres, yt, acts_t, caches_t, mask) = cache
    grads = {}

    g = dz_dir
    n_fc = len(cfg.dir_hidden) + 1
    for i in range(n_fc, 0, -1):
        g, dw, db = _fc_bwd(g, caches_d[i - 1])
        grads[f"dir.fc{i}.w"] = dw
        grads[f"dir.fc{i}.b"] = db
        if i > 1:
            g = g * (acts_d[i - 1] > 0)
    dyd = g.reshape(yd.shape) * (yd > 0)
    dy_dir = _block_bwd(dyd, c_dres, "dir.res", grads)

    g = du[:, None]
    n_ft = len(cfg.trans_hidden) + 1
    for i in range(n_ft, 0, -1):
        g, dw, db = _fc_bwd(g, caches_t[i - 1])
        grads[f"trans.fc{i}.w"] = dw
        grads[f"trans.fc{i}.b"] = db
        if i == n_ft and mask is not None:
            g = g * mask
        if i > 1:
            g = g * (acts_t[i - 1] > 0)
    dyt = g.reshape(yt.shape) * (yt > 0)
    dy_trans = _block_bwd(dyt, c_tres, "trans.res", grads)

    dy = dy_dir + dy_trans
    ds0 = _block_bwd(dy, c_trunk, "trunk", grads, skip_name="trunk.skip")
    _, dw, db = _conv_bwd(ds0, c_stem)
    grads["stem.w"] = dw
    grads["stem.b"] = db

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NetError(f"non-finite gradient in {name}")
    return float(loss), {"nll": float(nll), "mse": float(mse)}, grads


def backward(weights: NetworkWeights, x_batch, d_labels, t_labels,
             lam: float, mode: str = "mean", train_mode: bool = False,
             seed: int = 0):
    return loss_and_grads(weights, x_batch, d_labels, t_labels, lam,
                          mode, train_mode, seed)[2]


# -- serialization ---------------------------------------------------------

WEIGHTS_FORMAT = "skypatrol-weights"


def save_weights(weights: NetworkWeights, path, extra: dict = None) -> None:
    arrays = {}
    for name, arr in weights.params.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        arrays[name] = {"shape": list(a.shape),
                        "data": base64.b64encode(a.tobytes()).decode("ascii")}
    doc = {"format": WEIGHTS_FORMAT, "version": 1,
           "config": weights.config.to_dict(), "sigma": weights.sigma,
           "arrays": arrays}
    doc["config_hash"] = config_hash({"config": doc["config"],
                                      "sigma": weights.sigma})
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_weights(path) -> NetworkWeights:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no weights file at {path}")
    doc = json.loads(path.read_text())
    if doc.get("format") != WEIGHTS_FORMAT:
        raise DatasetError("not a weights file")
    cfg = NetConfig.from_dict(doc["config"])
    params = {}
    for name, spec in doc["arrays"].items():
        raw = base64.b64decode(spec["data"])
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(spec["shape"]).copy()
    return NetworkWeights(config=cfg, sigma=float(doc["sigma"]), params=params)
