"""Mini-batch momentum SGD over the patrol net.

Training keeps a float64 master copy of the weights and casts back to
float32 only at the end, so an lr=0 run returns bit-identical weights.
"""

import dataclasses
import io
from pathlib import Path

import numpy as np

from .dataset import LabeledDataset, config_hash
from .net import (NetConfig, NetError, NetworkWeights, batch_losses,
                  init_weights, loss_and_grads, preprocess, save_weights)
from .seeding import rng_for


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    momentum: float = 0.9
    batch: int = 64
    epochs: int = 20
    seed: int = 0
    sigma: float = 0.1
    lam: float = 0.5  # weight on the direction NLL vs the translation MSE
    dropout_enabled: bool = True
    loss_mode: str = "mean"
    val_frac: float = 0.1

    def __post_init__(self):
        if self.lr < 0 or self.batch < 1 or self.epochs < 0:
            raise NetError("rates and sizes must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise NetError("lam must be in [0, 1]")
        if self.loss_mode not in ("mean", "sum"):
            raise NetError("loss_mode must be 'mean' or 'sum'")
        if not 0.0 <= self.val_frac < 1.0:
            raise NetError("val_frac must be in [0, 1)")

    def to_dict(self):
        return dataclasses.asdict(self)


def _step_seed(seed: int, epoch: int, step: int) -> int:
    # distinct dropout stream per optimizer step
    return (seed * 1_000_003 + epoch * 1009 + step) & 0x7FFFFFFF


def dataset_tensors(dataset: LabeledDataset, cfg: NetConfig):
    """Preprocess every sample once: (X, d, t) float64 arrays."""

    if len(dataset) == 0:
        raise NetError("dataset is empty")
    x = np.stack([preprocess(s.frame, cfg) for s in dataset.samples])
    d = np.array([s.d for s in dataset.samples])
    t = np.array([s.t for s in dataset.samples])
    return x, d, t


def train(dataset: LabeledDataset, cfg: TrainConfig = TrainConfig(),
          net_cfg: NetConfig = NetConfig()):
    """Returns (NetworkWeights, history) where history is one row per epoch."""

    x, d, t = dataset_tensors(dataset, cfg=net_cfg)
    n = len(x)
    order = rng_for(cfg.seed, "split").permutation(n)
    n_val = int(round(cfg.val_frac * n)) if n >= 10 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if n_val == 0:
        val_idx = train_idx

    start = init_weights(net_cfg, sigma=cfg.sigma, seed=cfg.seed)
    params = {k: v.astype(np.float64) for k, v in start.params.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def snapshot():
        return NetworkWeights(net_cfg, cfg.sigma,
                              {k: v.astype(np.float32) for k, v in params.items()})

    history = []
    checkpoint = snapshot()
    for epoch in range(cfg.epochs):
        perm = train_idx[rng_for(cfg.seed, "shuffle", epoch).permutation(len(train_idx))]
        nll_sum = mse_sum = 0.0
        diverged = False
        for step in range(0, len(perm), cfg.batch):
            idx = perm[step:step + cfg.batch]
            w = NetworkWeights(net_cfg, cfg.sigma, params)
            try:
                loss, parts, grads = loss_and_grads(
                    w, x[idx], d[idx], t[idx], cfg.lam, cfg.loss_mode,
                    train_mode=cfg.dropout_enabled,
                    seed=_step_seed(cfg.seed, epoch, step))
            except NetError:
                diverged = True
                break
            if not np.isfinite(loss):
                diverged = True
                break
            nll_sum += parts["nll"] * len(idx)
            mse_sum += parts["mse"] * len(idx)
            for name in params:
                velocity[name] = cfg.momentum * velocity[name] - cfg.lr * grads[name]
                params[name] += velocity[name]
        if diverged:
            break
        val_nll, val_mse = batch_losses(snapshot(), x[val_idx], d[val_idx],
                                        t[val_idx], cfg.loss_mode)
        history.append({"epoch": epoch,
                        "train_nll": nll_sum / max(1, len(perm)),
                        "train_mse": mse_sum / max(1, len(perm)),
                        "val_nll": val_nll, "val_mse": val_mse})
        checkpoint = snapshot()
    return checkpoint, history


def history_csv(history) -> str:
    out = io.StringIO()
    out.write("epoch,train_nll,train_mse,val_nll,val_mse\n")
    for row in history:
        out.write("%d,%.17g,%.17g,%.17g,%.17g\n"
                  % (row["epoch"], row["train_nll"], row["train_mse"],
                     row["val_nll"], row["val_mse"]))
    return out.getvalue()


def save_training_run(weights: NetworkWeights, history, cfg: TrainConfig,
                      out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = {"train_config": cfg.to_dict(),
             "train_config_hash": config_hash(cfg.to_dict()),
             "epochs_run": len(history)}
    save_weights(weights, out / "weights.json", extra=extra)
    (out / "training_log.csv").write_text(history_csv(history))
