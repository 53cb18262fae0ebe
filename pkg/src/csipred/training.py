"""NMSE objective and the training loop with per-sample SNR augmentation.

Each epoch redraws observation noise for every history window at an SNR
sampled uniformly from the configured range; targets stay clean. Validation
runs at a fixed mid-range SNR with a fixed noise seed so the best-checkpoint
rule compares like against like.
"""

import os
import time
from dataclasses import dataclass

import numpy as np
import torch

from .channel import add_observation_noise
from .dataset import load_dataset
from .model import ModelConfig, build_variant, save_checkpoint
from .tensors import merge_subcarriers, vectorize_csi

NMSE_DB_FLOOR = -100.0
VALIDATION_SNR_DB = 10.0

_VAL_NOISE_TAG = 7919  # seed-sequence tag separating validation noise from training noise


def nmse(pred, truth):
    """Squared-error ratio ||pred - truth||_F^2 / ||truth||_F^2.

    Accepts matching numpy arrays (returns float) or torch tensors (returns
    a scalar tensor usable as a loss). Raises on zero-norm truth.
    """
    if pred.shape != truth.shape:
        raise ValueError("shape mismatch %s vs %s" % (tuple(pred.shape), tuple(truth.shape)))
    den = (truth**2).sum()
    if float(den) == 0.0:
        raise ValueError("zero-norm truth: NMSE undefined")
    out = ((pred - truth) ** 2).sum() / den
    return out if torch.is_tensor(out) else float(out)


def nmse_db(value):
    """NMSE in dB, floored at -100 dB so exact zeros stay finite."""
    return max(10.0 * np.log10(max(float(value), 1e-30)), NMSE_DB_FLOOR)


def prepare_windows(ds, snr_db, rng):
    """Real-valued (noisy history, clean target) windows for one split.

    snr_db is a scalar or per-sample array; noise is drawn per sample from
    rng in sample order. Returns float32 arrays [S, K, L, N] and [S, K, P, N].
    """
    hist = ds.history()
    snr = np.broadcast_to(np.asarray(snr_db, dtype=float), (len(ds),))
    noisy = np.empty_like(hist)
    for i in range(len(ds)):
        noisy[i] = add_observation_noise(hist[i], snr[i], rng)
    hist_real = np.swapaxes(vectorize_csi(noisy), 1, 2)
    tgt_real = np.swapaxes(vectorize_csi(ds.targets()), 1, 2)
    return hist_real.astype(np.float32), tgt_real.astype(np.float32)


@dataclass
class TrainConfig:
    dataset: str
    variant: str = "full"
    profile: str = "desk"
    epochs: int = 60
    batch_size: int = 8
    lr: float = 1e-3
    snr_lo_db: float = 0.0
    snr_hi_db: float = 20.0
    seed: int = 0
    out_dir: str = "run"

    def __post_init__(self):
        if self.snr_lo_db > self.snr_hi_db:
            raise ValueError("snr_lo_db must not exceed snr_hi_db")
        if min(self.epochs, self.batch_size) < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")

    @classmethod
    def from_kv(cls, kv, **overrides):
        kwargs = {"dataset": kv["dataset"]}
        for name, cast in (
            ("variant", str),
            ("profile", str),
            ("epochs", int),
            ("batch_size", int),
            ("lr", float),
            ("snr_lo_db", float),
            ("snr_hi_db", float),
            ("seed", int),
            ("out_dir", str),
        ):
            if name in kv:
                kwargs[name] = cast(kv[name])
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class TrainResult:
    checkpoint_dir: str
    log_path: str
    best_epoch: int
    best_val_nmse: float
    history: list  # (epoch, train_nmse, val_nmse) tuples


def _validation_nmse(model, val_hist, val_tgt):
    pred = model.predict_windows(val_hist)
    return nmse(pred, val_tgt)


def train(cfg, model=None, check_frozen=False):
    """Train a variant and keep the checkpoint with the lowest validation NMSE.

    Deterministic for a fixed config: model init is seeded, per-epoch noise
    and batch order derive from (seed, epoch), and validation noise is drawn
    once from its own tag. check_frozen asserts after every epoch that
    non-trainable tensors are bitwise unchanged.
    """
    train_ds = load_dataset(cfg.dataset, "train")
    val_ds = load_dataset(cfg.dataset, "val")
    sys = train_ds.sys

    if model is None:
        config = ModelConfig.from_profile(
            cfg.profile, sys.history_len, sys.pred_len, sys.num_features
        )
        model = build_variant(cfg.variant, config, seed=cfg.seed)

    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=cfg.lr, betas=(0.9, 0.999))

    frozen_snapshot = {
        name: p.detach().clone() for name, p in model.named_parameters() if not p.requires_grad
    }

    val_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _VAL_NOISE_TAG)))
    val_hist, val_tgt = prepare_windows(val_ds, VALIDATION_SNR_DB, val_rng)

    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_dir = os.path.join(cfg.out_dir, "checkpoint")
    log_path = os.path.join(cfg.out_dir, "train_log.tsv")
    with open(log_path, "w", encoding="utf-8") as f:
        f.write("epoch\ttrain_nmse_db\tval_nmse_db\tlr\twall_time_s\n")

    best_val = float("inf")
    best_epoch = -1
    history = []
    step = 0
    t0 = time.monotonic()

    for epoch in range(cfg.epochs):
        epoch_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, epoch)))
        snr = epoch_rng.uniform(cfg.snr_lo_db, cfg.snr_hi_db, size=len(train_ds))
        hist, tgt = prepare_windows(train_ds, snr, epoch_rng)
        order = epoch_rng.permutation(len(train_ds))

        model.train()
        num_sum = 0.0
        den_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = torch.from_numpy(merge_subcarriers(hist[idx]))
            y = torch.from_numpy(merge_subcarriers(tgt[idx]))
            pred = model(x)
            loss = nmse(pred, y)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    "non-finite loss %r at epoch %d, step %d (variant=%s, lr=%g)"
                    % (loss.item(), epoch, step, model.kind, cfg.lr)
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
            with torch.no_grad():
                num_sum += float(((pred - y) ** 2).sum())
                den_sum += float((y**2).sum())

        train_nmse = num_sum / den_sum
        val_nmse = _validation_nmse(model, val_hist, val_tgt)
        history.append((epoch, train_nmse, val_nmse))

        if check_frozen:
            for name, ref in frozen_snapshot.items():
                current = dict(model.named_parameters())[name]
                if not torch.equal(current, ref):
                    raise AssertionError("frozen tensor %s changed during training" % name)

        if val_nmse < best_val:
            best_val = val_nmse
            best_epoch = epoch
            save_checkpoint(
                model,
                ckpt_dir,
                step=step,
                val_nmse=val_nmse,
                extra={"val_nmse_db": repr(nmse_db(val_nmse)), "epoch": str(epoch)},
            )

        with open(log_path, "a", encoding="utf-8") as f:
            f.write(
                "%d\t%.4f\t%.4f\t%g\t%.2f\n"
                % (epoch, nmse_db(train_nmse), nmse_db(val_nmse), cfg.lr, time.monotonic() - t0)
            )

    return TrainResult(
        checkpoint_dir=ckpt_dir,
        log_path=log_path,
        best_epoch=best_epoch,
        best_val_nmse=best_val,
        history=history,
    )


_GROUP_RULES = (
    ("backbone.attention", lambda n: ".backbone." in n and ".attn." in n),
    ("backbone.ffn", lambda n: ".backbone." in n and ".mlp." in n),
    ("backbone.layer_norm", lambda n: ".backbone." in n),
    ("positional", lambda n: n.endswith(".positions") or n.endswith(".queries")),
)


def _group_of(name):
    for group, match in _GROUP_RULES:
        if match(name):
            return group
    parts = name.split(".")
    return parts[1] if parts[0] == "trunk" and len(parts) > 1 else parts[0]


def trainable_report(model):
    """Exact parameter counts, overall and per component group."""
    groups = {}
    total = 0
    trainable = 0
    for name, p in model.named_parameters():
        n = p.numel()
        g = groups.setdefault(_group_of(name), {"total": 0, "trainable": 0})
        g["total"] += n
        total += n
        if p.requires_grad:
            g["trainable"] += n
            trainable += n
    return {"total": total, "trainable": trainable, "groups": groups}
