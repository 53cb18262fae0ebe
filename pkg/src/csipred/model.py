"""CSI sequence predictors: spectral-attentive adapter + frozen transformer.

The main variant normalizes a real CSI window [B, L, N], embeds each time
step, refines the embedding with a stack of DCT channel-attention layers,
projects into a GPT-2-style decoder backbone whose attention/FFN weights stay
frozen (layer norms and the positional table remain trainable), and maps the
hidden states to P future steps before de-normalizing.

Ablation variants drop the backbone or the adapter; recurrent and transformer
baselines share the same outer normalize/de-normalize wrapper.
"""

import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import tensorio
from .spectral import AveragePoolingAttention, MultiSpectralAttention
from .tensors import STD_EPS, merge_subcarriers, split_subcarriers

VARIANTS = (
    "full",
    "no_backbone",
    "backbone_only_fft",
    "gap_adapter",
    "rnn",
    "lstm",
    "gru",
    "transformer",
)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters shared by all variants."""

    history_len: int = 24
    pred_len: int = 6
    num_features: int = 32          # 2 * N_BS * N_UE
    embed_dim: int = 64             # per-feature embedding width
    embed_hidden: int = 128         # hidden width of the embedding projections
    head_feat_hidden: int = 128     # output head, feature stage
    head_time_hidden: int = 128     # output head, time stage
    sca_channels: int = 128         # intermediate channel count of the adapter
    sca_depth: int = 4              # number of attention layers
    dct_height: int = 7
    dct_width: int = 7
    num_bases: int = 32             # DCT bases / channel groups
    reduction: int = 16             # attention bottleneck ratio
    backbone_dim: int = 768
    backbone_depth: int = 6
    num_heads: int = 12
    freq_indices: tuple = None      # None -> zigzag-low selection
    projection_scale: float = 1.0

    def __post_init__(self):
        if self.sca_channels % self.num_bases:
            raise ValueError(
                "sca_channels %d not divisible by %d bases" % (self.sca_channels, self.num_bases)
            )
        if self.backbone_dim % self.num_heads:
            raise ValueError(
                "backbone_dim %d not divisible by %d heads" % (self.backbone_dim, self.num_heads)
            )
        if self.reduction > self.sca_channels:
            raise ValueError("reduction %d exceeds %d channels" % (self.reduction, self.sca_channels))
        if self.freq_indices is None and self.num_bases > self.dct_height * self.dct_width:
            raise ValueError("more bases than DCT grid points")

    @classmethod
    def paper_profile(cls, history_len=24, pred_len=6, num_features=32):
        return cls(history_len=history_len, pred_len=pred_len, num_features=num_features)

    @classmethod
    def desk_profile(cls, history_len=24, pred_len=6, num_features=32):
        return cls(
            history_len=history_len,
            pred_len=pred_len,
            num_features=num_features,
            embed_dim=16,
            embed_hidden=32,
            head_feat_hidden=32,
            head_time_hidden=32,
            sca_channels=16,
            sca_depth=2,
            dct_height=4,
            dct_width=4,
            num_bases=4,
            reduction=4,
            backbone_dim=64,
            backbone_depth=2,
            num_heads=4,
        )

    @classmethod
    def from_profile(cls, profile, history_len=24, pred_len=6, num_features=32):
        if profile == "paper":
            return cls.paper_profile(history_len, pred_len, num_features)
        if profile == "desk":
            return cls.desk_profile(history_len, pred_len, num_features)
        raise ValueError("unknown profile %r" % profile)

    def to_kv(self):
        out = {}
        for f_ in fields(self):
            value = getattr(self, f_.name)
            if f_.name == "freq_indices":
                if value is not None:
                    out["config.freq_indices"] = ";".join("%d,%d" % (u, v) for u, v in value)
            else:
                out["config.%s" % f_.name] = repr(value) if isinstance(value, float) else str(value)
        return out

    @classmethod
    def from_kv(cls, kv):
        kwargs = {}
        for f_ in fields(cls):
            key = "config.%s" % f_.name
            if key not in kv:
                continue
            raw = kv[key]
            if f_.name == "freq_indices":
                kwargs[f_.name] = tuple(
                    tuple(int(x) for x in pair.split(",")) for pair in raw.split(";")
                )
            elif f_.name == "projection_scale":
                kwargs[f_.name] = float(raw)
            else:
                kwargs[f_.name] = int(raw)
        return cls(**kwargs)


class CsiEmbedding(nn.Module):
    """Two point-wise projections lifting [B, L, N] to [B, L, N, E]."""

    def __init__(self, cfg):
        super().__init__()
        self.num_features = cfg.num_features
        self.embed_dim = cfg.embed_dim
        self.lin1 = nn.Linear(cfg.num_features, cfg.embed_hidden)
        self.lin2 = nn.Linear(cfg.embed_hidden, cfg.num_features * cfg.embed_dim)

    def forward(self, x):
        if x.shape[-1] != self.num_features:
            raise ValueError("expected %d features, got %d" % (self.num_features, x.shape[-1]))
        out = self.lin2(self.lin1(x))
        return out.view(*x.shape[:-1], self.num_features, self.embed_dim)


class ScaModule(nn.Module):
    """3x3 conv into L_c channel maps, attention stack, 3x3 conv back to L."""

    def __init__(self, cfg, attention="dct"):
        super().__init__()
        self.conv_in = nn.Conv2d(cfg.history_len, cfg.sca_channels, kernel_size=3, padding=1)
        layer_args = (cfg.sca_channels, cfg.num_bases, cfg.reduction, (cfg.dct_height, cfg.dct_width))
        if attention == "dct":
            self.layers = nn.ModuleList(
                MultiSpectralAttention(
                    *layer_args,
                    freq_indices=cfg.freq_indices,
                    projection_scale=cfg.projection_scale,
                )
                for _ in range(cfg.sca_depth)
            )
        elif attention == "gap":
            self.layers = nn.ModuleList(
                AveragePoolingAttention(*layer_args) for _ in range(cfg.sca_depth)
            )
        else:
            raise ValueError("unknown attention kind %r" % attention)
        self.conv_out = nn.Conv2d(cfg.sca_channels, cfg.history_len, kernel_size=3, padding=1)

    def forward(self, x):
        h = self.conv_in(x)
        for layer in self.layers:
            h = layer(h)
        return self.conv_out(h)


class LlmEmbedding(nn.Module):
    """Flatten trailing feature axes, project to the backbone width, add a
    learned positional table."""

    def __init__(self, in_features, width, max_len):
        super().__init__()
        self.proj = nn.Linear(in_features, width)
        self.positions = nn.Parameter(0.02 * torch.randn(max_len, width))

    def forward(self, x):
        seq_len = x.shape[1]
        if seq_len > self.positions.shape[0]:
            raise ValueError(
                "sequence length %d exceeds positional table %d"
                % (seq_len, self.positions.shape[0])
            )
        flat = x.flatten(start_dim=2) if x.dim() > 3 else x
        return self.proj(flat) + self.positions[:seq_len]


class CausalSelfAttention(nn.Module):
    def __init__(self, dim, heads, max_len):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.register_buffer(
            "mask", torch.tril(torch.ones(max_len, max_len, dtype=torch.bool)), persistent=False
        )

    def forward(self, x):
        b, t, c = x.shape
        qkv = self.qkv(x).view(b, t, 3, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~self.mask[:t, :t], float("-inf"))
        att = torch.softmax(scores, dim=-1)
        out = (att @ v).transpose(1, 2).reshape(b, t, c)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim):
        super().__init__()
        self.fc_in = nn.Linear(dim, 4 * dim)
        self.fc_out = nn.Linear(4 * dim, dim)

    def forward(self, x):
        return self.fc_out(F.gelu(self.fc_in(x), approximate="tanh"))


class DecoderBlock(nn.Module):
    """Pre-norm transformer decoder block with causal self-attention."""

    def __init__(self, dim, heads, max_len):
        super().__init__()
        self.ln_1 = nn.LayerNorm(dim)
        self.attn = CausalSelfAttention(dim, heads, max_len)
        self.ln_2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim)

    def forward(self, x):
        x = x + self.attn(self.ln_1(x))
        x = x + self.mlp(self.ln_2(x))
        return x


class Backbone(nn.Module):
    """Stack of causal decoder blocks plus a final layer norm."""

    def __init__(self, cfg):
        super().__init__()
        self.blocks = nn.ModuleList(
            DecoderBlock(cfg.backbone_dim, cfg.num_heads, cfg.history_len)
            for _ in range(cfg.backbone_depth)
        )
        self.ln_f = nn.LayerNorm(cfg.backbone_dim)

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return self.ln_f(x)


class OutputHead(nn.Module):
    """Map hidden states [B, L, E_g] to predictions [B, P, N].

    Stage one projects features per time step; stage two maps the time axis
    L -> P independently for each of the N features.
    """

    def __init__(self, cfg):
        super().__init__()
        self.feat1 = nn.Linear(cfg.backbone_dim, cfg.head_feat_hidden)
        self.feat2 = nn.Linear(cfg.head_feat_hidden, cfg.num_features)
        self.time1 = nn.Linear(cfg.history_len, cfg.head_time_hidden)
        self.time2 = nn.Linear(cfg.head_time_hidden, cfg.pred_len)

    def forward(self, x):
        h = self.feat2(self.feat1(x))          # [B, L, N]
        h = h.transpose(1, 2)                  # [B, N, L]
        h = self.time2(self.time1(h))          # [B, N, P]
        return h.transpose(1, 2)


class FullTrunk(nn.Module):
    def __init__(self, cfg, attention="dct"):
        super().__init__()
        self.csi_embed = CsiEmbedding(cfg)
        self.sca = ScaModule(cfg, attention=attention)
        self.llm_embed = LlmEmbedding(
            cfg.num_features * cfg.embed_dim, cfg.backbone_dim, cfg.history_len
        )
        self.backbone = Backbone(cfg)
        self.head = OutputHead(cfg)

    def forward(self, x):
        h = self.sca(self.csi_embed(x))
        return self.head(self.backbone(self.llm_embed(h)))


class NoBackboneTrunk(nn.Module):
    """Adapter and output head only; a single linear bridges the widths."""

    def __init__(self, cfg):
        super().__init__()
        self.csi_embed = CsiEmbedding(cfg)
        self.sca = ScaModule(cfg)
        self.bridge = nn.Linear(cfg.num_features * cfg.embed_dim, cfg.backbone_dim)
        self.head = OutputHead(cfg)

    def forward(self, x):
        h = self.sca(self.csi_embed(x))
        return self.head(self.bridge(h.flatten(start_dim=2)))


class BackboneOnlyTrunk(nn.Module):
    """Normalized CSI straight into the backbone, no adapter."""

    def __init__(self, cfg):
        super().__init__()
        self.llm_embed = LlmEmbedding(cfg.num_features, cfg.backbone_dim, cfg.history_len)
        self.backbone = Backbone(cfg)
        self.head = OutputHead(cfg)

    def forward(self, x):
        return self.head(self.backbone(self.llm_embed(x)))


class RecurrentTrunk(nn.Module):
    """Single-stack RNN/LSTM/GRU encoder with a linear prediction head."""

    _CELLS = {"rnn": nn.RNN, "lstm": nn.LSTM, "gru": nn.GRU}

    def __init__(self, cfg, cell):
        super().__init__()
        self.pred_len = cfg.pred_len
        self.num_features = cfg.num_features
        self.core = self._CELLS[cell](
            input_size=cfg.num_features, hidden_size=cfg.embed_hidden, batch_first=True
        )
        self.head = nn.Linear(cfg.embed_hidden, cfg.pred_len * cfg.num_features)

    def forward(self, x):
        out, _ = self.core(x)
        pred = self.head(out[:, -1])
        return pred.view(x.shape[0], self.pred_len, self.num_features)


class TransformerTrunk(nn.Module):
    """Encoder-decoder baseline with learned query embeddings for P steps."""

    def __init__(self, cfg, heads=4):
        super().__init__()
        d = cfg.embed_hidden
        self.in_proj = nn.Linear(cfg.num_features, d)
        self.positions = nn.Parameter(0.02 * torch.randn(cfg.history_len, d))
        self.queries = nn.Parameter(0.02 * torch.randn(cfg.pred_len, d))
        self.core = nn.Transformer(
            d_model=d,
            nhead=heads,
            num_encoder_layers=1,
            num_decoder_layers=1,
            dim_feedforward=4 * d,
            dropout=0.0,
            batch_first=True,
        )
        self.out_proj = nn.Linear(d, cfg.num_features)

    def forward(self, x):
        src = self.in_proj(x) + self.positions[: x.shape[1]]
        tgt = self.queries.unsqueeze(0).expand(x.shape[0], -1, -1)
        return self.out_proj(self.core(src, tgt))


_TRUNKS = {
    "full": lambda cfg: FullTrunk(cfg),
    "gap_adapter": lambda cfg: FullTrunk(cfg, attention="gap"),
    "no_backbone": NoBackboneTrunk,
    "backbone_only_fft": BackboneOnlyTrunk,
    "rnn": lambda cfg: RecurrentTrunk(cfg, "rnn"),
    "lstm": lambda cfg: RecurrentTrunk(cfg, "lstm"),
    "gru": lambda cfg: RecurrentTrunk(cfg, "gru"),
    "transformer": TransformerTrunk,
}


class Predictor(nn.Module):
    """Normalize -> variant trunk -> de-normalize wrapper.

    Normalization statistics are scalars over every element of the incoming
    batch, captured per forward call and reused to rescale the prediction, so
    outputs are in the input's original scale.
    """

    def __init__(self, kind, config):
        super().__init__()
        if kind not in VARIANTS:
            raise ValueError("unknown variant kind %r (must be one of %s)" % (kind, VARIANTS))
        self.kind = kind
        self.config = config
        self.trunk = _TRUNKS[kind](config)

    def forward(self, x):
        if x.dim() != 3 or x.shape[1] != self.config.history_len:
            raise ValueError(
                "expected [B, %d, %d], got %s"
                % (self.config.history_len, self.config.num_features, tuple(x.shape))
            )
        mean = x.mean()
        std = x.std(correction=0).clamp_min(STD_EPS)
        pred = self.trunk((x - mean) / std)
        return pred * std + mean

    @torch.no_grad()
    def predict_windows(self, history):
        """Numpy surface: [S, K, L, N] real histories -> [S, K, P, N].

        Each sample is forwarded on its own (a batch of its K subcarrier
        rows), so results do not depend on how callers batch samples.
        """
        history = np.asarray(history, dtype=np.float32)
        s, k = history.shape[:2]
        out = np.empty((s, k, self.config.pred_len, self.config.num_features), dtype=np.float32)
        was_training = self.training
        self.eval()
        for i in range(s):
            rows = torch.from_numpy(merge_subcarriers(history[i : i + 1]))
            pred = self(rows).numpy()
            out[i] = split_subcarriers(pred, k)[0]
        if was_training:
            self.train()
        return out


def apply_trainability(model):
    """Set requires_grad flags per the variant's fine-tuning contract.

    Frozen-backbone variants keep attention and FFN weights fixed while layer
    norms and positional tables stay trainable; every other variant is fully
    trainable.
    """
    for p in model.parameters():
        p.requires_grad = True
    if model.kind in ("full", "gap_adapter"):
        for name, p in model.named_parameters():
            if ".backbone." in name and (".attn." in name or ".mlp." in name):
                p.requires_grad = False
    return model


def load_weight_archive(model, archive):
    """Initialize parameters by name from a named-tensor container.

    The archive may cover any subset of parameters (typically the backbone
    and positional table). All problems are collected and reported together,
    one line per tensor name.
    """
    if isinstance(archive, (str, os.PathLike)):
        archive = tensorio.load_named_tensors(archive)
    params = dict(model.named_parameters())
    problems = []
    for name, arr in archive.items():
        if name not in params:
            problems.append("%s: no such parameter" % name)
            continue
        if tuple(arr.shape) != tuple(params[name].shape):
            problems.append(
                "%s: archive shape %s != model shape %s"
                % (name, tuple(arr.shape), tuple(params[name].shape))
            )
    if problems:
        raise ValueError("weight archive mismatch:\n" + "\n".join(problems))
    with torch.no_grad():
        for name, arr in archive.items():
            params[name].copy_(torch.from_numpy(np.asarray(arr, dtype=np.float32)))
    return model


def build_variant(kind, config, seed=0, weight_archive=None):
    """Construct a predictor variant with deterministic initialization."""
    torch.manual_seed(seed)
    model = Predictor(kind, config)
    apply_trainability(model)
    if weight_archive is not None:
        load_weight_archive(model, weight_archive)
    return model


def save_weight_archive(model, path, only_prefix=None):
    """Write (a subset of) model parameters as a named-tensor container."""
    tensors = {
        name: p.detach().numpy()
        for name, p in model.named_parameters()
        if only_prefix is None or name.startswith(only_prefix)
    }
    tensorio.save_named_tensors(path, tensors)


WEIGHTS_NAME = "weights"
META_NAME = "meta"


def save_checkpoint(model, out_dir, step=0, val_nmse=float("nan"), extra=None):
    """Persist a variant as a directory: binary weights + text metadata."""
    os.makedirs(out_dir, exist_ok=True)
    save_weight_archive(model, os.path.join(out_dir, WEIGHTS_NAME))
    meta = {"schema_version": "1", "kind": model.kind, "step": str(step), "val_nmse": repr(val_nmse)}
    meta.update(model.config.to_kv())
    for name, p in model.named_parameters():
        meta["trainable.%s" % name] = "1" if p.requires_grad else "0"
    if extra:
        meta.update(extra)
    tensorio.write_kv(os.path.join(out_dir, META_NAME), meta)
    return out_dir


def load_checkpoint(ckpt_dir):
    """Rebuild a saved variant; returns (model, meta dict)."""
    meta = tensorio.read_kv(os.path.join(ckpt_dir, META_NAME))
    config = ModelConfig.from_kv(meta)
    model = build_variant(meta["kind"], config)
    load_weight_archive(model, os.path.join(ckpt_dir, WEIGHTS_NAME))
    for name, p in model.named_parameters():
        flag = meta.get("trainable.%s" % name)
        if flag is not None:
            p.requires_grad = flag == "1"
    return model, meta
