"""2-D DCT bases and multi-spectral channel attention.

Channel attention recalibrates the L_c feature maps of a [B, L_c, N, E_c]
tensor. Instead of compressing each map to its spatial mean (plain global
average pooling keeps only the lowest-frequency component), the channels are
split into groups and each group is projected onto one 2-D DCT basis, so the
attention weights see a range of spectral components. The bases are fixed
constants; only the two bottleneck FC layers are trainable.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def dct_basis(u, v, h_dim, w_dim):
    """Unnormalized 2-D DCT basis matrix [h_dim, w_dim] for indices (u, v).

    F[h, w] = cos(pi*u*(h+1/2)/h_dim) * cos(pi*v*(w+1/2)/w_dim), float64.
    """
    if not (0 <= u < h_dim and 0 <= v < w_dim):
        raise ValueError("indices (%d, %d) out of range for %dx%d grid" % (u, v, h_dim, w_dim))
    h = np.arange(h_dim, dtype=np.float64)
    w = np.arange(w_dim, dtype=np.float64)
    return np.outer(
        np.cos(np.pi * u * (h + 0.5) / h_dim), np.cos(np.pi * v * (w + 0.5) / w_dim)
    )


def dct_project(q, basis):
    """Frobenius inner product of a feature map with one basis matrix."""
    q = np.asarray(q)
    basis = np.asarray(basis)
    if q.shape != basis.shape:
        raise ValueError("map shape %s != basis shape %s" % (q.shape, basis.shape))
    return float(np.sum(q * basis))


def zigzag_indices(h_dim, w_dim):
    """All (u, v) indices of an h_dim x w_dim grid in JPEG zigzag order."""
    out = []
    for s in range(h_dim + w_dim - 1):
        us = range(max(0, s - w_dim + 1), min(s, h_dim - 1) + 1)
        if s % 2 == 0:
            us = reversed(us)
        out.extend((u, s - u) for u in us)
    return out


def select_frequencies(n, h_dim, w_dim, strategy="zigzag-low", indices=None):
    """Pick the n DCT frequency indices the attention layer will use.

    "zigzag-low" takes the first n indices of the JPEG zigzag traversal
    (lowest frequencies first); "explicit-list" validates a user-supplied
    list of distinct in-range indices of length n.
    """
    if n > h_dim * w_dim:
        raise ValueError("cannot select %d frequencies from a %dx%d grid" % (n, h_dim, w_dim))
    if strategy == "zigzag-low":
        return zigzag_indices(h_dim, w_dim)[:n]
    if strategy == "explicit-list":
        if indices is None:
            raise ValueError("explicit-list strategy requires an index list")
        indices = [(int(u), int(v)) for u, v in indices]
        if len(indices) != n:
            raise ValueError("expected %d indices, got %d" % (n, len(indices)))
        if len(set(indices)) != len(indices):
            raise ValueError("explicit frequency list contains duplicates")
        for u, v in indices:
            if not (0 <= u < h_dim and 0 <= v < w_dim):
                raise ValueError("index (%d, %d) out of range for %dx%d grid" % (u, v, h_dim, w_dim))
        return indices
    raise ValueError("unknown selection strategy %r" % strategy)


@dataclass
class DCTBasisSet:
    """Complete basis map for a grid plus the ordered selected indices."""

    dims: tuple
    bases: dict      # (u, v) -> float64 matrix [H', W']
    selected: list   # n ordered (u, v) tuples

    @classmethod
    def build(cls, h_dim, w_dim, n, strategy="zigzag-low", indices=None):
        selected = select_frequencies(n, h_dim, w_dim, strategy, indices)
        bases = {
            (u, v): dct_basis(u, v, h_dim, w_dim)
            for u in range(h_dim)
            for v in range(w_dim)
        }
        return cls(dims=(h_dim, w_dim), bases=bases, selected=selected)


def _group_weight(channels, num_groups, dct_size, freq_indices):
    """Stacked per-channel basis tensor [channels, H', W']: group k of
    channels/num_groups consecutive channels shares basis freq_indices[k]."""
    if channels % num_groups:
        raise ValueError("%d channels not divisible into %d groups" % (channels, num_groups))
    if len(freq_indices) != num_groups:
        raise ValueError("need %d frequency indices, got %d" % (num_groups, len(freq_indices)))
    h_dim, w_dim = dct_size
    per_group = channels // num_groups
    weight = np.empty((channels, h_dim, w_dim), dtype=np.float64)
    for k, (u, v) in enumerate(freq_indices):
        weight[k * per_group : (k + 1) * per_group] = dct_basis(u, v, h_dim, w_dim)
    return torch.from_numpy(weight)


class MultiSpectralAttention(nn.Module):
    """Channel attention driven by grouped 2-D DCT projections.

    Input/output shape [B, channels, N, E]. Feature maps are adaptively
    average-pooled to dct_size when (N, E) differs from it, projected
    group-wise onto the assigned bases, and the concatenated descriptor is
    passed through a sigmoid bottleneck to produce per-channel weights that
    rescale the original (un-pooled) input.

    freq_indices defaults to the zigzag-low selection; passing an explicit
    list (duplicates allowed, e.g. all-(0,0) for the average-pooling special
    case) together with projection_scale overrides it.
    """

    def __init__(self, channels, num_groups, reduction, dct_size,
                 freq_indices=None, projection_scale=1.0):
        super().__init__()
        if channels % num_groups:
            raise ValueError("%d channels not divisible into %d groups" % (channels, num_groups))
        if reduction > channels:
            raise ValueError("reduction %d exceeds %d channels" % (reduction, channels))
        if freq_indices is None:
            freq_indices = select_frequencies(num_groups, dct_size[0], dct_size[1])
        self.channels = channels
        self.num_groups = num_groups
        self.dct_size = tuple(dct_size)
        self.freq_indices = [tuple(ix) for ix in freq_indices]
        self.projection_scale = float(projection_scale)
        self.register_buffer(
            "dct_weight",
            _group_weight(channels, num_groups, dct_size, self.freq_indices).float(),
            persistent=False,
        )
        self.fc1 = nn.Linear(channels, channels // reduction)
        self.fc2 = nn.Linear(channels // reduction, channels)
        self.reset_parameters()

    def reset_parameters(self):
        for fc in (self.fc1, self.fc2):
            bound = 1.0 / np.sqrt(fc.in_features)
            nn.init.uniform_(fc.weight, -bound, bound)
            nn.init.zeros_(fc.bias)

    def spectral_descriptor(self, pooled):
        """[B, channels, H', W'] -> [B, channels] grouped DCT coefficients."""
        return (pooled * self.dct_weight).sum(dim=(-2, -1)) * self.projection_scale

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ValueError("expected [B, %d, N, E], got %s" % (self.channels, tuple(x.shape)))
        pooled = x
        if x.shape[-2:] != self.dct_size:
            pooled = F.adaptive_avg_pool2d(x, self.dct_size)
        y = self.spectral_descriptor(pooled)
        att = torch.sigmoid(self.fc2(F.relu(self.fc1(y))))
        return x * att[:, :, None, None]


class AveragePoolingAttention(MultiSpectralAttention):
    """Degenerate variant: the descriptor is the per-channel spatial mean.

    Equivalent to projecting every group onto the (0, 0) basis and scaling by
    1/(H'*W'), but computed directly via mean() so the two code paths can
    cross-check each other. Parameter shapes and initialization order match
    the parent exactly.
    """

    def __init__(self, channels, num_groups, reduction, dct_size):
        super().__init__(
            channels,
            num_groups,
            reduction,
            dct_size,
            freq_indices=[(0, 0)] * num_groups,
            projection_scale=1.0 / (dct_size[0] * dct_size[1]),
        )

    def spectral_descriptor(self, pooled):
        return pooled.mean(dim=(-2, -1))
