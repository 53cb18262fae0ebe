"""Real-valued CSI representation, subcarrier merging and normalization.

The predictor consumes real tensors: each complex channel matrix is
column-stacked and split into [Re; Im] halves, so a [N_BS, N_UE] matrix
becomes a length 2*N_BS*N_UE vector. Subcarriers are folded into the batch
axis because OFDM subcarriers are processed independently.
"""

from dataclasses import dataclass

import numpy as np

#: Standard-deviation floor protecting normalization of constant tensors.
STD_EPS = 1e-8


@dataclass(frozen=True)
class NormStats:
    """Scalar mean/std captured by normalize() and reused to invert it."""

    mean: float
    std: float


def vectorize_csi(h):
    """Complex [..., N_BS, N_UE] -> real [..., 2*N_BS*N_UE].

    Column-stacks each matrix (Fortran order over the trailing two axes),
    then concatenates real and imaginary parts.
    """
    h = np.asarray(h)
    lead = h.shape[:-2]
    vec = np.swapaxes(h, -1, -2).reshape(*lead, -1)
    return np.concatenate([vec.real, vec.imag], axis=-1)


def devectorize_csi(vec, n_bs, n_ue):
    """Exact inverse of vectorize_csi for the given antenna counts."""
    vec = np.asarray(vec)
    n = 2 * n_bs * n_ue
    if vec.shape[-1] != n:
        raise ValueError(
            "expected last axis %d for %dx%d antennas, got %d" % (n, n_bs, n_ue, vec.shape[-1])
        )
    half = n // 2
    comp = vec[..., :half] + 1j * vec[..., half:]
    lead = vec.shape[:-1]
    return np.swapaxes(comp.reshape(*lead, n_ue, n_bs), -1, -2)


def merge_subcarriers(x):
    """[B, K, L, N] -> [B*K, L, N] (pure reshape)."""
    x = np.asarray(x)
    b, k = x.shape[:2]
    return x.reshape(b * k, *x.shape[2:])


def split_subcarriers(x, k):
    """Inverse of merge_subcarriers for a known subcarrier count."""
    x = np.asarray(x)
    if x.shape[0] % k:
        raise ValueError("leading axis %d not divisible by %d subcarriers" % (x.shape[0], k))
    return x.reshape(x.shape[0] // k, k, *x.shape[1:])


def normalize(x, eps=STD_EPS):
    """Zero-mean/unit-std over all elements; std floored at eps.

    Uses the population standard deviation. Returns (normalized, NormStats).
    """
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("cannot normalize an empty tensor")
    mean = float(x.mean())
    std = max(float(x.std()), eps)
    return (x - mean) / std, NormStats(mean=mean, std=std)


def denormalize(x, stats):
    """Invert normalize(): x * std + mean."""
    return np.asarray(x) * stats.std + stats.mean
