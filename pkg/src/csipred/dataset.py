"""Dataset containers: serialized CSI windows grouped by UE velocity.

A container is a directory holding a text ``manifest`` (key=value) and one
binary tensor file per split (``train.bin``, ``val.bin``, ``test.bin``). The
split tensor has shape [S, L+P, K, N_BS, N_UE] in complex64; samples are
ordered velocity-major, so sample i belongs to velocity
``velocities[i // samples_per_velocity]``. Stored CSI is clean; observation
noise is drawn downstream at train/eval time.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import tensorio
from .channel import PRESETS, SystemConfig, generate_realization

SPLITS = ("train", "val", "test")

PAPER_VELOCITIES = tuple(range(0, 65, 5))  # 13 velocities, 0..60 km/h
PAPER_SAMPLES = {"train": 800, "val": 200, "test": 1000}

DESK_VELOCITIES = (0, 30, 60)
DESK_SAMPLES = {"train": 16, "val": 8, "test": 16}

MANIFEST_NAME = "manifest"
SCHEMA_VERSION = 1


def split_samples_per_velocity(profile):
    if profile == "paper":
        return dict(PAPER_SAMPLES)
    if profile == "desk":
        return dict(DESK_SAMPLES)
    raise ValueError("unknown profile %r" % profile)


def default_velocities(profile):
    return PAPER_VELOCITIES if profile == "paper" else DESK_VELOCITIES


@dataclass
class CsiDataset:
    """One loaded split: clean complex windows plus generation metadata."""

    csi: np.ndarray          # [S, L+P, K, N_BS, N_UE] complex64
    velocities: np.ndarray   # [S] km/h, one entry per sample
    sys: SystemConfig
    scenario: str
    split: str

    def __len__(self):
        return self.csi.shape[0]

    def history(self):
        """Clean complex histories [S, L, K, N_BS, N_UE]."""
        return self.csi[:, : self.sys.history_len]

    def targets(self):
        """Clean complex targets [S, P, K, N_BS, N_UE]."""
        return self.csi[:, self.sys.history_len :]

    def filter_velocity(self, velocity_kmh, atol=1e-6):
        mask = np.abs(self.velocities - velocity_kmh) <= atol
        if not mask.any():
            raise ValueError(
                "no samples at velocity %.3g km/h (have %s)"
                % (velocity_kmh, sorted(set(self.velocities.tolist())))
            )
        return CsiDataset(
            csi=self.csi[mask],
            velocities=self.velocities[mask],
            sys=self.sys,
            scenario=self.scenario,
            split=self.split,
        )


def _sys_manifest_fields(sys):
    return {
        "n_bs": sys.n_bs,
        "n_ue": sys.n_ue,
        "subcarriers": sys.subcarriers,
        "subcarrier_spacing_hz": repr(sys.subcarrier_spacing_hz),
        "carrier_hz": repr(sys.carrier_hz),
        "sample_period_s": repr(sys.sample_period_s),
        "history_len": sys.history_len,
        "pred_len": sys.pred_len,
    }


def _sys_from_manifest(kv):
    return SystemConfig(
        n_bs=int(kv["n_bs"]),
        n_ue=int(kv["n_ue"]),
        subcarriers=int(kv["subcarriers"]),
        subcarrier_spacing_hz=float(kv["subcarrier_spacing_hz"]),
        carrier_hz=float(kv["carrier_hz"]),
        sample_period_s=float(kv["sample_period_s"]),
        history_len=int(kv["history_len"]),
        pred_len=int(kv["pred_len"]),
    )


def build_dataset(sys, preset, velocities, samples_per_velocity, split, seed, out_dir, force=False):
    """Generate and write one split of a dataset container.

    Each (velocity, sample) cell gets an independently derived RNG so the
    result is reproducible regardless of generation order. Refuses to clobber
    an existing split file unless force is set. Returns the split file path.
    """
    if split not in SPLITS:
        raise ValueError("split must be one of %s" % (SPLITS,))
    velocities = list(velocities)
    if not velocities:
        raise ValueError("need at least one velocity")
    if samples_per_velocity < 1:
        raise ValueError("samples_per_velocity must be positive")

    os.makedirs(out_dir, exist_ok=True)
    split_path = os.path.join(out_dir, split + ".bin")
    if os.path.exists(split_path) and not force:
        raise FileExistsError("%s exists; pass force=True to overwrite" % split_path)

    total = len(velocities) * samples_per_velocity
    children = np.random.SeedSequence((seed, SPLITS.index(split))).spawn(total)
    tensor = np.empty(
        (total, sys.window_len, sys.subcarriers, sys.n_bs, sys.n_ue), dtype=np.complex64
    )
    sample_velocities = np.repeat(np.asarray(velocities, dtype=float), samples_per_velocity)
    for i in range(total):
        rng = np.random.default_rng(children[i])
        real = generate_realization(sys, preset, sample_velocities[i], rng, seed=i)
        tensor[i] = real.csi.astype(np.complex64)

    tensorio.save_complex_tensor(split_path, tensor)
    _update_manifest(out_dir, sys, preset.name, velocities, samples_per_velocity, split, seed, tensor.shape)
    return split_path


def _update_manifest(out_dir, sys, scenario, velocities, samples_per_velocity, split, seed, shape):
    path = os.path.join(out_dir, MANIFEST_NAME)
    kv = tensorio.read_kv(path) if os.path.exists(path) else {}
    if kv:
        if kv.get("scenario") != scenario:
            raise ValueError(
                "container scenario %r does not match %r" % (kv.get("scenario"), scenario)
            )
        splits = [s for s in kv.get("splits", "").split(",") if s]
        if split not in splits:
            splits.append(split)
    else:
        kv["schema_version"] = str(SCHEMA_VERSION)
        kv["dtype"] = "complex64"
        kv["scenario"] = scenario
        kv.update({k: str(v) for k, v in _sys_manifest_fields(sys).items()})
        splits = [split]
    kv["splits"] = ",".join(splits)
    kv["velocities_kmh_%s" % split] = ",".join(repr(float(v)) for v in velocities)
    kv["samples_per_velocity_%s" % split] = str(samples_per_velocity)
    kv["seed_%s" % split] = str(seed)
    kv["shape_%s" % split] = ",".join(str(d) for d in shape)
    tensorio.write_kv(path, kv)


def load_dataset(container_dir, split):
    """Load one split of a container back into memory."""
    manifest = tensorio.read_kv(os.path.join(container_dir, MANIFEST_NAME))
    if int(manifest["schema_version"]) != SCHEMA_VERSION:
        raise ValueError("unsupported dataset schema version %s" % manifest["schema_version"])
    splits = manifest["splits"].split(",")
    if split not in splits:
        raise ValueError("split %r not in container (has %s)" % (split, splits))

    sys = _sys_from_manifest(manifest)
    csi = tensorio.load_complex_tensor(os.path.join(container_dir, split + ".bin"))
    expected = tuple(int(d) for d in manifest["shape_%s" % split].split(","))
    if csi.shape != expected:
        raise ValueError("split tensor shape %s != manifest %s" % (csi.shape, expected))

    velocities = [float(v) for v in manifest["velocities_kmh_%s" % split].split(",")]
    per_velocity = int(manifest["samples_per_velocity_%s" % split])
    sample_velocities = np.repeat(np.asarray(velocities), per_velocity)
    return CsiDataset(
        csi=csi,
        velocities=sample_velocities,
        sys=sys,
        scenario=manifest["scenario"],
        split=split,
    )


def build_container(sys, preset, out_dir, profile="desk", seed=0, velocities=None,
                    samples=None, splits=SPLITS, force=False):
    """Build several splits at once; convenience wrapper for the CLI."""
    if isinstance(preset, str):
        preset = PRESETS[preset]
    velocities = list(velocities) if velocities is not None else list(default_velocities(profile))
    counts = split_samples_per_velocity(profile)
    if samples:
        counts.update(samples)
    written = {}
    for split in splits:
        written[split] = build_dataset(
            sys, preset, velocities, counts[split], split, seed, out_dir, force=force
        )
    return written
