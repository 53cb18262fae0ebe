"""Evaluation sweeps over SNR, UE velocity and prediction step.

A sweep point aggregates NMSE as a ratio of sums: total squared error over
total target power across every sample at that point. Per-step records use
the same convention restricted to one prediction step, so recombining their
numerators and denominators reproduces the all-step value exactly.
"""

import os
from dataclasses import dataclass

import numpy as np

from .channel import apply_reciprocity
from .tensors import devectorize_csi, vectorize_csi
from .training import nmse_db, prepare_windows

AXES = ("snr", "velocity", "step")


@dataclass
class EvalRecord:
    """NMSE at one sweep point, plus the raw sums it came from."""

    axis: str
    value: float
    nmse: float
    nmse_db: float
    num_samples: int
    variant: str = ""
    scenario: str = ""
    numerator: float = 0.0
    denominator: float = 0.0


def _point_record(axis, value, pred, tgt, num_samples, variant, scenario):
    num = float(((pred - tgt) ** 2).sum())
    den = float((tgt**2).sum())
    ratio = num / den
    return EvalRecord(
        axis=axis,
        value=float(value),
        nmse=ratio,
        nmse_db=nmse_db(ratio),
        num_samples=num_samples,
        variant=variant,
        scenario=scenario,
        numerator=num,
        denominator=den,
    )


def evaluate_sweep(model, ds, axis, grid, snr_db=10.0, seed=0, variant=""):
    """Evaluate one predictor along one sweep axis.

    axis="snr" re-draws history noise at each grid SNR; axis="velocity"
    filters samples per grid velocity at the fixed snr_db; axis="step"
    evaluates once at snr_db and splits the NMSE per prediction step
    (1-based grid). Noise is seeded per grid point, so sweeps repeat exactly.
    """
    if axis not in AXES:
        raise ValueError("axis must be one of %s" % (AXES,))
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")
    scenario = ds.scenario

    if axis == "step":
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
        hist, tgt = prepare_windows(ds, snr_db, rng)
        pred = model.predict_windows(hist)
        records = []
        for p in grid:
            p = int(p)
            if not 1 <= p <= tgt.shape[2]:
                raise ValueError("prediction step %d outside 1..%d" % (p, tgt.shape[2]))
            records.append(
                _point_record(
                    "step", p, pred[:, :, p - 1], tgt[:, :, p - 1], len(ds), variant, scenario
                )
            )
        return records

    records = []
    for i, value in enumerate(grid):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        if axis == "snr":
            subset, point_snr = ds, float(value)
        else:
            subset, point_snr = ds.filter_velocity(float(value)), snr_db
        hist, tgt = prepare_windows(subset, point_snr, rng)
        pred = model.predict_windows(hist)
        records.append(_point_record(axis, value, pred, tgt, len(subset), variant, scenario))
    return records


TABLE_COLUMNS = ("variant", "scenario", "axis", "value", "nmse", "nmse_db", "samples")


def write_records_table(records, path):
    """Tab-separated table with a header row; one line per record."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(TABLE_COLUMNS) + "\n")
        for r in records:
            f.write(
                "%s\t%s\t%s\t%g\t%.6e\t%.4f\t%d\n"
                % (r.variant, r.scenario, r.axis, r.value, r.nmse, r.nmse_db, r.num_samples)
            )
    return path


def read_records_table(path):
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        for line in f:
            if line.strip():
                rows.append(dict(zip(header, line.rstrip("\n").split("\t"))))
    return rows


def plot_records(curves, path, axis):
    """NMSE(dB) vs sweep value, one line per labelled record list."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xlabel = {"snr": "SNR (dB)", "velocity": "UE velocity (km/h)", "step": "prediction step"}
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, records in curves.items():
        xs = [r.value for r in records]
        ys = [r.nmse_db for r in records]
        ax.plot(xs, ys, marker="o", label=label)
    ax.set_xlabel(xlabel.get(axis, axis))
    ax.set_ylabel("NMSE (dB)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def compare_variants(models, ds, axis, grid, out_dir, snr_db=10.0, seed=0, tag=None):
    """Sweep several predictors on the same grid; emit a table and a plot.

    models is an ordered {label: predictor} mapping (at least two entries).
    Predictors carrying a config must agree with the dataset window sizes.
    Returns {label: records}.
    """
    if len(models) < 2:
        raise ValueError("need at least two variants to compare")
    for label, model in models.items():
        config = getattr(model, "config", None)
        if config is not None and (
            config.history_len != ds.sys.history_len
            or config.pred_len != ds.sys.pred_len
            or config.num_features != ds.sys.num_features
        ):
            raise ValueError("variant %r window sizes do not match the dataset" % label)

    os.makedirs(out_dir, exist_ok=True)
    curves = {}
    all_records = []
    for label, model in models.items():
        records = evaluate_sweep(model, ds, axis, grid, snr_db=snr_db, seed=seed, variant=label)
        curves[label] = records
        all_records.extend(records)

    stem = tag or ("compare_%s" % axis)
    write_records_table(all_records, os.path.join(out_dir, stem + ".tsv"))
    plot_records(curves, os.path.join(out_dir, stem + ".png"), axis)
    return curves


def predict_dl(model, h_past_ul):
    """Predict the downlink sequence from an uplink history window.

    Accepts complex [L, K, N_BS, N_UE] (or [L, N_BS, N_UE] for one
    subcarrier) and returns [P, K, N_UE, N_BS] (resp. [P, N_UE, N_BS]):
    the predicted uplink steps, each transposed per channel reciprocity.
    """
    h = np.asarray(h_past_ul)
    squeeze = h.ndim == 3
    if squeeze:
        h = h[:, None]
    if h.ndim != 4:
        raise ValueError("expected [L, K, N_BS, N_UE] history, got shape %s" % (h.shape,))
    config = getattr(model, "config", None)
    if config is not None and h.shape[0] != config.history_len:
        raise ValueError("history length %d != model %d" % (h.shape[0], config.history_len))

    n_bs, n_ue = h.shape[2:]
    hist_real = np.swapaxes(vectorize_csi(h), 0, 1)[None].astype(np.float32)
    pred = model.predict_windows(hist_real)[0]              # [K, P, N]
    pred_ul = np.swapaxes(devectorize_csi(pred, n_bs, n_ue), 0, 1)  # [P, K, N_BS, N_UE]
    pred_dl = apply_reciprocity(pred_ul)
    return pred_dl[:, 0] if squeeze else pred_dl


def summarize_tables(paths):
    """Merge record tables into a text report: one pivot per scenario/axis."""
    rows = []
    for p in paths:
        rows.extend(read_records_table(p))
    if not rows:
        return "no records\n"

    lines = []
    sections = sorted({(r["scenario"], r["axis"]) for r in rows})
    for scenario, axis in sections:
        sub = [r for r in rows if r["scenario"] == scenario and r["axis"] == axis]
        variants = sorted({r["variant"] for r in sub})
        values = sorted({float(r["value"]) for r in sub})
        lines.append("scenario=%s  axis=%s  (NMSE dB)" % (scenario, axis))
        lines.append("\t".join([axis] + variants))
        for v in values:
            cells = ["%g" % v]
            for variant in variants:
                match = [
                    r for r in sub if r["variant"] == variant and float(r["value"]) == v
                ]
                cells.append(match[0]["nmse_db"] if match else "-")
            lines.append("\t".join(cells))
        best = min(sub, key=lambda r: float(r["nmse_db"]))
        lines.append(
            "best: %s at %s=%s (%s dB)" % (best["variant"], axis, best["value"], best["nmse_db"])
        )
        lines.append("")
    return "\n".join(lines)
