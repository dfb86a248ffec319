"""Text file formats: CSV datasets, mask and ground-truth tables, JSON model files.

Floats are written with ``repr`` so every value survives a save/load cycle
bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .energy import EnergyBreakdown
from .errors import UsageError
from .evaluation import GroundTruth
from .model import BinGrid, Dataset, PpcaModel

MODEL_FORMAT = "parampca-model"
MODEL_VERSION = 1


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    f = float(v)
    return "" if math.isnan(f) else repr(f)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_table(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path} is empty")
    return rows[0], rows[1:]


def _float_matrix(path, rows, width=None) -> np.ndarray:
    rows = [r for r in rows if r]
    if len({len(r) for r in rows} | ({width} if width is not None else set())) > 1:
        raise UsageError(f"{path}: table is not rectangular")
    try:
        arr = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise UsageError(f"{path}: non-numeric entry ({exc})") from None
    if arr.ndim != 2 or (width is not None and arr.shape[1] != width):
        raise UsageError(f"{path}: table is not rectangular")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{path}: non-finite entry")
    return arr


# -- datasets -----------------------------------------------------------------


def write_dataset(path, dataset: Dataset):
    header = ["theta"] + [f"x{k + 1}" for k in range(dataset.K)]
    write_table(path, header, ([t, *x] for t, x in zip(dataset.theta, dataset.X)))


def read_dataset(path) -> Dataset:
    header, rows = read_table(path)
    if len(header) < 2:
        raise UsageError(f"{path}: need a theta column and at least one feature column")
    arr = _float_matrix(path, rows, len(header))
    if arr.shape[0] == 0:
        raise UsageError(f"{path}: no observations")
    return Dataset(arr[:, 1:], arr[:, 0])


def write_masks(path, masks: np.ndarray):
    masks = np.asarray(masks, bool)
    header = ["endpoint"] + [f"m{k + 1}" for k in range(masks.shape[1])]
    write_table(path, header, ([b, *m.astype(int)] for b, m in enumerate(masks)))


def read_masks(path, n_endpoints: int, K: int) -> np.ndarray:
    """Read a mask table keyed by 0-based endpoint index; every endpoint must appear once."""
    header, rows = read_table(path)
    arr = _float_matrix(path, rows, len(header))
    if arr.shape[1] != K + 1:
        raise UsageError(f"{path}: expected {K} mask columns, got {arr.shape[1] - 1}")
    if not np.all(np.isin(arr[:, 1:], (0.0, 1.0))):
        raise UsageError(f"{path}: mask entries must be 0 or 1")
    idx = arr[:, 0].astype(int)
    if sorted(idx.tolist()) != list(range(n_endpoints)):
        raise UsageError(f"{path}: need exactly one row per endpoint 0..{n_endpoints - 1}")
    masks = np.zeros((n_endpoints, K), bool)
    masks[idx] = arr[:, 1:] == 1.0
    return masks


def write_truth(path, thetas, means: np.ndarray, bases: np.ndarray):
    K, V = bases.shape[1:]
    header = ["theta"] + [f"mean{k + 1}" for k in range(K)]
    header += [f"basis{v + 1}_{k + 1}" for v in range(V) for k in range(K)]
    rows = ([t, *mu, *P.T.reshape(-1)] for t, mu, P in zip(thetas, means, bases))
    write_table(path, header, rows)


def read_truth(path) -> GroundTruth:
    header, rows = read_table(path)
    arr = _float_matrix(path, rows, len(header))
    K = sum(1 for h in header if h.startswith("mean"))
    V = (arr.shape[1] - 1 - K) // K if K else 0
    if K == 0 or 1 + K + V * K != arr.shape[1]:
        raise UsageError(f"{path}: malformed ground-truth header")
    bases = arr[:, 1 + K :].reshape(-1, V, K).transpose(0, 2, 1)
    return GroundTruth(arr[:, 0], arr[:, 1 : 1 + K], bases)


def write_trace(path, trace: Sequence[EnergyBreakdown]):
    write_table(
        path,
        ["cycle", "E_data", "E_smo", "E_ortho", "total"],
        ([c, e.data, e.smoothness, e.ortho, e.total] for c, e in enumerate(trace)),
    )


# -- models -------------------------------------------------------------------


def model_to_dict(model: PpcaModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "shape": {"B": model.B, "K": model.K, "V": model.V},
        "grid": [float(v) for v in model.grid.endpoints],
        "counts": [int(v) for v in model.counts],
        "means": [float(v) for v in model.means.reshape(-1)],
        "bases": [float(v) for v in model.bases.reshape(-1)],
        "masks": None if model.masks is None else [int(v) for v in model.masks.reshape(-1)],
        "training": model.metadata or {},
    }


def model_from_dict(d: dict) -> PpcaModel:
    if d.get("format") != MODEL_FORMAT:
        raise UsageError("not a parampca model file")
    if d.get("version") != MODEL_VERSION:
        raise UsageError(f"unsupported model file version {d.get('version')!r}")
    B, K, V = (int(d["shape"][k]) for k in ("B", "K", "V"))
    masks = d.get("masks")
    return PpcaModel(
        BinGrid(np.array(d["grid"], dtype=float)),
        np.array(d["means"], dtype=float).reshape(B, K),
        np.array(d["bases"], dtype=float).reshape(B, K, V),
        counts=np.array(d["counts"], dtype=int),
        masks=None if masks is None else np.array(masks, dtype=bool).reshape(B, K),
        metadata=d.get("training") or {},
    )


def dumps_model(model: PpcaModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True, allow_nan=False) + "\n"


def save_model(path, model: PpcaModel):
    Path(path).write_text(dumps_model(model))


def load_model(path) -> PpcaModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid model file ({exc})") from None
    return model_from_dict(d)


def training_metadata(config, report) -> dict:
    pen = config.penalties
    return {
        "penalties": {"lambda_m": pen.lambda_m, "lambda_v": pen.lambda_v, "lambda_o": pen.lambda_o},
        "alpha_m": config.alpha_m,
        "alpha_v": config.alpha_v,
        "n_c": config.n_c,
        "n_m": config.n_m,
        "n_v": config.n_v,
        "mean_solver": config.mean_solver,
        "seed": config.rng_seed,
        "cycles_run": report.cycles_run,
        "rolled_back": report.rolled_back,
        "final_energy": report.final_energy.as_dict(),
    }
