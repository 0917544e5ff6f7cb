"""Trajectory persistence: CSV files with a JSON config sidecar.

One CSV per (config, seed): header ``step,time_raw,time_rescaled,compute,
risk,risk_normalized,align_<j>...`` with 17 significant digits so parsing is
lossless.  The sidecar carries the expanded config, its hash, the seed, and
the repository version; the hash makes the determinism contract checkable
(same config + seed => byte-identical CSV).
"""

from __future__ import annotations

from dataclasses import dataclass
import hashlib
import json
import os
import subprocess
import tempfile

import numpy as np

__all__ = ["TrajectoryData", "write_trajectory", "read_trajectory", "config_hash"]

_FMT = "%.17g"


@dataclass
class TrajectoryData:
    steps: np.ndarray
    time_raw: np.ndarray
    time_rescaled: np.ndarray
    compute: np.ndarray
    risk: np.ndarray
    risk_normalized: np.ndarray
    alignments: np.ndarray       # (n, len(tracked_js))
    tracked_js: list[int]
    meta: dict


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def _atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectory(path: str, data: TrajectoryData, config: dict, seed: int) -> None:
    """Write the CSV and its ``<path>.json`` sidecar atomically."""
    cols = ["step", "time_raw", "time_rescaled", "compute", "risk", "risk_normalized"]
    cols += [f"align_{j}" for j in data.tracked_js]
    lines = [",".join(cols)]
    n = len(data.steps)
    for i in range(n):
        row = [
            str(int(data.steps[i])),
            _FMT % data.time_raw[i],
            _FMT % data.time_rescaled[i],
            _FMT % data.compute[i],
            _FMT % data.risk[i],
            _FMT % data.risk_normalized[i],
        ]
        row += [_FMT % v for v in data.alignments[i]]
        lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")
    sidecar = {
        "config": config,
        "config_hash": config_hash(config),
        "seed": int(seed),
        "version": _git_describe(),
        "tracked_js": [int(j) for j in data.tracked_js],
    }
    sidecar.update(data.meta)
    _atomic_write(path + ".json", json.dumps(sidecar, sort_keys=True, indent=1) + "\n")


def read_trajectory(path: str) -> TrajectoryData:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        raw = np.loadtxt(fh, delimiter=",", ndmin=2)
    idx = {name: k for k, name in enumerate(header)}
    js = [int(name.split("_", 1)[1]) for name in header if name.startswith("align_")]
    align_cols = [idx[f"align_{j}"] for j in js]
    meta = {}
    sidecar_path = path + ".json"
    if os.path.exists(sidecar_path):
        with open(sidecar_path) as fh:
            meta = json.load(fh)
    return TrajectoryData(
        steps=raw[:, idx["step"]].astype(int),
        time_raw=raw[:, idx["time_raw"]],
        time_rescaled=raw[:, idx["time_rescaled"]],
        compute=raw[:, idx["compute"]],
        risk=raw[:, idx["risk"]],
        risk_normalized=raw[:, idx["risk_normalized"]],
        alignments=raw[:, align_cols] if align_cols else np.empty((len(raw), 0)),
        tracked_js=js,
        meta=meta,
    )
