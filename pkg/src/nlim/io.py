"""Trajectory CSV and deterministic JSON file handling.

Trajectory files carry a `t,x1,...,xn[,eta1,...,etan]` header, optional
leading `#` metadata lines, and shortest-roundtrip float formatting so a
save/load cycle reproduces every value bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .exceptions import NonUniformSamplingError, TrajectoryParseError
from .simulate import Trajectory


def save_trajectory(path, traj: Trajectory, meta: dict | None = None):
    n = traj.n
    cols = ["t"] + [f"x{i + 1}" for i in range(n)]
    if traj.noise is not None:
        cols += [f"eta{i + 1}" for i in range(n)]
    with open(path, "w", encoding="utf-8") as fh:
        if meta:
            for key in sorted(meta):
                fh.write(f"# {key}: {json.dumps(meta[key], sort_keys=True)}\n")
        fh.write(",".join(cols) + "\n")
        for i in range(traj.n_samples):
            fields = [repr(i * traj.dt_out)] + [repr(float(v)) for v in traj.values[i]]
            if traj.noise is not None:
                fields += [repr(float(v)) for v in traj.noise[i]]
            fh.write(",".join(fields) + "\n")


def load_trajectory(path) -> Trajectory:
    header = None
    t = []
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if header is None:
                header = parts
                if header[0] != "t" or len(header) < 2:
                    raise TrajectoryParseError("header must start with 't' and one state column", line=lineno)
                n = 0
                while n + 1 < len(header) and header[n + 1] == f"x{n + 1}":
                    n += 1
                if n == 0:
                    raise TrajectoryParseError("missing column 'x1'", line=lineno)
                rest = header[1 + n :]
                if rest and rest != [f"eta{i + 1}" for i in range(n)]:
                    raise TrajectoryParseError(f"unexpected columns {rest}", line=lineno)
                has_eta = bool(rest)
                continue
            if len(parts) != len(header):
                missing = header[len(parts)] if len(parts) < len(header) else "extra fields"
                raise TrajectoryParseError(f"missing column {missing!r}", line=lineno)
            try:
                vals = [float(v) for v in parts]
            except ValueError as exc:
                raise TrajectoryParseError(f"bad float in {parts!r}", line=lineno) from exc
            t.append(vals[0])
            rows.append(vals[1:])
    if header is None or len(rows) < 2:
        raise TrajectoryParseError("need at least two data rows")
    t = np.array(t)
    dt = t[1] - t[0]
    if dt <= 0:
        raise NonUniformSamplingError(1, "time column must increase")
    diffs = np.diff(t)
    bad = np.nonzero(np.abs(diffs - dt) > 1e-9 * max(abs(dt), np.max(np.abs(t))))[0]
    if bad.size:
        raise NonUniformSamplingError(int(bad[0]) + 1)
    data = np.array(rows)
    if has_eta:
        return Trajectory(dt_out=float(dt), values=data[:, :n], noise=data[:, n:])
    return Trajectory(dt_out=float(dt), values=data[:, :n])


def dump_json(path, obj):
    """Deterministic JSON: sorted keys, fixed layout, trailing newline."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
