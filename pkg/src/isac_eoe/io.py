"""File formats: scene/config JSON and the CSV tables passed between stages.

All writers are atomic (temp file + rename) and format floats with
``repr`` so that files round-trip exactly and are byte-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import PolarTrainingSet
from .errors import ConfigError, SchemaError
from .geometry import (
    DEFAULT_NOISE_STD,
    IncidencePoint,
    PathKind,
    PathMeasurement,
    RxState,
    TxState,
)
from .shapes import ShapeSpec

MEASUREMENT_COLUMNS = ["path_id", "toa_s", "aod_rad", "aoa_rad", "noise_toa_s",
                       "noise_aod_rad", "noise_aoa_rad", "kind", "truth_x",
                       "truth_y", "is_outlier"]
IP_COLUMNS = ["path_id", "x", "y", "residual_cost", "converged"]
# accepted column names -> canonical name
_ALIASES = {"toa_ns": "toa_s", "aod_deg": "aod_rad", "aoa_deg": "aoa_rad",
            "noise_toa_ns": "noise_toa_s", "noise_aod_deg": "noise_aod_rad",
            "noise_aoa_deg": "noise_aoa_rad"}
_UNIT_FLAGS = {"rad,s": (1.0, 1.0), "s,rad": (1.0, 1.0),
               "deg,ns": (np.pi / 180.0, 1e-9), "ns,deg": (np.pi / 180.0, 1e-9)}


def fmt(x):
    """Shortest exact text form of a float."""
    return repr(float(x))


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj):
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_csv(path, header, rows, comments=()):
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return atomic_write_text(path, buf.getvalue())


def _read_csv(path):
    """Return ``(comments, header, [(row_number, dict), ...])``.

    Row numbers count data rows from 1; comment and header lines are
    excluded.
    """
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    comments = []
    while lines and lines[0].startswith("#"):
        comments.append(lines.pop(0)[1:].strip())
    if not lines:
        raise SchemaError(f"{path}: missing header")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    rows = []
    for n, values in enumerate(reader, start=1):
        if not values:
            continue
        if len(values) != len(header):
            raise SchemaError(f"expected {len(header)} fields, got {len(values)}", row=n)
        rows.append((n, dict(zip(header, (v.strip() for v in values)))))
    return comments, header, rows


def _comment_flags(comments):
    flags = {}
    for c in comments:
        for tok in c.split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                flags[k.strip()] = v.strip()
    return flags


def _float(row, key, n, default=None):
    v = row.get(key, "")
    if v == "":
        if default is not None:
            return default
        raise SchemaError(f"missing value for {key}", row=n)
    try:
        return float(v)
    except ValueError:
        raise SchemaError(f"{key}={v!r} is not a number", row=n) from None


def write_measurements_csv(path, measurements):
    """Export measurements in SI units (``units=rad,s``)."""
    rows = []
    for m in measurements:
        sd = m.noise_std
        truth = m.truth if m.truth is not None else (np.nan, np.nan)
        rows.append([m.path_id, fmt(m.toa), fmt(m.aod), fmt(m.aoa), fmt(sd[0]),
                     fmt(sd[1]), fmt(sd[2]), m.path_kind_hint.value,
                     "" if m.truth is None else fmt(truth[0]),
                     "" if m.truth is None else fmt(truth[1]),
                     int(m.is_outlier)])
    return _write_csv(path, MEASUREMENT_COLUMNS, rows, comments=["units=rad,s"])


def read_measurements_csv(path):
    """Read a measurement CSV.

    Without a ``# units=deg,ns`` line every angle must be in radians and
    every ToA in seconds; values that look like degrees or nanoseconds are
    rejected rather than guessed. Noise columns are standard deviations and
    default to (1 ns, 1 deg, 1 deg).
    """
    comments, header, rows = _read_csv(path)
    flags = _comment_flags(comments)
    unit_key = flags.get("units")
    if unit_key is not None and unit_key not in _UNIT_FLAGS:
        raise SchemaError(f"unknown units flag {unit_key!r}")
    ang_scale, time_scale = _UNIT_FLAGS.get(unit_key, (1.0, 1.0))
    canon = [_ALIASES.get(h, h) for h in header]
    missing = {"path_id", "toa_s", "aod_rad", "aoa_rad"} - set(canon)
    if missing:
        raise SchemaError(f"{path}: missing columns {sorted(missing)}")
    out = []
    for n, raw in rows:
        row = {_ALIASES.get(k, k): v for k, v in raw.items()}
        try:
            pid = int(row["path_id"])
        except ValueError:
            raise SchemaError(f"path_id={row['path_id']!r} is not an integer", row=n) from None
        toa = _float(row, "toa_s", n)
        aod = _float(row, "aod_rad", n)
        aoa = _float(row, "aoa_rad", n)
        if unit_key is None:
            if abs(aod) > np.pi + 1e-9 or abs(aoa) > np.pi + 1e-9:
                raise SchemaError("angle outside [-pi, pi] looks like degrees; "
                                  "add a '# units=deg,ns' line", row=n)
            if abs(toa) > 1e-3:
                raise SchemaError("ToA above 1 ms looks like nanoseconds; "
                                  "add a '# units=deg,ns' line", row=n)
        sd = [_float(row, "noise_toa_s", n, DEFAULT_NOISE_STD[0] / time_scale) * time_scale,
              _float(row, "noise_aod_rad", n, DEFAULT_NOISE_STD[1] / ang_scale) * ang_scale,
              _float(row, "noise_aoa_rad", n, DEFAULT_NOISE_STD[2] / ang_scale) * ang_scale]
        truth = None
        if row.get("truth_x", "") != "" and row.get("truth_y", "") != "":
            truth = (_float(row, "truth_x", n), _float(row, "truth_y", n))
        try:
            kind = PathKind(row.get("kind", "") or "unknown")
            m = PathMeasurement(toa * time_scale, aod * ang_scale, aoa * ang_scale,
                                np.square(sd), path_id=pid, path_kind_hint=kind,
                                truth=truth,
                                is_outlier=row.get("is_outlier", "0") in ("1", "true", "True"))
        except (ValueError, ConfigError) as exc:
            raise SchemaError(str(exc), row=n) from None
        out.append(m)
    return out


def write_ips_csv(path, ips):
    rows = [[ip.source_path_id, fmt(ip.position[0]), fmt(ip.position[1]),
             fmt(ip.residual_cost), int(ip.converged)] for ip in ips]
    return _write_csv(path, IP_COLUMNS, rows)


def read_ips_csv(path):
    _, header, rows = _read_csv(path)
    missing = {"x", "y"} - set(header)
    if missing:
        raise SchemaError(f"{path}: missing columns {sorted(missing)}")
    out = []
    for n, row in rows:
        try:
            pid = int(row.get("path_id", n) or n)
        except ValueError:
            raise SchemaError("path_id is not an integer", row=n) from None
        out.append(IncidencePoint((_float(row, "x", n), _float(row, "y", n)), pid,
                                  _float(row, "residual_cost", n, 0.0),
                                  row.get("converged", "1") in ("1", "true", "True")))
    return out


def ingest_measurements(path, format="auto"):
    """Load path measurements or, for ``format="ips"``, incidence points.

    ``"auto"`` picks the IP reader when the header has ``x`` and ``y``
    columns and no ``toa`` column.
    """
    if format == "auto":
        _, header, _ = _read_csv(path)
        format = "ips" if {"x", "y"} <= set(header) and not any(
            h.startswith("toa") for h in header) else "measurements"
    if format == "measurements":
        return read_measurements_csv(path)
    if format == "ips":
        return read_ips_csv(path)
    raise ConfigError(f"unknown format {format!r}")


def write_training_csv(path, ts):
    rows = [[fmt(a), fmt(r)] for a, r in zip(ts.angles, ts.radii)]
    return _write_csv(path, ["theta_rad", "r_m"], rows, comments=[
        f"cluster_id={ts.cluster_id} origin_x={fmt(ts.origin[0])} "
        f"origin_y={fmt(ts.origin[1])}"])


def read_training_csv(path):
    comments, _, rows = _read_csv(path)
    flags = _comment_flags(comments)
    try:
        origin = (float(flags.get("origin_x", 0.0)), float(flags.get("origin_y", 0.0)))
        cid = int(flags.get("cluster_id", 0))
    except ValueError:
        raise SchemaError(f"{path}: bad origin/cluster_id header") from None
    angles = [_float(r, "theta_rad", n) for n, r in rows]
    radii = [_float(r, "r_m", n) for n, r in rows]
    try:
        return PolarTrainingSet(angles, radii, origin, cid)
    except ConfigError as exc:
        raise SchemaError(f"{path}: {exc}") from None


@dataclass
class Scene:
    """Scene description: known TX, optional RX truth, objects and noise."""

    tx: TxState
    rx: RxState | None = None
    objects: list = field(default_factory=list)
    noise_std: tuple = DEFAULT_NOISE_STD
    seed: int = 0
    paths_per_object: int = 16
    outlier_count: int = 0

    @property
    def noise_cov(self):
        return np.diag(np.square(self.noise_std))

    def to_dict(self):
        d = {"tx": {"position": self.tx.position.tolist(),
                    "orientation": self.tx.orientation},
             "objects": [o.to_dict() for o in self.objects],
             "noise": {"toa_s": self.noise_std[0], "aod_rad": self.noise_std[1],
                       "aoa_rad": self.noise_std[2]},
             "seed": self.seed, "paths_per_object": self.paths_per_object,
             "outlier_count": self.outlier_count}
        if self.rx is not None:
            d["rx"] = {"position": self.rx.position.tolist(), "heading": self.rx.heading,
                       "clock_bias": self.rx.clock_bias}
        return d


def _noise_from_dict(d):
    if d is None:
        return DEFAULT_NOISE_STD
    if "toa_ns" in d or "aod_deg" in d:
        return (float(d.get("toa_ns", 1.0)) * 1e-9,
                np.deg2rad(float(d.get("aod_deg", 1.0))),
                np.deg2rad(float(d.get("aoa_deg", 1.0))))
    return (float(d.get("toa_s", DEFAULT_NOISE_STD[0])),
            float(d.get("aod_rad", DEFAULT_NOISE_STD[1])),
            float(d.get("aoa_rad", DEFAULT_NOISE_STD[2])))


def scene_from_dict(d):
    try:
        tx = TxState(d["tx"]["position"], d["tx"].get("orientation", 0.0))
        rx = None
        if d.get("rx") is not None:
            r = d["rx"]
            rx = RxState(r["position"], r.get("heading", 0.0), r.get("clock_bias", 0.0))
        objects = [ShapeSpec.from_dict(o) for o in d.get("objects", [])]
        noise = _noise_from_dict(d.get("noise"))
        if min(noise) <= 0:
            raise ConfigError("noise standard deviations must be positive")
        return Scene(tx, rx, objects, noise, int(d.get("seed", 0)),
                     int(d.get("paths_per_object", 16)), int(d.get("outlier_count", 0)))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"invalid scene description: {exc!r}") from None


def load_scene(path):
    return scene_from_dict(read_json(path))
