"""End-to-end pipeline: measurements -> incidence points -> clusters -> GP contours.

Every stage reads only files written by earlier stages and writes its own
outputs atomically, so any stage can be rerun on its own. ``run_pipeline``
chains them and records every artifact with its SHA-256 in
``manifest.json``. Nothing carries a timestamp, so a fixed seed gives
byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as fio
from .clustering import DbscanParams, dbscan, to_polar
from .errors import ConfigError, EoeError
from .geometry import IncidencePoint, PathKind, synthesize_scene
from .gp import GpHyperParams, GpModel, fit, predict, reconstruct_contour
from .mapping import MappingConfig, map_paths
from .slam import SlamConfig, snapshot_slam

MODES = ("mapping", "slam")


@dataclass
class PipelineConfig:
    """Inputs and knobs for :func:`run_pipeline`.

    ``scene`` is an ``io.Scene`` or a path to a scene JSON. Without
    ``measurements`` the measurements are synthesised from the scene, which
    then needs the true receiver state. Mapping mode always needs it.
    ``biases`` maps a cluster id to a 2-vector origin shift.
    """

    mode: str
    scene: object
    out_dir: Path
    measurements: Path | None = None
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    biases: dict = field(default_factory=dict)
    gp_init: dict = field(default_factory=dict)
    seed: int = 0
    contour_points: int = 180
    slam: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not isinstance(self.scene, fio.Scene):
            self.scene = fio.load_scene(self.scene)
        self.out_dir = Path(self.out_dir)
        if self.measurements is not None:
            self.measurements = Path(self.measurements)
        if self.scene.rx is None and (self.mode == "mapping" or self.measurements is None):
            raise ConfigError(f"{self.mode} mode needs the receiver state in the scene"
                              if self.mode == "mapping" else
                              "synthesising measurements needs the receiver state in the scene")
        if isinstance(self.dbscan, dict):
            self.dbscan = DbscanParams(**self.dbscan)
        self.biases = {int(k): _vec2(v, f"bias of cluster {k}")
                       for k, v in self.biases.items()}
        unknown = set(self.gp_init) - {"length_scale", "signal_std", "noise_std"}
        if unknown:
            raise ConfigError(f"unknown gp_init keys {sorted(unknown)}")
        if self.contour_points < 3:
            raise ConfigError("contour_points must be >= 3")
        self.slam = dict(self.slam)
        self.slam.setdefault("rng_seed", self.seed)
        try:
            SlamConfig(**self.slam)
        except TypeError as exc:
            raise ConfigError(f"bad slam options: {exc}") from None

    @classmethod
    def from_dict(cls, d, base_dir="."):
        """Build from a JSON config; relative paths resolve against ``base_dir``."""
        d = dict(d)
        base = Path(base_dir)
        for key in ("scene", "measurements", "out_dir"):
            if isinstance(d.get(key), str):
                d[key] = base / d[key]
        if isinstance(d.get("scene"), dict):
            d["scene"] = fio.scene_from_dict(d["scene"])
        d.setdefault("out_dir", base / "out")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad pipeline config: {exc}") from None

    def to_dict(self):
        return {"mode": self.mode, "scene": self.scene.to_dict(),
                "measurements": None if self.measurements is None else str(self.measurements),
                "dbscan": {"eps": self.dbscan.eps, "min_pts": self.dbscan.min_pts},
                "biases": {str(k): v.tolist() for k, v in sorted(self.biases.items())},
                "gp_init": dict(sorted(self.gp_init.items())), "seed": self.seed,
                "contour_points": self.contour_points,
                "slam": dict(sorted(self.slam.items()))}


def _vec2(v, what):
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (2,) or not np.all(np.isfinite(a)):
        raise ConfigError(f"{what} must be a finite 2-vector")
    return a


@dataclass
class PipelineResult:
    status: str
    out_dir: Path
    artifacts: list
    failed_stage: str | None = None
    error: str | None = None
    rx_estimate: object = None
    models: dict = field(default_factory=dict)
    contours: dict = field(default_factory=dict)


# --- stages -----------------------------------------------------------------

def stage_synth(scene, seed, out_dir):
    """Synthesise measurements for ``scene``; writes ``measurements.csv``."""
    if scene.rx is None:
        raise ConfigError("synthesis needs the receiver state in the scene")
    if not scene.objects:
        raise ConfigError("the scene has no objects")
    ms = synthesize_scene(scene.tx, scene.rx, scene.objects, scene.paths_per_object,
                          scene.outlier_count, scene.noise_cov, rng_seed=seed)
    return [fio.write_measurements_csv(Path(out_dir) / "measurements.csv", ms)]


def stage_map(measurements_csv, scene, out_dir, cfg=None):
    """Incidence points with the known receiver state; writes ``ips.csv``."""
    if scene.rx is None:
        raise ConfigError("mapping needs the receiver state in the scene")
    ms = [m for m in fio.read_measurements_csv(measurements_csv)
          if m.path_kind_hint is not PathKind.LOS]
    ips = map_paths(ms, scene.rx, scene.tx, cfg or MappingConfig())
    return [fio.write_ips_csv(Path(out_dir) / "ips.csv", ips)]


def stage_slam(measurements_csv, scene, out_dir, cfg=None):
    """Joint receiver and incidence-point estimate; writes ``slam.json`` and ``ips.csv``."""
    ms = fio.read_measurements_csv(measurements_csv)
    res = snapshot_slam(ms, scene.tx, cfg or SlamConfig())
    out_dir = Path(out_dir)
    return [fio.write_json(out_dir / "slam.json", res.to_dict()),
            fio.write_ips_csv(out_dir / "ips.csv", res.incidence_points)]


def stage_cluster(ips_csv, out_dir, params=None, biases=None):
    """DBSCAN the incidence points; writes ``clusters.csv`` and ``training_<k>.csv``."""
    ips = fio.read_ips_csv(ips_csv)
    if not ips:
        raise ConfigError("no incidence points to cluster")
    pts = np.array([ip.position for ip in ips])
    clusters, _ = dbscan(pts, params or DbscanParams())
    biases = biases or {}
    out_dir = Path(out_dir)
    label = np.full(len(ips), -1)
    written = []
    for c in clusters:
        label[list(c.indices)] = c.cluster_id
        c = c.with_bias(biases.get(c.cluster_id, np.zeros(2)))
        written.append(fio.write_training_csv(out_dir / f"training_{c.cluster_id}.csv",
                                              to_polar(c, pts)))
    rows = [[ip.source_path_id, fio.fmt(ip.position[0]), fio.fmt(ip.position[1]), int(k)]
            for ip, k in zip(ips, label)]
    written.insert(0, fio._write_csv(out_dir / "clusters.csv",
                                     ["path_id", "x", "y", "cluster"], rows))
    return written


def stage_fit(training_csv, out_dir, gp_init=None, contour_points=180):
    """Fit one cluster's GP; writes the model JSON, predictions and contour CSVs."""
    ts = fio.read_training_csv(training_csv)
    k = ts.cluster_id
    init = GpHyperParams.initial(ts.radii, **(gp_init or {}))
    model = fit(ts, init)
    pred = predict(model)
    grid = -np.pi + 2.0 * np.pi * np.arange(contour_points) / contour_points
    cont = reconstruct_contour(predict(model, grid), ts.origin)
    out_dir = Path(out_dir)
    f = fio.fmt
    model_doc = model.to_dict() | {"cluster_id": k, "origin": ts.origin.tolist(),
                                   "init": init.to_dict()}
    return [
        fio.write_json(out_dir / f"model_{k}.json", model_doc),
        fio._write_csv(out_dir / f"prediction_{k}.csv",
                       ["theta_rad", "r_obs_m", "mean_m", "variance_m2", "ci95_half_m"],
                       [[f(a), f(r), f(m), f(v), f(h)] for a, r, m, v, h in zip(
                           ts.angles, ts.radii, pred.mean, pred.variance,
                           pred.ci95_half_width)]),
        fio._write_csv(out_dir / f"contour_{k}.csv",
                       ["x", "y", "inner_x", "inner_y", "outer_x", "outer_y"],
                       [[f(a[0]), f(a[1]), f(b[0]), f(b[1]), f(c[0]), f(c[1])]
                        for a, b, c in zip(cont.mean, cont.inner, cont.outer)]),
    ]


def load_model(model_json, training_csv):
    """Rebuild a fitted model from ``stage_fit`` output without retraining."""
    doc = fio.read_json(model_json)
    ts = fio.read_training_csv(training_csv)
    return GpModel.condition(ts, GpHyperParams.from_dict(doc["hyper"]))


# --- orchestration ----------------------------------------------------------

def _training_files(out_dir):
    return sorted(Path(out_dir).glob("training_*.csv"),
                  key=lambda p: int(p.stem.split("_")[1]))


def run_pipeline(cfg):
    """Run every stage for ``cfg`` and write ``manifest.json``.

    On failure the artifacts written so far are kept, the manifest records
    the failing stage, and the original exception is re-raised with a
    ``stage`` attribute.
    """
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    for stale in list(out.glob("training_*.csv")) + list(out.glob("model_*.json")) \
            + list(out.glob("prediction_*.csv")) + list(out.glob("contour_*.csv")):
        stale.unlink()
    artifacts = []
    result = PipelineResult("ok", out, artifacts)
    stage = "synth"
    try:
        if cfg.measurements is None:
            artifacts += stage_synth(cfg.scene, cfg.seed, out)
            meas = out / "measurements.csv"
        else:
            stage = "ingest"
            rows = fio.ingest_measurements(cfg.measurements)
            is_ips = bool(rows) and isinstance(rows[0], IncidencePoint)
            meas = None if is_ips else cfg.measurements
        if meas is None:
            ips_csv = cfg.measurements
        elif cfg.mode == "mapping":
            stage = "map"
            artifacts += stage_map(meas, cfg.scene, out)
            ips_csv = out / "ips.csv"
        else:
            stage = "slam"
            artifacts += stage_slam(meas, cfg.scene, out, SlamConfig(**cfg.slam))
            ips_csv = out / "ips.csv"
            result.rx_estimate = fio.read_json(out / "slam.json")["rx_estimate"]
        stage = "cluster"
        artifacts += stage_cluster(ips_csv, out, cfg.dbscan, cfg.biases)
        stage = "fit"
        for tr in _training_files(out):
            files = stage_fit(tr, out, cfg.gp_init, cfg.contour_points)
            artifacts += files
            k = fio.read_training_csv(tr).cluster_id
            result.models[k] = load_model(files[0], tr)
            result.contours[k] = np.loadtxt(files[2], delimiter=",", skiprows=1)[:, :2]
    except (EoeError, OSError) as exc:
        result.status, result.failed_stage, result.error = "failed", stage, str(exc)
        exc.stage = stage
        _write_manifest(cfg, result)
        raise
    _write_manifest(cfg, result)
    return result


def _write_manifest(cfg, result):
    out = result.out_dir
    entries = [{"path": Path(p).name, "sha256": fio.sha256_file(p)}
               for p in result.artifacts]
    doc = {"status": result.status, "failed_stage": result.failed_stage,
           "error": result.error, "config": cfg.to_dict(), "artifacts": entries}
    fio.write_json(out / "manifest.json", doc)
