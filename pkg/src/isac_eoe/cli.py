"""Command-line entry point: ``isac-eoe <verb> [options]``.

Verbs mirror the pipeline stages (synth, map, slam, cluster, fit), plus
``eval`` for the Monte Carlo harness and ``pipeline`` for a full run.
``--config`` names a JSON file whose keys fill in any option not given on
the command line (for ``pipeline`` it is the whole pipeline config).

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as fio
from . import pipeline as pl
from .clustering import DbscanParams
from .errors import ConfigError, EoeError
from .evaluation import monte_carlo
from .shapes import ShapeSpec
from .slam import SlamConfig

log = logging.getLogger("isac_eoe")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _biases(items):
    out = {}
    for item in items or []:
        try:
            k, xy = item.split(":")
            x, y = xy.split(",")
            out[int(k)] = (float(x), float(y))
        except ValueError:
            raise ConfigError(f"bias must look like ID:X,Y, got {item!r}") from None
    return out


def _m_grid(text):
    if isinstance(text, (list, tuple)):
        return [int(m) for m in text]
    try:
        return [int(m) for m in str(text).split(",") if m.strip()]
    except ValueError:
        raise ConfigError(f"bad M grid {text!r}") from None


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise ConfigError(f"--{n.replace('_', '-')} is required")


def cmd_synth(args):
    _need(args, "scene")
    scene = fio.load_scene(args.scene)
    return pl.stage_synth(scene, args.seed, args.out)


def cmd_map(args):
    _need(args, "scene", "measurements")
    return pl.stage_map(args.measurements, fio.load_scene(args.scene), args.out)


def cmd_slam(args):
    _need(args, "scene", "measurements")
    cfg = SlamConfig(rng_seed=args.seed, ransac_iterations=args.iterations,
                     use_los=args.use_los)
    return pl.stage_slam(args.measurements, fio.load_scene(args.scene), args.out, cfg)


def cmd_cluster(args):
    _need(args, "ips")
    params = DbscanParams(args.eps, args.min_pts)
    return pl.stage_cluster(args.ips, args.out, params, _biases(args.bias))


def cmd_fit(args):
    files = args.training or sorted(Path(args.out).glob("training_*.csv"))
    if not files:
        raise ConfigError("no training files given or found in --out")
    init = {k: v for k, v in (("length_scale", args.length_scale),
                              ("signal_std", args.signal_std),
                              ("noise_std", args.noise_std)) if v is not None}
    written = []
    for f in files:
        written += pl.stage_fit(f, args.out, init, args.contour_points)
    return written


def cmd_eval(args):
    shape = ShapeSpec.from_dict(json.loads(args.shape)) if args.shape.startswith("{") \
        else _named_shape(args.shape)
    rep = monte_carlo(shape, _m_grid(args.m_grid), args.iterations, args.seed,
                      args.noise_std, args.jobs)
    out = Path(args.out)
    stem = f"eval_{shape.kind}"
    return [fio.write_json(out / f"{stem}.json", rep.to_dict()),
            fio._write_csv(out / f"{stem}_rmse.csv", ["M", "mean_rmse_m", "failures"],
                           [[m, fio.fmt(r), f] for m, r, f in rep.csv_rows()])]


def _named_shape(name):
    makers = {"circle": lambda: ShapeSpec.circle(1.0),
              "rectangle": lambda: ShapeSpec.rectangle(1.0, 0.5),
              "star": lambda: ShapeSpec.star()}
    if name not in makers:
        raise ConfigError(f"unknown shape {name!r}; use circle, rectangle, star or a JSON spec")
    return makers[name]()


def cmd_pipeline(args):
    doc = dict(args.config_doc)
    base = Path(args.config).parent if args.config else Path(".")
    for key in ("mode", "scene", "measurements"):
        if getattr(args, key, None) is not None:
            doc[key] = getattr(args, key)
    doc["seed"] = args.seed
    doc["out_dir"] = args.out
    if "scene" not in doc:
        raise ConfigError("pipeline needs a scene (--scene or in --config)")
    doc.setdefault("mode", "mapping")
    cfg = pl.PipelineConfig.from_dict(doc, base)
    cfg.out_dir = Path(args.out)
    res = pl.run_pipeline(cfg)
    return res.artifacts + [Path(args.out) / "manifest.json"]


def _global_flags(default):
    # the copy attached to each verb must not overwrite flags given before it
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=default, help="RNG seed (default 0)")
    g.add_argument("--out", default=default, help="output directory (default .)")
    g.add_argument("--config", default=default, help="JSON file with option defaults")
    g.add_argument("-v", "--verbose", action="store_true",
                   default=False if default is None else default)
    return g


def build_parser():
    common = _global_flags(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="isac-eoe", parents=[_global_flags(None)],
                                description="Extended-object shape estimation from "
                                            "single-bounce multipath.")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("synth", parents=[common], help="synthesise measurements")
    s.add_argument("--scene")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("map", parents=[common], help="incidence points, known receiver")
    s.add_argument("--scene")
    s.add_argument("--measurements")
    s.set_defaults(func=cmd_map)

    s = sub.add_parser("slam", parents=[common], help="receiver state and incidence points")
    s.add_argument("--scene", help="scene JSON; only the transmitter is used")
    s.add_argument("--measurements")
    s.add_argument("--iterations", type=int, default=200)
    s.add_argument("--use-los", action="store_true")
    s.set_defaults(func=cmd_slam)

    s = sub.add_parser("cluster", parents=[common], help="DBSCAN incidence points")
    s.add_argument("--ips")
    s.add_argument("--eps", type=float, default=0.5)
    s.add_argument("--min-pts", type=int, default=4)
    s.add_argument("--bias", action="append", metavar="ID:X,Y",
                   help="shift the polar origin of cluster ID")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("fit", parents=[common], help="fit GP contours per cluster")
    s.add_argument("training", nargs="*", help="training CSVs (default: all in --out)")
    s.add_argument("--length-scale", type=float)
    s.add_argument("--signal-std", type=float)
    s.add_argument("--noise-std", type=float)
    s.add_argument("--contour-points", type=int, default=180)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("eval", parents=[common], help="Monte Carlo RMSE versus M")
    s.add_argument("--shape", default="star", help="circle, rectangle, star or JSON spec")
    s.add_argument("--m-grid", default="16,32,64,128")
    s.add_argument("--iterations", type=int, default=1000)
    s.add_argument("--noise-std", type=float, default=0.1)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("pipeline", parents=[common], help="run every stage")
    s.add_argument("--mode", choices=pl.MODES)
    s.add_argument("--scene")
    s.add_argument("--measurements")
    s.set_defaults(func=cmd_pipeline)
    return p


def _apply_config(args, parser_defaults):
    """Fill options left at their defaults from the ``--config`` JSON."""
    args.config_doc = {}
    if args.config:
        doc = fio.read_json(args.config)
        if not isinstance(doc, dict):
            raise ConfigError("--config must hold a JSON object")
        args.config_doc = doc
        if args.verb != "pipeline":
            for key, value in doc.items():
                attr = key.replace("-", "_")
                if not hasattr(args, attr):
                    raise ConfigError(f"unknown option {key!r} in {args.config}")
                if getattr(args, attr) == parser_defaults.get(attr):
                    setattr(args, attr, value)
        else:
            for key in ("seed", "out"):
                if getattr(args, key) is None and key in doc:
                    setattr(args, key, doc[key])
            if args.out is None and "out_dir" in doc:
                args.out = str(Path(args.config).parent / doc["out_dir"])
    if args.seed is None:
        args.seed = 0
    if args.out is None:
        args.out = "."


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    defaults = vars(parser.parse_args([args.verb]))
    try:
        _apply_config(args, defaults)
        written = args.func(args)
    except ConfigError as exc:
        stage = getattr(exc, "stage", None)
        print(f"config error{f' in stage {stage}' if stage else ''}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EoeError, ArithmeticError, ValueError) as exc:
        stage = getattr(exc, "stage", None)
        where = f" in stage {stage}" if stage else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
