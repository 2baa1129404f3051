"""Reusable synthetic scenes for benchmarks, demos and the default pipeline."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .geometry import RxState, TxState, synthesize_scene
from .shapes import ShapeSpec
from .slam import DEFAULT_GATE, joint_ls_refine


def random_slam_scene(seed, n_paths=6, n_outliers=0, *, add_noise=False,
                      noise_cov=None, area=10.0, outlier_delay=(10e-9, 50e-9),
                      max_draws=1000):
    """Random receiver and ``n_paths`` point scatterers around a fixed transmitter.

    The transmitter sits at the origin with a random orientation; the
    receiver is uniform in ``[-0.8 area, 0.8 area]^2`` with random heading and
    clock bias within +-50 ns. Each scatterer is a 0.3 m pillar observed by a
    single path.

    Outliers are gross in the detectability sense: each one, added on its own
    to the true inlier set, must leave a joint least-squares refit (started at
    the true state) with total cost above ``(n_paths + 1) * gate``. That
    rules out outliers a small receiver shift could absorb with every path
    inside the gate, which no consensus rule can tell from an inlier. Scenes
    failing the check are redrawn from the next sub-seed.

    Returns ``(tx, rx, measurements, draws)`` where ``draws`` counts the
    attempts used.
    """
    limit = (n_paths + 1) * DEFAULT_GATE
    for draw in range(max_draws):
        rng = np.random.default_rng([seed, draw])
        tx = TxState([0.0, 0.0], rng.uniform(-np.pi, np.pi))
        rx = RxState(rng.uniform(-0.8 * area, 0.8 * area, 2), rng.uniform(-np.pi, np.pi),
                     rng.uniform(-50e-9, 50e-9))
        objects = []
        while len(objects) < n_paths:
            c = rng.uniform(-area, area, 2)
            if min(np.hypot(*(c - tx.position)), np.hypot(*(c - rx.position))) > 1.5:
                objects.append(ShapeSpec.circle(0.3, c))
        ms = synthesize_scene(tx, rx, objects, 1, n_outliers, noise_cov=noise_cov,
                              rng_seed=rng, add_noise=add_noise,
                              outlier_delay=outlier_delay,
                              min_outlier_cost=10 * DEFAULT_GATE if n_outliers else None)
        inliers = [m for m in ms if not m.is_outlier]
        if all(joint_ls_refine(inliers + [o], tx, rx).total_cost > limit
               for o in ms if o.is_outlier):
            return tx, rx, ms, draw + 1
    raise ConfigError("no scene with detectable outliers within max_draws")


def pillars_and_wall():
    """Two round pillars and a 6 m wall around a receiver near the transmitter.

    The layout was picked for a well-conditioned receiver state: the wall
    runs close to the receiver and the pillars sit on opposite sides, so the
    clock bias and position are observable from NLoS paths alone.
    """
    return {
        "tx": {"position": [0.0, 0.0], "orientation": 0.0},
        "rx": {"position": [1.8, -1.8], "heading": 1.0, "clock_bias": 20e-9},
        "objects": [
            ShapeSpec.circle(0.5, (-4.5, 2.9)).to_dict(),
            ShapeSpec.circle(0.5, (-3.9, -5.8)).to_dict(),
            ShapeSpec.rectangle(3.0, 0.2, (0.6, -3.4)).to_dict(),
        ],
        "paths_per_object": 32,
        "outlier_count": 0,
        "noise": {"toa_ns": 1.0, "aod_deg": 1.0, "aoa_deg": 1.0},
    }
