"""Monte Carlo RMSE harness for the radial GP shape estimator."""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EoeError
from .gp import fit, predict
from .shapes import ShapeSpec, radial_truth, rmse, sample_contour


@dataclass(frozen=True)
class MonteCarloReport:
    """Per-M mean RMSE over the successful iterations."""

    shape: ShapeSpec
    m_values: tuple
    mean_rmse: tuple
    iterations: int
    base_seed: int
    noise_std: float
    failures: tuple = field(default=())

    def __post_init__(self):
        if not self.failures:
            object.__setattr__(self, "failures", (0,) * len(self.m_values))

    def to_dict(self):
        return {
            "shape": self.shape.to_dict(),
            "m_values": list(self.m_values),
            "mean_rmse": list(self.mean_rmse),
            "failures": list(self.failures),
            "iterations": self.iterations,
            "base_seed": self.base_seed,
            "noise_std": self.noise_std,
        }

    def csv_rows(self):
        return [(m, r, f) for m, r, f in zip(self.m_values, self.mean_rmse, self.failures)]


def one_trial(shape, M, noise_std, seed):
    """RMSE of a single sample-fit-predict cycle, or ``nan`` if the fit failed.

    ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    ts = sample_contour(shape, M, noise_std=noise_std, rng=np.random.default_rng(seed))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model = fit(ts)
            pred = predict(model)
    except (EoeError, FloatingPointError, np.linalg.LinAlgError):
        return float("nan")
    return rmse(radial_truth(shape, ts.angles), pred.mean)


def _chunk(args):
    shape, M, noise_std, base_seed, m_idx, its = args
    return [one_trial(shape, M, noise_std, [base_seed, m_idx, it]) for it in its]


def monte_carlo(shape, m_grid, iterations=1000, base_seed=0, noise_std=0.1, n_jobs=1):
    """Mean contour RMSE for each M in ``m_grid``.

    Iteration ``it`` at grid index ``k`` draws from the stream
    ``default_rng([base_seed, k, it])``, so results do not depend on
    ``n_jobs``. Failed fits are counted and left out of the mean.
    """
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    m_grid = tuple(int(m) for m in m_grid)
    if not m_grid or min(m_grid) < 1:
        raise ConfigError("m_grid needs at least one M >= 1")
    if n_jobs < 1:
        raise ConfigError("n_jobs must be >= 1")
    jobs = []
    for k, M in enumerate(m_grid):
        for part in np.array_split(np.arange(iterations), n_jobs):
            if part.size:
                jobs.append((shape, M, noise_std, base_seed, k, part.tolist()))
    if n_jobs == 1:
        chunks = list(map(_chunk, jobs))
    else:
        with ProcessPoolExecutor(n_jobs) as pool:
            chunks = list(pool.map(_chunk, jobs))
    # chunks come back in submission order, which fixes the reduction order
    per_m = [[] for _ in m_grid]
    for job, vals in zip(jobs, chunks):
        per_m[job[4]].extend(vals)
    means, fails = [], []
    for vals in per_m:
        v = np.asarray(vals)
        ok = np.isfinite(v)
        fails.append(int((~ok).sum()))
        means.append(float(v[ok].mean()) if ok.any() else float("nan"))
    return MonteCarloReport(shape, m_grid, tuple(means), iterations, base_seed,
                            float(noise_std), tuple(fails))
