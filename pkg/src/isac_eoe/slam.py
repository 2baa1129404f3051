"""Robust single-snapshot SLAM: receiver state plus incidence points.

Each single-bounce path adds three observations and two unknowns, so four
of them identify the four receiver unknowns (position, heading, clock
bias). The estimator is RANSAC-shaped:

1. draw a minimal subset, grid-search a starting receiver state and refine
   it by joint least squares over the subset;
2. score every path by its profiled cost (incidence point optimised out
   under the candidate receiver) and gate it with a chi-square threshold;
3. keep the candidate with most inliers (ties: lowest summed cost);
4. refine over all inliers, re-gate every path at the refined state and
   refit while the inlier set keeps changing without shrinking;
5. compute the final incidence points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from ._lm import levenberg_marquardt
from .errors import ConfigError, InsufficientPathsError, NoConsensusError
from .geometry import (
    DEGENERACY_TOL,
    SPEED_OF_LIGHT,
    IncidencePoint,
    PathKind,
    RxState,
    forward_jacobians,
    los_jacobian,
    los_parameters,
    predict_parameters,
    wrap_angle,
)
from .mapping import MappingConfig, cost_J, estimate_ip, geometric_seed, measurement_residual

DEFAULT_GATE = float(chi2.ppf(0.99, 3))
_INVALID_PENALTY = 1e6


@dataclass(frozen=True)
class SlamConfig:
    """Controls for :func:`snapshot_slam`.

    ``search_bounds`` is ``(xmin, xmax, ymin, ymax)`` for the receiver grid
    search; by default a square around the transmitter whose half-size is
    the largest bistatic range ``c * (toa + max_clock_bias)`` the
    measurements allow.
    """

    minimal_subset_size: int = 4
    ransac_iterations: int = 200
    inlier_gate: float = DEFAULT_GATE
    refine_max_iters: int = 100
    rng_seed: int = 0
    use_los: bool = False
    confidence: float = 0.999
    grid_points: int = 25
    heading_steps: int = 72
    random_positions: int = 100
    search_bounds: tuple | None = None
    gradient_tol: float = 1e-9
    repartition_rounds: int = 5
    max_clock_bias: float = 100e-9

    def __post_init__(self):
        if self.minimal_subset_size < (2 if self.use_los else 4):
            raise ConfigError("minimal_subset_size must be >= 4 (>= 2 with a LoS path)")
        if not self.inlier_gate > 0:
            raise ConfigError("inlier_gate must be positive")
        if self.ransac_iterations < 1 or self.refine_max_iters < 1 \
                or self.repartition_rounds < 0:
            raise ConfigError("iteration counts must be >= 1")
        if not self.max_clock_bias >= 0:
            raise ConfigError("max_clock_bias must be non-negative")


@dataclass(frozen=True)
class RefineResult:
    rx: RxState
    incidence_points: list
    total_cost: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class SlamResult:
    rx_estimate: RxState
    inlier_ids: frozenset
    outlier_ids: frozenset
    incidence_points: list
    total_cost: float
    candidate_cost: float
    path_costs: dict
    rounds: int
    converged: bool

    def to_dict(self):
        rx = self.rx_estimate
        return {
            "rx_estimate": {"position": rx.position.tolist(), "heading": rx.heading,
                            "clock_bias": rx.clock_bias},
            "inlier_ids": sorted(self.inlier_ids),
            "outlier_ids": sorted(self.outlier_ids),
            "total_cost": self.total_cost,
            "candidate_cost": self.candidate_cost,
            "path_costs": {str(k): v for k, v in sorted(self.path_costs.items())},
            "rounds": self.rounds,
            "converged": self.converged,
        }


def _is_los(z):
    return z.path_kind_hint == PathKind.LOS


def _rx_from_params(x):
    return RxState(x[:2], x[2], x[3] / SPEED_OF_LIGHT)


def stacked_residuals(measurements, tx):
    """Whitened residual function over ``[x, y, heading, c*bias, p_1, ..., p_n]``.

    Returns ``fun(x) -> (r, J)`` (or None at a degenerate point) in the
    form :func:`levenberg_marquardt` expects. IPs are ordered as the
    non-LoS measurements.
    """
    meas = list(measurements)
    n_par = 4 + 2 * sum(not _is_los(z) for z in meas)
    weights = [1.0 / z.noise_std for z in meas]

    def fun(x):
        rx = _rx_from_params(x)
        r = np.empty(3 * len(meas))
        jac = np.zeros((r.size, n_par))
        k = 0
        for row, (z, w) in enumerate(zip(meas, weights)):
            sl = slice(3 * row, 3 * row + 3)
            if _is_los(z):
                if np.hypot(*(rx.position - tx.position)) <= DEGENERACY_TOL:
                    return None
                g = los_parameters(tx, rx)
                j_rx = los_jacobian(tx, rx)
            else:
                p = x[4 + 2 * k: 6 + 2 * k]
                if (np.hypot(*(p - tx.position)) <= DEGENERACY_TOL
                        or np.hypot(*(p - rx.position)) <= DEGENERACY_TOL):
                    return None
                g = predict_parameters(tx.position, tx.orientation, rx.position,
                                       rx.heading, rx.clock_bias, p)
                j_ip, j_rx = forward_jacobians(tx, rx, p)
                jac[sl, 4 + 2 * k: 6 + 2 * k] = -(w[:, None] * j_ip)
                k += 1
            j_rx = j_rx.copy()
            j_rx[:, 3] /= SPEED_OF_LIGHT
            jac[sl, :4] = -(w[:, None] * j_rx)
            r[sl] = w * measurement_residual(z.z, g)
        return r, jac

    return fun


def joint_ls_refine(measurements, tx, rx_init, cfg=None, ip_init=None):
    """Minimise the summed path cost over the receiver state and all IPs.

    LoS-hinted measurements contribute three residuals and no incidence
    point. ``ip_init`` defaults to per-path :func:`estimate_ip` under
    ``rx_init``. Internally the clock bias is carried in metres.
    """
    cfg = cfg or SlamConfig()
    meas = list(measurements)
    nlos = [z for z in meas if not _is_los(z)]
    if ip_init is None:
        ip_init = [estimate_ip(z, rx_init, tx).position for z in nlos]
    x0 = np.concatenate([rx_init.position, [rx_init.heading,
                                            rx_init.clock_bias * SPEED_OF_LIGHT]]
                        + [np.asarray(p, float) for p in ip_init])
    fun = stacked_residuals(meas, tx)
    res = levenberg_marquardt(fun, x0, max_iterations=cfg.refine_max_iters,
                              gradient_tol=cfg.gradient_tol)
    rx = _rx_from_params(res.x)
    ips = []
    k = 0
    for z in nlos:
        p = res.x[4 + 2 * k: 6 + 2 * k]
        ips.append(IncidencePoint(p, z.path_id, cost_J(z, rx, tx, p), res.converged))
        k += 1
    return RefineResult(rx, ips, res.cost, res.converged, res.iterations)


def _search_box(measurements, tx, cfg):
    if cfg.search_bounds is not None:
        return tuple(cfg.search_bounds)
    # |rx - tx| <= c * (toa - bias) for every path
    half = SPEED_OF_LIGHT * (max(z.toa for z in measurements) + cfg.max_clock_bias)
    if not half > 0:
        raise ConfigError("measured ToAs imply a clock bias beyond max_clock_bias")
    x, y = tx.position
    return (x - half, x + half, y - half, y + half)


def _inside(position, box):
    x0, x1, y0, y1 = box
    return x0 <= position[0] <= x1 and y0 <= position[1] <= y1


def _pose_table(subset, tx, positions, headings):
    """Vectorised bias and misfit for every (position, heading) pair.

    For each NLoS path the incidence point is the AoD/AoA ray intersection,
    so both angle residuals vanish; the clock bias is the median of the
    bistatic-range residuals and the misfit is the remaining whitened
    range error. Returns ``(bias_m, score)`` of shape ``(K, L)``.
    """
    positions = np.atleast_2d(positions)
    headings = np.atleast_1d(headings)
    K, L = len(positions), len(headings)
    ranges, c_toa, sig, extra = [], [], [], np.zeros((K, L))
    for z in subset:
        sig.append(SPEED_OF_LIGHT * z.noise_std[0])
        c_toa.append(SPEED_OF_LIGHT * z.toa)
        if _is_los(z):
            d = positions - tx.position
            rng = np.broadcast_to(np.hypot(d[:, 0], d[:, 1])[:, None], (K, L))
            aod = wrap_angle(z.aod - (np.arctan2(d[:, 1], d[:, 0]) - tx.orientation))
            aoa = wrap_angle(z.aoa - (np.arctan2(-d[:, 1], -d[:, 0])[:, None] - headings))
            extra += (aod[:, None] / z.noise_std[1]) ** 2 + (aoa / z.noise_std[2]) ** 2
            ranges.append(np.array(rng))
            continue
        u_ang = z.aod + tx.orientation
        u = np.array([np.cos(u_ang), np.sin(u_ang)])
        v_ang = z.aoa + headings
        v = np.stack([np.cos(v_ang), np.sin(v_ang)], axis=-1)  # (L, 2)
        d = positions - tx.position  # (K, 2)
        uxv = u[0] * v[:, 1] - u[1] * v[:, 0]  # (L,)
        dxv = d[:, None, 0] * v[None, :, 1] - d[:, None, 1] * v[None, :, 0]
        dxu = d[:, 0] * u[1] - d[:, 1] * u[0]  # (K,)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = dxv / uxv[None, :]
            t = dxu[:, None] / uxv[None, :]
        ok = (np.abs(uxv)[None, :] > 1e-9) & (s > 0) & (t > 0)
        ranges.append(np.where(ok, s + t, np.nan))
    ranges = np.stack(ranges, axis=-1)  # (K, L, n)
    c_toa = np.array(c_toa)
    sig = np.array(sig)
    resid = c_toa - ranges
    valid = np.isfinite(resid)
    bias_m = _valid_median(resid, valid)
    mis = np.where(valid, ((resid - bias_m[..., None]) / sig) ** 2, _INVALID_PENALTY)
    return bias_m, mis.sum(axis=-1) + extra


def _valid_median(values, valid):
    """Median over the last axis of the entries flagged ``valid`` (0 if none)."""
    srt = np.sort(np.where(valid, values, np.inf), axis=-1)
    n_valid = valid.sum(axis=-1)
    lo = np.maximum((n_valid - 1) // 2, 0)[..., None]
    hi = np.maximum(n_valid // 2, 0)[..., None]
    med = 0.5 * (np.take_along_axis(srt, lo, -1) + np.take_along_axis(srt, hi, -1))[..., 0]
    return np.where(n_valid > 0, med, 0.0)


def bias_from_pose(subset, tx, position, heading):
    """Clock bias (seconds) given receiver position and heading."""
    bias_m, _ = _pose_table(subset, tx, np.asarray(position, float)[None, :],
                            np.array([heading]))
    return float(bias_m[0, 0]) / SPEED_OF_LIGHT


def heading_from_pose(subset, tx, position, clock_bias):
    """Circular mean of the headings implied by each NLoS path.

    With position and bias fixed, each path's incidence point follows from
    its AoD ray and bistatic range alone; the heading is then the angle of
    that point seen from the receiver minus the measured AoA.
    """
    position = np.asarray(position, float)
    w = tx.position - position
    angles = []
    for z in subset:
        if _is_los(z):
            d = tx.position - position
            angles.append(np.arctan2(d[1], d[0]) - z.aoa)
            continue
        u_ang = z.aod + tx.orientation
        u = np.array([np.cos(u_ang), np.sin(u_ang)])
        rng_bi = SPEED_OF_LIGHT * (z.toa - clock_bias)
        den = 2.0 * (rng_bi + w @ u)
        if abs(den) < 1e-12:
            continue
        s = (rng_bi**2 - w @ w) / den
        if s <= 0:
            continue
        ip = tx.position + s * u
        d = ip - position
        angles.append(np.arctan2(d[1], d[0]) - z.aoa)
    if not angles:
        return 0.0
    angles = np.asarray(angles)
    return wrap_angle(np.arctan2(np.sin(angles).sum(), np.cos(angles).sum()))


def initial_candidate(minimal_subset, tx, rng, cfg=None):
    """Coarse receiver state from a minimal subset.

    Scores a regular position grid plus random positions inside the search
    box against a grid of headings; the best pose's heading is then refined
    by :func:`heading_from_pose` and the bias re-derived by
    :func:`bias_from_pose`.
    """
    cfg = cfg or SlamConfig()
    rng = np.random.default_rng(rng)
    subset = list(minimal_subset)
    x0, x1, y0, y1 = _search_box(subset, tx, cfg)
    gx, gy = np.meshgrid(np.linspace(x0, x1, cfg.grid_points),
                         np.linspace(y0, y1, cfg.grid_points))
    positions = np.column_stack([gx.ravel(), gy.ravel()])
    if cfg.random_positions:
        rand = rng.uniform([x0, y0], [x1, y1], size=(cfg.random_positions, 2))
        positions = np.vstack([positions, rand])
    headings = -np.pi + 2.0 * np.pi * np.arange(cfg.heading_steps) / cfg.heading_steps
    bias_m, score = _pose_table(subset, tx, positions, headings)
    k, l = np.unravel_index(np.argmin(score), score.shape)
    pos = positions[k]
    heading = heading_from_pose(subset, tx, pos, bias_m[k, l] / SPEED_OF_LIGHT)
    # keep the grid heading if the circular-mean polish made things worse
    b_new, s_new = _pose_table(subset, tx, pos[None, :], np.array([heading]))
    if s_new[0, 0] > score[k, l]:
        heading, b_new = headings[l], bias_m[k:k + 1, l:l + 1]
    return RxState(pos, heading, float(b_new[0, 0]) / SPEED_OF_LIGHT)


def profiled_cost(z, rx, tx, mapping_cfg=None):
    """Path error metric: the cost with the incidence point optimised out."""
    if _is_los(z):
        res = measurement_residual(z.z, los_parameters(tx, rx))
        return float(np.sum((res / z.noise_std) ** 2))
    return estimate_ip(z, rx, tx, mapping_cfg).residual_cost


def _score(measurements, rx, tx, gate, mapping_cfg):
    costs = {}
    for z in measurements:
        if not _is_los(z):
            # a seed already under the gate settles the classification cheaply
            seeds = [p for p in geometric_seed(z, rx, tx)
                     if np.hypot(*(p - rx.position)) > DEGENERACY_TOL
                     and np.hypot(*(p - tx.position)) > DEGENERACY_TOL]
            best_seed = min((cost_J(z, rx, tx, p) for p in seeds), default=np.inf)
            if best_seed <= gate:
                costs[z.path_id] = best_seed
                continue
        costs[z.path_id] = profiled_cost(z, rx, tx, mapping_cfg)
    return costs


def _subsets(n_items, k, cfg):
    rng = np.random.default_rng(cfg.rng_seed)
    total = math.comb(n_items, k)
    if total <= cfg.ransac_iterations:
        combos = list(itertools.combinations(range(n_items), k))
        order = rng.permutation(len(combos))
        for i in order:
            yield combos[i]
        return
    for it in range(cfg.ransac_iterations):
        sub = np.random.default_rng([cfg.rng_seed, it]).choice(n_items, k, replace=False)
        yield tuple(sorted(int(i) for i in sub))


def snapshot_slam(measurements, tx, cfg=None, mapping_cfg=None):
    """Estimate the receiver state and incidence points from one snapshot.

    Raises
    ------
    InsufficientPathsError
        Fewer candidate paths than ``cfg.minimal_subset_size``.
    NoConsensusError
        The best candidate has fewer inliers than the minimal subset size.
    """
    cfg = cfg or SlamConfig()
    meas = list(measurements)
    ids = [z.path_id for z in meas]
    if len(set(ids)) != len(ids):
        raise ConfigError("path ids must be unique")
    los = [z for z in meas if _is_los(z)] if cfg.use_los else []
    if not cfg.use_los:
        # without the LoS hypothesis every path is a single-bounce candidate
        meas = [z if not _is_los(z) else _as_nlos(z) for z in meas]
    nlos = [z for z in meas if not _is_los(z)]
    n_draw = cfg.minimal_subset_size - (1 if los else 0)
    if len(nlos) < n_draw or n_draw < 1:
        raise InsufficientPathsError(
            f"{len(nlos)} single-bounce candidates; need {n_draw}")

    box = _search_box(meas, tx, cfg)
    best = None  # (n_inliers, -sum_cost, rx, costs)
    rounds = 0
    needed = cfg.ransac_iterations
    for sub in _subsets(len(nlos), n_draw, cfg):
        if rounds >= needed:
            break
        rounds += 1
        subset = los[:1] + [nlos[i] for i in sub]
        cand = initial_candidate(subset, tx, [cfg.rng_seed, rounds], cfg)
        try:
            ref = joint_ls_refine(subset, tx, cand, cfg)
        except ValueError:
            continue
        if not _inside(ref.rx.position, box):
            # far-field candidates make every path trivially consistent
            continue
        costs = _score(meas, ref.rx, tx, cfg.inlier_gate, mapping_cfg)
        inl = [c for c in costs.values() if c <= cfg.inlier_gate]
        key = (len(inl), -sum(inl))
        if best is None or key > best[:2]:
            best = (*key, ref.rx, costs)
            frac = len(inl) / len(meas)
            if frac >= 1.0:
                break
            p_good = frac**n_draw
            if 0 < p_good < 1:
                needed = min(needed, math.ceil(
                    math.log(1 - cfg.confidence) / math.log(1 - p_good)))

    if best is None or best[0] < cfg.minimal_subset_size:
        raise NoConsensusError("no candidate reached the minimal inlier count")
    _, _, rx_cand, costs = best
    inliers = [z for z in meas if costs[z.path_id] <= cfg.inlier_gate]
    ref = joint_ls_refine(inliers, tx, rx_cand, cfg)
    # re-partition at the refined state; a minimal-subset candidate is
    # noisier than the all-inlier fit and may have gated out good paths
    seen = {frozenset(z.path_id for z in inliers)}
    for _ in range(cfg.repartition_rounds):
        new_costs = _score(meas, ref.rx, tx, cfg.inlier_gate, mapping_cfg)
        new_inl = [z for z in meas if new_costs[z.path_id] <= cfg.inlier_gate]
        key = frozenset(z.path_id for z in new_inl)
        if len(new_inl) < len(inliers) or key in seen:
            break
        seen.add(key)
        new_ref = joint_ls_refine(new_inl, tx, ref.rx, cfg)
        inliers, costs, ref = new_inl, new_costs, new_ref
    # the refit must not end above the winning candidate's own cost on the
    # final inlier set; starting from the candidate guarantees that
    cand_costs = best[3]
    cand_cost = sum(cand_costs[z.path_id] for z in inliers)
    if ref.total_cost > cand_cost:
        alt = joint_ls_refine(inliers, tx, rx_cand, cfg)
        if alt.total_cost < ref.total_cost:
            ref = alt
    outlier_ids = frozenset(z.path_id for z in meas) - {z.path_id for z in inliers}
    rx_hat = ref.rx
    ips = [estimate_ip(z, rx_hat, tx, mapping_cfg) for z in inliers if not _is_los(z)]
    return SlamResult(rx_hat, frozenset(z.path_id for z in inliers), outlier_ids,
                      ips, ref.total_cost, cand_cost, costs, rounds, ref.converged)


def _as_nlos(z):
    from dataclasses import replace
    return replace(z, path_kind_hint=PathKind.NLOS)
