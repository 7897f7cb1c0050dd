"""Cycled stochastic EnKF on an augmented control vector.

The control of every member holds the zonal friction coefficients, the
inflow multiplier and one additive depth correction per floodplain subdomain.
Each cycle propagates the members over the window, maps their observation
equivalents to the anamorphosed space (identity for gauges, an empirical
normal-score transform for wet surface ratios), and updates the controls with
perturbed observations drawn in that space.

Ensemble statistics are accumulated with correctly rounded sums
(:func:`math.fsum`) and the member update is evaluated elementwise, so the
analysis does not depend on member order beyond relabelling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from . import anamorphosis
from .errors import ConfigurationError, ContractError, DegenerateDistributionError, SingularMatrixError
from .hydro import Grid, HydroState, PhysicalParams, apply_control, integrate, cell_friction
from .observation import (
    DEFAULT_WET_THRESHOLD,
    ObservationBatch,
    Subdomain,
    ensemble_equivalents,
)


@dataclass(frozen=True)
class ControlLayout:
    """Positions of the control blocks in a flat control array."""

    n_zones: int
    n_subdomains: int

    @property
    def size(self) -> int:
        return self.n_zones + 1 + self.n_subdomains

    @property
    def friction(self) -> slice:
        return slice(0, self.n_zones)

    @property
    def multiplier(self) -> int:
        return self.n_zones

    @property
    def corrections(self) -> slice:
        return slice(self.n_zones + 1, self.size)

    @property
    def names(self) -> list[str]:
        return ([f"friction_{z}" for z in range(self.n_zones)] + ["inflow_multiplier"]
                + [f"correction_{s}" for s in range(self.n_subdomains)])


@dataclass(frozen=True, eq=False)
class ControlVector:
    friction: np.ndarray
    inflow_multiplier: float
    depth_corrections: np.ndarray

    def __post_init__(self):
        friction = np.atleast_1d(np.asarray(self.friction, dtype=float))
        corrections = np.atleast_1d(np.asarray(self.depth_corrections, dtype=float))
        if not (np.all(np.isfinite(friction)) and np.all(np.isfinite(corrections))
                and np.isfinite(self.inflow_multiplier)):
            raise ContractError("control entries must be finite")
        if not np.all(friction > 0) or not self.inflow_multiplier > 0:
            raise ContractError("friction and inflow multiplier must be positive")
        object.__setattr__(self, "friction", friction)
        object.__setattr__(self, "depth_corrections", corrections)
        object.__setattr__(self, "inflow_multiplier", float(self.inflow_multiplier))

    @property
    def layout(self) -> ControlLayout:
        return ControlLayout(len(self.friction), len(self.depth_corrections))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.friction, [self.inflow_multiplier], self.depth_corrections])

    @classmethod
    def from_array(cls, values, layout: ControlLayout) -> ControlVector:
        values = np.asarray(values, dtype=float)
        if values.shape != (layout.size,):
            raise ContractError(f"expected {layout.size} control values, got {values.shape}")
        return cls(values[layout.friction], values[layout.multiplier], values[layout.corrections])


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Independent truncated Gaussian prior per control entry."""

    layout: ControlLayout
    mean: np.ndarray
    std: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        for name in ("mean", "std", "lower", "upper"):
            value = np.broadcast_to(np.asarray(getattr(self, name), dtype=float),
                                    (self.layout.size,)).copy()
            object.__setattr__(self, name, value)
        if np.any(self.std < 0) or np.any(self.lower > self.upper):
            raise ConfigurationError("prior std must be >= 0 and lower <= upper")

    @classmethod
    def from_blocks(cls, friction_mean, friction_std, friction_bounds,
                    multiplier_mean, multiplier_std, multiplier_bounds,
                    correction_std, n_subdomains, correction_bounds=(-np.inf, np.inf)):
        friction_mean = np.atleast_1d(np.asarray(friction_mean, dtype=float))
        layout = ControlLayout(len(friction_mean), n_subdomains)
        nz, ns = layout.n_zones, n_subdomains

        def block(f, m, c):
            return np.concatenate([np.broadcast_to(f, nz), [m], np.broadcast_to(c, ns)])

        return cls(layout,
                   mean=block(friction_mean, multiplier_mean, 0.0),
                   std=block(friction_std, multiplier_std, correction_std),
                   lower=block(friction_bounds[0], multiplier_bounds[0], correction_bounds[0]),
                   upper=block(friction_bounds[1], multiplier_bounds[1], correction_bounds[1]))

    @property
    def mean_control(self) -> ControlVector:
        return ControlVector.from_array(self.mean, self.layout)


@dataclass(eq=False)
class Ensemble:
    """Member controls ``(N, n_control)`` and depths ``(N, R, C)`` at ``time``."""

    controls: np.ndarray
    depth: np.ndarray
    time: float
    layout: ControlLayout
    member_equivalents: np.ndarray | None = None
    record_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def __post_init__(self):
        self.controls = np.asarray(self.controls, dtype=float)
        self.depth = np.asarray(self.depth, dtype=float)
        if self.controls.ndim != 2 or self.controls.shape[1] != self.layout.size:
            raise ContractError("controls must be (N, layout.size)")
        if self.depth.ndim != 3 or self.depth.shape[0] != self.controls.shape[0]:
            raise ContractError("depth must be (N, R, C) with one field per member")

    @property
    def n_members(self) -> int:
        return self.controls.shape[0]

    @property
    def members(self) -> list[tuple[ControlVector, HydroState]]:
        return [(ControlVector.from_array(x, self.layout), HydroState(self.time, d))
                for x, d in zip(self.controls, self.depth)]

    def mean_control(self) -> np.ndarray:
        return exact_mean(self.controls)

    def spread(self) -> np.ndarray:
        a = anomalies(self.controls)
        return np.sqrt(exact_cross(a, a).diagonal() / max(self.n_members - 1, 1))


@dataclass(frozen=True)
class CycleConfig:
    """Settings of one assimilation cycle.

    Attributes
    ----------
    window : (float, float)
        Start and end of the window [s]; observations lie in ``(start, end]``.
    correction_std : array_like or None
        Std of the depth corrections redrawn for every member at the start of
        a cycle that has observations.  ``None`` keeps the current values.
    bounds : (array_like, array_like) or None
        Clipping bounds applied to the analysed controls.
    extra_record_times : tuple of float
        Snapshot times recorded in addition to the observation times.
    """

    window: tuple
    batch: ObservationBatch = ObservationBatch()
    wet_threshold: float = DEFAULT_WET_THRESHOLD
    inflation: float = 1.0
    rng_seed: int = 0
    correction_std: object = None
    bounds: tuple | None = None
    extra_record_times: tuple = ()

    def __post_init__(self):
        t0, t1 = self.window
        if not t0 < t1:
            raise ContractError("window start must precede its end")
        if self.inflation < 1:
            raise ContractError("inflation must be >= 1")
        for t in list(self.batch.times) + list(self.extra_record_times):
            if not t0 < t <= t1:
                raise ContractError(f"time {t} outside window ({t0}, {t1}]")

    @property
    def record_times(self) -> list[float]:
        return sorted(set(self.batch.times) | {float(t) for t in self.extra_record_times})


@dataclass(frozen=True, eq=False)
class GainDiagnostics:
    cross_cov: np.ndarray
    obs_cov: np.ndarray
    gain: np.ndarray
    r_diag: np.ndarray


@dataclass(frozen=True, eq=False)
class TransformedBatch:
    """Observation-space quantities of one analysis, in the anamorphosed space."""

    obs: np.ndarray
    perturbed_obs: np.ndarray
    equivalents: np.ndarray
    r_diag: np.ndarray
    phi: anamorphosis.AnamorphosisFn
    is_wsr: np.ndarray
    degenerate_phi: bool = False


@dataclass(eq=False)
class CycleReport:
    window: tuple
    n_gauge: int = 0
    n_wsr: int = 0
    mean_before: np.ndarray | None = None
    mean_after: np.ndarray | None = None
    spread_before: np.ndarray | None = None
    spread_after: np.ndarray | None = None
    innovation_physical: np.ndarray | None = None
    innovation_transformed: np.ndarray | None = None
    residual_analysis: np.ndarray | None = None
    phi: anamorphosis.AnamorphosisFn | None = None
    degenerate_phi: bool = False

    @property
    def analysed(self) -> bool:
        return self.mean_after is not None


# ---------------------------------------------------------------------------
# ensemble statistics


def exact_mean(a) -> np.ndarray:
    """Column means of ``a`` (N, p) with correctly rounded sums."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    return np.array([math.fsum(col) / n for col in a.T])


def anomalies(a) -> np.ndarray:
    """Deviations from the column means; constant columns give exact zeros."""
    a = np.asarray(a, dtype=float)
    dev = a - exact_mean(a)
    dev[:, np.all(a == a[:1], axis=0)] = 0.0
    return dev


def exact_cross(a, b) -> np.ndarray:
    """``a.T @ b`` with every entry summed by :func:`math.fsum`."""
    prod = a[:, :, None] * b[:, None, :]
    out = np.empty(prod.shape[1:])
    for idx in np.ndindex(*out.shape):
        out[idx] = math.fsum(prod[(slice(None),) + idx])
    return out


# ---------------------------------------------------------------------------
# operations


def init_ensemble(prior: PriorSpec, n_members: int, seed, spinup: HydroState,
                  max_attempts: int = 1000) -> Ensemble:
    """Draw member controls from the truncated Gaussian prior.

    Out-of-bounds entries are redrawn up to ``max_attempts`` times; all members
    start from ``spinup``.
    """
    if n_members < 2:
        raise ContractError("an ensemble needs at least 2 members")
    rng = np.random.default_rng(seed)
    shape = (n_members, prior.layout.size)
    draws = prior.mean + prior.std * rng.standard_normal(shape)
    for _ in range(max_attempts):
        bad = (draws < prior.lower) | (draws > prior.upper)
        if not bad.any():
            break
        redraw = prior.mean + prior.std * rng.standard_normal(shape)
        draws = np.where(bad, redraw, draws)
    else:
        if ((draws < prior.lower) | (draws > prior.upper)).any():
            raise ConfigurationError(
                f"prior bounds unsatisfiable after {max_attempts} resampling attempts")
    depth = np.broadcast_to(spinup.depth, (n_members,) + spinup.depth.shape).copy()
    return Ensemble(draws, depth, spinup.time, prior.layout)


def propagate(controls, depth, t_start: float, t_end: float, grid: Grid,
              base: PhysicalParams, subdomains: Sequence[Subdomain], record_times):
    """Impose each member's control on its state and integrate the batch."""
    layout = ControlLayout(grid.n_zones, len(subdomains))
    start = np.empty_like(depth)
    for i, (x, d) in enumerate(zip(controls, depth)):
        control = ControlVector.from_array(x, layout)
        _, state = apply_control(control, base, HydroState(t_start, d), subdomains)
        start[i] = state.depth
    kcell = cell_friction(grid, controls[:, layout.friction])
    return integrate(start, t_start, kcell, controls[:, layout.multiplier], grid,
                     base.hydrograph, record_times, t_end)


def forecast(ens: Ensemble, grid: Grid, base: PhysicalParams,
             subdomains: Sequence[Subdomain], cfg: CycleConfig) -> Ensemble:
    """Propagate every member over the window and compute its equivalents."""
    t0, t1 = cfg.window
    if ens.time != t0:
        raise ContractError(f"ensemble is at t={ens.time}, window starts at {t0}")
    times = cfg.record_times
    snaps, final = propagate(ens.controls, ens.depth, t0, t1, grid, base, subdomains, times)
    equivalents = ensemble_equivalents(snaps, times, grid, subdomains, cfg.batch,
                                       cfg.wet_threshold)
    return Ensemble(ens.controls.copy(), final, t1, ens.layout, equivalents, times, snaps)


def perturb(obs, r_diag, n_members: int, n_gauges: int, seed) -> np.ndarray:
    """Perturbed observations ``(N, n_obs)`` with independent N(0, r) noise.

    Gauge noise is drawn before WSR noise so that adding WSR observations
    leaves the gauge perturbations of a given seed unchanged.
    """
    obs = np.asarray(obs, dtype=float)
    rng = np.random.default_rng(seed)
    z_gauge = rng.standard_normal((n_gauges, n_members))
    z_wsr = rng.standard_normal((len(obs) - n_gauges, n_members))
    return obs + np.vstack([z_gauge, z_wsr]).T * np.sqrt(np.asarray(r_diag, dtype=float))


def transform_batch(ens: Ensemble, batch: ObservationBatch, seed) -> TransformedBatch:
    """Map observations and member equivalents to the anamorphosed space.

    The WSR transform is fitted to the observed ratios pooled with every
    member's equivalents; gauges go through the identity.
    """
    if len(batch) == 0:
        raise ContractError("cannot transform an empty observation batch")
    if ens.member_equivalents is None or ens.member_equivalents.shape[1] != len(batch):
        raise ContractError("ensemble has no equivalents for this batch; run forecast first")
    obs = batch.values
    equiv = ens.member_equivalents.copy()
    is_wsr = batch.is_wsr
    phi = anamorphosis.identity_fn()
    degenerate = False
    if is_wsr.any():
        pool = np.concatenate([obs[is_wsr], equiv[:, is_wsr].ravel()])
        try:
            phi = anamorphosis.build(pool)
        except DegenerateDistributionError:
            degenerate = True
            warnings.warn("WSR sample has no spread; using the identity anamorphosis",
                          RuntimeWarning, stacklevel=2)
        obs = obs.copy()
        obs[is_wsr] = phi.forward(obs[is_wsr])
        equiv[:, is_wsr] = phi.forward(equiv[:, is_wsr])
    r_diag = batch.error_std ** 2
    perturbed = perturb(obs, r_diag, ens.n_members, len(batch.gauges), seed)
    return TransformedBatch(obs, perturbed, equiv, r_diag, phi, is_wsr, degenerate)


def kalman_gain(x_anom, y_anom, r_diag) -> GainDiagnostics:
    """Ensemble gain ``P_xy (P_yy + R)^-1`` via a Cholesky solve."""
    n = x_anom.shape[0]
    pxy = exact_cross(x_anom, y_anom) / (n - 1)
    pyy = exact_cross(y_anom, y_anom) / (n - 1)
    r_diag = np.asarray(r_diag, dtype=float)
    s = pyy + np.diag(r_diag)
    try:
        factor = scipy.linalg.cho_factor(s, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(s) / len(s)
        try:
            factor = scipy.linalg.cho_factor(s + jitter * np.eye(len(s)), lower=True)
        except np.linalg.LinAlgError:
            cond = np.linalg.cond(s)
            raise SingularMatrixError(
                f"innovation covariance is singular (condition number {cond:.3e})",
                condition_number=cond) from None
    gain = scipy.linalg.cho_solve(factor, pxy.T).T
    return GainDiagnostics(pxy, pyy, gain, r_diag)


def enkf_update(controls, equivalents, perturbed_obs, r_diag, inflation: float = 1.0,
                bounds=None) -> tuple[np.ndarray, GainDiagnostics]:
    """Perturbed-observation update of a control ensemble.

    Parameters
    ----------
    controls : ndarray, shape (N, n_control)
    equivalents, perturbed_obs : ndarray, shape (N, n_obs)
    r_diag : ndarray, shape (n_obs,)
    inflation : float
        Multiplicative factor applied to control anomalies before the update.
    bounds : (lower, upper) or None
        Clipping bounds for the analysed controls.
    """
    x = np.array(controls, dtype=float)
    if x.shape[0] < 2:
        raise ContractError("analysis needs at least 2 members")
    if inflation != 1.0:
        x = exact_mean(x) + inflation * anomalies(x)
    diag = kalman_gain(anomalies(x), anomalies(equivalents), r_diag)
    innovations = perturbed_obs - equivalents
    update = np.zeros_like(x)
    for k in range(innovations.shape[1]):
        update += innovations[:, k, None] * diag.gain[None, :, k]
    xa = x + update
    if bounds is not None:
        xa = np.clip(xa, bounds[0], bounds[1])
    return xa, diag


def analysis(ens: Ensemble, tb: TransformedBatch, inflation: float = 1.0,
             bounds=None) -> tuple[Ensemble, GainDiagnostics]:
    """Update the member controls with the transformed innovations."""
    if tb.equivalents.shape[0] != ens.n_members:
        raise ContractError("transformed batch does not match the ensemble size")
    xa, diag = enkf_update(ens.controls, tb.equivalents, tb.perturbed_obs, tb.r_diag,
                           inflation, bounds)
    updated = Ensemble(xa, ens.depth, ens.time, ens.layout, ens.member_equivalents,
                       ens.record_times, ens.snapshots)
    return updated, diag


def analysis_physical(ens: Ensemble, batch: ObservationBatch, seed, inflation: float = 1.0,
                      bounds=None) -> tuple[Ensemble, GainDiagnostics]:
    """Classical EnKF analysis with innovations in the physical space."""
    obs = batch.values
    r_diag = batch.error_std ** 2
    perturbed = perturb(obs, r_diag, ens.n_members, len(batch.gauges), seed)
    xa, diag = enkf_update(ens.controls, ens.member_equivalents, perturbed, r_diag,
                           inflation, bounds)
    return Ensemble(xa, ens.depth, ens.time, ens.layout, ens.member_equivalents), diag


def cycle_seeds(rng_seed) -> tuple[int, int]:
    """Seeds of the correction redraw and of the observation perturbations."""
    redraw, obs = np.random.SeedSequence(rng_seed).generate_state(2)
    return int(redraw), int(obs)


def run_cycle(ens: Ensemble, grid: Grid, base: PhysicalParams,
              subdomains: Sequence[Subdomain], cfg: CycleConfig):
    """Forecast, transform, analyse and replay one window.

    After the analysis the window is replayed from its initial states with the
    analysed controls (depth corrections imposed at the window start), so that
    the returned member states are consistent with the updated parameters.
    The corrections are then reset to zero.

    Returns
    -------
    (Ensemble, GainDiagnostics or None, CycleReport)
        The ensemble at the window end, the gain diagnostics (``None`` when the
        window has no observations) and the cycle report.
    """
    t0, t1 = cfg.window
    layout = ens.layout
    report = CycleReport(cfg.window, len(cfg.batch.gauges), len(cfg.batch.wsrs))
    if len(cfg.batch) == 0:
        if ens.time != t0:
            raise ContractError(f"ensemble is at t={ens.time}, window starts at {t0}")
        snaps, final = propagate(ens.controls, ens.depth, t0, t1, grid, base, subdomains,
                                 cfg.record_times)
        return (Ensemble(ens.controls.copy(), final, t1, layout, None, cfg.record_times, snaps),
                None, report)

    redraw_seed, obs_seed = cycle_seeds(cfg.rng_seed)
    controls = ens.controls.copy()
    if cfg.correction_std is not None:
        std = np.broadcast_to(np.asarray(cfg.correction_std, dtype=float), layout.n_subdomains)
        rng = np.random.default_rng(redraw_seed)
        controls[:, layout.corrections] = std * rng.standard_normal(
            (ens.n_members, layout.n_subdomains))
    start = Ensemble(controls, ens.depth, ens.time, layout)
    report.mean_before = start.mean_control()
    report.spread_before = start.spread()

    fc = forecast(start, grid, base, subdomains, cfg)
    tb = transform_batch(fc, cfg.batch, obs_seed)
    analysed, diag = analysis(fc, tb, cfg.inflation, cfg.bounds)
    report.mean_after = analysed.mean_control()
    report.spread_after = analysed.spread()
    report.innovation_physical = cfg.batch.values - exact_mean(fc.member_equivalents)
    report.innovation_transformed = tb.obs - exact_mean(tb.equivalents)
    report.phi = tb.phi if tb.is_wsr.any() else None
    report.degenerate_phi = tb.degenerate_phi

    times = cfg.record_times
    snaps, final = propagate(analysed.controls, ens.depth, t0, t1, grid, base, subdomains,
                             times)
    replay_equiv = ensemble_equivalents(snaps, times, grid, subdomains, cfg.batch,
                                        cfg.wet_threshold)
    report.residual_analysis = cfg.batch.values - exact_mean(replay_equiv)
    controls = analysed.controls.copy()
    controls[:, layout.corrections] = 0.0
    return Ensemble(controls, final, t1, layout, replay_equiv, times, snaps), diag, report


def write_cycle_diagnostics(path, report: CycleReport, diag: GainDiagnostics | None,
                            layout: ControlLayout):
    """Per-cycle CSV: mean/spread of the controls, innovation statistics, gain."""
    rows = [("section", "name", "index", "value")]
    if report.analysed:
        for i, name in enumerate(layout.names):
            rows.append(("mean_before", name, "", report.mean_before[i]))
            rows.append(("mean_after", name, "", report.mean_after[i]))
            rows.append(("spread_before", name, "", report.spread_before[i]))
            rows.append(("spread_after", name, "", report.spread_after[i]))
        for space, innov in (("physical", report.innovation_physical),
                             ("transformed", report.innovation_transformed)):
            for kind, sel in (("gauge", slice(0, report.n_gauge)),
                              ("wsr", slice(report.n_gauge, None))):
                part = innov[sel]
                if part.size:
                    rows.append((f"innovation_{space}", kind, "mean", float(np.mean(part))))
                    rows.append((f"innovation_{space}", kind, "rms",
                                 float(np.sqrt(np.mean(part ** 2)))))
    if diag is not None:
        for (i, j), g in np.ndenumerate(diag.gain):
            rows.append(("gain", layout.names[i], j, g))
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row) + "\n")
