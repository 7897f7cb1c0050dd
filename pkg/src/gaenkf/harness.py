"""Twin experiments: synthetic truth, free run and the two assimilation set-ups.

Three experiments share the same truth, prior and seeds:

``FR``
    the prior-mean control propagated without assimilation;
``IDA``
    cycled EnKF on gauge water levels only;
``IGDA``
    cycled EnKF on gauge levels plus anamorphosed wet surface ratios.

The trajectory scored for every experiment is a single deterministic run
driven by the ensemble-mean analysed control of each window (the prior mean for
FR), so an assimilation experiment without any observation reproduces FR
exactly.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import anamorphosis
from .enkf import (
    ControlLayout,
    ControlVector,
    CycleConfig,
    PriorSpec,
    init_ensemble,
    propagate,
    run_cycle,
    write_cycle_diagnostics,
)
from .errors import ConfigurationError, ContractError, DegenerateDistributionError
from .hydro import Grid, HydroState, PhysicalParams, SolverConfig, apply_control, cell_friction
from .hydro import integrate
from .hydro import read_ascii_grid, read_hydrograph
from .metrics import ContingencyCounts, contingency, csi, format_csi, rmse
from .observation import (
    GaugeObs,
    ObservationBatch,
    Subdomain,
    WsrObs,
    check_subdomains,
    read_batch,
    read_pgm,
    write_batch,
    write_pgm,
)

log = logging.getLogger(__name__)

MODES = ("FR", "IDA", "IGDA")
NOT_EVALUATED = 4


@dataclass(frozen=True, eq=False)
class Gauge:
    name: str
    cell: int


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything that defines a twin experiment.

    Times are in seconds; the cycle plan is ``n_cycles`` contiguous windows of
    ``cycle_length`` starting at ``t_start``.
    """

    grid: Grid
    hydrograph: np.ndarray
    gauges: tuple
    subdomains: tuple
    floodplain_cells: np.ndarray
    truth: ControlVector
    prior: PriorSpec
    t_start: float = 0.0
    cycle_length: float = 6 * 3600.0
    n_cycles: int = 8
    spinup: float = 12 * 3600.0
    gauge_interval: float = 3600.0
    gauge_std: float = 0.05
    wsr_times: tuple = ()
    wsr_std: float = 0.25
    csi_times: tuple = ()
    truth_gauge_noise: float | None = None
    truth_wsr_noise: float | None = None
    correction_std: float = 0.0
    wet_threshold: float = 0.05
    inflation: float = 1.0
    n_members: int = 50
    seed: int = 0
    mode: str = "IGDA"
    output: Path = Path("out")

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_cycles < 1 or not self.cycle_length > 0:
            raise ConfigurationError("need at least one cycle of positive length")
        if self.n_members < 2:
            raise ConfigurationError("n_members must be >= 2")
        if not (self.gauge_std > 0 and self.wsr_std > 0):
            raise ConfigurationError("observation error stds must be positive")
        if self.truth.layout != self.prior.layout:
            raise ConfigurationError("truth and prior control dimensions differ")
        if self.prior.layout != ControlLayout(self.grid.n_zones, len(self.subdomains)):
            raise ConfigurationError("prior does not match the zones and subdomains")
        for t in tuple(self.wsr_times) + tuple(self.csi_times):
            if not self.t_start < t <= self.t_end:
                raise ConfigurationError(f"snapshot time {t} outside the event")
        for g in self.gauges:
            if not 0 <= g.cell < self.grid.n_cells:
                raise ConfigurationError(f"gauge {g.name} outside the grid")
        try:
            check_subdomains(self.subdomains, self.grid)
        except ContractError as exc:
            raise ConfigurationError(str(exc)) from None

    @property
    def t_end(self) -> float:
        return self.t_start + self.n_cycles * self.cycle_length

    @property
    def windows(self) -> list[tuple[float, float]]:
        edges = self.t_start + self.cycle_length * np.arange(self.n_cycles + 1)
        return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]

    @property
    def gauge_times(self) -> list[float]:
        n = int(np.floor((self.t_end - self.t_start) / self.gauge_interval + 1e-9))
        return [self.t_start + self.gauge_interval * k for k in range(1, n + 1)]

    @property
    def snapshot_times(self) -> list[float]:
        return sorted({float(t) for t in self.csi_times or self.wsr_times})

    @property
    def base_params(self) -> PhysicalParams:
        return PhysicalParams(self.prior.mean_control.friction,
                              self.prior.mean_control.inflow_multiplier, self.hydrograph)

    @property
    def truth_dir(self) -> Path:
        return Path(self.output) / "truth"

    def mode_dir(self, mode: str | None = None) -> Path:
        return Path(self.output) / (mode or self.mode)


def bundled_config_path() -> Path:
    return Path(str(resources.files("gaenkf") / "data" / "valley" / "case.toml"))


def _cells(grid_shape, pairs):
    return tuple(int(r) * grid_shape[1] + int(c) for r, c in pairs)


def load_config(path=None, seed: int | None = None, output=None, mode: str | None = None,
                **overrides) -> ExperimentConfig:
    """Read an experiment TOML file; relative input paths resolve next to it.

    ``seed``, ``output`` and ``mode`` override the file; further keyword
    arguments override :class:`ExperimentConfig` fields.
    """
    path = Path(path) if path is not None else bundled_config_path()
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    root = path.parent
    try:
        model = doc["model"]
        bed, cell_size = read_ascii_grid(root / model["dem"])
        zones, _ = read_ascii_grid(root / model["zones"])
        hydrograph = read_hydrograph(root / model["hydrograph"])
        grid = Grid(cell_size, bed, zones.astype(int),
                    inflow_cells=_cells(bed.shape, model["inflow_cells"]),
                    outlet_cells=_cells(bed.shape, model.get("outlet_cells", [])),
                    outlet_slope=model.get("outlet_slope", 1e-3),
                    solver=SolverConfig(**model.get("solver", {})))
        gauges = tuple(Gauge(g["name"], _cells(bed.shape, [g["cell"]])[0])
                       for g in doc["gauges"])
        subdomains = tuple(Subdomain.rectangle(k, grid, s["rows"], s["cols"])
                           for k, s in enumerate(doc["subdomains"]))
        floodplain = np.flatnonzero(np.isin(grid.friction_zone_id,
                                            model["floodplain_zones"]).reshape(-1))
        p = doc["prior"]
        prior = PriorSpec.from_blocks(
            p["friction_mean"], p["friction_std"], p["friction_bounds"],
            p["multiplier_mean"], p["multiplier_std"], p["multiplier_bounds"],
            p.get("correction_std", 0.0), len(subdomains),
            p.get("correction_bounds", (-np.inf, np.inf)))
        t = doc["truth"]
        truth = ControlVector(t["friction"], t["inflow_multiplier"],
                              t.get("depth_corrections", np.zeros(len(subdomains))))
        cyc = doc["cycles"]
        obs = doc["observations"]
        exp = doc.get("experiment", {})
        fields = dict(
            grid=grid, hydrograph=hydrograph, gauges=gauges, subdomains=subdomains,
            floodplain_cells=floodplain, truth=truth, prior=prior,
            t_start=float(cyc.get("start_s", 0.0)),
            cycle_length=float(cyc["length_s"]), n_cycles=int(cyc["count"]),
            inflation=float(cyc.get("inflation", 1.0)),
            spinup=float(model.get("spinup_s", 12 * 3600.0)),
            wet_threshold=float(model.get("wet_threshold", 0.05)),
            gauge_interval=float(obs["gauge_interval_s"]), gauge_std=float(obs["gauge_std"]),
            wsr_times=tuple(float(x) for x in obs.get("wsr_times_s", ())),
            wsr_std=float(obs.get("wsr_std_transformed", 0.25)),
            csi_times=tuple(float(x) for x in obs.get("csi_times_s", ())),
            truth_gauge_noise=obs.get("truth_gauge_noise"),
            truth_wsr_noise=obs.get("truth_wsr_noise"),
            correction_std=float(p.get("correction_std", 0.0)),
            n_members=int(exp.get("n_members", 50)), seed=int(exp.get("seed", 0)),
            mode=exp.get("mode", "IGDA"), output=Path(exp.get("output", "out")),
        )
    except KeyError as exc:
        raise ConfigurationError(f"{path}: missing key {exc}") from None
    except ContractError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if seed is not None:
        fields["seed"] = int(seed)
    if output is not None:
        fields["output"] = Path(output)
    if mode is not None:
        fields["mode"] = mode
    fields.update(overrides)
    return ExperimentConfig(**fields)


def _seeds(cfg: ExperimentConfig):
    truth, init, cycles = np.random.SeedSequence(cfg.seed).spawn(3)
    cycle_seeds = [int(s.generate_state(1)[0]) for s in cycles.spawn(cfg.n_cycles)]
    return truth, init, cycle_seeds


def spinup_depths(cfg: ExperimentConfig, controls) -> np.ndarray:
    """Depth at ``t_start`` of each control row after running from a dry bed.

    The discharge is held at its ``t_start`` value during the spin-up.
    """
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    layout = cfg.prior.layout
    dry = np.zeros((len(controls), cfg.grid.n_rows, cfg.grid.n_cols))
    t0 = cfg.t_start - cfg.spinup
    q0 = cfg.base_params.discharge(cfg.t_start)
    hydro = np.array([[t0, q0], [cfg.t_start, q0]])
    kcell = cell_friction(cfg.grid, controls[:, layout.friction])
    _, depth = integrate(dry, t0, kcell, controls[:, layout.multiplier], cfg.grid, hydro,
                         [], cfg.t_start)
    return depth


def spinup_state(cfg: ExperimentConfig, control: ControlVector) -> HydroState:
    """Depth at ``t_start`` after running from a dry bed under the initial discharge."""
    return HydroState(cfg.t_start, spinup_depths(cfg, control.to_array())[0])


# ---------------------------------------------------------------------------
# truth


@dataclass(eq=False)
class TruthArtifacts:
    observations: ObservationBatch
    gauge_times: list
    truth_wse: dict          # gauge name -> array over gauge_times
    masks: dict              # snapshot time -> bool mask
    wsr_values: np.ndarray   # (n_times, n_subdomains) noiseless


def generate_truth(cfg: ExperimentConfig, write: bool = True) -> TruthArtifacts:
    """Run the truth control and sample noisy synthetic observations."""
    truth_seed, _, _ = _seeds(cfg)
    rng = np.random.default_rng(truth_seed)
    # truth depth corrections describe floodplain water present at t_start
    _, start = apply_control(cfg.truth, cfg.base_params, spinup_state(cfg, cfg.truth),
                             cfg.subdomains)
    gauge_times = cfg.gauge_times
    record = sorted(set(gauge_times) | set(cfg.wsr_times) | set(cfg.snapshot_times))
    kcell = cell_friction(cfg.grid, cfg.truth.friction)[None]
    snaps, _ = integrate(start.depth[None], cfg.t_start, kcell, [cfg.truth.inflow_multiplier],
                         cfg.grid, cfg.hydrograph, record, cfg.t_end)
    at = {t: s[0] for t, s in zip(record, snaps)}
    bed = cfg.grid.bed_elevation.reshape(-1)

    gauge_noise = cfg.gauge_std if cfg.truth_gauge_noise is None else cfg.truth_gauge_noise
    truth_wse = {g.name: np.array([bed[g.cell] + at[t].reshape(-1)[g.cell] for t in gauge_times])
                 for g in cfg.gauges}
    gauges = []
    noise = rng.standard_normal((len(gauge_times), len(cfg.gauges)))
    for k, t in enumerate(gauge_times):
        for j, g in enumerate(cfg.gauges):
            gauges.append(GaugeObs(g.cell, t, float(truth_wse[g.name][k] + gauge_noise * noise[k, j]),
                                   cfg.gauge_std))

    wsr_noise = cfg.wsr_std if cfg.truth_wsr_noise is None else cfg.truth_wsr_noise
    wsr_values = np.array([[np.count_nonzero(at[t].reshape(-1)[s.index] > cfg.wet_threshold)
                            / len(s.index) for s in cfg.subdomains] for t in cfg.wsr_times])
    wsr_values = wsr_values.reshape(len(cfg.wsr_times), len(cfg.subdomains))
    noisy = wsr_values
    if wsr_noise > 0 and wsr_values.size:
        try:
            phi = anamorphosis.build(wsr_values.ravel())
        except DegenerateDistributionError:
            phi = anamorphosis.identity_fn()
        z = phi.forward(wsr_values) + wsr_noise * rng.standard_normal(wsr_values.shape)
        noisy = np.clip(phi.inverse(z), 0.0, 1.0)
    wsrs = [WsrObs(s.id, t, float(noisy[k, j]), cfg.wsr_std)
            for k, t in enumerate(cfg.wsr_times) for j, s in enumerate(cfg.subdomains)]

    masks = {t: at[t] > cfg.wet_threshold for t in cfg.snapshot_times}
    art = TruthArtifacts(ObservationBatch(tuple(gauges), tuple(wsrs)), gauge_times, truth_wse,
                         masks, wsr_values)
    if write:
        write_truth(cfg, art)
    return art


def truth_paths(cfg: ExperimentConfig) -> list[Path]:
    d = cfg.truth_dir
    return ([d / "observations.csv", d / "truth_wse.csv"]
            + [d / f"mask_{_tag(t)}.pgm" for t in cfg.snapshot_times])


def _tag(t: float) -> str:
    return f"{int(round(t))}s"


def write_truth(cfg: ExperimentConfig, art: TruthArtifacts):
    d = cfg.truth_dir
    d.mkdir(parents=True, exist_ok=True)
    write_batch(d / "observations.csv", art.observations)
    with open(d / "truth_wse.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gauge", "time_s", "wse"])
        for g in cfg.gauges:
            for t, v in zip(art.gauge_times, art.truth_wse[g.name]):
                w.writerow([g.name, repr(float(t)), repr(float(v))])
    for t, mask in art.masks.items():
        write_pgm(d / f"mask_{_tag(t)}.pgm", mask.astype(int), maxval=1)


def read_truth(cfg: ExperimentConfig) -> TruthArtifacts:
    missing = [p for p in truth_paths(cfg) if not p.is_file()]
    if missing:
        raise FileNotFoundError("missing truth files (run `truth` first): "
                                + ", ".join(str(p) for p in missing))
    d = cfg.truth_dir
    batch = read_batch(d / "observations.csv")
    truth_wse = {g.name: [] for g in cfg.gauges}
    times = []
    with open(d / "truth_wse.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            truth_wse[row["gauge"]].append(float(row["wse"]))
            if row["gauge"] == cfg.gauges[0].name:
                times.append(float(row["time_s"]))
    masks = {t: read_pgm(d / f"mask_{_tag(t)}.pgm").astype(bool) for t in cfg.snapshot_times}
    return TruthArtifacts(batch, times, {k: np.array(v) for k, v in truth_wse.items()},
                          masks, np.empty((0, len(cfg.subdomains))))


# ---------------------------------------------------------------------------
# experiments


@dataclass(eq=False)
class RunReport:
    """Scores and diagnostics of one experiment."""

    mode: str
    gauge_names: list
    rmse: dict = field(default_factory=dict)            # vs observed WSE
    rmse_truth: dict = field(default_factory=dict)      # vs noiseless truth WSE
    csi: dict = field(default_factory=dict)             # snapshot time -> percent or None
    counts: dict = field(default_factory=dict)          # snapshot time -> ContingencyCounts
    controls: list = field(default_factory=list)        # per-cycle rows
    residuals: dict = field(default_factory=dict)       # gauge -> (times, obs, sim)
    category_maps: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)           # kind -> relative path
    n_analyses: int = 0

    def write(self, directory) -> Path:
        directory = Path(directory)
        rows = [("metric", "key", "value"), ("mode", "", self.mode),
                ("n_analyses", "", str(self.n_analyses))]
        rows += [("rmse", g, repr(self.rmse[g])) for g in self.gauge_names]
        rows += [("rmse_truth", g, repr(self.rmse_truth[g])) for g in self.gauge_names]
        for t in sorted(self.csi):
            c = self.counts[t]
            rows.append(("csi", _tag(t), format_csi(self.csi[t])))
            rows.append(("contingency", _tag(t),
                         f"{c.hits}/{c.misses}/{c.false_alarms}/{c.correct_negatives}"))
        rows += [("file", kind, rel) for kind, rel in sorted(self.files.items())]
        path = directory / "report.csv"
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        return path

    @classmethod
    def read(cls, directory) -> RunReport:
        path = Path(directory) / "report.csv"
        if not path.is_file():
            raise FileNotFoundError(f"no report at {path}")
        rep = cls(mode="", gauge_names=[])
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                metric, key, value = row["metric"], row["key"], row["value"]
                if metric == "mode":
                    rep.mode = value
                elif metric == "n_analyses":
                    rep.n_analyses = int(value)
                elif metric == "rmse":
                    rep.gauge_names.append(key)
                    rep.rmse[key] = float(value)
                elif metric == "rmse_truth":
                    rep.rmse_truth[key] = float(value)
                elif metric == "csi":
                    rep.csi[float(key.rstrip("s"))] = None if value == "NA" else float(value)
                elif metric == "contingency":
                    rep.counts[float(key.rstrip("s"))] = ContingencyCounts(
                        *(int(v) for v in value.split("/")))
                elif metric == "file":
                    rep.files[key] = value
        return rep


def _central_window(control, depth, window, cfg, record):
    snaps, final = propagate(control[None], depth[None], window[0], window[1], cfg.grid,
                             cfg.base_params, cfg.subdomains, record)
    return [s[0] for s in snaps], final[0]


def run_experiment(cfg: ExperimentConfig, truth: TruthArtifacts | None = None,
                   write: bool = True) -> RunReport:
    """Run ``cfg.mode`` against the truth and score it.

    When ``truth`` is not given it is read from ``<output>/truth``.
    """
    if truth is None:
        truth = read_truth(cfg)
    mode = cfg.mode
    _, init_seed, cycle_seeds = _seeds(cfg)
    layout = cfg.prior.layout
    central = cfg.prior.mean.copy()
    central[layout.corrections] = 0.0
    state = spinup_state(cfg, cfg.prior.mean_control)
    central_depth = state.depth.copy()

    ens = None
    if mode != "FR":
        ens = init_ensemble(cfg.prior, cfg.n_members, init_seed, state)
        ens.controls[:, layout.corrections] = 0.0
        # each member starts from the steady state of its own control
        ens.depth[...] = spinup_depths(cfg, ens.controls)
    obs = truth.observations
    if mode == "IDA":
        obs = obs.without_wsr()
    else:
        # the assimilation uses its own WSR error model, not the one of the truth run
        obs = obs.with_wsr_std(cfg.wsr_std)

    out_dir = cfg.mode_dir(mode)
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(mode, [g.name for g in cfg.gauges])
    gauge_times = cfg.gauge_times
    depth_at = {}
    bed = cfg.grid.bed_elevation.reshape(-1)

    for k, window in enumerate(cfg.windows):
        t0, t1 = window
        record = sorted({t for t in gauge_times + cfg.snapshot_times if t0 < t <= t1})
        row = {"cycle": k, "t_start": t0, "t_end": t1, "analysed": 0}
        if ens is not None:
            batch = obs.window(t0, t1)
            cyc = CycleConfig(window, batch, cfg.wet_threshold, cfg.inflation, cycle_seeds[k],
                              correction_std=cfg.correction_std if cfg.correction_std > 0 else None,
                              bounds=(cfg.prior.lower, cfg.prior.upper),
                              extra_record_times=tuple(record))
            ens, diag, cyc_report = run_cycle(ens, cfg.grid, cfg.base_params, cfg.subdomains, cyc)
            if cyc_report.analysed:
                report.n_analyses += 1
                row["analysed"] = 1
                central = cyc_report.mean_after.copy()
                if k == 0:
                    # the initial state follows from the analysed control as well
                    base = central.copy()
                    base[layout.corrections] = 0.0
                    central_depth = spinup_depths(cfg, base)[0]
                if write:
                    write_cycle_diagnostics(out_dir / f"diagnostics_cycle{k}.csv", cyc_report,
                                            diag, layout)
                    report.files[f"diagnostics_cycle{k}"] = f"diagnostics_cycle{k}.csv"
                    if cyc_report.phi is not None:
                        cyc_report.phi.to_csv(out_dir / f"phi_cycle{k}.csv")
                        report.files[f"phi_cycle{k}"] = f"phi_cycle{k}.csv"
            row.update({f"spread_{n}": v for n, v in zip(layout.names, ens.spread())})
        snaps, central_depth = _central_window(central, central_depth, window, cfg, record)
        for t, d in zip(record, snaps):
            depth_at[t] = d
        row.update({f"mean_{n}": v for n, v in zip(layout.names, central)})
        report.controls.append(row)
        central = central.copy()
        central[layout.corrections] = 0.0

    gauge_obs = {(o.station, o.time): o.wse for o in truth.observations.gauges}
    for g in cfg.gauges:
        sim = np.array([bed[g.cell] + depth_at[t].reshape(-1)[g.cell] for t in gauge_times])
        observed = np.array([gauge_obs[(g.cell, t)] for t in gauge_times])
        report.rmse[g.name] = rmse(sim, observed)
        report.rmse_truth[g.name] = rmse(sim, truth.truth_wse[g.name])
        report.residuals[g.name] = (np.array(gauge_times), observed, sim)
    for t in cfg.snapshot_times:
        counts, cat = contingency(depth_at[t] > cfg.wet_threshold, truth.masks[t],
                                  cfg.floodplain_cells)
        report.counts[t] = counts
        report.csi[t] = csi(counts)
        report.category_maps[t] = np.where(cat < 0, NOT_EVALUATED, cat)

    if write:
        _write_outputs(report, out_dir, layout)
    return report


def _write_outputs(report: RunReport, out_dir: Path, layout: ControlLayout):
    for name, (times, observed, sim) in report.residuals.items():
        fname = f"residuals_{_slug(name)}.csv"
        with open(out_dir / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "observed", "simulated", "obs_minus_sim"])
            for t, o, s in zip(times, observed, sim):
                w.writerow([repr(float(t)), repr(float(o)), repr(float(s)), repr(float(o - s))])
        report.files[f"residuals_{_slug(name)}"] = fname
    for t, cat in report.category_maps.items():
        fname = f"contingency_{_tag(t)}.pgm"
        write_pgm(out_dir / fname, cat, maxval=NOT_EVALUATED)
        report.files[f"contingency_{_tag(t)}"] = fname
    header = (["cycle", "t_start", "t_end", "analysed"]
              + [f"mean_{n}" for n in layout.names] + [f"spread_{n}" for n in layout.names])
    with open(out_dir / "controls.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in report.controls:
            w.writerow([_fmt(row.get(h, "")) for h in header])
    report.files["controls"] = "controls.csv"
    report.write(out_dir)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name)


def run_all(cfg: ExperimentConfig, modes=MODES, truth: TruthArtifacts | None = None,
            write: bool = True) -> dict[str, RunReport]:
    """Generate the truth (unless given) and run every mode against it."""
    if truth is None:
        truth = generate_truth(cfg, write=write)
    return {m: run_experiment(replace(cfg, mode=m), truth, write=write) for m in modes}


def summary_table(reports: dict[str, RunReport], delta: tuple[str, str] | None = None) -> str:
    """Side-by-side RMSE per gauge and CSI per snapshot, one row per experiment."""
    first = next(iter(reports.values()))
    gauges = first.gauge_names
    times = sorted(first.csi)
    head = (["Exp."] + [f"RMSE {g} [m]" for g in gauges]
            + [f"CSI {t / 3600:g}h [%]" for t in times])
    rows = []
    for mode, rep in reports.items():
        rows.append([mode] + [f"{rep.rmse[g]:.3f}" for g in gauges]
                    + [format_csi(rep.csi[t]) for t in times])
    if delta is not None:
        a, b = reports[delta[0]], reports[delta[1]]
        cells = [f"{b.rmse[g] - a.rmse[g]:+.3f}" for g in gauges]
        for t in times:
            if a.csi[t] is None or b.csi[t] is None:
                cells.append("NA")
            else:
                cells.append(f"{b.csi[t] - a.csi[t]:+.2f}")
        rows.append([f"{delta[1]}-{delta[0]}"] + cells)
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    fmt = lambda r: "  ".join(c.rjust(w) for c, w in zip(r, widths))  # noqa: E731
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])
