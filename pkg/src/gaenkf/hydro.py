"""Desk-scale 2D flood-spreading model.

Water is exchanged between the four neighbours of every cell of a rectangular
DEM by a diffusive-wave law: the unit-width discharge across a face is

    q = K * h_f**(5/3) * S / sqrt(max(S, S_min))

where ``K`` is the Strickler coefficient of the donor cell, ``h_f`` the flow
depth above the higher of the two beds and ``S`` the free-surface slope.  Above
``S_min`` this is the Strickler law ``q = K h^(5/3) sqrt(S)``; below it the law
is linearised so that the explicit scheme keeps a finite stability bound on
flat water.  Domain edges are closed walls except for the inflow cells (which
receive the hydrograph) and the outlet cells (free outfall at a fixed slope).

The kernels work on ``(N, R, C)`` batches so that a whole ensemble is advanced
in one call; every member keeps its own clock and time step, which makes a
member's trajectory independent of the rest of the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numba import njit

from .errors import ContractError, NumericalBlowupError

if TYPE_CHECKING:
    from .enkf import ControlVector
    from .observation import Subdomain


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings of the explicit scheme.

    Attributes
    ----------
    max_dt : float
        Upper bound on the time step [s], returned for a dry domain.
    min_slope : float
        Slope below which the Strickler law is linearised.
    safety : float
        Fraction of the explicit diffusion bound actually used.
    dry_depth : float
        Cells at or below this depth [m] cannot donate water.
    """

    max_dt: float = 60.0
    min_slope: float = 1e-3
    safety: float = 0.9
    dry_depth: float = 1e-6

    def __post_init__(self):
        if not (self.max_dt > 0 and self.min_slope > 0 and 0 < self.safety <= 1):
            raise ContractError(f"invalid solver settings {self}")


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Rectangular model geometry.

    Cells are addressed by their row-major flat index ``row * n_cols + col``.
    """

    cell_size: float
    bed_elevation: np.ndarray
    friction_zone_id: np.ndarray
    inflow_cells: tuple[int, ...]
    outlet_cells: tuple[int, ...] = ()
    outlet_slope: float = 1e-3
    n_zones: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        bed = _readonly(self.bed_elevation, float)
        zones = _readonly(self.friction_zone_id, np.intp)
        if bed.ndim != 2 or bed.size < 1:
            raise ContractError("bed_elevation must be a non-empty 2D array")
        if zones.shape != bed.shape:
            raise ContractError("friction_zone_id must match the bed shape")
        if not np.all(np.isfinite(bed)):
            raise ContractError("bed_elevation must be finite")
        if not self.cell_size > 0:
            raise ContractError("cell_size must be positive")
        if zones.min() < 0:
            raise ContractError("friction zone ids must be non-negative")
        n_zones = self.n_zones or int(zones.max()) + 1
        if zones.max() >= n_zones:
            raise ContractError("friction zone id exceeds the number of zones")
        inflow = tuple(int(c) for c in self.inflow_cells)
        outlet = tuple(int(c) for c in self.outlet_cells)
        if not inflow:
            raise ContractError("at least one inflow cell is required")
        for c in inflow + outlet:
            if not 0 <= c < bed.size:
                raise ContractError(f"cell index {c} out of range")
        if len(set(inflow)) != len(inflow) or len(set(outlet)) != len(outlet):
            raise ContractError("inflow/outlet cells must be unique")
        if outlet and not self.outlet_slope > 0:
            raise ContractError("outlet_slope must be positive")
        object.__setattr__(self, "bed_elevation", bed)
        object.__setattr__(self, "friction_zone_id", zones)
        object.__setattr__(self, "inflow_cells", inflow)
        object.__setattr__(self, "outlet_cells", outlet)
        object.__setattr__(self, "n_zones", n_zones)
        object.__setattr__(self, "_inlet", np.array(inflow, dtype=np.int64))
        object.__setattr__(self, "_outlet", np.array(outlet, dtype=np.int64))

    @property
    def n_rows(self) -> int:
        return self.bed_elevation.shape[0]

    @property
    def n_cols(self) -> int:
        return self.bed_elevation.shape[1]

    @property
    def n_cells(self) -> int:
        return self.bed_elevation.size

    @property
    def cell_area(self) -> float:
        return self.cell_size * self.cell_size

    def cell_rc(self, cell: int) -> tuple[int, int]:
        return divmod(int(cell), self.n_cols)


@dataclass(frozen=True, eq=False)
class HydroState:
    """Water depth per cell [m] at a given time [s]."""

    time: float
    depth: np.ndarray

    def __post_init__(self):
        depth = _readonly(self.depth, float)
        if depth.ndim != 2:
            raise ContractError("depth must be a 2D array")
        if not np.all(np.isfinite(depth)):
            raise ContractError("depth must be finite")
        if depth.min(initial=0.0) < 0:
            raise ContractError("depth must be non-negative")
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "depth", depth)

    def volume(self, grid: Grid) -> float:
        return float(self.depth.sum() * grid.cell_area)


@dataclass(frozen=True, eq=False)
class PhysicalParams:
    """Friction per zone, inflow multiplier and the upstream hydrograph.

    ``hydrograph`` is an ``(n, 2)`` array of ``(time_s, discharge_m3s)`` rows;
    discharge is interpolated linearly and held constant outside its range.
    """

    friction: np.ndarray
    inflow_multiplier: float
    hydrograph: np.ndarray

    def __post_init__(self):
        friction = _readonly(np.atleast_1d(self.friction), float)
        hydro = _readonly(np.atleast_2d(self.hydrograph), float)
        if friction.ndim != 1 or not np.all(friction > 0):
            raise ContractError("friction must be positive per zone")
        if not (self.inflow_multiplier > 0 and np.isfinite(self.inflow_multiplier)):
            raise ContractError("inflow_multiplier must be positive")
        if hydro.ndim != 2 or hydro.shape[1] != 2 or len(hydro) < 1:
            raise ContractError("hydrograph must be an (n, 2) array")
        if np.any(np.diff(hydro[:, 0]) <= 0):
            raise ContractError("hydrograph times must be strictly increasing")
        if np.any(hydro[:, 1] < 0) or not np.all(np.isfinite(hydro)):
            raise ContractError("hydrograph discharges must be finite and >= 0")
        object.__setattr__(self, "friction", friction)
        object.__setattr__(self, "inflow_multiplier", float(self.inflow_multiplier))
        object.__setattr__(self, "hydrograph", hydro)

    def discharge(self, t):
        """Upstream discharge [m3/s] at time(s) ``t``, before the multiplier."""
        return np.interp(t, self.hydrograph[:, 0], self.hydrograph[:, 1])


# ---------------------------------------------------------------------------
# batched kernels


def cell_friction(grid: Grid, friction) -> np.ndarray:
    """Spread per-zone friction ``(..., n_zones)`` onto the grid ``(..., R, C)``."""
    return np.asarray(friction, dtype=float)[..., grid.friction_zone_id]


@njit(cache=True)
def _stable_dt_kernel(depth, kcell, outlet, outlet_slope, dx, min_slope, safety, max_dt):
    n, rows, cols = depth.shape
    out = np.empty(n)
    for m in range(n):
        diff = 0.0
        for i in range(rows):
            for j in range(cols):
                h = depth[m, i, j]
                d = kcell[m, i, j] * h * np.cbrt(h * h)
                if d > diff:
                    diff = d
        dt = max_dt
        if diff > 0.0:
            dt = min(dt, safety * dx * dx * np.sqrt(min_slope) / (4.0 * diff))
        for c in outlet:
            h = depth[m, c // cols, c % cols]
            rate = kcell[m, c // cols, c % cols] * np.cbrt(h * h) * np.sqrt(outlet_slope) / dx
            if rate > 0.0:
                dt = min(dt, safety / rate)
        out[m] = dt
    return out


def stable_dt_batch(depth, kcell, grid: Grid) -> np.ndarray:
    """Stable time step per member of a ``(N, R, C)`` batch.

    The effective diffusivity of the face law never exceeds
    ``K h^(5/3) / sqrt(S_min)``, so the usual 2D explicit bound
    ``dx^2 / (4 D_max)`` applies.  Outlet cells add the bound
    ``dx / (K h^(2/3) sqrt(S_out))`` so a single step cannot empty them.
    """
    sol = grid.solver
    return _stable_dt_kernel(depth, kcell, grid._outlet, grid.outlet_slope,
                             grid.cell_size, sol.min_slope, sol.safety, sol.max_dt)


@njit(cache=True)
def _face_flux(eta_a, eta_b, sill, h_a, h_b, k_a, k_b, dx, min_slope, dry):
    # signed discharge [m3/s], positive from a to b
    drop = eta_a - eta_b
    if drop > 0.0:
        if h_a <= dry:
            return 0.0
        k = k_a
        top = eta_a
    elif drop < 0.0:
        if h_b <= dry:
            return 0.0
        k = k_b
        top = eta_b
    else:
        return 0.0
    h = top - sill
    if h <= 0.0:
        return 0.0
    slope = abs(drop) / dx
    q = k * h * np.cbrt(h * h) * slope / np.sqrt(max(slope, min_slope)) * dx
    return q if drop > 0.0 else -q


@njit(cache=True)
def _advance_kernel(depth, bed, kcell, dt, inflow, inlet, outlet, outlet_slope,
                    dx, min_slope, dry):
    n, rows, cols = depth.shape
    area = dx * dx
    new = np.empty_like(depth)
    fx = np.empty((rows, cols - 1))
    fy = np.empty((rows - 1, cols))
    q_out = np.zeros(len(outlet))
    out = np.empty((rows, cols))
    alpha = np.empty((rows, cols))
    sq_out = np.sqrt(outlet_slope)
    for m in range(n):
        h = depth[m]
        k = kcell[m]
        if dt[m] == 0.0:
            new[m] = h
            continue
        out[:] = 0.0
        for i in range(rows):
            for j in range(cols - 1):
                f = _face_flux(bed[i, j] + h[i, j], bed[i, j + 1] + h[i, j + 1],
                               max(bed[i, j], bed[i, j + 1]), h[i, j], h[i, j + 1],
                               k[i, j], k[i, j + 1], dx, min_slope, dry)
                fx[i, j] = f
                if f > 0.0:
                    out[i, j] += f
                else:
                    out[i, j + 1] -= f
        for i in range(rows - 1):
            for j in range(cols):
                f = _face_flux(bed[i, j] + h[i, j], bed[i + 1, j] + h[i + 1, j],
                               max(bed[i, j], bed[i + 1, j]), h[i, j], h[i + 1, j],
                               k[i, j], k[i + 1, j], dx, min_slope, dry)
                fy[i, j] = f
                if f > 0.0:
                    out[i, j] += f
                else:
                    out[i + 1, j] -= f
        for o in range(len(outlet)):
            i, j = outlet[o] // cols, outlet[o] % cols
            hh = h[i, j]
            q_out[o] = k[i, j] * hh * np.cbrt(hh * hh) * sq_out * dx if hh > dry else 0.0
            out[i, j] += q_out[o]
        # limit each donor so that it cannot export more than it holds
        for i in range(rows):
            for j in range(cols):
                need = out[i, j] * dt[m]
                avail = h[i, j] * area
                alpha[i, j] = avail / need if need > avail else 1.0
        net = new[m]
        net[:] = 0.0
        for i in range(rows):
            for j in range(cols - 1):
                f = fx[i, j]
                f = f * alpha[i, j] if f > 0.0 else f * alpha[i, j + 1]
                net[i, j] -= f
                net[i, j + 1] += f
        for i in range(rows - 1):
            for j in range(cols):
                f = fy[i, j]
                f = f * alpha[i, j] if f > 0.0 else f * alpha[i + 1, j]
                net[i, j] -= f
                net[i + 1, j] += f
        for o in range(len(outlet)):
            i, j = outlet[o] // cols, outlet[o] % cols
            net[i, j] -= q_out[o] * alpha[i, j]
        share = inflow[m] / len(inlet)
        for c in inlet:
            net[c // cols, c % cols] += share
        for i in range(rows):
            for j in range(cols):
                net[i, j] = max(h[i, j] + net[i, j] * dt[m] / area, 0.0)
    return new


def advance(depth, time, dt, kcell, multiplier, grid: Grid, hydrograph) -> np.ndarray:
    """Advance a batch of depth fields by one explicit step.

    Parameters
    ----------
    depth, kcell : ndarray, shape (N, R, C)
        Depth [m] and Strickler coefficient per cell.
    time, dt, multiplier : ndarray, shape (N,)
        Per-member clock, step length and inflow multiplier.  Members with
        ``dt == 0`` are returned unchanged.
    hydrograph : ndarray, shape (n, 2)

    Returns
    -------
    ndarray
        New depth.  Volume is conserved up to the boundary inflow (hydrograph
        at mid-step times the multiplier) and the outlet outflow.
    """
    sol = grid.solver
    dt = np.asarray(dt, dtype=float)
    inflow = np.interp(np.asarray(time) + 0.5 * dt, hydrograph[:, 0], hydrograph[:, 1])
    inflow = np.asarray(inflow * multiplier, dtype=float)
    return _advance_kernel(depth, grid.bed_elevation, kcell, dt, inflow, grid._inlet,
                           grid._outlet, grid.outlet_slope, grid.cell_size,
                           sol.min_slope, sol.dry_depth)


def _check_finite(depth, times, grid: Grid, batched=True):
    if np.all(np.isfinite(depth)):
        return
    m, r, c = (int(i) for i in np.argwhere(~np.isfinite(depth))[0])
    t = float(np.asarray(times)[m])
    cell = r * grid.n_cols + c
    where = f" in member {m}" if batched else ""
    raise NumericalBlowupError(
        f"non-finite depth at cell {cell} (row {r}, col {c}) at t={t:.3f} s{where}",
        cell=cell, time=t, member=m if batched else None,
    )


def integrate(depth, t0: float, kcell, multiplier, grid: Grid, hydrograph,
              record_times: Sequence[float], t_end: float,
              batched: bool = True) -> tuple[list, np.ndarray]:
    """Integrate a batch from ``t0`` to ``t_end``, recording depths.

    Each member sub-steps with its own stable time step and lands exactly on
    every record time.  Returns ``(snapshots, final_depth)`` where
    ``snapshots[k]`` is an ``(N, R, C)`` array.
    """
    depth = np.array(depth, dtype=float)
    n = depth.shape[0]
    multiplier = np.ascontiguousarray(np.broadcast_to(np.asarray(multiplier, dtype=float), n))
    kcell = np.ascontiguousarray(np.broadcast_to(kcell, depth.shape), dtype=float)
    times = np.full(n, float(t0))
    targets = [float(t) for t in record_times]
    n_record = len(targets)
    if not targets or targets[-1] < t_end:
        targets.append(float(t_end))

    snapshots = []
    for k, target in enumerate(targets):
        while True:
            active = times < target
            if not np.any(active):
                break
            limit = stable_dt_batch(depth, kcell, grid)
            remaining = target - times
            lands = active & (limit >= remaining)
            dt = np.where(active, np.minimum(limit, remaining), 0.0)
            depth = advance(depth, times, dt, kcell, multiplier, grid, hydrograph)
            _check_finite(depth, times + dt, grid, batched)
            times = np.where(lands, target, times + dt)
        if k < n_record:
            snapshots.append(depth)
    return snapshots, depth


# ---------------------------------------------------------------------------
# single-state API


def stable_dt(state: HydroState, grid: Grid, params: PhysicalParams) -> float:
    """Largest time step [s] for which :func:`step` stays non-oscillatory."""
    kcell = cell_friction(grid, params.friction)
    return float(stable_dt_batch(state.depth[None], kcell[None], grid)[0])


def step(state: HydroState, grid: Grid, params: PhysicalParams, dt: float) -> HydroState:
    """Advance ``state`` by ``dt`` seconds."""
    _check_params(grid, params)
    if not dt > 0:
        raise ContractError("dt must be positive")
    limit = stable_dt(state, grid, params)
    if dt > limit * (1 + 1e-12):
        raise ContractError(f"dt={dt} exceeds the stability bound {limit}")
    kcell = cell_friction(grid, params.friction)
    depth = advance(state.depth[None], [state.time], [dt], kcell[None],
                    params.inflow_multiplier, grid, params.hydrograph)
    _check_finite(depth, [state.time + dt], grid, batched=False)
    return HydroState(state.time + dt, depth[0])


def run_window(state: HydroState, grid: Grid, params: PhysicalParams, t_end: float,
               record_times: Sequence[float]) -> list[HydroState]:
    """Propagate ``state`` to ``t_end`` and return the states at ``record_times``."""
    _check_params(grid, params)
    record_times = _check_record_times(record_times, state.time, t_end)
    kcell = cell_friction(grid, params.friction)
    snaps, _ = integrate(state.depth[None], state.time, kcell[None],
                         [params.inflow_multiplier], grid, params.hydrograph,
                         record_times, t_end, batched=False)
    return [HydroState(t, s[0]) for t, s in zip(record_times, snaps)]


def _check_record_times(record_times, t_start, t_end):
    times = [float(t) for t in record_times]
    if not t_end > t_start:
        raise ContractError("t_end must be after the state time")
    if any(b < a for a, b in zip(times, times[1:])):
        raise ContractError("record_times must be sorted")
    if times and (times[0] <= t_start or times[-1] > t_end):
        raise ContractError("record_times must lie in (state.time, t_end]")
    return times


def _check_params(grid: Grid, params: PhysicalParams):
    if params.friction.shape != (grid.n_zones,):
        raise ContractError(
            f"expected {grid.n_zones} friction values, got {params.friction.shape[0]}")


def apply_control(control: ControlVector, base: PhysicalParams, state: HydroState,
                  subdomains: Sequence[Subdomain]) -> tuple[PhysicalParams, HydroState]:
    """Impose a control vector on the base parameters and the state.

    Friction and the inflow multiplier are replaced by the control values; each
    subdomain's depth correction is added to its cells and clamped at zero,
    so negative corrections can remove less water than requested.
    """
    friction = np.asarray(control.friction, dtype=float)
    corrections = np.asarray(control.depth_corrections, dtype=float)
    if friction.shape != base.friction.shape:
        raise ContractError(
            f"control has {friction.size} friction values, base has {base.friction.size}")
    if corrections.shape != (len(subdomains),):
        raise ContractError(
            f"control has {corrections.size} depth corrections for {len(subdomains)} subdomains")
    params = PhysicalParams(friction, control.inflow_multiplier, base.hydrograph)
    depth = state.depth.copy()
    flat = depth.reshape(-1)
    for sub, delta in zip(subdomains, corrections):
        if delta != 0.0:
            cells = np.asarray(sorted(sub.cells))
            flat[cells] = np.maximum(flat[cells] + delta, 0.0)
    return params, HydroState(state.time, depth)


# ---------------------------------------------------------------------------
# plain-text inputs


def read_ascii_grid(path) -> tuple[np.ndarray, float]:
    """Read a DEM written by :func:`write_ascii_grid`.

    The header holds ``n_rows``, ``n_cols`` and ``cell_size`` as ``key value``
    lines; elevations follow in row-major order, one row per line.
    """
    header = {}
    values = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(header) < 3 and parts[0].isidentifier():
                header[parts[0].lower()] = parts[1]
            else:
                values.extend(float(v) for v in parts)
    try:
        n_rows, n_cols = int(header["n_rows"]), int(header["n_cols"])
        cell_size = float(header["cell_size"])
    except KeyError as exc:
        raise ContractError(f"{path}: missing header field {exc}") from None
    if len(values) != n_rows * n_cols:
        raise ContractError(f"{path}: expected {n_rows * n_cols} values, got {len(values)}")
    return np.array(values).reshape(n_rows, n_cols), cell_size


def write_ascii_grid(path, values, cell_size: float, fmt: str = "%.4f"):
    values = np.asarray(values)
    with open(path, "w") as fh:
        fh.write(f"n_rows {values.shape[0]}\nn_cols {values.shape[1]}\n")
        fh.write(f"cell_size {cell_size:g}\n")
        np.savetxt(fh, values, fmt=fmt)


def read_hydrograph(path) -> np.ndarray:
    """Read a ``time_s,discharge_m3s`` CSV into an ``(n, 2)`` array."""
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    return data


def write_hydrograph(path, hydrograph):
    np.savetxt(path, np.asarray(hydrograph), delimiter=",", fmt="%.6g",
               header="time_s,discharge_m3s", comments="")
