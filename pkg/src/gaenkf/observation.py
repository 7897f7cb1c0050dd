"""Physical-space observation operator: gauge WSE and subdomain wet surface ratios."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .hydro import Grid, HydroState

DEFAULT_WET_THRESHOLD = 0.05


@dataclass(frozen=True, eq=False)
class Subdomain:
    """A set of floodplain cells (row-major flat indices) over which WSR is computed."""

    id: int
    cells: frozenset

    def __post_init__(self):
        cells = frozenset(int(c) for c in self.cells)
        if not cells:
            raise ContractError(f"subdomain {self.id} has no cells")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "index", np.array(sorted(cells), dtype=np.intp))

    @classmethod
    def rectangle(cls, id, grid: Grid, rows, cols):
        """Cells with ``rows[0] <= r <= rows[1]`` and ``cols[0] <= c <= cols[1]``."""
        r = np.arange(rows[0], rows[1] + 1)
        c = np.arange(cols[0], cols[1] + 1)
        return cls(id, (r[:, None] * grid.n_cols + c[None, :]).ravel())


def check_subdomains(subdomains: Sequence[Subdomain], grid: Grid):
    seen = set()
    for sub in subdomains:
        if sub.index[0] < 0 or sub.index[-1] >= grid.n_cells:
            raise ContractError(f"subdomain {sub.id} has cells outside the grid")
        if seen & sub.cells:
            raise ContractError(f"subdomain {sub.id} overlaps another subdomain")
        seen |= sub.cells
    ids = [s.id for s in subdomains]
    if len(set(ids)) != len(ids):
        raise ContractError("subdomain ids must be unique")


@dataclass(frozen=True)
class GaugeObs:
    station: int
    time: float
    wse: float
    error_std: float

    def __post_init__(self):
        if not self.error_std > 0:
            raise ContractError("gauge error_std must be positive")


@dataclass(frozen=True)
class WsrObs:
    subdomain: int
    time: float
    ratio: float
    error_std_transformed: float

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ContractError(f"WSR {self.ratio} outside [0, 1]")
        if not self.error_std_transformed > 0:
            raise ContractError("WSR error std must be positive")


@dataclass(frozen=True)
class ObservationBatch:
    """Observations of one assimilation window, ordered gauges first, then WSR.

    An empty batch is allowed and stands for a window without assimilation.
    """

    gauges: tuple = ()
    wsrs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gauges", tuple(self.gauges))
        object.__setattr__(self, "wsrs", tuple(self.wsrs))

    def __len__(self):
        return len(self.gauges) + len(self.wsrs)

    @property
    def times(self) -> list[float]:
        return sorted({o.time for o in self.gauges} | {o.time for o in self.wsrs})

    @property
    def values(self) -> np.ndarray:
        return np.array([o.wse for o in self.gauges] + [o.ratio for o in self.wsrs], dtype=float)

    @property
    def is_wsr(self) -> np.ndarray:
        return np.arange(len(self)) >= len(self.gauges)

    @property
    def error_std(self) -> np.ndarray:
        """Gauge stds in metres followed by WSR stds in transformed units."""
        return np.array([o.error_std for o in self.gauges]
                        + [o.error_std_transformed for o in self.wsrs], dtype=float)

    def window(self, t_start: float, t_end: float) -> ObservationBatch:
        """Observations with ``t_start < time <= t_end``."""
        inside = lambda o: t_start < o.time <= t_end  # noqa: E731
        return ObservationBatch(tuple(filter(inside, self.gauges)),
                                tuple(filter(inside, self.wsrs)))

    def without_wsr(self) -> ObservationBatch:
        return ObservationBatch(self.gauges, ())

    def with_wsr_std(self, std: float) -> ObservationBatch:
        return ObservationBatch(self.gauges, tuple(
            WsrObs(o.subdomain, o.time, o.ratio, std) for o in self.wsrs))


def wse_at(state: HydroState, grid: Grid, cell: int) -> float:
    """Water surface elevation [m] at ``cell``: bed plus depth."""
    if not 0 <= cell < grid.n_cells:
        raise ContractError(f"cell {cell} out of range")
    return float(grid.bed_elevation.flat[cell] + state.depth.flat[cell])


def wet_mask(state, threshold: float = DEFAULT_WET_THRESHOLD) -> np.ndarray:
    """Boolean mask of cells whose depth exceeds ``threshold``.

    Accepts a :class:`HydroState` or a bare depth array.
    """
    if threshold < 0:
        raise ContractError("threshold must be non-negative")
    depth = state.depth if isinstance(state, HydroState) else np.asarray(state)
    return depth > threshold


def wsr(state, sub: Subdomain, threshold: float = DEFAULT_WET_THRESHOLD) -> float:
    """Fraction of the subdomain's cells that are wet."""
    mask = wet_mask(state, threshold).reshape(-1)
    return np.count_nonzero(mask[sub.index]) / len(sub.index)


def ensemble_equivalents(snapshots: Sequence[np.ndarray], record_times: Sequence[float],
                         grid: Grid, subdomains: Sequence[Subdomain],
                         batch: ObservationBatch,
                         threshold: float = DEFAULT_WET_THRESHOLD) -> np.ndarray:
    """Model equivalents of ``batch`` for every member of a batched trajectory.

    Parameters
    ----------
    snapshots : sequence of ndarray, shape (N, R, C)
        Member depths at ``record_times``.

    Returns
    -------
    ndarray, shape (N, len(batch))
    """
    index = {float(t): k for k, t in enumerate(record_times)}
    by_id = {s.id: s for s in subdomains}

    def snap(t):
        try:
            return snapshots[index[float(t)]]
        except KeyError:
            raise ContractError(f"no trajectory snapshot at t={t} s") from None

    n = snapshots[0].shape[0] if len(snapshots) else 0
    out = np.empty((n, len(batch)))
    bed = grid.bed_elevation.reshape(-1)
    for j, o in enumerate(batch.gauges):
        if not 0 <= o.station < grid.n_cells:
            raise ContractError(f"gauge cell {o.station} out of range")
        out[:, j] = bed[o.station] + snap(o.time).reshape(n, -1)[:, o.station]
    for j, o in enumerate(batch.wsrs, start=len(batch.gauges)):
        try:
            sub = by_id[o.subdomain]
        except KeyError:
            raise ContractError(f"unknown subdomain {o.subdomain}") from None
        wet = snap(o.time).reshape(n, -1)[:, sub.index] > threshold
        out[:, j] = np.count_nonzero(wet, axis=1) / len(sub.index)
    return out


def model_equivalents(trajectory: Sequence[HydroState], grid: Grid,
                      subdomains: Sequence[Subdomain], batch: ObservationBatch,
                      threshold: float = DEFAULT_WET_THRESHOLD) -> np.ndarray:
    """Apply the observation operator to a single trajectory.

    Each observation time must match a snapshot time exactly.  Values come out
    in batch order, gauges (metres) then WSR (fractions).
    """
    times = [s.time for s in trajectory]
    snaps = [s.depth[None] for s in trajectory]
    if not snaps:
        if len(batch):
            raise ContractError(f"no trajectory snapshot at t={batch.times[0]} s")
        return np.empty(0)
    return ensemble_equivalents(snaps, times, grid, subdomains, batch, threshold)[0]


# ---------------------------------------------------------------------------
# files

BATCH_HEADER = ["type", "id", "time_s", "value", "error_std"]


def write_batch(path, batch: ObservationBatch):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BATCH_HEADER)
        for o in batch.gauges:
            w.writerow(["gauge", o.station, repr(float(o.time)), repr(float(o.wse)),
                        repr(float(o.error_std))])
        for o in batch.wsrs:
            w.writerow(["wsr", o.subdomain, repr(float(o.time)), repr(float(o.ratio)),
                        repr(float(o.error_std_transformed))])


def read_batch(path) -> ObservationBatch:
    gauges, wsrs = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != BATCH_HEADER:
            raise ContractError(f"{path}: expected header {','.join(BATCH_HEADER)}")
        for row in reader:
            args = int(row["id"]), float(row["time_s"]), float(row["value"]), float(row["error_std"])
            if row["type"] == "gauge":
                gauges.append(GaugeObs(*args))
            elif row["type"] == "wsr":
                wsrs.append(WsrObs(*args))
            else:
                raise ContractError(f"{path}: unknown observation type {row['type']!r}")
    return ObservationBatch(tuple(gauges), tuple(wsrs))


def write_pgm(path, image, maxval: int | None = None):
    """Write an integer image as plain-text PGM (P2)."""
    image = np.asarray(image).astype(int)
    if image.min(initial=0) < 0:
        raise ContractError("PGM values must be non-negative")
    maxval = maxval if maxval is not None else max(int(image.max(initial=0)), 1)
    with open(path, "w") as fh:
        fh.write(f"P2\n{image.shape[1]} {image.shape[0]}\n{maxval}\n")
        for row in image:
            fh.write(" ".join(str(v) for v in row) + "\n")


def read_pgm(path) -> np.ndarray:
    tokens = []
    with open(path) as fh:
        for line in fh:
            tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ContractError(f"{path}: not a plain PGM file")
    width, height = int(tokens[1]), int(tokens[2])
    return np.array(tokens[4:4 + width * height], dtype=int).reshape(height, width)
