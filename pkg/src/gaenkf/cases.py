"""Generator of the bundled synthetic valley case."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .hydro import write_ascii_grid, write_hydrograph

HOUR = 3600.0

CHANNEL_UP, CHANNEL_DOWN, FLOODPLAIN_UP, FLOODPLAIN_DOWN = range(4)


def valley_dem(n_rows=40, n_cols=30, cell_size=1000.0, channel_col=15, bed_slope=3e-4,
               bank_height=2.0, lateral_slope=2e-4, relief=0.35, wall_cols=3):
    """Bed elevations and friction zones of a straight valley.

    A one-cell-wide channel runs down ``channel_col`` from row 0 (upstream) to
    the last row; the floodplain rises gently away from the banks and carries
    a smooth undulation of amplitude ``relief`` so that flooding is patchy.
    """
    r = np.arange(n_rows)[:, None]
    c = np.arange(n_cols)[None, :]
    thalweg = 10.0 + bed_slope * cell_size * (n_rows - 1 - r)
    dist = np.abs(c - channel_col)
    undulation = relief * (np.sin(2 * np.pi * r / 11.0 + 0.7) * np.cos(2 * np.pi * c / 9.0)
                           + 0.5 * np.sin(2 * np.pi * (r + 2 * c) / 17.0))
    plain = thalweg + bank_height + lateral_slope * cell_size * (dist - 1) + undulation
    bed = np.where(dist == 0, thalweg, plain)
    bed = np.where(dist > n_cols // 2 - wall_cols, bed + 8.0, bed)
    upstream = r < n_rows // 2
    zones = np.where(dist == 0, np.where(upstream, CHANNEL_UP, CHANNEL_DOWN),
                     np.where(upstream, FLOODPLAIN_UP, FLOODPLAIN_DOWN))
    return bed, zones.astype(int)


def dual_peak_hydrograph(base=400.0, peak1=3200.0, peak2=2600.0, t_peak1=10 * HOUR,
                         t_peak2=28 * HOUR, t_end=48 * HOUR, step=HOUR):
    """Two Gaussian-shaped flood peaks on a constant base flow."""
    t = np.arange(0.0, t_end + step, step)
    q = (base + (peak1 - base) * np.exp(-0.5 * ((t - t_peak1) / (4 * HOUR)) ** 2)
         + (peak2 - base) * np.exp(-0.5 * ((t - t_peak2) / (5 * HOUR)) ** 2))
    return np.column_stack([t, q])


def write_valley_case(directory, **kwargs):
    """Write ``dem.asc``, ``zones.asc`` and ``hydrograph.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cell_size = kwargs.pop("cell_size", 1000.0)
    bed, zones = valley_dem(cell_size=cell_size, **kwargs)
    write_ascii_grid(directory / "dem.asc", bed, cell_size)
    write_ascii_grid(directory / "zones.asc", zones, cell_size, fmt="%d")
    write_hydrograph(directory / "hydrograph.csv", dual_peak_hydrograph())
