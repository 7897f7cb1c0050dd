"""Verification scores: gauge RMSE, contingency maps and the Critical Success Index."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

# category codes of the contingency map
CORRECT_NEGATIVE, HIT, MISS, FALSE_ALARM = 0, 1, 2, 3


@dataclass(frozen=True)
class ContingencyCounts:
    hits: int
    misses: int
    false_alarms: int
    correct_negatives: int

    def __post_init__(self):
        if min(self.hits, self.misses, self.false_alarms, self.correct_negatives) < 0:
            raise ContractError("contingency counts must be non-negative")

    @property
    def total(self) -> int:
        return self.hits + self.misses + self.false_alarms + self.correct_negatives


def rmse(simulated, observed) -> float:
    """Root-mean-square difference of two aligned series."""
    sim = np.asarray(simulated, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if sim.shape != obs.shape or sim.size < 1:
        raise ContractError(f"series must have equal non-zero length, got {sim.shape} and {obs.shape}")
    return float(np.sqrt(np.mean((sim - obs) ** 2)))


def contingency(sim_mask, obs_mask, eval_cells=None) -> tuple[ContingencyCounts, np.ndarray]:
    """Classify cells as hit / miss / false alarm / correct negative.

    Parameters
    ----------
    sim_mask, obs_mask : array_like of bool
        Simulated and observed wet masks of identical shape.
    eval_cells : iterable of int, optional
        Flat indices of the cells to evaluate; all cells by default.

    Returns
    -------
    counts : ContingencyCounts
    category_map : ndarray of int
        Category code per cell, ``-1`` outside the evaluated region.
    """
    sim = np.asarray(sim_mask, dtype=bool)
    obs = np.asarray(obs_mask, dtype=bool)
    if sim.shape != obs.shape:
        raise ContractError(f"mask shapes differ: {sim.shape} vs {obs.shape}")
    if eval_cells is None:
        region = np.ones(sim.shape, dtype=bool)
    else:
        idx = np.fromiter((int(c) for c in eval_cells), dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= sim.size):
            raise ContractError("evaluation cells out of range")
        region = np.zeros(sim.size, dtype=bool)
        region[idx] = True
        region = region.reshape(sim.shape)
    cat = np.select([sim & obs, ~sim & obs, sim & ~obs], [HIT, MISS, FALSE_ALARM],
                    CORRECT_NEGATIVE)
    cat = np.where(region, cat, -1)
    counts = ContingencyCounts(*(int(np.count_nonzero(cat == k))
                                 for k in (HIT, MISS, FALSE_ALARM, CORRECT_NEGATIVE)))
    return counts, cat


def csi(c: ContingencyCounts) -> float | None:
    """Critical Success Index in percent, or ``None`` when nothing is wet."""
    denom = c.hits + c.misses + c.false_alarms
    if denom == 0:
        return None
    return 100.0 * c.hits / denom


def format_csi(value: float | None) -> str:
    return "NA" if value is None else f"{value:.2f}"
