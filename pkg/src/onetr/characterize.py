"""Linearity characterisation of 1T-1R cells.

A cell is usable as an analog weight when its effective conductance barely
depends on the read voltage.  The tolerance metric ``tm`` captures that
dependence as the relative spread of ``g_eff`` over a read-voltage grid; the
cutoff scan turns it into the largest memristor conductance that still behaves
linearly at a given gate voltage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import mapping
from .device import (ANALYTICAL, DeviceMode, MemristorParams,
                     TransistorParams, solve_synapse_grid)
from .errors import CutoffLookupError, DomainError

DEFAULT_V_SUPPLY = 0.5
DEFAULT_TM_THRESHOLD = 0.025
DEFAULT_VIN_POINTS = 64
DEFAULT_GM_POINTS = 256

# Default weight range for Monte Carlo draws: standard normal clipped to
# three standard deviations.
_MC_WEIGHT_RANGE = 3.0


def default_vin_grid(v_supply: float = DEFAULT_V_SUPPLY,
                     n_points: int = DEFAULT_VIN_POINTS) -> np.ndarray:
    """Uniform read-voltage grid over (0, v_supply]."""
    if v_supply <= 0 or not np.isfinite(v_supply):
        raise DomainError("v_supply must be positive and finite")
    if n_points < 2:
        raise DomainError("the read-voltage grid needs at least two points")
    return v_supply * np.arange(1, n_points + 1) / n_points


@dataclass(frozen=True)
class GeffCurve:
    """Effective conductance versus read voltage for one (g_m, v_g)."""

    g_m: float
    v_g: float
    v_in: np.ndarray
    g_eff: np.ndarray


@dataclass(frozen=True)
class ToleranceResult:
    tm: float
    g_eff_max: float
    g_eff_min: float


@dataclass(frozen=True)
class CutoffTable:
    """Per-gate-voltage conductance cutoffs.

    ``entries`` maps each gate voltage to the largest memristor conductance
    whose full-range tolerance metric stays within the threshold, or ``None``
    when no conductance qualifies.
    """

    entries: tuple
    tm_threshold: Optional[float] = None
    v_supply: Optional[float] = None

    def lookup(self, v_g: float, tol: float = 1e-9):
        for vg_i, cutoff in self.entries:
            if abs(vg_i - v_g) <= tol:
                return cutoff
        raise CutoffLookupError(f"v_g = {v_g} is not in the cutoff table")

    def gate_voltages(self) -> list:
        return [vg for vg, _ in self.entries]


@dataclass(frozen=True)
class PowerReport:
    """Monte Carlo per-synapse read power estimate."""

    v_g: float
    mean_power: float  # W per synapse
    n_samples: int
    seed: int
    rows: int
    cols: int
    sample_powers: np.ndarray = None  # per-sample means, index == sample id


def sweep_geff(g_m: float, v_g: float, t: TransistorParams,
               v_supply: float = DEFAULT_V_SUPPLY,
               mode: DeviceMode = ANALYTICAL,
               v_in_grid=None) -> GeffCurve:
    """Sweep g_eff over a read-voltage grid (default 64 uniform points)."""
    if v_in_grid is None:
        grid = default_vin_grid(v_supply)
    else:
        grid = np.asarray(v_in_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise DomainError("v_in_grid must be 1-D with at least two points")
        if not np.all(np.isfinite(grid)):
            raise DomainError("v_in_grid must be finite")
        if np.any(grid <= 0.0) or np.any(grid > v_supply + 1e-12):
            raise DomainError("v_in_grid must lie within (0, v_supply]")
        if np.any(np.diff(grid) <= 0.0):
            raise DomainError("v_in_grid must be strictly increasing")
    _, _, g_eff = solve_synapse_grid(g_m, grid, v_g, t, mode)
    return GeffCurve(float(g_m), float(v_g), grid, g_eff)


def tolerance_metric(curve: GeffCurve) -> ToleranceResult:
    """Relative spread (max - min) / max of g_eff over the curve."""
    if curve.g_eff.size == 0:
        raise DomainError("cannot compute a tolerance metric on an empty curve")
    g_max = float(np.max(curve.g_eff))
    g_min = float(np.min(curve.g_eff))
    if g_max <= 0.0:
        raise DomainError("curve carries no conductance")
    return ToleranceResult((g_max - g_min) / g_max, g_max, g_min)


def _check_threshold(tm_threshold: float) -> None:
    if not (0.0 < tm_threshold < 1.0):
        raise DomainError("tm_threshold must lie in (0, 1)")


def linear_vin_range(g_m: float, v_g: float, t: TransistorParams,
                     tm_threshold: float = DEFAULT_TM_THRESHOLD,
                     v_supply: float = DEFAULT_V_SUPPLY,
                     mode: DeviceMode = ANALYTICAL,
                     n_points: int = DEFAULT_VIN_POINTS):
    """Widest contiguous read-voltage window with windowed tm <= threshold.

    Returns ``(v_lo, v_hi)`` grid values, or ``None`` when no window of at
    least two points qualifies.  Ties go to the lowest window.  The windowed
    metric is non-decreasing as a window grows, so each start index can stop
    extending at the first violation.
    """
    _check_threshold(tm_threshold)
    grid = default_vin_grid(v_supply, n_points)
    curve = sweep_geff(g_m, v_g, t, v_supply, mode, grid)
    g = curve.g_eff
    n = g.size
    best = None  # (start, stop) inclusive
    for i in range(n - 1):
        g_max = g_min = g[i]
        for j in range(i + 1, n):
            g_max = max(g_max, g[j])
            g_min = min(g_min, g[j])
            if g_max <= 0.0 or (g_max - g_min) / g_max > tm_threshold:
                break
            if best is None or j - i > best[1] - best[0]:
                best = (i, j)
    if best is None:
        return None
    return float(grid[best[0]]), float(grid[best[1]])


def _tm_rows(g_eff_rows: np.ndarray) -> np.ndarray:
    """Tolerance metric per row; rows without conductance fail as inf."""
    g_max = g_eff_rows.max(axis=1)
    g_min = g_eff_rows.min(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tm = (g_max - g_min) / g_max
    return np.where(g_max > 0.0, tm, np.inf)


def find_gm_cutoff(v_g: float, t: TransistorParams, mem: MemristorParams,
                   tm_threshold: float = DEFAULT_TM_THRESHOLD,
                   v_supply: float = DEFAULT_V_SUPPLY,
                   mode: DeviceMode = ANALYTICAL,
                   gm_points: int = DEFAULT_GM_POINTS,
                   vin_points: int = DEFAULT_VIN_POINTS):
    """Largest grid conductance in [g_off, g_on] with full-range tm <= threshold.

    The search grid is ``gm_points`` uniform values including both range ends,
    so a fully linear device returns exactly ``g_on``.  Returns ``None`` when
    no grid point passes.
    """
    _check_threshold(tm_threshold)
    gms = np.linspace(mem.g_off, mem.g_on, gm_points)
    grid = default_vin_grid(v_supply, vin_points)
    _, _, g_eff = solve_synapse_grid(gms[:, None], grid[None, :], v_g, t, mode)
    passing = _tm_rows(g_eff) <= tm_threshold
    if not passing.any():
        return None
    return float(gms[np.flatnonzero(passing)[-1]])


def cutoff_table(v_g_values, t: TransistorParams, mem: MemristorParams,
                 tm_threshold: float = DEFAULT_TM_THRESHOLD,
                 v_supply: float = DEFAULT_V_SUPPLY,
                 mode: DeviceMode = ANALYTICAL) -> CutoffTable:
    """Cutoff scan over a list of gate voltages."""
    v_g_values = [float(v) for v in v_g_values]
    if not v_g_values:
        raise DomainError("cutoff_table needs at least one gate voltage")
    entries = tuple(
        (vg, find_gm_cutoff(vg, t, mem, tm_threshold, v_supply, mode))
        for vg in v_g_values
    )
    return CutoffTable(entries, tm_threshold, v_supply)


def write_cutoff_csv(table: CutoffTable, path) -> None:
    """Write a cutoff table as CSV; missing cutoffs become empty fields."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["v_g", "g_m_cutoff"])
        for vg, cutoff in table.entries:
            writer.writerow([format(vg, ".9g"),
                             "" if cutoff is None else format(cutoff, ".9g")])


def read_cutoff_csv(path) -> CutoffTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["v_g", "g_m_cutoff"]:
            raise DomainError(f"{path}: expected a 'v_g,g_m_cutoff' header")
        entries = []
        for row in reader:
            if not row:
                continue
            vg = float(row[0])
            raw = row[1].strip() if len(row) > 1 else ""
            entries.append((vg, float(raw) if raw else None))
    return CutoffTable(tuple(entries))


def power_monte_carlo(rows: int, cols: int, n_samples: int, v_g: float,
                      t: TransistorParams, mem: MemristorParams,
                      v_supply: float = DEFAULT_V_SUPPLY,
                      seed: int = 0,
                      mode: DeviceMode = ANALYTICAL,
                      c_gate: float = 1e-15,
                      pulse_width: float = 1e-9) -> PowerReport:
    """Monte Carlo estimate of the mean per-synapse read power.

    Each sample programs the array from standard-normal weights clipped to
    [-3, 3] through the usual weight-to-conductance map and drives every row
    with an independent read voltage uniform on (0, v_supply).  Per-synapse
    power is the cell's ``v_in * current`` plus the per-row gate charging
    share ``c_gate * v_g**2 / pulse_width`` spread over the row.

    Every sample draws from its own seed-and-index random stream and the
    reductions run over fixed index ranges, so the estimate does not depend
    on how samples are batched across workers.
    """
    if rows < 1 or cols < 1 or n_samples < 1:
        raise DomainError("rows, cols and n_samples must be at least 1")
    if v_supply <= 0:
        raise DomainError("v_supply must be positive")
    if c_gate < 0 or pulse_width <= 0:
        raise DomainError("c_gate must be >= 0 and pulse_width > 0")
    scale = mapping.scale_from_range(_MC_WEIGHT_RANGE, mem)
    weights = np.empty((n_samples, rows, cols))
    v_read = np.empty((n_samples, rows))
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        weights[i] = rng.standard_normal((rows, cols))
        v_read[i] = rng.uniform(0.0, v_supply, rows)
    clipped = mapping.clip_weights(weights, _MC_WEIGHT_RANGE)
    pair = mapping.weight_to_conductance(clipped, scale)
    g_m = np.maximum(pair.g_plus, pair.g_minus)  # the side carrying |w|
    current, _, _ = solve_synapse_grid(g_m, v_read[:, :, None], v_g, t, mode)
    resistive = (v_read[:, :, None] * current).sum(axis=(1, 2))
    active_rows = (v_read > 0.0).sum(axis=1)
    gate = active_rows * c_gate * v_g * v_g / pulse_width
    per_sample = (resistive + gate) / (rows * cols)
    return PowerReport(float(v_g), float(np.mean(per_sample)),
                       n_samples, seed, rows, cols, per_sample)
