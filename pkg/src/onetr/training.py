"""Gate-voltage schedules and crossbar-aware training procedures.

Two procedures connect the device tables to a trained network:

* a per-layer search that picks, for each layer, the lowest gate voltage
  whose clip level still covers the layer's weight range, then steps back
  one grid point so the layer sits inside the linear window with margin;
* an iterative clip-and-retrain loop that alternates hard weight clipping
  at a fixed schedule with short retraining rounds, pushing weights into
  the linear window while recovering accuracy.

Programming a model onto crossbar tiles and evaluating it through the
non-ideal array live here too, so the command line tool and the tests share
one code path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .crossbar import (DEFAULT_TILE_COLS, DEFAULT_TILE_ROWS, CrossbarTileSet,
                       mvm_energy_batch, mvm_nonideal_batch, program)
from .device import ANALYTICAL, DeviceMode, MemristorParams, TransistorParams
from .errors import DomainError
from .mapping import layer_scale, scale_from_range, wcut_from_vg
from .network import Dense, Model, TrainConfig, accuracy, train

CHECKPOINT_FILE_VERSION = 1
DEFAULT_PERCENTILE = 99.9  # calibration percentile for read-voltage scaling

# search outcome flags
FLAG_NONE = ""
FLAG_FIRST_COVERS = "first_covers"  # even the lowest grid point covers w_r
FLAG_NO_COVERAGE = "no_coverage"  # no grid point covers w_r


@dataclass(frozen=True)
class ScheduleEntry:
    layer: int
    v_g: float  # V
    w_cut: float  # weight units
    w_r: float  # weight range anchor the conductance map was built from
    g_m_cutoff: Optional[float]  # S, None when the gate never passes
    flag: str = FLAG_NONE


@dataclass(frozen=True)
class VgSchedule:
    mode: str  # "heterogeneous" | "homogeneous"
    grid: tuple
    entries: tuple

    def __post_init__(self):
        if self.mode not in ("heterogeneous", "homogeneous"):
            raise DomainError(f"unknown schedule mode {self.mode!r}")

    def gate_voltages(self):
        return [e.v_g for e in self.entries]


def schedule_to_dict(schedule: VgSchedule) -> dict:
    return {
        "mode": schedule.mode,
        "grid": list(schedule.grid),
        "entries": [asdict(e) for e in schedule.entries],
    }


def schedule_from_dict(raw: dict) -> VgSchedule:
    try:
        entries = tuple(ScheduleEntry(**e) for e in raw["entries"])
        return VgSchedule(raw["mode"], tuple(raw["grid"]), entries)
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed schedule payload: {exc}") from exc


def _sorted_grid(table, grid):
    if grid is None:
        grid = table.gate_voltages()
    grid = [float(v) for v in grid]
    if not grid:
        raise DomainError("empty gate-voltage grid")
    out = sorted(grid)
    if any(b - a <= 0 for a, b in zip(out, out[1:])):
        raise DomainError("gate-voltage grid has duplicate points")
    for v in out:
        table.lookup(v)  # raises CutoffLookupError when absent
    return out


def _grid_index(grid, v_g: float) -> int:
    for i, v in enumerate(grid):
        if abs(v - v_g) < 1e-9:
            return i
    raise DomainError(f"v_g={v_g} is not on the schedule grid")


def search_heterogeneous_vg(model: Model, table, mem: MemristorParams,
                            grid=None, wcut_provider=None) -> VgSchedule:
    """Per-layer gate-voltage search.

    Scans the grid upward until the clip level first covers the layer's
    weight range, then assigns the previous grid point. When the lowest
    grid point already covers, it is assigned and flagged; when none
    covers, the highest is assigned and flagged.

    ``wcut_provider(v_g, scale)`` overrides the table-driven clip-level
    computation; with it, ``table`` may be None but ``grid`` is required.
    """
    if wcut_provider is None:
        grid = _sorted_grid(table, grid)
        wcut_provider = lambda v, scale: wcut_from_vg(v, scale, table)
    elif grid is None:
        raise DomainError("an explicit grid is required with a wcut_provider")
    else:
        grid = sorted(float(v) for v in grid)
    entries = []
    for i, layer in enumerate(model.dense_layers()):
        scale = layer_scale(layer.w, mem)
        specs = [wcut_provider(v, scale) for v in grid]
        first = next((k for k, s in enumerate(specs)
                      if s.w_cut >= scale.w_r), None)
        if first is None:
            pick, flag = len(grid) - 1, FLAG_NO_COVERAGE
        elif first == 0:
            pick, flag = 0, FLAG_FIRST_COVERS
        else:
            pick, flag = first - 1, FLAG_NONE
        spec = specs[pick]
        entries.append(ScheduleEntry(i, spec.v_g, spec.w_cut, scale.w_r,
                                     spec.g_m_cutoff, flag))
    return VgSchedule("heterogeneous", tuple(grid), tuple(entries))


def homogeneous_schedule(model: Model, v_g: float, table,
                         mem: MemristorParams, grid=None) -> VgSchedule:
    """Same gate voltage for every layer, clip levels still per layer."""
    grid = _sorted_grid(table, grid)
    _grid_index(grid, v_g)
    entries = []
    for i, layer in enumerate(model.dense_layers()):
        scale = layer_scale(layer.w, mem)
        spec = wcut_from_vg(v_g, scale, table)
        entries.append(ScheduleEntry(i, spec.v_g, spec.w_cut, scale.w_r,
                                     spec.g_m_cutoff))
    return VgSchedule("homogeneous", tuple(grid), tuple(entries))


def step_down_schedule(schedule: VgSchedule, table,
                       mem: MemristorParams) -> VgSchedule:
    """One grid step below each entry, clamped at the lowest grid point.

    Clip levels are recomputed at the lower gate voltage against each
    entry's original weight-range anchor.
    """
    entries = []
    for e in schedule.entries:
        idx = max(_grid_index(schedule.grid, e.v_g) - 1, 0)
        scale = scale_from_range(e.w_r, mem)
        spec = wcut_from_vg(schedule.grid[idx], scale, table)
        entries.append(ScheduleEntry(e.layer, spec.v_g, spec.w_cut, e.w_r,
                                     spec.g_m_cutoff, e.flag))
    return VgSchedule(schedule.mode, schedule.grid, tuple(entries))


def _check_alignment(model: Model, schedule: VgSchedule):
    dense = model.dense_layers()
    if len(dense) != len(schedule.entries):
        raise DomainError(
            f"schedule has {len(schedule.entries)} entries for "
            f"{len(dense)} dense layers")
    return dense


def clip_model(model: Model, schedule: VgSchedule) -> Model:
    """Hard-clips every dense weight to its layer's clip level, in place."""
    for layer, e in zip(_check_alignment(model, schedule), schedule.entries):
        np.clip(layer.w, -e.w_cut, e.w_cut, out=layer.w)
    return model


def linear_fraction(model: Model, schedule: VgSchedule):
    """Fraction of weights inside the clip window, per layer and overall."""
    per_layer, inside, total = [], 0, 0
    for layer, e in zip(_check_alignment(model, schedule), schedule.entries):
        n_in = int(np.count_nonzero(np.abs(layer.w) <= e.w_cut))
        per_layer.append(n_in / layer.w.size)
        inside += n_in
        total += layer.w.size
    return per_layer, inside / total


def iterative_train(model: Model, schedule: VgSchedule, x, y,
                    config: TrainConfig, eval_x=None, eval_y=None):
    """Alternate hard clipping with short retraining rounds.

    Clip levels stay fixed at the schedule for every iteration. Returns the
    trained model and one history row per iteration with the accuracy and
    the overall in-window weight fraction measured after that round's
    training step.
    """
    _check_alignment(model, schedule)
    if eval_x is None:
        eval_x, eval_y = x, y
    rng = np.random.default_rng(config.seed)
    history = []
    for it in range(1, config.n_iterations + 1):
        clip_model(model, schedule)
        train(model, x, y, config, rng=rng,
              epochs=config.epochs_per_iteration)
        _, overall = linear_fraction(model, schedule)
        history.append({
            "iteration": it,
            "accuracy": accuracy(model, eval_x, eval_y),
            "linear_fraction": overall,
        })
    return model, history


def _dense_inputs(model: Model, x):
    """Input activations seen by each dense layer on the given batch."""
    acts = np.asarray(x, dtype=float)
    inputs = []
    for layer in model.layers:
        if isinstance(layer, Dense):
            inputs.append(acts)
        acts = layer.forward(acts)
    return inputs


def program_model(model: Model, schedule: VgSchedule, mem: MemristorParams,
                  calib_x, percentile: float = DEFAULT_PERCENTILE,
                  tile_rows: int = DEFAULT_TILE_ROWS,
                  tile_cols: int = DEFAULT_TILE_COLS):
    """Programs every dense layer onto crossbar tiles.

    Read-voltage scaling uses the given percentile of each layer's input
    activations over the calibration batch, so stray large activations do
    not crush the useful voltage range.
    """
    dense = _check_alignment(model, schedule)
    calib_x = np.asarray(calib_x, dtype=float)
    if calib_x.ndim != 2 or calib_x.shape[0] < 1:
        raise DomainError("calibration batch must be (samples, features)")
    tilesets = []
    for layer, e, acts in zip(dense, schedule.entries,
                              _dense_inputs(model, calib_x)):
        a_max = float(np.percentile(acts, percentile))
        if a_max <= 0 or not np.isfinite(a_max):
            raise DomainError(
                f"layer {e.layer}: calibration activations give "
                f"a_max={a_max}")
        scale = scale_from_range(e.w_r, mem)
        tilesets.append(program(layer.w, e, scale, a_max=a_max,
                                tile_rows=tile_rows, tile_cols=tile_cols))
    return tilesets


def crossbar_logits(tilesets, biases, x, t: TransistorParams,
                    mode: DeviceMode = ANALYTICAL, v_supply: float = 0.5):
    """Forward pass through programmed arrays; biases and ReLU are digital."""
    if len(tilesets) != len(biases):
        raise DomainError("one bias vector per programmed layer required")
    acts = np.asarray(x, dtype=float)
    last = len(tilesets) - 1
    for i, (ts, b) in enumerate(zip(tilesets, biases)):
        acts = mvm_nonideal_batch(ts, acts, t, mode=mode,
                                  v_supply=v_supply) + np.asarray(b)
        if i < last:
            acts = np.maximum(acts, 0.0)
    return acts


def evaluate(model: Model, x, y, mode: str = "software",
             schedule: Optional[VgSchedule] = None,
             t: Optional[TransistorParams] = None,
             mem: Optional[MemristorParams] = None,
             calib_x=None, device_mode: DeviceMode = ANALYTICAL,
             v_supply: float = 0.5, tilesets=None) -> float:
    """Accuracy of the software model or of its crossbar execution.

    Crossbar mode programs the arrays from the schedule unless pre-built
    tilesets are passed in.
    """
    if mode == "software":
        return accuracy(model, x, y)
    if mode != "crossbar":
        raise DomainError(f"unknown evaluation mode {mode!r}")
    if t is None:
        raise DomainError("crossbar evaluation needs transistor parameters")
    if tilesets is None:
        if schedule is None or mem is None:
            raise DomainError("crossbar evaluation needs a schedule and "
                              "memristor parameters")
        if calib_x is None:
            raise DomainError("crossbar evaluation needs a calibration batch")
        tilesets = program_model(model, schedule, mem, calib_x)
    biases = [l.b for l in model.dense_layers()]
    logits = crossbar_logits(tilesets, biases, x, t, mode=device_mode,
                             v_supply=v_supply)
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(y)))


def network_energy(tilesets, biases, x, t: TransistorParams,
                   mode: DeviceMode = ANALYTICAL, v_supply: float = 0.5,
                   pulse_width: float = 1e-9, c_gate: float = 1e-15):
    """Read energy of one forward pass over a batch, per layer and total.

    Activations between layers come from the crossbar chain itself, so each
    layer is billed for the inputs it actually sees.
    """
    if len(tilesets) != len(biases):
        raise DomainError("one bias vector per programmed layer required")
    acts = np.asarray(x, dtype=float)
    per_layer = []
    last = len(tilesets) - 1
    for i, (ts, b) in enumerate(zip(tilesets, biases)):
        e = mvm_energy_batch(ts, acts, t, mode=mode, v_supply=v_supply,
                             pulse_width=pulse_width, c_gate=c_gate)
        per_layer.append(float(np.sum(e)))
        acts = mvm_nonideal_batch(ts, acts, t, mode=mode,
                                  v_supply=v_supply) + np.asarray(b)
        if i < last:
            acts = np.maximum(acts, 0.0)
    return {"per_layer": per_layer, "total": float(sum(per_layer))}


@dataclass(frozen=True)
class Checkpoint:
    model: Model
    schedule: Optional[VgSchedule] = None
    config: Optional[TrainConfig] = None
    history: Optional[list] = None


def save_checkpoint(path, model: Model, schedule: Optional[VgSchedule] = None,
                    config: Optional[TrainConfig] = None,
                    history=None) -> None:
    payload = {
        "format_version": CHECKPOINT_FILE_VERSION,
        "model": model.to_dict(),
        "schedule": schedule_to_dict(schedule) if schedule else None,
        "train_config": asdict(config) if config else None,
        "history": history,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: not valid JSON: {exc}") from exc
    if raw.get("format_version") != CHECKPOINT_FILE_VERSION:
        raise DomainError(f"{path}: unsupported checkpoint version")
    try:
        model = Model.from_dict(raw["model"])
    except KeyError as exc:
        raise DomainError(f"{path}: missing model payload") from exc
    schedule = (schedule_from_dict(raw["schedule"])
                if raw.get("schedule") else None)
    config = (TrainConfig(**raw["train_config"])
              if raw.get("train_config") else None)
    return Checkpoint(model, schedule, config, raw.get("history"))
