"""Analytical model of a 1T-1R synapse cell.

A cell is a memristor (conductance ``g_m``) in series with an NMOS access
transistor: the read voltage ``v_in`` drives the memristor, the internal node
between the two devices sits on the transistor drain, the source is held at
virtual ground and the gate at ``v_g``.  The effective conductance seen by the
read circuit is ``g_eff = current / v_in`` and is generally below ``g_m``
because part of ``v_in`` drops across the transistor channel.

The transistor model is piecewise: an exponential subthreshold current below
``vth`` and a square-law channel current (triode / saturation, with channel
length modulation) above it.  The subthreshold term is kept, clamped at its
``vgs = vth`` value, above threshold as well; this makes the current
continuous and strictly increasing in ``vgs`` and preserves the small
leakage-like bump in ``g_eff`` at low read voltages.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from .errors import DomainError

# Read voltage used for the secant slope that defines g_eff at v_in = 0.
V_EPSILON = 1e-6

# A bracket of width v_in collapses to float resolution in well under 64
# halvings; the contract allows up to 200.
_BISECT_ITERS = 64

_ENV_DEVICE_FILE = "ONETR_DEVICE_FILE"


@dataclass(frozen=True)
class TransistorParams:
    """NMOS access transistor parameters (SI units)."""

    vth: float  # threshold voltage, V
    kp: float  # transconductance factor, A/V^2
    lambda_: float = 0.05  # channel length modulation, 1/V
    n_sub: float = 1.5  # subthreshold slope factor
    i0_sub: float = 0.0  # subthreshold current prefactor, A
    v_thermal: float = 0.0258  # thermal voltage, V

    def __post_init__(self):
        if not all(np.isfinite(getattr(self, f.name)) for f in fields(self)):
            raise DomainError("transistor parameters must be finite")
        if self.vth <= 0 or self.kp <= 0:
            raise DomainError("vth and kp must be positive")
        if self.lambda_ < 0 or self.i0_sub < 0:
            raise DomainError("lambda_ and i0_sub must be non-negative")
        if self.n_sub <= 0 or self.v_thermal <= 0:
            raise DomainError("n_sub and v_thermal must be positive")


@dataclass(frozen=True)
class MemristorParams:
    """Memristor conductance range (SI units)."""

    g_on: float = 1.0 / 30e3  # low-resistance state, S
    g_off: float = 1.0 / 300e3  # high-resistance state, S

    def __post_init__(self):
        if not (np.isfinite(self.g_on) and np.isfinite(self.g_off)):
            raise DomainError("memristor parameters must be finite")
        if not 0 < self.g_off < self.g_on:
            raise DomainError("memristor range requires 0 < g_off < g_on")


@dataclass(frozen=True)
class DeviceMode:
    """Transistor treatment: full analytical model or an ideal switch."""

    variant: str

    def __post_init__(self):
        if self.variant not in ("analytical", "ideal_switch"):
            raise DomainError(f"unknown device mode {self.variant!r}")


ANALYTICAL = DeviceMode("analytical")
IDEAL_SWITCH = DeviceMode("ideal_switch")


@dataclass(frozen=True)
class SynapseSolution:
    """Operating point of one cell for a given (g_m, v_in, v_g)."""

    current: float  # A
    v_internal: float  # V, node between memristor and transistor
    g_eff: float  # S, current / v_in (secant slope at v_in = 0)


def _current_raw(vgs, vds, p: TransistorParams):
    """Transistor drain current without argument validation."""
    ov = vgs - p.vth
    # Subthreshold exponential, clamped at its vgs = vth value above threshold
    # so the total current stays continuous across the threshold boundary.
    leak = p.i0_sub * np.exp(np.minimum(ov, 0.0) / (p.n_sub * p.v_thermal))
    leak = leak * -np.expm1(-vds / p.v_thermal)
    ov_pos = np.maximum(ov, 0.0)
    clm = 1.0 + p.lambda_ * vds
    triode = p.kp * (ov_pos * vds - 0.5 * vds * vds) * clm
    sat = 0.5 * p.kp * ov_pos * ov_pos * clm
    return leak + np.where(vds < ov_pos, triode, sat)


def transistor_current(vgs, vds, p: TransistorParams):
    """Drain current of the access transistor.

    Piecewise model: subthreshold for ``vgs < vth``, square-law triode for
    ``vds < vgs - vth`` and saturation beyond, both scaled by the channel
    length modulation factor ``1 + lambda_ * vds``.  Continuous at the region
    boundaries, non-decreasing in ``vds`` and strictly increasing in ``vgs``
    for ``vds > 0``.  Accepts scalars or broadcastable arrays.
    """
    scalar = np.isscalar(vgs) and np.isscalar(vds)
    vgs = np.asarray(vgs, dtype=float)
    vds = np.asarray(vds, dtype=float)
    if not (np.all(np.isfinite(vgs)) and np.all(np.isfinite(vds))):
        raise DomainError("vgs and vds must be finite")
    if np.any(vgs < 0.0) or np.any(vds < 0.0):
        raise DomainError("vgs and vds must be non-negative")
    i = _current_raw(vgs, vds, p)
    return float(i) if scalar else i


def _solve_v_internal(g_m, v_in, v_g, p: TransistorParams):
    """Bisection for the internal node voltage on broadcast arrays.

    The KCL residual ``(v_in - x) * g_m - i_transistor(v_g, x)`` is positive
    at ``x = 0``, negative at ``x = v_in`` and strictly decreasing, so the
    root is bracketed.  The bracket is halved until it collapses to float
    resolution, which keeps the current mismatch far below 1e-9 relative.
    """
    shape = np.broadcast_shapes(np.shape(g_m), np.shape(v_in), np.shape(v_g))
    g_m = np.broadcast_to(np.asarray(g_m, dtype=float), shape)
    v_in = np.broadcast_to(np.asarray(v_in, dtype=float), shape)
    v_g = np.broadcast_to(np.asarray(v_g, dtype=float), shape)
    lo = np.zeros(shape)
    hi = np.array(v_in, dtype=float, copy=True)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        residual = (v_in - mid) * g_m - _current_raw(v_g, mid, p)
        above = residual >= 0.0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def _validate_operating_point(g_m, v_in, v_g):
    g_m = np.asarray(g_m, dtype=float)
    v_in = np.asarray(v_in, dtype=float)
    v_g = np.asarray(v_g, dtype=float)
    for name, a in (("g_m", g_m), ("v_in", v_in), ("v_g", v_g)):
        if not np.all(np.isfinite(a)):
            raise DomainError(f"{name} must be finite")
    if np.any(g_m <= 0.0):
        raise DomainError("g_m must be positive")
    if np.any(v_in < 0.0) or np.any(v_g < 0.0):
        raise DomainError("v_in and v_g must be non-negative")
    return g_m, v_in, v_g


def solve_synapse_grid(g_m, v_in, v_g, p: TransistorParams,
                       mode: DeviceMode = ANALYTICAL):
    """Vectorised cell solve over broadcastable arrays.

    Returns ``(current, v_internal, g_eff)`` arrays.  Entries with
    ``v_in == 0`` carry zero current and the secant-slope ``g_eff`` taken at
    ``V_EPSILON``.
    """
    g_m, v_in, v_g = _validate_operating_point(g_m, v_in, v_g)
    if mode.variant == "ideal_switch":
        shape = np.broadcast_shapes(g_m.shape, v_in.shape, v_g.shape)
        g_m = np.broadcast_to(g_m, shape)
        v_in = np.broadcast_to(v_in, shape)
        on = np.broadcast_to(v_g, shape) > p.vth
        g_eff = np.where(on, g_m, 0.0)
        return g_eff * v_in, np.where(on, 0.0, v_in), g_eff
    at_zero = v_in == 0.0
    v_solve = np.where(at_zero, V_EPSILON, v_in)
    x = _solve_v_internal(g_m, v_solve, v_g, p)
    current = (v_solve - x) * np.broadcast_to(g_m, x.shape)
    g_eff = current / v_solve
    return (np.where(at_zero, 0.0, current),
            np.where(at_zero, 0.0, x),
            g_eff)


def solve_synapse(g_m: float, v_in: float, v_g: float, p: TransistorParams,
                  mode: DeviceMode = ANALYTICAL) -> SynapseSolution:
    """Solve one cell and return its operating point."""
    current, v_internal, g_eff = solve_synapse_grid(g_m, v_in, v_g, p, mode)
    return SynapseSolution(float(current), float(v_internal), float(g_eff))


def effective_conductance(g_m: float, v_in: float, v_g: float,
                          p: TransistorParams,
                          mode: DeviceMode = ANALYTICAL) -> float:
    """Effective cell conductance current / v_in at one operating point."""
    return solve_synapse(g_m, v_in, v_g, p, mode).g_eff


# ---------------------------------------------------------------------------
# Parameter files

_TRANSISTOR_KEYS = {
    "vth": "vth", "kp": "kp", "lambda": "lambda_", "n_sub": "n_sub",
    "i0_sub": "i0_sub", "v_thermal": "v_thermal",
}
_MEMRISTOR_KEYS = {"g_on": "g_on", "g_off": "g_off"}

DEVICE_FILE_VERSION = 1


def load_device_file(path) -> tuple[TransistorParams, MemristorParams]:
    """Read a flat JSON parameter file with transistor and memristor fields."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise DomainError(f"device file {path}: expected a JSON object")
    try:
        t_kwargs = {attr: float(raw[key]) for key, attr in _TRANSISTOR_KEYS.items()}
        m_kwargs = {attr: float(raw[key]) for key, attr in _MEMRISTOR_KEYS.items()}
    except KeyError as exc:
        raise DomainError(f"device file {path}: missing field {exc.args[0]!r}") from exc
    return TransistorParams(**t_kwargs), MemristorParams(**m_kwargs)


def _decimal(x: float) -> str:
    """Shortest round-tripping decimal (positional) rendering of a float."""
    return np.format_float_positional(float(x), unique=True, trim="-")


def save_device_file(path, t: TransistorParams, mem: MemristorParams) -> None:
    """Write a parameter file; numbers are in plain decimal notation."""
    entries = [("format_version", str(DEVICE_FILE_VERSION))]
    entries += [(key, _decimal(getattr(t, attr))) for key, attr in _TRANSISTOR_KEYS.items()]
    entries += [(key, _decimal(getattr(mem, attr))) for key, attr in _MEMRISTOR_KEYS.items()]
    body = ",\n".join(f'  "{key}": {value}' for key, value in entries)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("{\n" + body + "\n}\n")


def _bundled(name: str) -> tuple[TransistorParams, MemristorParams]:
    with resources.as_file(resources.files("onetr").joinpath("params", name)) as p:
        return load_device_file(p)


def default_device() -> tuple[TransistorParams, MemristorParams]:
    """Calibrated default parameters.

    Honours the ONETR_DEVICE_FILE environment variable, otherwise loads the
    bundled calibration produced by :mod:`onetr.calibrate`.
    """
    override = os.environ.get(_ENV_DEVICE_FILE)
    if override:
        return load_device_file(override)
    return _bundled("device_default.json")


def leakage_stressed_device() -> tuple[TransistorParams, MemristorParams]:
    """Parameter set whose cells run on subthreshold leakage at high v_g.

    With the threshold above the whole gate-voltage range the cell current is
    capped by the leakage prefactor, which distorts g_eff so strongly that no
    conductance passes the tolerance check at any gate voltage.
    """
    return _bundled("device_leakage_stressed.json")
