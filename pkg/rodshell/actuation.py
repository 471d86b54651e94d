"""Time-varying natural quantities: tabulated schedules, waveform generators and CSV schedules.

Quantities: ``kappa1``/``kappa2`` (bend-twist springs), ``twist`` (bend-twist springs),
``length`` (stretch springs) and ``phi`` (hinges). Springs are addressed by 0-based index
arrays into their family; CSV headers use 1-based selectors (``all``, ``4``, ``2-7``).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .config import ACTUATED_QUANTITIES

if TYPE_CHECKING:
    from .topology import SpringSet

log = logging.getLogger("rodshell.actuation")


@dataclass
class Waveform:
    """``base + ramp(t)·amplitude·sin(2πft + phase)``; ``phase`` may differ per spring."""

    base: float | NDArray[np.float64] = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float | NDArray[np.float64] = 0.0
    ramp_time: float = 0.0

    def __post_init__(self) -> None:
        if self.frequency < 0:
            raise ValueError(f"Invalid frequency: {self.frequency!r}. Must be >= 0.")
        if self.ramp_time < 0:
            raise ValueError(f"Invalid ramp_time: {self.ramp_time!r}. Must be >= 0.")

    def ramp(self, t: float) -> float:
        """Smoothstep from 0 to 1 over ``ramp_time``."""
        if self.ramp_time == 0.0:
            return 1.0
        s = min(max(t / self.ramp_time, 0.0), 1.0)
        return s * s * (3.0 - 2.0 * s)

    def __call__(self, t: float) -> NDArray[np.float64]:
        wave = np.sin(2.0 * math.pi * self.frequency * t + np.asarray(self.phase, dtype=float))
        return np.asarray(self.base, dtype=float) + self.ramp(t) * self.amplitude * wave


@dataclass
class ActuationSchedule:
    """One natural quantity on a set of springs, either tabulated or generated.

    Tabulated ``values`` are ``(T,)`` (shared) or ``(T, S)`` (one column per spring).
    """

    quantity: str
    springs: NDArray[np.int64]
    times: NDArray[np.float64] | None = None
    values: NDArray[np.float64] | None = None
    waveform: Waveform | None = None
    tag: str = ""

    def __post_init__(self) -> None:
        if self.quantity not in ACTUATED_QUANTITIES:
            raise ValueError(f"Invalid quantity: {self.quantity!r}. Must be one of {', '.join(ACTUATED_QUANTITIES)}.")
        self.springs = np.atleast_1d(np.asarray(self.springs, dtype=np.int64))
        if self.waveform is not None:
            if self.times is not None or self.values is not None:
                raise ValueError("Invalid schedule: give either samples or a waveform, not both.")
            return
        if self.times is None or self.values is None or len(self.times) == 0:
            raise ValueError(f"Invalid schedule {self.tag or self.quantity!r}: empty. Needs at least one sample.")
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != len(self.times):
            raise ValueError(
                f"Invalid schedule {self.tag or self.quantity!r}: {len(self.times)} times, {len(self.values)} values."
            )
        if np.any(np.diff(self.times) <= 0):
            raise ValueError(f"Invalid schedule {self.tag or self.quantity!r}: times must be strictly increasing.")
        if self.values.ndim == 2 and self.values.shape[1] != len(self.springs):
            raise ValueError(
                f"Invalid schedule {self.tag or self.quantity!r}: {self.values.shape[1]} columns for "
                f"{len(self.springs)} springs."
            )
        if self.quantity == "length" and np.any(self.values <= 0):
            raise ValueError(f"Invalid schedule {self.tag or self.quantity!r}: natural lengths must be > 0.")


def evaluate_schedule(schedule: ActuationSchedule, t: float) -> NDArray[np.float64]:
    """Value per addressed spring at time ``t``: piecewise linear, clamped outside the samples."""
    if schedule.waveform is not None:
        return np.broadcast_to(schedule.waveform(t), schedule.springs.shape).astype(float)
    assert schedule.times is not None and schedule.values is not None
    if schedule.values.ndim == 1:
        value = np.interp(t, schedule.times, schedule.values)
        return np.full(len(schedule.springs), value)
    return np.array([np.interp(t, schedule.times, col) for col in schedule.values.T])


def _target(springs: SpringSet, quantity: str) -> tuple[NDArray[np.float64], int | None]:
    """The array a quantity lives in, plus the column for curvature."""
    if quantity in ("kappa1", "kappa2"):
        return springs.bend_twist.kappa_bar, 0 if quantity == "kappa1" else 1
    if quantity == "twist":
        return springs.bend_twist.twist_bar, None
    if quantity == "length":
        return springs.stretch.rest_length, None
    if springs.hinge is None:
        raise ValueError("Invalid actuation target: 'phi' needs hinge springs (shell_mode = 'hinge').")
    return springs.hinge.phi_bar, None


def apply_actuation(springs: SpringSet, schedules: list[ActuationSchedule], t: float) -> None:
    """Overwrite the natural quantities every schedule addresses with their values at ``t``."""
    for schedule in schedules:
        array, column = _target(springs, schedule.quantity)
        idx = schedule.springs
        if idx.size and (idx.min() < 0 or idx.max() >= len(array)):
            raise ValueError(
                f"Invalid actuation target {schedule.tag or schedule.quantity!r}: "
                f"spring index out of [0, {len(array) - 1}]."
            )
        value = evaluate_schedule(schedule, t)
        if schedule.quantity == "length" and np.any(value <= 0):
            raise ValueError(f"Invalid natural length at t={t:.6g}: {value.min()!r}. Must be > 0.")
        if column is None:
            array[idx] = value
        else:
            array[idx, column] = value
    log.debug("Actuation applied at t=%.6g (%d schedules)", t, len(schedules))


# --- CSV ---------------------------------------------------------------------


def parse_selector(selector: str, n_springs: int) -> NDArray[np.int64]:
    """``all``, ``i`` or ``i-j`` (1-based, inclusive) to 0-based indices."""
    text = selector.strip().lower()
    if text == "all":
        return np.arange(n_springs)
    try:
        if "-" in text:
            lo, hi = (int(p) for p in text.split("-", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise ValueError(f"Invalid spring selector: {selector!r}. Must be 'all', 'i' or 'i-j'.") from None
    if not 1 <= lo <= hi <= n_springs:
        raise ValueError(f"Invalid spring selector: {selector!r}. Must lie in 1-{n_springs}.")
    return np.arange(lo - 1, hi)


def read_schedule_csv(path: str | Path, quantity: str, springs: SpringSet) -> list[ActuationSchedule]:
    """One schedule per non-time column of a ``time,<selector>,...`` CSV file."""
    array, _ = _target(springs, quantity)
    with Path(path).open(newline="") as fh:
        reader = csv.reader(row for row in fh if row.strip() and not row.lstrip().startswith("#"))
        header = next(reader, None)
        if header is None or header[0].strip().lower() != "time":
            raise ValueError(f"Invalid schedule file {str(path)!r}: first column must be 'time'.")
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise ValueError(f"Invalid schedule file {str(path)!r}: no samples.")
    data = np.array(rows)
    schedules = [
        ActuationSchedule(
            quantity=quantity,
            springs=parse_selector(sel, len(array)),
            times=data[:, 0],
            values=data[:, k],
            tag=sel.strip(),
        )
        for k, sel in enumerate(header[1:], start=1)
    ]
    log.info("Read %d schedules for %s from %s", len(schedules), quantity, path)
    return schedules


def write_schedule_csv(path: str | Path, times: ArrayLike, columns: dict[str, ArrayLike]) -> None:
    """Write a ``time,<selector>,...`` schedule file readable by :func:`read_schedule_csv`."""
    t = np.asarray(times, dtype=float)
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["time", *columns])
        writer.writeheader()
        for i, ti in enumerate(t):
            writer.writerow({"time": repr(float(ti)), **{k: repr(float(np.asarray(v)[i])) for k, v in columns.items()}})
