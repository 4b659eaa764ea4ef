"""Section timers and per-element cost attribution.

Three categories are timed: the volume loop (DG_ELEMS), everything done
per side (DG_SIDES) and the nodal/modal transforms (DG_MODAL).  After a
measured interval the totals are spread over elements: every element
gets an equal share of DG_ELEMS, modal elements share DG_MODAL, and each
side hands its share of DG_SIDES to one element.

The default clock is per-thread CPU time, which stays meaningful when
several simulated ranks share one core.  Wall-clock time is available
via ``clock="wall"``.
"""
from __future__ import annotations

import csv
import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import AttributionError

CLOCKS = {"thread": time.thread_time_ns, "wall": time.perf_counter_ns, "process": time.process_time_ns}


class Category(str, enum.Enum):
    DG_ELEMS = "DG_ELEMS"
    DG_SIDES = "DG_SIDES"
    DG_MODAL = "DG_MODAL"


class _NullSection:
    __slots__ = ()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


_NULL = _NullSection()


class _Section:
    __slots__ = ("timers", "category", "start")

    def __init__(self, timers, category):
        self.timers = timers
        self.category = category

    def __enter__(self):
        t = self.timers
        assert t._open is None, f"timer {self.category.value} opened inside {t._open.value}"
        t._open = self.category
        self.start = t._clock()
        return self

    def __exit__(self, *exc):
        t = self.timers
        t.totals[self.category] += (t._clock() - self.start) * 1e-9
        t._open = None
        return False


@dataclass
class TimerSet:
    active: bool = True
    clock: str = "thread"
    totals: dict = field(default_factory=lambda: {c: 0.0 for c in Category})
    n_elems: int = 0
    n_sides: int = 0
    n_modal_elems: int = 0

    def __post_init__(self):
        if self.clock not in CLOCKS:
            raise ValueError(f"unknown clock {self.clock!r}")
        self._clock = CLOCKS[self.clock]
        self._open = None

    def section(self, category: Category):
        """Context manager adding the elapsed time to ``category`` when active."""
        if not self.active:
            return _NULL
        return _Section(self, Category(category))

    def count(self, n_elems: int, n_sides: int, n_modal_elems: int):
        self.n_elems, self.n_sides, self.n_modal_elems = n_elems, n_sides, n_modal_elems

    def reset(self):
        for c in Category:
            self.totals[c] = 0.0

    @property
    def total(self) -> float:
        return sum(self.totals[c] for c in Category)

    def as_tuple(self) -> tuple[float, float, float]:
        return tuple(self.totals[c] for c in Category)


def attribute_costs(timers: TimerSet, modal_flags, side_to_elem) -> np.ndarray:
    """Spread the category totals over local elements (returns ``t_elem``)."""
    modal_flags = np.asarray(modal_flags, dtype=bool)
    side_to_elem = np.asarray(side_to_elem, dtype=np.int64)
    n = len(modal_flags)
    t_elems, t_sides, t_modal = timers.as_tuple()
    t_elem = np.zeros(n)
    if n == 0:
        if t_elems > 0 or t_sides > 0 or t_modal > 0:
            raise AttributionError("time recorded on a rank without elements")
        return t_elem
    if np.any(side_to_elem < 0) or np.any(side_to_elem >= n):
        raise AttributionError("side mapped to an element outside the local partition")
    n_modal = int(modal_flags.sum())
    if n_modal == 0 and t_modal > 0:
        raise AttributionError("modal time recorded without modal elements")
    if len(side_to_elem) == 0 and t_sides > 0:
        raise AttributionError("side time recorded without sides")
    t_elem += t_elems / n
    if n_modal:
        t_elem[modal_flags] += t_modal / n_modal
    if len(side_to_elem):
        t_elem += np.bincount(side_to_elem, minlength=n) * (t_sides / len(side_to_elem))
    return t_elem


def is_measurement_step(step: int, interval: int) -> bool:
    """Steps are counted from 1; every ``interval``-th one is measured."""
    if interval < 1:
        raise ValueError("measurement interval must be >= 1")
    return step % interval == 0


class CostSmoother:
    """Exponential moving average of global per-element costs.

    ``weight`` is the share of the newest interval; 1.0 disables smoothing.
    """

    def __init__(self, weight: float = 0.5):
        if not 0.0 < weight <= 1.0:
            raise ValueError("smoothing weight must lie in (0, 1]")
        self.weight = weight
        self.value: np.ndarray | None = None

    def update(self, costs) -> np.ndarray:
        costs = np.asarray(costs, dtype=float)
        if self.value is None or self.value.shape != costs.shape:
            self.value = costs.copy()
        else:
            self.value = self.weight * costs + (1.0 - self.weight) * self.value
        return self.value


def write_cost_csv(path, rows) -> None:
    """Rows of ``(step, element_global_id, cost_seconds)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "element_global_id", "cost_seconds"])
        for step, gid, cost in rows:
            w.writerow([int(step), int(gid), repr(float(cost))])
