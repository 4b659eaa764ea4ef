"""Imbalance evaluation, SFC repartitioning and element redistribution.

Partitions are offset arrays over the SFC-ordered element list: rank ``r``
owns ``[offsets[r], offsets[r+1])``.  Segment loads are always taken as
differences of one prefix-sum array so the greedy and exact partitioners
and the imbalance measure agree on every rounding.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CollectiveError, ConfigurationError, DomainError, ExchangeError, PlanError

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1.10
# above this many elements the exact partitioner bisects on the bottleneck value
_CANDIDATE_LIMIT = 3000


def validate_offsets(offsets, n_elems: int | None = None) -> np.ndarray:
    off = np.asarray(offsets, dtype=np.int64)
    if off.ndim != 1 or len(off) < 2:
        raise PlanError("offsets need at least two entries")
    if off[0] != 0 or np.any(np.diff(off) < 0):
        raise PlanError(f"offsets must start at 0 and be non-decreasing: {off.tolist()}")
    if n_elems is not None and off[-1] != n_elems:
        raise PlanError(f"offsets end at {off[-1]}, expected {n_elems}")
    return off


def equal_count_offsets(n_elems: int, n_ranks: int) -> np.ndarray:
    base, extra = divmod(n_elems, n_ranks)
    sizes = [base + (1 if r < extra else 0) for r in range(n_ranks)]
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


def _prefix(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise DomainError("weights must be a 1-D array")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite and non-negative")
    return np.concatenate([[0.0], np.cumsum(w)])


def segment_loads(weights, offsets) -> np.ndarray:
    P = _prefix(weights)
    off = validate_offsets(offsets, len(P) - 1)
    return P[off[1:]] - P[off[:-1]]


def compute_imbalance(weights, offsets) -> float:
    """``max(load) / mean(load)``; 1.0 when every weight is zero."""
    P = _prefix(weights)
    off = validate_offsets(offsets, len(P) - 1)
    loads = P[off[1:]] - P[off[:-1]]
    total = P[-1]
    if total <= 0:
        return 1.0
    return float(loads.max() / (total / len(loads)))


def should_rebalance(imbalance: float, threshold: float) -> bool:
    if not threshold > 1.0:
        raise ConfigurationError(f"threshold must exceed 1, got {threshold}")
    return bool(imbalance > threshold)


def _greedy(P, k):
    n = len(P) - 1
    total = P[-1]
    off = np.zeros(k + 1, dtype=np.int64)
    off[-1] = n
    ideal = total / k
    prev = 0
    for r in range(1, k):
        target = r * ideal
        c = int(np.searchsorted(P, target, side="left"))
        c = min(max(c, prev), n)
        # look back one position if that lands closer to the target
        if c > prev and abs(P[c - 1] - target) <= abs(P[c] - target):
            c -= 1
        off[r] = c
        prev = c
    return off


def _fill(P, k, bound):
    """Greedy left-to-right fill with segment load <= bound; None if infeasible."""
    n = len(P) - 1
    off = np.zeros(k + 1, dtype=np.int64)
    start = 0
    for r in range(1, k + 1):
        end = int(np.searchsorted(P, P[start] + bound, side="right")) - 1
        # loads are compared as prefix differences, like everywhere else
        while end < n and P[end + 1] - P[start] <= bound:
            end += 1
        while end > start and P[end] - P[start] > bound:
            end -= 1
        off[r] = end
        start = end
    if off[k] != n:
        return None
    return off


def _exact(P, k):
    n = len(P) - 1
    if n <= _CANDIDATE_LIMIT:
        idx_i, idx_j = np.triu_indices(n + 1, 1)
        cand = np.unique(P[idx_j] - P[idx_i])
        lo, hi = 0, len(cand) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _fill(P, k, cand[mid]) is not None:
                hi = mid
            else:
                lo = mid + 1
        return _fill(P, k, cand[lo])
    w = np.diff(P)
    lo, hi = float(w.max()), float(P[-1])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _fill(P, k, mid) is not None:
            hi = mid
        else:
            lo = mid
    return _fill(P, k, hi)


def repartition_sfc(weights, n_ranks: int, mode: str = "greedy") -> np.ndarray:
    """Contiguous SFC partition of ``weights`` over ``n_ranks`` ranks.

    ``greedy`` places each cut at the prefix position nearest to
    ``r * total / n_ranks``.  ``exact`` minimises the bottleneck load by
    binary search over candidate segment loads with a feasibility sweep.
    """
    if int(n_ranks) != n_ranks or n_ranks < 1:
        raise DomainError(f"n_ranks must be a positive integer, got {n_ranks!r}")
    P = _prefix(weights)
    if P[-1] <= 0:
        raise DomainError("weights must not all be zero")
    if mode == "greedy":
        return _greedy(P, int(n_ranks))
    if mode == "exact":
        return _exact(P, int(n_ranks))
    raise ConfigurationError(f"unknown partition mode {mode!r}")


# ---------------------------------------------------------------- exchange


@dataclass(frozen=True)
class ExchangePlan:
    rank: int
    n_elem_send: np.ndarray
    offset_elem_send: np.ndarray
    n_elem_recv: np.ndarray
    offset_elem_recv: np.ndarray

    @property
    def n_moved(self) -> int:
        """Elements leaving this rank (self copies excluded)."""
        return int(self.n_elem_send.sum() - self.n_elem_send[self.rank])


def _overlap(a0, a1, b0, b1):
    return np.maximum(0, np.minimum(a1, b1) - np.maximum(a0, b0))


def build_exchange_plan(old, new, rank: int) -> ExchangePlan:
    old = validate_offsets(old)
    new = validate_offsets(new)
    if len(old) != len(new):
        raise PlanError(f"partitions over different rank counts ({len(old) - 1} vs {len(new) - 1})")
    if old[-1] != new[-1]:
        raise PlanError(f"partitions cover {old[-1]} and {new[-1]} elements")
    k = len(old) - 1
    if not 0 <= rank < k:
        raise PlanError(f"rank {rank} outside [0, {k})")
    send = _overlap(old[rank], old[rank + 1], new[:-1], new[1:]).astype(np.int64)
    recv = _overlap(new[rank], new[rank + 1], old[:-1], old[1:]).astype(np.int64)
    send_off = np.concatenate([[0], np.cumsum(send)[:-1]]).astype(np.int64)
    recv_off = np.concatenate([[0], np.cumsum(recv)[:-1]]).astype(np.int64)
    return ExchangePlan(rank, send, send_off, recv, recv_off)


def execute_exchange(comm, plan: ExchangePlan, payload: np.ndarray, global_ids: np.ndarray, new_offsets):
    """Redistribute per-element payload rows to the new partition.

    Returns ``(payload, global_ids)`` for the new segment.  The received
    ids are checked collectively against the new segment; on any mismatch
    every rank raises ExchangeError and the caller's arrays are untouched.
    """
    new = validate_offsets(new_offsets)
    payload = np.asarray(payload)
    global_ids = np.asarray(global_ids, dtype=np.int64)
    if len(payload) != plan.n_elem_send.sum() or len(global_ids) != len(payload):
        raise ExchangeError(f"rank {plan.rank}: payload holds {len(payload)} elements, "
                            f"plan sends {int(plan.n_elem_send.sum())}")
    try:
        ids = comm.all_to_all_variable(global_ids, plan.n_elem_send, plan.offset_elem_send,
                                       plan.n_elem_recv, plan.offset_elem_recv)
        data = comm.all_to_all_variable(payload, plan.n_elem_send, plan.offset_elem_send,
                                        plan.n_elem_recv, plan.offset_elem_recv)
    except CollectiveError as exc:
        raise ExchangeError(f"rank {plan.rank}: exchange failed: {exc}") from exc
    expected = np.arange(new[plan.rank], new[plan.rank + 1], dtype=np.int64)
    ok = bool(len(ids) == len(expected) and np.array_equal(ids, expected))
    counts = comm.all_gather((ok, int(plan.n_elem_send.sum()), int(plan.n_elem_recv.sum())))
    total_sent = sum(c[1] for c in counts)
    total_recv = sum(c[2] for c in counts)
    if not all(c[0] for c in counts) or total_sent != total_recv:
        bad = [r for r, c in enumerate(counts) if not c[0]]
        raise ExchangeError(f"element ids do not tile the new partition (ranks {bad}, "
                            f"sent {total_sent}, received {total_recv})")
    return data, ids


# ---------------------------------------------------------------- decisions


@dataclass
class BalanceEvent:
    step: int
    old_imbalance: float
    new_imbalance: float
    elements_moved: int = 0
    bytes_moved: int = 0
    executed: bool = False
    reason: str = ""
    mode: str = "greedy"
    projected_savings_s: float = 0.0
    projected_cost_s: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def elements_moved(old, new) -> int:
    old = validate_offsets(old)
    new = validate_offsets(new)
    k = len(old) - 1
    kept = sum(int(_overlap(old[r], old[r + 1], new[r], new[r + 1])) for r in range(k))
    return int(old[-1]) - kept


def plan_rebalance(weights, old, threshold: float, *, step: int = 0, remaining_steps: float = np.inf,
                   bytes_per_elem: int = 0, bandwidth: float = np.inf, reinit_time: float = 0.0,
                   mode: str = "greedy"):
    """Decide whether and how to rebalance from measured per-step costs.

    ``weights`` are per-element seconds for one time step.  Returns
    ``(new_offsets or None, BalanceEvent)``.  A new partition is adopted
    only if it strictly lowers the imbalance (the exact partitioner is
    tried when the greedy one does not) and if the projected saving over
    the remaining steps pays for moving the data and rebuilding.
    """
    old = validate_offsets(old, len(weights))
    k = len(old) - 1
    before = compute_imbalance(weights, old)
    event = BalanceEvent(step=step, old_imbalance=before, new_imbalance=before, mode=mode)
    if not should_rebalance(before, threshold):
        event.reason = "below threshold"
        return None, event
    new = repartition_sfc(weights, k, mode)
    after = compute_imbalance(weights, new)
    if after >= before and mode != "exact":
        new = repartition_sfc(weights, k, "exact")
        after = compute_imbalance(weights, new)
        event.mode = "exact"
    event.new_imbalance = after
    if after >= before:
        event.reason = "no improvement"
        return None, event
    moved = elements_moved(old, new)
    event.elements_moved = moved
    event.bytes_moved = moved * int(bytes_per_elem)
    old_max = segment_loads(weights, old).max()
    new_max = segment_loads(weights, new).max()
    event.projected_savings_s = float((old_max - new_max) * remaining_steps)
    event.projected_cost_s = float(event.bytes_moved / bandwidth + reinit_time)
    if event.projected_savings_s < event.projected_cost_s:
        event.reason = "not amortized"
        return None, event
    event.executed = True
    event.reason = "rebalanced"
    return new, event
