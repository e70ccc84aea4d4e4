"""Time-slot schedules for coded multicast delivery.

Three schemes produce a `Schedule`:

* `full_superposition` transmits every coded message in a single slot.
* `greedy_partition` packs messages into as few slots as possible while no
  user has to decode more than `decode_limit` messages per slot.  Messages are
  scanned in canonical lexicographic order and ties are broken by that order,
  so the output is deterministic.
* `grouped_baseline` serves one size-`group_size` user group per slot and
  retransmits each message in every group that covers it, splitting the
  message rate evenly across its appearances.

Rates are carried per message per slot in bits/s/Hz; blocklength fractions of
the slots in a schedule sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb, ceil

from .coded import MessageSet, UserSet, user_subsets

BLOCKLENGTH_MODES = ("proportional", "equal")


class ScheduleValidationError(ValueError):
    """A schedule violates an invariant of its scheme."""


@dataclass(frozen=True)
class Slot:
    """One transmission slot: active messages, their rates, and its share of the block.

    `rates[j]` is the rate carried for `messages[j]` within this slot.
    """

    messages: tuple[UserSet, ...]
    rates: tuple[float, ...]
    blocklength_fraction: float

    def __post_init__(self):
        if len(self.messages) != len(self.rates):
            raise ValueError("one rate per active message required")
        if not self.messages:
            raise ValueError("a slot must carry at least one message")

    def decode_count(self, user: int) -> int:
        return sum(1 for msg in self.messages if user in msg)


@dataclass(frozen=True)
class Schedule:
    """A complete delivery schedule.

    `scheme` is one of 'full_superposition', 'greedy' or 'grouped';
    `decode_limit` / `group_size` record the scheme parameter that shaped it.
    """

    scheme: str
    num_users: int
    slots: tuple[Slot, ...]
    decode_limit: int | None = None
    group_size: int | None = None

    @property
    def num_slots(self) -> int:
        return len(self.slots)

    def decode_counts(self) -> list[list[int]]:
        """c_k(i) for every slot i and user k (rows: slots, columns: users)."""
        return [
            [slot.decode_count(k) for k in range(1, self.num_users + 1)]
            for slot in self.slots
        ]


def _uniform_slot(messages, per_message_rate, fraction) -> Slot:
    msgs = tuple(messages)
    return Slot(msgs, (float(per_message_rate),) * len(msgs), float(fraction))


def full_superposition(msgs: MessageSet, per_message_rate: float) -> Schedule:
    """All messages superposed in one slot; every user decodes C(K-1, t) messages."""
    slot = _uniform_slot(msgs.messages, per_message_rate, 1.0)
    return Schedule("full_superposition", msgs.num_users, (slot,))


def min_slots_bound(msgs: MessageSet, decode_limit: int) -> int:
    """Lower bound ceil(C(K-1, t) / s) on the number of slots of any partition."""
    per_user = comb(msgs.num_users - 1, msgs.caching_factor)
    return ceil(per_user / decode_limit)


def greedy_partition(msgs: MessageSet, decode_limit: int, per_message_rate: float) -> Schedule:
    """Greedy slot partition under a per-user decode budget.

    Each pass over a slot targets the users with the fewest messages so far:
    among the unchecked candidates it picks the first (lexicographically) with
    maximum overlap with that user set.  A pick that would push a member past
    `decode_limit` is skipped (left for a later slot); the slot closes once
    every remaining message has been checked.  Each message appears in exactly
    one slot at the full per-message rate.
    """
    if decode_limit < 1:
        raise ValueError(f"decode_limit must be >= 1, got {decode_limit}")
    users = range(1, msgs.num_users + 1)
    remaining = list(msgs.messages)
    slots: list[tuple[UserSet, ...]] = []
    while remaining:
        counts = {k: 0 for k in users}
        chosen: list[UserSet] = []
        candidates = list(remaining)
        while candidates:
            low = min(counts.values())
            needy = {k for k, c in counts.items() if c == low}
            best = max(candidates, key=lambda msg: len(needy.intersection(msg)))
            candidates.remove(best)
            if any(counts[k] + 1 > decode_limit for k in best):
                continue
            chosen.append(best)
            remaining.remove(best)
            for k in best:
                counts[k] += 1
        # canonical order inside the slot: content is a set, and sorted slots
        # make identical content hash identically across schemes
        slots.append(tuple(sorted(chosen)))
    total = sum(len(s) for s in slots)
    built = tuple(
        _uniform_slot(s, per_message_rate, len(s) / total) for s in slots
    )
    return Schedule("greedy", msgs.num_users, built, decode_limit=decode_limit)


def grouped_baseline(msgs: MessageSet, group_size: int, per_message_rate: float) -> Schedule:
    """One slot per size-`group_size` user group, equal blocklengths.

    A slot for group U carries the coded messages for every (t+1)-subset of U.
    A message T therefore appears in C(K-t-1, group_size-t-1) slots and its
    rate is split evenly across those appearances.
    """
    K, t = msgs.num_users, msgs.caching_factor
    if not t + 1 <= group_size <= K:
        raise ValueError(
            f"group_size must lie in [t+1, K] = [{t + 1}, {K}], got {group_size}"
        )
    appearances = comb(K - t - 1, group_size - t - 1)
    rate_per_appearance = per_message_rate / appearances
    groups = user_subsets(K, group_size)
    fraction = 1.0 / len(groups)
    slots = tuple(
        _uniform_slot(
            tuple(msg for msg in msgs.messages if set(msg) <= set(group)),
            rate_per_appearance,
            fraction,
        )
        for group in groups
    )
    return Schedule("grouped", K, slots, group_size=group_size)


def assign_blocklengths(sched: Schedule, mode: str = "proportional") -> Schedule:
    """Reassign slot blocklength fractions.

    'proportional' weights each slot by its message count (full-superposition
    and single-slot schedules are unaffected); 'equal' gives every slot the
    same share.  Grouped schedules always use equal shares, which for them
    coincides with proportional because every group slot is the same size.
    """
    if mode not in BLOCKLENGTH_MODES:
        raise ValueError(f"mode must be one of {BLOCKLENGTH_MODES}, got {mode!r}")
    B = sched.num_slots
    if mode == "equal" or sched.scheme == "grouped":
        fractions = [1.0 / B] * B
    else:
        total = sum(len(slot.messages) for slot in sched.slots)
        fractions = [len(slot.messages) / total for slot in sched.slots]
    slots = tuple(
        replace(slot, blocklength_fraction=f) for slot, f in zip(sched.slots, fractions)
    )
    return replace(sched, slots=slots)


@dataclass(frozen=True)
class ScheduleReport:
    """Summary emitted by `validate_schedule` when all invariants hold."""

    scheme: str
    num_slots: int
    min_slots: int | None
    max_decode_count: int
    message_multiplicity: int
    rate_per_message: float


def _fail(msg: str):
    raise ScheduleValidationError(msg)


def validate_schedule(sched: Schedule, msgs: MessageSet,
                      per_message_rate: float) -> ScheduleReport:
    """Check scheme invariants; raise `ScheduleValidationError` with details on failure.

    Verified for every scheme: fractions sum to one, every coded message is
    covered, and the summed rate per message equals `per_message_rate`.
    Scheme-specific: greedy/full-superposition slots partition the message set
    and respect the decode limit; grouped slots repeat each message a constant
    number of times with equal splits.
    """
    tol = 1e-9
    frac_sum = sum(slot.blocklength_fraction for slot in sched.slots)
    if abs(frac_sum - 1.0) > tol:
        _fail(f"blocklength fractions sum to {frac_sum!r}, expected 1")
    if any(slot.blocklength_fraction <= 0 for slot in sched.slots):
        _fail("every slot needs a positive blocklength fraction")

    seen: dict[UserSet, int] = {}
    rate_sums: dict[UserSet, float] = {}
    for i, slot in enumerate(sched.slots, start=1):
        if len(set(slot.messages)) != len(slot.messages):
            _fail(f"slot {i} repeats a message")
        for msg, rate in zip(slot.messages, slot.rates):
            if rate <= 0:
                _fail(f"slot {i} carries message {msg} at non-positive rate {rate}")
            seen[msg] = seen.get(msg, 0) + 1
            rate_sums[msg] = rate_sums.get(msg, 0.0) + rate

    expected = set(msgs.messages)
    if set(seen) != expected:
        missing = sorted(expected - set(seen))
        extra = sorted(set(seen) - expected)
        _fail(f"message coverage mismatch: missing {missing}, unexpected {extra}")
    for msg, total in rate_sums.items():
        if abs(total - per_message_rate) > tol * max(1.0, per_message_rate):
            _fail(f"message {msg} accumulates rate {total}, expected {per_message_rate}")

    counts = sched.decode_counts()
    max_count = max(max(row) for row in counts)
    multiplicities = set(seen.values())
    bound = None

    if sched.scheme in ("greedy", "full_superposition"):
        if multiplicities != {1}:
            _fail("greedy/full-superposition slots must partition the message set")
        if sched.scheme == "greedy":
            if sched.decode_limit is None:
                _fail("greedy schedule lost its decode_limit")
            if max_count > sched.decode_limit:
                _fail(f"decode count {max_count} exceeds the limit {sched.decode_limit}")
            bound = min_slots_bound(msgs, sched.decode_limit)
            if sched.num_slots < bound:
                _fail(f"{sched.num_slots} slots beats the lower bound {bound}; schedule is corrupt")
    elif sched.scheme == "grouped":
        K, t = msgs.num_users, msgs.caching_factor
        if sched.group_size is None:
            _fail("grouped schedule lost its group_size")
        expected_mult = comb(K - t - 1, sched.group_size - t - 1)
        if multiplicities != {expected_mult}:
            _fail(f"grouped multiplicities {sorted(multiplicities)}, expected {expected_mult}")
        if sched.num_slots != comb(K, sched.group_size):
            _fail(f"{sched.num_slots} slots, expected one per user group = {comb(K, sched.group_size)}")
        expected_count = comb(sched.group_size - 1, t)
        for i, row in enumerate(counts):
            nonzero = sorted({c for c in row if c})
            if nonzero and nonzero != [expected_count]:
                _fail(f"slot {i + 1} has decode counts {nonzero}, expected {expected_count} for served users")
    else:
        _fail(f"unknown scheme {sched.scheme!r}")

    return ScheduleReport(
        scheme=sched.scheme,
        num_slots=sched.num_slots,
        min_slots=bound,
        max_decode_count=max_count,
        message_multiplicity=multiplicities.pop(),
        rate_per_message=per_message_rate,
    )


def format_schedule(sched: Schedule) -> str:
    """Human-readable table: one line per slot with fraction, messages and rates."""
    lines = [f"scheme={sched.scheme}"
             + (f" decode_limit={sched.decode_limit}" if sched.decode_limit else "")
             + (f" group_size={sched.group_size}" if sched.group_size else "")
             + f" slots={sched.num_slots}"]
    for i, slot in enumerate(sched.slots, start=1):
        msgs = " ".join("{" + ",".join(map(str, m)) + "}" for m in slot.messages)
        rates = {f"{r:g}" for r in slot.rates}
        rate_str = rates.pop() if len(rates) == 1 else ",".join(f"{r:g}" for r in slot.rates)
        lines.append(
            f"slot {i}: fraction={slot.blocklength_fraction:.6g} "
            f"rate/message={rate_str} messages: {msgs}"
        )
        counts = [slot.decode_count(k) for k in range(1, sched.num_users + 1)]
        lines.append("        decode counts: " + " ".join(map(str, counts)))
    return "\n".join(lines)
