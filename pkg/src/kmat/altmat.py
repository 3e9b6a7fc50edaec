"""Symbolic execution of the ALTMAT schedule with exact message accounting.

An order-j phase occupies one slot. It carries ``K-j+1`` order-j symbols and
``j+1`` order-(K-j) symbols and leaves behind ``K-j`` overheard equations of
order ``j+1`` and ``j`` of order ``K-j+1``. The engine tracks one user
permutation; the K circular replications scale every count by ``K`` and leave
the DoF unchanged, so they are reported as a multiplier.
"""
from __future__ import annotations

import csv
import enum
import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TextIO


class Variant(str, enum.Enum):
    GENERAL = "general"
    K3_PAPER = "k3-paper"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        norm = str(value).strip().lower().replace("_", "-")
        for v in cls:
            if v.value == norm:
                return v
        raise ValueError(f"unknown schedule variant {value!r}; expected one of {[v.value for v in cls]}")


class StockShortfall(RuntimeError):
    """A phase asked for more messages of some order than are pending."""

    def __init__(self, order: int, needed: int, available: int, where: str = ""):
        self.order = order
        self.shortfall = needed - available
        super().__init__(
            f"{where}order-{order} stock short by {self.shortfall} (need {needed}, have {available})"
        )


class TelescopingError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PhaseSpec:
    K: int
    j: int

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if not 1 <= self.j <= self.K // 2:
            raise ValueError(f"phase order j must satisfy 1 <= j <= K//2, got j={self.j}, K={self.K}")

    def inputs(self) -> dict[int, int]:
        """Messages taken as input, keyed by order."""
        c: Counter = Counter()
        c[self.j] += self.K - self.j + 1
        c[self.K - self.j] += self.j + 1
        return dict(c)

    def outputs(self) -> dict[int, int]:
        """Overheard equations created, keyed by order."""
        c: Counter = Counter()
        c[self.j + 1] += self.K - self.j
        c[self.K - self.j + 1] += self.j
        return dict(c)


@dataclass
class MessageInventory:
    """Pending messages of orders ``2..K`` plus the order-1 and slot tallies."""

    K: int
    pending: dict[int, int] = field(default_factory=dict)
    order1_consumed: int = 0
    slots: int = 0

    def __post_init__(self):
        for order in range(2, self.K + 1):
            self.pending.setdefault(order, 0)

    def copy(self) -> "MessageInventory":
        return MessageInventory(self.K, dict(self.pending), self.order1_consumed, self.slots)

    @property
    def total_pending(self) -> int:
        return sum(self.pending.values())


def _consume(inv: MessageInventory, consumed: dict[int, int], where: str = "") -> None:
    for order, count in consumed.items():
        if order == 1:
            inv.order1_consumed += count
            continue
        have = inv.pending[order]
        if have < count:
            raise StockShortfall(order, count, have, where)
        inv.pending[order] = have - count


def _phase_flows(spec: PhaseSpec, substitute_with_order1: bool) -> tuple[dict[int, int], dict[int, int]]:
    inputs = spec.inputs()
    if substitute_with_order1:
        inputs = {1: sum(inputs.values())}
    return inputs, spec.outputs()


def apply_order_phase(inv: MessageInventory, spec: PhaseSpec, substitute_with_order1: bool = False) -> MessageInventory:
    """Run one order-j phase (one slot) and return the updated inventory.

    With ``substitute_with_order1`` every input is drawn from fresh order-1
    symbols, as in the initialization step.

    Raises
    ------
    StockShortfall
        If a higher-order input is not pending.
    """
    if spec.K != inv.K:
        raise ValueError(f"phase K={spec.K} does not match inventory K={inv.K}")
    out = inv.copy()
    consumed, generated = _phase_flows(spec, substitute_with_order1)
    _consume(out, consumed, f"order-{spec.j} phase: ")
    for order, count in generated.items():
        out.pending[order] += count
    out.slots += 1
    return out


def broadcast_order_k(inv: MessageInventory, count: int) -> MessageInventory:
    """Broadcast ``count`` order-K messages, one slot each."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    out = inv.copy()
    _consume(out, {inv.K: count}, "broadcast: ")
    out.slots += count
    return out


@dataclass(frozen=True)
class TraceRecord:
    step: int
    kind: str  # "phase", "pair", "broadcast" or "termination"
    j: int
    slots: int
    consumed: dict[int, int]
    generated: dict[int, int]
    substituted: bool = False


@dataclass
class ScheduleTrace:
    K: int
    n: int
    variant: Variant
    records: list[TraceRecord]
    final: MessageInventory
    multiplier: int

    @property
    def slots(self) -> int:
        return self.final.slots

    @property
    def order1_delivered(self) -> int:
        return self.final.order1_consumed

    @property
    def dof(self) -> Fraction:
        return Fraction(self.order1_delivered, self.slots)

    def step_records(self, *steps: int) -> list[TraceRecord]:
        return [r for r in self.records if r.step in steps]

    def totals(self, records=None) -> tuple[Counter, Counter, int]:
        """(consumed per order, generated per order, slots) summed over ``records``."""
        cons, gen, slots = Counter(), Counter(), 0
        for r in self.records if records is None else records:
            cons.update(r.consumed)
            gen.update(r.generated)
            slots += r.slots
        return cons, gen, slots

    def write_csv(self, fh: TextIO) -> None:
        """One row per (record, flow) pair; a record's slots sit on its first row."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "kind", "j", "slots", "consumed_order", "consumed_count",
                         "generated_order", "generated_count"])
        for r in self.records:
            cons = sorted(r.consumed.items())
            gen = sorted(r.generated.items())
            for i, (c, g) in enumerate(itertools.zip_longest(cons, gen, fillvalue=("", ""))):
                writer.writerow([r.step, r.kind, r.j, r.slots if i == 0 else 0, *c, *g])


def _init_phases(K: int) -> list[int]:
    # even K also seeds the order-K/2 stock here; see run_altmat
    return list(range(1, (K - 1) // 2 + 1)) if K % 2 else list(range(1, K // 2 + 1))


def _iteration_phases(K: int, step: int) -> list[int]:
    if K % 2:
        return list(range(1, (K - 1) // 2 + 1))
    phases = list(range(1, K // 2))
    if step % 2 == 0:
        phases.append(K // 2)
    return phases


class _Runner:
    def __init__(self, K: int):
        self.inv = MessageInventory(K)
        self.records: list[TraceRecord] = []
        self.budget: dict[int, int] | None = None

    def open_step(self):
        # inputs of a main step must come from messages generated before it
        self.budget = dict(self.inv.pending)

    def _charge(self, consumed):
        if self.budget is None:
            return
        for order, count in consumed.items():
            if order == 1:
                continue
            if self.budget[order] < count:
                raise StockShortfall(order, count, self.budget[order], "previous-step stock: ")
            self.budget[order] -= count

    def phase(self, step, j, substitute=False):
        spec = PhaseSpec(self.inv.K, j)
        consumed, generated = _phase_flows(spec, substitute)
        self._charge(consumed)
        self.inv = apply_order_phase(self.inv, spec, substitute)
        self.records.append(TraceRecord(step, "phase", j, 1, consumed, generated, substitute))

    def pair(self, step):
        # two users, two fresh symbols each; both overheard interferences become order-2
        consumed, generated = {1: 4}, {2: 2}
        _consume(self.inv, consumed)
        self.inv.pending[2] += 2
        self.inv.slots += 1
        self.records.append(TraceRecord(step, "pair", 1, 1, consumed, generated))

    def broadcast(self, step, count):
        if count == 0:
            return
        K = self.inv.K
        self._charge({K: count})
        self.inv = broadcast_order_k(self.inv, count)
        self.records.append(TraceRecord(step, "broadcast", K, count, {K: count}, {}))

    def terminate(self, step):
        self.budget = None
        consumed = {o: c for o, c in sorted(self.inv.pending.items()) if c}
        total = sum(consumed.values())
        _consume(self.inv, consumed, "termination: ")
        self.inv.slots += total
        self.records.append(TraceRecord(step, "termination", 0, total, consumed, {}))


def run_altmat(K: int, n: int, schedule_variant=Variant.GENERAL) -> ScheduleTrace:
    """Execute initialization, ``n`` main iterations and termination.

    GENERAL (one user permutation):

    * step 0: order-j phases ``j = 1..(K-1)/2`` with every input replaced by
      fresh order-1 symbols (for even K: ``j = 1..K/2``, so the order-K/2
      stock exists before the first main step), then the order-K messages
      just created are broadcast.
    * steps 1..n: the order-K messages left by the previous step are
      broadcast, then phases ``j = 1..(K-1)/2`` run (even K: ``j < K/2``
      every step plus the order-K/2 phase on even steps). Inputs must have
      been pending at the start of the step.
    * step n+1: every pending message is broadcast in its own slot.

    K3_PAPER reproduces the three-user walkthrough with all three circular
    permutations included: three two-user slots, then per iteration three
    order-1 phases and three order-3 broadcasts, then six order-2 broadcasts.
    """
    variant = Variant.parse(schedule_variant)
    if int(K) != K or K < 2:
        raise ValueError(f"K must be an integer >= 2, got {K}")
    if int(n) != n or n < 0:
        raise ValueError(f"n must be a nonnegative integer, got {n}")
    run = _Runner(K)
    if variant is Variant.K3_PAPER:
        if K != 3:
            raise ValueError("the k3-paper variant exists only for K=3")
        for _ in range(3):
            run.pair(0)
        for step in range(1, n + 1):
            run.open_step()
            for _ in range(3):
                run.phase(step, 1)
            run.budget = None
            run.broadcast(step, run.inv.pending[K])
        multiplier = 1
    else:
        for j in _init_phases(K):
            run.phase(0, j, substitute=True)
        run.broadcast(0, run.inv.pending[K])
        for step in range(1, n + 1):
            run.open_step()
            run.broadcast(step, run.budget[K])
            for j in _iteration_phases(K, step):
                run.phase(step, j)
        multiplier = K
    run.terminate(n + 1)
    return ScheduleTrace(K, n, variant, run.records, run.inv, multiplier)


def finite_n_dof(K: int, n: int, schedule_variant=Variant.GENERAL) -> Fraction:
    """Order-1 symbols delivered per slot after ``n`` main iterations."""
    return run_altmat(K, n, schedule_variant).dof


@dataclass(frozen=True)
class Lemma1Row:
    order: int
    generated: int
    consumed: int

    @property
    def balanced(self) -> bool:
        return self.generated == self.consumed


@dataclass(frozen=True)
class Lemma1Report:
    K: int
    variant: Variant
    cycle_steps: tuple[int, ...]
    rows: tuple[Lemma1Row, ...]
    multiplier: int

    @property
    def balanced(self) -> bool:
        return all(r.balanced for r in self.rows)


def check_lemma1(K: int, schedule_variant=Variant.GENERAL) -> Lemma1Report:
    """Generated vs consumed counts for every order ``1 < j < K`` over a steady cycle.

    The cycle is one main iteration for odd K and two for even K (the
    order-K/2 phase runs every second iteration).
    """
    variant = Variant.parse(schedule_variant)
    if K < 3:
        raise ValueError(f"intermediate orders need K >= 3, got {K}")
    cycle = (1,) if K % 2 or variant is Variant.K3_PAPER else (1, 2)
    trace = run_altmat(K, len(cycle), variant)
    cons, gen, _ = trace.totals(trace.step_records(*cycle))
    rows = tuple(Lemma1Row(o, gen[o], cons[o]) for o in range(2, K))
    return Lemma1Report(K, variant, cycle, rows, trace.multiplier)


def _phase_identity(K: int, j: int) -> dict[int, Fraction]:
    """``(j+1)x_{K-j} + (K-j+1)x_j - (K-j)x_{j+1} - j x_{K-j+1} - 1`` with ``x_m = 1/DoF_m``.

    Key 0 holds the constant term.
    """
    form: dict[int, Fraction] = defaultdict(Fraction)
    form[K - j] += j + 1
    form[j] += K - j + 1
    form[j + 1] -= K - j
    form[K - j + 1] -= j
    form[0] -= 1
    return form


def telescoped_identity(K: int) -> dict[int, Fraction]:
    """Sum of the phase identities; even K adds half of the order-K/2 one."""
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    total: dict[int, Fraction] = defaultdict(Fraction)
    weights = {j: Fraction(1) for j in range(1, (K - 1) // 2 + 1)} if K % 2 else \
        {**{j: Fraction(1) for j in range(1, K // 2)}, K // 2: Fraction(1, 2)}
    for j, wgt in weights.items():
        for m, c in _phase_identity(K, j).items():
            total[m] += wgt * c
    return {m: c for m, c in sorted(total.items()) if c != 0}


def telescoped_dof1(K: int) -> Fraction:
    """Order-1 DoF from the telescoped identities, using ``DoF_K = 1``.

    Every intermediate ``1/DoF_j`` must cancel, leaving
    ``K/DoF_1 = 1/DoF_K + (K-1)/2``.
    """
    form = telescoped_identity(K)
    expected = {0: -Fraction(K - 1, 2), 1: Fraction(K), K: Fraction(-1)}
    if form != expected:
        residual = {m: form.get(m, 0) - expected.get(m, 0) for m in set(form) | set(expected)}
        residual = {m: c for m, c in residual.items() if c}
        raise TelescopingError(f"identities do not telescope for K={K}: residual {residual}")
    # K x_1 - x_K - (K-1)/2 = 0 with x_K = 1
    x1 = (1 + Fraction(K - 1, 2)) / K
    return 1 / x1
