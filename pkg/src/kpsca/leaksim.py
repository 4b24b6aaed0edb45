"""Clock-cycle schedule and leakage synthesis for the kP accelerator model.

The modelled design processes one key bit of the ladder main loop in a
54-cycle *slot*: 6 field multiplications (11 cycles each: 2 operand
loads overlapped with the preceding multiplication plus 9 partial
products of the 4-segment Karatsuba decomposition), 5 squarings, 3
additions and 11 register operations.  The partial-product unit is
busy in every cycle of every slot.

The exact cycle-by-cycle placement below is this model's canonical
layout -- the real netlist's placement is not public -- and is fixed so
the attack geometry stays reproducible.  Which register an operation
addresses depends on the processed key bit (the two branches of the
ladder swap the 1<->2 register roles); that address dependence is the
leakage channel the horizontal attack exploits.

Leakage model: per-cycle power =

    baseline + addr_weight * sum(address weights of touched registers)
             + data_weight * sum(Hamming weights of moved/produced data)

optionally with per-sample Gaussian noise.  The per-cycle mean of the
synthesized samples equals the modelled cycle power.

Slot layout (cycle: events; register roles written for k_i = 1, the
k_i = 0 slot swaps X1<->X2 and Z1<->Z2):

    cycle  multiplier              add/square unit   register file
    0      load X1 (M1), partial
    1      load Z2 (M1), partial
    2      partial                                   read  Z1  (T <- Z1)
    3      partial                                   write T
    4      partial                                   read  Z2
    5      partial                  S4 = Z2^2
    6      partial                  S5 = S4^2
    7      load X2 (M2), partial
    8      load T  (M2), partial
    9-10   partial (M2)
    11     partial                                   read  X2  (T <- X2)
    12     partial                                   write T
    13     partial                                   read  T
    14     partial                  S2 = T^2
    15     partial                  S3 = S2^2
    16     load M1 (M3), partial
    17     load M2 (M3), partial
    18     partial (M3)             A1 = M1 + M2
    19     partial                  S1 = A1^2
    20     partial                                   write Z1  (Z1 <- S1)
    21-24  partial
    25     load S2 (M6), partial
    26     load S4 (M6), partial
    27-33  partial (M6)
    34     load x  (M4), partial
    35     load Z1 (M4), partial
    36     partial (M4)                              read  bus (M6 result)
    37     partial                                   write Z2  (Z2 <- M6)
    38-42  partial
    43     load b  (M5), partial
    44     load S5 (M5), partial
    45     partial (M5)             A2 = M4 + M3
    46     partial                                   write X1  (X1 <- A2)
    47-52  partial
    53     partial                  A3 = S3 + M5     write X2  (X2 <- A3)

with M1 = X1*Z2, M2 = X2*T (T holding the old Z1), M3 = M1*M2,
M4 = x*Z1', M5 = b*Z2^4, M6 = T^2*Z2^2 (T holding the old X2).  The
first multiplication's operands are physically latched during the last
two cycles of the previous slot; they are attributed to cycles 0-1 of
the consuming slot so every slot's event stream is a pure function of
its own key bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import gf2m
from .curve import (
    LadderTranscript,
    PHASE_FINALIZE,
    PHASE_INIT,
    PHASE_PRELOOP,
    Scalar,
)


class OpKind(enum.Enum):
    MUL_LOAD = "MUL_LOAD"
    MUL_PARTIAL = "MUL_PARTIAL"
    SQUARE = "SQUARE"
    ADD = "ADD"
    REG_READ = "REG_READ"
    REG_WRITE = "REG_WRITE"
    IDLE = "IDLE"


class Reg(enum.Enum):
    X1 = "X1"
    Z1 = "Z1"
    X2 = "X2"
    Z2 = "Z2"
    T = "T"
    BUS = "BUS"


# leakage per addressed register: Hamming weight of its address code.
# X2's code differs in weight from X1's; the Z pair and T are balanced,
# the bus and parameter latches contribute nothing.
REGISTER_ADDR_WEIGHT = {
    Reg.X1: 1.0,
    Reg.Z1: 1.0,
    Reg.X2: 2.0,
    Reg.Z2: 1.0,
    Reg.T: 1.0,
    Reg.BUS: 0.0,
    None: 0.0,
}

SLOT_CYCLES = 54
INIT_CYCLES = 8

# bump when the canonical placement below changes; schedules and trace
# sidecars carry it so recorded fixtures stay comparable
SLOT_LAYOUT_VERSION = 1


def epilogue_cycles(m: int) -> int:
    """Cycles for the affine back-conversion: one EEA inversion, ~2 per degree."""
    return max(2 * m - 2, 8)


class ScheduleError(ValueError):
    """Malformed transcript or internally inconsistent slot algebra."""


@dataclass(frozen=True)
class ScheduleEvent:
    cycle_index: int
    op_kind: OpKind
    register_id: Optional[Reg] = None
    bit_context: Optional[int] = None  # ground-truth bookkeeping only
    data_hw: int = 0  # Hamming weight of the value moved/produced this cycle


# (cycle, kind, role, value key); roles Xa/Za = pair updated by the
# addition part, Xb/Zb = pair being doubled (Xa = X1 when k_i = 1)
_SLOT_TABLE = (
    (0, OpKind.MUL_LOAD, "Xa", "Xa"),
    (1, OpKind.MUL_LOAD, "Zb", "Zb"),
    (2, OpKind.REG_READ, "Za", "Za"),
    (3, OpKind.REG_WRITE, "T", "Za"),
    (4, OpKind.REG_READ, "Zb", "Zb"),
    (5, OpKind.SQUARE, "BUS", "S4"),
    (6, OpKind.SQUARE, "BUS", "S5"),
    (7, OpKind.MUL_LOAD, "Xb", "Xb"),
    (8, OpKind.MUL_LOAD, "T", "Za"),
    (11, OpKind.REG_READ, "Xb", "Xb"),
    (12, OpKind.REG_WRITE, "T", "Xb"),
    (13, OpKind.REG_READ, "T", "Xb"),
    (14, OpKind.SQUARE, "BUS", "S2"),
    (15, OpKind.SQUARE, "BUS", "S3"),
    (16, OpKind.MUL_LOAD, "BUS", "M1"),
    (17, OpKind.MUL_LOAD, "BUS", "M2"),
    (18, OpKind.ADD, "BUS", "A1"),
    (19, OpKind.SQUARE, "BUS", "S1"),
    (20, OpKind.REG_WRITE, "Za", "S1"),
    (25, OpKind.MUL_LOAD, "BUS", "S2"),
    (26, OpKind.MUL_LOAD, "BUS", "S4"),
    (34, OpKind.MUL_LOAD, "BUS", "x"),
    (35, OpKind.MUL_LOAD, "Za", "S1"),
    (36, OpKind.REG_READ, "BUS", "M6"),
    (37, OpKind.REG_WRITE, "Zb", "M6"),
    (43, OpKind.MUL_LOAD, "BUS", "b"),
    (44, OpKind.MUL_LOAD, "BUS", "S5"),
    (45, OpKind.ADD, "BUS", "A2"),
    (46, OpKind.REG_WRITE, "Xa", "A2"),
    (53, OpKind.ADD, "BUS", "A3"),
    (53, OpKind.REG_WRITE, "Xb", "A3"),
)

# multiplication occupying each 9-cycle partial-product window, in order
_MUL_WINDOWS = ("M1", "M2", "M3", "M6", "M4", "M5")

_ROLE_BY_BIT = {
    1: {"Xa": Reg.X1, "Za": Reg.Z1, "Xb": Reg.X2, "Zb": Reg.Z2, "T": Reg.T, "BUS": Reg.BUS},
    0: {"Xa": Reg.X2, "Za": Reg.Z2, "Xb": Reg.X1, "Zb": Reg.Z1, "T": Reg.T, "BUS": Reg.BUS},
}


def _slot_values(state, bit: int, x, b):
    """All intermediate values of one slot plus the 9 partials per mul."""
    if bit:
        xa, za, xb, zb = state.X1, state.Z1, state.X2, state.Z2
    else:
        xa, za, xb, zb = state.X2, state.Z2, state.X1, state.Z1
    m1, p_m1 = gf2m.karatsuba4_partials(xa, zb)
    m2, p_m2 = gf2m.karatsuba4_partials(xb, za)
    a1 = gf2m.add(m1, m2)
    s1 = gf2m.square(a1)
    m3, p_m3 = gf2m.karatsuba4_partials(m1, m2)
    m4, p_m4 = gf2m.karatsuba4_partials(x, s1)
    a2 = gf2m.add(m4, m3)
    s2 = gf2m.square(xb)
    s3 = gf2m.square(s2)
    s4 = gf2m.square(zb)
    s5 = gf2m.square(s4)
    m5, p_m5 = gf2m.karatsuba4_partials(b, s5)
    a3 = gf2m.add(s3, m5)
    m6, p_m6 = gf2m.karatsuba4_partials(s2, s4)
    values = {
        "Xa": xa, "Za": za, "Xb": xb, "Zb": zb, "x": x, "b": b,
        "M1": m1, "M2": m2, "M3": m3, "M4": m4, "M5": m5, "M6": m6,
        "A1": a1, "A2": a2, "A3": a3,
        "S1": s1, "S2": s2, "S3": s3, "S4": s4, "S5": s5,
    }
    partials = {"M1": p_m1, "M2": p_m2, "M3": p_m3, "M4": p_m4, "M5": p_m5, "M6": p_m6}
    return values, partials


def _hw(v) -> int:
    return v.value.bit_count() if hasattr(v, "value") else int(v).bit_count()


def _slot_events(base: int, bit: int, values, partials) -> list[ScheduleEvent]:
    regmap = _ROLE_BY_BIT[bit]
    events = []
    for c in range(SLOT_CYCLES):
        p = partials[_MUL_WINDOWS[c // 9]][c % 9]
        events.append(ScheduleEvent(base + c, OpKind.MUL_PARTIAL, None, bit, _hw(p)))
    for c, kind, role, key in _SLOT_TABLE:
        events.append(
            ScheduleEvent(base + c, kind, regmap[role], bit, _hw(values[key]))
        )
    return events


@dataclass
class Schedule:
    """Cycle-accurate event list plus the geometry the attack needs."""

    events: list[ScheduleEvent]
    m: int
    scalar: Scalar
    init_cycles: int
    has_preloop: bool
    num_slots: int
    slot_len: int
    epilogue_len: int
    layout_version: int = SLOT_LAYOUT_VERSION

    @property
    def cycle0(self) -> int:
        """Cycle index where the first main-loop slot begins."""
        return self.init_cycles + (self.slot_len if self.has_preloop else 0)

    @property
    def total_cycles(self) -> int:
        return self.cycle0 + self.num_slots * self.slot_len + self.epilogue_len

    @property
    def main_cycles(self) -> int:
        return self.num_slots * self.slot_len

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]


def build_schedule(transcript: LadderTranscript) -> Schedule:
    """Expand a ladder transcript into the clock-cycle event schedule."""
    if transcript.result is None or not transcript.entries:
        raise ScheduleError("transcript is incomplete")
    entries = transcript.entries
    if entries[0].phase != PHASE_INIT or entries[-1].phase != PHASE_FINALIZE:
        raise ScheduleError("transcript must start with init and end with finalize")

    params = transcript.params
    x, b = transcript.point.x, params.b
    spec = params.field
    events: list[ScheduleEvent] = []

    # initialisation block: load x and 1, derive x^2 and x^4 + b
    init_state = entries[0].state
    x2 = init_state.Z2
    x4b = init_state.X2
    x4 = gf2m.add(x4b, b)
    one = spec.one()
    events.extend([
        ScheduleEvent(0, OpKind.REG_WRITE, Reg.X1, None, _hw(x)),
        ScheduleEvent(1, OpKind.REG_WRITE, Reg.Z1, None, _hw(one)),
        ScheduleEvent(2, OpKind.SQUARE, Reg.BUS, None, _hw(x2)),
        ScheduleEvent(3, OpKind.REG_WRITE, Reg.Z2, None, _hw(x2)),
        ScheduleEvent(4, OpKind.SQUARE, Reg.BUS, None, _hw(x4)),
        ScheduleEvent(5, OpKind.ADD, Reg.BUS, None, _hw(x4b)),
        ScheduleEvent(6, OpKind.REG_WRITE, Reg.X2, None, _hw(x4b)),
        ScheduleEvent(7, OpKind.IDLE, None, None, 0),
    ])

    # pre-loop and main-loop slots
    slots = transcript.slot_entries
    base = INIT_CYCLES
    for i, entry in enumerate(slots):
        values, partials = _slot_values(entry.state, entry.bit, x, b)
        after = entries[i + 2].state  # next slot's state, or the finalize state
        regmap = _ROLE_BY_BIT[entry.bit]
        post = {
            regmap["Za"]: values["S1"], regmap["Xa"]: values["A2"],
            regmap["Xb"]: values["A3"], regmap["Zb"]: values["M6"],
        }
        if (
            post[Reg.X1] != after.X1 or post[Reg.Z1] != after.Z1
            or post[Reg.X2] != after.X2 or post[Reg.Z2] != after.Z2
        ):
            raise ScheduleError(f"slot {i} algebra does not reproduce the transcript state")
        events.extend(_slot_events(base, entry.bit, values, partials))
        base += SLOT_CYCLES

    # epilogue: fetch the four registers, run the inversion, emit the result
    final = entries[-1].state
    epi = epilogue_cycles(spec.m)
    result = transcript.result
    rx = 0 if result.infinity else result.x.value
    ry = 0 if result.infinity else result.y.value
    events.append(ScheduleEvent(base + 0, OpKind.REG_READ, Reg.X1, None, _hw(final.X1)))
    events.append(ScheduleEvent(base + 1, OpKind.REG_READ, Reg.Z1, None, _hw(final.Z1)))
    events.append(ScheduleEvent(base + 2, OpKind.REG_READ, Reg.X2, None, _hw(final.X2)))
    events.append(ScheduleEvent(base + 3, OpKind.REG_READ, Reg.Z2, None, _hw(final.Z2)))
    for c in range(4, epi - 2):
        events.append(ScheduleEvent(base + c, OpKind.IDLE, None, None, 0))
    events.append(ScheduleEvent(base + epi - 2, OpKind.REG_WRITE, Reg.BUS, None, rx.bit_count()))
    events.append(ScheduleEvent(base + epi - 1, OpKind.REG_WRITE, Reg.BUS, None, ry.bit_count()))

    has_preloop = bool(slots) and slots[0].phase == PHASE_PRELOOP
    num_main = len(slots) - (1 if has_preloop else 0)
    return Schedule(
        events=events,
        m=spec.m,
        scalar=transcript.scalar,
        init_cycles=INIT_CYCLES,
        has_preloop=has_preloop,
        num_slots=num_main,
        slot_len=SLOT_CYCLES,
        epilogue_len=epi,
    )


def slot_addr_profile(bit: int) -> np.ndarray:
    """Address-weight contribution per cycle of a slot processing `bit`."""
    prof = np.zeros(SLOT_CYCLES)
    regmap = _ROLE_BY_BIT[bit]
    for c, kind, role, _key in _SLOT_TABLE:
        prof[c] += REGISTER_ADDR_WEIGHT[regmap[role]]
    return prof


def differing_cycles() -> tuple[int, ...]:
    """Slot-relative cycle indices whose address leakage depends on the key bit."""
    d = slot_addr_profile(1) - slot_addr_profile(0)
    return tuple(int(i) for i in np.nonzero(d)[0])


@dataclass(frozen=True)
class LeakModel:
    """Linear power model: baseline + address term + data term + noise."""

    addr_weight: float = 1.0
    data_weight: float = 0.0
    baseline: float = 10.0
    noise_sigma: float = 0.0
    samples_per_cycle: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.samples_per_cycle < 1:
            raise ValueError("samples_per_cycle must be >= 1")


def cycle_power(schedule: Schedule, model: LeakModel) -> np.ndarray:
    """Noiseless per-cycle power values for the whole execution."""
    power = np.full(schedule.total_cycles, model.baseline, dtype=np.float64)
    addr_w = model.addr_weight
    data_w = model.data_weight
    for ev in schedule.events:
        contrib = addr_w * REGISTER_ADDR_WEIGHT[ev.register_id]
        if data_w:
            contrib += data_w * ev.data_hw
        if contrib:
            power[ev.cycle_index] += contrib
    return power


def synthesize_trace(schedule: Schedule, model: LeakModel, clock_hz: float = 100e6):
    """Render the schedule into a sampled trace.

    Deterministic for a given rng_seed.  Each cycle contributes
    samples_per_cycle samples whose mean is the modelled cycle power.
    """
    from .traces import Trace  # local import: traces depends on leaksim types

    power = cycle_power(schedule, model)
    samples = np.repeat(power, model.samples_per_cycle)
    if model.noise_sigma > 0:
        rng = np.random.default_rng(model.rng_seed)
        samples = samples + rng.normal(0.0, model.noise_sigma, samples.shape[0])
    return Trace(
        samples=samples,
        samples_per_cycle=model.samples_per_cycle,
        cycle0_offset=schedule.cycle0 * model.samples_per_cycle,
        clock_hz=clock_hz,
        ground_truth=schedule.scalar,
    )


@dataclass(frozen=True)
class ScheduleStats:
    total_cycles: int
    init_cycles: int
    preloop_cycles: int
    main_cycles: int
    epilogue_cycles: int
    num_slots: int
    slot_len: int
    per_slot_ops: dict
    execution_time_s: float
    clock_hz: float


def schedule_stats(schedule: Schedule, clock_hz: float = 100e6) -> ScheduleStats:
    """Summarise the schedule: cycle counts, per-slot op counts, implied time."""
    counts_by_slot = []
    c0 = schedule.init_cycles
    n_slots_total = (1 if schedule.has_preloop else 0) + schedule.num_slots
    for s in range(n_slots_total):
        lo = c0 + s * schedule.slot_len
        hi = lo + schedule.slot_len
        kinds = {"MUL": 0, "SQUARE": 0, "ADD": 0, "REG": 0, "PARTIAL": 0}
        for ev in schedule.events:
            if lo <= ev.cycle_index < hi:
                if ev.op_kind == OpKind.MUL_LOAD:
                    kinds["MUL"] += 1
                elif ev.op_kind == OpKind.MUL_PARTIAL:
                    kinds["PARTIAL"] += 1
                elif ev.op_kind == OpKind.SQUARE:
                    kinds["SQUARE"] += 1
                elif ev.op_kind == OpKind.ADD:
                    kinds["ADD"] += 1
                elif ev.op_kind in (OpKind.REG_READ, OpKind.REG_WRITE):
                    kinds["REG"] += 1
        kinds["MUL"] //= 2  # two loads per multiplication
        counts_by_slot.append(kinds)
    if counts_by_slot:
        first = counts_by_slot[0]
        if any(c != first for c in counts_by_slot):
            raise ScheduleError("slot op counts are not uniform")
        per_slot = dict(first)
    else:
        per_slot = {}
    total = schedule.total_cycles
    return ScheduleStats(
        total_cycles=total,
        init_cycles=schedule.init_cycles,
        preloop_cycles=schedule.slot_len if schedule.has_preloop else 0,
        main_cycles=schedule.main_cycles,
        epilogue_cycles=schedule.epilogue_len,
        num_slots=schedule.num_slots,
        slot_len=schedule.slot_len,
        per_slot_ops=per_slot,
        execution_time_s=total / clock_hz,
        clock_hz=clock_hz,
    )
