"""Deterministic multi-clock simulation of an elaborated design.

The simulator executes a host programming script against the structural
model: configuration-clock edges run the write master, address decoder,
and per-slave config blocks; each slave's own clock samples its settings
while the script marks it busy.  All state updates are two-phase (next
values computed from pre-edge state, then committed), simultaneous edges
resolve by clock-domain index, and there is no internal randomness, so a
given (model, script) pair always produces the same trace.

Distributed designs honor the ready handshake: a write is only accepted
while the addressed slave's registered ready output is high, and ready
is the registered inverse of the slave's busy indication synchronized
into the configuration domain.  Centralized designs have no handshake;
writes to the central memory are accepted unconditionally.

Fault mode disables the ready gating (master and slaves accept writes
regardless of ready) and models the resulting hazard: a write landing
while the slave is busy is visible as a half-updated word for one
configuration period.  This exists to prove the coherence checker can
detect the hazard the handshake prevents.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .bus import DEFAULT_TIMEOUT_CYCLES
from .elaborate import DesignModel, global_word_map
from .errors import SimError, SpecError
from .spec import (
    RegisterMapSpec,
    SettingSpec,
    address_map,
    _parse_int,
    _parse_list,
    _parse_obj,
    _parse_setting,
    _parse_str,
    _reject_unknown,
)

WRITE_ISSUED = "write_issued"
WRITE_ACCEPTED = "write_accepted"
CONFIG_CHANGED = "config_changed"
VALUE_SAMPLED = "value_sampled"
READY_CHANGED = "ready_changed"
SWAP_PERFORMED = "swap_performed"
VIOLATION = "violation"

TRACE_COLUMNS = ("time_ps", "kind", "slave", "addr", "data")


@dataclass(frozen=True, slots=True)
class TraceEvent:
    time_ps: int
    kind: str
    slave: str = ""
    addr: int | None = None
    data: int | None = None
    detail: str = ""


@dataclass(frozen=True)
class ScriptWrite:
    at_cycle: int
    addr: int
    data: int


@dataclass(frozen=True)
class BusyWindow:
    slave: str
    start_ps: int
    end_ps: int


@dataclass(frozen=True)
class SwapRequest:
    at_ps: int
    slave: str
    registers: tuple[SettingSpec, ...]


@dataclass(frozen=True)
class ProgramScript:
    writes: tuple[ScriptWrite, ...] = ()
    busy_windows: tuple[BusyWindow, ...] = ()
    swaps: tuple[SwapRequest, ...] = ()


@dataclass(frozen=True)
class CoherenceViolation:
    kind: str  # "busy_write" or "torn_word"
    time_ps: int
    slave: str
    addr: int | None
    data: int | None


def parse_script(text: str) -> ProgramScript:
    """Parse a programming-script JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"syntax error: {exc.msg} (line {exc.lineno})") from None
    doc = _parse_obj(doc, "$")
    _reject_unknown(doc, ("writes", "busy_windows", "swaps"), "$")

    writes = []
    for i, obj in enumerate(_parse_list(doc.get("writes", []), "$.writes")):
        path = f"$.writes[{i}]"
        obj = _parse_obj(obj, path)
        _reject_unknown(obj, ("at_cycle", "addr", "data"), path)
        writes.append(
            ScriptWrite(
                at_cycle=_parse_int(obj.get("at_cycle", 0), f"{path}.at_cycle"),
                addr=_parse_int(obj.get("addr", 0), f"{path}.addr"),
                data=_parse_int(obj.get("data", 0), f"{path}.data"),
            )
        )

    windows = []
    for i, obj in enumerate(_parse_list(doc.get("busy_windows", []), "$.busy_windows")):
        path = f"$.busy_windows[{i}]"
        obj = _parse_obj(obj, path)
        _reject_unknown(obj, ("slave", "start_ps", "end_ps"), path)
        windows.append(
            BusyWindow(
                slave=_parse_str(obj.get("slave", ""), f"{path}.slave"),
                start_ps=_parse_int(obj.get("start_ps", 0), f"{path}.start_ps"),
                end_ps=_parse_int(obj.get("end_ps", 0), f"{path}.end_ps"),
            )
        )

    swaps = []
    for i, obj in enumerate(_parse_list(doc.get("swaps", []), "$.swaps")):
        path = f"$.swaps[{i}]"
        obj = _parse_obj(obj, path)
        _reject_unknown(obj, ("at_ps", "slave", "new_spec_fragment"), path)
        frag = _parse_obj(obj.get("new_spec_fragment", {}), f"{path}.new_spec_fragment")
        _reject_unknown(frag, ("registers",), f"{path}.new_spec_fragment")
        regs = tuple(
            _parse_setting(r, f"{path}.new_spec_fragment.registers[{j}]")
            for j, r in enumerate(
                _parse_list(frag.get("registers", []), f"{path}.new_spec_fragment.registers")
            )
        )
        swaps.append(
            SwapRequest(
                at_ps=_parse_int(obj.get("at_ps", 0), f"{path}.at_ps"),
                slave=_parse_str(obj.get("slave", ""), f"{path}.slave"),
                registers=regs,
            )
        )

    for w in writes:
        if w.at_cycle < 0:
            raise SpecError("write times must be non-negative", "$.writes")
    for w in windows:
        if w.start_ps < 0 or w.end_ps < w.start_ps:
            raise SpecError("busy windows must be non-negative and ordered", "$.busy_windows")
    for s in swaps:
        if s.at_ps < 0:
            raise SpecError("swap times must be non-negative", "$.swaps")

    return ProgramScript(tuple(writes), tuple(windows), tuple(swaps))


def load_script(path) -> ProgramScript:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_script(fh.read())


class Simulation:
    """Mutable simulation state for one elaborated design."""

    def __init__(
        self,
        model: DesignModel,
        spec: RegisterMapSpec,
        *,
        fault_mode: bool = False,
        timeout_cycles: int = DEFAULT_TIMEOUT_CYCLES,
    ):
        if not spec.clock_domains:
            raise SimError("cannot schedule a design with no clock domains")
        self.model = model
        self.spec = spec
        self.fault_mode = fault_mode
        self.timeout_cycles = timeout_cycles
        self.distributed = model.topology == "distributed"
        self.sync_length = model.sync_length

        self.domains = [(d.name, d.period_ps) for d in spec.clock_domains]
        self._periods = [d.period_ps for d in spec.clock_domains]
        self._next_edge = [d.period_ps for d in spec.clock_domains]
        self.time_ps = 0
        self.cycle = 0  # index of the next configuration-clock edge

        domain_index = {d.name: i for i, d in enumerate(spec.clock_domains)}
        self.slave_names = [s.name for s in spec.slaves]
        self._slave_idx = {s.name: i for i, s in enumerate(spec.slaves)}
        self._base = [s.base_addr for s in spec.slaves]
        self._domain_of = [domain_index[s.clock_domain] for s in spec.slaves]
        self._widths = [{r.offset: r.width for r in s.registers} for s in spec.slaves]
        self._resets = [
            {r.offset: r.reset_value for r in s.registers} for s in spec.slaves
        ]
        self._offsets = [sorted(w) for w in self._widths]
        self._mem = [dict(r) for r in self._resets]
        self._ready = [False] * len(spec.slaves)
        self._busy_sync = [[0] * self.sync_length for _ in spec.slaves]
        self._rotation = [0] * len(spec.slaves)

        self._decode = {}
        for entry in address_map(spec):
            idx = self._slave_idx[entry.slave]
            self._decode[entry.address] = (idx, entry.address - self._base[idx])

        self._word_of: dict[int, int] = {}
        self._words: dict[int, int] = {}
        if not self.distributed:
            self._word_of = global_word_map(spec)
            for addr, word in self._word_of.items():
                sidx, off = self._decode[addr]
                self._words[word] = self._resets[sidx][off]

        self.initial_resets = {
            (s.name, s.base_addr + r.offset): r.reset_value
            for s in spec.slaves
            for r in s.registers
        }

        # master
        self._queue: list[ScriptWrite] = []
        self._queue_pos = 0
        self._current: tuple[int, int, int, int] | None = None  # (addr, data, slave, issue)
        self._held = 0
        self.timed_out = False

        # script bindings (set by run)
        self._windows: list[list[tuple[int, int]]] = [[] for _ in spec.slaves]
        self._win_ptr = [0] * len(spec.slaves)
        self._swaps: list[SwapRequest] = []
        self._swap_pos = 0

        # fault-mode tear bookkeeping: (slave, offset) -> (start, end, torn)
        self._tears: dict[tuple[int, int], tuple[int, int, int]] = {}

        self.trace: list[TraceEvent] = []

    # -- helpers ----------------------------------------------------------

    def _emit(self, time_ps, kind, slave="", addr=None, data=None, detail=""):
        self.trace.append(TraceEvent(time_ps, kind, slave, addr, data, detail))

    def _busy_raw(self, sidx: int, t: int) -> bool:
        windows = self._windows[sidx]
        ptr = self._win_ptr[sidx]
        while ptr < len(windows) and windows[ptr][1] <= t:
            ptr += 1
        self._win_ptr[sidx] = ptr
        return ptr < len(windows) and windows[ptr][0] <= t

    def _bind_script(self, script: ProgramScript) -> None:
        for w in script.busy_windows:
            if w.slave not in self._slave_idx:
                raise SimError(f"busy window names unknown slave {w.slave!r}")
        for s in script.swaps:
            if s.slave not in self._slave_idx:
                raise SimError(f"swap targets unknown slave {s.slave!r}")

        self._queue = sorted(script.writes, key=lambda w: w.at_cycle)
        self._queue_pos = 0

        per_slave: list[list[tuple[int, int]]] = [[] for _ in self.slave_names]
        for w in script.busy_windows:
            if w.end_ps > w.start_ps:
                per_slave[self._slave_idx[w.slave]].append((w.start_ps, w.end_ps))
        merged = []
        for windows in per_slave:
            windows.sort()
            out: list[tuple[int, int]] = []
            for start, end in windows:
                if out and start <= out[-1][1]:
                    out[-1] = (out[-1][0], max(out[-1][1], end))
                else:
                    out.append((start, end))
            merged.append(out)
        self._windows = merged
        self._win_ptr = [0] * len(self.slave_names)

        self._swaps = sorted(script.swaps, key=lambda s: s.at_ps)
        self._swap_pos = 0

    # -- clock edges ------------------------------------------------------

    def _config_edge(self, t: int, commits: list) -> None:
        cycle = self.cycle
        queue = self._queue

        if self._current is None and self._queue_pos < len(queue):
            head = queue[self._queue_pos]
            if head.at_cycle <= cycle:
                self._queue_pos += 1
                match = self._decode.get(head.addr)
                if match is None:
                    self._emit(t, WRITE_ISSUED, "", head.addr, head.data)
                    self._emit(
                        t, VIOLATION, "", head.addr, head.data, detail="decode_no_match"
                    )
                else:
                    self._emit(
                        t, WRITE_ISSUED, self.slave_names[match[0]], head.addr, head.data
                    )
                    self._current = (head.addr, head.data, match[0], cycle)
                    self._held = 0

        if self._current is not None:
            addr, data, sidx, _issue = self._current
            gate_open = (not self.distributed) or self._ready[sidx] or self.fault_mode
            if gate_open:
                offset = addr - self._base[sidx]
                width = self._widths[sidx].get(offset)
                if width is None:
                    # register removed by a swap while the write was in flight
                    self._emit(t, VIOLATION, self.slave_names[sidx], addr, data,
                               detail="decode_no_match")
                else:
                    value = data & ((1 << width) - 1)
                    name = self.slave_names[sidx]
                    self._emit(t, WRITE_ACCEPTED, name, addr, data)
                    self._emit(t, CONFIG_CHANGED, name, addr, value)
                    commits.append((sidx, offset, value))
                    if self.fault_mode and self.distributed and self._busy_raw(sidx, t):
                        old = self._mem[sidx][offset]
                        half = width // 2
                        low_mask = (1 << half) - 1
                        torn = (old & ~low_mask) | (value & low_mask)
                        self._tears[(sidx, offset)] = (t, t + self._periods[0], torn)
                self._current = None
                self._held = 0
            else:
                self._held += 1
                if self._held > self.timeout_cycles:
                    self._emit(t, VIOLATION, self.slave_names[sidx], addr, data,
                               detail="timeout")
                    self.timed_out = True
                    self._current = None
                    self._held = 0

    def _sample_edge(self, domain: int, t: int) -> None:
        for sidx in range(len(self.slave_names)):
            if self._domain_of[sidx] != domain or not self._offsets[sidx]:
                continue
            if not self._busy_raw(sidx, t):
                continue
            offsets = self._offsets[sidx]
            offset = offsets[self._rotation[sidx] % len(offsets)]
            self._rotation[sidx] += 1
            value = self._visible(sidx, offset, t)
            self._emit(
                t, VALUE_SAMPLED, self.slave_names[sidx], self._base[sidx] + offset, value
            )

    def _visible(self, sidx: int, offset: int, t: int) -> int:
        tear = self._tears.get((sidx, offset))
        if tear is not None and tear[0] < t < tear[1]:
            return tear[2]
        return self._mem[sidx][offset]

    def _commit_config_edge(self, t: int, commits: list) -> None:
        for sidx, offset, value in commits:
            self._mem[sidx][offset] = value
            if not self.distributed:
                self._words[self._word_of[self._base[sidx] + offset]] = value
        if self.distributed:
            for sidx in range(len(self.slave_names)):
                chain = self._busy_sync[sidx]
                synced = chain[-1]
                raw = 1 if self._busy_raw(sidx, t) else 0
                chain.pop()
                chain.insert(0, raw)
                new_ready = not synced
                if new_ready != self._ready[sidx]:
                    self._ready[sidx] = new_ready
                    self._emit(t, READY_CHANGED, self.slave_names[sidx],
                               data=int(new_ready))
        self.cycle += 1

    def _apply_swaps_until(self, t: int) -> None:
        while self._swap_pos < len(self._swaps) and self._swaps[self._swap_pos].at_ps <= t:
            req = self._swaps[self._swap_pos]
            self._swap_pos += 1
            self.time_ps = max(self.time_ps, req.at_ps)
            self.swap_module(req.slave, req.registers, time_ps=req.at_ps)

    # -- public operations -------------------------------------------------

    def run(self, script: ProgramScript, until_ps: int) -> "Simulation":
        """Execute the script up to and including time ``until_ps``."""
        self._bind_script(script)
        next_edge = self._next_edge
        ndom = len(next_edge)
        while True:
            t = min(next_edge)
            if t > until_ps:
                break
            self._apply_swaps_until(t)
            edging = [d for d in range(ndom) if next_edge[d] == t]
            commits: list = []
            for d in edging:
                if d == 0:
                    self._config_edge(t, commits)
                self._sample_edge(d, t)
            if 0 in edging:
                self._commit_config_edge(t, commits)
            for d in edging:
                next_edge[d] += self._periods[d]
            self.time_ps = t
        self._apply_swaps_until(until_ps)
        self.time_ps = max(self.time_ps, until_ps)
        return self

    def backdoor_read(self, slave: str, offset: int) -> int:
        """Read a stored settings word without touching simulation state."""
        sidx = self._slave_idx.get(slave)
        if sidx is None:
            raise SimError(f"unknown slave {slave!r}")
        if offset not in self._mem[sidx]:
            raise SimError(f"unknown offset {offset} in slave {slave!r}")
        return self._mem[sidx][offset]

    def swap_module(
        self,
        slave: str,
        registers: tuple[SettingSpec, ...],
        *,
        time_ps: int | None = None,
    ) -> "Simulation":
        """Replace one slave's register set, as a partial reconfiguration.

        Refused (with a ``swap_refused`` violation event) unless the
        design is distributed, the slave's ready is high, no in-flight
        write addresses it, and the new registers fit the slave's
        address slot.
        """
        t = self.time_ps if time_ps is None else time_ps
        sidx = self._slave_idx.get(slave)
        if sidx is None:
            raise SimError(f"unknown slave {slave!r}")

        def refuse(reason: str) -> "Simulation":
            self._emit(t, VIOLATION, slave, detail=f"swap_refused:{reason}")
            return self

        if not self.distributed:
            return refuse("topology")
        if not self._ready[sidx]:
            return refuse("not_ready")
        if self._current is not None and self._current[2] == sidx:
            return refuse("in_flight")

        base = self._base[sidx]
        limit = 1 << self.spec.bus.addr_width
        for other, other_base in enumerate(self._base):
            if other != sidx and other_base > base:
                limit = min(limit, other_base)
        seen = set()
        for reg in registers:
            if (
                reg.offset < 0
                or reg.offset in seen
                or not (1 <= reg.width <= self.spec.bus.data_width)
                or not (0 <= reg.reset_value < (1 << reg.width))
                or base + reg.offset >= limit
            ):
                return refuse("bad_fragment")
            seen.add(reg.offset)

        for offset in self._widths[sidx]:
            del self._decode[base + offset]
        self._widths[sidx] = {r.offset: r.width for r in registers}
        self._resets[sidx] = {r.offset: r.reset_value for r in registers}
        self._offsets[sidx] = sorted(self._widths[sidx])
        self._mem[sidx] = dict(self._resets[sidx])
        self._rotation[sidx] = 0
        for offset in self._widths[sidx]:
            self._decode[base + offset] = (sidx, offset)

        self._emit(t, SWAP_PERFORMED, slave)
        for reg in sorted(registers, key=lambda r: r.offset):
            self._emit(t, CONFIG_CHANGED, slave, base + reg.offset, reg.reset_value)
        return self

    def check_coherence(self) -> list[CoherenceViolation]:
        return check_coherence(self.trace, self.initial_resets)

    # -- hashing & export ---------------------------------------------------

    def slave_state_hash(self, slave: str) -> str:
        sidx = self._slave_idx.get(slave)
        if sidx is None:
            raise SimError(f"unknown slave {slave!r}")
        blob = repr(
            (
                sorted(self._mem[sidx].items()),
                sorted(self._widths[sidx].items()),
                self._ready[sidx],
                tuple(self._busy_sync[sidx]),
            )
        )
        return hashlib.sha256(blob.encode()).hexdigest()

    def state_hash(self) -> str:
        blob = repr(
            (
                self.time_ps,
                self.cycle,
                [sorted(m.items()) for m in self._mem],
                sorted(self._words.items()),
                list(self._ready),
                [tuple(c) for c in self._busy_sync],
            )
        )
        return hashlib.sha256(blob.encode()).hexdigest()

    def trace_hash(self) -> str:
        return hashlib.sha256(trace_to_csv(self.trace).encode()).hexdigest()

    def write_trace(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(trace_to_csv(self.trace))

    def violation_events(self) -> list[TraceEvent]:
        return [e for e in self.trace if e.kind == VIOLATION]


def build_sim(
    model: DesignModel,
    spec: RegisterMapSpec,
    *,
    fault_mode: bool = False,
    timeout_cycles: int = DEFAULT_TIMEOUT_CYCLES,
) -> Simulation:
    """Construct a reset simulation for an elaborated model."""
    return Simulation(model, spec, fault_mode=fault_mode, timeout_cycles=timeout_cycles)


def run(sim: Simulation, script: ProgramScript, until_ps: int) -> Simulation:
    return sim.run(script, until_ps)


def backdoor_read(sim: Simulation, slave: str, offset: int) -> int:
    return sim.backdoor_read(slave, offset)


def swap_module(sim: Simulation, slave: str, registers: tuple[SettingSpec, ...]) -> Simulation:
    return sim.swap_module(slave, registers)


def trace_to_csv(trace: list[TraceEvent]) -> str:
    """Render a trace as CSV with the stable five-column layout."""
    lines = [",".join(TRACE_COLUMNS)]
    for e in trace:
        addr = "" if e.addr is None else str(e.addr)
        data = "" if e.data is None else str(e.data)
        lines.append(f"{e.time_ps},{e.kind},{e.slave},{addr},{data}")
    return "\n".join(lines) + "\n"


def check_coherence(
    trace: list[TraceEvent],
    reset_values: dict[tuple[str, int], int] | None = None,
) -> list[CoherenceViolation]:
    """Scan a completed trace for ready-contract breaches.

    Reports (a) any settings change accepted while the slave's sampled
    busy view had closed the gate (ready low), and (b) any sampled word
    that matches neither a reset value nor a completed write to that
    address (a torn word).  Slaves that never export ready (centralized
    designs) are exempt from (a).  Words with no reset information are
    assumed to reset to zero.
    """
    resets = reset_values or {}
    gated = {e.slave for e in trace if e.kind == READY_CHANGED}
    ready: dict[str, bool] = {s: False for s in gated}
    valid: dict[tuple[str, int], set[int]] = {}
    violations: list[CoherenceViolation] = []

    for e in trace:
        if e.kind == READY_CHANGED:
            ready[e.slave] = bool(e.data)
        elif e.kind == CONFIG_CHANGED:
            if e.slave in gated and not ready[e.slave]:
                violations.append(
                    CoherenceViolation("busy_write", e.time_ps, e.slave, e.addr, e.data)
                )
            key = (e.slave, e.addr)
            valid.setdefault(key, {resets.get(key, 0)}).add(e.data)
        elif e.kind == VALUE_SAMPLED:
            key = (e.slave, e.addr)
            ok = valid.setdefault(key, {resets.get(key, 0)})
            if e.data not in ok:
                violations.append(
                    CoherenceViolation("torn_word", e.time_ps, e.slave, e.addr, e.data)
                )
    return violations
