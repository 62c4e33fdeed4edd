"""Expand a register-map spec into a structural model of storage and routing.

The model is a flat list of typed elements: flip-flop banks, decoders,
muxes, synchronizer chains, and the wire bundles that connect them.  Two
families are supported:

* centralized storage, where every setting lives in one deep memory and
  is fanned out to its consumers on wide bundles, optionally through an
  output register stage, per-consumer synchronizer chains, and local
  destination registers;
* distributed storage, where each slave keeps its own settings bank and
  is written over a shared narrow configuration bus through a decoder,
  exporting a registered ``ready`` back to the bus master.

Elaboration is deterministic: the same spec always yields the same model
and the same canonical JSON dump, which golden tests and the resource
model rely on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import ClassVar, Union

from .errors import CapacityError
from .spec import GLOBAL_TOPOLOGIES, AddressEntry, RegisterMapSpec, address_map

# Canonical flag presets for the named centralized topologies.
TOPOLOGY_FLAGS = {
    "global": (False, False, False),
    "global_registered": (True, False, False),
    "global_cdc_dest": (True, True, True),
}


@dataclass(frozen=True)
class FlipFlopBank:
    kind: ClassVar[str] = "flipflop_bank"
    name: str
    bits: int
    clock_domain: str


@dataclass(frozen=True)
class Decoder:
    kind: ClassVar[str] = "decoder"
    name: str
    inputs: int
    terms: int


@dataclass(frozen=True)
class Mux:
    kind: ClassVar[str] = "mux"
    name: str
    width: int
    ways: int


@dataclass(frozen=True)
class SyncChain:
    kind: ClassVar[str] = "sync_chain"
    name: str
    bits: int
    length: int


@dataclass(frozen=True)
class WireBundle:
    kind: ClassVar[str] = "wire_bundle"
    name: str
    bits: int
    source: str
    sink: str


Element = Union[FlipFlopBank, Decoder, Mux, SyncChain, WireBundle]


@dataclass(frozen=True)
class ElaborationOptions:
    output_registered: bool = False
    cdc: bool = False
    dest_registers: bool = False

    @classmethod
    def for_topology(cls, topology: str) -> "ElaborationOptions":
        return cls(*TOPOLOGY_FLAGS[topology])


@dataclass(frozen=True)
class StructuralCounts:
    flipflops: int
    decode_terms: int
    mux_bits: int
    max_unregistered_bundle_bits: int


@dataclass(frozen=True)
class DesignModel:
    elements: tuple[Element, ...]
    topology: str
    options: ElaborationOptions
    sync_length: int
    slave_elements: dict[str, tuple[str, ...]]

    def element(self, name: str) -> Element:
        for el in self.elements:
            if el.name == name:
                return el
        raise KeyError(name)

    def to_json(self) -> str:
        """Canonical dump: elements sorted by (kind, name), stable fields."""
        items = []
        for el in sorted(self.elements, key=lambda e: (e.kind, e.name)):
            entry = {"kind": el.kind, "name": el.name}
            for fname in ("bits", "clock_domain", "inputs", "terms", "width", "ways",
                          "length", "source", "sink"):
                if hasattr(el, fname):
                    entry[fname] = getattr(el, fname)
            items.append(entry)
        doc = {
            "topology": self.topology,
            "options": {
                "output_registered": self.options.output_registered,
                "cdc": self.options.cdc,
                "dest_registers": self.options.dest_registers,
            },
            "sync_length": self.sync_length,
            "elements": items,
            "slave_elements": {k: list(v) for k, v in sorted(self.slave_elements.items())},
        }
        return json.dumps(doc, indent=2) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


class _Builder:
    def __init__(self):
        self.elements: list[Element] = []
        self.slave_elements: dict[str, list[str]] = {}

    def add(self, element: Element, slave: str | None = None) -> str:
        self.elements.append(element)
        if slave is not None:
            self.slave_elements.setdefault(slave, []).append(element.name)
        return element.name


def elaborate_global(spec: RegisterMapSpec, options: ElaborationOptions) -> DesignModel:
    """Build the centralized-memory model for the given register stages.

    Raises :class:`CapacityError` when the settings do not fit the memory:
    each setting occupies one memory word, so the word count must not
    exceed the depth and no setting may be wider than the memory word.
    """
    arch = spec.architecture
    depth, width = arch.global_depth, arch.global_width
    total_bits = spec.total_setting_bits
    if total_bits > depth * width:
        raise CapacityError(
            f"settings need {total_bits} bits but memory is {depth}x{width}"
        )
    if spec.total_words > depth:
        raise CapacityError(
            f"settings occupy {spec.total_words} words but memory depth is {depth}"
        )
    widest = max((r.width for s in spec.slaves for r in s.registers), default=0)
    if widest > width:
        raise CapacityError(
            f"setting width {widest} exceeds memory word width {width}"
        )

    cfg_domain = spec.clock_domains[0].name if spec.clock_domains else "cfg"
    b = _Builder()

    stage = None
    if depth * width > 0:
        b.add(Decoder("cfg_decode", inputs=spec.bus.addr_width, terms=depth))
        stage = b.add(FlipFlopBank("mem", bits=depth * width, clock_domain=cfg_domain))
        b.add(WireBundle("bus_mem", bits=width, source="cfg_decode", sink="mem"))
        if options.output_registered:
            out = b.add(FlipFlopBank("mem_out", bits=depth * width, clock_domain=cfg_domain))
            b.add(WireBundle("pipe_mem_out", bits=depth * width, source="mem", sink="mem_out"))
            stage = out

    for slave in spec.slaves:
        bits = slave.setting_bits
        name = slave.name
        b.slave_elements.setdefault(name, [])
        if bits == 0:
            continue
        head = stage
        if options.cdc:
            sync = b.add(
                SyncChain(f"{name}.sync", bits=bits, length=arch.sync_length),
                slave=name,
            )
            b.add(
                WireBundle(f"{name}.fanout", bits=bits, source=head, sink=sync),
                slave=name,
            )
            head = sync
        if options.dest_registers:
            dest = b.add(
                FlipFlopBank(f"{name}.dest", bits=bits, clock_domain=slave.clock_domain),
                slave=name,
            )
            wire = "pipe_dest" if options.cdc else "fanout"
            b.add(
                WireBundle(f"{name}.{wire}", bits=bits, source=head, sink=dest),
                slave=name,
            )
            head = dest
        if not options.cdc and not options.dest_registers:
            pins = b.add(Mux(f"{name}.pins", width=bits, ways=1), slave=name)
            b.add(
                WireBundle(f"{name}.fanout", bits=bits, source=head, sink=pins),
                slave=name,
            )

    return DesignModel(
        elements=tuple(b.elements),
        topology=spec.architecture.topology,
        options=options,
        sync_length=arch.sync_length,
        slave_elements={k: tuple(v) for k, v in b.slave_elements.items()},
    )


def elaborate_distributed(spec: RegisterMapSpec) -> DesignModel:
    """Build the distributed model: one local settings bank per slave.

    Every slave additionally carries one ready register and one busy
    synchronizer chain in the configuration domain; the shared bus bundle
    (address + data + write + one-hot select) runs from the decoder to
    each slave.
    """
    arch = spec.architecture
    cfg_domain = spec.clock_domains[0].name if spec.clock_domains else "cfg"
    bus_bits = spec.bus.addr_width + spec.bus.data_width + 1 + len(spec.slaves)
    b = _Builder()

    if spec.total_words > 0:
        b.add(Decoder("cfg_decode", inputs=spec.bus.addr_width, terms=spec.total_words))

    for slave in spec.slaves:
        bits = slave.setting_bits
        bank = None
        if bits > 0:
            bank = b.add(
                FlipFlopBank(f"{slave.name}.cfg", bits=bits, clock_domain=cfg_domain),
                slave=slave.name,
            )
        ready = b.add(
            FlipFlopBank(f"{slave.name}.ready", bits=1, clock_domain=cfg_domain),
            slave=slave.name,
        )
        b.add(
            SyncChain(f"{slave.name}.busy_sync", bits=1, length=arch.sync_length),
            slave=slave.name,
        )
        if spec.total_words > 0:
            b.add(
                WireBundle(
                    f"{slave.name}.bus", bits=bus_bits, source="cfg_decode",
                    sink=bank if bank is not None else ready,
                ),
                slave=slave.name,
            )

    return DesignModel(
        elements=tuple(b.elements),
        topology="distributed",
        options=ElaborationOptions(),
        sync_length=arch.sync_length,
        slave_elements={k: tuple(v) for k, v in b.slave_elements.items()},
    )


def elaborate(spec: RegisterMapSpec) -> DesignModel:
    """Elaborate using the architecture named in the spec."""
    topology = spec.architecture.topology
    if topology == "distributed":
        return elaborate_distributed(spec)
    if topology in GLOBAL_TOPOLOGIES:
        return elaborate_global(spec, ElaborationOptions.for_topology(topology))
    raise CapacityError(f"unknown topology {topology!r}")


def structural_counts(model: DesignModel) -> StructuralCounts:
    """Exact element tallies for one model.

    ``flipflops`` sums flip-flop bank bits plus synchronizer bits times
    chain length.  ``max_unregistered_bundle_bits`` is the widest bundle
    whose endpoints are not both flip-flop banks, i.e. the widest routed
    net not broken by a register stage at both ends.
    """
    kinds = {el.name: el.kind for el in model.elements}
    flipflops = 0
    decode_terms = 0
    mux_bits = 0
    widest = 0
    for el in model.elements:
        if isinstance(el, FlipFlopBank):
            flipflops += el.bits
        elif isinstance(el, SyncChain):
            flipflops += el.bits * el.length
        elif isinstance(el, Decoder):
            decode_terms += el.terms
        elif isinstance(el, Mux):
            mux_bits += el.width * el.ways
        elif isinstance(el, WireBundle):
            registered = (
                kinds.get(el.source) == "flipflop_bank"
                and kinds.get(el.sink) == "flipflop_bank"
            )
            if not registered:
                widest = max(widest, el.bits)
    return StructuralCounts(
        flipflops=flipflops,
        decode_terms=decode_terms,
        mux_bits=mux_bits,
        max_unregistered_bundle_bits=widest,
    )


def global_word_map(spec: RegisterMapSpec) -> dict[int, int]:
    """Assign each addressed setting a word slot in the central memory.

    Allocation follows address-map order, so it is stable for a given
    spec.  Words beyond the last allocated slot remain plain storage and
    are not reachable over the bus.
    """
    entries: list[AddressEntry] = address_map(spec)
    return {entry.address: slot for slot, entry in enumerate(entries)}
