"""Resource and speed estimation for the supported storage architectures.

The register model is closed-form and exact: it mirrors the structural
flip-flop count of the elaborated design plus a calibrated technology
overhead constant.  ALM and combinational-ALUT models are affine
least-squares fits per architecture family, because packing density
differs between a bare deep memory, a memory fanned out through routing
register stages, and distributed per-slave banks.  The speed heuristic
is a monotone-decreasing function of the widest routed bundle that is
not broken by a register stage at both ends; it is an ordering model
anchored at measured points, not a timing analyzer.

The shipped default calibration was fitted against Cyclone V synthesis
measurements of reference designs (a 256x32 central memory feeding 226
32-bit settings, the equivalent distributed design, and a 128x512
memory-only sweep).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .elaborate import (
    TOPOLOGY_FLAGS,
    DesignModel,
    ElaborationOptions,
    elaborate_distributed,
    elaborate_global,
    structural_counts,
)
from .errors import CalibrationError, UncalibratedError
from .spec import (
    TOPOLOGIES,
    ArchChoice,
    BusGeometry,
    ClockDomain,
    RegisterMapSpec,
    SettingSpec,
    SlaveSpec,
)

SWEEP_CSV_HEADER = "topology,D,W,N_t,w,L,S,registers,alms,aluts,fmax_mhz"

ALM_FAMILIES = ("global_memory", "global_targets", "distributed")
ALUT_FAMILIES = ("global", "distributed")


@dataclass(frozen=True)
class DesignPoint:
    """One architecture configuration for estimation.

    ``depth``/``width`` size the central memory (unused when
    distributed); each of ``slaves`` slave blocks consumes ``targets``
    settings of ``target_width`` bits.  The register-stage flags follow
    the named topology unless overridden.
    """

    topology: str
    depth: int = 0
    width: int = 0
    targets: int = 0
    target_width: int = 32
    sync_length: int = 2
    slaves: int = 1
    output_registered: bool = False
    cdc: bool = False
    dest_registers: bool = False

    @classmethod
    def named(cls, topology: str, **kwargs) -> "DesignPoint":
        """Build a point with the named topology's canonical flags."""
        if topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {topology!r}")
        flags = TOPOLOGY_FLAGS.get(topology, (False, False, False))
        point = cls(
            topology=topology,
            output_registered=flags[0],
            cdc=flags[1],
            dest_registers=flags[2],
        )
        return replace(point, **kwargs)


@dataclass(frozen=True)
class Measurement:
    """Synthesis results for one design point; unknown metrics are None."""

    registers: int | None = None
    alms: float | None = None
    aluts: float | None = None
    fmax_mhz: float | None = None


@dataclass(frozen=True)
class ResourceEstimate:
    registers: int
    alms: float
    aluts: float
    fmax_mhz: float


@dataclass(frozen=True)
class Calibration:
    c_global: float | None = None
    c_distributed_per_slave: float | None = None
    register_residuals: dict = field(default_factory=dict)
    alm_coeffs: dict = field(default_factory=dict)
    alm_residuals: dict = field(default_factory=dict)
    alut_coeffs: dict = field(default_factory=dict)
    alut_residuals: dict = field(default_factory=dict)
    fmax_f0: float | None = None
    fmax_b0: float | None = None
    fmax_anchors: tuple = ()
    fmax_residuals: tuple = ()
    corpus: tuple = ()


# --------------------------------------------------------------------------
# Point -> spec bridge (the structural oracle path)

_CFG_PERIOD_PS = 10_000
_SLAVE_PERIOD_PS = 7_000


def _ceil_log2(n: int) -> int:
    return max(1, (max(n, 1) - 1).bit_length())


def point_to_spec(point: DesignPoint) -> RegisterMapSpec:
    """Materialize a design point as a register-map spec.

    Uses a canonical two-domain clocking scheme and packed slave bases;
    the resulting spec is what :func:`estimate_registers` is exact
    against.
    """
    width = max(point.target_width, 1)
    offset_bits = _ceil_log2(point.targets)
    select_bits = (point.slaves - 1).bit_length() if point.slaves > 1 else 0
    registers = tuple(
        SettingSpec(name=f"r{i}", offset=i, width=width) for i in range(point.targets)
    )
    slaves = tuple(
        SlaveSpec(
            name=f"slave{k}",
            clock_domain="slave_clk",
            base_addr=k << offset_bits,
            registers=registers,
        )
        for k in range(point.slaves)
    )
    return RegisterMapSpec(
        name="point",
        bus=BusGeometry(
            data_width=width,
            addr_width=select_bits + offset_bits,
            slave_select_bits=select_bits,
        ),
        clock_domains=(
            ClockDomain("cfg_clk", _CFG_PERIOD_PS),
            ClockDomain("slave_clk", _SLAVE_PERIOD_PS),
        ),
        slaves=slaves,
        architecture=ArchChoice(
            topology=point.topology,
            sync_length=point.sync_length,
            global_depth=point.depth,
            global_width=point.width,
        ),
    )


def elaborate_point(point: DesignPoint) -> DesignModel:
    spec = point_to_spec(point)
    if point.topology == "distributed":
        return elaborate_distributed(spec)
    return elaborate_global(
        spec,
        ElaborationOptions(
            output_registered=point.output_registered,
            cdc=point.cdc,
            dest_registers=point.dest_registers,
        ),
    )


# --------------------------------------------------------------------------
# Register model


def _is_distributed(point: DesignPoint) -> bool:
    return point.topology == "distributed"


def core_registers(point: DesignPoint) -> int:
    """Structural flip-flop count implied by the point's formula.

    Centralized: depth*width storage (doubled by the output stage) plus
    per-target synchronizer and destination stages.  Distributed: the
    per-slave settings bits (ready/busy-sync flip-flops are part of the
    per-slave overhead constant).
    """
    setting_bits = point.slaves * point.targets * point.target_width
    if _is_distributed(point):
        return setting_bits
    stages = 0
    if point.cdc:
        stages += point.sync_length
    if point.dest_registers:
        stages += 1
    memory = point.depth * point.width * (2 if point.output_registered else 1)
    return memory + setting_bits * stages


def register_overhead(point: DesignPoint, cal: Calibration) -> float:
    """Model registers minus elaborated structural flip-flops.

    For distributed designs the per-slave constant already covers the
    explicitly modeled ready register and busy synchronizer (1 + L
    flip-flops each), so the remaining unmodeled overhead is
    ``slaves * (c - 1 - L)``.
    """
    if _is_distributed(point):
        c = _require_c_dist(cal)
        return point.slaves * (c - 1 - point.sync_length)
    return _require_c_global(cal)


def _require_c_global(cal: Calibration) -> float:
    if cal.c_global is None:
        raise UncalibratedError("no centralized register datapoints in calibration")
    return cal.c_global


def _require_c_dist(cal: Calibration) -> float:
    if cal.c_distributed_per_slave is None:
        raise UncalibratedError("no distributed register datapoints in calibration")
    return cal.c_distributed_per_slave


def estimate_registers(point: DesignPoint, cal: Calibration) -> int:
    if _is_distributed(point):
        c = _require_c_dist(cal)
        return int(round(core_registers(point) + point.slaves * c))
    return int(round(core_registers(point) + _require_c_global(cal)))


# --------------------------------------------------------------------------
# ALUT / ALM models


def addressed_words(point: DesignPoint) -> int:
    """Words the write decoder must resolve (memory depth or bank words)."""
    if _is_distributed(point):
        return point.slaves * point.targets
    return point.depth


def _alut_family(point: DesignPoint) -> str:
    return "distributed" if _is_distributed(point) else "global"


def alm_family(point: DesignPoint) -> str:
    if _is_distributed(point):
        return "distributed"
    if point.slaves * point.targets == 0:
        return "global_memory"
    return "global_targets"


def _alut_features(point: DesignPoint) -> tuple[float, float, float]:
    return (float(addressed_words(point)), float(point.slaves * point.targets), 1.0)


def estimate_aluts(point: DesignPoint, cal: Calibration) -> float:
    coeffs = cal.alut_coeffs.get(_alut_family(point))
    if coeffs is None:
        raise UncalibratedError(f"no ALUT fit for family {_alut_family(point)!r}")
    value = float(np.dot(coeffs, _alut_features(point)))
    return max(0.0, value)


def estimate_alms(point: DesignPoint, cal: Calibration) -> float:
    family = alm_family(point)
    coeffs = cal.alm_coeffs.get(family)
    if coeffs is None:
        raise UncalibratedError(f"no ALM fit for family {family!r}")
    features = (
        float(estimate_registers(point, cal)),
        estimate_aluts(point, cal),
        1.0,
    )
    return max(0.0, float(np.dot(coeffs, features)))


# --------------------------------------------------------------------------
# Speed heuristic


def widest_unregistered_bundle(point: DesignPoint) -> int:
    return structural_counts(elaborate_point(point)).max_unregistered_bundle_bits


def estimate_fmax(point: DesignPoint, cal: Calibration) -> float:
    """Speed from the widest routed bundle without registers at both
    ends: ``f0 / (1 + bits/b0)``, strictly decreasing in the bundle
    width.  Distributed designs route only the narrow configuration bus,
    so they rank above any centralized design whose per-slave settings
    exceed that bus width.
    """
    if cal.fmax_f0 is None or cal.fmax_b0 is None:
        raise UncalibratedError("no fmax anchors in calibration")
    return fmax_from_bundle(widest_unregistered_bundle(point), cal)


def fmax_from_bundle(bundle_bits: int, cal: Calibration) -> float:
    if cal.fmax_f0 is None or cal.fmax_b0 is None:
        raise UncalibratedError("no fmax anchors in calibration")
    return cal.fmax_f0 / (1.0 + bundle_bits / cal.fmax_b0)


def estimate(point: DesignPoint, cal: Calibration) -> ResourceEstimate:
    return ResourceEstimate(
        registers=estimate_registers(point, cal),
        alms=estimate_alms(point, cal),
        aluts=estimate_aluts(point, cal),
        fmax_mhz=estimate_fmax(point, cal),
    )


# --------------------------------------------------------------------------
# Calibration


def _lstsq_fit(rows: list[tuple[float, float, float]], values: list[float]):
    a = np.asarray(rows, dtype=float)
    y = np.asarray(values, dtype=float)
    coeffs, _, _, _ = np.linalg.lstsq(a, y, rcond=None)
    residuals = (a @ coeffs - y).tolist()
    return tuple(float(c) for c in coeffs), residuals


def calibrate(datapoints: list[tuple[DesignPoint, Measurement]]) -> Calibration:
    """Fit every model family represented in the corpus.

    Register overheads are means of measured-minus-structural residuals;
    ALUT and ALM coefficients come from (minimum-norm) least squares, so
    under-determined families interpolate their datapoints exactly.  The
    speed curve needs at least two anchors with distinct bundle widths.
    """
    if not datapoints:
        raise CalibrationError("empty calibration corpus")

    c_global = None
    c_dist = None
    register_residuals: dict = {}

    global_regs = [
        (p, m) for p, m in datapoints
        if not _is_distributed(p) and m.registers is not None
    ]
    if global_regs:
        gaps = [m.registers - core_registers(p) for p, m in global_regs]
        c_global = float(np.mean(gaps))
        register_residuals["global"] = [float(g - c_global) for g in gaps]

    dist_regs = [
        (p, m) for p, m in datapoints
        if _is_distributed(p) and m.registers is not None and p.slaves > 0
    ]
    if dist_regs:
        gaps = [(m.registers - core_registers(p)) / p.slaves for p, m in dist_regs]
        c_dist = float(np.mean(gaps))
        register_residuals["distributed"] = [
            float((g - c_dist) * p.slaves) for g, (p, _) in zip(gaps, dist_regs)
        ]

    partial = Calibration(c_global=c_global, c_distributed_per_slave=c_dist)

    alut_coeffs: dict = {}
    alut_residuals: dict = {}
    for family in ALUT_FAMILIES:
        pts = [
            (p, m) for p, m in datapoints
            if _alut_family(p) == family and m.aluts is not None
        ]
        if pts:
            coeffs, residuals = _lstsq_fit(
                [_alut_features(p) for p, _ in pts], [m.aluts for _, m in pts]
            )
            alut_coeffs[family] = coeffs
            alut_residuals[family] = residuals

    partial = replace(partial, alut_coeffs=alut_coeffs, alut_residuals=alut_residuals)

    alm_coeffs: dict = {}
    alm_residuals: dict = {}
    for family in ALM_FAMILIES:
        pts = [
            (p, m) for p, m in datapoints
            if alm_family(p) == family and m.alms is not None
        ]
        if not pts:
            continue
        rows = []
        for p, _ in pts:
            rows.append(
                (
                    float(estimate_registers(p, partial)),
                    estimate_aluts(p, partial),
                    1.0,
                )
            )
        coeffs, residuals = _lstsq_fit(rows, [m.alms for _, m in pts])
        alm_coeffs[family] = coeffs
        alm_residuals[family] = residuals

    fmax_pts = [(p, m) for p, m in datapoints if m.fmax_mhz is not None]
    fmax_f0 = fmax_b0 = None
    anchors: list[tuple[float, float]] = []
    fmax_residuals: list[float] = []
    if fmax_pts:
        anchors = sorted(
            (float(widest_unregistered_bundle(p)), float(m.fmax_mhz))
            for p, m in fmax_pts
        )
        bundles = [b for b, _ in anchors]
        if len(set(bundles)) >= 2:
            # 1/f is affine in the bundle width for f = f0 / (1 + B/b0)
            a = np.asarray([[1.0, b] for b, _ in anchors])
            y = np.asarray([1.0 / f for _, f in anchors])
            sol, _, _, _ = np.linalg.lstsq(a, y, rcond=None)
            alpha, beta = float(sol[0]), float(sol[1])
            if alpha <= 0 or beta <= 0:
                raise CalibrationError(
                    "fmax anchors are not decreasing in bundle width"
                )
            fmax_f0 = 1.0 / alpha
            fmax_b0 = alpha / beta
            fmax_residuals = [
                fmax_f0 / (1.0 + b / fmax_b0) - f for b, f in anchors
            ]

    return Calibration(
        c_global=c_global,
        c_distributed_per_slave=c_dist,
        register_residuals=register_residuals,
        alm_coeffs=alm_coeffs,
        alm_residuals=alm_residuals,
        alut_coeffs=alut_coeffs,
        alut_residuals=alut_residuals,
        fmax_f0=fmax_f0,
        fmax_b0=fmax_b0,
        fmax_anchors=tuple(anchors),
        fmax_residuals=tuple(fmax_residuals),
        corpus=tuple(datapoints),
    )


# --------------------------------------------------------------------------
# Shipped corpus

# Cyclone V synthesis measurements of the reference designs.  The two
# memory-only ALM figures are reconstructed from the measured sweep facts
# (adding the output stage to the 128x512 memory costs 10292.6 ALMs, an
# increase of about 40%).
DEFAULT_CORPUS: tuple[tuple[DesignPoint, Measurement], ...] = (
    (
        DesignPoint.named(
            "global_cdc_dest", depth=256, width=32, targets=226, target_width=32,
            sync_length=2, slaves=1,
        ),
        Measurement(registers=38146, alms=10099.1, aluts=1925.0, fmax_mhz=140.0),
    ),
    (
        DesignPoint.named(
            "global", depth=256, width=32, targets=226, target_width=32, slaves=1,
        ),
        Measurement(registers=8258, alms=2710.5, aluts=1913.0),
    ),
    (
        DesignPoint.named(
            "distributed", targets=226, target_width=32, sync_length=2, slaves=1,
        ),
        Measurement(registers=7499, alms=2556.0, aluts=1887.0, fmax_mhz=210.0),
    ),
    (
        DesignPoint.named("global_registered", depth=128, width=512, targets=0, slaves=0),
        Measurement(alms=36024.1),
    ),
    (
        DesignPoint.named("global", depth=128, width=512, targets=0, slaves=0),
        Measurement(alms=25731.5),
    ),
)


@lru_cache(maxsize=1)
def default_calibration() -> Calibration:
    return calibrate(list(DEFAULT_CORPUS))


# --------------------------------------------------------------------------
# Sweeps and comparison


@dataclass(frozen=True)
class SweepRow:
    point: DesignPoint
    estimate: ResourceEstimate


def sweep(
    cal: Calibration,
    topologies: list[str],
    depths: list[int] = (0,),
    widths: list[int] = (0,),
    targets: list[int] = (0,),
    slaves: list[int] = (1,),
    target_width: int = 32,
    sync_length: int = 2,
) -> list[SweepRow]:
    """Estimate every point of the cartesian sweep, in a stable order."""
    rows = []
    for topology in topologies:
        for depth in depths:
            for width in widths:
                for n_targets in targets:
                    for n_slaves in slaves:
                        point = DesignPoint.named(
                            topology,
                            depth=depth if topology != "distributed" else 0,
                            width=width if topology != "distributed" else 0,
                            targets=n_targets,
                            target_width=target_width,
                            sync_length=sync_length,
                            slaves=n_slaves,
                        )
                        rows.append(SweepRow(point, estimate(point, cal)))
    return rows


def sweep_to_csv(rows: list[SweepRow]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for row in rows:
        p, e = row.point, row.estimate
        lines.append(
            f"{p.topology},{p.depth},{p.width},{p.targets},{p.target_width},"
            f"{p.sync_length},{p.slaves},{e.registers},{e.alms:.1f},{e.aluts:.1f},"
            f"{e.fmax_mhz:.1f}"
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CompareReport:
    point_a: DesignPoint
    point_b: DesignPoint
    estimate_a: ResourceEstimate
    estimate_b: ResourceEstimate
    register_ratio: float
    alm_ratio: float
    alut_ratio: float

    def as_text(self) -> str:
        lines = [
            "metric        A            B            A/B",
            f"registers     {self.estimate_a.registers:<12d} {self.estimate_b.registers:<12d} {self.register_ratio:.3f}",
            f"alms          {self.estimate_a.alms:<12.1f} {self.estimate_b.alms:<12.1f} {self.alm_ratio:.3f}",
            f"aluts         {self.estimate_a.aluts:<12.1f} {self.estimate_b.aluts:<12.1f} {self.alut_ratio:.3f}",
        ]
        return "\n".join(lines)


def compare(point_a: DesignPoint, point_b: DesignPoint, cal: Calibration) -> CompareReport:
    """Report the resource ratios of point A relative to point B."""
    est_a = estimate(point_a, cal)
    est_b = estimate(point_b, cal)

    def ratio(a: float, b: float) -> float:
        return a / b if b else math.inf

    return CompareReport(
        point_a=point_a,
        point_b=point_b,
        estimate_a=est_a,
        estimate_b=est_b,
        register_ratio=ratio(est_a.registers, est_b.registers),
        alm_ratio=ratio(est_a.alms, est_b.alms),
        alut_ratio=ratio(est_a.aluts, est_b.aluts),
    )


# --------------------------------------------------------------------------
# Persistence


def _point_to_dict(point: DesignPoint) -> dict:
    return {
        "topology": point.topology,
        "depth": point.depth,
        "width": point.width,
        "targets": point.targets,
        "target_width": point.target_width,
        "sync_length": point.sync_length,
        "slaves": point.slaves,
        "output_registered": point.output_registered,
        "cdc": point.cdc,
        "dest_registers": point.dest_registers,
    }


def _measurement_to_dict(m: Measurement) -> dict:
    return {
        "registers": m.registers,
        "alms": m.alms,
        "aluts": m.aluts,
        "fmax_mhz": m.fmax_mhz,
    }


def calibration_to_json(cal: Calibration) -> str:
    doc = {
        "register_overhead": {
            "c_global": cal.c_global,
            "c_distributed_per_slave": cal.c_distributed_per_slave,
            "residuals": cal.register_residuals,
        },
        "alm": {
            family: {
                "coeffs": list(cal.alm_coeffs[family]),
                "residuals": cal.alm_residuals.get(family, []),
            }
            for family in sorted(cal.alm_coeffs)
        },
        "alut": {
            family: {
                "coeffs": list(cal.alut_coeffs[family]),
                "residuals": cal.alut_residuals.get(family, []),
            }
            for family in sorted(cal.alut_coeffs)
        },
        "fmax": {
            "f0": cal.fmax_f0,
            "b0": cal.fmax_b0,
            "anchors": [list(a) for a in cal.fmax_anchors],
            "residuals": list(cal.fmax_residuals),
        },
        "corpus": [
            {"point": _point_to_dict(p), "measured": _measurement_to_dict(m)}
            for p, m in cal.corpus
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def calibration_from_json(text: str) -> Calibration:
    doc = json.loads(text)
    overhead = doc.get("register_overhead", {})
    corpus = tuple(
        (
            DesignPoint(**entry["point"]),
            Measurement(**entry["measured"]),
        )
        for entry in doc.get("corpus", [])
    )
    return Calibration(
        c_global=overhead.get("c_global"),
        c_distributed_per_slave=overhead.get("c_distributed_per_slave"),
        register_residuals=overhead.get("residuals", {}),
        alm_coeffs={k: tuple(v["coeffs"]) for k, v in doc.get("alm", {}).items()},
        alm_residuals={k: v.get("residuals", []) for k, v in doc.get("alm", {}).items()},
        alut_coeffs={k: tuple(v["coeffs"]) for k, v in doc.get("alut", {}).items()},
        alut_residuals={k: v.get("residuals", []) for k, v in doc.get("alut", {}).items()},
        fmax_f0=doc.get("fmax", {}).get("f0"),
        fmax_b0=doc.get("fmax", {}).get("b0"),
        fmax_anchors=tuple(tuple(a) for a in doc.get("fmax", {}).get("anchors", [])),
        fmax_residuals=tuple(doc.get("fmax", {}).get("residuals", [])),
        corpus=corpus,
    )


def save_calibration(cal: Calibration, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(calibration_to_json(cal))


def load_calibration(path) -> Calibration:
    with open(path, "r", encoding="utf-8") as fh:
        return calibration_from_json(fh.read())
