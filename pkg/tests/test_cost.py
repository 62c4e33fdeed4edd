import random

import pytest

from regforge import (
    CalibrationError,
    UncalibratedError,
    calibrate,
    default_calibration,
    elaborate,
    structural_counts,
)
from regforge.cost import (
    DEFAULT_CORPUS,
    DesignPoint,
    Measurement,
    calibration_from_json,
    calibration_to_json,
    compare,
    elaborate_point,
    estimate,
    estimate_alms,
    estimate_aluts,
    estimate_fmax,
    estimate_registers,
    fmax_from_bundle,
    load_calibration,
    point_to_spec,
    register_overhead,
    save_calibration,
    sweep,
    sweep_to_csv,
    widest_unregistered_bundle,
)
from regforge.spec import validate

GMAX = DesignPoint.named(
    "global_cdc_dest", depth=256, width=32, targets=226, target_width=32,
    sync_length=2, slaves=1,
)
GBARE = DesignPoint.named(
    "global", depth=256, width=32, targets=226, target_width=32, slaves=1,
)
DIST = DesignPoint.named(
    "distributed", targets=226, target_width=32, sync_length=2, slaves=1,
)


@pytest.fixture(scope="module")
def cal():
    return default_calibration()


def test_register_overhead_constants(cal):
    assert cal.c_global == 66.0
    assert cal.c_distributed_per_slave == 267.0
    assert all(r == 0.0 for r in cal.register_residuals["global"])
    assert all(r == 0.0 for r in cal.register_residuals["distributed"])


def test_register_model_hits_measured_points(cal):
    assert estimate_registers(GMAX, cal) == 38_146
    assert estimate_registers(GBARE, cal) == 8_258
    assert estimate_registers(DIST, cal) == 7_499


def test_output_register_delta(cal):
    with_reg = DesignPoint.named("global_registered", depth=128, width=512)
    without = DesignPoint.named("global", depth=128, width=512)
    assert estimate_registers(with_reg, cal) - estimate_registers(without, cal) == 65_536


def test_alm_estimates_within_tolerance(cal):
    assert estimate_alms(GMAX, cal) == pytest.approx(10_099.1, rel=0.15)
    assert estimate_alms(GBARE, cal) == pytest.approx(2_710.5, rel=0.15)
    assert estimate_alms(DIST, cal) == pytest.approx(2_556.0, rel=0.15)


def test_alut_estimates_within_tolerance(cal):
    assert estimate_aluts(GMAX, cal) == pytest.approx(1_925.0, rel=0.10)
    assert estimate_aluts(GBARE, cal) == pytest.approx(1_913.0, rel=0.10)
    assert estimate_aluts(DIST, cal) == pytest.approx(1_887.0, rel=0.10)


def test_memory_only_alm_family(cal):
    with_reg = DesignPoint.named("global_registered", depth=128, width=512, slaves=0)
    without = DesignPoint.named("global", depth=128, width=512, slaves=0)
    assert estimate_alms(with_reg, cal) == pytest.approx(36_024.1, rel=1e-6)
    assert estimate_alms(without, cal) == pytest.approx(25_731.5, rel=1e-6)


def test_fmax_anchors(cal):
    assert estimate_fmax(GMAX, cal) == pytest.approx(140.0, abs=0.01)
    assert estimate_fmax(DIST, cal) == pytest.approx(210.0, abs=0.01)


def test_fmax_monotone_decreasing(cal):
    bundle = widest_unregistered_bundle(GMAX)
    assert fmax_from_bundle(2 * bundle, cal) < fmax_from_bundle(bundle, cal)
    samples = [fmax_from_bundle(b, cal) for b in range(0, 20_000, 500)]
    assert all(a > b for a, b in zip(samples, samples[1:]))


def test_fmax_orders_distributed_above_centralized(cal):
    for targets in range(26, 227, 40):
        for slaves in (1, 2):
            glob = DesignPoint.named(
                "global_cdc_dest", depth=512, width=32, targets=targets,
                target_width=32, slaves=slaves,
            )
            dist = DesignPoint.named(
                "distributed", targets=targets, target_width=32, slaves=slaves,
            )
            assert estimate_fmax(dist, cal) > estimate_fmax(glob, cal)


def test_point_to_spec_is_valid_and_matches_structure():
    for point in (GMAX, GBARE, DIST):
        spec = point_to_spec(point)
        assert validate(spec).ok
        assert spec.total_setting_bits == point.slaves * point.targets * point.target_width


def test_exactness_against_structural_oracle(cal):
    rng = random.Random(4242)
    topologies = ["global", "global_registered", "global_cdc_dest", "distributed"]
    for trial in range(60):
        topology = topologies[trial % 4]
        targets = rng.randrange(0, 40)
        width = rng.choice([1, 8, 16, 32])
        slaves = rng.randrange(0 if topology != "distributed" else 1, 5)
        point = DesignPoint.named(
            topology,
            depth=max(slaves * targets, 1) * 2,
            width=width,
            targets=targets,
            target_width=width,
            sync_length=rng.choice([2, 3]),
            slaves=slaves,
        )
        flipflops = structural_counts(elaborate_point(point)).flipflops
        assert estimate_registers(point, cal) - register_overhead(point, cal) == flipflops


def test_affine_in_each_knob(cal):
    def regs(**kw):
        return estimate_registers(DesignPoint.named("global_cdc_dest", **kw), cal)

    base = dict(depth=64, width=32, targets=10, target_width=32, slaves=1)
    d1 = regs(**{**base, "targets": 11}) - regs(**base)
    d2 = regs(**{**base, "targets": 12}) - regs(**{**base, "targets": 11})
    assert d1 == d2 == 32 * 3  # w * (L + 1)

    s1 = regs(**{**base, "slaves": 2}) - regs(**base)
    s2 = regs(**{**base, "slaves": 3}) - regs(**{**base, "slaves": 2})
    assert s1 == s2

    m1 = regs(**{**base, "depth": 65}) - regs(**base)
    assert m1 == 32 * 2  # W * (1 + output stage)


def test_calibrate_rejects_empty_corpus():
    with pytest.raises(CalibrationError):
        calibrate([])


def test_calibrate_single_distributed_point():
    cal = calibrate([(DIST, Measurement(registers=7_499))])
    assert cal.c_distributed_per_slave == 267.0


def test_calibrate_global_constant_from_two_points():
    cal = calibrate(
        [
            (GMAX, Measurement(registers=38_146)),
            (GBARE, Measurement(registers=8_258)),
        ]
    )
    assert cal.c_global == 66.0
    assert cal.register_residuals["global"] == [0.0, 0.0]


def test_uncalibrated_family_raises():
    cal = calibrate([(GMAX, Measurement(registers=38_146, alms=10_099.1, aluts=1_925.0))])
    with pytest.raises(UncalibratedError):
        estimate_registers(DIST, cal)
    with pytest.raises(UncalibratedError):
        estimate_aluts(DIST, cal)
    with pytest.raises(UncalibratedError):
        estimate_fmax(GMAX, cal)


def test_sweep_rows_and_csv(cal):
    rows = sweep(cal, ["distributed"], targets=list(range(26, 227, 40)), slaves=[1])
    assert len(rows) == 6
    text = sweep_to_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "topology,D,W,N_t,w,L,S,registers,alms,aluts,fmax_mhz"
    assert len(lines) == 7


def test_sweep_register_columns_affine(cal):
    rows = sweep(
        cal, ["global_cdc_dest"], depths=[256], widths=[32],
        targets=list(range(26, 227, 40)),
    )
    regs = [r.estimate.registers for r in rows]
    diffs = {b - a for a, b in zip(regs, regs[1:])}
    assert len(diffs) == 1
    assert diffs.pop() == 40 * 32 * 3

    rows = sweep(cal, ["distributed"], targets=[64], slaves=[1, 2, 3, 4])
    regs = [r.estimate.registers for r in rows]
    diffs = {b - a for a, b in zip(regs, regs[1:])}
    assert diffs == {64 * 32 + 267}


def test_compare_ratios(cal):
    report = compare(DIST, GMAX, cal)
    assert report.register_ratio == pytest.approx(0.197, abs=0.01)
    assert report.alm_ratio == pytest.approx(0.253, abs=0.03)
    text = report.as_text()
    assert "registers" in text and "0.19" in text


def test_global_grid_bilinear_in_depth_and_width(cal):
    def regs(depth, width):
        return estimate_registers(
            DesignPoint.named("global", depth=depth, width=width), cal
        )

    for width in (8, 16, 32):
        col = [regs(d, width) for d in (16, 32, 64, 128)]
        steps = [b - a for a, b in zip(col, col[1:])]
        assert steps == [16 * width, 32 * width, 64 * width]
    assert regs(0, 0) == 66  # overhead constant alone


def test_compare_zero_target_points_is_overhead_ratio(cal):
    glob = DesignPoint.named("global", depth=0, width=0, targets=0, slaves=0)
    dist = DesignPoint.named("distributed", targets=0, slaves=1)
    report = compare(dist, glob, cal)
    assert report.register_ratio == pytest.approx(267.0 / 66.0)


def test_compare_point_with_itself(cal):
    report = compare(DIST, DIST, cal)
    assert report.register_ratio == 1.0
    assert report.alm_ratio == 1.0
    assert report.alut_ratio == 1.0


def test_calibration_json_round_trip(cal, tmp_path):
    path = tmp_path / "cal.json"
    save_calibration(cal, path)
    loaded = load_calibration(path)
    assert loaded.c_global == cal.c_global
    assert loaded.alm_coeffs == cal.alm_coeffs
    assert loaded.fmax_b0 == cal.fmax_b0
    assert estimate(GMAX, loaded) == estimate(GMAX, cal)
    assert calibration_from_json(calibration_to_json(loaded)).corpus == cal.corpus


def test_shipped_calibration_file_matches_computed(cal):
    from importlib import resources

    text = (resources.files("regforge") / "data" / "default_calibration.json").read_text()
    assert text == calibration_to_json(cal)


def test_default_corpus_registers_are_consistent(cal):
    for point, measured in DEFAULT_CORPUS:
        if measured.registers is not None:
            assert estimate_registers(point, cal) == measured.registers
