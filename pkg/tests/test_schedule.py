import math

import pytest

from distilner.schedule import (
    LrSpec,
    ScheduleSpec,
    emit_curves,
    lr_at_epoch,
    paper_curve_family,
    parse_curves,
    render_curves_svg,
    w0,
    w1,
)

PAPER_K = (2, 4, 8, 16, 32)
PAPER_N = (0.1, 0.2, 0.5, 1, 2, 5, 10)


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown schedule kind"):
            ScheduleSpec("linear", 20)

    def test_sigmoid_needs_k(self):
        with pytest.raises(ValueError, match="k > 0"):
            ScheduleSpec("sigmoid", 20)
        with pytest.raises(ValueError, match="k > 0"):
            ScheduleSpec("sigmoid", 20, k=-1)

    def test_power_needs_n(self):
        with pytest.raises(ValueError, match="n > 0"):
            ScheduleSpec("power", 20)

    def test_params_rejected_on_other_kinds(self):
        with pytest.raises(ValueError):
            ScheduleSpec("cosine", 20, k=2)
        with pytest.raises(ValueError):
            ScheduleSpec("simple_mix", 20, n=1)

    def test_t_bounds(self):
        with pytest.raises(ValueError):
            ScheduleSpec("cosine", 0)
        spec = ScheduleSpec("cosine", 1)
        with pytest.raises(ValueError, match="T >= 2"):
            w0(spec, 0)

    def test_epoch_out_of_range(self):
        spec = ScheduleSpec("pure_distilled", 5)
        with pytest.raises(ValueError, match="out of range"):
            w0(spec, 5)
        with pytest.raises(ValueError, match="out of range"):
            w0(spec, -1)


class TestClosedForms:
    def test_pure_schedules(self):
        assert w0(ScheduleSpec("pure_distilled", 20), 7) == 1.0
        assert w0(ScheduleSpec("pure_original", 20), 7) == 0.0

    def test_simple_mix_split(self):
        spec = ScheduleSpec("simple_mix", 20)
        assert w0(spec, 9) == 1.0
        assert w0(spec, 10) == 0.0
        assert [w0(spec, t) for t in range(20)].count(1.0) == 10

    def test_simple_mix_odd_T(self):
        spec = ScheduleSpec("simple_mix", 5)
        assert [w0(spec, t) for t in range(5)] == [1.0, 1.0, 1.0, 0.0, 0.0]

    def test_sigmoid_midpoint_exact(self):
        for k in PAPER_K:
            spec = ScheduleSpec("sigmoid", 21, k=k)
            assert w0(spec, 10) == 0.5

    def test_sigmoid_against_high_precision_oracle(self):
        import mpmath

        mpmath.mp.dps = 50
        for k in PAPER_K:
            spec = ScheduleSpec("sigmoid", 20, k=k)
            for t in range(20):
                x = mpmath.mpf(t) / 19
                expected = 1 - 1 / (1 + mpmath.e ** (-k * (x - mpmath.mpf("0.5"))))
                assert w0(spec, t) == pytest.approx(float(expected), abs=1e-15)

    def test_sigmoid_k32_t0(self):
        assert w0(ScheduleSpec("sigmoid", 20, k=32), 0) == pytest.approx(
            1 - 1 / (1 + math.exp(16)), abs=1e-15
        )

    def test_cosine_boundaries_exact(self):
        spec = ScheduleSpec("cosine", 20)
        assert w0(spec, 0) == 1.0
        assert w0(spec, 19) == 0.0

    def test_cosine_midpoint(self):
        assert w0(ScheduleSpec("cosine", 21), 10) == 0.5

    def test_power_quarter_point(self):
        assert w0(ScheduleSpec("power", 5, n=0.5), 1) == 0.5

    def test_power_boundaries_exact(self):
        for n in PAPER_N:
            spec = ScheduleSpec("power", 20, n=n)
            assert w0(spec, 0) == 1.0
            assert w0(spec, 19) == 0.0

    def test_all_blend_sentinel(self):
        spec = ScheduleSpec("all_blend", 20)
        assert w0(spec, 3) == 1.0
        assert w1(spec, 3) == 1.0

    def test_w1_trivials(self):
        assert w1(ScheduleSpec("pure_distilled", 20), 0) == 0.0
        spec = ScheduleSpec("sigmoid", 20, k=8)
        for t in range(20):
            assert w0(spec, t) + w1(spec, t) == 1.0


class TestInvariants:
    def test_range_monotone_complement_over_paper_grid(self):
        for spec in paper_curve_family(20):
            values = [w0(spec, t) for t in range(20)]
            assert all(0.0 <= v <= 1.0 for v in values), spec.label()
            assert all(a >= b for a, b in zip(values, values[1:])), spec.label()
            assert all(w0(spec, t) + w1(spec, t) == 1.0 for t in range(20)), spec.label()

    def test_sigmoid_symmetry(self):
        for k in PAPER_K:
            spec = ScheduleSpec("sigmoid", 20, k=k)
            for t in range(20):
                assert w0(spec, t) + w0(spec, 19 - t) == pytest.approx(1.0, abs=1e-12)


class TestLrSchedule:
    def test_paper_values_within_one_ulp(self):
        spec = LrSpec(1e-5, 0.95)
        for t, expected in [(0, 1e-5), (1, 9.5e-6), (2, 9.025e-6)]:
            got = lr_at_epoch(spec, t)
            assert abs(got - expected) <= math.ulp(expected), (t, got)

    def test_no_decay_constant(self):
        spec = LrSpec(1e-5, 1.0)
        assert all(lr_at_epoch(spec, t) == 1e-5 for t in range(50))

    def test_validation(self):
        with pytest.raises(ValueError):
            LrSpec(0.0)
        with pytest.raises(ValueError):
            LrSpec(1e-5, 0.0)
        with pytest.raises(ValueError):
            LrSpec(1e-5, 1.5)
        with pytest.raises(ValueError):
            lr_at_epoch(LrSpec(1e-5), -1)


class TestCurveEmission:
    def test_single_spec_row_count(self):
        text = emit_curves([ScheduleSpec("cosine", 20)])
        rows = text.strip().splitlines()
        assert len(rows) == 21  # header + 20 epochs

    def test_paper_family_is_fourteen_curves(self):
        specs = paper_curve_family(20)
        assert len(specs) == 14
        kinds = [s.kind for s in specs]
        assert kinds.count("simple_mix") == 1
        assert kinds.count("sigmoid") == 5
        assert kinds.count("cosine") == 1
        assert kinds.count("power") == 7
        rows = parse_curves(emit_curves(specs))
        assert len(rows) == 14 * 20

    def test_csv_round_trip_exact(self):
        specs = paper_curve_family(20)
        rows = parse_curves(emit_curves(specs))
        expected = [(s.kind, s.params_label(), t, w0(s, t)) for s in specs for t in range(20)]
        assert rows == expected  # repr round-trips doubles exactly

    def test_params_column(self):
        rows = parse_curves(emit_curves([ScheduleSpec("sigmoid", 3, k=32)]))
        assert rows[0][:2] == ("sigmoid", "k=32")
        rows = parse_curves(emit_curves([ScheduleSpec("power", 3, n=0.5)]))
        assert rows[0][:2] == ("power", "n=0.5")

    def test_svg_contains_all_curves(self):
        specs = paper_curve_family(20)
        svg = render_curves_svg(specs)
        assert svg.count("<polyline") == 14
        assert "sigmoid(k=32)" in svg and "power(n=0.1)" in svg
