import numpy as np
import pytest

from gaitlab.errors import GaitInputError
from gaitlab.events import (
    AngleQuad,
    DerivativeStream,
    EventConfig,
    MinimaDetector,
    MinimumEvent,
    StepSegmenter,
    detect_minima,
    five_point_derivative,
    segment_steps,
)
from gaitlab.signal import UniformSeries

RATE = 25.0


def series(values, t0=0.0, rate=RATE):
    return UniformSeries(t0=t0, rate_hz=rate, values=np.asarray(values, dtype=float))


class TestFivePointDerivative:
    def test_constant_is_zero(self):
        d = five_point_derivative(series(np.full(50, 3.3)))
        assert np.allclose(d.values, 0.0)

    def test_linear_slope_recovered(self):
        k = np.arange(50)
        d = five_point_derivative(series(2.0 * k / RATE))
        assert np.allclose(d.values, 2.0, atol=1e-9)

    def test_exact_for_cubics(self):
        t = np.arange(30) / RATE
        s = 0.3 * t**3 - 2.0 * t**2 + 5.0 * t - 1.0
        want = 0.9 * t**2 - 4.0 * t + 5.0
        d = five_point_derivative(series(s))
        assert np.allclose(d.values[2:-2], want[2:-2], atol=1e-9)

    def test_sinusoid_error_bound(self):
        t = np.arange(0, 4, 1 / RATE)
        d = five_point_derivative(series(np.sin(2 * np.pi * t)))
        want = 2 * np.pi * np.cos(2 * np.pi * t)
        assert np.abs(d.values[2:-2] - want[2:-2]).max() < 1e-3

    def test_length_and_grid_preserved(self):
        s = series(np.random.default_rng(0).normal(size=40), t0=1.5)
        d = five_point_derivative(s)
        assert len(d) == len(s)
        assert d.t0 == s.t0 and d.rate_hz == s.rate_hz

    def test_too_short_rejected(self):
        with pytest.raises(GaitInputError):
            five_point_derivative(series([1.0, 2.0, 3.0, 4.0]))

    def test_streaming_matches_batch_any_chunking(self):
        rng = np.random.default_rng(1)
        s = rng.normal(size=101)
        batch = five_point_derivative(series(s)).values
        for chunk in (1, 3, 7, 50):
            stream = DerivativeStream(RATE)
            got = []
            for lo in range(0, len(s), chunk):
                got.extend(stream.feed(s[lo : lo + chunk]))
            got.extend(stream.finalize())
            assert np.array_equal(np.asarray(got), batch), f"chunk={chunk}"


class TestDetectMinima:
    def test_strictly_increasing_none(self):
        assert detect_minima(series(np.arange(50.0))) == []

    def test_sinusoid_one_per_period(self):
        t = np.arange(0, 5, 1 / RATE)
        s = 20.0 * np.sin(2 * np.pi * 1.0 * t)
        events = detect_minima(series(s), refractory_s=0.3)
        # Troughs at t = 0.75 + k; the last (4.75) has little rise after it
        # but 0.25 s of rising samples is enough to confirm.
        troughs = [0.75 + k for k in range(5)]
        assert len(events) == len(troughs)
        for ev, want in zip(events, troughs):
            assert abs(ev.t - want) <= 1.0 / RATE + 1e-9

    def test_noisy_sinusoid_debounced(self):
        rng = np.random.default_rng(2)
        t = np.arange(0, 10, 1 / RATE)
        s = 20.0 * np.sin(2 * np.pi * t) + rng.normal(0, 0.2, len(t))
        events = detect_minima(series(s), refractory_s=0.3, prominence_deg=1.0)
        assert len(events) == 10

    def test_flat_then_rise_not_an_event(self):
        # A standing plateau followed by a rise has no prominence below the
        # plateau level and must not fire.
        s = np.concatenate([np.zeros(50), np.linspace(0, 40, 50)])
        assert detect_minima(series(s)) == []

    def test_event_value_is_series_sample(self):
        t = np.arange(0, 3, 1 / RATE)
        s = 20.0 * np.sin(2 * np.pi * t)
        for ev in detect_minima(series(s)):
            assert ev.value == s[ev.index]

    def test_refractory_suppresses_double_fire(self):
        # Two dips 0.2 s apart: with a 0.3 s refractory only one survives.
        t = np.arange(0, 2, 1 / RATE)
        s = 10.0 * np.cos(2 * np.pi * 5.0 * t)  # troughs every 0.2 s
        events = detect_minima(series(s), refractory_s=0.3, prominence_deg=1.0)
        spacing = np.diff([ev.t for ev in events])
        assert np.all(spacing >= 0.3 - 1e-9)

    def test_rate_doubling_keeps_timestamps(self):
        # The same analog signal sampled twice as fast: events move by less
        # than one original sample period.
        f = lambda t: 20.0 * np.sin(2 * np.pi * t) + 5.0 * np.sin(2 * np.pi * 0.3 * t)
        t1 = np.arange(0, 8, 1 / RATE)
        t2 = np.arange(0, 8, 1 / (2 * RATE))
        ev1 = detect_minima(series(f(t1)))
        ev2 = detect_minima(series(f(t2), rate=2 * RATE))
        assert len(ev1) == len(ev2)
        for a, b in zip(ev1, ev2):
            assert abs(a.t - b.t) < 1.0 / RATE

    def test_streaming_matches_batch_any_chunking(self):
        rng = np.random.default_rng(3)
        t = np.arange(0, 12, 1 / RATE)
        s = 20.0 * np.sin(2 * np.pi * t) + rng.normal(0, 0.5, len(t))
        batch = detect_minima(series(s))
        for chunk in (1, 5, 17, 200):
            det = MinimaDetector("series", 0.0, RATE, EventConfig())
            stream = DerivativeStream(RATE)
            got = []
            for lo in range(0, len(s), chunk):
                block = s[lo : lo + chunk]
                det.extend_series(block)
                got.extend(det.feed_derivative(stream.feed(block)))
            got.extend(det.feed_derivative(stream.finalize()))
            got.extend(det.finalize())
            assert got == batch, f"chunk={chunk}"


def cosine_quad(n_cycles=6, T=1.0, delta=0.1, rate=RATE):
    """Hand-built two-leg pattern with analytically known event times.

    knee_L minima at t = k*T (value 10); knee_R at k*T + T/2.
    hip_R minima at k*T + delta (value -10); hip_L at k*T + T/2 + delta.
    """
    t = np.arange(0, n_cycles * T, 1 / rate)
    knee_l = 31.0 - 21.0 * np.cos(2 * np.pi * t / T)
    knee_r = 31.0 - 21.0 * np.cos(2 * np.pi * (t - T / 2) / T)
    hip_r = 12.5 - 22.5 * np.cos(2 * np.pi * (t - delta) / T)
    hip_l = 12.5 - 22.5 * np.cos(2 * np.pi * (t - T / 2 - delta) / T)
    return AngleQuad(
        knee_l=series(knee_l),
        knee_r=series(knee_r),
        hip_l=series(hip_l),
        hip_r=series(hip_r),
    )


class TestSegmentSteps:
    def test_steps_alternate_and_pair_events(self):
        quad = cosine_quad(n_cycles=6, T=1.0, delta=0.1)
        steps = segment_steps(quad)
        assert len(steps) >= 8
        sides = [s.front_side for s in steps]
        assert all(a != b for a, b in zip(sides, sides[1:]))
        for s in steps:
            assert 0.0 < s.t_back_event - s.t_front_event <= 2.0
            # Back event follows the front event by delta.
            assert s.t_back_event - s.t_front_event == pytest.approx(0.1, abs=2 / RATE)

    def test_event_angles_sampled_at_events(self):
        quad = cosine_quad()
        steps = segment_steps(quad)
        # Analytic values of the waves at the event instants; the tolerance
        # covers the +-1 sample detection jitter times the local slope.
        alpha_f_true = 12.5 - 22.5 * np.cos(-1.2 * np.pi)
        for s in steps:
            assert s.angles.beta_f == pytest.approx(10.0, abs=1.0)
            assert s.angles.alpha_b == pytest.approx(-10.0, abs=1.0)
            assert s.angles.alpha_f == pytest.approx(alpha_f_true, abs=3.5)

    def test_fifty_percent_phase_shift_back_event_always_found(self):
        quad = cosine_quad(n_cycles=10)
        steps = segment_steps(quad)
        # One L-front and one R-front step per cycle once the pattern is
        # established (the t=0 edge trough has no left prominence).
        assert len(steps) >= 2 * 10 - 3
        diffs = [s.t_back_event - s.t_front_event for s in steps]
        assert np.allclose(diffs, 0.1, atol=2 / RATE)

    def test_missing_back_event_times_out(self):
        quad = cosine_quad(n_cycles=6)
        flat_hip_r = series(np.full(len(quad.hip_r.values), 5.0))
        broken = AngleQuad(
            knee_l=quad.knee_l,
            knee_r=quad.knee_r,
            hip_l=quad.hip_l,
            hip_r=flat_hip_r,
        )
        diags = []
        steps = segment_steps(broken, diagnostics=diags)
        # L-front steps can never complete (their back event is hip_R).
        assert all(s.front_side == "R" for s in steps)
        assert any("discarded" in d for d in diags)

    def test_misaligned_series_rejected(self):
        good = cosine_quad()
        with pytest.raises(GaitInputError):
            AngleQuad(
                knee_l=series(good.knee_l.values, t0=0.5),
                knee_r=good.knee_r,
                hip_l=good.hip_l,
                hip_r=good.hip_r,
            )

    def test_mismatched_rates_rejected(self):
        good = cosine_quad()
        with pytest.raises(GaitInputError):
            AngleQuad(
                knee_l=series(good.knee_l.values, rate=50.0),
                knee_r=good.knee_r,
                hip_l=good.hip_l,
                hip_r=good.hip_r,
            )


class TestTieBreaks:
    def test_simultaneous_events_order(self):
        # Equal timestamps: Left before Right, hip before knee within a side.
        evs = [
            MinimumEvent("knee_R", 10, 0.4, 1.0),
            MinimumEvent("hip_R", 10, 0.4, -1.0),
            MinimumEvent("knee_L", 10, 0.4, 1.0),
            MinimumEvent("hip_L", 10, 0.4, -1.0),
        ]
        evs.sort(key=MinimumEvent.sort_key)
        assert [e.series for e in evs] == ["hip_L", "knee_L", "hip_R", "knee_R"]
