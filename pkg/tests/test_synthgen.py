"""Synthetic cohort generator: determinism, physiology bounds, gap injection."""

import numpy as np
import pytest

from hrfill.errors import DataError
from hrfill.ingest import align_streams, parse_channel_file
from hrfill.synthgen import (
    GapPattern,
    SynthConfig,
    generate_cohort,
    generate_participant,
    inject_gaps,
    participant_id,
    write_participant_dir,
)


class TestDeterminism:
    def test_same_seed_same_bytes(self):
        cfg = SynthConfig(seed=9, n_participants=2, duration=7200)
        a = generate_participant(cfg, 1)
        b = generate_participant(cfg, 1)
        assert a.hr.values.tobytes() == b.hr.values.tobytes()
        assert a.accel.values.tobytes() == b.accel.values.tobytes()
        assert a.gps.values.tobytes() == b.gps.values.tobytes()
        assert a.hr_truth.tobytes() == b.hr_truth.tobytes()

    def test_different_index_different_series(self):
        cfg = SynthConfig(seed=9, n_participants=2, duration=7200)
        a = generate_participant(cfg, 0)
        b = generate_participant(cfg, 1)
        assert a.participant_id != b.participant_id
        assert a.hr.values.tobytes() != b.hr.values.tobytes()

    def test_cohort_matches_individuals(self):
        cfg = SynthConfig(seed=10, n_participants=3, duration=3600)
        cohort = generate_cohort(cfg)
        assert [p.participant_id for p in cohort] == [participant_id(i) for i in range(3)]
        solo = generate_participant(cfg, 2)
        assert cohort[2].hr.values.tobytes() == solo.hr.values.tobytes()


class TestPhysiology:
    def test_rest_accelerometer_is_exactly_one_g(self):
        cfg = SynthConfig(seed=11, n_participants=1, duration=7200, activity_rate=0.0)
        part = generate_participant(cfg, 0)
        np.testing.assert_array_equal(
            part.accel.values, np.tile([0.0, 0.0, 1.0], (len(part.accel), 1))
        )

    def test_quiet_config_is_pure_function_of_clock(self):
        cfg = SynthConfig(
            seed=12, n_participants=1, duration=2 * 86_400, noise_std=0.0, activity_rate=0.0
        )
        part = generate_participant(cfg, 0)
        day1 = part.hr_truth[:86_400]
        day2 = part.hr_truth[86_400:]
        np.testing.assert_array_equal(day1, day2)

    def test_heart_rate_clamped_to_physiological_range(self):
        cfg = SynthConfig(
            seed=13, n_participants=1, duration=86_400, activity_hr_gain=2000.0, noise_std=30.0
        )
        part = generate_participant(cfg, 0)
        assert part.hr_truth.min() >= 30.0
        assert part.hr_truth.max() <= 220.0
        assert part.n_clamped > 0

    def test_gps_is_periodic_and_in_one_neighborhood(self):
        cfg = SynthConfig(seed=14, n_participants=4, duration=86_400)
        for i in range(4):
            part = generate_participant(cfg, i)
            assert len(part.gps) == 86_400 // cfg.gps_interval_s
            lat = part.gps.values[:, 0]
            lon = part.gps.values[:, 1]
            assert np.all((lat > 39.9) & (lat < 40.1))
            assert np.all((lon > -105.1) & (lon < -104.9))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(duration=100)
        with pytest.raises(ValueError):
            SynthConfig(noise_std=-1.0)
        with pytest.raises(ValueError):
            SynthConfig(hr_baseline_range=(30.0, 90.0))
        with pytest.raises(ValueError):
            SynthConfig(circadian_phase_jitter_h=12.0)
        with pytest.raises(ValueError):
            SynthConfig(activity_gain_spread=1.0)


class TestInjectGaps:
    @pytest.fixture()
    def part(self):
        return generate_participant(SynthConfig(seed=15, n_participants=1, duration=86_400), 0)

    def test_mask_equals_removed_seconds(self, part):
        kept, mask = inject_gaps(part.hr, GapPattern.random_dropout(0.2), seed=3)
        all_secs = (part.hr.timestamps_ms + 499) // 1000
        kept_secs = (kept.timestamps_ms + 499) // 1000
        removed = np.setdiff1d(all_secs, kept_secs)
        np.testing.assert_array_equal(mask.seconds(), removed)
        assert len(kept) + mask.total_seconds() == len(part.hr)

    def test_zero_dropout_is_noop(self, part):
        kept, mask = inject_gaps(part.hr, GapPattern.random_dropout(0.0), seed=3)
        assert len(kept) == len(part.hr)
        assert mask.total_seconds() == 0

    def test_dropout_count_near_expectation(self, part):
        p = 0.1
        n = len(part.hr)
        _, mask = inject_gaps(part.hr, GapPattern.random_dropout(p), seed=4)
        bound = 4.0 * np.sqrt(n * p * (1 - p))
        assert abs(mask.total_seconds() - n * p) < bound

    def test_nightly_hours_only(self, part):
        _, mask = inject_gaps(part.hr, GapPattern.nightly_nonwear(start_hour=23.0, hours=8.0))
        hod = (mask.seconds() % 86_400) / 3600.0
        in_window = (hod >= 23.0) | (hod < 7.0)
        assert in_window.all()
        assert mask.total_seconds() == 8 * 3600

    def test_battery_cuts_tail(self):
        part = generate_participant(SynthConfig(seed=16, n_participants=1, duration=3 * 86_400), 0)
        kept, mask = inject_gaps(part.hr, GapPattern.battery(depletion_day=2))
        cutoff = part.start_epoch_s + 2 * 86_400
        assert kept.timestamps_ms.max() < cutoff * 1000
        assert mask.seconds().min() == cutoff
        assert mask.total_seconds() == 86_400

    def test_pattern_union(self):
        part = generate_participant(SynthConfig(seed=19, n_participants=1, duration=2 * 86_400), 0)
        nightly = GapPattern.nightly_nonwear()
        battery = GapPattern.battery(depletion_day=1)
        _, m_union = inject_gaps(part.hr, [nightly, battery], seed=5)
        _, m_night = inject_gaps(part.hr, nightly, seed=5)
        _, m_batt = inject_gaps(part.hr, battery, seed=5)
        union = np.union1d(m_night.seconds(), m_batt.seconds())
        np.testing.assert_array_equal(m_union.seconds(), union)

    def test_dropping_everything_rejected(self, part):
        with pytest.raises(DataError):
            inject_gaps(part.hr, GapPattern.random_dropout(1.0))

    def test_pattern_validation(self):
        with pytest.raises(ValueError):
            GapPattern.random_dropout(1.5)
        with pytest.raises(ValueError):
            GapPattern.nightly_nonwear(start_hour=24.0)
        with pytest.raises(ValueError):
            GapPattern.nightly_nonwear(hours=0.0)
        with pytest.raises(ValueError):
            GapPattern(kind="solar-flare")


class TestParticipantDir:
    def test_files_parse_back(self, tmp_path):
        cfg = SynthConfig(seed=17, n_participants=1, duration=3600)
        part = generate_participant(cfg, 0)
        kept, mask = inject_gaps(part.hr, GapPattern.random_dropout(0.1), seed=6)
        paths = write_participant_dir(part, tmp_path / "p000", hr_records=kept, gaps=mask)

        accel = parse_channel_file(paths["accel"], "accel")
        assert accel.malformed == 0 and len(accel.records) == len(part.accel)
        hr = parse_channel_file(paths["hr"], "hr")
        assert len(hr.records) == len(kept)
        hr_full = parse_channel_file(paths["hr_full"], "hr")
        assert len(hr_full.records) == len(part.hr)
        assert paths["gaps"].exists()

    def test_alignment_of_generated_channels(self):
        cfg = SynthConfig(seed=18, n_participants=1, duration=7200)
        part = generate_participant(cfg, 0)
        stream = align_streams(part.accel, part.gps, part.hr, participant_id=part.participant_id)
        assert len(stream) == cfg.duration
        assert stream.hr_present.all()
        assert stream.accel_present.all()
        assert stream.gps_present.all()  # 15 s fixes held well under the 60 s horizon
        np.testing.assert_array_equal(stream.hr, part.hr_truth)
