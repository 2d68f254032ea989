import collections

import numpy as np
import pytest
from scipy import stats

from mds.midi import polyphony_series, write_smf
from mds.random_gen import (
    DYNAMICS_LEVELS,
    RandomGenConfig,
    generate_piece,
    generate_set,
    generate_voice,
    piece_seed,
    plan_voice,
    set_configs,
    untrimmed_durations,
    write_set,
)


def cfg(p=1, d=0, **kw):
    return RandomGenConfig(polyphony=p, dynamics=DYNAMICS_LEVELS[d], **kw)


def test_dynamics_ranges():
    assert [(v.vel_min, v.vel_max) for v in DYNAMICS_LEVELS.values()] == [(60, 68), (32, 96), (1, 127)]


@pytest.mark.parametrize("kw", [dict(p=0), dict(p=25), dict(pitch_range=(20, 108)), dict(trim_fraction_max=0.6)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        cfg(**kw)


class TestVoice:
    def test_zero_duration_is_empty(self):
        assert generate_voice(cfg(duration=0.0), np.random.default_rng(0)) == []

    def test_expected_length(self):
        c = cfg()
        # Beta(2, 5) mean is 2/7
        assert c.mean_note == pytest.approx(0.01 + 2 / 7 * 4.99)
        counts = [len(plan_voice(c, np.random.default_rng(s))[0]) for s in range(300)]
        # renewal count over 120 s; mean about 120 / 1.436 = 83.6 (+0.5 for the straddling note)
        assert np.mean(counts) == pytest.approx(120 / c.mean_note, rel=0.03)

    def test_plan_is_contiguous_and_reaches_horizon(self):
        on, dur = plan_voice(cfg(), np.random.default_rng(1))
        assert on[0] == 0
        assert np.allclose(on[1:], np.cumsum(dur)[:-1])
        assert on[-1] < 120 <= on[-1] + dur[-1]
        assert np.all((dur >= 0.01) & (dur <= 5.0))

    @pytest.mark.parametrize("d", [0, 1, 2])
    def test_voice_properties(self, d):
        c = cfg(d=d)
        rng = np.random.default_rng(d)
        on, dur = plan_voice(c, np.random.default_rng(d))
        notes = generate_voice(c, rng)
        lvl = DYNAMICS_LEVELS[d]
        assert all(lvl.vel_min <= n.velocity <= lvl.vel_max for n in notes)
        assert all(a.offset <= b.onset for a, b in zip(notes, notes[1:]))
        assert notes[-1].offset <= 120.0
        full = np.minimum(on + dur, 120.0) - on
        for n, a, length in zip(notes, on, full):
            assert a <= n.onset and n.offset <= a + length
            assert n.duration >= 0.98 * length - 1e-12


class TestPiece:
    def test_single_voice_has_no_overlaps(self):
        p = generate_piece(cfg(seed=5))
        assert all(a.offset <= b.onset for a, b in zip(p.notes, p.notes[1:]))
        assert (p.polyphony, p.dynamics) == (1, 0)

    def test_deterministic_bytes(self):
        c = cfg(p=6, d=2, seed=123)
        assert write_smf(generate_piece(c)) == write_smf(generate_piece(c))
        assert write_smf(generate_piece(c)) != write_smf(generate_piece(cfg(p=6, d=2, seed=124)))

    def test_no_same_pitch_overlap(self):
        p = generate_piece(cfg(p=24, seed=9))
        last_off = {}
        for n in p:
            assert last_off.get(n.pitch, -1) <= n.onset
            last_off[n.pitch] = n.offset

    @pytest.mark.parametrize("p", [8, 24])
    def test_polyphony_mode_with_spillage(self, p):
        series = polyphony_series(generate_piece(cfg(p=p, seed=11)), 100)
        counts = collections.Counter(series.tolist())
        assert counts.most_common(1)[0][0] == p
        assert max(counts) == p
        # gaps from trimming only push polyphony downwards, and rarely
        assert counts[p] / len(series) > 0.5
        assert counts[p - 1] > 0


class TestSet:
    def test_sub_seeds_stable_and_distinct(self):
        assert piece_seed(0, 1, 0) == piece_seed(0, 1, 0)
        seeds = {c.seed for c in set_configs(0)}
        assert len(seeds) == 72

    def test_write_set(self, tmp_path):
        manifest = write_set(tmp_path, base_seed=3, jobs=1)
        files = sorted(f.name for f in tmp_path.glob("*.mid"))
        assert len(files) == 72 and files[0] == "rand_p01_d0.mid" and files[-1] == "rand_p24_d2.mid"
        assert manifest["total_hours"] == pytest.approx(2.4)
        assert (tmp_path / "manifest.json").exists()
        assert manifest["pieces"][0]["notes"] > 0

    def test_parallel_equals_serial(self):
        a = generate_set(2, jobs=2, duration=5.0)
        b = generate_set(2, jobs=1, duration=5.0)
        assert a == b

    def test_beta_fit_small_sample(self):
        d = np.concatenate([untrimmed_durations(c) for c in set_configs(4)[:30]])
        assert stats.kstest((d - 0.01) / 4.99, stats.beta(2, 5).cdf).pvalue > 0.01
