import numpy as np
import pytest

from tempogen.audio import load_wav, save_wav
from tempogen.captions import render_tdc
from tempogen.curation import detect_overlaps
from tempogen.manifest import read_manifest, resolve_audio_path
from tempogen.simulate import (
    Placement,
    PlacementOutOfBoundsError,
    SceneSpec,
    SimulationConfig,
    SimulationError,
    UnknownLabelError,
    build_demo_bank,
    generate_dataset,
    label_to_description,
    load_event_bank,
    load_mapping_table,
    place_event,
    simulate_scene,
)

SR = 16000


@pytest.fixture(scope="module")
def bank_and_table(tmp_path_factory):
    root = tmp_path_factory.mktemp("bank")
    bank_path, mapping_path = build_demo_bank(root, seed=3)
    return load_event_bank(bank_path), load_mapping_table(mapping_path)


class TestWav:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        wave = (0.8 * rng.standard_normal(SR)).clip(-1, 1).astype(np.float32)
        path = tmp_path / "x.wav"
        save_wav(path, wave, SR)
        loaded, sr = load_wav(path)
        assert sr == SR
        assert np.max(np.abs(loaded - wave)) < 1.0 / 32767

    def test_save_load_save_stable(self, tmp_path):
        rng = np.random.default_rng(1)
        wave = (0.5 * rng.standard_normal(1000)).astype(np.float32)
        a, b = tmp_path / "a.wav", tmp_path / "b.wav"
        save_wav(a, wave, SR)
        save_wav(b, load_wav(a)[0], SR)
        assert a.read_bytes() == b.read_bytes()


class TestPlaceEvent:
    def test_zero_clip_no_change(self):
        timeline = np.zeros(SR, dtype=np.float32)
        out = place_event(timeline, np.zeros(100, dtype=np.float32), 0.5, 1.0, SR)
        assert np.array_equal(out, timeline)

    def test_impulse_placement(self):
        timeline = np.zeros(2 * SR, dtype=np.float32)
        clip = np.zeros(10, dtype=np.float32)
        clip[0] = 1.0
        out = place_event(timeline, clip, 1.0, 0.5, SR)
        assert out[SR] == pytest.approx(0.5)
        assert np.count_nonzero(out) == 1

    def test_linearity(self):
        rng = np.random.default_rng(5)
        timeline = np.zeros(SR, dtype=np.float32)
        clip_a = rng.standard_normal(1000).astype(np.float32)
        clip_b = rng.standard_normal(800).astype(np.float32)
        both = place_event(place_event(timeline, clip_a, 0.1, 1.0, SR), clip_b, 0.3, 1.0, SR)
        separate = (
            place_event(timeline, clip_a, 0.1, 1.0, SR)
            + place_event(timeline, clip_b, 0.3, 1.0, SR)
        )
        assert np.max(np.abs(both - separate)) < 1e-6

    def test_out_of_bounds(self):
        timeline = np.zeros(SR, dtype=np.float32)
        clip = np.zeros(2 * SR, dtype=np.float32)
        with pytest.raises(PlacementOutOfBoundsError):
            place_event(timeline, clip, 0.0, 1.0, SR)
        with pytest.raises(PlacementOutOfBoundsError):
            place_event(timeline, np.zeros(10, dtype=np.float32), -0.5, 1.0, SR)


class TestLabelToDescription:
    def test_uniform_pick(self):
        table = {"dog": ["a dog is barking and yipping", "barking from a dog"]}
        rng = np.random.default_rng(0)
        picks = {label_to_description("dog", table, rng) for _ in range(50)}
        assert picks == set(table["dog"])

    def test_single_entry(self):
        table = {"dog": ["only one"]}
        assert label_to_description("dog", table, np.random.default_rng(0)) == "only one"

    def test_unknown_label(self):
        with pytest.raises(UnknownLabelError):
            label_to_description("cat", {"dog": ["x"]}, np.random.default_rng(0))

    def test_empirical_frequencies(self):
        table = {"dog": ["a", "b"]}
        rng = np.random.default_rng(42)
        n = 10_000
        draws = sum(label_to_description("dog", table, rng) == "a" for _ in range(n))
        # 3 sigma of Binomial(n, 0.5)
        assert abs(draws - n / 2) < 3 * np.sqrt(n * 0.25)


class TestSimulateScene:
    def test_single_event_annotation(self, bank_and_table):
        bank, table = bank_and_table
        spec = SceneSpec(duration=5.0, placements=(Placement("beep", 1.0),), seed=11)
        scene = simulate_scene(spec, bank, table)
        assert len(scene.annotation.items) == 1
        desc, iv = scene.annotation.items[0]
        assert iv.onset == 1.0
        assert desc in table["beep"]
        assert scene.tcc == desc
        assert len(scene.waveform) == 5 * SR

    def test_determinism(self, bank_and_table):
        bank, table = bank_and_table
        spec = SceneSpec(
            duration=8.0,
            placements=(
                Placement("beep", 0.5), Placement("noise", 2.0),
                Placement("thump", 4.0), Placement("ring", 6.0),
            ),
            seed=99,
        )
        a = simulate_scene(spec, bank, table)
        b = simulate_scene(spec, bank, table)
        assert np.array_equal(a.waveform, b.waveform)
        assert a.tcc == b.tcc
        assert render_tdc(a.tdc) == render_tdc(b.tdc)

    def test_waveform_is_sum_of_placements(self, bank_and_table):
        bank, table = bank_and_table
        placements = (Placement("beep", 0.5, 0.3), Placement("noise", 3.0, 0.3))
        spec = SceneSpec(duration=6.0, placements=placements, seed=4)
        mixed = simulate_scene(spec, bank, table)
        assert mixed.peak_scale == 1.0
        singles = [
            simulate_scene(SceneSpec(duration=6.0, placements=(p,), seed=4), bank, table)
            for p in placements
        ]
        total = sum(s.waveform for s in singles)
        assert np.max(np.abs(mixed.waveform - total)) < 1e-6

    def test_same_label_twice_one_event(self, bank_and_table):
        bank, table = bank_and_table
        spec = SceneSpec(
            duration=6.0,
            placements=(Placement("beep", 0.5), Placement("beep", 3.0)),
            seed=2,
        )
        scene = simulate_scene(spec, bank, table)
        assert len(scene.tdc.events) == 1
        assert len(scene.tdc.events[0].intervals) == 2

    def test_peak_rescale(self, bank_and_table):
        bank, table = bank_and_table
        spec = SceneSpec(
            duration=3.0,
            placements=(Placement("beep", 1.0, 2.0), Placement("ring", 1.0, 2.0)),
            seed=1,
        )
        scene = simulate_scene(spec, bank, table)
        assert scene.peak_scale < 1.0
        assert np.max(np.abs(scene.waveform)) <= 1.0 + 1e-6

    def test_annotation_energy_soundness(self, bank_and_table):
        bank, table = bank_and_table
        placements = (Placement("beep", 0.5), Placement("thump", 3.0))
        full = simulate_scene(SceneSpec(6.0, placements, 7), bank, table)
        without = simulate_scene(SceneSpec(6.0, placements[:1], 7), bank, table)
        desc, iv = full.annotation.items[1]
        lo, hi = int(iv.onset * SR), int(iv.offset * SR)
        assert np.sum(full.waveform[lo:hi] ** 2) >= np.sum(without.waveform[lo:hi] ** 2)

    def test_scene_spec_event_count_bounds(self):
        with pytest.raises(SimulationError):
            SceneSpec(duration=5.0, placements=(), seed=0)
        with pytest.raises(SimulationError):
            SceneSpec(
                duration=5.0,
                placements=tuple(Placement(f"l{i}", 0.0) for i in range(5)),
                seed=0,
            )


class TestGenerateDataset:
    def test_empty(self, bank_and_table, tmp_path):
        bank, table = bank_and_table
        records = generate_dataset(0, SimulationConfig(), bank, table, tmp_path, seed=0)
        assert records == []
        assert (tmp_path / "manifest.jsonl").read_text() == ""

    def test_reproducible_bytes(self, bank_and_table, tmp_path):
        bank, table = bank_and_table
        config = SimulationConfig(clip_seconds=4.0)
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        generate_dataset(12, config, bank, table, dir_a, seed=123)
        generate_dataset(12, config, bank, table, dir_b, seed=123)
        for name in sorted(p.name for p in dir_a.iterdir()):
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes(), name

    def test_records_satisfy_bounds(self, bank_and_table, tmp_path):
        bank, table = bank_and_table
        config = SimulationConfig(clip_seconds=7.5)
        records = generate_dataset(30, config, bank, table, tmp_path, seed=5)
        for record in records:
            assert record.source == "simulated"
            assert record.strength == "strong"
            assert 1 <= len(record.tdc.events) <= 4
            assert record.tdc.max_offset() <= 7.5 + 1e-9
        manifest = read_manifest(tmp_path / "manifest.jsonl")
        assert len(manifest) == 30
        wave, sr = load_wav(resolve_audio_path(tmp_path / "manifest.jsonl", manifest[0]))
        assert sr == SR and len(wave) == int(7.5 * SR)

    def test_disjoint_only(self, bank_and_table, tmp_path):
        bank, table = bank_and_table
        config = SimulationConfig(clip_seconds=9.0, disjoint_only=True)
        records = generate_dataset(20, config, bank, table, tmp_path, seed=9)
        for record in records:
            assert detect_overlaps(record.tdc) == []
