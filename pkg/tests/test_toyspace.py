import numpy as np
import pytest

from tempogen.captions import Interval
from tempogen.toyspace import (
    LatentEventDetector,
    ToyRecord,
    UnknownTemplateError,
    detect_latent_events,
    draw_toy_record,
    load_templates,
    make_template_banks,
    save_templates,
    synthesize_latent,
)

LABELS = ["alarm", "dog", "engine", "speech"]
FD = 0.05


@pytest.fixture(scope="module")
def banks():
    return make_template_banks(LABELS, dim=12, rng=np.random.default_rng(0), shift_cos=0.25)


class TestTemplates:
    def test_orthonormal(self, banks):
        canonical, shifted = banks
        mat = np.stack([canonical[l] for l in LABELS])
        gram = mat @ mat.T
        assert np.allclose(gram, np.eye(len(LABELS)), atol=1e-10)
        for label in LABELS:
            assert np.linalg.norm(shifted[label]) == pytest.approx(1.0)

    def test_shift_cosine(self, banks):
        canonical, shifted = banks
        for i, label in enumerate(LABELS):
            assert canonical[label] @ shifted[label] == pytest.approx(0.25, abs=1e-10)
            for other in LABELS:
                if other != label:
                    assert canonical[other] @ shifted[label] == pytest.approx(0.0, abs=1e-10)

    def test_dim_guard(self):
        with pytest.raises(Exception):
            make_template_banks(LABELS, dim=4, rng=np.random.default_rng(0))

    def test_file_round_trip(self, banks, tmp_path):
        canonical, _ = banks
        path = tmp_path / "templates.json"
        save_templates(path, canonical)
        loaded = load_templates(path)
        for label in LABELS:
            assert np.allclose(loaded[label], canonical[label])


class TestSynthDetectRoundTrip:
    def test_noiseless_round_trip(self, banks):
        canonical, _ = banks
        events = [
            ("dog", (Interval(0.5, 1.5),)),
            ("alarm", (Interval(2.0, 2.6), Interval(3.4, 4.0))),
        ]
        latent = synthesize_latent(events, canonical, duration=5.0, frame_duration=FD)
        recovered = detect_latent_events(latent, canonical, threshold=0.4, frame_duration=FD)
        by_label = {}
        for label, iv in recovered.items:
            by_label.setdefault(label, []).append(iv)
        assert set(by_label) == {"dog", "alarm"}
        for label, intervals in events:
            got = by_label[label]
            assert len(got) == len(intervals)
            for want, have in zip(intervals, got):
                assert abs(want.onset - have.onset) <= FD + 1e-9
                assert abs(want.offset - have.offset) <= FD + 1e-9

    def test_all_zero_latent_empty(self, banks):
        canonical, _ = banks
        latent = np.zeros((40, 12))
        assert detect_latent_events(latent, canonical, frame_duration=FD).items == []

    def test_threshold_above_max_empty(self, banks):
        canonical, _ = banks
        events = [("dog", (Interval(0.0, 1.0),))]
        latent = synthesize_latent(events, canonical, 2.0, FD)
        out = detect_latent_events(latent, canonical, threshold=1.5, frame_duration=FD)
        assert out.items == []

    def test_overlapping_events_both_detected(self, banks):
        canonical, _ = banks
        events = [("dog", (Interval(0.0, 2.0),)), ("engine", (Interval(1.0, 3.0),))]
        latent = synthesize_latent(events, canonical, 3.0, FD)
        out = detect_latent_events(latent, canonical, threshold=0.4, frame_duration=FD)
        labels = {label for label, _ in out.items}
        assert labels == {"dog", "engine"}

    def test_single_frame_gap_bridged(self, banks):
        canonical, _ = banks
        latent = np.zeros((10, 12))
        template = canonical["dog"]
        latent[2:4] = template
        latent[5:7] = template  # one-frame gap at 4
        out = detect_latent_events(latent, canonical, threshold=0.4, frame_duration=FD)
        dog = [iv for label, iv in out.items if label == "dog"]
        assert len(dog) == 1
        assert dog[0] == Interval(2 * FD, 7 * FD)

    def test_two_frame_gap_not_bridged(self, banks):
        canonical, _ = banks
        latent = np.zeros((10, 12))
        template = canonical["dog"]
        latent[2:4] = template
        latent[6:8] = template  # two-frame gap at 4,5
        out = detect_latent_events(latent, canonical, threshold=0.4, frame_duration=FD)
        dog = [iv for label, iv in out.items if label == "dog"]
        assert len(dog) == 2

    def test_unknown_template_on_synthesis(self, banks):
        canonical, _ = banks
        with pytest.raises(UnknownTemplateError):
            synthesize_latent([("ghost", (Interval(0, 1),))], canonical, 2.0, FD)

    def test_noise_robustness(self, banks):
        canonical, _ = banks
        events = [("speech", (Interval(1.0, 2.0),))]
        latent = synthesize_latent(
            events, canonical, 3.0, FD, noise_scale=0.05, rng=np.random.default_rng(5)
        )
        out = detect_latent_events(latent, canonical, threshold=0.4, frame_duration=FD)
        speech = [iv for label, iv in out.items if label == "speech"]
        assert len(speech) == 1


class TestDetectorEstimator:
    def test_predict(self, banks):
        canonical, _ = banks
        detector = LatentEventDetector(templates=canonical, frame_duration=FD)
        latent = synthesize_latent([("dog", (Interval(0.0, 1.0),))], canonical, 2.0, FD)
        out = detector.fit().predict(latent)
        assert out.items and out.items[0][0] == "dog"

    def test_params(self, banks):
        canonical, _ = banks
        detector = LatentEventDetector(templates=canonical, threshold=0.3)
        assert detector.get_params()["threshold"] == 0.3

    def test_empty_templates_rejected(self):
        with pytest.raises(UnknownTemplateError):
            LatentEventDetector(templates={}).fit()


class TestDrawToyRecord:
    def test_deterministic(self, banks):
        canonical, _ = banks
        mapping = {l: [f"the {l} sound", f"a {l} noise"] for l in LABELS}

        def draw(seed):
            return draw_toy_record(
                np.random.default_rng(seed), LABELS, mapping, canonical,
                duration=5.0, frame_duration=FD,
            )

        a, b = draw(7), draw(7)
        assert a.labels == b.labels
        assert a.descriptions == b.descriptions
        assert a.intervals == b.intervals
        assert np.array_equal(a.latent, b.latent)

    def test_event_count_in_range(self, banks):
        canonical, _ = banks
        mapping = {l: [l] for l in LABELS}
        rng = np.random.default_rng(1)
        for _ in range(30):
            record = draw_toy_record(
                rng, LABELS, mapping, canonical, duration=5.0, frame_duration=FD,
                n_events=(2, 4),
            )
            assert 2 <= len(record.labels) <= 4
            assert len(set(record.labels)) == len(record.labels)
            for ivs in record.intervals:
                for iv in ivs:
                    assert iv.offset <= 5.0 + 1e-9

    def test_disjoint_mode(self, banks):
        canonical, _ = banks
        from tempogen.curation import detect_overlaps

        mapping = {l: [l] for l in LABELS}
        rng = np.random.default_rng(2)
        for _ in range(20):
            record = draw_toy_record(
                rng, LABELS, mapping, canonical, duration=6.0, frame_duration=FD,
                disjoint=True, event_seconds=(0.4, 1.0),
            )
            assert detect_overlaps(record.label_annotation().to_timed_caption()) == []

    def test_caption_and_annotation_consistent(self, banks):
        canonical, _ = banks
        mapping = {l: [f"a {l}"] for l in LABELS}
        record = draw_toy_record(
            np.random.default_rng(3), LABELS, mapping, canonical,
            duration=4.0, frame_duration=FD,
        )
        caption = record.caption()
        assert caption.descriptions == record.descriptions
        assert record.tcc == " and ".join(record.descriptions)
        annotation = record.label_annotation()
        assert {label for label, _ in annotation.items} == set(record.labels)
