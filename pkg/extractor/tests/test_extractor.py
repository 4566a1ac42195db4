import numpy as np
import pytest
from PIL import Image

from asl_extract.cli import cli_main
from asl_extract.detectors import SyntheticDetector, make_detector, DetectorUnavailable
from asl_extract.extractor import extract_landmarks, format_summary

# the extractor's one consumer: the training tooling's landmark parser
from handgcn.dataset_io import read_landmarks


def write_image(path, seed, size=(32, 32)):
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, (*size, 3), dtype=np.uint8)
    Image.fromarray(pixels, "RGB").save(path)


def write_black_image(path, size=(32, 32)):
    Image.fromarray(np.zeros((*size, 3), dtype=np.uint8), "RGB").save(path)


@pytest.fixture
def fixture_root(tmp_path):
    """10 images across 3 classes: 8 detectable, 1 black, 1 corrupt."""
    layout = {"A": 4, "B": 3, "SPACE": 1}
    seed = 0
    for label, count in layout.items():
        d = tmp_path / label
        d.mkdir()
        for i in range(count):
            write_image(d / f"img{i:03d}.png", seed)
            seed += 1
    write_black_image(tmp_path / "A" / "zz_black.png")
    (tmp_path / "B" / "zz_corrupt.jpg").write_bytes(b"not an image at all")
    return tmp_path


class TestExtraction:
    def test_output_parses_through_the_landmark_reader(self, fixture_root, tmp_path):
        out = tmp_path / "landmarks.jsonl"
        summary = extract_landmarks(fixture_root, out, detector=SyntheticDetector())
        poses = read_landmarks(out)  # raises ParseError on any malformed line
        assert len(poses) == summary.ok == 8
        for pose in poses:
            assert len(pose.landmarks) == 21

    def test_counts_per_class(self, fixture_root, tmp_path):
        out = tmp_path / "landmarks.jsonl"
        summary = extract_landmarks(fixture_root, out, detector=SyntheticDetector())
        assert summary.per_class["A"].ok == 4
        assert summary.per_class["A"].no_hand == 1  # the black image
        assert summary.per_class["B"].ok == 3
        assert summary.per_class["B"].unreadable == 1  # the corrupt file
        assert summary.per_class["SPACE"].ok == 1

    def test_labels_come_from_directory_names(self, fixture_root, tmp_path):
        out = tmp_path / "landmarks.jsonl"
        extract_landmarks(fixture_root, out, detector=SyntheticDetector())
        labels = {p.label for p in read_landmarks(out)}
        assert labels == {0, 1, 28}  # A, B, SPACE

    def test_rerun_is_deterministic(self, fixture_root, tmp_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        extract_landmarks(fixture_root, a, detector=SyntheticDetector())
        extract_landmarks(fixture_root, b, detector=SyntheticDetector())
        assert a.read_bytes() == b.read_bytes()

    def test_empty_directory(self, tmp_path):
        root = tmp_path / "empty"
        root.mkdir()
        out = tmp_path / "landmarks.jsonl"
        summary = extract_landmarks(root, out, detector=SyntheticDetector())
        assert summary.ok == summary.no_hand == summary.unreadable == 0
        assert read_landmarks(out) == []

    def test_unknown_class_directory_is_skipped(self, tmp_path):
        d = tmp_path / "NOT_A_CLASS"
        d.mkdir()
        write_image(d / "img.png", 1)
        out = tmp_path / "landmarks.jsonl"
        summary = extract_landmarks(tmp_path, out, detector=SyntheticDetector())
        assert summary.skipped_dirs == ["NOT_A_CLASS"]
        assert read_landmarks(out) == []

    def test_missing_root(self, tmp_path):
        with pytest.raises(NotADirectoryError):
            extract_landmarks(tmp_path / "nope", tmp_path / "out.jsonl",
                              detector=SyntheticDetector())

    def test_low_confidence_detections_are_rejected(self, fixture_root, tmp_path):
        out = tmp_path / "landmarks.jsonl"
        summary = extract_landmarks(
            fixture_root, out, min_confidence=0.999, detector=SyntheticDetector()
        )
        assert summary.ok == 0  # the synthetic backend reports 0.99
        assert summary.no_hand == 9

    def test_summary_formatting(self, fixture_root, tmp_path):
        summary = extract_landmarks(fixture_root, tmp_path / "o.jsonl",
                                    detector=SyntheticDetector())
        text = format_summary(summary)
        assert "total" in text and "no_hand" in text


class TestCli:
    def test_synthetic_backend_end_to_end(self, fixture_root, tmp_path, capsys):
        out = tmp_path / "landmarks.jsonl"
        code = cli_main(["--images", str(fixture_root), "--out", str(out),
                         "--detector", "synthetic"])
        assert code == 0
        assert "total" in capsys.readouterr().out
        assert len(read_landmarks(out)) == 8

    def test_missing_directory_is_an_error(self, tmp_path, capsys):
        code = cli_main(["--images", str(tmp_path / "missing"),
                         "--out", str(tmp_path / "o.jsonl"), "--detector", "synthetic"])
        assert code == 2

    def test_unknown_backend(self):
        with pytest.raises(DetectorUnavailable):
            make_detector("quantum", 0.5)

    def test_mediapipe_backend_unavailable_is_reported(self, fixture_root, tmp_path, capsys):
        try:
            import mediapipe  # noqa: F401
            pytest.skip("mediapipe installed; unavailability path not testable")
        except ImportError:
            pass
        code = cli_main(["--images", str(fixture_root), "--out", str(tmp_path / "o.jsonl")])
        assert code == 2
        assert "mediapipe" in capsys.readouterr().err
