"""Synthetic frame source behavior and URI parsing."""
import numpy as np
import pytest

from lapse.errors import FrameReadError, ValidationError
from lapse.sources import SyntheticFrameSource, open_source


def test_frames_are_deterministic():
    a = SyntheticFrameSource("case", 100)
    b = SyntheticFrameSource("case", 100)
    np.testing.assert_array_equal(a.read_frame(42), b.read_frame(42))


def test_frames_differ_by_index_and_name():
    source = SyntheticFrameSource("case", 100)
    assert not np.array_equal(source.read_frame(0), source.read_frame(1))
    other = SyntheticFrameSource("other", 100)
    assert not np.array_equal(source.read_frame(0), other.read_frame(0))


def test_frame_shape_and_range():
    frame = SyntheticFrameSource("case", 10).read_frame(3)
    assert frame.shape == (224, 224, 3)
    assert frame.dtype == np.float32
    assert frame.min() >= 0.0 and frame.max() <= 1.0


def test_frame_count_and_bounds():
    source = SyntheticFrameSource("case", 25)
    assert source.frame_count() == 25
    source.read_frame(24)
    with pytest.raises(FrameReadError):
        source.read_frame(25)
    with pytest.raises(FrameReadError):
        source.read_frame(-1)


def test_zero_frames_rejected():
    with pytest.raises(ValidationError):
        SyntheticFrameSource("case", 0)


def test_open_source_parses_synthetic_uri():
    source = open_source("synthetic://case07?frames=360")
    assert isinstance(source, SyntheticFrameSource)
    assert source.name == "case07"
    assert source.frame_count() == 360
    source.close()


def test_open_source_rejects_malformed_synthetic_uri():
    for uri in (
        "synthetic://case07",
        "synthetic://case07?frames=",
        "synthetic://?frames=10",
        "synthetic://a?frames=ten",
    ):
        with pytest.raises(ValidationError):
            open_source(uri)


def test_open_source_missing_video_file(tmp_path):
    missing = tmp_path / "nope.mp4"
    with pytest.raises(FrameReadError):
        open_source(str(missing))
