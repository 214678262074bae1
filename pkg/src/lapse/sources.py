"""Frame sources: where clip loading gets its pixels.

Two implementations share one protocol: a procedural synthetic source for
tests and demos, and an OpenCV-backed reader for real video files.  Sources
hand out 224x224x3 float frames in [0, 1].
"""
from __future__ import annotations

import hashlib
import re
from typing import Protocol

import numpy as np

from .errors import FrameReadError, ValidationError

FRAME_SHAPE = (224, 224, 3)
SYNTHETIC_SCHEME = "synthetic://"


class FrameSource(Protocol):
    """Anything that can serve individual frames by absolute index."""

    def read_frame(self, index: int) -> np.ndarray: ...

    def frame_count(self) -> int: ...

    def close(self) -> None: ...


class SyntheticFrameSource:
    """Deterministic procedural frames derived from (name, frame index).

    Each frame is a smooth gradient plus seeded per-frame noise, so distinct
    indices give distinct but reproducible images without any file IO.
    """

    def __init__(self, name: str, num_frames: int):
        if num_frames <= 0:
            raise ValidationError(f"num_frames must be positive, got {num_frames}")
        self.name = name
        self.num_frames = num_frames

    def read_frame(self, index: int) -> np.ndarray:
        if not 0 <= index < self.num_frames:
            raise FrameReadError(
                f"frame {index} out of range [0, {self.num_frames}) for {self.name!r}"
            )
        digest = hashlib.sha256(f"{self.name}|{index}".encode()).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        ramp = np.linspace(0.0, 1.0, FRAME_SHAPE[0], dtype=np.float32)
        base = np.outer(ramp, ramp[::-1]).astype(np.float32)
        frame = np.empty(FRAME_SHAPE, dtype=np.float32)
        phase = (index % 97) / 97.0
        for c in range(3):
            frame[:, :, c] = np.clip(base * (0.4 + 0.2 * c) + 0.3 * phase, 0.0, 1.0)
        frame += rng.uniform(-0.05, 0.05, size=FRAME_SHAPE).astype(np.float32)
        return np.clip(frame, 0.0, 1.0)

    def frame_count(self) -> int:
        return self.num_frames

    def close(self) -> None:
        pass


class VideoFileSource:
    """Random-access frames from a video file via OpenCV.

    Frames are resized to 224x224 and converted BGR -> RGB.  Sequential reads
    avoid re-seeking; backwards jumps reposition the decoder.
    """

    def __init__(self, path: str):
        try:
            import cv2
        except ImportError as exc:  # pragma: no cover - depends on extras
            raise FrameReadError(
                "reading video files requires opencv-python (install the "
                "'video' extra)"
            ) from exc
        self._cv2 = cv2
        self.path = path
        self._cap = cv2.VideoCapture(path)
        if not self._cap.isOpened():
            raise FrameReadError(f"could not open video file {path!r}")
        self.num_frames = int(self._cap.get(cv2.CAP_PROP_FRAME_COUNT))
        self._next_index = 0

    def read_frame(self, index: int) -> np.ndarray:
        if index < 0 or (self.num_frames > 0 and index >= self.num_frames):
            raise FrameReadError(
                f"frame {index} out of range [0, {self.num_frames}) for {self.path!r}"
            )
        if index != self._next_index:
            self._cap.set(self._cv2.CAP_PROP_POS_FRAMES, index)
            self._next_index = index
        ok, image = self._cap.read()
        if not ok or image is None:
            raise FrameReadError(f"failed to decode frame {index} of {self.path!r}")
        self._next_index = index + 1
        image = self._cv2.resize(image, (FRAME_SHAPE[1], FRAME_SHAPE[0]))
        image = self._cv2.cvtColor(image, self._cv2.COLOR_BGR2RGB)
        return image.astype(np.float32) / 255.0

    def frame_count(self) -> int:
        return self.num_frames

    def close(self) -> None:
        self._cap.release()


def open_source(uri: str) -> FrameSource:
    """Open a frame source from a path or a synthetic://name?frames=N URI."""
    if uri.startswith(SYNTHETIC_SCHEME):
        rest = uri[len(SYNTHETIC_SCHEME):]
        match = re.fullmatch(r"([^?]+)\?frames=(\d+)", rest)
        if match is None:
            raise ValidationError(
                f"bad synthetic URI {uri!r}; expected synthetic://name?frames=N"
            )
        return SyntheticFrameSource(match.group(1), int(match.group(2)))
    return VideoFileSource(uri)
