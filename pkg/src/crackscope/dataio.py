"""Dataset ingestion and serialization.

Formats::

    label files        one polygon per line: ``class x1 y1 x2 y2 ...`` with
                       normalized coordinates in [0, 1] and >= 3 vertices
    prediction files   one JSON object per line with keys
                       ``image``, ``class``, ``score``, ``polygon``
    masks              binary (P5) portable graymaps, maxval <= 255

The train/val/test split shuffles with a pinned 64-bit linear congruential
generator (state' = 6364136223846793005 * state + 1442695040888963407
mod 2^64, drawing indices from the top 31 bits) and a Fisher-Yates pass,
then slices contiguously.  The same items and seed give the identical
partition on every platform.

Polygon rasterization uses scanline even-odd filling with the pixel-center
rule: a pixel is foreground iff its center lies inside the polygon.
"""

from __future__ import annotations

import json
import os
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptImage,
    InvalidSplit,
    MalformedLabel,
    MalformedPrediction,
    OutOfRange,
    UnsupportedFormat,
)
from .metrics import DetectionRecord

__all__ = [
    "LabelRecord",
    "SplitSpec",
    "DatasetIndex",
    "parse_label_file",
    "serialize_label_file",
    "polygon_to_mask",
    "split_dataset",
    "read_pgm",
    "write_pgm",
    "read_predictions",
    "serialize_predictions",
    "atomic_write_bytes",
    "atomic_write_text",
]


@dataclass(frozen=True, eq=False)
class LabelRecord:
    """One labeled polygon: class id plus >= 3 normalized (x, y) vertices."""

    class_id: int
    polygon: np.ndarray

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=np.float64)
        if self.class_id < 0:
            raise MalformedLabel(f"class id must be >= 0, got {self.class_id}")
        if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
            raise MalformedLabel(f"polygon needs >= 3 (x, y) vertices, got shape {poly.shape}")
        if poly.min() < 0.0 or poly.max() > 1.0:
            raise OutOfRange("polygon coordinates must lie in [0, 1]")
        object.__setattr__(self, "polygon", poly)


@dataclass(frozen=True)
class SplitSpec:
    """Requested train/val/test sizes and the shuffle seed."""

    train: int
    val: int
    test: int
    seed: int = 0

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0:
            raise InvalidSplit(f"split sizes must be nonnegative: {self}")

    @property
    def total(self) -> int:
        return self.train + self.val + self.test


@dataclass(frozen=True)
class DatasetIndex:
    """Image/label path pairs with per-image pixel extents."""

    entries: tuple  # of (image_path, label_path, width, height)

    @classmethod
    def from_dirs(cls, image_dir: str, label_dir: str) -> "DatasetIndex":
        """Pair ``<stem>.pgm`` images with ``<stem>.txt`` labels; every label
        must parse and every image must carry positive extents."""
        entries = []
        for name in sorted(os.listdir(image_dir)):
            stem, ext = os.path.splitext(name)
            if ext.lower() != ".pgm":
                continue
            label_path = os.path.join(label_dir, stem + ".txt")
            if not os.path.exists(label_path):
                continue
            image_path = os.path.join(image_dir, name)
            with open(image_path, "rb") as fh:
                image = read_pgm(fh.read())
            with open(label_path, "r", encoding="utf-8") as fh:
                parse_label_file(fh.read())
            height, width = image.shape
            entries.append((image_path, label_path, width, height))
        return cls(tuple(entries))


# ---------------------------------------------------------------------------
# label files


def parse_label_file(text: str) -> list[LabelRecord]:
    """Parse ``class x1 y1 x2 y2 ...`` lines into records, order preserved."""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            class_id = int(tokens[0])
            coords = [float(tok) for tok in tokens[1:]]
        except ValueError as exc:
            raise MalformedLabel(f"line {lineno}: unparseable token ({exc})") from None
        if len(coords) % 2 != 0:
            raise MalformedLabel(f"line {lineno}: odd coordinate count {len(coords)}")
        if len(coords) < 6:
            raise MalformedLabel(f"line {lineno}: polygon needs >= 3 vertices")
        if min(coords) < 0.0 or max(coords) > 1.0:
            raise OutOfRange(f"line {lineno}: coordinate outside [0, 1]")
        polygon = np.array(coords, dtype=np.float64).reshape(-1, 2)
        if class_id < 0:
            raise MalformedLabel(f"line {lineno}: negative class id {class_id}")
        records.append(LabelRecord(class_id, polygon))
    return records


def serialize_label_file(records) -> str:
    lines = []
    for record in records:
        coords = " ".join(repr(float(v)) for v in record.polygon.ravel())
        lines.append(f"{record.class_id} {coords}")
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# rasterization


def polygon_to_mask(polygon, width: int, height: int) -> np.ndarray:
    """Scanline even-odd fill at pixel centers.

    ``polygon`` is a LabelRecord or an [k, 2] array of normalized vertices;
    x scales by ``width``, y by ``height``.  A zero-area polygon rasterizes
    to an empty mask with a warning.
    """
    if hasattr(polygon, "polygon"):
        polygon = polygon.polygon
    pts = np.asarray(polygon, dtype=np.float64) * np.array([width, height])
    mask = np.zeros((height, width), dtype=bool)
    xs, ys = pts[:, 0], pts[:, 1]
    area2 = np.sum(xs * np.roll(ys, -1) - np.roll(xs, -1) * ys)
    if area2 == 0.0:
        warnings.warn("degenerate zero-area polygon rasterizes to an empty mask", stacklevel=2)
        return mask
    x1, y1 = xs, ys
    x2, y2 = np.roll(xs, -1), np.roll(ys, -1)
    for row in range(height):
        cy = row + 0.5
        hits = ((y1 <= cy) & (cy < y2)) | ((y2 <= cy) & (cy < y1))
        if not hits.any():
            continue
        t = (cy - y1[hits]) / (y2[hits] - y1[hits])
        crossings = np.sort(x1[hits] + t * (x2[hits] - x1[hits]))
        for k in range(0, len(crossings) - 1, 2):
            # centers c + 0.5 in the half-open span [a, b)
            first = max(0, int(np.ceil(crossings[k] - 0.5)))
            last = min(width, int(np.ceil(crossings[k + 1] - 0.5)))
            if first < last:
                mask[row, first:last] = True
    return mask


# ---------------------------------------------------------------------------
# dataset split


_LCG_MULT = 6364136223846793005
_LCG_INC = 1442695040888963407
_MASK64 = (1 << 64) - 1


class _Lcg:
    """Pinned 64-bit linear congruential generator (cross-platform shuffles)."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def below(self, bound: int) -> int:
        self.state = (_LCG_MULT * self.state + _LCG_INC) & _MASK64
        return (self.state >> 33) % bound


def split_dataset(items, spec: SplitSpec):
    """Seeded shuffle then contiguous train/val/test slices.

    The three lists are disjoint and cover exactly the first
    ``spec.total`` shuffled items; leftovers (when the spec does not use
    every item) are dropped.
    """
    items = list(items)
    if spec.total > len(items):
        raise InvalidSplit(f"split needs {spec.total} items but only {len(items)} given")
    rng = _Lcg(spec.seed)
    shuffled = list(items)
    for i in range(len(shuffled) - 1, 0, -1):  # Fisher-Yates, fixed order
        j = rng.below(i + 1)
        shuffled[i], shuffled[j] = shuffled[j], shuffled[i]
    train = shuffled[: spec.train]
    val = shuffled[spec.train : spec.train + spec.val]
    test = shuffled[spec.train + spec.val : spec.total]
    return train, val, test


# ---------------------------------------------------------------------------
# portable graymap (binary P5)


def read_pgm(data: bytes) -> np.ndarray:
    """Parse a binary P5 graymap with maxval <= 255 into a uint8 array.

    Header comments (``#`` through end of line) are honored; ASCII (P2) and
    other magics are rejected.
    """
    if not data.startswith(b"P5"):
        raise UnsupportedFormat("not a binary P5 graymap")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise CorruptImage("truncated header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise CorruptImage(f"unexpected header byte {ch!r}")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise CorruptImage(f"bad extents {width}x{height}")
    if not 0 < maxval <= 255:
        raise UnsupportedFormat(f"maxval {maxval} outside 8-bit range")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise CorruptImage("missing whitespace after maxval")
    pos += 1  # exactly one whitespace byte separates header and raster
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise CorruptImage(f"raster has {len(raster)} bytes, needs {width * height}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(image, maxval: int = 255) -> bytes:
    """Serialize a uint8 image as canonical binary P5 (round-trip stable)."""
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.size == 0:
        raise CorruptImage(f"image must be nonempty 2-D, got shape {arr.shape}")
    if not 0 < maxval <= 255:
        raise UnsupportedFormat(f"maxval {maxval} outside 8-bit range")
    height, width = arr.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    return header + arr.astype(np.uint8).tobytes()


# ---------------------------------------------------------------------------
# prediction files (JSON lines)


def read_predictions(text: str) -> list[DetectionRecord]:
    """One JSON object per line: ``image``, ``class``, ``score``, ``polygon``."""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedPrediction(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(doc, dict):
            raise MalformedPrediction(f"line {lineno}: expected a JSON object")
        try:
            image_id = str(doc["image"])
            class_id = int(doc["class"])
            score = float(doc["score"])
            polygon = np.asarray(doc["polygon"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedPrediction(f"line {lineno}: {exc}") from None
        if not 0.0 <= score <= 1.0:
            raise OutOfRange(f"line {lineno}: score {score} outside [0, 1]")
        try:
            record = DetectionRecord(image_id, class_id, score, polygon)
        except MalformedPrediction as exc:
            raise MalformedPrediction(f"line {lineno}: {exc}") from None
        records.append(record)
    return records


def serialize_predictions(records) -> str:
    lines = []
    for r in records:
        doc = {
            "image": r.image_id,
            "class": r.class_id,
            "score": r.score,
            "polygon": [[float(x), float(y)] for x, y in r.polygon],
        }
        lines.append(json.dumps(doc))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# atomic writes (write to a temp file in the target directory, then rename)


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
