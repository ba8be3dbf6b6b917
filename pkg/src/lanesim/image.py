"""Grayscale/binary rasters, thresholding, rectangular ROI masking, PGM/PPM I/O.

Images are stored row-major with pixel [0, 0] at the top-left corner; x grows
to the right (columns), y grows downward (rows).
"""

from dataclasses import dataclass

import numpy as np

# ITU-R BT.601 luma weights used for color-to-gray reduction.
LUMA_R = 0.299
LUMA_G = 0.587
LUMA_B = 0.114

_WHITESPACE = b" \t\n\r\x0b\x0c"


class PnmParseError(ValueError):
    """Malformed PGM/PPM input; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster; ``pixels[row, col]`` is a uint8 in [0, 255]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"pixels must be a non-empty 2-D raster, got shape {px.shape}")
        if px.dtype != np.uint8:
            if not np.issubdtype(px.dtype, np.integer):
                raise ValueError(f"pixels must be integers, got dtype {px.dtype}")
            if px.min() < 0 or px.max() > 255:
                raise ValueError("pixel values outside [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Boolean mask with the same raster layout as :class:`GrayImage`."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D raster, got shape {m.shape}")
        if m.dtype != np.bool_:
            m = m.astype(bool)
        object.__setattr__(self, "mask", m)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


@dataclass(frozen=True)
class RectRoi:
    """Inclusive rectangle ``[x0, x1] x [y0, y1]`` in pixel coordinates."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"empty ROI: ({self.x0}, {self.y0})..({self.x1}, {self.y1})")

    def check_bounds(self, width: int, height: int) -> None:
        """Raise ValueError naming the first coordinate outside a width x height image."""
        for name, value, limit in (
            ("x0", self.x0, width),
            ("x1", self.x1, width),
            ("y0", self.y0, height),
            ("y1", self.y1, height),
        ):
            if value < 0 or value >= limit:
                raise ValueError(
                    f"ROI coordinate {name}={value} outside image of size {width}x{height}"
                )


def bottom_fraction_roi(width: int, height: int, fraction: float = 0.6) -> RectRoi:
    """Full-width ROI covering the bottom ``fraction`` of the frame."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"ROI fraction must be in (0, 1], got {fraction}")
    y0 = height - int(round(height * fraction))
    y0 = min(max(y0, 0), height - 1)
    return RectRoi(0, y0, width - 1, height - 1)


def rgb_to_gray(r: np.ndarray, g: np.ndarray, b: np.ndarray) -> GrayImage:
    """Reduce three color channel rasters to luma: round(0.299 r + 0.587 g + 0.114 b)."""
    r = np.asarray(r)
    g = np.asarray(g)
    b = np.asarray(b)
    if not (r.shape == g.shape == b.shape):
        raise ValueError(
            f"channel shape mismatch: r={r.shape} g={g.shape} b={b.shape}"
        )
    luma = LUMA_R * r.astype(np.float64) + LUMA_G * g.astype(np.float64) + LUMA_B * b.astype(np.float64)
    out = np.clip(np.rint(luma), 0, 255).astype(np.uint8)
    return GrayImage(out)


def threshold(img: GrayImage, t: int = 128, invert: bool = True) -> BinaryImage:
    """Binarize a grayscale image.

    With ``invert=False`` pixels >= t become true; with ``invert=True`` pixels
    < t become true (the useful sense for dark tape on a light floor).
    """
    if not 0 <= t <= 255:
        raise ValueError(f"threshold must be in [0, 255], got {t}")
    if invert:
        return BinaryImage(img.pixels < t)
    return BinaryImage(img.pixels >= t)


def apply_roi(img: BinaryImage, roi: RectRoi) -> BinaryImage:
    """Force every pixel outside the ROI to false; raster size is unchanged."""
    roi.check_bounds(img.width, img.height)
    out = np.zeros_like(img.mask)
    out[roi.y0 : roi.y1 + 1, roi.x0 : roi.x1 + 1] = img.mask[
        roi.y0 : roi.y1 + 1, roi.x0 : roi.x1 + 1
    ]
    return BinaryImage(out)


class _TokenScanner:
    """Whitespace/comment-aware token reader over a PNM header."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_separators(self) -> None:
        data, n = self.data, len(self.data)
        while self.pos < n:
            c = self.data[self.pos : self.pos + 1]
            if c in (b"#",):
                while self.pos < n and data[self.pos : self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            elif c in _WHITESPACE:
                self.pos += 1
            else:
                return

    def next_token(self, what: str) -> tuple[bytes, int]:
        self.skip_separators()
        if self.pos >= len(self.data):
            raise PnmParseError(f"missing {what}", self.pos)
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos : self.pos + 1] not in _WHITESPACE:
            if self.data[self.pos : self.pos + 1] == b"#":
                break
            self.pos += 1
        return self.data[start : self.pos], start

    def next_int(self, what: str) -> tuple[int, int]:
        token, start = self.next_token(what)
        try:
            return int(token), start
        except ValueError:
            raise PnmParseError(f"bad {what} token {token!r}", start) from None


def read_pnm(data: bytes) -> GrayImage:
    """Parse binary PGM (P5) or PPM (P6) bytes with maxval 255.

    PPM input is reduced to grayscale via :func:`rgb_to_gray`.
    """
    if data[:2] not in (b"P5", b"P6"):
        raise PnmParseError(f"bad magic {data[:2]!r}, expected P5 or P6", 0)
    magic = data[:2]
    scan = _TokenScanner(data)
    scan.pos = 2
    width, woff = scan.next_int("width")
    height, hoff = scan.next_int("height")
    if width <= 0:
        raise PnmParseError(f"non-positive width {width}", woff)
    if height <= 0:
        raise PnmParseError(f"non-positive height {height}", hoff)
    maxval, moff = scan.next_int("maxval")
    if maxval != 255:
        raise PnmParseError(f"unsupported maxval {maxval}, only 255", moff)
    # Exactly one whitespace byte separates the header from the payload.
    if scan.pos >= len(data) or data[scan.pos : scan.pos + 1] not in _WHITESPACE:
        raise PnmParseError("missing whitespace before pixel payload", scan.pos)
    payload_start = scan.pos + 1
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = data[payload_start : payload_start + need]
    if len(payload) < need:
        raise PnmParseError(
            f"truncated pixel payload: need {need} bytes, have {len(payload)}",
            payload_start + len(payload),
        )
    raw = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return GrayImage(raw.reshape(height, width).copy())
    rgb = raw.reshape(height, width, 3)
    return rgb_to_gray(rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2])


def write_pnm(img: GrayImage) -> bytes:
    """Serialize to binary PGM: ``P5\\n<w> <h>\\n255\\n`` followed by raw rows."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()
