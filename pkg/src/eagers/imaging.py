"""Image buffers, aspect-preserving resize, cropping, and black-fill masking.

ImageBuffer keeps raw RGB bytes so every transformation is byte-auditable;
PIL is used only at the codec boundary (decode, encode, resample).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidGeometryError, InvalidSelectionError
from .geometry import Rect, round_half_up

FILL_RGB = (0, 0, 0)


@dataclass(frozen=True, slots=True)
class ImageBuffer:
    """Row-major RGB image, three bytes per pixel."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvalidGeometryError(
                f"image must have positive dimensions, got {self.width}x{self.height}"
            )
        expected = self.width * self.height * 3
        if len(self.pixels) != expected:
            raise InvalidGeometryError(
                f"pixel buffer has {len(self.pixels)} bytes, expected {expected}"
            )

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
            raise InvalidGeometryError(f"expected HxWx3 uint8 array, got {arr.dtype} {arr.shape}")
        h, w = arr.shape[:2]
        return cls(width=w, height=h, pixels=arr.tobytes())


def _from_pil(img: Image.Image) -> ImageBuffer:
    rgb = img.convert("RGB")
    return ImageBuffer(width=rgb.width, height=rgb.height, pixels=rgb.tobytes())


def _to_pil(img: ImageBuffer) -> Image.Image:
    return Image.frombytes("RGB", (img.width, img.height), img.pixels)


def decode_image(data: bytes) -> ImageBuffer:
    """Decode PNG or JPEG bytes to an RGB buffer. Alpha is dropped."""
    with Image.open(io.BytesIO(data)) as pil:
        return _from_pil(pil)


def load_image(path: str | Path) -> ImageBuffer:
    with Image.open(path) as pil:
        return _from_pil(pil)


def to_png_bytes(img: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    _to_pil(img).save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: ImageBuffer, path: str | Path) -> None:
    _to_pil(img).save(path, format="PNG")


def resize_longest_side(img: ImageBuffer, max_side: int) -> ImageBuffer:
    """Shrink so the longest side equals max_side, keeping aspect ratio.

    Never upscales; the short side is rounded and floored at 1 pixel.
    Bilinear resampling.
    """
    if max_side < 1:
        raise InvalidGeometryError(f"max_side must be positive, got {max_side}")
    longest = max(img.width, img.height)
    if longest <= max_side:
        return img
    if img.width >= img.height:
        new_w = max_side
        new_h = max(1, round_half_up(img.height * max_side / img.width))
    else:
        new_h = max_side
        new_w = max(1, round_half_up(img.width * max_side / img.height))
    resized = _to_pil(img).resize((new_w, new_h), Image.BILINEAR)
    return _from_pil(resized)


def crop(img: ImageBuffer, r: Rect) -> ImageBuffer:
    if r.right > img.width or r.bottom > img.height:
        raise InvalidGeometryError(f"rect {r} exceeds image bounds {img.width}x{img.height}")
    arr = img.to_array()
    return ImageBuffer.from_array(np.ascontiguousarray(arr[r.top : r.bottom, r.left : r.right]))


def apply_mask(img: ImageBuffer, visible: list[Rect] | set[Rect]) -> ImageBuffer:
    """Black-fill every pixel outside the union of the visible rects.

    Pixels inside the union are copied byte-exact; everything else becomes
    RGB (0,0,0). An empty visible set is rejected because a fully black
    image is never a legal query input.
    """
    rects = list(visible)
    if not rects:
        raise InvalidSelectionError("visible set is empty")
    for r in rects:
        if r.right > img.width or r.bottom > img.height:
            raise InvalidGeometryError(f"rect {r} exceeds image bounds {img.width}x{img.height}")
    src = img.to_array()
    keep = np.zeros((img.height, img.width), dtype=bool)
    for r in rects:
        keep[r.top : r.bottom, r.left : r.right] = True
    out = np.zeros_like(src)
    out[keep] = src[keep]
    return ImageBuffer.from_array(out)
