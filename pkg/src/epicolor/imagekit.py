"""Image containers, 8-bit PNG I/O, and NTSC color-space conversion.

Pixel data is float64 laid out as (height, width, channels). RGB and
luminance values live in [0, 1]; the I and Q chroma channels carry the
signed ranges induced by the conversion matrix (|I| <= 0.595716,
|Q| <= 0.522591).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from PIL import Image


class Semantics(enum.Enum):
    """Channel interpretation of a :class:`RasterImage`."""

    RGB = "rgb"
    YIQ = "yiq"
    Y = "y"
    IQ = "iq"
    DESCRIPTOR = "descriptor"


_EXPECTED_CHANNELS = {
    Semantics.RGB: 3,
    Semantics.YIQ: 3,
    Semantics.Y: 1,
    Semantics.IQ: 2,
}

# FCC NTSC conversion. The I and Q rows sum to zero, so gray inputs carry
# no chroma; the Y row holds the usual luma weights.
RGB_TO_YIQ_MATRIX = np.array(
    [
        [0.299, 0.587, 0.114],
        [0.595716, -0.274453, -0.321263],
        [0.211456, -0.522591, 0.311135],
    ]
)
YIQ_TO_RGB_MATRIX = np.linalg.inv(RGB_TO_YIQ_MATRIX)

I_MAX = 0.595716
Q_MAX = 0.522591


@dataclass(frozen=True)
class RasterImage:
    """A (height, width, channels) float64 pixel array plus channel semantics."""

    data: np.ndarray
    semantics: Semantics

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ValueError(f"image data must be 2-D or 3-D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"empty image: shape {data.shape}")
        expected = _EXPECTED_CHANNELS.get(self.semantics)
        if expected is not None and data.shape[2] != expected:
            raise ValueError(
                f"{self.semantics.value} image needs {expected} channel(s), "
                f"got {data.shape[2]}"
            )
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def _require(img: RasterImage, semantics: Semantics) -> None:
    if img.semantics is not semantics:
        raise ValueError(f"expected a {semantics.value} image, got {img.semantics.value}")


def rgb_to_yiq(img: RasterImage) -> RasterImage:
    """Convert an RGB image to YIQ with the NTSC matrix."""
    _require(img, Semantics.RGB)
    return RasterImage(img.data @ RGB_TO_YIQ_MATRIX.T, Semantics.YIQ)


def yiq_to_rgb(img: RasterImage) -> RasterImage:
    """Invert :func:`rgb_to_yiq`, clamping each RGB channel to [0, 1]."""
    _require(img, Semantics.YIQ)
    rgb = np.clip(img.data @ YIQ_TO_RGB_MATRIX.T, 0.0, 1.0)
    return RasterImage(rgb, Semantics.RGB)


def grayscale_as_luminance(img: RasterImage) -> RasterImage:
    """Return the luminance plane: identity for Y input, the luma row for RGB.

    For RGB input this is channel 0 of :func:`rgb_to_yiq`, computed through
    the same code path so the two agree bit for bit.
    """
    if img.semantics is Semantics.Y:
        return img
    if img.semantics is Semantics.RGB:
        return RasterImage(
            np.ascontiguousarray(rgb_to_yiq(img).data[:, :, :1]), Semantics.Y
        )
    raise ValueError(f"expected a Y or RGB image, got {img.semantics.value}")


def load_image(path) -> RasterImage:
    """Read an 8-bit image file; bytes are scaled to floats by 1/255.

    Single-channel files load with Y semantics; color, palette, and alpha
    images load (after conversion) with RGB semantics. High-bit-depth and
    float modes are rejected.
    """
    with Image.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L", "I;16N", "F"):
            raise ValueError(f"unsupported image mode {im.mode!r}: 8-bit images only")
        if im.mode in ("L", "1", "LA"):
            gray = im if im.mode == "L" else im.convert("L")
            arr = np.asarray(gray, dtype=np.float64)[:, :, None] / 255.0
            return RasterImage(arr, Semantics.Y)
        rgb = im if im.mode == "RGB" else im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
        return RasterImage(arr, Semantics.RGB)


def save_image(img: RasterImage, path) -> None:
    """Write an RGB or Y image as an 8-bit PNG.

    Values are scaled by 255, rounded, and clamped to [0, 255], so an image
    produced by :func:`load_image` writes back byte-identical pixel data.
    """
    if img.semantics not in (Semantics.RGB, Semantics.Y):
        raise ValueError(f"can only save RGB or Y images, not {img.semantics.value}")
    quantized = np.clip(np.round(img.data * 255.0), 0.0, 255.0).astype(np.uint8)
    if img.semantics is Semantics.Y:
        pil = Image.fromarray(quantized[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(quantized, mode="RGB")
    pil.save(path, format="PNG")
