"""Image decoding, backbone preprocessing, and seeded augmentation."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError

INPUT_SIZE = 224
# Identifies the resize + intensity mapping baked into trained artifacts so
# that training and inference cannot silently diverge.
NORMALIZATION_ID = "bilinear224/v127.5-1"

WHITE = 255


@dataclass(frozen=True)
class RasterImage:
    """Decoded page scan: 8-bit pixels, always 3 channels, shape (h, w, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"expected (h, w, 3) pixel array, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 3


@dataclass(frozen=True)
class TensorImage:
    """Backbone input tensor: 224x224x3 floats in [-1, 1]."""

    values: np.ndarray
    normalization_id: str = NORMALIZATION_ID

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (INPUT_SIZE, INPUT_SIZE, 3):
            raise ValueError(f"expected {(INPUT_SIZE, INPUT_SIZE, 3)}, got {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class AugmentSpec:
    """Label-preserving augmentation ranges.

    Each field is a closed interval sampled uniformly per call.  Flips are
    deliberately not representable: handwriting orientation carries meaning.
    """

    rotation_degrees: tuple[float, float] = (-5.0, 5.0)
    translate_fraction: tuple[float, float] = (0.0, 0.05)
    brightness_delta: tuple[float, float] = (-20.0, 20.0)
    contrast_factor: tuple[float, float] = (0.9, 1.1)
    enabled: bool = True

    def __post_init__(self):
        for name in ("rotation_degrees", "translate_fraction",
                     "brightness_delta", "contrast_factor"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} interval ({lo}, {hi}) is not ordered")

    @classmethod
    def identity(cls) -> "AugmentSpec":
        return cls(rotation_degrees=(0.0, 0.0), translate_fraction=(0.0, 0.0),
                   brightness_delta=(0.0, 0.0), contrast_factor=(1.0, 1.0))


def decode_image(data: bytes) -> RasterImage:
    """Decode a PNG or JPEG byte stream into a 3-channel RasterImage.

    Grayscale sources are replicated across the 3 channels.  Raises
    DecodeError on truncated/corrupt streams or unsupported formats.
    """
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.format not in ("PNG", "JPEG"):
                raise DecodeError(f"unsupported image format: {im.format}")
            im = im.convert("RGB")
            im.load()
            return RasterImage(np.asarray(im, dtype=np.uint8))
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from exc


def preprocess(img: RasterImage) -> TensorImage:
    """Bilinear-resize to 224x224 and map each 8-bit value v to v/127.5 - 1."""
    im = Image.fromarray(img.pixels)
    if im.size != (INPUT_SIZE, INPUT_SIZE):
        im = im.resize((INPUT_SIZE, INPUT_SIZE), Image.BILINEAR)
    values = np.asarray(im, dtype=np.float64) / 127.5 - 1.0
    return TensorImage(values)


def augment(img: RasterImage, spec: AugmentSpec, seed: int) -> RasterImage:
    """Apply one seeded random draw of rotation, translation, brightness and
    contrast.  Output keeps the input dimensions; canvas exposed by the
    geometric transforms is filled with white; intensities are clamped to
    [0, 255].  Pure function of (img, spec, seed).
    """
    if not spec.enabled:
        return RasterImage(img.pixels.copy())

    rng = np.random.default_rng(seed)
    angle = rng.uniform(*spec.rotation_degrees)
    # Independent horizontal/vertical shifts; the interval gives the
    # magnitude as a fraction of the image side, the sign is a coin flip.
    fx = rng.uniform(*spec.translate_fraction) * (1 if rng.integers(2) else -1)
    fy = rng.uniform(*spec.translate_fraction) * (1 if rng.integers(2) else -1)
    brightness = rng.uniform(*spec.brightness_delta)
    contrast = rng.uniform(*spec.contrast_factor)

    dx = int(round(fx * img.width))
    dy = int(round(fy * img.height))

    pixels = img.pixels
    if angle != 0.0 or dx != 0 or dy != 0:
        im = Image.fromarray(pixels)
        if angle != 0.0:
            im = im.rotate(angle, resample=Image.BILINEAR,
                           fillcolor=(WHITE, WHITE, WHITE))
        if dx != 0 or dy != 0:
            im = im.transform(im.size, Image.AFFINE, (1, 0, -dx, 0, 1, -dy),
                              resample=Image.BILINEAR,
                              fillcolor=(WHITE, WHITE, WHITE))
        pixels = np.asarray(im, dtype=np.uint8)

    out = (pixels.astype(np.float64) + brightness - 128.0) * contrast + 128.0
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return RasterImage(out)
