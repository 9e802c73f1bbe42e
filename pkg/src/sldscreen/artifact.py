"""Model artifact persistence and the photo-to-screening-result pipeline."""

from __future__ import annotations

import hashlib
import struct
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .backbone import Backbone, backbone_digest, embed
from .errors import BackboneMismatch, FormatError, ShapeError, VersionError
from .head import LAYER_DIMS, DropoutSpec, HeadParams, forward
from .images import NORMALIZATION_ID, decode_image, preprocess

ARTIFACT_MAGIC = b"SGHD1"
ARTIFACT_VERSION = 1

TOTAL_PARAMS = sum(o * i + o for o, i in LAYER_DIMS)


@dataclass(frozen=True)
class ArtifactMeta:
    """Preprocessing and provenance metadata stored beside the weights."""

    backbone_digest: bytes
    normalization_id: str = NORMALIZATION_ID
    dropout_rate: float = 0.5
    threshold: float = 0.5

    def __post_init__(self):
        if len(self.backbone_digest) != 32:
            raise ValueError("backbone digest must be 32 bytes")


@dataclass(frozen=True)
class ScreeningResult:
    probability: float
    label: str
    model_version: str
    timing_ms: float

    def to_dict(self) -> dict:
        return {"probability": self.probability, "label": self.label,
                "model_version": self.model_version, "timing_ms": self.timing_ms}


@dataclass(frozen=True)
class ScreeningModel:
    """A loaded artifact: head parameters, metadata, and a version string
    (the artifact file's content digest)."""

    params: HeadParams
    meta: ArtifactMeta
    version: str


def save_model(p: HeadParams, meta: ArtifactMeta, path: str) -> None:
    """Write the artifact: magic, version, digest, metadata, dimension
    table, then all weights as little-endian float64 in fixed order."""
    with open(path, "wb") as fh:
        fh.write(ARTIFACT_MAGIC)
        fh.write(struct.pack("<I", ARTIFACT_VERSION))
        fh.write(meta.backbone_digest)
        norm = meta.normalization_id.encode()
        fh.write(struct.pack("<H", len(norm)))
        fh.write(norm)
        fh.write(struct.pack("<dd", meta.dropout_rate, meta.threshold))
        fh.write(struct.pack("<I", len(LAYER_DIMS)))
        for out_dim, in_dim in LAYER_DIMS:
            fh.write(struct.pack("<II", out_dim, in_dim))
        for arr in p.arrays():
            fh.write(np.asarray(arr, dtype="<f8").tobytes())


def load_model(path: str) -> tuple[HeadParams, ArtifactMeta]:
    """Reconstruct parameters and metadata bit-exactly.

    Raises FormatError on a bad magic or truncation (with the failing byte
    offset), VersionError on an unknown format version, and ShapeError when
    the dimension table deviates from the expected head shapes.
    """
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def need(nbytes: int):
        nonlocal pos
        if len(data) < pos + nbytes:
            raise FormatError(f"artifact truncated at byte {len(data)} "
                              f"(needed {pos + nbytes})")
        chunk = data[pos:pos + nbytes]
        pos += nbytes
        return chunk

    if need(len(ARTIFACT_MAGIC)) != ARTIFACT_MAGIC:
        raise FormatError(f"bad artifact magic in {path}")
    (version,) = struct.unpack("<I", need(4))
    if version != ARTIFACT_VERSION:
        raise VersionError(f"unsupported artifact version {version}")
    digest = need(32)
    (norm_len,) = struct.unpack("<H", need(2))
    normalization_id = need(norm_len).decode()
    dropout_rate, threshold = struct.unpack("<dd", need(16))
    (n_layers,) = struct.unpack("<I", need(4))
    dims = [struct.unpack("<II", need(8)) for _ in range(n_layers)]
    if tuple(dims) != LAYER_DIMS:
        raise ShapeError(f"artifact dimension table {dims} != {LAYER_DIMS}")

    arrays = []
    for out_dim, in_dim in dims:
        w = np.frombuffer(need(out_dim * in_dim * 8), dtype="<f8")
        b = np.frombuffer(need(out_dim * 8), dtype="<f8")
        arrays.append(w.reshape(out_dim, in_dim).astype(np.float64))
        arrays.append(b.astype(np.float64))
    if pos != len(data):
        raise FormatError(f"trailing bytes after weight block at byte {pos}")
    meta = ArtifactMeta(digest, normalization_id, dropout_rate, threshold)
    return HeadParams(*arrays), meta


def load_screening_model(path: str) -> ScreeningModel:
    params, meta = load_model(path)
    with open(path, "rb") as fh:
        version = hashlib.sha256(fh.read()).hexdigest()
    return ScreeningModel(params, meta, version)


def run_screening(image_bytes: bytes, backbone: Backbone,
                  model: ScreeningModel, strict: bool = False) -> ScreeningResult:
    """decode -> preprocess -> embed -> inference forward -> threshold.

    A backbone whose digest differs from the artifact's recorded digest is
    a warning by default and a BackboneMismatch error in strict mode.
    """
    if backbone_digest(backbone) != model.meta.backbone_digest:
        msg = ("backbone digest does not match the digest recorded "
               "in the model artifact")
        if strict:
            raise BackboneMismatch(msg)
        warnings.warn(msg)
    start = time.perf_counter()
    raster = decode_image(image_bytes)
    tensor = preprocess(raster)
    embedding = embed(backbone, tensor)
    prob, _ = forward(model.params, embedding, DropoutSpec(mode="inference"))
    label = "positive" if prob >= model.meta.threshold else "negative"
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    return ScreeningResult(prob, label, model.version, elapsed_ms)
