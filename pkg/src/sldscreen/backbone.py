"""Frozen feature backbones producing 1280-dimensional embeddings.

Two implementations share one interface: an ONNX-file-backed backbone for
real models, and a deterministic seeded mock used throughout the test suite
so nothing downstream depends on a large model binary.  The backbone is
strictly frozen; no training path exists.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import BackboneShapeError, InferenceError
from .images import INPUT_SIZE, TensorImage

EMBEDDING_DIM = 1280


class Backbone:
    """Immutable embedding function: 224x224x3 tensor -> 1280 floats."""

    kind: str
    model_version: str
    output_dim: int = EMBEDDING_DIM

    def _embed(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class MockBackbone(Backbone):
    """Seeded random linear projection of the flattened input, squashed by
    tanh.  Deterministic per seed; stands in for the real model in tests.

    The projection is stored in factored form (row weights x column map)
    so the full 150528x1280 matrix never materializes.
    """

    seed: int
    kind: str = field(default="mock", init=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        rows = INPUT_SIZE
        cols = INPUT_SIZE * 3
        u = rng.normal(0.0, 1.0 / np.sqrt(rows), size=rows)
        v = rng.normal(0.0, 1.0 / np.sqrt(cols), size=(cols, EMBEDDING_DIM))
        b = rng.normal(0.0, 1.0, size=EMBEDDING_DIM)
        object.__setattr__(self, "_u", u)
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_b", b)

    @property
    def model_version(self) -> str:
        return f"mock-{self.seed}"

    def _embed(self, values: np.ndarray) -> np.ndarray:
        x = values.reshape(INPUT_SIZE, INPUT_SIZE * 3)
        return np.tanh(self._u @ (x @ self._v) + self._b)


class OnnxBackbone(Backbone):
    """Backbone backed by an ONNX file (input 1x224x224x3, output 1x1280).

    The output dimension is validated from the file at load time; the
    onnxruntime session is created lazily on first use.
    """

    kind = "onnx_model"

    def __init__(self, path: str, model_version: str):
        self.path = path
        self.model_version = model_version
        self._session = None

    def _ensure_session(self):
        if self._session is None:
            try:
                import onnxruntime
            except ImportError as exc:
                raise InferenceError(
                    "onnxruntime is required to run an ONNX backbone; "
                    "install the 'onnx' extra"
                ) from exc
            self._session = onnxruntime.InferenceSession(self.path)
        return self._session

    def _embed(self, values: np.ndarray) -> np.ndarray:
        sess = self._ensure_session()
        inp = sess.get_inputs()[0].name
        batch = values[np.newaxis, ...].astype(np.float32)
        try:
            (out,) = sess.run(None, {inp: batch})
        except Exception as exc:
            raise InferenceError(f"ONNX runtime failure: {exc}") from exc
        return np.asarray(out, dtype=np.float64).reshape(-1)


def make_mock_backbone(seed: int) -> MockBackbone:
    """Deterministic test backbone; same seed gives identical embeddings."""
    return MockBackbone(seed)


def load_backbone(path: str) -> OnnxBackbone:
    """Load an ONNX feature extractor and validate its output dimension.

    model_version is the file's SHA-256 content digest.  Raises
    FileNotFoundError for a missing path and BackboneShapeError when the
    graph's declared output dimension is not 1280 (e.g. a classifier
    variant with its final layer still attached).
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        data = fh.read()
    dims = _onnx_output_dims(data)
    if not dims or dims[-1] != EMBEDDING_DIM:
        raise BackboneShapeError(
            f"backbone output shape {dims} does not end in {EMBEDDING_DIM}"
        )
    return OnnxBackbone(path, hashlib.sha256(data).hexdigest())


def backbone_digest(b: Backbone) -> bytes:
    """32-byte digest identifying the backbone, for artifact metadata."""
    return hashlib.sha256(b.model_version.encode()).digest()


def embed(b: Backbone, t: TensorImage) -> np.ndarray:
    """Embed one preprocessed image; pure function of (backbone, tensor)."""
    out = b._embed(t.values)
    if out.shape != (EMBEDDING_DIM,):
        raise InferenceError(f"backbone returned shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InferenceError("backbone produced non-finite values")
    return out


def embed_batch(b: Backbone, ts) -> list[np.ndarray]:
    """Embed a sequence of tensors, preserving order."""
    out = []
    for i, t in enumerate(ts):
        try:
            out.append(embed(b, t))
        except InferenceError as exc:
            raise InferenceError(f"embedding failed at index {i}: {exc}") from exc
    return out


# --- minimal ONNX shape inspection -----------------------------------------
#
# Reads just enough of the protobuf wire format to find the declared shape of
# the graph's first output, so load-time validation does not require a
# runtime.  Field numbers: ModelProto.graph=7, GraphProto.output=12,
# ValueInfoProto.type=2, TypeProto.tensor_type=1, Tensor.shape=2,
# TensorShapeProto.dim=1, Dimension.dim_value=1.

def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise BackboneShapeError("truncated ONNX file")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _fields(buf: bytes):
    """Yield (field_number, wire_type, value_bytes_or_int) of one message."""
    pos = 0
    while pos < len(buf):
        key, pos = _read_varint(buf, pos)
        fnum, wtype = key >> 3, key & 7
        if wtype == 0:
            val, pos = _read_varint(buf, pos)
        elif wtype == 1:
            val, pos = buf[pos:pos + 8], pos + 8
        elif wtype == 2:
            length, pos = _read_varint(buf, pos)
            val, pos = buf[pos:pos + length], pos + length
        elif wtype == 5:
            val, pos = buf[pos:pos + 4], pos + 4
        else:
            raise BackboneShapeError(f"unsupported protobuf wire type {wtype}")
        yield fnum, wtype, val


def _first_submessage(buf: bytes, field_number: int) -> bytes | None:
    for fnum, wtype, val in _fields(buf):
        if fnum == field_number and wtype == 2:
            return val
    return None


def _onnx_output_dims(data: bytes) -> list[int]:
    """Declared dims of the first graph output; dynamic dims become 0."""
    try:
        graph = _first_submessage(data, 7)
        if graph is None:
            raise BackboneShapeError("no graph in ONNX file")
        output = _first_submessage(graph, 12)
        if output is None:
            raise BackboneShapeError("ONNX graph declares no outputs")
        type_proto = _first_submessage(output, 2)
        tensor_type = _first_submessage(type_proto or b"", 1)
        shape = _first_submessage(tensor_type or b"", 2)
        if shape is None:
            raise BackboneShapeError("ONNX output has no declared shape")
        dims = []
        for fnum, wtype, val in _fields(shape):
            if fnum == 1 and wtype == 2:
                dim_value = 0
                for dfnum, dwtype, dval in _fields(val):
                    if dfnum == 1 and dwtype == 0:
                        dim_value = dval
                dims.append(dim_value)
        return dims
    except BackboneShapeError:
        raise
    except Exception as exc:
        raise BackboneShapeError(f"cannot parse ONNX file: {exc}") from exc
