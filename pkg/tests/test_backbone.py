import numpy as np
import pytest

from sldscreen.backbone import (EMBEDDING_DIM, backbone_digest, embed,
                                embed_batch, load_backbone, make_mock_backbone,
                                _onnx_output_dims)
from sldscreen.errors import BackboneShapeError
from sldscreen.images import TensorImage

from _onnx import model_bytes


def tensor_of(value: float) -> TensorImage:
    return TensorImage(np.full((224, 224, 3), value))


class TestMockBackbone:
    def test_deterministic_per_seed(self):
        t = tensor_of(0.25)
        a = embed(make_mock_backbone(3), t)
        b = embed(make_mock_backbone(3), t)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        t = tensor_of(0.25)
        a = embed(make_mock_backbone(0), t)
        b = embed(make_mock_backbone(1), t)
        assert not np.array_equal(a, b)

    def test_output_contract(self, rng):
        b = make_mock_backbone(5)
        t = TensorImage(rng.uniform(-1, 1, size=(224, 224, 3)))
        e = embed(b, t)
        assert e.shape == (EMBEDDING_DIM,)
        assert np.all(np.isfinite(e))
        assert np.all(np.abs(e) < 1.0)  # tanh-bounded

    def test_zero_tensor_gives_bias_image(self):
        b = make_mock_backbone(11)
        a = embed(b, tensor_of(0.0))
        c = embed(b, tensor_of(0.0))
        assert np.array_equal(a, c)

    def test_single_pixel_sensitivity(self):
        b = make_mock_backbone(2)
        v = np.zeros((224, 224, 3))
        t1 = TensorImage(v.copy())
        v[100, 100, 1] = 0.5
        t2 = TensorImage(v)
        assert not np.array_equal(embed(b, t1), embed(b, t2))

    def test_repeated_calls_bit_identical(self, rng):
        b = make_mock_backbone(9)
        t = TensorImage(rng.uniform(-1, 1, size=(224, 224, 3)))
        assert np.array_equal(embed(b, t), embed(b, t))


class TestEmbedBatch:
    def test_empty(self):
        assert embed_batch(make_mock_backbone(0), []) == []

    def test_matches_single_calls(self, rng):
        b = make_mock_backbone(4)
        ts = [TensorImage(rng.uniform(-1, 1, size=(224, 224, 3)))
              for _ in range(3)]
        batch = embed_batch(b, ts)
        for t, got in zip(ts, batch):
            assert np.array_equal(got, embed(b, t))

    def test_large_batch_preserves_order(self, rng):
        b = make_mock_backbone(4)
        ts = [tensor_of(v) for v in rng.uniform(-1, 1, size=40)]
        batch = embed_batch(b, ts)
        assert len(batch) == 40
        for t, got in zip(ts, batch):
            assert np.array_equal(got, embed(b, t))


class TestLoadBackbone:
    def test_missing_path(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_backbone(str(tmp_path / "nope.onnx"))

    def test_valid_feature_extractor(self, tmp_path):
        path = tmp_path / "features.onnx"
        path.write_bytes(model_bytes(output_dims=(1, 1280)))
        b = load_backbone(str(path))
        assert b.kind == "onnx_model"
        assert b.output_dim == 1280
        assert len(b.model_version) == 64  # sha256 hex

    def test_classifier_variant_rejected(self, tmp_path):
        path = tmp_path / "classifier.onnx"
        path.write_bytes(model_bytes(output_dims=(1, 1000)))
        with pytest.raises(BackboneShapeError):
            load_backbone(str(path))

    def test_garbage_file_rejected(self, tmp_path):
        path = tmp_path / "bad.onnx"
        path.write_bytes(b"\xff\xff\xff\xffgarbage")
        with pytest.raises(BackboneShapeError):
            load_backbone(str(path))

    def test_digest_is_content_digest(self, tmp_path):
        a = tmp_path / "a.onnx"
        b = tmp_path / "b.onnx"
        a.write_bytes(model_bytes(output_dims=(1, 1280)))
        b.write_bytes(model_bytes(output_dims=(1, 1280), name="other"))
        assert load_backbone(str(a)).model_version != \
            load_backbone(str(b)).model_version


class TestOnnxShapeParser:
    def test_reads_declared_dims(self):
        assert _onnx_output_dims(model_bytes(output_dims=(1, 1280))) == [1, 1280]
        assert _onnx_output_dims(model_bytes(output_dims=(1, 1000))) == [1, 1000]

    def test_no_graph(self):
        with pytest.raises(BackboneShapeError):
            _onnx_output_dims(b"")


def test_backbone_digest_is_stable():
    assert backbone_digest(make_mock_backbone(1)) == \
        backbone_digest(make_mock_backbone(1))
    assert backbone_digest(make_mock_backbone(1)) != \
        backbone_digest(make_mock_backbone(2))
    assert len(backbone_digest(make_mock_backbone(1))) == 32
