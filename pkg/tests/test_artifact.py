import struct

import numpy as np
import pytest

from sldscreen.artifact import (ArtifactMeta, ScreeningModel, load_model,
                                load_screening_model, run_screening,
                                save_model)
from sldscreen.backbone import backbone_digest, make_mock_backbone
from sldscreen.errors import (BackboneMismatch, DecodeError, FormatError,
                              ShapeError, VersionError)
from sldscreen.head import init_params, param_count, zeros_like_params

from conftest import encode


@pytest.fixture
def meta():
    return ArtifactMeta(backbone_digest=backbone_digest(make_mock_backbone(0)),
                        dropout_rate=0.5, threshold=0.5)


@pytest.fixture
def saved(tmp_path, meta):
    p = init_params(17)
    path = str(tmp_path / "model.sghd")
    save_model(p, meta, path)
    return p, path


class TestSaveLoad:
    def test_round_trip_bit_exact(self, saved, meta):
        p, path = saved
        loaded, loaded_meta = load_model(path)
        for a, b in zip(p.arrays(), loaded.arrays()):
            assert np.array_equal(a, b)
        assert loaded_meta == meta
        assert param_count(loaded)[1] == 1425601

    def test_weight_block_size(self, saved):
        import os
        _, path = saved
        size = os.path.getsize(path)
        header = size - 1425601 * 8
        assert header > 0
        # header: magic + version + digest + norm id + 2 floats + dim table
        with open(path, "rb") as fh:
            assert fh.read(5) == b"SGHD1"

    def test_readonly_location(self, meta):
        with pytest.raises(OSError):
            save_model(init_params(0), meta, "/no/such/dir/model.sghd")

    def test_bad_magic(self, tmp_path, saved):
        _, path = saved
        data = open(path, "rb").read()
        bad = tmp_path / "bad.sghd"
        bad.write_bytes(b"XXXX" + data[4:])
        with pytest.raises(FormatError):
            load_model(str(bad))

    def test_unknown_version(self, tmp_path, saved):
        _, path = saved
        data = bytearray(open(path, "rb").read())
        data[5:9] = struct.pack("<I", 99)
        bad = tmp_path / "v99.sghd"
        bad.write_bytes(bytes(data))
        with pytest.raises(VersionError):
            load_model(str(bad))

    def test_truncated_mid_weights(self, tmp_path, saved):
        _, path = saved
        data = open(path, "rb").read()
        bad = tmp_path / "trunc.sghd"
        bad.write_bytes(data[:len(data) // 2])
        with pytest.raises(FormatError, match="byte"):
            load_model(str(bad))

    def test_wrong_dimension_table(self, tmp_path, saved):
        _, path = saved
        data = bytearray(open(path, "rb").read())
        # dim table starts after magic(5) + version(4) + digest(32)
        # + norm len(2) + norm + dropout/threshold(16) + count(4)
        norm_len = struct.unpack_from("<H", data, 41)[0]
        table_at = 5 + 4 + 32 + 2 + norm_len + 16 + 4
        struct.pack_into("<II", data, table_at, 801, 1280)
        bad = tmp_path / "dims.sghd"
        bad.write_bytes(bytes(data))
        with pytest.raises(ShapeError):
            load_model(str(bad))


class TestRunScreening:
    def _model(self, params, threshold=0.5, bb_seed=0):
        meta = ArtifactMeta(backbone_digest(make_mock_backbone(bb_seed)),
                            threshold=threshold)
        return ScreeningModel(params, meta, "test-version")

    def test_forced_positive(self):
        p = zeros_like_params()
        p.b4[0] = np.log(0.7 / 0.3)  # sigmoid gives exactly 0.7
        model = self._model(p)
        png = encode(np.full((10, 10, 3), 200, np.uint8))
        result = run_screening(png, make_mock_backbone(0), model)
        assert result.label == "positive"
        assert result.probability == pytest.approx(0.7)
        assert result.model_version == "test-version"
        assert result.timing_ms >= 0

    def test_boundary_probability_is_positive(self):
        model = self._model(zeros_like_params())  # probability exactly 0.5
        png = encode(np.full((10, 10, 3), 200, np.uint8))
        result = run_screening(png, make_mock_backbone(0), model)
        assert result.probability == 0.5
        assert result.label == "positive"

    def test_corrupt_bytes(self):
        model = self._model(zeros_like_params())
        with pytest.raises(DecodeError):
            run_screening(b"\x89PNG but not really", make_mock_backbone(0),
                          model)

    def test_digest_mismatch_warns_then_errors_in_strict(self):
        model = self._model(zeros_like_params(), bb_seed=0)
        other = make_mock_backbone(1)
        png = encode(np.full((10, 10, 3), 200, np.uint8))
        with pytest.warns(UserWarning):
            run_screening(png, other, model)
        with pytest.raises(BackboneMismatch):
            run_screening(png, other, model, strict=True)

    def test_equals_manual_composition(self, rng):
        from sldscreen.backbone import embed
        from sldscreen.head import DropoutSpec, forward
        from sldscreen.images import decode_image, preprocess
        p = init_params(23)
        model = self._model(p)
        backbone = make_mock_backbone(0)
        png = encode(rng.integers(0, 256, size=(30, 40, 3), dtype=np.uint8))
        result = run_screening(png, backbone, model)
        emb = embed(backbone, preprocess(decode_image(png)))
        prob, _ = forward(p, emb, DropoutSpec(mode="inference"))
        assert result.probability == prob


def test_load_screening_model_version_is_file_digest(saved):
    _, path = saved
    model = load_screening_model(path)
    assert len(model.version) == 64
    assert load_screening_model(path).version == model.version
