import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supportseg import io
from supportseg.cluster import ClusterConfig, PanopticMap, run_pipeline
from supportseg.corrupt import NoiseConfig, corrupt
from supportseg.scene import DEFAULT_CLASSES, SceneGenConfig, generate_scene, scene_from_maps
from supportseg.targets import make_targets

from conftest import CAR, ROAD


def test_header_layout():
    raw = io.encode_map(np.zeros((2, 3), np.uint16), stride=4)
    assert raw[:4] == b"CASM"
    assert len(raw) == 19 + 2 * 3 * 2
    assert struct.unpack("<HBHIIH", raw[4:19]) == (1, 1, 1, 2, 3, 4)


def test_f32_round_trip_bit_identical():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 17, 23)).astype(np.float32)
    a[0, 0, 0] = np.float32(-0.0)
    a[1, 2, 3] = np.float32(np.finfo(np.float32).tiny / 3)  # subnormal
    m = io.decode_map(io.encode_map(a, stride=2), "f4")
    assert m.stride == 2
    assert m.data.tobytes() == a.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(0, 9), st.integers(0, 9), st.integers(1, 8), st.integers(0, 2**16 - 1))
def test_u16_round_trip(c, h, w, stride, seed):
    a = np.random.default_rng(seed).integers(0, 2**16, size=(c, h, w)).astype(np.uint16)
    m = io.decode_map(io.encode_map(a, stride))
    assert np.array_equal(m.data, a) and m.stride == stride


def test_bad_magic():
    raw = b"XXXX" + io.encode_map(np.zeros((2, 2), np.uint16))[4:]
    with pytest.raises(io.BadMagic) as e:
        io.decode_map(raw)
    assert e.value.offset == 0


def test_truncated_payload_reports_sizes():
    raw = io.encode_map(np.zeros((1, 4, 4), np.float32))
    with pytest.raises(io.Truncated) as e:
        io.decode_map(raw[:-5])
    assert (e.value.expected, e.value.actual) == (64, 59)
    assert "expected 64" in str(e.value) and "got 59" in str(e.value)


def test_truncated_header():
    with pytest.raises(io.Truncated) as e:
        io.decode_map(b"CASM\x01")
    assert e.value.expected == 19


def test_trailing_bytes_rejected():
    raw = io.encode_map(np.zeros((1, 2, 2), np.uint16)) + b"\0"
    with pytest.raises(io.MapFormatError, match="trailing"):
        io.decode_map(raw)


def test_dtype_mismatch_and_unknown_code():
    raw = io.encode_map(np.zeros((1, 2, 2), np.uint16))
    with pytest.raises(io.DtypeMismatch):
        io.decode_map(raw, "f4")
    bad = raw[:6] + bytes([7]) + raw[7:]
    with pytest.raises(io.DtypeMismatch):
        io.decode_map(bad)


def test_values_out_of_u16_range():
    with pytest.raises(ValueError):
        io.encode_map(np.array([[70000]]))


def test_scene_round_trip(tmp_path):
    s = generate_scene(SceneGenConfig(rng_seed=4))
    io.write_scene(s, tmp_path, rng_seed=4)
    r = io.read_scene(tmp_path)
    assert np.array_equal(r.semantic_map, s.semantic_map)
    assert np.array_equal(r.instance_map, s.instance_map)
    assert r.instances == s.instances
    assert r.class_table == s.class_table
    assert "rng_seed=4" in (tmp_path / "scene.txt").read_text()


def test_scene_manifest_errors(tmp_path):
    s = generate_scene(SceneGenConfig(rng_seed=1))
    io.write_scene(s, tmp_path)
    (tmp_path / "instance.casm").unlink()
    with pytest.raises(io.ManifestError, match="does not exist"):
        io.read_scene(tmp_path)
    with pytest.raises(io.ManifestError):
        io.read_scene(tmp_path / "nope")
    (tmp_path / "scene.txt").write_text("garbage\n")
    with pytest.raises(io.ManifestError, match="key=value"):
        io.read_scene(tmp_path)


def test_scene_size_disagreement(tmp_path):
    s = generate_scene(SceneGenConfig(rng_seed=1))
    io.write_scene(s, tmp_path)
    m = tmp_path / "scene.txt"
    m.write_text(m.read_text().replace("height=64", "height=32"))
    with pytest.raises(io.ManifestError, match="manifest says"):
        io.read_scene(tmp_path)


def test_bundle_round_trip(tmp_path):
    s = generate_scene(SceneGenConfig(rng_seed=2))
    b = corrupt(make_targets(s, stride=2), NoiseConfig(0.05, 1.0, 0.1, 0.01, rng_seed=3))
    io.write_bundle(b, tmp_path)
    r = io.read_bundle(tmp_path)
    assert r.stride == 2
    assert r.logits.data.tobytes() == b.logits.data.tobytes()
    assert r.distances.data.tobytes() == b.distances.data.tobytes()
    assert r.center_prob.data.tobytes() == b.center_prob.data.tobytes()
    assert np.array_equal(r.distances.valid_mask, b.distances.valid_mask)


def test_bundle_dimension_mismatch(tmp_path):
    b = make_targets(generate_scene(SceneGenConfig(rng_seed=2)))
    io.write_bundle(b, tmp_path)
    io.write_map(np.zeros((1, 32, 64), np.float32), tmp_path / "center.casm")
    with pytest.raises(io.DataError, match="dimensions disagree"):
        io.read_bundle(tmp_path)


def test_panoptic_and_seeds_round_trip(tmp_path):
    s = generate_scene(SceneGenConfig(rng_seed=6))
    res = run_pipeline(make_targets(s), ClusterConfig())
    io.write_cluster_result(res, s.class_table, tmp_path)
    p, table, seeds = io.read_panoptic(tmp_path)
    assert np.array_equal(p.class_map, res.panoptic.class_map)
    assert np.array_equal(p.instance_map, res.panoptic.instance_map)
    assert table == s.class_table
    assert seeds == res.seeds
    diag = (tmp_path / "diagnostics.txt").read_text()
    assert diag.startswith(f"seeds={res.diagnostics['seeds']}\n")


def test_seed_table_errors():
    with pytest.raises(io.DataError):
        io.parse_seeds("wrong\theader\n")
    with pytest.raises(io.DataError, match="columns"):
        io.parse_seeds("\t".join(io.SEED_COLUMNS) + "\n1\t2\n")


def _two_cars():
    sem = np.full((8, 8), ROAD, np.uint16)
    inst = np.zeros((8, 8), np.uint16)
    sem[1:3, 1:3] = CAR
    inst[1:3, 1:3] = 1
    sem[5:7, 5:7] = CAR
    inst[5:7, 5:7] = 2
    return PanopticMap(sem, inst)


def test_render_deterministic_and_distinct(tmp_path):
    p = _two_cars()
    io.render_panoptic(p, DEFAULT_CLASSES, tmp_path / "a.ppm", scale=3)
    io.render_panoptic(p, DEFAULT_CLASSES, tmp_path / "b.ppm", scale=3)
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()
    img = io.read_ppm(tmp_path / "a.ppm")
    assert img.shape == (24, 24, 3)
    c1, c2, road = img[3, 3], img[15, 15], img[0, 0]
    assert not np.array_equal(c1, c2)
    assert not np.array_equal(c1, road)


def test_render_empty_scene_uniform():
    s = scene_from_maps(np.zeros((5, 7)), np.zeros((5, 7)))
    img = io.render_image(PanopticMap(s.semantic_map, s.instance_map), DEFAULT_CLASSES)
    assert (img == 0).all()


def test_render_instance_free_scene_is_one_stuff_color():
    s = generate_scene(SceneGenConfig(n_instances=(0, 0), stuff_layout="fill", rng_seed=2))
    img = io.render_image(PanopticMap(s.semantic_map, s.instance_map), s.class_table)
    colors = np.unique(img.reshape(-1, 3), axis=0)
    assert len(colors) == 1 and colors[0].any()


def test_colors_stable_across_calls():
    assert io.segment_color(CAR, 3, DEFAULT_CLASSES) == io.segment_color(CAR, 3, DEFAULT_CLASSES)
    assert io.segment_color(0, 0, DEFAULT_CLASSES) == (0, 0, 0)
