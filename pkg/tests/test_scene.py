import dataclasses

import numpy as np
import pytest

from supportseg.geometry import Box, iou
from supportseg.scene import (
    DEFAULT_CLASSES,
    ClassTable,
    SceneGenConfig,
    ShapeSpec,
    compose_scene,
    generate_scene,
    validate_scene,
)

from conftest import CAR, PERSON, ROAD


def test_empty_scene_is_all_stuff():
    s = generate_scene(SceneGenConfig(n_instances=(0, 0), rng_seed=5))
    assert s.instances == []
    assert not s.instance_map.any()
    assert set(np.unique(s.semantic_map)) <= set(DEFAULT_CLASSES.stuff_ids)
    assert validate_scene(s) == []


def test_generation_is_deterministic():
    cfg = SceneGenConfig(height=96, width=128, n_instances=(4, 10), rng_seed=1234)
    a, b = generate_scene(cfg), generate_scene(cfg)
    assert np.array_equal(a.semantic_map, b.semantic_map)
    assert np.array_equal(a.instance_map, b.instance_map)
    assert a.instances == b.instances
    c = generate_scene(dataclasses.replace(cfg, rng_seed=1235))
    assert not np.array_equal(a.instance_map, c.instance_map)


def test_later_shape_occludes_earlier():
    shapes = [ShapeSpec(CAR, "rectangle", 10, 10, 20, 20), ShapeSpec(PERSON, "rectangle", 20, 22, 20, 20)]
    s = compose_scene(64, 64, shapes)
    # direct scan: first rectangle minus the second
    first = np.zeros((64, 64), bool)
    first[10:30, 10:30] = True
    second = np.zeros((64, 64), bool)
    second[20:40, 22:42] = True
    visible_first = first & ~second
    assert np.array_equal(s.instance_map == 1, visible_first)
    assert np.array_equal(s.instance_map == 2, second)
    r, c = np.nonzero(visible_first)
    assert s.instance(1).box == Box(c.min(), r.min(), c.max() + 1, r.max() + 1)
    assert s.instance(1).pixel_count == visible_first.sum()
    assert s.semantic_map[25, 25] == PERSON
    assert validate_scene(s) == []


def test_tight_box_shrinks_to_visible_part():
    # second rectangle hides the right half of the first
    shapes = [ShapeSpec(CAR, "rectangle", 0, 0, 20, 20), ShapeSpec(PERSON, "rectangle", 0, 10, 20, 20)]
    s = compose_scene(64, 64, shapes)
    assert s.instance(1).box == Box(0, 0, 10, 20)


def test_fully_hidden_instance_is_dropped():
    shapes = [ShapeSpec(CAR, "rectangle", 5, 5, 4, 4), ShapeSpec(PERSON, "rectangle", 0, 0, 20, 20)]
    s = compose_scene(32, 32, shapes)
    assert [r.class_id for r in s.instances] == [PERSON]
    assert s.instances[0].instance_id == 1


def test_validate_flags_instance_on_stuff():
    s = compose_scene(32, 32, [ShapeSpec(CAR, "rectangle", 4, 4, 8, 8)])
    sem = s.semantic_map.copy()
    sem[6, 6] = ROAD
    bad = dataclasses.replace(s, semantic_map=sem)
    v = validate_scene(bad)
    assert len(v) == 1
    assert v[0].rule == "instance-on-non-thing"
    assert "(6,6)" in v[0].witness


def test_validate_flags_loose_box():
    s = compose_scene(32, 32, [ShapeSpec(CAR, "rectangle", 4, 4, 8, 8)])
    rec = s.instances[0]
    loose = dataclasses.replace(rec, box=Box(rec.box.left, rec.box.top, rec.box.right + 1, rec.box.bottom))
    v = validate_scene(dataclasses.replace(s, instances=[loose]))
    assert [x.rule for x in v] == ["loose-box"]


def test_validate_flags_unlisted_and_bad_count():
    s = compose_scene(32, 32, [ShapeSpec(CAR, "rectangle", 4, 4, 8, 8)])
    assert [x.rule for x in validate_scene(dataclasses.replace(s, instances=[]))] == ["unlisted-instance"]
    rec = dataclasses.replace(s.instances[0], pixel_count=3)
    assert [x.rule for x in validate_scene(dataclasses.replace(s, instances=[rec]))] == ["pixel-count"]


@pytest.mark.parametrize("seed", range(40))
def test_generated_scene_invariants(seed):
    cfg = SceneGenConfig(height=80, width=96, n_instances=(0, 12), rng_seed=seed)
    s = generate_scene(cfg)
    assert validate_scene(s) == []
    thing = DEFAULT_CLASSES.thing_mask()[s.semantic_map]
    assert np.array_equal(thing, s.instance_map != 0)
    for rec in s.instances:
        r, c = np.nonzero(s.instance_map == rec.instance_id)
        assert r.size == rec.pixel_count >= 1
        assert rec.box == Box(c.min(), r.min(), c.max() + 1, r.max() + 1)
    for i, a in enumerate(s.instances):
        for b in s.instances[i + 1:]:
            if a.class_id == b.class_id:
                assert iou(a.box, b.box) <= cfg.max_same_class_iou


def test_no_occlusion_keeps_shapes_whole():
    cfg = SceneGenConfig(height=96, width=96, n_instances=(6, 6), shapes=("rectangle",), occlusion=False, rng_seed=3)
    s = generate_scene(cfg)
    for rec in s.instances:
        assert rec.pixel_count == rec.box.area  # intact rectangles


def test_fill_layout_uses_one_stuff_class():
    s = generate_scene(SceneGenConfig(n_instances=(0, 0), stuff_layout="fill"))
    assert np.all(s.semantic_map == DEFAULT_CLASSES.stuff_ids[0])


@pytest.mark.parametrize(
    "kwargs",
    [dict(size_range=(70, 80)), dict(size_range=(0, 5)), dict(n_instances=(3, 1)), dict(shapes=("hexagon",)),
     dict(stuff_layout="stripes"), dict(rng_seed=-1)],
)
def test_bad_configs_rejected(kwargs):
    with pytest.raises(ValueError):
        generate_scene(SceneGenConfig(height=64, width=64, **kwargs))


def test_class_table_checks():
    with pytest.raises(ValueError):
        ClassTable.from_entries([(0, "void", "void"), (2, "car", "thing")])
    with pytest.raises(ValueError):
        ClassTable.from_entries([(0, "road", "stuff")])
    assert DEFAULT_CLASSES.thing_channel(PERSON) == 1


def test_ellipse_is_inscribed():
    m = ShapeSpec(CAR, "ellipse", 0, 0, 9, 15).mask(20, 20)
    r, c = np.nonzero(m)
    assert (r.min(), r.max(), c.min(), c.max()) == (0, 8, 0, 14)
    assert not m[0, 0] and m[4, 7]
