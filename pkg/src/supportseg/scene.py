"""Ground-truth scenes and a seeded synthetic scene generator.

A scene is a semantic label map plus an instance id map. Thing instances are
painted in draw order, so a later shape hides whatever it covers and each
pixel belongs to at most one instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from supportseg import kernels
from supportseg.geometry import Box, iou

THING = "thing"
STUFF = "stuff"
VOID = "void"

SHAPES = ("rectangle", "ellipse")
STUFF_LAYOUTS = ("bands", "fill")


@dataclass(frozen=True)
class ClassInfo:
    class_id: int
    name: str
    kind: str


@dataclass(frozen=True)
class ClassTable:
    """Ordered class list. Id 0 is always the void class."""

    classes: tuple[ClassInfo, ...]

    def __post_init__(self) -> None:
        ids = [c.class_id for c in self.classes]
        if ids != list(range(len(ids))):
            raise ValueError(f"class ids must be contiguous from 0, got {ids}")
        if not ids or self.classes[0].kind != VOID:
            raise ValueError("class 0 must be the void class")
        for c in self.classes[1:]:
            if c.kind not in (THING, STUFF):
                raise ValueError(f"class {c.class_id} has unknown kind {c.kind!r}")

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[int, str, str]]) -> "ClassTable":
        return cls(tuple(ClassInfo(int(i), n, k) for i, n, k in entries))

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def thing_ids(self) -> list[int]:
        return [c.class_id for c in self.classes if c.kind == THING]

    @property
    def stuff_ids(self) -> list[int]:
        return [c.class_id for c in self.classes if c.kind == STUFF]

    def kind(self, class_id: int) -> str:
        return self.classes[class_id].kind

    def is_thing(self, class_id: int) -> bool:
        return 0 <= class_id < len(self.classes) and self.classes[class_id].kind == THING

    def thing_mask(self) -> np.ndarray:
        """Boolean lookup table indexed by class id."""
        return np.array([c.kind == THING for c in self.classes], dtype=bool)

    def thing_channel(self, class_id: int) -> int:
        """Index of ``class_id`` among the thing classes (center-map channel)."""
        return self.thing_ids.index(class_id)

    def name(self, class_id: int) -> str:
        return self.classes[class_id].name


DEFAULT_CLASSES = ClassTable.from_entries(
    [(0, "void", VOID), (1, "road", STUFF), (2, "sky", STUFF), (3, "car", THING), (4, "person", THING)]
)


@dataclass(frozen=True)
class InstanceRecord:
    instance_id: int
    class_id: int
    box: Box
    pixel_count: int


@dataclass
class InstanceScene:
    semantic_map: np.ndarray
    instance_map: np.ndarray
    instances: list[InstanceRecord]
    class_table: ClassTable = DEFAULT_CLASSES

    @property
    def height(self) -> int:
        return int(self.semantic_map.shape[0])

    @property
    def width(self) -> int:
        return int(self.semantic_map.shape[1])

    def instance(self, instance_id: int) -> InstanceRecord:
        for rec in self.instances:
            if rec.instance_id == instance_id:
                return rec
        raise KeyError(instance_id)


@dataclass(frozen=True)
class Violation:
    rule: str
    witness: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.witness}"


def instance_records(semantic_map: np.ndarray, instance_map: np.ndarray) -> list[InstanceRecord]:
    """Tight-box records for every nonzero id in ``instance_map``.

    The class of an instance is read at its first pixel in row-major order.
    """
    inst = np.asarray(instance_map, dtype=np.int64)
    n = int(inst.max()) + 1 if inst.size else 1
    boxes, counts = kernels.tight_boxes(inst, n)
    first = np.full(n, -1, dtype=np.int64)
    flat = inst.ravel()
    ids, where = np.unique(flat, return_index=True)
    first[ids] = where
    sem = np.asarray(semantic_map).ravel()
    records = []
    for iid in range(1, n):
        if counts[iid] == 0:
            continue
        records.append(InstanceRecord(iid, int(sem[first[iid]]), Box.from_array(boxes[iid]), int(counts[iid])))
    return records


def scene_from_maps(semantic_map: np.ndarray, instance_map: np.ndarray, class_table: ClassTable = DEFAULT_CLASSES) -> InstanceScene:
    semantic_map = np.asarray(semantic_map, dtype=np.uint16)
    instance_map = np.asarray(instance_map, dtype=np.uint16)
    return InstanceScene(semantic_map, instance_map, instance_records(semantic_map, instance_map), class_table)


def validate_scene(s: InstanceScene) -> list[Violation]:
    """Check every scene invariant and return the violations found."""
    out: list[Violation] = []
    sem = np.asarray(s.semantic_map)
    inst = np.asarray(s.instance_map)
    if sem.ndim != 2 or sem.shape != inst.shape:
        return [Violation("shape", f"semantic {sem.shape} vs instance {inst.shape}")]
    n_classes = len(s.class_table)
    bad = np.argwhere(sem >= n_classes)
    if len(bad):
        r, c = bad[0]
        out.append(Violation("unknown-class", f"pixel ({r},{c}) has class {sem[r, c]}"))
        return out
    thing = s.class_table.thing_mask()[sem]
    for rule, mask in (("instance-on-non-thing", (inst != 0) & ~thing), ("thing-without-instance", (inst == 0) & thing)):
        hits = np.argwhere(mask)
        if len(hits):
            r, c = hits[0]
            out.append(Violation(rule, f"pixel ({r},{c}) class {sem[r, c]} instance {inst[r, c]}"))

    seen: set[int] = set()
    listed = {}
    for rec in s.instances:
        if rec.instance_id < 1 or rec.instance_id in seen:
            out.append(Violation("bad-instance-id", f"instance {rec.instance_id}"))
            continue
        seen.add(rec.instance_id)
        listed[rec.instance_id] = rec
        if not s.class_table.is_thing(rec.class_id):
            out.append(Violation("instance-class-not-thing", f"instance {rec.instance_id} class {rec.class_id}"))

    actual = {r.instance_id: r for r in instance_records(sem, inst)}
    for iid, rec in listed.items():
        got = actual.get(iid)
        if got is None:
            out.append(Violation("empty-instance", f"instance {iid} has no pixels"))
            continue
        if got.box != rec.box:
            kind = "loose-box" if _contains(rec.box, got.box) else "wrong-box"
            out.append(Violation(kind, f"instance {iid} records {rec.box.as_tuple()} but pixels span {got.box.as_tuple()}"))
        if got.pixel_count != rec.pixel_count:
            out.append(Violation("pixel-count", f"instance {iid} records {rec.pixel_count} but has {got.pixel_count}"))
        pix = (inst == iid) & thing
        wrong = np.argwhere(pix & (sem != rec.class_id))
        if len(wrong):
            r, c = wrong[0]
            out.append(Violation("instance-class-mismatch", f"instance {iid} pixel ({r},{c}) has class {sem[r, c]}"))
    for iid in sorted(set(actual) - set(listed)):
        out.append(Violation("unlisted-instance", f"instance {iid} has pixels but no record"))
    return out


def _contains(outer: Box, inner: Box) -> bool:
    return (outer.left <= inner.left and outer.top <= inner.top
            and outer.right >= inner.right and outer.bottom >= inner.bottom)


@dataclass(frozen=True)
class ShapeSpec:
    class_id: int
    shape: str
    top: int
    left: int
    height: int
    width: int

    def mask(self, img_h: int, img_w: int) -> np.ndarray:
        m = np.zeros((img_h, img_w), dtype=bool)
        r0, c0 = max(self.top, 0), max(self.left, 0)
        r1, c1 = min(self.top + self.height, img_h), min(self.left + self.width, img_w)
        if r0 >= r1 or c0 >= c1:
            return m
        if self.shape == "rectangle":
            m[r0:r1, c0:c1] = True
        elif self.shape == "ellipse":
            rr = np.arange(r0, r1)[:, None] + 0.5
            cc = np.arange(c0, c1)[None, :] + 0.5
            cy = self.top + self.height / 2
            cx = self.left + self.width / 2
            m[r0:r1, c0:c1] = ((rr - cy) / (self.height / 2)) ** 2 + ((cc - cx) / (self.width / 2)) ** 2 <= 1.0
        else:
            raise ValueError(f"unknown shape {self.shape!r}")
        return m


def stuff_background(height: int, width: int, class_table: ClassTable, layout: str) -> np.ndarray:
    sem = np.zeros((height, width), dtype=np.uint16)
    stuff = class_table.stuff_ids
    if not stuff:
        return sem
    if layout == "fill":
        sem[:] = stuff[0]
    elif layout == "bands":
        n = len(stuff)
        for b, cid in enumerate(stuff):
            sem[b * height // n:(b + 1) * height // n] = cid
    else:
        raise ValueError(f"unknown stuff layout {layout!r}")
    return sem


def _renumbered(semantic: np.ndarray, painted: np.ndarray, class_table: ClassTable) -> InstanceScene:
    # painted holds draw-order ids; drop hidden ones and renumber 1..k in draw order
    present = np.unique(painted)
    present = present[present != 0]
    lut = np.zeros(int(painted.max()) + 1, dtype=np.uint16)
    lut[present] = np.arange(1, len(present) + 1, dtype=np.uint16)
    return scene_from_maps(semantic, lut[painted], class_table)


def compose_scene(
    height: int,
    width: int,
    shapes: Sequence[ShapeSpec],
    class_table: ClassTable = DEFAULT_CLASSES,
    stuff_layout: str = "bands",
) -> InstanceScene:
    """Paint ``shapes`` in order over a stuff background."""
    semantic = stuff_background(height, width, class_table, stuff_layout)
    painted = np.zeros((height, width), dtype=np.int64)
    for k, spec in enumerate(shapes, start=1):
        if not class_table.is_thing(spec.class_id):
            raise ValueError(f"class {spec.class_id} is not a thing class")
        m = spec.mask(height, width)
        semantic[m] = spec.class_id
        painted[m] = k
    return _renumbered(semantic, painted, class_table)


@dataclass(frozen=True)
class SceneGenConfig:
    height: int = 64
    width: int = 64
    n_instances: tuple[int, int] = (1, 8)
    shapes: tuple[str, ...] = SHAPES
    size_range: tuple[int, int] = (6, 32)
    occlusion: bool = True
    stuff_layout: str = "bands"
    rng_seed: int = 0
    class_table: ClassTable = field(default=DEFAULT_CLASSES)
    # same-class visible boxes overlapping more than this are re-drawn; keeps
    # every instance separable by box NMS at the default threshold
    max_same_class_iou: float = 0.5
    max_tries: int = 50

    def validate(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise ValueError("image dimensions must be positive")
        lo, hi = self.n_instances
        if lo < 0 or hi < lo:
            raise ValueError(f"bad n_instances range {self.n_instances}")
        smin, smax = self.size_range
        if smin <= 0 or smax < smin:
            raise ValueError(f"bad size range {self.size_range}")
        if smin > min(self.height, self.width):
            raise ValueError(f"size range {self.size_range} cannot fit in a {self.height}x{self.width} image")
        if not self.shapes or any(s not in SHAPES for s in self.shapes):
            raise ValueError(f"bad shape set {self.shapes}")
        if self.stuff_layout not in STUFF_LAYOUTS:
            raise ValueError(f"bad stuff layout {self.stuff_layout!r}")
        if hi > 0 and not self.class_table.thing_ids:
            raise ValueError("instances requested but the class table has no thing class")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")


def scene_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=seed))


def _same_class_ok(painted: np.ndarray, classes: list[int], limit: float) -> bool:
    n = len(classes) + 1
    boxes, counts = kernels.tight_boxes(painted, n)
    live = [k for k in range(1, n) if counts[k] > 0]
    for a_i, a in enumerate(live):
        ba = Box.from_array(boxes[a])
        for b in live[a_i + 1:]:
            if classes[a - 1] == classes[b - 1] and iou(ba, Box.from_array(boxes[b])) > limit:
                return False
    return True


def generate_scene(cfg: SceneGenConfig) -> InstanceScene:
    cfg.validate()
    rng = scene_rng(cfg.rng_seed)
    h, w = cfg.height, cfg.width
    things = cfg.class_table.thing_ids
    smin = cfg.size_range[0]
    smax_h = min(cfg.size_range[1], h)
    smax_w = min(cfg.size_range[1], w)
    semantic = stuff_background(h, w, cfg.class_table, cfg.stuff_layout)
    painted = np.zeros((h, w), dtype=np.int64)
    classes: list[int] = []

    n = int(rng.integers(cfg.n_instances[0], cfg.n_instances[1] + 1))
    for _ in range(n):
        for _attempt in range(cfg.max_tries):
            cid = things[int(rng.integers(len(things)))]
            shape = cfg.shapes[int(rng.integers(len(cfg.shapes)))]
            sh = int(rng.integers(smin, smax_h + 1))
            sw = int(rng.integers(smin, smax_w + 1))
            top = int(rng.integers(0, h - sh + 1))
            left = int(rng.integers(0, w - sw + 1))
            m = ShapeSpec(cid, shape, top, left, sh, sw).mask(h, w)
            if not m.any():
                continue
            if not cfg.occlusion and (painted[m] != 0).any():
                continue
            trial = painted.copy()
            trial[m] = len(classes) + 1
            if not _same_class_ok(trial, classes + [cid], cfg.max_same_class_iou):
                continue
            painted = trial
            semantic[m] = cid
            classes.append(cid)
            break
    return _renumbered(semantic, painted, cfg.class_table)
