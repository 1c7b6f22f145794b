"""File formats: dense maps, manifests, seed tables, reports and PPM images.

Dense map layout (little-endian)::

    offset  size  field
    0       4     magic "CASM"
    4       2     version (u16)
    6       1     dtype code (1 = u16, 2 = f32)
    7       2     channels (u16)
    9       4     height (u32)
    13      4     width (u32)
    17      2     stride (u16)
    19      ...   payload, channel-major then row-major
"""

from __future__ import annotations

import colorsys
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from supportseg.cluster import PanopticMap, PipelineResult, Seed
from supportseg.geometry import Box, PixelCoord
from supportseg.scene import ClassTable, InstanceScene, scene_from_maps
from supportseg.targets import CenterProbMap, DistanceMaps, PredictionBundle, SemanticLogits

MAGIC = b"CASM"
VERSION = 1
HEADER = struct.Struct("<4sHBHIIH")
DTYPES = {1: np.dtype("<u2"), 2: np.dtype("<f4")}
DTYPE_CODES = {np.dtype("<u2"): 1, np.dtype("<f4"): 2}

SCENE_MANIFEST = "scene.txt"
BUNDLE_MANIFEST = "bundle.txt"
PANOPTIC_MANIFEST = "panoptic.txt"


class DataError(Exception):
    """Bad or inconsistent input data."""


class MapFormatError(DataError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BadMagic(MapFormatError):
    pass


class Truncated(MapFormatError):
    def __init__(self, what: str, expected: int, actual: int, offset: int):
        super().__init__(f"truncated {what}: expected {expected} bytes, got {actual}", offset)
        self.expected = expected
        self.actual = actual


class DtypeMismatch(MapFormatError):
    pass


class ManifestError(DataError):
    pass


@dataclass
class DenseMap:
    data: np.ndarray  # (C, H, W)
    stride: int = 1

    @property
    def channels(self) -> int:
        return self.data.shape[0]


def _as_dense(m, stride: int) -> DenseMap:
    if isinstance(m, DenseMap):
        return m
    arr = np.asarray(m)
    if arr.ndim == 2:
        arr = arr[None]
    return DenseMap(arr, stride)


def _storage(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == np.bool_ or np.issubdtype(arr.dtype, np.integer):
        if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
            raise ValueError("integer map values must fit in u16")
        return arr.astype("<u2")
    if np.issubdtype(arr.dtype, np.floating):
        return arr.astype("<f4")
    raise TypeError(f"unsupported map dtype {arr.dtype}")


def encode_map(m, stride: int = 1) -> bytes:
    dm = _as_dense(m, stride)
    if dm.data.ndim != 3:
        raise ValueError(f"map must be (C, H, W), got shape {dm.data.shape}")
    payload = _storage(dm.data)
    c, h, w = payload.shape
    header = HEADER.pack(MAGIC, VERSION, DTYPE_CODES[payload.dtype], c, h, w, dm.stride)
    return header + np.ascontiguousarray(payload).tobytes()


def decode_map(raw: bytes, expect_dtype: str | None = None) -> DenseMap:
    if len(raw) < HEADER.size:
        raise Truncated("header", HEADER.size, len(raw), len(raw))
    magic, version, code, c, h, w, stride = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise MapFormatError(f"unsupported version {version}", 4)
    if code not in DTYPES:
        raise DtypeMismatch(f"unknown dtype code {code}", 6)
    dtype = DTYPES[code]
    if expect_dtype is not None and dtype != np.dtype(expect_dtype).newbyteorder("<"):
        raise DtypeMismatch(f"map holds {dtype.name}, expected {np.dtype(expect_dtype).name}", 6)
    if stride == 0:
        raise MapFormatError("stride must be positive", 17)
    expected = c * h * w * dtype.itemsize
    actual = len(raw) - HEADER.size
    if actual < expected:
        raise Truncated("payload", expected, actual, len(raw))
    if actual > expected:
        raise MapFormatError(f"{actual - expected} trailing bytes after payload", HEADER.size + expected)
    data = np.frombuffer(raw, dtype=dtype, offset=HEADER.size).reshape(c, h, w)
    native = np.uint16 if code == 1 else np.float32
    return DenseMap(data.astype(native), stride)


def write_map(m, path, stride: int = 1) -> None:
    Path(path).write_bytes(encode_map(m, stride))


def read_map(path, expect_dtype: str | None = None) -> DenseMap:
    return decode_map(Path(path).read_bytes(), expect_dtype)


# key=value manifests


def _format_manifest(fields: list[tuple[str, object]], class_table: ClassTable) -> str:
    lines = [f"{k}={v}" for k, v in fields]
    lines += [f"class={c.class_id},{c.name},{c.kind}" for c in class_table.classes]
    return "\n".join(lines) + "\n"


def _parse_manifest(path: Path) -> tuple[dict[str, str], ClassTable]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc.strerror}") from exc
    fields: dict[str, str] = {}
    entries = []
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ManifestError(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        if key == "class":
            parts = value.split(",")
            if len(parts) != 3:
                raise ManifestError(f"{path}:{n}: class lines are id,name,kind")
            entries.append((int(parts[0]), parts[1], parts[2]))
        else:
            fields[key] = value
    try:
        table = ClassTable.from_entries(entries)
    except ValueError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    return fields, table


def _manifest_path(path, name: str) -> Path:
    p = Path(path)
    return p / name if p.is_dir() else p


def _require(fields: dict[str, str], key: str, path: Path) -> str:
    if key not in fields:
        raise ManifestError(f"{path}: missing key {key!r}")
    return fields[key]


def _load_ref(base: Path, fields: dict[str, str], key: str, path: Path, expect_dtype: str) -> DenseMap:
    ref = base / _require(fields, key, path)
    if not ref.exists():
        raise ManifestError(f"{path}: referenced file {ref} does not exist")
    return read_map(ref, expect_dtype)


def write_scene(s: InstanceScene, out_dir, rng_seed: int | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_map(s.semantic_map, out / "semantic.casm")
    write_map(s.instance_map, out / "instance.casm")
    fields: list[tuple[str, object]] = [("format", "supportseg-scene"), ("version", VERSION),
                                        ("height", s.height), ("width", s.width)]
    if rng_seed is not None:
        fields.append(("rng_seed", rng_seed))
    fields += [("semantic", "semantic.casm"), ("instance", "instance.casm")]
    manifest = out / SCENE_MANIFEST
    manifest.write_text(_format_manifest(fields, s.class_table), encoding="utf-8")
    return manifest


def read_scene(path) -> InstanceScene:
    path = _manifest_path(path, SCENE_MANIFEST)
    fields, table = _parse_manifest(path)
    h, w = int(_require(fields, "height", path)), int(_require(fields, "width", path))
    sem = _load_ref(path.parent, fields, "semantic", path, "u2").data
    inst = _load_ref(path.parent, fields, "instance", path, "u2").data
    for name, m in (("semantic", sem), ("instance", inst)):
        if m.shape != (1, h, w):
            raise ManifestError(f"{path}: {name} map is {m.shape[1]}x{m.shape[2]}x{m.shape[0]}, manifest says {h}x{w}x1")
    return scene_from_maps(sem[0], inst[0], table)


def write_bundle(b: PredictionBundle, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = b.stride
    write_map(b.logits.data, out / "logits.casm", s)
    write_map(b.distances.data, out / "distances.casm", s)
    write_map(b.center_prob.data, out / "center.casm", s)
    write_map(b.distances.valid_mask, out / "valid.casm", s)
    h, w = b.shape
    fields = [("format", "supportseg-bundle"), ("version", VERSION), ("stride", s), ("height", h), ("width", w),
              ("logits", "logits.casm"), ("distances", "distances.casm"), ("center", "center.casm"),
              ("valid", "valid.casm")]
    manifest = out / BUNDLE_MANIFEST
    manifest.write_text(_format_manifest(fields, b.class_table), encoding="utf-8")
    return manifest


def read_bundle(path) -> PredictionBundle:
    path = _manifest_path(path, BUNDLE_MANIFEST)
    fields, table = _parse_manifest(path)
    stride = int(_require(fields, "stride", path))
    logits = _load_ref(path.parent, fields, "logits", path, "f4")
    dist = _load_ref(path.parent, fields, "distances", path, "f4")
    center = _load_ref(path.parent, fields, "center", path, "f4")
    valid = _load_ref(path.parent, fields, "valid", path, "u2")
    for name, m in (("logits", logits), ("distances", dist), ("center", center), ("valid", valid)):
        if m.stride != stride:
            raise ManifestError(f"{path}: {name} map has stride {m.stride}, manifest says {stride}")
    bundle = PredictionBundle(
        SemanticLogits(logits.data, stride),
        DistanceMaps(dist.data, stride, valid.data[0] != 0),
        CenterProbMap(center.data, stride),
        table,
    )
    try:
        bundle.check()
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return bundle


# cluster output

SEED_COLUMNS = ("instance_id", "class_id", "anchor_row", "anchor_col", "left", "top", "right", "bottom",
                "score", "supporters", "cal_left", "cal_top", "cal_right", "cal_bottom")


def format_seeds(seeds: list[Seed]) -> str:
    lines = ["\t".join(SEED_COLUMNS)]
    for s in seeds:
        cal = s.calibrated_box.as_tuple() if s.calibrated_box is not None else ("-",) * 4
        row = [s.instance_id, s.class_id, s.anchor.row, s.anchor.col, *s.box.as_tuple(), s.score,
               s.supporter_count, *cal]
        lines.append("\t".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_seeds(text: str) -> list[Seed]:
    lines = text.splitlines()
    if not lines or tuple(lines[0].split("\t")) != SEED_COLUMNS:
        raise DataError("seed table header does not match")
    seeds = []
    for n, line in enumerate(lines[1:], start=2):
        v = line.split("\t")
        if len(v) != len(SEED_COLUMNS):
            raise DataError(f"seed table line {n}: expected {len(SEED_COLUMNS)} columns")
        cal = None if v[10] == "-" else Box(*(float(x) for x in v[10:14]))
        seeds.append(Seed(int(v[1]), PixelCoord(int(v[2]), int(v[3])), Box(*(float(x) for x in v[4:8])),
                          float(v[8]), int(v[9]), cal, int(v[0])))
    return seeds


def format_diagnostics(diag: dict) -> str:
    lines = [f"{k}={diag[k]}" for k in ("seeds", "pruned", "instances")]
    for c, d in diag["classes"].items():
        lines.append(f"class.{c}.seeds={d['seeds']}")
        lines.append(f"class.{c}.pruned={d['pruned']}")
        lines.append(f"class.{c}.support_hist={','.join(str(x) for x in d['support_hist'])}")
    return "\n".join(lines) + "\n"


def write_panoptic(p: PanopticMap, class_table: ClassTable, out_dir, seeds: list[Seed] | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_map(np.stack([p.class_map, p.instance_map]), out / "panoptic.casm", p.stride)
    fields: list[tuple[str, object]] = [("format", "supportseg-panoptic"), ("version", VERSION),
                                        ("stride", p.stride), ("panoptic", "panoptic.casm")]
    if seeds is not None:
        (out / "seeds.tsv").write_text(format_seeds(seeds), encoding="utf-8")
        fields.append(("seeds", "seeds.tsv"))
    manifest = out / PANOPTIC_MANIFEST
    manifest.write_text(_format_manifest(fields, class_table), encoding="utf-8")
    return manifest


def write_cluster_result(r: PipelineResult, class_table: ClassTable, out_dir) -> Path:
    manifest = write_panoptic(r.panoptic, class_table, out_dir, r.seeds)
    (Path(out_dir) / "diagnostics.txt").write_text(format_diagnostics(r.diagnostics), encoding="utf-8")
    return manifest


def read_panoptic(path) -> tuple[PanopticMap, ClassTable, list[Seed] | None]:
    path = _manifest_path(path, PANOPTIC_MANIFEST)
    fields, table = _parse_manifest(path)
    m = _load_ref(path.parent, fields, "panoptic", path, "u2")
    if m.channels != 2:
        raise ManifestError(f"{path}: panoptic map needs 2 channels, found {m.channels}")
    seeds = None
    if "seeds" in fields:
        ref = path.parent / fields["seeds"]
        if not ref.exists():
            raise ManifestError(f"{path}: referenced file {ref} does not exist")
        seeds = parse_seeds(ref.read_text(encoding="utf-8"))
    return PanopticMap(m.data[0], m.data[1], m.stride), table, seeds


# rendering


def segment_color(class_id: int, instance_id: int, class_table: ClassTable) -> tuple[int, int, int]:
    """Deterministic color: hashed hue, saturated for instances, pale for stuff."""
    if class_id == 0:
        return (0, 0, 0)
    digest = hashlib.blake2b(f"{class_id}:{instance_id}".encode(), digest_size=8).digest()
    hue = int.from_bytes(digest[:4], "little") / 2**32
    if class_table.is_thing(class_id) and instance_id:
        sat, val = 0.85, 0.65 + 0.35 * digest[4] / 255
    else:
        sat, val = 0.25, 0.80
    r, g, b = colorsys.hsv_to_rgb(hue, sat, val)
    return (round(r * 255), round(g * 255), round(b * 255))


def render_image(p: PanopticMap, class_table: ClassTable, scale: int = 1) -> np.ndarray:
    key = p.class_map.astype(np.int64) << 16 | p.instance_map.astype(np.int64)
    keys, inverse = np.unique(key, return_inverse=True)
    palette = np.array([segment_color(int(k >> 16), int(k & 0xFFFF), class_table) for k in keys], dtype=np.uint8)
    img = palette[inverse.reshape(key.shape)]
    if scale > 1:
        img = img.repeat(scale, axis=0).repeat(scale, axis=1)
    return img


def render_panoptic(p: PanopticMap, class_table: ClassTable, path, scale: int = 1) -> None:
    """Write ``p`` as a binary PPM (P6) image."""
    img = render_image(p, class_table, scale)
    h, w = img.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6":
        raise DataError(f"{path}: not a binary PPM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
