"""File formats: PGM images and JSON documents.

Every loader raises a :class:`ValidationError` subclass whose message names
the file and the offending field or byte offset; malformed input never
escapes as a bare ``KeyError`` or ``TypeError``.

JSON documents carry ``format`` and ``version`` fields.  Floats are written
with Python's shortest round-trip repr, so save followed by load is exact.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .candidates import CandidateSet
from .errors import (
    FingerprintMismatch,
    FullInterpError,
    InvalidArgument,
    ParseError,
    SchemaViolation,
    UnsupportedFormat,
    ValidationError,
)
from .forest import forest_from_dict, forest_to_dict
from .geometry import ContourPrim, ImagePatch, PointPrim, SquareRegionPrim, check_in_frame
from .model import AnnotatedPatch, StructureSchema, UnaryStats, schema_from_dict

FORMAT_VERSION = 1
_WHITESPACE = b" \t\r\n\v\f"


# -- images -------------------------------------------------------------------


def _pgm_header(data: bytes, path) -> tuple[int, int, int, int]:
    """Parse ``P5 width height maxval``; returns the fields and the payload offset."""
    if len(data) < 2 or data[:1] != b"P":
        raise ParseError(f"{path}: byte 0: not a PNM file (expected magic 'P5')")
    magic = data[:2]
    if magic in (b"P6", b"P3", b"P7"):
        raise UnsupportedFormat(f"{path}: byte 0: {magic.decode()} is not grayscale; only binary PGM (P5) is read")
    if magic != b"P5":
        raise UnsupportedFormat(f"{path}: byte 0: unsupported PNM variant {magic.decode(errors='replace')!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        start = pos
        while pos < len(data) and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= len(data):
            raise ParseError(f"{path}: byte {pos}: header ends early (need width, height, maxval)")
        if pos == start:
            raise ParseError(f"{path}: byte {pos}: expected whitespace in header")
        tok_start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        tok = data[tok_start:pos]
        if not tok:
            raise ParseError(f"{path}: byte {tok_start}: header ends early (need width, height, maxval)")
        if not tok.isdigit():
            raise ParseError(f"{path}: byte {tok_start}: expected an unsigned integer, got {tok[:16]!r}")
        fields.append(int(tok))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise ParseError(f"{path}: byte {pos}: expected one whitespace byte after maxval")
    w, h, maxval = fields
    if w < 1 or h < 1:
        raise ParseError(f"{path}: header: dimensions must be >= 1, got {w}x{h}")
    if not 1 <= maxval <= 255:
        raise UnsupportedFormat(f"{path}: header: maxval {maxval} unsupported (8-bit PGM only)")
    return w, h, maxval, pos + 1


def decode_pgm(data: bytes, path="<bytes>") -> ImagePatch:
    w, h, maxval, off = _pgm_header(data, path)
    need = w * h
    got = len(data) - off
    if got < need:
        raise ParseError(f"{path}: byte {off}: truncated payload, expected {need} bytes, got {got}")
    raw = np.frombuffer(data, dtype=np.uint8, count=need, offset=off).reshape(h, w)
    if raw.max(initial=0) > maxval:
        raise ParseError(f"{path}: payload value {int(raw.max())} exceeds maxval {maxval}")
    try:
        return ImagePatch(raw.astype(np.float64) / maxval)
    except ValidationError as exc:
        raise ParseError(f"{path}: {exc}") from None


def encode_pgm(img: ImagePatch) -> bytes:
    """Binary PGM at maxval 255; exact for intensities that are multiples of 1/255."""
    raw = np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + raw.tobytes()


def _load_png(path) -> ImagePatch:
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - depends on the environment
        raise UnsupportedFormat(f"{path}: PNG input needs Pillow (pip install fullinterp[png])") from None
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "1"):
                raise UnsupportedFormat(f"{path}: PNG mode {im.mode} is not 8-bit grayscale")
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except FullInterpError:
        raise
    except Exception as exc:
        raise ParseError(f"{path}: unreadable PNG ({exc})") from None
    return ImagePatch(arr)


def load_image(path, allow_png: bool = False) -> ImagePatch:
    """Read a binary PGM (P5); PNG grayscale too when ``allow_png`` is set."""
    data = _read_bytes(path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        if not allow_png:
            raise UnsupportedFormat(f"{path}: PNG input is disabled; enable it with allow_png / --allow-png")
        return _load_png(path)
    return decode_pgm(data, path)


def save_image(img: ImagePatch, path) -> None:
    _write_bytes(path, encode_pgm(img))


# -- files and strict JSON ----------------------------------------------------


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError:
        raise InvalidArgument(f"{path}: file not found") from None
    except IsADirectoryError:
        raise InvalidArgument(f"{path}: is a directory") from None
    except OSError as exc:
        raise InvalidArgument(f"{path}: cannot read ({exc.strerror})") from None


def _write_bytes(path, data: bytes) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ParseError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _reject_constant(name):
    raise ParseError(f"non-finite number {name} is not allowed")


def parse_json(text: bytes | str, path="<json>"):
    try:
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        return json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: byte {exc.start}: not valid UTF-8") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except RecursionError:
        raise ParseError(f"{path}: document nested too deeply") from None


def load_json(path):
    return parse_json(_read_bytes(path), path)


def dump_json(doc) -> bytes:
    return (json.dumps(doc, indent=2, allow_nan=False, ensure_ascii=False) + "\n").encode("utf-8")


def save_json(doc, path) -> None:
    _write_bytes(path, dump_json(doc))


def _expect_format(doc, fmt: str, path) -> None:
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object at the top level")
    got = doc.get("format", fmt)
    if got != fmt:
        raise ParseError(f"{path}: field 'format': expected {fmt!r}, got {got!r}")
    version = doc.get("version", FORMAT_VERSION)
    if isinstance(version, bool) or version != FORMAT_VERSION:
        raise UnsupportedFormat(f"{path}: field 'version': unsupported version {version!r}")


def _field(doc: dict, key: str, types, where: str):
    if key not in doc:
        raise ParseError(f"{where}: missing field {key!r}")
    v = doc[key]
    if isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ParseError(f"{where}.{key}: expected {_type_name(types)}, got a boolean")
    if not isinstance(v, types):
        raise ParseError(f"{where}.{key}: expected {_type_name(types)}, got {type(v).__name__}")
    return v


def _type_name(types) -> str:
    if isinstance(types, tuple):
        return " or ".join(t.__name__ for t in types)
    return types.__name__


# -- primitives ---------------------------------------------------------------


def primitive_to_dict(prim) -> dict:
    if isinstance(prim, PointPrim):
        return {"kind": "point", "x": prim.x, "y": prim.y}
    if isinstance(prim, SquareRegionPrim):
        return {"kind": "region", "center_x": prim.center_x, "center_y": prim.center_y, "side": prim.side}
    if isinstance(prim, ContourPrim):
        return {"kind": "contour", "vertices": prim.vertices.tolist(), "closed": prim.closed}
    raise InvalidArgument(f"not a primitive: {prim!r}")


def primitive_from_dict(doc, where: str = "primitive"):
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    kind = _field(doc, "kind", str, where)
    num = (int, float)
    try:
        if kind == "point":
            return PointPrim(float(_field(doc, "x", num, where)), float(_field(doc, "y", num, where)))
        if kind == "region":
            return SquareRegionPrim(
                float(_field(doc, "center_x", num, where)),
                float(_field(doc, "center_y", num, where)),
                float(_field(doc, "side", num, where)),
            )
        if kind == "contour":
            verts = _field(doc, "vertices", list, where)
            for i, v in enumerate(verts):
                if not (isinstance(v, list) and len(v) == 2 and all(isinstance(c, num) and not isinstance(c, bool) for c in v)):
                    raise ParseError(f"{where}.vertices[{i}]: expected [x, y] numbers")
            closed = doc.get("closed", False)
            if not isinstance(closed, bool):
                raise ParseError(f"{where}.closed: expected a boolean")
            return ContourPrim(np.array(verts, dtype=np.float64).reshape(-1, 2), closed)
    except ParseError:
        raise
    except ValidationError as exc:
        raise ParseError(f"{where}: {exc}") from None
    raise ParseError(f"{where}.kind: unknown primitive kind {kind!r}")


# -- schemas ------------------------------------------------------------------


def load_schema(path) -> StructureSchema:
    doc = load_json(path)
    _expect_format(doc, "fullinterp-schema", path)
    try:
        return schema_from_dict(doc)
    except ValidationError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def save_schema(schema: StructureSchema, path) -> None:
    save_json(schema.to_dict(), path)


# -- annotations --------------------------------------------------------------


@dataclass
class AnnotationDoc:
    image: str  # path of the annotated image, relative to the document
    parts: dict  # part name -> Primitive

    def to_dict(self) -> dict:
        return {
            "format": "fullinterp-annotation",
            "version": FORMAT_VERSION,
            "image": self.image,
            "parts": {n: primitive_to_dict(p) for n, p in self.parts.items()},
        }


def annotation_from_dict(doc, path="<annotation>") -> AnnotationDoc:
    _expect_format(doc, "fullinterp-annotation", path)
    image = _field(doc, "image", str, str(path))
    parts = _field(doc, "parts", dict, str(path))
    if not parts:
        raise ParseError(f"{path}: field 'parts' is empty")
    out = {}
    for name, rec in parts.items():
        if not name:
            raise ParseError(f"{path}: parts: empty part name")
        out[name] = primitive_from_dict(rec, f"{path}: parts.{name}")
    return AnnotationDoc(image, out)


def load_annotation(path) -> AnnotationDoc:
    return annotation_from_dict(load_json(path), path)


def save_annotation(doc: AnnotationDoc, path) -> None:
    save_json(doc.to_dict(), path)


def check_annotation(doc: AnnotationDoc, schema: StructureSchema, img: ImagePatch, path="<annotation>") -> None:
    """Part names and kinds must match the schema; primitives must lie in the frame."""
    want = set(schema.part_names)
    got = set(doc.parts)
    if want != got:
        missing, extra = sorted(want - got), sorted(got - want)
        raise SchemaViolation(f"{path}: parts differ from schema (missing {missing}, unexpected {extra})")
    for name, kind in schema.parts:
        prim = doc.parts[name]
        if prim.kind != kind:
            raise SchemaViolation(f"{path}: parts.{name}: schema expects a {kind}, got a {prim.kind}")
        try:
            check_in_frame(prim, img.width, img.height)
        except ValidationError as exc:
            raise type(exc)(f"{path}: parts.{name}: {exc}") from None


# -- models -------------------------------------------------------------------


def model_to_dict(model) -> dict:
    return {
        "format": "fullinterp-model",
        "version": FORMAT_VERSION,
        "schema_fingerprint": model.schema.fingerprint,
        "schema": model.schema.to_dict(),
        "forest": forest_to_dict(model.forest),
        "unary_stats": model.unary_stats.to_dict() if model.unary_stats is not None else None,
    }


def model_from_dict(doc, path="<model>", schema: StructureSchema | None = None):
    from .pipeline import TrainedModel

    _expect_format(doc, "fullinterp-model", path)
    where = str(path)
    fp = _field(doc, "schema_fingerprint", str, where)
    sdoc = _field(doc, "schema", dict, where)
    try:
        embedded = schema_from_dict(sdoc)
    except ValidationError as exc:
        raise type(exc)(f"{path}: schema: {exc}") from None
    if embedded.fingerprint != fp:
        raise FingerprintMismatch(f"{path}: schema_fingerprint does not match the embedded schema")
    if schema is not None and schema.fingerprint != fp:
        raise FingerprintMismatch(
            f"{path}: model was trained for schema {fp[:12]}, given schema {schema.fingerprint[:12]} differs"
        )
    try:
        forest = forest_from_dict(_field(doc, "forest", dict, where), fp)
        stats_doc = doc.get("unary_stats")
        stats = None if stats_doc is None else UnaryStats.from_dict(stats_doc)
    except ValidationError as exc:
        raise ParseError(f"{path}: forest: {exc}") from None
    except (KeyError, TypeError, ValueError, AttributeError, IndexError) as exc:
        raise ParseError(f"{path}: malformed model document ({type(exc).__name__}: {exc})") from None
    if forest.n_features != embedded.feature_vector_len:
        raise SchemaViolation(
            f"{path}: forest.n_features {forest.n_features} differs from schema feature_vector_len "
            f"{embedded.feature_vector_len}"
        )
    if forest.positive_mean is not None and (
        forest.positive_mean.shape != (forest.n_features,) or not np.all(np.isfinite(forest.positive_mean))
    ):
        raise ParseError(f"{path}: forest.positive_mean must be {forest.n_features} finite numbers")
    if stats is not None:
        for name, ps in stats.parts.items():
            if name not in embedded.part_names or ps.mean.shape != ps.std.shape or np.any(ps.std <= 0):
                raise ParseError(f"{path}: unary_stats.{name}: inconsistent statistics")
    return TrainedModel(embedded, forest, stats)


def save_model(model, path) -> None:
    save_json(model_to_dict(model), path)


def load_model(path, schema: StructureSchema | None = None):
    return model_from_dict(load_json(path), path, schema)


# -- manifests ----------------------------------------------------------------

SPLITS = ("train", "test")


@dataclass
class DatasetManifest:
    class_name: str
    schema: str  # schema path, relative to the manifest
    items: list = field(default_factory=list)  # (image path, annotation path, split)
    negatives: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": "fullinterp-manifest",
            "version": FORMAT_VERSION,
            "class_name": self.class_name,
            "schema": self.schema,
            "items": [{"image": i, "annotation": a, "split": s} for i, a, s in self.items],
            "negatives": list(self.negatives),
        }


def manifest_from_dict(doc, path="<manifest>") -> DatasetManifest:
    _expect_format(doc, "fullinterp-manifest", path)
    where = str(path)
    items = []
    for k, it in enumerate(_field(doc, "items", list, where)):
        w = f"{where}: items[{k}]"
        if not isinstance(it, dict):
            raise ParseError(f"{w}: expected an object")
        split = _field(it, "split", str, w)
        if split not in SPLITS:
            raise ParseError(f"{w}.split: expected one of {SPLITS}, got {split!r}")
        items.append((_field(it, "image", str, w), _field(it, "annotation", str, w), split))
    negs = _field(doc, "negatives", list, where) if "negatives" in doc else []
    for k, n in enumerate(negs):
        if not isinstance(n, str):
            raise ParseError(f"{where}: negatives[{k}]: expected a path string")
    return DatasetManifest(
        str(doc.get("class_name", "")), _field(doc, "schema", str, where), items, list(negs)
    )


def load_manifest(path) -> DatasetManifest:
    return manifest_from_dict(load_json(path), path)


def save_manifest(m: DatasetManifest, path) -> None:
    save_json(m.to_dict(), path)


@dataclass
class Dataset:
    schema: StructureSchema
    train: list  # AnnotatedPatch
    test: list
    negatives: list  # ImagePatch


def load_dataset(path, schema: StructureSchema | None = None, allow_png: bool = False) -> Dataset:
    """Resolve a manifest and load everything it names, validated against the schema."""
    m = load_manifest(path)
    root = os.path.dirname(os.path.abspath(path))

    def resolve(rel):
        return rel if os.path.isabs(rel) else os.path.join(root, rel)

    if schema is None:
        schema = load_schema(resolve(m.schema))
    split = {s: [] for s in SPLITS}
    for img_rel, ann_rel, s in m.items:
        img = load_image(resolve(img_rel), allow_png)
        ann_path = resolve(ann_rel)
        ann = load_annotation(ann_path)
        check_annotation(ann, schema, img, ann_path)
        split[s].append(AnnotatedPatch(img, {n: ann.parts[n] for n in schema.part_names}, img_rel))
    negs = [load_image(resolve(n), allow_png) for n in m.negatives]
    return Dataset(schema, split["train"], split["test"], negs)


# -- results ------------------------------------------------------------------


def result_to_dict(result, image: str = "") -> dict:
    """Interpretation result; timing is left out so the document is reproducible."""
    stats = {k: v for k, v in result.search_stats.items() if k != "elapsed"}
    return {
        "format": "fullinterp-interpretation",
        "version": FORMAT_VERSION,
        "image": image,
        "score": float(result.score),
        "configuration": {n: primitive_to_dict(p) for n, p in result.configuration.items()},
        "search_stats": stats,
    }


def result_from_dict(doc, path="<result>") -> dict:
    """Configuration of a saved interpretation, as part name -> Primitive."""
    _expect_format(doc, "fullinterp-interpretation", path)
    cfg = _field(doc, "configuration", dict, str(path))
    return {n: primitive_from_dict(p, f"{path}: configuration.{n}") for n, p in cfg.items()}


def candidates_to_dict(cands: CandidateSet) -> dict:
    def rows(prims, sal):
        return [dict(primitive_to_dict(p), salience=float(s)) for p, s in zip(prims, sal)]

    return {
        "format": "fullinterp-candidates",
        "version": FORMAT_VERSION,
        "points": rows(cands.points, cands.point_saliences),
        "contours": rows(cands.contours, cands.contour_saliences),
        "regions": rows(cands.regions, cands.region_saliences),
    }


def candidates_from_dict(doc, path="<candidates>") -> CandidateSet:
    _expect_format(doc, "fullinterp-candidates", path)
    out = CandidateSet()
    for key, prims, sal in (
        ("points", out.points, out.point_saliences),
        ("contours", out.contours, out.contour_saliences),
        ("regions", out.regions, out.region_saliences),
    ):
        for i, rec in enumerate(_field(doc, key, list, str(path))):
            where = f"{path}: {key}[{i}]"
            prims.append(primitive_from_dict(rec, where))
            s = _field(rec, "salience", (int, float), where)
            if not (math.isfinite(s) and s >= 0):
                raise ParseError(f"{where}.salience: must be finite and >= 0")
            sal.append(float(s))
    return out
