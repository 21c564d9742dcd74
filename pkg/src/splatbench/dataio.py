"""On-disk formats: the PCAF cloud container, PLY/CSV ingestion, prediction
files, JSON-lines manifests, image dumps, and report emission.

Everything serialized is little-endian and versioned; payload floats are
float32 (internal math stays float64 and is downcast only here).

PCAF container layout (all little-endian):
    bytes 0..3    magic "PCAF"
    bytes 4..7    u32 version ( = 1)
    bytes 8..11   u32 n_points
    bytes 12..15  u32 flags (bit 0: labels present)
    then n*3 float32 coordinates, then n float32 labels when flagged
"""

from __future__ import annotations

import csv
import io as _io
import json
import struct
import warnings

import numpy as np

from .core import LabeledCloud, SampleManifest, UnknownCategory

MAGIC = b"PCAF"
VERSION = 1
FLAG_LABELS = 1

MANIFEST_SCHEMA_VERSION = 1


class BadMagic(ValueError):
    pass


class Truncated(ValueError):
    pass


class LabelOutOfRange(ValueError):
    pass


class UnsupportedPly(ValueError):
    pass


class MissingColumn(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


def write_cloud(path: str, cloud: LabeledCloud, with_labels: bool = True) -> None:
    flags = FLAG_LABELS if with_labels else 0
    n = cloud.n_points
    buf = _io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<III", VERSION, n, flags))
    buf.write(cloud.points.astype("<f4").tobytes())
    if with_labels:
        buf.write(cloud.labels.astype("<f4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def read_cloud(path: str) -> LabeledCloud:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:4] != MAGIC:
        raise BadMagic(f"{path}: not a PCAF container")
    version, n, flags = struct.unpack("<III", data[4:16])
    if version > VERSION:
        raise SchemaMismatch(f"{path}: container version {version} > {VERSION}")
    expected = 16 + 12 * n + (4 * n if flags & FLAG_LABELS else 0)
    if len(data) != expected:
        raise Truncated(f"{path}: expected {expected} bytes, got {len(data)}")
    points = np.frombuffer(data, dtype="<f4", count=3 * n, offset=16)
    points = points.reshape(n, 3).astype(np.float64)
    if flags & FLAG_LABELS:
        labels = np.frombuffer(data, dtype="<f4", count=n,
                               offset=16 + 12 * n).astype(np.float64)
        if labels.size and (labels.min() < 0.0 or labels.max() > 1.0):
            raise LabelOutOfRange(f"{path}: labels outside [0, 1]")
    else:
        labels = np.zeros(n)
    return LabeledCloud(points, labels)


def _parse_ply_header(f) -> tuple[str, int, list[tuple[str, str]]]:
    if f.readline().strip() != b"ply":
        raise UnsupportedPly("missing ply magic")
    fmt = None
    n_vertex = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    while True:
        line = f.readline()
        if not line:
            raise UnsupportedPly("unterminated header")
        parts = line.decode("ascii", "replace").split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_vertex = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise UnsupportedPly("list properties are not supported")
            props.append((parts[1], parts[2]))
        elif parts[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise UnsupportedPly(f"unsupported format {fmt!r}")
    if n_vertex is None:
        raise UnsupportedPly("no vertex element")
    return fmt, n_vertex, props


_PLY_DTYPES = {
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
    "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
}


def ingest_ply(path: str, label_property: str = "label") -> LabeledCloud:
    """Read x/y/z (+ optional scalar label property) from an ASCII or
    binary-little-endian PLY.  Missing labels default to 0 with a warning."""
    with open(path, "rb") as f:
        fmt, n, props = _parse_ply_header(f)
        names = [p[1] for p in props]
        for axis in ("x", "y", "z"):
            if axis not in names:
                raise UnsupportedPly(f"vertex element lacks property {axis!r}")
        if fmt == "ascii":
            rows = np.loadtxt(_io.BytesIO(f.read()), ndmin=2, max_rows=n)
            if rows.shape[0] < n or rows.shape[1] < len(names):
                raise Truncated(f"{path}: expected {n} vertex rows")
            table = {name: rows[:, i] for i, name in enumerate(names)}
        else:
            dtype = np.dtype([(name, _PLY_DTYPES[typ]) for typ, name in props])
            raw = f.read(dtype.itemsize * n)
            if len(raw) < dtype.itemsize * n:
                raise Truncated(f"{path}: binary payload too short")
            rec = np.frombuffer(raw, dtype=dtype, count=n)
            table = {name: rec[name].astype(np.float64) for name in names}
    points = np.stack([table["x"], table["y"], table["z"]], axis=1)
    if label_property in table:
        labels = np.asarray(table[label_property], dtype=np.float64)
    else:
        warnings.warn(f"{path}: no {label_property!r} property; labels default to 0",
                      stacklevel=2)
        labels = np.zeros(n)
    return LabeledCloud(points.astype(np.float32).astype(np.float64),
                        labels.astype(np.float32).astype(np.float64))


def ingest_csv(path: str, label_column: str = "label") -> LabeledCloud:
    """CSV with header; requires x, y, z columns.  Missing label column
    defaults to zeros with a warning."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise MissingColumn(f"{path}: empty file")
        for col in ("x", "y", "z"):
            if col not in reader.fieldnames:
                raise MissingColumn(f"{path}: missing column {col!r}")
        has_label = label_column in reader.fieldnames
        pts, labels = [], []
        for row in reader:
            pts.append((float(row["x"]), float(row["y"]), float(row["z"])))
            labels.append(float(row[label_column]) if has_label else 0.0)
    if not has_label:
        warnings.warn(f"{path}: no {label_column!r} column; labels default to 0",
                      stacklevel=2)
    points = np.array(pts, dtype=np.float32).astype(np.float64)
    return LabeledCloud(points, np.array(labels, dtype=np.float32).astype(np.float64))


def write_prediction(path: str, scores: np.ndarray, sample_id: int,
                     model_name: str = "") -> None:
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise LabelOutOfRange("prediction scores must lie in [0, 1]")
    with open(path, "wb") as f:
        f.write(arr.astype("<f4").tobytes())
    with open(path + ".json", "w") as f:
        json.dump({"sample_id": sample_id, "model_name": model_name,
                   "n": int(arr.size)}, f, sort_keys=True)


def read_prediction(path: str) -> tuple[np.ndarray, dict]:
    with open(path + ".json") as f:
        sidecar = json.load(f)
    scores = np.fromfile(path, dtype="<f4").astype(np.float64)
    if "n" in sidecar and sidecar["n"] != scores.size:
        raise Truncated(f"{path}: sidecar says {sidecar['n']} scores, "
                        f"file holds {scores.size}")
    if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
        raise LabelOutOfRange(f"{path}: scores outside [0, 1]")
    return scores, sidecar


def save_manifest(path: str, manifests: list[SampleManifest]) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({"schema_version": MANIFEST_SCHEMA_VERSION}) + "\n")
        for m in manifests:
            rec = {"sample_id": m.sample_id,
                   "object_category": m.object_category,
                   "affordance_type": m.affordance_type,
                   "cloud_path": m.cloud_path}
            if m.prediction_path is not None:
                rec["prediction_path"] = m.prediction_path
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_manifest(path: str) -> list[SampleManifest]:
    """Load a JSON-lines manifest; rejects unknown vocabulary and newer
    schema versions."""
    manifests = []
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("schema_version", 0) > MANIFEST_SCHEMA_VERSION:
            raise SchemaMismatch(
                f"{path}: schema version {header.get('schema_version')} "
                f"> {MANIFEST_SCHEMA_VERSION}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            try:
                manifests.append(SampleManifest(
                    sample_id=int(rec["sample_id"]),
                    object_category=rec["object_category"],
                    affordance_type=rec["affordance_type"],
                    cloud_path=rec["cloud_path"],
                    prediction_path=rec.get("prediction_path"),
                ))
            except UnknownCategory:
                raise
    return manifests


def write_image_dump(path: str, array: np.ndarray, view: int) -> None:
    """Raw float32 little-endian planar dump with a JSON sidecar."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    channels, h, w = arr.shape
    with open(path, "wb") as f:
        f.write(arr.astype("<f4").tobytes())
    with open(path + ".json", "w") as f:
        json.dump({"view": view, "H": h, "W": w, "channels": channels},
                  f, sort_keys=True)


def read_image_dump(path: str) -> tuple[np.ndarray, dict]:
    with open(path + ".json") as f:
        sidecar = json.load(f)
    raw = np.fromfile(path, dtype="<f4").astype(np.float64)
    shape = (sidecar["channels"], sidecar["H"], sidecar["W"])
    if raw.size != np.prod(shape):
        raise Truncated(f"{path}: payload does not match sidecar shape")
    return raw.reshape(shape), sidecar


def write_png(path: str, image: np.ndarray) -> None:
    """8-bit PNG export for inspection only (lossy)."""
    from PIL import Image

    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:  # (3, H, W) -> (H, W, 3)
        arr = arr.transpose(1, 2, 0)
    data = np.clip(arr * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path)


def emit_csv_report(path: str, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _format_cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def emit_markdown_report(rows: list[dict], columns: list[str]) -> str:
    """Fixed-column Markdown table: one row per group (e.g. per corruption
    type), one column per metric."""
    lines = ["| " + " | ".join(columns) + " |",
             "| " + " | ".join("---" for _ in columns) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(_format_cell(row.get(c)) for c in columns)
                     + " |")
    return "\n".join(lines) + "\n"
