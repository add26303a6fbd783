"""On-disk formats.

GridFile (little-endian throughout)::

    magic   4s   b"FGRD"
    version u32  1
    d       u32
    shape   d x u32           points per axis
    n       u64               subjects
    flags   u32               bit 0: truth block present
    metalen u32               bytes of UTF-8 JSON metadata that follow
    meta    metalen bytes
    payload n x N float64     subject-major, grid lexicographic (last axis fastest)
    truth   N float64         only when flags & 1

Model files use the binary layout of ``rdnn.network.to_bytes`` plus a JSON
manifest (architecture, loss, training config, seed, trace).

Heatmaps are binary 8-bit portable graymaps (P5).
"""

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from rdnn import network
from rdnn.sim import FunctionalSample, GridSpec

GRID_MAGIC = b"FGRD"
GRID_VERSION = 1


class DataInconsistency(ValueError):
    """Inputs disagree with each other (e.g. subjects on different lattices)."""


def atomic_write(path, data):
    path = Path(path)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# GridFile -------------------------------------------------------------------


def grid_to_bytes(sample):
    grid = sample.grid
    meta = json.dumps(sample.meta, sort_keys=True).encode()
    has_truth = sample.truth is not None
    head = [
        GRID_MAGIC,
        struct.pack("<II", GRID_VERSION, grid.d),
        struct.pack(f"<{grid.d}I", *grid.shape),
        struct.pack("<QII", sample.n, int(has_truth), len(meta)),
        meta,
    ]
    body = [np.ascontiguousarray(sample.responses, dtype="<f8").tobytes()]
    if has_truth:
        body.append(np.ascontiguousarray(sample.truth, dtype="<f8").tobytes())
    return b"".join(head + body)


def grid_from_bytes(buf):
    try:
        return _grid_from_bytes(buf)
    except struct.error as exc:
        raise ValueError(f"truncated grid file header ({exc})") from exc


def _grid_from_bytes(buf):
    if buf[:4] != GRID_MAGIC:
        raise ValueError("not a grid file (bad magic)")
    version, d = struct.unpack_from("<II", buf, 4)
    if version != GRID_VERSION:
        raise ValueError(f"unsupported grid file version {version}")
    pos = 12
    shape = struct.unpack_from(f"<{d}I", buf, pos)
    pos += 4 * d
    n, flags, metalen = struct.unpack_from("<QII", buf, pos)
    pos += 16
    meta = json.loads(buf[pos : pos + metalen].decode()) if metalen else {}
    pos += metalen
    grid = GridSpec(shape)
    expected = pos + 8 * n * grid.N + (8 * grid.N if flags & 1 else 0)
    if len(buf) != expected:
        raise ValueError(f"grid file size {len(buf)} inconsistent with header (expected {expected})")
    responses = np.frombuffer(buf, dtype="<f8", count=n * grid.N, offset=pos).reshape(n, grid.N).astype(float)
    pos += 8 * n * grid.N
    truth = None
    if flags & 1:
        truth = np.frombuffer(buf, dtype="<f8", count=grid.N, offset=pos).astype(float)
    return FunctionalSample(grid, responses, truth, meta)


def write_grid(path, sample):
    atomic_write(path, grid_to_bytes(sample))


def read_grid(path):
    return grid_from_bytes(Path(path).read_bytes())


# Models ---------------------------------------------------------------------


def write_model(prefix, result, text=False):
    """Write ``<prefix>.rdnn`` (or ``.rdnn.json`` when ``text``) and ``<prefix>.json``."""
    prefix = str(prefix)
    if text:
        model_path = prefix + ".rdnn.json"
        atomic_write(model_path, network.to_text(result.params))
    else:
        model_path = prefix + ".rdnn"
        atomic_write(model_path, network.to_bytes(result.params))
    manifest = result.manifest()
    manifest["model_file"] = os.path.basename(model_path)
    atomic_write(prefix + ".json", json.dumps(manifest, indent=1))
    return model_path, prefix + ".json"


def read_model(prefix):
    from rdnn.estimator import FitResult

    prefix = str(prefix)
    manifest = json.loads(Path(prefix + ".json").read_text())
    model_path = Path(prefix).parent / manifest["model_file"]
    if model_path.name.endswith(".rdnn.json"):
        params = network.from_text(model_path.read_text())
    else:
        params = network.from_bytes(model_path.read_bytes())
    return FitResult.from_manifest(manifest, params)


# Heatmaps -------------------------------------------------------------------


def to_gray(surface):
    """Min-max scale a 2D array to 0..255; a constant surface maps to 128."""
    a = np.asarray(surface, dtype=float)
    if a.ndim != 2:
        raise ValueError("heatmap surface must be two-dimensional")
    if not np.all(np.isfinite(a)):
        raise ValueError("heatmap surface contains non-finite values")
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.full(a.shape, 128, dtype=np.uint8)
    return np.rint((a - lo) / (hi - lo) * 255).astype(np.uint8)


def emit_heatmap(surface, path):
    """Write ``surface`` as a P5 graymap; rows of the array are image rows."""
    img = to_gray(surface)
    h, w = img.shape
    atomic_write(path, f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def read_pgm(path):
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError("not a binary graymap")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError("only 8-bit graymaps are supported")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    return pixels.reshape(h, w)


def surface_slices(values, shape):
    """2D slices of a lattice surface: the surface itself for d = 2, one slice
    per index of the last axis for d = 3."""
    arr = np.asarray(values, dtype=float).reshape(shape)
    if arr.ndim == 1:
        return [arr[None, :]]
    if arr.ndim == 2:
        return [arr]
    if arr.ndim == 3:
        return [arr[:, :, k] for k in range(arr.shape[2])]
    raise ValueError(f"cannot slice a {arr.ndim}-dimensional surface into images")


# Ingestion ------------------------------------------------------------------


def _lattice_from_coords(coords):
    """Per-axis sorted unique coordinate values and integer positions."""
    axes, pos = [], []
    for k in range(coords.shape[1]):
        vals, inv = np.unique(coords[:, k], return_inverse=True)
        axes.append(vals)
        pos.append(inv)
    return axes, np.stack(pos, axis=1)


def ingest_csv_dir(directory):
    """Read one CSV per subject (rows ``x1,...,xd,value``) on a shared full
    lattice. Files are taken in sorted name order. Coordinates are replaced by
    their rank ``j / m`` on each axis."""
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".csv")
    if not files:
        raise FileNotFoundError(f"no .csv files in {directory}")
    ref_axes, rows = None, []
    for f in files:
        try:
            table = np.loadtxt(f, delimiter=",", ndmin=2, comments="#")
        except ValueError as exc:
            raise DataInconsistency(f"{f.name}: {exc}") from exc
        if table.shape[1] < 2:
            raise DataInconsistency(f"{f.name}: need at least one coordinate column and a value column")
        coords, values = table[:, :-1], table[:, -1]
        axes, pos = _lattice_from_coords(coords)
        shape = tuple(len(a) for a in axes)
        if int(np.prod(shape)) != len(values):
            raise DataInconsistency(f"{f.name}: {len(values)} rows do not fill a {shape} lattice")
        flat = np.ravel_multi_index(tuple(pos.T), shape)
        if len(np.unique(flat)) != len(flat):
            raise DataInconsistency(f"{f.name}: duplicate lattice points")
        if ref_axes is None:
            ref_axes = axes
        elif len(axes) != len(ref_axes) or any(
            a.shape != b.shape or not np.allclose(a, b, rtol=0, atol=1e-9) for a, b in zip(axes, ref_axes)
        ):
            raise DataInconsistency(f"{f.name}: lattice differs from {files[0].name}")
        row = np.empty(len(values))
        row[flat] = values
        rows.append(row)
    grid = GridSpec(tuple(len(a) for a in ref_axes))
    meta = {"source": "csv", "files": [f.name for f in files], "axes": [a.tolist() for a in ref_axes]}
    return FunctionalSample(grid, np.array(rows), None, meta)


def ingest_raw(path, header=None):
    """Read a raw float stack with a JSON sidecar ``{"shape": [...], "n": n,
    "dtype": "<f8"}`` (sidecar defaults to ``<path>.json``)."""
    path = Path(path)
    header = Path(header) if header else path.with_name(path.name + ".json")
    doc = json.loads(header.read_text())
    shape = tuple(int(s) for s in doc["shape"])
    n = int(doc["n"])
    dtype = np.dtype(doc.get("dtype", "<f8"))
    data = np.fromfile(path, dtype=dtype)
    N = int(np.prod(shape))
    if data.size != n * N:
        raise DataInconsistency(f"{path.name}: {data.size} values, header promises {n} x {N}")
    return FunctionalSample(GridSpec(shape), data.reshape(n, N).astype(float), None, {"source": "raw", "file": path.name})
