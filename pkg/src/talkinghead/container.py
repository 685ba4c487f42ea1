"""Array-container directory format.

Layout: ``<root>/manifest.json`` plus ``<root>/arrays/<name>.f32`` holding
raw little-endian 32-bit values in C order (no header; all structure lives
in the manifest). Optional 8-bit sRGB copies of image arrays go under
``<root>/frames/<index>.png``. Datasets and checkpoints both use this
format.
"""

import json
import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    LengthMismatchError,
    MissingFileError,
    UnknownSchemaError,
    UnsupportedDtypeError,
)

SCHEMA_VERSION = 1
_DTYPES = {"f4": np.dtype("<f4"), "i4": np.dtype("<i4")}


def canonical_json(obj) -> str:
    """Deterministic JSON encoding (sorted keys, compact separators)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_container(root, arrays, name, seed=0, meta=None, extra_manifest=None):
    """Write a container directory.

    arrays: dict name -> np.ndarray (stored as f4 unless integer -> i4).
    extra_manifest: additional top-level manifest keys (fps, frame_count, ...).
    """
    root = Path(root)
    (root / "arrays").mkdir(parents=True, exist_ok=True)
    entries = []
    for arr_name in sorted(arrays):
        arr = np.asarray(arrays[arr_name])
        dtype = "i4" if np.issubdtype(arr.dtype, np.integer) else "f4"
        data = np.ascontiguousarray(arr.astype(_DTYPES[dtype]))
        rel = f"arrays/{arr_name}.f32"
        (root / rel).write_bytes(data.tobytes(order="C"))
        entries.append(
            {"name": arr_name, "dtype": dtype, "shape": list(arr.shape), "file": rel}
        )
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "name": name,
        "seed": seed,
        "arrays": entries,
        "meta": meta or {},
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    (root / "manifest.json").write_text(canonical_json(manifest) + "\n", "utf-8")
    return root


class Container:
    """Lazy handle over a container directory; arrays load on access."""

    def __init__(self, root, manifest):
        self.root = Path(root)
        self.manifest = manifest
        self._entries = {e["name"]: e for e in manifest["arrays"]}

    @property
    def names(self):
        return list(self._entries)

    @property
    def meta(self):
        return self.manifest.get("meta", {})

    def __contains__(self, name):
        return name in self._entries

    def load(self, name):
        entry = self._entries[name]
        data = (self.root / entry["file"]).read_bytes()
        arr = np.frombuffer(data, dtype=_DTYPES[entry["dtype"]])
        return arr.reshape(entry["shape"]).copy()


def load_container(root) -> Container:
    """Open and validate a container; shapes are checked against file sizes."""
    root = Path(root)
    path = root / "manifest.json"
    if not path.exists():
        raise MissingFileError(f"no manifest.json under {root}")
    manifest = json.loads(path.read_text("utf-8"))
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise UnknownSchemaError(
            f"unsupported schema_version {manifest.get('schema_version')!r}"
        )
    for entry in manifest["arrays"]:
        if entry["dtype"] not in _DTYPES:
            raise UnsupportedDtypeError(
                f"array {entry['name']!r}: unsupported dtype {entry['dtype']!r}"
            )
        fpath = root / entry["file"]
        if not fpath.exists():
            raise MissingFileError(f"array {entry['name']!r}: missing {entry['file']}")
        expected = 4 * int(np.prod(entry["shape"], dtype=np.int64))
        actual = fpath.stat().st_size
        if actual != expected:
            raise LengthMismatchError(
                f"array {entry['name']!r}: {actual} bytes on disk, expected {expected}"
            )
    return Container(root, manifest)


def write_frames(root, images):
    """Write [T,H,W,3] float images in [0,1] as 8-bit sRGB PNGs under frames/."""
    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    images = np.asarray(images)
    for i in range(images.shape[0]):
        img = np.clip(np.round(images[i] * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(img, mode="RGB").save(root / "frames" / f"{i:05d}.png")


def read_frames(root):
    """Read frames/*.png back as [T,H,W,3] float in [0,1]."""
    root = Path(root)
    files = sorted((root / "frames").glob("*.png"))
    if not files:
        raise MissingFileError(f"no frames under {root}")
    return np.stack(
        [np.asarray(Image.open(f), dtype=np.float32) / 255.0 for f in files]
    )


def content_hash(root) -> str:
    """SHA-256 over sorted (relative path, bytes) of every file in a directory."""
    root = Path(root)
    h = hashlib.sha256()
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(f.relative_to(root)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()
