"""File formats: 16-bit PGM, raw 16-bit frames, JSON reports, provenance sidecars.

Every writer goes through ``atomic_write`` so a crashed run never leaves a
half-written file behind.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import tempfile
from pathlib import Path

import numpy as np

from .image import MAX_COUNTS, DetectorImage


def atomic_write(path, data: bytes | str) -> Path:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _clean(obj):
    # JSON has no inf/nan; write them as null
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --- PGM -------------------------------------------------------------------


def encode_pgm(data: np.ndarray, maxval: int = MAX_COUNTS) -> bytes:
    """Binary P5; two bytes per sample, most significant first, when maxval > 255."""
    arr = np.asarray(data)
    h, w = arr.shape
    vals = np.clip(np.rint(arr), 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    return header + vals.astype(dtype).tobytes()


def _tokens(buf: bytes, n: int):
    """First ``n`` header tokens of a netpbm file, skipping comments."""
    out, i = [], 0
    while len(out) < n:
        while i < len(buf) and buf[i : i + 1].isspace():
            i += 1
        if buf[i : i + 1] == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        out.append(buf[i:j])
        i = j
    return out, i + 1  # one whitespace byte ends the header


def decode_pgm(buf: bytes) -> np.ndarray:
    toks, off = _tokens(buf, 4)
    if toks[0] != b"P5":
        raise ValueError("not a binary PGM (P5) file")
    w, h, maxval = (int(t) for t in toks[1:])
    if not 0 < maxval <= 65535:
        raise ValueError(f"bad PGM maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * np.dtype(dtype).itemsize
    if len(buf) - off < n:
        raise ValueError("PGM pixel data truncated")
    return np.frombuffer(buf, dtype=dtype, count=w * h, offset=off).reshape(h, w).astype(float)


def sidecar_paths(path) -> dict:
    path = Path(path)
    stem = path.with_suffix("")
    return {
        "mask": stem.with_name(stem.name + ".mask.pgm"),
        "meta": stem.with_name(stem.name + ".json"),
    }


def write_pgm(path, img: DetectorImage, meta: dict | None = None) -> list[Path]:
    """Image as 16-bit PGM with an 8-bit mask sidecar (255 = excluded) and a JSON sidecar."""
    side = sidecar_paths(path)
    out = [atomic_write(path, encode_pgm(img.clamped().data))]
    out.append(atomic_write(side["mask"], encode_pgm(img.mask.astype(np.uint8) * 255, maxval=255)))
    m = dict(img.meta)
    m.update(meta or {})
    m.setdefault("pixel_pitch_m", img.pixel_pitch)
    m["width"], m["height"] = img.width, img.height
    m["origin_m"] = list(map(float, img.origin))
    out.append(write_json(side["meta"], m))
    return out


def read_pgm(path) -> DetectorImage:
    """Load a PGM written by ``write_pgm``; sidecars are used when present."""
    data = decode_pgm(Path(path).read_bytes())
    side = sidecar_paths(path)
    meta = read_json(side["meta"]) if side["meta"].exists() else {}
    mask = None
    if side["mask"].exists():
        mask = decode_pgm(side["mask"].read_bytes()) > 0
        if mask.shape != data.shape:
            raise ValueError("mask sidecar shape differs from image")
    kw = {}
    if "pixel_pitch_m" in meta:
        kw["pixel_pitch"] = float(meta["pixel_pitch_m"])
    if "origin_m" in meta:
        kw["origin"] = tuple(meta["origin_m"])
    return DetectorImage(data, mask=mask, meta=meta, **kw)


# --- raw frames ------------------------------------------------------------


def write_raw(path, img: DetectorImage) -> list[Path]:
    """Raw little-endian uint16 samples with a ``<path>.json`` header."""
    vals = np.clip(np.rint(img.data), 0, MAX_COUNTS).astype("<u2")
    header = {"width": img.width, "height": img.height, "pixel_pitch_um": img.pixel_pitch * 1e6}
    return [atomic_write(path, vals.tobytes()), write_json(str(path) + ".json", header)]


def read_raw(path, header=None) -> DetectorImage:
    path = Path(path)
    hdr = read_json(header or str(path) + ".json")
    try:
        w, h, pitch = int(hdr["width"]), int(hdr["height"]), float(hdr["pixel_pitch_um"])
    except KeyError as exc:
        raise ValueError(f"raw header is missing {exc}") from None
    buf = path.read_bytes()
    if len(buf) != 2 * w * h:
        raise ValueError(f"raw frame has {len(buf)} bytes, expected {2 * w * h}")
    data = np.frombuffer(buf, dtype="<u2").reshape(h, w).astype(float)
    return DetectorImage(data, pixel_pitch=pitch * 1e-6, meta={})


def read_image(path) -> DetectorImage:
    """PGM when the file starts with the P5 magic, raw 16-bit otherwise."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    return read_pgm(path) if magic == b"P5" else read_raw(path)


# --- provenance ------------------------------------------------------------


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__

    return {
        "graphdiff": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def provenance(command: str, config_text: str, seed: int | None, inputs=()) -> dict:
    """Run description with no timestamps, so reruns produce identical bytes."""
    return {
        "command": command,
        "config_sha256": config_hash(config_text),
        "config": config_text,
        "seed": seed,
        "inputs": [{"path": Path(p).name, "sha256": hashlib.sha256(Path(p).read_bytes()).hexdigest()} for p in inputs],
        "versions": versions(),
    }


def provenance_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".provenance.json")


def write_provenance(path, prov: dict) -> Path:
    return write_json(provenance_path(path), prov)
