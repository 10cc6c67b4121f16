"""Labeled dataset container and on-disk format.

Layout: `header.json` (seed, config hash, counts), `manifest.jsonl` (one
record per sample), `rejections.jsonl` (reason-coded skips), and frames
as binary 8-bit PGM under `frames/`.  Nothing in the tree depends on wall
clock, so a rerun with the same seed is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GENERATOR_VERSION = 1


class DatasetError(ValueError):
    pass


def write_pgm(path, raster: np.ndarray) -> None:
    if raster.ndim != 2 or raster.dtype != np.uint8:
        raise DatasetError("PGM frames must be 2-D uint8")
    h, w = raster.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(raster.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise DatasetError(f"{path}: not a binary PGM")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1
    w, h, maxval = fields
    if maxval != 255:
        raise DatasetError(f"{path}: unsupported maxval {maxval}")
    raster = np.frombuffer(data, np.uint8, count=w * h, offset=pos)
    return raster.reshape(h, w).copy()


def png_gray(raster: np.ndarray) -> bytes:
    """Encode a 2-D uint8 raster as an 8-bit grayscale PNG."""

    import struct
    import zlib

    if raster.ndim != 2 or raster.dtype != np.uint8:
        raise DatasetError("PNG frames must be 2-D uint8")
    h, w = raster.shape

    def chunk(tag: bytes, body: bytes) -> bytes:
        crc = zlib.crc32(tag + body) & 0xFFFFFFFF
        return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", crc)

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    rows = b"".join(b"\x00" + raster[r].tobytes() for r in range(h))
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr)
            + chunk(b"IDAT", zlib.compress(rows, 6)) + chunk(b"IEND", b""))


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def tree_hash(root, exclude: tuple = ("header.json",)) -> str:
    """Content hash of a directory tree, skipping wall-clock-bearing files."""
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        if path.name in exclude:
            continue
        digest.update(rel.encode("utf-8"))
        digest.update(b"\0")
        digest.update(path.read_bytes())
    return digest.hexdigest()


@dataclass
class LabeledSample:
    """One training example: a frame and its motion-derived labels."""

    frame: np.ndarray
    d: float
    t: float
    gt_d: float | None = None
    gt_t: float | None = None
    diag: dict = field(default_factory=dict)
    origin: str = "raw"

    def __post_init__(self):
        if not (-1.0 < self.d < 1.0 and -1.0 < self.t < 1.0):
            raise DatasetError(f"labels out of range: d={self.d} t={self.t}")
        if self.frame.ndim != 2 or self.frame.dtype != np.uint8:
            raise DatasetError("frame must be a 2-D uint8 raster")


@dataclass
class LabeledDataset:
    samples: list[LabeledSample] = field(default_factory=list)
    header: dict = field(default_factory=dict)
    rejections: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def save(self, root) -> None:
        root = Path(root)
        (root / "frames").mkdir(parents=True, exist_ok=True)
        header = dict(self.header)
        header["generator_version"] = GENERATOR_VERSION
        header["counts"] = {"samples": len(self.samples),
                           "rejections": len(self.rejections)}
        with open(root / "header.json", "w") as f:
            json.dump(header, f, indent=1, sort_keys=True)
        with open(root / "manifest.jsonl", "w") as f:
            for i, s in enumerate(self.samples):
                rel = f"frames/{i:05d}.pgm"
                write_pgm(root / rel, s.frame)
                rec = {"frame": rel, "d": round(float(s.d), 9), "t": round(float(s.t), 9),
                       "gt_d": None if s.gt_d is None else round(float(s.gt_d), 9),
                       "gt_t": None if s.gt_t is None else round(float(s.gt_t), 9),
                       "diag": s.diag, "origin": s.origin}
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        with open(root / "rejections.jsonl", "w") as f:
            for rec in self.rejections:
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load(cls, root) -> "LabeledDataset":
        root = Path(root)
        try:
            with open(root / "header.json") as f:
                header = json.load(f)
        except FileNotFoundError as exc:
            raise DatasetError(f"{root}: not a dataset (missing header.json)") from exc
        samples = []
        with open(root / "manifest.jsonl") as f:
            for line in f:
                rec = json.loads(line)
                samples.append(LabeledSample(
                    frame=read_pgm(root / rec["frame"]),
                    d=rec["d"], t=rec["t"], gt_d=rec["gt_d"], gt_t=rec["gt_t"],
                    diag=rec.get("diag", {}), origin=rec.get("origin", "raw")))
        rejections = []
        rej_path = root / "rejections.jsonl"
        if rej_path.exists():
            with open(rej_path) as f:
                rejections = [json.loads(line) for line in f if line.strip()]
        expect = header.get("counts", {}).get("samples")
        if expect is not None and expect != len(samples):
            raise DatasetError(f"{root}: header says {expect} samples, found {len(samples)}")
        return cls(samples=samples, header=header, rejections=rejections)
