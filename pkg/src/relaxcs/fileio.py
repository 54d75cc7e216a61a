"""On-disk formats: sampling patterns, k-space containers, grayscale maps.

All formats are self-describing and byte-deterministic so experiment runs
can be compared with plain file hashes:

* pattern files are text: a key/value header plus run-length-encoded mask
  rows (alternating zero/one run lengths, starting with zeros);
* k-space containers are a short ASCII header followed by little-endian
  float32 (real, imag) interleaved planes in echo-major, coil-minor order,
  with per-echo patterns stored as referenced sidecar files;
* map images are 8-bit binary PGM with explicit linear windowing.
"""

from __future__ import annotations

import os
from typing import Tuple

import numpy as np

from .core import EchoTimes, KSpaceData
from .sampling import EchoPatternSet, SamplingPattern

__all__ = [
    "FileFormatError",
    "save_pattern",
    "load_pattern",
    "save_kspace",
    "load_kspace",
    "export_map_image",
]

_PATTERN_MAGIC = "relaxcs-pattern"
_KSPACE_MAGIC = "RELAXCSKSP"
_VERSION = 1


class FileFormatError(ValueError):
    """Bad magic, version, or truncated/inconsistent payload."""


def _rle_encode_row(row: np.ndarray) -> str:
    # alternating run lengths, starting with a (possibly zero-length) 0-run
    runs = []
    current = 0
    count = 0
    for v in row:
        v = int(v)
        if v == current:
            count += 1
        else:
            runs.append(count)
            current = v
            count = 1
    runs.append(count)
    if not runs:
        runs = [len(row)]
    return " ".join(str(r) for r in runs)


def _rle_decode_row(text: str, cols: int) -> np.ndarray:
    runs = [int(tok) for tok in text.split()]
    row = np.zeros(cols, dtype=np.float64)
    pos = 0
    val = 0
    for r in runs:
        if r < 0 or pos + r > cols:
            raise FileFormatError(f"run-length data overflows row of {cols}")
        if val:
            row[pos:pos + r] = 1.0
        pos += r
        val ^= 1
    if pos != cols:
        raise FileFormatError(f"run-length row covers {pos} of {cols} columns")
    return row


def save_pattern(path, pattern: SamplingPattern) -> None:
    lines = [
        f"{_PATTERN_MAGIC} v{_VERSION}",
        f"rows {pattern.rows}",
        f"cols {pattern.cols}",
        f"d_min {pattern.d_min!r}",
        f"target_rate {pattern.target_rate!r}",
        f"calib_radius {pattern.calib_radius}",
        f"seed {pattern.seed}",
        "data",
    ]
    lines += [_rle_encode_row(r) for r in pattern.mask]
    lines.append("end")
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_pattern(path) -> SamplingPattern:
    with open(path, "r", encoding="ascii") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or not lines[0].startswith(_PATTERN_MAGIC):
        raise FileFormatError(f"{path}: not a pattern file")
    if lines[0] != f"{_PATTERN_MAGIC} v{_VERSION}":
        raise FileFormatError(f"{path}: unsupported version {lines[0]!r}")
    header = {}
    idx = 1
    while idx < len(lines) and lines[idx] != "data":
        key, _, val = lines[idx].partition(" ")
        header[key] = val
        idx += 1
    if idx >= len(lines):
        raise FileFormatError(f"{path}: missing data section")
    try:
        rows = int(header["rows"])
        cols = int(header["cols"])
        d_min = float(header["d_min"])
        target_rate = float(header["target_rate"])
        calib_radius = int(header["calib_radius"])
        seed = int(header["seed"])
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad header ({exc})") from exc
    body = lines[idx + 1: idx + 1 + rows]
    if len(body) != rows or lines[idx + 1 + rows] != "end":
        raise FileFormatError(f"{path}: truncated mask data")
    mask = np.stack([_rle_decode_row(ln, cols) for ln in body])
    return SamplingPattern(mask=mask, d_min=d_min, target_rate=target_rate,
                           calib_radius=calib_radius, seed=seed)


def save_kspace(path, data: KSpaceData, times: EchoTimes) -> None:
    """Write a container plus one referenced pattern sidecar per echo."""
    path = os.fspath(path)
    stem = os.path.splitext(os.path.basename(path))[0]
    dirname = os.path.dirname(path) or "."
    refs = []
    for i, pat in enumerate(data.patterns.patterns):
        ref = f"{stem}.pat{i}.txt"
        save_pattern(os.path.join(dirname, ref), pat)
        refs.append(ref)
    E, J = data.n_echoes, data.n_coils
    rows, cols = data.shape
    header = (
        f"{_KSPACE_MAGIC} {_VERSION}\n"
        f"rows {rows}\n"
        f"cols {cols}\n"
        f"echoes {E}\n"
        f"coils {J}\n"
        f"times {','.join(repr(float(t)) for t in times.values)}\n"
        f"patterns {','.join(refs)}\n"
        f"scheme {data.patterns.scheme}\n"
        f"endian little\n"
        f"data\n"
    )
    planes = np.empty((E, J, rows, cols, 2), dtype="<f4")
    planes[..., 0] = data.y.real.astype(np.float32)
    planes[..., 1] = data.y.imag.astype(np.float32)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(planes.tobytes())


def load_kspace(path) -> Tuple[KSpaceData, EchoTimes]:
    path = os.fspath(path)
    with open(path, "rb") as f:
        blob = f.read()
    mark = blob.find(b"data\n")
    if mark < 0:
        raise FileFormatError(f"{path}: missing data marker")
    header_lines = blob[:mark].decode("ascii").splitlines()
    payload = blob[mark + 5:]
    if not header_lines or not header_lines[0].startswith(_KSPACE_MAGIC):
        raise FileFormatError(f"{path}: not a k-space container")
    magic, _, ver = header_lines[0].partition(" ")
    if magic != _KSPACE_MAGIC or ver != str(_VERSION):
        raise FileFormatError(f"{path}: unsupported magic/version {header_lines[0]!r}")
    fields = {}
    for ln in header_lines[1:]:
        key, _, val = ln.partition(" ")
        fields[key] = val
    try:
        rows = int(fields["rows"])
        cols = int(fields["cols"])
        E = int(fields["echoes"])
        J = int(fields["coils"])
        times = EchoTimes(np.array([float(v) for v in fields["times"].split(",")]))
        refs = fields["patterns"].split(",")
        scheme = fields["scheme"]
        if fields.get("endian", "little") != "little":
            raise FileFormatError(f"{path}: unsupported endianness")
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad header ({exc})") from exc
    expect = rows * cols * E * J * 2 * 4
    if len(payload) != expect:
        raise FileFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expect}")
    planes = np.frombuffer(payload, dtype="<f4").reshape(E, J, rows, cols, 2)
    y = np.empty((E, J, rows, cols), dtype=np.complex128)
    y.real = planes[..., 0]   # direct part assignment keeps signed zeros intact
    y.imag = planes[..., 1]
    dirname = os.path.dirname(path) or "."
    pats = tuple(load_pattern(os.path.join(dirname, ref)) for ref in refs)
    if len(pats) != E:
        raise FileFormatError(f"{path}: {len(pats)} patterns for {E} echoes")
    return KSpaceData(y=y, patterns=EchoPatternSet(pats, scheme)), times


def export_map_image(img: np.ndarray, path, window) -> None:
    """8-bit binary PGM with linear windowing of [lo, hi] onto 0..255."""
    lo, hi = float(window[0]), float(window[1])
    if lo >= hi:
        raise ValueError(f"window low {lo} must be below high {hi}")
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("map image must be 2-D")
    scaled = np.clip((arr - lo) / (hi - lo), 0.0, 1.0)
    pixels = np.rint(scaled * 255.0).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(pixels.tobytes())
