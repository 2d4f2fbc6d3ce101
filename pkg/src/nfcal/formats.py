"""
On-disk formats: FieldGrid / spectrum binaries and the CSV exports.

Binary files are little-endian: a fixed header followed by ``nx * ny``
interleaved float64 ``(re, im)`` pairs in row-major ``[i, j]`` order
(``i`` along x). See ``docs/formats.md``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import struct

import numpy as np

from .forward_model import DirectionGrid, FarFieldPattern, FieldGrid
from .transforms import AngularSpectrum

FORMAT_VERSION = 1
FIELD_MAGIC = b"NFCFGRID"
SPECTRUM_MAGIC = b"NFCSPECT"
# magic, version, frequency, z, x0, y0, dx, dy, nx, ny, scenario hash
_HEADER = struct.Struct("<8sI6dqq16s")


class FormatError(ValueError):
    pass


def scenario_hash(payload) -> bytes:
    """16-byte digest of a JSON-serialisable payload (sorted keys)."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).digest()[:16]


def _pack(magic, frequency, z, x0, y0, dx, dy, values, digest):
    values = np.ascontiguousarray(values, dtype="<c16")
    nx, ny = values.shape
    digest = (digest or b"").ljust(16, b"\0")[:16]
    head = _HEADER.pack(magic, FORMAT_VERSION, frequency, z, x0, y0, dx, dy, nx, ny, digest)
    return head + values.tobytes()


def _unpack(blob: bytes, magic):
    if len(blob) < _HEADER.size:
        raise FormatError("file shorter than the header")
    m, ver, freq, z, x0, y0, dx, dy, nx, ny, digest = _HEADER.unpack_from(blob)
    if m != magic:
        raise FormatError(f"bad magic {m!r}, expected {magic!r}")
    if ver != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {ver}")
    n = nx * ny
    body = blob[_HEADER.size:]
    if len(body) != 16 * n:
        raise FormatError(f"payload has {len(body)} bytes, header implies {16 * n}")
    values = np.frombuffer(body, dtype="<c16").reshape(nx, ny).astype(np.complex128)
    return dict(frequency=freq, z=z, x0=x0, y0=y0, dx=dx, dy=dy, digest=digest), values


def field_grid_bytes(grid: FieldGrid, digest: bytes | None = None) -> bytes:
    return _pack(FIELD_MAGIC, grid.frequency, grid.z_plane, grid.x0, grid.y0, grid.dx, grid.dy,
                 grid.samples, digest)


def field_grid_from_bytes(blob: bytes) -> FieldGrid:
    h, values = _unpack(blob, FIELD_MAGIC)
    return FieldGrid(h["z"], h["x0"], h["y0"], h["dx"], h["dy"], values.shape[0], values.shape[1],
                     h["frequency"], values)


def write_field_grid(path, grid: FieldGrid, digest: bytes | None = None):
    with open(path, "wb") as f:
        f.write(field_grid_bytes(grid, digest))


def read_field_grid(path) -> FieldGrid:
    with open(path, "rb") as f:
        return field_grid_from_bytes(f.read())


def header_digest(path) -> bytes:
    with open(path, "rb") as f:
        return _HEADER.unpack(f.read(_HEADER.size))[-1]


def spectrum_bytes(spec: AngularSpectrum, digest: bytes | None = None) -> bytes:
    """The header stores the padded spatial grid; ``kx``/``ky`` follow from it."""
    return _pack(SPECTRUM_MAGIC, spec.frequency, spec.z_plane, spec.x0, spec.y0, spec.dx, spec.dy,
                 spec.values, digest)


def spectrum_from_bytes(blob: bytes) -> AngularSpectrum:
    h, values = _unpack(blob, SPECTRUM_MAGIC)
    nx, ny = values.shape
    kx = 2.0 * np.pi * np.fft.fftshift(np.fft.fftfreq(nx, h["dx"]))
    ky = 2.0 * np.pi * np.fft.fftshift(np.fft.fftfreq(ny, h["dy"]))
    return AngularSpectrum(kx, ky, values, h["frequency"], h["z"], h["x0"], h["y0"], h["dx"], h["dy"])


def write_spectrum(path, spec: AngularSpectrum, digest: bytes | None = None):
    with open(path, "wb") as f:
        f.write(spectrum_bytes(spec, digest))


def read_spectrum(path) -> AngularSpectrum:
    with open(path, "rb") as f:
        return spectrum_from_bytes(f.read())


def _comment_lines(header_comment):
    return f"# {header_comment}\n" if header_comment else ""


def _data_lines(text: str):
    return [line for line in text.splitlines() if line and not line.startswith("#")]


def _meta(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line.startswith("#@"):
            key, _, val = line[2:].partition("=")
            out[key.strip()] = val.strip()
    return out


def field_grid_csv(grid: FieldGrid, header_comment=None) -> str:
    """Lossless text export: ``x_m, y_m, re, im`` per sample plus ``#@`` grid metadata."""
    buf = io.StringIO()
    buf.write(_comment_lines(header_comment))
    for key in ("frequency", "z_plane", "x0", "y0", "dx", "dy", "nx", "ny"):
        buf.write(f"#@ {key}={getattr(grid, key)!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x_m", "y_m", "re", "im"])
    x, y = grid.x, grid.y
    for i in range(grid.nx):
        for j in range(grid.ny):
            v = grid.samples[i, j]
            w.writerow([repr(float(x[i])), repr(float(y[j])), repr(float(v.real)), repr(float(v.imag))])
    return buf.getvalue()


def field_grid_from_csv(text: str) -> FieldGrid:
    m = _meta(text)
    try:
        nx, ny = int(m["nx"]), int(m["ny"])
        rows = list(csv.DictReader(_data_lines(text)))
        vals = np.array([complex(float(r["re"]), float(r["im"])) for r in rows]).reshape(nx, ny)
        return FieldGrid(float(m["z_plane"]), float(m["x0"]), float(m["y0"]), float(m["dx"]),
                         float(m["dy"]), nx, ny, float(m["frequency"]), vals)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed field CSV: {exc}") from exc


def pattern_csv(p: FarFieldPattern, header_comment=None) -> str:
    """``alpha_deg, beta_deg, re, im``; a regular grid is flagged with ``#@ shape``."""
    buf = io.StringIO()
    buf.write(_comment_lines(header_comment))
    buf.write(f"#@ frequency={p.frequency!r}\n")
    if p.directions.is_regular():
        buf.write(f"#@ shape={p.values.shape[0]}x{p.values.shape[1]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha_deg", "beta_deg", "re", "im"])
    for a, b, v in zip(p.directions.alpha.ravel(), p.directions.beta.ravel(), p.values.ravel()):
        w.writerow([repr(float(a)), repr(float(b)), repr(float(v.real)), repr(float(v.imag))])
    return buf.getvalue()


def pattern_from_csv(text: str) -> FarFieldPattern:
    m = _meta(text)
    rows = list(csv.DictReader(_data_lines(text)))
    if not rows:
        raise FormatError("empty pattern CSV")
    a = np.array([float(r["alpha_deg"]) for r in rows])
    b = np.array([float(r["beta_deg"]) for r in rows])
    v = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    freq = float(m.get("frequency", "nan"))
    if "shape" in m:
        na, nb = (int(s) for s in m["shape"].split("x"))
        a, b, v = a.reshape(na, nb), b.reshape(na, nb), v.reshape(na, nb)
        grid = DirectionGrid(a, b, a[:, 0].copy(), b[0, :].copy())
    else:
        grid = DirectionGrid(a, b)
    return FarFieldPattern(grid, v, freq)


def residual_csv(directions: DirectionGrid, residual, header_comment=None) -> str:
    buf = io.StringIO()
    buf.write(_comment_lines(header_comment))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha_deg", "beta_deg", "residual_deg"])
    for a, b, r in zip(directions.alpha.ravel(), directions.beta.ravel(), np.ravel(residual)):
        w.writerow([repr(float(a)), repr(float(b)), repr(float(r))])
    return buf.getvalue()
