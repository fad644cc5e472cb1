"""Synthetic monitoring scene: moving rectangles over a static background.

Generates a deterministic stream of grayscale frames paired with ground-truth
binary masks of the object pixels. Weather variants restyle the frame only;
masks are weather-invariant by construction. Also provides the payload
encoders: a lossless run-length mask codec with exact byte counts, tabulated
per-weather full-frame sizes for baseline energy studies, and PGM export.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .sampling import SemanticMap

WEATHER_KINDS = ("clear", "rain", "snow", "fog")

# Measured full-frame compressed sizes in bytes at the reference resolution.
FRAME_BYTES_TABLE = {"clear": 93_000, "rain": 96_000, "snow": 82_000, "fog": 128_000}
MAP_BYTES_TABULATED = 5_000
REFERENCE_PIXELS = 128 * 96

# Mask payload header: magic, version, mode (0 = run-length, 1 = raw bitmap),
# width, height, timestamp.
_HEADER = struct.Struct("<2sBBHHQ")
_MAGIC = b"SM"
_VERSION = 1
_MODE_RLE = 0
_MODE_RAW = 1


@dataclass(frozen=True)
class ObjectSpec:
    """One moving rectangle: top-left position, velocity, size (pixels)."""

    row: float
    col: float
    vel_row: float
    vel_col: float
    height: int
    width: int

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("object size must be at least 1x1")


@dataclass(frozen=True)
class SceneConfig:
    width: int
    height: int
    objects: tuple[ObjectSpec, ...]
    weather: str = "clear"
    seed: int = 0
    duration: int = 100

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame must be non-empty, got {self.width}x{self.height}")
        if self.weather not in WEATHER_KINDS:
            raise ValueError(f"unknown weather {self.weather!r}, expected one of {WEATHER_KINDS}")
        if self.duration < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        for obj in self.objects:
            if obj.height > self.height or obj.width > self.width:
                raise ValueError("object larger than frame")
            if not (0 <= obj.row <= self.height - obj.height):
                raise ValueError(f"object row {obj.row} outside frame")
            if not (0 <= obj.col <= self.width - obj.width):
                raise ValueError(f"object col {obj.col} outside frame")


@dataclass(frozen=True, eq=False)
class Frame:
    """8-bit grayscale frame at one tick."""

    pixels: np.ndarray
    timestamp: int

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=np.uint8)
        if pixels.ndim != 2 or pixels.size == 0:
            raise ValueError(f"pixels must be a non-empty 2-D grid, got shape {pixels.shape}")
        object.__setattr__(self, "pixels", pixels)


def default_objects(count: int, width: int, height: int, seed: int) -> tuple[ObjectSpec, ...]:
    """Reproducible object kinematics for configs that give only a count."""
    rng = np.random.default_rng(seed)
    objects = []
    for _ in range(count):
        h = int(rng.integers(6, max(7, height // 6)))
        w = int(rng.integers(6, max(7, width // 6)))
        objects.append(
            ObjectSpec(
                row=float(rng.uniform(0, height - h)),
                col=float(rng.uniform(0, width - w)),
                vel_row=float(rng.uniform(-2.5, 2.5)),
                vel_col=float(rng.uniform(-2.5, 2.5)),
                height=h,
                width=w,
            )
        )
    return tuple(objects)


def _reflect(pos: float, limit: float) -> float:
    """Fold a coordinate into [0, limit] as a bouncing trajectory."""
    if limit <= 0:
        return 0.0
    period = 2.0 * limit
    q = pos % period
    return period - q if q > limit else q


def _object_rect(obj: ObjectSpec, tick: int, cfg: SceneConfig) -> tuple[int, int]:
    # Closed-form position at a tick (no accumulation drift across the stream).
    row = _reflect(obj.row + obj.vel_row * tick, cfg.height - obj.height)
    col = _reflect(obj.col + obj.vel_col * tick, cfg.width - obj.width)
    return int(round(row)), int(round(col))


def render_mask(cfg: SceneConfig, tick: int) -> SemanticMap:
    """Ground-truth mask at a tick: exactly the object pixels, weather-free."""
    mask = np.zeros((cfg.height, cfg.width), dtype=np.uint8)
    for obj in cfg.objects:
        r, c = _object_rect(obj, tick, cfg)
        mask[r : r + obj.height, c : c + obj.width] = 1
    return SemanticMap(mask=mask, timestamp=tick)


def render_background(cfg: SceneConfig) -> np.ndarray:
    """Static background shared by every tick: a smooth two-way gradient."""
    rows = np.linspace(24.0, 120.0, cfg.height)[:, None]
    cols = np.linspace(0.0, 64.0, cfg.width)[None, :]
    return (rows + cols).astype(np.uint8)


def _apply_weather(pixels: np.ndarray, cfg: SceneConfig, tick: int) -> np.ndarray:
    if cfg.weather == "clear":
        return pixels
    out = pixels.astype(np.int32)
    h, w = out.shape
    if cfg.weather == "rain":
        # Diagonal streaks sweeping one pixel per tick.
        i = np.arange(h)[:, None]
        j = np.arange(w)[None, :]
        streak = (i + j + 3 * tick) % 11 == 0
        out[streak] += 60
    elif cfg.weather == "snow":
        rng = np.random.default_rng((cfg.seed, tick))
        flakes = rng.random((h, w)) < 0.02
        out[flakes] = 255
    elif cfg.weather == "fog":
        out = (out + 2 * 210) // 3
    return np.clip(out, 0, 255).astype(np.uint8)


def render_frame(cfg: SceneConfig, tick: int) -> Frame:
    """Frame at a tick: background, then objects, then the weather overlay."""
    pixels = render_background(cfg).copy()
    for obj in cfg.objects:
        r, c = _object_rect(obj, tick, cfg)
        pixels[r : r + obj.height, c : c + obj.width] = 230
    return Frame(pixels=_apply_weather(pixels, cfg, tick), timestamp=tick)


def generate_stream(cfg: SceneConfig) -> Iterator[tuple[Frame, SemanticMap]]:
    """Yield (frame, mask) pairs for ticks 0..duration-1, deterministically."""
    for tick in range(cfg.duration):
        yield render_frame(cfg, tick), render_mask(cfg, tick)


def _write_varint(out: bytearray, value: int) -> None:
    while value >= 0x80:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    out.append(value)


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    value = 0
    shift = 0
    while True:
        byte = buf[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


def encode_mask(m: SemanticMap) -> bytes:
    """Lossless mask payload: 16-byte header plus run-length (or raw) body.

    Runs are row-major lengths of alternating values starting with 0; the
    encoder falls back to a packed raw bitmap whenever run-length would be
    no smaller, and flags the mode in the header.
    """
    if m.width > 0xFFFF or m.height > 0xFFFF:
        raise ValueError("mask dimensions exceed the 16-bit header fields")
    flat = m.mask.ravel()
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [flat.size]))
    runs = ends - starts
    body = bytearray()
    if flat[0] == 1:
        _write_varint(body, 0)
    for run in runs:
        _write_varint(body, int(run))
    raw = np.packbits(flat).tobytes()
    if len(body) >= len(raw):
        mode, payload = _MODE_RAW, raw
    else:
        mode, payload = _MODE_RLE, bytes(body)
    header = _HEADER.pack(_MAGIC, _VERSION, mode, m.width, m.height, m.timestamp)
    return header + payload


def decode_mask(payload: bytes) -> SemanticMap:
    """Invert encode_mask exactly."""
    magic, version, mode, width, height, timestamp = _HEADER.unpack_from(payload, 0)
    if magic != _MAGIC:
        raise ValueError(f"bad mask payload magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"unsupported mask payload version {version}")
    size = width * height
    body = payload[_HEADER.size :]
    if mode == _MODE_RAW:
        flat = np.unpackbits(np.frombuffer(body, dtype=np.uint8))[:size]
    elif mode == _MODE_RLE:
        flat = np.empty(size, dtype=np.uint8)
        pos = 0
        filled = 0
        value = 0
        while filled < size:
            run, pos = _read_varint(body, pos)
            flat[filled : filled + run] = value
            filled += run
            value ^= 1
        if pos != len(body):
            raise ValueError("trailing bytes after run-length body")
    else:
        raise ValueError(f"unknown mask payload mode {mode}")
    mask = flat.reshape(height, width)
    return SemanticMap(mask=mask, timestamp=timestamp)


def encode_frame(f: Frame, weather: str, mode: str = "tabulated") -> int:
    """Payload byte count for a full frame.

    "tabulated" scales the measured per-weather sizes by pixel count from the
    reference resolution; "raw" is the uncompressed bitmap plus header.
    """
    if mode == "raw":
        return f.pixels.size + _HEADER.size
    if mode != "tabulated":
        raise ValueError(f"unknown frame encoding mode {mode!r}")
    if weather not in FRAME_BYTES_TABLE:
        raise ValueError(f"no tabulated size for weather {weather!r}")
    return round(FRAME_BYTES_TABLE[weather] * f.pixels.size / REFERENCE_PIXELS)


def write_pgm(path, pixels: np.ndarray) -> None:
    """Write an 8-bit grayscale array as a binary PGM (P5) file."""
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("PGM export needs a 2-D array")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())
