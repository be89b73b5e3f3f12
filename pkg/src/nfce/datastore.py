"""Binary persistence for channel datasets and trained models.

Both containers are little-endian regardless of host, carry a magic tag
and format version, and end with a CRC32 over every preceding byte, so
any single corrupted byte is detected on load.

Dataset container ("NFCE", version 1):

    header  4s magic | u32 version | u32 M | u64 count | u32 flags
    records count x { u16 L_f | u16 L_n | u64 seed | 2M x f32 re/im }
    footer  u32 crc32(header + records)

Clean channels only are persisted (f32 on disk); noise is regenerated
online from seeds, so one dataset serves every SNR grid. The stored
per-record seed is the channel draw seed, making records reproducible.

Model container ("NFCM", version 1):

    4s magic | u32 version
    u32 len  | config JSON (canonical: sorted keys, compact)
    u32 len  | training-meta JSON (canonical)
    u32 tensor count
    tensors  { u16 name len | name utf-8 | u8 ndim | u32 dims... | f32 data }
    u32 crc32 of everything above

Tensors cover trainable parameters and batch-norm running stats, saved
in the model's fixed iteration order; loading rebuilds the architecture
from the config and validates every name and shape against it.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .channel import ArrayConfig, ScenarioSpec, sample_channel
from .model import ModelConfig, TrainedModel, build_model
from .seeding import mix_seed

DATASET_MAGIC = b"NFCE"
MODEL_MAGIC = b"NFCM"
FORMAT_VERSION = 1

_DATASET_HEADER = struct.Struct("<4sIIQI")


class FormatError(Exception):
    """A persisted file failed validation (structure, sizes, or CRC)."""


def _record_dtype(num_antennas: int) -> np.dtype:
    return np.dtype([
        ("lf", "<u2"),
        ("ln", "<u2"),
        ("seed", "<u8"),
        ("h", "<f4", (2 * num_antennas,)),
    ])


def dataset_file_size(num_antennas: int, count: int) -> int:
    """Exact on-disk size: header + count records + trailing CRC."""
    return _DATASET_HEADER.size + count * (12 + 8 * num_antennas) + 4


@dataclass
class ChannelDataset:
    """In-memory dataset: per-record path counts, draw seeds, channels."""

    num_antennas: int
    lf: np.ndarray
    ln: np.ndarray
    seeds: np.ndarray
    h: np.ndarray  # (N, M) complex64 clean channels
    flags: int = 0

    def __post_init__(self):
        n = self.h.shape[0] if self.h.ndim == 2 else -1
        if self.h.ndim != 2 or self.h.shape[1] != self.num_antennas:
            raise ValueError(
                f"h must be (N, {self.num_antennas}), got {self.h.shape}"
            )
        for name in ("lf", "ln", "seeds"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")

    @property
    def num_samples(self) -> int:
        return self.h.shape[0]


def generate_dataset(
    array_cfg: ArrayConfig, scenario: ScenarioSpec, count: int, seed: int
) -> ChannelDataset:
    """Draw `count` clean channels; record i uses seed mix_seed(seed, i)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    m = array_cfg.num_antennas
    lf = np.zeros(count, dtype=np.uint16)
    ln = np.zeros(count, dtype=np.uint16)
    seeds = np.zeros(count, dtype=np.uint64)
    h = np.zeros((count, m), dtype=np.complex64)
    for i in range(count):
        rec_seed = mix_seed(seed, i)
        chan = sample_channel(array_cfg, scenario, rec_seed)
        lf[i] = chan.paths.num_far
        ln[i] = chan.paths.num_near
        seeds[i] = rec_seed
        h[i] = chan.h.astype(np.complex64)
    return ChannelDataset(num_antennas=m, lf=lf, ln=ln, seeds=seeds, h=h)


def _dataset_records(ds: ChannelDataset) -> np.ndarray:
    rec = np.zeros(ds.num_samples, dtype=_record_dtype(ds.num_antennas))
    rec["lf"] = ds.lf
    rec["ln"] = ds.ln
    rec["seed"] = ds.seeds
    interleaved = np.empty((ds.num_samples, 2 * ds.num_antennas), dtype="<f4")
    interleaved[:, 0::2] = ds.h.real
    interleaved[:, 1::2] = ds.h.imag
    rec["h"] = interleaved
    return rec


def save_dataset(ds: ChannelDataset, path) -> None:
    header = _DATASET_HEADER.pack(
        DATASET_MAGIC, FORMAT_VERSION, ds.num_antennas, ds.num_samples, ds.flags
    )
    body = header + _dataset_records(ds).tobytes()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def load_dataset(path) -> ChannelDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _DATASET_HEADER.size + 4:
        raise FormatError(f"file too short for a dataset header: {len(blob)} bytes")
    magic, version, m, count, flags = _DATASET_HEADER.unpack_from(blob, 0)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DATASET_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if m < 1:
        raise FormatError(f"invalid antenna count {m}")
    expected = dataset_file_size(m, count)
    if len(blob) != expected:
        raise FormatError(
            f"size mismatch: {len(blob)} bytes on disk, header implies {expected}"
        )
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(
            f"crc mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    rec = np.frombuffer(blob, dtype=_record_dtype(m),
                        count=count, offset=_DATASET_HEADER.size)
    interleaved = rec["h"]
    h = (interleaved[:, 0::2] + 1j * interleaved[:, 1::2]).astype(np.complex64)
    return ChannelDataset(
        num_antennas=m,
        lf=rec["lf"].copy(),
        ln=rec["ln"].copy(),
        seeds=rec["seed"].copy(),
        h=h,
        flags=flags,
    )


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_model(model: TrainedModel, path) -> None:
    """Serialize config, training meta, parameters, and running stats.

    Tensor data is written as f32 regardless of the in-memory dtype.
    """
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    for payload in (model.config.to_dict(), model.training_meta):
        blob = _canonical_json(payload)
        out += struct.pack("<I", len(blob))
        out += blob
    tensors = model.all_tensors()
    out += struct.pack("<I", len(tensors))
    for name, tensor in tensors.items():
        name_bytes = name.encode("utf-8")
        out += struct.pack("<H", len(name_bytes))
        out += name_bytes
        out += struct.pack("<B", tensor.ndim)
        out += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        out += np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(out))


class _Cursor:
    """Bounds-checked reader over a byte blob; overruns are FormatErrors."""

    def __init__(self, blob: bytes, end: int):
        self.blob = blob
        self.pos = 0
        self.end = end

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > self.end:
            raise FormatError(
                f"truncated file: need {n} bytes at offset {self.pos}, "
                f"payload ends at {self.end}"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path) -> TrainedModel:
    """Rebuild a model from disk, validating structure, shapes, and CRC."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise FormatError(f"file too short for a model container: {len(blob)} bytes")
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(
            f"crc mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    cur = _Cursor(blob, len(blob) - 4)
    magic = cur.take(4)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    (version,) = cur.unpack("<I")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported model version {version}")

    sections = []
    for what in ("config", "training meta"):
        (length,) = cur.unpack("<I")
        raw = cur.take(length)
        try:
            sections.append(json.loads(raw.decode("utf-8")))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"invalid {what} JSON: {exc}") from exc
    config_dict, meta = sections
    try:
        config = ModelConfig.from_dict(config_dict)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid model config: {exc}") from exc

    model = build_model(config, init_seed=0)
    model.training_meta = meta
    expected = model.all_tensors()
    (count,) = cur.unpack("<I")
    if count != len(expected):
        raise FormatError(
            f"tensor count {count} does not match the {len(expected)} the "
            f"config implies"
        )
    seen = set()
    for _ in range(count):
        (name_len,) = cur.unpack("<H")
        try:
            name = cur.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"invalid tensor name: {exc}") from exc
        if name in seen:
            raise FormatError(f"duplicate tensor {name!r}")
        if name not in expected:
            raise FormatError(f"unknown tensor {name!r} for this config")
        seen.add(name)
        (ndim,) = cur.unpack("<B")
        shape = cur.unpack(f"<{ndim}I")
        target = expected[name]
        if shape != target.shape:
            raise FormatError(
                f"tensor {name!r} has shape {shape}, config implies {target.shape}"
            )
        data = np.frombuffer(cur.take(4 * target.size), dtype="<f4")
        target[...] = data.reshape(target.shape)
    if cur.pos != cur.end:
        raise FormatError(f"{cur.end - cur.pos} unparsed bytes before the CRC")
    return model
