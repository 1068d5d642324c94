"""Packed binary spin snapshots.

Layout: a fixed little-endian header followed by row-major sign bits
(bit 1 = spin up), layers outermost, padded to whole bytes by packbits.
The header carries the lattice geometry, boundary-condition codes, and the
first 16 bytes of the parameter digest so a snapshot refuses to silently
pair with the wrong model parameters.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import Lattice, ModelParams, SpinConfig, ValidationError

MAGIC = b"LKSP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIBB16s")

_HBC_CODE = {"periodic": 0, "plus": 1, "minus": 2}
_VBC_CODE = {"periodic": 0, "plus": 1, "minus": 2, "mixed-dobrushin": 3}
_HBC_NAME = {v: k for k, v in _HBC_CODE.items()}
_VBC_NAME = {v: k for k, v in _VBC_CODE.items()}


def _digest16(params: ModelParams | None) -> bytes:
    if params is None:
        return b"\x00" * 16
    return bytes.fromhex(params.digest()[:32])


def write_spins(path, cfg: SpinConfig, params: ModelParams | None = None) -> None:
    lat = cfg.lattice
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, lat.L, lat.H,
                          _HBC_CODE[lat.horizontal_bc],
                          _VBC_CODE[lat.vertical_bc], _digest16(params))
    bits = np.packbits((cfg.spins > 0).astype(np.uint8))
    Path(path).write_bytes(header + bits.tobytes())


def read_spins(path, params: ModelParams | None = None) -> SpinConfig:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValidationError(f"{path}: truncated spin file")
    magic, version, L, H, hbc, vbc, digest = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValidationError(f"{path}: not a spin snapshot (bad magic)")
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: format version {version}, "
                              f"expected {FORMAT_VERSION}")
    if hbc not in _HBC_NAME or vbc not in _VBC_NAME:
        raise ValidationError(f"{path}: unknown boundary code")
    if params is not None and digest != b"\x00" * 16 \
            and digest != _digest16(params):
        raise ValidationError(
            f"{path}: snapshot was written for different model parameters")
    n = L * H
    payload = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size)
    if payload.size * 8 < n:
        raise ValidationError(f"{path}: payload too short for {H}x{L} lattice")
    bits = np.unpackbits(payload)[:n]
    spins = (bits.astype(np.int8) * 2 - 1).reshape(H, L)
    lat = Lattice(L, H, _HBC_NAME[hbc], _VBC_NAME[vbc])
    return SpinConfig(lat, spins)
