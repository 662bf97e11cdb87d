"""Binary field dumps for reference-solution files.

Each block is a little-endian header ``(trunc, nlat, nlon)`` of three int32
followed by row-major payload data: dense ``(trunc+1, trunc+1)`` complex128
coefficients for spectral blocks, or ``(nlat, nlon)`` float64 values for
grid blocks.  Files may concatenate several blocks; the reader is told
which kind to expect.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import ConfigurationError, DataError
from .sphere import GridField, SphereConfig, SpectralField

_HEADER = struct.Struct("<iii")


def write_spectral_block(fh: BinaryIO, field: SpectralField, cfg: SphereConfig):
    if field.neg_coeffs is not None:
        raise ConfigurationError("field dumps store real-origin coefficients only")
    fh.write(_HEADER.pack(field.trunc, cfg.nlat, cfg.nlon))
    data = np.ascontiguousarray(field.coeffs, dtype="<c16")
    fh.write(data.tobytes(order="C"))


def read_spectral_block(fh: BinaryIO) -> tuple[SpectralField, tuple[int, int, int]]:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise DataError("truncated field dump header")
    trunc, nlat, nlon = _HEADER.unpack(raw)
    n = trunc + 1
    payload = fh.read(n * n * 16)
    if len(payload) != n * n * 16:
        raise DataError("truncated spectral payload")
    coeffs = np.frombuffer(payload, dtype="<c16").reshape(n, n).astype(np.complex128)
    return SpectralField(coeffs), (trunc, nlat, nlon)


def write_grid_block(fh: BinaryIO, field: GridField, cfg: SphereConfig):
    fh.write(_HEADER.pack(cfg.trunc, cfg.nlat, cfg.nlon))
    data = np.ascontiguousarray(field.values.real, dtype="<f8")
    fh.write(data.tobytes(order="C"))


def read_grid_block(fh: BinaryIO, cfg: SphereConfig) -> GridField:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise DataError("truncated field dump header")
    trunc, nlat, nlon = _HEADER.unpack(raw)
    if (nlat, nlon) != (cfg.nlat, cfg.nlon):
        raise ConfigurationError(
            f"grid dump is {nlat}x{nlon}, expected {cfg.nlat}x{cfg.nlon}"
        )
    payload = fh.read(nlat * nlon * 8)
    if len(payload) != nlat * nlon * 8:
        raise DataError("truncated grid payload")
    values = np.frombuffer(payload, dtype="<f8").reshape(nlat, nlon).copy()
    return GridField(values, cfg)


def write_spectral_fields(path, fields, cfg: SphereConfig):
    with open(path, "wb") as fh:
        for field in fields:
            write_spectral_block(fh, field, cfg)


def read_spectral_fields(path, count: int) -> tuple[list[SpectralField], tuple[int, int, int]]:
    fields = []
    header = None
    with open(path, "rb") as fh:
        for _ in range(count):
            field, hdr = read_spectral_block(fh)
            if header is not None and hdr != header:
                raise DataError("inconsistent headers within one dump file")
            header = hdr
            fields.append(field)
    return fields, header
