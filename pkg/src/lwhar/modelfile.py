"""Binary model file.

Layout, all little-endian::

    magic            6 bytes   b"LWHAR1"
    version          u16       1
    hyperparameters  struct    <IIIIddIIQBBBd
                               window_size, stride, batch_size, epochs,
                               learning_rate, l2_coeff, hidden, layers, seed,
                               aggregation (0 sum, 1 last), normalize,
                               subject_split, split_ratio
    normalisation    u32 channels, then channels x f64 mean, channels x f64 std
    shape table      u32 input_dim, u32 hidden, u32 classes, u32 n_tensors,
                     per tensor: u8 ndim followed by ndim x u32
    payload          every tensor as f64, in NetworkParams.tensors() order:
                     layer1 gates i, f, c, o (w_x, w_h, b, peephole except c),
                     layer2 likewise, head_w, head_b
    checksum         u64 FNV-1a (64-bit) of every preceding byte
"""
from __future__ import annotations

import struct

import numpy as np

from .dataset import NormStats
from .kernels import fnv1a64
from .recurrent import AGGREGATIONS, NetworkParams
from .training import Hyperparameters

MAGIC = b"LWHAR1"
VERSION = 1
_HEAD = struct.Struct("<6sH")
_HP = struct.Struct("<IIIIddIIQBBBd")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class ModelFileError(Exception):
    """Base class for unreadable model files."""


class ModelFormatError(ModelFileError):
    pass


class ModelVersionError(ModelFileError):
    pass


class ModelChecksumError(ModelFileError):
    pass


def to_bytes(params: NetworkParams, hp: Hyperparameters, norm: NormStats | None = None) -> bytes:
    norm = norm or NormStats.identity(params.input_dim)
    out = bytearray(_HEAD.pack(MAGIC, VERSION))
    out += _HP.pack(hp.window_size, hp.stride, hp.batch_size, hp.epochs, hp.learning_rate,
                    hp.l2_coeff, hp.hidden, hp.layers, hp.seed, AGGREGATIONS.index(hp.aggregation),
                    int(hp.normalize), int(hp.subject_split), hp.split_ratio)
    mean = np.asarray(norm.mean, dtype="<f8")
    std = np.asarray(norm.std, dtype="<f8")
    out += _U32.pack(mean.shape[0]) + mean.tobytes() + std.tobytes()
    tensors = params.tensors()
    out += struct.pack("<IIII", params.input_dim, params.hidden, params.classes, len(tensors))
    for _, a in tensors:
        out += struct.pack(f"<B{a.ndim}I", a.ndim, *a.shape)
    for _, a in tensors:
        out += np.ascontiguousarray(a, dtype="<f8").tobytes()
    out += _U64.pack(fnv1a64(bytes(out)))
    return bytes(out)


def from_bytes(data: bytes):
    """Decode a model file; returns ``(params, hp, norm)``."""
    if len(data) < _HEAD.size or data[:6] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    _, version = _HEAD.unpack_from(data)
    if version != VERSION:
        raise ModelVersionError(f"unsupported model file version {version}")
    if len(data) < _HEAD.size + _U64.size:
        raise ModelChecksumError("file truncated")
    body, (stored,) = data[:-8], _U64.unpack(data[-8:])
    if fnv1a64(body) != stored:
        raise ModelChecksumError("checksum mismatch (corrupt or truncated file)")

    try:
        pos = _HEAD.size
        fields = _HP.unpack_from(body, pos)
        pos += _HP.size
        (ws, stride, bs, epochs, lr, l2, hidden, layers, seed, agg, normflag, subj, ratio) = fields
        hp = Hyperparameters(
            window_size=ws, stride=stride, batch_size=bs, epochs=epochs, learning_rate=lr,
            l2_coeff=l2, hidden=hidden, layers=layers, seed=seed, aggregation=AGGREGATIONS[agg],
            normalize=bool(normflag), split_ratio=ratio, subject_split=bool(subj))
        (channels,) = _U32.unpack_from(body, pos)
        pos += 4
        mean = np.frombuffer(body, "<f8", channels, pos).astype(np.float64)
        pos += 8 * channels
        std = np.frombuffer(body, "<f8", channels, pos).astype(np.float64)
        pos += 8 * channels
        input_dim, n_hidden, classes, n_tensors = struct.unpack_from("<IIII", body, pos)
        pos += 16
        params = NetworkParams.zeros(input_dim, n_hidden, classes)
        expected = params.tensors()
        if n_tensors != len(expected):
            raise ModelFormatError(f"expected {len(expected)} tensors, file lists {n_tensors}")
        for name, a in expected:
            (ndim,) = struct.unpack_from("<B", body, pos)
            shape = struct.unpack_from(f"<{ndim}I", body, pos + 1)
            pos += 1 + 4 * ndim
            if tuple(shape) != a.shape:
                raise ModelFormatError(f"{name}: file shape {shape} != expected {a.shape}")
        for name, a in expected:
            a[...] = np.frombuffer(body, "<f8", a.size, pos).reshape(a.shape)
            pos += 8 * a.size
        if pos != len(body):
            raise ModelFormatError(f"{len(body) - pos} unexpected trailing bytes")
    except (struct.error, ValueError, IndexError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    if hp.hidden != n_hidden:
        raise ModelFormatError("hyperparameter block disagrees with shape table")
    return params, hp, NormStats(mean, std)


def save_model(params: NetworkParams, hp: Hyperparameters, path, norm: NormStats | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(params, hp, norm))


def load_model(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())

