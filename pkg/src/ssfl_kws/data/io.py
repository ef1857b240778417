"""Binary ``.skws`` dataset files.

Little-endian layout::

    magic      4 bytes  b"SKWS"
    version    u32      1
    n_examples u32
    n_mels     u32
    n_frames   u32
    n_classes  u32
    labels     i16 * n_examples           (-1 = unlabeled)
    features   f32 * n_examples*n_mels*n_frames, example/mel/frame major
"""

import struct

import numpy as np

from ..errors import FormatError
from .dataset import Dataset

MAGIC = b"SKWS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


def save_dataset(ds, path):
    if ds.n_classes > np.iinfo(np.int16).max:
        raise FormatError(f"n_classes={ds.n_classes} does not fit the i16 label field")
    header = _HEADER.pack(MAGIC, VERSION, len(ds), ds.n_mels, ds.n_frames, ds.n_classes)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ds.labels.astype("<i2").tobytes())
        fh.write(ds.features.astype("<f4").tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"file too short for header: {len(raw)} bytes", offset=len(raw))
    magic, version, n, n_mels, n_frames, n_classes = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    off = _HEADER.size
    lab_end = off + 2 * n
    if len(raw) < lab_end:
        raise FormatError(f"truncated label block: need {lab_end} bytes, have {len(raw)}", offset=len(raw))
    labels = np.frombuffer(raw, dtype="<i2", count=n, offset=off).astype(np.int64)
    feat_end = lab_end + 4 * n * n_mels * n_frames
    if len(raw) < feat_end:
        raise FormatError(f"truncated feature block: need {feat_end} bytes, have {len(raw)}", offset=len(raw))
    if len(raw) > feat_end:
        raise FormatError(f"{len(raw) - feat_end} trailing bytes after feature block", offset=feat_end)
    bad = np.flatnonzero((labels < -1) | (labels >= n_classes))
    if bad.size:
        raise FormatError(f"label {labels[bad[0]]} out of range", offset=off + 2 * int(bad[0]))
    feats = np.frombuffer(raw, dtype="<f4", count=n * n_mels * n_frames, offset=lab_end)
    feats = feats.astype(np.float64).reshape(n, n_mels, n_frames)
    if not np.all(np.isfinite(feats)):
        first = int(np.flatnonzero(~np.isfinite(feats.ravel()))[0])
        raise FormatError("non-finite feature value", offset=lab_end + 4 * first)
    return Dataset(feats, labels, n_classes)
