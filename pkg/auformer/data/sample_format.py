"""
AUTD sample file: one image with its labels and identifiers

Layout (little-endian):
    magic "AUTD" | u16 version | u8 rank | u32 dim * rank
    f32 image payload, row-major
    u32 id | u32 subject_id | u16 label count | label bits packed LSB first
"""

import struct
from dataclasses import dataclass

import numpy as np
import torch

from auformer.errors import FormatError

MAGIC = b"AUTD"
VERSION = 1
MAX_DIM = 2 ** 31


@dataclass
class SampleRecord:
    """
    One synthetic sample

    Attributes:
        id (int): Sample id
        subject_id (int): Subject the sample belongs to
        image (torch.Tensor): [C, H, W] float32
        labels (tuple): Binary label per AU
    """

    id: int
    subject_id: int
    image: torch.Tensor
    labels: tuple

    def __post_init__(self):
        self.labels = tuple(int(v) for v in self.labels)
        if any(v not in (0, 1) for v in self.labels):
            raise FormatError(f"Sample {self.id} has non-binary labels {self.labels}")


def encode_sample(record: SampleRecord):
    dims = tuple(record.image.shape)
    if any(d >= MAX_DIM for d in dims):
        raise FormatError(f"Image dimension >= 2^31: {dims}")
    image = record.image.detach().to(torch.float32).contiguous().cpu().numpy().astype("<f4", copy=False)
    bits = np.packbits(np.asarray(record.labels, dtype=np.uint8), bitorder="little")
    return b"".join([
        MAGIC,
        struct.pack("<HB", VERSION, len(dims)),
        struct.pack(f"<{len(dims)}I", *dims),
        image.tobytes(),
        struct.pack("<IIH", record.id, record.subject_id, len(record.labels)),
        bits.tobytes(),
    ])


def decode_sample(buffer):
    """
    Parse AUTD bytes

    Args:
        buffer (bytes): Encoded sample

    Returns:
        SampleRecord: Decoded sample

    Raises:
        FormatError: On bad magic or version, oversized dims, truncation or
            trailing bytes
    """
    view = memoryview(buffer)
    if len(view) < 7 or bytes(view[:4]) != MAGIC:
        raise FormatError("Not an AUTD sample file (bad magic)")
    version, rank = struct.unpack_from("<HB", view, 4)
    if version != VERSION:
        raise FormatError(f"Unsupported AUTD version {version}")

    offset = 7
    if offset + 4 * rank > len(view):
        raise FormatError("Truncated AUTD header")
    dims = struct.unpack_from(f"<{rank}I", view, offset)
    offset += 4 * rank
    if any(d >= MAX_DIM for d in dims):
        raise FormatError(f"AUTD declares an oversized dimension {dims}")

    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    if offset + 4 * count + 10 > len(view):
        raise FormatError("Truncated AUTD payload")
    image = np.frombuffer(view, dtype="<f4", count=count, offset=offset).astype(np.float32)
    offset += 4 * count

    sample_id, subject_id, num_labels = struct.unpack_from("<IIH", view, offset)
    offset += 10
    num_bytes = (num_labels + 7) // 8
    if offset + num_bytes != len(view):
        raise FormatError(f"AUTD label block holds {len(view) - offset} bytes, expected {num_bytes}")
    bits = np.frombuffer(view, dtype=np.uint8, count=num_bytes, offset=offset)
    labels = np.unpackbits(bits, count=num_labels, bitorder="little")
    return SampleRecord(id=sample_id, subject_id=subject_id,
                        image=torch.from_numpy(image).reshape(dims), labels=tuple(labels.tolist()))


def write_sample(record: SampleRecord, path):
    with open(path, "wb") as f:
        f.write(encode_sample(record))


def read_sample(path):
    with open(path, "rb") as f:
        return decode_sample(f.read())
