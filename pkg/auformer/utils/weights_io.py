"""
AUFW tensor container: the on-disk format for backbone weights and checkpoints

Layout (little-endian):
    magic "AUFW" | u16 version | u32 tensor count
    per tensor: u16 name length | utf-8 name | u8 rank | u32 dim * rank
    f32 payloads, row-major, in header order
"""

import struct

import numpy as np
import torch

from auformer.errors import FormatError

MAGIC = b"AUFW"
VERSION = 1
MAX_DIM = 2 ** 31


def encode_tensors(named_tensors):
    """
    Serialise named tensors into AUFW bytes

    Args:
        named_tensors (dict | list): name -> tensor mapping or (name, tensor) pairs

    Returns:
        bytes: Encoded container
    """
    items = list(named_tensors.items()) if isinstance(named_tensors, dict) else list(named_tensors)

    header = [MAGIC, struct.pack("<HI", VERSION, len(items))]
    payloads = []
    for name, tensor in items:
        encoded_name = name.encode("utf-8")
        dims = tuple(tensor.shape)
        if any(d >= MAX_DIM for d in dims):
            raise FormatError(f"Tensor {name} has a dimension >= 2^31: {dims}")
        header.append(struct.pack("<H", len(encoded_name)))
        header.append(encoded_name)
        header.append(struct.pack("<B", len(dims)))
        header.append(struct.pack(f"<{len(dims)}I", *dims))
        array = tensor.detach().to(torch.float32).contiguous().cpu().numpy()
        payloads.append(array.astype("<f4", copy=False).tobytes())
    return b"".join(header + payloads)


def decode_tensors(buffer):
    """
    Parse AUFW bytes

    Args:
        buffer (bytes): Encoded container

    Returns:
        dict: name -> float32 tensor, in file order

    Raises:
        FormatError: On bad magic, unknown version, truncation or trailing bytes
    """
    view = memoryview(buffer)
    if len(view) < 10 or bytes(view[:4]) != MAGIC:
        raise FormatError("Not an AUFW weight file (bad magic)")
    version, count = struct.unpack_from("<HI", view, 4)
    if version != VERSION:
        raise FormatError(f"Unsupported AUFW version {version}")

    offset = 10
    entries = []
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            if offset + name_len > len(view):
                raise FormatError("Truncated AUFW header")
            name = bytes(view[offset:offset + name_len]).decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", view, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", view, offset)
            offset += 4 * rank
            if any(d >= MAX_DIM for d in dims):
                raise FormatError(f"Tensor {name} declares an oversized dimension {dims}")
            entries.append((name, dims))
    except struct.error as e:
        raise FormatError(f"Truncated AUFW header: {str(e)}")

    tensors = {}
    for name, dims in entries:
        count_values = int(np.prod(dims, dtype=np.int64)) if dims else 1
        end = offset + 4 * count_values
        if end > len(view):
            raise FormatError(f"Truncated AUFW payload for tensor {name}")
        array = np.frombuffer(view, dtype="<f4", count=count_values, offset=offset).copy()
        tensors[name] = torch.from_numpy(array.astype(np.float32)).reshape(dims)
        offset = end
    if offset != len(view):
        raise FormatError(f"AUFW file has {len(view) - offset} trailing bytes")
    return tensors


def save_tensors(named_tensors, path):
    with open(path, "wb") as f:
        f.write(encode_tensors(named_tensors))


def load_tensors(path):
    with open(path, "rb") as f:
        return decode_tensors(f.read())
