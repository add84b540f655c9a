"""Text-header + raw little-endian float64 container used for checkpoints.

Layout::

    tweetaffect-container 1
    key = value            # any number of metadata lines
    vocab <n>              # optional, followed by n lines "token<TAB>count"
    tensor <name> <d1> ... # manifest, one line per array
    end
    <arrays as little-endian float64, manifest order, row-major>
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np

MAGIC = "tweetaffect-container 1"
_DTYPE = np.dtype("<f8")


class ContainerError(ValueError):
    pass


def write_container(
    path,
    meta: Mapping[str, str],
    tensors: Sequence[tuple[str, np.ndarray]],
    vocab: Optional[Sequence[tuple[str, int]]] = None,
) -> None:
    lines = [MAGIC]
    for key, value in meta.items():
        if "\n" in str(value) or " = " in key:
            raise ContainerError(f"bad metadata entry {key!r}")
        lines.append(f"{key} = {value}")
    if vocab is not None:
        lines.append(f"vocab {len(vocab)}")
        lines.extend(f"{w}\t{c}" for w, c in vocab)
    for name, arr in tensors:
        dims = " ".join(str(d) for d in np.shape(arr))
        lines.append(f"tensor {name} {dims}".rstrip())
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())


def read_container(path):
    """Return ``(meta, tensors, vocab)``; every shape is validated against the payload."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def next_line(lineno):
        nonlocal pos
        end = data.find(b"\n", pos)
        if end < 0:
            raise ContainerError(f"{path}:{lineno}: truncated header")
        line = data[pos:end].decode("utf-8")
        pos = end + 1
        return line

    lineno = 1
    if next_line(lineno) != MAGIC:
        raise ContainerError(f"{path}:1: not a tweetaffect container")
    meta: dict[str, str] = {}
    manifest: list[tuple[str, tuple]] = []
    vocab = None
    while True:
        lineno += 1
        line = next_line(lineno)
        if line == "end":
            break
        if line.startswith("tensor "):
            parts = line.split(" ")
            try:
                shape = tuple(int(d) for d in parts[2:])
            except ValueError:
                raise ContainerError(f"{path}:{lineno}: bad tensor shape") from None
            if len(parts) < 2 or any(d < 0 for d in shape):
                raise ContainerError(f"{path}:{lineno}: bad tensor line")
            manifest.append((parts[1], shape))
        elif line.startswith("vocab "):
            try:
                n = int(line.split(" ")[1])
            except (ValueError, IndexError):
                raise ContainerError(f"{path}:{lineno}: bad vocab line") from None
            vocab = []
            for _ in range(n):
                lineno += 1
                parts = next_line(lineno).split("\t")
                if len(parts) != 2:
                    raise ContainerError(f"{path}:{lineno}: bad vocab entry")
                vocab.append((parts[0], int(parts[1])))
        elif " = " in line:
            key, value = line.split(" = ", 1)
            meta[key] = value
        else:
            raise ContainerError(f"{path}:{lineno}: unrecognized header line {line!r}")

    tensors: dict[str, np.ndarray] = {}
    for name, shape in manifest:
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * _DTYPE.itemsize
        if pos + nbytes > len(data):
            raise ContainerError(f"{path}: payload too short for tensor {name} {shape}")
        tensors[name] = np.frombuffer(data, dtype=_DTYPE, count=count, offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
    if pos != len(data):
        raise ContainerError(f"{path}: {len(data) - pos} trailing bytes after declared tensors")
    return meta, tensors, vocab
