"""
Single-file weight archive.

    magic     8 bytes   b"RGWEIGHT"
    version   u32 LE
    length    u32 LE    byte length of the manifest
    manifest  UTF-8 JSON: network spec, deploy flag and one
              {name, shape, offset, nbytes} record per tensor
    blobs     little-endian float32 arrays; offsets are relative to the
              first byte after the manifest
"""
import json
import math
import struct
import logging
from typing import Dict, List, Tuple

import numpy as np

from .errors import ArchiveFormatError, ArchiveTruncatedError, ConfigError
from .net_builder import (
    Network,
    NetworkSpec,
    build_network,
    convert_network,
    is_bn_entry,
    is_deploy,
    load_parameters,
    named_parameters,
)

logger = logging.getLogger(__name__)

MAGIC = b"RGWEIGHT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sII")
_BLOB_DTYPE = np.dtype("<f4")


def save_archive(net: Network, path: str) -> int:
    """Write every parameter of `net` to `path`; returns the number of bytes written."""
    tensors = []
    blobs = []
    offset = 0
    for name, array in named_parameters(net):
        blob = np.ascontiguousarray(array, dtype=_BLOB_DTYPE).tobytes()
        tensors.append({"name": name, "shape": list(array.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)

    manifest = {
        "spec": net.spec.model_dump(),
        "deploy": is_deploy(net),
        "tensors": tensors,
    }
    manifest_bytes = json.dumps(manifest, indent=4).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest_bytes)))
        f.write(manifest_bytes)
        for blob in blobs:
            f.write(blob)
    total = _HEADER.size + len(manifest_bytes) + offset
    logger.info("Wrote %d tensors (%d bytes) to %s", len(tensors), total, path)
    return total


def _read(path: str) -> Tuple[dict, bytes]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        if MAGIC.startswith(raw[:8]):
            raise ArchiveTruncatedError(f"{path}: file ends inside the header ({len(raw)} bytes)")
        raise ArchiveFormatError(f"{path}: not a weight archive")
    magic, version, length = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ArchiveFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ArchiveFormatError(f"{path}: unsupported archive version {version} (expected {FORMAT_VERSION})")
    end = _HEADER.size + length
    if len(raw) < end:
        raise ArchiveTruncatedError(f"{path}: file ends inside the manifest")
    try:
        manifest = json.loads(raw[_HEADER.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ArchiveFormatError(f"{path}: manifest is not valid JSON: {e}") from e
    if not isinstance(manifest, dict) or not isinstance(manifest.get("tensors"), list):
        raise ArchiveFormatError(f"{path}: manifest has no tensor list")
    return manifest, raw[end:]


def _check_records(path: str, records: List[dict], blob_size: int):
    seen = set()
    spans = []
    for record in records:
        try:
            name, shape = record["name"], tuple(int(d) for d in record["shape"])
            offset, nbytes = int(record["offset"]), int(record["nbytes"])
        except (KeyError, TypeError, ValueError) as e:
            raise ArchiveFormatError(f"{path}: malformed tensor record {record!r}") from e
        if any(d < 1 for d in shape) or nbytes < 0:
            raise ArchiveFormatError(f"{path}: '{name}' has an invalid shape {shape} or size {nbytes}")
        if name in seen:
            raise ArchiveFormatError(f"{path}: duplicate tensor name '{name}'")
        seen.add(name)
        if nbytes != math.prod(shape) * _BLOB_DTYPE.itemsize:
            raise ArchiveFormatError(f"{path}: '{name}' declares shape {shape} but {nbytes} bytes")
        if offset < 0:
            raise ArchiveFormatError(f"{path}: '{name}' has a negative offset")
        if offset + nbytes > blob_size:
            raise ArchiveTruncatedError(f"{path}: data for '{name}' runs past the end of the file")
        spans.append((offset, offset + nbytes, name))
    spans.sort()
    for (_, end, first), (start, _, second) in zip(spans, spans[1:]):
        if start < end:
            raise ArchiveFormatError(f"{path}: tensors '{first}' and '{second}' overlap")


def read_manifest(path: str) -> dict:
    """Parsed and validated manifest, without materializing any tensor."""
    manifest, blobs = _read(path)
    _check_records(path, manifest["tensors"], len(blobs))
    return manifest


def load_archive(path: str, spec: NetworkSpec) -> Network:
    """
    Rebuild a network of structure `spec` from the archive at `path`.

    Every name and shape is checked against `spec` before any tensor is
    decoded, so a mismatched archive never yields a partially loaded network.
    """
    manifest, blobs = _read(path)
    records = manifest["tensors"]
    _check_records(path, records, len(blobs))

    skeleton = build_network(spec, seed=0)
    if manifest.get("deploy"):
        skeleton = convert_network(skeleton)
    expected = named_parameters(skeleton)
    by_name = {r["name"]: r for r in records}
    for name, array in expected:
        record = by_name.get(name)
        if record is None:
            raise ConfigError(f"{path}: archive has no tensor '{name}' required by the {spec.arch} {spec.width}x spec")
        if tuple(record["shape"]) != array.shape:
            raise ConfigError(
                f"{path}: shape mismatch for '{name}': archive has {tuple(record['shape'])}, spec needs {array.shape}"
            )
    extra = sorted(set(by_name) - {name for name, _ in expected})
    if extra:
        raise ConfigError(f"{path}: archive tensor '{extra[0]}' has no place in the spec")

    mapping: Dict[str, np.ndarray] = {}
    for name, array in expected:
        record = by_name[name]
        data = np.frombuffer(blobs, dtype=_BLOB_DTYPE, count=math.prod(array.shape), offset=record["offset"])
        mapping[name] = data.astype(np.float32).reshape(array.shape)
    net = load_parameters(skeleton, mapping)
    logger.info("Loaded %d tensors from %s", len(mapping), path)
    return net


def count_bn_entries(path: str) -> int:
    return sum(1 for record in read_manifest(path)["tensors"] if is_bn_entry(record["name"]))
