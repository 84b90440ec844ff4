#!/usr/bin/env python3
"""Packs small NIfTI-1 files field by field with struct, independent of the C++ writer.

usage: nifti_fixture.py OUT_DIR      write the fixtures
       nifti_fixture.py --check FILE verify the header of a file written elsewhere
"""
import gzip
import struct
import sys
from pathlib import Path

DIMS = (3, 4, 5)
SPACING = (0.75, 1.25, 2.5)
SLOPE, INTER = 2.0, -1000.0


def raw_value(i, j, k):
    return 400 + i + 10 * j + 100 * k


def header(dims, spacing, datatype, bitpix, slope, inter, endian="<"):
    h = bytearray(348)
    struct.pack_into(endian + "i", h, 0, 348)
    struct.pack_into(endian + "8h", h, 40, 3, *dims, 1, 1, 1, 1)
    struct.pack_into(endian + "h", h, 70, datatype)
    struct.pack_into(endian + "h", h, 72, bitpix)
    struct.pack_into(endian + "8f", h, 76, 1.0, *spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into(endian + "f", h, 108, 352.0)
    struct.pack_into(endian + "f", h, 112, slope)
    struct.pack_into(endian + "f", h, 116, inter)
    h[123] = 2  # mm
    struct.pack_into(endian + "h", h, 254, 1)  # sform_code
    struct.pack_into(endian + "4f", h, 280, spacing[0], 0.0, 0.0, 0.0)
    struct.pack_into(endian + "4f", h, 296, 0.0, spacing[1], 0.0, 0.0)
    struct.pack_into(endian + "4f", h, 312, 0.0, 0.0, spacing[2], 0.0)
    h[344:348] = b"n+1\0"
    return bytes(h)


def payload(endian):
    out = bytearray()
    for k in range(DIMS[2]):
        for j in range(DIMS[1]):
            for i in range(DIMS[0]):
                out += struct.pack(endian + "h", raw_value(i, j, k))
    return bytes(out)


def write(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    le = header(DIMS, SPACING, 4, 16, SLOPE, INTER, "<") + b"\0" * 4 + payload("<")
    be = header(DIMS, SPACING, 4, 16, SLOPE, INTER, ">") + b"\0" * 4 + payload(">")
    (out / "oracle_3x4x5.nii").write_bytes(le)
    (out / "oracle_3x4x5_be.nii").write_bytes(be)
    (out / "oracle_3x4x5.nii.gz").write_bytes(gzip.compress(le, mtime=0))
    (out / "oracle_truncated.nii").write_bytes(le[:-7])
    bad = bytearray(le)
    bad[344:348] = b"xyz\0"
    (out / "oracle_bad_magic.nii").write_bytes(bytes(bad))
    odd = bytearray(le)
    struct.pack_into("<h", odd, 70, 8)  # int32 is not supported
    struct.pack_into("<h", odd, 72, 32)
    (out / "oracle_int32.nii").write_bytes(bytes(odd))


def check(path):
    data = Path(path).read_bytes()
    if path.endswith(".gz"):
        data = gzip.decompress(data)
    sizeof_hdr, = struct.unpack_from("<i", data, 0)
    dim = struct.unpack_from("<8h", data, 40)
    datatype, bitpix = struct.unpack_from("<2h", data, 70)
    vox_offset, = struct.unpack_from("<f", data, 108)
    magic = data[344:348]
    problems = []
    if sizeof_hdr != 348:
        problems.append(f"sizeof_hdr {sizeof_hdr}")
    if magic != b"n+1\0":
        problems.append(f"magic {magic!r}")
    if not 1 <= dim[0] <= 7:
        problems.append(f"dim[0] {dim[0]}")
    nvox = 1
    for d in dim[1:dim[0] + 1]:
        nvox *= d
    if datatype not in (2, 4, 16, 64) or bitpix != {2: 8, 4: 16, 16: 32, 64: 64}.get(datatype):
        problems.append(f"datatype {datatype} bitpix {bitpix}")
    elif len(data) != int(vox_offset) + nvox * bitpix // 8:
        problems.append(f"length {len(data)} for {nvox} voxels at offset {vox_offset}")
    if problems:
        print(f"{path}: " + "; ".join(problems))
        return 1
    print(f"{path}: header ok, dims {dim[1:dim[0] + 1]}, datatype {datatype}")
    return 0


if __name__ == "__main__":
    if len(sys.argv) == 3 and sys.argv[1] == "--check":
        sys.exit(check(sys.argv[2]))
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    write(sys.argv[1])
