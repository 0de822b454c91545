"""mini_png: a PNG chunk walker (signature + length/type/data/CRC chunks)."""

from __future__ import annotations

import struct
import zlib

from ..corpus import MemoryAccess, Signal
from .base import BugClass, BytesField, CanarySpec, IntField, TargetProgram, Tracer

MAGIC = b"\x89PNG\r\n\x1a\n"
MAX_IMAGE_BYTES = 1 << 24

_VALID_DEPTHS = {0: (1, 2, 4, 8, 16), 2: (8, 16), 3: (1, 2, 4, 8), 4: (8, 16), 6: (8, 16)}
_CHANNELS = {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}

CANARIES = (
    CanarySpec(
        "PNG001",
        "chunk end offset computed in 32-bit arithmetic wraps around",
        "declared chunk length makes offset + 12 + length overflow 32 bits",
        "png.chunk_len_wraps",
        BugClass.INTEGER_OVERFLOW,
    ),
    CanarySpec(
        "PNG002",
        "tRNS entries copied into a buffer sized by the earlier PLTE chunk",
        "palette image whose tRNS length exceeds the PLTE entry count",
        "png.trns_gt_palette",
        BugClass.BUFFER_OVERFLOW,
    ),
    CanarySpec(
        "PNG003",
        "second IHDR reinitialises image state mid-stream",
        "more than one IHDR chunk",
        "png.duplicate_ihdr",
        BugClass.LOGIC_ERROR,
    ),
)

FORMAT_DOC = """\
mini_png accepts a PNG image as bytes.
- 8-byte signature 89 50 4E 47 0D 0A 1A 0A, then a sequence of chunks.
- Chunk: 4-byte big-endian data length, 4-byte ASCII type, data, 4-byte
  big-endian CRC-32 computed over type + data.
- IHDR must come first, exactly once, 13 bytes: width(4) height(4) bit_depth(1)
  color_type(1) compression(1)=0 filter(1)=0 interlace(1) in {0,1}.
  color_type 0: depth 1/2/4/8/16; 2: 8/16; 3 (palette): 1/2/4/8; 4: 8/16; 6: 8/16.
- PLTE: 3 bytes per entry, 1..256 entries, before IDAT; required for color_type 3.
- tRNS: before IDAT; color_type 3: one alpha byte per palette entry (at most
  the number of PLTE entries); color_type 0: 2 bytes; color_type 2: 6 bytes.
- IDAT: zlib stream (first two bytes a valid zlib header). At least one.
- IEND: empty, last. Ancillary chunks tEXt (keyword NUL text) and gAMA (4 bytes)
  are understood; unknown lowercase-initial chunks are skipped.
"""


def _u32(d: bytes, off: int) -> int:
    return int.from_bytes(d[off : off + 4], "big")


def parse(data: bytes, t: Tracer) -> None:
    t.call("png_read_png", 1)
    n = len(data)
    t.call("png_read_sig", 2)
    if n < 8:
        t.fail(3, "too short for signature")
    if data[:8] != MAGIC:
        t.fail(4, "bad signature")
    t.hit(5)
    t.ret()
    offset = 8
    ihdr = None
    palette = None
    seen_idat = False
    chunks = 0
    while True:
        t.hit(6)
        t.call("png_read_chunk_header", 10)
        if offset + 8 > n:
            t.fail(11, "truncated chunk header")
        length = _u32(data, offset)
        ctype = data[offset + 4 : offset + 8]
        if length > 0x7FFFFFFF:
            t.hit(12)
        if offset + 12 + length > 0xFFFFFFFF:
            # the walker keeps going with the wrapped end offset
            t.trap(13, Signal.CANARY_TRAP, "PNG001", MemoryAccess("read", "wild"))
        end = offset + 12 + length
        if end > n:
            t.fail(14, "truncated chunk")
        if not ctype.isalpha():
            t.fail(15, "bad chunk type")
        t.ret()
        body = data[offset + 8 : offset + 8 + length]
        t.call("png_crc_finish", 20)
        if zlib.crc32(ctype + body) != _u32(data, end - 4):
            t.fail(21, "CRC mismatch")
        t.hit(22)
        t.ret()

        if ctype == b"IHDR":
            t.call("png_handle_IHDR", 30)
            if ihdr is not None:
                t.trap(31, Signal.CANARY_TRAP, "PNG003")
            if chunks:
                t.fail(32, "IHDR not first")
            if length != 13:
                t.fail(33, "bad IHDR length")
            width, height, depth, color, comp, filt, interlace = struct.unpack(">IIBBBBB", body)
            if not (0 < width <= 0x7FFFFFFF and 0 < height <= 0x7FFFFFFF):
                t.fail(34, "bad image dimensions")
            if depth not in _VALID_DEPTHS.get(color, ()):
                t.fail(35, "bad bit depth / color type")
            if comp or filt:
                t.fail(36, "unknown compression or filter method")
            if interlace > 1:
                t.fail(37, "unknown interlace method")
            if color == 3:
                t.hit(38)
            ihdr = (width, height, depth, color)
            t.hit(39)
            t.ret()
        elif ihdr is None:
            t.fail(7, "first chunk is not IHDR")
        elif ctype == b"PLTE":
            t.call("png_handle_PLTE", 40)
            if seen_idat:
                t.fail(41, "PLTE after IDAT")
            if palette is not None:
                t.fail(42, "duplicate PLTE")
            if length == 0 or length % 3 or length > 768:
                t.fail(43, "bad PLTE length")
            if ihdr[3] in (0, 4):
                t.fail(44, "PLTE not allowed for grayscale")
            palette = length // 3
            t.hit(45)
            t.ret()
        elif ctype == b"tRNS":
            t.call("png_handle_tRNS", 50)
            if seen_idat:
                t.fail(51, "tRNS after IDAT")
            color = ihdr[3]
            if color == 3:
                if palette is None:
                    t.fail(52, "tRNS before PLTE")
                if length > palette:
                    t.trap(53, Signal.CANARY_TRAP, "PNG002", MemoryAccess("write", "oob_heap"))
                t.hit(54)
            elif color == 0:
                if length != 2:
                    t.fail(55, "bad grayscale tRNS")
            elif color == 2:
                if length != 6:
                    t.fail(56, "bad truecolor tRNS")
            else:
                t.fail(57, "tRNS with alpha channel")
            t.hit(58)
            t.ret()
        elif ctype == b"IDAT":
            t.call("png_handle_IDAT", 60)
            if ihdr[3] == 3 and palette is None:
                t.fail(61, "palette image without PLTE")
            if not seen_idat:
                t.call("png_alloc_rows", 62)
                width, height, depth, color = ihdr
                rowbytes = (width * _CHANNELS[color] * depth + 7) // 8
                if rowbytes * height > MAX_IMAGE_BYTES:
                    t.trap(63, Signal.ABRT, runtime_frames=("abort",))
                t.ret()
                if length < 2 or (body[0] << 8 | body[1]) % 31 or body[0] & 0x0F != 8:
                    t.fail(64, "bad zlib header")
                t.hit(65)
            else:
                t.hit(66)
            seen_idat = True
            t.ret()
        elif ctype == b"IEND":
            t.call("png_handle_IEND", 70)
            if not seen_idat:
                t.fail(71, "IEND before IDAT")
            if length:
                t.fail(72, "IEND with data")
            t.hit(73)
            t.ret()
            break
        elif ctype == b"tEXt":
            t.call("png_handle_tEXt", 80)
            nul = body.find(b"\x00")
            if nul < 1 or nul > 79:
                t.fail(81, "bad tEXt keyword")
            t.hit(82)
            t.ret()
        elif ctype == b"gAMA":
            t.call("png_handle_gAMA", 85)
            if length != 4:
                t.fail(86, "bad gAMA length")
            if _u32(body, 0) == 0:
                t.fail(87, "zero gamma")
            t.hit(88)
            t.ret()
        elif ctype[0] < 0x61:
            t.fail(90, "unknown critical chunk")
        else:
            t.call("png_handle_unknown", 91)
            t.ret()
        chunks += 1
        offset = end
    t.hit(8)
    t.ret()


def chunk(ctype: bytes, body: bytes) -> bytes:
    """Serialise one chunk with a correct CRC."""
    return struct.pack(">I", len(body)) + ctype + body + struct.pack(">I", zlib.crc32(ctype + body))


def walk_chunks(data: bytes) -> list[tuple[int, int, bytes]] | None:
    """(offset, length, type) for every well-framed chunk after the signature."""
    if not data.startswith(MAGIC):
        return None
    out = []
    off = 8
    while off + 12 <= len(data):
        length = _u32(data, off)
        if off + 12 + length > len(data):
            return out
        out.append((off, length, data[off + 4 : off + 8]))
        off += 12 + length
    return out


class PngFormat:
    """Signature and chunk length/type headers are protected; CRCs are re-derived."""

    name = "mini_png"
    keep_first_unit = False

    def protected_spans(self, data: bytes) -> list[tuple[int, int]] | None:
        chunks = walk_chunks(data)
        if chunks is None:
            return None
        return [(0, 8)] + [(off, off + 8) for off, _, _ in chunks]

    def mutable_spans(self, data: bytes) -> list[tuple[int, int]] | None:
        chunks = walk_chunks(data)
        if chunks is None:
            return None
        spans = []
        for off, ln, ct in chunks:
            start = off + 8 + (2 if ct == b"IDAT" else 0)
            if ct != b"IHDR" and off + 8 + ln > start:
                spans.append((start, off + 8 + ln))
        return spans

    def fields(self, data: bytes) -> list:
        out: list = []
        for off, ln, ct in walk_chunks(data) or ():
            base = off + 8
            if ct == b"IHDR" and ln == 13:
                out += [IntField(base, 4, "big"), IntField(base + 4, 4, "big")]
                out += [IntField(base + i, 1, "big") for i in (8, 9, 12)]
            elif ct == b"gAMA" and ln == 4:
                out.append(IntField(base, 4, "big"))
            elif ct in (b"PLTE", b"tRNS", b"tEXt") and ln:
                out.append(BytesField(base, base + ln))
        return out

    def units(self, data: bytes) -> list[tuple[int, int]]:
        return [(off, off + 12 + ln) for off, ln, _ in walk_chunks(data) or ()]

    def fixup(self, data: bytes) -> bytes:
        chunks = walk_chunks(data)
        if not chunks:
            return data
        out = bytearray(data)
        for off, ln, ct in chunks:
            crc = zlib.crc32(bytes(out[off + 4 : off + 8 + ln]))
            out[off + 8 + ln : off + 12 + ln] = crc.to_bytes(4, "big")
        return bytes(out)

    def skeleton(self) -> bytes:
        return minimal_png()

    def resample_text(self, rng) -> bytes:
        return bytes(rng.randrange(256) for _ in range(rng.randrange(1, 8)))


def minimal_png(width: int = 1, height: int = 1) -> bytes:
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)
    raw = b"".join(b"\x00" + b"\x80" * width for _ in range(height))
    return MAGIC + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b"")


FORMAT_MODEL = PngFormat()

TARGET = TargetProgram(
    name="mini_png",
    block_count=92,
    canary_catalog=CANARIES,
    format_doc=FORMAT_DOC,
    shallow_threshold=6,
    entry=parse,
    format_model=FORMAT_MODEL,
)
