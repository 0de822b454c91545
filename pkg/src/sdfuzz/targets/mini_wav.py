"""mini_wav: RIFF/WAVE container reader (fmt, fact, data, LIST chunks)."""

from __future__ import annotations

import struct

from ..corpus import MemoryAccess, Signal
from .base import BugClass, BytesField, CanarySpec, IntField, TargetProgram, Tracer

CANARIES = (
    CanarySpec(
        "WAV001",
        "duration computed by dividing by the unchecked byte_rate field",
        "fmt byte_rate is zero when the data chunk is reached",
        "wav.zero_byte_rate",
        BugClass.INTEGER_OVERFLOW,
    ),
    CanarySpec(
        "WAV002",
        "sample decoder trusts the data chunk size",
        "data chunk declares more bytes than the RIFF body holds",
        "wav.data_size_gt_present",
        BugClass.BUFFER_OVERFLOW,
    ),
    CanarySpec(
        "WAV003",
        "decoder loop bound taken from the fact chunk instead of the data chunk",
        "fact sample-frame count exceeds the frames stored in the data chunk",
        "wav.fact_frames_gt_data",
        BugClass.BUFFER_OVERFLOW,
    ),
)

FORMAT_DOC = """\
mini_wav accepts a RIFF/WAVE file as bytes (all integers little-endian).
- Header: "RIFF", riff_size(4) = file length - 8, "WAVE".
- Chunks: 4-byte id, 4-byte size, body, one pad byte if size is odd.
- "fmt " (16+ bytes): audio_format(2) in {1 PCM, 3 float}, channels(2) <= 8,
  sample_rate(4) > 0, byte_rate(4) = sample_rate * block_align,
  block_align(2) = channels * bits / 8, bits_per_sample(2) in {8,16,24,32}.
- "fact" (4 bytes, optional, before data): number of sample frames.
- "data": sample bytes; must follow fmt. "LIST" chunks carry metadata
  (list type "INFO" then sub-chunks). Other chunks are skipped.
"""

_BITS_SITES = {8: 65, 16: 66, 24: 67, 32: 68}


def _u32(d: bytes, off: int) -> int:
    return int.from_bytes(d[off : off + 4], "little")


def parse(data: bytes, t: Tracer) -> None:
    t.call("sf_open", 1)
    n = len(data)
    t.call("wav_read_header", 2)
    if n < 12:
        t.fail(3, "too short for RIFF header")
    if data[:4] != b"RIFF":
        t.fail(4, "missing RIFF tag")
    riff_size = _u32(data, 4)
    if data[8:12] != b"WAVE":
        t.fail(5, "not a WAVE file")
    if riff_size + 8 > n:
        t.fail(6, "truncated RIFF body")
    if riff_size < 4:
        t.fail(7, "RIFF size too small")
    t.hit(8)
    t.ret()
    limit = riff_size + 8
    offset = 12
    fmt = None
    fact = None
    seen_data = False
    while True:
        t.hit(10)
        if offset + 8 > limit:
            t.hit(11)
            break
        cid = data[offset : offset + 4]
        size = _u32(data, offset + 4)
        body_at = offset + 8
        if cid == b"fmt ":
            t.call("wav_read_fmt", 20)
            if fmt is not None:
                t.fail(21, "duplicate fmt chunk")
            if size < 16:
                t.fail(22, "fmt chunk too small")
            if body_at + size > limit:
                t.fail(23, "truncated fmt chunk")
            audio_format, channels, rate, byte_rate, align, bits = struct.unpack_from(
                "<HHIIHH", data, body_at
            )
            if audio_format not in (1, 3):
                t.fail(24, "unsupported audio format")
            if channels > 8:
                t.fail(25, "too many channels")
            if rate == 0:
                t.fail(26, "zero sample rate")
            if bits not in _BITS_SITES:
                t.fail(27, "unsupported bits per sample")
            if align != channels * bits // 8:
                t.fail(28, "block_align inconsistent with channels/bits")
            if audio_format == 3 and bits != 32:
                t.fail(29, "float samples must be 32-bit")
            if size > 16:
                t.hit(31)
            fmt = (audio_format, channels, rate, byte_rate, align, bits)
            t.hit(30)
            t.ret()
        elif cid == b"fact":
            t.call("wav_read_fact", 40)
            if size < 4:
                t.fail(41, "fact chunk too small")
            if body_at + size > limit:
                t.fail(42, "truncated fact chunk")
            if not seen_data:
                fact = _u32(data, body_at)
            t.hit(43)
            t.ret()
        elif cid == b"data":
            t.call("wav_read_data", 50)
            if fmt is None:
                t.fail(51, "data chunk before fmt")
            audio_format, channels, rate, byte_rate, align, bits = fmt
            t.call("wav_compute_duration", 52)
            if byte_rate == 0:
                t.trap(53, Signal.CANARY_TRAP, "WAV001")
            t.hit(54)
            t.ret()
            t.call("wav_count_frames", 55)
            if align == 0:
                t.trap(56, Signal.FPE)
            frames = size // align
            t.hit(57)
            t.ret()
            t.call("wav_decode_samples", 60)
            if size > limit - body_at:
                t.trap(61, Signal.CANARY_TRAP, "WAV002", MemoryAccess("read", "oob_heap"))
            if fact is not None:
                t.hit(62)
                if fact > frames:
                    t.trap(63, Signal.CANARY_TRAP, "WAV003", MemoryAccess("read", "oob_heap"))
            t.hit(69 if audio_format == 3 else 64)
            t.hit(_BITS_SITES[bits])
            if frames == 0:
                t.hit(70)
            t.ret()
            seen_data = True
            t.ret()
        elif cid == b"LIST":
            t.call("wav_read_list", 80)
            if size < 4:
                t.fail(81, "LIST chunk too small")
            if body_at + size > limit:
                t.fail(82, "truncated LIST chunk")
            t.hit(83 if data[body_at : body_at + 4] == b"INFO" else 84)
            t.ret()
        else:
            if body_at + size > limit:
                t.fail(90, "truncated chunk")
            t.hit(91)
        offset = body_at + size + (size & 1)
    if not seen_data:
        t.fail(12, "no data chunk")
    t.hit(13)
    t.ret()


def riff_chunk(cid: bytes, body: bytes) -> bytes:
    out = cid + struct.pack("<I", len(body)) + body
    return out + b"\x00" if len(body) & 1 else out


def fmt_body(channels: int = 1, rate: int = 8192, bits: int = 8, audio_format: int = 1,
             byte_rate: int | None = None) -> bytes:
    align = channels * bits // 8
    if byte_rate is None:
        byte_rate = rate * align
    return struct.pack("<HHIIHH", audio_format, channels, rate, byte_rate, align, bits)


def riff(chunks: bytes) -> bytes:
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def minimal_wav(samples: bytes = bytes(range(0x70, 0x80))) -> bytes:
    return riff(riff_chunk(b"fmt ", fmt_body()) + riff_chunk(b"data", samples))


def walk_chunks(data: bytes) -> list[tuple[int, int, bytes]] | None:
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        return None
    out = []
    off = 12
    while off + 8 <= len(data):
        size = _u32(data, off + 4)
        if off + 8 + size > len(data):
            return out
        out.append((off, size, data[off : off + 4]))
        off += 8 + size + (size & 1)
    return out


class WavFormat:
    """RIFF tags, chunk ids and chunk sizes are protected; riff_size is re-derived."""

    name = "mini_wav"
    keep_first_unit = False

    def protected_spans(self, data: bytes) -> list[tuple[int, int]] | None:
        chunks = walk_chunks(data)
        if chunks is None:
            return None
        return [(0, 4), (8, 12)] + [(off, off + 8) for off, _, _ in chunks]

    def mutable_spans(self, data: bytes) -> list[tuple[int, int]] | None:
        chunks = walk_chunks(data)
        if chunks is None:
            return None
        return [
            (off + 8, off + 8 + size)
            for off, size, cid in chunks
            if cid not in (b"fmt ", b"fact") and size
        ]

    def fields(self, data: bytes) -> list:
        out: list = []
        for off, size, cid in walk_chunks(data) or ():
            base = off + 8
            if cid == b"fmt " and size >= 16:
                out += [IntField(base, 2, "little"), IntField(base + 2, 2, "little"),
                        IntField(base + 4, 4, "little"), IntField(base + 8, 4, "little"),
                        IntField(base + 12, 2, "little"), IntField(base + 14, 2, "little")]
            elif cid == b"fact" and size >= 4:
                out.append(IntField(base, 4, "little"))
            elif size:
                out.append(BytesField(base, base + size))
        return out

    def units(self, data: bytes) -> list[tuple[int, int]]:
        return [(off, off + 8 + size + (size & 1)) for off, size, _ in walk_chunks(data) or ()]

    def fixup(self, data: bytes) -> bytes:
        if walk_chunks(data) is None:
            return data
        return data[:4] + struct.pack("<I", len(data) - 8) + data[8:]

    def skeleton(self) -> bytes:
        return minimal_wav()

    def resample_text(self, rng) -> bytes:
        return bytes(rng.randrange(256) for _ in range(rng.randrange(1, 8)))


FORMAT_MODEL = WavFormat()

TARGET = TargetProgram(
    name="mini_wav",
    block_count=92,
    canary_catalog=CANARIES,
    format_doc=FORMAT_DOC,
    shallow_threshold=5,
    entry=parse,
    format_model=FORMAT_MODEL,
)
