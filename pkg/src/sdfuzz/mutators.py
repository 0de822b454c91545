"""Byte-level and structure-aware mutation operators."""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .corpus import DEFAULT_MAX_INPUT_BYTES
from .errors import ContractError
from .targets.base import FormatModel

INTERESTING_8 = (0, 1, 16, 32, 64, 100, 127, 128, 255)
INTERESTING_16 = (0, 1, 128, 255, 256, 512, 1000, 1024, 4096, 32767, 32768, 65535)
INTERESTING_32 = (0, 1, 255, 256, 65535, 65536, 100663045, 2147483647, 2147483648,
                  4294967294, 4294967295)

# bytes that never open or close XML markup, used when editing text runs
_SAFE_TEXT = bytes(b for b in range(0x20, 0x7F) if b not in b"<>&\"'") + b"\t\n"


class MutationKind(str, Enum):
    BIT_FLIP = "BitFlip"
    BYTE_REPLACE = "ByteReplace"
    BLOCK_DELETE = "BlockDelete"
    BLOCK_DUPLICATE = "BlockDuplicate"
    SPLICE = "Splice"
    STRUCT_KEYWORD_PRESERVING = "StructKeywordPreserving"
    STRUCT_FIELD_RESAMPLE = "StructFieldResample"

    @property
    def structural(self) -> bool:
        return self in (MutationKind.STRUCT_KEYWORD_PRESERVING, MutationKind.STRUCT_FIELD_RESAMPLE)


BYTE_KINDS = (
    MutationKind.BIT_FLIP,
    MutationKind.BYTE_REPLACE,
    MutationKind.BLOCK_DELETE,
    MutationKind.BLOCK_DUPLICATE,
    MutationKind.SPLICE,
)
STRUCT_KINDS = (MutationKind.STRUCT_KEYWORD_PRESERVING, MutationKind.STRUCT_FIELD_RESAMPLE)


@dataclass(frozen=True)
class MutationOp:
    kind: MutationKind
    rng_draws: int


class CountingRandom(random.Random):
    """``random.Random`` that counts primitive draws, for reproducibility audits."""

    def __init__(self, seed: object = None) -> None:
        self.draws = 0
        super().__init__(seed)

    def random(self) -> float:
        self.draws += 1
        return super().random()

    def getrandbits(self, k: int) -> int:
        self.draws += 1
        return super().getrandbits(k)


def _draws(rng: random.Random) -> int:
    return getattr(rng, "draws", 0)


# --- byte-level operators -------------------------------------------------

def _bit_flip(buf: bytearray, rng: random.Random) -> None:
    for _ in range(1 << rng.randrange(3)):
        pos = rng.randrange(len(buf) * 8)
        buf[pos >> 3] ^= 1 << (pos & 7)


def _write_int(buf: bytearray, pos: int, value: int, width: int, rng: random.Random) -> None:
    if pos + width > len(buf):
        pos = max(0, len(buf) - width)
    order = "little" if rng.random() < 0.5 else "big"
    raw = (value & ((1 << (8 * width)) - 1)).to_bytes(width, order)
    buf[pos : pos + width] = raw[: len(buf) - pos]


def _byte_replace(buf: bytearray, rng: random.Random) -> None:
    for _ in range(1 << rng.randrange(2)):
        pos = rng.randrange(len(buf))
        r = rng.random()
        if r < 0.4:
            buf[pos] = rng.randrange(256)
        elif r < 0.55:
            buf[pos] = rng.choice(INTERESTING_8)
        elif r < 0.7:
            buf[pos] = (buf[pos] + rng.choice((-1, 1)) * rng.randrange(1, 36)) & 0xFF
        elif r < 0.85 and len(buf) >= 2:
            _write_int(buf, pos, rng.choice(INTERESTING_16), 2, rng)
        elif len(buf) >= 4:
            _write_int(buf, pos, rng.choice(INTERESTING_32), 4, rng)
        else:
            buf[pos] = rng.randrange(256)


def _span(n: int, rng: random.Random, cap: int = 32) -> tuple[int, int]:
    length = rng.randrange(1, min(cap, n) + 1)
    start = rng.randrange(n - length + 1)
    return start, start + length


def _block_delete(buf: bytearray, rng: random.Random) -> bytearray:
    if len(buf) < 2:
        buf[0] ^= 0xFF
        return buf
    s, e = _span(len(buf) - 1, rng)
    del buf[s:e]
    return buf


def _block_duplicate(buf: bytearray, rng: random.Random) -> bytearray:
    s, e = _span(len(buf), rng)
    at = rng.randrange(len(buf) + 1)
    buf[at:at] = buf[s:e]
    return buf


def _splice(buf: bytearray, other: bytes, rng: random.Random) -> bytearray:
    cut = rng.randrange(1, len(buf) + 1)
    tail = rng.randrange(len(other))
    return buf[:cut] + other[tail:]


# --- structure-aware operators -------------------------------------------

def _unit_delete(data: bytes, model: FormatModel, rng: random.Random) -> bytes | None:
    units = model.units(data)
    if model.keep_first_unit:
        units = units[1:]
    if not units:
        return None
    s, e = rng.choice(units)
    return model.fixup(data[:s] + data[e:])


def _unit_duplicate(data: bytes, model: FormatModel, rng: random.Random) -> bytes | None:
    units = model.units(data)
    if model.keep_first_unit:
        units = units[1:]
    if not units:
        return None
    s, e = rng.choice(units)
    return model.fixup(data[:e] + data[s:e] + data[e:])


def _keyword_preserving(data: bytes, model: FormatModel, rng: random.Random) -> bytes | None:
    spans = model.mutable_spans(data)
    if not spans:
        return None
    s, e = rng.choice(spans)
    if model.name == "mini_xml":
        piece = bytearray(data[s:e])
        op = rng.randrange(3) if piece else 0
        if op == 0:
            at = rng.randrange(len(piece) + 1)
            piece[at:at] = bytes(rng.choice(_SAFE_TEXT) for _ in range(rng.randrange(1, 9)))
        elif op == 1:
            for _ in range(rng.randrange(1, 4)):
                piece[rng.randrange(len(piece))] = rng.choice(_SAFE_TEXT)
        else:
            ds, de = _span(len(piece), rng, cap=8)
            del piece[ds:de]
        return data[:s] + bytes(piece) + data[e:]
    # binary formats: in-place byte edits so that every length field stays valid
    buf = bytearray(data)
    for _ in range(rng.randrange(1, 5)):
        pos = rng.randrange(s, e)
        if rng.random() < 0.5:
            buf[pos] = rng.randrange(256)
        else:
            buf[pos] ^= 1 << rng.randrange(8)
    return model.fixup(bytes(buf))


def _field_resample(data: bytes, model: FormatModel, rng: random.Random) -> bytes | None:
    fields = model.fields(data)
    if not fields:
        return None
    f = rng.choice(fields)
    if f.kind == "int":
        bits = 8 * f.width
        old = int.from_bytes(data[f.start : f.start + f.width], f.byteorder)
        r = rng.random()
        if r < 0.4:
            value = rng.choice(INTERESTING_32)
        elif r < 0.7:
            value = old + rng.choice((-1, 1)) * rng.randrange(1, 36)
        else:
            value = rng.getrandbits(bits)
        raw = (value % (1 << bits)).to_bytes(f.width, f.byteorder)
        return model.fixup(data[: f.start] + raw + data[f.start + f.width :])
    if f.kind == "bytes":
        n = f.end - f.start
        raw = bytes(rng.randrange(256) for _ in range(n))
        return model.fixup(data[: f.start] + raw + data[f.end :])
    return data[: f.start] + model.resample_text(rng) + data[f.end :]


_STRUCT_OPS = {
    MutationKind.STRUCT_KEYWORD_PRESERVING: _keyword_preserving,
    MutationKind.STRUCT_FIELD_RESAMPLE: _field_resample,
}


def apply_op(
    kind: MutationKind,
    payload: bytes,
    rng: random.Random,
    format_model: FormatModel | None = None,
    splice_pool: Sequence[bytes] = (),
) -> bytes | None:
    """Apply one operator; ``None`` means it was not applicable to this payload."""
    if kind.structural:
        if format_model is None:
            return None
        return _STRUCT_OPS[kind](payload, format_model, rng)
    if format_model is not None and kind is MutationKind.BLOCK_DELETE:
        out = _unit_delete(payload, format_model, rng)
        if out is not None:
            return out
    if format_model is not None and kind is MutationKind.BLOCK_DUPLICATE:
        out = _unit_duplicate(payload, format_model, rng)
        if out is not None:
            return out
    buf = bytearray(payload)
    if kind is MutationKind.BIT_FLIP:
        _bit_flip(buf, rng)
    elif kind is MutationKind.BYTE_REPLACE:
        _byte_replace(buf, rng)
    elif kind is MutationKind.BLOCK_DELETE:
        buf = _block_delete(buf, rng)
    elif kind is MutationKind.BLOCK_DUPLICATE:
        buf = _block_duplicate(buf, rng)
    elif kind is MutationKind.SPLICE:
        if not splice_pool:
            return None
        buf = _splice(buf, rng.choice(splice_pool), rng)
        if format_model is not None:
            return format_model.fixup(bytes(buf))
    return bytes(buf)


def mutate_with_ops(
    payload: bytes,
    format_model: FormatModel | None,
    op_budget: int,
    rng: random.Random,
    splice_pool: Sequence[bytes] = (),
    max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES,
) -> list[tuple[bytes, MutationOp]]:
    """Produce ``op_budget`` mutants, each different from ``payload``.

    With a format model, even-indexed outputs use structure-aware kinds (so at
    least half of them); structure-aware kinds fall back to byte-level ones
    only when the payload cannot be tokenised.
    """
    if op_budget < 1:
        raise ContractError("op_budget must be >= 1")
    if not payload:
        payload = format_model.skeleton() if format_model is not None else bytes([rng.randrange(256)])
    byte_kinds = BYTE_KINDS if splice_pool else BYTE_KINDS[:-1]
    out = []
    for i in range(op_budget):
        start = _draws(rng)
        want_struct = format_model is not None and i % 2 == 0
        mutant = None
        kind = MutationKind.BIT_FLIP
        for _ in range(8):
            kind = rng.choice(STRUCT_KINDS) if want_struct else rng.choice(byte_kinds)
            mutant = apply_op(kind, payload, rng, format_model, splice_pool)
            if mutant is not None and mutant != payload and 0 < len(mutant) <= max_input_bytes:
                break
            if want_struct and mutant is None:
                want_struct = False
            mutant = None
        if mutant is None:
            kind = MutationKind.BIT_FLIP
            buf = bytearray(payload[:max_input_bytes])
            pos = rng.randrange(len(buf) * 8)
            buf[pos >> 3] ^= 1 << (pos & 7)
            mutant = bytes(buf)
        out.append((mutant, MutationOp(kind, _draws(rng) - start)))
    return out


def mutate(
    payload: bytes,
    format_model: FormatModel | None,
    op_budget: int,
    rng: random.Random,
    splice_pool: Sequence[bytes] = (),
    max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES,
) -> list[bytes]:
    return [m for m, _ in mutate_with_ops(payload, format_model, op_budget, rng, splice_pool, max_input_bytes)]
