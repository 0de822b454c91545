"""Grammar-driven mock seed generator for the bundled formats.

Each candidate is derived under its own RNG seeded from
``(rng_seed, round, index)``. Before deriving, a fixed number of uniforms
decides which stressor productions are active; crash feedback can only
switch on stressors for candidates that drew none. Two runs that differ only
in feedback therefore produce byte-identical stressed candidates, and the
feedback-aware run adds extra ones.
"""

from __future__ import annotations

import random
import struct
import zlib
from enum import Enum
from typing import Callable, Iterable

from ..targets.mini_png import MAGIC, chunk
from ..targets.mini_wav import fmt_body, riff, riff_chunk


class Stressor(str, Enum):
    DEEP_NESTING = "deep_nesting"
    LONG_RUNS = "long_runs"
    BOUNDARY_INTS = "boundary_ints"
    USE_BEFORE_DECLARE = "use_before_declare"
    DUPLICATE = "duplicate"


STRESSORS = tuple(Stressor)

# feedback bug class -> stressors it switches on
BIAS_TABLE: dict[str, tuple[Stressor, ...]] = {
    "buffer_overflow": (Stressor.DEEP_NESTING, Stressor.LONG_RUNS),
    "integer_overflow": (Stressor.BOUNDARY_INTS,),
    "null_deref": (Stressor.USE_BEFORE_DECLARE,),
    "logic_error": (Stressor.DUPLICATE,),
}

BOUNDARY_32 = (0, 1, 0x7FFFFFFF, 0x80000000, 0xFFFFFFF0, 0xFFFFFFFE, 0xFFFFFFFF)


def stressor_rate(diversity: float) -> float:
    """Per-stressor activation probability with no feedback."""
    return 0.01 + 0.04 * diversity


BIAS_RATE = 0.6  # chance that a stressor-free candidate takes a feedback-hinted class


def draw_stressors(
    rng_seed: int, round_number: int, index: int, diversity: float, hints: Iterable[str],
) -> tuple[random.Random, frozenset[Stressor]]:
    """Return the derivation RNG and the active stressors for one candidate."""
    rng = random.Random(f"{rng_seed}:{round_number}:{index}")
    rate = stressor_rate(diversity)
    active = {s for s in STRESSORS if rng.random() < rate}
    classes = [h for h in sorted(set(hints)) if h in BIAS_TABLE]
    if not active and classes:
        # one hinted bug class per candidate, with every stressor it maps to
        side = random.Random(f"{rng_seed}:{round_number}:{index}:feedback")
        if side.random() < BIAS_RATE:
            active.update(BIAS_TABLE[side.choice(classes)])
    return rng, frozenset(active)


# --- mini_xml ---------------------------------------------------------------

_TAGS = ("doc", "item", "p", "list", "entry", "name", "value", "node", "b", "i")
_ATTRS = ("id", "class", "lang", "href", "type", "ref", "key", "n", "style", "src")
_WORDS = ("alpha", "beta", "gamma", "delta", "fuzz", "seed", "text", "data", "x", "42")
_ENTITIES = ("ent", "copy", "brand", "ver", "who")


def _xml_text(rng: random.Random, entities: list[str]) -> str:
    parts = []
    for _ in range(rng.randint(1, 3)):
        r = rng.random()
        if r < 0.15:
            parts.append("&" + rng.choice(("lt", "gt", "amp", "quot", "apos")) + ";")
        elif r < 0.25:
            parts.append(f"&#{rng.randint(48, 122)};")
        elif r < 0.4 and entities:
            parts.append(f"&{rng.choice(entities)};")
        else:
            parts.append(rng.choice(_WORDS))
    return " ".join(parts)


def _xml_attrs(rng: random.Random, active: frozenset[Stressor]) -> str:
    if Stressor.LONG_RUNS in active and rng.random() < 0.5:
        names = [f"a{i}" for i in range(rng.randint(17, 24))]
    elif Stressor.DUPLICATE in active and rng.random() < 0.5:
        names = [f"a{i}" for i in range(rng.randint(10, 24))]
    else:
        names = rng.sample(_ATTRS, rng.randint(0, 3))
    if Stressor.DUPLICATE in active and names and rng.random() < 0.7:
        names.append(rng.choice(names))
    return "".join(f' {n}="{rng.choice(_WORDS)}"' for n in names)


def _xml_element(rng: random.Random, depth: int, max_depth: int, entities: list[str],
                 active: frozenset[Stressor]) -> str:
    tag = rng.choice(_TAGS)
    attrs = _xml_attrs(rng, active) if depth <= 2 or rng.random() < 0.3 else ""
    if depth >= max_depth:
        if rng.random() < 0.3:
            return f"<{tag}{attrs}/>"
        return f"<{tag}{attrs}>{_xml_text(rng, entities)}</{tag}>"
    children = []
    n_children = 1 if max_depth > 6 else rng.randint(1, 3)
    for _ in range(n_children):
        r = rng.random()
        if r < 0.6 or max_depth > 6:
            children.append(_xml_element(rng, depth + 1, max_depth, entities, active))
        elif r < 0.8:
            children.append(_xml_text(rng, entities))
        elif r < 0.9:
            children.append(f"<!-- {rng.choice(_WORDS)} -->")
        else:
            children.append(f"<![CDATA[{rng.choice(_WORDS)} <raw> & ]]>")
    return f"<{tag}{attrs}>{''.join(children)}</{tag}>"


def derive_xml(rng: random.Random, active: frozenset[Stressor]) -> bytes:
    out = []
    if rng.random() < 0.5:
        out.append('<?xml version="1.0"?>\n')
    entities: list[str] = []
    ref_before_decl = Stressor.USE_BEFORE_DECLARE in active
    if rng.random() < 0.4 or ref_before_decl:
        decls = [f'<!ENTITY {e} "{rng.choice(_WORDS)}">'
                 for e in rng.sample(_ENTITIES, rng.randint(1, 3))]
        if ref_before_decl:
            if rng.random() < 0.5:
                # the body uses an entity that the subset never declares
                decls = []
                entities = [rng.choice(_ENTITIES)]
            else:
                # the first declaration's value refers to a later one
                decls.insert(0, f'<!ENTITY first "&{rng.choice(_ENTITIES)};">')
        else:
            entities = [d.split()[1] for d in decls]
        subset = " [\n  " + "\n  ".join(decls) + "\n]" if decls else ""
        out.append(f"<!DOCTYPE doc{subset}>\n")
    max_depth = rng.randint(33, 40) if Stressor.DEEP_NESTING in active else rng.randint(1, 4)
    root = _xml_element(rng, 1, max_depth, entities, active)
    if ref_before_decl and entities and f"&{entities[0]};" not in root:
        root = root.replace(">", f">&{entities[0]};", 1) if not root.endswith("/>") else root
    out.append(root)
    if Stressor.DUPLICATE in active and rng.random() < 0.3:
        out.append(f"<!-- {rng.choice(_WORDS)} -->")
    return "".join(out).encode()


# --- mini_png -----------------------------------------------------------------

_DEPTHS = {0: (1, 2, 4, 8), 2: (8,), 3: (1, 2, 4, 8), 4: (8,), 6: (8,)}
_CHANNELS = {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}


def _png_idat(rng: random.Random, width: int, height: int, color: int, depth: int) -> bytes:
    rowbytes = (width * _CHANNELS[color] * depth + 7) // 8
    raw = b"".join(bytes([0]) + bytes(rng.randrange(256) for _ in range(rowbytes))
                   for _ in range(height))
    return zlib.compress(raw)


def derive_png(rng: random.Random, active: frozenset[Stressor]) -> bytes:
    color = rng.choice((0, 2, 3, 3, 4, 6))
    depth = rng.choice(_DEPTHS[color])
    width, height = rng.randint(1, 16), rng.randint(1, 8)
    ihdr_body = struct.pack(">IIBBBBB", width, height, depth, color, 0, 0, rng.choice((0, 1)))
    if Stressor.BOUNDARY_INTS in active and rng.random() < 0.3:
        w, h = rng.choice(BOUNDARY_32[1:]), rng.choice((1, 2, 0x7FFFFFFF))
        ihdr_body = struct.pack(">IIBBBBB", w, h, depth, color, 0, 0, 0)
    chunks = [chunk(b"IHDR", ihdr_body)]
    if Stressor.DUPLICATE in active and rng.random() < 0.5:
        chunks.append(chunk(b"IHDR", ihdr_body))
    if rng.random() < 0.3:
        chunks.append(chunk(b"gAMA", struct.pack(">I", rng.choice((45455, 100000)))))
    if rng.random() < 0.3:
        chunks.append(chunk(b"tEXt", rng.choice(_WORDS).encode() + b"\x00" + rng.choice(_WORDS).encode()))
    palette = 0
    if color == 3 or (color in (2, 6) and rng.random() < 0.2):
        palette = rng.randint(1, min(16, 1 << depth) if color == 3 else 16)
        plte = chunk(b"PLTE", bytes(rng.randrange(256) for _ in range(3 * palette)))
        chunks.append(plte)
    trns = None
    if color == 3 and rng.random() < 0.5:
        n = rng.randint(1, palette)
        if Stressor.LONG_RUNS in active:
            n = palette + rng.randint(1, 16)
        trns = bytes(rng.randrange(256) for _ in range(n))
    elif color == 0 and rng.random() < 0.3:
        trns = struct.pack(">H", rng.randrange(1 << depth))
    elif color == 2 and rng.random() < 0.3:
        trns = bytes(rng.randrange(256) for _ in range(6))
    if trns is not None:
        if Stressor.USE_BEFORE_DECLARE in active and palette:
            chunks.insert(len(chunks) - 1, chunk(b"tRNS", trns))
        else:
            chunks.append(chunk(b"tRNS", trns))
    if Stressor.LONG_RUNS in active and rng.random() < 0.5:
        chunks += [chunk(b"tEXt", b"k\x00" + b"A" * rng.randint(64, 512))
                   for _ in range(rng.randint(1, 4))]
    idat = _png_idat(rng, width, height, color, depth)
    if rng.random() < 0.3 and len(idat) > 4:
        cut = rng.randint(2, len(idat) - 1)
        chunks += [chunk(b"IDAT", idat[:cut]), chunk(b"IDAT", idat[cut:])]
    else:
        chunks.append(chunk(b"IDAT", idat))
    if Stressor.BOUNDARY_INTS in active and rng.random() < 0.7:
        # a chunk whose declared length is a boundary value, without the body
        length = rng.choice(BOUNDARY_32[2:])
        chunks.append(struct.pack(">I", length) + b"tEXt" + b"k\x00v")
    chunks.append(chunk(b"IEND", b""))
    return MAGIC + b"".join(chunks)


# --- mini_wav -----------------------------------------------------------------

def derive_wav(rng: random.Random, active: frozenset[Stressor]) -> bytes:
    fmt_code = 3 if rng.random() < 0.1 else 1
    bits = 32 if fmt_code == 3 else rng.choice((8, 16, 16, 24))
    channels = rng.randint(1, 2)
    rate = rng.choice((8000, 11025, 22050, 44100))
    align = channels * bits // 8
    frames = rng.randint(1, 32)
    byte_rate = None
    if Stressor.BOUNDARY_INTS in active and rng.random() < 0.6:
        byte_rate = rng.choice(BOUNDARY_32)
    fmt = fmt_body(channels, rate, bits, fmt_code, byte_rate)
    if rng.random() < 0.2:
        fmt += b"\x00\x00"  # cbSize of an extended fmt chunk
    chunks = [riff_chunk(b"fmt ", fmt)]
    if Stressor.DUPLICATE in active and rng.random() < 0.5:
        chunks.append(riff_chunk(b"fmt ", fmt))
    fact = None
    if fmt_code == 3 or rng.random() < 0.3 or Stressor.LONG_RUNS in active:
        fact = frames
    data_size = frames * align
    samples = bytes(rng.randrange(256) for _ in range(data_size))
    if Stressor.LONG_RUNS in active:
        if rng.random() < 0.5:
            fact = frames + rng.randint(1, 1 << 16)
        else:
            data_size += rng.randint(1, 1 << 12)
    if Stressor.BOUNDARY_INTS in active and byte_rate is None:
        data_size = rng.choice(BOUNDARY_32[2:])
    if fact is not None:
        chunks.append(riff_chunk(b"fact", struct.pack("<I", fact)))
    if rng.random() < 0.3:
        info = b"INFO" + riff_chunk(b"INAM", rng.choice(_WORDS).encode() + b"\x00")
        chunks.append(riff_chunk(b"LIST", info))
    data = b"data" + struct.pack("<I", data_size & 0xFFFFFFFF) + samples
    if len(samples) & 1:
        data += b"\x00"
    if Stressor.USE_BEFORE_DECLARE in active and rng.random() < 0.5:
        chunks.insert(0, data)
    else:
        chunks.append(data)
    if Stressor.DUPLICATE in active and rng.random() < 0.5:
        chunks.append(data)
    return riff(b"".join(chunks))


GRAMMARS: dict[str, Callable[[random.Random, frozenset[Stressor]], bytes]] = {
    "mini_xml": derive_xml,
    "mini_png": derive_png,
    "mini_wav": derive_wav,
}
