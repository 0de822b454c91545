"""Regenerate everything under fixtures/ except fixtures/seeds.

Witness inputs are built by hand from each canary's trigger condition; the
negatives are the smallest edit that keeps the input on the safe side of it.
Backtrace goldens and remote-extraction expectations are computed here with
code that does not import sdfuzz, so the tests compare the library against
an independent oracle.

    python scripts/make_fixtures.py
"""

from __future__ import annotations

import base64
import json
import struct
import zlib
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"

# --- witness / negative inputs ---------------------------------------------

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def png_chunk(ctype: bytes, body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + ctype + body + struct.pack(">I", zlib.crc32(ctype + body))


def ihdr(width=1, height=1, depth=8, color=0) -> bytes:
    return png_chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, depth, color, 0, 0, 0))


def idat(rows: bytes = b"\x00\x80") -> bytes:
    return png_chunk(b"IDAT", zlib.compress(rows))


IEND = png_chunk(b"IEND", b"")


def raw_header(length: int, ctype: bytes) -> bytes:
    # a chunk header whose declared length is not backed by data
    return struct.pack(">I", length) + ctype


def wav_chunk(cid: bytes, body: bytes) -> bytes:
    return cid + struct.pack("<I", len(body)) + body + (b"\x00" if len(body) & 1 else b"")


def wav_fmt(channels=1, rate=8192, bits=8, byte_rate=None) -> bytes:
    align = channels * bits // 8
    if byte_rate is None:
        byte_rate = rate * align
    return wav_chunk(b"fmt ", struct.pack("<HHIIHH", 1, channels, rate, byte_rate, align, bits))


def riff(chunks: bytes) -> bytes:
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def nested(depth: int) -> bytes:
    return b"<e>" * depth + b"x" + b"</e>" * depth


def attrs(names) -> bytes:
    return b"<doc" + b"".join(b' %s="v"' % n.encode() for n in names) + b"/>"


SAMPLES = bytes(range(16))

# (target, file stem, expected canary or None, expected status, purpose, payload)
INPUTS = [
    ("mini_xml", "xml001_witness", "XML001", "Crash", "33 nested elements", nested(33)),
    ("mini_xml", "xml001_negative", None, "Ok", "32 nested elements (the limit)", nested(32)),
    ("mini_xml", "xml002_witness", "XML002", "Crash",
     "entity reference with a DOCTYPE but no internal subset",
     b"<!DOCTYPE doc><doc>&ent;</doc>"),
    ("mini_xml", "xml002_negative", None, "Ok", "same reference with the entity declared",
     b'<!DOCTYPE doc [<!ENTITY ent "v">]><doc>&ent;</doc>'),
    ("mini_xml", "xml003_witness", "XML003", "Crash", "17th attribute repeats the first",
     attrs([f"a{i}" for i in range(16)] + ["a0"])),
    ("mini_xml", "xml003_negative", None, "Ok", "17 distinct attributes",
     attrs([f"a{i}" for i in range(17)])),
    ("mini_png", "png001_witness", "PNG001", "Crash",
     "chunk length 0xFFFFFFFF: end offset wraps 32 bits",
     PNG_MAGIC + ihdr() + raw_header(0xFFFFFFFF, b"tEXt")),
    ("mini_png", "png001_negative", None, "ParseError",
     "chunk length 0x7FFFFFFF: truncated, no wrap",
     PNG_MAGIC + ihdr() + raw_header(0x7FFFFFFF, b"tEXt")),
    ("mini_png", "png002_witness", "PNG002", "Crash", "3 tRNS entries for a 2-entry palette",
     PNG_MAGIC + ihdr(color=3) + png_chunk(b"PLTE", bytes(6)) + png_chunk(b"tRNS", b"\xff" * 3)
     + idat(b"\x00\x00") + IEND),
    ("mini_png", "png002_negative", None, "Ok", "2 tRNS entries for a 2-entry palette",
     PNG_MAGIC + ihdr(color=3) + png_chunk(b"PLTE", bytes(6)) + png_chunk(b"tRNS", b"\xff" * 2)
     + idat(b"\x00\x00") + IEND),
    ("mini_png", "png003_witness", "PNG003", "Crash", "second IHDR chunk",
     PNG_MAGIC + ihdr() + ihdr() + idat() + IEND),
    ("mini_png", "png003_negative", None, "Ok", "single IHDR", PNG_MAGIC + ihdr() + idat() + IEND),
    ("mini_png", "png_abrt_rows", None, "Crash", "row buffer over the allocation cap (SIGABRT)",
     PNG_MAGIC + ihdr(width=0x10000, height=0x1000) + idat() + IEND),
    ("mini_wav", "wav001_witness", "WAV001", "Crash", "byte_rate 0 with a data chunk",
     riff(wav_fmt(byte_rate=0) + wav_chunk(b"data", SAMPLES))),
    ("mini_wav", "wav001_negative", None, "Ok", "byte_rate consistent",
     riff(wav_fmt() + wav_chunk(b"data", SAMPLES))),
    ("mini_wav", "wav002_witness", "WAV002", "Crash", "data size one byte past the RIFF end",
     riff(wav_fmt() + b"data" + struct.pack("<I", len(SAMPLES) + 1) + SAMPLES)),
    ("mini_wav", "wav002_negative", None, "Ok", "data size exact",
     riff(wav_fmt() + b"data" + struct.pack("<I", len(SAMPLES)) + SAMPLES)),
    ("mini_wav", "wav003_witness", "WAV003", "Crash", "fact claims 17 frames, data holds 16",
     riff(wav_fmt() + wav_chunk(b"fact", struct.pack("<I", 17)) + wav_chunk(b"data", SAMPLES))),
    ("mini_wav", "wav003_negative", None, "Ok", "fact claims 16 frames",
     riff(wav_fmt() + wav_chunk(b"fact", struct.pack("<I", 16)) + wav_chunk(b"data", SAMPLES))),
    ("mini_wav", "wav_fpe_align", None, "Crash", "zero channels: block_align 0 (SIGFPE)",
     riff(wav_fmt(channels=0, byte_rate=8192) + wav_chunk(b"data", SAMPLES))),
]


def write_inputs() -> None:
    manifests: dict[str, list[dict]] = {}
    for target, stem, canary, status, purpose, payload in INPUTS:
        d = ROOT / "targets" / target
        d.mkdir(parents=True, exist_ok=True)
        name = f"{stem}.bin"
        (d / name).write_bytes(payload)
        manifests.setdefault(target, []).append(
            {"file": name, "canary_id": canary, "status": status, "purpose": purpose}
        )
    for target, entries in manifests.items():
        path = ROOT / "targets" / target / "manifest.json"
        path.write_text(json.dumps(entries, indent=2) + "\n")


# --- backtraces -------------------------------------------------------------

DENY = {"??", "abort", "raise", "__libc_start_main", "main_trampoline"}


def fnv(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) % (1 << 64)
    return h


def golden(target: str, signal: str, frames: list[tuple[str, int]], k: int = 5) -> dict:
    kept = [f for f in frames if f[0] not in DENY]
    key = "|".join(f"{fn}#{site}" for fn, site in kept[:k]) if kept else "UNKNOWN"
    return {
        "ip": f"{target}:{frames[0][0]}:{frames[0][1]}",
        "signal": signal,
        "top_function": kept[0][0] if kept else "UNKNOWN",
        "stack_hash": f"0x{fnv(key.encode()):016x}",
    }


BACKTRACES = {
    "bt_segv_3frames": (
        "mini_xml", "SEGV", [("lookup_entity", 49), ("parse_reference", 45), ("parse_content", 92)],
        """\
Core was generated by `./mini_xml crash-0001'.
Program terminated with signal SIGSEGV, Segmentation fault.
#0  0x0000555555555a31 in lookup_entity (p=0x7fffffffd9b0, name=0x5555555592a0) at mini_xml.c:49
#1  0x0000555555555c02 in parse_reference (p=0x7fffffffd9b0) at mini_xml.c:45
#2  0x0000555555555e77 in parse_content (p=0x7fffffffd9b0, depth=1) at mini_xml.c:92
""",
    ),
    "bt_abrt_denylisted": (
        "mini_png", "ABRT",
        [("raise", 0), ("abort", 0), ("png_alloc_rows", 63), ("png_handle_IDAT", 62),
         ("png_read_png", 1), ("main_trampoline", 0), ("__libc_start_main", 0)],
        """\
Program received signal SIGABRT, Aborted.
#0  0x00007ffff7e1e00b in raise () from /lib/x86_64-linux-gnu/libc.so.6
#1  0x00007ffff7dfd859 in abort () from /lib/x86_64-linux-gnu/libc.so.6
#2  0x0000555555556123 in png_alloc_rows (ihdr=0x7fffffffd8c0) at mini_png.c:63
#3  0x00005555555563a8 in png_handle_IDAT (p=0x7fffffffd8c0, len=12) at mini_png.c:62
#4  0x0000555555556801 in png_read_png (data=0x5555555592a0, n=57) at mini_png.c:1
#5  0x0000555555556a10 in main_trampoline (argc=2, argv=0x7fffffffdb08) at harness.c:0
#6  0x00007ffff7dff083 in __libc_start_main () from /lib/x86_64-linux-gnu/libc.so.6
""",
    ),
    "bt_unknown_frames": (
        "mini_wav", "FPE", [("??", 0), ("??", 0), ("wav_count_frames", 56), ("wav_read_data", 55)],
        """\
Program terminated with signal SIGFPE, Arithmetic exception.
#0  0x00007ffff7f2a1c4 in ?? ()
#1  0x00007ffff7f2a2e9 in ?? ()
#2  0x0000555555555d17 in wav_count_frames (fmt=0x7fffffffd900, size=16) at mini_wav.c:56
#3  0x0000555555555f3c in wav_read_data (w=0x7fffffffd900) at mini_wav.c:55
""",
    ),
    "bt_all_denylisted": (
        "libc", "ABRT", [("raise", 0), ("abort", 0), ("??", 0), ("__libc_start_main", 0)],
        """\
Program terminated with signal SIGABRT, Aborted.
#0  0x00007ffff7e1e00b in raise () from /lib/x86_64-linux-gnu/libc.so.6
#1  0x00007ffff7dfd859 in abort () from /lib/x86_64-linux-gnu/libc.so.6
#2  0x00007ffff7e1a1c4 in ?? ()
#3  0x00007ffff7dff083 in __libc_start_main () from /lib/x86_64-linux-gnu/libc.so.6
""",
    ),
    "bt_deep_recursion": (
        "mini_xml", "SEGV", [("parse_elem", 61)] + [("parse_content", 92), ("parse_elem", 64)] * 6,
        "Program terminated with signal SIGSEGV, Segmentation fault.\n"
        "#0  0x0000555555555b10 in parse_elem (p=0x7fffffffd9b0, depth=33) at mini_xml.c:61\n"
        + "".join(
            f"#{2 * i + 1}  0x0000555555555e{i:02x} in parse_content (p=0x7fffffffd9b0, depth={32 - i})"
            f" at mini_xml.c:92\n"
            f"#{2 * i + 2}  0x0000555555555b{i:02x} in parse_elem (p=0x7fffffffd9b0, depth={32 - i})"
            f" at mini_xml.c:64\n"
            for i in range(6)
        ),
    ),
    "bt_no_address": (
        "mini_wav", "SEGV", [("wav_decode_samples", 61), ("wav_read_data", 60), ("sf_open", 1)],
        """\
warning: core file may not match specified executable file.
Program terminated with signal SIGSEGV, Segmentation fault.
#0  wav_decode_samples (w=0x7fffffffd900, size=17) at src/mini_wav.c:61
#1  wav_read_data (w=0x7fffffffd900) at src/mini_wav.c:60
#2  0x0000555555555400 in sf_open (path=0x7fffffffe2b1 "crash.wav") at src/mini_wav.c:1
(gdb) quit
""",
    ),
}


def write_backtraces() -> None:
    for stem, (target, signal, frames, text) in BACKTRACES.items():
        (ROOT / f"{stem}.txt").write_text(text)
        (ROOT / f"{stem}.golden.json").write_text(json.dumps(golden(target, signal, frames), indent=2) + "\n")


# --- adversarial model outputs -------------------------------------------------

MAX_BYTES = 4096
XML = b'<doc id="1"><p>hi</p></doc>'
PNG4 = b"\x89PNG"


def seed(payload: bytes, enc: str = "raw", fence: str = "```", tag: str = "seed") -> str:
    if enc == "raw":
        body = payload.decode("utf-8")
        return f"{fence}{tag}\nencoding: raw\n{body}\n{fence}\n"
    if enc == "hex":
        return f"{fence}{tag}\nencoding: hex\n{payload.hex()}\n{fence}\n"
    return f"{fence}{tag}\nencoding: base64\n{base64.b64encode(payload).decode()}\n{fence}\n"


def remote_cases() -> list[tuple[str, str, list[bytes]]]:
    big = b"A" * (MAX_BYTES + 1)
    exact = bytes(range(256)) * (MAX_BYTES // 256)
    nested_body = "outer line\n```\ninner fence\n```\nafter"
    cases = [
        ("no_blocks", "I could not think of any inputs for this format, sorry.\n", []),
        ("empty_text", "", []),
        ("single_raw", "Here you go:\n\n" + seed(XML), [XML]),
        ("single_hex", seed(PNG4, "hex"), [PNG4]),
        ("single_base64", seed(PNG4, "base64"), [PNG4]),
        ("hex_upper_spaced", "```seed\nencoding: hex\n89 50 4E 47\n0D 0A\n```\n", [PNG4 + b"\r\n"]),
        ("base64_wrapped",
         "```seed\nencoding: base64\n" + "\n".join(
             base64.b64encode(bytes(range(60))).decode()[i:i + 20] for i in range(0, 80, 20))
         + "\n```\n", [bytes(range(60))]),
        ("bad_hex_odd", "```seed\nencoding: hex\n89504\n```\n", []),
        ("bad_hex_chars", "```seed\nencoding: hex\n89zz4e47\n```\n" + seed(XML), [XML]),
        ("bad_base64_chars", "```seed\nencoding: base64\niVBO*w==\n```\n", []),
        ("bad_base64_padding", "```seed\nencoding: base64\niVBORw=\n```\n", []),
        ("unknown_encoding", "```seed\nencoding: rot13\n<qbp/>\n```\n" + seed(PNG4, "hex"), [PNG4]),
        ("missing_header_raw", "```seed\n<doc/>\n```\n", [b"<doc/>"]),
        ("header_case_spacing", "```seed\n  Encoding :HEX  \n3c612f3e\n```\n", [b"<a/>"]),
        ("oversized_raw", seed(big), []),
        ("oversized_hex_then_good", seed(big, "hex") + seed(XML), [XML]),
        ("exact_limit_hex", seed(exact, "hex"), [exact]),
        ("empty_raw", "```seed\nencoding: raw\n```\n", []),
        ("empty_fence_pair", "```seed\n```\n", []),
        ("empty_hex_whitespace", "```seed\nencoding: hex\n   \n\n```\n", []),
        ("nested_fence_longer_outer", "````seed\n" + nested_body + "\n````\n",
         [nested_body.encode()]),
        ("seed_inside_text_block", "```text\n" + seed(XML) + "```\n", []),
        ("seed_inside_longer_text_block",
         "````markdown\n" + seed(XML) + "````\n" + seed(PNG4, "hex"), [PNG4]),
        ("unterminated_only", "```seed\nencoding: raw\n<doc>never closed</doc>\n", []),
        ("good_then_unterminated", seed(XML) + "\n```seed\nencoding: hex\n3c61\n", [XML]),
        ("tilde_fence", seed(XML, fence="~~~"), [XML]),
        ("tilde_not_closed_by_backticks", "~~~seed\n<doc/>\n```\n", []),
        ("backtick_not_closed_by_tildes", "```seed\n<doc/>\n~~~\n```\n", [b"<doc/>\n~~~"]),
        ("tag_with_info", "```seed mini_xml\n<doc/>\n```\n", [b"<doc/>"]),
        ("tag_seeds_plural", "```seeds\n<doc/>\n```\n", []),
        ("tag_uppercase", "```SEED\n<doc/>\n```\n", [b"<doc/>"]),
        ("python_then_seed", "```python\nprint('<doc/>')\n```\n" + seed(XML), [XML]),
        ("inline_backticks", "Use ```seed <doc/>``` as a guide.\n", []),
        ("indented_four_spaces", "    ```seed\n    <doc/>\n    ```\n", []),
        ("indented_two_spaces", "  ```seed\n<doc/>\n  ```\n", [b"<doc/>"]),
        ("crlf_line_endings", "```seed\r\nencoding: hex\r\n3c612f3e\r\n```\r\n", [b"<a/>"]),
        ("raw_trailing_spaces", "```seed\n<doc>  </doc>  \n```\n", [b"<doc>  </doc>  "]),
        ("raw_multiline", "```seed\n<doc>\n  <p>x</p>\n</doc>\n```\n", [b"<doc>\n  <p>x</p>\n</doc>"]),
        ("raw_utf8", "```seed\n<doc>héllo ☃</doc>\n```\n",
         ["<doc>héllo ☃</doc>".encode()]),
        ("ten_blocks", "".join(seed(f"<d{i}/>".encode()) for i in range(10)),
         [f"<d{i}/>".encode() for i in range(10)]),
        ("closing_fence_longer", "```seed\n<doc/>\n`````\n", [b"<doc/>"]),
        ("closing_fence_with_text", "```seed\n<doc/>\n``` trailing\n", []),
        ("hex_0x_prefix", "```seed\nencoding: hex\n0x3c612f3e\n```\n", []),
        ("base64_urlsafe", "```seed\nencoding: base64\n-_-_\n```\n", []),
        ("blocks_back_to_back", seed(XML).rstrip("\n") + "\n" + seed(PNG4, "base64"), [XML, PNG4]),
        ("repeated_header_line", "```seed\nencoding: hex\nencoding: hex\n3c61\n```\n", []),
        ("oversized_exact_plus_one_hex", seed(exact + b"!", "hex"), []),
        ("no_trailing_newline", "```seed\nencoding: hex\n3c612f3e\n```", [b"<a/>"]),
        ("markdown_chatter",
         "# Seeds\n\n1. A small document:\n\n" + seed(XML) + "\n- and a PNG prefix:\n\n"
         + seed(PNG4, "hex") + "\nHope this helps!\n", [XML, PNG4]),
        ("raw_with_tabs", "```seed\n<doc>\tA\t</doc>\n```\n", [b"<doc>\tA\t</doc>"]),
    ]
    return cases


def write_remote() -> None:
    d = ROOT / "remote"
    (d / "cases").mkdir(parents=True, exist_ok=True)
    cases = remote_cases()
    names = [n for n, _, _ in cases]
    assert len(cases) == 50 and len(set(names)) == 50, len(cases)
    expected = {}
    for i, (name, text, want) in enumerate(cases):
        fname = f"{i:02d}_{name}.txt"
        # newline="" keeps the CRLF case intact
        with open(d / "cases" / fname, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        expected[fname] = [w.hex() for w in want]
    (d / "expected.json").write_text(json.dumps({"max_input_bytes": MAX_BYTES, "cases": expected},
                                                indent=2) + "\n")
    # a recorded chat-completion body: raw, hex and base64 blocks; the last two decode identically
    content = ("Three seeds follow.\n\n" + seed(b"<a/>") + "\n" + seed(PNG4, "hex") + "\n"
               + seed(PNG4, "base64"))
    body = {
        "id": "chatcmpl-fixture",
        "object": "chat.completion",
        "model": "fixture-model",
        "choices": [{"index": 0, "finish_reason": "stop",
                     "message": {"role": "assistant", "content": content}}],
    }
    (d / "recorded_three_blocks.json").write_text(json.dumps(body, indent=2) + "\n")


if __name__ == "__main__":
    write_inputs()
    write_backtraces()
    write_remote()
    print(f"fixtures written under {ROOT}")
