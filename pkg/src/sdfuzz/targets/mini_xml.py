"""mini_xml: a small recursive-descent XML parser with three injected bugs.

Supported syntax: optional ``<?xml ...?>`` declaration, comments, a DOCTYPE
with an internal subset of ``<!ENTITY name "value">`` declarations, elements
with attributes, text, CDATA sections, predefined/character/declared entity
references.
"""

from __future__ import annotations

import re

from ..corpus import MemoryAccess, Signal
from .base import BugClass, CanarySpec, TargetProgram, TextField, Tracer

MAX_DEPTH = 32
ATTR_INLINE_SLOTS = 16
PREDEFINED = {b"lt", b"gt", b"amp", b"quot", b"apos"}

_WS = b" \t\r\n"
_NAME_START = frozenset(b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_:")
_NAME_CHARS = _NAME_START | frozenset(b"0123456789-.")

CANARIES = (
    CanarySpec(
        "XML001",
        "element nesting exhausts the fixed-size parser stack",
        "element depth exceeds 32",
        "xml.depth_gt_32",
        BugClass.BUFFER_OVERFLOW,
    ),
    CanarySpec(
        "XML002",
        "entity lookup dereferences the entity table before it is allocated",
        "non-predefined entity reference in a document with a DOCTYPE, before any <!ENTITY> declaration",
        "xml.entity_ref_before_decl",
        BugClass.NULL_DEREF,
    ),
    CanarySpec(
        "XML003",
        "attributes spilled past the inline slots skip the duplicate check",
        "more than 16 attributes on one element with a duplicated name",
        "xml.dup_attr_over_16",
        BugClass.LOGIC_ERROR,
    ),
)

FORMAT_DOC = """\
mini_xml accepts a single XML document encoded as bytes.
- Optional prolog: <?xml version="1.0"?>, comments <!-- ... -->, and
  <!DOCTYPE root [ <!ENTITY name "value"> ... ]> with an internal subset.
- Exactly one root element. Elements: <name attr="v" ...>content</name> or <name/>.
  End tags must match start tags. Attribute values use double or single quotes
  and may not contain '<'. Attribute names must be unique within an element.
- Content: text, child elements, comments, <![CDATA[...]]>, and references
  &lt; &gt; &amp; &quot; &apos; &#NN; or &name; for entities declared in the DOCTYPE.
- Names start with a letter, '_' or ':' and continue with letters, digits, '-', '.'.
"""


class _Parser:
    __slots__ = ("d", "i", "n", "t", "has_doctype", "entities")

    def __init__(self, data: bytes, t: Tracer) -> None:
        self.d = data
        self.i = 0
        self.n = len(data)
        self.t = t
        self.has_doctype = False
        self.entities: dict[bytes, bytes] | None = None

    def skip_ws(self) -> int:
        start = self.i
        d, n = self.d, self.n
        while self.i < n and d[self.i] in _WS:
            self.i += 1
        return self.i - start

    def name(self, site: int) -> bytes:
        d, start = self.d, self.i
        if start >= self.n or d[start] not in _NAME_START:
            self.t.fail(site, "expected a name")
        j = start + 1
        while j < self.n and d[j] in _NAME_CHARS:
            j += 1
        self.i = j
        return d[start:j]

    def expect(self, lit: bytes, site: int) -> None:
        if not self.d.startswith(lit, self.i):
            self.t.fail(site, f"expected {lit!r}")
        self.i += len(lit)

    def skip_misc(self) -> None:
        while True:
            self.skip_ws()
            if self.d.startswith(b"<!--", self.i):
                self.parse_comment()
            else:
                return

    def parse_document(self) -> None:
        t = self.t
        t.call("parse_document", 1)
        if self.d.startswith(b"<?xml", 0):
            t.hit(2)
            end = self.d.find(b"?>", 5)
            if end < 0:
                t.fail(3, "unterminated XML declaration")
            self.i = end + 2
        self.skip_misc()
        if self.d.startswith(b"<!DOCTYPE", self.i):
            t.hit(4)
            self.parse_doctype()
            self.skip_misc()
        if self.i >= self.n or self.d[self.i] != 0x3C:  # '<'
            t.fail(5, "no root element")
        self.parse_elem(1)
        self.skip_misc()
        if self.i != self.n:
            t.fail(6, "content after root element")
        t.hit(7)
        t.ret()

    def parse_comment(self) -> None:
        t = self.t
        t.call("parse_comment", 100)
        end = self.d.find(b"-->", self.i + 4)
        if end < 0:
            t.fail(101, "unterminated comment")
        if b"--" in self.d[self.i + 4 : end]:
            t.fail(102, "'--' inside comment")
        self.i = end + 3
        t.hit(103)
        t.ret()

    def parse_doctype(self) -> None:
        t = self.t
        t.call("parse_doctype", 10)
        self.has_doctype = True
        self.i += 9
        if not self.skip_ws():
            t.fail(11, "expected whitespace after DOCTYPE")
        self.name(12)
        self.skip_ws()
        if self.i < self.n and self.d[self.i] == 0x5B:  # '['
            t.hit(13)
            self.i += 1
            while True:
                self.skip_ws()
                if self.i >= self.n:
                    t.fail(18, "unterminated internal subset")
                if self.d[self.i] == 0x5D:  # ']'
                    t.hit(14)
                    self.i += 1
                    break
                if self.d.startswith(b"<!ENTITY", self.i):
                    t.hit(15)
                    self.parse_entity_decl()
                elif self.d.startswith(b"<!--", self.i):
                    t.hit(16)
                    self.parse_comment()
                else:
                    t.fail(17, "unexpected markup in internal subset")
            self.skip_ws()
        self.expect(b">", 19)
        t.ret()

    def parse_entity_decl(self) -> None:
        t = self.t
        t.call("parse_entity_decl", 20)
        self.i += 8
        if not self.skip_ws():
            t.fail(21, "expected whitespace after <!ENTITY")
        name = self.name(22)
        if not self.skip_ws():
            t.fail(23, "expected whitespace after entity name")
        if self.i >= self.n or self.d[self.i] not in b"\"'":
            t.fail(24, "expected quoted entity value")
        quote = self.d[self.i]
        self.i += 1
        start = self.i
        while True:
            if self.i >= self.n:
                t.fail(27, "unterminated entity value")
            c = self.d[self.i]
            if c == quote:
                break
            if c == 0x26:  # '&'
                t.hit(25)
                self.parse_reference()
            elif c == 0x3C:
                t.fail(26, "'<' in entity value")
            else:
                self.i += 1
        value = self.d[start : self.i]
        self.i += 1
        self.skip_ws()
        self.expect(b">", 28)
        if self.entities is None:
            t.hit(29)
            self.entities = {}
        if name in self.entities:
            t.hit(30)
        else:
            self.entities[name] = value
        t.ret()

    def parse_reference(self) -> None:
        t = self.t
        t.call("parse_reference", 40)
        self.i += 1
        if self.i < self.n and self.d[self.i] == 0x23:  # '#'
            t.hit(41)
            self.i += 1
            j = self.i
            while j < self.n and 0x30 <= self.d[j] <= 0x39:
                j += 1
            if j == self.i:
                t.fail(42, "empty character reference")
            self.i = j
            self.expect(b";", 43)
            t.ret()
            return
        name = self.name(44)
        self.expect(b";", 45)
        if name in PREDEFINED:
            t.hit(46)
        elif not self.has_doctype:
            t.fail(47, f"undefined entity {name.decode('latin-1')}")
        else:
            self.lookup_entity(name)
        t.ret()

    def lookup_entity(self, name: bytes) -> None:
        t = self.t
        t.call("lookup_entity", 48)
        if self.entities is None:
            t.trap(49, Signal.CANARY_TRAP, "XML002", MemoryAccess("read", "null"))
        if name not in self.entities:
            t.fail(50, f"undefined entity {name.decode('latin-1')}")
        t.hit(51)
        t.ret()

    def parse_elem(self, depth: int) -> None:
        t = self.t
        t.call("parse_elem", 60)
        if depth > MAX_DEPTH:
            t.trap(61, Signal.CANARY_TRAP, "XML001", MemoryAccess("write", "oob_stack"))
        self.i += 1
        tag = self.name(62)
        self.parse_attrs()
        if self.d.startswith(b"/>", self.i):
            t.hit(63)
            self.i += 2
            t.ret()
            return
        self.expect(b">", 64)
        self.parse_content(depth)
        self.i += 2
        end_tag = self.name(65)
        if end_tag != tag:
            t.fail(66, "mismatched end tag")
        self.skip_ws()
        self.expect(b">", 67)
        t.hit(68)
        t.ret()

    def parse_attrs(self) -> None:
        t = self.t
        t.call("parse_attrs", 70)
        names: list[bytes] = []
        spilled_dup = False
        while True:
            had_ws = self.skip_ws()
            if self.i >= self.n:
                t.fail(82, "unterminated start tag")
            c = self.d[self.i]
            if c == 0x2F or c == 0x3E:  # '/' '>'
                break
            if not had_ws:
                t.fail(71, "expected whitespace before attribute")
            name = self.name(72)
            self.skip_ws()
            self.expect(b"=", 73)
            self.skip_ws()
            if self.i >= self.n or self.d[self.i] not in b"\"'":
                t.fail(74, "expected quoted attribute value")
            quote = self.d[self.i]
            self.i += 1
            while True:
                if self.i >= self.n:
                    t.fail(77, "unterminated attribute value")
                c = self.d[self.i]
                if c == quote:
                    break
                if c == 0x26:
                    t.hit(75)
                    self.parse_reference()
                elif c == 0x3C:
                    t.fail(76, "'<' in attribute value")
                else:
                    self.i += 1
            self.i += 1
            if len(names) < ATTR_INLINE_SLOTS:
                t.hit(78)
                if name in names:
                    t.fail(79, "duplicate attribute")
            else:
                # spilled attributes are never compared with earlier names
                t.hit(80)
                if name in names:
                    spilled_dup = True
            names.append(name)
        if spilled_dup:
            t.trap(81, Signal.CANARY_TRAP, "XML003")
        t.ret()

    def parse_content(self, depth: int) -> None:
        t = self.t
        t.call("parse_content", 90)
        d, n = self.d, self.n
        while True:
            if self.i >= n:
                t.fail(91, "unclosed element")
            c = d[self.i]
            if c == 0x3C:
                if d.startswith(b"</", self.i):
                    t.hit(92)
                    break
                if d.startswith(b"<!--", self.i):
                    t.hit(93)
                    self.parse_comment()
                elif d.startswith(b"<![CDATA[", self.i):
                    t.hit(94)
                    end = d.find(b"]]>", self.i + 9)
                    if end < 0:
                        t.fail(95, "unterminated CDATA")
                    self.i = end + 3
                else:
                    t.hit(96)
                    self.parse_elem(depth + 1)
            elif c == 0x26:
                t.hit(97)
                self.parse_reference()
            else:
                t.hit(99)
                j = self.i + 1
                while j < n and d[j] != 0x3C and d[j] != 0x26:
                    j += 1
                self.i = j
        t.ret()


def parse(data: bytes, t: Tracer) -> None:
    _Parser(data, t).parse_document()


# --- format model --------------------------------------------------------

_ATTR_VALUE_RE = re.compile(rb"""=\s*(?:"([^"<&]*)"|'([^'<&]*)')""")
_MARKUP_RE = re.compile(
    rb"<!--.*?-->|<!DOCTYPE(?:[^\[>]*\[.*?\])?[^>]*>|<\?.*?\?>|<!\[CDATA\[|\]\]>|</[^<>]*>|<[^<>]*>|&[^;<&\s]{1,32};",
    re.S,
)
_ELEMENT_OPEN_RE = re.compile(rb"<([A-Za-z_:][A-Za-z0-9_:.\-]*)[^<>]*?(/?)>")


class XmlFormat:
    """Markup is protected; text runs and attribute values are mutable."""

    name = "mini_xml"
    keep_first_unit = True

    def mutable_spans(self, data: bytes) -> list[tuple[int, int]] | None:
        spans: list[tuple[int, int]] = []
        pos = 0
        for m in _MARKUP_RE.finditer(data):
            if b"<" in data[pos : m.start()]:
                return None
            spans.append((pos, m.start()))
            tok = m.group()
            if tok.startswith(b"<") and not tok.startswith((b"</", b"<!", b"<?")):
                for am in _ATTR_VALUE_RE.finditer(tok):
                    g = 1 if am.group(1) is not None else 2
                    spans.append((m.start() + am.start(g), m.start() + am.end(g)))
            pos = m.end()
        if b"<" in data[pos:]:
            return None
        spans.append((pos, len(data)))
        root = _root_range(data)
        if root is None:
            return None
        return [(s, e) for s, e in spans if root[0] < s and e < root[1]]

    def protected_spans(self, data: bytes) -> list[tuple[int, int]] | None:
        mutable = self.mutable_spans(data)
        if mutable is None:
            return None
        out = []
        pos = 0
        for s, e in sorted(mutable):
            if s > pos:
                out.append((pos, s))
            pos = max(pos, e)
        if pos < len(data):
            out.append((pos, len(data)))
        return out

    def fields(self, data: bytes) -> list[TextField]:
        spans = self.mutable_spans(data) or []
        return [TextField(s, e) for s, e in spans]

    def units(self, data: bytes) -> list[tuple[int, int]]:
        units = []
        for m in _ELEMENT_OPEN_RE.finditer(data):
            if m.group(2):
                units.append((m.start(), m.end()))
                continue
            end = _matching_close(data, m.start(), m.group(1))
            if end is not None:
                units.append((m.start(), end))
        return units

    def fixup(self, data: bytes) -> bytes:
        return data

    def skeleton(self) -> bytes:
        return b"<a></a>"

    def resample_text(self, rng) -> bytes:
        choice = rng.randrange(6)
        if choice == 0:
            return str(rng.choice((0, 1, -1, 255, 256, 65535, 2147483647, -2147483648))).encode()
        if choice == 1:
            return bytes([rng.choice(b"Ax0 ")]) * rng.randrange(1, 64)
        if choice == 2:
            return b""
        if choice == 3:
            return rng.choice((b"true", b"false", b"yes", b"1.0", b"utf-8", b"en"))
        alphabet = b"abcdefghijklmnopqrstuvwxyz0123456789 _-.,:;!?/=()"
        return bytes(rng.choice(alphabet) for _ in range(rng.randrange(1, 12)))


def _root_range(data: bytes) -> tuple[int, int] | None:
    body = 0
    dt = data.find(b"<!DOCTYPE")
    if dt >= 0:
        m = _MARKUP_RE.match(data, dt)
        body = m.end() if m else len(data)
    m = _ELEMENT_OPEN_RE.search(data, body)
    if m is None:
        return None
    if m.group(2):
        return m.start(), m.end()
    end = _matching_close(data, m.start(), m.group(1))
    return None if end is None else (m.start(), end)


def _matching_close(data: bytes, start: int, tag: bytes) -> int | None:
    depth = 0
    pattern = re.compile(rb"<(/?)" + re.escape(tag) + rb"(?=[\s/>])[^<>]*?(/?)>")
    for m in pattern.finditer(data, start):
        if m.group(1):
            depth -= 1
            if depth == 0:
                return m.end()
        elif not m.group(2):
            depth += 1
    return None


FORMAT_MODEL = XmlFormat()

TARGET = TargetProgram(
    name="mini_xml",
    block_count=104,
    canary_catalog=CANARIES,
    format_doc=FORMAT_DOC,
    shallow_threshold=5,
    entry=parse,
    format_model=FORMAT_MODEL,
)
