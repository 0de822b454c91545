"""Chat-completion backend: prompt rendering, HTTP with retry, seed-block extraction."""

from __future__ import annotations

import base64
import binascii
import json
import logging
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import requests

from ..corpus import DEFAULT_MAX_INPUT_BYTES
from ..errors import GeneratorConfigError, GeneratorEmpty
from ..feedback import render_prompt
from .base import Backend, GeneratorRequest, GeneratorResponse

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

_FENCE_OPEN = re.compile(r"^ {0,3}(?P<fence>`{3,}|~{3,})[ \t]*(?P<info>[^\n]*?)[ \t]*$")
_HEADER = re.compile(r"^\s*encoding\s*:\s*(?P<enc>\S+)\s*$", re.IGNORECASE)
_ENCODINGS = ("raw", "hex", "base64")


@dataclass(frozen=True)
class Extraction:
    candidates: tuple[bytes, ...]
    warnings: tuple[str, ...] = ()


def _decode_block(lines: list[str]) -> bytes:
    """Decode one block body; raises ValueError when it is malformed."""
    if lines and _HEADER.match(lines[0]):
        enc = _HEADER.match(lines[0]).group("enc").lower()
        body = lines[1:]
    else:
        enc, body = "raw", lines
    if enc not in _ENCODINGS:
        raise ValueError(f"unknown encoding {enc!r}")
    text = "\n".join(body)
    if enc == "raw":
        return text.encode("utf-8")
    compact = re.sub(r"\s+", "", text)
    if enc == "hex":
        try:
            return bytes.fromhex(compact)
        except ValueError:
            raise ValueError("invalid hex payload") from None
    try:
        return base64.b64decode(compact, validate=True)
    except binascii.Error:
        raise ValueError("invalid base64 payload") from None


def extract_candidates(text: str, max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES) -> Extraction:
    """Pull every fenced block tagged ``seed`` out of free-form model output.

    Fences follow the usual Markdown rules: a block opened by N backticks (or
    tildes) closes at a line of at least N of the same character, so longer
    fences can wrap payloads that themselves contain fences. Blocks with other
    tags are skipped over, unterminated blocks are dropped, and so are empty,
    oversized or undecodable payloads. Never raises.
    """
    lines = text.splitlines()
    out: list[bytes] = []
    warnings: list[str] = []
    i = 0
    while i < len(lines):
        m = _FENCE_OPEN.match(lines[i])
        if m is None or (m.group("fence")[0] == "`" and "`" in m.group("info")):
            i += 1
            continue
        fence, info = m.group("fence"), m.group("info")
        tag = info.split()[0].lower() if info.split() else ""
        close = re.compile(r"^ {0,3}" + re.escape(fence[0]) + "{" + str(len(fence)) + r",}[ \t]*$")
        j = i + 1
        while j < len(lines) and not close.match(lines[j]):
            j += 1
        if j >= len(lines):
            if tag == "seed":
                warnings.append(f"line {i + 1}: unterminated seed block skipped")
            break
        if tag == "seed":
            try:
                payload = _decode_block(lines[i + 1 : j])
            except ValueError as exc:
                warnings.append(f"line {i + 1}: malformed seed block skipped ({exc})")
            else:
                if not payload:
                    warnings.append(f"line {i + 1}: empty seed block skipped")
                elif len(payload) > max_input_bytes:
                    warnings.append(
                        f"line {i + 1}: seed of {len(payload)} bytes exceeds {max_input_bytes}"
                    )
                else:
                    out.append(payload)
        i = j + 1
    for w in warnings:
        log.warning("seed extraction: %s", w)
    return Extraction(tuple(out), tuple(warnings))


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    auth_env_var: str = "SDFUZZ_API_KEY"
    timeout_s: float = 60.0
    retry_max: int = 3
    num_seeds: int = 16
    diversity: float = 0.5
    extra_headers: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EndpointConfig:
        missing = [k for k in ("base_url", "model") if k not in d]
        if missing:
            raise GeneratorConfigError(f"endpoint config missing {', '.join(missing)}")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise GeneratorConfigError(f"unknown endpoint config keys: {', '.join(unknown)}")
        return cls(**d)


def load_endpoint_config(path: str | os.PathLike[str]) -> EndpointConfig:
    """Read a JSON or TOML endpoint config (chosen by file extension)."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise GeneratorConfigError(f"cannot read endpoint config {p}: {exc.strerror}") from exc
    try:
        if p.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise GeneratorConfigError(f"cannot parse endpoint config {p}: {exc}") from exc
    return EndpointConfig.from_dict(data)


def _completion_text(body: Any) -> str:
    try:
        return body["choices"][0]["message"]["content"] or ""
    except (KeyError, IndexError, TypeError):
        return ""


def generate_remote(
    request: GeneratorRequest,
    config: EndpointConfig,
    *,
    max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES,
    session: requests.Session | None = None,
    sleep: Callable[[float], None] = time.sleep,
    backoff_s: float = 0.5,
) -> GeneratorResponse:
    """One chat-completion request per call, retried on transport failure or empty output."""
    token = os.environ.get(config.auth_env_var)
    if not token:
        raise GeneratorConfigError(f"environment variable {config.auth_env_var} is not set")
    system, user = render_prompt(request.context)
    payload = {
        "model": config.model,
        "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
        "temperature": request.diversity,
    }
    headers = {"Authorization": f"Bearer {token}", **config.extra_headers}
    url = config.base_url.rstrip("/") + "/chat/completions"
    http = session or requests.Session()
    transcript: list[str] = []
    last_error = "no candidates in response"
    t0 = time.monotonic()
    for attempt in range(config.retry_max + 1):
        if attempt:
            sleep(backoff_s * 2 ** (attempt - 1))
        try:
            resp = http.post(url, json=payload, headers=headers, timeout=config.timeout_s)
        except requests.RequestException as exc:
            last_error = f"transport error: {exc}"
            log.warning("generator attempt %d failed: %s", attempt + 1, last_error)
            continue
        if resp.status_code in (401, 403):
            raise GeneratorConfigError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            last_error = f"HTTP {resp.status_code}"
            log.warning("generator attempt %d failed: %s", attempt + 1, last_error)
            continue
        try:
            text = _completion_text(resp.json())
        except ValueError:
            text = ""
        transcript.append(text)
        found = extract_candidates(text, max_input_bytes).candidates
        if found:
            return GeneratorResponse(
                candidates=found[: request.num_seeds],
                backend=Backend.REMOTE,
                raw_transcript="\n\n".join(transcript),
                latency_ms=int((time.monotonic() - t0) * 1000),
            )
        last_error = "no candidates in response"
    raise GeneratorEmpty(f"no seed candidates after {config.retry_max + 1} attempts ({last_error})",
                         transcript="\n\n".join(transcript))
