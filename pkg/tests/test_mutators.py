import random

import pytest

from conftest import SEEDS
from sdfuzz.errors import ContractError
from sdfuzz.mutators import (
    STRUCT_KINDS,
    CountingRandom,
    MutationKind,
    apply_op,
    mutate,
    mutate_with_ops,
)
from sdfuzz.targets import Status, get_target, run_target
from sdfuzz.targets.mini_png import MAGIC
from sdfuzz.targets.mini_png import walk_chunks as png_chunks
from sdfuzz.targets.mini_wav import walk_chunks as wav_chunks


def seed_of(name: str) -> bytes:
    return next((SEEDS / name).iterdir()).read_bytes()


def test_cardinality_and_difference():
    rng = random.Random(0)
    for name in ("mini_xml", "mini_png", "mini_wav"):
        data = seed_of(name)
        for model in (get_target(name).format_model, None):
            outs = mutate(data, model, 5, rng)
            assert len(outs) == 5
            assert all(o != data and o for o in outs)


def test_op_budget_must_be_positive():
    with pytest.raises(ContractError):
        mutate(b"abc", None, 0, random.Random(0))


def test_half_structural_with_model():
    rng = CountingRandom(1)
    ops = mutate_with_ops(seed_of("mini_xml"), get_target("mini_xml").format_model, 40, rng)
    assert sum(op.kind.structural for _, op in ops) >= 20
    assert all(op.rng_draws > 0 for _, op in ops)
    plain = mutate_with_ops(seed_of("mini_xml"), None, 40, rng)
    assert not any(op.kind.structural for _, op in plain)


def test_empty_payload_grows():
    rng = random.Random(2)
    xml = get_target("mini_xml").format_model
    grown = mutate(b"", xml, 3, rng)
    assert len(grown) == 3 and all(grown)
    assert all(len(o) >= 1 for o in mutate(b"", None, 3, rng))


def test_png_field_resample_keeps_magic():
    model = get_target("mini_png").format_model
    data = seed_of("mini_png")
    rng = random.Random(5)
    for _ in range(300):
        out = apply_op(MutationKind.STRUCT_FIELD_RESAMPLE, data, rng, model)
        assert out is not None and out[:8] == MAGIC


def _markup(model, data):
    spans = model.protected_spans(data)
    return None if spans is None else b"".join(data[s:e] for s, e in spans)


def test_struct_kinds_preserve_protected_structure():
    rng = random.Random(6)
    xml = get_target("mini_xml").format_model
    doc = seed_of("mini_xml")
    for i in range(500):
        out = apply_op(STRUCT_KINDS[i % 2], doc, rng, xml)
        assert _markup(xml, out) == _markup(xml, doc)
    for name, walk in (("mini_png", png_chunks), ("mini_wav", wav_chunks)):
        model = get_target(name).format_model
        data = seed_of(name)
        types = [c for _, _, c in walk(data)]
        for i in range(500):
            out = apply_op(STRUCT_KINDS[i % 2], data, rng, model)
            assert out[:4] == data[:4]
            chunks = walk(out)
            # length fields stay consistent with their payloads
            assert chunks is not None and [c for _, _, c in chunks] == types


def test_unit_ops_fix_lengths():
    rng = random.Random(7)
    for name, walk in (("mini_png", png_chunks), ("mini_wav", wav_chunks)):
        model = get_target(name).format_model
        data = seed_of(name)
        for kind in (MutationKind.BLOCK_DELETE, MutationKind.BLOCK_DUPLICATE):
            for _ in range(50):
                out = apply_op(kind, data, rng, model)
                assert walk(out) is not None


def _ok_rate(outputs, target) -> float:
    return sum(run_target(target, o).status is Status.OK for o in outputs) / len(outputs)


def test_keyword_preserving_well_formedness():
    t = get_target("mini_xml")
    struct_rng, byte_rng = random.Random(8), random.Random(8)
    struct = [apply_op(MutationKind.STRUCT_KEYWORD_PRESERVING, b"<a></a>", struct_rng, t.format_model)
              for _ in range(1000)]
    byte = mutate(b"<a></a>", None, 1000, byte_rng)
    s, b = _ok_rate(struct, t), _ok_rate(byte, t)
    print(f"well-formed: keyword-preserving {s:.3f}, byte-level {b:.3f}")
    assert s >= 0.80 and s > b


def test_structure_aware_beats_byte_level_on_xml():
    t = get_target("mini_xml")
    doc = seed_of("mini_xml")
    with_model = [mutate(doc, t.format_model, 1, random.Random(i))[0] for i in range(1000)]
    without = [mutate(doc, None, 1, random.Random(i))[0] for i in range(1000)]
    assert _ok_rate(with_model, t) > _ok_rate(without, t)


def test_max_input_bytes_respected():
    rng = random.Random(9)
    outs = mutate(b"A" * 60, None, 200, rng, splice_pool=[b"B" * 60], max_input_bytes=64)
    assert all(0 < len(o) <= 64 for o in outs)


def test_counting_random_counts():
    rng = CountingRandom(1)
    rng.random()
    rng.randrange(10)
    assert rng.draws >= 2


def test_mutation_is_deterministic():
    model = get_target("mini_png").format_model
    a = mutate(seed_of("mini_png"), model, 20, random.Random(11))
    b = mutate(seed_of("mini_png"), model, 20, random.Random(11))
    assert a == b
