from __future__ import annotations

import random

import pytest

from rxnforge.augment import ReactionRecord
from rxnforge.chemgraph import canonical_smiles, parse_smiles
from rxnforge.templates import (
    EmbeddingBudgetExceeded,
    MappingError,
    NoReactionCenter,
    TemplateLibrary,
    TemplateSignature,
    apply_template,
    build_library,
    extract_template,
    find_embeddings,
    match_template,
    reaction_center_maps,
)

from oracles import oracle_embeddings
from synthchem import instantiate, make_schemas


def ester_record() -> ReactionRecord:
    acid = parse_smiles("[CH3:1][C:2](=[O:5])[OH:9]")
    alcohol = parse_smiles("[OH:3][CH2:4][CH3:6]")
    product = parse_smiles("[CH3:1][C:2](=[O:5])[O:3][CH2:4][CH3:6]")
    return ReactionRecord(
        product=product, reactants=(acid, alcohol), atom_mapped=True, source_id="e1"
    )


def test_reaction_center_manual_diff():
    # Manual graph diff: the C2-O3 bond is new, O3 loses a hydrogen, and C2
    # swaps its O9 neighbor for O3; everything else is untouched.
    record = ester_record()
    assert reaction_center_maps(record) == {2, 3}


def test_center_includes_environment_in_signature():
    record = ester_record()
    sig = extract_template(record, radius=1)
    pattern = parse_smiles(sig.product_pattern)
    # Center {C2, O3} plus radius-1 neighbors {C1, O5, C4} = 5 atoms.
    assert len(pattern.atoms) == 5


def test_identity_reaction_has_no_center():
    mol = parse_smiles("[CH3:1][OH:2]")
    record = ReactionRecord(
        product=mol, reactants=(parse_smiles("[CH3:1][OH:2]"),), atom_mapped=True
    )
    with pytest.raises(NoReactionCenter):
        extract_template(record)


def test_unmapped_reaction_rejected():
    record = ReactionRecord(
        product=parse_smiles("CCO"), reactants=(parse_smiles("CC=O"),)
    )
    with pytest.raises(MappingError):
        extract_template(record)


def test_duplicate_maps_rejected():
    record = ReactionRecord(
        product=parse_smiles("[CH3:1][CH3:1]"),
        reactants=(parse_smiles("[CH3:1][CH3:1]"),),
    )
    with pytest.raises(MappingError):
        extract_template(record)


def test_extraction_round_trip():
    record = ester_record()
    sig = extract_template(record, radius=1)
    outputs = apply_template(sig, record.product, "retro")
    assert record.reactants_key in outputs
    assert match_template(record, sig)


def test_signature_deterministic_and_label_invariant():
    rng = random.Random(5)
    seen, _ = make_schemas()
    schema = seen[0]
    texts = {
        extract_template(instantiate(schema, rng, f"d{k}"), 1).text
        for k in range(4)
    }
    assert len(texts) == 1


def test_build_library_counts():
    rng = random.Random(11)
    seen, _ = make_schemas()
    records = [instantiate(seen[0], rng, f"c{k}") for k in range(10)]
    library, report = build_library(records, radius=1, min_count=5)
    assert report.extracted == 10
    assert len(library.counts) == 1
    ((sig, count),) = library.entries()
    assert count == 10
    assert library.frozen() == [(sig, 10)]


def test_min_count_is_strict():
    # Exactly min_count occurrences are excluded: strictly more required.
    rng = random.Random(12)
    seen, _ = make_schemas()
    records = [instantiate(seen[1], rng, f"s{k}") for k in range(5)]
    library, _ = build_library(records, radius=1, min_count=5)
    assert library.entries()[0][1] == 5
    assert library.frozen() == []


def test_min_count_zero_keeps_all():
    rng = random.Random(13)
    seen, rare = make_schemas()
    records = [instantiate(s, rng, s.name) for s in (seen[0], seen[1], rare[0])]
    library, _ = build_library(records, radius=1, min_count=0)
    assert len(library.frozen()) == 3


def test_build_library_skips_bad_records():
    good = ester_record()
    bad = ReactionRecord(
        product=parse_smiles("CCO"), reactants=(parse_smiles("CC=O"),)
    )
    library, report = build_library([good, bad], radius=1, min_count=0)
    assert report.extracted == 1
    assert report.skipped == {"MappingError": 1}
    with pytest.raises(ValueError):
        build_library([], radius=1, min_count=0)


def test_library_monotone_under_added_corpus():
    rng = random.Random(14)
    seen, _ = make_schemas()
    base = [instantiate(seen[0], rng, f"a{k}") for k in range(6)]
    extra = [instantiate(seen[1], rng, f"b{k}") for k in range(7)]
    lib_small, _ = build_library(base, radius=1, min_count=5)
    lib_big, _ = build_library(base + extra, radius=1, min_count=5)
    small_frozen = {sig.text for sig, _ in lib_small.frozen()}
    big_frozen = {sig.text for sig, _ in lib_big.frozen()}
    assert small_frozen <= big_frozen


def test_match_rejects_wrong_leaving_group():
    record = ester_record()
    sig = extract_template(record, radius=1)
    # Same product, but the true reactants used a thio-acid: the product
    # pattern still embeds while application output differs.
    thio_acid = parse_smiles("[CH3:1][C:2](=[O:5])[SH:9]")
    near_miss = ReactionRecord(
        product=record.product,
        reactants=(thio_acid, parse_smiles("[OH:3][CH2:4][CH3:6]")),
        atom_mapped=True,
    )
    pattern = parse_smiles(sig.product_pattern)
    assert oracle_embeddings(pattern, record.product.strip_atom_maps())
    assert not match_template(near_miss, sig)


def test_match_no_embedding_is_false():
    record = ester_record()
    sig = extract_template(record, radius=1)
    other = ReactionRecord(
        product=parse_smiles("c1ccccc1"), reactants=(parse_smiles("C"),)
    )
    assert not match_template(other, sig)


def test_apply_zero_embeddings_empty():
    record = ester_record()
    sig = extract_template(record, radius=1)
    assert apply_template(sig, parse_smiles("CCCC"), "retro") == []


def test_apply_symmetric_product_dedupes():
    # Symmetric diester: two embeddings of the ester pattern; the brute-force
    # embedding oracle pins the count, application dedupes canonical outputs.
    record = ester_record()
    sig = extract_template(record, radius=1)
    diester = parse_smiles("COC(=O)C(=O)OC")
    pattern = parse_smiles(sig.product_pattern)
    assert len(oracle_embeddings(pattern, diester)) == 2
    outputs = apply_template(sig, diester, "retro")
    assert 1 <= len(outputs) <= 2


def test_apply_forward_generalizes():
    record = ester_record()
    sig = extract_template(record, radius=1)
    outputs = apply_template(sig, parse_smiles("CCCC(=O)O.OC(C)C"), "forward")
    assert outputs == [canonical_smiles("CCCC(=O)OC(C)C")]


def test_apply_generated_reactions_always_match():
    rng = random.Random(21)
    seen, rare = make_schemas()
    for schema in [seen[0], seen[5], seen[29], rare[0], rare[7]]:
        record = instantiate(schema, rng, schema.name)
        sig = extract_template(record, 1)
        reactant_graph = parse_smiles(record.reactants_key)
        for product_out in apply_template(sig, reactant_graph, "forward"):
            generated = ReactionRecord(
                product=parse_smiles(product_out),
                reactants=tuple(reactant_graph.components()),
            )
            assert match_template(generated, sig)


def test_find_embeddings_matches_bruteforce():
    cases = [
        ("CC", "CCC"),
        ("C=O", "CC(=O)OC"),
        ("c1ccccc1", "Cc1ccccc1"),
        ("CO", "OCCO"),
        ("CC(=O)O", "CC(=O)OC"),
        ("C.O", "CCO.OC"),
    ]
    for pattern_s, target_s in cases:
        pattern = parse_smiles(pattern_s)
        target = parse_smiles(target_s)
        mine = find_embeddings(pattern, target)
        theirs = oracle_embeddings(pattern, target)
        key = lambda e: tuple(sorted(e.items()))
        assert sorted(map(key, mine)) == sorted(map(key, theirs)), (
            pattern_s,
            target_s,
        )


def test_embedding_budget():
    pattern = parse_smiles("CCCCCCCC")
    target = parse_smiles("C" * 40)
    with pytest.raises(EmbeddingBudgetExceeded):
        find_embeddings(pattern, target, budget=50)


def test_library_file_round_trip(tmp_path):
    rng = random.Random(31)
    seen, rare = make_schemas()
    records = []
    for schema in (seen[0], seen[1], rare[0]):
        records.extend(instantiate(schema, rng, f"{schema.name}-{k}") for k in range(3))
    library, _ = build_library(records, radius=1, min_count=0)
    path = tmp_path / "library.tsv"
    library.save(path)
    text_a = path.read_text()
    library.save(path)
    assert path.read_text() == text_a  # bit-exact rewrite

    loaded = TemplateLibrary.load(path, radius=1, min_count=0)
    assert loaded.counts == library.counts
    # Descending count, then signature text.
    counts = [c for _, c in loaded.entries()]
    assert counts == sorted(counts, reverse=True)


def test_signature_from_text_round_trip():
    record = ester_record()
    sig = extract_template(record, radius=1)
    again = TemplateSignature.from_text(sig.text, radius=1)
    assert again.text == sig.text
