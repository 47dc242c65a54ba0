from __future__ import annotations

import random

import pytest

from rxnforge.chemgraph import parse_smiles
from rxnforge.filterproc import (
    CandidateReaction,
    FilterAborted,
    FilterConfig,
    FilterDecision,
    filter_reactions,
    read_candidates,
    read_decision_log,
    retention_report,
    write_candidates,
    write_decision_log,
)
from rxnforge.fingerprint import fingerprint_set, tanimoto
from rxnforge.generator import (
    AdapterTransportError,
    GenerationCandidate,
    Generator,
)
from rxnforge.templates import build_library

from synthchem import instantiate, make_schemas


class ScriptedGenerator(Generator):
    """Returns a predetermined pseudo output (or nothing) per query."""

    def __init__(self, script: dict[str, str | None]):
        self.script = script

    def generate_batch(self, inputs, direction, k):
        out = []
        for query in inputs:
            answer = self.script.get(query)
            if answer is None:
                out.append([])
            else:
                out.append([GenerationCandidate(answer, 0.0, 1)])
        return out


class FailingGenerator(Generator):
    def generate_batch(self, inputs, direction, k):
        raise AdapterTransportError("endpoint unreachable")


def _tc(smiles_a: str, smiles_b: str) -> float:
    fa = fingerprint_set(parse_smiles(smiles_a).components())
    fb = fingerprint_set(parse_smiles(smiles_b).components())
    return tanimoto(fa, fb)


@pytest.fixture(scope="module")
def planted():
    """100 candidates: 60 template-matching, 20 round-trip identical
    (Tc=1.0), 5 round-trip similar (0.55 <= Tc < 1.0), 10 round-trip far
    (Tc < 0.55), 5 with an empty pseudo result."""
    rng = random.Random(555)
    seen, rare = make_schemas()
    lib_records = []
    for schema in seen[:6]:
        lib_records.extend(
            instantiate(schema, rng, f"L-{schema.name}-{k}") for k in range(10)
        )
    library, _ = build_library(lib_records, radius=1, min_count=5)
    assert len(library.frozen()) == 6

    candidates = []
    script: dict[str, str | None] = {}
    used_keys: set = set()

    def unique(schema, name):
        while True:
            record = instantiate(schema, rng, name)
            if record.reaction_key not in used_keys:
                used_keys.add(record.reaction_key)
                return record

    matching = [unique(seen[k % 6], f"M{k}") for k in range(60)]
    for i, record in enumerate(matching):
        candidates.append(
            CandidateReaction(
                f"m{i:02d}", record.product_key, record.reactants_key, "product"
            )
        )

    similar = [unique(rare[k % 20], f"S{k}") for k in range(25)]
    for i, record in enumerate(similar):
        cid = f"s{i:02d}"
        candidates.append(
            CandidateReaction(
                cid, record.product_key, record.reactants_key, "product"
            )
        )
        if i < 20:
            script[record.product_key] = record.reactants_key  # Tc = 1.0
        else:
            # Perturbed pseudo reactants: similar but not identical.
            perturbed = record.reactants_key + ".C"
            tc = _tc(perturbed, record.reactants_key)
            assert 0.55 <= tc < 1.0, tc
            script[record.product_key] = perturbed

    far = [unique(rare[k % 20], f"F{k}") for k in range(15)]
    for i, record in enumerate(far):
        cid = f"f{i:02d}"
        candidates.append(
            CandidateReaction(
                cid, record.product_key, record.reactants_key, "product"
            )
        )
        if i < 10:
            pseudo = "C1CC1.C1CC1"
            tc = _tc(pseudo, record.reactants_key)
            assert tc < 0.55, tc
            script[record.product_key] = pseudo
        else:
            script[record.product_key] = None  # empty pseudo result

    return {
        "library": library,
        "candidates": candidates,
        "script": script,
        "tc1_ids": {f"s{i:02d}" for i in range(20)},
    }


def _run(planted, threshold):
    return filter_reactions(
        planted["candidates"],
        planted["library"],
        ScriptedGenerator(planted["script"]),
        FilterConfig(similarity_threshold=threshold),
    )


def test_planted_ledger(planted):
    kept, decisions = _run(planted, 0.55)
    assert len(decisions) == 100
    assert [d.reaction_id for d in decisions] == [
        c.id for c in planted["candidates"]
    ]
    by_stage: dict[str, int] = {}
    for d in decisions:
        by_stage[d.stage] = by_stage.get(d.stage, 0) + 1
    assert by_stage == {
        "template_match": 60,
        "similarity_pass": 25,
        "similarity_fail": 15,
    }
    assert len(kept) == 85
    report = retention_report(decisions)
    assert report.kept == 85
    assert report.kept_fraction == pytest.approx(0.85)
    assert "0.850000" in report.format()


def test_decision_shape_invariants(planted):
    _, decisions = _run(planted, 0.55)
    for d in decisions:
        assert (d.verdict == "kept") == (
            d.stage in ("template_match", "similarity_pass")
        )
        assert (d.similarity is not None) == (
            d.stage in ("similarity_pass", "similarity_fail")
        )
        if d.stage == "template_match":
            assert d.matched_template is not None
        if d.stage == "similarity_pass":
            assert d.similarity >= 0.55


def test_threshold_one_keeps_template_and_identity_only(planted):
    kept, decisions = _run(planted, 1.0)
    kept_ids = {
        d.reaction_id for d in decisions if d.verdict == "kept"
    }
    expected = {f"m{i:02d}" for i in range(60)} | planted["tc1_ids"]
    assert kept_ids == expected
    assert len(kept) == 80


def test_threshold_monotone(planted):
    previous: set[str] | None = None
    for threshold in (1.0, 0.9, 0.55, 0.0):
        _, decisions = _run(planted, threshold)
        kept_ids = {d.reaction_id for d in decisions if d.verdict == "kept"}
        if previous is not None:
            assert previous <= kept_ids
        previous = kept_ids


def test_empty_pseudo_is_similarity_fail_zero(planted):
    _, decisions = _run(planted, 0.0)
    empties = [d for d in decisions if d.reaction_id in {"f10", "f11", "f12", "f13", "f14"}]
    assert len(empties) == 5
    for d in empties:
        assert d.verdict == "dropped"
        assert d.stage == "similarity_fail"
        assert d.similarity == 0.0
        assert d.pseudo_output is None


def test_library_growth_never_shrinks_kept(planted):
    from rxnforge.templates import TemplateLibrary

    rng = random.Random(99)
    _, rare = make_schemas()
    extra = [instantiate(rare[k % 20], rng, f"X{k}") for k in range(6 * 20)]
    rare_library, _ = build_library(extra, radius=1, min_count=5)
    merged = TemplateLibrary(
        radius=1,
        min_count=5,
        counts=dict(planted["library"].counts),
        signatures=dict(planted["library"].signatures),
    )
    for sig, count in rare_library.entries():
        merged.add(sig, count)
    kept_small_ids = {
        d.reaction_id for d in _run(planted, 0.55)[1] if d.verdict == "kept"
    }
    _, decisions_big = filter_reactions(
        planted["candidates"],
        merged,
        ScriptedGenerator(planted["script"]),
        FilterConfig(similarity_threshold=0.55),
    )
    kept_big_ids = {d.reaction_id for d in decisions_big if d.verdict == "kept"}
    assert kept_small_ids <= kept_big_ids


def test_validity_stage_drops_garbage(planted):
    candidates = [
        CandidateReaction("bad1", "C((C", "CCO", "product"),
        CandidateReaction("bad2", "CCO", "C1CC", "reactants"),
        CandidateReaction("bad3", "CCO.CC", "CC", "product"),  # two products
    ]
    kept, decisions = filter_reactions(
        candidates, planted["library"], ScriptedGenerator({}), FilterConfig()
    )
    assert kept == []
    assert all(d.stage == "validity" and d.verdict == "dropped" for d in decisions)


def test_duplicates_deduplicated_after_filtering(planted):
    record_candidates = planted["candidates"][:1] * 3
    kept, decisions = filter_reactions(
        record_candidates,
        planted["library"],
        ScriptedGenerator(planted["script"]),
        FilterConfig(),
    )
    assert len(decisions) == 3
    assert all(d.verdict == "kept" for d in decisions)
    assert len(kept) == 1


def test_transport_failure_flushes_partial(planted):
    candidates = planted["candidates"][:62]  # 60 matching + 2 needing stage 2
    with pytest.raises(FilterAborted) as exc:
        filter_reactions(
            candidates, planted["library"], FailingGenerator(), FilterConfig()
        )
    assert len(exc.value.decisions) == 60
    assert all(d.stage == "template_match" for d in exc.value.decisions)


def test_retention_report_empty():
    report = retention_report([])
    assert report.total == 0
    assert report.kept_fraction is None
    assert report.stage_fractions() == {}
    assert "candidates\t0" in report.format()


def test_retention_all_matching():
    decisions = [
        FilterDecision(f"x{i}", "kept", "template_match", matched_template="t")
        for i in range(5)
    ]
    report = retention_report(decisions)
    assert report.kept_fraction == 1.0


def test_candidates_file_round_trip(tmp_path, planted):
    path = tmp_path / "candidates.tsv"
    write_candidates(path, planted["candidates"])
    again = read_candidates(path)
    assert again == planted["candidates"]


def test_decision_log_round_trip(tmp_path, planted):
    _, decisions = _run(planted, 0.55)
    path = tmp_path / "decisions.tsv"
    write_decision_log(path, decisions)
    text_a = path.read_text()
    write_decision_log(path, decisions)
    assert path.read_text() == text_a
    again = read_decision_log(path)
    assert [d.reaction_id for d in again] == [d.reaction_id for d in decisions]
    for a, b in zip(again, decisions):
        assert a.verdict == b.verdict and a.stage == b.stage
        if b.similarity is not None:
            assert a.similarity == pytest.approx(b.similarity, abs=1e-6)
