from __future__ import annotations

import hashlib
import random

import pytest

from rxnforge.chemgraph import parse_smiles, write_smiles
from rxnforge.fingerprint import (
    HASH_KEY,
    FingerprintBitset,
    fingerprint,
    fingerprint_set,
    tanimoto,
)


def _independent_hash(payload: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(payload.encode(), digest_size=8, key=HASH_KEY).digest(), "big"
    )


def test_traversal_invariance():
    a = fingerprint(parse_smiles("CC(=O)OCC"))
    b = fingerprint(parse_smiles("CCOC(C)=O"))
    assert a == b


def test_radius0_ethanol_bits():
    # Hand-enumerated radius-0 environments of CCO: terminal C (degree 1),
    # middle C (degree 2), O (degree 1).
    mol = parse_smiles("CCO")
    fp = fingerprint(mol, radius=0, length=2048)
    expected = {
        _independent_hash("a|C|0|1|0") % 2048,
        _independent_hash("a|C|0|2|0") % 2048,
        _independent_hash("a|O|0|1|0") % 2048,
    }
    assert set(fp.bit_indices()) == expected
    assert len(expected) == 3


def test_component_union():
    combined = fingerprint(parse_smiles("CCO.Cl"))
    parts = fingerprint(parse_smiles("CCO")).union(fingerprint(parse_smiles("Cl")))
    assert combined == parts


def test_union_monotone():
    base = fingerprint(parse_smiles("CCO"))
    extended = fingerprint(parse_smiles("CCO.N"))
    assert base.bits & extended.bits == base.bits


def test_set_fingerprint_order_invariant():
    mols = [parse_smiles(s) for s in ["CCO", "c1ccccc1", "CC(=O)O"]]
    forward = fingerprint_set(mols)
    backward = fingerprint_set(list(reversed(mols)))
    assert forward == backward


def test_atom_maps_excluded():
    assert fingerprint(parse_smiles("[CH3:7][OH:2]")) == fingerprint(
        parse_smiles("CO")
    )


def test_parameter_validation():
    mol = parse_smiles("C")
    with pytest.raises(ValueError):
        fingerprint(mol, radius=-1)
    with pytest.raises(ValueError):
        fingerprint(mol, length=100)
    with pytest.raises(ValueError):
        fingerprint(mol, length=32)
    with pytest.raises(ValueError):
        fingerprint_set([])


def test_tanimoto_basics():
    f = fingerprint(parse_smiles("CCO"))
    assert tanimoto(f, f) == 1.0
    a = FingerprintBitset(0b0011, 64, 2)
    b = FingerprintBitset(0b1100, 64, 2)
    assert tanimoto(a, b) == 0.0
    empty = FingerprintBitset(0, 64, 2)
    assert tanimoto(empty, empty) == 1.0


def test_tanimoto_worked_example():
    # |a AND b| = 3, |a OR b| = 7 -> 3/7.
    a = FingerprintBitset(0b0011111, 64, 2)
    b = FingerprintBitset(0b1111100, 64, 2)
    assert (a.bits & b.bits).bit_count() == 3
    assert (a.bits | b.bits).bit_count() == 7
    assert tanimoto(a, b) == pytest.approx(3 / 7)


def test_tanimoto_mismatched_parameters():
    a = FingerprintBitset(1, 128, 2)
    with pytest.raises(ValueError):
        tanimoto(a, FingerprintBitset(1, 256, 2))
    with pytest.raises(ValueError):
        tanimoto(a, FingerprintBitset(1, 128, 3))


def test_tanimoto_axioms_random_bitsets():
    rng = random.Random(1234)
    for _ in range(2000):
        a = FingerprintBitset(rng.getrandbits(256), 256, 2)
        b = FingerprintBitset(rng.getrandbits(256), 256, 2)
        t = tanimoto(a, b)
        assert 0.0 <= t <= 1.0
        assert t == tanimoto(b, a)
        assert tanimoto(a, a) == 1.0


def test_smiles_form_invariance():
    rng = random.Random(99)
    for smiles in ["CC(=O)OCC", "c1ccc(O)cc1", "CN1CCCC1", "OC(=O)C=CC(=O)O"]:
        mol = parse_smiles(smiles)
        base = fingerprint(mol)
        for _ in range(5):
            root = rng.randrange(len(mol.atoms))
            variant = parse_smiles(write_smiles(mol, root))
            assert fingerprint(variant) == base
            assert tanimoto(fingerprint(variant), base) == 1.0
