"""Synthetic template chemistry for planted corpora.

Fifty parameterized mapped-reaction schemas over three families:

* 29 "addition" schemas: a doubly-substituted alkene plus an alcohol add to
  an ether; the two C2 markers form an antichain (every schema needs both of
  its markers), so schemas never match each other's products.
* 1 "decoy" schema: vinyl chloride plus an N-aryl amine.  Its product
  pattern also embeds in every condensation product (the amide carbon with a
  chloro buffer and an N-aryl nitrogen), but applying it there yields wrong
  reactants, which makes it a high-count wrong answer for the rare slice.
* 20 "condensation" schemas: a chloro-buffered (thio)acid plus an N-aryl
  amine condense to an amide; variants differ in the carbonyl partner and
  the nitrogen substituents.

Instances decorate attachment atoms that sit at least two bonds away from
every reaction-center atom, so all instances of a schema extract the same
radius-1 template signature.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from rxnforge.augment import Provenance, ReactionRecord
from rxnforge.chemgraph import Atom, Bond, MoleculeGraph, parse_smiles, write_smiles

# Attachment decorations: chlorine-free by construction (the decoy marker is
# exclusive to condensation buffers), attached via a single bond.
DECORATIONS = [
    "C",
    "CC",
    "CCC",
    "CC(C)C",
    "CCO",
    "COC",
    "CCN",
    "CCCC",
    "CC(C)O",
    "CCOC",
    "CCCO",
    "CC(C)(C)C",
]

_MARKER_PIECE = {
    "C": "[CH3:{m}]",
    "N": "[NH2:{m}]",
    "O": "[OH:{m}]",
    "S": "[SH:{m}]",
    "P": "[PH2:{m}]",
    "B": "[BH2:{m}]",
    "F": "[F:{m}]",
    "I": "[I:{m}]",
}

_MARKER_ELEMENTS = ["C", "N", "O", "S", "P", "B", "F", "I"]

_N_SIDE_EXTRAS = ["", "C", "c", "F", "I", "N", "O", "S", "P", "B"]


@dataclass(frozen=True)
class TemplateSchema:
    name: str
    family: str  # addition | decoy | condensation
    product_core: str
    reactant_cores: tuple[str, ...]
    # (map number, how many decorations to attach there)
    attachments: tuple[tuple[int, int], ...]


def addition_schema(idx: int, marker_a: str, marker_b: str) -> TemplateSchema:
    ma = _MARKER_PIECE[marker_a].format(m=11)
    mb = _MARKER_PIECE[marker_b].format(m=12)
    alkene = f"[CH2:7][CH:1]=[C:2]({ma}){mb}"
    alcohol = "[OH:3][CH2:4][CH2:8]"
    # C2 gains one hydrogen when the double bond opens.
    product = f"[CH2:7][CH:1]([O:3][CH2:4][CH2:8])[CH:2]({ma}){mb}"
    return TemplateSchema(
        name=f"add-{marker_a}{marker_b}-{idx}",
        family="addition",
        product_core=product,
        reactant_cores=(alkene, alcohol),
        attachments=((7, 1), (8, 1)),
    )


def decoy_schema() -> TemplateSchema:
    aryl = "[c:20]1[cH:21][cH:22][c:23]([CH3:26])[cH:24][cH:25]1"
    amine = f"[NH:3]{aryl}"
    alkene = "[CH2:1]=[CH:2][Cl:11]"
    product = f"[CH2:1]([N:3]{aryl})[CH2:2][Cl:11]"
    return TemplateSchema(
        name="decoy-NCl",
        family="decoy",
        product_core=product,
        reactant_cores=(alkene, amine),
        attachments=((23, 1),),
    )


def condensation_schema(idx: int, carbonyl: str, n_extra: str) -> TemplateSchema:
    aryl = "[c:20]1[cH:21][cH:22][c:23]([CH3:27])[cH:24][cH:25]1"
    if n_extra == "":
        amine = f"[NH2:2]{aryl}"
        product_n = f"[NH:2]{aryl}"
    elif n_extra == "c":
        aryl2 = "[c:30]1[cH:31][cH:32][cH:33][cH:34][cH:35]1"
        amine = f"[NH:2]({aryl2}){aryl}"
        product_n = f"[N:2]({aryl2}){aryl}"
    else:
        piece = _MARKER_PIECE[n_extra].format(m=26)
        amine = f"[NH:2]({piece}){aryl}"
        product_n = f"[N:2]({piece}){aryl}"
    acid = f"[CH:7]([Cl:13])[C:1](=[{carbonyl}:8])[OH:9]"
    product = f"[CH:7]([Cl:13])[C:1](=[{carbonyl}:8]){product_n}"
    return TemplateSchema(
        name=f"cond-{carbonyl}{n_extra or 'H'}-{idx}",
        family="condensation",
        product_core=product,
        reactant_cores=(acid, amine),
        attachments=((7, 1), (23, 1)),
    )


def make_schemas() -> tuple[list[TemplateSchema], list[TemplateSchema]]:
    """(seen, rare) schemas: 29 additions + the decoy, and 20 condensations."""
    pairs = []
    for i, a in enumerate(_MARKER_ELEMENTS):
        for b in _MARKER_ELEMENTS[i:]:
            pairs.append((a, b))
    seen = [addition_schema(i, a, b) for i, (a, b) in enumerate(pairs[:29])]
    seen.append(decoy_schema())
    rare = []
    idx = 0
    for carbonyl in ("O", "S"):
        for extra in _N_SIDE_EXTRAS:
            rare.append(condensation_schema(idx, carbonyl, extra))
            idx += 1
    assert len(seen) == 30 and len(rare) == 20
    return seen, rare


def _splice(base: MoleculeGraph, atom_idx: int, decoration: MoleculeGraph):
    """Attach a decoration via a single bond from ``atom_idx`` to its atom 0."""
    offset = len(base.atoms)
    atoms = list(base.atoms) + [a for a in decoration.atoms]
    bonds = list(base.bonds) + [
        Bond(b.a1 + offset, b.a2 + offset, b.kind, b.direction)
        for b in decoration.bonds
    ]
    bonds.append(Bond(atom_idx, offset, "single"))
    return MoleculeGraph(atoms, bonds)


def _find_map(mol: MoleculeGraph, m: int) -> int | None:
    for i, a in enumerate(mol.atoms):
        if a.atom_map == m:
            return i
    return None


def _with_maps(mol: MoleculeGraph, start: int) -> MoleculeGraph:
    """Map every decoration atom; hydrogen counts become explicit (bracket
    atoms) and account for the bond the splice is about to add to atom 0."""
    from rxnforge.chemgraph import BOND_ORDER_VALUE, _implied_h, normalized_atom

    sums = [0.0] * len(mol.atoms)
    for b in mol.bonds:
        sums[b.a1] += BOND_ORDER_VALUE[b.kind]
        sums[b.a2] += BOND_ORDER_VALUE[b.kind]
    sums[0] += 1.0  # splice bond
    atoms = []
    for i, a in enumerate(mol.atoms):
        hydrogens = a.explicit_h
        if hydrogens is None:
            hydrogens = _implied_h(a.element, sums[i])
        atoms.append(
            normalized_atom(
                a.element,
                aromatic=a.aromatic,
                charge=a.charge,
                hydrogens=hydrogens,
                isotope=a.isotope,
                atom_map=start + i,
                bond_sum=sums[i],
            )
        )
    return MoleculeGraph(atoms, mol.bonds)


def instantiate(
    schema: TemplateSchema, rng: random.Random, source_id: str
) -> ReactionRecord:
    """One mapped reaction instance of a schema with random decorations.

    Decoration atoms receive fresh maps shared between the two sides so the
    instance satisfies the extraction preconditions.
    """
    product = parse_smiles(schema.product_core)
    reactants = [parse_smiles(core) for core in schema.reactant_cores]
    next_map = 100
    for map_number, count in schema.attachments:
        for _ in range(count):
            decoration = _with_maps(
                parse_smiles(rng.choice(DECORATIONS)), next_map
            )
            next_map += len(decoration.atoms)
            p_idx = _find_map(product, map_number)
            assert p_idx is not None, (schema.name, map_number)
            product = _splice(product, p_idx, decoration)
            for ri, mol in enumerate(reactants):
                r_idx = _find_map(mol, map_number)
                if r_idx is not None:
                    reactants[ri] = _splice(mol, r_idx, decoration)
                    break
            else:
                raise AssertionError(f"map {map_number} not on reactant side")
    return ReactionRecord(
        product=product,
        reactants=tuple(reactants),
        provenance=Provenance.REAL,
        atom_mapped=True,
        source_id=source_id,
    )


def reaction_line(record: ReactionRecord) -> str:
    reactants = ".".join(write_smiles(m) for m in record.reactants)
    return f"{reactants}>>{write_smiles(record.product)}\t-\t{record.source_id}"


def unpaired_reactant_line(record: ReactionRecord, ident: str) -> str:
    """Unpaired reactant set (maps stripped) as a molecules-file line."""
    parts = [
        write_smiles(m.strip_atom_maps(), 0) for m in record.reactants
    ]
    return ".".join(sorted(parts)) + "\t" + ident


def build_boost_fixture(
    seed: int = 2024,
    train_per_seen: int = 10,
    test_per_seen: int = 2,
    unpaired_seen: int = 3480,
    unpaired_rare: int = 1520,
):
    """Planted world for the self-boosting experiment.

    Training sees every addition schema ``train_per_seen`` times but each
    condensation schema exactly once; the unpaired pool leans toward
    condensations (and never contains decoy chemistry) so boosting can lift
    them over the library freeze threshold.
    """
    rng = random.Random(seed)
    seen, rare = make_schemas()
    non_decoy_seen = [s for s in seen if s.family != "decoy"]

    train: list[ReactionRecord] = []
    for si, schema in enumerate(seen):
        for k in range(train_per_seen):
            train.append(instantiate(schema, rng, f"train-s{si}-{k}"))
    for ri, schema in enumerate(rare):
        train.append(instantiate(schema, rng, f"train-r{ri}-0"))

    test: list[ReactionRecord] = []
    for si, schema in enumerate(seen):
        for k in range(test_per_seen):
            test.append(instantiate(schema, rng, f"test-s{si}-{k}"))
    for ri, schema in enumerate(rare):
        test.append(instantiate(schema, rng, f"test-r{ri}"))

    unpaired: list[str] = []
    for k in range(unpaired_seen):
        schema = non_decoy_seen[k % len(non_decoy_seen)]
        record = instantiate(schema, rng, f"up-s{k}")
        unpaired.append(unpaired_reactant_line(record, f"up-s{k}"))
    for k in range(unpaired_rare):
        schema = rare[k % len(rare)]
        record = instantiate(schema, rng, f"up-r{k}")
        unpaired.append(unpaired_reactant_line(record, f"up-r{k}"))

    return {
        "seen_schemas": seen,
        "rare_schemas": rare,
        "train": train,
        "test": test,
        "unpaired_lines": unpaired,
    }
