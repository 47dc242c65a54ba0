"""Reaction records, reaction-SMILES ingestion, root-aligned sequence pairs
and augmented-corpus assembly."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

from .chemgraph import (
    MoleculeGraph,
    SmilesError,
    canonicalize,
    parse_smiles,
    write_smiles,
)

log = logging.getLogger(__name__)


class Provenance(enum.Enum):
    REAL = "real"
    IN_SILICO_FROM_REACTANTS = "in_silico_from_reactants"
    IN_SILICO_FROM_PRODUCTS = "in_silico_from_products"


class ReactionFormatError(ValueError):
    """Malformed reaction line or an invalid record shape."""


@dataclass
class ReactionRecord:
    """One product paired with its reactant set, plus provenance."""

    product: MoleculeGraph
    reactants: tuple[MoleculeGraph, ...]
    provenance: Provenance = Provenance.REAL
    atom_mapped: bool = False
    class_label: int | None = None
    source_id: str = ""

    def __post_init__(self):
        if not self.reactants:
            raise ReactionFormatError("a reaction needs at least one reactant")
        if len(self.product.component_indices()) != 1:
            raise ReactionFormatError("product must be a single connected entity")
        self.reactants = tuple(self.reactants)

    @cached_property
    def product_key(self) -> str:
        return canonicalize(self.product)

    @cached_property
    def reactants_key(self) -> str:
        parts: list[str] = []
        for mol in self.reactants:
            parts.extend(canonicalize(c) for c in mol.components())
        return ".".join(sorted(parts))

    @property
    def reaction_key(self) -> tuple[str, str]:
        return (self.product_key, self.reactants_key)


@dataclass(frozen=True)
class SequencePair:
    source: str
    target: str
    variant_index: int


@dataclass
class IngestReport:
    lines: int = 0
    records: int = 0
    duplicates: int = 0
    malformed: int = 0
    split_extra: int = 0
    unmapped_flagged: int = 0

    def reconciles(self) -> bool:
        return self.records + self.duplicates + self.malformed - self.split_extra == self.lines


def _maps_consistent(product: MoleculeGraph, reactants: list[MoleculeGraph]) -> bool:
    """Product fully mapped, maps unique per side, product maps all present
    on the reactant side."""
    product_maps = [a.atom_map for a in product.atoms]
    if any(m is None for m in product_maps):
        return False
    if len(set(product_maps)) != len(product_maps):
        return False
    reactant_maps = [
        a.atom_map for mol in reactants for a in mol.atoms if a.atom_map is not None
    ]
    if len(set(reactant_maps)) != len(reactant_maps):
        return False
    return set(product_maps) <= set(reactant_maps)


def parse_reaction_line(
    line: str,
) -> tuple[list[MoleculeGraph], list[MoleculeGraph], int | None, str | None]:
    """Split one ``reactants>reagents>products`` line with optional TAB-separated
    class label and id; the reagents segment is dropped."""
    fields = line.rstrip("\n").split("\t")
    rxn = fields[0].strip()
    class_label: int | None = None
    source_id: str | None = None
    if len(fields) > 1 and fields[1].strip() not in ("", "-"):
        try:
            class_label = int(fields[1])
        except ValueError as exc:
            raise ReactionFormatError(f"bad class label {fields[1]!r}") from exc
    if len(fields) > 2 and fields[2].strip():
        source_id = fields[2].strip()
    parts = rxn.split(">")
    if len(parts) != 3:
        raise ReactionFormatError(
            f"expected reactants>reagents>products, got {rxn!r}"
        )
    reactant_str, _reagents, product_str = parts
    if not reactant_str.strip() or not product_str.strip():
        raise ReactionFormatError("empty reactant or product side")
    reactants = [c for c in parse_smiles(reactant_str).components()]
    products = [c for c in parse_smiles(product_str).components()]
    return reactants, products, class_label, source_id


def format_reaction_line(record: ReactionRecord, include_maps: bool = True) -> str:
    """Render a record back to corpus format (class and id columns kept)."""
    if include_maps and record.atom_mapped:
        reactants = ".".join(write_smiles(m) for m in record.reactants)
        product = write_smiles(record.product)
    else:
        reactants = ".".join(canonicalize(m) for m in record.reactants)
        product = canonicalize(record.product)
    label = "-" if record.class_label is None else str(record.class_label)
    return f"{reactants}>>{product}\t{label}\t{record.source_id}"


def ingest_reaction_smiles(
    lines: Iterable[str],
    strict: bool = False,
    provenance: Provenance = Provenance.REAL,
) -> tuple[list[ReactionRecord], IngestReport]:
    """Ingest a reaction-SMILES stream into deduplicated records.

    Multi-product reactions split into one record per product; exact
    duplicates (canonical product + canonical reactant set) are removed;
    records with inconsistent atom maps are flagged unmapped and their maps
    stripped.  Malformed lines are skipped and counted, or fatal in strict
    mode.
    """
    report = IngestReport()
    records: list[ReactionRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        report.lines += 1
        try:
            reactants, products, class_label, source_id = parse_reaction_line(raw)
        except (ReactionFormatError, SmilesError) as exc:
            if strict:
                raise ReactionFormatError(f"line {lineno}: {exc}") from exc
            log.debug("skipping malformed line %d: %s", lineno, exc)
            report.malformed += 1
            continue
        base_id = source_id if source_id is not None else f"line{lineno}"
        report.split_extra += len(products) - 1
        for pi, product in enumerate(products):
            mapped = _maps_consistent(product, reactants)
            if not mapped and any(
                a.atom_map is not None
                for mol in [product, *reactants]
                for a in mol.atoms
            ):
                report.unmapped_flagged += 1
                product = product.strip_atom_maps()
                reactants = [m.strip_atom_maps() for m in reactants]
            rec_id = base_id if len(products) == 1 else f"{base_id}.p{pi}"
            record = ReactionRecord(
                product=product,
                reactants=tuple(reactants),
                provenance=provenance,
                atom_mapped=mapped,
                class_label=class_label,
                source_id=rec_id,
            )
            key = record.reaction_key
            if key in seen:
                report.duplicates += 1
                continue
            seen.add(key)
            records.append(record)
            report.records += 1
    return records, report


def exclude_overlap(
    records: list[ReactionRecord],
    holdout: list[ReactionRecord],
    product_level: bool = False,
) -> list[ReactionRecord]:
    """Drop records colliding with holdout reactions.

    Default mode removes exact (product, reactant set) matches; with
    ``product_level`` any record whose product appears as a holdout product
    goes too (strict leakage guard).
    """
    holdout_keys = {r.reaction_key for r in holdout}
    holdout_products = {r.product_key for r in holdout} if product_level else set()
    kept = []
    for record in records:
        if record.reaction_key in holdout_keys:
            continue
        if product_level and record.product_key in holdout_products:
            continue
        kept.append(record)
    return kept


def _record_rng(seed: int, record_id: str, purpose: str = "") -> random.Random:
    digest = hashlib.blake2b(
        f"{seed}|{purpose}|{record_id}".encode(), digest_size=8
    ).digest()
    return random.Random(int.from_bytes(digest, "big"))


def _written_rooted(mol: MoleculeGraph, root: int | None) -> str:
    return write_smiles(mol.strip_atom_maps(), root)


def rsmiles_pairs(
    record: ReactionRecord, n_variants: int, seed: int = 0
) -> list[SequencePair]:
    """Root-aligned source/target SMILES variants for one record.

    Mapped records share the sampled product root atom with the reactant
    carrying the same map; unmapped records fall back to independent random
    roots per side.  Emitted strings are map-free; the maps only steer root
    alignment.  Asking for more variants than distinct product roots yields
    the maximum available.
    """
    if n_variants < 1:
        raise ValueError("n_variants must be >= 1")
    rng = _record_rng(seed, record.source_id, "roots")
    n_atoms = len(record.product.atoms)
    n_take = min(n_variants, n_atoms)
    if n_take < n_variants:
        log.debug(
            "record %s: only %d distinct roots for %d requested variants",
            record.source_id,
            n_take,
            n_variants,
        )
    roots = rng.sample(range(n_atoms), n_take)
    pairs = []
    for variant, root in enumerate(roots):
        source = _written_rooted(record.product, root)
        targets = []
        if record.atom_mapped:
            shared_map = record.product.atoms[root].atom_map
            aligned = []
            others = []
            for mol in record.reactants:
                hit = next(
                    (
                        i
                        for i, a in enumerate(mol.atoms)
                        if a.atom_map == shared_map
                    ),
                    None,
                )
                if hit is not None and not aligned:
                    aligned.append(_written_rooted(mol, hit))
                else:
                    others.append(_written_rooted(mol, None))
            targets = aligned + sorted(others)
        else:
            for mol in record.reactants:
                targets.append(
                    _written_rooted(mol, rng.randrange(len(mol.atoms)))
                )
        pairs.append(SequencePair(source, ".".join(targets), variant))
    return pairs


@dataclass
class CorpusManifest:
    seed: int
    n_variants: int
    real_pool: int
    insilico_pool: int
    real_selected: int
    insilico_selected: int
    lines: int
    files: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "n_variants": self.n_variants,
            "real_pool": self.real_pool,
            "insilico_pool": self.insilico_pool,
            "real_selected": self.real_selected,
            "insilico_selected": self.insilico_selected,
            "lines": self.lines,
            "files": self.files,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def assemble_corpus(
    real: list[ReactionRecord],
    insilico: list[ReactionRecord],
    out_dir: Path | str,
    real_ratio: float = 1.0,
    insilico_ratio: float = 1.0,
    n_variants: int = 1,
    seed: int = 0,
) -> CorpusManifest:
    """Write interleaved src/tgt training files with provenance sidecar.

    ``real_ratio`` subsamples the real pool; ``insilico_ratio`` is the number
    of in-silico reactions relative to the selected real count, capped at the
    available pool.  Output is deterministic for fixed inputs and seeds.
    """
    if not 0 < real_ratio <= 1:
        raise ValueError("real_ratio must be in (0,1]")
    if insilico_ratio < 0:
        raise ValueError("insilico_ratio must be >= 0")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    n_real = int(len(real) * real_ratio)
    rng = random.Random(hashlib.blake2b(f"{seed}|select".encode(), digest_size=8).digest())
    real_sel = (
        [real[i] for i in sorted(rng.sample(range(len(real)), n_real))]
        if n_real < len(real)
        else list(real)
    )
    n_insilico = min(int(round(insilico_ratio * len(real_sel))), len(insilico))
    insilico_sel = (
        [insilico[i] for i in sorted(rng.sample(range(len(insilico)), n_insilico))]
        if n_insilico < len(insilico)
        else list(insilico)
    )

    rows: list[tuple[str, str, str, str, int]] = []
    for record in real_sel + insilico_sel:
        for pair in rsmiles_pairs(record, n_variants, seed):
            rows.append(
                (
                    pair.source,
                    pair.target,
                    record.source_id,
                    record.provenance.value,
                    pair.variant_index,
                )
            )
    if not rows:
        raise ValueError("assembled corpus is empty")
    shuffle_rng = random.Random(
        hashlib.blake2b(f"{seed}|shuffle".encode(), digest_size=8).digest()
    )
    shuffle_rng.shuffle(rows)

    src_path = out_dir / "src.txt"
    tgt_path = out_dir / "tgt.txt"
    prov_path = out_dir / "provenance.tsv"
    with open(src_path, "w") as fs, open(tgt_path, "w") as ft, open(
        prov_path, "w"
    ) as fp:
        for line_no, (src, tgt, source_id, prov, variant) in enumerate(rows, 1):
            fs.write(src + "\n")
            ft.write(tgt + "\n")
            fp.write(f"{line_no}\t{source_id}\t{prov}\t{variant}\n")

    manifest = CorpusManifest(
        seed=seed,
        n_variants=n_variants,
        real_pool=len(real),
        insilico_pool=len(insilico),
        real_selected=len(real_sel),
        insilico_selected=len(insilico_sel),
        lines=len(rows),
        files={
            "src": src_path.name,
            "tgt": tgt_path.name,
            "provenance": prov_path.name,
        },
    )
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest
