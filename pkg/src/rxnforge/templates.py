"""Reaction templates: extraction from mapped reactions, a frequency-filtered
library, subgraph matching against candidates, and template application.

A template records the reaction center (mapped atoms whose bonds to mapped
neighbors, charge, or hydrogen count change) plus its environment within a
radius, on both sides.  Patterns are serialized as SMILES whose atom maps are
*role labels* pairing the two sides; reactant-only leaving atoms carry no
role.  Matching is induced subgraph embedding on (element, aromatic flag,
charge); hydrogen bookkeeping during rewrites uses bond-order deltas, so
templates generalize to molecules with different substituents.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from pathlib import Path
from typing import Iterable

from .augment import ReactionRecord
from .chemgraph import (
    BOND_ORDER_VALUE,
    Atom,
    Bond,
    MoleculeGraph,
    _assemble,
    canonicalize,
    effective_hydrogens,
    enumerate_min_traversals,
    normalized_atom,
    parse_smiles,
    write_smiles,
)

log = logging.getLogger(__name__)

DEFAULT_RADIUS = 1
DEFAULT_MIN_COUNT = 5
DEFAULT_EMBED_BUDGET = 200_000

_MAX_SIGNATURE_WINNERS = 512


class TemplateError(Exception):
    pass


class ExtractionError(TemplateError):
    pass


class MappingError(ExtractionError):
    """Missing or duplicate atom maps on a reaction submitted for extraction."""


class NoReactionCenter(ExtractionError):
    """Both sides are identical; there is nothing to extract."""


class EmbeddingBudgetExceeded(TemplateError):
    """Subgraph search exceeded its node-expansion budget."""


@dataclass(frozen=True)
class TemplateSignature:
    """Canonical two-sided pattern encoding; `text` is the library key."""

    product_pattern: str
    reactant_patterns: tuple[str, ...]
    radius: int

    @property
    def text(self) -> str:
        return f"{self.product_pattern}>>{'.'.join(self.reactant_patterns)}"

    @staticmethod
    def from_text(text: str, radius: int) -> "TemplateSignature":
        if ">>" not in text:
            raise TemplateError(f"bad signature text {text!r}")
        product, reactants = text.split(">>", 1)
        graph = parse_smiles(reactants)
        parts = tuple(sorted(write_smiles(c) for c in graph.components()))
        return TemplateSignature(product, parts, radius)


@lru_cache(maxsize=4096)
def _parsed_pattern(text: str) -> MoleculeGraph:
    return parse_smiles(text)


def _product_graph(sig: TemplateSignature) -> MoleculeGraph:
    return _parsed_pattern(sig.product_pattern)


def _reactant_graph(sig: TemplateSignature) -> MoleculeGraph:
    return _parsed_pattern(".".join(sig.reactant_patterns))


# --------------------------------------------------------------------------
# Extraction
# --------------------------------------------------------------------------


def _map_tables(record: ReactionRecord):
    product = record.product
    product_by_map: dict[int, int] = {}
    for i, atom in enumerate(product.atoms):
        if atom.atom_map is None:
            raise MappingError(f"unmapped product atom {i}")
        if atom.atom_map in product_by_map:
            raise MappingError(f"duplicate product atom map {atom.atom_map}")
        product_by_map[atom.atom_map] = i
    reactant_by_map: dict[int, tuple[int, int]] = {}
    for mi, mol in enumerate(record.reactants):
        for ai, atom in enumerate(mol.atoms):
            if atom.atom_map is None:
                continue
            if atom.atom_map in reactant_by_map:
                raise MappingError(f"duplicate reactant atom map {atom.atom_map}")
            reactant_by_map[atom.atom_map] = (mi, ai)
    missing = set(product_by_map) - set(reactant_by_map)
    if missing:
        raise MappingError(f"product maps missing on reactant side: {sorted(missing)}")
    return product_by_map, reactant_by_map


def reaction_center_maps(record: ReactionRecord) -> set[int]:
    """Maps of atoms whose mapped-neighbor bonds, charge or hydrogen count
    differ between the two sides."""
    product_by_map, reactant_by_map = _map_tables(record)
    center: set[int] = set()
    for m, pi in product_by_map.items():
        mi, ai = reactant_by_map[m]
        rmol = record.reactants[mi]
        p_atom = record.product.atoms[pi]
        r_atom = rmol.atoms[ai]
        p_bonds = sorted(
            (record.product.atoms[w].atom_map, b.kind)
            for w, b in record.product.neighbors(pi)
            if record.product.atoms[w].atom_map is not None
        )
        r_bonds = sorted(
            (rmol.atoms[w].atom_map, b.kind)
            for w, b in rmol.neighbors(ai)
            if rmol.atoms[w].atom_map is not None
        )
        if (
            p_bonds != r_bonds
            or p_atom.charge != r_atom.charge
            or effective_hydrogens(record.product, pi)
            != effective_hydrogens(rmol, ai)
        ):
            center.add(m)
    return center


def _within_radius(mol: MoleculeGraph, seeds: list[int], radius: int) -> set[int]:
    out = set(seeds)
    frontier = list(seeds)
    for _ in range(radius):
        nxt = []
        for u in frontier:
            for w, _ in mol.neighbors(u):
                if w not in out:
                    out.add(w)
                    nxt.append(w)
        frontier = nxt
    return out


def _pattern_atom(atom: Atom, bond_sum: float, role: int | None, keep_h: bool) -> Atom:
    hydrogens = atom.explicit_h if keep_h else None
    return normalized_atom(
        atom.element,
        aromatic=atom.aromatic,
        charge=atom.charge,
        hydrogens=hydrogens,
        atom_map=role,
        bond_sum=bond_sum,
    )


def _induced_pattern(
    mol: MoleculeGraph,
    indices: list[int],
    roles: dict[int, int | None],
    keep_h_for: set[int],
) -> MoleculeGraph:
    """Induced subgraph with pattern-normalized atoms (chirality, isotope and
    direction tags dropped)."""
    order = sorted(indices)
    remap = {old: new for new, old in enumerate(order)}
    bonds = [
        Bond(remap[b.a1], remap[b.a2], b.kind)
        for b in mol.bonds
        if b.a1 in remap and b.a2 in remap
    ]
    sums = [0.0] * len(order)
    for b in bonds:
        sums[b.a1] += BOND_ORDER_VALUE[b.kind]
        sums[b.a2] += BOND_ORDER_VALUE[b.kind]
    atoms = []
    for old in order:
        src = mol.atoms[old]
        keep_h = old in keep_h_for
        hydrogens = effective_hydrogens(mol, old) if keep_h else None
        atoms.append(
            normalized_atom(
                src.element,
                aromatic=src.aromatic,
                charge=src.charge,
                hydrogens=hydrogens,
                atom_map=roles.get(old),
                bond_sum=sums[remap[old]],
            )
        )
    return MoleculeGraph(atoms, bonds)


def extract_template(
    record: ReactionRecord, radius: int = DEFAULT_RADIUS
) -> TemplateSignature:
    """Extract the canonical template of a fully mapped reaction.

    Raises :class:`MappingError` on bad maps, :class:`NoReactionCenter` when
    the sides are identical, and :class:`ExtractionError` when a leaving
    fragment is anchored outside the selected environment (such templates
    would not round-trip through application).
    """
    product_by_map, reactant_by_map = _map_tables(record)
    center = reaction_center_maps(record)
    if not center:
        raise NoReactionCenter("reaction center is empty")

    product = record.product
    p_env = _within_radius(product, [product_by_map[m] for m in center], radius)
    selected_maps = {product.atoms[i].atom_map for i in p_env}
    for mi, mol in enumerate(record.reactants):
        seeds = [
            ai
            for m, (mj, ai) in reactant_by_map.items()
            if mj == mi and m in center
        ]
        if not seeds:
            continue
        for ai in _within_radius(mol, seeds, radius):
            m = mol.atoms[ai].atom_map
            if m is not None and m in product_by_map:
                selected_maps.add(m)

    # Product pattern: induced subgraph on the selected maps.
    p_indices = [product_by_map[m] for m in selected_maps]
    unlabeled = _induced_pattern(
        product, p_indices, {i: None for i in p_indices}, set()
    )

    # Reactant patterns: selected mapped atoms plus attached leaving fragments.
    reactant_parts: list[tuple[MoleculeGraph, dict[int, int | None]]] = []
    for mi, mol in enumerate(record.reactants):
        sel = {
            ai
            for ai, atom in enumerate(mol.atoms)
            if atom.atom_map in selected_maps
        }
        leaving = {
            ai
            for ai, atom in enumerate(mol.atoms)
            if atom.atom_map is None or atom.atom_map not in product_by_map
        }
        keep: set[int] = set(sel)
        visited: set[int] = set()
        for start in sorted(leaving):
            if start in visited:
                continue
            fragment = {start}
            stack = [start]
            visited.add(start)
            while stack:
                u = stack.pop()
                for w, _ in mol.neighbors(u):
                    if w in leaving and w not in visited:
                        visited.add(w)
                        fragment.add(w)
                        stack.append(w)
            anchors_sel = False
            anchors_out = False
            for u in fragment:
                for w, _ in mol.neighbors(u):
                    if w in leaving:
                        continue
                    if w in sel:
                        anchors_sel = True
                    else:
                        anchors_out = True
            if anchors_out:
                raise ExtractionError(
                    "leaving fragment anchored outside the template environment"
                )
            if anchors_sel or not any(
                atom.atom_map is not None and atom.atom_map in product_by_map
                for atom in mol.atoms
            ):
                # Attached to the environment, or a fully unmapped reactant.
                keep |= fragment
        if keep:
            roles = {ai: None for ai in keep}
            reactant_parts.append((mol, roles))
    if not reactant_parts:
        raise ExtractionError("no reactant-side pattern atoms selected")

    return _canonical_signature(
        record, unlabeled, p_indices, selected_maps, reactant_parts, radius
    )


def _canonical_signature(
    record: ReactionRecord,
    unlabeled: MoleculeGraph,
    p_indices: list[int],
    selected_maps: set[int],
    reactant_parts,
    radius: int,
) -> TemplateSignature:
    """Assign canonical role labels and pick the minimal full signature.

    Roles are 1..n in the order of a minimal traversal of the (unlabeled)
    product pattern; every minimal traversal is tried and the smallest
    complete signature wins, so automorphic patterns stay deterministic.
    """
    product = record.product
    p_order_sorted = sorted(p_indices)

    comp_index_lists = unlabeled.component_indices()
    comps = [unlabeled.subgraph(ix) for ix in comp_index_lists]
    enums = [enumerate_min_traversals(c) for c in comps]

    # Component order: by minimal string; equal strings permute.
    order_groups: dict[str, list[int]] = {}
    for ci, (min_str, _) in enumerate(enums):
        order_groups.setdefault(min_str, []).append(ci)
    group_keys = sorted(order_groups)

    def component_orderings():
        def helper(gi):
            if gi == len(group_keys):
                yield []
                return
            for perm in permutations(order_groups[group_keys[gi]]):
                for rest in helper(gi + 1):
                    yield list(perm) + rest

        yield from helper(0)

    best_sig: TemplateSignature | None = None
    best_text: str | None = None
    winner_count = 0
    for comp_order in component_orderings():
        trav_choices = [enums[ci][1] for ci in comp_order]

        def walk(ci, chosen):
            nonlocal best_sig, best_text, winner_count
            if ci == len(comp_order):
                winner_count += 1
                if winner_count > _MAX_SIGNATURE_WINNERS:
                    raise ExtractionError(
                        "pattern too symmetric for canonical role assignment"
                    )
                sig = _signature_for(
                    record,
                    comp_order,
                    chosen,
                    comp_index_lists,
                    comps,
                    p_order_sorted,
                    selected_maps,
                    reactant_parts,
                    radius,
                )
                if best_text is None or sig.text < best_text:
                    best_text = sig.text
                    best_sig = sig
                return
            for trav in trav_choices[ci]:
                walk(ci + 1, chosen + [trav])

        walk(0, [])
    assert best_sig is not None
    return best_sig


def _signature_for(
    record: ReactionRecord,
    comp_order,
    travs,
    comp_index_lists,
    comps,
    p_order_sorted,
    selected_maps,
    reactant_parts,
    radius,
) -> TemplateSignature:
    product = record.product
    role_of_map: dict[int, int] = {}
    role = 1
    product_strings = []
    for ci, trav in zip(comp_order, travs):
        local_to_pattern = comp_index_lists[ci]
        comp = comps[ci]
        # Roles follow the traversal emit order.
        labeled_atoms = list(comp.atoms)
        for local in trav.order:
            pattern_idx = local_to_pattern[local]
            product_idx = p_order_sorted[pattern_idx]
            m = product.atoms[product_idx].atom_map
            role_of_map[m] = role
            labeled_atoms[local] = normalized_atom(
                comp.atoms[local].element,
                aromatic=comp.atoms[local].aromatic,
                charge=comp.atoms[local].charge,
                atom_map=role,
            )
            role += 1
        labeled = MoleculeGraph(labeled_atoms, comp.bonds)
        product_strings.append(_assemble(labeled, trav, True))
    product_side = ".".join(product_strings)

    reactant_strings: list[str] = []
    for mol, roles in reactant_parts:
        keep = sorted(roles)
        role_map: dict[int, int | None] = {}
        keep_h_for: set[int] = set()
        for ai in keep:
            m = mol.atoms[ai].atom_map
            if m is not None and m in role_of_map:
                role_map[ai] = role_of_map[m]
            else:
                role_map[ai] = None
                keep_h_for.add(ai)
        pattern = _induced_pattern(mol, keep, role_map, keep_h_for)
        for comp_graph in pattern.components():
            reactant_strings.append(write_smiles(comp_graph))
    return TemplateSignature(product_side, tuple(sorted(reactant_strings)), radius)


# --------------------------------------------------------------------------
# Library
# --------------------------------------------------------------------------


@dataclass
class LibraryBuildReport:
    total: int = 0
    extracted: int = 0
    skipped: dict = field(default_factory=dict)

    def skip(self, reason: str):
        self.skipped[reason] = self.skipped.get(reason, 0) + 1


@dataclass
class TemplateLibrary:
    """Signature counts with a freeze threshold (kept entries need
    count > min_count)."""

    radius: int = DEFAULT_RADIUS
    min_count: int = DEFAULT_MIN_COUNT
    counts: dict = field(default_factory=dict)
    signatures: dict = field(default_factory=dict)

    def add(self, sig: TemplateSignature, n: int = 1):
        self.counts[sig.text] = self.counts.get(sig.text, 0) + n
        self.signatures.setdefault(sig.text, sig)

    def count_of(self, sig: TemplateSignature) -> int:
        return self.counts.get(sig.text, 0)

    def entries(self) -> list[tuple[TemplateSignature, int]]:
        """All entries, heaviest first, ties by signature text."""
        ordered = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return [(self.signatures[text], count) for text, count in ordered]

    def frozen(self) -> list[tuple[TemplateSignature, int]]:
        return [(s, c) for s, c in self.entries() if c > self.min_count]

    def frozen_size(self) -> int:
        return sum(1 for _, c in self.counts.items() if c > self.min_count)

    def save(self, path: Path | str, frozen_only: bool = False):
        rows = self.frozen() if frozen_only else self.entries()
        with open(path, "w") as fh:
            for sig, count in rows:
                fh.write(f"{sig.text}\t{count}\n")

    @staticmethod
    def load(
        path: Path | str,
        radius: int = DEFAULT_RADIUS,
        min_count: int = DEFAULT_MIN_COUNT,
    ) -> "TemplateLibrary":
        lib = TemplateLibrary(radius=radius, min_count=min_count)
        with open(path) as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                text, count = line.rsplit("\t", 1)
                sig = TemplateSignature.from_text(text, radius)
                lib.counts[sig.text] = int(count)
                lib.signatures[sig.text] = sig
        return lib


def build_library(
    corpus: Iterable[ReactionRecord],
    radius: int = DEFAULT_RADIUS,
    min_count: int = DEFAULT_MIN_COUNT,
) -> tuple[TemplateLibrary, LibraryBuildReport]:
    """Count every extractable signature; extraction failures are tallied."""
    library = TemplateLibrary(radius=radius, min_count=min_count)
    report = LibraryBuildReport()
    for record in corpus:
        report.total += 1
        try:
            sig = extract_template(record, radius)
        except ExtractionError as exc:
            report.skip(type(exc).__name__)
            continue
        library.add(sig)
        report.extracted += 1
    if report.total == 0:
        raise ValueError("empty corpus")
    return library, report


# --------------------------------------------------------------------------
# Subgraph embedding (induced, attribute-exact)
# --------------------------------------------------------------------------


def find_embeddings(
    pattern: MoleculeGraph,
    target: MoleculeGraph,
    budget: int = DEFAULT_EMBED_BUDGET,
    exact_degree: frozenset[int] | set[int] = frozenset(),
    limit: int | None = None,
) -> list[dict[int, int]]:
    """All induced embeddings of ``pattern`` (any number of components) into
    ``target``.

    Atoms match on (element, aromatic, charge); every pattern bond must map
    to a target bond of equal kind and matched target atoms must carry no
    extra bonds among themselves (nor across pattern components).  Atoms in
    ``exact_degree`` additionally require equal degree.  Exceeding ``budget``
    node expansions raises :class:`EmbeddingBudgetExceeded`.
    """
    p_n = len(pattern.atoms)
    if p_n == 0 or p_n > len(target.atoms):
        return []

    # Search order: components largest-first, BFS inside each component.
    order: list[int] = []
    seen: set[int] = set()
    comps = sorted(pattern.component_indices(), key=len, reverse=True)
    for comp in comps:
        start = comp[0]
        queue = [start]
        seen.add(start)
        while queue:
            u = queue.pop(0)
            order.append(u)
            for w, _ in pattern.neighbors(u):
                if w not in seen:
                    seen.add(w)
                    queue.append(w)

    t_atoms = target.atoms
    p_atoms = pattern.atoms

    def compatible(pi: int, ti: int) -> bool:
        pa, ta = p_atoms[pi], t_atoms[ti]
        if (pa.element, pa.aromatic, pa.charge) != (
            ta.element,
            ta.aromatic,
            ta.charge,
        ):
            return False
        if pi in exact_degree:
            if target.degree(ti) != pattern.degree(pi):
                return False
        elif target.degree(ti) < pattern.degree(pi):
            return False
        return True

    assignment: dict[int, int] = {}
    used: set[int] = set()
    results: list[dict[int, int]] = []
    expansions = [0]

    def consistent(pi: int, ti: int) -> bool:
        for qj, tj in assignment.items():
            pb = pattern.bond_between(pi, qj)
            tb = target.bond_between(ti, tj)
            if pb is None:
                if tb is not None:
                    return False
            elif tb is None or tb.kind != pb.kind:
                return False
        return True

    def advance(k: int):
        if limit is not None and len(results) >= limit:
            return
        if k == p_n:
            results.append(dict(assignment))
            return
        pi = order[k]
        anchor = next(
            (assignment[w] for w, _ in pattern.neighbors(pi) if w in assignment),
            None,
        )
        if anchor is None:
            candidates = (ti for ti in range(len(t_atoms)) if ti not in used)
        else:
            candidates = (w for w, _ in target.neighbors(anchor) if w not in used)
        for ti in candidates:
            expansions[0] += 1
            if expansions[0] > budget:
                raise EmbeddingBudgetExceeded(
                    f"embedding budget {budget} exceeded"
                )
            if not compatible(pi, ti) or not consistent(pi, ti):
                continue
            assignment[pi] = ti
            used.add(ti)
            advance(k + 1)
            del assignment[pi]
            used.discard(ti)

    advance(0)
    return results


# --------------------------------------------------------------------------
# Application and matching
# --------------------------------------------------------------------------


def _roles(graph: MoleculeGraph) -> dict[int, int]:
    return {
        i: a.atom_map for i, a in enumerate(graph.atoms) if a.atom_map is not None
    }


def _internal_bond_sums(graph: MoleculeGraph) -> list[float]:
    sums = [0.0] * len(graph.atoms)
    for b in graph.bonds:
        sums[b.a1] += BOND_ORDER_VALUE[b.kind]
        sums[b.a2] += BOND_ORDER_VALUE[b.kind]
    return sums


def _rewrite(
    mol: MoleculeGraph,
    embedding: dict[int, int],
    src: MoleculeGraph,
    dst: MoleculeGraph,
) -> MoleculeGraph | None:
    """Rewrite one embedding of ``src`` into the ``dst`` side of a template.

    Role-labeled atoms are re-attributed with a bond-order-delta hydrogen
    adjustment; dst-only atoms are instantiated fresh; src-only atoms are
    deleted (their embedding already guaranteed exact degree).  Returns None
    when the rewrite is invalid (negative hydrogen count or an inconsistent
    graph), which callers discard and log.
    """
    src_roles = _roles(src)
    dst_roles = _roles(dst)
    src_by_role = {r: i for i, r in src_roles.items()}
    dst_by_role = {r: i for i, r in dst_roles.items()}
    src_sums = _internal_bond_sums(src)
    dst_sums = _internal_bond_sums(dst)

    embedded = set(embedding.values())
    deleted = {
        embedding[i] for i in range(len(src.atoms)) if i not in src_roles
    }

    new_atoms: list[Atom | None] = list(mol.atoms)
    target_h: dict[int, int] = {}
    target_sum: dict[int, float] = {}
    for si, ti in embedding.items():
        role = src_roles.get(si)
        if role is None:
            new_atoms[ti] = None  # deletion
            continue
        di = dst_by_role.get(role)
        if di is None:
            return None
        h = (
            effective_hydrogens(mol, ti)
            + src_sums[si]
            - dst_sums[di]
        )
        if h < -1e-9 or abs(h - round(h)) > 1e-9:
            return None
        d_atom = dst.atoms[di]
        bond_sum = (
            sum(BOND_ORDER_VALUE[b.kind] for b in mol._adj[ti])
            - src_sums[si]
            + dst_sums[di]
        )
        target_h[ti] = int(round(h))
        target_sum[ti] = bond_sum
        new_atoms[ti] = (d_atom, ti)  # placeholder, finalized below

    for ti, marker in enumerate(new_atoms):
        if isinstance(marker, tuple):
            d_atom, _ = marker
            new_atoms[ti] = normalized_atom(
                d_atom.element,
                aromatic=d_atom.aromatic,
                charge=d_atom.charge,
                hydrogens=target_h[ti],
                bond_sum=target_sum[ti],
            )

    # Fresh dst-only atoms (leaving groups in retro direction).
    appended: dict[int, int] = {}
    atoms_out: list[Atom] = []
    index_map: dict[int, int] = {}
    for ti, atom in enumerate(new_atoms):
        if atom is None:
            continue
        index_map[ti] = len(atoms_out)
        atoms_out.append(atom)
    for di, atom in enumerate(dst.atoms):
        if atom.atom_map is not None:
            continue
        appended[di] = len(atoms_out)
        atoms_out.append(atom)

    bonds_out: list[Bond] = []
    for b in mol.bonds:
        if b.a1 in embedded and b.a2 in embedded:
            continue  # induced: exactly the src pattern bonds
        if b.a1 in deleted or b.a2 in deleted:
            return None
        bonds_out.append(
            Bond(index_map[b.a1], index_map[b.a2], b.kind, b.direction)
        )

    def dst_endpoint(di: int) -> int | None:
        role = dst.atoms[di].atom_map
        if role is not None:
            si = src_by_role.get(role)
            if si is None:
                return None
            return index_map[embedding[si]]
        return appended[di]

    for b in dst.bonds:
        e1 = dst_endpoint(b.a1)
        e2 = dst_endpoint(b.a2)
        if e1 is None or e2 is None:
            return None
        bonds_out.append(Bond(e1, e2, b.kind))

    try:
        return MoleculeGraph(atoms_out, bonds_out)
    except ValueError:
        return None


@lru_cache(maxsize=8192)
def _pattern_profile(text: str) -> tuple:
    mol = _parsed_pattern(text)
    counts: dict = {}
    for a in mol.atoms:
        key = (a.element, a.aromatic, a.charge)
        counts[key] = counts.get(key, 0) + 1
    return tuple(sorted(counts.items()))


def _apply(
    sig: TemplateSignature,
    mol: MoleculeGraph,
    direction: str,
    budget: int = DEFAULT_EMBED_BUDGET,
) -> list[MoleculeGraph]:
    if direction == "retro":
        src_text = sig.product_pattern
        src, dst = _product_graph(sig), _reactant_graph(sig)
    elif direction == "forward":
        src_text = ".".join(sig.reactant_patterns)
        src, dst = _reactant_graph(sig), _product_graph(sig)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    # Element-profile screen: the pattern's atom multiset must fit the target.
    target_profile: dict = {}
    for a in mol.atoms:
        key = (a.element, a.aromatic, a.charge)
        target_profile[key] = target_profile.get(key, 0) + 1
    for key, n in _pattern_profile(src_text):
        if target_profile.get(key, 0) < n:
            return []
    exact_degree = frozenset(
        i for i, a in enumerate(src.atoms) if a.atom_map is None
    )
    out = []
    try:
        embeddings = find_embeddings(src, mol, budget, exact_degree)
    except EmbeddingBudgetExceeded:
        log.warning("embedding budget exhausted; treating as no match")
        return []
    for emb in embeddings:
        rewritten = _rewrite(mol, emb, src, dst)
        if rewritten is None:
            log.debug("discarded invalid rewrite for one embedding")
            continue
        out.append(rewritten)
    return out


def apply_template(
    sig: TemplateSignature,
    mol: MoleculeGraph,
    direction: str,
    budget: int = DEFAULT_EMBED_BUDGET,
) -> list[str]:
    """Apply a template to a molecule (set), enumerating every embedding.

    Returns deduplicated canonical dot-joined results, sorted; an empty list
    means no embedding.  ``direction`` is ``"retro"`` (product pattern in,
    reactant side out) or ``"forward"``.
    """
    results = {canonicalize(g) for g in _apply(sig, mol, direction, budget)}
    return sorted(results)


def _cheap_profile(mol: MoleculeGraph) -> tuple:
    return (
        len(mol.atoms),
        len(mol.bonds),
        tuple(sorted((a.element, a.charge, a.aromatic) for a in mol.atoms)),
        tuple(sorted(b.kind for b in mol.bonds)),
    )


@lru_cache(maxsize=1 << 16)
def _truth_profile(truth_key: str) -> tuple:
    return _cheap_profile(parse_smiles(truth_key).normalized_for_canonical())


def match_template(
    record: ReactionRecord,
    sig: TemplateSignature,
    budget: int = DEFAULT_EMBED_BUDGET,
) -> bool:
    """True iff applying the template retro to the record's product yields
    exactly the record's reactant set (order-insensitive)."""
    truth_key = record.reactants_key
    truth_profile = _truth_profile(truth_key)
    for rewritten in _apply(sig, record.product, "retro", budget):
        normalized = rewritten.normalized_for_canonical()
        if _cheap_profile(normalized) != truth_profile:
            continue
        if canonicalize(rewritten) == truth_key:
            return True
    return False
