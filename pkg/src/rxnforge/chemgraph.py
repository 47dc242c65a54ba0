"""Molecular graphs, a SMILES-subset parser, and a deterministic canonical writer.

The supported SMILES subset covers organic-subset atoms, bracket atoms with
isotope / charge / explicit-H / atom-map, branches, ring closures (including
``%nn``), dot disconnection, bond symbols ``- = # : / \\`` and the ``@``/``@@``
chirality tags.  Chirality and bond-direction tags are preserved verbatim and
compared literally; no stereo perception is done.  Aromatic (lowercase) and
kekule (uppercase) forms are distinct graphs and never unified.

The canonical form of a molecule is defined as the lexicographically smallest
string over every possible root atom and every branch ordering of the writer,
computed per connected component with components sorted and dot-joined.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import permutations


class SmilesError(ValueError):
    """Malformed SMILES input; carries a 1-indexed position when known."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)
        self.position = position


ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
AROMATIC_ORGANIC = frozenset({"B", "C", "N", "O", "P", "S"})
AROMATIC_BRACKET = frozenset({"B", "C", "N", "O", "P", "S", "Se", "As"})

ELEMENTS = frozenset(
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I "
    "Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt "
    "Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr "
    "Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og".split()
)

# Smallest standard valence >= bond-order sum decides implied hydrogens for
# bare organic-subset atoms; aromatic bonds count 1.5 and the sum is ceiled.
DEFAULT_VALENCES = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

BOND_ORDER_VALUE = {"single": 1.0, "double": 2.0, "triple": 3.0, "aromatic": 1.5}
_KIND_SYMBOL = {"single": "-", "double": "=", "triple": "#", "aromatic": ":"}
_SYMBOL_KIND = {v: k for k, v in _KIND_SYMBOL.items()}
_DIR_SYMBOL = {"up": "/", "down": "\\"}
_SYMBOL_DIR = {"/": "up", "\\": "down"}
_FLIP_DIR = {"up": "down", "down": "up"}


@dataclass(frozen=True)
class Atom:
    """One atom node; ``explicit_h=None`` means hydrogens are implied."""

    element: str
    aromatic: bool = False
    charge: int = 0
    isotope: int | None = None
    explicit_h: int | None = None
    atom_map: int | None = None
    chirality: str | None = None


@dataclass(frozen=True)
class Bond:
    """Undirected bond; ``direction`` is oriented from ``a1`` to ``a2``."""

    a1: int
    a2: int
    kind: str = "single"
    direction: str | None = None

    def other(self, idx: int) -> int:
        return self.a2 if idx == self.a1 else self.a1

    def direction_from(self, idx: int) -> str | None:
        if self.direction is None:
            return None
        return self.direction if idx == self.a1 else _FLIP_DIR[self.direction]


class MoleculeGraph:
    """Immutable attributed molecular graph; safe to share between workers."""

    __slots__ = ("atoms", "bonds", "_adj", "_hash")

    def __init__(self, atoms, bonds):
        self.atoms: tuple[Atom, ...] = tuple(atoms)
        self.bonds: tuple[Bond, ...] = tuple(bonds)
        self._hash: int | None = None
        n = len(self.atoms)
        seen: set[frozenset[int]] = set()
        adj: list[list[Bond]] = [[] for _ in range(n)]
        for bond in self.bonds:
            if not (0 <= bond.a1 < n and 0 <= bond.a2 < n):
                raise ValueError(f"bond endpoint out of range: {bond}")
            if bond.a1 == bond.a2:
                raise ValueError(f"self-bond on atom {bond.a1}")
            key = frozenset((bond.a1, bond.a2))
            if key in seen:
                raise ValueError(f"duplicate bond between {bond.a1} and {bond.a2}")
            seen.add(key)
            if bond.kind == "aromatic" and not (
                self.atoms[bond.a1].aromatic and self.atoms[bond.a2].aromatic
            ):
                raise ValueError(
                    f"aromatic bond between non-aromatic atoms {bond.a1} and {bond.a2}"
                )
            adj[bond.a1].append(bond)
            adj[bond.a2].append(bond)
        self._adj: tuple[tuple[Bond, ...], ...] = tuple(tuple(b) for b in adj)
        for i, atom in enumerate(self.atoms):
            if atom.atom_map is not None and atom.atom_map <= 0:
                raise ValueError(f"atom map on atom {i} must be positive")

    def __len__(self) -> int:
        return len(self.atoms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MoleculeGraph):
            return NotImplemented
        return self.atoms == other.atoms and self.bonds == other.bonds

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.atoms, self.bonds))
        return self._hash

    def neighbors(self, idx: int) -> list[tuple[int, Bond]]:
        return [(b.other(idx), b) for b in self._adj[idx]]

    def bond_between(self, i: int, j: int) -> Bond | None:
        for b in self._adj[i]:
            if b.other(i) == j:
                return b
        return None

    def degree(self, idx: int) -> int:
        return len(self._adj[idx])

    def heavy_atom_count(self) -> int:
        return sum(1 for a in self.atoms if a.element != "H")

    def component_indices(self) -> list[list[int]]:
        """Connected components as sorted index lists, in first-atom order."""
        seen: set[int] = set()
        out: list[list[int]] = []
        for start in range(len(self.atoms)):
            if start in seen:
                continue
            stack, comp = [start], []
            seen.add(start)
            while stack:
                u = stack.pop()
                comp.append(u)
                for w, _ in self.neighbors(u):
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            out.append(sorted(comp))
        return out

    def subgraph(self, indices: list[int]) -> MoleculeGraph:
        """Induced subgraph on ``indices``; atoms are renumbered in list order."""
        remap = {old: new for new, old in enumerate(indices)}
        atoms = [self.atoms[i] for i in indices]
        bonds = [
            replace(b, a1=remap[b.a1], a2=remap[b.a2])
            for b in self.bonds
            if b.a1 in remap and b.a2 in remap
        ]
        return MoleculeGraph(atoms, bonds)

    def components(self) -> list[MoleculeGraph]:
        return [self.subgraph(ix) for ix in self.component_indices()]

    def strip_atom_maps(self) -> MoleculeGraph:
        if all(a.atom_map is None for a in self.atoms):
            return self
        return MoleculeGraph(
            [replace(a, atom_map=None) for a in self.atoms], self.bonds
        )

    def normalized_for_canonical(self) -> MoleculeGraph:
        """Strip atom maps and drop explicit hydrogen counts that the bare
        organic-subset token would imply anyway.

        This is the preprocessing step of the canonical form, making mapped
        corpus molecules (``[CH3:1][OH:2]``) and plain ones (``CO``) compare
        equal under :func:`canonicalize`.
        """
        atoms = []
        changed = False
        for i, a in enumerate(self.atoms):
            new = a
            if a.atom_map is not None:
                new = replace(new, atom_map=None)
            if (
                new.explicit_h is not None
                and new.charge == 0
                and new.isotope is None
                and new.chirality is None
                and new.element in ORGANIC_SUBSET
                and (not new.aromatic or new.element in AROMATIC_ORGANIC)
                and _implied_h(new.element, bond_order_sum(self, i)) == new.explicit_h
            ):
                new = replace(new, explicit_h=None)
            if new is not a:
                changed = True
            atoms.append(new)
        return MoleculeGraph(atoms, self.bonds) if changed else self


def bond_order_sum(mol: MoleculeGraph, idx: int) -> float:
    return sum(BOND_ORDER_VALUE[b.kind] for b in mol._adj[idx])


def effective_hydrogens(mol: MoleculeGraph, idx: int) -> int:
    """Hydrogen count of an atom: explicit when given, else valence-implied.

    Bare atoms outside the organic subset imply zero hydrogens.  This is a
    bookkeeping helper, not a valence check; impossible valences simply
    yield zero.
    """
    atom = mol.atoms[idx]
    if atom.explicit_h is not None:
        return atom.explicit_h
    valences = DEFAULT_VALENCES.get(atom.element)
    if valences is None:
        return 0
    used = -(-int(bond_order_sum(mol, idx) * 2) // 2)  # ceil of half-integer sum
    for v in valences:
        if used <= v:
            return v - used
    return 0


def normalized_atom(
    element: str,
    aromatic: bool = False,
    charge: int = 0,
    hydrogens: int | None = None,
    isotope: int | None = None,
    atom_map: int | None = None,
    chirality: str | None = None,
    bond_sum: float = 0.0,
) -> Atom:
    """Build an atom whose hydrogen count is implied whenever it can be.

    ``hydrogens`` is the desired effective count given ``bond_sum`` incident
    bond order; it is stored explicitly only when a bare organic-subset token
    would not imply it.  Bracket atoms always carry an explicit count.
    """
    bare_possible = (
        element in ORGANIC_SUBSET
        and (not aromatic or element in AROMATIC_ORGANIC)
        and charge == 0
        and isotope is None
        and atom_map is None
        and chirality is None
    )
    explicit: int | None
    if hydrogens is None:
        explicit = None if bare_possible else 0
    elif bare_possible and _implied_h(element, bond_sum) == hydrogens:
        explicit = None
    else:
        explicit = hydrogens
    return Atom(element, aromatic, charge, isotope, explicit, atom_map, chirality)


def _implied_h(element: str, bond_sum: float) -> int:
    valences = DEFAULT_VALENCES.get(element)
    if valences is None:
        return 0
    used = -(-int(bond_sum * 2) // 2)
    for v in valences:
        if used <= v:
            return v - used
    return 0


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_BRACKET_RE = re.compile(
    r"^(?P<isotope>\d+)?"
    r"(?P<element>[A-Z][a-z]?|as|se|[bcnops])"
    r"(?P<chirality>@@?)?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>[+-]\d+|\+\+?|--?)?"
    r"(?::(?P<map>\d+))?$"
)

_TWO_LETTER_ORGANIC = ("Cl", "Br")


def _parse_bracket(body: str, pos: int) -> Atom:
    m = _BRACKET_RE.match(body)
    if m is None:
        raise SmilesError(f"invalid bracket atom '[{body}]'", pos)
    raw_element = m.group("element")
    aromatic = raw_element[0].islower()
    element = raw_element.capitalize()
    if element not in ELEMENTS:
        raise SmilesError(f"unknown element '{raw_element}'", pos)
    if aromatic and element not in AROMATIC_BRACKET:
        raise SmilesError(f"element '{raw_element}' cannot be aromatic", pos)
    isotope = int(m.group("isotope")) if m.group("isotope") else None
    if isotope is not None and isotope == 0:
        raise SmilesError("isotope must be positive", pos)
    hcount = m.group("hcount")
    explicit_h = 0 if hcount is None else (1 if hcount == "H" else int(hcount[1:]))
    raw_charge = m.group("charge")
    if raw_charge is None:
        charge = 0
    elif raw_charge in ("+", "++", "-", "--"):
        charge = raw_charge.count("+") - raw_charge.count("-")
    else:
        charge = int(raw_charge)
    atom_map = int(m.group("map")) if m.group("map") else None
    if atom_map is not None and atom_map == 0:
        raise SmilesError("atom map must be positive", pos)
    return Atom(
        element=element,
        aromatic=aromatic,
        charge=charge,
        isotope=isotope,
        explicit_h=explicit_h,
        atom_map=atom_map,
        chirality=m.group("chirality"),
    )


class _RingSlot:
    __slots__ = ("atom", "kind", "direction", "position")

    def __init__(self, atom, kind, direction, position):
        self.atom = atom
        self.kind = kind
        self.direction = direction
        self.position = position


def parse_smiles(text: str) -> MoleculeGraph:
    """Parse a SMILES string into a :class:`MoleculeGraph`.

    Dot-separated parts become separate connected components of the one
    returned graph.  Raises :class:`SmilesError` with a 1-indexed position on
    malformed input.
    """
    s = text.strip()
    if not s:
        raise SmilesError("empty SMILES input")

    atoms: list[Atom] = []
    bonds: list[Bond] = []
    bond_keys: set[frozenset[int]] = set()
    anchor: int | None = None
    pending_kind: str | None = None
    pending_dir: str | None = None
    pending_pos = 0
    branch_stack: list[tuple[int | None, int]] = []
    rings: dict[int, _RingSlot] = {}
    component_has_atom = False

    def add_bond(i: int, j: int, kind: str, direction: str | None, pos: int):
        key = frozenset((i, j))
        if i == j:
            raise SmilesError("ring bond to the same atom", pos)
        if key in bond_keys:
            raise SmilesError(f"duplicate bond between atoms {i} and {j}", pos)
        if kind == "aromatic" and not (atoms[i].aromatic and atoms[j].aromatic):
            raise SmilesError("aromatic bond between non-aromatic atoms", pos)
        bond_keys.add(key)
        bonds.append(Bond(i, j, kind, direction))

    def resolved_kind(i: int, j: int, kind: str | None) -> str:
        if kind is not None:
            return kind
        return "aromatic" if atoms[i].aromatic and atoms[j].aromatic else "single"

    def attach(atom: Atom, pos: int):
        nonlocal anchor, pending_kind, pending_dir, component_has_atom
        atoms.append(atom)
        idx = len(atoms) - 1
        if anchor is not None:
            add_bond(
                anchor, idx, resolved_kind(anchor, idx, pending_kind), pending_dir, pos
            )
        elif pending_kind is not None or pending_dir is not None:
            raise SmilesError("bond symbol with no preceding atom", pending_pos)
        anchor = idx
        pending_kind = pending_dir = None
        component_has_atom = True

    def ring_closure(number: int, pos: int):
        nonlocal pending_kind, pending_dir
        if anchor is None:
            raise SmilesError("ring bond number with no preceding atom", pos)
        slot = rings.pop(number, None)
        if slot is None:
            rings[number] = _RingSlot(anchor, pending_kind, pending_dir, pos)
        else:
            kind = slot.kind if slot.kind is not None else pending_kind
            if (
                slot.kind is not None
                and pending_kind is not None
                and slot.kind != pending_kind
            ):
                raise SmilesError(f"conflicting ring bond orders for {number}", pos)
            direction = slot.direction
            if pending_dir is not None:
                # Closing-side symbol reads in the closing->opening sense.
                flipped = _FLIP_DIR[pending_dir]
                if direction is not None and direction != flipped:
                    raise SmilesError(
                        f"conflicting ring bond directions for {number}", pos
                    )
                direction = flipped
            if direction is not None and kind is None:
                kind = "single"
            add_bond(
                slot.atom,
                anchor,
                resolved_kind(slot.atom, anchor, kind),
                direction,
                pos,
            )
        pending_kind = pending_dir = None

    i = 0
    n = len(s)
    while i < n:
        ch = s[i]
        pos = i + 1
        if ch == "[":
            end = s.find("]", i + 1)
            if end < 0:
                raise SmilesError("unclosed bracket atom", pos)
            attach(_parse_bracket(s[i + 1 : end], pos), pos)
            i = end + 1
        elif s[i : i + 2] in _TWO_LETTER_ORGANIC:
            attach(Atom(s[i : i + 2]), pos)
            i += 2
        elif ch in "BCNOPSFI":
            attach(Atom(ch), pos)
            i += 1
        elif ch in "bcnops":
            attach(Atom(ch.upper(), aromatic=True), pos)
            i += 1
        elif ch in "-=#:":
            if pending_kind is not None or pending_dir is not None:
                raise SmilesError("two bond symbols in a row", pos)
            pending_kind = _SYMBOL_KIND[ch]
            pending_pos = pos
            i += 1
        elif ch in "/\\":
            if pending_kind is not None or pending_dir is not None:
                raise SmilesError("two bond symbols in a row", pos)
            pending_kind = "single"
            pending_dir = _SYMBOL_DIR[ch]
            pending_pos = pos
            i += 1
        elif ch == "(":
            if anchor is None:
                raise SmilesError("branch start before any atom", pos)
            if pending_kind is not None or pending_dir is not None:
                raise SmilesError("bond symbol before branch start", pos)
            branch_stack.append((anchor, pos))
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesError("unbalanced parenthesis", pos)
            if pending_kind is not None or pending_dir is not None:
                raise SmilesError("dangling bond symbol before ')'", pos)
            anchor, _ = branch_stack.pop()
            i += 1
        elif ch.isdigit():
            ring_closure(int(ch), pos)
            i += 1
        elif ch == "%":
            if i + 2 >= n or not s[i + 1 : i + 3].isdigit():
                raise SmilesError("'%' must be followed by two digits", pos)
            ring_closure(int(s[i + 1 : i + 3]), pos)
            i += 3
        elif ch == ".":
            if branch_stack:
                raise SmilesError("dot disconnection inside a branch", pos)
            if pending_kind is not None or pending_dir is not None:
                raise SmilesError("bond symbol before dot", pos)
            if not component_has_atom:
                raise SmilesError("empty component before dot", pos)
            anchor = None
            component_has_atom = False
            i += 1
        else:
            raise SmilesError(f"unexpected character '{ch}'", pos)

    if branch_stack:
        raise SmilesError("unbalanced parenthesis", branch_stack[-1][1])
    if pending_kind is not None or pending_dir is not None:
        raise SmilesError("dangling bond symbol at end of input", pending_pos)
    if rings:
        number, slot = next(iter(rings.items()))
        raise SmilesError(f"unclosed ring bond number {number}", slot.position)
    if not component_has_atom:
        raise SmilesError("empty component at end of input", n)
    return MoleculeGraph(atoms, bonds)


# --------------------------------------------------------------------------
# Writing
# --------------------------------------------------------------------------


def _bare_token(atom: Atom, include_map: bool) -> str | None:
    if (
        atom.element in ORGANIC_SUBSET
        and (not atom.aromatic or atom.element in AROMATIC_ORGANIC)
        and atom.charge == 0
        and atom.isotope is None
        and atom.explicit_h is None
        and atom.chirality is None
        and (atom.atom_map is None or not include_map)
    ):
        return atom.element.lower() if atom.aromatic else atom.element
    return None


def atom_token(atom: Atom, include_map: bool = True) -> str:
    """SMILES token for one atom (bare when possible, bracket otherwise)."""
    bare = _bare_token(atom, include_map)
    if bare is not None:
        return bare
    if atom.explicit_h is None:
        raise ValueError(
            f"bracket atom for element {atom.element} requires an explicit "
            "hydrogen count; use normalized_atom()"
        )
    sym = atom.element.lower() if atom.aromatic else atom.element
    if atom.aromatic and atom.element not in AROMATIC_BRACKET:
        raise ValueError(f"element {atom.element} cannot be aromatic")
    parts = ["[", str(atom.isotope) if atom.isotope else "", sym]
    if atom.chirality:
        parts.append(atom.chirality)
    if atom.explicit_h == 1:
        parts.append("H")
    elif atom.explicit_h > 1:
        parts.append(f"H{atom.explicit_h}")
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        mag = abs(atom.charge)
        parts.append(sign if mag == 1 else f"{sign}{mag}")
    if include_map and atom.atom_map is not None:
        parts.append(f":{atom.atom_map}")
    parts.append("]")
    return "".join(parts)


def _edge_symbol(mol: MoleculeGraph, bond: Bond, from_atom: int) -> str:
    direction = bond.direction_from(from_atom)
    if direction is not None:
        return _DIR_SYMBOL[direction]
    both_aromatic = mol.atoms[bond.a1].aromatic and mol.atoms[bond.a2].aromatic
    if bond.kind == "single" and not both_aromatic:
        return ""
    if bond.kind == "aromatic" and both_aromatic:
        return ""
    return _KIND_SYMBOL[bond.kind]


@dataclass
class _Traversal:
    order: list[int]
    children: dict[int, list[int]]
    closures: list[Bond]


def _assemble(mol: MoleculeGraph, trav: _Traversal, include_maps: bool) -> str:
    pos = {atom: i for i, atom in enumerate(trav.order)}
    opened: dict[int, list[tuple[int, str]]] = {}
    # Allocate ring-closure digits smallest-first over their text spans.
    spans = sorted(
        (min(pos[b.a1], pos[b.a2]), max(pos[b.a1], pos[b.a2]), b)
        for b in trav.closures
    )
    in_use: list[tuple[int, int]] = []  # (close_pos, digit)
    for open_pos, close_pos, bond in spans:
        in_use = [(c, d) for c, d in in_use if c >= open_pos]
        busy = {d for _, d in in_use}
        digit = 1
        while digit in busy:
            digit += 1
        if digit > 99:
            raise ValueError("too many simultaneously open ring bonds")
        in_use.append((close_pos, digit))
        digit_str = str(digit) if digit < 10 else f"%{digit:02d}"
        open_atom = bond.a1 if pos[bond.a1] == open_pos else bond.a2
        close_atom = bond.other(open_atom)
        sym = _edge_symbol(mol, bond, open_atom)
        opened.setdefault(open_atom, []).append((close_pos, sym + digit_str))
        opened.setdefault(close_atom, []).append((open_pos, digit_str))

    out: list[str] = []

    def emit(u: int):
        out.append(atom_token(mol.atoms[u], include_maps))
        for _, digit_str in sorted(opened.get(u, ())):
            out.append(digit_str)
        kids = trav.children.get(u, ())
        for i, c in enumerate(kids):
            bond = mol.bond_between(u, c)
            sym = _edge_symbol(mol, bond, u)
            if i < len(kids) - 1:
                out.append("(")
                out.append(sym)
                emit(c)
                out.append(")")
            else:
                out.append(sym)
                emit(c)

    emit(trav.order[0])
    return "".join(out)


def _index_order_traversal(mol: MoleculeGraph, root: int) -> _Traversal:
    """Deterministic DFS from ``root`` visiting neighbors in index order."""
    order: list[int] = []
    children: dict[int, list[int]] = {}
    closures: list[Bond] = []
    visited: set[int] = set()

    def visit(u: int, parent: int):
        visited.add(u)
        order.append(u)
        nbrs = sorted(w for w, _ in mol.neighbors(u))
        for w in nbrs:
            if w != parent and w in visited:
                closures.append(mol.bond_between(u, w))
        kids = children.setdefault(u, [])
        for w in nbrs:
            if w == parent or w in visited:
                continue
            kids.append(w)
            visit(w, u)

    visit(root, -1)
    # Closure bonds get recorded once, at their later endpoint.
    seen: set[frozenset[int]] = set()
    unique = []
    for b in closures:
        key = frozenset((b.a1, b.a2))
        if key not in seen:
            seen.add(key)
            unique.append(b)
    return _Traversal(order, children, unique)


# --------------------------------------------------------------------------
# Canonical search: lexicographic minimum over all roots and branch orders
# --------------------------------------------------------------------------


class _ComponentCanon:
    """Finds the minimal write-out of one connected component.

    Pure tree regions are minimized once per directed edge and pasted as
    strings; only cyclic cores (and the spine leading to them) are walked by
    the branch-order enumeration, with ring digits resolved per completed
    traversal from the event order of the core atoms.
    """

    def __init__(self, mol: MoleculeGraph, comp: list[int], include_maps: bool):
        self.mol = mol
        self.comp = comp
        self.include_maps = include_maps
        self.cycle_edges: set[frozenset[int]] = set()
        self.cycle_atoms = self._cycle_atoms()
        self.tree_memo: dict[tuple[int, int], str] = {}
        self.pendant_memo: dict[tuple[int, int], bool] = {}
        self.side_memo: dict[tuple[int, int], str] = {}
        self.best: str | None = None

    def _cycle_atoms(self) -> set[int]:
        """Atoms lying on at least one cycle (endpoints of non-bridge edges)."""
        mol = self.mol
        index = {}
        low = {}
        counter = [0]
        bridges: set[frozenset[int]] = set()

        def dfs(u: int, parent_bond: Bond | None):
            index[u] = low[u] = counter[0]
            counter[0] += 1
            for w, b in mol.neighbors(u):
                if b is parent_bond:
                    continue
                if w not in index:
                    dfs(w, b)
                    low[u] = min(low[u], low[w])
                    if low[w] > index[u]:
                        bridges.add(frozenset((u, w)))
                else:
                    low[u] = min(low[u], index[w])

        root = self.comp[0]
        dfs(root, None)
        cyclic: set[int] = set()
        for u in self.comp:
            for w, _ in mol.neighbors(u):
                key = frozenset((u, w))
                if key not in bridges:
                    self.cycle_edges.add(key)
                    cyclic.add(u)
                    cyclic.add(w)
        return cyclic

    def _is_pendant(self, w: int, seen_from: int) -> bool:
        """True when the ``w`` side of edge (seen_from, w) is a pure tree."""
        key = (w, seen_from)
        cached = self.pendant_memo.get(key)
        if cached is not None:
            return cached
        result = True
        if w in self.cycle_atoms:
            result = False
        else:
            # Walk w's side; any cycle atom encountered disqualifies it.
            stack, visited = [w], {seen_from, w}
            while stack and result:
                u = stack.pop()
                for v, _ in self.mol.neighbors(u):
                    if v in visited:
                        continue
                    if v in self.cycle_atoms:
                        result = False
                        break
                    visited.add(v)
                    stack.append(v)
        self.pendant_memo[key] = result
        return result

    def _tree_min(self, w: int, parent: int) -> str:
        """Minimal subtree string entering ``w`` from ``parent`` (tree side)."""
        key = (w, parent)
        cached = self.tree_memo.get(key)
        if cached is not None:
            return cached
        token = atom_token(self.mol.atoms[w], self.include_maps)
        options = []
        for c, b in sorted(self.mol.neighbors(w), key=lambda t: t[0]):
            if c == parent:
                continue
            options.append(_edge_symbol(self.mol, b, w) + self._tree_min(c, w))
        result = token + _min_branch_concat(options)
        self.tree_memo[key] = result
        return result

    def run(self) -> str:
        atoms = self.mol.atoms
        # Only roots whose token starts minimally can win.
        firsts = {r: atom_token(atoms[r], self.include_maps)[0] for r in self.comp}
        min_first = min(firsts.values())
        roots = [r for r in sorted(self.comp) if firsts[r] == min_first]
        if not self.cycle_atoms:
            for r in roots:
                options = []
                for w, b in sorted(self.mol.neighbors(r), key=lambda t: t[0]):
                    options.append(_edge_symbol(self.mol, b, r) + self._tree_min(w, r))
                cand = atom_token(atoms[r], self.include_maps) + _min_branch_concat(
                    options
                )
                if self.best is None or cand < self.best:
                    self.best = cand
            return self.best
        self._adj_cache = self._adjacency()
        for r in roots:
            cand = self._enumerate_min(r, -1)
            if self.best is None or cand < self.best:
                self.best = cand
        return self.best

    def _adjacency(self):
        """Per-directed-edge data: (neighbor, symbol, bond, pendant segment).

        The pendant segment is the fully rendered ``symbol + subtree`` string
        when the neighbor side of the edge is a pure tree, else ``None``.
        """
        mol = self.mol
        adj: dict[int, list[tuple[int, str, Bond, str | None]]] = {}
        tokens: dict[int, str] = {}
        for u in self.comp:
            tokens[u] = atom_token(mol.atoms[u], self.include_maps)
            entries = []
            for w, b in sorted(mol.neighbors(u), key=lambda t: t[0]):
                sym = _edge_symbol(mol, b, u)
                seg = sym + self._tree_min(w, u) if self._is_pendant(w, u) else None
                entries.append((w, sym, b, seg))
            adj[u] = entries
        return adj, tokens

    def _side_min(self, start: int, entry: int) -> str:
        """Minimal string of the ``start`` side of bridge (entry, start).

        Only consulted from positions where no ring-closure digit is in
        flight, so the side allocates digits as if standalone and the result
        is context-free; the memo is shared across roots and arrangements.
        """
        key = (start, entry)
        cached = self.side_memo.get(key)
        if cached is None:
            cached = self._enumerate_min(start, entry)
            self.side_memo[key] = cached
        return cached

    def _enumerate_min(self, root: int, root_parent: int) -> str:
        """Exhaustive branch-order minimum of the subgraph reachable from
        ``root`` without crossing back to ``root_parent``.

        Pure-tree branches paste their memoized minima; bridge branches into
        separate ring systems paste recursively computed side minima when no
        ring digit is open; branches inside the current ring region are
        enumerated inline.
        """
        adj, tokens = self._adj_cache
        cycle_edges = self.cycle_edges
        visited: set[int] = set()
        pos: dict[int, int] = {}
        slot: dict[int, int] = {}
        closures: list[Bond] = []
        pieces: list[str] = []
        counter = [0]
        open_rings = [0]
        best: list[str | None] = [None]

        def visit(u: int, parent: int, cont):
            visited.add(u)
            pos[u] = counter[0]
            counter[0] += 1
            pieces.append(tokens[u])
            slot[u] = len(pieces)
            pieces.append("")
            entries = adj[u]
            my_closures = []
            ring_delta = 0
            for w, _, b, _ in entries:
                if frozenset((u, w)) in cycle_edges:
                    ring_delta += -1 if w in visited else 1
                if w != parent and w in visited:
                    my_closures.append(b)
            open_rings[0] += ring_delta
            closures.extend(my_closures)
            candidates = tuple(
                e for e in entries if e[0] != parent and e[0] not in visited
            )

            def orders(remaining, last_paren, cont2):
                if not remaining:
                    if last_paren is None:
                        cont2()
                    else:
                        i, j = last_paren
                        save_i, save_j = pieces[i], pieces[j]
                        pieces[i] = pieces[j] = ""
                        cont2()
                        pieces[i], pieces[j] = save_i, save_j
                    return
                tried: set[str] = set()
                for idx, entry in enumerate(remaining):
                    w, sym, _, seg = entry
                    rest = remaining[:idx] + remaining[idx + 1 :]
                    if w in visited:
                        # Reached through a cycle inside an earlier branch;
                        # its closure was recorded at the later endpoint.
                        orders(rest, last_paren, cont2)
                        continue
                    if (
                        seg is None
                        and open_rings[0] == 0
                        and frozenset((u, w)) not in cycle_edges
                    ):
                        # Bridge into a separate ring system with no digit in
                        # flight: the side minimum is context-free.
                        seg = sym + self._side_min(w, u)
                    mark = len(pieces)
                    if seg is not None:
                        if seg in tried:
                            continue
                        tried.add(seg)
                        pieces.append("(")
                        pieces.append(seg)
                        pieces.append(")")
                        orders(rest, (mark, mark + 2), cont2)
                        del pieces[mark:]
                    else:
                        pieces.append("(")
                        pieces.append(sym)
                        visit(
                            w,
                            u,
                            lambda rest=rest, mark=mark: (
                                pieces.append(")"),
                                orders(rest, (mark, len(pieces) - 1), cont2),
                                pieces.pop(),
                            ),
                        )
                        del pieces[mark:]

            orders(candidates, None, cont)
            for _ in my_closures:
                closures.pop()
            open_rings[0] -= ring_delta
            counter[0] -= 1
            del pos[u]
            del slot[u]
            visited.discard(u)
            del pieces[-2:]

        def complete():
            overrides: dict[int, str] = {}
            if closures:
                for atom, parts in _ring_parts(
                    self.mol, pos, closures, self.include_maps
                ).items():
                    overrides[slot[atom]] = "".join(t for _, t in sorted(parts))
                s = "".join(overrides.get(i, p) for i, p in enumerate(pieces))
            else:
                s = "".join(pieces)
            if best[0] is None or s < best[0]:
                best[0] = s

        visit(root, root_parent, complete)
        return best[0]


def _min_branch_concat(options: list[str]) -> str:
    """Minimal concatenation of branch segments, all but the last wrapped."""
    if not options:
        return ""
    if len(options) == 1:
        return options[0]
    best = None
    for perm in set(permutations(options)):
        s = "".join(f"({x})" for x in perm[:-1]) + perm[-1]
        if best is None or s < best:
            best = s
    return best


def _ring_parts(
    mol: MoleculeGraph, pos: dict[int, int], closures: list[Bond], include_maps: bool
) -> dict[int, list[tuple[int, str]]]:
    """Per-atom ring-closure digit fragments for one traversal.

    Digits are assigned smallest-first in span order of the atom emission
    events; a digit frees up strictly after its closing atom.
    """
    parts: dict[int, list[tuple[int, str]]] = {}
    spans = sorted(
        (min(pos[b.a1], pos[b.a2]), max(pos[b.a1], pos[b.a2]), b) for b in closures
    )
    active: list[tuple[int, int]] = []
    for open_pos, close_pos, bond in spans:
        active = [(c, d) for c, d in active if c >= open_pos]
        busy = {d for _, d in active}
        digit = 1
        while digit in busy:
            digit += 1
        if digit > 99:
            raise ValueError("too many simultaneously open ring bonds")
        active.append((close_pos, digit))
        text = str(digit) if digit < 10 else f"%{digit:02d}"
        opener = bond.a1 if pos[bond.a1] == open_pos else bond.a2
        closer = bond.other(opener)
        parts.setdefault(opener, []).append(
            (close_pos, _edge_symbol(mol, bond, opener) + text)
        )
        parts.setdefault(closer, []).append((open_pos, text))
    return parts


def _component_min(mol: MoleculeGraph, comp: list[int], include_maps: bool) -> str:
    return _ComponentCanon(mol, comp, include_maps).run()


def write_smiles(mol: MoleculeGraph, root: int | None = None) -> str:
    """Write a SMILES string preserving every atom attribute, maps included.

    With ``root`` given, the component containing it is written first rooted
    at that atom (neighbors in index order); remaining components follow in
    sorted canonical-form order.  Without a root every component is written
    in its minimal form and components are sorted.
    """
    if len(mol) == 0:
        raise ValueError("cannot write an empty molecule")
    comps = mol.component_indices()
    if root is None:
        return ".".join(sorted(_component_min(mol, c, True) for c in comps))
    if not (0 <= root < len(mol)):
        raise ValueError(f"invalid root index {root}")
    rooted = next(c for c in comps if root in c)
    first = _assemble(mol, _index_order_traversal(mol, root), True)
    rest = sorted(_component_min(mol, c, True) for c in comps if c is not rooted)
    return ".".join([first] + rest)


@lru_cache(maxsize=1 << 18)
def _canonicalize_cached(mol: MoleculeGraph) -> str:
    stripped = mol.normalized_for_canonical()
    comps = stripped.component_indices()
    return ".".join(sorted(_component_min(stripped, c, False) for c in comps))


def canonicalize(mol: MoleculeGraph) -> str:
    """Canonical SMILES: per-component minimal write-out over all roots and
    branch orders, with atom maps stripped, redundant explicit hydrogens
    dropped, and components sorted lexicographically and dot-joined."""
    if len(mol) == 0:
        raise ValueError("cannot canonicalize an empty molecule")
    return _canonicalize_cached(mol)


@lru_cache(maxsize=1 << 18)
def canonical_smiles(text: str) -> str:
    """Parse-and-canonicalize convenience for string-level pipelines."""
    return canonicalize(parse_smiles(text))


def isomorphism_key(mol: MoleculeGraph) -> tuple[str, ...]:
    """Attribute-complete canonical key; equal keys mean isomorphic graphs."""
    comps = mol.component_indices()
    return tuple(sorted(_component_min(mol, c, True) for c in comps))


def is_isomorphic(a: MoleculeGraph, b: MoleculeGraph) -> bool:
    """Attribute-preserving isomorphism including maps, charges and tags."""
    if len(a) != len(b) or len(a.bonds) != len(b.bonds):
        return False
    return isomorphism_key(a) == isomorphism_key(b)


def largest_fragment(mol: MoleculeGraph) -> MoleculeGraph:
    """Connected component with the most heavy atoms; ties break on the
    smallest canonical string."""
    if len(mol) == 0:
        raise ValueError("empty molecule has no fragments")
    parts = mol.components()
    return min(parts, key=lambda m: (-m.heavy_atom_count(), canonicalize(m)))


# --------------------------------------------------------------------------
# Exhaustive traversal enumeration (small graphs: template patterns)
# --------------------------------------------------------------------------


def enumerate_min_traversals(
    mol: MoleculeGraph, include_maps: bool = False, limit: int = 200_000
) -> tuple[str, list[_Traversal]]:
    """Minimal string of a connected graph plus every traversal achieving it.

    Exhaustive over roots and branch orders; intended for small graphs such
    as template patterns.  ``limit`` bounds the number of traversals walked.
    """
    if len(mol) == 0:
        raise ValueError("empty graph")
    comp = mol.component_indices()
    if len(comp) != 1:
        raise ValueError("enumerate_min_traversals expects a connected graph")
    best: list[str | None] = [None]
    winners: list[_Traversal] = []
    count = [0]

    def search(root: int):
        order: list[int] = []
        children: dict[int, list[int]] = {}
        closures: list[Bond] = []
        visited: set[int] = set()

        def visit(u: int, parent: int, cont):
            visited.add(u)
            order.append(u)
            children[u] = []
            my_closures = [
                b for w, b in mol.neighbors(u) if w != parent and w in visited
            ]
            closures.extend(my_closures)
            candidates = sorted(
                w for w, _ in mol.neighbors(u) if w != parent and w not in visited
            )

            def orders(remaining: tuple[int, ...], cont2):
                if not remaining:
                    cont2()
                    return
                for w in remaining:
                    rest = tuple(x for x in remaining if x != w)
                    if w in visited:
                        orders(rest, cont2)
                        continue
                    children[u].append(w)
                    visit(w, u, lambda: orders(rest, cont2))
                    children[u].pop()

            orders(tuple(candidates), cont)
            for _ in my_closures:
                closures.pop()
            order.pop()
            visited.discard(u)
            del children[u]

        def complete():
            count[0] += 1
            if count[0] > limit:
                raise RuntimeError("traversal enumeration budget exceeded")
            trav = _Traversal(
                list(order), {k: list(v) for k, v in children.items()}, list(closures)
            )
            s = _assemble(mol, trav, include_maps)
            if best[0] is None or s < best[0]:
                best[0] = s
                winners.clear()
                winners.append(trav)
            elif s == best[0]:
                winners.append(trav)

        visit(root, -1, complete)

    for root in range(len(mol)):
        search(root)
    return best[0], winners
