"""Circular environment fingerprints and Tanimoto similarity.

Bits are set from a seeded, platform-independent 64-bit hash of each atom's
radius-r neighborhood encoding, for r = 0..radius.  The encoding covers
element, formal charge, degree, aromatic flags and bond kinds; atom maps,
isotopes and hydrogen counts are excluded.  Identical graphs therefore yield
bit-identical fingerprints on any machine.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable

from .chemgraph import MoleculeGraph

# Published constant; changing it changes every fingerprint.
HASH_KEY = b"rxnforge.fp.v1"

DEFAULT_RADIUS = 2
DEFAULT_LENGTH = 2048


def _hash64(payload: str) -> int:
    digest = hashlib.blake2b(
        payload.encode("utf-8"), digest_size=8, key=HASH_KEY
    ).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class FingerprintBitset:
    """Fixed-length binary fingerprint; ``bits`` is a Python int bitmask."""

    bits: int
    length: int = DEFAULT_LENGTH
    radius: int = DEFAULT_RADIUS

    def popcount(self) -> int:
        return self.bits.bit_count()

    def bit_indices(self) -> list[int]:
        return [i for i in range(self.length) if self.bits >> i & 1]

    def union(self, other: "FingerprintBitset") -> "FingerprintBitset":
        _check_compatible(self, other)
        return FingerprintBitset(self.bits | other.bits, self.length, self.radius)

    def hex(self) -> str:
        width = self.length // 4
        return format(self.bits, f"0{width}x")


def _check_params(radius: int, length: int):
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if length < 64 or length & (length - 1):
        raise ValueError("length must be a power of two >= 64")


def _check_compatible(a: FingerprintBitset, b: FingerprintBitset):
    if a.length != b.length or a.radius != b.radius:
        raise ValueError(
            f"fingerprint parameters differ: "
            f"({a.length}, r{a.radius}) vs ({b.length}, r{b.radius})"
        )


def environment_hashes(mol: MoleculeGraph, radius: int) -> list[int]:
    """64-bit environment hash per (atom, r) pair, r = 0..radius."""
    codes = []
    for i, atom in enumerate(mol.atoms):
        codes.append(
            _hash64(f"a|{atom.element}|{atom.charge}|{mol.degree(i)}|{int(atom.aromatic)}")
        )
    out = list(codes)
    for r in range(1, radius + 1):
        nxt = []
        for i in range(len(mol.atoms)):
            parts = sorted(
                f"{bond.kind}:{codes[bond.other(i)]:016x}" for bond in mol._adj[i]
            )
            nxt.append(_hash64(f"e|{r}|{codes[i]:016x}|" + ",".join(parts)))
        out.extend(nxt)
        codes = nxt
    return out


def fingerprint(
    mol: MoleculeGraph,
    radius: int = DEFAULT_RADIUS,
    length: int = DEFAULT_LENGTH,
) -> FingerprintBitset:
    """Fingerprint one molecule (multi-component graphs union naturally)."""
    _check_params(radius, length)
    if len(mol) == 0:
        raise ValueError("cannot fingerprint an empty molecule")
    bits = 0
    for code in environment_hashes(mol, radius):
        bits |= 1 << (code % length)
    return FingerprintBitset(bits, length, radius)


def fingerprint_set(
    mols: Iterable[MoleculeGraph],
    radius: int = DEFAULT_RADIUS,
    length: int = DEFAULT_LENGTH,
) -> FingerprintBitset:
    """Union fingerprint of a molecule set (order-invariant)."""
    mols = list(mols)
    if not mols:
        raise ValueError("cannot fingerprint an empty molecule set")
    bits = 0
    for mol in mols:
        bits |= fingerprint(mol, radius, length).bits
    return FingerprintBitset(bits, length, radius)


def tanimoto(a: FingerprintBitset, b: FingerprintBitset) -> float:
    """|a AND b| / |a OR b|; defined as 1.0 when both bitsets are empty."""
    _check_compatible(a, b)
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union
