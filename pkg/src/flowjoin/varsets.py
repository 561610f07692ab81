"""Bitset-backed variable sets over a fixed, ordered variable universe."""

from __future__ import annotations

from typing import Iterable, Iterator

MAX_VARIABLES = 20


class Universe:
    """Ordered collection of variable names; hands out bitmask-backed VarSets.

    The order of `names` is the canonical variable order used for sorting
    relations, tuples and rendered output.
    """

    __slots__ = ("names", "_index", "_compact")

    def __init__(self, names: Iterable[str]):
        self.names = tuple(names)
        if len(self.names) > MAX_VARIABLES:
            raise ValueError(
                f"at most {MAX_VARIABLES} variables supported, got {len(self.names)}"
            )
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate variable names")
        self._index = {v: i for i, v in enumerate(self.names)}
        # single-char universes render varsets as 'ABC', others as 'A1,A2'
        self._compact = all(len(v) == 1 for v in self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def varset(self, names: Iterable[str] = ()) -> "VarSet":
        mask = 0
        for v in names:
            mask |= 1 << self.index(v)
        return VarSet(self, mask)

    def empty(self) -> "VarSet":
        return VarSet(self, 0)

    def full(self) -> "VarSet":
        return VarSet(self, (1 << len(self.names)) - 1)

    def from_mask(self, mask: int) -> "VarSet":
        return VarSet(self, mask)

    def all_nonempty_subsets(self) -> Iterator["VarSet"]:
        for mask in range(1, 1 << len(self.names)):
            yield VarSet(self, mask)

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, Universe) and self.names == other.names

    def __hash__(self) -> int:
        return hash(self.names)

    def __repr__(self) -> str:
        return f"Universe({list(self.names)!r})"


class VarSet:
    """Immutable set of variables from one Universe, stored as a bitmask."""

    __slots__ = ("universe", "mask")

    def __init__(self, universe: Universe, mask: int):
        self.universe = universe
        self.mask = mask

    @property
    def names(self) -> tuple[str, ...]:
        u = self.universe.names
        return tuple(u[i] for i in range(len(u)) if self.mask >> i & 1)

    def _check(self, other: "VarSet") -> None:
        if self.universe != other.universe:
            raise ValueError("varsets from different universes")

    def __or__(self, other: "VarSet") -> "VarSet":
        self._check(other)
        return VarSet(self.universe, self.mask | other.mask)

    def __and__(self, other: "VarSet") -> "VarSet":
        self._check(other)
        return VarSet(self.universe, self.mask & other.mask)

    def __sub__(self, other: "VarSet") -> "VarSet":
        self._check(other)
        return VarSet(self.universe, self.mask & ~other.mask)

    def __le__(self, other: "VarSet") -> bool:
        self._check(other)
        return self.mask & ~other.mask == 0

    def __lt__(self, other: "VarSet") -> bool:
        return self <= other and self.mask != other.mask

    def isdisjoint(self, other: "VarSet") -> bool:
        self._check(other)
        return self.mask & other.mask == 0

    def __contains__(self, name: str) -> bool:
        return bool(self.mask >> self.universe.index(name) & 1)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __bool__(self) -> bool:
        return self.mask != 0

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VarSet)
            and self.mask == other.mask
            and self.universe == other.universe
        )

    def __hash__(self) -> int:
        return hash((self.universe.names, self.mask))

    def sort_key(self) -> tuple[str, ...]:
        """Lexicographic key on the sorted variable names (universe-independent)."""
        return tuple(sorted(self.names))

    def __str__(self) -> str:
        if not self.mask:
            return "{}"
        sep = "" if self.universe._compact else ","
        return sep.join(sorted(self.names))

    def __repr__(self) -> str:
        return f"VarSet({self})"
