"""Coordinate block structures for structured mean-field families."""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EmptyBlock, InvalidBlockStructure


@dataclass(frozen=True)
class BlockStructure:
    """Ordered partition of the coordinate set {0, ..., dims-1}.

    Blocks are stored as sorted tuples of coordinate indices. They must be
    pairwise disjoint, nonempty, and cover the full coordinate set.
    """

    dims: int
    blocks: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        blocks = tuple(tuple(sorted(b)) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        seen: set[int] = set()
        for b in blocks:
            if not b:
                raise EmptyBlock("empty coordinate block")
            for i in b:
                if not 0 <= i < self.dims:
                    raise InvalidBlockStructure(f"coordinate {i} out of range")
                if i in seen:
                    raise InvalidBlockStructure(f"coordinate {i} appears twice")
                seen.add(i)
        if seen != set(range(self.dims)):
            raise InvalidBlockStructure("blocks do not cover the coordinate set")

    @classmethod
    def fully_factorized(cls, dims: int) -> "BlockStructure":
        return cls(dims, tuple((i,) for i in range(dims)))

    @classmethod
    def two_block(cls, dims: int, split: int) -> "BlockStructure":
        """Split coordinates into (0..split-1) and (split..dims-1)."""
        return cls(dims, (tuple(range(split)), tuple(range(split, dims))))

    @property
    def m(self) -> int:
        return len(self.blocks)

    def complement(self, b: int) -> tuple[int, ...]:
        """Coordinates outside block b, in ascending order."""
        inside = set(self.blocks[b])
        return tuple(i for i in range(self.dims) if i not in inside)

    def block_of(self, coord: int) -> int:
        for k, b in enumerate(self.blocks):
            if coord in b:
                return k
        raise InvalidBlockStructure(f"coordinate {coord} not in any block")

    def to_json_dict(self) -> dict:
        return {"dims": self.dims, "blocks": [list(b) for b in self.blocks]}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "BlockStructure":
        return cls(int(obj["dims"]), tuple(tuple(b) for b in obj["blocks"]))
