"""Exchangeable partitions of {1..n} generated by the cascade occupancy scheme.

Balls sharing a box at generation k share a block of Pi(k); deeper generations
refine shallower ones.  Blocks are tuples of sorted labels, ordered by their
least element, so two partitions are equal iff their representations are.
"""
from dataclasses import dataclass

import numpy as np

from . import cascade
from .errors import EmptyRestriction, GroundSetMismatch, InvalidDistribution
from .occupancy import _check_prob


@dataclass(frozen=True)
class Partition:
    n: int
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(int(i) for i in b)) for b in self.blocks if len(b)),
                              key=lambda b: b[0]))
        seen = [i for b in blocks for i in b]
        if sorted(seen) != list(range(1, self.n + 1)):
            raise ValueError(f"blocks do not partition {{1..{self.n}}}")
        object.__setattr__(self, "blocks", blocks)

    def __len__(self):
        return len(self.blocks)

    @classmethod
    def from_labels(cls, labels):
        """Partition where i and j share a block iff labels[i-1] == labels[j-1]."""
        groups = {}
        for i, lab in enumerate(labels, start=1):
            groups.setdefault(lab, []).append(i)
        return cls(len(labels), tuple(groups.values()))

    def block_of(self):
        """Array a with a[i-1] = index of the block containing i."""
        a = np.empty(self.n, dtype=np.int64)
        for bi, b in enumerate(self.blocks):
            a[np.asarray(b) - 1] = bi
        return a

    def shape(self):
        return tuple(sorted((len(b) for b in self.blocks), reverse=True))

    def __str__(self):
        return "|".join(",".join(map(str, b)) for b in self.blocks)


@dataclass(frozen=True)
class NestedSequence:
    partitions: tuple

    def __post_init__(self):
        ps = self.partitions
        for a, b in zip(ps[1:], ps[:-1]):
            if not is_refinement(a, b):
                raise ValueError("sequence is not nested")

    @property
    def n(self):
        return self.partitions[0].n

    def __getitem__(self, k):
        return self.partitions[k]

    def __len__(self):
        return len(self.partitions)


def partition_from_cascade(law, n, k_max, seed=cascade.DEFAULT_SEED, replica=0):
    """Pi(0), ..., Pi(k_max) from one label-tracking cascade realization."""
    if n < 1:
        raise ValueError("n must be >= 1")
    tree = cascade.grow_occupied_tree(law, n, k_max, seed, replica, track_labels=True)
    parts = [Partition(n, (tuple(range(1, n + 1)),))]
    parts += [Partition(n, tuple(tree.blocks(k))) for k in range(1, k_max + 1)]
    return NestedSequence(tuple(parts))


def is_refinement(pi, rho):
    """True iff every block of pi lies inside a block of rho."""
    if pi.n != rho.n:
        raise GroundSetMismatch(f"ground sets differ: {pi.n} vs {rho.n}")
    owner = rho.block_of()
    return all(len(set(owner[np.asarray(b) - 1])) == 1 for b in pi.blocks)


def restrict(pi, subset):
    """Restriction of pi to ``subset``, relabelled 1..|subset| in increasing order.

    Returns (partition, reindex) with reindex[original label] = new label.
    """
    sub = sorted(set(int(i) for i in subset))
    if not sub:
        raise EmptyRestriction("restriction to the empty set")
    if sub[0] < 1 or sub[-1] > pi.n:
        raise GroundSetMismatch(f"subset not contained in {{1..{pi.n}}}")
    reindex = {old: new for new, old in enumerate(sub, start=1)}
    blocks = [tuple(reindex[i] for i in b if i in reindex) for b in pi.blocks]
    return Partition(len(sub), tuple(b for b in blocks if b)), reindex


def paintbox_sample(p, n, rng):
    """Kingman paintbox: i.i.d. box choices by p; missing mass 1 - sum(p) gives singletons."""
    p = _check_prob(p, defective=True)
    if n < 0:
        raise ValueError("n must be >= 0")
    cum = np.cumsum(p)
    u = rng.random(n)
    box = np.searchsorted(cum, u, side="right")
    # draws beyond the total mass each get their own block
    dust = box >= p.size
    box[dust] = p.size + np.arange(int(dust.sum()))
    return Partition.from_labels(box.tolist())
