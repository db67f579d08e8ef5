"""Data-motion cost prediction and layout selection.

Given a normal form and a description of a memory hierarchy, the
planner predicts how many cost units each candidate tiling spends on
cache misses and picks the cheapest.  The footprint model is defined
exactly, so an access-trace simulator can reproduce it number for
number:

  For every hierarchy level and every read reference, partition the
  loops enclosing that reference by the tiling and enumerate the tile
  instances.  In each instance the reference touches a set of lines
  (an element's line is the line of its first byte).  If that set,
  times the line size, fits the level's capacity, the level charges
  one miss per distinct line: the tile's lines are loaded once and
  then hit.  Otherwise every execution of the reference inside the
  instance is charged a miss, including re-reads under loops that do
  not move the address.  Instances are enumerated individually, so
  alignment effects are counted exactly, never extrapolated from the
  first tile.

Only reads are charged: operand traffic is what layout choices move
around; the output stream is written once regardless.

Tile search is exhaustive over divisors of each loop extent, with a
deterministic tie-break (lexicographically smallest block vector), so
the chosen plan is reproducible and provably minimal at desk scale.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .exprs import Add, Div, Mul, NormalForm, Ref, Sum

__all__ = [
    "CostLevel",
    "CostModel",
    "LayoutPlan",
    "parse_cost_model",
    "format_cost_model",
    "loop_occurrences",
    "ref_paths",
    "predict_cost",
    "search",
    "plan",
]


@dataclass(frozen=True)
class CostLevel:
    capacity: int
    line_size: int
    miss_cost: int

    def __post_init__(self) -> None:
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")
        if self.line_size < 1:
            raise ValueError("line size must be >= 1")
        if self.miss_cost < 0:
            raise ValueError("miss cost must be >= 0")
        if self.capacity % self.line_size:
            raise ValueError("line size must divide capacity")


@dataclass(frozen=True)
class CostModel:
    levels: Tuple[CostLevel, ...]
    element_size: int

    def __post_init__(self) -> None:
        if not self.levels:
            raise ValueError("cost model needs at least one level")
        if self.element_size < 1:
            raise ValueError("element size must be >= 1")
        caps = [lv.capacity for lv in self.levels]
        if any(a >= b for a, b in zip(caps, caps[1:])):
            raise ValueError("level capacities must be strictly increasing")


def parse_cost_model(text: str) -> CostModel:
    """Parse the text format: one `level capacity=.. line=.. miss=..`
    line per hierarchy level plus one `element=..` line."""
    levels: List[CostLevel] = []
    element = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("element"):
            _, _, val = line.partition("=")
            element = int(val.strip())
            continue
        if not line.startswith("level"):
            raise ValueError(f"unrecognized cost-model line: {raw!r}")
        fields = dict(f.split("=", 1) for f in line.split()[1:])
        try:
            levels.append(
                CostLevel(
                    int(fields.pop("capacity")),
                    int(fields.pop("line")),
                    int(fields.pop("miss")),
                )
            )
        except KeyError as e:
            raise ValueError(f"cost-model level missing field {e}") from None
        if fields:
            raise ValueError(f"unknown cost-model fields {sorted(fields)}")
    if element is None:
        raise ValueError("cost model needs an element=<bytes> line")
    return CostModel(tuple(levels), element)


def format_cost_model(cm: CostModel) -> str:
    lines = [f"element={cm.element_size}"]
    lines += [
        f"level capacity={lv.capacity} line={lv.line_size} miss={lv.miss_cost}"
        for lv in cm.levels
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# loop structure of a normal form

Occurrence = Tuple[int, str, int]  # (occurrence id, var name, extent)


def loop_occurrences(nf: NormalForm) -> Tuple[Occurrence, ...]:
    """All loop variables in nesting order.  Ids keep occurrences
    distinct even when a name repeats in sibling scopes, as it does in
    the CG form."""
    occs: List[Occurrence] = []
    for var, ext in nf.loops:
        occs.append((len(occs), var, ext))

    def walk(node) -> None:
        if isinstance(node, Sum):
            for var, ext in node.indices:
                occs.append((len(occs), var, ext))
            walk(node.body)
        elif isinstance(node, Mul):
            for f in node.factors:
                walk(f)
        elif isinstance(node, Add):
            for t in node.terms:
                walk(t)
        elif isinstance(node, Div):
            walk(node.num)
            walk(node.den)

    walk(nf.body)
    return tuple(occs)


def ref_paths(nf: NormalForm) -> Tuple[Tuple[Ref, Tuple[Occurrence, ...]], ...]:
    """Read references paired with every loop occurrence enclosing
    them, outermost first.  Occurrence ids match loop_occurrences.

    The path is syntactic: a loop that never moves the reference's
    address still multiplies how often the reference executes.
    """
    out: List[Tuple[Ref, Tuple[Occurrence, ...]]] = []
    counter = itertools.count()
    base = tuple((next(counter), var, ext) for var, ext in nf.loops)

    def walk(node, path: Tuple[Occurrence, ...]) -> None:
        if isinstance(node, Ref):
            out.append((node, path))
        elif isinstance(node, Sum):
            here = path + tuple(
                (next(counter), var, ext) for var, ext in node.indices
            )
            walk(node.body, here)
        elif isinstance(node, Mul):
            for f in node.factors:
                walk(f, path)
        elif isinstance(node, Add):
            for t in node.terms:
                walk(t, path)
        elif isinstance(node, Div):
            walk(node.num, path)
            walk(node.den, path)

    walk(nf.body, base)
    return tuple(out)


def _validate_tiles(occs: Sequence[Occurrence], tiles: Sequence[int]) -> None:
    if len(tiles) != len(occs):
        raise ValueError(f"need {len(occs)} tile sizes, got {len(tiles)}")
    for (_, var, ext), b in zip(occs, tiles):
        if b < 1 or ext % b:
            raise ValueError(f"tile {b} does not divide extent {ext} of loop {var}")


def predict_cost(nf: NormalForm, tiles: Sequence[int], cm: CostModel) -> int:
    """Cost units spent on misses under the footprint model above.

    ``tiles`` gives one block size per loop occurrence, in
    loop_occurrences order.
    """
    occs = loop_occurrences(nf)
    _validate_tiles(occs, tiles)
    block = {occ[0]: b for occ, b in zip(occs, tiles)}
    esize = cm.element_size

    total = 0
    for lv in cm.levels:
        for ref, path in ref_paths(nf):
            addr_vars = set(ref.index.free_vars())
            used = [(var, ext, block[oid]) for oid, var, ext in path if var in addr_vars]
            silent_instances = 1
            reads_per_instance = 1
            for oid, var, ext in path:
                reads_per_instance *= block[oid]
                if var not in addr_vars:
                    silent_instances *= ext // block[oid]
            # the line set depends only on the address-moving outer
            # coordinates; loops that hold the address still multiply
            # the instance count and the per-instance read count
            charge = 0
            outer_ranges = [range(ext // b) for _, ext, b in used]
            inner_ranges = [range(b) for _, _, b in used]
            for outer in itertools.product(*outer_ranges):
                lines = set()
                for inner in itertools.product(*inner_ranges):
                    env = {
                        var: o * b + i
                        for (var, _, b), o, i in zip(used, outer, inner)
                    }
                    addr = ref.index.evaluate(env)
                    lines.add(addr * esize // lv.line_size)
                if len(lines) * lv.line_size <= lv.capacity:
                    charge += len(lines)
                else:
                    charge += reads_per_instance
            total += charge * silent_instances * lv.miss_cost
    return total


@dataclass(frozen=True)
class LayoutPlan:
    """Chosen blocks per loop occurrence plus the lifts they imply."""

    tiles: Tuple[Tuple[str, int, int], ...]  # (var, extent, block)
    lifts: Tuple[Tuple[str, str, int], ...]  # (operand, var, block)
    predicted_cost: int

    @property
    def blocks(self) -> Tuple[int, ...]:
        return tuple(b for _, _, b in self.tiles)


def _divisors(n: int) -> Tuple[int, ...]:
    return tuple(d for d in range(1, n + 1) if n % d == 0)


def search(nf: NormalForm, cm: CostModel) -> List[Tuple[int, Tuple[int, ...]]]:
    """Exhaustive (cost, blocks) table over all divisor tilings,
    sorted by cost then block vector."""
    occs = loop_occurrences(nf)
    for _, var, ext in occs:
        if ext > 1 << 12:
            raise ValueError(f"loop {var} extent {ext} too large for exhaustive search")
    table = []
    for blocks in itertools.product(*(_divisors(ext) for _, _, ext in occs)):
        table.append((predict_cost(nf, blocks, cm), blocks))
    table.sort()
    return table


def plan(nf: NormalForm, cm: CostModel) -> LayoutPlan:
    """Cheapest divisor tiling; ties go to the smallest block vector."""
    occs = loop_occurrences(nf)
    table = search(nf, cm)
    cost, blocks = table[0]
    tiles = tuple((var, ext, b) for (_, var, ext), b in zip(occs, blocks))
    pos = {oid: k for k, (oid, _, _) in enumerate(occs)}
    lifts = []
    seen = set()
    for ref, path in ref_paths(nf):
        addr_vars = set(ref.index.free_vars())
        for oid, var, ext in path:
            b = blocks[pos[oid]]
            if var in addr_vars and 1 < b < ext and (ref.array, oid) not in seen:
                seen.add((ref.array, oid))
                lifts.append((ref.array, var, b))
    return LayoutPlan(tiles, tuple(lifts), cost)
