"""Tensor expressions and their flat-index normal forms.

A kernel is first written as a small expression tree (dot, matrix
product, outer product, elementwise add, scalar divide, or the
conjugate-gradient update).  ``normalize`` lowers the tree to a normal
form: an assignment to a flat output index, a set of element loops, and
a body whose only memory accesses are affine functions of loop
variables.  No multidimensional access survives, and reductions get a
single accumulator each.

The normal form pretty-prints to a canonical text used in golden tests,
for example::

    C[i*2+j] = sum(k<2) A[i*2+k]*B[k*2+j]

Evaluation of normal forms lives in the kernels module; cost prediction
over them lives in the planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

__all__ = [
    "Affine",
    "Ref",
    "Mul",
    "Add",
    "Div",
    "Sum",
    "NormalForm",
    "Leaf",
    "Multiply",
    "SumReduce",
    "Dot",
    "MatMul",
    "OuterProduct",
    "ElemAdd",
    "ScalarDivide",
    "CGKernel",
    "dot_expr",
    "matmul_expr",
    "outer_expr",
    "cg_expr",
    "kernel_expr",
    "normalize",
    "reuse_census",
    "CensusRecord",
    "apply_tiling",
]


# ---------------------------------------------------------------------------
# normal-form IR


@dataclass(frozen=True)
class Affine:
    """Affine index expression with a fixed print order.

    ``atoms`` is a sequence of ('c', const) and ('t', var, coef)
    entries; the order is preserved so that the canonical text can
    write A[j+i*n] and A[i*n+k] as the kernels traditionally do.
    """

    atoms: Tuple[tuple, ...]

    @staticmethod
    def var(name: str, coef: int = 1) -> "Affine":
        return Affine((("t", name, coef),))

    @staticmethod
    def const(value: int) -> "Affine":
        return Affine((("c", value),))

    def __add__(self, other: "Affine") -> "Affine":
        return Affine(self.atoms + other.atoms)

    def free_vars(self) -> Tuple[str, ...]:
        return tuple(a[1] for a in self.atoms if a[0] == "t")

    def evaluate(self, env: dict) -> int:
        off = 0
        for a in self.atoms:
            if a[0] == "c":
                off += a[1]
            else:
                off += env[a[1]] * a[2]
        return off

    def substitute(self, var: str, repl: "Affine") -> "Affine":
        out = []
        for a in self.atoms:
            if a[0] == "t" and a[1] == var:
                for r in repl.atoms:
                    if r[0] == "c":
                        out.append(("c", r[1] * a[2]))
                    else:
                        out.append(("t", r[1], r[2] * a[2]))
            else:
                out.append(a)
        return Affine(tuple(out))

    def __str__(self) -> str:
        parts = []
        for a in self.atoms:
            if a[0] == "c":
                parts.append(str(a[1]))
            elif a[2] == 1:
                parts.append(a[1])
            else:
                parts.append(f"{a[1]}*{a[2]}")
        return "+".join(parts) if parts else "0"


@dataclass(frozen=True)
class Ref:
    array: str
    index: Affine

    def __str__(self) -> str:
        return f"{self.array}[{self.index}]"


@dataclass(frozen=True)
class Mul:
    """Ordered product; factors print left to right joined by '*'."""

    factors: Tuple[object, ...]

    def __str__(self) -> str:
        return "*".join(_factor_str(f) for f in self.factors)


@dataclass(frozen=True)
class Add:
    terms: Tuple[object, ...]

    def __str__(self) -> str:
        return " + ".join(str(t) for t in self.terms)


@dataclass(frozen=True)
class Div:
    num: object
    den: object

    def __str__(self) -> str:
        return f"({self.num})/({self.den})"


@dataclass(frozen=True)
class Sum:
    """Reduction over one accumulator.

    ``indices`` may hold several (var, extent) pairs: a blocked
    reduction keeps a single Sum node with a split index so that the
    accumulator, and therefore the rounding count, is unchanged.
    The index space is enumerated in row-major order.
    """

    indices: Tuple[Tuple[str, int], ...]
    body: object

    def __str__(self) -> str:
        prefix = " ".join(f"sum({v}<{n})" for v, n in self.indices)
        return f"{prefix} {self.body}"


def _factor_str(f) -> str:
    # Div carries its own parentheses; bare sums get wrapped.
    if isinstance(f, (Sum, Add)):
        return f"({f})"
    return str(f)


@dataclass(frozen=True)
class NormalForm:
    """output[out_index] = body, under the given element loops."""

    output: str
    out_extent: int
    out_index: Affine
    loops: Tuple[Tuple[str, int], ...]
    body: object
    operands: Tuple[Tuple[str, int], ...]  # (name, flat extent), sorted

    def __str__(self) -> str:
        return f"{self.output}[{self.out_index}] = {self.body}"

    @property
    def reduction_depth(self) -> int:
        """Summation levels to a scalar: ceil(log2(extent)) per sum index."""
        return _depth(self.body)

    def operand_extent(self, name: str) -> int:
        for nm, ext in self.operands:
            if nm == name:
                return ext
        raise KeyError(name)


def _depth(node) -> int:
    if isinstance(node, Sum):
        own = sum((n - 1).bit_length() for _, n in node.indices)
        return own + _depth(node.body)
    if isinstance(node, Mul):
        return max((_depth(f) for f in node.factors), default=0)
    if isinstance(node, Add):
        return max((_depth(t) for t in node.terms), default=0)
    if isinstance(node, Div):
        return max(_depth(node.num), _depth(node.den))
    return 0


# ---------------------------------------------------------------------------
# expression trees


@dataclass(frozen=True)
class Leaf:
    name: str
    dims: Tuple[int, ...]


@dataclass(frozen=True)
class Multiply:
    a: object
    b: object
    pattern: str = "elementwise"


@dataclass(frozen=True)
class SumReduce:
    axes: Tuple[int, ...]
    child: object


@dataclass(frozen=True)
class Dot:
    a: object
    b: object


@dataclass(frozen=True)
class MatMul:
    a: object
    b: object


@dataclass(frozen=True)
class OuterProduct:
    a: object
    b: object


@dataclass(frozen=True)
class ElemAdd:
    a: object
    b: object


@dataclass(frozen=True)
class ScalarDivide:
    a: object
    b: object


@dataclass(frozen=True)
class CGKernel:
    n: int


def dot_expr(n: int) -> Dot:
    return Dot(Leaf("X", (n,)), Leaf("Y", (n,)))


def matmul_expr(n: int) -> MatMul:
    return MatMul(Leaf("A", (n, n)), Leaf("B", (n, n)))


def outer_expr(n: int, m: Optional[int] = None) -> OuterProduct:
    return OuterProduct(Leaf("X", (n,)), Leaf("Y", (m if m is not None else n,)))


def cg_expr(n: int) -> CGKernel:
    return CGKernel(n)


def kernel_expr(kind: str, n: int):
    table = {"dot": dot_expr, "matmul": matmul_expr, "outer": outer_expr, "cg": cg_expr}
    if kind not in table:
        raise ValueError(f"unknown kernel {kind!r}")
    return table[kind](n)


class NormalizeError(ValueError):
    pass


def _leaf_vector(e, what: str) -> Tuple[str, int]:
    if not isinstance(e, Leaf) or len(e.dims) != 1:
        raise NormalizeError(f"{what} must be a vector leaf, got {type(e).__name__}")
    return e.name, e.dims[0]


def normalize(e) -> NormalForm:
    """Lower an expression tree to its flat-index normal form."""
    v = Affine.var

    if isinstance(e, Dot):
        xa, n = _leaf_vector(e.a, "dot operand")
        xb, nb = _leaf_vector(e.b, "dot operand")
        if n != nb:
            raise NormalizeError(f"dot length mismatch: {n} vs {nb}")
        body = Sum((("j", n),), Mul((Ref(xa, v("j")), Ref(xb, v("j")))))
        return NormalForm("C", 1, Affine.const(0), (), body, ((xa, n), (xb, n)))

    if isinstance(e, MatMul):
        if not (isinstance(e.a, Leaf) and isinstance(e.b, Leaf)):
            raise NormalizeError("matmul operands must be leaves")
        if len(e.a.dims) != 2 or len(e.b.dims) != 2:
            raise NormalizeError("matmul operands must be matrices")
        n = e.a.dims[0]
        if e.a.dims != (n, n) or e.b.dims != (n, n):
            raise NormalizeError("matmul supports square operands only")
        body = Sum(
            (("k", n),),
            Mul((Ref(e.a.name, v("i", n) + v("k")), Ref(e.b.name, v("k", n) + v("j")))),
        )
        return NormalForm(
            "C",
            n * n,
            v("i", n) + v("j"),
            (("i", n), ("j", n)),
            body,
            ((e.a.name, n * n), (e.b.name, n * n)),
        )

    if isinstance(e, OuterProduct):
        xa, n = _leaf_vector(e.a, "outer operand")
        xb, m = _leaf_vector(e.b, "outer operand")
        body = Mul((Ref(xa, v("i")), Ref(xb, v("j"))))
        return NormalForm(
            "C", n * m, v("i", m) + v("j"), (("i", n), ("j", m)), body, ((xa, n), (xb, m))
        )

    if isinstance(e, ElemAdd):
        xa, n = _leaf_vector(e.a, "add operand")
        xb, nb = _leaf_vector(e.b, "add operand")
        if n != nb:
            raise NormalizeError(f"add length mismatch: {n} vs {nb}")
        body = Add((Ref(xa, v("i")), Ref(xb, v("i"))))
        return NormalForm("C", n, v("i"), (("i", n),), body, ((xa, n), (xb, n)))

    if isinstance(e, ScalarDivide):
        na = normalize(e.a)
        nb = normalize(e.b)
        if na.out_extent != 1 or nb.out_extent != 1 or na.loops or nb.loops:
            raise NormalizeError("scalar-divide requires scalar children")
        ops = tuple(sorted(set(na.operands) | set(nb.operands)))
        return NormalForm("C", 1, Affine.const(0), (), Div(na.body, nb.body), ops)

    if isinstance(e, SumReduce):
        # Two supported spellings: full reduction of a vector, and full
        # reduction of an elementwise product (the dot product).
        if e.axes != (0,):
            raise NormalizeError("sum-reduce supports axis 0 only")
        child = e.child
        if isinstance(child, Leaf) and len(child.dims) == 1:
            n = child.dims[0]
            body = Sum((("j", n),), Ref(child.name, v("j")))
            return NormalForm("C", 1, Affine.const(0), (), body, ((child.name, n),))
        if isinstance(child, Multiply) and child.pattern == "elementwise":
            xa, n = _leaf_vector(child.a, "multiply operand")
            xb, nb = _leaf_vector(child.b, "multiply operand")
            if n != nb:
                raise NormalizeError(f"multiply length mismatch: {n} vs {nb}")
            body = Sum((("j", n),), Mul((Ref(xa, v("j")), Ref(xb, v("j")))))
            return NormalForm("C", 1, Affine.const(0), (), body, ((xa, n), (xb, n)))
        raise NormalizeError(f"unsupported sum-reduce child {type(child).__name__}")

    if isinstance(e, Multiply):
        if e.pattern != "elementwise":
            raise NormalizeError(f"unsupported multiply pattern {e.pattern!r}")
        xa, n = _leaf_vector(e.a, "multiply operand")
        xb, nb = _leaf_vector(e.b, "multiply operand")
        if n != nb:
            raise NormalizeError(f"multiply length mismatch: {n} vs {nb}")
        body = Mul((Ref(xa, v("i")), Ref(xb, v("i"))))
        return NormalForm("C", n, v("i"), (("i", n),), body, ((xa, n), (xb, n)))

    if isinstance(e, CGKernel):
        n = e.n
        num = Sum((("j", n),), Mul((Ref("R", v("j")), Ref("R", v("j")))))
        den = Sum(
            (("i", n),),
            Sum(
                (("j", n),),
                Mul((Ref("P", v("i")), Ref("A", v("j") + v("i", n)), Ref("P", v("j")))),
            ),
        )
        body = Add((Ref("X", v("k")), Mul((Ref("P", v("k")), Div(num, den)))))
        return NormalForm(
            "X",
            2 * n,
            Affine.const(n) + v("k"),
            (("k", n),),
            body,
            (("A", n * n), ("P", n), ("R", n), ("X", 2 * n)),
        )

    if isinstance(e, Leaf):
        raise NormalizeError("a bare leaf is not a kernel")
    raise NormalizeError(f"unsupported node {type(e).__name__}")


# ---------------------------------------------------------------------------
# census and tiling


class CensusRecord(NamedTuple):
    uses: int
    mults: int
    depth: int


def _walk_counts(node, trip: int, counts: dict, mults: list) -> None:
    """Accumulate read counts per array and multiplication trip counts.

    ``trip`` is the number of times the enclosing loops execute this
    node; each Sum multiplies it by its extents.
    """
    if isinstance(node, Ref):
        counts[node.array] = counts.get(node.array, 0) + trip
    elif isinstance(node, Sum):
        inner = trip
        for _, ext in node.indices:
            inner *= ext
        _walk_counts(node.body, inner, counts, mults)
    elif isinstance(node, Mul):
        mults.append(trip * (len(node.factors) - 1))
        for f in node.factors:
            _walk_counts(f, trip, counts, mults)
    elif isinstance(node, Add):
        for t in node.terms:
            _walk_counts(t, trip, counts, mults)
    elif isinstance(node, Div):
        _walk_counts(node.num, trip, counts, mults)
        _walk_counts(node.den, trip, counts, mults)


def reuse_census(e, n: Optional[int] = None) -> CensusRecord:
    """How often each input element is read, and how much work results.

    Derived from the normal form: reads per array over the whole
    iteration space divided by the input element count, the total
    multiplication count, and the summation depth (levels of pairwise
    combining to reach a scalar).
    """
    if isinstance(e, str):
        e = kernel_expr(e, n)
    if not isinstance(e, (Dot, MatMul, OuterProduct)):
        raise ValueError("census applies to dot, matmul, and outer kernels")
    nf = normalize(e)
    trip = 1
    for _, ext in nf.loops:
        trip *= ext
    counts: dict = {}
    mults: list = []
    _walk_counts(nf.body, trip, counts, mults)
    total_reads = sum(counts.values())
    total_elems = sum(ext for _, ext in nf.operands)
    uses, rem = divmod(total_reads, total_elems)
    if rem:
        raise ValueError("non-uniform reuse; census undefined")
    return CensusRecord(uses, sum(mults), nf.reduction_depth)


def _tile_node(node, var: str, block: int, outer: str, inner: str):
    if isinstance(node, Ref):
        repl = Affine.var(outer, block) + Affine.var(inner)
        return Ref(node.array, node.index.substitute(var, repl))
    if isinstance(node, Sum):
        hit = any(v == var for v, _ in node.indices)
        if hit:
            idx = []
            for v, ext in node.indices:
                if v == var:
                    if ext % block:
                        raise ValueError(f"block {block} does not divide extent {ext}")
                    idx.append((outer, ext // block))
                    idx.append((inner, block))
                else:
                    idx.append((v, ext))
            return Sum(tuple(idx), _tile_node(node.body, var, block, outer, inner))
        return Sum(node.indices, _tile_node(node.body, var, block, outer, inner))
    if isinstance(node, Mul):
        return Mul(tuple(_tile_node(f, var, block, outer, inner) for f in node.factors))
    if isinstance(node, Add):
        return Add(tuple(_tile_node(t, var, block, outer, inner) for t in node.terms))
    if isinstance(node, Div):
        return Div(
            _tile_node(node.num, var, block, outer, inner),
            _tile_node(node.den, var, block, outer, inner),
        )
    return node


def apply_tiling(nf: NormalForm, tiles: dict) -> NormalForm:
    """Split loop variables into (outer, inner) pairs of the given blocks.

    A reduction variable stays inside its Sum node as a lifted index
    pair, preserving the single accumulator; an element loop splits
    into two loops.  Blocks of 1 and full-extent blocks are identity
    splits kept for uniformity.  Requires variable names to be unique
    across the form (true for dot/matmul/outer).
    """
    out = nf
    for var, block in tiles.items():
        names = [v for v, _ in out.loops]
        _collect_sum_vars(out.body, names)
        if names.count(var) > 1:
            raise ValueError(f"variable {var} is not unique; cannot tile")
        if var not in names:
            raise ValueError(f"no loop named {var}")
        outer, inner = f"{var}o", f"{var}i"
        loops = []
        for v, ext in out.loops:
            if v == var:
                if ext % block:
                    raise ValueError(f"block {block} does not divide extent {ext}")
                loops.append((outer, ext // block))
                loops.append((inner, block))
            else:
                loops.append((v, ext))
        body = _tile_node(out.body, var, block, outer, inner)
        out_index = out.out_index.substitute(
            var, Affine.var(outer, block) + Affine.var(inner)
        )
        out = NormalForm(
            out.output, out.out_extent, out_index, tuple(loops), body, out.operands
        )
    return out


def _collect_sum_vars(node, into: list) -> None:
    if isinstance(node, Sum):
        into.extend(v for v, _ in node.indices)
        _collect_sum_vars(node.body, into)
    elif isinstance(node, Mul):
        for f in node.factors:
            _collect_sum_vars(f, into)
    elif isinstance(node, Add):
        for t in node.terms:
            _collect_sum_vars(t, into)
    elif isinstance(node, Div):
        _collect_sum_vars(node.num, into)
        _collect_sum_vars(node.den, into)
