"""Deterministic tensor kernels on posit arithmetic.

The package has three layers.  The numeric layer (`posit`, `quire`)
implements a tapered-precision real format and a wide fixed-point
accumulator that sums products exactly, deferring all rounding to a
single final step.  The expression layer (`arrays`, `exprs`) flattens
tensor kernels into one-dimensional indexing normal forms that make
every memory access explicit.  The execution layer (`backends`,
`schedule`, `kernels`, `planner`) evaluates those forms under arbitrary
blocked/parallel schedules and predicts which data layout minimizes
memory traffic.

With the exact accumulator, the bits of a reduction are invariant under
the schedule; with conventional floats they are not, and the kernels
here make that difference observable and testable.
"""

from .posit import POSIT8, POSIT16, POSIT32, POSIT64, PositConfig
from .quire import Quire, QuireConfig, exact_dot

__all__ = [
    "PositConfig",
    "POSIT8",
    "POSIT16",
    "POSIT32",
    "POSIT64",
    "Quire",
    "QuireConfig",
    "exact_dot",
]

__version__ = "0.1.0"
