"""Schmidt-coefficient algebra: majorization, catalysis and LOCC conversion.

A bipartite pure state is described here only through its ordered Schmidt
coefficients. Deterministic LOCC conversion ``x -> y`` is possible iff ``y``
majorizes ``x``. When it is not, the best exact conversion succeeds with the
minimum tail-sum ratio, and the best deterministic approximate conversion
reaches the fidelity returned by :func:`optimal_fidelity`.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

#: absolute tolerance on cumulative sums in majorization tests
MAJORIZATION_TOL = 1e-12
#: tolerance on the normalization of a SchmidtVector
NORM_TOL = 1e-9

REFERENCE_B = (0.31, 0.31, 0.30, 0.04, 0.04)
REFERENCE_C = (0.48, 0.24, 0.14, 0.14, 0.0)


class SchmidtError(ValueError):
    """Raised for weights that cannot describe a normalized pure state."""


@dataclass(frozen=True, eq=False)
class SchmidtVector:
    """Sorted, normalized Schmidt coefficients of a bipartite pure state.

    Construction validates the invariants; use :func:`make_schmidt` to sort
    and normalize raw weights first.
    """

    coefficients: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coefficients, dtype=float).ravel()
        if arr.size == 0:
            raise SchmidtError("empty coefficient vector")
        if not np.all(np.isfinite(arr)):
            raise SchmidtError("non-finite coefficient")
        if np.any(arr < 0):
            raise SchmidtError("negative coefficient")
        total = arr.sum()
        if abs(total - 1.0) > NORM_TOL:
            raise SchmidtError(f"coefficients sum to {total!r}, not 1")
        if np.any(np.diff(arr) > NORM_TOL):
            raise SchmidtError("coefficients are not sorted non-increasing")
        arr = arr / total
        arr.setflags(write=False)
        object.__setattr__(self, "coefficients", arr)

    def __len__(self):
        return self.coefficients.size

    def __iter__(self):
        return iter(self.coefficients.tolist())

    def __getitem__(self, k):
        return self.coefficients[k]

    def __eq__(self, other):
        if not isinstance(other, SchmidtVector):
            return NotImplemented
        return len(self) == len(other) and bool(np.all(self.coefficients == other.coefficients))

    def __hash__(self):
        return hash(self.coefficients.tobytes())

    def __repr__(self):
        vals = ", ".join(f"{v:.6g}" for v in self.coefficients)
        return f"SchmidtVector([{vals}])"

    @property
    def dim(self) -> int:
        return self.coefficients.size

    @property
    def rank(self) -> int:
        """Number of non-zero coefficients."""
        return int(np.count_nonzero(self.coefficients))

    def padded(self, dim: int) -> "SchmidtVector":
        if dim < self.dim:
            raise ValueError(f"cannot pad dimension {self.dim} down to {dim}")
        if dim == self.dim:
            return self
        return SchmidtVector(np.concatenate([self.coefficients, np.zeros(dim - self.dim)]))

    def tail_sums(self) -> np.ndarray:
        """``E_l = sum_{i >= l} x_i`` for l = 1..n (0-based array)."""
        return np.cumsum(self.coefficients[::-1])[::-1]

    def tolist(self) -> list[float]:
        return self.coefficients.tolist()


@dataclass(frozen=True)
class ConversionReport:
    deterministic: bool
    probability: float
    fidelity: float
    optimal_target: SchmidtVector


def make_schmidt(weights: Sequence[float]) -> SchmidtVector:
    """Sort ``weights`` non-increasing and normalize them to unit sum.

    Trailing zeros are kept, so the dimension is the length of ``weights``.
    """
    arr = np.asarray(weights, dtype=float).ravel()
    if arr.size == 0:
        raise SchmidtError("no weights given")
    if not np.all(np.isfinite(arr)):
        raise SchmidtError("non-finite weight")
    if np.any(arr < 0):
        raise SchmidtError("negative weight")
    total = arr.sum()
    if total <= 0:
        raise SchmidtError("at least one weight must be strictly positive")
    return SchmidtVector(np.sort(arr)[::-1] / total)


def _as_vector(x) -> SchmidtVector:
    return x if isinstance(x, SchmidtVector) else make_schmidt(x)


def pad_pair(x, y) -> tuple[SchmidtVector, SchmidtVector]:
    """Zero-pad two vectors to their common (larger) dimension."""
    x, y = _as_vector(x), _as_vector(y)
    n = max(x.dim, y.dim)
    return x.padded(n), y.padded(n)


def majorizes(y, x) -> bool:
    """True iff ``y`` majorizes ``x``, i.e. ``x -> y`` is a deterministic LOCC map."""
    y, x = pad_pair(y, x)
    return bool(kernels.majorizes(y.coefficients, x.coefficients, MAJORIZATION_TOL))


def tensor_schmidt(x, y) -> SchmidtVector:
    """Schmidt coefficients of the product state ``|x>|y>``."""
    x, y = _as_vector(x), _as_vector(y)
    prod = np.outer(x.coefficients, y.coefficients).ravel()
    return SchmidtVector(np.sort(prod)[::-1])


def is_catalyst(gamma, b, c) -> bool:
    """True iff ``gamma`` enables ``b -> c`` and the conversion is not already possible."""
    b, c = pad_pair(b, c)
    if majorizes(c, b):
        return False
    return majorizes(tensor_schmidt(c, gamma), tensor_schmidt(b, gamma))


def conversion_probability(b, c) -> float:
    """Optimal probability of converting ``b`` exactly into ``c`` by LOCC.

    Minimum over l of E_l(b) / E_l(c), skipping tails where ``c`` has no
    weight. A tail where ``b`` is empty but ``c`` is not yields 0.
    """
    b, c = pad_pair(b, c)
    if majorizes(c, b):
        return 1.0
    p = kernels.min_tail_ratio(b.coefficients, c.coefficients, 0.0)
    return float(min(p, 1.0))


def block_target(b: SchmidtVector, c: SchmidtVector, mask: int) -> np.ndarray:
    """Candidate state for a breakpoint mask: ``c`` rescaled to ``b``'s mass per block."""
    bb, cc = b.coefficients, c.coefficients
    n = bb.size
    chi = np.empty(n)
    start = 0
    for end in range(n):
        if end != n - 1 and not (mask >> end) & 1:
            continue
        block = slice(start, end + 1)
        csum = cc[block].sum()
        if csum > 0:
            chi[block] = cc[block] * (bb[block].sum() / csum)
        else:
            chi[block] = bb[block]
        start = end + 1
    return chi


def pure_fidelity(x, y) -> float:
    """``|<x|y>|^2`` for two states written in a common Schmidt basis."""
    x, y = pad_pair(x, y)
    return float(np.sum(np.sqrt(x.coefficients * y.coefficients)) ** 2)


def optimal_fidelity(b, c) -> tuple[float, SchmidtVector]:
    """Best fidelity with ``c`` reachable from ``b`` by deterministic LOCC.

    Maximizes ``(sum_i sqrt(chi_i c_i))**2`` over states ``chi`` that
    majorize ``b``. The optimum splits the index range into consecutive
    blocks on which ``chi`` is proportional to ``c`` and carries exactly
    ``b``'s mass; every split is enumerated (2**(n-1) candidates).

    Returns ``(fidelity, chi)``.
    """
    b, c = pad_pair(b, c)
    if majorizes(c, b):
        return 1.0, c
    _, mask = kernels.best_breakpoints(b.coefficients, c.coefficients, MAJORIZATION_TOL)
    if mask < 0:  # pragma: no cover - the all-singleton split (chi = b) is always feasible
        raise RuntimeError("no feasible breakpoint split")
    chi = SchmidtVector(block_target(b, c, mask))
    return min(pure_fidelity(chi, c), 1.0), chi


def convert(b, c) -> ConversionReport:
    b, c = pad_pair(b, c)
    det = majorizes(c, b)
    fid, chi = optimal_fidelity(b, c)
    return ConversionReport(
        deterministic=det,
        probability=conversion_probability(b, c),
        fidelity=fid,
        optimal_target=chi,
    )


@functools.lru_cache(maxsize=None)
def reference_states() -> tuple[SchmidtVector, SchmidtVector]:
    """The five-level challenge state ``b`` and catalyst state ``c`` used by the protocol."""
    return SchmidtVector(REFERENCE_B), SchmidtVector(REFERENCE_C)


@functools.lru_cache(maxsize=None)
def reference_p0() -> float:
    """Per-test pass ceiling for an unassisted conversion of ``b`` towards ``c``."""
    b, c = reference_states()
    return optimal_fidelity(b, c)[0]
