"""Dense pure states of two parties, their Schmidt spectra and marginals.

A :class:`BipartiteState` stores the amplitude matrix ``psi[a, b]`` with the
row index running over Alice's side and the column index over Bob's side.
Each side may be a product of several particles; ``a_dims``/``b_dims`` record
the factorization and ``labels`` names the particles (Alice's first).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .schmidt import SchmidtVector, make_schmidt

STATE_TOL = 1e-9


class StateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BipartiteState:
    amplitudes: np.ndarray
    a_dims: tuple[int, ...] = ()
    b_dims: tuple[int, ...] = ()
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex)
        if amp.ndim != 2:
            raise StateError("amplitudes must be a matrix")
        a_dims = tuple(self.a_dims) or (amp.shape[0],)
        b_dims = tuple(self.b_dims) or (amp.shape[1],)
        if int(np.prod(a_dims)) != amp.shape[0] or int(np.prod(b_dims)) != amp.shape[1]:
            raise StateError(f"factorization {a_dims}x{b_dims} does not match shape {amp.shape}")
        norm = np.vdot(amp, amp).real
        if abs(norm - 1.0) > STATE_TOL:
            raise StateError(f"state norm^2 is {norm!r}, not 1")
        labels = tuple(self.labels)
        if labels and len(labels) != len(a_dims) + len(b_dims):
            raise StateError("one label per particle required")
        if not labels:
            labels = tuple(f"A{i}" for i in range(len(a_dims))) + tuple(f"B{i}" for i in range(len(b_dims)))
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "a_dims", a_dims)
        object.__setattr__(self, "b_dims", b_dims)
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.amplitudes.shape

    @property
    def dims(self) -> tuple[int, ...]:
        return self.a_dims + self.b_dims

    def ket(self) -> np.ndarray:
        return self.amplitudes.ravel()

    def density(self) -> "DensityOperator":
        v = self.ket()
        return DensityOperator(np.outer(v, v.conj()), dims=self.dims)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateError("density matrix must be square")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > STATE_TOL:
            raise StateError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > STATE_TOL:
            raise StateError("density matrix trace is not 1")
        if np.linalg.eigvalsh(m).min() < -STATE_TOL:
            raise StateError("density matrix has a negative eigenvalue")
        dims = tuple(self.dims) or (m.shape[0],)
        if int(np.prod(dims)) != m.shape[0]:
            raise StateError("dims do not match matrix size")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)

    def eigenvalues(self) -> np.ndarray:
        return np.sort(np.linalg.eigvalsh(self.matrix))[::-1]


def embed_schmidt(x, shape: tuple[int, int] | None = None) -> BipartiteState:
    """``sum_k sqrt(x_k) |k>|k>`` as a diagonal amplitude matrix."""
    x = x if isinstance(x, SchmidtVector) else make_schmidt(x)
    n = x.dim
    da, db = shape if shape is not None else (n, n)
    if n > min(da, db):
        x_nz = x.coefficients[min(da, db):]
        if np.any(x_nz > 0):
            raise StateError(f"Schmidt rank {x.rank} does not fit shape {(da, db)}")
        n = min(da, db)
    amp = np.zeros((da, db), dtype=complex)
    idx = np.arange(n)
    amp[idx, idx] = np.sqrt(x.coefficients[:n])
    return BipartiteState(amp)


def product_state(first: BipartiteState, second: BipartiteState, labels: Sequence[str] = ()) -> BipartiteState:
    """Joint state of two independent pairs, grouping each party's particles together.

    Alice's side becomes (first.A..., second.A...) and likewise for Bob.
    """
    amp = np.kron(first.amplitudes, second.amplitudes)
    return BipartiteState(
        amp,
        a_dims=first.a_dims + second.a_dims,
        b_dims=first.b_dims + second.b_dims,
        labels=tuple(labels),
    )


def catalyst_challenge_state(catalyst, challenge) -> BipartiteState:
    """Four-particle state ``|catalyst>|challenge>`` on (gamma_A, beta_A | gamma_B, beta_B)."""
    return product_state(
        embed_schmidt(catalyst),
        embed_schmidt(challenge),
        labels=("gamma_A", "beta_A", "gamma_B", "beta_B"),
    )


def schmidt_of(state: BipartiteState) -> SchmidtVector:
    """Squared singular values of the amplitude matrix, sorted and padded to the smaller side."""
    s = np.linalg.svd(state.amplitudes, compute_uv=False)
    return make_schmidt(s**2)


def _target_ket(target, dims: tuple[int, int]) -> np.ndarray:
    return embed_schmidt(target, shape=dims).ket()


def fidelity_with(rho, target) -> float:
    """``<t|rho|t>`` for the two-particle state ``|t> = sum_k sqrt(t_k)|k>|k>``."""
    if isinstance(rho, BipartiteState):
        t = _target_ket(target, rho.shape)
        return float(min(abs(np.vdot(t, rho.ket())) ** 2, 1.0))
    if isinstance(rho, DensityOperator):
        if len(rho.dims) != 2:
            raise StateError("fidelity target needs a two-particle density operator")
        t = _target_ket(target, (rho.dims[0], rho.dims[1]))
        return float(min(max(np.vdot(t, rho.matrix @ t).real, 0.0), 1.0))
    raise TypeError(f"expected BipartiteState or DensityOperator, got {type(rho).__name__}")


def _particle_positions(state: BipartiteState, keep: Iterable[int | str]) -> list[int]:
    pos = []
    for k in keep:
        if isinstance(k, str):
            if k not in state.labels:
                raise StateError(f"unknown particle {k!r}")
            k = state.labels.index(k)
        if not 0 <= k < len(state.dims):
            raise StateError(f"particle index {k} out of range")
        if k in pos:
            raise StateError(f"particle {k} listed twice")
        pos.append(k)
    if not pos:
        raise StateError("keep must name at least one particle")
    return pos


def reduced_state(joint: BipartiteState, keep: Iterable[int | str]) -> DensityOperator:
    """Partial trace of ``|joint><joint|`` over every particle not in ``keep``.

    Kept particles appear in the order given.
    """
    keep = _particle_positions(joint, keep)
    dims = joint.dims
    rest = [k for k in range(len(dims)) if k not in keep]
    psi = joint.amplitudes.reshape(dims).transpose(keep + rest)
    d_keep = int(np.prod([dims[k] for k in keep]))
    m = psi.reshape(d_keep, -1)
    rho = m @ m.conj().T
    return DensityOperator((rho + rho.conj().T) / 2, dims=tuple(dims[k] for k in keep))


def _check_unitary(u: np.ndarray, d: int) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (d, d):
        raise StateError(f"unitary must be {d}x{d}, got {u.shape}")
    if np.max(np.abs(u.conj().T @ u - np.eye(d))) > STATE_TOL:
        raise StateError("matrix is not unitary")
    return u


def apply_local_unitary(state: BipartiteState, side: str, u) -> BipartiteState:
    """Apply ``u`` to all of one party's particles (``side`` is 'A' or 'B')."""
    side = side.upper()
    if side == "A":
        u = _check_unitary(u, state.shape[0])
        amp = u @ state.amplitudes
    elif side == "B":
        u = _check_unitary(u, state.shape[1])
        amp = state.amplitudes @ u.T
    else:
        raise StateError(f"side must be 'A' or 'B', not {side!r}")
    return BipartiteState(amp, a_dims=state.a_dims, b_dims=state.b_dims, labels=state.labels)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def sample_projective_test(pass_probability: float, rng: np.random.Generator) -> bool:
    """Outcome of a projective test that passes with the given probability."""
    if not 0.0 <= pass_probability <= 1.0:
        raise ValueError(f"probability {pass_probability!r} outside [0, 1]")
    return bool(rng.random() < pass_probability)


def measure_projector(state: BipartiteState, target, rng: np.random.Generator) -> tuple[bool, BipartiteState | None]:
    """Project ``state`` onto ``|target>`` with Born-rule sampling.

    Returns ``(passed, post_state)``; the post-measurement state is the target
    on success and the normalized orthogonal remainder on failure (``None`` if
    the remainder vanishes).
    """
    t = _target_ket(target, state.shape)
    amp_t = np.vdot(t, state.ket())
    p = min(abs(amp_t) ** 2, 1.0)
    if rng.random() < p:
        return True, BipartiteState(t.reshape(state.shape), state.a_dims, state.b_dims, state.labels)
    rem = state.ket() - amp_t * t
    norm = np.linalg.norm(rem)
    if norm < STATE_TOL:
        return False, None
    return False, BipartiteState((rem / norm).reshape(state.shape), state.a_dims, state.b_dims, state.labels)
