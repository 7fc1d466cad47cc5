"""Parameters, phase states, and relative-equilibrium words.

Conventions used throughout the package:

* A full phase state is a flat array of M*N angles in population-major
  order ``(theta_{1,1}, ..., theta_{1,N}, theta_{2,1}, ...)``, wrapped to
  ``[0, 2*pi)``.
* A reduced state is the flat array of M*(N-1) phase differences
  ``psi_{sigma,k} = theta_{sigma,k+1} - theta_{sigma,1}``.
* For N = 2 oscillators per population, a relative equilibrium is named by
  a length-M word over the letters S (synchronized, psi = 0) and
  D (splay, psi = pi), e.g. "DSS" or "SDSS".
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class PreconditionError(RuntimeError):
    """An operation's dynamical precondition (existence, nonresonance) is not met."""


def wrap(theta):
    """Wrap angles into [0, 2*pi)."""
    return np.mod(theta, TWO_PI)


def circ_dist(a, b):
    """Circular distance between angles, elementwise, in [0, pi]."""
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


def builtin_coupling(M: int, delta: float = 0.0) -> np.ndarray:
    """Inter-population coupling matrix for the built-in 3- and 4-population systems.

    For M = 3 the matrix has zero row sums.  For M = 4 the row sums are
    (1, -1, -1+delta, -1-delta); delta parametrizes the asymmetry between
    populations three and four and is ignored for M = 3.
    """
    if abs(delta) > 1.0:
        raise ValueError(f"asymmetry delta must satisfy |delta| <= 1, got {delta}")
    if M == 3:
        return np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
    if M == 4:
        return np.array(
            [
                [0.0, -1.0, 1.0, 1.0],
                [1.0, 0.0, -1.0, -1.0],
                [-1.0, 1.0 + delta, 0.0, -1.0],
                [-1.0, 1.0 - delta, -1.0, 0.0],
            ]
        )
    raise ValueError(f"no built-in coupling for M={M}; supply a coupling matrix")


@dataclass(frozen=True)
class ModelParams:
    """All scalar parameters of the coupled-population model plus the coupling matrix.

    Instances are immutable (the coupling array is marked read-only) and safe
    to share across concurrent workers.
    """

    M: int
    alpha: float
    K: float
    r: float
    N: int = 2
    a: int = 2
    omega: float = 0.0
    delta: float = 0.0
    coupling: np.ndarray | None = None

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("population count M must be >= 2")
        if self.N < 2:
            raise ValueError("oscillators per population N must be >= 2")
        if self.K < 0:
            raise ValueError("coupling strength K must be >= 0")
        if not (isinstance(self.a, (int, np.integer)) and self.a >= 1):
            raise ValueError("harmonic index a must be a positive integer")
        if abs(self.delta) > 1.0:
            raise ValueError("asymmetry delta must satisfy |delta| <= 1")
        if self.coupling is None:
            mat = builtin_coupling(self.M, self.delta)
        else:
            mat = np.array(self.coupling, dtype=float)
            if mat.shape != (self.M, self.M):
                raise ValueError(f"coupling matrix must be {self.M}x{self.M}")
            if np.any(np.diagonal(mat) != 0.0):
                raise ValueError("coupling matrix must have zero diagonal")
        mat.setflags(write=False)
        object.__setattr__(self, "coupling", mat)

    @property
    def row_sums(self) -> np.ndarray:
        """Per-population sums K_sigma of the coupling matrix, recomputed on access."""
        return self.coupling.sum(axis=1)

    @property
    def n_oscillators(self) -> int:
        return self.M * self.N

    @property
    def n_reduced(self) -> int:
        return self.M * (self.N - 1)

    def replace(self, **kwargs) -> "ModelParams":
        fields = dict(
            M=self.M, alpha=self.alpha, K=self.K, r=self.r, N=self.N, a=self.a,
            omega=self.omega, delta=self.delta,
        )
        # custom matrices are carried over; built-in ones are rebuilt so that
        # a new delta takes effect
        is_builtin = self.M in (3, 4) and np.array_equal(
            self.coupling, builtin_coupling(self.M, self.delta)
        )
        if not is_builtin:
            fields["coupling"] = self.coupling
        fields.update(kwargs)
        return ModelParams(**fields)


def reduce_phases(theta, M: int, N: int = 2) -> np.ndarray:
    """Phase differences psi_{sigma,k} = theta_{sigma,k+1} - theta_{sigma,1}, wrapped.

    Works on arrays of shape (..., M*N) and returns shape (..., M*(N-1)).
    """
    th = np.asarray(theta, dtype=float)
    if th.shape[-1] != M * N:
        raise ValueError(f"expected {M * N} phases, got {th.shape[-1]}")
    if not np.all(np.isfinite(th)):
        raise ValueError("phase state contains non-finite entries")
    pops = th.reshape(th.shape[:-1] + (M, N))
    psi = wrap(pops[..., 1:] - pops[..., :1])
    return psi.reshape(th.shape[:-1] + (M * (N - 1),))


def lift_phases(psi, base, N: int = 2) -> np.ndarray:
    """Right inverse of :func:`reduce_phases`: oscillator (sigma, 1) gets phase base_sigma."""
    psi = np.asarray(psi, dtype=float)
    base = np.asarray(base, dtype=float)
    M = base.shape[-1]
    if psi.shape[-1] != M * (N - 1):
        raise ValueError(f"expected {M * (N - 1)} phase differences, got {psi.shape[-1]}")
    rel = psi.reshape(psi.shape[:-1] + (M, N - 1))
    first = np.broadcast_to(base[..., None], rel.shape[:-1] + (1,))
    theta = np.concatenate([first, first + rel], axis=-1)
    return wrap(theta.reshape(psi.shape[:-1] + (M * N,)))


# -- relative-equilibrium words (N = 2) --------------------------------------

def validate_word(word: str, M: int | None = None) -> str:
    if not word or any(ch not in "SD" for ch in word):
        raise ValueError(f"equilibrium word must be over {{S, D}}, got {word!r}")
    if M is not None and len(word) != M:
        raise ValueError(f"word {word!r} has length {len(word)}, expected {M}")
    return word


def all_words(M: int) -> list[str]:
    """All 2^M words over {S, D}, in lexicographic (S-first) order."""
    return ["".join(w) for w in itertools.product("SD", repeat=M)]


def equilibrium_state(word: str, N: int = 2) -> np.ndarray:
    """Reduced state of a relative equilibrium: psi = 0 for S, pi for D."""
    if N != 2:
        raise ValueError("S/D equilibrium words are defined only for N = 2")
    validate_word(word)
    return np.array([0.0 if ch == "S" else np.pi for ch in word])


def word_signs(word: str) -> np.ndarray:
    """cos(psi_sigma) at the word's equilibrium: +1 for S, -1 for D."""
    validate_word(word)
    return np.array([1.0 if ch == "S" else -1.0 for ch in word])


def nearest_word_codes(psi, M: int):
    """Componentwise-nearest word for each reduced state, as a bitmask code.

    Returns ``(codes, dists)`` where bit sigma of ``codes`` is set when the
    nearest letter in coordinate sigma is D, and ``dists`` is the infinity-norm
    circular distance to that nearest word.  Since letters are pi apart, at
    most one word lies within any radius < pi/2.
    """
    psi = np.asarray(psi)
    d0 = circ_dist(psi, 0.0)
    dpi = circ_dist(psi, np.pi)
    is_d = dpi < d0
    weights = (1 << np.arange(M)).astype(np.int64)
    codes = is_d.astype(np.int64) @ weights
    dists = np.max(np.where(is_d, dpi, d0), axis=-1)
    return codes, dists


def word_code(word: str) -> int:
    return sum(1 << i for i, ch in enumerate(word) if ch == "D")


def code_to_word(code: int, M: int) -> str:
    return "".join("D" if code & (1 << i) else "S" for i in range(M))


@dataclass(frozen=True)
class CycleSpec:
    """An ordered, cyclic list of S/D words joined by one-letter changes.

    ``connections[q]`` describes the heteroclinic connection *into* the q-th
    equilibrium, i.e. words[q-1] -> words[q]; ``coord`` is the population
    index whose phase difference moves along it.  This matches the numbering
    of the per-connection stability indices sigma_q.
    """

    name: str
    words: tuple[str, ...]
    connection_coords: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        M = len(self.words[0])
        coords = []
        for q in range(len(self.words)):
            prev, cur = self.words[q - 1], self.words[q]
            validate_word(cur, M)
            diff = [i for i in range(M) if prev[i] != cur[i]]
            if len(diff) != 1:
                raise ValueError(
                    f"consecutive words {prev!r} -> {cur!r} must differ in exactly one letter"
                )
            coords.append(diff[0])
        object.__setattr__(self, "connection_coords", tuple(coords))

    @property
    def M(self) -> int:
        return len(self.words[0])

    @property
    def Q(self) -> int:
        return len(self.words)

    @property
    def subspace_coords(self) -> tuple[int, ...]:
        """Population coordinates that move somewhere along the cycle."""
        return tuple(sorted(set(self.connection_coords)))

    @property
    def transverse_coord(self) -> int | None:
        """The coordinate frozen along the whole cycle (None if all move)."""
        rest = [i for i in range(self.M) if i not in self.subspace_coords]
        if not rest:
            return None
        if len(rest) > 1:
            raise ValueError(f"cycle {self.name} leaves {len(rest)} coordinates frozen")
        return rest[0]

    def in_coord(self, q: int) -> int:
        return self.connection_coords[q]

    def out_coord(self, q: int) -> int:
        return self.connection_coords[(q + 1) % self.Q]

    def edges(self) -> list[tuple[str, str]]:
        return [(self.words[q - 1], self.words[q]) for q in range(self.Q)]


def cycle_c2() -> CycleSpec:
    """The six-word cycle of the three-population system."""
    return CycleSpec("C2", ("DSS", "DDS", "SDS", "SDD", "SSD", "DSD"))


def cycle_c2_hat() -> CycleSpec:
    """Four-population cycle inside the subspace where population 4 stays synchronized."""
    return CycleSpec("C2hat", ("SDSS", "SDDS", "SSDS", "DSDS", "DSSS", "DDSS"))


def cycle_c2_check() -> CycleSpec:
    """Mirror cycle inside the subspace where population 3 stays synchronized."""
    return CycleSpec("C2check", ("SDSS", "SDSD", "SSSD", "DSSD", "DSSS", "DDSS"))


def network_cycles() -> tuple[CycleSpec, CycleSpec]:
    return cycle_c2_hat(), cycle_c2_check()


def network_edges() -> set[tuple[str, str]]:
    """All saddle connections of the four-population heteroclinic network."""
    hat, chk = network_cycles()
    return set(hat.edges()) | set(chk.edges())
