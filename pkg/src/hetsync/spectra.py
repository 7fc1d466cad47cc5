"""Closed-form spectra at the S/D relative equilibria and saddle bookkeeping.

At every S/D word the Jacobian of the reduced nonpairwise field is diagonal
in the phase-difference coordinates (the off-diagonal entries carry a factor
sin(psi_sigma) that vanishes at the word), so each coordinate owns one
eigenvalue and the whole spectrum has a closed form in the model parameters.
The finite-difference Jacobian route in :mod:`hetsync.numerics` provides the
independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import CycleSpec, ModelParams, PreconditionError, validate_word, word_signs

ZERO_TOL = 1e-12


def word_eigenvalues(word: str, params: ModelParams) -> np.ndarray:
    """Eigenvalues of the reduced field at a word, indexed by coordinate psi_sigma.

    Entry sigma is the rate governing coordinate psi_sigma.  Valid for N = 2
    with any zero-diagonal coupling matrix; the second-harmonic contribution
    at a splay coordinate carries the parity factor (-1)^a.
    """
    if params.N != 2:
        raise PreconditionError(
            "closed-form eigenvalues require N = 2; use jacobian_fd on the reduced field"
        )
    validate_word(word, params.M)
    s = word_signs(word)
    ca, sa = np.cos(params.alpha), np.sin(params.alpha)
    net = params.row_sums - params.coupling @ s
    harmonic = 2.0 * params.a * params.r * np.cos(params.a * params.alpha)
    parity = np.where(s > 0, 1.0, (-1.0) ** params.a)
    return s * (-2.0 * ca + params.K * sa * net) + harmonic * parity


def eigenvalues_closed_form(word: str, params: ModelParams) -> np.ndarray:
    """Alias of :func:`word_eigenvalues` under the operation's public name."""
    return word_eigenvalues(word, params)


@dataclass(frozen=True)
class SaddleData:
    """Rates and coordinate roles of one saddle along a cycle.

    ``c`` and ``e`` are the (positive) contracting and expanding rates, ``t``
    the transverse rate inside the cycle's invariant subspace and ``t_perp``
    the rate transverse to that subspace (None for cycles that use every
    coordinate).  The ratios feeding the transition matrices are recomputed
    from the rates on access.
    """

    word: str
    c: float
    e: float
    t: float
    in_coord: int
    out_coord: int
    t_coord: int
    t_perp: float | None = None
    t_perp_coord: int | None = None

    @property
    def a(self) -> float:
        return self.c / self.e

    @property
    def b(self) -> float:
        return -self.t / self.e

    @property
    def b_perp(self) -> float | None:
        if self.t_perp is None:
            return None
        return -self.t_perp / self.e


def saddle_data(cycle: CycleSpec, q: int, params: ModelParams) -> SaddleData:
    """Eigenvalue roles at the q-th equilibrium of a cycle (0-based index).

    The incoming connection's coordinate is contracting, the outgoing one is
    expanding; for four-population cycles the coordinate frozen along the
    whole cycle carries the second transverse rate.
    """
    word = cycle.words[q % cycle.Q]
    lam = word_eigenvalues(word, params)
    i_in, i_out = cycle.in_coord(q % cycle.Q), cycle.out_coord(q % cycle.Q)
    if i_in == i_out:
        raise ValueError(f"saddle {word} has identical in/out coordinates")
    c, e = -lam[i_in], lam[i_out]
    if c <= 0.0 or e <= 0.0:
        raise PreconditionError(
            f"not a saddle-sink connection at {word}: c={c:.6g}, e={e:.6g}"
        )
    perp = cycle.transverse_coord
    rest = [i for i in range(cycle.M) if i not in (i_in, i_out, perp)]
    if len(rest) != 1:
        raise ValueError(f"cannot assign a unique within-subspace transverse coordinate at {word}")
    t_coord = rest[0]
    return SaddleData(
        word=word,
        c=float(c),
        e=float(e),
        t=float(lam[t_coord]),
        in_coord=i_in,
        out_coord=i_out,
        t_coord=t_coord,
        t_perp=float(lam[perp]) if perp is not None else None,
        t_perp_coord=perp,
    )


class ExistenceResult(NamedTuple):
    ok: bool
    boundary: bool
    reasons: list[str]

    def __bool__(self):
        return self.ok


def cycle_exists(cycle: CycleSpec, params: ModelParams) -> ExistenceResult:
    """True iff every connection of the cycle is saddle-sink in its subspace.

    Each connection needs a positive outgoing rate at its source and a
    negative incoming rate at its target.  Rates within ``ZERO_TOL`` of zero
    are flagged as boundary cases.
    """
    reasons: list[str] = []
    boundary = False
    for q in range(cycle.Q):
        src, dst = cycle.words[q - 1], cycle.words[q]
        coord = cycle.connection_coords[q]
        out_rate = word_eigenvalues(src, params)[coord]
        in_rate = word_eigenvalues(dst, params)[coord]
        if abs(out_rate) <= ZERO_TOL or abs(in_rate) <= ZERO_TOL:
            boundary = True
            reasons.append(f"{src}->{dst}: rate within {ZERO_TOL} of zero (boundary)")
        elif not (in_rate < 0.0 < out_rate):
            reasons.append(
                f"{src}->{dst}: needs incoming<0<outgoing along psi_{coord + 1}, "
                f"got {in_rate:.6g}, {out_rate:.6g}"
            )
    return ExistenceResult(not reasons and not boundary, boundary, reasons)


def nonresonance_ok(params: ModelParams) -> bool:
    """Checks the spectral nonresonance conditions that allow local linearization.

    All of 2r*cos(2a) +/- 3cos(a), the four sign combinations of
    4K*sin(a) +/- 4r*cos(2a) +/- 2cos(a), and the two transverse rates
    2cos(a) + 4r*cos(2a), -2cos(a) + 4r*cos(2a) must be nonzero (tolerance
    1e-12).  At alpha = pi/2 this reduces to r != 0 and r != +/-K.
    """
    ca = np.cos(params.alpha)
    sa = np.sin(params.alpha)
    c2 = np.cos(2.0 * params.alpha)
    exprs = [
        2.0 * params.r * c2 + 3.0 * ca,
        2.0 * params.r * c2 - 3.0 * ca,
        2.0 * ca + 4.0 * params.r * c2,
        -2.0 * ca + 4.0 * params.r * c2,
    ]
    for s1 in (+1.0, -1.0):
        for s2 in (+1.0, -1.0):
            exprs.append(4.0 * params.K * sa + s1 * 4.0 * params.r * c2 + s2 * 2.0 * ca)
    return all(abs(v) > ZERO_TOL for v in exprs)


def role_sum_scale(params: ModelParams) -> float:
    """The combination 2*K*sin(alpha) linking contraction/expansion rates to the
    transverse rates of the three-population saddles."""
    return 2.0 * params.K * np.sin(params.alpha)
