"""Stability classification of the heteroclinic cycles and the four-population
network: transition matrices, the five-branch index function, eigenvector
conditions on matrix products, and the six-index recursion for the network
cycles.

Stability indices are extended reals represented as floats; the +/-inf values
are always assigned by explicit branch selection, never produced by dividing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .model import CycleSpec, ModelParams, PreconditionError, cycle_c2, network_cycles
from .numerics import NumericalError, eigen_small
from .spectra import (
    SaddleData,
    ZERO_TOL,
    cycle_exists,
    nonresonance_ok,
    saddle_data,
)

C_PRODUCT_TOL = 1e-10
RECURSION_TOL = 1e-12


class StabilityClass(enum.Enum):
    ASYMPTOTICALLY_STABLE = "asymptotically stable"
    ESSENTIALLY_AS = "essentially asymptotically stable"
    FRAGMENTARILY_AS = "fragmentarily asymptotically stable"
    COMPLETELY_UNSTABLE = "completely unstable"
    BOUNDARY = "boundary"
    NOT_APPLICABLE = "not applicable"


def f_ind(beta, tol: float = ZERO_TOL) -> float:
    """Five-branch piecewise index of a row of local exponents.

    The component sum is compared to zero with the given tolerance; a sum
    within tolerance selects the zero branch.
    """
    b = np.asarray(beta, dtype=float)
    if b.ndim != 1 or b.size == 0:
        raise ValueError("f_ind expects a nonempty vector")
    if np.all(b == 0.0):
        raise ValueError("f_ind is undefined for the zero vector")
    total = float(b.sum())
    lo, hi = float(b.min()), float(b.max())
    if abs(total) <= tol:
        return 0.0
    if lo >= 0.0:
        return math.inf
    if total > 0.0:
        return -total / lo
    if hi <= 0.0:
        return -math.inf
    return total / hi


def f_ind_boundary(beta, tol: float = ZERO_TOL) -> bool:
    """True when the branch selection sits within 10x of the zero-sum tolerance."""
    total = abs(float(np.sum(beta)))
    return tol < total <= 10.0 * tol


def index_to_json(x: float | None):
    if x is None:
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass(frozen=True)
class TransitionMatrix:
    """Linear action of the composed local/global map at one saddle, in
    logarithmic cross-section coordinates."""

    entries: np.ndarray
    saddle: SaddleData

    def __post_init__(self):
        self.entries.setflags(write=False)


def transition_matrix(saddle: SaddleData, dim: int | None = None) -> TransitionMatrix:
    """Canonical transition matrix [[b, 1], [a, 0]] (2x2) or
    [[b, 1, 0], [a, 0, 0], [b_perp, 0, 1]] (3x3)."""
    if dim is None:
        dim = 3 if saddle.t_perp is not None else 2
    a, b = saddle.a, saddle.b
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("saddle ratios must be finite")
    if dim == 2:
        mat = np.array([[b, 1.0], [a, 0.0]])
    elif dim == 3:
        bp = saddle.b_perp
        if bp is None:
            raise ValueError("3x3 transition matrix needs a second transverse rate")
        mat = np.array([[b, 1.0, 0.0], [a, 0.0, 0.0], [bp, 0.0, 1.0]])
    else:
        raise ValueError("transition matrices are 2x2 or 3x3")
    return TransitionMatrix(mat, saddle)


@dataclass(frozen=True)
class ABCResult:
    A: bool
    B: bool
    C: bool
    lambda_max: complex
    u_max: np.ndarray | None
    boundary: bool = False

    def to_json_dict(self):
        lam = self.lambda_max
        return {
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "lambda_max": lam.real if abs(lam.imag) < 1e-14 else [lam.real, lam.imag],
            "u_max": None if self.u_max is None else [float(u) for u in self.u_max],
            "boundary": self.boundary,
        }


def check_abc(mat) -> ABCResult:
    """Evaluates the dominant-eigenvalue conditions on a transition-matrix product.

    (A) the eigenvalue of largest modulus is real, (B) it exceeds 1, and
    (C) the corresponding eigenvector has componentwise products strictly
    positive (tolerance 1e-10 after normalizing to unit max amplitude).
    """
    mat = np.asarray(mat, dtype=float)
    eig = eigen_small(mat)
    mods = np.abs(eig.values)
    scale = mods.max()
    near_top = mods >= scale * (1.0 - 1e-10)
    imag_tol = 1e-10 * max(1.0, scale)
    real_top = [i for i in np.nonzero(near_top)[0] if abs(eig.values[i].imag) <= imag_tol]
    if not real_top:
        i_dom = int(np.argmax(mods))
        return ABCResult(False, False, False, complex(eig.values[i_dom]), None)
    i_dom = real_top[0]
    lam = float(eig.values[i_dom].real)
    v = eig.vectors[:, i_dom]
    pivot = v[np.argmax(np.abs(v))]
    u = (v / pivot).real
    u = u / np.max(np.abs(u))
    products = np.outer(u, u)
    c_ok = bool(products.min() > C_PRODUCT_TOL)
    boundary = bool(np.min(np.abs(u)) <= 1e-5) and not c_ok
    b_ok = lam > 1.0
    return ABCResult(True, b_ok, c_ok, complex(lam), u, boundary)


def eigpair_2x2_closed(a1: float, b1: float, a2: float, b2: float):
    """Closed-form eigenvalues/vectors of the 2x2 product
    [[b1*b2 + a2, b1], [a1*b2, a1]] of two canonical transition matrices."""
    if b1 == 0.0:
        raise ValueError("closed-form eigenvectors need b1 != 0")
    head = a1 - a2 - b1 * b2
    disc = head * head + 4.0 * a1 * b1 * b2
    sq = np.sqrt(complex(disc))
    if abs(sq.imag) < 1e-300:
        sq = sq.real
    lam1 = (a1 + a2 + b1 * b2 + sq) / 2.0
    lam2 = (a1 + a2 + b1 * b2 - sq) / 2.0
    u1 = np.array([1.0, (head + sq) / (2.0 * b1)])
    u2 = np.array([1.0, (head - sq) / (2.0 * b1)])
    return lam1, lam2, u1, u2


def flight_time(w: float, saddle: SaddleData) -> float:
    """Time spent in the linearized neighborhood entering at expanding coordinate w."""
    if not 0.0 < w <= 1.0:
        raise ValueError("entry coordinate w must lie in (0, 1]")
    return -math.log(w) / saddle.e


def local_map(w: float, z: float, saddle: SaddleData, z_perp: float | None = None,
              sign: float = 1.0):
    """Monomial local transition map between the in- and out-sections of a saddle.

    Maps (sign, w, z) to (w**a, sign, w**b * z) and, when a second transverse
    coordinate is given, appends w**b_perp * z_perp.
    """
    if w <= 0.0:
        raise ValueError("entry coordinate w must be positive")
    out = [w**saddle.a, sign, w**saddle.b * z]
    if z_perp is not None:
        bp = saddle.b_perp
        if bp is None:
            raise ValueError("saddle has no second transverse rate")
        out.append(w**bp * z_perp)
    return tuple(out)


@dataclass
class StabilityReport:
    """Classification of one cycle with all intermediates used to derive it."""

    cycle: str
    stability_class: StabilityClass
    sigma: tuple[float, ...] | None = None
    saddles: list[SaddleData] = dc_field(default_factory=list)
    mu: tuple[float, ...] | None = None
    nu: tuple[float, ...] | None = None
    abc: ABCResult | None = None
    boundary: bool = False
    reasons: list[str] = dc_field(default_factory=list)

    def to_json_dict(self):
        return {
            "cycle": self.cycle,
            "class": self.stability_class.value,
            "sigma": None if self.sigma is None else [index_to_json(s) for s in self.sigma],
            "mu": None if self.mu is None else list(self.mu),
            "nu": None if self.nu is None else list(self.nu),
            "abc": None if self.abc is None else self.abc.to_json_dict(),
            "boundary": self.boundary,
            "reasons": self.reasons,
        }


def _gate(cycle: CycleSpec, params: ModelParams, require_nonresonance: bool):
    """Existence/nonresonance gate; returns a report when classification cannot run."""
    ex = cycle_exists(cycle, params)
    if not ex.ok:
        cls = StabilityClass.BOUNDARY if ex.boundary else StabilityClass.NOT_APPLICABLE
        return StabilityReport(cycle.name, cls, reasons=ex.reasons or ["existence boundary"])
    if require_nonresonance and not nonresonance_ok(params):
        return StabilityReport(
            cycle.name, StabilityClass.BOUNDARY,
            reasons=["nonresonance conditions fail; flow not linearizable"],
        )
    return None


def classify_m3(params: ModelParams) -> StabilityReport:
    """Asymptotic-stability dichotomy for the six-saddle cycle of the
    three-population system.

    With no repelling transverse direction the largest eigenvalue of the
    transition-matrix product decides between asymptotic stability and
    complete instability; with a repelling direction the eigenvector
    conditions on the products decide, and for this cycle they always fail.
    """
    cycle = cycle_c2()
    if params.M != 3 or params.N != 2:
        raise ValueError("classify_m3 requires the three-population model with N = 2")
    gated = _gate(cycle, params, require_nonresonance=True)
    if gated is not None:
        return gated
    saddles = [saddle_data(cycle, q, params) for q in range(cycle.Q)]
    if any(abs(s.t) <= ZERO_TOL for s in saddles):
        return StabilityReport(
            cycle.name, StabilityClass.BOUNDARY, saddles=saddles,
            reasons=["transverse rate within tolerance of zero"],
        )
    mats = [transition_matrix(s, 2).entries for s in saddles[:2]]
    m_dss, m_dds = mats
    if min(m.min() for m in mats) >= 0.0:
        product = m_dds @ m_dss
        lam_mod = np.abs(eigen_small(product).values).max()
        if abs(lam_mod - 1.0) <= ZERO_TOL:
            return StabilityReport(
                cycle.name, StabilityClass.BOUNDARY, saddles=saddles,
                reasons=["|lambda_max| within tolerance of 1"],
            )
        if lam_mod > 1.0:
            sigma = (math.inf,) * cycle.Q
            cls = StabilityClass.ASYMPTOTICALLY_STABLE
        else:
            sigma = (-math.inf,) * cycle.Q
            cls = StabilityClass.COMPLETELY_UNSTABLE
        return StabilityReport(cycle.name, cls, sigma=sigma, saddles=saddles,
                               abc=check_abc(product))
    results = [check_abc(m_dds @ m_dss), check_abc(m_dss @ m_dds)]
    if any(not (r.A and r.B and r.C) for r in results):
        return StabilityReport(
            cycle.name, StabilityClass.COMPLETELY_UNSTABLE,
            sigma=(-math.inf,) * cycle.Q, saddles=saddles, abc=results[0],
        )
    # Unreachable for this cycle (the repelling-transverse regime always breaks
    # an eigenvector condition); kept for honesty about the general criterion.
    return StabilityReport(
        cycle.name, StabilityClass.FRAGMENTARILY_AS, saddles=saddles, abc=results[0],
        reasons=["eigenvector conditions hold despite a repelling transverse direction"],
    )


def cycle_products(mats: list[np.ndarray]) -> list[np.ndarray]:
    """All cyclic products M^(q) = M_{q-1}...M_1 M_Q...M_q (0-based q)."""
    Q = len(mats)
    out = []
    for q in range(Q):
        order = [(q - 1 - i) % Q for i in range(Q)]
        prod = np.eye(mats[0].shape[0])
        for idx in order:
            prod = prod @ mats[idx]
        out.append(prod)
    return out


def index_recursion(saddles: list[SaddleData]) -> tuple[np.ndarray, np.ndarray]:
    """The (mu_q, nu_q) pairs feeding the index function, via the backward
    recursion mu_q = b_q*mu_{q+1} + a_q*nu_{q+1} + b_q_perp, nu_q = mu_{q+1}."""
    Q = len(saddles)
    mu = np.empty(Q)
    nu = np.empty(Q)
    mu[0] = saddles[0].b_perp
    nu[0] = 0.0
    for q in range(Q - 1, 0, -1):
        nxt = (q + 1) % Q
        s = saddles[q]
        mu[q] = s.b * mu[nxt] + s.a * nu[nxt] + s.b_perp
        nu[q] = mu[nxt]
    return mu, nu


def index_products(mats: list[np.ndarray]) -> np.ndarray:
    """Last rows of M_1, M_1 M_6, ..., M_1 M_6 ... M_2 (0-based rows[q] for sigma_q)."""
    Q = len(mats)
    rows = np.empty((Q, 3))
    row = mats[0][2, :].copy()
    rows[0] = row
    for q in range(Q - 1, 0, -1):
        row = row @ mats[q]
        rows[q] = row
    return rows


def network_cycle_indices(params: ModelParams, cycle: CycleSpec) -> StabilityReport:
    """Per-connection stability indices of one cycle of the four-population network.

    Requires the cycle to exist and to be asymptotically stable within its
    three-dimensional invariant subspace.  The six indices are computed both
    by the backward recursion and from the explicit transition-matrix
    products; the two routes must agree to 1e-12.
    """
    if cycle.transverse_coord is None:
        raise ValueError("network cycle must leave one coordinate frozen")
    gated = _gate(cycle, params, require_nonresonance=False)
    if gated is not None:
        return gated
    saddles = [saddle_data(cycle, q, params) for q in range(cycle.Q)]
    sub_mats = [transition_matrix(s, 2).entries for s in saddles]
    if min(m.min() for m in sub_mats) < 0.0:
        return StabilityReport(
            cycle.name, StabilityClass.NOT_APPLICABLE, saddles=saddles,
            reasons=["a within-subspace transverse direction is repelling"],
        )
    sub_product = np.eye(2)
    for m in sub_mats:
        sub_product = m @ sub_product
    sub_lam = np.abs(eigen_small(sub_product).values).max()
    if sub_lam <= 1.0 + ZERO_TOL:
        return StabilityReport(
            cycle.name, StabilityClass.NOT_APPLICABLE, saddles=saddles,
            reasons=["cycle is not asymptotically stable within its subspace"],
        )
    mats = [transition_matrix(s, 3).entries for s in saddles]
    neg_perp = [q for q, s in enumerate(saddles) if s.b_perp < 0.0]
    if neg_perp and neg_perp != [0]:
        return StabilityReport(
            cycle.name, StabilityClass.NOT_APPLICABLE, saddles=saddles,
            reasons=[
                "index formulas cover a single repelling transverse direction at the "
                f"first saddle; negative entries at positions {neg_perp}"
            ],
        )
    if not neg_perp:
        # no repelling direction at all: the plain dichotomy applies
        full_product = cycle_products(mats)[0]
        lam_mod = np.abs(eigen_small(full_product).values).max()
        cls = (StabilityClass.ASYMPTOTICALLY_STABLE if lam_mod > 1.0
               else StabilityClass.COMPLETELY_UNSTABLE)
        sigma = (math.inf,) * cycle.Q if lam_mod > 1.0 else (-math.inf,) * cycle.Q
        return StabilityReport(cycle.name, cls, sigma=sigma, saddles=saddles,
                               abc=check_abc(full_product))
    mu, nu = index_recursion(saddles)
    rows = index_products(mats)
    err = max(
        float(np.max(np.abs(rows[:, 0] - mu))),
        float(np.max(np.abs(rows[:, 1] - nu))),
        float(np.max(np.abs(rows[:, 2] - 1.0))),
    )
    if err > RECURSION_TOL:
        raise NumericalError(
            f"index recursion and matrix products disagree by {err:.3e}"
        )
    m2 = cycle_products(mats)[1]
    abc = check_abc(m2)
    boundary = any(f_ind_boundary((mu[q], nu[q], 1.0)) for q in range(cycle.Q))
    if not (abc.A and abc.B and abc.C):
        return StabilityReport(
            cycle.name, StabilityClass.COMPLETELY_UNSTABLE,
            sigma=(-math.inf,) * cycle.Q, saddles=saddles,
            mu=tuple(mu), nu=tuple(nu), abc=abc, boundary=boundary or abc.boundary,
        )
    sigma = tuple(f_ind((mu[q], nu[q], 1.0)) for q in range(cycle.Q))
    cls = (StabilityClass.ESSENTIALLY_AS if all(s > 0.0 for s in sigma)
           else StabilityClass.FRAGMENTARILY_AS)
    return StabilityReport(
        cycle.name, cls, sigma=sigma, saddles=saddles,
        mu=tuple(mu), nu=tuple(nu), abc=abc, boundary=boundary or abc.boundary,
    )


@dataclass
class NetworkReport:
    """Stability of the whole network derived from its two cycles."""

    cycles: dict[str, StabilityReport]
    network_class: StabilityClass
    rule: str

    def to_json_dict(self):
        return {
            "cycles": [rep.to_json_dict() for rep in self.cycles.values()],
            "network": {"class": self.network_class.value, "rule": self.rule},
        }


# connections shared by both network cycles sit at positions 1 and 6
SHARED_INDEX_POSITIONS = (0, 5)
INTERIOR_INDEX_POSITIONS = (1, 2, 3, 4)


def network_report(params: ModelParams) -> NetworkReport:
    """Classifies the four-population network from its two cycles.

    A network containing a fragmentarily asymptotically stable cycle is
    itself f.a.s.; if one cycle is e.a.s. and the other cycle's connections
    outside the shared ones all carry positive indices, the network is e.a.s.
    """
    hat, chk = network_cycles()
    reports = {c.name: network_cycle_indices(params, c) for c in (hat, chk)}
    classes = {name: rep.stability_class for name, rep in reports.items()}
    attracting = {StabilityClass.ESSENTIALLY_AS, StabilityClass.FRAGMENTARILY_AS,
                  StabilityClass.ASYMPTOTICALLY_STABLE}
    if all(c in (StabilityClass.NOT_APPLICABLE, StabilityClass.BOUNDARY)
           for c in classes.values()):
        return NetworkReport(reports, StabilityClass.NOT_APPLICABLE,
                             "neither cycle admits the stability machinery here")
    for name, rep in reports.items():
        if rep.stability_class is not StabilityClass.ESSENTIALLY_AS:
            continue
        other = next(r for n, r in reports.items() if n != name)
        if other.sigma is not None and all(
            other.sigma[i] > 0.0 for i in INTERIOR_INDEX_POSITIONS
        ):
            return NetworkReport(
                reports, StabilityClass.ESSENTIALLY_AS,
                f"{name} is e.a.s. and the non-shared connections of "
                f"{other.cycle} have positive indices",
            )
    for name, rep in reports.items():
        if rep.stability_class in attracting:
            return NetworkReport(
                reports, StabilityClass.FRAGMENTARILY_AS,
                f"{name} is f.a.s., so the network is f.a.s.",
            )
    return NetworkReport(reports, StabilityClass.COMPLETELY_UNSTABLE,
                         "no cycle attracts a positive-measure set")
