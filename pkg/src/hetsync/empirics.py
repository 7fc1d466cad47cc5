"""Simulation-based verification: Monte Carlo basin fractions, empirical index
signs, the planar wedge classification with its organizing saddles, and
frequency / localized-synchrony analysis.

Everything here is a statistical or trajectory-based surrogate for the
analytic results in :mod:`hetsync.spectra` and :mod:`hetsync.stability`; the
estimators certify signs and qualitative structure, never index magnitudes.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dynamics import (
    NONPAIRWISE,
    full_field,
    rhs_reduced_n2,
    rhs_sd_subspace,
    sd_subspace_field,
)
from .model import (
    CycleSpec,
    ModelParams,
    circ_dist,
    equilibrium_state,
    lift_phases,
    nearest_word_codes,
    reduce_phases,
    word_code,
    wrap,
)
from .numerics import (
    DT_DETERMINISTIC,
    EPS_NEAR,
    Itinerary,
    ItineraryTracker,
    NumericalError,
    Trajectory,
    integrate_rk4,
    jacobian_fd,
    noise_stream,
    rk4_step,
)

WEDGE_CLASSES = ("SDSS", "SDDS", "SDSD", "SDDD")
UNRESOLVED = -1


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("need at least one sample")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class BasinEstimate:
    """Share of an epsilon-cube around a connection point attracted to a cycle."""

    target: str
    epsilon: float
    n: int
    fraction: float
    ci95: tuple[float, float]
    seed: int
    center: np.ndarray
    t_max: float


def connection_midpoint(cycle: CycleSpec, index: int = 0) -> np.ndarray:
    """Reduced state halfway along the index-th connection of the cycle."""
    source = cycle.words[(index - 1) % cycle.Q]
    coord = cycle.connection_coords[index % cycle.Q]
    psi = equilibrium_state(source)
    psi[coord] = np.pi / 2.0
    return psi


def _connection_subspaces(cycle: CycleSpec):
    """(fixed-coordinate indices, fixed values) per connection of the cycle."""
    specs = []
    for q in range(cycle.Q):
        source = cycle.words[q - 1]
        coord = cycle.connection_coords[q]
        fixed = np.array([i for i in range(cycle.M) if i != coord])
        vals = equilibrium_state(source)[fixed]
        specs.append((fixed, vals))
    return specs


def basin_fraction(
    params: ModelParams,
    cycle: CycleSpec,
    epsilon: float,
    n: int,
    t_max: float = 500.0,
    seed: int = 0,
    *,
    connection: int = 0,
    center: np.ndarray | None = None,
    dt: float = DT_DETERMINISTIC,
    check_every: int = 10,
    max_subspace_dist: float = 0.5,
) -> BasinEstimate:
    """Monte Carlo estimate of the local basin share of a cycle.

    Samples ``n`` points uniformly in the infinity-norm epsilon-cube around a
    point on a heteroclinic connection (default: the connection midpoint) and
    integrates the reduced dynamics.  A sample counts as attracted when, up to
    ``t_max``, its itinerary symbols stay within the cycle's words and its
    distance to the union of the cycle's connection subspaces stays below
    ``max_subspace_dist``.  Results are bitwise reproducible per seed.
    """
    if epsilon <= 0:
        raise ValueError("sampling radius epsilon must be positive")
    if params.M != cycle.M or params.N != 2:
        raise ValueError("cycle and parameters disagree on the population layout")
    if center is None:
        center = connection_midpoint(cycle, connection)
    rng = noise_stream(seed)
    x = wrap(center[None, :] + rng.uniform(-epsilon, epsilon, size=(n, params.M)))
    alive = np.ones(n, dtype=bool)
    cycle_codes = np.array(sorted(word_code(w) for w in cycle.words))
    subspaces = _connection_subspaces(cycle)
    n_steps = int(round(t_max / dt))

    def field(s):
        return rhs_reduced_n2(s, params)

    for step in range(1, n_steps + 1):
        x = wrap(rk4_step(field, x, dt))
        if step % check_every and step != n_steps:
            continue
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state at step {step}")
        d_sub = np.full(n, np.inf)
        for fixed, vals in subspaces:
            d_sub = np.minimum(d_sub, np.max(circ_dist(x[:, fixed], vals), axis=-1))
        codes, d_word = nearest_word_codes(x, params.M)
        off_cycle = (d_word < EPS_NEAR) & ~np.isin(codes, cycle_codes)
        alive &= (d_sub <= max_subspace_dist) & ~off_cycle
        if not alive.any():
            break
    k = int(alive.sum())
    return BasinEstimate(
        target=cycle.name,
        epsilon=epsilon,
        n=n,
        fraction=k / n,
        ci95=wilson_interval(k, n),
        seed=seed,
        center=center,
        t_max=t_max,
    )


class IndexSignEstimate(NamedTuple):
    verdict: str
    epsilons: tuple[float, ...]
    fractions: tuple[float, ...]
    ci95: tuple[tuple[float, float], ...]

    POSITIVE = "positive"
    NEGATIVE = "negative"
    UNRESOLVED = "unresolved"


def empirical_index_sign(
    params: ModelParams,
    cycle: CycleSpec,
    connection: int = 0,
    eps_ladder=(1e-2, 1e-4, 1e-6),
    n: int = 400,
    t_max: float = 400.0,
    seed: int = 0,
) -> IndexSignEstimate:
    """Sign-level estimate of the stability index along one connection.

    Runs :func:`basin_fraction` over a decreasing epsilon ladder and reads the
    trend: fractions heading to 1 mean a positive index, fractions heading to
    0 a negative one.  No magnitude claim is made.
    """
    eps = tuple(sorted(set(float(e) for e in eps_ladder), reverse=True))
    if len(eps) < 3:
        raise ValueError("need a ladder of at least 3 decreasing epsilon values")
    estimates = [
        basin_fraction(
            params, cycle, e, n, t_max, seed=seed * 1009 + i, connection=connection
        )
        for i, e in enumerate(eps)
    ]
    fr = [est.fraction for est in estimates]
    ci = [est.ci95 for est in estimates]
    halves = [(hi - lo) / 2.0 for lo, hi in ci]
    if all(f >= 0.9 for f in fr):
        verdict = IndexSignEstimate.POSITIVE
    elif all(f <= 0.1 for f in fr):
        verdict = IndexSignEstimate.NEGATIVE
    else:
        gain = fr[-1] - fr[0]
        margin = halves[0] + halves[-1]
        if gain > margin:
            verdict = IndexSignEstimate.POSITIVE
        elif gain < -margin:
            verdict = IndexSignEstimate.NEGATIVE
        else:
            verdict = IndexSignEstimate.UNRESOLVED
    return IndexSignEstimate(verdict, eps, tuple(fr), tuple(ci))


# -- the planar invariant subspace of the four-population system ---------------

def special_equilibria_sd(params: ModelParams) -> list[tuple[float, float]]:
    """Saddles on the edges of the (psi3, psi4) square that organize its wedges.

    They exist when |delta|*K < 2|r|, at psi3 = arccos(delta*K/(2r)) on the
    edge psi4 = pi and at psi4 = arccos(-delta*K/(2r)) on the edge psi3 = pi.
    Each returned point is verified to annihilate the planar field to 1e-10.
    """
    if params.r == 0.0:
        raise ValueError("the edge saddles require r != 0")
    if abs(params.alpha - np.pi / 2) > 1e-12:
        raise ValueError("edge-saddle positions are available only at alpha = pi/2")
    arg = params.delta * params.K / (2.0 * params.r)
    if abs(arg) >= 1.0:
        return []
    points = [
        (float(np.arccos(arg)), float(np.pi)),
        (float(np.pi), float(np.arccos(-arg))),
    ]
    for p3, p4 in points:
        d3, d4 = rhs_sd_subspace(p3, p4, params)
        if max(abs(float(d3)), abs(float(d4))) > 1e-10:
            raise NumericalError("edge saddle fails to annihilate the planar field")
    return points


@dataclass
class WedgeGrid:
    """Per-cell omega-limit classification of the open square (0, pi)^2."""

    psi3: np.ndarray
    psi4: np.ndarray
    labels: np.ndarray  # labels[i, j] for (psi3[i], psi4[j]); -1 = unresolved
    saddles: list[tuple[float, float]]
    t_max: float

    def class_fractions(self) -> dict[str, float]:
        total = self.labels.size
        out = {name: float(np.sum(self.labels == k)) / total
               for k, name in enumerate(WEDGE_CLASSES)}
        out["unresolved"] = float(np.sum(self.labels == UNRESOLVED)) / total
        return out

    def label_name(self, i: int, j: int) -> str:
        k = self.labels[i, j]
        return "unresolved" if k == UNRESOLVED else WEDGE_CLASSES[k]

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("psi3,psi4,class\n")
            for i, p3 in enumerate(self.psi3):
                for j, p4 in enumerate(self.psi4):
                    fh.write(
                        f"{format(p3, '.15g')},{format(p4, '.15g')},{self.label_name(i, j)}\n"
                    )


def wedge_map(
    params: ModelParams,
    resolution: int = 200,
    t_max: float = 2000.0,
    dt: float = DT_DETERMINISTIC,
    tol: float = 0.1,
    min_dwell: float = 1.0,
) -> WedgeGrid:
    """Classifies every grid cell of (0, pi)^2 by the corner its trajectory
    settles on under the planar field; cells that do not converge within
    ``t_max`` stay unresolved rather than being guessed.
    """
    field = sd_subspace_field(params)
    corners = np.array([[0.0, 0.0], [np.pi, 0.0], [0.0, np.pi], [np.pi, np.pi]])
    # only corners that attract within the plane are admissible labels; a cell
    # lingering near a repelling corner keeps integrating instead
    sink = np.array([
        bool(np.max(np.diagonal(jacobian_fd(field, c))) < 0.0) for c in corners
    ])
    centers = (np.arange(resolution) + 0.5) * np.pi / resolution
    g3, g4 = np.meshgrid(centers, centers, indexing="ij")
    pts = np.stack([g3.ravel(), g4.ravel()], axis=-1)
    n = pts.shape[0]
    labels = np.full(n, UNRESOLVED, dtype=np.int8)
    active = np.arange(n)
    x = pts.copy()
    candidate = np.full(n, -2, dtype=np.int8)
    entered = np.zeros(n)
    chunk_steps = max(1, int(round(min_dwell / dt)))
    t = 0.0
    n_chunks = int(round(t_max / (chunk_steps * dt)))
    for _ in range(n_chunks):
        for _ in range(chunk_steps):
            x = wrap(rk4_step(field, x, dt))
        t += chunk_steps * dt
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state at t={t}")
        d0 = circ_dist(x, 0.0)
        dpi = circ_dist(x, np.pi)
        is_d = dpi < d0
        code = (is_d[:, 0] + 2 * is_d[:, 1]).astype(np.int8)
        dist = np.max(np.minimum(d0, dpi), axis=-1)
        near = (dist < tol) & sink[code]
        cand = candidate[active]
        ent = entered[active]
        fresh = near & (code != cand)
        cand = np.where(near, np.where(fresh, code, cand), -2)
        ent = np.where(fresh, t, ent)
        candidate[active] = cand
        entered[active] = ent
        settled = near & ~fresh & ((t - ent) >= np.maximum(min_dwell, 0.1 * t))
        if settled.any():
            idx = active[settled]
            labels[idx] = cand[settled]
            keep = ~settled
            active = active[keep]
            x = x[keep]
            if active.size == 0:
                break
    try:
        saddles = special_equilibria_sd(params)
    except ValueError:
        saddles = []
    return WedgeGrid(
        psi3=centers,
        psi4=centers,
        labels=labels.reshape(resolution, resolution),
        saddles=saddles,
        t_max=t_max,
    )


# -- frequencies and localized synchrony ---------------------------------------

@dataclass
class FrequencyProfile:
    """Per-oscillator asymptotic average frequencies over a finite horizon."""

    omega: np.ndarray  # shape (M, N)
    horizon: float

    @property
    def per_population(self) -> np.ndarray:
        return self.omega.mean(axis=1)


def average_frequencies(
    params: ModelParams,
    x0: np.ndarray | None = None,
    word: str | None = None,
    T: float = 1000.0,
    dt: float = DT_DETERMINISTIC,
    kind: str = NONPAIRWISE,
) -> FrequencyProfile:
    """Average instantaneous frequencies (theta(T) - theta(0)) / T.

    The integration runs in the universal cover (no wrapping), so the result
    is a winding rate; start from an explicit full state or from the lift of
    an equilibrium word.
    """
    if (x0 is None) == (word is None):
        raise ValueError("give exactly one of x0 or word")
    if x0 is None:
        x0 = lift_phases(equilibrium_state(word, params.N), np.zeros(params.M), params.N)
    field = full_field(params, kind)
    n_steps = int(round(T / dt))
    traj = integrate_rk4(field, x0, dt, T, wrap_angles=False, record_every=n_steps)
    omega = (traj.states[-1] - traj.states[0]) / traj.times[-1]
    return FrequencyProfile(omega.reshape(params.M, params.N), float(traj.times[-1]))


def frequencies_from_trajectory(traj: Trajectory, M: int, N: int) -> FrequencyProfile:
    """Finite-horizon frequencies from a stored full-phase trajectory."""
    states = traj.states
    if traj.wrapped:
        states = np.unwrap(states, axis=0)
    horizon = traj.times[-1] - traj.times[0]
    omega = (states[-1] - states[0]) / horizon
    return FrequencyProfile(omega.reshape(M, N), float(horizon))


def windowed_frequencies(traj: Trajectory, window: float) -> tuple[np.ndarray, np.ndarray]:
    """Sliding-window winding rates; returns (window midpoints, rates)."""
    states = traj.states
    if traj.wrapped:
        states = np.unwrap(states, axis=0)
    w = max(1, int(round(window / traj.dt)))
    rates = (states[w:] - states[:-w]) / (w * traj.dt)
    mids = traj.times[:-w] + 0.5 * w * traj.dt
    return mids, rates


class LocalizedSynchrony(NamedTuple):
    localized: bool
    partition: list[list[int]]
    reason: str


def detect_localized_frequency_synchrony(
    profile: FrequencyProfile, tol: float = 1e-2
) -> LocalizedSynchrony:
    """True when every population is frequency-synchronized internally while at
    least two populations rotate at different average frequencies."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    omega = profile.omega
    spread = omega.max(axis=1) - omega.min(axis=1)
    if np.any(spread > tol):
        bad = int(np.argmax(spread))
        return LocalizedSynchrony(
            False, [], f"population {bad + 1} spans {spread[bad]:.3g} rad/time internally"
        )
    means = omega.mean(axis=1)
    groups: list[list[int]] = []
    for sigma in np.argsort(means):
        if groups and abs(means[sigma] - means[groups[-1][0]]) <= tol:
            groups[-1].append(int(sigma))
        else:
            groups.append([int(sigma)])
    if len(groups) < 2:
        return LocalizedSynchrony(False, groups, "all populations share one frequency")
    return LocalizedSynchrony(True, groups, "")


# -- noisy network runs ----------------------------------------------------------

@dataclass
class EdgeStatistics:
    """Transition statistics of an ensemble of noisy runs."""

    itineraries: list[Itinerary]
    transitions: Counter
    n_runs: int
    T: float

    def total_transitions(self) -> int:
        return sum(self.transitions.values())

    def fraction_within(self, allowed: set[tuple[str, str]]) -> float:
        total = self.total_transitions()
        if total == 0:
            return float("nan")
        good = sum(v for k, v in self.transitions.items() if k in allowed)
        return good / total


def noisy_network_runs(
    params: ModelParams,
    n_runs: int,
    T: float = 1e4,
    dt: float = 2e-3,
    eta: float = 1e-4,
    seed: int = 0,
    record_stride: int = 50,
    start_word: str = "SDSS",
    chunk_steps: int = 4000,
) -> EdgeStatistics:
    """Itineraries of an ensemble of stochastic runs of the full system.

    Each run owns a counter-based noise stream keyed by (seed, run index), so
    the ensemble result is independent of evaluation order.  Reduced states
    are recorded every ``record_stride`` steps and fed to a hysteresis
    itinerary tracker.
    """
    d = params.n_oscillators
    x0 = lift_phases(equilibrium_state(start_word, params.N), np.zeros(params.M), params.N)
    x = np.tile(x0, (n_runs, 1))
    rngs = [noise_stream(seed, i) for i in range(n_runs)]
    field = full_field(params, NONPAIRWISE)
    tracker = ItineraryTracker(params.M, n_runs)
    amp = eta * math.sqrt(dt)
    n_steps = int(round(T / dt))
    chunk_steps = min(chunk_steps, n_steps)
    done = 0
    while done < n_steps:
        block = min(chunk_steps, n_steps - done)
        noise = np.empty((block, n_runs, d))
        for i, rng in enumerate(rngs):
            noise[:, i, :] = rng.standard_normal((block, d))
        noise *= amp
        rec_times = []
        rec_psi = []
        for s in range(block):
            x = wrap(x + dt * field(x) + noise[s])
            step = done + s + 1
            if step % record_stride == 0:
                rec_times.append(step * dt)
                rec_psi.append(reduce_phases(x, params.M, params.N))
        if rec_psi:
            tracker.update(np.array(rec_times), np.stack(rec_psi))
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state at step {done + block}")
        done += block
    itins = tracker.finish(T)
    transitions: Counter = Counter()
    for itin in itins:
        transitions.update(itin.edges())
    return EdgeStatistics(itins, transitions, n_runs, T)
