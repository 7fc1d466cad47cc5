"""Fixed-step integrators, finite-difference Jacobians, a small dense
eigensolver, and trajectory post-processing (itineraries, omega-limit tests).

Integrators are deliberately fixed-step: the fields are smooth and bounded on
the torus, runs must be bitwise reproducible under a seed, and ensembles are
advanced as array-valued states in single calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    TWO_PI,
    circ_dist,
    code_to_word,
    nearest_word_codes,
    word_code,
    wrap,
)

DT_DETERMINISTIC = 1e-2
DT_STOCHASTIC = 1e-3
EPS_NEAR = 0.1
EPS_LEAVE = 0.3
FD_STEP = 1e-6


class NumericalError(RuntimeError):
    """Raised when an integration or eigenvalue computation breaks down."""


# -- trajectories -------------------------------------------------------------

@dataclass
class Trajectory:
    """Uniformly sampled time series of states (leading axis is time)."""

    times: np.ndarray
    states: np.ndarray
    dt: float
    seed: int | None = None
    eta: float = 0.0
    wrapped: bool = True

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path, prefix: str = "psi"):
        """Write ``t,<prefix>_1,...`` rows with 15 significant digits."""
        states = self.states
        if states.ndim != 2:
            raise ValueError("CSV export expects a single trajectory (time x dim)")
        cols = [f"{prefix}_{i + 1}" for i in range(states.shape[1])]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(["t"] + cols) + "\n")
            for t, row in zip(self.times, states):
                vals = ",".join(format(v, ".15g") for v in row)
                fh.write(format(t, ".15g") + "," + vals + "\n")


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite state at step {step}")


def _plan_steps(dt, t_end, record_every):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < dt:
        raise ValueError("t_end must be at least dt")
    n_rec = max(1, int(round(t_end / (dt * record_every))))
    return n_rec


def rk4_step(field, x, dt):
    k1 = field(x)
    k2 = field(x + 0.5 * dt * k1)
    k3 = field(x + 0.5 * dt * k2)
    k4 = field(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_rk4(field, x0, dt, t_end, *, wrap_angles=True, record_every=1) -> Trajectory:
    """Classical fixed-step 4th-order integration; angles wrapped per step.

    ``record_every`` keeps every n-th step, so the recorded spacing is
    ``dt * record_every``.  Pass ``wrap_angles=False`` to integrate in the
    universal cover (needed for winding-rate measurements).
    """
    n_rec = _plan_steps(dt, t_end, record_every)
    x = np.array(x0, dtype=float)
    out = np.empty((n_rec + 1,) + x.shape)
    out[0] = x
    step = 0
    for i in range(n_rec):
        for _ in range(record_every):
            x = rk4_step(field, x, dt)
            if wrap_angles:
                x = wrap(x)
            step += 1
            _check_finite(x, step)
        out[i + 1] = x
    dt_rec = dt * record_every
    times = np.arange(n_rec + 1) * dt_rec
    return Trajectory(times, out, dt_rec, wrapped=wrap_angles)


def noise_stream(seed, stream: int | None = None) -> np.random.Generator:
    """Counter-based generator; (seed, stream) pairs give independent streams."""
    key = (seed,) if stream is None else (seed, stream)
    return np.random.Generator(np.random.Philox(key=np.random.SeedSequence(key).generate_state(2, np.uint64)))


def integrate_em(field, x0, dt, t_end, eta, seed, *, wrap_angles=True, record_every=1) -> Trajectory:
    """Euler-Maruyama with additive noise eta*sqrt(dt)*N(0,1) per component per step.

    With ``eta=0`` this is exactly the explicit Euler method.  The noise comes
    from a counter-based generator, so a given seed yields a bitwise-identical
    trajectory.
    """
    if eta < 0:
        raise ValueError("noise strength eta must be >= 0")
    n_rec = _plan_steps(dt, t_end, record_every)
    rng = noise_stream(seed)
    x = np.array(x0, dtype=float)
    out = np.empty((n_rec + 1,) + x.shape)
    out[0] = x
    amp = eta * np.sqrt(dt)
    step = 0
    for i in range(n_rec):
        for _ in range(record_every):
            x = x + dt * field(x)
            if eta > 0:
                x = x + amp * rng.standard_normal(x.shape)
            if wrap_angles:
                x = wrap(x)
            step += 1
            _check_finite(x, step)
        out[i + 1] = x
    dt_rec = dt * record_every
    times = np.arange(n_rec + 1) * dt_rec
    return Trajectory(times, out, dt_rec, seed=seed, eta=eta, wrapped=wrap_angles)


def jacobian_fd(field, x, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian, entry (i, j) = d f_i / d x_j."""
    if h <= 0:
        raise ValueError("finite-difference step h must be positive")
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    eye = np.eye(d)
    fp = field(x[None, :] + h * eye)
    fm = field(x[None, :] - h * eye)
    return (fp - fm).T / (2.0 * h)


# -- small dense eigenproblems -------------------------------------------------

@dataclass
class EigenData:
    """Eigenvalues sorted by real part (descending) with matching column vectors."""

    values: np.ndarray
    vectors: np.ndarray
    dimension: int


def _roots_quadratic(b, c):
    """Roots of x^2 + b x + c with real b, c."""
    disc = b * b - 4.0 * c
    if disc >= 0.0:
        s = np.sqrt(disc)
        # avoid cancellation: compute the larger-magnitude root first
        if b >= 0.0:
            x1 = (-b - s) / 2.0
        else:
            x1 = (-b + s) / 2.0
        x2 = c / x1 if x1 != 0.0 else (-b - x1)
        return np.array([x1, x2], dtype=complex)
    s = np.sqrt(-disc)
    return np.array([(-b + 1j * s) / 2.0, (-b - 1j * s) / 2.0])


def _eig2_values(A):
    return _roots_quadratic(-(A[0, 0] + A[1, 1]), A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])


def _eig3_values(A):
    c2 = A[0, 0] + A[1, 1] + A[2, 2]
    c1 = (
        A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
        + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1]
    )
    c0 = (
        A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
        - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
        + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0])
    )
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = -2.0 * c2**3 / 27.0 + c1 * c2 / 3.0 - c0
    scale = max(abs(p), abs(q), 1e-300)
    if abs(p) < 1e-14 * scale and abs(q) < 1e-14 * scale:
        t_roots = np.zeros(3, dtype=complex)
    elif p < 0.0 and -4.0 * p**3 - 27.0 * q * q >= 0.0:
        m = 2.0 * np.sqrt(-p / 3.0)
        arg = np.clip(3.0 * q / (p * m), -1.0, 1.0)
        theta = np.arccos(arg) / 3.0
        t_roots = m * np.cos(theta - TWO_PI * np.arange(3) / 3.0) + 0j
    else:
        s = np.sqrt(q * q / 4.0 + p**3 / 27.0)
        w = -q / 2.0 - np.sign(q) * s if q != 0.0 else s
        u = np.cbrt(w)
        t1 = u - p / (3.0 * u) if u != 0.0 else 0.0
        quad = _roots_quadratic(t1, t1 * t1 + p)
        t_roots = np.concatenate([[t1 + 0j], quad])
    lam = t_roots + shift
    # one Newton step on the characteristic polynomial tightens the closed form
    for _ in range(2):
        pv = lam**3 - c2 * lam**2 + c1 * lam - c0
        dv = 3.0 * lam**2 - 2.0 * c2 * lam + c1
        safe = np.abs(dv) > 1e-300
        lam = np.where(safe, lam - pv / np.where(safe, dv, 1.0), lam)
    return lam


def _hessenberg(A):
    """Householder reduction to upper Hessenberg form (similarity transform)."""
    H = np.array(A, dtype=float)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        v = x.copy()
        v[0] += np.sign(x[0]) * nx if x[0] != 0.0 else nx
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        v /= nv
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
    return H


def _givens(a, b):
    """Unitary 2x2 G with G @ (a, b) = (r, 0)."""
    r = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
    if r == 0.0:
        return np.eye(2, dtype=complex)
    return np.array([[np.conj(a) / r, np.conj(b) / r], [-b / r, a / r]])


def _wilkinson_shift(H):
    """Eigenvalue of the trailing 2x2 block closest to its bottom-right entry."""
    a, b = H[-2, -2], H[-2, -1]
    c, d = H[-1, -2], H[-1, -1]
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(complex(tr * tr - 4.0 * det))
    r1 = (tr + disc) / 2.0
    r2 = (tr - disc) / 2.0
    return r1 if abs(r1 - d) < abs(r2 - d) else r2


def _qr_values_hessenberg(H, max_sweeps=400):
    """Eigenvalues of an upper Hessenberg matrix by shifted QR with deflation."""
    H = H.astype(complex).copy()
    n = H.shape[0]
    tol = 1e-15 * (np.abs(H).sum() + 1.0)
    values = []
    hi = n
    sweeps = 0
    while hi > 0:
        if hi == 1:
            values.append(H[0, 0])
            hi = 0
            continue
        if abs(H[hi - 1, hi - 2]) <= tol * (abs(H[hi - 1, hi - 1]) + abs(H[hi - 2, hi - 2]) + 1.0):
            values.append(H[hi - 1, hi - 1])
            hi -= 1
            continue
        if hi == 2 or abs(H[hi - 2, hi - 3]) <= tol * (abs(H[hi - 2, hi - 2]) + abs(H[hi - 3, hi - 3]) + 1.0):
            blk = H[hi - 2:hi, hi - 2:hi]
            tr = blk[0, 0] + blk[1, 1]
            det = blk[0, 0] * blk[1, 1] - blk[0, 1] * blk[1, 0]
            disc = np.sqrt(complex(tr * tr - 4.0 * det))
            values.extend([(tr + disc) / 2.0, (tr - disc) / 2.0])
            hi -= 2
            continue
        sweeps += 1
        if sweeps > max_sweeps:
            raise NumericalError(f"QR iteration did not converge within {max_sweeps} sweeps")
        mu = _wilkinson_shift(H[:hi, :hi])
        for i in range(hi):
            H[i, i] -= mu
        rotations = []
        for i in range(hi - 1):
            G = _givens(H[i, i], H[i + 1, i])
            H[i:i + 2, i:hi] = G @ H[i:i + 2, i:hi]
            rotations.append(G)
        for i, G in enumerate(rotations):
            H[:min(i + 2, hi), i:i + 2] = H[:min(i + 2, hi), i:i + 2] @ G.conj().T
        for i in range(hi):
            H[i, i] += mu
    return np.array(values)


def _eigenvector(A, lam, rng_offset=0):
    """Inverse iteration for one eigenvector of A (complex arithmetic)."""
    n = A.shape[0]
    scale = np.abs(A).max() + 1.0
    v = np.ones(n, dtype=complex) + 1e-3 * (np.arange(n) + rng_offset)
    v /= np.linalg.norm(v)
    shift = lam + scale * (1e-12 + 1e-12j)
    B = A.astype(complex) - shift * np.eye(n)
    for _ in range(8):
        try:
            w = np.linalg.solve(B, v)
        except np.linalg.LinAlgError:
            shift = shift + scale * (3e-12 + 2e-12j)
            B = A.astype(complex) - shift * np.eye(n)
            continue
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0.0:
            break
        v = w / nw
        if np.linalg.norm(A @ v - lam * v) < 1e-10 * scale:
            break
    return v


def eigen_small(A, residual_tol: float = 1e-8) -> EigenData:
    """Complete eigen-decomposition of a real matrix with n <= 8.

    Quadratic/cubic closed forms for n <= 3; Householder-Hessenberg reduction
    followed by shifted QR iteration for 4 <= n <= 8.  Eigenvectors come from
    inverse iteration; each pair satisfies ``|A v - lam v| < 1e-8``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("eigen_small expects a square matrix")
    n = A.shape[0]
    if n > 8:
        raise ValueError("eigen_small handles matrices of size n <= 8")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    if n == 1:
        return EigenData(A[0, :1].astype(complex), np.ones((1, 1), dtype=complex), 1)
    if n == 2:
        values = _eig2_values(A)
    elif n == 3:
        values = _eig3_values(A)
    else:
        values = _qr_values_hessenberg(_hessenberg(A))
    order = np.lexsort((-values.imag, -values.real))
    values = values[order]
    vectors = np.empty((n, n), dtype=complex)
    scale = np.abs(A).max() + 1.0
    for i, lam in enumerate(values):
        v = _eigenvector(A, lam, rng_offset=i)
        res = np.linalg.norm(A @ v - lam * v)
        if res > residual_tol:
            # Rayleigh-quotient refinement as a fallback
            lam = complex(np.conj(v) @ (A @ v))
            v = _eigenvector(A, lam, rng_offset=i + n)
            res = np.linalg.norm(A @ v - lam * v)
            values[i] = lam
        if res > residual_tol * max(1.0, scale):
            raise NumericalError(f"eigenvector residual {res:.2e} exceeds {residual_tol:.0e}")
        vectors[:, i] = v
    return EigenData(values, vectors, n)


# -- itineraries ---------------------------------------------------------------

@dataclass
class Itinerary:
    """Sequence of visited equilibrium words with entry/exit times."""

    symbols: list[str] = field(default_factory=list)
    entries: list[float] = field(default_factory=list)
    exits: list[float] = field(default_factory=list)

    def edges(self) -> list[tuple[str, str]]:
        return [(a, b) for a, b in zip(self.symbols, self.symbols[1:])]

    def dwell_times(self) -> np.ndarray:
        return np.asarray(self.exits) - np.asarray(self.entries)


class ItineraryTracker:
    """Streaming symbol detector with a hysteresis band.

    A word opens when the infinity-norm circular distance of the reduced state
    to its equilibrium drops below ``eps_near`` and closes when the distance
    exceeds ``eps_leave``.  Re-entry into the symbol that just closed (with no
    other symbol in between) extends the previous visit, so consecutive
    symbols always differ.  Tracks ``n_streams`` trajectories at once.
    """

    def __init__(self, M: int, n_streams: int = 1, eps_near: float = EPS_NEAR,
                 eps_leave: float = EPS_LEAVE):
        if not 0 < eps_near < eps_leave:
            raise ValueError("need 0 < eps_near < eps_leave")
        self.M = M
        self.eps_near = eps_near
        self.eps_leave = eps_leave
        self.n = n_streams
        self.open_code = np.full(n_streams, -1, dtype=np.int64)
        self.open_state = np.zeros((n_streams, M))
        self.itineraries = [Itinerary() for _ in range(n_streams)]

    def update(self, times, psi):
        """Feed a block of frames; psi has shape (T, n_streams, M) or (T, M)."""
        psi = np.asarray(psi)
        if psi.ndim == 2:
            psi = psi[:, None, :]
        codes, dists = nearest_word_codes(psi, self.M)
        for t_idx in range(psi.shape[0]):
            t = times[t_idx]
            frame = psi[t_idx]
            is_open = self.open_code >= 0
            if np.any(is_open):
                d_open = np.max(circ_dist(frame, self.open_state), axis=-1)
                closing = is_open & (d_open > self.eps_leave)
                for s in np.nonzero(closing)[0]:
                    self.itineraries[s].exits.append(float(t))
                    self.open_code[s] = -1
            opening = (self.open_code < 0) & (dists[t_idx] < self.eps_near)
            for s in np.nonzero(opening)[0]:
                code = int(codes[t_idx, s])
                itin = self.itineraries[s]
                if itin.symbols and word_code(itin.symbols[-1]) == code:
                    itin.exits.pop()  # same word re-entered: extend the visit
                else:
                    itin.symbols.append(code_to_word(code, self.M))
                    itin.entries.append(float(t))
                self.open_code[s] = code
                self.open_state[s] = np.where(
                    [(code >> i) & 1 for i in range(self.M)], np.pi, 0.0
                )

    def finish(self, t_end) -> list[Itinerary]:
        for s in range(self.n):
            if self.open_code[s] >= 0:
                self.itineraries[s].exits.append(float(t_end))
                self.open_code[s] = -1
        return self.itineraries


def itinerary(traj: Trajectory, words=None, eps_near: float = EPS_NEAR,
              eps_leave: float = EPS_LEAVE) -> Itinerary:
    """Itinerary of a single reduced trajectory.

    ``words`` optionally restricts the emitted symbols; visits to other words
    are dropped (their surroundings count as symbol-free gaps).
    """
    M = traj.states.shape[-1]
    tracker = ItineraryTracker(M, 1, eps_near, eps_leave)
    tracker.update(traj.times, traj.states[:, None, :])
    itin = tracker.finish(traj.times[-1])[0]
    if words is not None:
        allowed = set(words)
        filtered = Itinerary()
        for sym, t_in, t_out in zip(itin.symbols, itin.entries, itin.exits):
            if sym not in allowed:
                continue
            if filtered.symbols and filtered.symbols[-1] == sym:
                filtered.exits[-1] = t_out
            else:
                filtered.symbols.append(sym)
                filtered.entries.append(t_in)
                filtered.exits.append(t_out)
        itin = filtered
    return itin


def classify_omega_limit(field, x0, candidates, dt: float = DT_DETERMINISTIC,
                         t_max: float = 2000.0, tol: float = 0.1,
                         min_dwell: float | None = None) -> str | None:
    """Label of the candidate equilibrium the trajectory settles on, or None.

    The state must stay within ``tol`` (infinity-norm circular distance) of one
    candidate for a trailing window of 10% of the elapsed time before the
    label is returned.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    labels = list(candidates)
    points = np.stack([np.asarray(candidates[k], dtype=float) for k in labels])
    if min_dwell is None:
        min_dwell = 10 * dt
    x = np.array(x0, dtype=float)
    current = -1
    entered = 0.0
    n_steps = int(round(t_max / dt))
    for i in range(n_steps + 1):
        t = i * dt
        dists = np.max(circ_dist(x[None, :], points), axis=-1)
        j = int(np.argmin(dists))
        if dists[j] < tol:
            if j != current:
                current, entered = j, t
            elif (t - entered) >= max(min_dwell, 0.1 * t):
                return labels[j]
        else:
            current = -1
        if i < n_steps:
            x = wrap(rk4_step(field, x, dt))
            _check_finite(x, i + 1)
    return None
