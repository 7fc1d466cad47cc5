"""Coupling functions and vector fields for the coupled oscillator populations.

Two variants of the phase dynamics are provided:

* ``"full"`` -- interactions through a state-dependent phase shift built from
  the Kuramoto order parameters of the other populations.
* ``"nonpairwise"`` -- the first-order expansion of the full model in the
  coupling strength, whose inter-population terms involve four phases at a
  time.  This is the model whose relative equilibria and heteroclinic
  structures the rest of the package analyzes.

All right-hand sides accept arrays of shape ``(..., dim)`` and act on the
last axis, so ensembles and grids evaluate in one call.  The fields are
equivariant under permuting the oscillators within any population and under
shifting all phases of one population by a common constant.
"""

from __future__ import annotations

import numpy as np

from .model import ModelParams, lift_phases, wrap

FULL = "full"
NONPAIRWISE = "nonpairwise"
KINDS = (FULL, NONPAIRWISE)


def g(theta, params: ModelParams):
    """Pairwise coupling function sin(x + alpha) - r*sin(a*(x + alpha))."""
    x = np.asarray(theta) + params.alpha
    return np.sin(x) - params.r * np.sin(params.a * x)


def g2(theta, sigma: int, params: ModelParams):
    """Within-population coupling with the row-sum correction of population sigma."""
    ksig = params.row_sums[sigma]
    x = np.asarray(theta)
    return g(x, params) + params.K * (1.0 - 1.0 / params.N) * ksig * np.cos(x + params.alpha)


def g4(theta_tau, theta, params: ModelParams):
    """Nonpairwise interaction of a driving population with a phase difference.

    ``theta_tau`` holds the N phases of the driving population; ``theta`` is
    the phase difference the interaction acts on.
    """
    th = np.asarray(theta_tau, dtype=float)
    N = th.shape[-1]
    diffs = th[..., :, None] - th[..., None, :]
    total = np.cos(diffs + np.asarray(theta)[..., None, None] + params.alpha)
    total = total - total * np.eye(N)
    return -np.sum(total, axis=(-2, -1)) / N**2


def order_parameter(theta_sigma):
    """Kuramoto order parameter Z = mean(exp(i*theta)) of one population."""
    th = np.asarray(theta_sigma, dtype=float)
    return np.mean(np.exp(1j * th), axis=-1)


def _pair_diffs(theta, params):
    """Population-wise phase differences d[..., s, k, j] = theta_{s,j} - theta_{s,k}."""
    th = np.asarray(theta, dtype=float)
    pops = th.reshape(th.shape[:-1] + (params.M, params.N))
    return pops, pops[..., None, :] - pops[..., :, None]


def rhs_full(theta, params: ModelParams):
    """Phase velocities of the full model with state-dependent phase shift."""
    pops, d = _pair_diffs(theta, params)
    R2 = np.abs(order_parameter(pops)) ** 2
    dalpha = np.einsum("st,...t->...s", params.coupling, 1.0 - R2)
    arg = d + params.K * dalpha[..., :, None, None]
    terms = g(arg, params)
    terms = terms * (1.0 - np.eye(params.N))
    vel = params.omega + np.sum(terms, axis=-1)
    return vel.reshape(np.shape(theta))


def rhs_nonpairwise(theta, params: ModelParams):
    """Phase velocities of the nonpairwise approximation.

    The sum of the four-phase interaction terms over driving populations
    collapses algebraically: summing cos(theta_p - theta_q + x + alpha) over
    ordered pairs p != q leaves N^2*R^2 - N times cos(x + alpha), because the
    sine part cancels by antisymmetry.  This keeps the evaluation exact while
    avoiding the explicit pair sum per driving population.
    """
    pops, d = _pair_diffs(theta, params)
    N = params.N
    R2 = np.abs(order_parameter(pops)) ** 2
    b = np.einsum("st,...t->...s", params.coupling, R2 - 1.0 / N)
    coeff = params.K * ((1.0 - 1.0 / N) * params.row_sums - b)
    terms = g(d, params) + coeff[..., :, None, None] * np.cos(d + params.alpha)
    terms = terms * (1.0 - np.eye(N))
    vel = params.omega + np.sum(terms, axis=-1)
    return vel.reshape(np.shape(theta))


_RHS = {FULL: rhs_full, NONPAIRWISE: rhs_nonpairwise}


def rhs(theta, params: ModelParams, kind: str = NONPAIRWISE):
    try:
        return _RHS[kind](theta, params)
    except KeyError:
        raise ValueError(f"unknown vector-field kind {kind!r}; expected one of {KINDS}")


def rhs_reduced(psi, params: ModelParams, kind: str = NONPAIRWISE):
    """Velocities of the phase differences, computed by lifting with base 0.

    The result is independent of the lift base because both fields commute
    with per-population phase shifts.
    """
    psi = np.asarray(psi, dtype=float)
    base = np.zeros(psi.shape[:-1] + (params.M,))
    vel = rhs(lift_phases(psi, base, params.N), params, kind)
    pops = vel.reshape(vel.shape[:-1] + (params.M, params.N))
    dpsi = pops[..., 1:] - pops[..., :1]
    return dpsi.reshape(psi.shape)


def rhs_reduced_n2(psi, params: ModelParams):
    """Closed form of the reduced nonpairwise field for N = 2.

    Identical to ``rhs_reduced(psi, params, "nonpairwise")`` (cross-checked in
    the test suite); used where many states are integrated per call.
    """
    psi = np.asarray(psi, dtype=float)
    sa, ca = np.sin(params.alpha), np.cos(params.alpha)
    caa = np.cos(params.a * params.alpha)
    net = params.row_sums - np.einsum("st,...t->...s", params.coupling, np.cos(psi))
    return (
        -2.0 * ca * np.sin(psi)
        + 2.0 * params.r * caa * np.sin(params.a * psi)
        + params.K * sa * np.sin(psi) * net
    )


def reduced_field(params: ModelParams, kind: str = NONPAIRWISE, fast: bool | None = None):
    """Callable psi -> dpsi for the integrators.

    ``fast=True`` selects the N = 2 closed form (only valid for the
    nonpairwise model); by default the lift-and-difference route is used.
    """
    if fast is None:
        fast = False
    if fast:
        if kind != NONPAIRWISE or params.N != 2:
            raise ValueError("fast reduced field requires the nonpairwise model with N = 2")
        return lambda psi: rhs_reduced_n2(psi, params)
    return lambda psi: rhs_reduced(psi, params, kind)


def full_field(params: ModelParams, kind: str = NONPAIRWISE):
    """Callable theta -> dtheta for the integrators."""
    fn = _RHS[kind]
    return lambda theta: fn(theta, params)


def rhs_sd_subspace(psi3, psi4, params: ModelParams):
    """Planar field on the invariant subspace where population 1 is synchronized
    and population 2 is in splay phase (M = 4, N = 2).

    At alpha = pi/2 the displayed product form is used; otherwise the values
    fall back to the restriction of the reduced field to (0, pi, psi3, psi4).
    Both routes agree to 1e-10 where they overlap.
    """
    if params.M != 4 or params.N != 2:
        raise ValueError("the S D psi3 psi4 subspace requires M = 4, N = 2")
    psi3 = np.asarray(psi3, dtype=float)
    psi4 = np.asarray(psi4, dtype=float)
    if abs(params.alpha - np.pi / 2) < 1e-12 and params.a == 2:
        K, r, delta = params.K, params.r, params.delta
        d3 = np.sin(psi3) * (K * np.cos(psi4) - 4.0 * r * np.cos(psi3) + K * (1.0 + 2.0 * delta))
        d4 = np.sin(psi4) * (K * np.cos(psi3) - 4.0 * r * np.cos(psi4) + K * (1.0 - 2.0 * delta))
        return d3, d4
    shape = np.broadcast_shapes(psi3.shape, psi4.shape)
    psi = np.empty(shape + (4,))
    psi[..., 0] = 0.0
    psi[..., 1] = np.pi
    psi[..., 2] = psi3
    psi[..., 3] = psi4
    dpsi = rhs_reduced(psi, params, NONPAIRWISE)
    return dpsi[..., 2], dpsi[..., 3]


def sd_subspace_field(params: ModelParams):
    """Callable on (..., 2) arrays wrapping :func:`rhs_sd_subspace`."""

    def field(x):
        d3, d4 = rhs_sd_subspace(x[..., 0], x[..., 1], params)
        return np.stack([d3, d4], axis=-1)

    return field
