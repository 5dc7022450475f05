"""Compiled inner loops for path simulation.

State evolution is inherently sequential, so these loops are the only parts
of the package that cannot be vectorized; everything they consume (uniform
variates, proposal weights, noise values) is drawn vectorized by the caller,
which keeps the random stream layout identical across implementations.
"""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def markov_path(cum_rows, start, u):
    """Finite-chain path from cumulative transition rows and uniforms.

    Returns len(u)+1 state indices beginning at `start`.
    """
    n = u.shape[0]
    m = cum_rows.shape[1]
    out = np.empty(n + 1, np.int64)
    out[0] = start
    cur = start
    for i in range(n):
        j = np.searchsorted(cum_rows[cur], u[i], side="right")
        if j >= m:
            j = m - 1
        cur = j
        out[i + 1] = cur
    return out


@numba.njit(cache=True, nogil=True)
def imh_accept_loop(w_prop, u):
    """Independence-sampler accept/reject over precomputed proposal weights.

    The path starts at proposal 0; proposal i replaces the current state when
    ``u[i] * w(current) < w_prop[i]``.  Returns for every step the index of
    the proposal occupying the state, so the caller can map back to values.
    """
    n = w_prop.shape[0]
    idx = np.empty(n, np.int64)
    idx[0] = 0
    cur = 0
    cur_w = w_prop[0]
    for i in range(1, n):
        if u[i] * cur_w < w_prop[i]:
            cur = i
            cur_w = w_prop[i]
        idx[i] = cur
    return idx


@numba.njit(cache=True, nogil=True)
def imh_accept_loop_with_flags(w_prop, u):
    """As imh_accept_loop, additionally returning per-step accept flags."""
    n = w_prop.shape[0]
    idx = np.empty(n, np.int64)
    acc = np.zeros(n, np.bool_)
    idx[0] = 0
    cur = 0
    cur_w = w_prop[0]
    for i in range(1, n):
        if u[i] * cur_w < w_prop[i]:
            cur = i
            cur_w = w_prop[i]
            acc[i] = True
        idx[i] = cur
    return idx, acc


@numba.njit(cache=True, nogil=True)
def pm_path_atoms(q_cum, rbar, atom_cum, atom_vals, atom_len, x0, u0, up, uv, ua):
    """Pseudo-marginal path with per-state atomic noise.

    q_cum: cumulative proposal rows; rbar: marginal acceptance-ratio matrix;
    atom_cum/atom_vals: padded per-state noise tables with atom_len valid
    entries per row.  up/uv/ua are the proposal, noise and acceptance
    uniforms.  Proposals with zero noise value are never accepted.
    """
    n = up.shape[0]
    m = q_cum.shape[1]
    xs = np.empty(n + 1, np.int64)
    us = np.empty(n + 1, np.float64)
    xs[0] = x0
    us[0] = u0
    x = x0
    uu = u0
    for i in range(n):
        y = np.searchsorted(q_cum[x], up[i], side="right")
        if y >= m:
            y = m - 1
        k = np.searchsorted(atom_cum[y, : atom_len[y]], uv[i], side="right")
        if k >= atom_len[y]:
            k = atom_len[y] - 1
        v = atom_vals[y, k]
        if ua[i] * uu < rbar[x, y] * v:
            x = y
            uu = v
        xs[i + 1] = x
        us[i + 1] = uu
    return xs, us


@numba.njit(cache=True, nogil=True)
def pm_path_prenoise(q_cum, rbar, vs, x0, u0, up, ua):
    """Pseudo-marginal path with state-independent noise drawn up front."""
    n = up.shape[0]
    m = q_cum.shape[1]
    xs = np.empty(n + 1, np.int64)
    us = np.empty(n + 1, np.float64)
    xs[0] = x0
    us[0] = u0
    x = x0
    uu = u0
    for i in range(n):
        y = np.searchsorted(q_cum[x], up[i], side="right")
        if y >= m:
            y = m - 1
        if ua[i] * uu < rbar[x, y] * vs[i]:
            x = y
            uu = vs[i]
        xs[i + 1] = x
        us[i + 1] = uu
    return xs, us


@numba.njit(cache=True, nogil=True)
def mh_path(q_cum, rbar, x0, up, ua):
    """Marginal Metropolis-Hastings path; same stream layout as the
    pseudo-marginal loops so unit-noise runs couple step for step."""
    n = up.shape[0]
    m = q_cum.shape[1]
    xs = np.empty(n + 1, np.int64)
    xs[0] = x0
    x = x0
    for i in range(n):
        y = np.searchsorted(q_cum[x], up[i], side="right")
        if y >= m:
            y = m - 1
        if ua[i] < rbar[x, y]:
            x = y
        xs[i + 1] = x
    return xs
