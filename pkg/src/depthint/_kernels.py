"""Compiled loops for the integrator's matrix-free normal operator.

These are straight loops with a fixed visiting order, so results do not
depend on threading. ``grid.py`` holds the numpy reference versions.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def neumann_laplacian(d, out, scale):
    """out += scale * D^T D d for forward differences with free boundaries."""
    h, w = d.shape
    for i in range(h):
        for j in range(w):
            c = d[i, j]
            s = 0.0
            if j > 0:
                s += c - d[i, j - 1]
            if j < w - 1:
                s += c - d[i, j + 1]
            if i > 0:
                s += c - d[i - 1, j]
            if i < h - 1:
                s += c - d[i + 1, j]
            out[i, j] += scale * s


@numba.njit(cache=True)
def block_mean(d, shift, out):
    """Average 2**shift x 2**shift blocks of d into out."""
    h, w = d.shape
    out[:, :] = 0.0
    for i in range(h):
        ci = i >> shift
        for j in range(w):
            out[ci, j >> shift] += d[i, j]
    inv = 1.0 / (1 << (2 * shift))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] *= inv


@numba.njit(cache=True)
def spread_add(c, shift, out):
    """out += block_mean^T c: each coarse cell spread over its block / 4**shift."""
    h, w = out.shape
    inv = 1.0 / (1 << (2 * shift))
    for i in range(h):
        ci = i >> shift
        for j in range(w):
            out[i, j] += inv * c[ci, j >> shift]


@numba.njit(cache=True)
def weighted_laplacian(d, weight, out):
    """out = weight * d + D^T D d."""
    h, w = d.shape
    for i in range(h):
        for j in range(w):
            c = d[i, j]
            s = weight[i, j] * c
            if j > 0:
                s += c - d[i, j - 1]
            if j < w - 1:
                s += c - d[i, j + 1]
            if i > 0:
                s += c - d[i - 1, j]
            if i < h - 1:
                s += c - d[i + 1, j]
            out[i, j] = s


@numba.njit(cache=True)
def normal_apply(d, weight, num_levels, out):
    """out = weight * d + sum_r P_r^T D^T D P_r d.

    Coarse grids are built by repeated 2x2 averaging and the per-level
    Laplacians are pushed back down one level at a time, which equals the
    direct 2**r pooling and its adjoint.
    """
    weighted_laplacian(d, weight, out)
    if num_levels == 1:
        return
    pyramid = [d]
    for r in range(1, num_levels):
        prev = pyramid[r - 1]
        c = np.empty((prev.shape[0] // 2, prev.shape[1] // 2))
        block_mean(prev, 1, c)
        pyramid.append(c)
    acc = np.zeros(pyramid[num_levels - 1].shape)
    neumann_laplacian(pyramid[num_levels - 1], acc, 1.0)
    for r in range(num_levels - 2, 0, -1):
        finer = np.zeros(pyramid[r].shape)
        neumann_laplacian(pyramid[r], finer, 1.0)
        spread_add(acc, 1, finer)
        acc = finer
    spread_add(acc, 1, out)


@numba.njit(cache=True)
def cg_update(x, r, p, ap, step):
    """x += step p; r -= step ap; returns ||r||^2."""
    acc = 0.0
    n = x.size
    xf = x.ravel()
    rf = r.ravel()
    pf = p.ravel()
    af = ap.ravel()
    for k in range(n):
        xf[k] += step * pf[k]
        rf[k] -= step * af[k]
        acc += rf[k] * rf[k]
    return acc


@numba.njit(cache=True)
def precondition(r, inv_diag, z):
    """z = inv_diag * r; returns <r, z>."""
    acc = 0.0
    rf = r.ravel()
    df = inv_diag.ravel()
    zf = z.ravel()
    for k in range(rf.size):
        zf[k] = df[k] * rf[k]
        acc += rf[k] * zf[k]
    return acc


@numba.njit(cache=True)
def direction_update(p, z, beta):
    pf = p.ravel()
    zf = z.ravel()
    for k in range(pf.size):
        pf[k] = zf[k] + beta * pf[k]


@numba.njit(cache=True)
def dot(a, b):
    acc = 0.0
    af = a.ravel()
    bf = b.ravel()
    for k in range(af.size):
        acc += af[k] * bf[k]
    return acc
