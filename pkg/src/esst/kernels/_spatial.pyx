# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the isotropic (radius-binned) 3D convolution.

Layouts: feat (B, X, Y, Z, M, V), weights (O, M, nbins), binmap (s, s, s)
int32, out (B, X, Y, Z, O, V). Zero padding, odd kernel size. Every output
element is written by exactly one loop iteration, so results are bitwise
deterministic for any thread count.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from cython.parallel cimport prange

ctypedef fused real:
    float
    double


def conv_forward(const real[:, :, :, :, :, ::1] feat,
                 const real[:, :, ::1] weights,
                 const int[:, :, ::1] binmap,
                 real[:, :, :, :, :, ::1] out,
                 int num_threads):
    cdef Py_ssize_t B = feat.shape[0], X = feat.shape[1], Y = feat.shape[2]
    cdef Py_ssize_t Z = feat.shape[3], M = feat.shape[4], V = feat.shape[5]
    cdef Py_ssize_t O = weights.shape[0]
    cdef Py_ssize_t s = binmap.shape[0]
    cdef Py_ssize_t h = s // 2
    cdef Py_ssize_t n_vox = B * X * Y * Z
    cdef Py_ssize_t idx, b, x, y, z, rem
    cdef Py_ssize_t i, j, k, sx, sy, sz, o, m, v, q
    cdef real w

    for idx in prange(n_vox, nogil=True, schedule='static', num_threads=num_threads):
        b = idx // (X * Y * Z)
        rem = idx - b * (X * Y * Z)
        x = rem // (Y * Z)
        rem = rem - x * (Y * Z)
        y = rem // Z
        z = rem - y * Z
        for i in range(s):
            sx = x + i - h
            if sx < 0 or sx >= X:
                continue
            for j in range(s):
                sy = y + j - h
                if sy < 0 or sy >= Y:
                    continue
                for k in range(s):
                    sz = z + k - h
                    if sz < 0 or sz >= Z:
                        continue
                    q = binmap[i, j, k]
                    for o in range(O):
                        for m in range(M):
                            w = weights[o, m, q]
                            for v in range(V):
                                out[b, x, y, z, o, v] += w * feat[b, sx, sy, sz, m, v]


def conv_backward_input(const real[:, :, :, :, :, ::1] gout,
                        const real[:, :, ::1] weights,
                        const int[:, :, ::1] binmap,
                        real[:, :, :, :, :, ::1] gfeat,
                        int num_threads):
    """gfeat[p] += sum_d W(d)^T gout[p - d]; gather form, race free."""
    cdef Py_ssize_t B = gfeat.shape[0], X = gfeat.shape[1], Y = gfeat.shape[2]
    cdef Py_ssize_t Z = gfeat.shape[3], M = gfeat.shape[4], V = gfeat.shape[5]
    cdef Py_ssize_t O = weights.shape[0]
    cdef Py_ssize_t s = binmap.shape[0]
    cdef Py_ssize_t h = s // 2
    cdef Py_ssize_t n_vox = B * X * Y * Z
    cdef Py_ssize_t idx, b, x, y, z, rem
    cdef Py_ssize_t i, j, k, ox, oy, oz, o, m, v, q
    cdef real w

    for idx in prange(n_vox, nogil=True, schedule='static', num_threads=num_threads):
        b = idx // (X * Y * Z)
        rem = idx - b * (X * Y * Z)
        x = rem // (Y * Z)
        rem = rem - x * (Y * Z)
        y = rem // Z
        z = rem - y * Z
        for i in range(s):
            ox = x - (i - h)
            if ox < 0 or ox >= X:
                continue
            for j in range(s):
                oy = y - (j - h)
                if oy < 0 or oy >= Y:
                    continue
                for k in range(s):
                    oz = z - (k - h)
                    if oz < 0 or oz >= Z:
                        continue
                    q = binmap[i, j, k]
                    for o in range(O):
                        for m in range(M):
                            w = weights[o, m, q]
                            for v in range(V):
                                gfeat[b, x, y, z, m, v] += w * gout[b, ox, oy, oz, o, v]


def conv_backward_weights(const real[:, :, :, :, :, ::1] gout,
                          const real[:, :, :, :, :, ::1] feat,
                          const int[:, :, ::1] binmap,
                          real[:, :, ::1] gweights,
                          int num_threads):
    """gweights[o, m, bin(d)] += sum gout[p, o, v] feat[p + d, m, v].

    Parallelized over output channels; each thread owns gweights[o].
    """
    cdef Py_ssize_t B = feat.shape[0], X = feat.shape[1], Y = feat.shape[2]
    cdef Py_ssize_t Z = feat.shape[3], M = feat.shape[4], V = feat.shape[5]
    cdef Py_ssize_t O = gweights.shape[0]
    cdef Py_ssize_t s = binmap.shape[0]
    cdef Py_ssize_t h = s // 2
    cdef Py_ssize_t o, b, x, y, z, i, j, k, sx, sy, sz, m, v, q
    cdef double acc

    for o in prange(O, nogil=True, schedule='static', num_threads=num_threads):
        for b in range(B):
            for x in range(X):
                for y in range(Y):
                    for z in range(Z):
                        for i in range(s):
                            sx = x + i - h
                            if sx < 0 or sx >= X:
                                continue
                            for j in range(s):
                                sy = y + j - h
                                if sy < 0 or sy >= Y:
                                    continue
                                for k in range(s):
                                    sz = z + k - h
                                    if sz < 0 or sz >= Z:
                                        continue
                                    q = binmap[i, j, k]
                                    for m in range(M):
                                        acc = 0.0
                                        for v in range(V):
                                            acc = acc + gout[b, x, y, z, o, v] * feat[b, sx, sy, sz, m, v]
                                        gweights[o, m, q] += <real> acc
