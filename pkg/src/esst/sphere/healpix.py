"""HEALPix pixelization built from the published geometry formulas.

Implements pixel centers in RING and NESTED order, RING<->NESTED
conversion through the (face, x, y) representation, neighbor lookup via
the standard face-boundary tables, and the arity-4 parent/child maps of
the NESTED scheme. Only power-of-two nside values are supported.

The sphere is covered by 12 base faces; face f is a (nside x nside) grid
of pixels addressed by (x, y). The continuous map from in-face
coordinates to the sphere lives in :func:`face_uv_to_vec`, which is also
used to sample exact pixel boundaries for geometric tests.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import ConfigError

# Ring offset (jrll) and phi offset (jpll) of the 12 base faces.
_JRLL = np.array([2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4])
_JPLL = np.array([1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7])

# Neighbor direction offsets in face coordinates: 4 edge directions first,
# then the 4 diagonals.
_EDGE_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))
_DIAG_DIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def check_nside(nside: int) -> int:
    nside = int(nside)
    if nside < 1 or (nside & (nside - 1)) != 0:
        raise ConfigError(f"nside must be a power of two >= 1, got {nside}")
    return nside


def npix(nside: int) -> int:
    nside = check_nside(nside)
    return 12 * nside * nside


# -- continuous face geometry --------------------------------------------------


def face_uv_to_zphi(face, u, v):
    """Map continuous in-face coordinates to (z, phi).

    ``(u, v)`` live in [0, 1]^2 over face ``face``; the pixel (x, y) at a
    given nside occupies [x/nside, (x+1)/nside) x [y/nside, (y+1)/nside)
    and its center sits at u = (x + 0.5)/nside. Vectorized over inputs.
    """
    face = np.asarray(face, dtype=np.int64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    t = _JRLL[face] - (u + v)  # continuous ring coordinate in [0, 4]
    phi_off = _JPLL[face].astype(np.float64)
    diff = u - v

    z = np.empty(np.broadcast(face, u, v).shape, dtype=np.float64)
    phi = np.empty_like(z)

    north = t < 1.0
    south = t > 3.0
    eq = ~(north | south)

    z[eq] = (2.0 - t[eq]) * (2.0 / 3.0)
    phi[eq] = (np.pi / 4.0) * (phi_off[eq] + diff[eq])

    tn = t[north]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(tn > 0, diff[north] / np.where(tn > 0, tn, 1.0), 0.0)
    z[north] = 1.0 - (tn * tn) / 3.0
    phi[north] = (np.pi / 4.0) * (phi_off[north] + ratio)

    ts = 4.0 - t[south]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(ts > 0, diff[south] / np.where(ts > 0, ts, 1.0), 0.0)
    z[south] = -(1.0 - (ts * ts) / 3.0)
    phi[south] = (np.pi / 4.0) * (phi_off[south] + ratio)

    return z, phi


def face_uv_to_vec(face, u, v) -> np.ndarray:
    z, phi = face_uv_to_zphi(face, u, v)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


# -- RING scheme centers ---------------------------------------------------------


def pix2zphi_ring(nside: int, pix) -> tuple:
    """(z, phi) of RING-ordered pixel centers."""
    nside = check_nside(nside)
    pix = np.asarray(pix, dtype=np.int64)
    total = 12 * nside * nside
    if np.any((pix < 0) | (pix >= total)):
        raise ConfigError("pixel index out of range")
    ncap = 2 * nside * (nside - 1)
    z = np.empty(pix.shape, dtype=np.float64)
    phi = np.empty(pix.shape, dtype=np.float64)

    north = pix < ncap
    if np.any(north):
        p = pix[north]
        ring = ((1 + np.sqrt(1.0 + 2.0 * p).astype(np.int64)) // 2).astype(np.int64)
        # integer sqrt can land one off around perfect squares; fix up
        ring = _fix_cap_ring(p, ring)
        j = p + 1 - 2 * ring * (ring - 1)
        z[north] = 1.0 - (ring * ring) / (3.0 * nside * nside)
        phi[north] = (np.pi / (2.0 * ring)) * (j - 0.5)

    south = pix >= total - ncap
    if np.any(south):
        p = total - pix[south]
        ring = ((1 + np.sqrt(2.0 * p - 1.0).astype(np.int64)) // 2).astype(np.int64)
        ring = _fix_cap_ring(p - 1, ring)
        j = 4 * ring + 1 - (p - 2 * ring * (ring - 1))
        z[south] = -(1.0 - (ring * ring) / (3.0 * nside * nside))
        phi[south] = (np.pi / (2.0 * ring)) * (j - 0.5)

    middle = ~(north | south)
    if np.any(middle):
        p = pix[middle] - ncap
        ring = p // (4 * nside) + nside  # counted from the north pole
        j = p % (4 * nside) + 1
        fodd = np.where(((ring + nside) & 1) == 1, 1.0, 0.5)
        z[middle] = (2.0 * nside - ring) * (2.0 / (3.0 * nside))
        phi[middle] = (np.pi / (2.0 * nside)) * (j - fodd)

    return z, phi


def _fix_cap_ring(p, ring):
    """Clamp the cap ring index so 2*ring*(ring-1) <= p < 2*ring*(ring+1)."""
    ring = ring.copy()
    while True:
        too_big = 2 * ring * (ring - 1) > p
        too_small = 2 * ring * (ring + 1) <= p
        if not (np.any(too_big) or np.any(too_small)):
            return ring
        ring[too_big] -= 1
        ring[too_small] += 1


def pix2vec_ring(nside: int, pix) -> np.ndarray:
    z, phi = pix2zphi_ring(nside, pix)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


def zphi2pix_ring(nside: int, z, phi):
    """RING pixel containing direction (z, phi); published ang2pix formula."""
    nside = check_nside(nside)
    z = np.asarray(z, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    ncap = 2 * nside * (nside - 1)
    total = 12 * nside * nside
    za = np.abs(z)
    tt = np.mod(phi, 2.0 * np.pi) * (2.0 / np.pi)  # in [0, 4)

    pix = np.empty(np.broadcast(z, phi).shape, dtype=np.int64)

    eq = za <= 2.0 / 3.0
    if np.any(eq):
        temp1 = nside * (0.5 + tt[eq])
        temp2 = nside * (z[eq] * 0.75)
        jp = (temp1 - temp2).astype(np.int64)  # ascending edge line
        jm = (temp1 + temp2).astype(np.int64)  # descending edge line
        ir = nside + 1 + jp - jm  # ring number counted from z = 2/3
        kshift = 1 - (ir & 1)
        ip = (jp + jm - nside + kshift + 1) // 2
        ip = np.mod(ip, 4 * nside)
        pix[eq] = ncap + (ir - 1) * 4 * nside + ip

    caps = ~eq
    if np.any(caps):
        tc = tt[caps]
        tp = tc - np.floor(tc)
        tmp = nside * np.sqrt(3.0 * (1.0 - za[caps]))
        jp = (tp * tmp).astype(np.int64)
        jm = ((1.0 - tp) * tmp).astype(np.int64)
        ir = jp + jm + 1  # ring number counted from the closest pole
        ip = (tc * ir).astype(np.int64)
        ip = np.mod(ip, 4 * ir)
        north = z[caps] > 0
        pix[caps] = np.where(north, 2 * ir * (ir - 1) + ip, total - 2 * ir * (ir + 1) + ip)

    return pix


def vec2pix_ring(nside: int, vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec, axis=-1)
    z = vec[..., 2] / norm
    phi = np.arctan2(vec[..., 1], vec[..., 0])
    return zphi2pix_ring(nside, z, phi)


def vec2pix_nest(nside: int, vec) -> np.ndarray:
    return ring2nest(nside, vec2pix_ring(nside, vec))


# -- NESTED scheme via (face, x, y) ----------------------------------------------


def _compress_bits(raw: np.ndarray) -> np.ndarray:
    """Extract the even-position bits of each value (inverse of spreading)."""
    raw = raw & 0x5555555555555555
    raw = (raw | (raw >> 1)) & 0x3333333333333333
    raw = (raw | (raw >> 2)) & 0x0F0F0F0F0F0F0F0F
    raw = (raw | (raw >> 4)) & 0x00FF00FF00FF00FF
    raw = (raw | (raw >> 8)) & 0x0000FFFF0000FFFF
    raw = (raw | (raw >> 16)) & 0x00000000FFFFFFFF
    return raw


def _spread_bits(raw: np.ndarray) -> np.ndarray:
    """Spread bits of each value to even positions."""
    raw = raw & 0x00000000FFFFFFFF
    raw = (raw | (raw << 16)) & 0x0000FFFF0000FFFF
    raw = (raw | (raw << 8)) & 0x00FF00FF00FF00FF
    raw = (raw | (raw << 4)) & 0x0F0F0F0F0F0F0F0F
    raw = (raw | (raw << 2)) & 0x3333333333333333
    raw = (raw | (raw << 1)) & 0x5555555555555555
    return raw


def nest2xyf(nside: int, pix):
    nside = check_nside(nside)
    pix = np.asarray(pix, dtype=np.int64)
    area = nside * nside
    face = pix // area
    within = pix % area
    x = _compress_bits(within)
    y = _compress_bits(within >> 1)
    return face, x, y


def xyf2nest(nside: int, face, x, y):
    nside = check_nside(nside)
    face = np.asarray(face, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    return face * nside * nside + _spread_bits(x) + (_spread_bits(y) << 1)


def xyf2ring(nside: int, face, x, y):
    nside = check_nside(nside)
    face = np.asarray(face, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    total = 12 * nside * nside
    ncap = 2 * nside * (nside - 1)
    nl4 = 4 * nside

    jr = _JRLL[face] * nside - x - y - 1

    nr = np.where(jr < nside, jr, np.where(jr > 3 * nside, nl4 - jr, nside))
    kshift = np.where((jr >= nside) & (jr <= 3 * nside), (jr - nside) & 1, 0)
    n_before = np.where(
        jr < nside,
        2 * nr * (nr - 1),
        np.where(jr > 3 * nside, total - 2 * (nr + 1) * nr, ncap + (jr - nside) * nl4),
    )

    jp = (_JPLL[face] * nr + x - y + 1 + kshift) // 2
    jp = np.where(jp > nl4, jp - nl4, jp)
    jp = np.where(jp < 1, jp + nl4, jp)
    return n_before + jp - 1


@lru_cache(maxsize=32)
def nest2ring_table(nside: int) -> np.ndarray:
    """Permutation p such that nested pixel i is ring pixel p[i]."""
    nside = check_nside(nside)
    pix = np.arange(12 * nside * nside, dtype=np.int64)
    face, x, y = nest2xyf(nside, pix)
    table = xyf2ring(nside, face, x, y)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=32)
def ring2nest_table(nside: int) -> np.ndarray:
    table = np.argsort(nest2ring_table(nside))
    table.setflags(write=False)
    return table


def nest2ring(nside: int, pix):
    return nest2ring_table(nside)[np.asarray(pix, dtype=np.int64)]


def ring2nest(nside: int, pix):
    return ring2nest_table(nside)[np.asarray(pix, dtype=np.int64)]


def pix2vec_nest(nside: int, pix) -> np.ndarray:
    return pix2vec_ring(nside, nest2ring(nside, pix))


def healpix_centers(nside: int) -> np.ndarray:
    """Unit vectors of all pixel centers in NESTED order, shape (12*nside^2, 3)."""
    nside = check_nside(nside)
    return pix2vec_nest(nside, np.arange(12 * nside * nside, dtype=np.int64))


# -- hierarchy -------------------------------------------------------------------


def nest_parent(pix, nside: int):
    """Parent of a NESTED pixel at resolution nside/2."""
    nside = check_nside(nside)
    if nside == 1:
        raise ConfigError("nside=1 pixels have no parent")
    pix = np.asarray(pix, dtype=np.int64)
    if np.any((pix < 0) | (pix >= 12 * nside * nside)):
        raise ConfigError("pixel index out of range")
    return pix >> 2


def nest_children(pix, nside: int):
    """The 4 children of a NESTED pixel at resolution 2*nside, shape (..., 4)."""
    nside = check_nside(nside)
    pix = np.asarray(pix, dtype=np.int64)
    if np.any((pix < 0) | (pix >= 12 * nside * nside)):
        raise ConfigError("pixel index out of range")
    return (pix[..., None] << 2) + np.arange(4, dtype=np.int64)


# -- neighbors -------------------------------------------------------------------


@lru_cache(maxsize=32)
def neighbors_nest(nside: int) -> np.ndarray:
    """All-pixel neighbor table in NESTED order, shape (npix, 8), -1 where absent.

    A pixel's neighbors are the pixels sharing an edge or a corner with
    it. They are found by sampling a small circle of directions around
    each of the pixel's 4 edge midpoints and 4 corners and collecting
    every containing pixel: any pixel incident to a contact point owns an
    angular sector around it, so a fine enough circle hits them all. The
    24 corner pixels at nside >= 2 come out with exactly 7 neighbors.
    """
    nside = check_nside(nside)
    total = 12 * nside * nside
    pix = np.arange(total, dtype=np.int64)
    face, x, y = nest2xyf(nside, pix)

    n_circle = 16
    radius = 0.05 / nside  # well inside the incident pixels' span
    angles = (np.arange(n_circle) + 0.5) * (2.0 * np.pi / n_circle)

    found = [set() for _ in range(total)]
    for dx, dy in _EDGE_DIRS + _DIAG_DIRS:
        ub = (x + 0.5 + 0.5 * dx) / nside
        vb = (y + 0.5 + 0.5 * dy) / nside
        contact = face_uv_to_vec(face, ub, vb)
        # orthonormal tangent frame at each contact point
        helper = np.where(np.abs(contact[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
        t1 = np.cross(contact, helper)
        t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
        t2 = np.cross(contact, t1)
        for a in angles:
            probe = contact + radius * (np.cos(a) * t1 + np.sin(a) * t2)
            probe /= np.linalg.norm(probe, axis=-1, keepdims=True)
            cand = vec2pix_nest(nside, probe)
            hits = cand != pix
            for p in np.nonzero(hits)[0]:
                found[p].add(int(cand[p]))

    out = np.full((total, 8), -1, dtype=np.int64)
    for p, nb in enumerate(found):
        row = sorted(nb)
        out[p, : len(row)] = row
    out.setflags(write=False)
    return out


def neighbor_lists(nside: int) -> list:
    """Per-pixel sorted unique neighbor lists (NESTED), self excluded."""
    table = neighbors_nest(nside)
    lists = []
    for i in range(table.shape[0]):
        row = table[i]
        row = row[row >= 0]
        row = np.unique(row[row != i])
        lists.append(row)
    return lists


def pixel_boundary_points(nside: int, pix_nest: int, samples_per_edge: int = 4) -> np.ndarray:
    """Points sampled on a pixel's boundary (corners included), shape (n, 3).

    Adjacent pixels sample shared edges at identical parameter values, so
    two pixels touch iff their point sets intersect; used as a geometric
    adjacency oracle in tests.
    """
    nside = check_nside(nside)
    face, x, y = nest2xyf(nside, np.int64(pix_nest))
    ts = np.linspace(0.0, 1.0, samples_per_edge + 1)
    u0, u1 = x / nside, (x + 1) / nside
    v0, v1 = y / nside, (y + 1) / nside
    edges = [
        (u0 + ts * (u1 - u0), np.full_like(ts, v0)),
        (u0 + ts * (u1 - u0), np.full_like(ts, v1)),
        (np.full_like(ts, u0), v0 + ts * (v1 - v0)),
        (np.full_like(ts, u1), v0 + ts * (v1 - v0)),
    ]
    us = np.concatenate([e[0] for e in edges])
    vs = np.concatenate([e[1] for e in edges])
    vec = face_uv_to_vec(np.full(us.shape, face, dtype=np.int64), us, vs)
    # collapse pole points to exact poles so cross-face samples coincide
    at_pole = np.isclose(np.abs(vec[:, 2]), 1.0, atol=1e-12)
    vec[at_pole, 0] = 0.0
    vec[at_pole, 1] = 0.0
    vec[at_pole, 2] = np.sign(vec[at_pole, 2])
    return vec
