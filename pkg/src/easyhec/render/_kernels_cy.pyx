# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rasterization kernels; see _kernels_py for the reference semantics.

The soft kernels process triangles row by row with branch-free inner loops
so the C compiler can vectorize the distance / sigmoid math.
"""

import numpy as np

cimport cython
from libc.math cimport ceil, exp, fabs, floor, fmax, fmin, sqrt
from libc.stdlib cimport free, malloc

BACKEND = "cython"


cdef struct Tri:
    # per-edge origin and direction, plus inverse squared length
    double ox[3]
    double oy[3]
    double ex[3]
    double ey[3]
    double inv_ee[3]
    double orient      # +1/-1 winding sign for the inside test
    int x0, x1, y0, y1


cdef inline bint _setup_tri(const double[:, ::1] verts, const int[:, ::1] tris,
                            int f, double pad, double min_area, int w, int h,
                            Tri *tri) nogil:
    cdef double ax = verts[tris[f, 0], 0], ay = verts[tris[f, 0], 1]
    cdef double bx = verts[tris[f, 1], 0], by = verts[tris[f, 1], 1]
    cdef double cx = verts[tris[f, 2], 0], cy = verts[tris[f, 2], 1]
    cdef double area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if fabs(area2) < min_area:
        return False
    tri.orient = 1.0 if area2 >= 0.0 else -1.0
    tri.ox[0] = ax; tri.oy[0] = ay; tri.ex[0] = bx - ax; tri.ey[0] = by - ay
    tri.ox[1] = bx; tri.oy[1] = by; tri.ex[1] = cx - bx; tri.ey[1] = cy - by
    tri.ox[2] = cx; tri.oy[2] = cy; tri.ex[2] = ax - cx; tri.ey[2] = ay - cy
    cdef int e
    cdef double ee
    for e in range(3):
        ee = tri.ex[e] * tri.ex[e] + tri.ey[e] * tri.ey[e]
        tri.inv_ee[e] = 1.0 / ee if ee > 1e-300 else 0.0
    cdef double lo_x = fmin(ax, fmin(bx, cx)) - pad
    cdef double hi_x = fmax(ax, fmax(bx, cx)) + pad
    cdef double lo_y = fmin(ay, fmin(by, cy)) - pad
    cdef double hi_y = fmax(ay, fmax(by, cy)) + pad
    tri.x0 = <int>floor(lo_x)
    tri.x1 = <int>ceil(hi_x) + 1
    tri.y0 = <int>floor(lo_y)
    tri.y1 = <int>ceil(hi_y) + 1
    if tri.x0 < 0: tri.x0 = 0
    if tri.y0 < 0: tri.y0 = 0
    if tri.x1 > w: tri.x1 = w
    if tri.y1 > h: tri.y1 = h
    return tri.x0 < tri.x1 and tri.y0 < tri.y1


cdef inline void _row_fields(const Tri *tri, double py, int x0, int n,
                             double *d2, double *sgn, double *tsel,
                             double *dxsel, double *dysel, double *esel) nogil:
    """Branch-free per-row boundary distance, inside sign, argmin-edge data."""
    cdef int i, e
    cdef double px, wx, wy, t, dx, dy, de, cross, take
    cdef double s = tri.orient
    for i in range(n):
        px = x0 + i + 0.5
        # edge 0 initializes, edges 1-2 fold in via branch-free selects
        wx = px - tri.ox[0]
        wy = py - tri.oy[0]
        t = fmin(1.0, fmax(0.0, (wx * tri.ex[0] + wy * tri.ey[0]) * tri.inv_ee[0]))
        dx = wx - t * tri.ex[0]
        dy = wy - t * tri.ey[0]
        d2[i] = dx * dx + dy * dy
        tsel[i] = t
        dxsel[i] = dx
        dysel[i] = dy
        esel[i] = 0.0
        sgn[i] = 1.0 if s * (tri.ex[0] * wy - tri.ey[0] * wx) >= 0.0 else -1.0
        for e in range(1, 3):
            wx = px - tri.ox[e]
            wy = py - tri.oy[e]
            t = fmin(1.0, fmax(0.0, (wx * tri.ex[e] + wy * tri.ey[e]) * tri.inv_ee[e]))
            dx = wx - t * tri.ex[e]
            dy = wy - t * tri.ey[e]
            de = dx * dx + dy * dy
            cross = tri.ex[e] * wy - tri.ey[e] * wx
            sgn[i] = sgn[i] if s * cross >= 0.0 else -1.0
            take = 1.0 if de < d2[i] else 0.0
            d2[i] = d2[i] + take * (de - d2[i])
            tsel[i] = tsel[i] + take * (t - tsel[i])
            dxsel[i] = dxsel[i] + take * (dx - dxsel[i])
            dysel[i] = dysel[i] + take * (dy - dysel[i])
            esel[i] = esel[i] + take * (e - esel[i])


cdef inline void _row_d2(const Tri *tri, double py, int x0, int n,
                         double *d2, double *sgn) nogil:
    """Forward-only variant of _row_fields: distance and sign, no argmin data."""
    cdef int i, e
    cdef double px, wx, wy, t, dx, dy, de
    cdef double s = tri.orient
    for i in range(n):
        px = x0 + i + 0.5
        wx = px - tri.ox[0]
        wy = py - tri.oy[0]
        t = fmin(1.0, fmax(0.0, (wx * tri.ex[0] + wy * tri.ey[0]) * tri.inv_ee[0]))
        dx = wx - t * tri.ex[0]
        dy = wy - t * tri.ey[0]
        d2[i] = dx * dx + dy * dy
        sgn[i] = 1.0 if s * (tri.ex[0] * wy - tri.ey[0] * wx) >= 0.0 else -1.0
        for e in range(1, 3):
            wx = px - tri.ox[e]
            wy = py - tri.oy[e]
            t = fmin(1.0, fmax(0.0, (wx * tri.ex[e] + wy * tri.ey[e]) * tri.inv_ee[e]))
            dx = wx - t * tri.ex[e]
            dy = wy - t * tri.ey[e]
            de = dx * dx + dy * dy
            sgn[i] = sgn[i] if s * (tri.ex[e] * wy - tri.ey[e] * wx) >= 0.0 else -1.0
            d2[i] = fmin(d2[i], de)


cdef void _soft_products_impl(const double[:, ::1] verts, const int[:, ::1] tris,
                              const int[::1] tri_link, double sigma_eff,
                              double cutoff, double min_area,
                              double[:, :, ::1] P, double *scratch) nogil:
    cdef int h = P.shape[1]
    cdef int w = P.shape[2]
    cdef double pad = sqrt(cutoff * sigma_eff)
    cdef double inv_sigma = 1.0 / sigma_eff
    cdef int f, y, i, n
    cdef double xv, fac
    cdef Tri tri
    cdef double *d2 = scratch
    cdef double *sgn = scratch + w
    cdef double *prow
    for f in range(tris.shape[0]):
        if not _setup_tri(verts, tris, f, pad, min_area, w, h, &tri):
            continue
        n = tri.x1 - tri.x0
        for y in range(tri.y0, tri.y1):
            _row_d2(&tri, y + 0.5, tri.x0, n, d2, sgn)
            prow = &P[tri_link[f], y, tri.x0]
            for i in range(n):
                xv = sgn[i] * d2[i] * inv_sigma
                fac = 1.0 / (1.0 + exp(fmin(cutoff, fmax(-cutoff, xv))))
                fac = 0.0 if xv > cutoff else fac
                fac = 1.0 if xv < -cutoff else fac
                prow[i] *= fac


def soft_products(const double[:, ::1] verts, const int[:, ::1] tris,
                  const int[::1] tri_link, double sigma_eff, double cutoff,
                  double min_area, double[:, :, ::1] P):
    cdef int w = P.shape[2]
    cdef double *scratch = <double *>malloc(6 * w * sizeof(double))
    if scratch == NULL:
        raise MemoryError()
    try:
        with nogil:
            _soft_products_impl(verts, tris, tri_link, sigma_eff, cutoff,
                                min_area, P, scratch)
    finally:
        free(scratch)


cdef void _soft_backward_impl(const double[:, ::1] verts, const int[:, ::1] tris,
                              const int[::1] tri_link, double sigma_eff,
                              double cutoff, double min_area,
                              const double[:, :, ::1] P, const double[:, ::1] pixw,
                              double[:, ::1] grad, double *scratch) nogil:
    cdef int h = P.shape[1]
    cdef int w = P.shape[2]
    cdef double pad = sqrt(cutoff * sigma_eff)
    cdef double inv_sigma = 1.0 / sigma_eff
    cdef int f, y, i, n, ia, ib, ic
    cdef double xv, d, g, gx, gy, t, m0, m1, m2
    cdef double ga_x, ga_y, gb_x, gb_y, gc_x, gc_y
    cdef Tri tri
    cdef double *d2 = scratch
    cdef double *sgn = scratch + w
    cdef double *tsel = scratch + 2 * w
    cdef double *dxs = scratch + 3 * w
    cdef double *dys = scratch + 4 * w
    cdef double *ese = scratch + 5 * w
    cdef const double *prow
    cdef const double *wrow
    for f in range(tris.shape[0]):
        if not _setup_tri(verts, tris, f, pad, min_area, w, h, &tri):
            continue
        ia = tris[f, 0]; ib = tris[f, 1]; ic = tris[f, 2]
        n = tri.x1 - tri.x0
        ga_x = ga_y = gb_x = gb_y = gc_x = gc_y = 0.0
        for y in range(tri.y0, tri.y1):
            _row_fields(&tri, y + 0.5, tri.x0, n, d2, sgn, tsel, dxs, dys, ese)
            prow = &P[tri_link[f], y, tri.x0]
            wrow = &pixw[y, tri.x0]
            for i in range(n):
                xv = sgn[i] * d2[i] * inv_sigma
                if xv > cutoff or xv < -cutoff:
                    continue
                d = 1.0 / (1.0 + exp(-xv))
                # dL/dD * dD/dx * dx/d(d2); the (1 - D) factors cancel
                g = wrow[i] * prow[i] * d * sgn[i] * inv_sigma
                if g == 0.0:
                    continue
                gx = -2.0 * g * dxs[i]
                gy = -2.0 * g * dys[i]
                t = tsel[i]
                m0 = 1.0 if ese[i] == 0.0 else 0.0
                m1 = 1.0 if ese[i] == 1.0 else 0.0
                m2 = 1.0 - m0 - m1
                ga_x += (m0 * (1.0 - t) + m2 * t) * gx
                ga_y += (m0 * (1.0 - t) + m2 * t) * gy
                gb_x += (m0 * t + m1 * (1.0 - t)) * gx
                gb_y += (m0 * t + m1 * (1.0 - t)) * gy
                gc_x += (m1 * t + m2 * (1.0 - t)) * gx
                gc_y += (m1 * t + m2 * (1.0 - t)) * gy
        grad[ia, 0] += ga_x
        grad[ia, 1] += ga_y
        grad[ib, 0] += gb_x
        grad[ib, 1] += gb_y
        grad[ic, 0] += gc_x
        grad[ic, 1] += gc_y


def soft_backward(const double[:, ::1] verts, const int[:, ::1] tris,
                  const int[::1] tri_link, double sigma_eff, double cutoff,
                  double min_area, const double[:, :, ::1] P,
                  const double[:, ::1] pixw, double[:, ::1] grad):
    cdef int w = P.shape[2]
    cdef double *scratch = <double *>malloc(6 * w * sizeof(double))
    if scratch == NULL:
        raise MemoryError()
    try:
        with nogil:
            _soft_backward_impl(verts, tris, tri_link, sigma_eff, cutoff,
                                min_area, P, pixw, grad, scratch)
    finally:
        free(scratch)


cdef void _hard_mask_impl(const double[:, ::1] verts, const int[:, ::1] tris,
                          double min_area, double[:, ::1] mask) nogil:
    cdef int h = mask.shape[0]
    cdef int w = mask.shape[1]
    cdef int f, x0i, x1i, y0i, y1i, x, y, e
    cdef double ax, ay, bx, by, cx, cy, area2, px, py, tmp
    cdef double ex, ey, wv
    cdef double ox_[3]
    cdef double oy_[3]
    cdef double ex_[3]
    cdef double ey_[3]
    cdef bint ok, topleft
    for f in range(tris.shape[0]):
        ax = verts[tris[f, 0], 0]; ay = verts[tris[f, 0], 1]
        bx = verts[tris[f, 1], 0]; by = verts[tris[f, 1], 1]
        cx = verts[tris[f, 2], 0]; cy = verts[tris[f, 2], 1]
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if fabs(area2) < min_area:
            continue
        if area2 < 0.0:
            tmp = bx; bx = cx; cx = tmp
            tmp = by; by = cy; cy = tmp
        x0i = <int>floor(fmin(ax, fmin(bx, cx)))
        x1i = <int>ceil(fmax(ax, fmax(bx, cx))) + 1
        y0i = <int>floor(fmin(ay, fmin(by, cy)))
        y1i = <int>ceil(fmax(ay, fmax(by, cy))) + 1
        if x0i < 0: x0i = 0
        if y0i < 0: y0i = 0
        if x1i > w: x1i = w
        if y1i > h: y1i = h
        ox_[0] = ax; oy_[0] = ay; ex_[0] = bx - ax; ey_[0] = by - ay
        ox_[1] = bx; oy_[1] = by; ex_[1] = cx - bx; ey_[1] = cy - by
        ox_[2] = cx; oy_[2] = cy; ex_[2] = ax - cx; ey_[2] = ay - cy
        for y in range(y0i, y1i):
            py = y + 0.5
            for x in range(x0i, x1i):
                px = x + 0.5
                ok = True
                for e in range(3):
                    wv = ex_[e] * (py - oy_[e]) - ey_[e] * (px - ox_[e])
                    if wv > 0.0:
                        continue
                    topleft = (ey_[e] == 0.0 and ex_[e] > 0.0) or (ey_[e] < 0.0)
                    if wv == 0.0 and topleft:
                        continue
                    ok = False
                    break
                if ok:
                    mask[y, x] = 1.0


def hard_mask(const double[:, ::1] verts, const int[:, ::1] tris,
              double min_area, double[:, ::1] mask):
    with nogil:
        _hard_mask_impl(verts, tris, min_area, mask)
    return np.asarray(mask)


def soft_variance_accum(const double[:, :, ::1] verts_k, const double[:, ::1] z_k,
                        double near, const int[:, ::1] tris, const int[::1] tri_link,
                        int n_links, int h, int w, double sigma_eff, double cutoff,
                        double min_area, double[:, ::1] s1, double[:, ::1] s2):
    """Render each candidate view and accumulate per-pixel sum / sum of squares."""
    cdef int n_k = verts_k.shape[0]
    cdef int n_f = tris.shape[0]
    cdef int k, f, l, x, y, nv
    cdef double m
    cdef double[:, :, ::1] P = np.empty((n_links, h, w))
    cdef int[:, ::1] tris_valid = np.empty((max(n_f, 1), 3), dtype=np.int32)
    cdef int[::1] links_valid = np.empty(max(n_f, 1), dtype=np.int32)
    cdef double *scratch = <double *>malloc(6 * w * sizeof(double))
    if scratch == NULL:
        raise MemoryError()
    try:
        with nogil:
            for k in range(n_k):
                nv = 0
                for f in range(n_f):
                    if (z_k[k, tris[f, 0]] > near and z_k[k, tris[f, 1]] > near
                            and z_k[k, tris[f, 2]] > near):
                        tris_valid[nv, 0] = tris[f, 0]
                        tris_valid[nv, 1] = tris[f, 1]
                        tris_valid[nv, 2] = tris[f, 2]
                        links_valid[nv] = tri_link[f]
                        nv += 1
                P[:, :, :] = 1.0
                _soft_products_impl(verts_k[k], tris_valid[:nv], links_valid[:nv],
                                    sigma_eff, cutoff, min_area, P, scratch)
                for y in range(h):
                    for x in range(w):
                        m = 0.0
                        for l in range(n_links):
                            m += 1.0 - P[l, y, x]
                        if m > 1.0:
                            m = 1.0
                        s1[y, x] += m
                        s2[y, x] += m * m
    finally:
        free(scratch)
