"""Pure-numpy rasterization kernels.

Fallback used when the compiled extension is unavailable.  Signatures and
numerics mirror ``_kernels_cy``; results agree to floating-point roundoff.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _pixel_grid(x0, x1, y0, y1):
    ys, xs = np.mgrid[y0:y1, x0:x1]
    return xs + 0.5, ys + 0.5


def _bbox(pts, pad, w, h):
    x0 = int(np.floor(pts[:, 0].min() - pad))
    x1 = int(np.ceil(pts[:, 0].max() + pad)) + 1
    y0 = int(np.floor(pts[:, 1].min() - pad))
    y1 = int(np.ceil(pts[:, 1].max() + pad)) + 1
    return max(x0, 0), min(x1, w), max(y0, 0), min(y1, h)


def _edge_closest(ax, ay, bx, by, px, py):
    """Squared distance, parameter t, and offset p - closest for one segment."""
    ex, ey = bx - ax, by - ay
    wx, wy = px - ax, py - ay
    ee = ex * ex + ey * ey
    if ee < 1e-300:
        t = np.zeros_like(px)
    else:
        t = np.clip((wx * ex + wy * ey) / ee, 0.0, 1.0)
    dx = wx - t * ex
    dy = wy - t * ey
    return dx * dx + dy * dy, t, dx, dy


def _triangle_fields(tri, px, py):
    """Per-pixel min boundary distance^2, argmin edge data, and inside flag."""
    a, b, c = tri
    d2s, ts, dxs, dys = [], [], [], []
    for (p0, p1) in ((a, b), (b, c), (c, a)):
        d2, t, dx, dy = _edge_closest(p0[0], p0[1], p1[0], p1[1], px, py)
        d2s.append(d2)
        ts.append(t)
        dxs.append(dx)
        dys.append(dy)
    d2s = np.stack(d2s)
    which = np.argmin(d2s, axis=0)
    d2 = np.take_along_axis(d2s, which[None], axis=0)[0]
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    s = 1.0 if area2 >= 0 else -1.0
    c0 = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
    c1 = (c[0] - b[0]) * (py - b[1]) - (c[1] - b[1]) * (px - b[0])
    c2 = (a[0] - c[0]) * (py - c[1]) - (a[1] - c[1]) * (px - c[0])
    inside = (s * c0 >= 0) & (s * c1 >= 0) & (s * c2 >= 0)
    return d2, which, np.stack(ts), np.stack(dxs), np.stack(dys), inside, area2


def soft_products(verts, tris, tri_link, sigma_eff, cutoff, min_area, P):
    """Multiply per-link survival products P[l] by (1 - D_f) for each triangle."""
    n_links, h, w = P.shape
    pad = np.sqrt(cutoff * sigma_eff)
    for f in range(len(tris)):
        tri = verts[tris[f]]
        x0, x1, y0, y1 = _bbox(tri, pad, w, h)
        if x0 >= x1 or y0 >= y1:
            continue
        px, py = _pixel_grid(x0, x1, y0, y1)
        d2, _, _, _, _, inside, area2 = _triangle_fields(tri, px, py)
        if abs(area2) < min_area:
            continue
        sgn = np.where(inside, 1.0, -1.0)
        x = sgn * d2 / sigma_eff
        factor = _sigmoid(-x)
        factor = np.where(x > cutoff, 0.0, factor)
        factor = np.where(x < -cutoff, 1.0, factor)
        P[tri_link[f], y0:y1, x0:x1] *= factor


def soft_backward(verts, tris, tri_link, sigma_eff, cutoff, min_area, P, pixw, grad):
    """Accumulate d(loss)/d(vertex pixel coords) into grad (V, 2).

    pixw holds d(loss)/d(mask value) times the clamp subgradient per pixel;
    P holds the per-link survival products from the forward pass.
    """
    n_links, h, w = P.shape
    pad = np.sqrt(cutoff * sigma_eff)
    for f in range(len(tris)):
        ia, ib, ic = tris[f]
        tri = verts[tris[f]]
        x0, x1, y0, y1 = _bbox(tri, pad, w, h)
        if x0 >= x1 or y0 >= y1:
            continue
        px, py = _pixel_grid(x0, x1, y0, y1)
        d2, which, ts, dxs, dys, inside, area2 = _triangle_fields(tri, px, py)
        if abs(area2) < min_area:
            continue
        sgn = np.where(inside, 1.0, -1.0)
        x = sgn * d2 / sigma_eff
        live = np.abs(x) <= cutoff
        if not live.any():
            continue
        d = _sigmoid(x)
        # dL/dD = pixw * prod_{f' != f}(1 - D_f') = pixw * P_l / (1 - D_f);
        # combined with dD/dx = D (1 - D) the (1 - D) factor cancels
        g_d2 = np.where(live, pixw[y0:y1, x0:x1] * P[tri_link[f], y0:y1, x0:x1] * d * sgn / sigma_eff, 0.0)
        for e, (i0, i1) in enumerate(((ia, ib), (ib, ic), (ic, ia))):
            sel = which == e
            if not sel.any():
                continue
            ge = np.where(sel, g_d2, 0.0)
            t = ts[e]
            gx = ge * dxs[e]
            gy = ge * dys[e]
            grad[i0, 0] += -2.0 * np.sum(gx * (1.0 - t))
            grad[i0, 1] += -2.0 * np.sum(gy * (1.0 - t))
            grad[i1, 0] += -2.0 * np.sum(gx * t)
            grad[i1, 1] += -2.0 * np.sum(gy * t)


def hard_mask(verts, tris, min_area, mask):
    """Binary coverage with the top-left fill rule."""
    h, w = mask.shape
    for f in range(len(tris)):
        tri = verts[tris[f]]
        a, b, c = tri
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(area2) < min_area:
            continue
        if area2 < 0:
            b, c = c, b
        x0, x1, y0, y1 = _bbox(tri, 0.0, w, h)
        if x0 >= x1 or y0 >= y1:
            continue
        px, py = _pixel_grid(x0, x1, y0, y1)
        acc = np.ones(px.shape, dtype=bool)
        for (p0, p1) in ((a, b), (b, c), (c, a)):
            ex, ey = p1[0] - p0[0], p1[1] - p0[1]
            wv = ex * (py - p0[1]) - ey * (px - p0[0])
            topleft = (ey == 0 and ex > 0) or (ey < 0)
            acc &= (wv > 0) | ((wv == 0) & topleft)
        patch = mask[y0:y1, x0:x1]
        np.maximum(patch, acc.astype(np.float64), out=patch)
    return mask


def soft_variance_accum(verts_k, z_k, near, tris, tri_link, n_links, h, w,
                        sigma_eff, cutoff, min_area, s1, s2):
    """Render K candidate views, accumulating per-pixel sum and sum-of-squares."""
    n_k = verts_k.shape[0]
    for k in range(n_k):
        valid = np.all(z_k[k][tris] > near, axis=1)
        P = np.ones((n_links, h, w))
        soft_products(verts_k[k], tris[valid], tri_link[valid], sigma_eff, cutoff, min_area, P)
        m = np.minimum(1.0, np.sum(1.0 - P, axis=0))
        s1 += m
        s2 += m * m
