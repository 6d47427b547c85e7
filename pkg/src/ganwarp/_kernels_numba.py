"""Numba-jitted hot kernels.

Same function surface as `_kernels_numpy`; `backend.py` picks one at import.
All kernels are single-threaded with fixed loop order so results are
deterministic for identical inputs.
"""

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def im2col3(xpad, cols):
    """Unfold zero-padded NCHW input into (C*9, N*H*W) patch columns."""
    N, C, Hp, Wp = xpad.shape
    H = Hp - 2
    W = Wp - 2
    HW = H * W
    for i in range(C):
        for dy in range(3):
            for dx in range(3):
                r = (i * 3 + dy) * 3 + dx
                for n in range(N):
                    base = n * HW
                    for y in range(H):
                        row = base + y * W
                        for x in range(W):
                            cols[r, row + x] = xpad[n, i, y + dy, x + dx]


@njit(**_JIT)
def col2im3(dcols, N, C, H, W):
    """Fold (C*9, N*H*W) patch-column grads back to an NCHW grad."""
    dxpad = np.zeros((N, C, H + 2, W + 2), dcols.dtype)
    HW = H * W
    for i in range(C):
        for dy in range(3):
            for dx in range(3):
                r = (i * 3 + dy) * 3 + dx
                for n in range(N):
                    base = n * HW
                    for y in range(H):
                        row = base + y * W
                        for x in range(W):
                            dxpad[n, i, y + dy, x + dx] += dcols[r, row + x]
    return dxpad[:, :, 1:-1, 1:-1].copy()


@njit(**_JIT)
def upsample2(x):
    N, C, H, W = x.shape
    out = np.empty((N, C, 2 * H, 2 * W), x.dtype)
    for n in range(N):
        for c in range(C):
            for y in range(H):
                for xx in range(W):
                    v = x[n, c, y, xx]
                    out[n, c, 2 * y, 2 * xx] = v
                    out[n, c, 2 * y, 2 * xx + 1] = v
                    out[n, c, 2 * y + 1, 2 * xx] = v
                    out[n, c, 2 * y + 1, 2 * xx + 1] = v
    return out


@njit(**_JIT)
def upsample2_back(dy):
    N, C, H2, W2 = dy.shape
    H = H2 // 2
    W = W2 // 2
    out = np.empty((N, C, H, W), dy.dtype)
    for n in range(N):
        for c in range(C):
            for y in range(H):
                for x in range(W):
                    out[n, c, y, x] = (dy[n, c, 2 * y, 2 * x] + dy[n, c, 2 * y, 2 * x + 1]
                                       + dy[n, c, 2 * y + 1, 2 * x] + dy[n, c, 2 * y + 1, 2 * x + 1])
    return out


@njit(**_JIT)
def avgpool2(x):
    N, C, H, W = x.shape
    Ho = H // 2
    Wo = W // 2
    out = np.empty((N, C, Ho, Wo), x.dtype)
    for n in range(N):
        for c in range(C):
            for y in range(Ho):
                for xx in range(Wo):
                    out[n, c, y, xx] = (x[n, c, 2 * y, 2 * xx] + x[n, c, 2 * y, 2 * xx + 1]
                                        + x[n, c, 2 * y + 1, 2 * xx] + x[n, c, 2 * y + 1, 2 * xx + 1]) * x.dtype.type(0.25)
    return out


@njit(**_JIT)
def avgpool2_back(dy):
    N, C, Ho, Wo = dy.shape
    out = np.empty((N, C, 2 * Ho, 2 * Wo), dy.dtype)
    for n in range(N):
        for c in range(C):
            for y in range(Ho):
                for x in range(Wo):
                    g = dy[n, c, y, x] * dy.dtype.type(0.25)
                    out[n, c, 2 * y, 2 * x] = g
                    out[n, c, 2 * y, 2 * x + 1] = g
                    out[n, c, 2 * y + 1, 2 * x] = g
                    out[n, c, 2 * y + 1, 2 * x + 1] = g
    return out


@njit(**_JIT)
def bilinear_warp(img, flow):
    """Sample CHW image at flow[y, x] = (src_y, src_x); edge-clamped."""
    C, H, W = img.shape
    out = np.empty_like(img)
    for y in range(H):
        for x in range(W):
            sy = flow[y, x, 0]
            sx = flow[y, x, 1]
            if sy < 0.0:
                sy = 0.0
            elif sy > H - 1:
                sy = float(H - 1)
            if sx < 0.0:
                sx = 0.0
            elif sx > W - 1:
                sx = float(W - 1)
            y0 = int(np.floor(sy))
            x0 = int(np.floor(sx))
            y1 = min(y0 + 1, H - 1)
            x1 = min(x0 + 1, W - 1)
            wy = sy - y0
            wx = sx - x0
            for c in range(C):
                top = img[c, y0, x0] * (1.0 - wx) + img[c, y0, x1] * wx
                bot = img[c, y1, x0] * (1.0 - wx) + img[c, y1, x1] * wx
                out[c, y, x] = top * (1.0 - wy) + bot * wy
    return out


@njit(**_JIT)
def _mls_one(ps, qs, variant, alpha, vx, vy):
    n = ps.shape[0]
    # coincidence rule: snap to the paired target
    for i in range(n):
        dx = vx - ps[i, 0]
        dy = vy - ps[i, 1]
        if dx * dx + dy * dy < 1e-18:
            return qs[i, 0], qs[i, 1]
    sw = 0.0
    pcx = 0.0
    pcy = 0.0
    qcx = 0.0
    qcy = 0.0
    for i in range(n):
        dx = vx - ps[i, 0]
        dy = vy - ps[i, 1]
        w = (dx * dx + dy * dy) ** (-alpha)
        sw += w
        pcx += w * ps[i, 0]
        pcy += w * ps[i, 1]
        qcx += w * qs[i, 0]
        qcy += w * qs[i, 1]
    pcx /= sw
    pcy /= sw
    qcx /= sw
    qcy /= sw
    xhx = vx - pcx
    xhy = vy - pcy
    if variant == 1:
        # affine: M = (sum w p^T p)^-1 (sum w p^T q), row-vector convention
        a00 = 0.0
        a01 = 0.0
        a11 = 0.0
        b00 = 0.0
        b01 = 0.0
        b10 = 0.0
        b11 = 0.0
        for i in range(n):
            dx = vx - ps[i, 0]
            dy = vy - ps[i, 1]
            w = (dx * dx + dy * dy) ** (-alpha)
            px = ps[i, 0] - pcx
            py = ps[i, 1] - pcy
            qx = qs[i, 0] - qcx
            qy = qs[i, 1] - qcy
            a00 += w * px * px
            a01 += w * px * py
            a11 += w * py * py
            b00 += w * px * qx
            b01 += w * px * qy
            b10 += w * py * qx
            b11 += w * py * qy
        det = a00 * a11 - a01 * a01
        inv00 = a11 / det
        inv01 = -a01 / det
        inv11 = a00 / det
        m00 = inv00 * b00 + inv01 * b10
        m01 = inv00 * b01 + inv01 * b11
        m10 = inv01 * b00 + inv11 * b10
        m11 = inv01 * b01 + inv11 * b11
        return xhx * m00 + xhy * m10 + qcx, xhx * m01 + xhy * m11 + qcy
    # similarity: f = sum_i qhat_i (1/mu) w_i P_i X^T + q*
    mu = 0.0
    ox = 0.0
    oy = 0.0
    for i in range(n):
        dx = vx - ps[i, 0]
        dy = vy - ps[i, 1]
        w = (dx * dx + dy * dy) ** (-alpha)
        px = ps[i, 0] - pcx
        py = ps[i, 1] - pcy
        qx = qs[i, 0] - qcx
        qy = qs[i, 1] - qcy
        mu += w * (px * px + py * py)
        # A_i = w * [[px, py], [py, -px]] @ [[xhx, xhy], [xhy, -xhx]]^T
        a00 = w * (px * xhx + py * xhy)
        a01 = w * (px * xhy - py * xhx)
        ox += qx * a00 - qy * a01
        oy += qx * a01 + qy * a00
    return ox / mu + qcx, oy / mu + qcy


@njit(**_JIT)
def mls_eval(ps, qs, variant, alpha, pts):
    """Evaluate the MLS deformation at each (x, y) row of pts."""
    m = pts.shape[0]
    out = np.empty((m, 2), np.float64)
    for j in range(m):
        fx, fy = _mls_one(ps, qs, variant, alpha, pts[j, 0], pts[j, 1])
        out[j, 0] = fx
        out[j, 1] = fy
    return out


@njit(**_JIT)
def _tri_sdf(px, py, ax, ay, bx, by, cx, cy):
    # exact signed distance to triangle abc (negative inside)
    e0x = bx - ax
    e0y = by - ay
    e1x = cx - bx
    e1y = cy - by
    e2x = ax - cx
    e2y = ay - cy
    v0x = px - ax
    v0y = py - ay
    v1x = px - bx
    v1y = py - by
    v2x = px - cx
    v2y = py - cy
    t0 = (v0x * e0x + v0y * e0y) / (e0x * e0x + e0y * e0y)
    t0 = min(max(t0, 0.0), 1.0)
    d0x = v0x - e0x * t0
    d0y = v0y - e0y * t0
    t1 = (v1x * e1x + v1y * e1y) / (e1x * e1x + e1y * e1y)
    t1 = min(max(t1, 0.0), 1.0)
    d1x = v1x - e1x * t1
    d1y = v1y - e1y * t1
    t2 = (v2x * e2x + v2y * e2y) / (e2x * e2x + e2y * e2y)
    t2 = min(max(t2, 0.0), 1.0)
    d2x = v2x - e2x * t2
    d2y = v2y - e2y * t2
    d = min(d0x * d0x + d0y * d0y, min(d1x * d1x + d1y * d1y, d2x * d2x + d2y * d2y))
    s = e0x * e2y - e0y * e2x
    c0 = s * (v0x * e0y - v0y * e0x)
    c1 = s * (v1x * e1y - v1y * e1x)
    c2 = s * (v2x * e2y - v2y * e2x)
    inside = (c0 >= 0.0) and (c1 >= 0.0) and (c2 >= 0.0)
    r = np.sqrt(d)
    return -r if inside else r


@njit(**_JIT)
def render_coverage(cx, cy, ra, rb, rot, tris, size):
    """Per-pixel foreground coverage of a rotated ellipse plus triangles.

    tris is (k, 6): flattened local-frame vertices of each protrusion.
    Coordinates are normalized to [0, 1]; coverage smooths over one pixel.
    """
    out = np.empty((size, size), np.float64)
    crot = np.cos(rot)
    srot = np.sin(rot)
    px = 1.0 / size
    for iy in range(size):
        gy = (iy + 0.5) / size
        for ix in range(size):
            gx = (ix + 0.5) / size
            # global -> ellipse-local frame
            tx = gx - cx
            ty = gy - cy
            lx = crot * tx + srot * ty
            ly = -srot * tx + crot * ty
            k = np.sqrt((lx / ra) ** 2 + (ly / rb) ** 2)
            if k < 1e-9:
                sdf = -min(ra, rb)
            else:
                gxk = lx / (ra * ra)
                gyk = ly / (rb * rb)
                gn = np.sqrt(gxk * gxk + gyk * gyk) / k
                sdf = (k - 1.0) * k / max(gn * k, 1e-12)
            for t in range(tris.shape[0]):
                d = _tri_sdf(lx, ly, tris[t, 0], tris[t, 1], tris[t, 2], tris[t, 3], tris[t, 4], tris[t, 5])
                if d < sdf:
                    sdf = d
            a = 0.5 - sdf / px
            if a < 0.0:
                a = 0.0
            elif a > 1.0:
                a = 1.0
            out[iy, ix] = a
    return out


@njit(**_JIT)
def edt(seeds):
    """Exact Euclidean distance to the nearest set pixel (Felzenszwalb)."""
    H, W = seeds.shape
    INF = 1e12
    g = np.empty((H, W), np.float64)
    for x in range(W):
        g[0, x] = 0.0 if seeds[0, x] else INF
        for y in range(1, H):
            g[y, x] = 0.0 if seeds[y, x] else min(INF, g[y - 1, x] + 1.0)
        for y in range(H - 2, -1, -1):
            if g[y + 1, x] + 1.0 < g[y, x]:
                g[y, x] = g[y + 1, x] + 1.0
    out = np.empty((H, W), np.float64)
    v = np.empty(W, np.int64)
    z = np.empty(W + 1, np.float64)
    f = np.empty(W, np.float64)
    for y in range(H):
        for x in range(W):
            val = g[y, x]
            f[x] = val * val if val < INF else INF
        k = 0
        v[0] = 0
        z[0] = -INF
        z[1] = INF
        for q in range(1, W):
            while True:
                p = v[k]
                s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
                if s <= z[k]:
                    k -= 1
                    if k < 0:
                        k = 0
                        v[0] = q
                        z[0] = -INF
                        z[1] = INF
                        break
                else:
                    k += 1
                    v[k] = q
                    z[k] = s
                    z[k + 1] = INF
                    break
        k = 0
        for q in range(W):
            while z[k + 1] < q:
                k += 1
            dq = q - v[k]
            val = dq * dq + f[v[k]]
            out[y, q] = np.sqrt(val) if val < INF else INF
    return out


@njit(**_JIT)
def thin(edges):
    """Zhang-Suen thinning plus a 2x2-block cleanup; returns uint8 map."""
    H, W = edges.shape
    img = edges.copy()
    changed = True
    while changed:
        changed = False
        for phase in range(2):
            marks = np.zeros((H, W), np.uint8)
            for y in range(1, H - 1):
                for x in range(1, W - 1):
                    if img[y, x] == 0:
                        continue
                    p2 = img[y - 1, x]
                    p3 = img[y - 1, x + 1]
                    p4 = img[y, x + 1]
                    p5 = img[y + 1, x + 1]
                    p6 = img[y + 1, x]
                    p7 = img[y + 1, x - 1]
                    p8 = img[y, x - 1]
                    p9 = img[y - 1, x - 1]
                    b = int(p2) + int(p3) + int(p4) + int(p5) + int(p6) + int(p7) + int(p8) + int(p9)
                    if b < 2 or b > 6:
                        continue
                    a = 0
                    if p2 == 0 and p3 == 1:
                        a += 1
                    if p3 == 0 and p4 == 1:
                        a += 1
                    if p4 == 0 and p5 == 1:
                        a += 1
                    if p5 == 0 and p6 == 1:
                        a += 1
                    if p6 == 0 and p7 == 1:
                        a += 1
                    if p7 == 0 and p8 == 1:
                        a += 1
                    if p8 == 0 and p9 == 1:
                        a += 1
                    if p9 == 0 and p2 == 1:
                        a += 1
                    if a != 1:
                        continue
                    if phase == 0:
                        if p2 * p4 * p6 != 0 or p4 * p6 * p8 != 0:
                            continue
                    else:
                        if p2 * p4 * p8 != 0 or p2 * p6 * p8 != 0:
                            continue
                    marks[y, x] = 1
            for y in range(1, H - 1):
                for x in range(1, W - 1):
                    if marks[y, x]:
                        img[y, x] = 0
                        changed = True
    # remove any remaining 2x2 all-set blocks
    blocky = True
    while blocky:
        blocky = False
        for y in range(H - 1):
            for x in range(W - 1):
                if img[y, x] and img[y, x + 1] and img[y + 1, x] and img[y + 1, x + 1]:
                    img[y + 1, x + 1] = 0
                    blocky = True
    return img


@njit(**_JIT)
def nms(mag, gx, gy):
    """Keep pixels that are local maxima along the quantized gradient."""
    H, W = mag.shape
    out = np.zeros((H, W), np.uint8)
    tan22 = 0.41421356
    for y in range(1, H - 1):
        for x in range(1, W - 1):
            m = mag[y, x]
            if m <= 0.0:
                continue
            ax = abs(gx[y, x])
            ay = abs(gy[y, x])
            if ay <= tan22 * ax:
                n1 = mag[y, x - 1]
                n2 = mag[y, x + 1]
            elif ax <= tan22 * ay:
                n1 = mag[y - 1, x]
                n2 = mag[y + 1, x]
            elif gx[y, x] * gy[y, x] > 0.0:
                n1 = mag[y - 1, x - 1]
                n2 = mag[y + 1, x + 1]
            else:
                n1 = mag[y - 1, x + 1]
                n2 = mag[y + 1, x - 1]
            if m >= n1 and m >= n2:
                out[y, x] = 1
    return out
