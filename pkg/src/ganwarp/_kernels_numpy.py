"""Pure-numpy fallbacks for the hot kernels.

Same function surface as `_kernels_numba`. Used when numba is unavailable
or when GANWARP_BACKEND=numpy is set.
"""

import numpy as np


def im2col3(xpad, cols):
    N, C, Hp, Wp = xpad.shape
    H = Hp - 2
    W = Wp - 2
    # view as (C, 3, 3, N*H*W) then flatten the tap axes
    c4 = cols.reshape(C, 3, 3, N * H * W)
    for dy in range(3):
        for dx in range(3):
            patch = xpad[:, :, dy:dy + H, dx:dx + W]  # (N, C, H, W)
            c4[:, dy, dx, :] = patch.transpose(1, 0, 2, 3).reshape(C, N * H * W)


def col2im3(dcols, N, C, H, W):
    dxpad = np.zeros((N, C, H + 2, W + 2), dcols.dtype)
    d4 = dcols.reshape(C, 3, 3, N, H, W)
    for dy in range(3):
        for dx in range(3):
            dxpad[:, :, dy:dy + H, dx:dx + W] += d4[:, dy, dx].transpose(1, 0, 2, 3)
    return dxpad[:, :, 1:-1, 1:-1].copy()


def upsample2(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_back(dy):
    N, C, H2, W2 = dy.shape
    return dy.reshape(N, C, H2 // 2, 2, W2 // 2, 2).sum(axis=(3, 5))


def avgpool2(x):
    N, C, H, W = x.shape
    out = x.reshape(N, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))
    return out.astype(x.dtype, copy=False)


def avgpool2_back(dy):
    g = (dy * dy.dtype.type(0.25))
    return g.repeat(2, axis=2).repeat(2, axis=3)


def bilinear_warp(img, flow):
    C, H, W = img.shape
    sy = np.clip(flow[:, :, 0], 0.0, H - 1)
    sx = np.clip(flow[:, :, 1], 0.0, W - 1)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = (sy - y0).astype(img.dtype)
    wx = (sx - x0).astype(img.dtype)
    top = img[:, y0, x0] * (1 - wx) + img[:, y0, x1] * wx
    bot = img[:, y1, x0] * (1 - wx) + img[:, y1, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(img.dtype, copy=False)


def mls_eval(ps, qs, variant, alpha, pts):
    m = pts.shape[0]
    out = np.empty((m, 2), np.float64)
    diff = pts[:, None, :] - ps[None, :, :]          # (m, n, 2)
    d2 = (diff ** 2).sum(axis=2)                     # (m, n)
    snapped = d2 < 1e-18
    with np.errstate(divide="ignore", over="ignore"):
        w = d2 ** (-alpha)
    bad = snapped.any(axis=1)
    w[bad] = 0.0                                     # handled via direct snap below
    sw = w.sum(axis=1, keepdims=True)
    sw[bad] = 1.0
    pc = (w @ ps) / sw                               # (m, 2) weighted centroids
    qc = (w @ qs) / sw
    ph = ps[None, :, :] - pc[:, None, :]             # (m, n, 2)
    qh = qs[None, :, :] - qc[:, None, :]
    xh = pts - pc                                    # (m, 2)
    if variant == 1:
        a00 = (w * ph[:, :, 0] * ph[:, :, 0]).sum(axis=1)
        a01 = (w * ph[:, :, 0] * ph[:, :, 1]).sum(axis=1)
        a11 = (w * ph[:, :, 1] * ph[:, :, 1]).sum(axis=1)
        b00 = (w * ph[:, :, 0] * qh[:, :, 0]).sum(axis=1)
        b01 = (w * ph[:, :, 0] * qh[:, :, 1]).sum(axis=1)
        b10 = (w * ph[:, :, 1] * qh[:, :, 0]).sum(axis=1)
        b11 = (w * ph[:, :, 1] * qh[:, :, 1]).sum(axis=1)
        det = a00 * a11 - a01 * a01
        det[bad] = 1.0
        m00 = (a11 * b00 - a01 * b10) / det
        m01 = (a11 * b01 - a01 * b11) / det
        m10 = (a00 * b10 - a01 * b00) / det
        m11 = (a00 * b11 - a01 * b01) / det
        out[:, 0] = xh[:, 0] * m00 + xh[:, 1] * m10 + qc[:, 0]
        out[:, 1] = xh[:, 0] * m01 + xh[:, 1] * m11 + qc[:, 1]
    else:
        mu = (w * (ph ** 2).sum(axis=2)).sum(axis=1)
        mu[bad] = 1.0
        a00 = w * (ph[:, :, 0] * xh[:, None, 0] + ph[:, :, 1] * xh[:, None, 1])
        a01 = w * (ph[:, :, 0] * xh[:, None, 1] - ph[:, :, 1] * xh[:, None, 0])
        ox = (qh[:, :, 0] * a00 - qh[:, :, 1] * a01).sum(axis=1)
        oy = (qh[:, :, 0] * a01 + qh[:, :, 1] * a00).sum(axis=1)
        out[:, 0] = ox / mu + qc[:, 0]
        out[:, 1] = oy / mu + qc[:, 1]
    if bad.any():
        idx = np.argmax(snapped[bad], axis=1)
        out[bad] = qs[idx]
    return out


def _tri_sdf(px, py, tri):
    ax, ay, bx, by, cx, cy = tri
    verts = ((ax, ay, bx, by), (bx, by, cx, cy), (cx, cy, ax, ay))
    d = None
    for x0, y0, x1, y1 in verts:
        ex = x1 - x0
        ey = y1 - y0
        vx = px - x0
        vy = py - y0
        t = np.clip((vx * ex + vy * ey) / (ex * ex + ey * ey), 0.0, 1.0)
        dx = vx - ex * t
        dy = vy - ey * t
        dd = dx * dx + dy * dy
        d = dd if d is None else np.minimum(d, dd)
    s = (bx - ax) * (ay - cy) - (by - ay) * (ax - cx)
    c0 = s * ((px - ax) * (by - ay) - (py - ay) * (bx - ax)) >= 0
    c1 = s * ((px - bx) * (cy - by) - (py - by) * (cx - bx)) >= 0
    c2 = s * ((px - cx) * (ay - cy) - (py - cy) * (ax - cx)) >= 0
    inside = c0 & c1 & c2
    r = np.sqrt(d)
    return np.where(inside, -r, r)


def render_coverage(cx, cy, ra, rb, rot, tris, size):
    ax = (np.arange(size) + 0.5) / size
    gx, gy = np.meshgrid(ax, ax)
    tx = gx - cx
    ty = gy - cy
    crot = np.cos(rot)
    srot = np.sin(rot)
    lx = crot * tx + srot * ty
    ly = -srot * tx + crot * ty
    k = np.sqrt((lx / ra) ** 2 + (ly / rb) ** 2)
    gxk = lx / (ra * ra)
    gyk = ly / (rb * rb)
    gn = np.sqrt(gxk ** 2 + gyk ** 2) / np.maximum(k, 1e-9)
    sdf = np.where(k < 1e-9, -min(ra, rb), (k - 1.0) * k / np.maximum(gn * k, 1e-12))
    for t in range(tris.shape[0]):
        sdf = np.minimum(sdf, _tri_sdf(lx, ly, tris[t]))
    return np.clip(0.5 - sdf * size, 0.0, 1.0)


def edt(seeds):
    from scipy import ndimage
    if not seeds.any():
        return np.full(seeds.shape, 1e12, np.float64)
    return ndimage.distance_transform_edt(~seeds.astype(bool)).astype(np.float64)


def _neighbors(img):
    p2 = np.roll(img, 1, axis=0)
    p3 = np.roll(np.roll(img, 1, axis=0), -1, axis=1)
    p4 = np.roll(img, -1, axis=1)
    p5 = np.roll(np.roll(img, -1, axis=0), -1, axis=1)
    p6 = np.roll(img, -1, axis=0)
    p7 = np.roll(np.roll(img, -1, axis=0), 1, axis=1)
    p8 = np.roll(img, 1, axis=1)
    p9 = np.roll(np.roll(img, 1, axis=0), 1, axis=1)
    return p2, p3, p4, p5, p6, p7, p8, p9


def thin(edges):
    img = edges.astype(np.uint8).copy()
    # np.roll wraps; masking out border rows/cols keeps wrapped values inert
    border = np.zeros(img.shape, dtype=bool)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    changed = True
    while changed:
        changed = False
        for phase in range(2):
            p2, p3, p4, p5, p6, p7, p8, p9 = _neighbors(img)
            seq = (p2, p3, p4, p5, p6, p7, p8, p9, p2)
            b = sum(int(0) + p.astype(np.int32) for p in seq[:-1])
            a = sum(((seq[i] == 0) & (seq[i + 1] == 1)).astype(np.int32) for i in range(8))
            cond = (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & ~border
            if phase == 0:
                cond &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            if cond.any():
                img[cond] = 0
                changed = True
    blocky = True
    while blocky:
        blocky = False
        blk = (img[:-1, :-1] == 1) & (img[:-1, 1:] == 1) & (img[1:, :-1] == 1) & (img[1:, 1:] == 1)
        ys, xs = np.nonzero(blk)
        if len(ys):
            img[ys + 1, xs + 1] = 0
            blocky = True
    return img


def nms(mag, gx, gy):
    H, W = mag.shape
    out = np.zeros((H, W), np.uint8)
    tan22 = 0.41421356
    m = mag[1:-1, 1:-1]
    ax = np.abs(gx[1:-1, 1:-1])
    ay = np.abs(gy[1:-1, 1:-1])
    horiz = ay <= tan22 * ax
    vert = ax <= tan22 * ay
    diag_pos = ~horiz & ~vert & (gx[1:-1, 1:-1] * gy[1:-1, 1:-1] > 0)
    diag_neg = ~horiz & ~vert & ~diag_pos
    n1 = np.where(horiz, mag[1:-1, :-2],
                  np.where(vert, mag[:-2, 1:-1],
                           np.where(diag_pos, mag[:-2, :-2], mag[:-2, 2:])))
    n2 = np.where(horiz, mag[1:-1, 2:],
                  np.where(vert, mag[2:, 1:-1],
                           np.where(diag_pos, mag[2:, 2:], mag[2:, :-2])))
    keep = (m > 0) & (m >= n1) & (m >= n2)
    out[1:-1, 1:-1] = keep.astype(np.uint8)
    return out
