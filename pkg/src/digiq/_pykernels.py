"""Pure-Python fallback for the compiled kernels.

Same signatures as ``_ckernels``; arithmetic runs on Python integers held in
``object`` arrays, so it is exact for every register width.
"""

import numpy as np


def _obj(a):
    return a if a.dtype == object else a.astype(object)


def _round_shift(acc, f):
    q = acc >> f
    rem = acc - (q << f)
    half = 1 << (f - 1)
    up = (rem > half) | ((rem == half) & ((q & 1) == 1))
    return np.where(up, q + 1, q)


def combine(lo, hi, coef, x_re, x_im, c_re, c_im, v_re, v_im, f, qbits, out_re, out_im,
            offsets=None):
    n = out_re.shape[0]
    are = np.zeros(n, dtype=object)
    aim = np.zeros(n, dtype=object)
    if len(lo):
        xr, xi = _obj(np.asarray(x_re)), _obj(np.asarray(x_im))
        coef = _obj(np.asarray(coef))
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        bounds = list(offsets) if offsets is not None else [0, len(lo)]
        for start, stop in zip(bounds[:-1], bounds[1:]):
            # one part at a time: blocks inside a part touch disjoint indices
            l, h, c = lo[start:stop], hi[start:stop], coef[start:stop]
            pair = h >= 0
            are[l] += c[:, 0] * xr[l] - c[:, 1] * xi[l]
            aim[l] += c[:, 0] * xi[l] + c[:, 1] * xr[l]
            if pair.any():
                l2, h2, c2 = l[pair], h[pair], c[pair]
                # swap the register pair, multiply in place, then swap back
                sr, si = xr.copy(), xi.copy()
                sr[l2], sr[h2] = xr[h2], xr[l2]
                si[l2], si[h2] = xi[h2], xi[l2]
                are[l2] += c2[:, 2] * sr[l2] - c2[:, 3] * si[l2]
                aim[l2] += c2[:, 2] * si[l2] + c2[:, 3] * sr[l2]
                are[h2] += c2[:, 4] * sr[h2] - c2[:, 5] * si[h2]
                aim[h2] += c2[:, 4] * si[h2] + c2[:, 5] * sr[h2]
                are[h2] += c2[:, 6] * xr[h2] - c2[:, 7] * xi[h2]
                aim[h2] += c2[:, 6] * xi[h2] + c2[:, 7] * xr[h2]
    for t in range(len(c_re)):
        cr, ci = int(c_re[t]), int(c_im[t])
        vr, vi = _obj(np.asarray(v_re[t])), _obj(np.asarray(v_im[t]))
        are += cr * vr
        aim += cr * vi
        if ci:
            are -= ci * vi
            aim += ci * vr
    rr = _round_shift(are, f)
    ri = _round_shift(aim, f)
    lim = 1 << (qbits - 1)
    bad = np.flatnonzero((rr < -lim) | (rr >= lim) | (ri < -lim) | (ri >= lim))
    if bad.size:
        return int(bad[0])
    out_re[:] = rr
    out_im[:] = ri
    return -1


def masked_sumsq(re, im, mask, sel):
    sel_idx = np.flatnonzero(np.asarray(mask) == sel)
    r = _obj(np.asarray(re)[sel_idx])
    i = _obj(np.asarray(im)[sel_idx])
    return int((r * r).sum() + (i * i).sum()) if sel_idx.size else 0
