# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fixed-point kernels for int64-backed register formats.

Products of two registers are accumulated exactly in 128-bit integers and
rounded once (half to even) on the way out.
"""

from libc.stdint cimport int64_t, uint64_t, uint8_t
from libc.stdlib cimport calloc, free

cdef extern from *:
    """
    #include <stdint.h>
    typedef __int128 dq_i128;

    static inline dq_i128 dq_round_shift(dq_i128 acc, int f) {
        dq_i128 q = acc >> f;                      /* arithmetic: floor */
        dq_i128 rem = acc - q * (((dq_i128)1) << f);
        dq_i128 half = ((dq_i128)1) << (f - 1);
        if (rem > half || (rem == half && (q & 1))) q += 1;
        return q;
    }
    static inline int dq_mac(dq_i128 *acc, int64_t a, int64_t b) {
        return __builtin_add_overflow(*acc, (dq_i128)a * (dq_i128)b, acc);
    }
    static inline int dq_msub(dq_i128 *acc, int64_t a, int64_t b) {
        return __builtin_sub_overflow(*acc, (dq_i128)a * (dq_i128)b, acc);
    }
    static inline int dq_in_range(dq_i128 v, int qbits) {
        dq_i128 lim = ((dq_i128)1) << (qbits - 1);
        return v >= -lim && v < lim;
    }
    static inline int64_t dq_hi(dq_i128 v) { return (int64_t)(v >> 64); }
    static inline uint64_t dq_lo(dq_i128 v) { return (uint64_t)v; }
    """
    ctypedef long long dq_i128
    dq_i128 dq_round_shift(dq_i128 acc, int f) nogil
    int dq_mac(dq_i128 *acc, int64_t a, int64_t b) nogil
    int dq_msub(dq_i128 *acc, int64_t a, int64_t b) nogil
    int dq_in_range(dq_i128 v, int qbits) nogil
    int64_t dq_hi(dq_i128 v) nogil
    uint64_t dq_lo(dq_i128 v) nogil


cdef inline int _cmac(dq_i128 *are, dq_i128 *aim, int64_t cr, int64_t ci,
                      int64_t xr, int64_t xi) noexcept nogil:
    # (cr + i ci) (xr + i xi), accumulated
    cdef int bad = 0
    bad |= dq_mac(are, cr, xr)
    bad |= dq_mac(aim, cr, xi)
    if ci != 0:
        bad |= dq_msub(are, ci, xi)
        bad |= dq_mac(aim, ci, xr)
    return bad


def combine(const int64_t[::1] lo, const int64_t[::1] hi, const int64_t[:, ::1] coef,
            const int64_t[::1] x_re, const int64_t[::1] x_im,
            const int64_t[::1] c_re, const int64_t[::1] c_im,
            const int64_t[:, ::1] v_re, const int64_t[:, ::1] v_im,
            int f, int qbits, int64_t[::1] out_re, int64_t[::1] out_im):
    """out = round(M x + sum_t c_t v_t); returns -1, or the first bad index.

    ``M`` is given as 1x1 (``hi < 0``) and 2x2 blocks with coefficient rows
    ``[ll, lh, hl, hh]`` (re/im interleaved).  A return value ``>= 0`` names
    an index whose result left the register range; ``<= -2`` encodes an
    accumulator overflow at index ``-2 - ret``.
    """
    cdef Py_ssize_t n = out_re.shape[0]
    cdef Py_ssize_t nb = lo.shape[0]
    cdef Py_ssize_t m = c_re.shape[0]
    cdef Py_ssize_t b, i, t, j, k
    cdef int bad = 0
    cdef long long ret = -1
    cdef dq_i128 *are = <dq_i128 *> calloc(n, sizeof(dq_i128))
    cdef dq_i128 *aim = <dq_i128 *> calloc(n, sizeof(dq_i128))
    cdef dq_i128 rr, ri
    if (are == NULL or aim == NULL) and n > 0:
        free(are)
        free(aim)
        raise MemoryError()
    try:
        with nogil:
            for b in range(nb):
                j = lo[b]
                k = hi[b]
                bad = _cmac(&are[j], &aim[j], coef[b, 0], coef[b, 1], x_re[j], x_im[j])
                if k >= 0:
                    # off-diagonal entries act on the swapped register pair
                    bad |= _cmac(&are[j], &aim[j], coef[b, 2], coef[b, 3], x_re[k], x_im[k])
                    bad |= _cmac(&are[k], &aim[k], coef[b, 4], coef[b, 5], x_re[j], x_im[j])
                    bad |= _cmac(&are[k], &aim[k], coef[b, 6], coef[b, 7], x_re[k], x_im[k])
                if bad:
                    ret = -2 - j
                    break
            if ret == -1:
                for t in range(m):
                    for i in range(n):
                        if _cmac(&are[i], &aim[i], c_re[t], c_im[t], v_re[t, i], v_im[t, i]):
                            ret = -2 - i
                            break
                    if ret != -1:
                        break
            if ret == -1:
                for i in range(n):
                    rr = dq_round_shift(are[i], f)
                    ri = dq_round_shift(aim[i], f)
                    if not (dq_in_range(rr, qbits) and dq_in_range(ri, qbits)):
                        ret = i
                        break
                    out_re[i] = <int64_t> rr
                    out_im[i] = <int64_t> ri
    finally:
        free(are)
        free(aim)
    return ret


def masked_sumsq(const int64_t[::1] re, const int64_t[::1] im, const uint8_t[::1] mask, int sel):
    """Exact sum of re**2 + im**2 over indices with ``mask == sel``."""
    cdef Py_ssize_t n = re.shape[0]
    cdef Py_ssize_t i
    cdef dq_i128 acc = 0
    cdef int bad = 0
    with nogil:
        for i in range(n):
            if mask[i] == sel:
                bad |= dq_mac(&acc, re[i], re[i])
                bad |= dq_mac(&acc, im[i], im[i])
    if bad:
        raise OverflowError("sum of squares exceeds 127 bits")
    return (int(dq_hi(acc)) << 64) + int(dq_lo(acc))
