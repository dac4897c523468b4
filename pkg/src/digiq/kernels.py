"""Kernel dispatch: compiled core when available, pure Python otherwise.

The compiled extension handles int64-backed formats (``q_total <= 64``).
Wider formats always run on the Python kernels.  Setting the environment
variable ``DIGIQ_PURE_PYTHON=1`` before import forces the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pykernels
from .errors import RegisterOverflow

try:
    if os.environ.get("DIGIQ_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None

BACKEND = "compiled" if _ckernels is not None else "python"

_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_C = np.zeros((0, 8), dtype=np.int64)
_EMPTY_V = np.zeros((0, 0), dtype=np.int64)


@dataclass(frozen=True)
class BlockArrays:
    """Flat block layout for one operator in one register format.

    ``lo``/``hi`` are block index pairs (``hi == -1`` for 1x1 blocks);
    ``coef`` rows hold ``[ll, lh, hl, hh]`` as interleaved raw re/im words;
    ``offsets`` delimit the block-diagonal parts.
    """

    lo: np.ndarray
    hi: np.ndarray
    coef: np.ndarray
    offsets: tuple


def set_backend(name: str) -> str:
    """Switch backend at runtime (``"compiled"`` or ``"python"``); returns the previous one."""
    global BACKEND
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _ckernels is None:
        raise ImportError("compiled kernels are not built")
    prev, BACKEND = BACKEND, name
    return prev


def compiled_available() -> bool:
    return _ckernels is not None


def _use_compiled(fmt) -> bool:
    return BACKEND == "compiled" and not fmt.wide


def combine(fmt, n, blocks: BlockArrays | None = None, x=None, terms=()):
    """Exact ``M x + sum c_t v_t`` rounded once to ``fmt``.

    ``x`` is a ``(re, im)`` pair of raw arrays; each term is
    ``(c_re, c_im, v_re, v_im)`` with raw integer scalars.
    """
    terms = [t for t in terms if t[0] or t[1]]
    if _use_compiled(fmt):
        out_re = np.empty(n, dtype=np.int64)
        out_im = np.empty(n, dtype=np.int64)
        if blocks is not None and len(blocks.lo):
            lo, hi, coef = blocks.lo, blocks.hi, blocks.coef
            xr, xi = x
        else:
            lo, hi, coef, xr, xi = _EMPTY_I, _EMPTY_I, _EMPTY_C, _EMPTY_I, _EMPTY_I
        if terms:
            c_re = np.array([t[0] for t in terms], dtype=np.int64)
            c_im = np.array([t[1] for t in terms], dtype=np.int64)
            v_re = np.ascontiguousarray(np.stack([t[2] for t in terms]), dtype=np.int64)
            v_im = np.ascontiguousarray(np.stack([t[3] for t in terms]), dtype=np.int64)
        else:
            c_re = c_im = _EMPTY_I
            v_re = v_im = np.zeros((0, n), dtype=np.int64)
        ret = _ckernels.combine(lo, hi, coef, xr, xi, c_re, c_im, v_re, v_im,
                                fmt.f, fmt.q_total, out_re, out_im)
    else:
        out_re = np.empty(n, dtype=object)
        out_im = np.empty(n, dtype=object)
        if blocks is not None and len(blocks.lo):
            lo, hi, coef, offsets = blocks.lo, blocks.hi, blocks.coef, blocks.offsets
            xr, xi = x
        else:
            lo, hi, coef, offsets, xr, xi = [], [], None, None, None, None
        ret = _pykernels.combine(
            lo, hi, coef, xr, xi,
            [t[0] for t in terms], [t[1] for t in terms],
            [t[2] for t in terms], [t[3] for t in terms],
            fmt.f, fmt.q_total, out_re, out_im, offsets=offsets,
        )
        if not fmt.wide and ret == -1:
            out_re, out_im = out_re.astype(np.int64), out_im.astype(np.int64)
    if ret != -1:
        idx = ret if ret >= 0 else -2 - ret
        raise RegisterOverflow(f"register overflow in {fmt} at index {idx}", index=int(idx))
    return out_re, out_im


def masked_sumsq(re, im, mask, sel: int) -> int:
    """Exact sum of squared raw words over indices where ``mask == sel``."""
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if (BACKEND == "compiled" and re.dtype == np.int64 and im.dtype == np.int64):
        try:
            return _ckernels.masked_sumsq(re, im, mask, sel)
        except OverflowError:
            pass
    return _pykernels.masked_sumsq(re, im, mask, sel)
