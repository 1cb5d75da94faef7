"""Kernel dispatch: compiled Cython core when available, pure Python otherwise.

`poly_eval_batch` is the package's hot loop (degree-(lambda-1) polynomial over
a prime field, evaluated per point).  The compiled path only supports the
61-bit Mersenne modulus; larger moduli always take the Python path.
"""

from __future__ import annotations

MERSENNE61 = (1 << 61) - 1

try:
    import numpy as _np

    from . import _speedups as _ext

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _ext = None
    _np = None
    HAVE_COMPILED = False


def active_kernel() -> str:
    return "cython" if HAVE_COMPILED else "python"


def _poly_eval_py(coeffs, xs, modulus):
    rev = list(reversed(coeffs))
    out = []
    for x in xs:
        acc = 0
        for c in rev:
            acc = (acc * x + c) % modulus
        out.append(acc)
    return out


def poly_eval_batch(coeffs, xs, modulus, force_python: bool = False):
    """Evaluate sum(coeffs[i]*x**i) mod modulus for every x in xs."""
    if not xs:
        return []
    if force_python or not HAVE_COMPILED or modulus != MERSENNE61:
        return _poly_eval_py(coeffs, xs, modulus)
    c = _np.asarray(coeffs, dtype=_np.uint64)
    x = _np.asarray(xs, dtype=_np.uint64)
    out = _np.empty(len(xs), dtype=_np.uint64)
    _ext.poly_eval_m61(c, x, out)
    return [int(v) for v in out]


def poly_eval_one(coeffs, x, modulus, force_python: bool = False) -> int:
    return poly_eval_batch(coeffs, [x], modulus, force_python=force_python)[0]
