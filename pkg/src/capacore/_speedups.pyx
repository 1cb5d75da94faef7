# Compiled kernel for the inner hash loop: batch evaluation of a fixed
# polynomial over the 61-bit Mersenne field at many points.  Everything else
# in the package is plain Python; this loop is the only part whose cost is
# per-point times per-coefficient.

from libc.stdint cimport uint64_t
cimport cython

cdef extern from *:
    ctypedef unsigned long long uint128_t "unsigned __int128"

cdef uint64_t M61 = 2305843009213693951ULL  # 2**61 - 1

KERNEL = "cython"


@cython.boundscheck(False)
@cython.wraparound(False)
cdef inline uint64_t _mulmod61(uint64_t a, uint64_t b) noexcept nogil:
    cdef uint128_t z = <uint128_t> a * <uint128_t> b
    cdef uint64_t lo = <uint64_t> (z & M61)
    cdef uint64_t hi = <uint64_t> (z >> 61)
    cdef uint64_t s = lo + hi
    if s >= M61:
        s -= M61
    return s


@cython.boundscheck(False)
@cython.wraparound(False)
def poly_eval_m61(uint64_t[::1] coeffs, uint64_t[::1] xs, uint64_t[::1] out):
    """Horner evaluation of sum(coeffs[i] * x**i) mod 2**61-1 for each x."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t m = coeffs.shape[0]
    cdef Py_ssize_t i, j
    cdef uint64_t acc, x
    if m == 0:
        for i in range(n):
            out[i] = 0
        return
    with nogil:
        for i in range(n):
            x = xs[i]
            acc = coeffs[m - 1]
            for j in range(m - 2, -1, -1):
                acc = _mulmod61(acc, x)
                acc += coeffs[j]
                if acc >= M61:
                    acc -= M61
            out[i] = acc
