# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for boundary execution.

Box tables hold one row per box: ``[nd, n0, n1, n2, n3, ybase, ys0..ys3]``
for :func:`zero_boxes` and additionally ``[xbase, xs0..xs3]`` for
:func:`affine_axpy`.  Bases and strides are in cells; components are
innermost in the value arrays.  Every loop visits cells in the order the
pure-Python fallback does, so results are bitwise identical.
"""
from libc.stdint cimport int64_t

NAME = "compiled"


def zero_boxes(double[::1] y, const int64_t[:, ::1] table, Py_ssize_t ncomp):
    cdef Py_ssize_t r, a, b, c, d, k, n0, n1, n2, n3
    cdef int64_t s0, s1, s2, s3, ya, yb, yc, yd
    for r in range(table.shape[0]):
        n0, n1, n2, n3 = table[r, 1], table[r, 2], table[r, 3], table[r, 4]
        s0, s1, s2, s3 = table[r, 6], table[r, 7], table[r, 8], table[r, 9]
        for a in range(n0):
            ya = table[r, 5] + a * s0
            for b in range(n1):
                yb = ya + b * s1
                for c in range(n2):
                    yc = yb + c * s2
                    for d in range(n3):
                        yd = (yc + d * s3) * ncomp
                        for k in range(ncomp):
                            y[yd + k] = 0.0


def affine_axpy(double[::1] y, const double[::1] x, const int64_t[:, ::1] table,
                const double[::1] w, Py_ssize_t ncomp):
    cdef Py_ssize_t r, a, b, c, d, k, n0, n1, n2, n3
    cdef int64_t s0, s1, s2, s3, t0, t1, t2, t3, ya, yb, yc, yd, xa, xb, xc, xd
    cdef double wr
    for r in range(table.shape[0]):
        wr = w[r]
        n0, n1, n2, n3 = table[r, 1], table[r, 2], table[r, 3], table[r, 4]
        s0, s1, s2, s3 = table[r, 6], table[r, 7], table[r, 8], table[r, 9]
        t0, t1, t2, t3 = table[r, 11], table[r, 12], table[r, 13], table[r, 14]
        for a in range(n0):
            ya = table[r, 5] + a * s0
            xa = table[r, 10] + a * t0
            for b in range(n1):
                yb = ya + b * s1
                xb = xa + b * t1
                for c in range(n2):
                    yc = yb + c * s2
                    xc = xb + c * t2
                    if ncomp == 1:
                        for d in range(n3):
                            y[yc + d * s3] += wr * x[xc + d * t3]
                    else:
                        for d in range(n3):
                            yd = (yc + d * s3) * ncomp
                            xd = (xc + d * t3) * ncomp
                            for k in range(ncomp):
                                y[yd + k] += wr * x[xd + k]


def gather_axpy(double[::1] y, const double[::1] x, const int64_t[::1] yaddr,
                const int64_t[::1] xaddr, const double[::1] w, Py_ssize_t ncomp):
    cdef Py_ssize_t i, k
    cdef int64_t ya, xa
    for i in range(yaddr.shape[0]):
        ya = yaddr[i] * ncomp
        xa = xaddr[i] * ncomp
        for k in range(ncomp):
            y[ya + k] += w[i] * x[xa + k]


def gather_axpy_data(double[::1] y, const double[::1] x, const int64_t[::1] yaddr,
                     const int64_t[::1] xaddr, const int64_t[::1] daddr,
                     const double[::1] data, Py_ssize_t ncomp):
    cdef Py_ssize_t i, k
    cdef int64_t ya, xa
    cdef double wi
    for i in range(yaddr.shape[0]):
        ya = yaddr[i] * ncomp
        xa = xaddr[i] * ncomp
        wi = data[daddr[i]]
        for k in range(ncomp):
            y[ya + k] += wi * x[xa + k]


def add_values(double[::1] y, const int64_t[::1] yaddr, const double[::1] v, Py_ssize_t ncomp):
    cdef Py_ssize_t i, k
    cdef int64_t ya
    for i in range(yaddr.shape[0]):
        ya = yaddr[i] * ncomp
        for k in range(ncomp):
            y[ya + k] += v[i]


def pack(const double[::1] x, const int64_t[::1] addr, double[::1] out, Py_ssize_t ncomp):
    cdef Py_ssize_t i, k
    for i in range(addr.shape[0]):
        for k in range(ncomp):
            out[i * ncomp + k] = x[addr[i] * ncomp + k]


def unpack(double[::1] x, const int64_t[::1] addr, const double[::1] buf, Py_ssize_t ncomp):
    cdef Py_ssize_t i, k
    for i in range(addr.shape[0]):
        for k in range(ncomp):
            x[addr[i] * ncomp + k] = buf[i * ncomp + k]
