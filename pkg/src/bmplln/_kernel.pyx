# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop for exact simulation of a finite-state BMP.

Mirrors ``_pykernel.run_replicate`` draw for draw: both take ziggurat
exponentials and ``next_double`` uniforms from a numpy bit generator in the
same order, so the two backends return bit-identical results.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_exponential

cnp.import_array()


cdef inline double _draw(bitgen_t* rng) noexcept nogil:
    return rng.next_double(rng.state)


cdef int _run(
    bitgen_t* rng,
    const double[::1] rate,
    const double[::1] chan_cum,
    const long[::1] chan_ptr,
    const long[::1] chan_kind,
    const long[::1] chan_target,
    const long[::1] child_ptr,
    const long[::1] children,
    long x0,
    double T,
    long cap,
    long[::1] counts,
    double[::1] integral,
) noexcept nogil:
    cdef Py_ssize_t n = counts.shape[0]
    cdef Py_ssize_t x, j, c
    cdef double t = 0.0, total, dt, u, acc
    cdef long pop = 1
    for x in range(n):
        counts[x] = 0
        integral[x] = 0.0
    counts[x0] = 1
    while pop > 0:
        total = 0.0
        for x in range(n):
            total += counts[x] * rate[x]
        if total <= 0.0:
            break
        dt = random_standard_exponential(rng) / total
        if t + dt >= T:
            break
        t += dt
        for x in range(n):
            integral[x] += counts[x] * dt
        # pick the acting state, then the channel within it
        u = _draw(rng) * total
        acc = 0.0
        x = n - 1
        for j in range(n):
            acc += counts[j] * rate[j]
            if u < acc:
                x = j
                break
        while counts[x] == 0:
            x -= 1
        u = (u - (acc - counts[x] * rate[x])) / counts[x]
        j = chan_ptr[x + 1] - 1
        for c in range(chan_ptr[x], chan_ptr[x + 1]):
            if u < chan_cum[c]:
                j = c
                break
        counts[x] -= 1
        pop -= 1
        if chan_kind[j] == 0:
            counts[chan_target[j]] += 1
            pop += 1
        elif chan_kind[j] == 2:
            c = chan_target[j]
            for x in range(child_ptr[c], child_ptr[c + 1]):
                counts[children[x]] += 1
            pop += child_ptr[c + 1] - child_ptr[c]
            if pop > cap:
                return 1
    for x in range(n):
        integral[x] += counts[x] * (T - t)
    return 0


def run_replicate(bit_generator, tables, long x0, double T, long cap):
    """Simulate one trajectory; returns ``(counts, integral, overflowed)``."""
    cdef bitgen_t* rng = <bitgen_t*> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")
    n = tables.rate.shape[0]
    counts = np.zeros(n, dtype=np.int_)
    integral = np.zeros(n, dtype=np.float64)
    cdef long[::1] cv = counts
    cdef double[::1] iv = integral
    cdef const double[::1] rate = tables.rate
    cdef const double[::1] chan_cum = tables.chan_cum
    cdef const long[::1] chan_ptr = tables.chan_ptr
    cdef const long[::1] chan_kind = tables.chan_kind
    cdef const long[::1] chan_target = tables.chan_target
    cdef const long[::1] child_ptr = tables.child_ptr
    cdef const long[::1] children = tables.children
    cdef int status
    with bit_generator.lock, nogil:
        status = _run(rng, rate, chan_cum, chan_ptr, chan_kind, chan_target,
                      child_ptr, children, x0, T, cap, cv, iv)
    return counts, integral, bool(status)
