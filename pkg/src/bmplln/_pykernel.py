"""Pure-Python event loop, used when the compiled kernel is unavailable.

Keep this in lockstep with ``_kernel.pyx``: same draws, same order, same
floating-point operations.
"""
import numpy as np


def run_replicate(bit_generator, tables, x0, T, cap):
    """Simulate one trajectory; returns ``(counts, integral, overflowed)``."""
    gen = np.random.Generator(bit_generator)
    # one value per call: exponential and uniform draws interleave on the stream
    draw = gen.random
    exponential = gen.standard_exponential
    rate = tables.rate.tolist()
    chan_cum = tables.chan_cum.tolist()
    chan_ptr = tables.chan_ptr.tolist()
    chan_kind = tables.chan_kind.tolist()
    chan_target = tables.chan_target.tolist()
    child_ptr = tables.child_ptr.tolist()
    children = tables.children.tolist()
    n = len(rate)
    counts = [0] * n
    integral = [0.0] * n
    counts[x0] = 1
    pop = 1
    t = 0.0
    overflow = False
    while pop > 0:
        total = 0.0
        for x in range(n):
            total += counts[x] * rate[x]
        if total <= 0.0:
            break
        dt = exponential() / total
        if t + dt >= T:
            break
        t += dt
        for x in range(n):
            integral[x] += counts[x] * dt
        u = draw() * total
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
        kind = chan_kind[j]
        if kind == 0:
            counts[chan_target[j]] += 1
            pop += 1
        elif kind == 2:
            c = chan_target[j]
            for i in range(child_ptr[c], child_ptr[c + 1]):
                counts[children[i]] += 1
            pop += child_ptr[c + 1] - child_ptr[c]
            if pop > cap:
                overflow = True
                break
    if not overflow:
        for x in range(n):
            integral[x] += counts[x] * (T - t)
    return np.array(counts, dtype=np.int_), np.array(integral), overflow
