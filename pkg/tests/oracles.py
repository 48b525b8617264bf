"""Independent reference computations used by the tests.

Nothing here imports from seqconf's numerical code paths.
"""

import itertools
import math


def edit_scripts(ref, hyp):
    """Yield every edit script turning ``ref`` into ``hyp`` as a list of op names.

    A script is a sequence over {M, S, D, I} consuming both sides exactly;
    M is only allowed on equal tokens, S only on different ones.
    """
    if not ref and not hyp:
        yield []
        return
    if ref and hyp:
        op = "M" if ref[0] == hyp[0] else "S"
        for rest in edit_scripts(ref[1:], hyp[1:]):
            yield [op] + rest
    if ref:
        for rest in edit_scripts(ref[1:], hyp):
            yield ["D"] + rest
    if hyp:
        for rest in edit_scripts(ref, hyp[1:]):
            yield ["I"] + rest


def script_cost(script):
    return sum(op != "M" for op in script)


def brute_force_distance(ref, hyp):
    return min(script_cost(s) for s in edit_scripts(list(ref), list(hyp)))


def all_sequences(vocab, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(vocab, repeat=n)


def central_difference(f, x, h=1e-5):
    """Gradient of scalar ``f`` at a list of floats ``x``."""
    grad = []
    for i in range(len(x)):
        up = list(x)
        dn = list(x)
        up[i] += h
        dn[i] -= h
        grad.append((f(up) - f(dn)) / (2 * h))
    return grad


def pearson_py(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    sxx = sum((a - mx) ** 2 for a in xs)
    syy = sum((b - my) ** 2 for b in ys)
    return sxy / math.sqrt(sxx * syy)
