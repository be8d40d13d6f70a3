"""Independent reference implementations used only by the tests.

Nothing here imports the modeling code beyond plain data classes, so a bug
in the package cannot silently leak into its own oracle.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.signal import correlate2d

DIMS = "WHCKF"
DEPS = {"inputs": "WHCF", "filters": "CK", "psums": "WHKF"}


def conv3d_loops(I, Fl, stride=(1, 1, 1)):
    """Six nested loops per output, plain Python ints.

    I is [F][C][W][H], Fl is [K][T][C][S][R], stride is (w, h, f).
    """
    sw, sh, sf = stride
    Fn, C, W, H = I.shape
    K, T, _, S, R = Fl.shape
    Wo, Ho, Fo = (W - S) // sw + 1, (H - R) // sh + 1, (Fn - T) // sf + 1
    out = np.zeros((Fo, K, Wo, Ho), dtype=np.int64)
    for f, k, w, h in itertools.product(range(Fo), range(K), range(Wo), range(Ho)):
        acc = 0
        for t, c, s, r in itertools.product(range(T), range(C), range(S), range(R)):
            acc += int(I[f * sf + t, c, w * sw + s, h * sh + r]) * int(Fl[k, t, c, s, r])
        out[f, k, w, h] = acc
    return out


def conv2d_scipy(image, kernels):
    """image [C][W][H], kernels [K][C][S][R] -> [K][W_out][H_out] via scipy."""
    K = kernels.shape[0]
    outs = []
    for k in range(K):
        acc = sum(correlate2d(image[c], kernels[k, c], mode="valid") for c in range(image.shape[0]))
        outs.append(acc)
    return np.array(outs, dtype=np.int64)


def walk_fills(dims, windows, elem, tiles, orders):
    """Count tile fills and psum writebacks by stepping through the full nest.

    dims: output-coverage extents in WHCKF order.  windows: (filter, stride)
    for W, H, F.  elem: bytes per element for each datatype.  tiles: per
    level tuples in WHCKF order.  orders: per level dim strings, outermost
    first.  Returns {(level, datatype): [loads, load_bytes, wb, wb_bytes]}.
    """
    win = dict(zip("WHF", windows))
    n = len(tiles)

    def nbytes(dt, reg):
        e = dict(zip(DIMS, (x for _, x in reg)))
        if dt == "inputs":
            v = e["C"]
            for d in "WHF":
                f, s = win[d]
                v *= (e[d] - 1) * s + f
            return v * elem[dt]
        if dt == "filters":
            return e["C"] * e["K"] * elem["filter_volume"] * elem[dt]
        return e["W"] * e["H"] * e["K"] * e["F"] * elem[dt]

    def regions(level, reg):
        tile = tiles[level]
        axes = [DIMS.index(d) for d in orders[level]]
        spans = []
        for a in axes:
            off, ext = reg[a]
            spans.append([(o, min(tile[a], off + ext - o)) for o in range(off, off + ext, tile[a])])
        for pick in itertools.product(*spans):
            r = list(reg)
            for a, s in zip(axes, pick):
                r[a] = s
            r = tuple(r)
            if level == n - 1:
                yield (r,)
            else:
                for rest in regions(level + 1, r):
                    yield (r,) + rest

    out = {}
    res = {}
    seen = [set() for _ in range(n)]

    def bump(key, i, v):
        out.setdefault(key, [0, 0, 0, 0])[i] += v

    for path in regions(0, tuple((0, d) for d in dims)):
        for lvl, reg in enumerate(path):
            for dt in ("inputs", "filters", "psums"):
                key = tuple(reg[DIMS.index(d)] for d in DEPS[dt])
                old = res.get((lvl, dt))
                if old is not None and old[0] == key:
                    continue
                size = nbytes(dt, reg)
                if dt == "psums":
                    if old is not None:
                        bump((lvl, dt), 2, 1)
                        bump((lvl, dt), 3, old[1])
                    if key in seen[lvl]:
                        bump((lvl, dt), 0, 1)
                        bump((lvl, dt), 1, size)
                    seen[lvl].add(key)
                elif dt == "inputs" and old is not None:
                    changed = [i for i, (a, b) in enumerate(zip(old[0], key)) if a != b]
                    if len(changed) == 1 and "WHCF"[changed[0]] in "WHF":
                        d = "WHCF"[changed[0]]
                        (ao, ae), (bo, be) = old[0][changed[0]], key[changed[0]]
                        f, s = win[d]
                        halo = max(0, f - s)
                        if halo and ao + ae == bo:
                            size -= size // ((be - 1) * s + f) * halo
                    bump((lvl, dt), 0, 1)
                    bump((lvl, dt), 1, size)
                else:
                    bump((lvl, dt), 0, 1)
                    bump((lvl, dt), 1, size)
                res[(lvl, dt)] = (key, size if dt == "psums" else None)
    for lvl in range(n):
        old = res.get((lvl, "psums"))
        if old is not None:
            bump((lvl, "psums"), 2, 1)
            bump((lvl, "psums"), 3, old[1])
    return out


def nested_enumeration(bounds, strides, event_mask):
    """(address, event bits) for every index vector of a loop nest, in order."""
    out = []
    D = len(bounds)
    for idx in itertools.product(*[range(b) for b in bounds]):
        addr = sum(i * s for i, s in zip(idx, strides))
        ev = 0
        for j in range(D):
            if all(idx[k] == bounds[k] - 1 for k in range(j, D)):
                ev |= 1 << j
        out.append((addr, ev & event_mask))
    return out
