"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Set the environment variable ``BASISRISK_NO_NUMBA=1`` before import to force
the numpy implementations (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``). The exported callables are identical in
signature and semantics either way; ``USE_NUMBA`` records which path is live.
"""

import math
import os

import numpy as np

USE_NUMBA = os.environ.get("BASISRISK_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

EARTH_RADIUS_KM = 6371.0


# ---------------------------------------------------------------------------
# Exact expectile solve on a sorted weighted sample.
#
# The first-order condition gamma*E[(X-y)+] = (1-gamma)*E[(y-X)+] is piecewise
# linear in y between order statistics, so the root is solved exactly on the
# bracketing interval located via the monotone knot values.
# ---------------------------------------------------------------------------

def _expectile_sorted_numpy(xs, cw, cxw, gammas):
    xs = np.asarray(xs, dtype=np.float64)
    gammas = np.atleast_1d(np.asarray(gammas, dtype=np.float64))
    total = cxw[-1]
    # g(y) at each knot: gamma*E[(X-y)+] - (1-gamma)*E[(y-X)+]
    upper = (total - cxw) - xs * (1.0 - cw)  # E[(X-y)+] at y = xs[i]
    lower = xs * cw - cxw                    # E[(y-X)+] at y = xs[i]
    out = np.empty(gammas.shape[0], dtype=np.float64)
    for j, g in enumerate(gammas):
        knot_vals = g * upper - (1.0 - g) * lower
        # knot_vals is non-increasing; find last index with value >= 0
        idx = np.searchsorted(-knot_vals, 0.0, side="right") - 1
        if idx < 0:
            out[j] = xs[0]
            continue
        if idx >= xs.shape[0] - 1:
            out[j] = xs[-1]
            continue
        w, c = cw[idx], cxw[idx]
        denom = g * (1.0 - w) + (1.0 - g) * w
        out[j] = (g * (total - c) + (1.0 - g) * c) / denom
    return out


def _xtrack_min_distance_numpy(px, py, pz, vx, vy, vz):
    n = vx.shape[0]
    if n == 1:
        d = np.arccos(np.clip(px * vx[0] + py * vy[0] + pz * vz[0], -1.0, 1.0))
        return float(d)
    ax, ay, az = vx[:-1], vy[:-1], vz[:-1]
    bx, by, bz = vx[1:], vy[1:], vz[1:]
    # segment great-circle normal a x b
    nx = ay * bz - az * by
    ny = az * bx - ax * bz
    nz = ax * by - ay * bx
    nn = np.sqrt(nx * nx + ny * ny + nz * nz)
    dot_pa = np.clip(px * ax + py * ay + pz * az, -1.0, 1.0)
    dot_pb = np.clip(px * bx + py * by + pz * bz, -1.0, 1.0)
    end_dist = np.minimum(np.arccos(dot_pa), np.arccos(dot_pb))
    with np.errstate(invalid="ignore", divide="ignore"):
        sin_xt = np.clip((px * nx + py * ny + pz * nz) / nn, -1.0, 1.0)
        xtrack = np.abs(np.arcsin(sin_xt))
        # foot of perpendicular: p projected onto the great-circle plane
        fx = px - sin_xt * nx / nn
        fy = py - sin_xt * ny / nn
        fz = pz - sin_xt * nz / nn
        fn = np.sqrt(fx * fx + fy * fy + fz * fz)
        fx, fy, fz = fx / fn, fy / fn, fz / fn
        arc_ab = np.arccos(np.clip(ax * bx + ay * by + az * bz, -1.0, 1.0))
        arc_af = np.arccos(np.clip(ax * fx + ay * fy + az * fz, -1.0, 1.0))
        arc_bf = np.arccos(np.clip(bx * fx + by * fy + bz * fz, -1.0, 1.0))
    inside = (arc_af <= arc_ab + 1e-12) & (arc_bf <= arc_ab + 1e-12)
    degenerate = nn < 1e-15
    dist = np.where(inside & ~degenerate, xtrack, end_dist)
    return float(np.min(dist))


if USE_NUMBA:

    @njit(cache=True)
    def _expectile_sorted_numba(xs, cw, cxw, gammas):
        n = xs.shape[0]
        total = cxw[n - 1]
        out = np.empty(gammas.shape[0], dtype=np.float64)
        for j in range(gammas.shape[0]):
            g = gammas[j]
            # binary search for last knot with g(y) >= 0
            lo, hi = 0, n - 1
            # g at last knot is always <= 0 (E[(X-y)+]=0 there)
            x_last = xs[n - 1]
            if -(1.0 - g) * (x_last * cw[n - 1] - cxw[n - 1]) >= 0.0:
                out[j] = x_last
                continue
            while hi - lo > 1:
                mid = (lo + hi) // 2
                x = xs[mid]
                up = (total - cxw[mid]) - x * (1.0 - cw[mid])
                lw = x * cw[mid] - cxw[mid]
                if g * up - (1.0 - g) * lw >= 0.0:
                    lo = mid
                else:
                    hi = mid
            x = xs[lo]
            up = (total - cxw[lo]) - x * (1.0 - cw[lo])
            lw = x * cw[lo] - cxw[lo]
            if g * up - (1.0 - g) * lw < 0.0:
                out[j] = xs[0]
                continue
            w = cw[lo]
            c = cxw[lo]
            denom = g * (1.0 - w) + (1.0 - g) * w
            out[j] = (g * (total - c) + (1.0 - g) * c) / denom
        return out

    @njit(cache=True)
    def _xtrack_min_distance_numba(px, py, pz, vx, vy, vz):
        n = vx.shape[0]
        best = 1.0e30
        for i in range(n):
            d = px * vx[i] + py * vy[i] + pz * vz[i]
            if d > 1.0:
                d = 1.0
            elif d < -1.0:
                d = -1.0
            dist = math.acos(d)
            if dist < best:
                best = dist
        for i in range(n - 1):
            ax, ay, az = vx[i], vy[i], vz[i]
            bx, by, bz = vx[i + 1], vy[i + 1], vz[i + 1]
            nx = ay * bz - az * by
            ny = az * bx - ax * bz
            nz = ax * by - ay * bx
            nn = math.sqrt(nx * nx + ny * ny + nz * nz)
            if nn < 1e-15:
                continue
            s = (px * nx + py * ny + pz * nz) / nn
            if s > 1.0:
                s = 1.0
            elif s < -1.0:
                s = -1.0
            fx = px - s * nx / nn
            fy = py - s * ny / nn
            fz = pz - s * nz / nn
            fn = math.sqrt(fx * fx + fy * fy + fz * fz)
            if fn < 1e-15:
                continue
            fx, fy, fz = fx / fn, fy / fn, fz / fn
            d_ab = ax * bx + ay * by + az * bz
            d_af = ax * fx + ay * fy + az * fz
            d_bf = bx * fx + by * fy + bz * fz
            if d_ab > 1.0:
                d_ab = 1.0
            elif d_ab < -1.0:
                d_ab = -1.0
            if d_af > 1.0:
                d_af = 1.0
            elif d_af < -1.0:
                d_af = -1.0
            if d_bf > 1.0:
                d_bf = 1.0
            elif d_bf < -1.0:
                d_bf = -1.0
            arc_ab = math.acos(d_ab)
            if math.acos(d_af) <= arc_ab + 1e-12 and math.acos(d_bf) <= arc_ab + 1e-12:
                xt = abs(math.asin(s))
                if xt < best:
                    best = xt
        return best

    expectile_sorted = _expectile_sorted_numba
    xtrack_min_distance = _xtrack_min_distance_numba
else:
    expectile_sorted = _expectile_sorted_numpy
    xtrack_min_distance = _xtrack_min_distance_numpy
