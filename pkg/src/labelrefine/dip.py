"""Hartigan's dip statistic for unimodality of linear data.

Port of the greatest-convex-minorant / least-concave-majorant algorithm
(Hartigan & Hartigan 1985, AS 217, with Maechler's corrections).  Pure
Python on lists; the inner loops are O(n) amortised.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

__all__ = ["dip_statistic"]

_INF = math.inf


def _div(a: float, b: float) -> float:
    # IEEE semantics for tied x values instead of ZeroDivisionError
    if b != 0.0:
        return a / b
    if a == 0.0:
        return math.nan
    return _INF if a > 0 else -_INF


def dip_statistic(x: Sequence[float] | np.ndarray, is_sorted: bool = False) -> float:
    """Dip of the empirical distribution of ``x``.

    Returns a value in [1/(2n), 1/4]; a sample whose points all coincide
    (or with fewer than two points) has dip 0.
    """
    xs = list(map(float, x if is_sorted else np.sort(np.asarray(x, dtype=float))))
    n = len(xs)
    if n < 2 or xs[0] == xs[-1]:
        return 0.0

    # mn[j]: predecessor of j on the convex minorant of the points 0..j
    mn = [0] * n
    for j in range(1, n):
        mn[j] = j - 1
        while True:
            mnj = mn[j]
            mnmnj = mn[mnj]
            if mnj == 0 or (xs[j] - xs[mnj]) * (mnj - mnmnj) < (xs[mnj] - xs[mnmnj]) * (j - mnj):
                break
            mn[j] = mnmnj
    # mj[k]: successor of k on the concave majorant of the points k..n-1
    mj = [0] * n
    mj[n - 1] = n - 1
    for k in range(n - 2, -1, -1):
        mj[k] = k + 1
        while True:
            mjk = mj[k]
            mjmjk = mj[mjk]
            if mjk == n - 1 or (xs[k] - xs[mjk]) * (mjk - mjmjk) < (xs[mjk] - xs[mjmjk]) * (k - mjk):
                break
            mj[k] = mjmjk

    # gcm/lcm are 1-based chains of data indices; slot 0 unused
    gcm = [0] * (n + 2)
    lcm = [0] * (n + 2)
    low, high = 0, n - 1
    dip = 1.0
    while True:
        gcm[1] = high
        i = 1
        while gcm[i] > low:
            gcm[i + 1] = mn[gcm[i]]
            i += 1
        ig = l_gcm = i
        ix = ig - 1

        lcm[1] = low
        i = 1
        while lcm[i] < high:
            lcm[i + 1] = mj[lcm[i]]
            i += 1
        ih = l_lcm = i
        iv = 2

        d = 0.0
        if l_gcm != 2 or l_lcm != 2:
            while True:
                gcmix = gcm[ix]
                lcmiv = lcm[iv]
                if gcmix > lcmiv:
                    gcmi1 = gcm[ix + 1]
                    dx = (lcmiv - gcmi1 + 1) - _div((xs[lcmiv] - xs[gcmi1]) * (gcmix - gcmi1), xs[gcmix] - xs[gcmi1])
                    iv += 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv - 1
                else:
                    lcmiv1 = lcm[iv - 1]
                    dx = _div((xs[gcmix] - xs[lcmiv1]) * (lcmiv - lcmiv1), xs[lcmiv] - xs[lcmiv1]) - (gcmix - lcmiv1 - 1)
                    ix -= 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv
                if ix < 1:
                    ix = 1
                if iv > l_lcm:
                    iv = l_lcm
                if gcm[ix] == lcm[iv]:
                    break

        if d < dip:
            break

        dip_l = 0.0
        for j in range(ig, l_gcm):
            max_t = 1.0
            j_, j1 = gcm[j], gcm[j + 1]
            if j_ - j1 > 1 and xs[j_] != xs[j1]:
                c = (j_ - j1) / (xs[j_] - xs[j1])
                x1 = xs[j1]
                for jj in range(j1, j_ + 1):
                    t = (jj - j1 + 1) - (xs[jj] - x1) * c
                    if t > max_t:
                        max_t = t
            if max_t > dip_l:
                dip_l = max_t

        dip_u = 0.0
        for j in range(ih, l_lcm):
            max_t = 1.0
            j_, j1 = lcm[j], lcm[j + 1]
            if j1 - j_ > 1 and xs[j1] != xs[j_]:
                c = (j1 - j_) / (xs[j1] - xs[j_])
                x0 = xs[j_]
                for jj in range(j_, j1 + 1):
                    t = (xs[jj] - x0) * c - (jj - j_ - 1)
                    if t > max_t:
                        max_t = t
            if max_t > dip_u:
                dip_u = max_t

        dip = max(dip, dip_l, dip_u)
        if low == gcm[ig] and high == lcm[ih]:
            break
        low, high = gcm[ig], lcm[ih]

    return dip / (2 * n)
