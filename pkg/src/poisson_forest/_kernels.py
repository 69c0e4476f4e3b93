"""Compiled inner loops. Arrays in, arrays out; no Python objects."""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _axis_cells(c, n, periodic, out):
    # unique neighbouring cell indices along one axis; returns the count
    if periodic:
        if n <= 3:
            for j in range(n):
                out[j] = j
            return n
        out[0] = (c - 1) % n
        out[1] = c
        out[2] = (c + 1) % n
        return 3
    m = 0
    for o in range(-1, 2):
        j = c + o
        if 0 <= j < n:
            out[m] = j
            m += 1
    return m


@numba.njit(cache=True)
def cell_of(x, lo, edge, ncell):
    n, k = x.shape
    flat = np.empty(n, np.int64)
    for i in range(n):
        f = 0
        for a in range(k):
            c = int(np.floor((x[i, a] - lo[a]) / edge[a]))
            if c < 0:
                c = 0
            elif c >= ncell[a]:
                c = ncell[a] - 1
            f = f * ncell[a] + c
        flat[i] = f
    return flat


@numba.njit(cache=True)
def first_hits(qx, qr, px, pr, cell_start, cell_items, lo, edge, ncell, ext, periodic):
    """For each query (qx[j], qr[j]) the row of the earliest sample point
    (in total order) with r > qr[j] and |x - qx[j]| <= 1; -1 if none."""
    nq, k = qx.shape
    out = np.full(nq, -1, np.int64)
    axis = np.empty((k, 3), np.int64)
    counts = np.empty(k, np.int64)
    maxcells = 1
    for a in range(k):
        maxcells *= 3
    ptr = np.empty(maxcells, np.int64)
    end = np.empty(maxcells, np.int64)
    digit = np.empty(k, np.int64)
    for j in range(nq):
        ncand = 1
        for a in range(k):
            c = int(np.floor((qx[j, a] - lo[a]) / edge[a]))
            if c < 0:
                c = 0
            elif c >= ncell[a]:
                c = ncell[a] - 1
            counts[a] = _axis_cells(c, ncell[a], periodic, axis[a])
            ncand *= counts[a]
        t = qr[j]
        for m in range(ncand):
            rem = m
            for a in range(k - 1, -1, -1):
                digit[a] = rem % counts[a]
                rem //= counts[a]
            f = 0
            for a in range(k):
                f = f * ncell[a] + axis[a, digit[a]]
            s = cell_start[f]
            e = cell_start[f + 1]
            # first item strictly later than t (bucket rows are time sorted)
            l, h = s, e
            while l < h:
                mid = (l + h) // 2
                if pr[cell_items[mid]] > t:
                    h = mid
                else:
                    l = mid + 1
            ptr[m] = l
            end[m] = e
        # time-ordered frontier merge across candidate cells
        while True:
            best = -1
            bestrow = 0
            for m in range(ncand):
                if ptr[m] < end[m]:
                    row = cell_items[ptr[m]]
                    if best < 0 or row < bestrow:
                        best = m
                        bestrow = row
            if best < 0:
                break
            d2 = 0.0
            for a in range(k):
                dx = px[bestrow, a] - qx[j, a]
                if periodic:
                    dx -= ext[a] * np.round(dx / ext[a])
                d2 += dx * dx
            if d2 <= 1.0:
                out[j] = bestrow
                break
            ptr[best] += 1
    return out


@numba.njit(cache=True)
def root_rows(mother):
    # mothers always sit at a larger row (later in time), so one reverse pass suffices
    n = mother.shape[0]
    root = np.empty(n, np.int64)
    for i in range(n - 1, -1, -1):
        m = mother[i]
        root[i] = i if m < 0 else root[m]
    return root


@numba.njit(cache=True)
def carriers_at(mother, pr, t):
    """Row whose position the walk born at row i occupies at time t
    (-1 for rows born after t)."""
    n = mother.shape[0]
    out = np.full(n, -1, np.int64)
    for i in range(n - 1, -1, -1):
        if pr[i] > t:
            continue
        m = mother[i]
        if m < 0 or pr[m] > t:
            out[i] = i
        else:
            out[i] = out[m]
    return out


@numba.njit(cache=True)
def depth_rows(mother):
    # number of resolved ancestors of every row
    n = mother.shape[0]
    depth = np.zeros(n, np.int64)
    for i in range(n - 1, -1, -1):
        m = mother[i]
        if m >= 0:
            depth[i] = depth[m] + 1
    return depth
