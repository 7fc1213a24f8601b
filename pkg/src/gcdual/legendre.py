"""Discrete Legendre-Fenchel transforms on rectilinear grids.

The conjugate ``f*(y) = max_x [x . y - f(x)]`` over grid points x is split
axis by axis:

    h_1(y_1, x_2, ...)   = max_{x_1} [x_1 y_1 - f(x)],
    h_k(y_1..y_k, ...)   = max_{x_k} [x_k y_k + h_{k-1}(...)],

so each pass is a one-dimensional discrete conjugate, computed in linear time
by taking the lower convex hull of the samples and merging its slopes with
the sorted dual points.  The splitting is exact for arbitrary data; only the
one-dimensional hulls discard information, and :attr:`hull_deviation`
reports how much.  Values of ``+inf`` mark points outside the domain.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numba
import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError, EmptyDomainError, ExtrapolationError


@dataclass
class GridFunction:
    """Values on the tensor grid ``axes[0] x ... x axes[d-1]`` (d <= 5)."""

    axes: tuple
    values: np.ndarray
    names: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float).ravel() for a in self.axes)
        self.values = np.asarray(self.values, dtype=float)
        if not 1 <= len(self.axes) <= 5:
            raise ConfigError("grid functions have between 1 and 5 dimensions")
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ConfigError(f"values of shape {self.values.shape} do not match the axes")
        for a in self.axes:
            if len(a) > 1 and not np.all(np.diff(a) > 0):
                raise ConfigError("grid axes must be strictly increasing")
        if np.any(np.isnan(self.values)) or np.any(self.values == -np.inf):
            raise ConfigError("grid values must be finite or +inf")

    @classmethod
    def from_function(cls, fn: Callable, axes, names=None, vectorized: bool = True) -> "GridFunction":
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = fn(pts) if vectorized else np.array([fn(p) for p in pts])
        return cls(axes, np.asarray(vals, dtype=float).reshape(mesh[0].shape), names)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([np.max(np.diff(a)) if len(a) > 1 else 0.0 for a in self.axes])

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def __call__(self, pts) -> np.ndarray:
        """Multilinear interpolation; +inf outside the grid or next to masked nodes."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        axes, vals = self.axes, self.values
        keep = [len(a) > 1 for a in axes]
        if not all(keep):
            # singleton axes only admit their own coordinate
            on = np.all([np.isclose(pts[:, k], axes[k][0]) for k in range(self.ndim) if not keep[k]], axis=0)
            axes = tuple(a for a, k in zip(axes, keep) if k)
            vals = vals.reshape([len(a) for a in axes]) if axes else vals.reshape(())
            pts_red = pts[:, keep]
        else:
            on = np.ones(len(pts), dtype=bool)
            pts_red = pts
        if not axes:
            return np.where(on, float(vals), np.inf)
        finite = np.where(np.isfinite(vals), vals, 0.0)
        bad = RegularGridInterpolator(axes, (~np.isfinite(vals)).astype(float), bounds_error=False, fill_value=1.0)
        interp = RegularGridInterpolator(axes, finite, bounds_error=False, fill_value=np.nan)
        out = interp(pts_red)
        out[(bad(pts_red) > 0) | np.isnan(out) | ~on] = np.inf
        return out

    def grid_tolerance(self) -> float:
        """Sum over axes of max(second difference) / 8, the h^2 f''/8 sampling error."""
        tol = 0.0
        for k in range(self.ndim):
            if self.values.shape[k] < 3:
                continue
            v = np.moveaxis(self.values, k, -1)
            with np.errstate(invalid="ignore"):
                d2 = v[..., 2:] - 2 * v[..., 1:-1] + v[..., :-2]
            d2 = d2[np.isfinite(d2)]
            if d2.size:
                tol += float(np.max(np.abs(d2))) / 8.0
        return tol

    # -- persistence: JSON header plus CSV values --------------------------------
    def save(self, path) -> tuple[Path, Path]:
        path = Path(path)
        header = path.with_suffix(".json")
        data = path.with_suffix(".csv")
        names = list(self.names) if self.names else [f"x{k}" for k in range(self.ndim)]
        header.write_text(json.dumps({
            "axes": [a.tolist() for a in self.axes],
            "names": names,
            "shape": list(self.values.shape),
            "values_file": data.name,
            "meta": self.meta,
        }, indent=2))
        with data.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["value"])
            for p, v in zip(self.points(), self.values.ravel()):
                w.writerow([repr(float(c)) for c in p] + ["inf" if v == np.inf else repr(float(v))])
        return header, data

    @classmethod
    def load(cls, path) -> "GridFunction":
        header = Path(path).with_suffix(".json")
        h = json.loads(header.read_text())
        with (header.parent / h["values_file"]).open() as fh:
            rows = list(csv.reader(fh))[1:]
        vals = np.array([float(r[-1]) for r in rows]).reshape(h["shape"])
        return cls(tuple(h["axes"]), vals, tuple(h["names"]), h.get("meta", {}))


# ---------------------------------------------------------------------------
# one-dimensional linear-time transform


@numba.njit(cache=True)
def _llt_rows(x, f, y):
    """max_i (x_i y_j - f_ij) for every row of ``f`` via lower hulls; rows may hold +inf."""
    rows, n = f.shape
    m = y.shape[0]
    out = np.empty((rows, m))
    hx = np.empty(n)
    hf = np.empty(n)
    for r in range(rows):
        k = 0
        for i in range(n):
            fi = f[r, i]
            if not fi < np.inf:
                continue
            while k >= 2 and (hf[k - 1] - hf[k - 2]) * (x[i] - hx[k - 2]) >= (fi - hf[k - 2]) * (hx[k - 1] - hx[k - 2]):
                k -= 1
            hx[k] = x[i]
            hf[k] = fi
            k += 1
        if k == 0:
            for j in range(m):
                out[r, j] = -np.inf
            continue
        # vertex i of the hull is optimal for slopes between its neighbouring edges
        i = 0
        for j in range(m):
            while i < k - 1 and (hf[i + 1] - hf[i]) <= y[j] * (hx[i + 1] - hx[i]):
                i += 1
            out[r, j] = hx[i] * y[j] - hf[i]
    return out


def _hull_rows(x, f):
    """Lower convex hull of each row evaluated back on ``x``."""
    out = np.full_like(f, np.inf)
    for r in range(f.shape[0]):
        ok = np.isfinite(f[r])
        xs, fs = x[ok], f[r, ok]
        if len(xs) == 0:
            continue
        hull = [0]
        for i in range(1, len(xs)):
            while len(hull) >= 2:
                a, b = hull[-2], hull[-1]
                if (fs[b] - fs[a]) * (xs[i] - xs[a]) >= (fs[i] - fs[a]) * (xs[b] - xs[a]):
                    hull.pop()
                else:
                    break
            hull.append(i)
        out[r, ok] = np.interp(xs, xs[hull], fs[hull])
    return out


def lft1d(x, f, y) -> np.ndarray:
    """Discrete conjugate of samples ``f`` at ``x`` evaluated at sorted ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(y)
    out = np.empty(len(y))
    out[order] = _llt_rows(x, np.atleast_2d(np.asarray(f, dtype=float)), y[order])[0]
    return out


def default_dual_axes(f: GridFunction) -> tuple:
    """Per axis: as many points as the primal axis, spanning the range of difference slopes."""
    axes = []
    for k, a in enumerate(f.axes):
        if len(a) < 2:
            axes.append(np.zeros(1))
            continue
        v = np.moveaxis(f.values, k, -1)
        with np.errstate(invalid="ignore"):
            s = np.diff(v, axis=-1) / np.diff(a)
        s = s[np.isfinite(s)]
        lo, hi = (float(s.min()), float(s.max())) if s.size else (-1.0, 1.0)
        if hi - lo < 1e-12:
            lo, hi = lo - 1.0, hi + 1.0
        axes.append(np.linspace(lo, hi, len(a)))
    return tuple(axes)


def lft(f: GridFunction, dual_axes: Optional[Sequence] = None) -> GridFunction:
    """Discrete Legendre-Fenchel conjugate of ``f`` on the tensor grid ``dual_axes``."""
    if not np.any(f.mask):
        raise EmptyDomainError("grid function is +inf everywhere")
    dual_axes = default_dual_axes(f) if dual_axes is None else tuple(np.atleast_1d(np.asarray(a, dtype=float)) for a in dual_axes)
    if len(dual_axes) != f.ndim:
        raise ConfigError("need one dual axis per dimension")
    h = f.values
    deviation = 0.0
    for k in range(f.ndim):
        cur = np.moveaxis(h if k == 0 else -h, k, -1)
        shape = cur.shape
        rows = np.ascontiguousarray(cur.reshape(-1, shape[-1]))
        rows = np.where(rows == -np.inf, np.inf, rows) if k == 0 else np.nan_to_num(rows, nan=np.inf, posinf=np.inf)
        if k == 0 and shape[-1] > 2:
            hull = _hull_rows(f.axes[k], rows)
            ok = np.isfinite(rows)
            deviation = float(np.max(rows[ok] - hull[ok])) if ok.any() else 0.0
        y = dual_axes[k]
        order = np.argsort(y)
        res = np.empty((rows.shape[0], len(y)))
        res[:, order] = _llt_rows(f.axes[k], rows, y[order])
        h = np.moveaxis(res.reshape(shape[:-1] + (len(y),)), -1, k)
    h = np.where(h == -np.inf, np.inf, h)  # only reachable for the transform of +inf
    out = GridFunction(dual_axes, np.where(np.isnan(h), np.inf, h), f.names)
    out.meta["hull_deviation"] = deviation
    return out


def lft_direct(f: GridFunction, y: np.ndarray) -> np.ndarray:
    """Brute-force max over all grid points; an O(N M) oracle for :func:`lft`."""
    pts = f.points()
    v = f.values.ravel()
    ok = np.isfinite(v)
    y = np.atleast_2d(y)
    out = np.empty(len(y))
    step = max(1, 2_000_000 // max(ok.sum(), 1))
    for i in range(0, len(y), step):
        out[i:i + step] = np.max(y[i:i + step] @ pts[ok].T - v[ok][None, :], axis=1)
    return out


def biconjugate(f: GridFunction, dual_axes: Optional[Sequence] = None) -> GridFunction:
    """f** on the primal grid: the closed convex hull of the sampled data.

    ``meta["tolerance"]`` is the combined sampling error of the two
    transforms, ``f.grid_tolerance() + f*.grid_tolerance()``.
    """
    g = lft(f, dual_axes)
    out = lft(g, f.axes)
    # outside the convex hull of the mask the discrete biconjugate is a finite
    # extrapolation; restore +inf there so the domain is preserved
    out.values = np.where(_hull_mask(f), out.values, np.inf)
    out.meta["hull_deviation"] = g.meta["hull_deviation"]
    out.meta["tolerance"] = f.grid_tolerance() + g.grid_tolerance()
    return out


def _hull_mask(f: GridFunction) -> np.ndarray:
    mask = f.mask
    if mask.all():
        return mask
    from scipy.spatial import Delaunay

    pts = f.points()
    inside = pts[mask.ravel()]
    keep = [k for k in range(f.ndim) if len(f.axes[k]) > 1]
    if len(keep) == 1:
        lo, hi = inside[:, keep[0]].min(), inside[:, keep[0]].max()
        return ((pts[:, keep[0]] >= lo) & (pts[:, keep[0]] <= hi)).reshape(mask.shape)
    try:
        tri = Delaunay(inside[:, keep])
    except Exception:
        return mask
    return (tri.find_simplex(pts[:, keep], tol=1e-12) >= 0).reshape(mask.shape)


# ---------------------------------------------------------------------------
# boundary limits and convergence diagnostics


def boundary_limit(
    f: Union[GridFunction, Callable],
    boundary_pt,
    interior_pt,
    *,
    levels: Optional[int] = None,
    order: int = 2,
) -> float:
    """Limit of f along the segment from ``interior_pt`` to ``boundary_pt``.

    Samples t_k = 1 - 2^-k, stops once the distance to the boundary drops
    below half a grid cell, and applies Richardson extrapolation assuming an
    expansion in powers of (1 - t).  Growth that does not settle raises
    :class:`ExtrapolationError` with ``value = inf``.
    """
    b = np.asarray(boundary_pt, dtype=float).ravel()
    a = np.asarray(interior_pt, dtype=float).ravel()
    length = float(np.linalg.norm(b - a))
    if length == 0:
        raise ConfigError("interior and boundary points coincide")
    if levels is None:
        if isinstance(f, GridFunction):
            h = np.min(f.spacing[f.spacing > 0]) if np.any(f.spacing > 0) else length
            levels = max(3, int(math.floor(math.log2(2 * length / h))))
        else:
            levels = 24
    fn = f if not isinstance(f, GridFunction) else (lambda p: f(p))
    ks = np.arange(1, levels + 1)
    t = 1.0 - 2.0 ** (-ks.astype(float))
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    vals = np.asarray(fn(pts), dtype=float).ravel()
    if not np.all(np.isfinite(vals)):
        finite = np.isfinite(vals)
        if not finite[0]:
            raise ExtrapolationError("f is not finite at the start of the segment")
        first_bad = int(np.argmin(finite))
        vals = vals[:first_bad]
        if len(vals) < 3:
            raise ExtrapolationError("f leaves its domain before the boundary", value=math.inf)
    d = np.diff(vals)
    if len(d) >= 2 and np.all(d[-2:] > 0) and abs(d[-1]) >= 0.75 * abs(d[-2]):
        raise ExtrapolationError("values grow without settling towards the boundary", value=math.inf)
    table = vals.copy()
    for p in range(1, order + 1):
        if len(table) < 2:
            break
        table = (2.0**p * table[1:] - table[:-1]) / (2.0**p - 1.0)
    return float(table[-1])


def uniform_gap(
    sequence: Sequence[GridFunction],
    limit: Union[GridFunction, Callable],
    compact: Sequence[tuple],
) -> np.ndarray:
    """Sup distance to ``limit`` over grid nodes inside the box ``compact`` for each member."""
    gaps = []
    for g in sequence:
        pts = g.points()
        inside = np.all([(pts[:, k] >= lo) & (pts[:, k] <= hi) for k, (lo, hi) in enumerate(compact)], axis=0)
        v = g.values.ravel()[inside]
        ref = np.asarray(limit(pts[inside]), dtype=float).ravel()
        ok = np.isfinite(v) & np.isfinite(ref)
        gaps.append(float(np.max(np.abs(v[ok] - ref[ok]))) if ok.any() else math.inf)
    return np.array(gaps)


def gaps_decreasing(gaps: Sequence[float]) -> bool:
    g = np.asarray(gaps, dtype=float)
    return bool(len(g) >= 2 and np.all(np.diff(g) < 0))


def conjugacy_tolerance(spacing, hessian_diag) -> float:
    """Worst-case gap between the grid sup and the true sup for a smooth convex f.

    With the maximiser within h_k/2 of a grid node along every axis,
    f(x + d) - f(x) - grad . d = d^T H d / 2 <= (sum_k |d_k| sqrt(H_kk))^2 / 2.
    """
    h = np.asarray(spacing, dtype=float)
    s = float(np.sum(0.5 * h * np.sqrt(np.maximum(np.asarray(hessian_diag, dtype=float), 0.0))))
    return 0.5 * s * s
