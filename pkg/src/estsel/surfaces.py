"""Surface smoothing, contour bands, and estimand selection.

The grid evaluation produces scattered values on a coarse (c, d) lattice.
This module turns them into decision surfaces: p-value surfaces are
interpolated with bicubic splines; the bootstrap-SE surface is smoothed
by ordinary kriging with a Gaussian variogram (with an inverse-distance
fallback when the variogram fit degenerates); surfaces are cut into
contour bands; and the final selection intersects mismatch bands with
statistical-bias bands, picking the minimum-SE point of each region.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import least_squares
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DataError
from .estimands import EstimandSpec

logger = logging.getLogger(__name__)

#: contour cut points used throughout unless the caller overrides them
_DEFAULT_LEVELS = (
    0.0, 0.025, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.50, 0.75, 1.0,
)

#: the "sweet spot" band: small estimand mismatch that is still testably
#: distinguishable from none at all
_RECOMMENDED_BAND = (0.05, 0.10)


def default_levels() -> list[float]:
    """Default contour cut points for both p-value surfaces."""
    return list(_DEFAULT_LEVELS)


@dataclass(frozen=True)
class Surface:
    """A scalar field sampled on a regular (c, d) lattice.

    ``values[i, j]`` corresponds to ``(c[i], d[j])``.
    """

    c: np.ndarray
    d: np.ndarray
    values: np.ndarray
    kind: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        d = np.asarray(self.d, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (c.size, d.size):
            raise DataError(
                f"surface shape {v.shape} does not match axes ({c.size}, {d.size})"
            )
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "values", v)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["c", "d", "value"])
            for i, ci in enumerate(self.c):
                for j, dj in enumerate(self.d):
                    writer.writerow(
                        [repr(float(ci)), repr(float(dj)), repr(float(self.values[i, j]))]
                    )


def _lattice_from(grid_eval, which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = np.asarray(grid_eval.c_values, dtype=np.float64)
    d = np.asarray(grid_eval.d_values, dtype=np.float64)
    return c, d, grid_eval.lattice(which)


def smooth_pvalues(grid_eval, which: str = "mismatch", resolution: int = 500) -> Surface:
    """Bicubic-spline interpolation of a p-value lattice onto a fine grid.

    ``which`` is ``"mismatch"`` or ``"statbias"``.  The spline
    interpolates exactly (no smoothing penalty) and the result is clamped
    back into [0, 1], since cubic interpolation can overshoot between
    lattice points.
    """
    if which not in ("mismatch", "statbias"):
        raise DataError(f"unknown p-value surface {which!r}")
    c, d, P = _lattice_from(grid_eval, f"p_{which}")
    if c.size < 4 or d.size < 4:
        raise DataError(
            f"bicubic smoothing needs at least a 4x4 lattice, got {c.size}x{d.size}"
        )
    if not np.isfinite(P).all():
        raise DataError(f"non-finite values in the {which} p-value lattice")
    if resolution < 2:
        raise DataError(f"resolution must be >= 2, got {resolution}")
    spline = RectBivariateSpline(c, d, P, kx=3, ky=3, s=0)
    cf = np.linspace(c[0], c[-1], resolution)
    df = np.linspace(d[0], d[-1], resolution)
    vals = np.clip(spline(cf, df), 0.0, 1.0)
    return Surface(
        c=cf, d=df, values=vals, kind=f"p_{which}",
        metadata={"interpolator": "bicubic-spline", "source_lattice": (c.size, d.size)},
    )


def raw_surface(grid_eval, which: str = "mismatch") -> Surface:
    """The unsmoothed p-value lattice as a Surface (debugging aid).

    Contour bands built from this are step-like and depend on lattice
    resolution; the selection pipeline always uses the smoothed surface.
    """
    if which not in ("mismatch", "statbias"):
        raise DataError(f"unknown p-value surface {which!r}")
    c, d, P = _lattice_from(grid_eval, f"p_{which}")
    if not np.isfinite(P).all():
        raise DataError(f"non-finite values in the {which} p-value lattice")
    return Surface(
        c=c, d=d, values=P.copy(), kind=f"p_{which}",
        metadata={"interpolator": "none"},
    )


def interpolate_lattice(grid_eval, field: str = "tau", resolution: int = 500) -> Surface:
    """Bicubic interpolation of an arbitrary grid column (no clamping).

    Used for fields that are not probabilities, e.g. the effect-estimate
    lattice when reporting the estimate at a selected point.
    """
    c, d, V = _lattice_from(grid_eval, field)
    if c.size < 4 or d.size < 4:
        raise DataError(
            f"bicubic interpolation needs at least a 4x4 lattice, got {c.size}x{d.size}"
        )
    if not np.isfinite(V).all():
        raise DataError(f"non-finite values in the {field} lattice")
    if resolution < 2:
        raise DataError(f"resolution must be >= 2, got {resolution}")
    spline = RectBivariateSpline(c, d, V, kx=3, ky=3, s=0)
    cf = np.linspace(c[0], c[-1], resolution)
    df = np.linspace(d[0], d[-1], resolution)
    return Surface(
        c=cf, d=df, values=spline(cf, df), kind=field,
        metadata={"interpolator": "bicubic-spline", "source_lattice": (c.size, d.size)},
    )


def _gaussian_variogram(h: np.ndarray, nugget: float, psill: float, rng: float):
    return nugget + psill * (1.0 - np.exp(-((h / rng) ** 2)))


def _empirical_variogram(pts: np.ndarray, z: np.ndarray, n_bins: int):
    """Binned semivariances up to half the maximum pairwise distance.

    Returns (mean distance, mean semivariance, pair count) per non-empty
    bin; semivariance gamma(h) = mean of (z_i - z_j)^2 / 2 within the bin.
    """
    h = pdist(pts)
    g = 0.5 * pdist(z[:, None]) ** 2
    hmax = h.max() / 2.0
    keep = h <= hmax
    h, g = h[keep], g[keep]
    edges = np.linspace(0.0, hmax, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, h, side="right") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    nonzero = counts > 0
    mean_h = np.bincount(idx, weights=h, minlength=n_bins)[nonzero] / counts[nonzero]
    mean_g = np.bincount(idx, weights=g, minlength=n_bins)[nonzero] / counts[nonzero]
    return mean_h, mean_g, counts[nonzero]


def _fit_variogram(mean_h, mean_g, counts, fix_nugget: bool):
    """Weighted least-squares Gaussian variogram fit.

    Weights are the bin pair counts.  Returns (nugget, partial sill,
    range) or None when the fit is degenerate.
    """
    gmax = float(mean_g.max())
    hmax = float(mean_h.max())
    if gmax <= 0.0 or mean_h.size < 3:
        return None
    sqrt_w = np.sqrt(counts.astype(np.float64))
    sill_floor = 1e-12 * gmax
    range_floor = 1e-9 * hmax

    if fix_nugget:
        def resid(p):
            return sqrt_w * (_gaussian_variogram(mean_h, 0.0, p[0], p[1]) - mean_g)

        x0 = [gmax, hmax / 2.0]
        bounds = ([sill_floor, range_floor], [np.inf, np.inf])
    else:
        def resid(p):
            return sqrt_w * (_gaussian_variogram(mean_h, p[0], p[1], p[2]) - mean_g)

        nug0 = max(float(mean_g[0]) / 2.0, sill_floor)
        x0 = [nug0, max(gmax - nug0, sill_floor * 10), hmax / 2.0]
        bounds = ([0.0, sill_floor, range_floor], [np.inf, np.inf, np.inf])

    try:
        res = least_squares(resid, x0, bounds=bounds, max_nfev=2000)
    except Exception:  # noqa: BLE001 -- any optimizer failure triggers the fallback
        return None
    if not res.success or not np.isfinite(res.x).all():
        return None
    if fix_nugget:
        nugget, psill, rng = 0.0, res.x[0], res.x[1]
    else:
        nugget, psill, rng = res.x
    # a sill or range pinned to its floor means the model carries no signal
    if psill <= sill_floor * 1.01 or rng <= range_floor * 1.01:
        return None
    return float(nugget), float(psill), float(rng)


def _idw_surface(pts, z, cf, df) -> np.ndarray:
    """Inverse-squared-distance interpolation (exact at observed points)."""
    nodes = np.array([[ci, dj] for ci in cf for dj in df])
    out = np.empty(nodes.shape[0])
    chunk = 20000
    for lo in range(0, nodes.shape[0], chunk):
        d2 = cdist(nodes[lo : lo + chunk], pts, "sqeuclidean")
        hit = d2 <= 1e-24
        with np.errstate(divide="ignore", invalid="ignore"):
            w = 1.0 / d2
            vals = (w @ z) / w.sum(axis=1)
        rows, cols = np.nonzero(hit)
        vals[rows] = z[cols]
        out[lo : lo + chunk] = vals
    return out.reshape(cf.size, df.size)


def krige_se(
    grid_eval, resolution: int = 500, n_bins: int = 15, variogram=None
) -> Surface:
    """Ordinary kriging of the bootstrap-SE lattice with a Gaussian variogram.

    The empirical semivariogram uses ``n_bins`` equal-width distance bins
    up to half the maximum pairwise distance, fit by least squares
    weighted by bin pair counts.  If the full (nugget) fit degenerates the
    fit is retried with the nugget pinned at zero; if that also fails the
    surface falls back to inverse-distance weighting with a logged
    warning.  Kriging weights at every prediction node sum to 1, so the
    surface is exact on constant fields regardless of the variogram.

    ``variogram`` may pin the model as (nugget, partial sill, range),
    skipping the empirical fit entirely.
    """
    c, d, Z = _lattice_from(grid_eval, "se_boot")
    if resolution < 2:
        raise DataError(f"resolution must be >= 2, got {resolution}")
    pts_all = np.array([[ci, dj] for ci in c for dj in d])
    z_all = Z.ravel()
    finite = np.isfinite(z_all)
    if finite.sum() < 5:
        raise DataError(
            f"kriging needs at least 5 finite SE values, got {int(finite.sum())}"
        )
    pts, z = pts_all[finite], z_all[finite]
    cf = np.linspace(c[0], c[-1], resolution)
    df = np.linspace(d[0], d[-1], resolution)

    if variogram is not None:
        nugget, psill, vrange = (float(v) for v in variogram)
        if psill <= 0 or vrange <= 0 or nugget < 0:
            raise DataError(
                "fixed variogram needs nugget >= 0 and positive sill and range"
            )
        params = (nugget, psill, vrange)
    else:
        mean_h, mean_g, counts = _empirical_variogram(pts, z, n_bins)
        params = _fit_variogram(mean_h, mean_g, counts, fix_nugget=False)
        if params is None:
            params = _fit_variogram(mean_h, mean_g, counts, fix_nugget=True)
            if params is not None:
                logger.info("variogram nugget fit degenerate; refit with zero nugget")
    if params is None:
        logger.warning(
            "Gaussian variogram fit failed; falling back to inverse-distance weighting"
        )
        vals = _idw_surface(pts, z, cf, df)
        return Surface(
            c=cf, d=df, values=vals, kind="se_boot",
            metadata={"interpolator": "idw", "variogram": None},
        )
    nugget, psill, vrange = params

    m = pts.shape[0]
    A = np.ones((m + 1, m + 1))
    A[:m, :m] = _gaussian_variogram(squareform(pdist(pts)), nugget, psill, vrange)
    # exact interpolation: a node at zero distance must krige to itself
    A[np.arange(m), np.arange(m)] = 0.0
    A[m, m] = 0.0

    rhs = np.column_stack([np.append(z, 0.0), np.append(np.ones(m), 0.0)])
    try:
        import scipy.linalg

        sol = scipy.linalg.solve(A, rhs)
        if not np.isfinite(sol).all():
            raise np.linalg.LinAlgError("non-finite kriging solution")
        resid = np.abs(A @ sol - rhs).max()
        if resid > 1e-6 * max(1.0, np.abs(rhs).max()):
            raise np.linalg.LinAlgError(f"kriging solve residual {resid:.3g}")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    xi, psi = sol[:, 0], sol[:, 1]

    # prediction via the two precomputed solves: value = b'xi, weight sum =
    # b'psi, where b = [gamma(dist to nodes); 1]
    nodes = np.array([[ci, dj] for ci in cf for dj in df])
    preds = np.empty(nodes.shape[0])
    wsums = np.empty(nodes.shape[0])
    chunk = 20000
    for lo in range(0, nodes.shape[0], chunk):
        h = cdist(nodes[lo : lo + chunk], pts)
        gb = _gaussian_variogram(h, nugget, psill, vrange)
        # a prediction point that coincides with a node must see gamma = 0
        # there (matching the zero matrix diagonal), so the surface
        # interpolates the observations exactly even with a nugget
        gb[h <= 1e-12] = 0.0
        preds[lo : lo + chunk] = gb @ xi[:m] + xi[m]
        wsums[lo : lo + chunk] = gb @ psi[:m] + psi[m]
    max_dev = float(np.abs(wsums - 1.0).max())
    if max_dev > 1e-8:
        logger.warning("kriging weight sums deviate from 1 by up to %.3g", max_dev)
    return Surface(
        c=cf, d=df, values=preds.reshape(cf.size, df.size), kind="se_boot",
        metadata={
            "interpolator": "ordinary-kriging",
            "variogram": {"nugget": nugget, "psill": psill, "range": vrange},
            "variogram_source": "fixed" if variogram is not None else "fitted",
            "max_weight_sum_dev": max_dev,
        },
    )


# ---------------------------------------------------------------------------
# marching squares


_SEGMENT_TABLE: dict[int, list[tuple[int, int]]] = {
    1: [(0, 3)], 2: [(0, 1)], 3: [(1, 3)], 4: [(1, 2)], 6: [(0, 2)],
    7: [(3, 2)], 8: [(3, 2)], 9: [(0, 2)], 11: [(1, 2)], 12: [(1, 3)],
    13: [(0, 1)], 14: [(0, 3)],
}


def _iso_contours(
    x: np.ndarray, y: np.ndarray, V: np.ndarray, level: float
) -> list[np.ndarray]:
    """Marching-squares iso-lines of V (indexed [x, y]) at ``level``.

    Cell corners strictly above the level count as inside; saddle cells
    are disambiguated by the cell-center mean.  Returns polylines as
    (k, 2) arrays of (x, y) vertices, open chains first.
    """
    inside = V > level
    A = inside[:-1, :-1]
    B = inside[1:, :-1]
    C = inside[1:, 1:]
    D = inside[:-1, 1:]
    case = (
        A.astype(np.int8) + 2 * B.astype(np.int8) + 4 * C.astype(np.int8)
        + 8 * D.astype(np.int8)
    )
    cells = np.argwhere((case > 0) & (case < 15))

    def edge_point(i: int, j: int, edge: int) -> tuple[float, float]:
        if edge == 0:  # (i, j) -- (i+1, j)
            v0, v1 = V[i, j], V[i + 1, j]
            t = (level - v0) / (v1 - v0)
            return (x[i] + t * (x[i + 1] - x[i]), y[j])
        if edge == 1:  # (i+1, j) -- (i+1, j+1)
            v0, v1 = V[i + 1, j], V[i + 1, j + 1]
            t = (level - v0) / (v1 - v0)
            return (x[i + 1], y[j] + t * (y[j + 1] - y[j]))
        if edge == 2:  # (i, j+1) -- (i+1, j+1)
            v0, v1 = V[i, j + 1], V[i + 1, j + 1]
            t = (level - v0) / (v1 - v0)
            return (x[i] + t * (x[i + 1] - x[i]), y[j + 1])
        v0, v1 = V[i, j], V[i, j + 1]  # edge 3: (i, j) -- (i, j+1)
        t = (level - v0) / (v1 - v0)
        return (x[i], y[j] + t * (y[j + 1] - y[j]))

    segments: list[tuple[tuple[float, float], tuple[float, float]]] = []
    for i, j in cells:
        k = int(case[i, j])
        if k in (5, 10):
            center = 0.25 * (V[i, j] + V[i + 1, j] + V[i, j + 1] + V[i + 1, j + 1])
            if k == 5:
                pairs = [(3, 2), (0, 1)] if center > level else [(0, 3), (1, 2)]
            else:
                pairs = [(0, 3), (1, 2)] if center > level else [(3, 2), (0, 1)]
        else:
            pairs = _SEGMENT_TABLE[k]
        for e0, e1 in pairs:
            segments.append((edge_point(i, j, e0), edge_point(i, j, e1)))

    def key(p: tuple[float, float]) -> tuple[float, float]:
        return (round(p[0], 10), round(p[1], 10))

    # the level passing exactly through a grid node collapses a segment
    # to a point; those carry no geometry and would fragment the chains
    segments = [(p, q) for p, q in segments if key(p) != key(q)]
    if not segments:
        return []

    touching: dict[tuple[float, float], list[int]] = defaultdict(list)
    for s, (p, q) in enumerate(segments):
        touching[key(p)].append(s)
        touching[key(q)].append(s)

    used = np.zeros(len(segments), dtype=bool)
    lines: list[np.ndarray] = []

    def walk(seg: int, start: tuple[float, float]) -> np.ndarray:
        line = [start]
        point = start
        current = seg
        while True:
            used[current] = True
            p, q = segments[current]
            point = q if key(p) == key(point) else p
            line.append(point)
            nxt = [t for t in touching[key(point)] if not used[t]]
            if not nxt:
                return np.array(line)
            current = nxt[0]

    # open chains start at points touched by exactly one segment
    for point, segs in sorted(touching.items()):
        if len(segs) == 1 and not used[segs[0]]:
            lines.append(walk(segs[0], point))
    # what remains are closed loops
    for s, (p, _q) in enumerate(segments):
        if not used[s]:
            lines.append(walk(s, p))
    return lines


@dataclass(frozen=True)
class ContourBand:
    """One (lower, upper] slice of a surface; the first band includes 0.

    ``mask`` marks lattice nodes whose value falls in the band; masks of
    the bands returned by :func:`extract_bands` partition the lattice.
    ``polylines`` trace the band's lower iso-level (the upper level for
    the first band), for rendering.
    """

    lower: float
    upper: float
    mask: np.ndarray
    polylines: tuple[np.ndarray, ...]

    @property
    def empty(self) -> bool:
        return not bool(self.mask.any())


def extract_bands(surface: Surface, levels=None) -> list[ContourBand]:
    """Cut a surface into contour bands at the given levels.

    ``levels`` must be strictly ascending within [0, 1]; implicit 0 and 1
    endpoints are added when absent, so ``levels=[0.5]`` yields the two
    bands [0, 0.5] and (0.5, 1].
    """
    if levels is None:
        levels = default_levels()
    lv = np.asarray(list(levels), dtype=np.float64)
    if lv.ndim != 1 or lv.size == 0:
        raise DataError("levels must be a non-empty 1-D sequence")
    if (np.diff(lv) <= 0).any():
        raise DataError(f"levels must be strictly ascending, got {lv.tolist()}")
    if lv[0] < 0.0 or lv[-1] > 1.0:
        raise DataError(f"levels must lie within [0, 1], got {lv.tolist()}")
    cuts = lv
    if cuts[0] > 0.0:
        cuts = np.concatenate([[0.0], cuts])
    if cuts[-1] < 1.0:
        cuts = np.concatenate([cuts, [1.0]])

    V = surface.values
    if V.min() < 0.0 or V.max() > 1.0:
        raise DataError(
            f"band extraction expects values in [0, 1], got range "
            f"[{V.min():g}, {V.max():g}]"
        )
    band_idx = np.clip(np.searchsorted(cuts, V, side="left") - 1, 0, cuts.size - 2)
    bands = []
    for k in range(cuts.size - 1):
        mask = band_idx == k
        iso_level = cuts[k] if k > 0 else cuts[1]
        polylines = (
            tuple(_iso_contours(surface.c, surface.d, V, float(iso_level)))
            if mask.any()
            else ()
        )
        bands.append(
            ContourBand(
                lower=float(cuts[k]), upper=float(cuts[k + 1]),
                mask=mask, polylines=polylines,
            )
        )
    return bands


# ---------------------------------------------------------------------------
# selection


@dataclass(frozen=True)
class SelectionEntry:
    """The minimum-SE estimand within one mismatch band."""

    mismatch_lower: float
    mismatch_upper: float
    spec: EstimandSpec
    se: float
    statbias_lower: float
    statbias_upper: float
    tau: float | None
    recommended: bool

    def to_json_dict(self) -> dict:
        return {
            "mismatch_band": [self.mismatch_lower, self.mismatch_upper],
            "statbias_band": [self.statbias_lower, self.statbias_upper],
            "c": self.spec.c,
            "d": self.spec.d,
            "alias": self.spec.alias,
            "se": self.se,
            "tau": self.tau,
            "recommended": self.recommended,
        }


@dataclass(frozen=True)
class SelectionResult:
    """Selected estimands, one per non-empty mismatch band, ascending."""

    entries: tuple[SelectionEntry, ...]

    @property
    def recommended(self) -> SelectionEntry | None:
        for entry in self.entries:
            if entry.recommended:
                return entry
        return None

    def to_json_dict(self) -> dict:
        return {"entries": [e.to_json_dict() for e in self.entries]}

    def to_table(self) -> str:
        """Render the selection as an aligned, human-readable text table."""
        header = ("mismatch band", "c", "d", "alias", "statbias band", "se", "tau", "")
        rows = [header]
        for e in self.entries:
            rows.append(
                (
                    f"({e.mismatch_lower:g}, {e.mismatch_upper:g}]",
                    f"{e.spec.c:.3f}",
                    f"{e.spec.d:.3f}",
                    e.spec.alias or "",
                    f"({e.statbias_lower:g}, {e.statbias_upper:g}]",
                    f"{e.se:.4g}",
                    "" if e.tau is None else f"{e.tau:.4g}",
                    "<- recommended" if e.recommended else "",
                )
            )
        widths = [max(len(r[k]) for r in rows) for k in range(len(header))]
        lines = [
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
            for row in rows
        ]
        lines.insert(1, "  ".join("-" * w for w in widths).rstrip())
        return "\n".join(lines)


def _check_same_axes(a: Surface, b: Surface, what: str) -> None:
    if not (np.array_equal(a.c, b.c) and np.array_equal(a.d, b.d)):
        raise DataError(f"{what} surface is on a different lattice")


def select_estimands(
    mismatch: Surface,
    statbias: Surface,
    se: Surface,
    mismatch_levels=None,
    statbias_levels=None,
    tau: Surface | None = None,
) -> SelectionResult:
    """Pick one estimand per mismatch band by intersecting contour bands.

    For each non-empty mismatch band, in ascending order: restrict to the
    intersection with the *highest* statistical-bias band that meets it
    (prefer least-biased candidates), then take the point minimizing the
    kriged SE there.  Ties break toward the origin (smallest c^2 + d^2),
    then lexicographically by (c, d).  The entry whose mismatch band is
    (0.05, 0.10] is flagged as the recommended default.
    """
    for other, name in ((statbias, "statbias"), (se, "SE")):
        _check_same_axes(mismatch, other, name)
    if tau is not None:
        _check_same_axes(mismatch, tau, "tau")
    if mismatch_levels is None:
        mismatch_levels = default_levels()
    if statbias_levels is None:
        statbias_levels = mismatch_levels
    mbands = extract_bands(mismatch, mismatch_levels)
    sbands = extract_bands(statbias, statbias_levels)

    CC = mismatch.c[:, None]
    DD = mismatch.d[None, :]
    dist2 = CC**2 + DD**2

    entries = []
    for mband in mbands:
        if mband.empty:
            continue
        for sband in reversed(sbands):
            region = mband.mask & sband.mask
            if not region.any():
                continue
            se_vals = np.where(region, se.values, np.inf)
            best = se_vals.min()
            if not np.isfinite(best):
                break  # SE undefined on the whole region; nothing to select
            ties = se_vals == best
            tie_d2 = np.where(ties, dist2, np.inf)
            best_d2 = tie_d2.min()
            ii, jj = np.nonzero(tie_d2 == best_d2)
            k = np.lexsort((jj, ii))[0]  # lexicographic (c, d)
            i, j = int(ii[k]), int(jj[k])
            spec = EstimandSpec(float(mismatch.c[i]), float(mismatch.d[j]))
            entries.append(
                SelectionEntry(
                    mismatch_lower=mband.lower,
                    mismatch_upper=mband.upper,
                    spec=spec,
                    se=float(se.values[i, j]),
                    statbias_lower=sband.lower,
                    statbias_upper=sband.upper,
                    tau=float(tau.values[i, j]) if tau is not None else None,
                    recommended=(
                        abs(mband.lower - _RECOMMENDED_BAND[0]) < 1e-12
                        and abs(mband.upper - _RECOMMENDED_BAND[1]) < 1e-12
                    ),
                )
            )
            break
    return SelectionResult(entries=tuple(entries))
