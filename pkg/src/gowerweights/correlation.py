"""Correlation between the weighted Gower dissimilarity and each variable's
dissimilarity, under four estimator modes.

``wPG``  Pearson for every variable.
``wPbG`` Pearson, but Brogden's biserial estimator for 0/1 variables.
``wSG``  Spearman for every variable.
``wSbG`` Spearman, but rank biserial for 0/1 variables.

Undefined estimates (empty group, zero spread) are returned as NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from .gower import PerVariableDissimilarity, _check_weights, weighted_average

MODES = ("wPG", "wPbG", "wSG", "wSbG")
H_RULES = ("mean", "proportion")

PEARSON = "pearson"
SPEARMAN = "spearman"
BROGDEN = "brogden"
RANK_BISERIAL = "rank-biserial"


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of the positions they span."""
    x = np.asarray(x, dtype=float)
    n = x.size
    order = np.argsort(x)
    xs = x[order]
    bounds = np.flatnonzero(np.concatenate(([True], xs[1:] != xs[:-1], [True])))
    ranks = np.empty(n)
    ranks[order] = np.repeat((bounds[:-1] + bounds[1:] + 1) / 2.0, np.diff(bounds))
    return ranks


def _select(x, y, mask):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        x, y = x[mask], y[mask]
    return x, y


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    if x.size < 2:
        return math.nan
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = np.dot(xc, xc)
    syy = np.dot(yc, yc)
    if sxx == 0 or syy == 0:
        return math.nan
    r = np.dot(xc, yc) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def pearson(x, y, mask=None) -> float:
    """Sample product-moment correlation over the masked-in pairs."""
    return _pearson(*_select(x, y, mask))


def spearman(x, y, mask=None) -> float:
    """Pearson correlation of average ranks."""
    x, y = _select(x, y, mask)
    if x.size < 2:
        return math.nan
    return _pearson(average_ranks(x), average_ranks(y))


def _groups(dwg, dt, mask):
    x, y = _select(dwg, dt, mask)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("dichotomous argument must hold only 0/1 values")
    ones = y == 1.0
    return x, ones


def point_biserial(dwg, dt, mask=None) -> float:
    """Point biserial correlation of a continuous ``dwg`` with a 0/1 ``dt``."""
    x, ones = _groups(dwg, dt, mask)
    m = x.size
    n1 = int(ones.sum())
    if n1 == 0 or n1 == m or m < 2:
        return math.nan
    s = x.std(ddof=1)
    if s == 0:
        return math.nan
    frac = n1 / m
    return float((x[ones].mean() - x[~ones].mean()) / s * math.sqrt(m / (m - 1) * frac * (1 - frac)))


def brogden_h(m: int, mean0: float, mean1: float, frac_ones: float, h_rule: str = "mean") -> int:
    """Split point of the sorted sample, clamped into ``[1, m - 1]``.

    ``mean`` uses the larger group mean of the continuous variable, the
    classical ``proportion`` rule uses the share of ones.
    """
    if h_rule == "mean":
        base = max(mean0, mean1)
    elif h_rule == "proportion":
        base = frac_ones
    else:
        raise ValueError(f"h_rule must be one of {H_RULES}")
    return min(max(int(math.floor(m * base)), 1), m - 1)


def brogden_biserial(dwg, dt, mask=None, h_rule: str = "mean", clip: bool = False) -> float:
    """Brogden's modified biserial estimator ``(mean1 - mean0) / D_h``.

    ``D_h`` contrasts the mean of the ``h`` largest values with the mean of
    the rest. Under the ``mean`` rule the estimate can exceed 1 in magnitude;
    ``clip`` bounds it to ``[-1, 1]``.
    """
    x, ones = _groups(dwg, dt, mask)
    m = x.size
    n1 = int(ones.sum())
    if n1 == 0 or n1 == m or m < 2:
        return math.nan
    mean1 = x[ones].mean()
    mean0 = x[~ones].mean()
    h = brogden_h(m, mean0, mean1, n1 / m, h_rule)
    xs = np.sort(x)[::-1]
    dh = xs[:h].mean() - xs[h:].mean()
    if dh == 0:
        return math.nan
    r = float((mean1 - mean0) / dh)
    return min(1.0, max(-1.0, r)) if clip else r


def rank_biserial(dwg, dt, mask=None) -> float:
    """``2 (mean rank of ones - mean rank of zeros) / m`` with average ranks."""
    x, ones = _groups(dwg, dt, mask)
    m = x.size
    n1 = int(ones.sum())
    if n1 == 0 or n1 == m:
        return math.nan
    ranks = average_ranks(x)
    return float(2.0 * (ranks[ones].mean() - ranks[~ones].mean()) / m)


def is_dichotomous(values) -> bool:
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    return bool(np.isin(values, (0.0, 1.0)).all())


def estimator_for(mode: str, dichotomous: bool) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "wPG" or (mode == "wPbG" and not dichotomous):
        return PEARSON
    if mode == "wSG" or (mode == "wSbG" and not dichotomous):
        return SPEARMAN
    return BROGDEN if mode == "wPbG" else RANK_BISERIAL


@dataclass
class CorrelationProfile:
    r: np.ndarray
    estimators: tuple[str, ...]
    dichotomous: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.r)


# --------------------------------------------------------------------------
# Profile evaluation
# --------------------------------------------------------------------------

class _Variable:
    __slots__ = ("t", "estimator", "group", "yc", "yss", "ones", "n1", "off", "count")

    def __init__(self):
        self.yc = self.yss = self.ones = self.off = None
        self.n1 = self.count = 0


class ProfileEvaluator:
    """Repeated correlation profiles of one ``pvd`` under varying weights.

    Everything that depends only on the per-variable dissimilarities (masks,
    centred columns, ranks, group memberships) is computed once. Pearson
    entries work on the full pair vector: the centred variable column is
    zero outside its mask, and the masked spread of d_wG is recovered from
    the full spread minus the few excluded pairs.
    """

    def __init__(self, pvd: PerVariableDissimilarity, mode: str, h_rule: str = "mean",
                 clip: bool = False):
        if h_rule not in H_RULES:
            raise ValueError(f"h_rule must be one of {H_RULES}")
        self.pvd = pvd
        self.mode = mode
        self.h_rule = h_rule
        self.clip = clip
        self.dichotomous = np.array([is_dichotomous(pvd.d[pvd.delta[:, t], t]) for t in range(pvd.p)])
        self.estimators = tuple(estimator_for(mode, bool(dich)) for dich in self.dichotomous)

        # rank-based and biserial variables sharing a delta mask share the
        # selected d_wG values and their ranks
        self._groups: list[np.ndarray | None] = []
        keys: dict[bytes, int] = {}
        self._vars: list[_Variable] = []
        for t in range(pvd.p):
            mask = pvd.delta[:, t]
            v = _Variable()
            v.t = t
            v.estimator = self.estimators[t]
            v.count = int(mask.sum())
            y = pvd.d[mask, t]
            if v.estimator == PEARSON:
                v.off = np.flatnonzero(~mask)
                yc = np.zeros(pvd.m)
                if y.size:
                    yc[mask] = y - y.mean()
                v.yc = yc
                v.yss = math.sqrt(np.dot(yc, yc))
                v.group = -1
                self._vars.append(v)
                continue
            key = np.packbits(mask).tobytes()
            if key not in keys:
                keys[key] = len(self._groups)
                self._groups.append(None if mask.all() else np.flatnonzero(mask))
            v.group = keys[key]
            if v.estimator == SPEARMAN:
                y = average_ranks(y) if y.size else y
                v.yc = y - y.mean() if y.size else y
                v.yss = math.sqrt(np.dot(v.yc, v.yc))
            else:
                v.ones = (y == 1.0).astype(float)
                v.n1 = int(v.ones.sum())
            self._vars.append(v)
        self._needs_ranks = {v.group for v in self._vars if v.estimator in (SPEARMAN, RANK_BISERIAL)}
        self._complete = pvd.complete
        # denominators only differ from sum(w) on rows with a missing contribution
        self._partial = np.flatnonzero(~pvd.delta.all(axis=1))
        self._partial_delta = pvd.delta[self._partial].astype(float)

    def dwg(self, w) -> np.ndarray:
        if self._complete:
            return weighted_average(self.pvd.d, self.pvd.delta, w, True)
        w = _check_weights(w, self.pvd.p)
        num = self.pvd.d @ w
        den = np.full(num.shape, w.sum())
        den[self._partial] = self._partial_delta @ w
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.minimum(num / den, 1.0)
        out[den == 0] = math.nan
        return out

    def profile_values(self, w) -> np.ndarray:
        dwg = self.dwg(w)
        if np.isnan(dwg).any():
            return self._slow(dwg)
        r = np.full(self.pvd.p, math.nan)
        pearsons = [v for v in self._vars if v.group == -1]
        if pearsons:
            xc_all = dwg - dwg.mean()
            tss = np.dot(xc_all, xc_all)
            for v in pearsons:
                if v.count < 2 or v.yss == 0:
                    continue
                if v.off.size:
                    xo = xc_all[v.off]
                    shift = xo.sum() / v.count
                    xss = tss - np.dot(xo, xo) - v.count * shift * shift
                else:
                    xss = tss
                if xss > 0:
                    r[v.t] = np.dot(xc_all, v.yc) / (math.sqrt(xss) * v.yss)
        for g, idx in enumerate(self._groups):
            members = [v for v in self._vars if v.group == g]
            x = dwg if idx is None else dwg[idx]
            m = x.size
            if m < 2:
                continue
            if g in self._needs_ranks:
                rx = average_ranks(x)
                rxc = rx - rx.mean()
                rxss = math.sqrt(np.dot(rxc, rxc))
            brog = [v for v in members if v.estimator == BROGDEN and 0 < v.n1 < m]
            hs = {}
            if brog:
                total = x.sum()
                for v in brog:
                    s1 = np.dot(x, v.ones)
                    mean1 = s1 / v.n1
                    mean0 = (total - s1) / (m - v.n1)
                    hs[v.t] = (brogden_h(m, mean0, mean1, v.n1 / m, self.h_rule), mean1 - mean0)
                part = np.partition(x, sorted({m - h for h, _ in hs.values()}))
            for v in members:
                if v.estimator == SPEARMAN:
                    if rxss > 0 and v.yss > 0:
                        r[v.t] = np.dot(rxc, v.yc) / (rxss * v.yss)
                elif v.estimator == RANK_BISERIAL:
                    if 0 < v.n1 < m:
                        s1 = np.dot(rx, v.ones)
                        r1 = s1 / v.n1
                        r0 = (m * (m + 1) / 2.0 - s1) / (m - v.n1)
                        r[v.t] = 2.0 * (r1 - r0) / m
                elif v.t in hs:
                    h, diff = hs[v.t]
                    top = part[m - h:].sum()
                    dh = top / h - (total - top) / (m - h)
                    if dh != 0:
                        val = diff / dh
                        r[v.t] = min(1.0, max(-1.0, val)) if self.clip else val
        for v in self._vars:
            if v.estimator in (PEARSON, SPEARMAN) and not math.isnan(r[v.t]):
                r[v.t] = min(1.0, max(-1.0, r[v.t]))
        return r

    def _slow(self, dwg: np.ndarray) -> np.ndarray:
        defined = ~np.isnan(dwg)
        r = np.full(self.pvd.p, math.nan)
        for v in self._vars:
            mask = self.pvd.delta[:, v.t] & defined
            r[v.t] = _estimate(v.estimator, dwg, self.pvd.d[:, v.t], mask, self.h_rule, self.clip)
        return r

    def profile(self, w) -> CorrelationProfile:
        return CorrelationProfile(self.profile_values(w), self.estimators, self.dichotomous.copy())


def _estimate(estimator, x, y, mask, h_rule, clip) -> float:
    if estimator == PEARSON:
        return pearson(x, y, mask)
    if estimator == SPEARMAN:
        return spearman(x, y, mask)
    if estimator == BROGDEN:
        return brogden_biserial(x, y, mask, h_rule=h_rule, clip=clip)
    return rank_biserial(x, y, mask)


def correlation_profile(pvd: PerVariableDissimilarity, w, mode: str, h_rule: str = "mean",
                        clip: bool = False) -> CorrelationProfile:
    """Correlation of the weighted Gower dissimilarity with each variable.

    Each variable uses the pairs where it is observed and the overall
    dissimilarity is defined. A variable is dichotomous when all its observed
    pair dissimilarities are 0 or 1.
    """
    return ProfileEvaluator(pvd, mode, h_rule, clip).profile(w)
