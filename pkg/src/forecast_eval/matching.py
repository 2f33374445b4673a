"""Greedy current-frame matching, top-K candidate selection, subclass assignment
and ignore handling for partially annotated ground truth."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import SUBCLASSES, ForecastSet, GtTrajectory, MotionSubclass, Timeline
from .subclass import derive_prediction_subclass


@dataclass(frozen=True)
class MatchRecord:
    pred_index: int
    rank_score: float
    matched_gt: Optional[str] = None
    gt_index: Optional[int] = None
    current_hit: bool = False
    selected_candidate: Optional[int] = None
    fde_of_selected: Optional[float] = None
    min_ade: Optional[float] = None
    forecast_hit: bool = False
    subclass: Optional[MotionSubclass] = None
    ignored: bool = False


def _anchor_centers(preds: Sequence[ForecastSet]) -> np.ndarray:
    return np.array([(p.anchor.cx, p.anchor.cy) for p in preds], dtype=float).reshape(-1, 2)


def _gt_centers(gts: Sequence[GtTrajectory]) -> np.ndarray:
    return np.array([(g.first.cx, g.first.cy) for g in gts], dtype=float).reshape(-1, 2)


def score_order(scores: Sequence[float]) -> np.ndarray:
    """Indices by descending score; ties keep ingestion order."""
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def greedy_assign(dist: np.ndarray, order: np.ndarray, tau: float) -> np.ndarray:
    """Assign each row (in ``order``) to its nearest free column within ``tau``.

    Returns the column index per row, -1 where unmatched. Distance ties go to
    the lower column index.
    """
    n_rows, n_cols = dist.shape
    assigned = np.full(n_rows, -1, dtype=np.int64)
    if n_cols == 0:
        return assigned
    free = np.ones(n_cols, dtype=bool)
    for r in order:
        row = np.where(free, dist[r], np.inf)
        j = int(np.argmin(row))
        if row[j] <= tau:
            assigned[r] = j
            free[j] = False
    return assigned


def greedy_match_current(
    preds: Sequence[ForecastSet], gts: Sequence[GtTrajectory], tau_cur: float
) -> list[MatchRecord]:
    """One-to-one matching on anchor/offset-0 center distance, highest det_score first.

    Records come back in ingestion order of ``preds``; only the current-frame
    fields are filled.
    """
    dist = _distance_matrix(_anchor_centers(preds), _gt_centers(gts))
    assigned = greedy_assign(dist, score_order([p.det_score for p in preds]), tau_cur)
    out = []
    for i, p in enumerate(preds):
        j = int(assigned[i])
        if j >= 0:
            out.append(MatchRecord(i, p.det_score, gts[j].instance_id, j, current_hit=True))
        else:
            out.append(MatchRecord(i, p.det_score))
    return out


def _distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    d = a[:, None, :] - b[None, :, :]
    return np.hypot(d[..., 0], d[..., 1])


def top_k(fs: ForecastSet, k: int) -> tuple[int, ...]:
    return fs.ranked[:k]


def candidate_errors(fs: ForecastSet, gt: GtTrajectory, k: int) -> tuple[int, float, float]:
    """(index of min-FDE candidate, its FDE, min ADE) over the top-k candidates.

    ADE is averaged over the offsets annotated in ``gt``; FDE uses the last one.
    """
    idx = top_k(fs, k)
    wp = fs.stacked[list(idx)]  # (k, T, 2)
    pos = gt.positions[1:]
    valid = ~np.isnan(pos[:, 0])
    last = gt.last_offset - 1
    if last < 0:
        raise ValueError(f"ground truth {gt.instance_id!r} has no future box")
    fde = np.hypot(wp[:, last, 0] - pos[last, 0], wp[:, last, 1] - pos[last, 1])
    err = np.hypot(wp[:, valid, 0] - pos[valid, 0], wp[:, valid, 1] - pos[valid, 1])
    lo = fde.min()
    best = min(c for c, f in zip(idx, fde) if f == lo)  # FDE ties -> lower candidate index
    return best, float(lo), float(err.mean(axis=1).min())


def select_candidate(fs: ForecastSet, matched_gt: GtTrajectory, k: int) -> tuple[int, float]:
    """Among the top-k candidates by forecast score, the one with minimum FDE."""
    i, fde, _ = candidate_errors(fs, matched_gt, k)
    return i, fde


def assign_subclasses(
    records: Sequence[MatchRecord],
    preds: Sequence[ForecastSet],
    gts: Sequence[GtTrajectory],
    timeline: Timeline,
    cache: Optional[dict[int, MotionSubclass]] = None,
) -> list[MatchRecord]:
    """Matched records take the GT subclass; unmatched ones are classified from
    their top-ranked candidate."""
    cache = {} if cache is None else cache
    out = []
    for r in records:
        if r.gt_index is not None:
            sc = gts[r.gt_index].subclass
        else:
            sc = cache.get(r.pred_index)
            if sc is None:
                fs = preds[r.pred_index]
                sc = derive_prediction_subclass(fs, fs.ranked[0], timeline)
                cache[r.pred_index] = sc
        out.append(replace(r, subclass=sc))
    return out


def apply_ignore_rules(records: Sequence[MatchRecord], gts: Sequence[GtTrajectory]) -> list[MatchRecord]:
    """Records matched to a GT that is not annotated over the full horizon are ignored."""
    return [
        replace(r, ignored=True) if r.gt_index is not None and not gts[r.gt_index].complete else r
        for r in records
    ]


def gt_totals(gts: Sequence[GtTrajectory]) -> dict[MotionSubclass, int]:
    """Per-subclass count of complete (non-ignored) ground truth."""
    totals = {s: 0 for s in SUBCLASSES}
    for g in gts:
        if g.complete:
            totals[g.subclass] += 1
    return totals


class SceneMatcher:
    """Matching state for one scene, shared across threshold pairs.

    The distance matrix, score order, per-pair candidate errors and derived
    false-positive subclasses are computed once and reused.
    """

    def __init__(self, preds: Sequence[ForecastSet], gts: Sequence[GtTrajectory], timeline: Timeline, k: int):
        self.preds = list(preds)
        self.gts = list(gts)
        self.timeline = timeline
        self.k = int(k)
        for p in self.preds:
            if p.horizon_steps != timeline.horizon_steps:
                raise ValueError(
                    f"forecast has {p.horizon_steps} waypoints, timeline expects {timeline.horizon_steps}"
                )
        self._dist = _distance_matrix(_anchor_centers(self.preds), _gt_centers(self.gts))
        self._order = score_order([p.det_score for p in self.preds])
        self._assign_cache: dict[float, np.ndarray] = {}
        self._err_cache: dict[tuple[int, int], tuple[int, float, float]] = {}
        self._fp_subclass: dict[int, MotionSubclass] = {}

    def assignment(self, tau_cur: float) -> np.ndarray:
        a = self._assign_cache.get(tau_cur)
        if a is None:
            a = greedy_assign(self._dist, self._order, tau_cur)
            self._assign_cache[tau_cur] = a
        return a

    def errors(self, i: int, j: int) -> tuple[int, float, float]:
        e = self._err_cache.get((i, j))
        if e is None:
            e = candidate_errors(self.preds[i], self.gts[j], self.k)
            self._err_cache[(i, j)] = e
        return e

    def fp_subclass(self, i: int) -> MotionSubclass:
        sc = self._fp_subclass.get(i)
        if sc is None:
            fs = self.preds[i]
            sc = derive_prediction_subclass(fs, fs.ranked[0], self.timeline)
            self._fp_subclass[i] = sc
        return sc

    def records(
        self, tau_cur: float, tau_fin: float = float("inf"), rank_by_forecast_score: bool = False
    ) -> list[MatchRecord]:
        """Fully populated records for one (current, final) threshold pair."""
        assigned = self.assignment(tau_cur)
        out = []
        for i, p in enumerate(self.preds):
            j = int(assigned[i])
            if j < 0:
                score = p.candidates[p.ranked[0]].forecast_score if rank_by_forecast_score else p.det_score
                out.append(MatchRecord(i, score, subclass=self.fp_subclass(i)))
                continue
            g = self.gts[j]
            if not g.complete:
                out.append(
                    MatchRecord(i, p.det_score, g.instance_id, j, True, subclass=g.subclass, ignored=True)
                )
                continue
            sel, fde, ade = self.errors(i, j)
            score = p.candidates[sel].forecast_score if rank_by_forecast_score else p.det_score
            out.append(
                MatchRecord(
                    i, score, g.instance_id, j, True, sel, fde, ade,
                    forecast_hit=fde <= tau_fin, subclass=g.subclass,
                )
            )
        return out


def match_forecasts(
    preds: Sequence[ForecastSet],
    gts: Sequence[GtTrajectory],
    tau_cur: float,
    tau_fin: float,
    k: int,
    timeline: Timeline,
) -> list[MatchRecord]:
    """Full single-scene pipeline for one threshold pair: match, select, hit test,
    subclass and ignore rules."""
    recs = greedy_match_current(preds, gts, tau_cur)
    filled = []
    for r in recs:
        if r.gt_index is not None and gts[r.gt_index].complete:
            sel, fde, ade = candidate_errors(preds[r.pred_index], gts[r.gt_index], k)
            r = replace(r, selected_candidate=sel, fde_of_selected=fde, min_ade=ade, forecast_hit=fde <= tau_fin)
        filled.append(r)
    filled = assign_subclasses(filled, preds, gts, timeline)
    return apply_ignore_rules(filled, gts)
