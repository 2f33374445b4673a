"""Precision/recall curves, detection and forecasting AP, and the legacy
displacement metrics (ADE/FDE at recall, miss rate), assembled into an
:class:`EvalReport`."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .core import (
    SUBCLASSES,
    EvalConfig,
    EvalReport,
    ForecastSet,
    GtTrajectory,
    MetricUndefinedError,
    MotionSubclass,
    validate_config,
)
from .matching import MatchRecord, SceneMatcher, gt_totals, score_order

log = logging.getLogger(__name__)

# nuScenes-style clipping of the low-recall / low-precision region
CLIP_MIN_RECALL = 0.1
CLIP_MIN_PRECISION = 0.1

Scenes = Mapping[str, Sequence]


@dataclass
class PrCurve:
    recall: np.ndarray  # one entry per scored record, non-decreasing
    precision: np.ndarray
    levels: np.ndarray  # evenly spaced recall samples in [0, 1]
    interpolated: np.ndarray  # max precision at recall >= level, 0 past the last recall

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def recall_levels(pr_points: int) -> np.ndarray:
    # i / (n-1) rather than linspace so that level 0.3 == 3/10 exactly
    return np.arange(pr_points) / (pr_points - 1)


def pr_curve(scores: Sequence[float], hits: Sequence[bool], gt_count: int, pr_points: int = 101) -> PrCurve:
    """Cumulative PR staircase over records ranked by score (ties keep input order)."""
    if gt_count <= 0:
        raise ValueError("a PR curve needs at least one ground-truth object")
    order = score_order(scores)
    h = np.asarray(hits, dtype=bool)[order]
    tp = np.cumsum(h)
    n = np.arange(1, len(h) + 1)
    recall = tp / gt_count
    precision = tp / n if len(h) else np.zeros(0)
    levels = recall_levels(pr_points)
    if len(h) == 0:
        return PrCurve(recall, precision, levels, np.zeros(pr_points))
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, levels, side="left")
    interp = np.where(idx < len(h), envelope[np.minimum(idx, len(h) - 1)], 0.0)
    return PrCurve(recall, precision, levels, interp)


def ap_from_curve(curve: PrCurve, nuscenes_clip: bool = False) -> float:
    prec = curve.interpolated
    if not nuscenes_clip:
        return float(prec.mean())
    start = round((len(prec) - 1) * CLIP_MIN_RECALL) + 1
    clipped = np.clip(prec[start:] - CLIP_MIN_PRECISION, 0.0, None)
    return float(clipped.mean() / (1.0 - CLIP_MIN_PRECISION))


def _ap(scores, hits, gt_count: int, cfg: EvalConfig) -> Optional[float]:
    if gt_count <= 0:
        return None
    return ap_from_curve(pr_curve(scores, hits, gt_count, cfg.pr_points), cfg.nuscenes_clip)


def ap_from_records(
    records: Sequence[MatchRecord],
    gt_count: int,
    hit_field: str = "current_hit",
    cfg: Optional[EvalConfig] = None,
) -> Optional[float]:
    """Max-interpolated AP over ``records``; ``None`` when there is no ground truth.

    Ignored records are dropped. ``hit_field`` is ``"current_hit"`` for
    detection AP or ``"forecast_hit"`` for forecasting AP.
    """
    if hit_field not in ("current_hit", "forecast_hit"):
        raise ValueError(f"unknown hit field {hit_field!r}")
    cfg = cfg or EvalConfig()
    kept = [r for r in records if not r.ignored]
    return _ap([r.rank_score for r in kept], [getattr(r, hit_field) for r in kept], gt_count, cfg)


def mean_defined(values: Sequence[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return sum(vals) / len(vals)


def ade(candidate, gt: GtTrajectory) -> float:
    """Mean center error over offsets 1..T. ``candidate`` is a ForecastCandidate or a (T, 2) array."""
    wp = np.asarray(getattr(candidate, "waypoints", candidate), dtype=float)
    d = wp - gt.positions[1:]
    return float(np.hypot(d[:, 0], d[:, 1]).mean())


def fde(candidate, gt: GtTrajectory) -> float:
    wp = np.asarray(getattr(candidate, "waypoints", candidate), dtype=float)
    d = wp[-1] - gt.positions[-1]
    return float(np.hypot(d[0], d[1]))


# ---------------------------------------------------------------------------
# scene-level accumulation


def _as_scenes(x) -> dict[str, list]:
    if isinstance(x, Mapping):
        return {str(k): list(v) for k, v in x.items()}
    return {"": list(x)}


@dataclass
class _RecordTable:
    """Records of one threshold pair pooled over scenes, in ingestion order."""

    det_score: np.ndarray
    rank_score: np.ndarray
    current_hit: np.ndarray
    forecast_hit: np.ndarray
    subclass: np.ndarray  # index into SUBCLASSES
    fde: np.ndarray  # NaN where not a current hit
    ade: np.ndarray
    ignored: np.ndarray

    @classmethod
    def build(cls, recs: Sequence[MatchRecord], det_scores: Sequence[float]) -> "_RecordTable":
        code = {s: i for i, s in enumerate(SUBCLASSES)}
        return cls(
            det_score=np.asarray(det_scores, dtype=float),
            rank_score=np.array([r.rank_score for r in recs], dtype=float),
            current_hit=np.array([r.current_hit for r in recs], dtype=bool),
            forecast_hit=np.array([r.forecast_hit for r in recs], dtype=bool),
            subclass=np.array([code[r.subclass] for r in recs], dtype=np.int64),
            fde=np.array([np.nan if r.fde_of_selected is None else r.fde_of_selected for r in recs]),
            ade=np.array([np.nan if r.min_ade is None else r.min_ade for r in recs]),
            ignored=np.array([r.ignored for r in recs], dtype=bool),
        )

    @classmethod
    def concat(cls, tables: Sequence["_RecordTable"]) -> "_RecordTable":
        if not tables:
            return cls.build([], [])
        return cls(*(np.concatenate([getattr(t, f) for t in tables]) for f in cls.__dataclass_fields__))


@dataclass
class _SceneResult:
    pairs: list[_RecordTable]
    legacy: _RecordTable
    totals: dict[MotionSubclass, int]


def _score_scene(preds: Sequence[ForecastSet], gts: Sequence[GtTrajectory], cfg: EvalConfig) -> _SceneResult:
    m = SceneMatcher(preds, gts, cfg.timeline, cfg.k)
    det = [p.det_score for p in preds]
    pairs = [
        _RecordTable.build(m.records(tc, tf, cfg.rank_by_forecast_score), det) for tc, tf in cfg.threshold_pairs
    ]
    legacy = _RecordTable.build(m.records(cfg.legacy_tau), det)
    return _SceneResult(pairs, legacy, gt_totals(gts))


def _accumulate(gt_scenes: Scenes, pred_scenes: Scenes, cfg: EvalConfig, workers: int = 1):
    gt_scenes, pred_scenes = _as_scenes(gt_scenes), _as_scenes(pred_scenes)
    unknown = [s for s in pred_scenes if s not in gt_scenes]
    if unknown:
        raise ValueError(f"prediction scenes missing from ground truth: {unknown[:5]}")
    jobs = [(pred_scenes.get(sid, []), gts) for sid, gts in gt_scenes.items()]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda j: _score_scene(j[0], j[1], cfg), jobs))
    else:
        results = [_score_scene(p, g, cfg) for p, g in jobs]
    pairs = [_RecordTable.concat([r.pairs[i] for r in results]) for i in range(len(cfg.threshold_pairs))]
    legacy = _RecordTable.concat([r.legacy for r in results])
    totals = {s: sum(r.totals[s] for r in results) for s in SUBCLASSES}
    return pairs, legacy, totals


def _subclass_aps(table: _RecordTable, totals, cfg: EvalConfig, forecast: bool) -> dict[MotionSubclass, Optional[float]]:
    keep = ~table.ignored
    out = {}
    for i, s in enumerate(SUBCLASSES):
        mask = keep & (table.subclass == i)
        if forecast:
            out[s] = _ap(table.rank_score[mask], table.forecast_hit[mask], totals[s], cfg)
        else:
            out[s] = _ap(table.det_score[mask], table.current_hit[mask], totals[s], cfg)
    return out


def _per_subclass(pairs, totals, cfg, forecast: bool) -> dict[MotionSubclass, Optional[float]]:
    per_pair = [_subclass_aps(t, totals, cfg, forecast) for t in pairs]
    return {s: (None if totals[s] == 0 else sum(p[s] for p in per_pair) / len(per_pair)) for s in SUBCLASSES}


def forecast_ap(preds, gts, cfg: EvalConfig, subclass_filter: Union[MotionSubclass, str]) -> Optional[float]:
    """AP_f of one subclass, averaged over the paired (current, final) thresholds.

    ``preds``/``gts`` are either lists for a single scene or mappings from
    scene id to such lists. Returns ``None`` if the subclass has no ground truth.
    """
    validate_config(cfg)
    pairs, _, totals = _accumulate(_as_scenes(gts), _as_scenes(preds), cfg)
    return _per_subclass(pairs, totals, cfg, forecast=True)[MotionSubclass(subclass_filter)]


def _require_defined(aps: dict) -> float:
    m = mean_defined(list(aps.values()))
    if m is None:
        raise MetricUndefinedError("no subclass has ground truth; mean AP is undefined")
    for s, v in aps.items():
        if v is None:
            log.warning("subclass %s has no ground truth and is excluded from the mean", s.value)
    return m


def map_f(preds, gts, cfg: EvalConfig) -> tuple[float, dict[MotionSubclass, Optional[float]]]:
    validate_config(cfg)
    pairs, _, totals = _accumulate(_as_scenes(gts), _as_scenes(preds), cfg)
    aps = _per_subclass(pairs, totals, cfg, forecast=True)
    return _require_defined(aps), aps


def detection_map(preds, gts, cfg: EvalConfig) -> tuple[float, dict[MotionSubclass, Optional[float]]]:
    validate_config(cfg)
    pairs, _, totals = _accumulate(_as_scenes(gts), _as_scenes(preds), cfg)
    aps = _per_subclass(pairs, totals, cfg, forecast=False)
    return _require_defined(aps), aps


def _fmt_level(r: float) -> str:
    return repr(float(r))


def _legacy_from_table(table: _RecordTable, gt_count: int, cfg: EvalConfig) -> dict:
    keep = ~table.ignored
    order = score_order(table.det_score[keep])
    hit = table.current_hit[keep][order]
    fde_v = table.fde[keep][order]
    ade_v = table.ade[keep][order]
    n_tp = int(hit.sum())
    out: dict = {"tau_cur": cfg.legacy_tau, "k": cfg.k, "unattainable_recalls": []}
    if gt_count == 0 or n_tp == 0:
        out.update(
            ade_at_recall={_fmt_level(r): None for r in cfg.recall_levels},
            fde_at_recall={_fmt_level(r): None for r in cfg.recall_levels},
            ade_avg_recall=None, fde_avg_recall=None, miss_rate=None, max_recall=0.0,
        )
        return out
    recall = np.cumsum(hit) / gt_count
    max_recall = float(recall[-1])

    def at(r: float) -> tuple[float, float]:
        i = int(np.searchsorted(recall, r, side="left"))
        if i >= len(recall):
            if _fmt_level(r) not in out["unattainable_recalls"]:
                out["unattainable_recalls"].append(_fmt_level(r))
            i = len(recall) - 1
        sel = hit[: i + 1]
        return float(ade_v[: i + 1][sel].mean()), float(fde_v[: i + 1][sel].mean())

    ade_at, fde_at = {}, {}
    for r in cfg.recall_levels:
        ade_at[_fmt_level(r)], fde_at[_fmt_level(r)] = at(r)
    avg = [at(r) for r in cfg.avg_recall_levels]
    out.update(
        ade_at_recall=ade_at,
        fde_at_recall=fde_at,
        ade_avg_recall=sum(a for a, _ in avg) / len(avg),
        fde_avg_recall=sum(f for _, f in avg) / len(avg),
        miss_rate=float((fde_v[hit] > cfg.miss_fde_threshold).sum() / n_tp),
        max_recall=max_recall,
    )
    return out


def legacy_displacement(preds, gts, cfg: EvalConfig) -> dict:
    """ADE/FDE at fixed recall, recall-averaged ADE/FDE and miss rate.

    True positives come from greedy matching at ``cfg.legacy_tau``; for each
    recall level the shortest det_score-ranked prefix reaching it is used and
    min-over-top-K errors of its true positives are averaged. Unreachable
    levels fall back to the full list and are listed in ``unattainable_recalls``.
    """
    validate_config(cfg)
    _, legacy, totals = _accumulate(_as_scenes(gts), _as_scenes(preds), cfg)
    return _legacy_from_table(legacy, sum(totals.values()), cfg)


def _pair_key(s: MotionSubclass, tc: float, tf: float) -> str:
    return f"{s.value}@{tc:g}/{tf:g}"


def evaluate(
    gt_scenes,
    pred_scenes,
    cfg: EvalConfig,
    workers: int = 1,
    digests: Optional[dict[str, str]] = None,
) -> EvalReport:
    """Run every metric over all scenes and assemble the report."""
    validate_config(cfg)
    gt_scenes, pred_scenes = _as_scenes(gt_scenes), _as_scenes(pred_scenes)
    pairs, legacy_table, totals = _accumulate(gt_scenes, pred_scenes, cfg, workers)

    ap_det = _per_subclass(pairs, totals, cfg, forecast=False)
    ap_f = _per_subclass(pairs, totals, cfg, forecast=True)

    curves: dict[str, list[list[float]]] = {}
    keep_pairs = list(zip(pairs, cfg.threshold_pairs))
    for s_i, s in enumerate(SUBCLASSES):
        if totals[s] == 0:
            continue
        for table, (tc, tf) in keep_pairs:
            mask = ~table.ignored & (table.subclass == s_i)
            c = pr_curve(table.rank_score[mask], table.forecast_hit[mask], totals[s], cfg.pr_points)
            curves[_pair_key(s, tc, tf)] = [[float(r), float(p)] for r, p in zip(c.levels, c.interpolated)]

    warnings = [
        f"no complete ground truth for subclass '{s.value}'; excluded from mAP" for s in SUBCLASSES if totals[s] == 0
    ]
    legacy = _legacy_from_table(legacy_table, sum(totals.values()), cfg)
    if legacy["miss_rate"] is None:
        warnings.append("no true positives at the legacy threshold; displacement metrics undefined")

    if digests is None:
        from .fileio import scenes_digest

        digests = {"gt": scenes_digest(gt_scenes, cfg.timeline), "pred": scenes_digest(pred_scenes, cfg.timeline)}

    return EvalReport(
        ap_det={s.value: v for s, v in ap_det.items()},
        ap_f={s.value: v for s, v in ap_f.items()},
        map_det=mean_defined(list(ap_det.values())),
        map_f=mean_defined(list(ap_f.values())),
        legacy=legacy,
        pr_curves=curves,
        config=cfg.to_dict(),
        digests=dict(digests),
        gt_counts={s.value: totals[s] for s in SUBCLASSES},
        warnings=warnings,
    )


def _f(v: Optional[float]) -> str:
    return "   n/a" if v is None else f"{v:6.3f}"


def format_report(report: EvalReport) -> str:
    """Fixed-width human-readable summary of a report."""
    lines = [f"{'subclass':<10} {'#gt':>6} {'AP_det':>6} {'AP_f':>6}"]
    for s in SUBCLASSES:
        lines.append(
            f"{s.value:<10} {report.gt_counts.get(s.value, 0):>6} {_f(report.ap_det[s.value])} {_f(report.ap_f[s.value])}"
        )
    lines.append(f"{'mean':<10} {'':>6} {_f(report.map_det)} {_f(report.map_f)}")
    lines.append("")
    lg = report.legacy
    lines.append(f"legacy (tau_cur={lg['tau_cur']:g} m, K={lg['k']})")
    for r, v in lg["ade_at_recall"].items():
        lines.append(f"  ADE@{float(r):.0%} {_f(v)}   FDE@{float(r):.0%} {_f(lg['fde_at_recall'][r])}")
    lines.append(f"  ADE(avg recall) {_f(lg['ade_avg_recall'])}   FDE(avg recall) {_f(lg['fde_avg_recall'])}")
    lines.append(f"  miss rate {_f(lg['miss_rate'])}")
    if lg["unattainable_recalls"]:
        lines.append(f"  recall not reached (reported at {lg['max_recall']:.3f}): {', '.join(lg['unattainable_recalls'])}")
    for w in report.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines)
