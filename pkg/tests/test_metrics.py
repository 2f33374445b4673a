import logging
from fractions import Fraction

import numpy as np
import pytest

from forecast_eval.baselines import Detection, constant_position
from forecast_eval.core import EvalConfig, MetricUndefinedError, MotionSubclass
from forecast_eval.matching import MatchRecord
from forecast_eval.metrics import (
    ade,
    ap_from_curve,
    ap_from_records,
    detection_map,
    evaluate,
    fde,
    forecast_ap,
    legacy_displacement,
    map_f,
    mean_defined,
    pr_curve,
)

from builders import TL, box, forecast, line_gt, oracle_for, random_instance, straight
from oracles import reference_aps, staircase_ap

S, L, N = MotionSubclass.STATIC, MotionSubclass.LINEAR, MotionSubclass.NONLINEAR
CFG = EvalConfig()


def rec(score, hit):
    return MatchRecord(0, score, current_hit=hit, forecast_hit=hit)


# ---------------------------------------------------------------------------
# AP from records


def test_single_tp_ap_one():
    assert ap_from_records([rec(0.5, True)], 1) == 1.0


def test_fp_then_tp_ap_half():
    recs = [rec(0.9, False), rec(0.8, True)]
    curve = pr_curve([0.9, 0.8], [False, True], 1)
    assert np.all(curve.interpolated == 0.5)
    assert ap_from_records(recs, 1) == pytest.approx(0.5, abs=1e-15)
    assert staircase_ap([(0.9, False), (0.8, True)], 1) == Fraction(1, 2)


def test_half_recall_ap():
    ap = ap_from_records([rec(0.7, True)], 2)
    assert ap == pytest.approx(51 / 101, abs=1e-15)
    assert staircase_ap([(0.7, True)], 2) == Fraction(51, 101)


def test_no_gt_undefined_not_zero():
    assert ap_from_records([rec(0.7, False)], 0) is None


def test_ignored_records_dropped():
    recs = [MatchRecord(0, 0.9, ignored=True), rec(0.8, True)]
    assert ap_from_records(recs, 1) == 1.0


def test_unknown_hit_field():
    with pytest.raises(ValueError):
        ap_from_records([], 1, "bogus")


def test_pr_curve_invariants():
    rng = np.random.default_rng(0)
    scores, hits = rng.uniform(size=40), rng.uniform(size=40) < 0.5
    c = pr_curve(scores, hits, 30)
    assert np.all(np.diff(c.recall) >= 0)
    assert np.all(np.diff(c.interpolated) <= 0)
    assert len(c.points) == 40


def test_nuscenes_clip_variant():
    # perfect curve stays 1.0; half-precision curve clips to (0.5-0.1)/0.9
    assert ap_from_curve(pr_curve([1.0], [True], 1), nuscenes_clip=True) == pytest.approx(1.0)
    c = pr_curve([0.9, 0.8], [False, True], 1)
    assert ap_from_curve(c, nuscenes_clip=True) == pytest.approx(0.4 / 0.9)


def test_fp_below_keeps_low_recall_and_fp_above_lowers():
    scores, hits = [0.9, 0.8, 0.6, 0.5], [True, False, True, True]
    base = pr_curve(scores, hits, 5)
    below = pr_curve(scores + [0.1], hits + [False], 5)
    last_recall = base.recall[-1]
    lv = base.levels <= last_recall
    assert np.array_equal(base.interpolated[lv], below.interpolated[lv])
    above = pr_curve(scores + [0.95], hits + [False], 5)
    assert ap_from_curve(above) < ap_from_curve(base)


# ---------------------------------------------------------------------------
# forecasting AP


def test_ap_f_threshold_pairs_hand_example():
    g = line_gt("a", (0, 0), (2, 0))  # ends at (6, 0)
    assert g.subclass is L
    pred = forecast((0, 0), 0.8, straight((0, 0), (2, 0)) + np.array([0, 5 / 1.0]) * (np.arange(1, 7)[:, None] / 6))
    # final waypoint (6, 5): FDE exactly 5 m
    assert fde(pred.candidates[0], g) == pytest.approx(5.0)
    assert forecast_ap([pred], [g], CFG, L) == 0.25
    assert forecast_ap([pred], [g], CFG, S) is None
    m, aps = map_f([pred], [g], CFG)
    assert m == 0.25
    assert detection_map([pred], [g], CFG)[0] == 1.0


def test_oracle_all_subclasses_one():
    gts = [
        line_gt("s", (0, 0), (0, 0)),
        line_gt("l", (20, 0), (3, 1)),
    ]
    from builders import arc_points, path_gt

    pts, yaws = arc_points((40, 0), 5, 0, 0.8)
    gts.append(path_gt("n", pts, yaws=yaws, velocity0=(5, 0)))
    assert [g.subclass for g in gts] == [S, L, N]
    preds = [oracle_for(g) for g in gts]
    m, aps = map_f(preds, gts, CFG)
    assert m == 1.0 and all(v == 1.0 for v in aps.values())
    assert detection_map(preds, gts, CFG)[0] == 1.0


def test_constant_position_zero_on_movers():
    gts = [line_gt(f"m{i}", (30 * i, 0), (3.0 + i, 0.5)) for i in range(4)]
    gts += [line_gt(f"s{i}", (30 * i, 40), (0, 0)) for i in range(3)]
    assert all(np.hypot(*(np.array(g.last.center) - g.first.center)) > 8 for g in gts[:4])
    dets = [Detection(g.first, 0.9 - 0.05 * i) for i, g in enumerate(gts)]
    preds = constant_position(dets, TL)
    assert forecast_ap(preds, gts, CFG, L) == 0.0
    assert forecast_ap(preds, gts, CFG, S) == 1.0


def test_mean_of_subclasses():
    assert mean_defined([0.6, 0.3, 0.0]) == pytest.approx(0.3)
    assert mean_defined([None, 0.4, None]) == 0.4
    assert mean_defined([None, None]) is None


def test_only_static_present_warns(caplog):
    g = line_gt("s", (0, 0), (0, 0))
    preds = [forecast((0.2, 0), 0.9, [(0, 0)] * 6)]
    with caplog.at_level(logging.WARNING):
        m, aps = map_f(preds, [g], CFG)
    assert m == aps[S] == 1.0
    assert "excluded" in caplog.text
    report = evaluate({"s": [g]}, {"s": preds}, CFG, digests={})
    assert report.map_f == report.ap_f["static"]
    assert len([w for w in report.warnings if "subclass" in w]) == 2


def test_all_undefined_raises():
    with pytest.raises(MetricUndefinedError):
        map_f([], [], CFG)
    with pytest.raises(MetricUndefinedError):
        detection_map([], [], CFG)


def test_far_predictions_zero_detection_map():
    gts = [line_gt("a", (0, 0), (2, 0)), line_gt("b", (20, 0), (0, 0))]
    preds = [forecast((5, 0), 0.9, [(5, 0)] * 6), forecast((20, 4.5), 0.8, [(20, 4.5)] * 6)]
    assert detection_map(preds, gts, CFG)[0] == 0.0


def test_one_gt_two_preds_matches_reference():
    g = line_gt("a", (0, 0), (2, 0))
    preds = [forecast((1.5, 0), 0.9, straight((1.5, 0), (2, 0))), forecast((0.3, 0), 0.6, straight((0, 0), (2, 0)))]
    ref = reference_aps(preds, [g], CFG)
    m, aps = detection_map(preds, [g], CFG)
    assert aps[L] == pytest.approx(float(ref[L][0]), abs=1e-12)
    assert map_f(preds, [g], CFG)[1][L] == pytest.approx(float(ref[L][1]), abs=1e-12)


def test_ap_f_never_exceeds_ap_det():
    rng = np.random.default_rng(5)
    for _ in range(50):
        preds, gts = random_instance(rng)
        if not any(g.complete for g in gts):
            continue
        r = evaluate({"s": gts}, {"s": preds}, CFG, digests={})
        for s in ("static", "linear", "nonlinear"):
            if r.ap_f[s] is not None:
                assert r.ap_f[s] <= r.ap_det[s] + 1e-15


def test_rank_only_dependence():
    rng = np.random.default_rng(11)
    for _ in range(40):
        preds, gts = random_instance(rng)
        if not any(g.complete for g in gts):
            continue
        warped = [
            forecast(
                p.anchor.center,
                p.det_score**3,
                *[c.waypoints for c in p.candidates],
                scores=[c.forecast_score**3 for c in p.candidates],
            )
            for p in preds
        ]
        a = evaluate({"s": gts}, {"s": preds}, CFG, digests={})
        b = evaluate({"s": gts}, {"s": warped}, CFG, digests={})
        assert a.ap_det == b.ap_det and a.ap_f == b.ap_f


def test_brute_force_equivalence_sample():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(150):
        preds, gts = random_instance(rng)
        if not any(g.complete for g in gts):
            continue
        for k in (1, 3):
            cfg = EvalConfig(k=k)
            ref = reference_aps(preds, gts, cfg)
            r = evaluate({"s": gts}, {"s": preds}, cfg, digests={})
            for s in (S, L, N):
                want_det, want_f = ref[s]
                if want_det is None:
                    assert r.ap_det[s.value] is None
                    continue
                assert abs(r.ap_det[s.value] - float(want_det)) <= 1e-12
                assert abs(r.ap_f[s.value] - float(want_f)) <= 1e-12
                checked += 1
    assert checked > 100


# ---------------------------------------------------------------------------
# displacement errors


def test_ade_fde_exact_path():
    g = line_gt("a", (0, 0), (2, 1))
    assert ade(g.positions[1:], g) == 0.0 and fde(g.positions[1:], g) == 0.0


def test_ade_fde_lateral_offset():
    g = line_gt("a", (0, 0), (2, 0))
    wp = g.positions[1:] + np.array([0, 1.0])
    assert ade(wp, g) == pytest.approx(1.0) and fde(wp, g) == pytest.approx(1.0)


def test_ade_fde_growing_error():
    from forecast_eval.core import Timeline

    tl = Timeline(0, 3, 0.5)
    g = line_gt("a", (0, 0), (2, 0), tl=tl)
    wp = g.positions[1:] + np.array([[0, 1.0], [0, 2.0], [0, 3.0]])
    assert ade(wp, g) == pytest.approx(2.0) and fde(wp, g) == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# legacy displacement metrics


def test_legacy_oracle_zero():
    gts = [line_gt(f"g{i}", (10 * i, 0), (i, 0.5)) for i in range(5)]
    out = legacy_displacement([oracle_for(g, 0.5 + 0.1 * i) for i, g in enumerate(gts)], gts, CFG)
    assert out["miss_rate"] == 0.0
    assert out["ade_avg_recall"] == 0.0 and out["fde_avg_recall"] == 0.0
    assert all(v == 0.0 for v in out["fde_at_recall"].values())
    assert out["unattainable_recalls"] == []


def test_legacy_single_miss():
    g = line_gt("a", (0, 0), (2, 0))
    pred = forecast((0, 0), 0.9, straight((0, 0), (1, 0)))  # ends at (3, 0): FDE 3
    out = legacy_displacement([pred], [g], CFG)
    assert out["miss_rate"] == 1.0
    assert out["fde_at_recall"]["0.6"] == pytest.approx(3.0)


def test_legacy_unattainable_flagged():
    gts = [line_gt("a", (0, 0), (2, 0)), line_gt("b", (30, 0), (2, 0))]
    out = legacy_displacement([oracle_for(gts[0])], gts, CFG)
    assert out["max_recall"] == 0.5
    assert "0.6" in out["unattainable_recalls"] and "0.9" in out["unattainable_recalls"]
    assert out["fde_at_recall"]["0.9"] == 0.0


def test_legacy_gameability_prefix():
    """Stationary-first ranking of constant-position forecasts on a 60%-static
    population: perfect at 60% recall, poor at 90%."""
    static = [line_gt(f"s{i}", (20 * i, 0), (0, 0)) for i in range(6)]
    moving = [line_gt(f"m{i}", (20 * i, 50), (4, 0)) for i in range(4)]  # 12 m displacement
    gts = static + moving
    rng = np.random.default_rng(0)
    dets = [Detection(g.first, float(rng.uniform(0.3, 1)), g.velocity0) for g in gts]
    preds = constant_position(dets, TL, rerank_stationary=True)
    assert min(p.det_score for p in preds[:6]) > max(p.det_score for p in preds[6:])
    out = legacy_displacement(preds, gts, CFG)
    assert out["fde_at_recall"]["0.6"] == 0.0
    assert out["fde_at_recall"]["0.9"] == pytest.approx(3 * 12 / 9)
    # without re-ranking the prefix mixes in movers
    plain = legacy_displacement(constant_position(dets, TL), gts, CFG)
    assert plain["fde_at_recall"]["0.6"] >= out["fde_at_recall"]["0.6"]


def test_legacy_ignores_partial_gt():
    gts = [line_gt("a", (0, 0), (2, 0)), line_gt("b", (30, 0), (2, 0), offsets=range(3))]
    out = legacy_displacement([oracle_for(gts[0]), forecast((30, 0), 0.99, [(0, 0)] * 6)], gts, CFG)
    assert out["max_recall"] == 1.0 and out["miss_rate"] == 0.0
