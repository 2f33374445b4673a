"""JSON file formats (ground truth, predictions, detections, reports) and
PR-curve CSV export.

All writers emit UTF-8 JSON with sorted keys; floats use Python's shortest
round-trip representation, so parse(write(x)) reproduces every value exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .baselines import Detection, FutureDetection
from .core import BevBox, EvalReport, ForecastCandidate, ForecastSet, GtTrajectory, Timeline

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """Input file violates its schema; the message names the offending field."""


def canonical_json(obj: Any, indent: Optional[int] = None) -> str:
    return json.dumps(obj, sort_keys=True, indent=indent, ensure_ascii=False, allow_nan=False)


def write_json(path, obj: Any) -> None:
    Path(path).write_text(canonical_json(obj, indent=1) + "\n", encoding="utf-8")


def file_digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# field validation helpers


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, msg: str):
        raise SchemaError(f"{self.source}: {where}: {msg}")

    def get(self, obj, key: str, where: str, required: bool = True):
        if not isinstance(obj, dict):
            self.fail(where, "expected an object")
        if key not in obj:
            if required:
                self.fail(f"{where}.{key}" if where else key, "missing field")
            return None
        return obj[key]

    def num(self, obj, key: str, where: str) -> float:
        v = self.get(obj, key, where)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(f"{where}.{key}", f"expected a finite number, got {v!r}")
        return float(v)

    def score(self, obj, key: str, where: str) -> float:
        v = self.num(obj, key, where)
        if not 0.0 <= v <= 1.0:
            self.fail(f"{where}.{key}", f"score {v!r} outside [0, 1]")
        return v

    def lst(self, obj, key: str, where: str) -> list:
        v = self.get(obj, key, where)
        if not isinstance(v, list):
            self.fail(f"{where}.{key}", "expected a list")
        return v

    def points(self, v, where: str, n: Optional[int] = None) -> np.ndarray:
        if not isinstance(v, list) or any(
            not isinstance(p, list) or len(p) != 2 or any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in p)
            for p in v
        ):
            self.fail(where, "expected a list of [x, y] pairs")
        if n is not None and len(v) != n:
            self.fail(where, f"expected {n} points, got {len(v)}")
        arr = np.array(v, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(arr)):
            self.fail(where, "non-finite coordinate")
        return arr

    def box(self, obj, where: str) -> BevBox:
        vals = [self.num(obj, k, where) for k in ("cx", "cy", "length", "width", "yaw")]
        try:
            return BevBox(*vals)
        except ValueError as e:
            self.fail(where, str(e))

    def version(self, doc):
        if not isinstance(doc, dict):
            self.fail("<root>", "expected a JSON object")
        v = self.get(doc, "version", "")
        if v != SCHEMA_VERSION:
            self.fail("version", f"unsupported version {v!r} (expected {SCHEMA_VERSION})")

    def scenes(self, doc) -> list:
        scenes = self.lst(doc, "scenes", "")
        seen = set()
        for i, s in enumerate(scenes):
            sid = self.get(s, "scene_id", f"scenes[{i}]")
            if not isinstance(sid, str):
                self.fail(f"scenes[{i}].scene_id", "expected a string")
            if sid in seen:
                self.fail(f"scenes[{i}].scene_id", f"duplicate scene id {sid!r}")
            seen.add(sid)
        return scenes


def _parse(path) -> tuple[Any, _Reader]:
    path = Path(path)
    r = _Reader(str(path))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    return doc, r


# ---------------------------------------------------------------------------
# ground truth


@dataclass
class GtData:
    timeline: Timeline
    scenes: dict[str, list[GtTrajectory]]


def gt_to_dict(timeline: Timeline, scenes: dict[str, Sequence[GtTrajectory]]) -> dict:
    out = []
    for sid, gts in scenes.items():
        trajs = []
        for g in gts:
            t = {
                "instance_id": g.instance_id,
                "boxes": [
                    {"offset": o, "cx": b.cx, "cy": b.cy, "length": b.length, "width": b.width, "yaw": b.yaw}
                    for o, b in g.boxes
                ],
            }
            if g.velocity0 is not None:
                t["velocity0"] = list(g.velocity0)
            trajs.append(t)
        out.append({"scene_id": sid, "trajectories": trajs})
    return {
        "version": SCHEMA_VERSION,
        "timeline": {"t_obs": timeline.t_obs_index, "horizon_steps": timeline.horizon_steps, "dt": timeline.dt},
        "scenes": out,
    }


def gt_from_dict(doc: Any, source: str = "<memory>") -> GtData:
    r = _Reader(source)
    r.version(doc)
    tl_doc = r.get(doc, "timeline", "")
    try:
        tl = Timeline(
            int(r.num(tl_doc, "t_obs", "timeline")),
            int(r.num(tl_doc, "horizon_steps", "timeline")),
            r.num(tl_doc, "dt", "timeline"),
        )
    except ValueError as e:
        if isinstance(e, SchemaError):
            raise
        r.fail("timeline", str(e))
    scenes: dict[str, list[GtTrajectory]] = {}
    for i, s in enumerate(r.scenes(doc)):
        trajs = []
        for j, t in enumerate(r.lst(s, "trajectories", f"scenes[{i}]")):
            where = f"scenes[{i}].trajectories[{j}]"
            iid = r.get(t, "instance_id", where)
            boxes = []
            for b_i, b in enumerate(r.lst(t, "boxes", where)):
                bw = f"{where}.boxes[{b_i}]"
                off = r.num(b, "offset", bw)
                if off != int(off):
                    r.fail(f"{bw}.offset", "expected an integer")
                boxes.append((int(off), r.box(b, bw)))
            v0 = r.get(t, "velocity0", where, required=False)
            if v0 is not None:
                v0 = r.points([v0], f"{where}.velocity0", 1)[0]
            try:
                trajs.append(GtTrajectory.from_boxes(iid, boxes, tl, v0))
            except ValueError as e:
                r.fail(where, str(e))
        scenes[s["scene_id"]] = trajs
    return GtData(tl, scenes)


def load_gt(path) -> GtData:
    doc, _ = _parse(path)
    return gt_from_dict(doc, str(path))


def dump_gt(path, timeline: Timeline, scenes) -> None:
    write_json(path, gt_to_dict(timeline, scenes))


# ---------------------------------------------------------------------------
# predictions


def pred_to_dict(scenes: dict[str, Sequence[ForecastSet]]) -> dict:
    out = []
    for sid, preds in scenes.items():
        fcs = []
        for p in preds:
            a = p.anchor
            fcs.append(
                {
                    "anchor": {"cx": a.cx, "cy": a.cy, "length": a.length, "width": a.width, "yaw": a.yaw},
                    "det_score": p.det_score,
                    "candidates": [
                        {"waypoints": c.waypoints.tolist(), "forecast_score": c.forecast_score} for c in p.candidates
                    ],
                }
            )
        out.append({"scene_id": sid, "forecasts": fcs})
    return {"version": SCHEMA_VERSION, "scenes": out}


def pred_from_dict(
    doc: Any, horizon_steps: int, gt_scene_ids=None, source: str = "<memory>"
) -> dict[str, list[ForecastSet]]:
    r = _Reader(source)
    r.version(doc)
    scenes: dict[str, list[ForecastSet]] = {}
    for i, s in enumerate(r.scenes(doc)):
        sid = s["scene_id"]
        if gt_scene_ids is not None and sid not in gt_scene_ids:
            r.fail(f"scenes[{i}].scene_id", f"scene {sid!r} not present in ground truth")
        preds = []
        for j, f in enumerate(r.lst(s, "forecasts", f"scenes[{i}]")):
            where = f"scenes[{i}].forecasts[{j}]"
            anchor = r.box(r.get(f, "anchor", where), f"{where}.anchor")
            det_score = r.score(f, "det_score", where)
            cands_doc = r.lst(f, "candidates", where)
            if not cands_doc:
                r.fail(f"{where}.candidates", "at least one candidate is required")
            cands = []
            for c_i, c in enumerate(cands_doc):
                cw = f"{where}.candidates[{c_i}]"
                wp = r.points(r.get(c, "waypoints", cw), f"{cw}.waypoints", horizon_steps)
                cands.append(ForecastCandidate(wp, r.score(c, "forecast_score", cw)))
            preds.append(ForecastSet(anchor, det_score, tuple(cands)))
        scenes[sid] = preds
    return scenes


def load_pred(path, horizon_steps: int, gt_scene_ids=None) -> dict[str, list[ForecastSet]]:
    doc, _ = _parse(path)
    return pred_from_dict(doc, horizon_steps, gt_scene_ids, str(path))


def dump_pred(path, scenes) -> None:
    write_json(path, pred_to_dict(scenes))


# ---------------------------------------------------------------------------
# detector outputs (input of the `baseline` subcommand)


@dataclass
class DetScene:
    detections: list[Detection]
    future: list[FutureDetection]
    step_velocities: Optional[list[np.ndarray]] = None


def dets_to_dict(scenes: dict[str, Any]) -> dict:
    out = []
    for sid, sc in scenes.items():
        steps = getattr(sc, "step_velocities", None)
        dets = []
        for i, d in enumerate(sc.current if hasattr(sc, "current") else sc.detections):
            b = d.box
            e = {
                "box": {"cx": b.cx, "cy": b.cy, "length": b.length, "width": b.width, "yaw": b.yaw},
                "score": d.score,
                "velocity": list(d.velocity),
            }
            if steps is not None:
                e["step_velocities"] = np.asarray(steps[i]).tolist()
            dets.append(e)
        fut = [
            {"position": list(f.position), "score": f.score, "back_offsets": f.back_offsets.tolist()} for f in sc.future
        ]
        out.append({"scene_id": sid, "detections": dets, "future_detections": fut})
    return {"version": SCHEMA_VERSION, "scenes": out}


def dets_from_dict(doc: Any, horizon_steps: int, source: str = "<memory>") -> dict[str, DetScene]:
    r = _Reader(source)
    r.version(doc)
    out: dict[str, DetScene] = {}
    for i, s in enumerate(r.scenes(doc)):
        dets, steps = [], []
        for j, d in enumerate(r.lst(s, "detections", f"scenes[{i}]")):
            where = f"scenes[{i}].detections[{j}]"
            box = r.box(r.get(d, "box", where), f"{where}.box")
            vel = r.points([r.get(d, "velocity", where)], f"{where}.velocity", 1)[0]
            dets.append(Detection(box, r.score(d, "score", where), tuple(vel)))
            sv = r.get(d, "step_velocities", where, required=False)
            steps.append(None if sv is None else r.points(sv, f"{where}.step_velocities", horizon_steps))
        fut = []
        for j, f in enumerate(r.get(s, "future_detections", f"scenes[{i}]", required=False) or []):
            where = f"scenes[{i}].future_detections[{j}]"
            pos = r.points([r.get(f, "position", where)], f"{where}.position", 1)[0]
            back = r.points(r.get(f, "back_offsets", where), f"{where}.back_offsets", horizon_steps)
            fut.append(FutureDetection(tuple(pos), r.score(f, "score", where), back))
        have_steps = [x is not None for x in steps]
        out[s["scene_id"]] = DetScene(dets, fut, steps if have_steps and all(have_steps) else None)
    return out


def load_dets(path, horizon_steps: int) -> dict[str, DetScene]:
    doc, _ = _parse(path)
    return dets_from_dict(doc, horizon_steps, str(path))


def dump_dets(path, scenes) -> None:
    write_json(path, dets_to_dict(scenes))


# ---------------------------------------------------------------------------
# reports


def report_to_json(report: EvalReport) -> str:
    return canonical_json(report.to_dict(), indent=1) + "\n"


def report_from_json(text: str) -> EvalReport:
    return EvalReport.from_dict(json.loads(text))


def dump_report(path, report: EvalReport) -> None:
    Path(path).write_text(report_to_json(report), encoding="utf-8")


def load_report(path) -> EvalReport:
    return report_from_json(Path(path).read_text(encoding="utf-8"))


def write_pr_csv(report: EvalReport, directory) -> list[Path]:
    """One ``recall,precision`` CSV per (subclass, threshold pair) curve."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for key, pts in sorted(report.pr_curves.items()):
        name = key.replace("@", "_").replace("/", "-") + ".csv"
        p = d / name
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["recall", "precision"])
            for r, pr in pts:
                w.writerow([repr(r), repr(pr)])
        written.append(p)
    return written


def scenes_digest(scenes: dict, timeline: Timeline) -> str:
    """sha256 of the canonical JSON of in-memory GT or prediction scenes."""
    sample = next((x for v in scenes.values() for x in v), None)
    if isinstance(sample, GtTrajectory):
        doc = gt_to_dict(timeline, scenes)
    else:
        doc = pred_to_dict(scenes)
    return "sha256:" + hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()
