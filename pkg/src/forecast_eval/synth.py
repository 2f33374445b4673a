"""Deterministic synthetic scenes and a noisy detector, plus the
constant-position vs constant-velocity metric breakdown experiment.

Every scene draws from its own generator seeded by ``(seed, scene_index, stream)``
so results do not depend on the order or the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .baselines import Detection, FutureDetection, constant_position, constant_velocity
from .core import (
    SUBCLASSES,
    BevBox,
    EvalConfig,
    ForecastCandidate,
    ForecastSet,
    GtTrajectory,
    MotionSubclass,
    Timeline,
)
from .metrics import evaluate
from .subclass import derive_subclass

GT_STREAM, DET_STREAM = 0, 1

_INTENDED = {
    "static": MotionSubclass.STATIC,
    "linear": MotionSubclass.LINEAR,
    "arc": MotionSubclass.NONLINEAR,
}


class SpecError(ValueError):
    """An agent spec is impossible or disagrees with the subclass rule."""


@dataclass(frozen=True)
class AgentSpec:
    motion: str  # "static" | "linear" | "arc"
    spawn: tuple[float, float]
    box_size: tuple[float, float] = (4.5, 2.0)
    speed: float = 0.0
    heading: float = 0.0
    turn_rate: float = 0.0

    @property
    def intended(self) -> MotionSubclass:
        return _INTENDED[self.motion]


def agent_states(spec: AgentSpec, timeline: Timeline) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form centers (T+1, 2) and yaws (T+1,) at offsets 0..T."""
    if spec.motion not in _INTENDED:
        raise SpecError(f"unknown motion model {spec.motion!r}")
    if spec.speed < 0:
        raise SpecError("speed must be non-negative")
    t = np.arange(timeline.horizon_steps + 1) * timeline.dt
    x0, y0 = spec.spawn
    h = spec.heading
    if spec.motion == "static":
        return np.tile([x0, y0], (len(t), 1)).astype(float), np.full(len(t), h)
    if spec.speed == 0:
        raise SpecError(f"{spec.motion} agent with zero speed never leaves its footprint")
    if spec.motion == "linear":
        pos = np.stack([x0 + spec.speed * t * math.cos(h), y0 + spec.speed * t * math.sin(h)], axis=1)
        return pos, np.full(len(t), h)
    w = spec.turn_rate
    if w == 0:
        raise SpecError("arc agent needs a non-zero turn rate")
    r = spec.speed / w
    yaw = h + w * t
    pos = np.stack([x0 + r * (np.sin(yaw) - math.sin(h)), y0 - r * (np.cos(yaw) - math.cos(h))], axis=1)
    return pos, yaw


def agent_trajectory(spec: AgentSpec, timeline: Timeline, instance_id: str) -> GtTrajectory:
    pos, yaw = agent_states(spec, timeline)
    L, W = spec.box_size
    boxes = [(o, BevBox(pos[o, 0], pos[o, 1], L, W, yaw[o])) for o in range(len(pos))]
    v0 = (spec.speed * math.cos(spec.heading), spec.speed * math.sin(spec.heading))
    return GtTrajectory.from_boxes(instance_id, boxes, timeline, velocity0=v0)


def _spec_subclass(spec: AgentSpec, timeline: Timeline) -> MotionSubclass:
    pos, yaw = agent_states(spec, timeline)
    L, W = spec.box_size
    first = BevBox(pos[0, 0], pos[0, 1], L, W, yaw[0])
    last = BevBox(pos[-1, 0], pos[-1, 1], L, W, yaw[-1])
    v0 = (spec.speed * math.cos(spec.heading), spec.speed * math.sin(spec.heading))
    return derive_subclass(first, last, v0, timeline.horizon_seconds)


def generate_scene(specs: Sequence[AgentSpec], timeline: Timeline, prefix: str = "") -> list[GtTrajectory]:
    """Ground truth for each spec; raises SpecError when a trajectory's derived
    subclass differs from the spec's intended one."""
    out = []
    for i, spec in enumerate(specs):
        gt = agent_trajectory(spec, timeline, f"{prefix}{i}")
        if gt.subclass is not spec.intended:
            raise SpecError(
                f"agent {i}: {spec.motion} spec classifies as {gt.subclass.value}, expected {spec.intended.value}"
            )
        out.append(gt)
    return out


@dataclass(frozen=True)
class Population:
    mixture: tuple[float, float, float] = (0.6, 0.25, 0.15)  # static, linear, non-linear
    n_agents: tuple[int, int] = (20, 40)
    extent: float = 100.0
    box_size: tuple[float, float] = (4.5, 2.0)
    linear_speed: tuple[float, float] = (3.5, 8.0)
    arc_speed: tuple[float, float] = (4.0, 8.0)
    turn_rate: tuple[float, float] = (0.3, 0.8)
    # movers whose endpoint is within this distance of the start are re-drawn
    min_displacement: float = 0.0

    def __post_init__(self):
        if any(p < 0 for p in self.mixture) or not math.isclose(sum(self.mixture), 1.0, abs_tol=1e-9):
            raise ValueError("mixture proportions must be non-negative and sum to 1")


MAX_DRAWS = 1000


def sample_agent(kind: str, rng: np.random.Generator, pop: Population, timeline: Timeline) -> AgentSpec:
    """Draw one agent of ``kind``, rejecting draws the subclass rule would label differently."""
    H = timeline.horizon_seconds
    for _ in range(MAX_DRAWS):
        spawn = tuple(rng.uniform(0.0, pop.extent, size=2))
        heading = rng.uniform(-math.pi, math.pi)
        if kind == "static":
            spec = AgentSpec("static", spawn, pop.box_size, heading=heading)
        elif kind == "linear":
            spec = AgentSpec("linear", spawn, pop.box_size, rng.uniform(*pop.linear_speed), heading)
        else:
            w = rng.uniform(*pop.turn_rate) * rng.choice([-1.0, 1.0])
            spec = AgentSpec("arc", spawn, pop.box_size, rng.uniform(*pop.arc_speed), heading, w)
        pos, _ = agent_states(spec, timeline)
        if kind != "static" and math.hypot(*(pos[-1] - pos[0])) <= pop.min_displacement:
            continue
        if _spec_subclass(spec, timeline) is spec.intended:
            return spec
    raise SpecError(f"could not draw a {kind} agent consistent with the subclass rule (H={H}s)")


def sample_scene_specs(pop: Population, timeline: Timeline, rng: np.random.Generator) -> list[AgentSpec]:
    n = int(rng.integers(pop.n_agents[0], pop.n_agents[1] + 1))
    kinds = rng.choice(["static", "linear", "arc"], size=n, p=list(pop.mixture))
    return [sample_agent(str(k), rng, pop, timeline) for k in kinds]


@dataclass(frozen=True)
class NoiseModel:
    pos_sigma: float = 0.0
    vel_sigma: float = 0.0
    drop_prob: float = 0.0
    clutter_rate: float = 0.0
    score_jitter: float = 0.02
    clutter_score: tuple[float, float] = (0.05, 0.3)
    seed: int = 0

    def __post_init__(self):
        if min(self.pos_sigma, self.vel_sigma, self.score_jitter) < 0:
            raise ValueError("noise magnitudes must be non-negative")
        if not 0 <= self.drop_prob <= 1:
            raise ValueError("drop_prob must lie in [0, 1]")
        if self.clutter_rate < 0:
            raise ValueError("clutter_rate must be non-negative")

    def score(self, err: float, rng: np.random.Generator) -> float:
        """Monotone in positional error: clamp(1 - err / (3 sigma), 0.05, 1) minus a small jitter."""
        base = 1.0 if self.pos_sigma == 0 else 1.0 - err / (3.0 * self.pos_sigma)
        jitter = self.score_jitter * rng.random() if self.score_jitter > 0 else 0.0
        return float(min(1.0, max(0.05, base - jitter)))


@dataclass
class SceneDetections:
    current: list[Detection]
    future: list[FutureDetection]


def simulate_detector(
    gts: Sequence[GtTrajectory],
    noise: NoiseModel,
    timeline: Timeline,
    rng: Optional[np.random.Generator] = None,
    extent: float = 100.0,
) -> SceneDetections:
    """Noisy current-frame and final-frame detections of ``gts`` plus Poisson clutter."""
    rng = np.random.default_rng(noise.seed) if rng is None else rng
    T, dt = timeline.horizon_steps, timeline.dt
    current, future = [], []
    for g in gts:
        pos = g.positions
        if rng.random() >= noise.drop_prob:
            e = rng.normal(0.0, noise.pos_sigma, 2) if noise.pos_sigma > 0 else np.zeros(2)
            v = np.array(g.velocity0 or (0.0, 0.0))
            if noise.vel_sigma > 0:
                v = v + rng.normal(0.0, noise.vel_sigma, 2)
            b = g.first
            current.append(
                Detection(b.moved_to(b.cx + e[0], b.cy + e[1]), noise.score(math.hypot(*e), rng), tuple(v))
            )
        if g.complete and rng.random() >= noise.drop_prob:
            e = rng.normal(0.0, noise.pos_sigma, 2) if noise.pos_sigma > 0 else np.zeros(2)
            back = pos[:-1] - pos[1:]
            if noise.vel_sigma > 0:
                back = back + rng.normal(0.0, noise.vel_sigma * dt, back.shape)
            future.append(FutureDetection(tuple(pos[T] + e), noise.score(math.hypot(*e), rng), back))
    n_clutter = int(rng.poisson(noise.clutter_rate)) if noise.clutter_rate > 0 else 0
    L, W = (gts[0].first.length, gts[0].first.width) if gts else (4.5, 2.0)
    for _ in range(n_clutter):
        x, y = rng.uniform(0.0, extent, 2)
        v = rng.normal(0.0, noise.vel_sigma, 2) if noise.vel_sigma > 0 else np.zeros(2)
        current.append(
            Detection(BevBox(x, y, L, W, rng.uniform(-math.pi, math.pi)), rng.uniform(*noise.clutter_score), tuple(v))
        )
        fx, fy = rng.uniform(0.0, extent, 2)
        back = rng.normal(0.0, noise.vel_sigma * dt, (T, 2)) if noise.vel_sigma > 0 else np.zeros((T, 2))
        future.append(FutureDetection((fx, fy), rng.uniform(*noise.clutter_score), back))
    return SceneDetections(current, future)


def scene_rng(seed: int, scene_index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(scene_index), int(stream)])


@dataclass
class World:
    timeline: Timeline
    gt_scenes: dict[str, list[GtTrajectory]]
    detections: dict[str, SceneDetections]


def simulate_world(
    n_scenes: int,
    pop: Population,
    noise: NoiseModel,
    timeline: Timeline,
    seed: int,
    workers: int = 1,
) -> World:
    def one(i: int):
        specs = sample_scene_specs(pop, timeline, scene_rng(seed, i, GT_STREAM))
        gts = generate_scene(specs, timeline, prefix=f"s{i:05d}_")
        dets = simulate_detector(gts, noise, timeline, scene_rng(seed, i, DET_STREAM), pop.extent)
        return gts, dets

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, range(n_scenes)))
    else:
        results = [one(i) for i in range(n_scenes)]
    names = [f"scene-{i:05d}" for i in range(n_scenes)]
    return World(
        timeline,
        {n: r[0] for n, r in zip(names, results)},
        {n: r[1] for n, r in zip(names, results)},
    )


def oracle_forecasts(gts: Sequence[GtTrajectory]) -> list[ForecastSet]:
    """Perfect detector and forecaster: GT anchors with the true future path."""
    out = []
    for g in gts:
        if not g.complete:
            continue
        out.append(ForecastSet(g.first, 1.0, (ForecastCandidate(g.positions[1:], 1.0),)))
    return out


@dataclass
class BreakdownConfig:
    n_scenes: int = 200
    population: Population = field(default_factory=Population)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(pos_sigma=0.1, vel_sigma=0.3, drop_prob=0.02, clutter_rate=1.0))
    eval: EvalConfig = field(default_factory=EvalConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "BreakdownConfig":
        pop = Population(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.get("population", {}).items()})
        noise = NoiseModel(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.get("noise", {}).items()})
        ev = EvalConfig.from_dict(d["eval"]) if "eval" in d else EvalConfig()
        return cls(int(d.get("n_scenes", cls.n_scenes)), pop, noise, ev)

    def to_dict(self) -> dict:
        return {
            "n_scenes": self.n_scenes,
            "population": asdict(self.population),
            "noise": asdict(self.noise),
            "eval": self.eval.to_dict(),
        }


BREAKDOWN_METHODS = ("oracle", "const-pos", "const-vel")


def _row(method: str, report) -> dict:
    lg = report.legacy
    row = {"method": method}
    for r, v in lg["ade_at_recall"].items():
        row[f"ade@{r}"] = v
        row[f"fde@{r}"] = lg["fde_at_recall"][r]
    row.update(ade_avg=lg["ade_avg_recall"], fde_avg=lg["fde_avg_recall"], miss_rate=lg["miss_rate"])
    for s in SUBCLASSES:
        row[f"ap_f_{s.value}"] = report.ap_f[s.value]
    row["map_f"] = report.map_f
    row["map_det"] = report.map_det
    return row


def run_breakdown_experiment(cfg: BreakdownConfig, seed: int, workers: int = 1) -> list[dict]:
    """Evaluate oracle, re-ranked constant position and constant velocity on one
    synthetic world; returns one row of legacy metrics and AP_f per method."""
    tl = cfg.eval.timeline
    world = simulate_world(cfg.n_scenes, cfg.population, cfg.noise, tl, seed, workers)
    preds = {
        "oracle": {s: oracle_forecasts(g) for s, g in world.gt_scenes.items()},
        "const-pos": {s: constant_position(d.current, tl, rerank_stationary=True) for s, d in world.detections.items()},
        "const-vel": {s: constant_velocity(d.current, tl) for s, d in world.detections.items()},
    }
    rows = []
    for m in BREAKDOWN_METHODS:
        report = evaluate(world.gt_scenes, preds[m], cfg.eval, workers=workers, digests={})
        rows.append(_row(m, report))
    return rows


def format_breakdown(rows: Sequence[dict]) -> str:
    cols = [c for c in rows[0] if c != "method"]
    head = f"{'method':<10} " + " ".join(f"{c:>16}" for c in cols)
    lines = [head]
    for r in rows:
        cells = " ".join(f"{'n/a':>16}" if r[c] is None else f"{r[c]:>16.3f}" for c in cols)
        lines.append(f"{r['method']:<10} {cells}")
    return "\n".join(lines)
