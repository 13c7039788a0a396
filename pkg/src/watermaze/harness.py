"""Multi-run training, greedy evaluation and curve export.

Output files written by ``train_all``:

* ``metrics_L{seq_len}_run{run}.csv`` per run, one row per episode
* ``model_L{seq_len}_run{run}.mwmq`` final online-network checkpoint
* ``config.txt`` resolved run configuration
* ``manifest.csv`` one row per artifact, with seed and platform centre
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import config as config_mod
from .checkpoint import CheckpointShapeError, load_checkpoint, save_checkpoint
from .dqn import pad_context, run_training
from .env import Action, Termination, WaterMaze, sample_platform

log = logging.getLogger(__name__)

METRICS_HEADER = ["episode", "steps", "total_reward", "epsilon", "mean_loss", "success", "seq_len", "run", "seed"]
TRAJECTORY_HEADER = ["step", "x", "y", "heading", "action", "reward", "done"]
MANIFEST_HEADER = ["kind", "path", "seq_len", "run", "seed", "platform_x", "platform_y"]

ROTATIONS = (Action.TURN_LEFT, Action.TURN_RIGHT)


def derive_seed(base_seed, seq_len, run):
    """Independent, reproducible 63-bit seed per (base, seq_len, run)."""
    state = np.random.SeedSequence([base_seed, seq_len, run]).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def run_streams(seed):
    """Platform and environment generators derived from a run seed."""
    platform_ss, env_ss = np.random.SeedSequence([seed, 1]).spawn(2)
    return np.random.default_rng(platform_ss), np.random.default_rng(env_ss)


def write_metrics(path, rows, seq_len, run, seed):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([r.episode, r.steps, repr(r.total_reward), repr(r.epsilon), repr(r.mean_loss),
                        int(r.success), seq_len, run, seed])


def read_metrics(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def train_all(cfg, progress=None):
    """Train every (seq_len, run) pair of ``cfg``; returns the manifest rows."""
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(config_mod.dump(cfg), encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot write to output directory {out}: {e}") from None

    manifest = [["config", "config.txt", "", "", cfg.seed, "", ""]]
    for seq_len in cfg.seq_lens:
        for run in range(cfg.runs):
            seed = derive_seed(cfg.seed, seq_len, run)
            platform_rng, env_rng = run_streams(seed)
            platform = sample_platform(platform_rng, cfg.env)
            env = WaterMaze(cfg.env, platform, seed=env_rng)
            log.info("training seq_len=%d run=%d seed=%d platform=(%.3f, %.3f)", seq_len, run, seed, *platform)
            rows, trainer = run_training(env, cfg.model_for(seq_len), cfg.train_for(seq_len, seed), progress)

            metrics = f"metrics_L{seq_len}_run{run}.csv"
            ckpt = f"model_L{seq_len}_run{run}.mwmq"
            write_metrics(out / metrics, rows, seq_len, run, seed)
            save_checkpoint(trainer.online, out / ckpt)
            px, py = repr(float(platform[0])), repr(float(platform[1]))
            manifest.append(["metrics", metrics, seq_len, run, seed, px, py])
            manifest.append(["checkpoint", ckpt, seq_len, run, seed, px, py])

    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_HEADER)
        w.writerows(manifest)
    return manifest


def detect_oscillation(actions, window=20):
    """True iff some ``window`` consecutive actions strictly alternate L/R."""
    run = 0
    prev = None
    for a in actions:
        a = int(a)
        if a in ROTATIONS and (run == 0 or a != prev):
            run += 1
        elif a in ROTATIONS:
            run = 1
        else:
            run = 0
        prev = a
        if run >= window:
            return True
    return False


@dataclass
class EpisodeResult:
    steps: int
    total_reward: float
    success: bool
    collisions: int
    oscillating: bool
    trajectory: list


@dataclass
class EvalReport:
    episodes: int
    success_rate: float
    mean_steps: float
    median_steps: float
    mean_reward: float
    collision_count: int
    oscillation_rate: float

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def play_episode(env, policy, oscillation_window=20):
    """Roll out one episode; ``policy`` maps the observation history to an action.

    Trajectory row 0 is the spawn pose (action -1, reward 0); row t > 0 is
    the pose after action t.
    """
    pose, obs = env.reset()
    history = [obs]
    trajectory = [(0, pose.x, pose.y, pose.heading, -1, 0.0, False)]
    actions, rewards = [], []
    collisions = 0
    result = None
    while not env.done:
        a = int(policy(history))
        result = env.step(a)
        history.append(result.observation)
        actions.append(a)
        rewards.append(result.reward)
        collisions += result.collided
        p = env.pose
        trajectory.append((len(actions), p.x, p.y, p.heading, a, result.reward, result.done))
    return EpisodeResult(
        steps=len(actions),
        total_reward=math.fsum(rewards),
        success=result.termination is Termination.PLATFORM,
        collisions=collisions,
        oscillating=detect_oscillation(actions, oscillation_window),
        trajectory=trajectory,
    )


def summarize(results):
    steps = [r.steps for r in results]
    n = len(results)
    return EvalReport(
        episodes=n,
        success_rate=sum(r.success for r in results) / n,
        mean_steps=statistics.fmean(steps),
        median_steps=float(statistics.median(steps)),
        mean_reward=statistics.fmean(r.total_reward for r in results),
        collision_count=sum(r.collisions for r in results),
        oscillation_rate=sum(r.oscillating for r in results) / n,
    )


def greedy_policy(model):
    n = model.config.max_seq_len
    return lambda history: model.act_greedy(pad_context(history, n))


def random_policy(rng, num_actions=4):
    return lambda history: int(rng.integers(num_actions))


def evaluate(env, policy, episodes, oscillation_window=20):
    results = [play_episode(env, policy, oscillation_window) for _ in range(episodes)]
    return summarize(results), results


def write_trajectory(path, trajectory):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for step, x, y, heading, action, reward, done in trajectory:
            w.writerow([step, f"{x:.16e}", f"{y:.16e}", f"{heading:.16e}", action, f"{reward:.16e}", int(done)])


def read_manifest(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def lookup_run(checkpoint):
    """(platform, config) recorded next to ``checkpoint`` by ``train_all``, if any."""
    ckpt = Path(checkpoint)
    manifest = ckpt.parent / "manifest.csv"
    if not manifest.exists():
        return None, None
    platform = None
    for row in read_manifest(manifest):
        if row["kind"] == "checkpoint" and row["path"] == ckpt.name:
            platform = (float(row["platform_x"]), float(row["platform_y"]))
    cfg_file = ckpt.parent / "config.txt"
    cfg = config_mod.load(cfg_file) if cfg_file.exists() else None
    return platform, cfg


def evaluate_checkpoint(checkpoint, episodes, cfg=None, platform=None, seed=0, trajectories=None,
                        oscillation_window=None):
    """Greedy (eps = 0, dropout off) evaluation of a saved model."""
    found_platform, found_cfg = lookup_run(checkpoint)
    cfg = cfg or found_cfg or config_mod.RunConfig()
    platform = platform if platform is not None else found_platform
    if platform is None:
        raise ValueError("platform location unknown: pass --platform or keep manifest.csv beside the checkpoint")
    model = load_checkpoint(checkpoint)
    if model.config.obs_dim != cfg.env.obs_dim:
        raise CheckpointShapeError(
            f"checkpoint expects {model.config.obs_dim}-dim observations, environment gives {cfg.env.obs_dim}"
        )
    env = WaterMaze(cfg.env, platform, seed=seed)
    window = oscillation_window or cfg.oscillation_window
    report, results = evaluate(env, greedy_policy(model), episodes, window)
    if trajectories is not None:
        tdir = Path(trajectories)
        tdir.mkdir(parents=True, exist_ok=True)
        for i, r in enumerate(results):
            write_trajectory(tdir / f"episode_{i:04d}.csv", r.trajectory)
    return report


def ema(series, alpha):
    out = np.empty(len(series))
    acc = None
    for i, x in enumerate(series):
        acc = x if acc is None else alpha * x + (1.0 - alpha) * acc
        out[i] = acc
    return out


_METRICS_NAME = re.compile(r"metrics_L(\d+)_run(\d+)\.csv$")


def export_curves(in_dir, alpha, out_file):
    """Smoothed reward/step curves per sequence length, mean and spread over runs.

    Each run is EMA-smoothed first; the mean and the population standard
    deviation are then taken across the smoothed runs.
    """
    groups = {}
    for path in sorted(Path(in_dir).glob("metrics_L*_run*.csv")):
        m = _METRICS_NAME.search(path.name)
        if m:
            groups.setdefault(int(m.group(1)), []).append(read_metrics(path))
    if not groups:
        raise ValueError(f"no metrics files in {in_dir}")

    with open(out_file, "w", newline="") as fh:
        fh.write(f"# ema_alpha={alpha}; std across runs computed after per-run EMA smoothing\n")
        w = csv.writer(fh)
        w.writerow(["seq_len", "episode", "reward_ema", "reward_std", "steps_ema", "steps_std", "runs"])
        for seq_len in sorted(groups):
            runs = groups[seq_len]
            lengths = {len(r) for r in runs}
            if len(lengths) != 1:
                raise ValueError(f"seq_len {seq_len}: runs have different episode counts {sorted(lengths)}")
            rewards = np.array([ema([float(row["total_reward"]) for row in r], alpha) for r in runs])
            steps = np.array([ema([float(row["steps"]) for row in r], alpha) for r in runs])
            for i in range(rewards.shape[1]):
                w.writerow([seq_len, i, repr(float(rewards[:, i].mean())), repr(float(rewards[:, i].std())),
                            repr(float(steps[:, i].mean())), repr(float(steps[:, i].std())), len(runs)])
