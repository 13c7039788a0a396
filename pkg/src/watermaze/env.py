"""Circular water maze with a hidden platform and ray-cast vision.

The agent sees the pool wall through ``num_rays`` sight lines spread evenly
over its field of view. Each sight line reports the distance to the wall
and the wall colour there: 0 for plain wall, 1 for the landmark arc.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
LANDMARK_ARC = TWO_PI / 8.0

WALL = 0
LANDMARK = 1


class GeometryError(ValueError):
    pass


class EpisodeFinishedError(RuntimeError):
    pass


class Action(enum.IntEnum):
    NOOP = 0
    FORWARD = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3


class Termination(enum.Enum):
    NONE = "none"
    PLATFORM = "platform"
    STEP_LIMIT = "step_limit"


@dataclass(frozen=True)
class EnvConfig:
    maze_radius: float = 10.0
    platform_radius: float = 0.75
    platform_spawn_radius: float = 5.0
    landmark_start: float = 0.0
    fov: float = 1.0
    num_rays: int = 12
    forward_step: float = 1.0
    turn_step: float = 0.2
    max_steps: int = 500
    reward_platform: float = 1.0
    reward_collision: float = -0.3
    reward_step: float = -0.0003

    def __post_init__(self):
        if not self.maze_radius > self.platform_radius > 0:
            raise ValueError("need maze_radius > platform_radius > 0")
        if self.platform_spawn_radius + self.platform_radius > self.maze_radius:
            raise ValueError("platform_spawn_radius + platform_radius must not exceed maze_radius")
        if self.num_rays < 2:
            raise ValueError("num_rays must be at least 2")
        if not 0 < self.fov < math.pi:
            raise ValueError("fov must lie in (0, pi)")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @property
    def landmark_arc(self):
        """Half-open interval [start, start + 2*pi/8) in radians."""
        return (self.landmark_start, self.landmark_start + LANDMARK_ARC)

    @property
    def obs_dim(self):
        return 2 * self.num_rays

    def ray_offsets(self):
        """Angular offsets from the heading, leftmost (most positive) first."""
        k = np.arange(self.num_rays)
        return self.fov / 2.0 - k * self.fov / (self.num_rays - 1)


@dataclass
class Pose:
    x: float
    y: float
    heading: float

    @property
    def position(self):
        return np.array([self.x, self.y])


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    termination: Termination
    collided: bool


def wrap_angle(a):
    a = a % TWO_PI
    # a tiny negative input rounds up to exactly 2*pi
    return 0.0 if a >= TWO_PI else a


def ray_distance(origin, direction, radius):
    """Distance from an interior ``origin`` along unit ``direction`` to the circle."""
    ox, oy = origin
    ux, uy = direction
    b = ox * ux + oy * uy
    disc = b * b + radius * radius - (ox * ox + oy * oy)
    if disc < 0.0:
        if disc < -1e-9 * radius * radius:
            raise GeometryError(f"ray origin {origin} lies outside radius {radius}")
        disc = 0.0
    return max(0.0, -b + math.sqrt(disc))


def boundary_color(angle, config=None):
    """Colour code of the wall at polar ``angle``."""
    start = 0.0 if config is None else config.landmark_start
    return LANDMARK if (angle - start) % TWO_PI < LANDMARK_ARC else WALL


def cast_rays(pose, config):
    """Observation vector: (distance, colour) per sight line, interleaved."""
    r = config.maze_radius
    angles = pose.heading + config.ray_offsets()
    ux, uy = np.cos(angles), np.sin(angles)
    b = pose.x * ux + pose.y * uy
    disc = b * b + r * r - (pose.x * pose.x + pose.y * pose.y)
    if np.any(disc < -1e-9 * r * r):
        raise GeometryError(f"pose ({pose.x}, {pose.y}) lies outside the maze")
    dist = np.maximum(0.0, -b + np.sqrt(np.maximum(disc, 0.0)))
    hit = np.arctan2(pose.y + dist * uy, pose.x + dist * ux)
    colors = ((hit - config.landmark_start) % TWO_PI < LANDMARK_ARC).astype(np.float64)
    obs = np.empty(2 * config.num_rays)
    obs[0::2] = dist
    obs[1::2] = colors
    return obs


def sample_platform(rng, config):
    """Area-uniform point in the disk of radius ``platform_spawn_radius``.

    ``rng`` may be a seed or a numpy Generator.
    """
    rng = np.random.default_rng(rng)
    u, theta = rng.random(), rng.random() * TWO_PI
    rad = config.platform_spawn_radius * math.sqrt(u)
    return np.array([rad * math.cos(theta), rad * math.sin(theta)])


class WaterMaze:
    """One maze instance: fixed platform, random start on the wall each episode."""

    def __init__(self, config=None, platform=(0.0, 0.0), seed=None):
        self.config = config or EnvConfig()
        self.platform = np.asarray(platform, dtype=np.float64)
        if np.hypot(*self.platform) > self.config.platform_spawn_radius + 1e-12:
            raise ValueError("platform centre lies outside the spawn disk")
        self.rng = np.random.default_rng(seed)
        self.pose = None
        self.steps = 0
        self.done = True

    def reset(self, seed=None, spawn_angle=None):
        """Start a new episode on the wall facing the centre.

        ``spawn_angle`` pins the start position; otherwise it is drawn
        uniformly from the environment's generator.
        """
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        beta = self.rng.random() * TWO_PI if spawn_angle is None else wrap_angle(spawn_angle)
        r = self.config.maze_radius
        self.pose = Pose(r * math.cos(beta), r * math.sin(beta), wrap_angle(beta + math.pi))
        self.steps = 0
        self.done = False
        return self.pose, self.observe()

    def observe(self):
        return cast_rays(self.pose, self.config)

    def on_platform(self):
        return math.hypot(self.pose.x - self.platform[0], self.pose.y - self.platform[1]) <= self.config.platform_radius

    def step(self, action):
        if self.done:
            raise EpisodeFinishedError("episode is over; call reset()")
        cfg = self.config
        action = Action(action)
        collided = False
        if action == Action.TURN_LEFT:
            self.pose.heading = wrap_angle(self.pose.heading + cfg.turn_step)
        elif action == Action.TURN_RIGHT:
            self.pose.heading = wrap_angle(self.pose.heading - cfg.turn_step)
        elif action == Action.FORWARD:
            nx = self.pose.x + cfg.forward_step * math.cos(self.pose.heading)
            ny = self.pose.y + cfg.forward_step * math.sin(self.pose.heading)
            if math.hypot(nx, ny) >= cfg.maze_radius:
                collided = True
            else:
                self.pose.x, self.pose.y = nx, ny
        self.steps += 1

        reward = cfg.reward_step
        if collided:
            reward += cfg.reward_collision
        termination = Termination.NONE
        if self.on_platform():
            reward += cfg.reward_platform
            termination = Termination.PLATFORM
        elif self.steps >= cfg.max_steps:
            termination = Termination.STEP_LIMIT
        self.done = termination is not Termination.NONE
        return StepResult(self.observe(), reward, self.done, termination, collided)
