"""Legitimate mobility models stepped once per simulated minute.

Every kernel is written over arrays of UEs (``*_batch``) so the engine can
advance a whole population per tick; the single-UE ``*_step`` functions wrap
the batch kernels with length-1 arrays, so both paths share one implementation.

Random draws per step are fixed-size regardless of branch (RWP: 4 uniforms,
GM: 2 standard normals, WP: none). That keeps each UE's stream position a pure
function of the step count, so pre-drawing blocks of randomness gives exactly
the same trajectory as drawing step by step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

MINUTES_PER_DAY = 1440

AT_HOME = "AT_HOME"
COMMUTING = "COMMUTING"
AT_OFFICE = "AT_OFFICE"
PAUSED = "PAUSED"
MOVING = "MOVING"

RWP_DRAWS = 4
GM_DRAWS = 2


@dataclass(frozen=True)
class MobilityState:
    position: tuple[float, float]
    speed: float = 0.0
    direction: float = 0.0
    mode: str = PAUSED
    # RWP: active destination, None when paused without a target
    destination: tuple[float, float] | None = None
    # GM: drift direction; mirrored together with ``direction`` at the walls
    mean_direction: float | None = None


@dataclass(frozen=True)
class WPParams:
    home: tuple[float, float]
    office: tuple[float, float]
    depart_home: float = 480.0
    depart_office: float = 1020.0
    commute_speed: float = 500.0

    def __post_init__(self):
        if not (0 <= self.depart_home < self.depart_office < MINUTES_PER_DAY):
            raise ValueError("need 0 <= depart_home < depart_office < 1440")
        if self.commute_speed <= 0:
            raise ValueError("commute_speed must be positive")

    @property
    def max_speed(self) -> float:
        return self.commute_speed


@dataclass(frozen=True)
class RWPParams:
    move_probability: float = 0.005
    speed_min: float = 200.0
    speed_max: float = 700.0

    def __post_init__(self):
        if not 0.0 <= self.move_probability <= 1.0:
            raise ValueError("move_probability must be in [0, 1]")
        if not 0.0 <= self.speed_min <= self.speed_max:
            raise ValueError("need 0 <= speed_min <= speed_max")

    @property
    def max_speed(self) -> float:
        return self.speed_max


@dataclass(frozen=True)
class GMParams:
    alpha: float = 0.75
    mean_speed: float = 80.0
    mean_direction: float = 0.0
    speed_stddev: float = 20.0
    direction_stddev: float = 0.6
    max_speed: float = 200.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.max_speed < 0 or self.mean_speed < 0:
            raise ValueError("speeds must be non-negative")


# -- boundary handling -------------------------------------------------------

def reflect(coord: np.ndarray, lo: float, hi: float):
    """Fold coordinates back into [lo, hi]; returns (folded, odd_reflection_mask)."""
    span = hi - lo
    if span <= 0:
        return np.full_like(coord, lo), np.zeros(coord.shape, dtype=bool)
    rel = coord - lo
    k = np.floor(rel / span)
    r = rel - k * span
    odd = (k.astype(np.int64) % 2) != 0
    folded = np.where(odd, span - r, r) + lo
    return np.clip(folded, lo, hi), odd


# -- working professional ----------------------------------------------------

def wp_positions(home, office, depart_home, depart_office, speed, minute_of_day) -> np.ndarray:
    """Closed-form WP position at ``minute_of_day`` for arrays of UEs."""
    home = np.asarray(home, dtype=float).reshape(-1, 2)
    office = np.asarray(office, dtype=float).reshape(-1, 2)
    dh = np.asarray(depart_home, dtype=float)
    do = np.asarray(depart_office, dtype=float)
    v = np.asarray(speed, dtype=float)
    m = float(minute_of_day)

    delta = office - home
    dist = np.hypot(delta[:, 0], delta[:, 1])
    unit = np.divide(delta, dist[:, None], out=np.zeros_like(delta), where=dist[:, None] > 0)

    out_travel = np.minimum(dist, v * np.clip(m - dh, 0.0, None))
    pos_out = home + unit * out_travel[:, None]

    # the evening leg starts wherever the morning leg stood at depart_office
    reached = np.minimum(dist, v * np.clip(do - dh, 0.0, None))
    evening_start = home + unit * reached[:, None]
    back = home - evening_start
    back_dist = np.hypot(back[:, 0], back[:, 1])
    back_unit = np.divide(back, back_dist[:, None], out=np.zeros_like(back), where=back_dist[:, None] > 0)
    back_travel = np.minimum(back_dist, v * np.clip(m - do, 0.0, None))
    pos_back = evening_start + back_unit * back_travel[:, None]

    before = (m < dh)[:, None]
    evening = (m >= do)[:, None]
    return np.where(before, home, np.where(evening, pos_back, pos_out))


def wp_step(state: MobilityState, params: WPParams, minute_of_day: int, rng=None) -> MobilityState:
    if not 0 <= minute_of_day < MINUTES_PER_DAY:
        raise ValueError(f"minute_of_day {minute_of_day} outside [0, 1440)")
    pos = wp_positions(params.home, params.office, [params.depart_home], [params.depart_office],
                       [params.commute_speed], minute_of_day)[0]
    pos = (float(pos[0]), float(pos[1]))
    if minute_of_day < params.depart_home:
        mode = AT_HOME
    elif minute_of_day < params.depart_office:
        mode = AT_OFFICE if pos == tuple(map(float, params.office)) else COMMUTING
    else:
        mode = AT_HOME if pos == tuple(map(float, params.home)) else COMMUTING
    moved = pos != state.position
    return replace(state, position=pos, mode=mode,
                   speed=params.commute_speed if moved else 0.0)


# -- random waypoint ---------------------------------------------------------

def rwp_batch(pos, dest, moving, speed, u, bounds, move_probability, speed_min, speed_max):
    """Advance RWP UEs one minute.

    ``u`` holds 4 uniforms per UE: move decision, destination x, destination y,
    speed. Destination and speed columns are only consumed when a paused UE
    starts a new leg. Returns new (pos, dest, moving, speed).
    """
    x0, y0, x1, y1 = bounds
    pos = np.array(pos, dtype=float)
    dest = np.array(dest, dtype=float)
    moving = np.array(moving, dtype=bool)
    speed = np.array(speed, dtype=float)
    p = np.broadcast_to(np.asarray(move_probability, dtype=float), moving.shape)
    smin = np.broadcast_to(np.asarray(speed_min, dtype=float), moving.shape)
    smax = np.broadcast_to(np.asarray(speed_max, dtype=float), moving.shape)

    start = (~moving) & (u[:, 0] < p)
    dest[start, 0] = x0 + u[start, 1] * (x1 - x0)
    dest[start, 1] = y0 + u[start, 2] * (y1 - y0)
    speed[start] = smin[start] + u[start, 3] * (smax[start] - smin[start])
    moving = moving | start

    delta = dest - pos
    dist = np.hypot(delta[:, 0], delta[:, 1])
    # tolerance absorbs accumulated rounding on legs that are an exact multiple of speed
    arrive = moving & (dist <= speed * (1.0 + 1e-9) + 1e-9)
    step = moving & ~arrive
    frac = np.divide(speed, dist, out=np.zeros_like(dist), where=dist > 0)
    pos[step] = pos[step] + delta[step] * frac[step, None]
    pos[arrive] = dest[arrive]
    moving = moving & ~arrive
    return pos, dest, moving, speed


def rwp_step(state: MobilityState, params: RWPParams, rng, bounds) -> MobilityState:
    u = rng.random(RWP_DRAWS)[None, :]
    moving = state.mode == MOVING and state.destination is not None
    dest = state.destination if moving else state.position
    pos, dest, mv, speed = rwp_batch(
        np.array([state.position]), np.array([dest]), np.array([moving]),
        np.array([state.speed]), u, bounds,
        params.move_probability, params.speed_min, params.speed_max)
    new_pos = (float(pos[0, 0]), float(pos[0, 1]))
    if mv[0]:
        return replace(state, position=new_pos, mode=MOVING, speed=float(speed[0]),
                       destination=(float(dest[0, 0]), float(dest[0, 1])))
    return replace(state, position=new_pos, mode=PAUSED, speed=float(speed[0]), destination=None)


# -- Gauss-Markov ------------------------------------------------------------

def gm_batch(pos, speed, direction, mean_direction, w, bounds,
             alpha, mean_speed, speed_stddev, direction_stddev, max_speed):
    """One Gauss-Markov update for arrays of UEs; ``w`` holds 2 standard normals per UE.

    Returns new (pos, speed, direction, mean_direction).
    """
    x0, y0, x1, y1 = bounds
    a = np.asarray(alpha, dtype=float)
    noise = np.sqrt(1.0 - a * a)
    speed = a * speed + (1.0 - a) * mean_speed + noise * speed_stddev * w[:, 0]
    speed = np.clip(speed, 0.0, max_speed)
    direction = a * direction + (1.0 - a) * mean_direction + noise * direction_stddev * w[:, 1]
    nx = pos[:, 0] + speed * np.cos(direction)
    ny = pos[:, 1] + speed * np.sin(direction)
    nx, flip_x = reflect(nx, x0, x1)
    ny, flip_y = reflect(ny, y0, y1)
    direction = np.where(flip_x, np.pi - direction, direction)
    mean_direction = np.where(flip_x, np.pi - mean_direction, mean_direction)
    direction = np.where(flip_y, -direction, direction)
    mean_direction = np.where(flip_y, -mean_direction, mean_direction)
    return np.stack([nx, ny], axis=1), speed, direction, mean_direction


def gm_step(state: MobilityState, params: GMParams, rng, bounds) -> MobilityState:
    w = rng.standard_normal(GM_DRAWS)[None, :]
    mean_dir = params.mean_direction if state.mean_direction is None else state.mean_direction
    pos, speed, direction, mean_dir = gm_batch(
        np.array([state.position], dtype=float), np.array([state.speed]),
        np.array([state.direction]), np.array([mean_dir]), w, bounds,
        params.alpha, params.mean_speed, params.speed_stddev,
        params.direction_stddev, params.max_speed)
    return replace(state, position=(float(pos[0, 0]), float(pos[0, 1])), speed=float(speed[0]),
                   direction=float(direction[0]), mean_direction=float(mean_dir[0]), mode=MOVING)


def max_speed(params) -> float:
    """Largest per-minute displacement a model can produce."""
    return float(params.max_speed)


def uniform_point(rng, bounds) -> tuple[float, float]:
    x0, y0, x1, y1 = bounds
    return (float(x0 + rng.random() * (x1 - x0)), float(y0 + rng.random() * (y1 - y0)))


def random_wp_params(rng, bounds, commute_speed=500.0,
                     home_window=(420, 540), office_window=(960, 1140)) -> WPParams:
    """Per-UE WP schedule: uniform home/office and departure minutes in the given windows."""
    home = uniform_point(rng, bounds)
    office = uniform_point(rng, bounds)
    dh = int(rng.integers(*home_window))
    do = int(rng.integers(*office_window))
    return WPParams(home, office, float(dh), float(do), commute_speed)
