"""Deterministic kinematic hexapod gait model.

Each leg runs an open-loop periodic controller: a square wave with
amplitude / phase / duty parameters per motor group, smoothed by a
5-sample circular moving average over the fixed 100-step, 1-second
grid.  Motor 1 swings the leg along the body x axis, motor 2 lifts it
(motor 3 mirrors motor 2 to keep the foot perpendicular).

Stance kinematics: a leg is load-bearing for the whole second iff its
ground-contact duty (fraction of steps with m2 < 0) exceeds the 30%
threshold that also defines its secondary-descriptor bit, and it is
not blocked by damage.  At every timestep, each load-bearing leg in
its contact phase (m2 < 0) pins its foot to the ground at an offset
0.15*m1 along body x from its anchor; the body twist (vx, vy, w) is
the least-squares rigid motion that matches all pinned-foot velocity
demands.  The pose is integrated with 0.01 s Euler steps.

Gating load on the duty bit makes damage invariance exact: an elite
whose contact bits exclude leg l produces a bit-identical outcome
with and without leg l blocked, because the leg never joins the
stance set in either case.

Contributions to the normal equations are accumulated over mirrored
leg pairs (1,4), (2,5), (3,6) first, so left/right symmetric gaits
cancel to exactly zero lateral and yaw motion in floating point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .geom import Pose2, wrap_angle

_PAIR_ORDER = (0, 3, 1, 4, 2, 5)


@dataclass(frozen=True)
class LegParams:
    """Amplitude/phase/duty for motor 1 and for motors 2-3, each in [0,1]."""

    a1: float
    p1: float
    d1: float
    a2: float
    p2: float
    d2: float

    @classmethod
    def from_array(cls, values) -> "LegParams":
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.p1, self.d1, self.a2, self.p2, self.d2])


@dataclass(frozen=True)
class DamageSpec:
    """Legs (1-based) blocked in the air for a whole episode."""

    blocked_legs: frozenset[int] = frozenset()

    def __post_init__(self):
        if not all(1 <= l <= 6 for l in self.blocked_legs):
            raise ValueError(f"leg ids must be in 1..6, got {self.blocked_legs}")

    @property
    def key(self) -> tuple[int, ...]:
        return tuple(sorted(self.blocked_legs))


NO_DAMAGE = DamageSpec()

#: the 7 benchmark scenarios: each single leg, then both middle legs
BENCHMARK_DAMAGES = tuple(
    DamageSpec(frozenset({l})) for l in range(1, 7)
) + (DamageSpec(frozenset({2, 5})),)

DAMAGE_NAMES = {
    "none": NO_DAMAGE,
    **{f"leg{l}": DamageSpec(frozenset({l})) for l in range(1, 7)},
    "middle-both": DamageSpec(frozenset({2, 5})),
}


def damage_name(dmg: DamageSpec) -> str:
    for name, d in DAMAGE_NAMES.items():
        if d.key == dmg.key:
            return name
    return "+".join(f"leg{l}" for l in dmg.key)


@dataclass
class StepOutcome:
    """Result of one second of walking."""

    displacement: Pose2
    contact_bits: np.ndarray        # uint8, per leg
    duty_fractions: np.ndarray      # float, per leg
    energy: float


class SimModel:
    """Precomputed constants for a given configuration."""

    def __init__(self, cfg: Config | None = None):
        cfg = cfg or Config()
        self.cfg = cfg
        self.n_steps = cfg.sim_steps
        self.dt = cfg.sim_dt
        self.stride = cfg.stride_scale
        self.window = cfg.smooth_window
        self.duty_threshold = cfg.contact_duty_threshold
        self.t = np.arange(self.n_steps) * self.dt
        anchors = np.asarray(cfg.anchors, dtype=np.float64)
        self.rx = anchors[:, 0].copy()
        self.ry = anchors[:, 1].copy()
        # per-leg constant block of the normal equations, rows
        # (1, 0, -ry | -df) and (0, 1, rx | 0)
        k = np.zeros((6, 3, 3))
        k[:, 0, 0] = 1.0
        k[:, 1, 1] = 1.0
        k[:, 0, 2] = -self.ry
        k[:, 2, 0] = -self.ry
        k[:, 1, 2] = self.rx
        k[:, 2, 1] = self.rx
        k[:, 2, 2] = self.rx ** 2 + self.ry ** 2
        self.k_blocks = k
        self.perm = np.array(_PAIR_ORDER)


_DEFAULT = None


def default_model() -> SimModel:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = SimModel()
    return _DEFAULT


def _smooth_circular(x: np.ndarray, window: int) -> np.ndarray:
    """Centered circular moving average along the last axis."""
    half = window // 2
    acc = x.copy()
    for off in range(1, half + 1):
        acc = acc + np.roll(x, off, axis=-1)
        acc = acc + np.roll(x, -off, axis=-1)
    return acc / window


def _signals(params: np.ndarray, model: SimModel):
    """Smoothed motor commands m1, m2 for a (n_legs, 6) parameter block."""
    t = model.t[None, :]
    a1, p1, d1 = params[:, 0:1], params[:, 1:2], params[:, 2:3]
    a2, p2, d2 = params[:, 3:4], params[:, 4:5], params[:, 5:6]
    raw1 = np.where((t + p1) % 1.0 < d1, a1, -a1)
    raw2 = np.where((t + p2) % 1.0 < d2, a2, -a2)
    return _smooth_circular(raw1, model.window), _smooth_circular(raw2, model.window)


def leg_signal(p, t: float, model: SimModel | None = None):
    """Motor commands (m1, m2, m3) for one leg at grid time t."""
    model = model or default_model()
    if isinstance(p, LegParams):
        p = p.as_array()
    m1, m2 = _signals(np.asarray(p, dtype=np.float64)[None, :], model)
    i = int(round(t / model.dt)) % model.n_steps
    return float(m1[0, i]), float(m2[0, i]), float(-m2[0, i])


def leg_descriptor(p, model: SimModel | None = None):
    """Bottom-layer descriptor (lift height, swing span, duty param) and
    the energy fitness (negated mean |command|)."""
    model = model or default_model()
    if isinstance(p, LegParams):
        p = p.as_array()
    p = np.asarray(p, dtype=np.float64)
    m1, m2 = _signals(p[None, :], model)
    m1, m2 = m1[0], m2[0]
    h = (m2.max() + 1.0) / 2.0
    d_swing = (m1.max() - m1.min()) / 2.0
    bd = np.array([h, d_swing, p[5]])
    energy = np.abs(m1).sum() + 2.0 * np.abs(m2).sum()
    fitness = -energy / (3.0 * model.n_steps)
    return bd, float(fitness)


def gait_step(leg_params, dmg: DamageSpec = NO_DAMAGE,
              model: SimModel | None = None) -> StepOutcome:
    """Walk for one second with the given six leg controllers."""
    model = model or default_model()
    params = np.asarray(leg_params, dtype=np.float64)
    if params.shape != (6, 6):
        raise ValueError(f"need a (6, 6) parameter block, got {params.shape}")
    n = model.n_steps

    m1, m2 = _signals(params, model)
    blocked = np.zeros(6, dtype=bool)
    for l in dmg.blocked_legs:
        blocked[l - 1] = True

    ground_phase = m2 < 0.0                       # (6, n)
    raw_duty = np.where(blocked, 0.0, ground_phase.mean(axis=1))
    bits = (raw_duty > model.duty_threshold).astype(np.uint8)
    load_bearing = bits.astype(bool)
    contact = ground_phase & load_bearing[:, None]   # (6, n)
    # reported duty counts load-bearing contact only: legs that never carry
    # load (bit 0, or blocked) read 0, so outcomes of unused legs are
    # unaffected by blocking them
    duty = contact.mean(axis=1)

    energy = float(np.abs(m1).sum() + 2.0 * np.abs(m2).sum())

    f = model.stride * m1                          # foot offset along body x
    df = (np.roll(f, -1, axis=1) - f) / model.dt   # circular forward difference

    perm = model.perm
    c = contact[perm].astype(np.float64)           # (6, n)
    kb = model.k_blocks[perm]                      # (6, 3, 3)
    dfp = df[perm]
    ryp = model.ry[perm]

    # normal-equation contributions, paired (left, right) so mirror-symmetric
    # gaits cancel exactly in floating point
    ata = (c[:, :, None, None] * kb[:, None, :, :]).reshape(3, 2, n, 3, 3)
    ata = ata.sum(axis=1).sum(axis=0)              # (n, 3, 3)
    bterm = np.zeros((6, n, 3))
    bterm[:, :, 0] = -dfp
    bterm[:, :, 2] = ryp[:, None] * dfp
    atb = (c[:, :, None] * bterm).reshape(3, 2, n, 3)
    atb = atb.sum(axis=1).sum(axis=0)              # (n, 3)

    ncontact = contact.sum(axis=0)                 # per step
    twist = np.zeros((n, 3))

    multi = ncontact >= 2
    if multi.any():
        twist[multi] = np.linalg.solve(ata[multi], atb[multi][:, :, None])[:, :, 0]

    single = ncontact == 1
    if single.any():
        leg = contact[:, single].argmax(axis=0)
        rx, ry = model.rx[leg], model.ry[leg]
        # minimum-norm solution of the two underdetermined rows
        b1 = -df[leg, np.flatnonzero(single)]
        det = 1.0 + rx ** 2 + ry ** 2
        twist[single, 0] = (1.0 + rx ** 2) * b1 / det
        twist[single, 1] = rx * ry * b1 / det
        twist[single, 2] = -ry * b1 / det

    vx, vy, om = twist[:, 0], twist[:, 1], twist[:, 2]
    om_dt = om * model.dt
    yaw_before = np.concatenate(([0.0], np.cumsum(om_dt)[:-1]))
    cy, sy = np.cos(yaw_before), np.sin(yaw_before)
    x = float(np.sum(model.dt * (cy * vx - sy * vy)))
    y = float(np.sum(model.dt * (sy * vx + cy * vy)))
    yaw = wrap_angle(float(np.sum(om_dt)))

    return StepOutcome(
        displacement=Pose2(x, y, yaw),
        contact_bits=bits,
        duty_fractions=duty,
        energy=energy,
    )
