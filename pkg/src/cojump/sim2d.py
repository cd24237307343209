"""Planar rigid-body dynamics for a launcher/jumper robot pair.

Each robot is a rigid box with two prismatic legs. Generalized coordinates
per robot are ``(x, z, pitch, l_front, l_rear)``; every leg ends in a point
foot with its own mass, so the equations of motion come from a small 5x5
mass matrix solved per robot and environment. Everything is batched over a
leading environment axis ``N``; agent index 0 is the launcher, 1 the jumper.

Pitch is positive nose-down, so a forward flip accumulates positive pitch.
Body frame axes in world coordinates are ``e1 = (cos p, -sin p)`` (forward)
and ``e2 = (sin p, cos p)`` (up).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

LAUNCHER, JUMPER = 0, 1
N_AGENTS = 2
N_DOF = 5
CONTROL_DT = 0.02
N_SUBSTEPS = 10


class Surface(enum.IntEnum):
    GROUND = 0
    LAUNCHER_PLATFORM = 1
    TARGET_PLATFORM = 2


class Foot(enum.IntEnum):
    FRONT = 0
    REAR = 1


@dataclass(frozen=True)
class RobotConfig:
    """Physical parameters of one planar robot.

    ``mass`` is the total mass (body plus both feet). Leg geometry is given
    as fore/aft attachment offsets along the body axis.
    """

    mass: float
    inertia: float
    foot_mass: float
    half_length: float
    half_height: float
    attach_offsets: tuple[float, float]
    default_rest_lengths: tuple[float, float]
    min_length: float
    max_length: float
    pd_kp: float
    pd_kd: float
    force_limit: float
    platform_mount_height: float = 0.0
    platform_half_length: float = 0.0

    def __post_init__(self):
        if self.mass <= 0 or self.inertia <= 0:
            raise ValueError("mass and inertia must be positive")
        if not 0 < self.foot_mass < self.mass / 2:
            raise ValueError("foot_mass must be positive and below half the total mass")
        if not 0 < self.min_length < self.max_length:
            raise ValueError("leg limits must satisfy 0 < min_length < max_length")
        if self.force_limit <= 0:
            raise ValueError("force_limit must be positive")

    @property
    def body_mass(self) -> float:
        return self.mass - 2 * self.foot_mass


def launcher_config(**overrides) -> RobotConfig:
    cfg = RobotConfig(
        mass=90.0,
        inertia=3.6,
        foot_mass=5.0,
        half_length=0.35,
        half_height=0.10,
        attach_offsets=(0.25, -0.25),
        default_rest_lengths=(0.45, 0.45),
        min_length=0.30,
        max_length=0.62,
        pd_kp=16000.0,
        pd_kd=600.0,
        force_limit=2400.0,
        platform_mount_height=0.15,
        platform_half_length=0.40,
    )
    return replace(cfg, **overrides)


def jumper_config(**overrides) -> RobotConfig:
    cfg = RobotConfig(
        mass=15.0,
        inertia=0.27,
        foot_mass=1.5,
        half_length=0.25,
        half_height=0.06,
        attach_offsets=(0.19, -0.19),
        default_rest_lengths=(0.28, 0.28),
        min_length=0.17,
        max_length=0.42,
        pd_kp=3000.0,
        pd_kd=60.0,
        force_limit=450.0,
    )
    return replace(cfg, **overrides)


@dataclass(frozen=True)
class ContactParams:
    k_contact: float = 2.0e5
    d_contact: float = 500.0
    k_tangent: float = 1.0e5
    d_tangent: float = 300.0
    k_limit: float = 5.0e4
    d_limit: float = 500.0
    platform_depth: float = 0.1
    entry_depth: float = 0.03


# Contact points: 4 feet, 2 launcher bottom corners, 4 jumper corners.
_POINT_AGENT = np.array([0, 0, 1, 1, 0, 0, 1, 1, 1, 1])
_POINT_FOOT = np.array([0, 1, 0, 1, -1, -1, -1, -1, -1, -1])
# corner sign pairs (fore/aft, up/down) for body points, zeros for feet
_POINT_CORNER = np.array(
    [[0, 0], [0, 0], [0, 0], [0, 0], [1, -1], [-1, -1], [1, -1], [-1, -1], [1, 1], [-1, 1]],
    dtype=float,
)
N_POINTS = len(_POINT_AGENT)

_pairs = [(0, 0), (1, 0), (4, 0), (5, 0)]
for _pt in (2, 3, 6, 7, 8, 9):
    for _sf in (Surface.GROUND, Surface.LAUNCHER_PLATFORM, Surface.TARGET_PLATFORM):
        _pairs.append((_pt, int(_sf)))
PAIR_POINT = np.array([p for p, _ in _pairs])
PAIR_SURFACE = np.array([s for _, s in _pairs])
N_PAIRS = len(_pairs)
PAIR_AGENT = _POINT_AGENT[PAIR_POINT]
PAIR_IS_FOOT = _POINT_FOOT[PAIR_POINT] >= 0
PAIR_FOOT = _POINT_FOOT[PAIR_POINT]


@dataclass
class PhysParams:
    """Per-environment physical parameters, shape ``(N, 2)`` unless noted.

    Built from a pair of :class:`RobotConfig` and then perturbed by domain
    randomization (masses, friction, gains, center-of-mass offset).
    """

    body_mass: np.ndarray
    foot_mass: np.ndarray
    inertia: np.ndarray
    half_length: np.ndarray
    half_height: np.ndarray
    attach: np.ndarray  # (N, 2, 2) per agent, per leg
    default_rest: np.ndarray  # (N, 2, 2)
    min_length: np.ndarray
    max_length: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    force_limit: np.ndarray
    com_offset: np.ndarray
    mount_height: np.ndarray  # (N,)
    platform_half: np.ndarray  # (N,)
    mu_s: np.ndarray  # (N,)
    mu_d: np.ndarray  # (N,)

    @classmethod
    def from_configs(cls, n_envs: int, launcher: RobotConfig, jumper: RobotConfig) -> "PhysParams":
        cfgs = (launcher, jumper)

        def per_agent(attr):
            return np.tile(np.array([getattr(c, attr) for c in cfgs], dtype=float), (n_envs, 1))

        def per_leg(attr):
            return np.tile(np.array([getattr(c, attr) for c in cfgs], dtype=float), (n_envs, 1, 1))

        return cls(
            body_mass=per_agent("body_mass"),
            foot_mass=per_agent("foot_mass"),
            inertia=per_agent("inertia"),
            half_length=per_agent("half_length"),
            half_height=per_agent("half_height"),
            attach=per_leg("attach_offsets"),
            default_rest=per_leg("default_rest_lengths"),
            min_length=per_agent("min_length"),
            max_length=per_agent("max_length"),
            kp=per_agent("pd_kp"),
            kd=per_agent("pd_kd"),
            force_limit=per_agent("force_limit"),
            com_offset=np.zeros((n_envs, 2)),
            mount_height=np.full(n_envs, launcher.platform_mount_height),
            platform_half=np.full(n_envs, launcher.platform_half_length),
            mu_s=np.full(n_envs, 0.8),
            mu_d=np.full(n_envs, 0.7),
        )

    @property
    def n_envs(self) -> int:
        return self.body_mass.shape[0]

    @property
    def total_mass(self) -> np.ndarray:
        return self.body_mass + 2 * self.foot_mass

    def copy(self) -> "PhysParams":
        return PhysParams(**{k: v.copy() for k, v in self.__dict__.items()})


@dataclass
class BodyState:
    x: np.ndarray
    z: np.ndarray
    pitch: np.ndarray
    vx: np.ndarray
    vz: np.ndarray
    pitch_rate: np.ndarray
    accumulated_pitch: np.ndarray


@dataclass
class ContactRecord:
    surface: Surface
    foot: Foot | None  # None for a body corner
    agent: int
    normal_force: float
    tangent_force: float
    active: bool
    sliding: bool


@dataclass
class ContactSet:
    """Batched contact solution, arrays of shape ``(N, N_PAIRS)``."""

    normal: np.ndarray
    tangent: np.ndarray
    active: np.ndarray
    sliding: np.ndarray
    penetration: np.ndarray
    anchor: np.ndarray
    point_force: np.ndarray  # (N, N_POINTS, 2) world force on each point
    launcher_reaction: np.ndarray  # (N, 3) generalized force on launcher body from platform contacts

    def records(self, env: int = 0) -> list[ContactRecord]:
        out = []
        for k in range(N_PAIRS):
            foot = PAIR_FOOT[k]
            out.append(
                ContactRecord(
                    surface=Surface(PAIR_SURFACE[k]),
                    foot=Foot(foot) if foot >= 0 else None,
                    agent=int(PAIR_AGENT[k]),
                    normal_force=float(self.normal[env, k]),
                    tangent_force=float(self.tangent[env, k]),
                    active=bool(self.active[env, k]),
                    sliding=bool(self.sliding[env, k]),
                )
            )
        return out


@dataclass
class SimState:
    """Full physical state of ``N`` two-robot environments."""

    q: np.ndarray  # (N, 2, 5)
    qd: np.ndarray  # (N, 2, 5)
    accumulated_pitch: np.ndarray  # (N, 2)
    anchor: np.ndarray  # (N, N_PAIRS) tangential stick anchors, NaN when unset
    leg_force: np.ndarray  # (N, 2, 2) last applied leg force
    leg_target: np.ndarray  # (N, 2, 2)
    normal_force: np.ndarray  # (N, N_PAIRS)
    tangent_force: np.ndarray  # (N, N_PAIRS)
    contact_active: np.ndarray  # (N, N_PAIRS) bool
    base_contact_force: np.ndarray  # (N, 2)
    gravity: np.ndarray  # (N,)
    time: np.ndarray  # (N,)
    platform: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # (N, 3) x, z, halfwidth

    @classmethod
    def zeros(cls, n_envs: int) -> "SimState":
        return cls(
            q=np.zeros((n_envs, N_AGENTS, N_DOF)),
            qd=np.zeros((n_envs, N_AGENTS, N_DOF)),
            accumulated_pitch=np.zeros((n_envs, N_AGENTS)),
            anchor=np.full((n_envs, N_PAIRS), np.nan),
            leg_force=np.zeros((n_envs, N_AGENTS, 2)),
            leg_target=np.zeros((n_envs, N_AGENTS, 2)),
            normal_force=np.zeros((n_envs, N_PAIRS)),
            tangent_force=np.zeros((n_envs, N_PAIRS)),
            contact_active=np.zeros((n_envs, N_PAIRS), dtype=bool),
            base_contact_force=np.zeros((n_envs, N_AGENTS)),
            gravity=np.full(n_envs, 9.81),
            time=np.zeros(n_envs),
            platform=np.tile([1.0, 0.8, 0.5], (n_envs, 1)),
        )

    @property
    def n_envs(self) -> int:
        return self.q.shape[0]

    def copy(self) -> "SimState":
        return SimState(**{k: v.copy() for k, v in self.__dict__.items()})

    def body(self, agent: int) -> BodyState:
        q, qd = self.q[:, agent], self.qd[:, agent]
        return BodyState(
            x=q[:, 0].copy(),
            z=q[:, 1].copy(),
            pitch=wrap_angle(q[:, 2]),
            vx=qd[:, 0].copy(),
            vz=qd[:, 1].copy(),
            pitch_rate=qd[:, 2].copy(),
            accumulated_pitch=self.accumulated_pitch[:, agent].copy(),
        )

    def feet_contact(self, agent: int, surface: Surface | None = None) -> np.ndarray:
        """Per-foot contact flags ``(N, 2)`` for one agent, optionally restricted to a surface."""
        out = np.zeros((self.n_envs, 2), dtype=bool)
        for k in range(N_PAIRS):
            if PAIR_AGENT[k] != agent or not PAIR_IS_FOOT[k]:
                continue
            if surface is not None and PAIR_SURFACE[k] != surface:
                continue
            out[:, PAIR_FOOT[k]] |= self.contact_active[:, k]
        return out


def wrap_angle(a: np.ndarray) -> np.ndarray:
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def body_axes(pitch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c, s = np.cos(pitch), np.sin(pitch)
    e1 = np.stack([c, -s], axis=-1)
    e2 = np.stack([s, c], axis=-1)
    return e1, e2


def _perp(r: np.ndarray) -> np.ndarray:
    """Pitch-Jacobian column of a point at world offset ``r`` from the COM."""
    return np.stack([r[..., 1], -r[..., 0]], axis=-1)


def point_kinematics(state: SimState, params: PhysParams) -> tuple[np.ndarray, np.ndarray]:
    """World positions and velocities of all contact points, ``(N, N_POINTS, 2)`` each."""
    q, qd = state.q, state.qd
    e1, e2 = body_axes(q[..., 2])  # (N, 2, 2)
    pos = q[..., :2]
    vel = qd[..., :2]
    omega = qd[..., 2]

    # foot points: attach along e1 (shifted by COM offset), then -l along e2
    a_feet = params.attach - params.com_offset[..., None]  # (N, 2, 2)
    l = q[..., 3:5]
    ld = qd[..., 3:5]
    feet = pos[:, :, None, :] + a_feet[..., None] * e1[:, :, None, :] - l[..., None] * e2[:, :, None, :]
    r_feet = feet - pos[:, :, None, :]
    feet_v = vel[:, :, None, :] + omega[..., None, None] * _perp(r_feet) - ld[..., None] * e2[:, :, None, :]

    P = np.empty((state.n_envs, N_POINTS, 2))
    V = np.empty_like(P)
    P[:, 0:2] = feet[:, LAUNCHER]
    P[:, 2:4] = feet[:, JUMPER]
    V[:, 0:2] = feet_v[:, LAUNCHER]
    V[:, 2:4] = feet_v[:, JUMPER]

    ag = _POINT_AGENT[4:]
    hl = params.half_length[:, ag]
    hh = params.half_height[:, ag]
    a = _POINT_CORNER[4:, 0] * hl - params.com_offset[:, ag]
    b = _POINT_CORNER[4:, 1] * hh
    e1c, e2c = e1[:, ag], e2[:, ag]
    r = a[..., None] * e1c + b[..., None] * e2c
    P[:, 4:] = pos[:, ag] + r
    V[:, 4:] = vel[:, ag] + omega[:, ag, None] * _perp(r)
    return P, V


def _surfaces(state: SimState, params: PhysParams):
    n = state.n_envs
    origin = np.zeros((n, 3, 2))
    tangent = np.zeros((n, 3, 2))
    normal = np.zeros((n, 3, 2))
    lo = np.full((n, 3), -np.inf)
    hi = np.full((n, 3), np.inf)
    tangent[:, 0] = tangent[:, 2] = (1.0, 0.0)
    normal[:, 0] = normal[:, 2] = (0.0, 1.0)

    e1, e2 = body_axes(state.q[:, LAUNCHER, 2])
    c_off = params.com_offset[:, LAUNCHER]
    origin[:, 1] = state.q[:, LAUNCHER, :2] + params.mount_height[:, None] * e2 - c_off[:, None] * e1
    tangent[:, 1] = e1
    normal[:, 1] = e2
    lo[:, 1] = -params.platform_half
    hi[:, 1] = params.platform_half

    origin[:, 2, 0] = state.platform[:, 0]
    origin[:, 2, 1] = state.platform[:, 1]
    lo[:, 2] = -state.platform[:, 2]
    hi[:, 2] = state.platform[:, 2]
    return origin, tangent, normal, lo, hi


def resolve_contacts(
    state: SimState,
    params: PhysParams,
    contact: ContactParams = ContactParams(),
    mu_s: np.ndarray | None = None,
    mu_d: np.ndarray | None = None,
) -> ContactSet:
    """Penalty contact with stick/slide Coulomb friction for every point/surface pair."""
    mu_s = params.mu_s if mu_s is None else np.broadcast_to(mu_s, (state.n_envs,))
    mu_d = params.mu_d if mu_d is None else np.broadcast_to(mu_d, (state.n_envs,))
    P, V = point_kinematics(state, params)
    origin, tangent, normal, lo, hi = _surfaces(state, params)

    Pp = P[:, PAIR_POINT]
    Vp = V[:, PAIR_POINT]
    o = origin[:, PAIR_SURFACE]
    t = tangent[:, PAIR_SURFACE]
    n = normal[:, PAIR_SURFACE]
    rel = Pp - o
    a = np.einsum("npk,npk->np", rel, t)
    pen = -np.einsum("npk,npk->np", rel, n)
    # surface velocity is nonzero only for the launcher-carried platform
    vs = np.zeros_like(Vp)
    on_l = PAIR_SURFACE == Surface.LAUNCHER_PLATFORM
    r_l = Pp[:, on_l] - state.q[:, None, LAUNCHER, :2]
    vs[:, on_l] = state.qd[:, None, LAUNCHER, :2] + state.qd[:, None, LAUNCHER, 2, None] * _perp(r_l)
    vr = Vp - vs
    vn = np.einsum("npk,npk->np", vr, n)
    vt = np.einsum("npk,npk->np", vr, t)

    # a platform contact may only start shallow and while not rising through the surface,
    # then holds to the depth cap
    was_active = ~np.isnan(state.anchor)
    ground = PAIR_SURFACE == Surface.GROUND
    cap = np.where(ground, np.inf, np.where(was_active, contact.platform_depth, contact.entry_depth))
    entering = ground | was_active | (vn <= 0)
    active = (pen > 0) & (pen < cap) & entering & (a >= lo[:, PAIR_SURFACE]) & (a <= hi[:, PAIR_SURFACE])

    fn = np.where(active, np.maximum(0.0, contact.k_contact * pen - contact.d_contact * vn), 0.0)

    anchor = np.where(active & ~np.isnan(state.anchor), state.anchor, a)
    ft_trial = -contact.k_tangent * (a - anchor) - contact.d_tangent * vt
    limit_s = mu_s[:, None] * fn
    sliding = active & (np.abs(ft_trial) > limit_s)
    ft = np.where(sliding, mu_d[:, None] * fn * np.sign(ft_trial), ft_trial)
    ft = np.where(active & (fn > 0), ft, 0.0)
    anchor = np.where(sliding, a + ft / contact.k_tangent, anchor)
    anchor = np.where(active, anchor, np.nan)

    f_pair = fn[..., None] * n + ft[..., None] * t  # force on the point
    point_force = np.zeros((state.n_envs, N_POINTS, 2))
    for k in range(N_PAIRS):
        point_force[:, PAIR_POINT[k]] += f_pair[:, k]

    # reaction of jumper-on-platform contacts onto the launcher body
    f_react = -f_pair[:, on_l]
    launcher_reaction = np.zeros((state.n_envs, 3))
    launcher_reaction[:, :2] = f_react.sum(axis=1)
    launcher_reaction[:, 2] = np.einsum("npk,npk->n", f_react, _perp(r_l))

    return ContactSet(
        normal=fn,
        tangent=ft,
        active=active,
        sliding=sliding,
        penetration=np.where(active, pen, 0.0),
        anchor=anchor,
        point_force=point_force,
        launcher_reaction=launcher_reaction,
    )


def apply_actions(
    state: SimState,
    actions: np.ndarray,
    params: PhysParams,
    action_scale: float = 0.15,
    stiffness_gain: np.ndarray | float = 1.0,
    damping_gain: np.ndarray | float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """PD leg forces for ``actions`` of shape ``(N, 2, 4)``.

    The four action components are the lateral-pair targets (front-left,
    front-right, rear-left, rear-right); each planar leg tracks the mean of
    its pair. Returns ``(forces, targets)``, each ``(N, 2, 2)``.
    """
    u = np.clip(actions, -1.0, 1.0)
    u_leg = 0.5 * (u[..., 0::2] + u[..., 1::2])
    target = params.default_rest + action_scale * u_leg
    kp = (params.kp * stiffness_gain)[..., None]
    kd = (params.kd * damping_gain)[..., None]
    force = kp * (target - state.q[..., 3:5]) - kd * state.qd[..., 3:5]
    lim = params.force_limit[..., None]
    return np.clip(force, -lim, lim), target


def mass_matrix(state: SimState, params: PhysParams) -> np.ndarray:
    """Generalized mass matrix, ``(N, 2, 5, 5)``."""
    q = state.q
    e1, e2 = body_axes(q[..., 2])
    mb, mf, inertia = params.body_mass, params.foot_mass, params.inertia
    M = np.zeros(q.shape[:2] + (N_DOF, N_DOF))
    m_tot = mb + 2 * mf
    M[..., 0, 0] = m_tot
    M[..., 1, 1] = m_tot
    a = params.attach - params.com_offset[..., None]
    l = q[..., 3:5]
    c_f = -a[..., None] * e2[..., None, :] - l[..., None] * e1[..., None, :]  # (N, 2, legs, 2)
    M[..., 0, 2] = M[..., 2, 0] = mf * c_f[..., 0].sum(-1)
    M[..., 1, 2] = M[..., 2, 1] = mf * c_f[..., 1].sum(-1)
    M[..., 2, 2] = inertia + mf * (a**2 + l**2).sum(-1)
    for j in range(2):
        M[..., 0, 3 + j] = M[..., 3 + j, 0] = -mf * e2[..., 0]
        M[..., 1, 3 + j] = M[..., 3 + j, 1] = -mf * e2[..., 1]
        M[..., 2, 3 + j] = M[..., 3 + j, 2] = mf * a[..., j]
        M[..., 3 + j, 3 + j] = mf
    return M


def bias_forces(state: SimState, params: PhysParams) -> np.ndarray:
    """Gravity plus velocity-product terms from the moving feet, ``(N, 2, 5)``."""
    q, qd = state.q, state.qd
    g = state.gravity[:, None]
    e1, e2 = body_axes(q[..., 2])
    mf = params.foot_mass
    a = params.attach - params.com_offset[..., None]
    l, ld = q[..., 3:5], qd[..., 3:5]
    w = qd[..., 2][..., None]

    Q = np.zeros(q.shape)
    Q[..., 1] = -(params.body_mass + 2 * mf) * g
    c_f = -a[..., None] * e2[..., None, :] - l[..., None] * e1[..., None, :]
    Q[..., 2] = -(mf * g) * c_f[..., 1].sum(-1)
    Q[..., 3:5] = (mf * g)[..., None] * e2[..., None, 1]

    # foot acceleration offset  h = -(a w^2 + 2 ld w) e1 + l w^2 e2
    h = -((a * w**2 + 2 * ld * w)[..., None]) * e1[..., None, :] + (l * w**2)[..., None] * e2[..., None, :]
    mh = mf[..., None, None] * h
    Q[..., 0] -= mh[..., 0].sum(-1)
    Q[..., 1] -= mh[..., 1].sum(-1)
    Q[..., 2] -= np.einsum("nalk,nalk->na", c_f, mh)
    Q[..., 3:5] -= np.einsum("nalk,nak->nal", mh, -e2)
    return Q


def point_generalized_forces(state: SimState, params: PhysParams, point_force: np.ndarray) -> np.ndarray:
    """Map world forces on the contact points to generalized forces ``(N, 2, 5)``."""
    P, _ = point_kinematics(state, params)
    Q = np.zeros(state.q.shape)
    _, e2 = body_axes(state.q[..., 2])
    for i in range(N_POINTS):
        ag = _POINT_AGENT[i]
        F = point_force[:, i]
        r = P[:, i] - state.q[:, ag, :2]
        Q[:, ag, 0] += F[:, 0]
        Q[:, ag, 1] += F[:, 1]
        Q[:, ag, 2] += np.einsum("nk,nk->n", F, _perp(r))
        foot = _POINT_FOOT[i]
        if foot >= 0:
            Q[:, ag, 3 + foot] += -np.einsum("nk,nk->n", F, e2[:, ag])
    return Q


def limit_forces(state: SimState, params: PhysParams, contact: ContactParams = ContactParams()) -> np.ndarray:
    """Penalty forces keeping leg lengths inside their travel, ``(N, 2, 2)``."""
    l, ld = state.q[..., 3:5], state.qd[..., 3:5]
    lo = params.min_length[..., None]
    hi = params.max_length[..., None]
    under = l < lo
    over = l > hi
    f = np.where(under, contact.k_limit * (lo - l) - contact.d_limit * np.minimum(ld, 0.0), 0.0)
    f = f + np.where(over, contact.k_limit * (hi - l) - contact.d_limit * np.maximum(ld, 0.0), 0.0)
    return f


def integrate(state: SimState, params: PhysParams, gen_forces: np.ndarray, dt: float) -> SimState:
    """One semi-implicit Euler step under applied generalized forces.

    ``gen_forces`` excludes gravity and velocity-product terms, which are
    added here. Returns a new state.
    """
    if not np.all(np.isfinite(gen_forces)):
        bad = np.argwhere(~np.isfinite(gen_forces))[0]
        names = ("x", "z", "pitch", "leg_front", "leg_rear")
        raise FloatingPointError(
            f"non-finite generalized force: env {bad[0]}, agent {bad[1]}, term {names[bad[2]]}"
        )
    M = mass_matrix(state, params)
    Q = gen_forces + bias_forces(state, params)
    qdd = np.linalg.solve(M, Q[..., None])[..., 0]
    out = state.copy()
    out.qd = state.qd + dt * qdd
    out.q = state.q + dt * out.qd
    out.accumulated_pitch = state.accumulated_pitch + dt * out.qd[..., 2]
    out.time = state.time + dt
    return out


@dataclass
class ExternalLoads:
    """Per-body loads applied at the COM for a control step, ``(N, 2, 3)`` as (fx, fz, torque)."""

    body: np.ndarray

    @classmethod
    def zeros(cls, n_envs: int) -> "ExternalLoads":
        return cls(np.zeros((n_envs, N_AGENTS, 3)))


def substep(
    state: SimState,
    params: PhysParams,
    leg_targets_u: np.ndarray,
    dt: float,
    contact: ContactParams = ContactParams(),
    loads: ExternalLoads | None = None,
    assist_torque: np.ndarray | float = 0.0,
    action_scale: float = 0.15,
    stiffness_gain: np.ndarray | float = 1.0,
    damping_gain: np.ndarray | float = 1.0,
) -> SimState:
    """Advance every environment by one inner step under fixed actions."""
    cs = resolve_contacts(state, params, contact)
    leg_f, target = apply_actions(state, leg_targets_u, params, action_scale, stiffness_gain, damping_gain)
    Q = point_generalized_forces(state, params, cs.point_force)
    Q[:, LAUNCHER, :3] += cs.launcher_reaction
    Q[..., 3:5] += leg_f + limit_forces(state, params, contact)
    if loads is not None:
        Q[..., :3] += loads.body
    Q[:, JUMPER, 2] += assist_torque
    out = integrate(state, params, Q, dt)

    out.anchor = cs.anchor
    out.leg_force = leg_f
    out.leg_target = target
    out.normal_force = cs.normal
    out.tangent_force = cs.tangent
    out.contact_active = cs.active
    corner = ~PAIR_IS_FOOT
    bcf = np.zeros((state.n_envs, N_AGENTS))
    for ag in (LAUNCHER, JUMPER):
        m = corner & (PAIR_AGENT == ag)
        bcf[:, ag] = np.hypot(cs.normal[:, m], cs.tangent[:, m]).sum(axis=1)
    out.base_contact_force = bcf
    return out


def mechanical_energy(state: SimState, params: PhysParams) -> np.ndarray:
    """Kinetic plus gravitational potential energy per environment."""
    M = mass_matrix(state, params)
    ke = 0.5 * np.einsum("nai,naij,naj->n", state.qd, M, state.qd)
    P, _ = point_kinematics(state, params)
    g = state.gravity
    pe = g * (params.body_mass * state.q[..., 1]).sum(-1)
    feet_z = P[:, 0:4, 1].reshape(state.n_envs, 2, 2)
    pe = pe + g * (params.foot_mass[..., None] * feet_z).sum((-1, -2))
    return ke + pe


def ballistic_oracle(body: BodyState, g: float, t: float) -> BodyState:
    """Closed-form projectile motion of a free body (no contact, no actuation)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return BodyState(
        x=body.x + body.vx * t,
        z=body.z + body.vz * t - 0.5 * g * t * t,
        pitch=wrap_angle(body.pitch + body.pitch_rate * t),
        vx=body.vx,
        vz=body.vz - g * t,
        pitch_rate=body.pitch_rate,
        accumulated_pitch=body.accumulated_pitch + body.pitch_rate * t,
    )


TRAJECTORY_COLUMNS = (
    ["time"]
    + [f"{r}_{k}" for r in ("L", "J") for k in ("x", "z", "pitch", "vx", "vz", "pitch_rate", "acc_pitch")]
    + [f"{r}_leg{j}_{k}" for r in ("L", "J") for j in (0, 1) for k in ("length", "rate", "force")]
    + ["L_base_force", "J_base_force"]
    + [f"{r}_foot{j}_normal" for r in ("L", "J") for j in (0, 1)]
)


def trajectory_row(state: SimState, env: int = 0) -> list[float]:
    """One CSV row (see ``TRAJECTORY_COLUMNS``) describing environment ``env``."""
    row = [float(state.time[env])]
    for ag in (LAUNCHER, JUMPER):
        q, qd = state.q[env, ag], state.qd[env, ag]
        row += [q[0], q[1], float(wrap_angle(q[2])), qd[0], qd[1], qd[2], state.accumulated_pitch[env, ag]]
    for ag in (LAUNCHER, JUMPER):
        for j in (0, 1):
            row += [state.q[env, ag, 3 + j], state.qd[env, ag, 3 + j], state.leg_force[env, ag, j]]
    row += list(state.base_contact_force[env])
    for ag in (LAUNCHER, JUMPER):
        for j in (0, 1):
            m = PAIR_IS_FOOT & (PAIR_AGENT == ag) & (PAIR_FOOT == j)
            row.append(state.normal_force[env, m].sum())
    return [float(v) for v in row]


def control_step(
    state: SimState,
    params: PhysParams,
    actions: np.ndarray,
    n_substeps: int = N_SUBSTEPS,
    control_dt: float = CONTROL_DT,
    contact: ContactParams = ContactParams(),
    loads: ExternalLoads | None = None,
    assist_torque: np.ndarray | float = 0.0,
    action_scale: float = 0.15,
    stiffness_gain: np.ndarray | float = 1.0,
    damping_gain: np.ndarray | float = 1.0,
    active: np.ndarray | None = None,
) -> tuple[SimState, np.ndarray]:
    """Advance ``n_substeps`` inner steps with the compiled kernel.

    Numerically equivalent to repeated :func:`substep` calls. Environments
    with ``active == False`` are left untouched. Returns the new state and
    the per-agent peak base contact force seen during the step.
    """
    from ._kernel import control_step as _step

    n = state.n_envs
    s = state.copy()
    loads_arr = np.zeros((n, N_AGENTS, 3)) if loads is None else np.ascontiguousarray(loads.body, dtype=float)
    assist_arr = np.broadcast_to(np.asarray(assist_torque, dtype=float), (n,)).copy()
    gkp = np.broadcast_to(np.asarray(stiffness_gain, dtype=float), (n, N_AGENTS)).copy()
    gkd = np.broadcast_to(np.asarray(damping_gain, dtype=float), (n, N_AGENTS)).copy()
    act = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    base_max = np.zeros((n, N_AGENTS))
    u = np.ascontiguousarray(actions, dtype=float)
    _step(
        s.q, s.qd, s.accumulated_pitch, s.anchor, s.time, u, loads_arr, assist_arr, gkp, gkd,
        params.body_mass, params.foot_mass, params.inertia, params.half_length, params.half_height,
        params.attach, params.default_rest, params.min_length, params.max_length, params.kp, params.kd,
        params.force_limit, params.com_offset, params.mount_height, params.platform_half,
        params.mu_s, params.mu_d, s.platform, s.gravity,
        contact.k_contact, contact.d_contact, contact.k_tangent, contact.d_tangent,
        contact.k_limit, contact.d_limit, contact.platform_depth, contact.entry_depth, action_scale,
        control_dt / n_substeps, n_substeps, act,
        s.leg_force, s.leg_target, s.normal_force, s.tangent_force, s.contact_active,
        s.base_contact_force, base_max,
    )
    return s, base_max
