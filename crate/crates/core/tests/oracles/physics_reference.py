"""Reference transitions for the physics oracle tests.

MountainCar and Acrobot are stepped with gymnasium 0.29.1 itself.  CartPole
is evaluated from the Barto-Sutton-Anderson equations written out by hand,
since gymnasium's CartPole has no friction terms; the frictionless cases are
cross-checked against gymnasium's CartPole as well.

Run with `PYTHONPATH=<gymnasium install> python3 physics_reference.py`.
"""
import math

import numpy as np

if not hasattr(np, "float_"):
    np.float_ = np.float64  # gymnasium 0.29 on numpy 2
import gymnasium as gym

POLE_FRICTION_RATIO = 0.004


def mountain_car(params, state, action):
    env = gym.make("MountainCar-v0").unwrapped
    env.reset(seed=0)
    env.force = params["force"]
    env.gravity = params["gravity"]
    env.goal_velocity = params["goal_velocity"]
    env.state = np.array(state, dtype=np.float64)
    _, r, term, _, _ = env.step(action)
    return [float(v) for v in env.state], r, term


def cartpole_hand(params, state, action):
    g = 9.8
    mc = params["masscart"]
    mp = params["masspole"]
    l = params["lengthpole"]
    mu_c = params["friction"]
    mu_p = params["friction"] * POLE_FRICTION_RATIO
    tau = 0.02
    x, x_dot, th, th_dot = state
    f = 10.0 if action == 1 else -10.0
    total = mc + mp
    s, c = math.sin(th), math.cos(th)
    sgn = float(np.sign(x_dot))
    num = (
        g * s
        + c * ((-f - mp * l * th_dot * th_dot * s + mu_c * sgn) / total)
        - mu_p * th_dot / (mp * l)
    )
    th_acc = num / (l * (4.0 / 3.0 - mp * c * c / total))
    x_acc = (f + mp * l * (th_dot * th_dot * s - th_acc * c) - mu_c * sgn) / total
    x = x + tau * x_dot
    x_dot = x_dot + tau * x_acc
    th = th + tau * th_dot
    th_dot = th_dot + tau * th_acc
    term = abs(x) > 2.4 or abs(th) > 15.0 * 2.0 * math.pi / 360.0
    return [x, x_dot, th, th_dot], 1.0, term


def cartpole_gym(params, state, action):
    env = gym.make("CartPole-v0").unwrapped
    env.reset(seed=0)
    env.masspole = params["masspole"]
    env.masscart = params["masscart"]
    env.length = params["lengthpole"]
    env.total_mass = env.masspole + env.masscart
    env.polemass_length = env.masspole * env.length
    env.state = np.array(state, dtype=np.float64)
    env.step(action)
    return [float(v) for v in env.state]


def acrobot(params, state, action):
    env = gym.make("Acrobot-v1").unwrapped
    env.reset(seed=0)
    env.LINK_LENGTH_1 = params["link_length_1"]
    env.LINK_COM_POS_1 = params["link_com_pos_1"]
    env.LINK_MASS_1 = params["link_mass_1"]
    env.LINK_MASS_2 = params["link_mass_2"]
    env.state = np.array(state, dtype=np.float64)
    _, r, term, _, _ = env.step(action)
    return [float(v) for v in env.state], r, term


MC_BASE = {"force": 1e-3, "gravity": 2.5e-3, "goal_velocity": 0.0}
MC_DRIFT = {"force": 1.2e-3, "gravity": 4e-3, "goal_velocity": 0.0}
CP_BASE = {"masspole": 0.1, "lengthpole": 0.5, "masscart": 1.0, "friction": 0.0}
CP_FRIC = {"masspole": 0.1, "lengthpole": 0.5, "masscart": 1.0, "friction": 0.0005}
CP_DRIFT = {"masspole": 0.15, "lengthpole": 0.625, "masscart": 1.3, "friction": 0.002}
AC_BASE = {"link_length_1": 1.0, "link_com_pos_1": 0.5, "link_mass_1": 1.0, "link_mass_2": 1.0}
AC_DRIFT = {"link_length_1": 1.3, "link_com_pos_1": 0.65, "link_mass_1": 1.4, "link_mass_2": 0.8}

CASES = {
    "mountain_car": [
        (MC_BASE, [-0.5, 0.0], 2),
        (MC_DRIFT, [-0.5, 0.0], 2),
        (MC_DRIFT, [0.3, 0.05], 0),
        (MC_BASE, [-1.19, -0.02], 0),
        (MC_BASE, [0.45, 0.069], 2),
    ],
    "cartpole": [
        (CP_BASE, [0.01, -0.02, 0.03, 0.04], 1),
        (CP_BASE, [-0.5, 0.3, -0.1, 0.2], 0),
        (CP_FRIC, [0.2, 0.4, 0.05, -0.3], 1),
        (CP_DRIFT, [1.0, -0.6, -0.12, 0.5], 0),
        (CP_DRIFT, [2.39, 1.5, 0.2, 0.8], 1),
    ],
    "acrobot": [
        (AC_BASE, [0.0, 0.0, 0.0, 0.0], 0),
        (AC_BASE, [0.05, -0.08, 0.03, 0.09], 2),
        (AC_DRIFT, [1.2, -0.7, 1.5, -2.0], 1),
        (AC_DRIFT, [3.0, 2.9, 12.0, 27.0], 2),
        (AC_BASE, [2.6, 0.9, 3.0, -1.0], 0),
    ],
}


def main():
    for params, state, action in CASES["mountain_car"]:
        nxt, r, term = mountain_car(params, state, action)
        print("mountain_car", params, state, action, [repr(v) for v in nxt], r, term)
    for params, state, action in CASES["cartpole"]:
        nxt, r, term = cartpole_hand(params, state, action)
        if params["friction"] == 0.0:
            ref = cartpole_gym(params, state, action)
            assert all(abs(a - b) <= 1e-15 * max(1.0, abs(b)) for a, b in zip(nxt, ref)), (nxt, ref)
        print("cartpole", params, state, action, [repr(v) for v in nxt], r, term)
    for params, state, action in CASES["acrobot"]:
        nxt, r, term = acrobot(params, state, action)
        print("acrobot", params, state, action, [repr(v) for v in nxt], r, term)


if __name__ == "__main__":
    main()
