"""Command-line surface: plan, filter, simulate, freqresp.

Exit codes: 0 success (or PASS verdict), 1 FAIL verdict, 2 configuration or
input-format error, 3 runtime model error (e.g. free-fall acceleration).
Log level comes from the WAITER_LOG environment variable.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from .compensation import FreeFallError, compose_flange_pose, rotation_matrix, tilt_angles
from .dynamics import (
    ContactLostError,
    IntegrationError,
    TrayMotion,
    fd_tilt_channel,
    simulate_coupled,
    simulate_solid_sliding,
)
from .fileio import (
    ConfigError,
    FormatError,
    PoseTrajectoryFile,
    RunConfig,
    TrajectoryFile,
    _atomic_write,
    band_limited_noise,
    load_config,
    read_trajectory,
    write_pose_trajectory,
    write_sim_trace,
    write_trajectory,
)
from .planner import feasibility_report, plan, rollout_trajectory
from .smoothers import CascadeState, freq_response

log = logging.getLogger("traywaiter")

_SETTLE = 0.05  # s of tail appended after the kernel support in planned files


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _pose_rows(t, positions, accelerations, g, mounting, delay=0.0):
    """Tilt-compensated flange poses for a stream of samples."""
    n = t.size
    pos_out = np.empty((n, 3))
    rot_out = np.empty((n, 3, 3))
    for k in range(n):
        try:
            beta, phi = tilt_angles(accelerations[k], g)
        except FreeFallError as exc:
            raise FreeFallError(f"{exc} (at t = {t[k]!r} s)") from None
        R = rotation_matrix(beta, phi)
        flange = compose_flange_pose(positions[k], R, mounting)
        pos_out[k] = flange[:3, 3]
        rot_out[k] = flange[:3, :3]
    return PoseTrajectoryFile(float(t[1] - t[0]) if n > 1 else 0.0,
                              delay, t, pos_out, rot_out)


def _write_freq_response(path: str, stages, omega_max: float, points: int) -> None:
    grid = np.linspace(0.0, omega_max, points)
    cols = [grid]
    for st in stages:
        cols.append(freq_response(st, grid))
    total = np.ones_like(grid)
    for c in cols[1:]:
        total = total * c
    cols.append(total)
    names = ["omega"] + [f"stage{i}" for i in range(len(stages))] + ["cascade"]
    header = f"# freq_response columns={','.join(names)}"
    body = "\n".join(",".join(repr(float(v)) for v in row)
                     for row in np.column_stack(cols))
    _atomic_write(path, header + "\n" + body + "\n")


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

def cmd_plan(cfg: RunConfig, args) -> int:
    sc = cfg.scenario
    if sc.motion != "point_to_point":
        raise ConfigError("scenario.motion", "plan needs a point_to_point scenario")
    outdir = _ensure_outdir(args.output)
    g = cfg.plant.g if cfg.plant else sc.g
    dt = cfg.dt

    if np.array_equal(sc.start, sc.goal):
        t = np.array([0.0, dt])
        positions = np.vstack([sc.start, sc.start])
        accels = np.zeros((2, 3))
        pose = _pose_rows(t, positions, accels, g, cfg.mounting, delay=0.0)
        write_pose_trajectory(os.path.join(outdir, "trajectory.csv"), pose)
        write_trajectory(os.path.join(outdir, "reference.csv"),
                         TrajectoryFile(dt, t, positions, accels))
        report = "plan: goal equals start; nothing to do\n"
        _atomic_write(os.path.join(outdir, "plan.txt"), report)
        print(report.strip())
        return 0

    result = plan(sc)
    log.info("planned %d stages, support %g s", len(result.cascade.stages),
             result.duration)
    t, P, _, A = rollout_trajectory(result, sc, dt, settle=_SETTLE)
    pose = _pose_rows(t, P, A, g, cfg.mounting, delay=result.duration)
    write_pose_trajectory(os.path.join(outdir, "trajectory.csv"), pose)
    write_trajectory(os.path.join(outdir, "reference.csv"),
                     TrajectoryFile(dt, t, P, A))

    mu = cfg.plant.mu if cfg.plant else None
    lines = ["plan report", "==========="]
    for i, st in enumerate(result.cascade.stages):
        lines.append(f"stage {i}: {st!r}")
    lines.append(f"distance: {result.distance!r} m")
    lines.append(f"total kernel support: {result.duration!r} s")
    lines.append(f"output continuity class: C^{result.output_class}")
    lines.append(f"jerk continuous (tilt feasible): {result.jerk_continuous}")
    for note in result.notes:
        lines.append(f"note: {note}")
    lines.append("")
    lines.append("with tilt compensation:")
    lines.append(feasibility_report(sc, tilt_enabled=True).render())
    if mu is not None:
        lines.append("")
        lines.append(f"without tilt compensation (mu = {mu!r}):")
        lines.append(feasibility_report(sc, tilt_enabled=False, mu=mu).render())
    report = "\n".join(lines) + "\n"
    _atomic_write(os.path.join(outdir, "plan.txt"), report)

    if cfg.raw.get("output", {}).get("emit_freq_response"):
        omega_max = cfg.freq_omega_max or (5.0 * (sc.omega_n or 2 * math.pi))
        _write_freq_response(os.path.join(outdir, "freqresp.csv"),
                             result.cascade.stages, omega_max, cfg.freq_points)

    print(f"plan: {len(result.cascade.stages)} stages, "
          f"support {result.duration!r} s -> {outdir}")
    return 0


# ---------------------------------------------------------------------------
# filter
# ---------------------------------------------------------------------------

def cmd_filter(cfg: RunConfig, args) -> int:
    sc = cfg.scenario
    if sc.motion != "complex":
        raise ConfigError("scenario.motion", "filter needs a complex scenario")
    if not args.input:
        raise ConfigError("--input", "filter needs an input trajectory file")
    traj = read_trajectory(args.input)
    g = cfg.plant.g if cfg.plant else sc.g

    positions = traj.positions.copy()
    seed = cfg.seed if args.seed is None else args.seed
    if cfg.noise_amplitude > 0.0:
        for axis in range(3):
            positions[:, axis] += band_limited_noise(
                traj.n, traj.dt, cfg.noise_amplitude, cfg.noise_cutoff_hz,
                seed + axis)

    result = plan(sc)
    log.info("filtering %d samples through %d stages", traj.n,
             len(result.cascade.stages))
    states = [CascadeState(result.cascade, traj.dt, initial_value=positions[0, axis])
              for axis in range(3)]
    filtered = np.empty_like(positions)
    accels = np.empty_like(positions)
    for axis in range(3):
        p, v, a = states[axis].run(positions[:, axis])
        filtered[:, axis] = p
        accels[:, axis] = a
    delay = states[0].delay

    t_out = traj.t + delay  # output sample k reflects the input at traj.t[k]
    pose = _pose_rows(t_out, filtered, accels, g, cfg.mounting, delay=delay)
    outdir = _ensure_outdir(args.output)
    write_pose_trajectory(os.path.join(outdir, "filtered.csv"), pose)
    write_trajectory(os.path.join(outdir, "reference.csv"),
                     TrajectoryFile(traj.dt, t_out, filtered, accels))
    print(f"filter: {traj.n} samples, end-to-end delay {delay!r} s -> {outdir}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _planar_projection(traj: TrajectoryFile):
    """Reduce a straight-line 3D reference to the planar (x, z) model."""
    if traj.accelerations is None:
        raise FormatError("simulation input needs acceleration columns "
                          "(7-column trajectory file)")
    disp = traj.positions[-1] - traj.positions[0]
    horiz = np.array([disp[0], disp[1], 0.0])
    norm = np.linalg.norm(horiz)
    u = horiz / norm if norm > 1e-12 else np.array([1.0, 0.0, 0.0])
    acc_h = traj.accelerations[:, :2]
    acc_par = acc_h @ u[:2]
    residual = acc_h - acc_par[:, None] * u[None, :2]
    scale = max(1.0, np.abs(traj.accelerations).max())
    if np.abs(residual).max() > 1e-9 * scale:
        raise FormatError("horizontal motion is not along a fixed direction; "
                          "the planar simulator cannot represent it")
    return acc_par, traj.accelerations[:, 2]


def cmd_simulate(cfg: RunConfig, args) -> int:
    if cfg.plant is None:
        raise ConfigError("plant", "simulation needs a plant block")
    if not args.input:
        raise ConfigError("--input", "simulate needs an input trajectory file")
    traj = read_trajectory(args.input)
    acc_x, acc_z = _planar_projection(traj)
    p = cfg.plant

    if cfg.tilt_mode == "compensated":
        beta, beta_dot, beta_ddot = fd_tilt_channel(acc_x, acc_z, traj.dt, p.g)
    else:
        beta = beta_dot = beta_ddot = np.zeros(traj.n)
    motion = TrayMotion.from_channels(traj.dt, acc_x, acc_z,
                                      beta, beta_dot, beta_ddot)
    dt = args.dt if args.dt else cfg.sim_dt

    outdir = _ensure_outdir(args.output)
    verdict_path = os.path.join(outdir, "verdict.txt")
    try:
        if cfg.scenario.material == "solid":
            trace = simulate_solid_sliding(p, motion, dt=dt)
        else:
            trace = simulate_coupled(p, motion, dt=dt)
    except (ContactLostError, IntegrationError) as exc:
        verdict = f"FAIL: {exc}"
        _atomic_write(verdict_path, verdict + "\n")
        print(verdict)
        return 1

    write_sim_trace(os.path.join(outdir, "trace.csv"), trace)
    failures = []
    if cfg.scenario.material == "liquid" and trace.max_abs_theta > cfg.max_theta:
        failures.append(f"max|theta| = {trace.max_abs_theta!r} rad "
                        f"> {cfg.max_theta!r}")
    if abs(trace.net_slip) > cfg.max_slip:
        failures.append(f"|slip| = {abs(trace.net_slip)!r} m > {cfg.max_slip!r}")
    if failures:
        verdict = "FAIL: " + "; ".join(failures)
        _atomic_write(verdict_path, verdict + "\n")
        print(verdict)
        return 1
    verdict = (f"PASS: max|theta| = {trace.max_abs_theta!r} rad, "
               f"slip = {trace.net_slip!r} m, "
               f"transitions = {len(trace.transitions)}")
    _atomic_write(verdict_path, verdict + "\n")
    print(verdict)
    return 0


# ---------------------------------------------------------------------------
# freqresp
# ---------------------------------------------------------------------------

def cmd_freqresp(cfg: RunConfig, args) -> int:
    sc = cfg.scenario
    result = plan(sc)
    omega_max = cfg.freq_omega_max
    if omega_max is None:
        omega_max = 5.0 * sc.omega_n if sc.omega_n else 10.0 * math.pi / result.duration
    outdir = _ensure_outdir(args.output)
    _write_freq_response(os.path.join(outdir, "freqresp.csv"),
                         result.cascade.stages, omega_max, cfg.freq_points)
    print(f"freqresp: {cfg.freq_points} points up to {omega_max!r} rad/s -> {outdir}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="traywaiter",
        description="Slosh-free, slip-free reference trajectories for "
                    "tray-carried transport, with a physics validator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, needs_input in (
            ("plan", cmd_plan, False),
            ("filter", cmd_filter, True),
            ("simulate", cmd_simulate, True),
            ("freqresp", cmd_freqresp, False)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--output", default=".", help="output directory")
        p.add_argument("--input", default=None,
                       help="input trajectory file" if needs_input else argparse.SUPPRESS)
        p.add_argument("--dt", type=float, default=None,
                       help="override the simulation step")
        p.add_argument("--seed", type=int, default=None,
                       help="override the noise seed")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    level = getattr(logging, os.environ.get("WAITER_LOG", "WARNING").upper(),
                    logging.WARNING)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING)
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except FreeFallError as exc:
        print(f"error: free fall: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
