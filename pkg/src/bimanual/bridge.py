"""Live teleoperation bridge: WebSocket command intake and telemetry fan-out
around the per-cycle control pipeline.

Wire format: newline-delimited JSON messages, one per line, with a versioned
``v`` field. Two message types flow client -> server ("command") and server ->
client ("telemetry", "error").

Command message (client -> server)::

    {"v": 1, "type": "command", "seq": 17,
     "mode": "bimanual",            # or "independent"
     "command": "twist",            # or "pose"
     "left":  [wx, wy, wz, vx, vy, vz],
     "right": [wx, wy, wz, vx, vy, vz]}

``left``/``right`` are 6-vectors ordered (angular; linear). In twist mode the
units are rad/s and m/s, bounded at 1.0 rad/s and 0.5 m/s per component; in
pose mode they are a displacement from the session reference in rad and m,
bounded at pi rad and 0.5 m. ``seq`` must increase monotonically; stale or
duplicate sequence numbers are dropped without effect. In bimanual mode the
right 6-vector is ignored.

Telemetry message (server -> client), emitted every ``decimation``-th cycle
of the 1 kHz loop (default 20, i.e. 50 Hz)::

    {"v": 1, "type": "telemetry", "cycle": k, "time": t,
     "commanded": {"quat": [w, x, y, z], "trans": [x, y, z]},
     "adapted":   {...}, "measured": {...},
     "tau": [14 joint torques, N*m],
     "tau_limit": [14 enforced limits, N*m: torque_ratio * tau_max],
     "torque_ratio": 0.9,
     "friction_margin": m, "cop_margin": m,
     "clamped": bool, "qp_status": "optimal", "compute_us": t}

Error frame (server -> client) on a malformed message::

    {"v": 1, "type": "error", "message": "..."}

Concurrency: the fixed-rate control loop and the connection handler share
exactly two structures — a latest-command mailbox the loop samples once per
cycle, and a bounded drop-oldest telemetry queue. The loop never blocks on
the network; a silent or disconnected client degrades to holding the last
reference pose.
"""

from __future__ import annotations

import asyncio
import json
import math
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import retarget as rt
from . import sim as sm
from .spatial import Pose, rotation_to_quaternion

PROTOCOL_VERSION = 1
DEFAULT_ENDPOINT = "127.0.0.1:8765"
ENDPOINT_ENV = "BIMANUAL_TELEOP_ENDPOINT"
DEFAULT_DECIMATION = 20

TWIST_ANGULAR_MAX = 1.0   # rad/s per component
TWIST_LINEAR_MAX = 0.5    # m/s per component
POSE_ANGULAR_MAX = math.pi  # rad per component
POSE_LINEAR_MAX = 0.5     # m per component


class ProtocolError(Exception):
    """Malformed or out-of-schema message; the session continues."""


@dataclass(frozen=True)
class Command:
    """Validated operator command as sampled by the control loop."""

    seq: int
    mode: str
    command_mode: str
    left: np.ndarray
    right: np.ndarray


def parse_command(text: str) -> Command:
    """Parse and validate one command line; raises ProtocolError."""
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"invalid JSON: {e}") from None
    if not isinstance(msg, dict):
        raise ProtocolError("message must be an object")
    if msg.get("v") != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {msg.get('v')!r}")
    if msg.get("type") != "command":
        raise ProtocolError(f"unexpected message type {msg.get('type')!r}")
    try:
        seq = int(msg["seq"])
    except (KeyError, TypeError, ValueError):
        raise ProtocolError("seq must be an integer") from None
    mode = msg.get("mode", "bimanual")
    if mode not in ("bimanual", "independent"):
        raise ProtocolError(f"unknown mode {mode!r}")
    command_mode = msg.get("command", "twist")
    if command_mode not in ("twist", "pose"):
        raise ProtocolError(f"unknown command mode {command_mode!r}")
    if command_mode == "twist":
        ang_max, lin_max = TWIST_ANGULAR_MAX, TWIST_LINEAR_MAX
    else:
        ang_max, lin_max = POSE_ANGULAR_MAX, POSE_LINEAR_MAX
    vecs = []
    for name in ("left", "right"):
        try:
            v = np.asarray(msg.get(name, [0.0] * 6), dtype=float).reshape(6)
        except (TypeError, ValueError):
            raise ProtocolError(f"{name} must be a 6-vector of numbers") \
                from None
        if not np.all(np.isfinite(v)):
            raise ProtocolError(f"{name} must be finite")
        if np.max(np.abs(v[:3])) > ang_max or np.max(np.abs(v[3:])) > lin_max:
            raise ProtocolError(f"{name} exceeds the schema bounds")
        vecs.append(v)
    return Command(seq=seq, mode=mode, command_mode=command_mode,
                   left=vecs[0], right=vecs[1])


class CommandMailbox:
    """Latest-value mailbox between the reader and the control loop.

    put() applies the last-wins rule by sequence number; take() returns the
    current command without consuming it (the loop re-samples a held command
    every cycle); clear() drops it, e.g. on client disconnect.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._cmd: Optional[Command] = None
        self._last_seq = -1

    def put(self, cmd: Command) -> bool:
        with self._lock:
            if cmd.seq <= self._last_seq:
                return False
            self._last_seq = cmd.seq
            self._cmd = cmd
            return True

    def take(self) -> Optional[Command]:
        with self._lock:
            return self._cmd

    def clear(self) -> None:
        with self._lock:
            self._cmd = None


class TelemetryQueue:
    """Bounded single-producer telemetry buffer, drop-oldest on overflow."""

    def __init__(self, maxlen: int = 256):
        self._lock = threading.Lock()
        self._items = deque(maxlen=maxlen)

    def put(self, item: dict) -> None:
        with self._lock:
            self._items.append(item)

    def drain(self) -> list:
        with self._lock:
            items = list(self._items)
            self._items.clear()
        return items


def _pose_fields(p: Pose) -> dict:
    return {"quat": [float(v) for v in rotation_to_quaternion(p.rotation)],
            "trans": [float(v) for v in p.translation]}


class BridgeLoop:
    """The deterministic core of the teleop server: one pipeline + plant
    instance stepped one control period per cycle() call, producing telemetry
    dictionaries at the configured decimation.

    Kept free of sockets and clocks so scripted replays can drive it directly
    and compare against run_scenario cycle-for-cycle.
    """

    def __init__(self, scenario: sm.Scenario,
                 decimation: int = DEFAULT_DECIMATION):
        if decimation < 1:
            raise ValueError("decimation must be >= 1")
        self.scenario = scenario
        self.decimation = int(decimation)
        dual, obj = sm.load_scenario_models(scenario)
        self.pipeline = sm.Pipeline(dual, obj, scenario)
        self.plant = sm.QuasiStaticPlant(
            dual, obj, scenario.q_start,
            noise_force=scenario.sensor_noise_force,
            noise_torque=scenario.sensor_noise_torque,
            seed=scenario.seed)
        self.obj = obj
        self.tau_limit = self.pipeline.config.torque_ratio * self.pipeline.tau_max
        state = sm.SimState(q=self.plant.q.copy(), dq=np.zeros(14),
                            X_O=self.plant.X_O,
                            lambda_L=self.pipeline.state.lambda_L.copy(),
                            lambda_R=self.pipeline.state.lambda_R.copy())
        self.plant.settle(self.pipeline.torques(state))
        self.sim = self.plant.step(self.pipeline.torques(state), scenario.dt)
        self.rest = rt.object_pose(dual, obj, scenario.q_start, via="left")
        self.ref = self.rest
        self.anchor = self.rest
        self.cycle_index = 0
        self._prev_mode: Optional[str] = None

    # -- command integration ------------------------------------------------

    def _commanded(self, cmd: Optional[Command]) -> Pose:
        """Advance the session reference pose by the sampled command.

        Twist commands accumulate input * dt onto the reference; pose
        commands offset the anchor captured when the session last switched
        into pose mode, keeping the stream continuous across switches. No
        command holds the reference (zero-twist behavior).
        """
        if cmd is None:
            self._prev_mode = None
            return self.ref
        if cmd.mode == "independent":
            u = 0.5 * (cmd.left + cmd.right)
        else:
            u = cmd.left
        if cmd.command_mode == "pose":
            if self._prev_mode != "pose":
                self.anchor = self.ref
            self.ref = sm._offset_pose(self.anchor, u)
        else:
            self.ref = sm._offset_pose(self.ref, u * self.scenario.dt)
        self._prev_mode = cmd.command_mode
        return self.ref

    # -- stepping -----------------------------------------------------------

    def cycle(self, cmd: Optional[Command]) -> Optional[dict]:
        """One 1 kHz control period; returns a telemetry dict on emission
        cycles, None otherwise."""
        t = self.cycle_index * self.scenario.dt
        t0 = time.perf_counter()
        commanded = self._commanded(cmd)
        desired = self.pipeline.cycle(commanded, self.sim,
                                      frames=self.plant.frames)
        tau = self.pipeline.torques(self.sim, frames=self.plant.frames)
        compute_us = (time.perf_counter() - t0) * 1e6
        self.sim = self.plant.step(tau, self.scenario.dt)
        emit = self.cycle_index % self.decimation == 0
        self.cycle_index += 1
        if not emit:
            return None
        margin = min(sm.slippage_margin(self.sim.lambda_L, self.obj),
                     sm.slippage_margin(self.sim.lambda_R, self.obj))
        cop = min(sm.cop_margin(self.sim.lambda_L, self.obj),
                  sm.cop_margin(self.sim.lambda_R, self.obj))
        return {
            "v": PROTOCOL_VERSION,
            "type": "telemetry",
            "cycle": self.cycle_index - 1,
            "time": t,
            "commanded": _pose_fields(commanded),
            "adapted": _pose_fields(self.pipeline.adapted_pose),
            "measured": _pose_fields(self.sim.X_O),
            "tau": [float(v) for v in tau],
            "tau_limit": [float(v) for v in self.tau_limit],
            "torque_ratio": float(self.pipeline.config.torque_ratio),
            "friction_margin": float(margin),
            "cop_margin": float(cop),
            "clamped": bool(desired.clamped),
            "qp_status": desired.qp_status,
            "compute_us": float(compute_us),
        }


def error_frame(message: str) -> str:
    return json.dumps({"v": PROTOCOL_VERSION, "type": "error",
                       "message": message})


def parse_endpoint(endpoint: Optional[str]) -> tuple:
    """(host, port) from "host:port"; falls back to the environment variable
    and then the default."""
    if endpoint is None:
        endpoint = os.environ.get(ENDPOINT_ENV, DEFAULT_ENDPOINT)
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


def serve(scenario: sm.Scenario, endpoint: Optional[str] = None,
          decimation: int = DEFAULT_DECIMATION,
          ready: Optional[threading.Event] = None,
          shutdown: Optional[threading.Event] = None,
          realtime: bool = True) -> None:
    """Run the teleop server until shutdown.

    The control loop runs on its own thread at the scenario rate; the asyncio
    side owns the listener and per-connection reader/writer tasks. They share
    only the mailbox and the telemetry queue. Pass ``realtime=False`` to step
    the loop flat out (tests), and a ``shutdown`` event to stop the server
    programmatically.
    """
    import websockets.asyncio.server as ws_server

    mailbox = CommandMailbox()
    telemetry = TelemetryQueue()
    loop = BridgeLoop(scenario, decimation=decimation)
    stop = shutdown or threading.Event()

    def control_loop():
        period = scenario.dt if realtime else 0.0
        next_t = time.perf_counter()
        while not stop.is_set():
            out = loop.cycle(mailbox.take())
            if out is not None:
                telemetry.put(out)
            if period:
                next_t += period
                delay = next_t - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_t = time.perf_counter()

    async def handler(conn):
        async def writer():
            while True:
                for item in telemetry.drain():
                    await conn.send(json.dumps(item))
                await asyncio.sleep(0.005)

        task = asyncio.create_task(writer())
        try:
            async for text in conn:
                try:
                    cmd = parse_command(text)
                except ProtocolError as e:
                    await conn.send(error_frame(str(e)))
                    continue
                mailbox.put(cmd)   # stale sequence numbers dropped here
        finally:
            task.cancel()
            # disconnect: drop any held command so the loop degrades to
            # holding the last reference pose
            mailbox.clear()

    async def main():
        host, port = parse_endpoint(endpoint)
        thread = threading.Thread(target=control_loop, daemon=True)
        async with ws_server.serve(handler, host, port):
            thread.start()
            if ready is not None:
                ready.set()
            while not stop.is_set():
                await asyncio.sleep(0.05)
        stop.set()
        thread.join(timeout=2.0)

    asyncio.run(main())
