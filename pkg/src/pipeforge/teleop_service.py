"""WebSocket teleoperation endpoint for human demonstration collection.

One client steers the handler by sending target positions; every tick the
service converts the pending target into a drive force through a
proportional-derivative law, steps the simulation through the same contact
pipeline used for training, and streams the resulting state (including the
tick's exact contact forces) back as one JSON object per text frame.

All simulation mutation happens on the asyncio event loop, so ticks and
message handling are serialized on a single logical queue by construction.
"""
import asyncio
import json
import os

import numpy as np

from .config import default_config, sim_config_mapping, config_hash
from .demos import Demonstration, Transition, save_demo, GROUPS
from .env import InsertionEnv, SimConfig, observe_force, observe_visual
from .scene import insertion_depth, pipe_tip

KP = 200.0  # N/m toward the target position
KD = 20.0  # N.s/m velocity damping of the drive

_CONDITIONS = {"fixed": "fixed", "1": "cond1", "2": "cond2",
               "cond1": "cond1", "cond2": "cond2"}


class TeleopSession:
    """Owns the env instance, the pending target, and the recording buffer."""

    def __init__(self, config_mapping=None, record_dir="recordings"):
        self.cfg = dict(default_config() if config_mapping is None else config_mapping)
        self.sim = SimConfig(**sim_config_mapping(self.cfg))
        self.env = InsertionEnv(self.sim, obs_mode="force")
        self.record_dir = record_dir
        self.client = None
        self.tick = 0
        self.target = None
        self.recording = False
        self.buffer = []  # (force_obs, visual_obs, action, reward, done)
        self.episode_seed = 0
        self.episode_condition = "fixed"
        self.saved_count = 0

    # -- connection bookkeeping ------------------------------------------

    def attach(self, client) -> None:
        self.client = client
        self.env.reset(condition="fixed", seed=0)
        self.target = None
        self.recording = False
        self.buffer = []
        self.episode_seed = 0
        self.episode_condition = "fixed"

    def detach(self) -> None:
        self.client = None
        self.target = None
        self.recording = False

    # -- per-tick stepping -------------------------------------------------

    def drive_force(self) -> np.ndarray:
        s = self.env.state
        if self.target is None:
            return np.zeros(3)
        raw = KP * (self.target - s.handler_pos) - KD * s.velocity
        return np.clip(raw, -self.sim.action_clamp, self.sim.action_clamp)

    def tick_step(self) -> dict:
        """Advance one tick (unless the episode already ended) and render state."""
        self.tick += 1
        if not self.env.done:
            action = self.drive_force()
            if self.recording:
                s = self.env.state
                obs_f = observe_force(s, self.sim)
                obs_v = observe_visual(s, self.sim)
            result = self.env.step(action)
            if self.recording:
                self.buffer.append(
                    (obs_f, obs_v, action, result.reward, result.done)
                )
        return self.state_message()

    def state_message(self) -> dict:
        s = self.env.state
        fs = s.force_state
        tip = pipe_tip(s.handler_pos, self.sim.inner_length)
        return {
            "type": "state",
            "tick": self.tick,
            "handler": [float(v) for v in s.handler_pos],
            # position + wxyz orientation; the inner pipe rides the handler
            "inner_pose": [float(v) for v in s.inner_pose.position] + [1.0, 0.0, 0.0, 0.0],
            "depth": float(insertion_depth(tip, s.outer_pose)),
            "distance": float(np.linalg.norm(tip - s.target_center)),
            "f_normal": [float(v) for v in fs.f_normal],
            "f_friction": [float(v) for v in fs.f_friction],
            "collided": int(fs.delta_coll),
            "recording": self.recording,
        }

    # -- message handling ----------------------------------------------------

    def handle(self, msg: dict):
        """Apply one client message; returns a reply dict or None."""
        kind = msg.get("type")
        if kind == "set_target":
            pos = msg.get("pos")
            if (not isinstance(pos, (list, tuple)) or len(pos) != 3
                    or not all(isinstance(v, (int, float)) for v in pos)
                    or not np.all(np.isfinite(pos))):
                return {"type": "error", "detail": "set_target needs pos=[x,y,z]"}
            self.target = np.asarray(pos, dtype=np.float64)
            return None
        if kind == "reset":
            condition = _CONDITIONS.get(str(msg.get("condition", "fixed")))
            if condition is None:
                return {"type": "error", "detail": f"unknown condition {msg.get('condition')!r}"}
            try:
                seed = int(msg.get("seed", 0))
            except (TypeError, ValueError):
                return {"type": "error", "detail": "seed must be an integer"}
            self.env.reset(condition=condition, seed=seed)
            self.target = None
            self.recording = False
            self.buffer = []
            self.episode_seed = seed
            self.episode_condition = condition
            return None
        if kind == "record_start":
            self.recording = True
            self.buffer = []
            return None
        if kind == "record_stop":
            self.recording = False
            return None
        if kind == "save_demo":
            return self._save(msg.get("group"))
        return {"type": "error", "detail": f"unknown message type {kind!r}"}

    def _save(self, group):
        if group not in GROUPS:
            return {"type": "error", "detail": f"group must be one of {GROUPS}"}
        if not self.buffer:
            return {"type": "error", "detail": "nothing recorded"}
        transitions = [
            Transition(
                observation=(obs_f if group == "force" else obs_v).copy(),
                action=np.asarray(action, dtype=np.float64),
                reward=float(reward),
                done=bool(done),
            )
            for obs_f, obs_v, action, reward, done in self.buffer
        ]
        demo = Demonstration(
            group=group,
            condition=self.episode_condition,
            seed=self.episode_seed,
            source="teleop",
            config_hash=config_hash(self.cfg),
            transitions=transitions,
        )
        os.makedirs(self.record_dir, exist_ok=True)
        path = os.path.join(
            self.record_dir, f"teleop_{group}_{self.saved_count:04d}.jsonl"
        )
        save_demo(demo, path)
        self.saved_count += 1
        return {"type": "saved", "path": path}


async def _tick_loop(outbound: asyncio.Queue, session: TeleopSession, tick_hz: float):
    loop = asyncio.get_running_loop()
    period = 1.0 / tick_hz
    next_t = loop.time() + period
    while True:
        await asyncio.sleep(max(0.0, next_t - loop.time()))
        next_t += period
        outbound.put_nowait(json.dumps(session.tick_step()))


async def run_service(port, config_mapping=None, record_dir="recordings",
                      tick_hz: float = 50.0, host="127.0.0.1", started=None):
    """Serve until cancelled. `started` (optional Future) resolves to the port."""
    from websockets.asyncio.server import serve as ws_serve

    session = TeleopSession(config_mapping, record_dir)

    async def handler(ws):
        if session.client is not None:
            await ws.send(json.dumps({"type": "error", "detail": "busy"}))
            await ws.close()
            return
        session.attach(ws)
        # every outgoing frame funnels through one queue -> one writer task
        outbound: asyncio.Queue = asyncio.Queue()

        async def writer():
            while True:
                await ws.send(await outbound.get())

        ticker = asyncio.create_task(_tick_loop(outbound, session, tick_hz))
        sender = asyncio.create_task(writer())
        try:
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict):
                        raise ValueError("frame must be a JSON object")
                except ValueError as exc:
                    reply = {"type": "error", "detail": f"bad frame: {exc}"}
                else:
                    reply = session.handle(msg)
                if reply is not None:
                    outbound.put_nowait(json.dumps(reply))
        finally:
            ticker.cancel()
            sender.cancel()
            session.detach()

    async with ws_serve(handler, host, port) as server:
        if started is not None and not started.done():
            actual = next(iter(server.sockets)).getsockname()[1]
            started.set_result(actual)
        await asyncio.get_running_loop().create_future()  # run forever


def serve(port, config_mapping=None, record_dir="recordings", tick_hz: float = 50.0):
    """Blocking entry point used by the CLI; Ctrl-C to stop."""
    try:
        asyncio.run(run_service(port, config_mapping, record_dir, tick_hz))
    except KeyboardInterrupt:
        pass
