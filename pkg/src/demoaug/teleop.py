"""Live-steering session server: drive the simulated hand over a socket.

Wire protocol (normative): every message is a 4-byte big-endian length
followed by a UTF-8 JSON body.  On connect the server sends a handshake
{"proto": 1, "task", "F", "resolution"}; afterwards the client streams
ControlMessages {"ee_delta": [6], "fingers": [F], "record_toggle"?, "reset"?}
and the server answers one FrameMessage per tick {"tick", "image": {"w",
"h", "rgb8_b64"}, "proprio", "success_flag", "recording_flag"}.

The tick loop owns the world exclusively; network reads land in a mailbox
holding only the latest control, and a tick with no fresh input applies a
zero action (hold).  Toggling recording off packages the buffered frames
into a demonstration, which is saved only if the episode reached task
success.  Every applied control is kept in a transcript; replaying a
transcript through `replay_transcript` reproduces the saved demos
byte-for-byte.
"""

from __future__ import annotations

import base64
import json
import logging
import socket
import struct
import threading
import time

from . import demos as demos_mod
from .demos import Action, Demonstration, Provenance
from .render import RenderSettings, observe
from .se3 import Twist
from .world import KinematicWorld, TaskSpec, task_spec

PROTO_VERSION = 1


class TeleopError(Exception):
    pass


class BindFailure(TeleopError):
    pass


class ProtocolViolation(TeleopError):
    pass


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------


def encode_message(obj: dict) -> bytes:
    body = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(body)) + body


class MessageReader:
    """Incremental length-prefixed JSON decoder for a byte stream."""

    MAX_BODY = 1 << 22

    def __init__(self):
        self._buf = bytearray()

    def push(self, data: bytes) -> list[dict]:
        self._buf += data
        out = []
        while True:
            if len(self._buf) < 4:
                return out
            (n,) = struct.unpack_from(">I", self._buf, 0)
            if n > self.MAX_BODY:
                raise ProtocolViolation(f"message length {n} exceeds limit")
            if len(self._buf) < 4 + n:
                return out
            body = bytes(self._buf[4 : 4 + n])
            del self._buf[: 4 + n]
            try:
                msg = json.loads(body.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise ProtocolViolation(f"undecodable message body: {e}") from e
            if not isinstance(msg, dict):
                raise ProtocolViolation("message body must be a JSON object")
            out.append(msg)


def validate_control(msg: dict, finger_dim: int) -> dict:
    """Clamp and normalize a ControlMessage; raises ProtocolViolation."""
    out: dict = {}
    ee = msg.get("ee_delta", [0.0] * 6)
    if not isinstance(ee, list) or len(ee) != 6 or not all(isinstance(v, (int, float)) for v in ee):
        raise ProtocolViolation("ee_delta must be a list of 6 numbers")
    out["ee_delta"] = [max(-1.0, min(1.0, float(v))) for v in ee]
    fingers = msg.get("fingers")
    if fingers is not None:
        if not isinstance(fingers, list) or len(fingers) != finger_dim or not all(
            isinstance(v, (int, float)) for v in fingers
        ):
            raise ProtocolViolation(f"fingers must be a list of {finger_dim} numbers")
        out["fingers"] = [max(0.0, min(2.0, float(v))) for v in fingers]
    if "record_toggle" in msg:
        if not isinstance(msg["record_toggle"], bool):
            raise ProtocolViolation("record_toggle must be a boolean")
        out["record_toggle"] = msg["record_toggle"]
    if "reset" in msg:
        r = msg["reset"]
        if not isinstance(r, dict) or "task" not in r or "level" not in r or "seed" not in r:
            raise ProtocolViolation("reset needs task, level, and seed")
        out["reset"] = {"task": str(r["task"]), "level": int(r["level"]), "seed": int(r["seed"])}
    return out


# ---------------------------------------------------------------------------
# Session
# ---------------------------------------------------------------------------


class TeleopSession:
    """Pure tick logic: world stepping, recording, and frame emission."""

    def __init__(self, world: KinematicWorld, task: TaskSpec, seed: int, settings: RenderSettings,
                 on_demo=None):
        self.world = world
        self.task = task
        self.seed = seed
        self.settings = settings
        self.on_demo = on_demo
        self.state = world.reset(task, seed)
        self.recording = False
        self.buffer: list = []
        self.tick_index = 0
        self.transcript: list = []
        self.saved = 0
        self.discarded = 0
        self._pre_obs = None  # observation of the current state, if cached

    def tick(self, control: dict | None) -> dict:
        """Apply one (validated) control or a hold; returns the FrameMessage.

        The emitted frame shows the post-action state so a closed-loop client
        steers against fresh feedback; the pre-action observation recorded
        into demos is the previous tick's frame, rendered once.
        """
        self.transcript.append((self.tick_index, control))
        if control and "reset" in control:
            r = control["reset"]
            self.task = task_spec(r["task"], r["level"], self.world.level_overrides)
            self.state = self.world.reset(self.task, r["seed"])
            self._pre_obs = None
            if self.recording:
                self.recording = False
                self.buffer.clear()
                self.discarded += 1
        if control and control.get("record_toggle"):
            if self.recording:
                self._finalize()
            else:
                self.buffer.clear()
                self.recording = True

        if control and "ee_delta" in control:
            ee = Twist.from_sequence(control["ee_delta"])
        else:
            ee = Twist.zero()
        fingers = tuple(control["fingers"]) if control and control.get("fingers") else self.state.finger_values
        action = Action(ee, fingers)

        if self.recording:
            pre_obs = self._pre_obs if self._pre_obs is not None else observe(self.state, self.settings)
            self.buffer.append((self.state, pre_obs, action))
        self.state = self.world.step(self.state, action)
        obs = observe(self.state, self.settings)
        self._pre_obs = obs
        frame = {
            "tick": self.tick_index,
            "image": {
                "w": int(obs.image.shape[1]),
                "h": int(obs.image.shape[0]),
                "rgb8_b64": base64.b64encode(obs.image.tobytes()).decode("ascii"),
            },
            "proprio": list(obs.proprio),
            "success_flag": self.world.eval_success(self.task, self.state),
            "recording_flag": self.recording,
        }
        self.tick_index += 1
        return frame

    def _finalize(self):
        self.recording = False
        frames = list(self.buffer)
        self.buffer.clear()
        if len(frames) < 2 or not self.world.eval_success(self.task, self.state):
            self.discarded += 1
            logging.getLogger(__name__).warning(
                "discarding recording (%d frames): episode did not reach %s success",
                len(frames), self.task.kind,
            )
            return
        from .demos import FrameRecord
        from .world import encode_state

        records = [
            FrameRecord(time=i / 30.0, observation=obs, action=action, sim_state=encode_state(st))
            for i, (st, obs, action) in enumerate(frames)
        ]
        demo = Demonstration(
            id=f"teleop-{self.task.kind}-L{self.task.level}-t{self.tick_index}",
            task=self.task.ref(),
            frames=tuple(records),
            provenance=Provenance("teleop", seed=self.seed),
            action_scale=self.world.cfg.action_scale,
        )
        self.saved += 1
        if self.on_demo:
            self.on_demo(demo)

    def handshake(self) -> dict:
        w, h = self.settings.camera.resolution
        return {
            "proto": PROTO_VERSION,
            "task": self.task.kind,
            "F": self.world.cfg.finger_dim,
            "resolution": [w, h],
        }


def replay_transcript(world: KinematicWorld, task: TaskSpec, seed: int, settings: RenderSettings,
                      transcript: list) -> list[Demonstration]:
    """Feed a recorded control transcript through a fresh session."""
    saved: list[Demonstration] = []
    session = TeleopSession(world, task, seed, settings, on_demo=saved.append)
    for _tick, control in transcript:
        session.tick(control)
    return saved


# ---------------------------------------------------------------------------
# Socket server
# ---------------------------------------------------------------------------


class TeleopServer:
    """One session, one client at a time, 30 Hz nominal ticks."""

    def __init__(self, world: KinematicWorld, task: TaskSpec, seed: int, settings: RenderSettings,
                 on_demo=None, tick_hz: float = 30.0, realtime: bool = True, lockstep: bool = False):
        self.session = TeleopSession(world, task, seed, settings, on_demo=on_demo)
        self.tick_hz = tick_hz
        self.realtime = realtime
        self.lockstep = lockstep
        self.address: tuple[str, int] | None = None
        self._stop = threading.Event()
        self._mail_lock = threading.Lock()
        self._mail: dict | None = None
        self._violation: str | None = None

    def stop(self):
        self._stop.set()

    def serve(self, host: str = "127.0.0.1", port: int = 0, max_ticks: int | None = None,
              ready: threading.Event | None = None):
        try:
            srv = socket.create_server((host, port))
        except OSError as e:
            raise BindFailure(f"cannot bind {host}:{port}: {e}") from e
        srv.settimeout(0.2)
        self.address = srv.getsockname()
        if ready is not None:
            ready.set()
        ticks_left = max_ticks
        try:
            while not self._stop.is_set() and (ticks_left is None or ticks_left > 0):
                try:
                    conn, _peer = srv.accept()
                except socket.timeout:
                    continue
                with conn:
                    ticks_left = self._client_loop(conn, ticks_left)
        finally:
            srv.close()

    def _client_loop(self, conn: socket.socket, ticks_left: int | None) -> int | None:
        conn.sendall(encode_message(self.session.handshake()))
        self._violation = None
        with self._mail_lock:
            self._mail = None
        alive = threading.Event()
        alive.set()
        reader = threading.Thread(target=self._read_loop, args=(conn, alive), daemon=True)
        reader.start()
        period = 1.0 / self.tick_hz
        next_tick = time.monotonic()
        try:
            while alive.is_set() and not self._stop.is_set():
                if ticks_left is not None and ticks_left <= 0:
                    break
                if self._violation is not None:
                    break  # close this connection; the session survives
                control = self._pop_mail()
                if control is None and self.lockstep:
                    deadline = time.monotonic() + 10.0
                    while control is None and alive.is_set() and self._violation is None:
                        if time.monotonic() > deadline:
                            break
                        time.sleep(0.0005)
                        control = self._pop_mail()
                    if control is None:
                        break
                frame = self.session.tick(control)
                try:
                    conn.sendall(encode_message(frame))
                except OSError:
                    break
                if ticks_left is not None:
                    ticks_left -= 1
                if self.realtime:
                    next_tick += period
                    delay = next_tick - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                    else:
                        next_tick = time.monotonic()
        finally:
            alive.clear()
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        return ticks_left

    def _read_loop(self, conn: socket.socket, alive: threading.Event):
        reader = MessageReader()
        conn.settimeout(0.2)
        while alive.is_set():
            try:
                data = conn.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                break
            if not data:
                break
            try:
                msgs = reader.push(data)
                for m in msgs:
                    control = validate_control(m, self.session.world.cfg.finger_dim)
                    with self._mail_lock:
                        self._mail = control
            except ProtocolViolation as e:
                self._violation = str(e)
                break
        alive.clear()

    def _pop_mail(self) -> dict | None:
        with self._mail_lock:
            m = self._mail
            self._mail = None
        return m


def save_demo_to_dir(directory):
    """on_demo callback that writes numbered demo files into a directory."""
    import os

    os.makedirs(directory, exist_ok=True)
    counter = {"n": 0}

    def save(demo: Demonstration):
        path = os.path.join(directory, f"demo-{counter['n']:03d}.json")
        demos_mod.save(demo, path)
        counter["n"] += 1

    return save
