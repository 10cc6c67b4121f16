"""Live session service: the simulator behind a 10 Hz WebSocket feed.

One loop owns the whole session (drone, navigator, instruction registry,
tick counter).  Clients connect over plain WebSocket, receive a state
message every control period, and send small JSON commands: ``instruct``
to drop a guidance marker, ``remove`` to retract one, ``mode`` to switch
between navigator tracking, closed-loop patrol, and pause.  Ingress is
queued and applied between ticks, so a command never acts on a
half-stepped world, and no broadcast mixes two instruction snapshots.
"""

from __future__ import annotations

import base64
import json
import queue
import socket
import threading
import time

from .camera import CameraConfig, RenderSettings, render_observation
from .config import ConfigError, build_world
from .controller import ControlConfig, UserInstruction, control_step
from .dataset import png_gray
from .drone import DronePose, step_drone
from .geometry import TrackingLostError
from .navigator import (NavigatorState, PursuitConfig, step_navigator,
                        track_navigator)
from .net import forward, load_weights
from .seeding import rng_for
from .world import random_route, route_fillet
from .wsproto import OP_TEXT, ProtocolError, WsConnection, server_handshake

_MODES = ("track", "patrol", "paused")


def _round(v, nd=9):
    return round(float(v), nd)


class Service:
    """A bound, steppable session; ``run()`` blocks, tests drive ``start``."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.world = build_world(cfg["world"])
        self.seed = int(cfg["seed"])
        self.mode = cfg["mode"]
        if self.mode not in _MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        self.weights = None
        if cfg.get("weights"):
            self.weights = load_weights(cfg["weights"])
        if self.mode == "patrol" and self.weights is None:
            raise ConfigError("patrol mode needs trained weights")
        self.camera = CameraConfig()
        self.altitude = float(cfg["altitude"])
        self.nav_speed = float(cfg["nav_speed"])
        self.corner_radius = cfg.get("corner_radius")
        self.route_min_length = float(cfg["route_min_length"])
        self.lost_threshold_m = float(cfg["lost_threshold_m"])
        self.realtime = bool(cfg.get("realtime", True))
        self.frame_every = int(cfg.get("frame_every", 5))
        self.max_ticks = cfg.get("max_ticks")
        self.period_s = 0.1
        self.dt = 0.02
        self.pursuit = PursuitConfig()

        self.tick = 0
        self.broadcasts = 0
        self.lost = False
        self.instructions: dict[int, UserInstruction] = {}
        self._next_ident = 1
        self._route_count = 0
        self._settings = RenderSettings(
            texture_seed=int(rng_for(self.seed, "texture").integers(2**31)))
        if self.weights is not None:
            self._ctrl = ControlConfig(sigma=self.weights.sigma, s_max=6.0)
        else:
            self._ctrl = None
        self.nav: NavigatorState | None = None
        self._spawn_route()
        if self.mode == "patrol":
            self.nav = None

        self._ingress: queue.Queue = queue.Queue()
        self._clients: list[WsConnection] = []
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self.port = None

    # -- session state ----------------------------------------------------

    def _spawn_route(self) -> None:
        route = random_route(self.world,
                             rng_for(self.seed, "serve-route", self._route_count),
                             min_length=self.route_min_length)
        if self.corner_radius:
            route = route_fillet(route,
                                 rng_for(self.seed, "serve-fillet", self._route_count),
                                 radius_range=tuple(self.corner_radius))
        self._route_count += 1
        self.nav = NavigatorState(route=route, progress=0.0, speed=self.nav_speed)
        p = self.nav.position
        self.pose = DronePose(float(p[0]), float(p[1]), self.nav.bearing,
                              self.altitude)

    def _apply(self, conn: WsConnection, msg: dict) -> None:
        kind = msg.get("type")
        try:
            if kind == "instruct":
                du = float(msg["du"])
                instr = UserInstruction(
                    x=float(msg["x"]), y=float(msg["y"]), du=du,
                    radius=float(msg.get("radius", 1000.0)),
                    ident=int(msg["id"]) if "id" in msg else self._next_ident)
                self._next_ident = max(self._next_ident, instr.ident + 1)
                self.instructions[instr.ident] = instr
                self._reply(conn, {"type": "ack", "id": instr.ident})
            elif kind == "remove":
                ident = int(msg["id"])
                if ident not in self.instructions:
                    self._reply(conn, {"type": "error",
                                       "reason": f"unknown instruction id {ident}"})
                else:
                    del self.instructions[ident]
                    self._reply(conn, {"type": "ack", "id": ident})
            elif kind == "mode":
                want = msg.get("mode")
                if want not in _MODES:
                    self._reply(conn, {"type": "error",
                                       "reason": f"unknown mode {want!r}"})
                elif want == "patrol" and self.weights is None:
                    self._reply(conn, {"type": "error",
                                       "reason": "patrol mode needs trained weights"})
                else:
                    if want == "track" and self.nav is None:
                        self._spawn_route()
                    self.mode = want
                    self._reply(conn, {"type": "ack", "mode": want})
            else:
                self._reply(conn, {"type": "error",
                                   "reason": f"unknown message type {kind!r}"})
        except (KeyError, TypeError, ValueError) as exc:
            self._reply(conn, {"type": "error", "reason": str(exc)})

    def _step_track(self) -> None:
        for _ in range(round(self.period_s / self.dt)):
            try:
                self.nav = step_navigator(self.nav, self.dt)
                self.pose = track_navigator(self.pose, self.nav, self.dt,
                                            self.camera, self.pursuit)
            except TrackingLostError:
                self._spawn_route()
                return
            self.tick += 1
            if self.nav.finished:
                self._spawn_route()
                return

    def _step_patrol(self, command) -> None:
        for _ in range(round(self.period_s / self.dt)):
            self.pose = step_drone(self.pose, command, self.dt)
            self.tick += 1
        if self.world.nearest_road(self.pose.position)[0] > self.lost_threshold_m:
            self.mode = "paused"  # drone lost: freeze rather than fly away
            self.lost = True

    def _world_message(self) -> str:
        msg = {
            "type": "world",
            "nodes": {str(k): [_round(float(v[0])), _round(float(v[1]))]
                      for k, v in sorted(self.world.nodes.items())},
            "edges": [[int(a), int(b), _round(float(w))]
                      for a, b, w in self.world.edges],
        }
        return json.dumps(msg, sort_keys=True, separators=(",", ":"))

    def _state_message(self, telemetry, with_frame: bool, frame) -> str:
        drone = {"x": _round(self.pose.x), "y": _round(self.pose.y),
                 "yaw": _round(self.pose.yaw), "alt": _round(self.pose.altitude)}
        nav = None
        if self.mode != "patrol" and self.nav is not None:
            p = self.nav.position
            nav = {"x": _round(p[0]), "y": _round(p[1]),
                   "bearing": _round(self.nav.bearing),
                   "speed": _round(self.nav.speed)}
        instructions = [
            {"id": i.ident, "x": _round(i.x), "y": _round(i.y),
             "du": _round(i.du), "radius": _round(i.radius),
             "active": i.active_for(self.pose)}
            for i in sorted(self.instructions.values(), key=lambda i: i.ident)]
        msg = {
            "type": "state", "tick": self.tick, "mode": self.mode,
            "drone": drone, "navigator": nav,
            "command": None if telemetry is None else telemetry["command"],
            "candidates": [] if telemetry is None else telemetry["candidates"],
            "chosen": None if telemetry is None else telemetry["chosen"],
            "instruction": None if telemetry is None else telemetry["instruction"],
            "instructions": instructions,
        }
        if with_frame and frame is not None:
            msg["frame_b64"] = base64.b64encode(png_gray(frame)).decode("ascii")
            msg["frame_size"] = [int(frame.shape[1]), int(frame.shape[0])]
        return json.dumps(msg, sort_keys=True, separators=(",", ":"))

    def step(self) -> str:
        """One control period: apply ingress, advance, return the state JSON."""

        tick_before = self.tick
        while True:
            try:
                conn, msg = self._ingress.get_nowait()
            except queue.Empty:
                break
            self._apply(conn, msg)

        want_frame = self.frame_every > 0 and (
            self.broadcasts % self.frame_every == 0)
        need_render = want_frame or self.weights is not None
        frame = None
        telemetry = None
        command = None
        if need_render and self.mode != "paused":
            obs = render_observation(self.world, self.pose, self.camera,
                                     tick=self.tick, settings=self._settings)
            frame = obs.raster
            if self.weights is not None:
                pred = forward(self.weights, obs.raster)
                command, telemetry = control_step(
                    pred, list(self.instructions.values()), self.pose,
                    self._ctrl)
                telemetry["tick"] = self.tick

        if self.mode == "track":
            self._step_track()
        elif self.mode == "patrol":
            self._step_patrol(command)

        state = self._state_message(telemetry, want_frame, frame)
        if self.tick != tick_before:
            self.broadcasts += 1
        return state

    # -- network plumbing -------------------------------------------------

    def start(self) -> None:
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((self.cfg["host"], int(self.cfg["port"])))
        self._listener.listen(8)
        self.port = self._listener.getsockname()[1]
        for target in (self._accept_loop, self._run_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)

    def run(self) -> dict:
        self.start()
        try:
            while not self._stop.is_set():
                if self.max_ticks is not None and (
                        self.tick >= self.max_ticks or self.lost):
                    break
                time.sleep(0.05)
        except KeyboardInterrupt:
            pass
        self.stop()
        return {"ticks": self.tick, "broadcasts": self.broadcasts,
                "lost": self.lost, "port": self.port}

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._clients_lock:
            clients = list(self._clients)
        for conn in clients:
            conn.close()
        for t in list(self._threads):
            t.join(timeout=2.0)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _addr = self._listener.accept()
            except OSError:
                return
            t = threading.Thread(target=self._client_loop, args=(sock,),
                                 daemon=True)
            t.start()
            self._threads.append(t)

    def _client_loop(self, sock) -> None:
        try:
            server_handshake(sock)
        except (ProtocolError, OSError):
            sock.close()
            return
        conn = WsConnection(sock, server_side=True)
        # world geometry goes out once, before the client can see any state
        try:
            conn.send_text(self._world_message())
        except OSError:
            conn.close()
            return
        with self._clients_lock:
            self._clients.append(conn)
        try:
            while not self._stop.is_set():
                got = conn.recv_message()
                if got is None:
                    break
                opcode, payload = got
                if opcode != OP_TEXT:
                    self._reply(conn, {"type": "error",
                                       "reason": "binary messages not accepted"})
                    continue
                try:
                    msg = json.loads(payload.decode("utf-8"))
                    if not isinstance(msg, dict):
                        raise ValueError("message must be a JSON object")
                except (ValueError, UnicodeDecodeError) as exc:
                    self._reply(conn, {"type": "error", "reason": str(exc)})
                    continue
                self._ingress.put((conn, msg))
        except ProtocolError as exc:
            self._reply(conn, {"type": "error", "reason": str(exc)})
        finally:
            with self._clients_lock:
                if conn in self._clients:
                    self._clients.remove(conn)
            conn.close()

    def _reply(self, conn: WsConnection, payload: dict) -> None:
        try:
            conn.send_text(json.dumps(payload, sort_keys=True,
                                      separators=(",", ":")))
        except OSError:
            pass

    def _run_loop(self) -> None:
        # broadcast only when the tick advanced: the state stream stays
        # strictly increasing in tick, and a paused session goes quiet
        last_tick = None
        while not self._stop.is_set():
            if self.max_ticks is not None and self.tick >= self.max_ticks:
                return
            t0 = time.monotonic()
            state = self.step()
            if self.tick != last_tick:
                last_tick = self.tick
                with self._clients_lock:
                    clients = list(self._clients)
                dead = []
                for conn in clients:
                    try:
                        conn.send_text(state)
                    except OSError:
                        dead.append(conn)
                if dead:
                    with self._clients_lock:
                        for conn in dead:
                            if conn in self._clients:
                                self._clients.remove(conn)
            if self.realtime:
                time.sleep(max(0.0, self.period_s - (time.monotonic() - t0)))
            elif self.mode == "paused":
                time.sleep(0.002)  # don't spin while frozen


def serve(cfg: dict) -> dict:
    """Run a session until max_ticks or interrupt; returns a small summary."""

    service = Service(cfg)
    summary = service.run()
    return summary
