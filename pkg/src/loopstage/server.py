"""HTTP + WebSocket server for live performances.

Control channel (text JSON): {"op":"trigger","layer":L,"action":A} and
{"op":"param","name":N,"value":V}; acks echo the server column stamp.
Stream channel (binary): u64 column id followed by one u32 frame index per
layer.  A PNG-per-column image stream exists as a fallback for thin
clients.  Sprites and the background are served statically so clients can
composite locally.
"""

import asyncio
import io
import json
import struct

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import Response
from PIL import Image

from .pipeline import PreparedProject
from .render import RenderJob
from .service import (PerformanceRecording, RecordingStore, Session,
                      SessionError)


def encode_column(column: int, frames) -> bytes:
    return struct.pack(f"<Q{len(frames)}I", column, *[int(f) for f in frames])


def decode_column(data: bytes):
    n = (len(data) - 8) // 4
    parts = struct.unpack(f"<Q{n}I", data)
    return parts[0], list(parts[1:])


class Broadcaster:
    def __init__(self):
        self.clients: set[WebSocket] = set()

    async def send(self, data: bytes):
        dead = []
        for ws in self.clients:
            try:
                await ws.send_bytes(data)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self.clients.discard(ws)


def create_app(prepared: PreparedProject, autoplay: bool = True,
               recording_dir=None) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = None
        if autoplay:
            async def tick():
                period = 1.0 / session.frame_rate
                while True:
                    await play_columns(1)
                    await asyncio.sleep(period)

            task = asyncio.create_task(tick())
        yield
        if task is not None:
            task.cancel()

    app = FastAPI(title="loopstage", lifespan=lifespan)
    session = Session(prepared)
    store = RecordingStore(recording_dir)
    index_stream = Broadcaster()
    image_stream = Broadcaster()
    app.state.session = session
    app.state.store = store

    def live_render_job():
        actors = [prepared.actors[ld.actor].actor
                  for ld in prepared.project.layers]
        bg = next(iter(prepared.actors.values())).background
        return RenderJob(rows=session.rows, layer_actors=actors,
                         background=bg, quality="live")

    async def play_columns(count: int):
        played = session.advance(count)
        start = session.playhead - played.shape[1]
        for i in range(played.shape[1]):
            column = start + i
            await index_stream.send(encode_column(column, played[:, i]))
            if image_stream.clients:
                job = live_render_job()
                img = job.render_frame(column)
                buf = io.BytesIO()
                Image.fromarray(img).save(buf, format="PNG")
                await image_stream.send(
                    struct.pack("<Q", column) + buf.getvalue())

    # -- HTTP --------------------------------------------------------------

    @app.get("/project")
    def get_project():
        layers = []
        for ld in prepared.project.layers:
            model = prepared.actors[ld.actor].action_model
            actor = prepared.actors[ld.actor].actor
            keys = {a.id: a.key for a in actor.actions}
            layers.append({
                "id": ld.id,
                "actor": ld.actor,
                "live": ld.live,
                "actions": [
                    {"id": aid, "key": keys.get(aid, "")}
                    for aid in model.action_ids
                ],
            })
        bg = next(iter(prepared.actors.values())).background
        return {
            "name": prepared.project.name,
            "frame_rate": prepared.project.frame_rate,
            "width": int(bg.shape[1]),
            "height": int(bg.shape[0]),
            "layers": layers,
            "actors": {
                aid: {"kind": pa.actor.kind, "frames": pa.actor.n_frames}
                for aid, pa in prepared.actors.items()
            },
        }

    @app.get("/background.png")
    def get_background():
        bg = next(iter(prepared.actors.values())).background
        buf = io.BytesIO()
        Image.fromarray(bg).save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    @app.get("/sprites/{actor}/{frame}.png")
    def get_sprite(actor: str, frame: int):
        if actor not in prepared.actors:
            raise HTTPException(404, f"unknown actor {actor!r}")
        pa = prepared.actors[actor]
        if not 0 <= frame < pa.actor.n_frames:
            raise HTTPException(404, f"frame {frame} out of range")
        img = pa.actor.source.frames[frame]
        if pa.actor.masks is not None:
            rgba = np.dstack([img, pa.actor.masks[frame].astype(np.uint8) * 255])
        else:
            rgba = np.dstack([img, np.full(img.shape[:2], 255, np.uint8)])
        buf = io.BytesIO()
        Image.fromarray(rgba, "RGBA").save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    @app.post("/recordings")
    async def post_recording(body: dict | None = None):
        if body:
            rec = PerformanceRecording(
                manifest_hash=body["manifest_hash"],
                events=body.get("events", []))
        else:
            rec = session.recording
        return {"id": store.put(rec)}

    @app.get("/recordings/{rec_id}")
    def get_recording(rec_id: str):
        try:
            rec = store.get(rec_id)
        except KeyError:
            raise HTTPException(404, f"no recording {rec_id!r}")
        return json.loads(rec.to_json())

    # -- WebSockets --------------------------------------------------------

    @app.websocket("/control")
    async def control(ws: WebSocket):
        await ws.accept()
        try:
            while True:
                msg = json.loads(await ws.receive_text())
                op = msg.get("op")
                try:
                    if op == "trigger":
                        column = session.trigger(msg["layer"], msg["action"])
                        await ws.send_text(json.dumps(
                            {"op": "ack", "column": column}))
                    elif op == "param":
                        session.set_param(msg["name"], msg["value"])
                        await ws.send_text(json.dumps(
                            {"op": "ack", "column": session.playhead}))
                    elif op == "step" and not autoplay:
                        await play_columns(int(msg.get("columns", 1)))
                        await ws.send_text(json.dumps(
                            {"op": "ack", "column": session.playhead}))
                    else:
                        await ws.send_text(json.dumps(
                            {"op": "error", "message": f"bad op {op!r}"}))
                except (SessionError, KeyError) as e:
                    await ws.send_text(json.dumps(
                        {"op": "error", "message": str(e)}))
        except WebSocketDisconnect:
            pass

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        index_stream.clients.add(ws)
        try:
            while True:
                await ws.receive_text()  # keepalive; clients need not send
        except WebSocketDisconnect:
            index_stream.clients.discard(ws)

    @app.websocket("/stream/png")
    async def stream_png(ws: WebSocket):
        await ws.accept()
        image_stream.clients.add(ws)
        try:
            while True:
                await ws.receive_text()
        except WebSocketDisconnect:
            image_stream.clients.discard(ws)

    return app
