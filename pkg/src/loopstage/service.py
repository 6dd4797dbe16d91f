"""Live performance sessions: triggers, lookahead synthesis, recording.

A session owns the output timeline for one performance.  Playback is a
column clock at the project frame rate; synthesis always runs ahead of the
playhead in fixed blocks, and triggers splice new request ramps in at the
commit point (just past the playhead), re-synthesizing every uncommitted
column.  Everything a performer does is recorded with timestamps so the
exact session can be replayed or re-synthesized offline with full future
knowledge.
"""

import json
import uuid
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assets import content_hash, project_to_manifest
from .engine import RequestTrack, SynthesisEngine, timeline_energy
from .pipeline import PreparedProject

BLOCK_COLUMNS = 64
LOW_WATER = 32
COMMIT_AHEAD = 2


class SessionError(Exception):
    pass


@dataclass
class PerformanceRecording:
    """Timestamped trigger/parameter events; enough to re-create a session."""

    manifest_hash: str = ""
    events: list[dict] = field(default_factory=list)

    def append(self, event: dict):
        if self.events and event["t"] < self.events[-1]["t"]:
            raise SessionError("event timestamps must be non-decreasing")
        self.events.append(event)

    def to_json(self) -> str:
        return json.dumps({"manifest_hash": self.manifest_hash,
                           "events": self.events}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PerformanceRecording":
        doc = json.loads(text)
        return cls(manifest_hash=doc["manifest_hash"], events=doc["events"])


def manifest_hash(prepared: PreparedProject) -> str:
    return content_hash(json.dumps(project_to_manifest(prepared.project),
                                   sort_keys=True))


class Session:
    """One live performance over a prepared project."""

    def __init__(self, prepared: PreparedProject,
                 params=None,
                 block: int = BLOCK_COLUMNS,
                 low_water: int = LOW_WATER,
                 commit_ahead: int = COMMIT_AHEAD):
        self.prepared = prepared
        self.params = params or prepared.synthesis_params()
        self.engine: SynthesisEngine = prepared.make_engine(self.params)
        self.block = block
        self.low_water = low_water
        self.commit_ahead = commit_ahead
        self.frame_rate = prepared.project.frame_rate
        self.quality = "live"

        self.layer_defs = prepared.project.layers
        self.layer_index = {ld.id: d for d, ld in enumerate(self.layer_defs)}
        self.tracks: list[RequestTrack] = []
        for ld in self.layer_defs:
            ids = prepared.actors[ld.actor].action_model.action_ids
            initial = ids.index(ld.initial_action) if ld.initial_action else 0
            self.tracks.append(RequestTrack(len(ids), initial))

        d = len(self.layer_defs)
        self.rows = np.zeros((d, 0), dtype=np.int64)
        self.playhead = 0
        self.recording = PerformanceRecording(
            manifest_hash=manifest_hash(prepared))
        self.refill()

    # -- clock -------------------------------------------------------------

    def column_ms(self, column: int) -> float:
        return column * 1000.0 / self.frame_rate

    def ms_column(self, t_ms: float) -> int:
        return int(t_ms * self.frame_rate / 1000.0)

    @property
    def synthesized(self) -> int:
        return self.rows.shape[1]

    # -- synthesis ---------------------------------------------------------

    def refill(self):
        """Keep at least low_water unplayed columns synthesized ahead."""
        while self.synthesized - self.playhead < self.low_water:
            k0 = self.synthesized
            requests = [tr.window(k0, self.block) for tr in self.tracks]
            block_rows = self.engine.synthesize_block(requests)
            self.rows = np.hstack([self.rows, block_rows])

    def _rewind_to(self, column: int):
        """Drop synthesized-but-unplayed columns at and beyond `column`."""
        column = max(column, self.playhead)
        if self.synthesized <= column:
            return
        self.rows = self.rows[:, :column]
        for d, layer in enumerate(self.engine.layers):
            layer.current_frame = (int(self.rows[d, column - 1])
                                   if column > 0 else None)

    # -- commands ----------------------------------------------------------

    def actions_of(self, layer_id: str) -> list[str]:
        d = self.layer_index[layer_id]
        actor = self.layer_defs[d].actor
        return self.prepared.actors[actor].action_model.action_ids

    def trigger(self, layer_id: str, action_id: str,
                at_column: Optional[int] = None) -> int:
        """Request an action on a layer; returns the commit column."""
        if layer_id not in self.layer_index:
            raise SessionError(f"unknown layer {layer_id!r}")
        d = self.layer_index[layer_id]
        actions = self.actions_of(layer_id)
        if action_id not in actions:
            raise SessionError(
                f"unknown action {action_id!r} on layer {layer_id!r}")
        commit = (at_column if at_column is not None
                  else self.playhead + self.commit_ahead)
        commit = max(commit, self.playhead)
        self.tracks[d].trigger(commit, actions.index(action_id),
                               self.params.ramp_len)
        self._rewind_to(commit)
        self.refill()
        self.recording.append({
            "t": self.column_ms(commit), "type": "trigger",
            "layer": layer_id, "action": action_id, "column": commit,
        })
        return commit

    PARAM_RANGES = {
        "synth_alpha": (0.0, 1.0),
        "beta": (0.0, 1.0),
        "compression": (1, 64),
    }

    def set_param(self, name: str, value):
        if name == "quality":
            if value not in ("live", "final"):
                raise SessionError(f"bad quality {value!r}")
            self.quality = value
        elif name in self.PARAM_RANGES:
            lo, hi = self.PARAM_RANGES[name]
            if not lo <= value <= hi:
                raise SessionError(
                    f"{name}={value!r} outside [{lo}, {hi}]")
            setattr(self.params, name,
                    int(value) if name == "compression" else float(value))
        else:
            raise SessionError(f"unknown parameter {name!r}")
        self.recording.append({
            "t": self.column_ms(self.playhead + self.commit_ahead),
            "type": "param", "name": name, "value": value,
            "column": self.playhead + self.commit_ahead,
        })

    def advance(self, columns: int = 1) -> np.ndarray:
        """Play `columns` columns; returns the (D, columns) slice played."""
        start = self.playhead
        self.playhead += columns
        self.refill()
        return self.rows[:, start:self.playhead]

    def column(self, k: int) -> np.ndarray:
        if k >= self.synthesized:
            self.refill()
        return self.rows[:, k]


# ---------------------------------------------------------------------------
# replay and offline re-synthesis


def replay_session(prepared: PreparedProject,
                   recording: PerformanceRecording,
                   params=None, **session_kw) -> Session:
    """Re-run a recording live, with deterministic block boundaries.

    Events are applied at their recorded columns; the playhead advances to
    each event's commit point exactly as during the original run, so the
    resulting timeline matches the live one column for column.
    """
    check_hash(prepared, recording)
    session = Session(prepared, params=params, **session_kw)
    for ev in recording.events:
        column = ev["column"]
        target_playhead = max(session.playhead, column - session.commit_ahead)
        if target_playhead > session.playhead:
            session.advance(target_playhead - session.playhead)
        if ev["type"] == "trigger":
            session.trigger(ev["layer"], ev["action"], at_column=column)
        else:
            session.set_param(ev["name"], ev["value"])
    return session


def check_hash(prepared: PreparedProject, recording: PerformanceRecording):
    if recording.manifest_hash != manifest_hash(prepared):
        raise SessionError("recording does not match this project manifest")


def rebuild_request_tracks(prepared: PreparedProject,
                           recording: PerformanceRecording,
                           ramp_len: int) -> list[RequestTrack]:
    tracks = []
    for ld in prepared.project.layers:
        ids = prepared.actors[ld.actor].action_model.action_ids
        initial = ids.index(ld.initial_action) if ld.initial_action else 0
        tracks.append(RequestTrack(len(ids), initial))
    index = {ld.id: d for d, ld in enumerate(prepared.project.layers)}
    for ev in recording.events:
        if ev["type"] == "trigger":
            d = index[ev["layer"]]
            ids = prepared.actors[prepared.project.layers[d].actor] \
                .action_model.action_ids
            tracks[d].trigger(ev["column"], ids.index(ev["action"]), ramp_len)
    return tracks


def resynthesize_recording(prepared: PreparedProject,
                           recording: PerformanceRecording,
                           total_columns: Optional[int] = None,
                           params=None):
    """Offline re-synthesis with complete future knowledge.

    Returns (rows, requests, objective): each row is solved in one DP over
    the whole reconstructed request timeline, so the summed energy never
    exceeds the live run's.  Parameter events are not replayed; the
    synthesis parameters are fixed for the whole offline pass.
    """
    check_hash(prepared, recording)
    params = params or prepared.synthesis_params()
    if total_columns is None:
        last = max((ev["column"] for ev in recording.events), default=0)
        total_columns = last + params.ramp_len + BLOCK_COLUMNS
    tracks = rebuild_request_tracks(prepared, recording, params.ramp_len)
    requests = [tr.window(0, total_columns) for tr in tracks]
    engine = prepared.make_engine(params)
    rows = engine.synthesize_block(requests)
    objective = timeline_energy(engine.layers, rows, requests, params,
                                prepared.compat)
    return rows, requests, objective


def live_objective(session: Session, columns: int,
                   params=None) -> float:
    """Energy of the live timeline, judged against the final request
    timelines (the same yardstick the offline pass optimizes)."""
    params = params or session.params
    requests = [tr.window(0, columns) for tr in session.tracks]
    layers = session.prepared.make_layers(params)
    return timeline_energy(layers, session.rows[:, :columns], requests,
                           params, session.prepared.compat)


# ---------------------------------------------------------------------------
# synthesis by numbers


def control_sequence_triggers(control_frames: np.ndarray,
                              color_actions: dict[tuple[int, int, int], str],
                              layer_anchors: list[tuple[int, int]],
                              ) -> list[tuple[int, int, str]]:
    """Schedule triggers from colors sampled in a painted control sequence.

    For every control frame, each layer's requested action is the mapped
    color at its anchor pixel (y, x); unmapped colors hold the previous
    request.  Returns (frame, layer, action) triples, one per change.
    """
    schedule = []
    current: list[Optional[str]] = [None] * len(layer_anchors)
    for f, frame in enumerate(control_frames):
        for d, (y, x) in enumerate(layer_anchors):
            color = tuple(int(v) for v in frame[y, x][:3])
            action = color_actions.get(color)
            if action is not None and action != current[d]:
                schedule.append((f, d, action))
                current[d] = action
    return schedule


def run_control_sequence(session: Session, control_frames: np.ndarray,
                         color_actions: dict, layer_anchors: list,
                         columns_per_control_frame: int = 1) -> Session:
    """Drive a session from a control sequence instead of key presses."""
    schedule = control_sequence_triggers(control_frames, color_actions,
                                         layer_anchors)
    layer_ids = [ld.id for ld in session.layer_defs]
    for f, d, action in schedule:
        column = f * columns_per_control_frame + session.commit_ahead
        session.trigger(layer_ids[d], action, at_column=column)
    total = len(control_frames) * columns_per_control_frame
    if session.playhead < total:
        session.advance(total - session.playhead)
    return session


# ---------------------------------------------------------------------------
# recording store (backs the HTTP endpoints)


class RecordingStore:
    def __init__(self, directory=None):
        from pathlib import Path
        self.directory = Path(directory) if directory else None
        self.memory: dict[str, PerformanceRecording] = {}

    def put(self, recording: PerformanceRecording) -> str:
        rec_id = uuid.uuid4().hex[:12]
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            (self.directory / f"{rec_id}.json").write_text(recording.to_json())
        self.memory[rec_id] = recording
        return rec_id

    def get(self, rec_id: str) -> PerformanceRecording:
        if rec_id in self.memory:
            return self.memory[rec_id]
        if self.directory is not None:
            p = self.directory / f"{rec_id}.json"
            if p.exists():
                return PerformanceRecording.from_json(p.read_text())
        raise KeyError(rec_id)
