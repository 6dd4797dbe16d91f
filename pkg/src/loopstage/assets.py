"""Project asset loading, validation and on-disk caching.

A project lives in one directory with a JSON manifest at its root.  All
paths inside the manifest are relative to the manifest's directory.
Frames and masks are numbered PNGs (``%06d.png``), boxes are one CSV per
actor, dense backward flow is one binary file per frame.
"""

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image


class AssetError(Exception):
    """Raised when a project asset is missing or fails validation."""


@dataclass(frozen=True)
class OrientedBox:
    """Axis-aligned box plus rotation angle (radians) about its center."""

    cx: float
    cy: float
    w: float
    h: float
    angle: float = 0.0

    def corners(self, dilate: float = 0.0) -> np.ndarray:
        hw, hh = self.w / 2 + dilate, self.h / 2 + dilate
        local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
        c, s = np.cos(self.angle), np.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def rasterize(self, height: int, width: int, dilate: float = 0.0) -> np.ndarray:
        """Boolean mask of pixels whose centers fall inside the (dilated) box."""
        ys, xs = np.mgrid[0:height, 0:width]
        dx = xs - self.cx
        dy = ys - self.cy
        c, s = np.cos(self.angle), np.sin(self.angle)
        # rotate into box-local coordinates
        lx = c * dx + s * dy
        ly = -s * dx + c * dy
        return (np.abs(lx) <= self.w / 2 + dilate) & (np.abs(ly) <= self.h / 2 + dilate)


@dataclass
class FrameSequence:
    frames: np.ndarray  # (T, H, W, 3) uint8
    frame_rate: float = 30.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise AssetError(f"frames must be (T, H, W, 3), got {self.frames.shape}")
        if len(self.frames) < 2:
            raise AssetError("a frame sequence needs at least 2 frames")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass
class ActionDef:
    id: str
    name: str = ""
    key: str = ""
    examples: list[int] = field(default_factory=list)


@dataclass
class ActorSequence:
    id: str
    source: FrameSequence
    kind: str = "full-frame"  # or "tracked"
    boxes: Optional[list[OrientedBox]] = None
    masks: Optional[np.ndarray] = None  # (T, H, W) bool
    flow: Optional[np.ndarray] = None  # (T, H, W, 2) float32, backward; frame 0 unused
    actions: list[ActionDef] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        n = len(self.source)
        if self.kind not in ("full-frame", "tracked"):
            raise AssetError(f"actor {self.id!r}: unknown kind {self.kind!r}")
        if self.kind == "tracked":
            if self.boxes is None or len(self.boxes) != n:
                got = 0 if self.boxes is None else len(self.boxes)
                raise AssetError(
                    f"actor {self.id!r}: tracked actor needs one box per frame "
                    f"(got {got}, expected {n})"
                )
        if self.masks is not None:
            if self.masks.shape != (n, self.source.height, self.source.width):
                raise AssetError(
                    f"actor {self.id!r}: mask shape {self.masks.shape} does not "
                    f"match frames"
                )
        if self.flow is not None:
            expect = (n, self.source.height, self.source.width, 2)
            if self.flow.shape != expect:
                raise AssetError(
                    f"actor {self.id!r}: flow shape {self.flow.shape} != {expect}"
                )
        seen = set()
        for a in self.actions:
            if a.id in seen:
                raise AssetError(f"actor {self.id!r}: duplicate action id {a.id!r}")
            seen.add(a.id)
            for ex in a.examples:
                if not 0 <= ex < n:
                    raise AssetError(
                        f"actor {self.id!r}: action {a.id!r} example frame {ex} "
                        f"out of range"
                    )

    @property
    def n_frames(self) -> int:
        return len(self.source)

    def action_ids(self) -> list[str]:
        return [a.id for a in self.actions]


@dataclass
class LayerDef:
    id: str
    actor: str
    initial_action: Optional[str] = None
    live: bool = True


@dataclass
class CompatTag:
    actor_i: str
    actor_j: str
    frame_i: int
    frame_j: int
    verdict: str  # "compatible" | "incompatible"
    mode_i: str = "specialize"  # "specialize" | "refine"
    mode_j: str = "specialize"


DEFAULT_PARAMETERS = {
    "sigma_l": None,  # None -> median kNN distance heuristic
    "knn": 30,
    "synth_alpha": 0.5,
    "beta": 0.5,
    "sigma_a": 0.5,
    "sigma_t": None,  # None -> median nonzero jump-graph distance
    "compression": 1,
    "ramp_len": 8,
    "jump_candidates": 64,
    "seg_alpha": 0.35,
    "seg_sigma": None,  # None -> half box diagonal
    "bg_unary": 0.55,
    "pairwise_weight": 1.0,
}


@dataclass
class Project:
    manifest_path: Path
    name: str
    frame_rate: float
    actors: dict[str, ActorSequence]
    layers: list[LayerDef]
    compat_tags: list[CompatTag]
    parameters: dict

    @property
    def root(self) -> Path:
        return self.manifest_path.parent

    @property
    def cache_dir(self) -> Path:
        return self.root / ".loopstage"


# ---------------------------------------------------------------------------
# file formats


def load_png_dir(path: Path, mode: str = "RGB") -> np.ndarray:
    files = sorted(path.glob("*.png"))
    if not files:
        raise AssetError(f"no PNG files in {path}")
    imgs = [np.asarray(Image.open(f).convert(mode)) for f in files]
    shapes = {im.shape for im in imgs}
    if len(shapes) > 1:
        raise AssetError(f"frames in {path} have mixed dimensions: {sorted(shapes)}")
    return np.stack(imgs)


def save_png_dir(path: Path, frames: np.ndarray):
    path.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        Image.fromarray(frame).save(path / f"{i:06d}.png")


def load_boxes_csv(path: Path) -> list[OrientedBox]:
    boxes = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            boxes[int(row["frame"])] = OrientedBox(
                float(row["cx"]), float(row["cy"]),
                float(row["w"]), float(row["h"]), float(row["angle"]),
            )
    if sorted(boxes) != list(range(len(boxes))):
        raise AssetError(f"{path}: box frame indices are not contiguous from 0")
    return [boxes[i] for i in range(len(boxes))]


def save_boxes_csv(path: Path, boxes: list[OrientedBox]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame", "cx", "cy", "w", "h", "angle"])
        for i, b in enumerate(boxes):
            w.writerow([i, b.cx, b.cy, b.w, b.h, b.angle])


def load_flow_file(path: Path) -> np.ndarray:
    """One frame of backward flow: u32 width, u32 height, then f32 (dx, dy) pairs."""
    raw = path.read_bytes()
    if len(raw) < 8:
        raise AssetError(f"{path}: truncated flow header")
    width, height = struct.unpack("<II", raw[:8])
    expect = 8 + width * height * 2 * 4
    if len(raw) != expect:
        raise AssetError(f"{path}: expected {expect} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=8)
    return data.reshape(height, width, 2)


def save_flow_file(path: Path, flow: np.ndarray):
    h, w, _ = flow.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", w, h))
        f.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def load_flow_dir(path: Path) -> np.ndarray:
    files = sorted(path.glob("*.flow"))
    if not files:
        raise AssetError(f"no .flow files in {path}")
    return np.stack([load_flow_file(f) for f in files])


# ---------------------------------------------------------------------------
# background


def estimate_background(seq: FrameSequence) -> np.ndarray:
    """Static background as the per-pixel, per-channel temporal median.

    Even frame counts average the two middle values (then round back to uint8).
    """
    med = np.median(seq.frames.astype(np.float64), axis=0)
    return np.clip(np.round(med), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# manifest


def _require(cond: bool, msg: str):
    if not cond:
        raise AssetError(msg)


def load_project(manifest_path) -> Project:
    manifest_path = Path(manifest_path)
    _require(manifest_path.exists(), f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise AssetError(f"{manifest_path}: invalid JSON ({e})") from e
    root = manifest_path.parent

    actors: dict[str, ActorSequence] = {}
    for spec in doc.get("actors", []):
        aid = spec["id"]
        frames_dir = root / spec["frames"]
        _require(frames_dir.exists(), f"actor {aid!r}: missing frames dir {frames_dir}")
        frames = load_png_dir(frames_dir, "RGB")
        seq = FrameSequence(frames, frame_rate=doc.get("frame_rate", 30.0))

        kind = spec.get("kind", "full-frame")
        boxes = masks = flow = None
        if "boxes" in spec:
            p = root / spec["boxes"]
            _require(p.exists(), f"actor {aid!r}: missing boxes file {p}")
            boxes = load_boxes_csv(p)
        if "masks" in spec:
            p = root / spec["masks"]
            _require(p.exists(), f"actor {aid!r}: missing masks dir {p}")
            masks = load_png_dir(p, "L") >= 128
        if "flow" in spec:
            p = root / spec["flow"]
            _require(p.exists(), f"actor {aid!r}: missing flow dir {p}")
            flow = load_flow_dir(p)

        actions = [
            ActionDef(
                id=a["id"],
                name=a.get("name", a["id"]),
                key=a.get("key", ""),
                examples=list(a.get("examples", [])),
            )
            for a in spec.get("actions", [])
        ]
        actors[aid] = ActorSequence(
            id=aid, source=seq, kind=kind, boxes=boxes, masks=masks,
            flow=flow, actions=actions,
        )

    layers = []
    for ld in doc.get("layers", []):
        layer = LayerDef(
            id=ld["id"], actor=ld["actor"],
            initial_action=ld.get("initial_action"),
            live=ld.get("live", True),
        )
        _require(
            layer.actor in actors,
            f"layer {layer.id!r}: unknown actor {layer.actor!r}",
        )
        if layer.initial_action is not None:
            _require(
                layer.initial_action in actors[layer.actor].action_ids(),
                f"layer {layer.id!r}: action {layer.initial_action!r} is not "
                f"defined on actor {layer.actor!r}",
            )
        layers.append(layer)

    tags = []
    for t in doc.get("compatibility", []):
        tag = CompatTag(
            actor_i=t["actor_i"], actor_j=t["actor_j"],
            frame_i=int(t["frame_i"]), frame_j=int(t["frame_j"]),
            verdict=t["verdict"],
            mode_i=t.get("mode_i", "specialize"),
            mode_j=t.get("mode_j", "specialize"),
        )
        _require(tag.verdict in ("compatible", "incompatible"),
                 f"compatibility tag: bad verdict {tag.verdict!r}")
        for side, frame in ((tag.actor_i, tag.frame_i), (tag.actor_j, tag.frame_j)):
            _require(side in actors, f"compatibility tag: unknown actor {side!r}")
            _require(0 <= frame < actors[side].n_frames,
                     f"compatibility tag: frame {frame} out of range for {side!r}")
        tags.append(tag)

    params = dict(DEFAULT_PARAMETERS)
    params.update(doc.get("parameters", {}))

    return Project(
        manifest_path=manifest_path,
        name=doc.get("name", manifest_path.stem),
        frame_rate=float(doc.get("frame_rate", 30.0)),
        actors=actors,
        layers=layers,
        compat_tags=tags,
        parameters=params,
    )


def project_to_manifest(project: Project) -> dict:
    """Manifest document for a loaded project (round-trips load_project)."""
    doc = {
        "name": project.name,
        "frame_rate": project.frame_rate,
        "parameters": {
            k: v for k, v in project.parameters.items()
            if DEFAULT_PARAMETERS.get(k, object()) != v
        },
        "actors": [],
        "layers": [
            {"id": l.id, "actor": l.actor, "initial_action": l.initial_action,
             "live": l.live}
            for l in project.layers
        ],
        "compatibility": [
            {"actor_i": t.actor_i, "actor_j": t.actor_j,
             "frame_i": t.frame_i, "frame_j": t.frame_j,
             "verdict": t.verdict, "mode_i": t.mode_i, "mode_j": t.mode_j}
            for t in project.compat_tags
        ],
    }
    for actor in project.actors.values():
        spec = {
            "id": actor.id,
            "frames": f"{actor.id}/frames",
            "kind": actor.kind,
            "actions": [
                {"id": a.id, "name": a.name, "key": a.key, "examples": a.examples}
                for a in actor.actions
            ],
        }
        if actor.boxes is not None:
            spec["boxes"] = f"{actor.id}/boxes.csv"
        if actor.masks is not None:
            spec["masks"] = f"{actor.id}/masks"
        if actor.flow is not None:
            spec["flow"] = f"{actor.id}/flow"
        doc["actors"].append(spec)
    return doc


def save_project(project: Project, out_dir) -> Path:
    """Write a project (manifest + all assets) under out_dir; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for actor in project.actors.values():
        save_png_dir(out_dir / actor.id / "frames", actor.source.frames)
        if actor.boxes is not None:
            save_boxes_csv(out_dir / actor.id / "boxes.csv", actor.boxes)
        if actor.masks is not None:
            save_png_dir(
                out_dir / actor.id / "masks",
                (actor.masks.astype(np.uint8) * 255),
            )
        if actor.flow is not None:
            flow_dir = out_dir / actor.id / "flow"
            flow_dir.mkdir(parents=True, exist_ok=True)
            for i, fl in enumerate(actor.flow):
                save_flow_file(flow_dir / f"{i:06d}.flow", fl)
    manifest = out_dir / "project.json"
    manifest.write_text(json.dumps(project_to_manifest(project), indent=2))
    return manifest


# ---------------------------------------------------------------------------
# derived-artifact cache


def content_hash(*parts) -> str:
    """Stable hex digest over arrays, scalars and strings; keys the cache."""
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(str(p.shape).encode())
            h.update(str(p.dtype).encode())
            h.update(np.ascontiguousarray(p).tobytes())
        else:
            h.update(repr(p).encode())
        h.update(b"|")
    return h.hexdigest()


class ArtifactCache:
    """Disk cache for derived artifacts, keyed by input content hashes."""

    def __init__(self, cache_dir):
        self.dir = Path(cache_dir)

    def path(self, name: str, key: str, suffix: str = ".npz") -> Path:
        return self.dir / f"{name}-{key[:16]}{suffix}"

    def load_arrays(self, name: str, key: str) -> Optional[dict]:
        p = self.path(name, key)
        if not p.exists():
            return None
        with np.load(p, allow_pickle=False) as z:
            return {k: z[k] for k in z.files}

    def save_arrays(self, name: str, key: str, **arrays):
        self.dir.mkdir(parents=True, exist_ok=True)
        tmp = self.path(name, key, ".tmp")
        with open(tmp, "wb") as f:
            np.savez(f, **arrays)
        tmp.replace(self.path(name, key))
