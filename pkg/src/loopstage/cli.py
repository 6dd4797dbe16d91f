"""Command line entry points: prepare, perform, render, bynumbers."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .assets import load_png_dir, load_project
from .pipeline import prepare_project
from .render import RenderJob, render_sequence
from .service import (PerformanceRecording, Session, live_objective,
                      resynthesize_recording, run_control_sequence)


def cmd_prepare(args):
    project = load_project(args.manifest)
    prepared = prepare_project(project)
    for aid, pa in prepared.actors.items():
        print(f"actor {aid}: {pa.actor.n_frames} frames, "
              f"{pa.action_model.n_actions} actions, "
              f"jump graph n={pa.graph.n_candidates}")
    print(f"prepared {len(prepared.actors)} actor(s), "
          f"{len(project.layers)} layer(s); cache at {project.cache_dir}")


def cmd_perform(args):
    import uvicorn

    from .server import create_app

    project = load_project(args.manifest)
    prepared = prepare_project(project)
    app = create_app(prepared, recording_dir=project.cache_dir / "recordings")
    uvicorn.run(app, host=args.host, port=args.port)


def cmd_render(args):
    recording = PerformanceRecording.from_json(
        Path(args.recording).read_text())
    project = load_project(args.manifest)
    prepared = prepare_project(project)
    rows, requests, objective = resynthesize_recording(prepared, recording)
    actors = [prepared.actors[ld.actor].actor for ld in project.layers]
    bg = next(iter(prepared.actors.values())).background
    job = RenderJob(rows=rows, layer_actors=actors, background=bg,
                    quality="final")
    paths = render_sequence(job, args.out)
    print(f"rendered {len(paths)} frames to {args.out} "
          f"(objective {objective:.4f})")


def cmd_bynumbers(args):
    project = load_project(args.manifest)
    prepared = prepare_project(project)
    control_dir = Path(args.control_dir)
    config = json.loads((control_dir / "control.json").read_text())
    colors = {}
    for hex_color, action in config["colors"].items():
        h = hex_color.lstrip("#")
        colors[tuple(int(h[i:i + 2], 16) for i in (0, 2, 4))] = action
    anchors = [tuple(a) for a in config["anchors"]]
    control_frames = load_png_dir(control_dir)

    session = Session(prepared)
    run_control_sequence(session, control_frames, colors, anchors,
                         columns_per_control_frame=config.get(
                             "columns_per_control_frame", 1))
    columns = session.playhead
    obj = live_objective(session, columns)
    actors = [prepared.actors[ld.actor].actor for ld in project.layers]
    bg = next(iter(prepared.actors.values())).background
    job = RenderJob(rows=session.rows[:, :columns], layer_actors=actors,
                    background=bg, quality=args.quality)
    paths = render_sequence(job, args.out)
    print(f"rendered {len(paths)} frames to {args.out} "
          f"(objective {obj:.4f})")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="loopstage",
        description="Triggerable, loopable video actors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build all derived artifacts")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("perform", help="host a live performance session")
    p.add_argument("manifest")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_perform)

    p = sub.add_parser("render", help="re-synthesize a recording offline")
    p.add_argument("recording")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="render")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bynumbers",
                       help="drive triggers from a painted control sequence")
    p.add_argument("manifest")
    p.add_argument("control_dir")
    p.add_argument("--out", default="render")
    p.add_argument("--quality", default="final", choices=["live", "final"])
    p.set_defaults(func=cmd_bynumbers)

    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
