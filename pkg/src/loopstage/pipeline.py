"""Project preparation: derived artifacts and engine assembly.

Turns a loaded project into everything synthesis needs: backgrounds,
distance matrices, jump graphs, propagated action fields, segmentation
masks for tracked actors that lack them, and compatibility models built
from the manifest's tags.  Every expensive artifact is cached on disk
keyed by a content hash of its inputs, so a performance can start
instantly on a prepared project.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import segment as seg
from .actions import ActionModel
from .assets import (ActorSequence, ArtifactCache, Project, content_hash,
                     estimate_background)
from .compat import PairCompatibility
from .engine import (CompatLookup, LayerSynth, SynthesisEngine,
                     SynthesisParams)
from .metric import (DistanceMatrix, JumpGraph, build_distance_matrix,
                     build_jump_graph, load_metric_cache, save_metric_cache)


@dataclass
class PreparedActor:
    actor: ActorSequence
    background: np.ndarray
    matrix: DistanceMatrix
    graph: JumpGraph
    action_model: ActionModel

    @property
    def field(self) -> np.ndarray:
        return self.action_model.field


@dataclass
class PreparedProject:
    project: Project
    actors: dict[str, PreparedActor]
    compat: CompatLookup

    def synthesis_params(self) -> SynthesisParams:
        p = self.project.parameters
        return SynthesisParams(
            synth_alpha=p.get("synth_alpha", 0.5),
            beta=p.get("beta", 0.5),
            sigma_a=p.get("sigma_a", 0.5),
            sigma_t=p.get("sigma_t"),
            compression=int(p.get("compression", 1)),
            ramp_len=int(p.get("ramp_len", 8)),
        )

    def make_layers(self, params: Optional[SynthesisParams] = None
                    ) -> list[LayerSynth]:
        params = params or self.synthesis_params()
        layers = []
        for ld in self.project.layers:
            pa = self.actors[ld.actor]
            layers.append(LayerSynth(
                actor_id=ld.actor, field=pa.field, matrix=pa.matrix,
                graph=pa.graph, sigma_t=params.sigma_t,
                literal_transition=params.literal_transition,
            ))
        return layers

    def make_engine(self, params: Optional[SynthesisParams] = None
                    ) -> SynthesisEngine:
        params = params or self.synthesis_params()
        return SynthesisEngine(self.make_layers(params), params, self.compat)


def actor_hash(actor: ActorSequence) -> str:
    parts = [actor.id, actor.kind, actor.source.frames]
    if actor.boxes is not None:
        parts.append(tuple((b.cx, b.cy, b.w, b.h, b.angle)
                           for b in actor.boxes))
    if actor.masks is not None:
        parts.append(actor.masks)
    return content_hash(*parts)


def prepare_actor(actor: ActorSequence, params: dict,
                  cache: Optional[ArtifactCache] = None) -> PreparedActor:
    ahash = actor_hash(actor)

    bg = None
    if cache is not None:
        hit = cache.load_arrays("background", ahash)
        if hit is not None:
            bg = hit["background"]
    if bg is None:
        bg = estimate_background(actor.source)
        if cache is not None:
            cache.save_arrays("background", ahash, background=bg)

    # tracked actors without masks get segmented before the metric runs
    if actor.kind == "tracked" and actor.masks is None:
        mask_hit = cache.load_arrays("masks", ahash) if cache else None
        if mask_hit is not None:
            actor.masks = mask_hit["masks"].astype(bool)
        else:
            actor.masks = seg.segment_sequence(
                actor.source.frames, actor.boxes, actor.flow, bg,
                params=seg.SegmentationParams(
                    seg_alpha=params.get("seg_alpha", 0.35),
                    sigma_s=params.get("seg_sigma"),
                    bg_unary=params.get("bg_unary", 0.55),
                    pairwise_weight=params.get("pairwise_weight", 1.0),
                ),
            )
            if cache is not None:
                cache.save_arrays("masks", ahash, masks=actor.masks)
        ahash = actor_hash(actor)

    n_cand = int(params.get("jump_candidates", 64))
    metric = None
    if cache is not None:
        metric = load_metric_cache(
            cache.path("metric", ahash, ".bin"), actor.id, ahash)
        if metric is not None and metric[1].n_candidates != min(
                n_cand, metric[0].values.shape[0] - 1):
            metric = None
    if metric is None:
        matrix = build_distance_matrix(actor, bg)
        graph = build_jump_graph(matrix, n_cand)
        if cache is not None:
            save_metric_cache(cache.path("metric", ahash, ".bin"),
                              ahash, matrix, graph)
    else:
        matrix, graph = metric

    model = ActionModel(
        action_ids=[a.id for a in actor.actions] or ["default"],
        matrix=matrix,
        examples={f: a.id for a in actor.actions for f in a.examples}
        or {0: "default"},
        sigma=params.get("sigma_l"),
        knn=int(params.get("knn", 30)),
    )
    fhash = content_hash(ahash, sorted(model.examples.items()),
                         model.action_ids, model.sigma, model.knn)
    hit = cache.load_arrays("actionfield", fhash) if cache else None
    if hit is not None:
        model.field = hit["field"]
    else:
        model.propagate()
        if cache is not None:
            cache.save_arrays("actionfield", fhash, field=model.field)

    return PreparedActor(actor=actor, background=bg, matrix=matrix,
                         graph=graph, action_model=model)


def build_compat(project: Project,
                 prepared: dict[str, PreparedActor]) -> CompatLookup:
    lookup = CompatLookup()
    for tag in project.compat_tags:
        key = (tag.actor_i, tag.actor_j)
        found = lookup.get(*key)
        if found is None:
            pair = PairCompatibility.from_action_models(
                prepared[tag.actor_i].action_model,
                prepared[tag.actor_j].action_model,
                tag.actor_i, tag.actor_j,
            )
            lookup.add(pair)
            flipped = False
        else:
            pair, flipped = found
        t_i, t_j = ((tag.frame_j, tag.frame_i) if flipped
                    else (tag.frame_i, tag.frame_j))
        m_i, m_j = ((tag.mode_j, tag.mode_i) if flipped
                    else (tag.mode_i, tag.mode_j))
        pair.tag(t_i, t_j, tag.verdict, m_i, m_j)
    return lookup


def prepare_project(project: Project, use_cache: bool = True
                    ) -> PreparedProject:
    cache = ArtifactCache(project.cache_dir) if use_cache else None
    prepared = {
        aid: prepare_actor(actor, project.parameters, cache)
        for aid, actor in project.actors.items()
    }
    compat = build_compat(project, prepared)
    return PreparedProject(project=project, actors=prepared, compat=compat)
