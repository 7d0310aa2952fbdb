"""Staged, resumable pipeline: lung prep through QA.

Every stage persists its artifacts (NIfTI masks, JSON sidecars) into the
run directory and re-loads its inputs from there, so a run can execute any
contiguous range of stages and produce bit-identical outputs to a single
full invocation.  Wall-clock timings go to a separate timings.json so the
deterministic artifacts stay byte-stable across runs.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import bronchi as bronchi_mod
from . import gmm as gmm_mod
from . import lungprep, qa, tree, volio
from .errors import BroncoError, ParameterError, PipelineError
from .grid import BinaryMask
from .skeleton import GraphEdge, GraphNode, SkeletonGraph, build_graph, skeletonize

STAGES = [
    "lung",
    "trachea",
    "preprocess",
    "gmm",
    "bundle",
    "skeleton",
    "graph",
    "directions",
    "grow",
    "hierarchy",
    "bronchi",
    "volumes",
    "qa",
]


@dataclass
class PipelineConfig:
    input_path: str
    out_dir: str
    lung_mask_path: str | None = None
    stages: list[str] = field(default_factory=lambda: list(STAGES))
    gmm_k: int = 3
    knee_method: str = "chord"
    trachea_weights: tuple[float, float] = (2.0, 1.0)
    trachea_dilation: tuple[int, int, int] = (20, 20, 20)
    noise_erosion: tuple[int, int] = (3, 3)
    stop_factor: float = bronchi_mod.DEFAULT_STOP_FACTOR
    leak_ratio: float = bronchi_mod.DEFAULT_LEAK_RATIO
    max_leak_erosions: int = bronchi_mod.MAX_LEAK_EROSIONS
    regression_model_path: str | None = None
    interval_level: float = 0.95
    seed: int = 0
    flip_axial: bool = False
    threads: int = 1

    @classmethod
    def from_json_dict(cls, d: dict) -> "PipelineConfig":
        kwargs = {}
        mapping = {
            "input": "input_path",
            "lung_mask": "lung_mask_path",
            "out": "out_dir",
            "regression": "regression_model_path",
        }
        for key, value in d.items():
            attr = mapping.get(key, key)
            if attr in ("trachea_weights", "trachea_dilation", "noise_erosion"):
                value = tuple(value)
            kwargs[attr] = value
        return cls(**kwargs)

    def validate(self) -> None:
        if self.knee_method != "chord":
            raise ParameterError(
                f"unknown knee method {self.knee_method!r}; 'chord' "
                "(max perpendicular distance to the chord) is supported"
            )
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ParameterError(f"unknown stages {unknown}; valid: {STAGES}")
        idx = sorted(STAGES.index(s) for s in self.stages)
        if idx != list(range(idx[0], idx[-1] + 1)):
            raise ParameterError("stages must form a contiguous range of the canonical order")
        self.stages = [STAGES[i] for i in idx]


ARTIFACTS = {
    "lung": ["lung.nii.gz"],
    "trachea": ["mediastinum.nii.gz", "trachea.nii.gz"],
    "preprocess": ["working.nii.gz"],
    "gmm": ["gmm_model.json", "classes.nii.gz"],
    "bundle": ["bundle.nii.gz", "knee.json"],
    "skeleton": ["skeleton.nii.gz"],
    "graph": ["graph.json"],
    "directions": ["directions.json"],
    "grow": ["branch_labels.nii.gz", "growing.json"],
    "hierarchy": ["hierarchy.json"],
    "bronchi": ["bronchi.nii.gz", "bronchi_nodes.jsonl"],
    "volumes": ["volumes.json"],
    "qa": ["qa.json"],
}


@dataclass
class RunReport:
    stages_run: list[str]
    artifacts: dict[str, list[str]]
    warnings: list[str]
    qa_verdict: dict | None
    bronchi_log: list[dict] | None
    exit_code: int

    def to_json_dict(self) -> dict:
        return {
            "stages_run": self.stages_run,
            "artifacts": self.artifacts,
            "warnings": self.warnings,
            "qa": self.qa_verdict,
            "bronchi_nodes": self.bronchi_log,
            "exit_code": self.exit_code,
        }


class _Run:
    """Shared state across stages: loads artifacts lazily, caches in memory."""

    def __init__(self, config: PipelineConfig):
        self.cfg = config
        self.cache: dict[str, object] = {}

    def path(self, name: str) -> str:
        return os.path.join(self.cfg.out_dir, name)

    def need(self, key: str, loader, stage: str, artifact: str):
        if key in self.cache:
            return self.cache[key]
        p = self.path(artifact)
        if not os.path.exists(p):
            raise PipelineError(
                f"stage '{stage}' needs {artifact} from a previous stage; "
                f"run the earlier stages first"
            )
        value = loader(p)
        self.cache[key] = value
        return value

    # -- typed accessors -------------------------------------------------
    def ct(self):
        if "ct" not in self.cache:
            self.cache["ct"] = volio.load_volume(self.cfg.input_path)
        return self.cache["ct"]

    def mask(self, key: str, stage: str, artifact: str) -> BinaryMask:
        return self.need(key, volio.load_mask, stage, artifact)

    def labels(self, stage: str):
        return self.need("classes", volio.load_labels, stage, "classes.nii.gz")

    def graph(self, stage: str) -> SkeletonGraph:
        def load(p):
            return _graph_from_json(json.load(open(p)))

        return self.need("graph", load, stage, "graph.json")


def _graph_from_json(d: dict) -> SkeletonGraph:
    nodes = {}
    for n in d["nodes"]:
        nodes[n["id"]] = GraphNode(
            n["id"],
            np.asarray(n["voxels"], dtype=int).reshape(-1, 3),
            np.asarray(n["center_index"], dtype=float),
            np.asarray(n["center_mm"], dtype=float),
        )
    edges = []
    for e in d["edges"]:
        path = np.asarray(e["path"], dtype=int).reshape(-1, 3)
        edges.append(GraphEdge(
            e["branch_id"], e["node_a"], e["node_b"], path, e["length_mm"],
            tuple(e["end_a"]), tuple(e["end_b"]),
        ))
    return SkeletonGraph(nodes, edges, tuple(d["spacing"]), tuple(d["origin"]), tuple(d["dims"]))


def _write_json(path: str, payload: dict | list) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _stage_lung(run: _Run):
    ct = run.ct()
    if run.cfg.lung_mask_path:
        lung = volio.load_mask(run.cfg.lung_mask_path)
        if not lung.same_geometry(ct):
            raise ParameterError("supplied lung mask geometry does not match the CT")
    else:
        lung = lungprep.fallback_lung_segmentation(ct)
    run.cache["lung"] = lung
    volio.save_mask(run.path("lung.nii.gz"), lung)


def _stage_trachea(run: _Run):
    ct = run.ct()
    lung = run.mask("lung", "trachea", "lung.nii.gz")
    mediastinum = lungprep.extract_mediastinum(lung)
    trachea = lungprep.segment_trachea(ct, mediastinum, run.cfg.trachea_weights)
    run.cache["trachea"] = trachea
    volio.save_mask(run.path("mediastinum.nii.gz"), mediastinum)
    volio.save_mask(run.path("trachea.nii.gz"), trachea)


def _stage_preprocess(run: _Run):
    lung = run.mask("lung", "preprocess", "lung.nii.gz")
    trachea = run.mask("trachea", "preprocess", "trachea.nii.gz")
    working = lungprep.preprocess_masks(
        lung, trachea, run.cfg.trachea_dilation, run.cfg.noise_erosion
    )
    run.cache["working"] = working
    volio.save_mask(run.path("working.nii.gz"), working)


def _stage_gmm(run: _Run):
    ct = run.ct()
    working = run.mask("working", "gmm", "working.nii.gz")
    model = gmm_mod.fit_gmm(ct.data[working.data], k=run.cfg.gmm_k, seed=run.cfg.seed)
    classes = gmm_mod.assign_classes(model, ct, working)
    run.cache["classes"] = classes
    with open(run.path("gmm_model.json"), "w") as fh:
        fh.write(model.to_json(indent=2) + "\n")
    volio.save_labels(run.path("classes.nii.gz"), classes)


def _stage_bundle(run: _Run):
    classes = run.labels("bundle")
    bundle, knee = gmm_mod.extract_bundle(classes)
    run.cache["bundle"] = bundle
    volio.save_mask(run.path("bundle.nii.gz"), bundle)
    _write_json(run.path("knee.json"), {
        "sorted_counts": [int(c) for c in knee.sorted_counts],
        "knee_index": knee.knee_index,
        "kept_labels": knee.kept_labels,
    })


def _stage_skeleton(run: _Run):
    bundle = run.mask("bundle", "skeleton", "bundle.nii.gz")
    skel = skeletonize(bundle)
    run.cache["skeleton"] = skel
    volio.save_mask(run.path("skeleton.nii.gz"), skel.mask)


def _stage_graph(run: _Run):
    skel = run.cache.get("skeleton")
    if skel is None:
        from .skeleton import Skeleton

        skel = Skeleton(run.mask("skeleton_mask", "graph", "skeleton.nii.gz"))
    graph = build_graph(skel)
    run.cache["graph"] = graph
    with open(run.path("graph.json"), "w") as fh:
        fh.write(graph.to_json(indent=2) + "\n")


def _stage_directions(run: _Run):
    graph = run.graph("directions")
    dirs = tree.branch_directions(graph)
    run.cache["directions"] = dirs
    _write_json(run.path("directions.json"), [
        {
            "branch_id": d.branch_id,
            "unit_vector": [float(c) for c in d.unit_vector],
            "principal": d.principal,
            "growth_dirs": [list(o) for o in d.growth_dirs],
        }
        for d in (dirs[b] for b in sorted(dirs))
    ])


def _load_directions(run: _Run, stage: str):
    dirs = run.cache.get("directions")
    if dirs is None:
        p = run.path("directions.json")
        if not os.path.exists(p):
            raise PipelineError(f"stage '{stage}' needs directions.json from the directions stage")
        raw = json.load(open(p))
        dirs = {
            d["branch_id"]: tree.BranchDirection(
                d["branch_id"], np.asarray(d["unit_vector"]), d["principal"],
                [tuple(o) for o in d["growth_dirs"]],
            )
            for d in raw
        }
        run.cache["directions"] = dirs
    return dirs


def _stage_grow(run: _Run):
    graph = run.graph("grow")
    bundle = run.mask("bundle", "grow", "bundle.nii.gz")
    dirs = _load_directions(run, "grow")
    grow = tree.grow_labels(graph, dirs, bundle)
    run.cache["grow"] = grow
    volio.save_labels(run.path("branch_labels.nii.gz"), grow.labels)
    _write_json(run.path("growing.json"), {
        "unreached_label": grow.unreached_label,
        "iterations": grow.iterations,
    })


def _stage_hierarchy(run: _Run):
    graph = run.graph("hierarchy")
    grow = run.cache.get("grow")
    if grow is None:
        labels = run.need("branch_labels", volio.load_labels, "hierarchy", "branch_labels.nii.gz")
        meta = json.load(open(run.path("growing.json")))
        grow = tree.GrowResult(labels, meta["unreached_label"], meta["iterations"])
    trachea = run.mask("trachea", "hierarchy", "trachea.nii.gz")
    bundle_tree = tree.build_hierarchy(graph, grow, trachea, run.cfg.flip_axial)
    dirs = _load_directions(run, "hierarchy")
    run.cache["bundle_tree"] = bundle_tree
    with open(run.path("hierarchy.json"), "w") as fh:
        fh.write(tree.hierarchy_json(bundle_tree, graph, dirs, indent=2) + "\n")


def _stage_bronchi(run: _Run):
    ct = run.ct()
    classes = run.labels("bronchi")
    working = run.mask("working", "bronchi", "working.nii.gz")
    trachea = run.mask("trachea", "bronchi", "trachea.nii.gz")
    result = bronchi_mod.model_bronchi(
        ct, classes, working, trachea,
        stop_factor=run.cfg.stop_factor,
        max_erosions=run.cfg.max_leak_erosions,
        leak_ratio=run.cfg.leak_ratio,
        flip_axial=run.cfg.flip_axial,
    )
    run.cache["bronchi"] = result
    volio.save_mask(run.path("bronchi.nii.gz"), result.mask)
    with open(run.path("bronchi_nodes.jsonl"), "w") as fh:
        fh.write(result.node_log_jsonl())


def _stage_volumes(run: _Run):
    lung = run.mask("lung", "volumes", "lung.nii.gz")
    bundle = run.mask("bundle", "volumes", "bundle.nii.gz")
    payload = {
        "lung_ml": qa.mask_volume(lung),
        "bundle_ml": qa.mask_volume(bundle),
    }
    bronchi_path = run.path("bronchi.nii.gz")
    if os.path.exists(bronchi_path):
        payload["bronchi_ml"] = qa.mask_volume(volio.load_mask(bronchi_path))
    run.cache["volumes"] = payload
    _write_json(run.path("volumes.json"), payload)


def _stage_qa(run: _Run):
    volumes = run.cache.get("volumes")
    if volumes is None:
        p = run.path("volumes.json")
        if not os.path.exists(p):
            raise PipelineError("stage 'qa' needs volumes.json from the volumes stage")
        volumes = json.load(open(p))
    if run.cfg.regression_model_path is None:
        payload = {"verdict": "skipped", "reason": "no regression model supplied"}
    else:
        model = qa.RegressionModel.from_json(open(run.cfg.regression_model_path).read())
        verdict = qa.qa_verdict(model, volumes["lung_ml"], volumes["bundle_ml"],
                                run.cfg.interval_level)
        payload = verdict.to_json_dict()
    run.cache["qa"] = payload
    _write_json(run.path("qa.json"), payload)


_STAGE_FUNCS = {
    "lung": _stage_lung,
    "trachea": _stage_trachea,
    "preprocess": _stage_preprocess,
    "gmm": _stage_gmm,
    "bundle": _stage_bundle,
    "skeleton": _stage_skeleton,
    "graph": _stage_graph,
    "directions": _stage_directions,
    "grow": _stage_grow,
    "hierarchy": _stage_hierarchy,
    "bronchi": _stage_bronchi,
    "volumes": _stage_volumes,
    "qa": _stage_qa,
}


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Execute the configured stage range; see the module docstring."""
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    run = _Run(config)
    timings = {}
    warnings: list[str] = []
    stages_run = []
    for stage in config.stages:
        t0 = time.perf_counter()
        try:
            _STAGE_FUNCS[stage](run)
        except BroncoError as exc:
            raise PipelineError(f"stage '{stage}' failed: {exc}") from exc
        timings[stage] = time.perf_counter() - t0
        stages_run.append(stage)

    qa_payload = run.cache.get("qa")
    exit_code = 0
    if qa_payload and qa_payload.get("verdict") in (
        "suspected_oversegmentation",
        "suspected_undersegmentation",
    ):
        warnings.append(f"QA: {qa_payload['verdict']} "
                        f"(measured {qa_payload['measured_ml']:.1f} ml, "
                        f"predicted {qa_payload['predicted_ml']:.1f} ml)")
        exit_code = 2

    bronchi_result = run.cache.get("bronchi")
    bronchi_log = None
    if bronchi_result is not None:
        bronchi_log = [json.loads(e.to_json()) for e in bronchi_result.node_log]

    report = RunReport(
        stages_run=stages_run,
        artifacts={s: ARTIFACTS[s] for s in stages_run},
        warnings=warnings,
        qa_verdict=qa_payload,
        bronchi_log=bronchi_log,
        exit_code=exit_code,
    )
    _write_json(os.path.join(config.out_dir, "report.json"), report.to_json_dict())
    _write_json(os.path.join(config.out_dir, "timings.json"),
                {k: round(v, 6) for k, v in timings.items()})
    return report


def export_outputs(run_dir: str, binary: bool = False, labeled: bool = False,
                   graph_format: str | None = None) -> list[str]:
    """Write the user-facing exports from a completed run directory."""
    written = []
    if binary:
        bundle = volio.load_mask(os.path.join(run_dir, "bundle.nii.gz"))
        data = bundle.data.copy()
        bronchi_path = os.path.join(run_dir, "bronchi.nii.gz")
        if os.path.exists(bronchi_path):
            data |= volio.load_mask(bronchi_path).data
        out = os.path.join(run_dir, "bronchovascular_binary.nii.gz")
        volio.save_mask(out, BinaryMask(data, bundle.spacing, bundle.origin))
        written.append(out)
    if labeled:
        labels = volio.load_labels(os.path.join(run_dir, "branch_labels.nii.gz"))
        out = os.path.join(run_dir, "bronchovascular_labeled.nii.gz")
        volio.save_labels(out, labels)
        written.append(out)
    if graph_format:
        if graph_format not in ("json", "graphml"):
            raise ParameterError(f"unknown graph format {graph_format!r} (json or graphml)")
        graph = _graph_from_json(json.load(open(os.path.join(run_dir, "graph.json"))))
        if graph_format == "graphml":
            out = os.path.join(run_dir, "graph.graphml")
            with open(out, "w") as fh:
                fh.write(graph.to_graphml() + "\n")
        else:
            out = os.path.join(run_dir, "graph.export.json")
            with open(out, "w") as fh:
                fh.write(graph.to_json(indent=2) + "\n")
        written.append(out)
    return written
