"""Batch command-line frontend.

Exit codes: 0 success, 2 input/validation error, 3 domain error (e.g. k
larger than the database).
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from .core import AttributeSet, LandmarkMask, MemoryRecord, StructureEmbedding, normalize
from .curation import CurationConfig, build_database
from .errors import KTooLargeError, StructMemError
from .metrics import (
    aligned_iou,
    eval_retrieval,
    format_retrieval_table,
    infonce_loss,
    positive_ranks,
    similarity_matrix,
)
from .slle import SlleConfig, slle_retrieve
from .store import DatabaseHandle, MemoryDatabase


def _fail(message: str, code: int = 2):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_records(input_path: Path, landmarks_dir: Path) -> list[MemoryRecord]:
    records = []
    with open(input_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                _fail(f"{input_path}:{lineno}: invalid JSON: {exc}")
            rec_id = entry.get("id")
            if not rec_id:
                _fail(f"{input_path}:{lineno}: missing record id")
            landmark_path = landmarks_dir / entry["landmark"]
            if not landmark_path.exists():
                _fail(f"record {rec_id!r}: landmark file {landmark_path} not found")
            try:
                attrs = entry.get("attributes")
                records.append(
                    MemoryRecord(
                        id=rec_id,
                        embedding=normalize(entry["embedding"]),
                        landmark=LandmarkMask.load(landmark_path),
                        category=entry["category"],
                        attributes=AttributeSet.from_dict(attrs) if attrs else None,
                        source=entry.get("source"),
                    )
                )
            except (StructMemError, KeyError, ValueError) as exc:
                _fail(f"record {rec_id!r}: {exc}")
    if not records:
        _fail(f"{input_path}: no records")
    return records


def _load_queries(path: Path) -> list[tuple[StructureEmbedding, LandmarkMask]]:
    base = path.parent
    queries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
                embedding = normalize(entry["embedding"])
                landmark = LandmarkMask.load(base / entry["landmark"])
            except (StructMemError, json.JSONDecodeError, KeyError, OSError) as exc:
                _fail(f"{path}:{lineno}: {exc}")
            queries.append((embedding, landmark))
    if not queries:
        _fail(f"{path}: no queries")
    return queries


@click.group()
def main():
    """Structure-memory retrieval engine."""


@main.command("build-db")
@click.option("--input", "input_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--landmarks", "landmarks_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--target-size", type=int, default=10_000, show_default=True)
@click.option("--eps", type=float, default=0.1, show_default=True, help="DBSCAN cosine-distance radius")
@click.option("--min-pts", type=int, default=4, show_default=True)
@click.option("--radius", type=float, default=0.0, show_default=True, help="downsampling cosine-distance radius")
@click.option("--cap", type=int, default=10_000, show_default=True, help="per-category cap")
@click.option("--seed", type=int, default=0, show_default=True)
def build_db(input_path, landmarks_dir, out_dir, target_size, eps, min_pts, radius, cap, seed):
    """Curate a raw record pool into a retrieval database directory."""
    records = _load_records(input_path, landmarks_dir)
    try:
        cfg = CurationConfig(
            per_category_cap=cap,
            dbscan_eps=eps,
            dbscan_min_pts=min_pts,
            downsample_radius=radius,
            target_size=target_size,
            seed=seed,
        )
        db, report = build_database(records, cfg)
    except (StructMemError, ValueError) as exc:
        _fail(str(exc))
    db.save(out_dir)
    report_path = out_dir / "curation_report.json"
    report_path.write_text(json.dumps(report, indent=2))
    click.echo(f"built database of {db.count} records at {out_dir}")


@main.command("query")
@click.option("--db", "db_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--embedding", "embedding_path", type=click.Path(exists=True, path_type=Path), required=True, help="JSON file holding one embedding array")
@click.option("--k", type=int, default=4, show_default=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--reg", "reg_epsilon", type=float, default=1e-3, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--save-landmark", "landmark_out", type=click.Path(path_type=Path), default=None)
def query_cmd(db_dir, embedding_path, k, alpha, reg_epsilon, out_path, landmark_out):
    """Run SLLE retrieval for one embedding and write the result as JSON."""
    try:
        db = MemoryDatabase.load(db_dir)
        embedding = normalize(json.loads(embedding_path.read_text()))
        cfg = SlleConfig(k=k, alpha=alpha, reg_epsilon=reg_epsilon)
    except (StructMemError, json.JSONDecodeError, ValueError) as exc:
        _fail(str(exc))
    try:
        result = slle_retrieve(db, embedding, cfg)
    except KTooLargeError as exc:
        _fail(str(exc), code=3)
    except StructMemError as exc:
        _fail(str(exc))
    out_path.write_text(
        json.dumps(
            {
                "fused_embedding": result.fused_embedding.vector.tolist(),
                "weights": result.weights.tolist(),
                "neighbors": [
                    {"id": n.id, "similarity": n.similarity} for n in result.neighbors
                ],
                "landmark_id": result.landmark_id,
                "objective": result.objective,
            },
            indent=2,
        )
    )
    if landmark_out is not None:
        result.fused_landmark.save_png(landmark_out)
    click.echo(f"wrote {out_path}")


def _parse_k_list(text: str) -> list[int]:
    try:
        ks = sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        _fail(f"bad k list {text!r}")
    if not ks or any(k < 1 for k in ks):
        _fail(f"bad k list {text!r}")
    return ks


@main.command("eval-retrieval")
@click.option("--db", "db_dirs", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True, multiple=True, help="database directory; repeat for a multi-scale table")
@click.option("--queries", "queries_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--k", "k_text", default="1,5", show_default=True)
@click.option("--iou-threshold", type=float, default=0.85, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def eval_retrieval_cmd(db_dirs, queries_path, k_text, iou_threshold, out_path):
    """Top-k retrieval accuracy against ground-truth landmarks."""
    k_list = _parse_k_list(k_text)
    queries = _load_queries(queries_path)
    reports = []
    for db_dir in db_dirs:
        try:
            db = MemoryDatabase.load(db_dir)
            reports.append(eval_retrieval(db, queries, k_list, iou_threshold))
        except StructMemError as exc:
            _fail(f"{db_dir}: {exc}")
    out_path.write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    click.echo(format_retrieval_table(reports))


@main.command("eval-infonce")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--tau", type=float, default=0.07, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def eval_infonce(pairs_path, tau, out_path):
    """Contrastive loss over a file of (in-the-wild, standard) embedding pairs."""
    if tau <= 0:
        _fail(f"tau must be positive, got {tau}")
    queries, keys = [], []
    with open(pairs_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
                queries.append(normalize(entry["e_itw"]))
                keys.append(normalize(entry["e_std"]))
            except (StructMemError, json.JSONDecodeError, KeyError) as exc:
                _fail(f"{pairs_path}:{lineno}: {exc}")
    try:
        sim = similarity_matrix(queries, keys)
        loss, _ = infonce_loss(sim, tau)
    except StructMemError as exc:
        _fail(str(exc))
    ranks = positive_ranks(sim)
    out_path.write_text(
        json.dumps(
            {
                "n": sim.n,
                "tau": tau,
                "loss": loss,
                "positive_ranks": ranks.tolist(),
                "top1_fraction": float((ranks == 1).mean()),
            },
            indent=2,
        )
    )
    click.echo(f"loss = {loss:.7f} over {sim.n} pairs (tau={tau})")


@main.command("sweep-k")
@click.option("--db", "db_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=True)
@click.option("--queries", "queries_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--k", "k_text", default="1,2,4,8", show_default=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--reg", "reg_epsilon", type=float, default=1e-3, show_default=True)
@click.option("--iou-threshold", type=float, default=0.85, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def sweep_k(db_dir, queries_path, k_text, alpha, reg_epsilon, iou_threshold, out_path):
    """Neighbor-count sensitivity sweep; one CSV row per K."""
    k_list = _parse_k_list(k_text)
    queries = _load_queries(queries_path)
    try:
        db = MemoryDatabase.load(db_dir)
    except StructMemError as exc:
        _fail(str(exc))
    if max(k_list) > db.count:
        _fail(f"k={max(k_list)} exceeds database size {db.count}", code=3)
    by_id = {rec.id: rec for rec in db.records}
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "mean_objective", "mean_top1_iou", "top1_acc", "top5_acc"])
        for k in k_list:
            cfg = SlleConfig(k=k, alpha=alpha, reg_epsilon=reg_epsilon)
            objectives, top1_ious, top1_hits, top5_hits = [], [], 0, 0
            for embedding, truth in queries:
                result = slle_retrieve(db, embedding, cfg)
                objectives.append(result.objective)
                ious = [
                    aligned_iou(by_id[n.id].landmark, truth) for n in result.neighbors
                ]
                top1_ious.append(ious[0])
                top1_hits += ious[0] > iou_threshold
                top5_hits += any(v > iou_threshold for v in ious[:5])
            m = len(queries)
            writer.writerow(
                [
                    k,
                    f"{np.mean(objectives):.9g}",
                    f"{np.mean(top1_ious):.9g}",
                    f"{top1_hits / m:.9g}",
                    f"{top5_hits / m:.9g}",
                ]
            )
    click.echo(f"wrote {out_path}")


@main.command("serve")
@click.option("--db", "db_dir", type=click.Path(path_type=Path), required=True)
@click.option("--bind", default="127.0.0.1:8080", show_default=True)
@click.option("--default-k", type=int, default=4, show_default=True)
@click.option("--default-alpha", type=float, default=0.5, show_default=True)
@click.option("--max-k", type=int, default=None)
def serve(db_dir, bind, default_k, default_alpha, max_k):
    """Run the HTTP retrieval service until signaled."""
    from .service import create_app

    if not db_dir.is_dir():
        _fail(f"no database directory at {db_dir}")
    try:
        db = MemoryDatabase.load(db_dir)
    except StructMemError as exc:
        _fail(str(exc))
    handle = DatabaseHandle(db)
    app = create_app(handle, default_k=default_k, default_alpha=default_alpha, max_k=max_k)
    host, _, port = bind.rpartition(":")
    try:
        import uvicorn

        uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    except (OSError, ValueError) as exc:
        _fail(f"cannot bind {bind}: {exc}")


if __name__ == "__main__":
    main()
