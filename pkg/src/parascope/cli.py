"""Command-line interface tying the modules together.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import __version__
from .classify import HeuristicParasiteClassifier
from .codecs import load_image
from .config import AppConfig
from .datasets import class_counts, load_classification_dataset, load_voc_dir
from .errors import ParascopeError
from .imaging import resize
from .metrics import (
    annotations_to_gts,
    classification_report,
    coco_ap_suite,
    read_prediction_dump,
    write_prediction_dump,
)
from .pipeline import canonical_json
from .service import DeviceServer, make_backends, make_screener
from .store import BlobStore
from .sync import SyncClient, sync_once
from .synthetic import SyntheticSlideSpec, write_synthetic_dataset


def _fail(message: str) -> "click.exceptions.Exit":
    click.echo(f"error: {message}", err=True)
    return SystemExit(1)


def _config_from(config_path, **overrides) -> AppConfig:
    return AppConfig.load(config_path, overrides={
        key.replace("_", ".", 1): value for key, value in overrides.items()
    })


@click.group()
@click.version_option(version=__version__, prog_name="parascope")
def main():
    """Blood-smear screening: capture, classify, quantify, evaluate, sync."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="Slide image (PPM or PNG).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--detector", type=click.Choice(["oracle", "heuristic", "external"]),
              default=None)
@click.option("--classifier", type=click.Choice(["oracle", "heuristic", "external"]),
              default=None)
@click.option("--fixtures", type=click.Path(exists=True), default=None,
              help="Fixture dir for oracle backends (<stem>.xml, <stem>.labels.json).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--malaria-threshold", type=float, default=None)
@click.option("--score-floor", type=float, default=None)
@click.option("--nms-iou", type=float, default=None)
@click.option("--save", is_flag=True, help="Also save a record into --store.")
@click.option("--store", "store_path", type=click.Path(), default=None)
def screen(input_path, config_path, detector, classifier, fixtures, out_dir,
           malaria_threshold, score_floor, nms_iou, save, store_path):
    """Run one slide through the screening pipeline."""
    try:
        config = _config_from(
            config_path,
            detector_backend=detector,
            classifier_backend=classifier,
            fixtures_path=fixtures,
            pipeline_malaria_threshold=malaria_threshold,
            detector_score_floor=score_floor,
            detector_nms_iou=nms_iou,
            store_path=store_path,
        )
        slide = load_image(input_path)
        key = Path(input_path).stem
        det, cls = make_backends(config, key)
        screener = make_screener(config, det, cls)
        result = screener.screen(slide, key=key)

        out = Path(out_dir)
        (out / "crops").mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(result.to_json() + "\n", encoding="utf-8")
        (out / "overlay.png").write_bytes(result.attachments[result.overlay_ref])
        for cell in result.cells:
            if cell.crop_ref:
                (out / "crops" / f"{cell.crop_ref}.png").write_bytes(
                    result.attachments[cell.crop_ref]
                )
        if save:
            store = BlobStore(config["store.path"])
            record = store.save_record(slide, None, result)
            click.echo(f"saved record {record.record_id}")
        click.echo(
            f"infected={result.infected_count} uninfected={result.uninfected_count} "
            f"parasitemia={result.parasitemia_pct:.1f}% "
            f"wbc={result.wbc_count} platelets={result.platelet_count}"
        )
    except ParascopeError as exc:
        raise _fail(str(exc))


@main.command("eval-det")
@click.option("--preds", "preds_path", type=click.Path(exists=True), default=None,
              help="Prediction dump (JSON lines); mutually exclusive with --detector.")
@click.option("--detector", type=click.Choice(["oracle", "heuristic", "external"]),
              default=None, help="Run this backend over the dataset images instead.")
@click.option("--gt", "gt_dir", required=True, type=click.Path(exists=True),
              help="Directory of VOC XML annotations (images alongside).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--nms-iou", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_det(preds_path, detector, gt_dir, config_path, nms_iou, out_path):
    """Detection metrics (AP family) against a VOC-annotated dataset."""
    from .detect import postprocess

    if (preds_path is None) == (detector is None):
        raise click.UsageError("provide exactly one of --preds or --detector")
    try:
        annotations = load_voc_dir(gt_dir)
        gts = annotations_to_gts(annotations)
        if preds_path:
            preds = read_prediction_dump(preds_path)
        else:
            config = _config_from(config_path, detector_backend=detector,
                                  fixtures_path=gt_dir,
                                  detector_nms_iou=nms_iou)
            preds = {}
            for stem, annotated in annotations.items():
                image_path = _find_image(Path(gt_dir), stem)
                slide = load_image(image_path)
                det, _ = make_backends(config, stem)
                raw = det.detect(resize(slide, 320, 320), key=stem)
                # Evaluation consumes unthresholded detections (COCO style).
                detections = postprocess(raw, 0.0, config["detector.nms_iou"],
                                         slide.width, slide.height)
                preds[stem] = [(int(d.cell_class), d.score, d.box) for d in detections]
        metrics = coco_ap_suite(preds, gts)
        report = metrics.to_report(area_frame="original")
        _emit_report(report, out_path)
    except ParascopeError as exc:
        raise _fail(str(exc))


@main.command("eval-cls")
@click.option("--classifier", type=click.Choice(["oracle", "heuristic", "external"]),
              default="heuristic")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True),
              help="Class tree with Parasitized/ and Uninfected/ subdirectories.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cls(classifier, data_dir, config_path, threshold, out_path):
    """Classification accuracy/confusion over a labeled crop tree."""
    try:
        crops = load_classification_dataset(data_dir)
        if classifier == "heuristic":
            backend = HeuristicParasiteClassifier()
        else:
            config = _config_from(config_path, classifier_backend=classifier)
            _, backend = make_backends(config, None)
        p_values, labels = [], []
        for item in crops:
            img = resize(load_image(item.image_path), 224, 224)
            p_values.append(backend.classify(img).p_infected)
            labels.append(item.infected)
        metrics = classification_report(p_values, labels, decision_threshold=threshold)
        report = metrics.to_report()
        report["counts"] = class_counts(crops)
        _emit_report(report, out_path)
    except ParascopeError as exc:
        raise _fail(str(exc))


@main.command("gen-slides")
@click.option("--seed", type=int, required=True)
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--rbc", type=int, default=25, show_default=True)
@click.option("--wbc", type=int, default=2, show_default=True)
@click.option("--platelets", type=int, default=4, show_default=True)
@click.option("--parasitized-fraction", type=float, default=0.2, show_default=True)
@click.option("--width", type=int, default=320, show_default=True)
@click.option("--height", type=int, default=320, show_default=True)
@click.option("--contamination", type=int, default=4, show_default=True)
def gen_slides(seed, count, out_dir, rbc, wbc, platelets, parasitized_fraction,
               width, height, contamination):
    """Generate synthetic slides with exact ground truth (PPM + XML + labels)."""
    try:
        specs = [
            SyntheticSlideSpec(
                seed=seed + i, n_rbc=rbc, n_wbc=wbc, n_platelet=platelets,
                parasitized_fraction=parasitized_fraction,
                width=width, height=height, contamination=contamination,
            )
            for i in range(count)
        ]
        stems = write_synthetic_dataset(out_dir, specs)
        click.echo(f"wrote {len(stems)} slides under {out_dir}")
    except ParascopeError as exc:
        raise _fail(str(exc))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=None)
@click.option("--store", "store_path", type=click.Path(), default=None)
@click.option("--camera-kind", type=str, default=None)
@click.option("--camera-path", type=click.Path(), default=None)
@click.option("--fixtures", type=click.Path(), default=None)
@click.option("--assets", type=click.Path(), default=None,
              help="Static console bundle served at / (e.g. frontend/dist).")
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
def serve(config_path, port, store_path, camera_kind, camera_path, fixtures,
          assets, host):
    """Start the device HTTP service (blocks)."""
    try:
        config = _config_from(
            config_path, server_port=port, store_path=store_path,
            camera_kind=camera_kind, camera_path=camera_path,
            fixtures_path=fixtures, server_assets=assets,
        )
        server = DeviceServer(config, host=host)
        click.echo(f"listening on {server.endpoint}")
        server.serve_forever()
    except ParascopeError as exc:
        raise _fail(str(exc))


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--endpoint", required=True, type=str)
@click.option("--token", type=str, default=None,
              help="Bearer token; defaults to MAISCOPE_SYNC_TOKEN.")
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--ignore-backoff", is_flag=True)
def sync(store_path, endpoint, token, batch_size, ignore_backoff):
    """Upload pending records to the cloud endpoint."""
    try:
        store = BlobStore(store_path)
        client = SyncClient(endpoint, token=token)
        report = sync_once(store, client, batch_size=batch_size,
                           respect_backoff=not ignore_backoff)
        click.echo(canonical_json(report.to_json_dict()))
    except ParascopeError as exc:
        raise _fail(str(exc))


@main.group()
def store():
    """Inspect the local record store."""


@store.command("ls")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--state", type=click.Choice(["Pending", "Uploading", "Synced", "Failed"]),
              default=None)
def store_ls(store_path, state):
    """List records: id, created_at, state, parasitemia."""
    try:
        records = BlobStore(store_path).list_records(state=state)
        for r in records:
            pct = r.result.get("parasitemia_pct", 0.0)
            click.echo(f"{r.record_id}  {r.created_at}  {r.sync_state.state:8s}  "
                       f"parasitemia={pct:.1f}%")
        click.echo(f"{len(records)} record(s)")
    except ParascopeError as exc:
        raise _fail(str(exc))


@store.command("show")
@click.argument("record_id")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
def store_show(record_id, store_path):
    """Print one record as JSON."""
    try:
        record = BlobStore(store_path).get_record(record_id)
        if record is None:
            raise _fail(f"no record {record_id}")
        click.echo(json.dumps(record.to_json_dict(), indent=2, sort_keys=True))
    except ParascopeError as exc:
        raise _fail(str(exc))


def _find_image(root: Path, stem: str) -> Path:
    from .errors import IoFailure

    for suffix in (".ppm", ".png", ".jpg", ".jpeg"):
        candidate = root / f"{stem}{suffix}"
        if candidate.is_file():
            return candidate
    raise IoFailure(f"no image for annotation stem {stem} under {root}")


def _emit_report(report: dict, out_path) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    click.echo(text)


# Re-exported for tests that need a dump round-trip through the CLI surface.
__all__ = ["main", "write_prediction_dump"]


if __name__ == "__main__":
    main()
