"""``heartnet`` command line: preprocess, train, evaluate, crossval.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import dsp
from .config import ConfigError, RunConfig, load_config
from .evaluation import ConfusionMatrix, EvalReport, confusion, evaluate, report_table
from .models import build, load_model
from .nn.checkpoint import CheckpointError
from .training import NumericError, fit, predict

log = logging.getLogger("heartnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
FEATURE_TRANSFORM = "log"


class DataError(Exception):
    pass


# -- preprocess ------------------------------------------------------------------

def cmd_preprocess(cfg: RunConfig) -> tuple[Path, Path]:
    """Manifest + WAVs -> PSD cache and segment index.

    Per-recording failures are logged by id; any failure aborts unless
    ``skip_bad`` is set. Degenerate (constant) segments are dropped.
    """
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.snapshot(out)
    try:
        rows = ds.read_manifest(cfg.manifest)
    except (OSError, ds.ManifestError) as exc:
        raise DataError(str(exc)) from exc
    welch = dsp.WelchConfig(cfg.welch_window, cfg.welch_overlap, cfg.welch_fft, cfg.target_rate)

    index = ds.SegmentIndex()
    spectra, failures, degenerate = [], [], 0
    for rid, label in rows:
        try:
            samples, rate = ds.read_wav(Path(cfg.audio_dir) / f"{rid}.wav", rid)
            rec = ds.AudioRecording(rid, samples, rate, label)
            rec = dsp.condition_recording(rec, cfg.filter_cutoff, cfg.filter_order, cfg.target_rate)
        except (ds.DatasetError, ValueError) as exc:
            log.error("%s: %s", rid, exc)
            failures.append(rid)
            continue
        for seg in ds.segment_recording(rec):
            psd = dsp.segment_spectrum(seg, welch)
            if psd is None:
                degenerate += 1
                continue
            spectra.append(psd)
            index.append(seg)
    if failures and not cfg.skip_bad:
        raise DataError(f"{len(failures)} recording(s) failed: {', '.join(failures[:10])}")
    if not spectra:
        raise DataError("no usable 5-second segments found")
    if degenerate:
        log.warning("dropped %d degenerate (constant) segments", degenerate)
    dsp.write_psd_cache(cfg.cache_path, dsp.make_input_tensor(spectra))
    index.write(cfg.index_path)
    log.info("wrote %d segments (F=%d) to %s", len(index), spectra[0].psd.size, cfg.cache_path)
    return cfg.cache_path, cfg.index_path


# -- train / evaluate ------------------------------------------------------------

def _load_features(cfg: RunConfig):
    try:
        X = dsp.read_psd_cache(cfg.cache_path)[:, :, 0, :]
        index = ds.SegmentIndex.read(cfg.index_path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read PSD cache/index: {exc}") from exc
    if X.shape[2] != len(index):
        raise DataError(f"cache holds {X.shape[2]} spectra but index lists {len(index)} segments")
    return X, index


def _split(cfg: RunConfig, index: ds.SegmentIndex, seed: int):
    try:
        plan = ds.make_split(index.as_segments(), seed, by_recording=cfg.split_by_recording,
                             mode=cfg.label_mode)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    pos = {sid: i for i, sid in enumerate(index.segment_ids)}
    return plan, {k: np.array([pos[s] for s in v], dtype=np.int64) for k, v in plan.sets().items()}


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_train(cfg: RunConfig, seed: int | None = None, out: Path | None = None) -> Path:
    """Train on the 70% split; keep the best-validation checkpoint."""
    seed = cfg.seed if seed is None else seed
    out = cfg.out_dir if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.snapshot(out)
    X, index = _load_features(cfg)
    y = index.targets(cfg.label_mode)
    plan, sets = _split(cfg, index, seed)
    plan.write(out / "split.csv")
    tr, va = sets["train"], sets["val"]

    weights = None
    if cfg.class_weighting:
        segs = index.as_segments()
        train_segs = [segs[i] for i in tr]
        try:
            weights = ds.class_weights(train_segs, cfg.label_mode)
        except ValueError as exc:
            raise DataError(str(exc)) from exc

    model = build(cfg.model, X.shape[1], cfg.classes, seed=seed, transform=FEATURE_TRANSFORM)
    result = fit(model, X[:, :, tr], y[tr], X[:, :, va], y[va], epochs=cfg.epochs,
                 lr=cfg.learning_rate, momentum=cfg.momentum, batch_size=cfg.batch_size,
                 weights=weights, seed=seed)
    _write_rows(out / "train_log.csv", ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"],
                [[h["epoch"], repr(float(h["train_loss"])), repr(float(h["train_acc"])),
                  repr(float(h["val_loss"])), repr(float(h["val_acc"]))] for h in result.history])
    model.load_state(result.best_state)
    ckpt = out / "checkpoint.bin"
    model.save(ckpt)
    log.info("best validation accuracy %.4f at epoch %d -> %s", result.best_val_acc, result.best_epoch, ckpt)
    return ckpt


def _emit(out: Path, tag: str, cm: ConfusionMatrix, averaging: str) -> EvalReport:
    report = evaluate(cm, averaging)
    (out / f"confusion_{tag}.csv").write_text(cm.to_csv())
    (out / f"metrics_{tag}.csv").write_text(report_table([report], ["test"]))
    return report


def cmd_evaluate(cfg: RunConfig, checkpoint=None, seed: int | None = None,
                 out: Path | None = None) -> dict[str, EvalReport]:
    """Score the held-out 15% test split; writes 12-class and binary views."""
    seed = cfg.seed if seed is None else seed
    out = cfg.out_dir if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = Path(checkpoint) if checkpoint else out / "checkpoint.bin"
    X, index = _load_features(cfg)
    expect = {"name": cfg.model, "num_classes": cfg.classes, "n_features": X.shape[1]}
    model = load_model(checkpoint, expect)
    _, sets = _split(cfg, index, seed)
    te = sets["test"]
    pred = predict(model, X[:, :, te]).argmax(axis=1)

    reports = {}
    to_binary = ds.binary_projection()
    if cfg.classes == 12:
        cm12 = confusion(index.targets("twelve")[te], pred, 12, ds.CLASS_CODES)
        reports["twelve"] = _emit(out, "twelve", cm12, cfg.averaging)
        cm2 = cm12.project(to_binary, ds.BINARY_CODES)
    else:
        cm2 = confusion(index.targets("binary")[te], pred, 2, ds.BINARY_CODES)
    reports["binary"] = _emit(out, "binary", cm2, cfg.averaging)
    return reports


def cmd_crossval(cfg: RunConfig) -> dict[str, Path]:
    """Train+evaluate on ``folds`` independent random splits (seeds seed..seed+folds-1)."""
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.snapshot(out)
    per_mode: dict[str, list[EvalReport]] = {}
    for fold in range(cfg.folds):
        seed = cfg.seed if cfg.fixed_split else cfg.seed + fold
        fold_dir = out / f"fold{fold + 1}"
        try:
            ckpt = cmd_train(cfg, seed=seed, out=fold_dir)
            reports = cmd_evaluate(cfg, ckpt, seed=seed, out=fold_dir)
        except Exception as exc:
            raise FoldError(fold + 1, exc) from exc
        for mode, rep in reports.items():
            per_mode.setdefault(mode, []).append(rep)
    paths = {}
    for mode, reps in per_mode.items():
        p = out / f"crossval_{mode}.csv"
        p.write_text(report_table(reps))
        paths[mode] = p
    return paths


class FoldError(Exception):
    def __init__(self, fold: int, cause: Exception):
        self.fold, self.cause = fold, cause
        super().__init__(f"fold {fold} failed: {cause}")


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heartnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("preprocess", "train", "evaluate", "crossval"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--model", choices=("mbdcn", "lscn", "cnn1d", "mlp"))
        p.add_argument("--classes", type=int, choices=(12, 2))
        p.add_argument("--no-class-weights", action="store_true")
        p.add_argument("--out")
        if name == "evaluate":
            p.add_argument("--checkpoint")
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, FoldError):
        return _exit_code(exc.cause)
    if isinstance(exc, (ConfigError, CheckpointError)):
        return EXIT_USAGE
    if isinstance(exc, (NumericError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, ds.DatasetError, OSError)):
        return EXIT_DATA
    raise exc


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, model=args.model, classes=args.classes,
                          out=args.out, class_weighting=False if args.no_class_weights else None)
        if args.command == "preprocess":
            cmd_preprocess(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.checkpoint)
        else:
            cmd_crossval(cfg)
    except Exception as exc:
        code = _exit_code(exc)
        print(f"heartnet {args.command}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
