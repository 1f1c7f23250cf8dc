"""Full-corpus run: segmentation totals and a 5-fold binary LSCN cross-validation.

    python scripts/reproduce_corpus.py /data/heartnet_corpus runs/corpus [--epochs 40]

Prints per-class segment counts next to the reference counts, then the
cross-validation table next to the reference binary LSCN mean row. Gaps are
reported, never asserted.
"""

import argparse
import csv
import logging
from pathlib import Path

import numpy as np

from heartnet import cli
from heartnet.config import RunConfig
from heartnet.dataset import CLASS_CODES, CORPUS_RECORDINGS, CORPUS_SEGMENTS, SegmentIndex, read_manifest

# Reference binary LSCN fold means (fractions): AC, PR, SE, F1, SP, K.
REFERENCE_MEAN = dict(AC=0.9393, PR=0.9426, SE=0.9477, F1=0.9452, SP=0.9296, K=0.8785)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("corpus", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--model", default="lscn")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = RunConfig(manifest=str(args.corpus / "manifest.csv"), audio_dir=str(args.corpus / "audio"),
                    out=str(args.out), model=args.model, classes=2, epochs=args.epochs, seed=args.seed,
                    folds=5, class_weighting=True)
    rec_counts = {c: 0 for c in CLASS_CODES}
    for _, lab in read_manifest(cfg.manifest):
        rec_counts[lab.code] += 1
    cli.cmd_preprocess(cfg)
    seg = np.bincount(SegmentIndex.read(cfg.index_path).targets("twelve"), minlength=12)

    print(f"{'class':6}{'recs':>8}{'ref':>8}{'segs':>8}{'ref':>8}")
    for c, n in zip(CLASS_CODES, seg):
        print(f"{c:6}{rec_counts[c]:8d}{CORPUS_RECORDINGS[c]:8d}{n:8d}{CORPUS_SEGMENTS[c]:8d}")
    got = dict(zip(CLASS_CODES, seg.tolist()))
    print("segment totals match:", got == CORPUS_SEGMENTS)
    swapped = {g + a: got[g + b] for g in "ABCDEF" for a, b in (("A", "N"), ("N", "A"))}
    if got != CORPUS_SEGMENTS and swapped == CORPUS_SEGMENTS:
        print("  (they match with Normal/Abnormal exchanged in every group)")

    report = cli.cmd_crossval(cfg)["binary"]
    with open(report, newline="") as fh:
        rows = list(csv.reader(fh))
    for r in rows:
        print("  ".join(f"{v:>8}" for v in r))
    mean = dict(zip(rows[0][1:], rows[-2][1:]))
    print("gap to reference mean (percentage points):")
    for k, ref in REFERENCE_MEAN.items():
        try:
            print(f"  {k}: {float(mean[k]) - 100 * ref:+.2f}")
        except ValueError:
            print(f"  {k}: undefined")


if __name__ == "__main__":
    main()
