"""Build ``manifest.csv`` + ``audio/`` from an extracted PhysioNet/CinC 2016 training set.

Expects ``<src>/training-a`` ... ``training-f``, each with a ``REFERENCE.csv`` of
``record,label`` rows (1 = abnormal, -1 = normal). Audio files are symlinked.

    python scripts/prepare_physionet.py /data/physionet2016 /data/heartnet_corpus
"""

import argparse
import csv
from pathlib import Path

from heartnet.dataset import GROUPS, ClassLabel, write_manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=Path)
    ap.add_argument("dst", type=Path)
    args = ap.parse_args()

    audio = args.dst / "audio"
    audio.mkdir(parents=True, exist_ok=True)
    rows = []
    for g in GROUPS:
        sub = args.src / f"training-{g.lower()}"
        with open(sub / "REFERENCE.csv", newline="") as fh:
            for rec, lab in csv.reader(fh):
                cond = "Abnormal" if int(lab) == 1 else "Normal"
                link = audio / f"{rec}.wav"
                if not link.exists():
                    link.symlink_to((sub / f"{rec}.wav").resolve())
                rows.append((rec, ClassLabel(g, cond)))
    write_manifest(args.dst / "manifest.csv", rows)
    print(f"{len(rows)} recordings -> {args.dst / 'manifest.csv'}")


if __name__ == "__main__":
    main()
