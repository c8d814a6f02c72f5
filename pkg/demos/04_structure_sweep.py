"""
Depth versus width
==================

Trains one codec per topology with shared seeds and ranks them by
held-out resynthesis distortion, as the command-line ``sweep`` does.
"""

import tempfile
from pathlib import Path

from melcode import cli
from melcode.frontend import FrameMatrix, write_features
from melcode.synthetic import harmonic_log_spectra, toy_corpus

work = Path(tempfile.mkdtemp())
(work / "train").mkdir()
(work / "held").mkdir()

frames = harmonic_log_spectra(2000, 32, seed=0)
for k in range(10):
    write_features(FrameMatrix(frames[200 * k:200 * (k + 1)], f"part{k}"), work / "train" / f"part{k}.mlsf")
for m in toy_corpus(10, 25, 32, seed=100, prefix="held"):
    write_features(m, work / "held" / f"{m.source_id}.mlsf")

# one shallow-wide and two deeper-narrow stacks
spec = work / "sweep.cfg"
spec.write_text("topologies=32x96x8,32x16x12x8,32x24x16x12x8\nlr=2.0\n")

cli.main(["sweep", str(spec), "--train", str(work / "train"), "--heldout", str(work / "held"),
          "--out", str(work / "sweep")])
print("report written to", work / "sweep.txt")
