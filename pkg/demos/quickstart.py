"""Quickstart: synthesize a small fleet, train one model, predict SOH.

Run from anywhere; writes everything into ./quickstart_out. Takes about a
minute on a laptop (single BRR model, small selection forest).
"""

from pathlib import Path

from sohkit import cli

OUT = Path("quickstart_out")

CONFIG = """\
data_dir=data
manifest=data/manifest.csv
selection_forest_size=100
"""


def run(argv):
    code = cli.main(argv)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}: {argv}")


def main():
    OUT.mkdir(exist_ok=True)
    import os
    os.chdir(OUT)

    # 1. An 8-cell synthetic fleet: 5 train / 1 calibration / 2 test,
    #    CC-CV charging with realistic sensor noise.
    run(["--seed", "7", "--out", "data", "synth", "--cells", "8",
         "--cycles", "60", "--train", "5", "--calibration", "1",
         "--test", "2", "--noise", "1.0"])
    Path("run.cfg").write_text(CONFIG, encoding="utf-8")

    # 2. Train a Bayesian ridge model (features are selected, augmented
    #    and standardized inside this one step).
    run(["--config", "run.cfg", "--model", "brr", "--seed", "1",
         "--out", "model", "train"])

    # 3. Evaluate on the held-out test cells: accuracy, coverage,
    #    sharpness and accuracy-zone metrics per cell.
    run(["--config", "run.cfg", "--model", "brr", "--seed", "1",
         "--out", "eval", "evaluate", "--bundle", "model/model_brr.json"])

    print("\nArtifacts:")
    for p in sorted(Path(".").rglob("*.json")):
        print(f"  {p}")


if __name__ == "__main__":
    main()
