"""Run the bundled demo, write its trace and check the bundled assertions."""

import argparse
import sys
from importlib import resources

from immerse.cli import main


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--trace", default="demo.trace")
    p.add_argument("--sample-stride", type=int, default=9)
    return p.parse_args()


if __name__ == "__main__":
    args = parse_args()
    data = resources.files("immerse") / "data"
    code = main(
        [
            "run",
            "--scene", str(data / "demo.scene"),
            "--scenario", str(data / "demo.scn"),
            "--trace", args.trace,
            "--sample-stride", str(args.sample_stride),
        ]
    )
    if code == 0:
        code = main(["verify", "--trace", args.trace, "--assertions", str(data / "demo.assert")])
    sys.exit(code)
