"""Files and the command line.

Walks the command-line pipeline on a small flat scene:
simulate -> sketch (integer accumulator) -> estimate -> read the depth map.
Each step is the same call as ``splinesketch <subcommand> ...`` from a shell.
"""
import tempfile
from pathlib import Path

import numpy as np

from splinesketch.cli import main as cli
from splinesketch.io import read_map, read_sketches


def run(*argv):
    print("$ splinesketch " + " ".join(argv))
    code = cli(list(argv))
    print(f"(exit {code})\n")
    return code


def main():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        run("simulate", "--scene", "flat", "--H", "4", "--W", "4", "--depth", "1500",
            "--photons", "337", "--sbr", "2", "--seed", "1", "--out", str(d / "cube.spc"))
        run("sketch", "--cube", str(d / "cube.spc"), "--p", "1", "--M", "20", "--fixed-point",
            "--out", str(d / "sk.skf"))
        sf = read_sketches(d / "sk.skf")
        print(f"sketch file: {sf.H}x{sf.W} records, {(d / 'sk.skf').stat().st_size} bytes\n")
        run("estimate", "--sketches", str(d / "sk.skf"), "--method", "mp",
            "--depth-out", str(d / "depth.spm"))
        depth = read_map(d / "depth.spm")
        print(f"depth map mean {np.nanmean(depth):.1f} bins (truth 1500)")
        # a contract violation gives a parseable error line and a non-zero exit
        run("estimate", "--sketches", str(d / "sk.skf"), "--method", "coarse-argmax",
            "--depth-out", str(d / "x.spm"))


if __name__ == "__main__":
    main()
