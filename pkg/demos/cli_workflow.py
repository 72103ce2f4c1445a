"""
Running experiments from the command line
=========================================

The same experiments run through the ``wienerlab`` command. Each run
writes its resolved manifest next to CSV, JSON and two-column .dat files;
``report`` summarizes a tree of runs. Here the commands are driven from
Python with ``run``, which takes the same arguments as the shell.
"""

import tempfile
from pathlib import Path

from wienerlab.cli import run

work = Path(tempfile.mkdtemp(prefix="wienerlab-"))

run(["grid-info", "--d", "2", "--M", "32", "--L", "2"])

###############################################################################
# A tail probe; the manifest does not exist yet, so it is written with every
# resolved value and can be rerun as is.
run(["probe", "tail", "--stat", "hs", "--s", "0.8", "--trials", "2000", "--lambda", "0:4:32",
     "--d", "1", "--M", "64", "--L", "2", "--manifest", str(work / "tail.cfg"), "--out", str(work / "tail")])
print((work / "tail.cfg").read_text())

###############################################################################
# A short NLS solve and a success-probability sweep.
run(["nls", "solve", "--d", "1", "--M", "64", "--L", "2", "--T", "0.01", "--seed", "7", "--out", str(work / "solve")])
run(["nls", "sweep", "--d", "1", "--M", "64", "--L", "2", "--T", "0.04,0.01", "--seeds", "30",
     "--amplitude", "4", "--s-decay", "0.5", "--out", str(work / "sweep")])

###############################################################################
# Exit codes: 2 for invalid input, 3 for a numerical fault.
print("exit code for trials=0:", run(["probe", "tail", "--stat", "hs", "--trials", "0"]))
run(["report", str(work)])
