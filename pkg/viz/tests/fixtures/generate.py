"""Regenerate the checked-in fixtures from the primary package.

Run from the repository root with ``layerkac`` installed:

    python viz/tests/fixtures/generate.py

The viz library itself never imports the primary package; it only reads
the CSV/JSON files the primary emits.  This script exists so the files
in this directory are real tool output rather than hand-typed mockups.
Fixtures are deterministic, so reruns leave the directory unchanged.
"""
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from layerkac import spinio
from layerkac.experiments import MagCell, scenario_magnetization
from layerkac.model import Lattice, ModelParams, SpinConfig

FIX = Path(__file__).resolve().parent

# beta=3, gamma=0.2 gives fine/coarse block lengths 4/8 and a label
# threshold safely below the mean-field magnetization.
PARAMS = ModelParams(beta=3.0, gamma=0.2)
N_COLS = 15          # coarse block columns; frame occupies 3 on each side
H = 13               # layers; frame occupies 3 top and bottom
L = N_COLS * 8

CFG_TEXT = f"""\
[model]
beta = {PARAMS.beta}
gamma = {PARAMS.gamma}

[lattice]
L = {L}
H = {H}
horizontal_bc = plus
vertical_bc = plus

[run]
sweeps = 1
seed = 0
"""


def block_grid_island() -> np.ndarray:
    """Coarse-block label grid with a closed zero ring, a two-layer
    down-spin core and an up-spin layer wedged inside it.

    The sandwiched row keeps the census nontrivial: it produces stripe
    runs and an interior, so every overlay the plots draw has something
    to latch onto.
    """
    g = np.ones((H, N_COLS), dtype=np.int8)
    g[4, 4:11] = 0
    g[8, 4:11] = 0
    for row in (5, 6, 7):
        g[row, 4] = 0
        g[row, 10] = 0
    g[5, 5:10] = -1
    g[7, 5:10] = -1
    # row 6 stays +1 between the down rows
    return g


def spins_from_blocks(grid: np.ndarray) -> np.ndarray:
    spins = np.repeat(grid, 8, axis=1).astype(np.int8)
    alt = np.resize(np.array([1, -1], dtype=np.int8), 8)
    for i, k in zip(*np.nonzero(grid == 0)):
        spins[i, k * 8:(k + 1) * 8] = alt
    return spins


def run_coarse(tag: str, cfg: SpinConfig, workdir: Path) -> None:
    spinio.write_spins(workdir / f"{tag}.bin", cfg, PARAMS)
    # relative paths keep the recorded input name stable across reruns
    subprocess.run(
        [sys.executable, "-m", "layerkac.cli", "coarse-grain",
         "--config", "fixture.cfg", "--input", f"{tag}.bin", "--out", tag],
        check=True, cwd=workdir)
    shutil.copy(workdir / tag / "fields.csv", FIX / f"{tag}_fields.csv")
    shutil.copy(workdir / tag / "census.json", FIX / f"{tag}_census.json")


def theta_fixtures() -> None:
    grid = block_grid_island()
    spins = spins_from_blocks(grid)
    with tempfile.TemporaryDirectory() as td:
        work = Path(td)
        (work / "fixture.cfg").write_text(CFG_TEXT)
        plus = Lattice(L, H, "plus", "plus")
        minus = Lattice(L, H, "minus", "minus")
        run_coarse("island", SpinConfig(plus, spins), work)
        run_coarse("flipped", SpinConfig(minus, -spins), work)
        run_coarse("allplus",
                   SpinConfig(plus, np.ones((H, L), dtype=np.int8)), work)


def sweep_fixture() -> None:
    cells = []
    for j, gamma in enumerate((0.15, 0.2, 0.25, 0.3)):
        for bc in ("plus", "minus"):
            cells.append(MagCell(beta=2.0, gamma=gamma, bc=bc, L=32, H=4,
                                 sweeps=40, burn_in=10, replicas=3,
                                 seed=100 + j))
    scenario_magnetization(cells, out_csv=FIX / "sweep_small.csv")


def handwritten() -> None:
    header = ("beta,gamma,A,bc,L,H,sweeps,burn_in,replicas,seed,"
              "status,mean,se,target,abs_dev")
    (FIX / "sweep_empty.csv").write_text(
        f"# schema=lk-magnetization-v1\n{header}\n")
    (FIX / "sweep_drift.csv").write_text(
        f"# schema=lk-magnetization-v2\n{header}\n"
        "2.0,0.2,2.0,plus,32,4,40,10,3,100,ok,0.9,0.01,0.95,0.05\n")


if __name__ == "__main__":
    theta_fixtures()
    sweep_fixture()
    handwritten()
    print("fixtures written to", FIX)
