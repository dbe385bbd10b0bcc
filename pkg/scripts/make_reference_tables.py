"""Regenerate the Burgers and Allen-Cahn reference tables shipped with the package.

    python scripts/make_reference_tables.py
"""

from pathlib import Path

import numpy as np

from fipinn.reference import allen_cahn_etdrk4, burgers_cole_hopf, write_table

DATA = Path(__file__).resolve().parents[1] / "src" / "fipinn" / "data"


def main():
    t = np.linspace(0.0, 1.0, 201)

    x = np.linspace(-1.0, 1.0, 512)
    U = np.stack([burgers_cole_hopf(x, ti) for ti in t])
    write_table(DATA / "burgers_reference.csv", x, t, U)

    x_ac, _, U_ac = allen_cahn_etdrk4(n_x=512, t_out=t, dt=1e-5)
    write_table(DATA / "allen_cahn_reference.csv", x_ac, t, U_ac)


if __name__ == "__main__":
    main()
