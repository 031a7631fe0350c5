"""Export bundled spectral data from the colour-science package to canonical CSV.

Every table is written on the 400-700 nm, 10 nm grid with a leading
`wavelength_nm` column. Requires `colour-science` (tested with 0.4.6).

    python3 scripts/convert_colour_datasets.py crates/core/data
"""

import csv
import os
import sys

import numpy as np

import colour
from colour.quality.datasets import SDS_TCS, SDS_VS

WAVELENGTHS = np.arange(400, 701, 10, dtype=float)


def sample(sd):
    """Sample a spectral distribution at the grid, failing on extrapolation."""
    lo, hi = sd.wavelengths.min(), sd.wavelengths.max()
    if lo > WAVELENGTHS[0] or hi < WAVELENGTHS[-1]:
        raise ValueError(f"{sd.name}: range {lo}-{hi} does not cover the grid")
    return np.interp(WAVELENGTHS, sd.wavelengths, sd.values)


def covers(sd):
    return sd.wavelengths.min() <= WAVELENGTHS[0] and sd.wavelengths.max() >= WAVELENGTHS[-1]


def write(path, names, columns):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["wavelength_nm", *names])
        for i, wl in enumerate(WAVELENGTHS):
            out.writerow([f"{wl:g}", *(repr(float(c[i])) for c in columns)])


def main(root):
    os.makedirs(os.path.join(root, "cameras"), exist_ok=True)

    cmfs = colour.MSDS_CMFS["CIE 1931 2 Degree Standard Observer"]
    write(
        os.path.join(root, "cie1931_2deg.csv"),
        ["x_bar", "y_bar", "z_bar"],
        [np.interp(WAVELENGTHS, cmfs.wavelengths, cmfs.values[:, j]) for j in range(3)],
    )

    nikon = colour.MSDS_CAMERA_SENSITIVITIES["Nikon 5100 (NPL)"]
    write(
        os.path.join(root, "cameras", "nikon_d5100.csv"),
        ["r", "g", "b"],
        [np.interp(WAVELENGTHS, nikon.wavelengths, nikon.values[:, j]) for j in range(3)],
    )

    canon_path = os.path.join(
        os.path.dirname(colour.__file__),
        "characterisation", "datasets", "rawtoaces",
        "CANON_EOS_5DMark_II_RGB_Sensitivities.csv",
    )
    canon = np.genfromtxt(canon_path, delimiter=",", names=True)
    write(
        os.path.join(root, "cameras", "canon_5d_mark_ii.csv"),
        ["r", "g", "b"],
        [np.interp(WAVELENGTHS, canon["wavelength"], canon[c]) for c in ("R", "G", "B")],
    )

    names, columns = [], []
    for name, sd in colour.SDS_ILLUMINANTS.items():
        if not covers(sd):
            continue
        values = sample(sd)
        names.append(name.replace(" ", "_"))
        columns.append(values / values.max())
    write(os.path.join(root, "illuminants.csv"), names, columns)

    names, columns = [], []
    patches_path = os.path.join(
        os.path.dirname(colour.__file__),
        "characterisation", "datasets", "rawtoaces", "190_Patches.csv",
    )
    patches = np.genfromtxt(patches_path, delimiter=",", names=True)
    for field in patches.dtype.names[1:]:
        names.append(f"aces_{field}")
        columns.append(np.interp(WAVELENGTHS, patches["wavelength"], patches[field]))
    sets = [
        ("babel", colour.SDS_COLOURCHECKERS["BabelColor Average"]),
        ("pmc", colour.SDS_COLOURCHECKERS["PMC"]),
        ("tcs", SDS_TCS),
        ("vs", SDS_VS["NIST CQS 9.0"]),
    ]
    for prefix, sds in sets:
        for i, sd in enumerate(sds.values()):
            names.append(f"{prefix}_{i + 1:02d}")
            columns.append(sample(sd))
    # Fitted patch data carries ~1e-16 negative noise.
    columns = [np.clip(c, 0.0, None) for c in columns]
    write(os.path.join(root, "reflectances.csv"), names, columns)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/data")
