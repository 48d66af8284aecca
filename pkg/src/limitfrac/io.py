"""Result serialization: VTK legacy fields and CSV tables.

VTK output uses the legacy ASCII 3.0 format with an unstructured grid
of quadrilaterals (cell type 9) so files stay hand-inspectable and
dependency free. Slit nodes duplicated during carving are written as
distinct points, which is what lets viewers show the displacement
jump across the crack faces.

CSV values carry 12 significant digits after the leading one so runs
can be compared bitwise across machines.
"""

from __future__ import annotations

import os

import numpy as np

_FMT = "%.12e"


def write_vtk(mesh, fields, path, title="limitfrac output"):
    """Write nodal scalar fields on the mesh to a legacy VTK file.

    fields maps array names to per-node value arrays.
    """
    for name, values in fields.items():
        if len(values) != mesh.n_nodes:
            raise ValueError("field %r has %d values for %d nodes"
                             % (name, len(values), mesh.n_nodes))
    lines = []
    lines.append("# vtk DataFile Version 3.0")
    lines.append(title)
    lines.append("ASCII")
    lines.append("DATASET UNSTRUCTURED_GRID")
    lines.append("POINTS %d double" % mesh.n_nodes)
    for x, y in mesh.nodes:
        lines.append("%s %s 0.0" % (_FMT % x, _FMT % y))
    lines.append("CELLS %d %d" % (mesh.n_cells, 5 * mesh.n_cells))
    for cell in mesh.cells:
        lines.append("4 %d %d %d %d" % tuple(cell))
    lines.append("CELL_TYPES %d" % mesh.n_cells)
    lines.extend(["9"] * mesh.n_cells)
    lines.append("POINT_DATA %d" % mesh.n_nodes)
    for name, values in fields.items():
        lines.append("SCALARS %s double 1" % name)
        lines.append("LOOKUP_TABLE default")
        for v in values:
            lines.append(_FMT % v)
    write_text(path, "\n".join(lines) + "\n")


def write_csv(path, header, rows):
    """Write rows under a comma-separated header.

    Integer entries print as integers; everything else gets the full
    12-significant-digit float format.
    """
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (int, np.integer)):
                cells.append("%d" % v)
            else:
                cells.append(_FMT % v)
        lines.append(",".join(cells))
    write_text(path, "\n".join(lines) + "\n")


def write_probe_csv(samples, names, path):
    """Probe table: arc length, coordinates, then sampled quantities."""
    write_csv(path, ["arc", "x", "y"] + list(names), samples)


def write_series_csv(result, path):
    """Per-step evolution table for a quasi-static run."""
    header = ["step", "time", "bulk_energy", "crack_energy", "tip_pos", "tip_speed"]
    rows = []
    for k, t in enumerate(result.times):
        rows.append([k + 1, t, result.bulk[k], result.crack[k],
                     result.tip[k], result.tip_speed[k]])
    write_csv(path, header, rows)


def write_convergence_csv(dofs, hs, errors, rates, path):
    write_csv(path, ["cycle", "dofs", "h", "l2_error", "rate"],
              [[k + 1, dofs[k], hs[k], errors[k], rates[k]]
               for k in range(len(errors))])


def write_text(path, text):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)
