"""Plain-text outputs: legacy ASCII VTK meshes with cell data, and CSV tables."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .boundary_layer import HiemenzProfile
from .mesh import MeshQuality, TriMesh

VTK_TRIANGLE = 5


def write_vtk(path, mesh: TriMesh, cell_data: dict | None = None, title: str = "crstokes mesh") -> Path:
    """Write ``mesh`` as a legacy VTK unstructured grid, one ``SCALARS`` block per cell field."""
    path = Path(path)
    n = mesh.n_elements
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [f"{float(x)!r} {float(y)!r} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {n} {4 * n}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {n}")
    lines += [str(VTK_TRIANGLE)] * n
    if cell_data:
        lines.append(f"CELL_DATA {n}")
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise ValueError(f"cell field {name!r} has shape {values.shape}, expected ({n},)")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [repr(float(v)) for v in values]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_cells(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Minimal reader for files produced by ``write_vtk``: points, triangles and cell fields."""
    tokens = Path(path).read_text().split("\n")
    i = 0
    points = triangles = None
    fields = {}
    while i < len(tokens):
        line = tokens[i].split()
        if not line:
            i += 1
            continue
        if line[0] == "POINTS":
            n = int(line[1])
            points = np.array([tokens[i + 1 + k].split() for k in range(n)], dtype=float)[:, :2]
            i += n + 1
        elif line[0] == "CELLS":
            n = int(line[1])
            triangles = np.array([tokens[i + 1 + k].split()[1:] for k in range(n)], dtype=int)
            i += n + 1
        elif line[0] == "SCALARS":
            name = line[1]
            n = len(triangles)
            fields[name] = np.array(tokens[i + 2 : i + 2 + n], dtype=float)
            i += n + 2
        else:
            i += 1
    return points, triangles, fields


def write_profile_csv(path, profile: HiemenzProfile) -> Path:
    path = Path(path)
    rows = ["eta,f,fp,fpp"]
    rows += [",".join(repr(float(v)) for v in r) for r in profile.table]
    path.write_text("\n".join(rows) + "\n")
    return path


def write_quality_csv(path, quality: MeshQuality) -> Path:
    path = Path(path)
    path.write_text(MeshQuality.CSV_HEADER + "\n" + quality.csv_row() + "\n")
    return path


def write_records_csv(path, records) -> Path:
    """Convergence table; the algebraic residual and system size follow the error columns."""
    path = Path(path)
    header = records[0].CSV_HEADER + ",residual_norm,n_unknowns"
    rows = [header]
    for r in records:
        extra = ",".join(["", ""] if r.report is None else [repr(r.report.residual_norm), str(r.report.n_unknowns)])
        rows.append(r.csv_row() + "," + extra)
    path.write_text("\n".join(rows) + "\n")
    return path


def write_timings_csv(path, records) -> Path:
    path = Path(path)
    rows = ["level,method,mesh,factor_time,solve_time"]
    for r in records:
        if r.report is not None:
            rows.append(
                f"{r.level},{r.method.value},{r.mesh_kind.value},"
                f"{r.report.factor_time:.6f},{r.report.solve_time:.6f}"
            )
    path.write_text("\n".join(rows) + "\n")
    return path
