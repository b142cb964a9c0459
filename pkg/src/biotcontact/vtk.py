"""Legacy ASCII VTK output of leaf meshes with solution data."""
import numpy as np

_CORNER_REF = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
VTK_QUAD = 9


def write_vtk(path, mesh, fields=None, cell_data=None, title="biot contact"):
    """Write the leaves of ``mesh`` as an unstructured grid.

    Every leaf gets its own four points so hanging vertices need no special
    treatment. ``fields`` (a :class:`DiscreteFields`) adds ``u`` and ``p``
    point data; ``cell_data`` maps names to per-leaf arrays.
    """
    leaves = mesh.leaves
    n = len(leaves)
    pts = mesh.corners(leaves).reshape(-1, 2)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {4 * n} double"]
    lines += [f"{x:.16g} {y:.16g} 0" for x, y in pts]
    lines.append(f"CELLS {n} {5 * n}")
    lines += [f"4 {4 * k} {4 * k + 1} {4 * k + 2} {4 * k + 3}" for k in range(n)]
    lines.append(f"CELL_TYPES {n}")
    lines += [str(VTK_QUAD)] * n
    if fields is not None:
        ref = np.broadcast_to(_CORNER_REF, (n, 4, 2))
        f = fields.evaluate(np.arange(n), ref)
        u = f["u"].reshape(-1, 2)
        p = f["p"].ravel()
        lines.append(f"POINT_DATA {4 * n}")
        lines.append("VECTORS u double")
        lines += [f"{a:.16g} {b:.16g} 0" for a, b in u]
        lines.append("SCALARS p double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [f"{v:.16g}" for v in p]
    if cell_data:
        lines.append(f"CELL_DATA {n}")
        for name, values in cell_data.items():
            values = np.asarray(values)
            kind = "int" if np.issubdtype(values.dtype, np.integer) else "double"
            lines.append(f"SCALARS {name} {kind} 1")
            lines.append("LOOKUP_TABLE default")
            lines += [f"{v:.16g}" if kind == "double" else str(int(v)) for v in values]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path):
    """Minimal reader for files produced by :func:`write_vtk` (used in tests
    and for inspection). Returns a dict of numpy arrays."""
    with open(path) as fh:
        tok = fh.read().split("\n")
    out = {"point_data": {}, "cell_data": {}}
    i = 0
    section = None
    while i < len(tok):
        line = tok[i].strip()
        parts = line.split()
        if not parts:
            i += 1
            continue
        head = parts[0]
        if head == "POINTS":
            m = int(parts[1])
            out["points"] = np.array([tok[i + 1 + k].split() for k in range(m)], dtype=float)
            i += m + 1
        elif head == "CELLS":
            m = int(parts[1])
            out["cells"] = np.array([tok[i + 1 + k].split()[1:] for k in range(m)], dtype=int)
            i += m + 1
        elif head == "CELL_TYPES":
            m = int(parts[1])
            out["cell_types"] = np.array(tok[i + 1:i + 1 + m], dtype=int)
            i += m + 1
        elif head == "POINT_DATA":
            section, count = "point_data", int(parts[1])
            i += 1
        elif head == "CELL_DATA":
            section, count = "cell_data", int(parts[1])
            i += 1
        elif head == "VECTORS":
            out[section][parts[1]] = np.array([tok[i + 1 + k].split() for k in range(count)],
                                              dtype=float)
            i += count + 1
        elif head == "SCALARS":
            dtype = int if parts[2] == "int" else float
            out[section][parts[1]] = np.array(tok[i + 2:i + 2 + count], dtype=dtype)
            i += count + 2
        else:
            i += 1
    return out
