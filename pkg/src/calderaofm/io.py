"""Delimited file formats: OFM grids, descriptor fields, sweep tables, config files.

All headers are ``#``-prefixed key/value comment lines followed by a CSV
column header and rows.  Floats are written with full repr precision so files
serve as exact regression fixtures.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .section import STATUS_CODES, STATUS_NAMES, SectionSpec
from .pods import PodsSpec


@dataclass
class CsvGrid:
    """Grid data reconstructed from an OFM CSV; renderable like an OFMGrid."""

    origin: np.ndarray
    fate: np.ndarray
    status: np.ndarray
    xs: np.ndarray
    pxs: np.ndarray
    layer_signs: tuple[int, ...]
    meta: dict


def _grid_header(grid) -> list[str]:
    lines = ["# ofm v1"]
    spec = grid.spec
    if isinstance(spec, SectionSpec):
        lines.append("# kind section")
        lines.append(f"# section_y {spec.y_value!r}")
        lines.append(f"# py_sign {spec.py_sign:+d}")
    elif isinstance(spec, PodsSpec):
        lines.append("# kind pods")
        branch = spec.py_branch
        lines.append(f"# branch {branch if isinstance(branch, str) else format(branch, '+d')}")
    else:
        lines.append("# kind unknown")
    p = grid.params
    lines.append(f"# lambda {p.lam!r}")
    lines.append(f"# energy {p.energy!r}")
    lines.append(f"# tau {grid.settings.max_time!r}")
    lines.append(f"# x_range {float(grid.xs[0])!r} {float(grid.xs[-1])!r}")
    lines.append(f"# px_range {float(grid.pxs[0])!r} {float(grid.pxs[-1])!r}")
    lines.append(f"# nx {len(grid.xs)}")
    lines.append(f"# npx {len(grid.pxs)}")
    lines.append(f"# layers {grid.origin.shape[0]}")
    lines.append(f"# layer_signs {' '.join(format(s, '+d') for s in grid.layer_signs)}")
    return lines


def write_ofm_csv(path, grid) -> None:
    with open(path, "w") as fh:
        for line in _grid_header(grid):
            fh.write(line + "\n")
        fh.write("i,j,x,px,origin,fate,status\n")
        n_layers, nx, npx = grid.origin.shape
        pxs = [float(v) for v in grid.pxs]
        for layer in range(n_layers):
            for ix in range(nx):
                i = layer * nx + ix
                x = float(grid.xs[ix])
                for jp in range(npx):
                    st = STATUS_NAMES[int(grid.status[layer, ix, jp])]
                    fh.write(
                        f"{i},{jp},{x!r},{pxs[jp]!r},"
                        f"{int(grid.origin[layer, ix, jp])},{int(grid.fate[layer, ix, jp])},{st}\n"
                    )


def read_ofm_csv(path) -> CsvGrid:
    meta: dict = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 2:
                    meta[parts[0]] = parts[1:] if len(parts) > 2 else parts[1]
                continue
            if line.startswith("i,"):
                continue
            rows.append(line.split(","))
    nx = int(meta["nx"])
    npx = int(meta["npx"])
    n_layers = int(meta.get("layers", 1))
    signs = meta.get("layer_signs", "+1")
    if isinstance(signs, str):
        signs = [signs]
    layer_signs = tuple(int(s) for s in signs)
    origin = np.zeros((n_layers, nx, npx), dtype=np.int8)
    fate = np.zeros((n_layers, nx, npx), dtype=np.int8)
    status = np.zeros((n_layers, nx, npx), dtype=np.uint8)
    xs = np.zeros(nx)
    pxs = np.zeros(npx)
    for i_s, j_s, x_s, px_s, o_s, f_s, st_s in rows:
        i = int(i_s)
        j = int(j_s)
        layer, ix = divmod(i, nx)
        origin[layer, ix, j] = int(o_s)
        fate[layer, ix, j] = int(f_s)
        status[layer, ix, j] = STATUS_CODES[st_s]
        xs[ix] = float(x_s)
        pxs[j] = float(px_s)
    return CsvGrid(
        origin=origin, fate=fate, status=status, xs=xs, pxs=pxs,
        layer_signs=layer_signs, meta=meta,
    )


def write_ld_csv(path, field) -> None:
    with open(path, "w") as fh:
        fh.write("# ld v1\n")
        fh.write(f"# lambda {field.params.lam!r}\n")
        fh.write(f"# energy {field.params.energy!r}\n")
        fh.write(f"# tau_ld {field.tau_ld!r}\n")
        fh.write(f"# p_exponent {field.p_exponent!r}\n")
        fh.write(f"# nx {len(field.xs)}\n")
        fh.write(f"# npx {len(field.pxs)}\n")
        fh.write(f"# layers {field.values.shape[0]}\n")
        fh.write("i,j,x,px,value,forward,backward,status\n")
        n_layers, nx, npx = field.values.shape
        pxs = [float(v) for v in field.pxs]
        for layer in range(n_layers):
            for ix in range(nx):
                i = layer * nx + ix
                x = float(field.xs[ix])
                for jp in range(npx):
                    st = STATUS_NAMES[int(field.status[layer, ix, jp])]
                    fh.write(
                        f"{i},{jp},{x!r},{pxs[jp]!r},"
                        f"{float(field.values[layer, ix, jp])!r},"
                        f"{float(field.forward[layer, ix, jp])!r},"
                        f"{float(field.backward[layer, ix, jp])!r},{st}\n"
                    )


def write_ridge_csv(path, mask: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("# ridges v1\n")
        fh.write(f"# layers {mask.shape[0]}\n")
        fh.write(f"# nx {mask.shape[1]}\n")
        fh.write(f"# npx {mask.shape[2]}\n")
        fh.write("i,j,ridge\n")
        n_layers, nx, npx = mask.shape
        for layer in range(n_layers):
            for ix in range(nx):
                i = layer * nx + ix
                for jp in range(npx):
                    fh.write(f"{i},{jp},{1 if mask[layer, ix, jp] else 0}\n")


def write_sweep_csv(path, records) -> None:
    with open(path, "w") as fh:
        fh.write("lambda,f23,n_origin2,n_23,n_unresolved\n")
        for r in records:
            fh.write(
                f"{float(r.lam)!r},{float(r.f_23)!r},{r.n_origin},{r.n_target},{r.n_unresolved}\n"
            )


def read_sweep_csv(path):
    out = []
    with open(path) as fh:
        header = fh.readline()
        for line in fh:
            line = line.strip()
            if not line:
                continue
            lam, f23, n2, n23, nun = line.split(",")
            out.append((float(lam), float(f23), int(n2), int(n23), int(nun)))
    return out


def read_config(path) -> dict[str, str]:
    """Plain key=value configuration; '#' starts a comment."""
    cfg: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {raw.strip()!r}")
            key, val = line.split("=", 1)
            cfg[key.strip()] = val.strip()
    return cfg
