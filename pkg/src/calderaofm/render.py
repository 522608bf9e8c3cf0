"""Rendering of OFM grids: raw pixel images (PPM, optionally PNG) and report figures.

Pixel images encode one cell per pixel with hue keyed to the origin channel
and intensity to the fate channel; they are byte-exact regression artifacts.
Report figures are matplotlib renderings with axes and legends for human
consumption.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classify import CofmScheme, DM_BDM_SCHEME
from .section import STATUS_FAILED, STATUS_FORBIDDEN, STATUS_OK, SectionSpec

Color = tuple[int, int, int]

DEFAULT_ORIGIN_HUES: dict[int, Color] = {
    1: (220, 40, 40),    # red
    2: (50, 170, 60),    # green
    3: (60, 100, 220),   # blue
    4: (150, 60, 190),   # purple
}
DEFAULT_FATE_INTENSITIES: dict[int, float] = {1: 0.4, 2: 0.6, 3: 0.8, 4: 1.0}

COFM_COLORS: dict[str, Color] = {
    "R-R BDM": (235, 205, 40),  # yellow
    "R-L DM": (60, 170, 60),    # green
    "L-L BDM": (200, 40, 40),   # red
    "L-R DM": (240, 140, 30),   # orange
}


@dataclass(frozen=True)
class Palette:
    origin_hues: dict[int, Color] = field(default_factory=lambda: dict(DEFAULT_ORIGIN_HUES))
    fate_intensities: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_FATE_INTENSITIES)
    )
    trapped_color: Color = (70, 70, 70)
    forbidden_color: Color = (255, 255, 255)
    inactive_color: Color = (190, 190, 190)
    failed_color: Color = (255, 0, 255)

    def resolved_color(self, origin: int, fate: int) -> Color:
        hue = self.origin_hues[origin]
        w = self.fate_intensities[fate]
        return (int(round(hue[0] * w)), int(round(hue[1] * w)), int(round(hue[2] * w)))

    def all_resolved_colors(self) -> dict[tuple[int, int], Color]:
        return {
            (o, f): self.resolved_color(o, f)
            for o in self.origin_hues
            for f in self.fate_intensities
        }


def render_ofm(grid, palette: Palette = Palette(), mode: str = "full",
               scheme: CofmScheme = DM_BDM_SCHEME, upscale: int = 1) -> np.ndarray:
    """RGB image of a grid, one pixel per cell (optionally integer-upscaled).

    Rows run down the px axis (top row = largest px), columns along x; a
    two-branch grid stacks its layers vertically in layer order.
    """
    if mode not in ("full", "cofm"):
        raise ValueError("mode must be 'full' or 'cofm'")
    layers = []
    active = {pair: COFM_COLORS.get(label, (245, 215, 60)) for pair, label in scheme.active_classes}
    for layer in range(grid.origin.shape[0]):
        o = grid.origin[layer]
        f = grid.fate[layer]
        st = grid.status[layer]
        nx, npx = o.shape
        img = np.zeros((npx, nx, 3), dtype=np.uint8)
        for jp in range(npx):
            row = npx - 1 - jp  # top row = largest px
            for ix in range(nx):
                s = st[ix, jp]
                if s == STATUS_FORBIDDEN:
                    c = palette.forbidden_color
                elif s == STATUS_FAILED:
                    c = palette.failed_color
                else:
                    oo = int(o[ix, jp])
                    ff = int(f[ix, jp])
                    if mode == "full":
                        if oo == 0 or ff == 0:
                            c = palette.trapped_color
                        else:
                            c = palette.resolved_color(oo, ff)
                    else:
                        c = active.get((oo, ff), palette.inactive_color)
                img[row, ix] = c
        layers.append(img)
    out = np.concatenate(layers, axis=0) if len(layers) > 1 else layers[0]
    if upscale > 1:
        out = np.repeat(np.repeat(out, upscale, axis=0), upscale, axis=1)
    return out


def write_ppm(path, image: np.ndarray) -> None:
    """Binary P6 image; byte-exact for golden tests."""
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise ValueError(f"not a binary PPM: {path}")
        line = fh.readline()
        while line.startswith(b"#"):
            line = fh.readline()
        w, h = (int(v) for v in line.split())
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValueError("only 8-bit PPM supported")
        data = fh.read(w * h * 3)
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3)


def write_png(path, image: np.ndarray) -> bool:
    """PNG companion when an encoder is importable; returns True on success."""
    try:
        from PIL import Image
    except ImportError:
        return False
    Image.fromarray(image, mode="RGB").save(path)
    return True


def _axis_extent(grid):
    return [float(grid.xs[0]), float(grid.xs[-1]), float(grid.pxs[0]), float(grid.pxs[-1])]


def save_figure(path, grid, image: np.ndarray, title: str = "") -> None:
    """Matplotlib rendering of an already-rasterized grid image, with axes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n_layers = grid.origin.shape[0]
    extent = _axis_extent(grid)
    npx = grid.origin.shape[2]
    fig, axes = plt.subplots(
        n_layers, 1, figsize=(6.4, 5.2 * n_layers), squeeze=False, constrained_layout=True
    )
    for layer in range(n_layers):
        ax = axes[layer, 0]
        sub = image[layer * npx : (layer + 1) * npx]
        ax.imshow(sub, origin="upper", extent=extent, aspect="auto", interpolation="nearest")
        ax.set_xlabel("x")
        ax.set_ylabel("px")
        label = title
        if n_layers > 1:
            sign = grid.layer_signs[layer]
            label = f"{title} (py {'>' if sign > 0 else '<'} 0)"
        ax.set_title(label)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_ld_figure(path, field, ridges: np.ndarray | None = None, title: str = "") -> None:
    """Descriptor heat map with an optional ridge overlay."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n_layers = field.values.shape[0]
    extent = [float(field.xs[0]), float(field.xs[-1]), float(field.pxs[0]), float(field.pxs[-1])]
    fig, axes = plt.subplots(
        n_layers, 1, figsize=(6.4, 5.2 * n_layers), squeeze=False, constrained_layout=True
    )
    for layer in range(n_layers):
        ax = axes[layer, 0]
        vals = np.array(field.values[layer].T, dtype=float)
        vals[field.status[layer].T != STATUS_OK] = np.nan
        im = ax.imshow(
            vals, origin="lower", extent=extent, aspect="auto", interpolation="nearest",
            cmap="viridis",
        )
        fig.colorbar(im, ax=ax, label="descriptor")
        if ridges is not None:
            overlay = np.zeros(vals.shape + (4,))
            overlay[ridges[layer].T, :] = (0.0, 0.0, 0.0, 1.0)
            ax.imshow(overlay, origin="lower", extent=extent, aspect="auto",
                      interpolation="nearest")
        ax.set_xlabel("x")
        ax.set_ylabel("px")
        ax.set_title(title)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(path, records, critical: float | None = None) -> None:
    """f_23 against the stretching factor, the report companion to the sweep CSV."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lams = [r.lam for r in records]
    f23 = [r.f_23 for r in records]
    fig, ax = plt.subplots(figsize=(6.4, 4.2), constrained_layout=True)
    ax.plot(lams, f23, "o-", ms=3, lw=1)
    if critical is not None:
        ax.axvline(critical, color="crimson", ls="--", lw=1, label=f"critical = {critical:.4f}")
        ax.legend()
    ax.set_xlabel("stretching factor")
    ax.set_ylabel("f_2-3")
    ax.invert_xaxis()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_trajectory_figure(path, samples_list, p, labels=None, title: str = "") -> None:
    """Configuration-space trajectories over potential contours."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .dynamics import potential

    fig, ax = plt.subplots(figsize=(6.0, 6.0), constrained_layout=True)
    lim = 5.2 / p.lam
    gx = np.linspace(-lim, lim, 241)
    gy = np.linspace(-5.2, 5.2, 241)
    V = np.array([[potential((x, y), p) for x in gx] for y in gy])
    ax.contour(gx, gy, V, levels=20, colors="grey", linewidths=0.5)
    ax.contour(gx, gy, V, levels=[p.energy], colors="black", linewidths=1.2)
    colors = ["crimson", "royalblue", "darkorange", "seagreen"]
    for i, (ts, ys) in enumerate(samples_list):
        lbl = labels[i] if labels else None
        ax.plot(ys[:, 0], ys[:, 1], color=colors[i % len(colors)], lw=1.0, label=lbl)
        ax.plot(ys[0, 0], ys[0, 1], "o", color=colors[i % len(colors)], ms=4)
    if labels:
        ax.legend()
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-5.2, 5.2)
    fig.savefig(path, dpi=150)
    plt.close(fig)
