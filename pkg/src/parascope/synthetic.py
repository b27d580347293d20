"""Deterministic synthetic thin-smear slide generator with exact ground truth.

Renders a desk-scale visual model of a stained smear: pale-pink RBC
annuli, large purple WBC discs with a darker nucleus, small purple
platelet dots, ring-form parasite marks inside parasitized RBCs, plus
stain jitter and dirt speckles. All randomness comes from splitmix64
keyed on the spec seed, so the same spec yields bit-identical images on
any platform; ground-truth boxes are the exact non-background render
bounds of each cell.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._rng import SplitMix64, noise_field
from .datasets import AnnotatedImage, write_voc_xml
from .detect import CellClass
from .errors import PlacementOverflow
from .imaging import PixelBox, RasterImage, hsv_to_rgb, rgb_to_hsv

GENERATOR_NAME = "splitmix64"
_MAX_PLACEMENT_ATTEMPTS = 10_000

_PALETTE = {
    "background": (234, 225, 228),
    "rbc_ring": (214, 118, 132),
    "rbc_center": (237, 180, 189),
    "wbc_body": (150, 95, 172),
    "wbc_nucleus": (96, 46, 126),
    "platelet": (142, 72, 162),
    "parasite": (93, 34, 114),
    "dirt": (112, 98, 88),
}


@dataclass(frozen=True)
class SyntheticSlideSpec:
    seed: int
    n_rbc: int = 25
    n_wbc: int = 2
    n_platelet: int = 4
    parasitized_fraction: float = 0.2
    width: int = 320
    height: int = 320
    hue_jitter: float = 8.0          # degrees, per slide; half again per cell
    brightness_jitter: float = 0.05  # multiplicative half-range
    noise_amplitude: int = 2         # per-pixel luminance noise, +/- counts
    contamination: int = 4           # dirt speckles
    min_separation: float = 1.15     # x (r_i + r_j); hard floor 0.9

    def __post_init__(self):
        if min(self.n_rbc, self.n_wbc, self.n_platelet, self.contamination) < 0:
            raise ValueError("counts must be non-negative")
        if not 0.0 <= self.parasitized_fraction <= 1.0:
            raise ValueError("parasitized_fraction must be in [0, 1]")
        if self.width < 32 or self.height < 32:
            raise ValueError("slide must be at least 32x32")
        if self.min_separation < 0.9:
            raise ValueError("min_separation below the 0.9 overlap floor")


@dataclass(frozen=True)
class SyntheticSlide:
    image: RasterImage
    annotated: AnnotatedImage
    rbc_infected: tuple  # bool per RBC, aligned with the RBC objects in order


def _jitter_color(color, rng: SplitMix64, hue_range: float, bright_range: float):
    h, s, v = rgb_to_hsv(color)
    h = (h + rng.uniform(-hue_range, hue_range)) % 360.0
    v = min(1.0, max(0.0, v * rng.uniform(1.0 - bright_range, 1.0 + bright_range)))
    return hsv_to_rgb(h, s, v)


def _disc_mask(patch_h: int, patch_w: int, cy: float, cx: float, r: float):
    yy, xx = np.ogrid[:patch_h, :patch_w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _paint(canvas: np.ndarray, top: int, left: int, mask: np.ndarray, color) -> None:
    h, w = canvas.shape[:2]
    mh, mw = mask.shape
    t0, l0 = max(top, 0), max(left, 0)
    t1, l1 = min(top + mh, h), min(left + mw, w)
    if t1 <= t0 or l1 <= l0:
        return
    sub = mask[t0 - top:t1 - top, l0 - left:l1 - left]
    canvas[t0:t1, l0:l1][sub] = np.asarray(color, dtype=np.uint8)


@dataclass
class _Cell:
    kind: str  # "wbc" | "rbc" | "platelet"
    cx: float
    cy: float
    r: float


def _place_cells(spec: SyntheticSlideSpec, rng: SplitMix64, scale: float) -> list[_Cell]:
    plan = (
        [("wbc", 21.0, 25.0)] * spec.n_wbc
        + [("rbc", 8.0, 14.0)] * spec.n_rbc
        + [("platelet", 2.5, 4.0)] * spec.n_platelet
    )
    cells: list[_Cell] = []
    for kind, r_lo, r_hi in plan:
        r = rng.uniform(r_lo, r_hi) * scale
        margin = math.ceil(r) + 3
        if 2 * margin >= min(spec.width, spec.height):
            raise PlacementOverflow(f"{kind} radius {r:.1f} cannot fit the slide")
        for attempt in range(_MAX_PLACEMENT_ATTEMPTS):
            cx = rng.uniform(margin, spec.width - margin)
            cy = rng.uniform(margin, spec.height - margin)
            ok = all(
                math.hypot(cx - c.cx, cy - c.cy) >= spec.min_separation * (r + c.r)
                for c in cells
            )
            if ok:
                cells.append(_Cell(kind, cx, cy, r))
                break
        else:
            raise PlacementOverflow(
                f"could not place {kind} #{len(cells)} after "
                f"{_MAX_PLACEMENT_ATTEMPTS} attempts"
            )
    return cells


def _render_cell(canvas, cell: _Cell, colors, rng: SplitMix64, infected: bool) -> PixelBox:
    """Draw one cell and return its exact render-bound box."""
    pad = int(math.ceil(cell.r)) + 2
    top = int(math.floor(cell.cy)) - pad
    left = int(math.floor(cell.cx)) - pad
    size = 2 * pad + 1
    cy, cx = cell.cy - top, cell.cx - left

    outer = _disc_mask(size, size, cy, cx, cell.r)

    if cell.kind == "rbc":
        inner = _disc_mask(size, size, cy, cx, 0.55 * cell.r)
        _paint(canvas, top, left, outer & ~inner, colors["rbc_ring"])
        _paint(canvas, top, left, inner, colors["rbc_center"])
        if infected:
            theta = rng.uniform(0.0, 2.0 * math.pi)
            off = 0.25 * cell.r
            pcy = cy + off * math.sin(theta)
            pcx = cx + off * math.cos(theta)
            ring_r = 0.45 * cell.r
            thick = max(1.2, 0.12 * cell.r)
            yy, xx = np.ogrid[:size, :size]
            dist = np.sqrt((yy - pcy) ** 2 + (xx - pcx) ** 2)
            ring = np.abs(dist - ring_r) <= thick
            dot_theta = rng.uniform(0.0, 2.0 * math.pi)
            dot = _disc_mask(
                size, size,
                pcy + ring_r * math.sin(dot_theta),
                pcx + ring_r * math.cos(dot_theta),
                max(1.5, 0.16 * cell.r),
            )
            _paint(canvas, top, left, (ring | dot) & outer, colors["parasite"])
    elif cell.kind == "wbc":
        _paint(canvas, top, left, outer, colors["wbc_body"])
        phi = rng.uniform(0.0, 2.0 * math.pi)
        off = 0.25 * cell.r
        lobe_a = _disc_mask(size, size, cy + off * math.sin(phi),
                            cx + off * math.cos(phi), 0.5 * cell.r)
        lobe_b = _disc_mask(size, size, cy - off * math.sin(phi),
                            cx - off * math.cos(phi), 0.45 * cell.r)
        _paint(canvas, top, left, (lobe_a | lobe_b) & outer, colors["wbc_nucleus"])
    else:
        _paint(canvas, top, left, outer, colors["platelet"])

    rows = np.flatnonzero(outer.any(axis=1))
    cols = np.flatnonzero(outer.any(axis=0))
    return PixelBox(
        top=top + int(rows[0]), left=left + int(cols[0]),
        bottom=top + int(rows[-1]) + 1, right=left + int(cols[-1]) + 1,
    )


def generate_synthetic_slide(spec: SyntheticSlideSpec) -> SyntheticSlide:
    """Render a slide; returns the image, exact annotations, and RBC labels.

    The parasitized count is exactly round-half-up(parasitized_fraction
    * n_rbc). Cell centers never come closer than min_separation times
    the radius sum, so components stay separable at default settings.
    """
    rng = SplitMix64(spec.seed)
    scale = min(spec.width, spec.height) / 320.0

    slide_hue = rng.uniform(-spec.hue_jitter, spec.hue_jitter)
    slide_bright = rng.uniform(1.0 - spec.brightness_jitter, 1.0 + spec.brightness_jitter)

    def slide_color(name):
        h, s, v = rgb_to_hsv(_PALETTE[name])
        h = (h + slide_hue) % 360.0
        v = min(1.0, max(0.0, v * slide_bright))
        return hsv_to_rgb(h, s, v)

    base = {name: slide_color(name) for name in _PALETTE}

    canvas = np.empty((spec.height, spec.width, 3), dtype=np.uint8)
    canvas[:, :] = np.asarray(base["background"], dtype=np.uint8)
    if spec.noise_amplitude > 0:
        amp = int(spec.noise_amplitude)
        noise = noise_field(spec.seed ^ 0xA5A5A5A5, (spec.height, spec.width))
        offsets = np.floor(noise * (2 * amp + 1)).astype(np.int16) - amp
        canvas = np.clip(
            canvas.astype(np.int16) + offsets[..., None], 0, 255
        ).astype(np.uint8)

    cells = _place_cells(spec, rng, scale)

    n_rbc_placed = sum(1 for c in cells if c.kind == "rbc")
    n_parasitized = int(math.floor(spec.parasitized_fraction * n_rbc_placed + 0.5))
    order = list(range(n_rbc_placed))
    rng.shuffle(order)
    infected_set = set(order[:n_parasitized])

    # Dirt renders first so cells draw over it; speckles stay below the
    # detector's minimum-area gate at default size.
    for _ in range(spec.contamination):
        r = rng.uniform(0.8, 2.5) * scale
        cx = rng.uniform(r + 1, spec.width - r - 1)
        cy = rng.uniform(r + 1, spec.height - r - 1)
        pad = int(math.ceil(r)) + 1
        top, left = int(math.floor(cy)) - pad, int(math.floor(cx)) - pad
        size = 2 * pad + 1
        mask = _disc_mask(size, size, cy - top, cx - left, r)
        _paint(canvas, top, left, mask,
               _jitter_color(base["dirt"], rng, spec.hue_jitter, spec.brightness_jitter))

    objects = []
    rbc_infected = []
    rbc_index = 0
    for cell in cells:
        cell_colors = {
            name: _jitter_color(base[name], rng, spec.hue_jitter / 2.0,
                                spec.brightness_jitter / 2.0)
            for name in ("rbc_ring", "rbc_center", "wbc_body", "wbc_nucleus",
                         "platelet", "parasite")
        }
        infected = False
        if cell.kind == "rbc":
            infected = rbc_index in infected_set
            rbc_infected.append(infected)
            rbc_index += 1
        box = _render_cell(canvas, cell, cell_colors, rng, infected)
        cls = {"rbc": CellClass.RBC, "wbc": CellClass.WBC,
               "platelet": CellClass.Platelet}[cell.kind]
        objects.append((cls, box))

    annotated = AnnotatedImage("", spec.width, spec.height, tuple(objects))
    return SyntheticSlide(RasterImage(canvas), annotated, tuple(rbc_infected))


def labels_sidecar(slide: SyntheticSlide, spec: SyntheticSlideSpec) -> dict:
    """Sidecar document listing per-RBC infection labels with their boxes."""
    rbc_boxes = [box for cls, box in slide.annotated.objects if cls == CellClass.RBC]
    return {
        "generator": GENERATOR_NAME,
        "seed": spec.seed,
        "rbc": [
            {"box": box.as_list(), "infected": bool(flag)}
            for box, flag in zip(rbc_boxes, slide.rbc_infected)
        ],
    }


def parse_labels_sidecar(doc: dict) -> list[tuple[PixelBox, bool]]:
    out = []
    for entry in doc.get("rbc", []):
        t, l, b, r = entry["box"]
        out.append((PixelBox(t, l, b, r), bool(entry["infected"])))
    return out


def write_synthetic_dataset(out_dir, specs: list[SyntheticSlideSpec]) -> list[str]:
    """Write slide_NNNN.{ppm,xml,labels.json} triples; returns the stems."""
    from .codecs import encode_ppm

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = []
    for i, spec in enumerate(specs):
        stem = f"slide_{i:04d}"
        slide = generate_synthetic_slide(spec)
        annotated = AnnotatedImage(
            f"{stem}.ppm", slide.annotated.width, slide.annotated.height,
            slide.annotated.objects,
        )
        (out_dir / f"{stem}.ppm").write_bytes(encode_ppm(slide.image))
        (out_dir / f"{stem}.xml").write_bytes(write_voc_xml(annotated))
        (out_dir / f"{stem}.labels.json").write_text(
            json.dumps(labels_sidecar(slide, spec), indent=2, sort_keys=True) + "\n"
        )
        stems.append(stem)
    return stems
