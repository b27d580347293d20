"""Dataset ingestion: Pascal-VOC detection XML and class-per-directory crops.

VOC boxes are 1-based inclusive; everything downstream uses 0-based
half-open boxes, so the off-by-one conversion lives here and nowhere
else (getting it wrong silently corrupts IoU scores).
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from ._rng import SplitMix64
from .detect import CellClass
from .errors import (
    BadFractions,
    EmptyDataset,
    InvertedBox,
    SchemaError,
    UnknownClassName,
)
from .imaging import PixelBox

IMAGE_SUFFIXES = (".png", ".ppm", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class AnnotatedImage:
    image_path: str
    width: int
    height: int
    objects: tuple = field(default_factory=tuple)  # (CellClass, PixelBox) pairs

    def boxes_for(self, cell_class: CellClass) -> list[PixelBox]:
        return [box for cls, box in self.objects if cls == cell_class]


@dataclass(frozen=True)
class LabeledCrop:
    image_path: str
    label: str  # "Parasitized" | "Uninfected"

    @property
    def infected(self) -> bool:
        return self.label == "Parasitized"


def _require(parent, tag: str):
    node = parent.find(tag)
    if node is None:
        raise SchemaError(f"missing <{tag}> element")
    return node


def _int_text(node) -> int:
    try:
        return int(float(node.text.strip()))
    except (TypeError, ValueError, AttributeError):
        raise SchemaError(f"non-integer value in <{node.tag}>") from None


def parse_voc_xml(xml_bytes: bytes) -> AnnotatedImage:
    """Parse one Pascal-VOC annotation document.

    1-based inclusive (xmin, ymin, xmax, ymax) becomes 0-based half-open
    (top=ymin-1, left=xmin-1, bottom=ymax, right=xmax). Class names
    accept the source spellings RBC / WBC / Platelets / Platelet; boxes
    are clamped to the declared image size. Objects keep document order.
    """
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise SchemaError(f"not well-formed XML: {exc}") from exc
    if root.tag != "annotation":
        raise SchemaError(f"root element is <{root.tag}>, expected <annotation>")

    size = _require(root, "size")
    width = _int_text(_require(size, "width"))
    height = _int_text(_require(size, "height"))
    if width < 1 or height < 1:
        raise SchemaError(f"bad image size {width}x{height}")

    filename_node = root.find("filename")
    image_path = filename_node.text.strip() if filename_node is not None and filename_node.text else ""

    objects = []
    for obj in root.findall("object"):
        name = _require(obj, "name").text
        name = name.strip() if name else ""
        try:
            cell_class = CellClass.from_name(name)
        except KeyError:
            raise UnknownClassName(f"unknown class name {name!r}") from None
        bndbox = _require(obj, "bndbox")
        xmin = _int_text(_require(bndbox, "xmin"))
        ymin = _int_text(_require(bndbox, "ymin"))
        xmax = _int_text(_require(bndbox, "xmax"))
        ymax = _int_text(_require(bndbox, "ymax"))
        if xmax <= xmin or ymax <= ymin:
            raise InvertedBox(f"degenerate box ({xmin},{ymin},{xmax},{ymax})")
        box = PixelBox(top=ymin - 1, left=xmin - 1, bottom=ymax, right=xmax)
        clamped = box.clamp(width, height)
        if clamped is None:
            raise InvertedBox(f"box ({xmin},{ymin},{xmax},{ymax}) lies outside the image")
        objects.append((cell_class, clamped))

    return AnnotatedImage(image_path, width, height, tuple(objects))


def write_voc_xml(annotated: AnnotatedImage) -> bytes:
    """Inverse of parse_voc_xml (half-open 0-based back to VOC 1-based)."""
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = annotated.image_path
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(annotated.width)
    ET.SubElement(size, "height").text = str(annotated.height)
    ET.SubElement(size, "depth").text = "3"
    for cell_class, box in annotated.objects:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = cell_class.name
        bnd = ET.SubElement(obj, "bndbox")
        ET.SubElement(bnd, "xmin").text = str(box.left + 1)
        ET.SubElement(bnd, "ymin").text = str(box.top + 1)
        ET.SubElement(bnd, "xmax").text = str(box.right)
        ET.SubElement(bnd, "ymax").text = str(box.bottom)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def load_voc_dir(root) -> dict[str, AnnotatedImage]:
    """Load every *.xml under ``root`` (flat), keyed by file stem."""
    root = Path(root)
    out = {}
    for path in sorted(root.glob("*.xml")):
        annotated = parse_voc_xml(path.read_bytes())
        if not annotated.image_path:
            annotated = AnnotatedImage(
                path.stem, annotated.width, annotated.height, annotated.objects
            )
        out[path.stem] = annotated
    if not out:
        raise EmptyDataset(f"no VOC annotations under {root}")
    return out


def load_classification_dataset(root) -> list[LabeledCrop]:
    """Scan Parasitized/ and Uninfected/ subdirectories (flat, no recursion).

    Returns crops in stable lexicographic path order.
    """
    root = Path(root)
    crops = []
    for label in ("Parasitized", "Uninfected"):
        subdir = root / label
        if not subdir.is_dir():
            continue
        for path in sorted(subdir.iterdir()):
            if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES:
                crops.append(LabeledCrop(str(path), label))
    if not crops:
        raise EmptyDataset(f"no labeled crops under {root}")
    crops.sort(key=lambda c: c.image_path)
    return crops


def class_counts(crops: list[LabeledCrop]) -> dict[str, int]:
    counts = {"Parasitized": 0, "Uninfected": 0}
    for c in crops:
        counts[c.label] = counts.get(c.label, 0) + 1
    return counts


def split_dataset(items, fractions, seed: int):
    """Deterministic (train, val, test) partition.

    Sizes are the floor allocation of each fraction with the remainder
    assigned to train; the shuffle is a seeded Fisher-Yates, so the same
    seed always yields the same split.
    """
    if len(fractions) != 3:
        raise BadFractions("need exactly (train, val, test) fractions")
    if any(f < 0 for f in fractions):
        raise BadFractions(f"negative fraction in {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise BadFractions(f"fractions {fractions} do not sum to 1")

    shuffled = list(items)
    SplitMix64(seed).shuffle(shuffled)
    n = len(shuffled)
    # Tiny epsilon guards the floor against float dust (0.1 * 10 style).
    n_train = int(math.floor(fractions[0] * n + 1e-9))
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    n_test = int(math.floor(fractions[2] * n + 1e-9))
    n_train += n - (n_train + n_val + n_test)
    train = shuffled[:n_train]
    val = shuffled[n_train:n_train + n_val]
    test = shuffled[n_train + n_val:]
    return train, val, test
