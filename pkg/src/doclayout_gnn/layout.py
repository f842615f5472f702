"""Layout documents, JSON Lines corpora, reading order, and toy corpora."""

from __future__ import annotations

import enum
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Optional

from .numeric.rng import Rng

ROW_TOLERANCE = 0.02
MIN_EXTENT = 1e-3


class ElementType(enum.IntEnum):
    title = 0
    heading = 1
    text_block = 2
    image = 3
    table = 4
    caption = 5
    header = 6
    footer = 7

    @classmethod
    def from_name(cls, name):
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown element type {name!r}") from None


class LayoutError(ValueError):
    """Invalid layout data; the message names the document and field."""


@dataclass(frozen=True)
class LayoutElement:
    element_type: ElementType
    bbox: tuple
    font_size: Optional[float] = None
    order: Optional[int] = None

    @property
    def center(self):
        x0, y0, x1, y1 = self.bbox
        return (0.5 * (x0 + x1), 0.5 * (y0 + y1))

    @property
    def width(self):
        return self.bbox[2] - self.bbox[0]

    @property
    def height(self):
        return self.bbox[3] - self.bbox[1]


@dataclass(frozen=True)
class LayoutDocument:
    id: str
    elements: tuple
    label: Optional[str] = None
    page_width: float = 612.0
    page_height: float = 792.0

    def __len__(self):
        return len(self.elements)


def element_errors(el):
    """Invariant violations of a single element, as field-qualified strings."""
    errs = []
    if len(el.bbox) != 4:
        return ["bbox: expected 4 coordinates"]
    x0, y0, x1, y1 = el.bbox
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in el.bbox):
        return ["bbox: non-finite coordinate"]
    if not x0 < x1:
        errs.append("bbox: x0 ≥ x1")
    if not y0 < y1:
        errs.append("bbox: y0 ≥ y1")
    if min(el.bbox) < 0.0 or max(el.bbox) > 1.0:
        errs.append("bbox: coordinate outside [0, 1]")
    if el.font_size is not None and not (0.0 < el.font_size <= 1.0):
        errs.append("font_size: must be in (0, 1]")
    if el.order is not None and (not isinstance(el.order, int) or el.order < 0):
        errs.append("order: must be a non-negative integer")
    return errs


def validate_document(doc, require_elements=False):
    """Raise LayoutError if ``doc`` breaks any document or element invariant."""
    if require_elements and not doc.elements:
        raise LayoutError(f"document {doc.id!r}: elements: empty")
    if not (doc.page_width > 0 and doc.page_height > 0):
        raise LayoutError(f"document {doc.id!r}: page: width and height must be positive")
    for i, el in enumerate(doc.elements):
        errs = element_errors(el)
        if errs:
            raise LayoutError(f"document {doc.id!r}: elements[{i}].{errs[0]}")
    orders = [el.order for el in doc.elements]
    explicit = [o for o in orders if o is not None]
    if explicit:
        if len(explicit) != len(orders):
            raise LayoutError(f"document {doc.id!r}: order: set on some elements but not all")
        if sorted(explicit) != list(range(len(orders))):
            raise LayoutError(f"document {doc.id!r}: order: not a permutation of 0..n-1")


# ---------------------------------------------------------------- JSON Lines


_DOC_KEYS = {"id", "label", "page", "elements"}
_ELEMENT_KEYS = {"type", "bbox", "font_size", "order"}


def document_to_dict(doc):
    return {
        "id": doc.id,
        "label": doc.label,
        "page": {"width": doc.page_width, "height": doc.page_height},
        "elements": [
            {
                "type": el.element_type.name,
                "bbox": list(el.bbox),
                "font_size": el.font_size,
                "order": el.order,
            }
            for el in doc.elements
        ],
    }


def document_from_dict(obj):
    if not isinstance(obj, dict):
        raise LayoutError("expected a JSON object")
    doc_id = obj.get("id")
    if not isinstance(doc_id, str):
        raise LayoutError("id: missing or not a string")
    extra = set(obj) - _DOC_KEYS
    if extra:
        raise LayoutError(f"document {doc_id!r}: unknown key(s) {sorted(extra)}")
    label = obj.get("label")
    if label is not None and not isinstance(label, str):
        raise LayoutError(f"document {doc_id!r}: label: not a string")
    page = obj.get("page") or {}
    if not isinstance(page, dict) or set(page) - {"width", "height"}:
        raise LayoutError(f"document {doc_id!r}: page: expected {{width, height}}")
    raw_elements = obj.get("elements")
    if not isinstance(raw_elements, list):
        raise LayoutError(f"document {doc_id!r}: elements: missing or not a list")
    elements = []
    for i, e in enumerate(raw_elements):
        where = f"document {doc_id!r}: elements[{i}]"
        if not isinstance(e, dict):
            raise LayoutError(f"{where}: not an object")
        extra = set(e) - _ELEMENT_KEYS
        if extra:
            raise LayoutError(f"{where}: unknown key(s) {sorted(extra)}")
        try:
            etype = ElementType.from_name(e.get("type"))
        except ValueError as exc:
            raise LayoutError(f"{where}.type: {exc}") from None
        bbox = e.get("bbox")
        if not isinstance(bbox, list) or len(bbox) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox
        ):
            raise LayoutError(f"{where}.bbox: expected 4 numbers")
        font = e.get("font_size")
        if font is not None and (isinstance(font, bool) or not isinstance(font, (int, float))):
            raise LayoutError(f"{where}.font_size: not a number")
        order = e.get("order")
        if order is not None and (isinstance(order, bool) or not isinstance(order, int)):
            raise LayoutError(f"{where}.order: not an integer")
        elements.append(
            LayoutElement(
                element_type=etype,
                bbox=tuple(float(v) for v in bbox),
                font_size=None if font is None else float(font),
                order=order,
            )
        )
    try:
        width = float(page.get("width", 612.0))
        height = float(page.get("height", 792.0))
    except (TypeError, ValueError):
        raise LayoutError(f"document {doc_id!r}: page: width/height not numeric") from None
    doc = LayoutDocument(id=doc_id, label=label, elements=tuple(elements),
                         page_width=width, page_height=height)
    validate_document(doc)
    return doc


def parse_corpus(path):
    """Read a JSON Lines corpus; errors carry the 1-based line number."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LayoutError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from None
            try:
                docs.append(document_from_dict(obj))
            except LayoutError as exc:
                raise LayoutError(f"{path}:{lineno}: {exc}") from None
    return docs


def _umask():
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_bytes(path, data):
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        # mkstemp creates 0600; match what a plain open() would give
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def corpus_to_text(docs):
    return "".join(json.dumps(document_to_dict(d), ensure_ascii=False) + "\n" for d in docs)


def write_corpus(docs, path):
    try:
        atomic_write_text(path, corpus_to_text(docs))
    except OSError as exc:
        raise OSError(f"cannot write corpus to {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------- reading order


def canonical_reading_order(doc, row_tolerance=ROW_TOLERANCE):
    """Element indices in reading order.

    Explicit orders win. Otherwise elements are grouped into rows by
    vertical centre (a row absorbs an element whose y-centre is within
    ``row_tolerance`` of the row's first member), rows run top to bottom by
    mean y-centre and each row runs left to right by x0.
    """
    els = doc.elements
    if els and els[0].order is not None:
        return sorted(range(len(els)), key=lambda i: els[i].order)
    by_y = sorted(range(len(els)), key=lambda i: (els[i].center[1], i))
    rows = []
    for i in by_y:
        cy = els[i].center[1]
        if rows and cy - els[rows[-1][0]].center[1] <= row_tolerance:
            rows[-1].append(i)
        else:
            rows.append([i])
    rows.sort(key=lambda r: (math.fsum(els[i].center[1] for i in r) / len(r), r[0]))
    order = []
    for r in rows:
        order.extend(sorted(r, key=lambda i: (els[i].bbox[0], i)))
    return order


def reorder(doc, order):
    """Document with elements rearranged into ``order``."""
    return replace(doc, elements=tuple(doc.elements[i] for i in order))


# ---------------------------------------------------------------- toy corpora


def _el(kind, x0, y0, x1, y1, font=None):
    return LayoutElement(ElementType[kind], (x0, y0, x1, y1), font)


DEFAULT_TEMPLATES = {
    "letter": (
        _el("header", 0.10, 0.03, 0.90, 0.07, 0.010),
        _el("title", 0.10, 0.12, 0.60, 0.17, 0.030),
        _el("text_block", 0.10, 0.22, 0.90, 0.40, 0.012),
        _el("text_block", 0.10, 0.44, 0.90, 0.62, 0.012),
        _el("text_block", 0.10, 0.66, 0.90, 0.84, 0.012),
        _el("footer", 0.10, 0.93, 0.90, 0.97, 0.010),
    ),
    "invoice": (
        _el("header", 0.05, 0.03, 0.95, 0.09, 0.012),
        _el("table", 0.05, 0.14, 0.95, 0.38),
        _el("text_block", 0.05, 0.43, 0.55, 0.55, 0.012),
        _el("table", 0.05, 0.60, 0.95, 0.86),
        _el("footer", 0.05, 0.92, 0.95, 0.97, 0.010),
    ),
    "report": (
        _el("title", 0.10, 0.04, 0.90, 0.10, 0.035),
        _el("heading", 0.10, 0.50, 0.60, 0.54, 0.020),
        _el("text_block", 0.10, 0.57, 0.90, 0.71, 0.012),
        _el("image", 0.20, 0.14, 0.80, 0.40),
        _el("caption", 0.20, 0.42, 0.80, 0.46, 0.010),
        _el("heading", 0.10, 0.75, 0.60, 0.79, 0.020),
        _el("text_block", 0.10, 0.82, 0.90, 0.95, 0.012),
    ),
}


@dataclass
class ToyCorpusSpec:
    """Toy corpus recipe. Documents are emitted round-robin over classes.

    ``n_docs`` truncates the round-robin stream, so e.g. 200 documents over
    three classes come out 67/67/66.
    """

    classes: list = field(default_factory=lambda: list(DEFAULT_TEMPLATES.items()))
    per_class: int = 100
    jitter: float = 0.02
    seed: int = 7
    n_docs: Optional[int] = None

    def __post_init__(self):
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")


def clamp_bbox(x0, y0, x1, y1):
    """Clamp to the unit square, keeping at least MIN_EXTENT in each axis."""
    def axis(lo, hi):
        lo = min(max(lo, 0.0), 1.0 - MIN_EXTENT)
        hi = min(max(hi, 0.0), 1.0)
        if hi - lo < MIN_EXTENT:
            hi = lo + MIN_EXTENT
        return lo, hi

    x0, x1 = axis(x0, x1)
    y0, y1 = axis(y0, y1)
    return (x0, y0, x1, y1)


def jitter_document(doc, magnitude, rng, new_id=None):
    """Perturb every bbox coordinate by U[-magnitude, magnitude], then clamp."""
    noise = rng.uniform_range(-magnitude, magnitude, 4 * len(doc.elements))
    elements = []
    for k, el in enumerate(doc.elements):
        if magnitude == 0:
            bbox = el.bbox
        else:
            bbox = clamp_bbox(*(float(c + d) for c, d in zip(el.bbox, noise[4 * k: 4 * k + 4])))
        elements.append(replace(el, bbox=bbox))
    return replace(doc, id=doc.id if new_id is None else new_id, elements=tuple(elements))


def generate_toy_corpus(spec=None):
    """Deterministic jittered copies of the class templates."""
    spec = spec or ToyCorpusSpec()
    rng = Rng(spec.seed)
    docs = []
    total = spec.per_class * len(spec.classes)
    if spec.n_docs is not None:
        total = min(total, spec.n_docs)
    for k in range(total):
        name, template = spec.classes[k % len(spec.classes)]
        base = LayoutDocument(id=f"toy-{spec.seed}-{k}", label=name, elements=tuple(template))
        docs.append(jitter_document(base, spec.jitter, rng))
    return docs


def default_classes(n=None):
    items = list(DEFAULT_TEMPLATES.items())
    if n is None:
        return items
    if not 1 <= n <= len(items):
        raise ValueError(f"--classes must be between 1 and {len(items)}")
    return items[:n]
