"""Turning latent samples into layouts, rule validation, and SVG previews."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from .graph import bbox_distance
from .layout import (
    ElementType,
    LayoutDocument,
    LayoutElement,
    canonical_reading_order,
    element_errors,
)
from .model.network import decode
from .numeric import tensor as T
from .numeric.rng import Rng

RULES = ("R1", "R2", "R3", "R4")
PRESENCE_THRESHOLD = 0.5
_R2_SUCCESSORS = (ElementType.text_block, ElementType.table, ElementType.image)


@dataclass
class ValidationRuleConfig:
    enabled: tuple = RULES
    iou_max: float = 0.15
    tau_cap: float = 0.10

    def __post_init__(self):
        self.enabled = tuple(self.enabled)
        unknown = set(self.enabled) - set(RULES)
        if unknown:
            raise ValueError(f"validation.enabled: unknown rule(s) {sorted(unknown)}")
        if not 0.0 <= self.iou_max <= 1.0:
            raise ValueError("validation.iou_max must be in [0, 1]")
        if not self.tau_cap > 0:
            raise ValueError("validation.tau_cap must be > 0")

    def to_dict(self):
        return {"enabled": list(self.enabled), "iou_max": self.iou_max, "tau_cap": self.tau_cap}


@dataclass
class SyntheticLayout:
    document: LayoutDocument
    checkpoint_id: str
    latent_seed: int
    valid: Optional[bool] = None


@dataclass
class ValidationReport:
    per_document: list = field(default_factory=list)
    rules: tuple = RULES

    def aggregate(self):
        n = len(self.per_document)
        rates = {}
        for rule in self.rules:
            passed = sum(1 for d in self.per_document
                         for r in d["results"] if r["rule"] == rule and r["passed"])
            rates[rule] = passed / n if n else 1.0
        overall = sum(1 for d in self.per_document if d["passed"])
        return {"documents": n, "rule_pass_rate": rates,
                "overall_pass_rate": overall / n if n else 1.0}

    def to_dict(self):
        return {"per_document": self.per_document, "aggregate": self.aggregate()}


# ---------------------------------------------------------------- hardening


def harden(soft, b=0, doc_id="synth", label=None):
    """Discrete document from graph ``b`` of a SoftGraph batch.

    Slots with presence >= 0.5 become elements in slot order (the argmax
    slot is kept when none qualifies). Types are the argmax of the type row.
    """
    parts = soft.graph(b)
    presence = parts["presence"]
    keep = [k for k in range(soft.n_max) if presence[k] >= PRESENCE_THRESHOLD]
    if not keep:
        keep = [int(np.argmax(presence))]
    elements = []
    for k in keep:
        etype = ElementType(int(np.argmax(parts["type_probs"][k])))
        bbox = tuple(float(v) for v in parts["bbox"][k])
        elements.append(LayoutElement(etype, bbox))
    return LayoutDocument(id=doc_id, label=label, elements=tuple(elements))


def sample_layouts(ckpt, n, seed):
    """``n`` hardened prior samples; ids are ``synth-<seed>-<k>``."""
    if n <= 0:
        return []
    cfg = ckpt.training_config
    store = ckpt.store()
    z = Rng(seed).normal(n * cfg.d_latent).reshape(n, cfg.d_latent)
    with T.no_grad():
        soft = decode(z, store, cfg.n_max)
    fp = ckpt.fingerprint()
    return [SyntheticLayout(harden(soft, k, f"synth-{seed}-{k}"), fp, seed) for k in range(n)]


# ---------------------------------------------------------------- validation


def iou(a, b):
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def _label(i, el):
    return f"{el.element_type.name}#{i}"


def _rule_r1(doc, rules):
    els = doc.elements
    images = [el for el in els if el.element_type is ElementType.image]
    bad = []
    for i, el in enumerate(els):
        if el.element_type is ElementType.caption:
            if not any(bbox_distance(im, el) <= rules.tau_cap for im in images):
                bad.append(_label(i, el))
    return not bad, ("captions without a nearby image: " + ", ".join(bad)) if bad else "ok"


def _rule_r2(doc, rules):
    els = doc.elements
    order = canonical_reading_order(doc)
    bad = []
    for pos, i in enumerate(order):
        if els[i].element_type in (ElementType.title, ElementType.heading):
            nxt = els[order[pos + 1]].element_type if pos + 1 < len(order) else None
            if nxt not in _R2_SUCCESSORS:
                bad.append(_label(i, els[i]))
    return not bad, ("titles/headings without body successor: " + ", ".join(bad)) if bad else "ok"


def _rule_r3(doc, rules):
    els = doc.elements
    bad = []
    for i in range(len(els)):
        for j in range(i + 1, len(els)):
            v = iou(els[i].bbox, els[j].bbox)
            if v > rules.iou_max:
                bad.append(f"{_label(i, els[i])}/{_label(j, els[j])} IoU {v:.3f}")
    return not bad, ("overlapping pairs: " + "; ".join(bad)) if bad else "ok"


def _rule_r4(doc, rules):
    bad = [f"{_label(i, el)}: {'; '.join(errs)}"
           for i, el in enumerate(doc.elements)
           for errs in [[e for e in element_errors(el) if e.startswith("bbox")]] if errs]
    return not bad, ("bad boxes: " + "; ".join(bad)) if bad else "ok"


_CHECKS = {"R1": _rule_r1, "R2": _rule_r2, "R3": _rule_r3, "R4": _rule_r4}


def validate_layout(doc, rules=None):
    """One result entry per enabled rule, in rule order."""
    rules = rules or ValidationRuleConfig()
    out = []
    for rule in RULES:
        if rule in rules.enabled:
            passed, detail = _CHECKS[rule](doc, rules)
            out.append({"rule": rule, "passed": bool(passed), "detail": detail})
    return out


def validate_corpus(docs, rules=None):
    rules = rules or ValidationRuleConfig()
    report = ValidationReport(rules=tuple(r for r in RULES if r in rules.enabled))
    for doc in docs:
        results = validate_layout(doc, rules)
        report.per_document.append({"id": doc.id, "passed": all(r["passed"] for r in results),
                                    "results": results})
    return report


def passes(doc, rules):
    return all(r["passed"] for r in validate_layout(doc, rules))


def rejection_sample(ckpt, n_target, rules=None, seed=0, max_draws=None):
    """Draw layouts until ``n_target`` pass every enabled rule or the budget ends.

    Draw k is the k-th sample of ``sample_layouts(ckpt, max_draws, seed)``,
    so results are reproducible and a prefix of a larger budget.
    """
    rules = rules or ValidationRuleConfig()
    max_draws = n_target if max_draws is None else max_draws
    if max_draws < n_target:
        raise ValueError("max_draws must be >= n_target")
    candidates = sample_layouts(ckpt, max_draws, seed)
    accepted = []
    failures = {r: 0 for r in rules.enabled}
    draws = 0
    for cand in candidates:
        if len(accepted) >= n_target:
            break
        draws += 1
        results = validate_layout(cand.document, rules)
        for r in results:
            if not r["passed"]:
                failures[r["rule"]] += 1
        cand.valid = all(r["passed"] for r in results)
        if cand.valid:
            accepted.append(cand)
    stats = {
        "n_target": n_target,
        "accepted": len(accepted),
        "draws": draws,
        "acceptance_rate": len(accepted) / draws if draws else 1.0,
        "shortfall": n_target - len(accepted),
        "rule_failures": failures,
    }
    return accepted, stats


# ---------------------------------------------------------------- SVG


VIEW_W, VIEW_H = 800, 1035
PALETTE = {
    ElementType.title: "#1f77b4",
    ElementType.heading: "#aec7e8",
    ElementType.text_block: "#c7c7c7",
    ElementType.image: "#2ca02c",
    ElementType.table: "#ff7f0e",
    ElementType.caption: "#98df8a",
    ElementType.header: "#9467bd",
    ElementType.footer: "#c5b0d5",
}


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".")


def render_svg(doc):
    """Boxes on an 800x1035 canvas, filled by element type and labelled."""
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {VIEW_W} {VIEW_H}" '
             f'width="{VIEW_W}" height="{VIEW_H}">']
    for el in doc.elements:
        x0, y0, x1, y1 = el.bbox
        x, y = x0 * VIEW_W, y0 * VIEW_H
        w, h = (x1 - x0) * VIEW_W, (y1 - y0) * VIEW_H
        parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
                     f'fill="{PALETTE[el.element_type]}" fill-opacity="0.6" stroke="#333333"/>')
        parts.append(f'<text x="{_fmt(x + 4)}" y="{_fmt(y + 14)}" font-size="12" '
                     f'font-family="sans-serif">{escape(el.element_type.name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def report_to_text(report):
    return json.dumps(report.to_dict(), indent=1) + "\n"
