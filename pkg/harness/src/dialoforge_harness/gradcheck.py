"""Finite-difference validation of both training objectives.

Runs a tiny double-precision model, compares autograd gradients against
central differences on randomly sampled parameter coordinates, and raises
GradMismatch (listing the worst coordinate) when the relative error exceeds
the tolerance. This guards the loss wiring: masked-position selection for
reconstruction, emission masking and gold-position projection for spans.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import torch

from .config import GradMismatch, HarnessConfig
from .data import PretrainItem, QAWindow, Vocab, collate_pretrain, collate_qa
from .model import build_model, masked_reconstruction_loss, span_loss

TOLERANCE = 1e-4
EPS = 1e-6


@dataclass
class CoordinateResult:
    name: str
    index: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    objective: str
    n_checked: int
    max_rel_error: float
    worst: CoordinateResult | None = None
    results: list[CoordinateResult] = field(default_factory=list)


def relative_error(a: float, n: float) -> float:
    scale = max(abs(a), abs(n))
    if scale < 1e-10:
        return 0.0
    return abs(a - n) / scale


def compare_grads(
    objective: str,
    analytic: list[tuple[str, int, float]],
    numeric: list[float],
    tolerance: float = TOLERANCE,
) -> GradCheckReport:
    results = [
        CoordinateResult(name, idx, a, n, relative_error(a, n))
        for (name, idx, a), n in zip(analytic, numeric)
    ]
    worst = max(results, key=lambda r: r.rel_error, default=None)
    report = GradCheckReport(
        objective=objective,
        n_checked=len(results),
        max_rel_error=worst.rel_error if worst else 0.0,
        worst=worst,
        results=results,
    )
    if worst is not None and worst.rel_error > tolerance:
        raise GradMismatch(
            f"{objective}: relative error {worst.rel_error:.3e} at "
            f"{worst.name}[{worst.index}] (analytic={worst.analytic:.6e}, "
            f"numeric={worst.numeric:.6e}) exceeds {tolerance:g}"
        )
    return report


def _tiny_vocab() -> Vocab:
    words = [f"w{i}" for i in range(12)] + ["Nurse:", "Patient:"]
    return Vocab(words)


def _tiny_batches(vocab: Vocab, rng: random.Random):
    def tok(i):
        return vocab.encode(f"w{i % 12}")

    items = []
    for _ in range(4):
        n = rng.randint(6, 10)
        ids = [tok(rng.randint(0, 11)) for _ in range(n)]
        target = [tok(rng.randint(0, 11)) for _ in range(n)]
        mask = [rng.random() < 0.4 for _ in range(n)]
        if not any(mask):
            mask[0] = True
        items.append(PretrainItem(ids, target, [int(b) for b in mask]))
    pre_batch = collate_pretrain(items, vocab.pad_id)

    windows = []
    for k in range(4):
        n_dial = rng.randint(4, 7)
        head = [vocab.encode("<no_answer>")] + [tok(rng.randint(0, 11))] + [vocab.encode("<sep>")]
        dial = [tok(rng.randint(0, 11)) for _ in range(n_dial)]
        if k % 2 == 0:
            s = rng.randint(1, n_dial)
            gold = (s, min(n_dial, s + rng.randint(0, 2)))
        else:
            gold = (0, 0)
        windows.append(QAWindow(
            qa_id=f"g{k}", input_ids=head + dial, dialogue_offset=3,
            n_dialogue=n_dial, gold=gold, has_answer=gold != (0, 0),
        ))
    qa_batch = collate_qa(windows, vocab.pad_id)
    return pre_batch, qa_batch


def run_grad_check(
    cfg: HarnessConfig | None = None,
    n_coords: int = 120,
    seed: int = 0,
    tolerance: float = TOLERANCE,
) -> list[GradCheckReport]:
    """Check >= n_coords coordinates per objective; returns both reports."""
    if cfg is None:
        cfg = HarnessConfig(layers=2, hidden=16, heads=2, ffn_mult=2,
                            max_len=32, dropout=0.0, seed=seed)
    if cfg.hidden > 16:
        raise ValueError("grad check expects a tiny model (hidden <= 16)")
    rng = random.Random(seed)
    vocab = _tiny_vocab()
    model = build_model(cfg, vocab, seed=seed).double()
    model.eval()  # dropout off: the loss must be deterministic under perturbation
    pre_batch, qa_batch = _tiny_batches(vocab, rng)

    def reconstruction_loss() -> torch.Tensor:
        logits = model.reconstruction_logits(pre_batch["ids"], pre_batch["pad_mask"])
        return masked_reconstruction_loss(logits, pre_batch["target"], pre_batch["loss_mask"])

    def extraction_loss() -> torch.Tensor:
        start, end = model.span_logits(
            qa_batch["ids"], qa_batch["pad_mask"], qa_batch["emit_mask"]
        )
        return span_loss(start, end, qa_batch["gold_start"], qa_batch["gold_end"])

    reports = []
    for objective, loss_fn in (("reconstruction", reconstruction_loss),
                               ("span_extraction", extraction_loss)):
        params = [(name, p) for name, p in model.named_parameters() if p.requires_grad]
        model.zero_grad()
        loss_fn().backward()
        grads = {name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
                 for name, p in params}

        coords: list[tuple[str, int]] = []
        for _ in range(n_coords):
            name, p = params[rng.randrange(len(params))]
            coords.append((name, rng.randrange(p.numel())))

        analytic = [(name, idx, float(grads[name].reshape(-1)[idx])) for name, idx in coords]
        numeric: list[float] = []
        with torch.no_grad():
            by_name = dict(params)
            for name, idx in coords:
                flat = by_name[name].reshape(-1)
                orig = float(flat[idx])
                flat[idx] = orig + EPS
                hi = float(loss_fn())
                flat[idx] = orig - EPS
                lo = float(loss_fn())
                flat[idx] = orig
                numeric.append((hi - lo) / (2 * EPS))
        reports.append(compare_grads(objective, analytic, numeric, tolerance))
    return reports
