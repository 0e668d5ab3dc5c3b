"""Training loops: masked-reconstruction pre-training, span fine-tuning,
prediction emission, and checkpoint I/O.

Checkpoints are directories holding config.json (harness config, stored
validation metric, fingerprint), weights.bin (state dict), and vocab.txt.
All randomness flows through one torch generator seeded per run; prediction
runs in eval mode so dropout is disabled and outputs are deterministic.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import HarnessConfig, HarnessError, ShapeError
from .data import (
    PretrainItem,
    QADataset,
    QAWindow,
    Vocab,
    collate_pretrain,
    collate_qa,
    load_pretrain,
    load_qa,
)
from .model import (
    HarnessModel,
    build_model,
    emission_probs,
    masked_reconstruction_loss,
    span_loss,
)


@dataclass
class Checkpoint:
    path: Path
    cfg: HarnessConfig
    vocab: Vocab
    model: HarnessModel
    val_metric: float


def _fingerprint(cfg: HarnessConfig, vocab: Vocab) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(cfg.to_record(), sort_keys=True).encode())
    h.update("\n".join(vocab.itos).encode())
    return h.hexdigest()[:16]


def save_checkpoint(
    path: str | Path,
    cfg: HarnessConfig,
    vocab: Vocab,
    model: HarnessModel,
    val_metric: float,
    extra: dict | None = None,
) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    record = {
        "config": cfg.to_record(),
        "val_metric": val_metric,
        "fingerprint": _fingerprint(cfg, vocab),
    }
    if extra:
        record.update(extra)
    (out / "config.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    vocab.save(out / "vocab.txt")
    torch.save(model.state_dict(), out / "weights.bin")
    return out


def load_checkpoint(path: str | Path) -> Checkpoint:
    root = Path(path)
    record = json.loads((root / "config.json").read_text("utf-8"))
    cfg = HarnessConfig.from_record(record["config"])
    vocab = Vocab.load(root / "vocab.txt")
    if record.get("fingerprint") != _fingerprint(cfg, vocab):
        raise HarnessError(f"checkpoint {root}: fingerprint mismatch")
    model = HarnessModel(cfg, len(vocab))
    model.load_state_dict(torch.load(root / "weights.bin", weights_only=True))
    model.eval()
    return Checkpoint(root, cfg, vocab, model, float(record["val_metric"]))


def _warmup_lambda(total_steps: int, warmup_steps: int | None):
    warmup = warmup_steps if warmup_steps is not None else max(1, int(0.05 * total_steps))

    def factor(step: int) -> float:
        return min(1.0, (step + 1) / warmup)

    return factor


def _batches(n: int, batch: int, generator: torch.Generator | None):
    order = torch.randperm(n, generator=generator) if generator is not None else torch.arange(n)
    for i in range(0, n, batch):
        yield order[i : i + batch].tolist()


def _split_train_val(items: list, val_frac: float) -> tuple[list, list]:
    n_val = max(1, int(len(items) * val_frac)) if len(items) > 1 else 0
    return items[n_val:], items[:n_val]


# -- pre-training --

def pretrain_validation_loss(model: HarnessModel, items: list[PretrainItem], vocab: Vocab,
                             batch: int = 32) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for idx in _batches(len(items), batch, None):
            b = collate_pretrain([items[i] for i in idx], vocab.pad_id)
            logits = model.reconstruction_logits(b["ids"], b["pad_mask"])
            n_masked = int(b["loss_mask"].sum())
            if n_masked == 0:
                continue
            loss = masked_reconstruction_loss(logits, b["target"], b["loss_mask"])
            total += float(loss) * n_masked
            count += n_masked
    return total / count if count else 0.0


def pretrain(
    samples_path: str | Path,
    cfg: HarnessConfig,
    out_dir: str | Path,
    val_frac: float = 0.1,
    log=None,
) -> Checkpoint:
    """Reconstruction pre-training; checkpoint selected by minimum
    validation loss."""
    vocab = Vocab.from_pretrain_file(samples_path)
    items = load_pretrain(samples_path, vocab, cfg.max_len)
    if not items:
        raise HarnessError(f"no pre-training samples in {samples_path}")
    train_items, val_items = _split_train_val(items, val_frac)
    model = build_model(cfg, vocab)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr_pretrain)
    steps_per_epoch = (len(train_items) + cfg.batch - 1) // cfg.batch
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, _warmup_lambda(cfg.epochs * steps_per_epoch, cfg.warmup_steps)
    )
    best_loss = float("inf")
    best_state = None
    bad_epochs = 0
    for epoch in range(cfg.epochs):
        model.train()
        for idx in _batches(len(train_items), cfg.batch, gen):
            b = collate_pretrain([train_items[i] for i in idx], vocab.pad_id)
            # random per-row position offsets: fine-tuning prepends the
            # question, so the dialogue must be readable at shifted positions;
            # the shift is question-prefix-sized, so a small range suffices
            room = min(cfg.max_len - b["ids"].shape[1], 24)
            offsets = torch.randint(0, room + 1, (b["ids"].shape[0],), generator=gen) \
                if room > 0 else None
            # no masked positions -> loss is 0 by definition, no step taken
            if bool(b["loss_mask"].any()):
                loss = masked_reconstruction_loss(
                    model.reconstruction_logits(b["ids"], b["pad_mask"], offsets),
                    b["target"], b["loss_mask"],
                )
                opt.zero_grad()
                loss.backward()
                opt.step()
            sched.step()
        val_loss = pretrain_validation_loss(model, val_items or train_items, vocab, cfg.batch)
        if log:
            log(f"pretrain epoch {epoch}: val_loss={val_loss:.4f}")
        if val_loss < best_loss - 1e-6:
            best_loss = val_loss
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    save_checkpoint(out_dir, cfg, vocab, model, best_loss, {"stage": "pretrain"})
    return Checkpoint(Path(out_dir), cfg, vocab, model, best_loss)


# -- fine-tuning --

def _decode_window_argmax(p_start: list[float], p_end: list[float], max_span_len: int = 30):
    """Max-product span over the emission vector, for validation accuracy."""
    n = len(p_start)
    best, best_p = None, -1.0
    for i in range(1, n):
        for j in range(i, min(i + max_span_len, n)):
            p = p_start[i] * p_end[j]
            if p > best_p:
                best, best_p = (i, j), p
    if best is None or p_start[0] * p_end[0] > best_p:
        return (0, 0)
    return best


def span_exact_fraction(model: HarnessModel, windows: list[QAWindow], vocab: Vocab,
                        batch: int = 32) -> float:
    """Fraction of windows whose decoded span equals gold (No-Answer
    included); span equality implies exact-match answers."""
    if not windows:
        return 0.0
    model.eval()
    hit = 0
    with torch.no_grad():
        for idx in _batches(len(windows), batch, None):
            part = [windows[i] for i in idx]
            b = collate_qa(part, vocab.pad_id)
            start, end = model.span_logits(b["ids"], b["pad_mask"], b["emit_mask"])
            for r, w in enumerate(part):
                ps, pe = emission_probs(start[r], end[r], w)
                if _decode_window_argmax(ps, pe) == w.gold:
                    hit += 1
    return hit / len(windows)


def finetune(
    qa_path: str | Path,
    corpus_path: str | Path,
    cfg: HarnessConfig,
    out_dir: str | Path,
    init_from: str | Path | None = None,
    val_qa_path: str | Path | None = None,
    val_frac: float = 0.1,
    log=None,
) -> Checkpoint:
    """Span-extraction fine-tuning; early stop on validation span accuracy.

    ``init_from`` warm-starts from a pre-training checkpoint; omit it for the
    no-pretrain baseline.
    """
    if init_from is not None:
        ckpt = load_checkpoint(init_from)
        vocab, model = ckpt.vocab, ckpt.model
        if ckpt.cfg.hidden != cfg.hidden or ckpt.cfg.layers != cfg.layers:
            raise HarnessError("fine-tune architecture differs from checkpoint")
        torch.manual_seed(cfg.seed)
    else:
        vocab = None
        model = None

    if vocab is None:
        # baseline: vocabulary from the fine-tuning corpus serialization
        from .data import dialogue_tokens, read_jsonl

        tokens: set[str] = set()
        for rec in read_jsonl(corpus_path):
            tokens.update(dialogue_tokens(rec))
        vocab = Vocab(sorted(tokens))
        model = build_model(cfg, vocab)

    data = load_qa(qa_path, corpus_path, vocab, cfg.max_len)
    if not data.windows:
        raise HarnessError(f"no usable QA samples in {qa_path}")
    if log and data.dropped:
        log(f"finetune: dropped {data.dropped} samples with out-of-window spans")
    if val_qa_path is not None:
        train_windows = data.windows
        val_windows = load_qa(val_qa_path, corpus_path, vocab, cfg.max_len).windows
    else:
        train_windows, val_windows = _split_train_val(data.windows, val_frac)
        if not val_windows:
            val_windows = train_windows

    gen = torch.Generator().manual_seed(cfg.seed + 1)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr_finetune)
    steps_per_epoch = (len(train_windows) + cfg.batch - 1) // cfg.batch
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, _warmup_lambda(cfg.epochs * steps_per_epoch, cfg.warmup_steps)
    )
    best_acc = -1.0
    best_state = None
    bad_epochs = 0
    for epoch in range(cfg.epochs):
        model.train()
        for idx in _batches(len(train_windows), cfg.batch, gen):
            b = collate_qa([train_windows[i] for i in idx], vocab.pad_id)
            start, end = model.span_logits(b["ids"], b["pad_mask"], b["emit_mask"])
            loss = span_loss(start, end, b["gold_start"], b["gold_end"])
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
        acc = span_exact_fraction(model, val_windows, vocab, cfg.batch)
        if log:
            log(f"finetune epoch {epoch}: val_span_exact={acc:.4f}")
        if acc > best_acc + 1e-9:
            best_acc = acc
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    save_checkpoint(out_dir, cfg, vocab, model, best_acc,
                    {"stage": "finetune", "dropped": data.dropped})
    return Checkpoint(Path(out_dir), cfg, vocab, model, best_acc)


# -- prediction --

def predict(
    qa_path: str | Path,
    corpus_path: str | Path,
    ckpt_path: str | Path,
    out_path: str | Path,
) -> int:
    """Emit one probability record per QA sample; deterministic (eval mode,
    dropout disabled); each distribution sums to 1."""
    ckpt = load_checkpoint(ckpt_path)
    model, vocab, cfg = ckpt.model, ckpt.vocab, ckpt.cfg
    data = load_qa(qa_path, corpus_path, vocab, cfg.max_len, keep_out_of_window=True)
    model.eval()
    n = 0
    with open(out_path, "w", encoding="utf-8", newline="\n") as f, torch.no_grad():
        for i in range(0, len(data.windows), cfg.batch):
            part = data.windows[i : i + cfg.batch]
            b = collate_qa(part, vocab.pad_id)
            start, end = model.span_logits(b["ids"], b["pad_mask"], b["emit_mask"])
            for r, w in enumerate(part):
                ps, pe = emission_probs(start[r], end[r], w)
                f.write(json.dumps({"qa_id": w.qa_id, "p_start": ps, "p_end": pe}) + "\n")
                n += 1
    return n
