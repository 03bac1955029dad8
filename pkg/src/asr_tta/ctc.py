"""CTC loss via the forward algorithm in log space.

Sums alignment probabilities over the blank-extended target with the
standard stay / advance / skip transitions. Differentiable through
autograd; the batched variant is what the toy training loop uses.
"""

from __future__ import annotations

from typing import Sequence

import torch

# Finite stand-in for log(0) in padded/unreachable lattice cells: true -inf
# makes logaddexp backward emit NaN (0 * nan) even on zero-weight branches.
_LOG_ZERO = -1.0e30


def min_frames_required(targets: Sequence[int]) -> int:
    """Fewest frames that admit a valid alignment: |target| plus one extra
    blank frame for every adjacent repeated label."""
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    return len(targets) + repeats


def _extended_targets(targets: Sequence[int], blank_index: int) -> list[int]:
    ext = [blank_index]
    for t in targets:
        ext.append(int(t))
        ext.append(blank_index)
    return ext


def _validate(logits: torch.Tensor, targets: Sequence[int], blank_index: int) -> None:
    if logits.ndim != 2:
        raise ValueError(f"logits must be T x C, got shape {tuple(logits.shape)}")
    num_frames, num_classes = logits.shape
    if not 0 <= blank_index < num_classes:
        raise ValueError(f"blank_index {blank_index} out of range for C={num_classes}")
    if len(targets) == 0:
        raise ValueError("target sequence must be non-empty")
    for t in targets:
        if not 0 <= int(t) < num_classes:
            raise ValueError(f"target label {t} out of range for C={num_classes}")
        if int(t) == blank_index:
            raise ValueError("target labels may not include the blank index")
    need = min_frames_required(targets)
    if num_frames < need:
        raise ValueError(
            f"no valid alignment: {num_frames} frames but target needs at least {need}"
        )


def ctc_loss(logits: torch.Tensor, targets: Sequence[int], blank_index: int) -> torch.Tensor:
    """Negative log of the total alignment probability of `targets`.

    `logits` are unnormalized scores; the posterior is their row softmax.
    Raises when no valid alignment exists (target too long for T).
    """
    _validate(logits, targets, blank_index)
    return ctc_loss_batch([logits], [list(targets)], blank_index)[0]


def ctc_loss_batch(
    logits_list: Sequence[torch.Tensor],
    targets_list: Sequence[Sequence[int]],
    blank_index: int,
) -> torch.Tensor:
    """Per-sample CTC losses for a batch of variable-length sequences.

    Pads frames and extended targets internally; returns a (B,) tensor.
    """
    if len(logits_list) != len(targets_list):
        raise ValueError("batch size mismatch between logits and targets")
    for logits, targets in zip(logits_list, targets_list):
        _validate(logits, targets, blank_index)

    batch = len(logits_list)
    device = logits_list[0].device
    dtype = logits_list[0].dtype
    frame_lens = [lg.shape[0] for lg in logits_list]
    exts = [_extended_targets(tg, blank_index) for tg in targets_list]
    ext_lens = [len(e) for e in exts]
    max_t = max(frame_lens)
    max_s = max(ext_lens)

    # emissions[b, t, s] = log p(ext[b][s] | frame t), _LOG_ZERO off the ends
    emissions = torch.full((batch, max_t, max_s), _LOG_ZERO, device=device, dtype=dtype)
    can_skip = torch.zeros((batch, max_s), dtype=torch.bool, device=device)
    for b, (logits, e) in enumerate(zip(logits_list, exts)):
        lp = torch.log_softmax(logits, dim=-1)
        idx = torch.tensor(e, dtype=torch.long, device=device)
        emissions[b, : frame_lens[b], : len(e)] = lp.index_select(1, idx)
        for s in range(2, len(e)):
            can_skip[b, s] = e[s] != blank_index and e[s] != e[s - 2]

    alpha = torch.full((batch, max_s), _LOG_ZERO, device=device, dtype=dtype)
    alpha[:, 0] = emissions[:, 0, 0]
    if max_s > 1:
        alpha[:, 1] = emissions[:, 0, 1]

    neg = torch.full((batch, 1), _LOG_ZERO, device=device, dtype=dtype)
    active_at = torch.tensor(frame_lens, device=device).unsqueeze(1)
    for t in range(1, max_t):
        stay = alpha
        advance = torch.cat([neg, alpha[:, :-1]], dim=1)
        skip = torch.cat([neg, neg, alpha[:, :-2]], dim=1)
        skip = torch.where(can_skip, skip, torch.full_like(skip, _LOG_ZERO))
        merged = torch.logaddexp(torch.logaddexp(stay, advance), skip)
        stepped = merged + emissions[:, t, :]
        # freeze lanes already past their last frame
        alpha = torch.where(active_at > t, stepped, alpha)

    finals = []
    for b in range(batch):
        s_last = ext_lens[b] - 1
        tail = alpha[b, s_last]
        if s_last >= 1:
            tail = torch.logaddexp(tail, alpha[b, s_last - 1])
        finals.append(-tail)
    return torch.stack(finals)
