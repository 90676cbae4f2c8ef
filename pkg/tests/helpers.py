"""Hand-built inputs and independent reference computations shared by tests."""

import math
from collections import defaultdict

import numpy as np

from kgcopy.corpus import Dialogue, Turn


def rel_err(a: float, b: float, floor: float = 1e-6) -> float:
    """Relative error with an absolute floor.

    Central differences at step eps carry rounding noise of roughly
    |L| * 1e-16 / eps in absolute terms; without the floor that noise
    dominates near-zero gradient entries and reports spurious failures.
    """
    return abs(a - b) / max(abs(a), abs(b), floor)


def numeric_grad(f, arr: np.ndarray, idx, eps: float = 1e-5) -> float:
    """Central finite difference of scalar f() w.r.t. arr[idx] in place."""
    old = arr[idx]
    arr[idx] = old + eps
    plus = f()
    arr[idx] = old - eps
    minus = f()
    arr[idx] = old
    return (plus - minus) / (2.0 * eps)


def reference_bleu(hypotheses, references, max_order: int = 4) -> float:
    """Second opinion on corpus BLEU, written independently of the library.

    Same smoothing convention (zero-match orders score 1/(count+1),
    orders with no candidate n-grams score 1) since the convention is a
    pinned choice, but the bookkeeping and the log-space mean are done
    differently on purpose.
    """
    if len(hypotheses) != len(references):
        raise ValueError("corpus size mismatch")
    clipped = defaultdict(int)
    produced = defaultdict(int)
    hyp_total = ref_total = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_total += len(hyp)
        ref_total += len(ref)
        for order in range(1, max_order + 1):
            hyp_counts = defaultdict(int)
            for i in range(len(hyp) - order + 1):
                hyp_counts[tuple(hyp[i:i + order])] += 1
            ref_counts = defaultdict(int)
            for i in range(len(ref) - order + 1):
                ref_counts[tuple(ref[i:i + order])] += 1
            for gram, count in hyp_counts.items():
                produced[order] += count
                clipped[order] += min(count, ref_counts[gram])
    if hyp_total == 0:
        return 0.0
    logs = []
    for order in range(1, max_order + 1):
        total = produced[order]
        good = clipped[order]
        if total == 0:
            logs.append(0.0)
        elif good == 0:
            logs.append(math.log(1.0 / (total + 1)))
        else:
            logs.append(math.log(good / total))
    brevity = 1.0 if hyp_total > ref_total else math.exp(
        1.0 - ref_total / hyp_total)
    return 100.0 * brevity * math.exp(math.fsum(logs) / max_order)


def make_dialogue(dialogue_id, team_id, texts, split=None) -> Dialogue:
    """Alternating user/system turns from a flat list of texts."""
    turns = tuple(
        Turn("user" if i % 2 == 0 else "system", text)
        for i, text in enumerate(texts))
    return Dialogue(dialogue_id, team_id, turns, split=split)


def tiny_batch(v=9, d=5, h=4, k_max=3, seed=0):
    """Hand-assembled two-example batch exercising every code path.

    Example 0 has a KG (k=2), two copy steps (so the gate recurrence
    carries a real s_prev), and full length. Example 1 has no KG and is
    shorter, leaving padded target positions and a has_kg=0 row.
    """
    rng = np.random.default_rng(seed)
    ctx = np.array([[2, 5, 6, 7],
                    [2, 8, 3, 0]], dtype=np.int64)
    ctx_mask = np.array([[1, 1, 1, 1],
                         [1, 1, 1, 0]], dtype=np.float64)
    tin = np.array([[2, 5, 6, 7, 8],
                    [2, 6, 5, 0, 0]], dtype=np.int64)
    # copies at steps 1 and 3 of example 0: targets v+0 and v+1
    tout = np.array([[5, v + 0, 6, v + 1, 3],
                     [6, 5, 3, 0, 0]], dtype=np.int64)
    tmask = np.array([[1, 1, 1, 1, 1],
                      [1, 1, 1, 0, 0]], dtype=np.float64)
    slab = np.array([[0, 1, 0, 1, 0],
                     [0, 0, 0, 0, 0]], dtype=np.float64)
    emb_q = rng.normal(size=(2, d))
    kg_sim = np.zeros((2, k_max))
    kg_sim[0, :2] = [0.4, -0.2]
    kg_mask = np.zeros((2, k_max))
    kg_mask[0, :2] = 1.0
    return {"ctx": ctx, "ctx_mask": ctx_mask, "tin": tin, "tout": tout,
            "tmask": tmask, "slab": slab, "emb_q": emb_q,
            "kg_sim": kg_sim, "kg_mask": kg_mask}
