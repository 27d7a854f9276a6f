"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import TrainingError

LossAndGrads = Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]]


def gradient_check(
    loss_and_grads: LossAndGrads,
    params: dict[str, np.ndarray],
    *,
    n_sample: int = 120,
    step: float = 1e-5,
    seed: int = 0,
    tolerance: float | None = None,
) -> float:
    """Compare analytic gradients against central differences at sampled entries.

    Only parameters that appear in the returned gradient dict are checked, so
    non-trainable buffers can live in `params` untouched. Returns the maximum
    relative error |ga - gn| / max(1e-8, |ga| + |gn|); raises TrainingError when
    a gradient is non-finite or `tolerance` is given and exceeded.
    """
    loss, grads = loss_and_grads(params)
    if not np.isfinite(loss):
        raise TrainingError("loss is non-finite at the checked point")
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite analytic gradient in {name!r}")

    names = sorted(grads)
    sizes = np.array([params[name].size for name in names], dtype=np.int64)
    total = int(sizes.sum())
    if total == 0:
        raise TrainingError("no trainable parameters to check")
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    rng = np.random.default_rng(seed)
    take = min(n_sample, total)
    flat_indices = rng.choice(total, size=take, replace=False)

    worst = 0.0
    for flat in sorted(int(i) for i in flat_indices):
        which = int(np.searchsorted(offsets, flat, side="right")) - 1
        name = names[which]
        idx = flat - int(offsets[which])
        tensor = params[name]
        original = tensor.flat[idx]

        tensor.flat[idx] = original + step
        loss_plus, _ = loss_and_grads(params)
        tensor.flat[idx] = original - step
        loss_minus, _ = loss_and_grads(params)
        tensor.flat[idx] = original

        numeric = (loss_plus - loss_minus) / (2.0 * step)
        analytic = float(grads[name].flat[idx])
        rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        worst = max(worst, rel)

    if tolerance is not None and worst > tolerance:
        raise TrainingError(
            f"gradient check failed: max relative error {worst:.3e} > {tolerance:.3e}"
        )
    return worst
