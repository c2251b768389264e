"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autograd import no_grad
from .heads import LOSS_NAMES, combined_loss
from .model import Model, param_group
from .training import Example, TrainConfig, forward_losses

# entries whose gradient magnitude is below this are compared in absolute terms
ABS_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


@dataclass
class GradCheckResult:
    per_group: dict[str, float]
    per_param: dict[str, float] = field(default_factory=dict)
    n_entries: int = 0

    @property
    def max_error(self) -> float:
        return max(self.per_group.values())


def multitask_loss_fn(ex: Example, config: TrainConfig) -> Callable[[Model], object]:
    def loss(model: Model):
        parts = forward_losses(model, ex, config.label_smoothing, training=False)
        return combined_loss(*(parts[n] for n in LOSS_NAMES), weights=config.weights)

    return loss


def check_gradients(model: Model, loss_fn: Callable[[Model], object], step: float = 1e-5,
                    fd_dtype=np.longdouble, max_entries: Optional[int] = None,
                    seed: int = 0) -> GradCheckResult:
    """Compare backprop gradients (float64) with central differences.

    The finite-difference oracle evaluates ``loss_fn`` on a copy of the model
    cast to ``fd_dtype`` (extended precision by default) so that round-off
    stays well below the tolerance. ``max_entries`` samples that many entries
    per parameter instead of sweeping all of them.
    """
    model.zero_grad()
    loss_fn(model).backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in model.params.items()}
    probe = model.astype(fd_dtype)
    rng = np.random.default_rng(seed)
    per_param: dict[str, float] = {}
    per_group: dict[str, float] = {}
    total = 0
    h = fd_dtype(step)
    with no_grad():
        for name, tensor in probe.params.items():
            data = tensor.data
            idx = list(np.ndindex(data.shape))
            if max_entries is not None and len(idx) > max_entries:
                idx = [idx[i] for i in rng.choice(len(idx), max_entries, replace=False)]
            numeric = np.zeros(len(idx), dtype=fd_dtype)
            for j, i in enumerate(idx):
                old = data[i]
                data[i] = old + h
                plus = loss_fn(probe).data
                data[i] = old - h
                minus = loss_fn(probe).data
                data[i] = old
                numeric[j] = (plus - minus) / (2 * h)
            a = np.array([analytic[name][i] for i in idx])
            err = float(relative_error(a, numeric).max()) if idx else 0.0
            per_param[name] = err
            group = param_group(name)
            per_group[group] = max(per_group.get(group, 0.0), err)
            total += len(idx)
    return GradCheckResult(per_group, per_param, total)
