"""Adam optimizer with step-decay and plateau learning-rate schedules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import NumericalError
from .tensor import Tensor


class Adam:
    """Bias-corrected Adam.

    Update per parameter p with gradient g:
        m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
        p <- p - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)

    ``lr`` is ``base_lr * lr_scale`` where ``lr_scale`` is managed by the
    schedules below.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.base_lr = float(lr)
        self.lr_scale = 1.0
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    @property
    def lr(self) -> float:
        return self.base_lr * self.lr_scale

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        lr = self.lr
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {i} (shape {p.shape})")
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    # state as plain arrays/scalars for checkpointing
    def state_scalars(self) -> Dict:
        return {"t": self.t, "base_lr": self.base_lr, "lr_scale": self.lr_scale,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    def load_state_scalars(self, state: Dict) -> None:
        self.t = int(state["t"])
        self.base_lr = float(state["base_lr"])
        self.lr_scale = float(state["lr_scale"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.eps = float(state["eps"])


@dataclass
class StepDecaySchedule:
    """Multiply the lr scale by ``table[epoch]`` when that epoch starts.

    E.g. halving at epochs 25, 35 and 45 is ``{25: 0.5, 35: 0.5, 45: 0.5}``.
    """

    table: Dict[int, float]

    def on_epoch(self, optimizer: Adam, epoch: int, train_loss: Optional[float] = None) -> None:
        factor = self.table.get(int(epoch))
        if factor is not None:
            optimizer.lr_scale *= float(factor)


@dataclass
class PlateauSchedule:
    """Divide the lr when the train loss stops improving.

    After ``patience`` consecutive epochs without improvement the lr scale
    is multiplied by ``factor`` and the counter resets.
    """

    factor: float = 0.1
    patience: int = 3
    best: float = field(default=float("inf"), init=False)
    stale: int = field(default=0, init=False)

    def on_epoch(self, optimizer: Adam, epoch: int, train_loss: Optional[float] = None) -> None:
        if train_loss is None:
            return
        if train_loss < self.best:
            self.best = train_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                optimizer.lr_scale *= self.factor
                self.stale = 0

    def state(self) -> Dict:
        return {"factor": self.factor, "patience": self.patience,
                "best": self.best, "stale": self.stale}

    def load_state(self, state: Dict) -> None:
        self.factor = float(state["factor"])
        self.patience = int(state["patience"])
        self.best = float(state["best"])
        self.stale = int(state["stale"])


@dataclass
class EarlyStopper:
    """Stop when the monitored loss has not improved for ``patience`` epochs."""

    patience: int = 5
    best: float = field(default=float("inf"), init=False)
    stale: int = field(default=0, init=False)

    def update(self, loss: float) -> bool:
        """Record an epoch loss; returns True when training should stop."""
        if loss < self.best:
            self.best = loss
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience

    def state(self) -> Dict:
        return {"patience": self.patience, "best": self.best, "stale": self.stale}

    def load_state(self, state: Dict) -> None:
        self.patience = int(state["patience"])
        self.best = float(state["best"])
        self.stale = int(state["stale"])
